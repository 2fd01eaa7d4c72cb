use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use smspa::config::parse_config_str;
use smspa::pipeline::run_network;

const CONFIG: &str = r#"
M = 16
K = 32
C = [1, 4]
n = 4
scheduler = ["ESG"]
allocator = ["GA", "EPL"]
snr_db = [0.0, 10.0]
trials = 16
seed = 7
"#;

fn monte_carlo(c: &mut Criterion) {
    let cfg = parse_config_str(CONFIG, &[]).unwrap();
    let mut group = c.benchmark_group("monte_carlo_16_trials");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("run_network", "sequential"), |b| {
        b.iter(|| run_network(&cfg, Some(1)).unwrap())
    });
    if cfg!(feature = "parallel") {
        group.bench_function(BenchmarkId::new("run_network", "parallel"), |b| {
            b.iter(|| run_network(&cfg, None).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, monte_carlo);
criterion_main!(benches);
