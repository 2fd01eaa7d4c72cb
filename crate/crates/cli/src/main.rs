use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use smspa::config::{self, RunConfig};
use smspa::geometry;
use smspa::pipeline::{self, RunRecord};
use smspa::{Error, ErrorKind};
use tempfile::NamedTempFile;

#[derive(Parser, Debug)]
#[command(name = "smspa", version, about = "Scheduling and power allocation sweeps for cell-free MIMO downlinks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override a config key; `KEY+=VALUE` appends to a list. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed, replacing the file's `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self, extra: &[String]) -> smspa::Result<RunConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        overrides.extend_from_slice(extra);
        config::parse_config(&self.config, &overrides)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a sweep and write summary.csv, record.json and ga_traces.csv.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory, created if missing.
        #[arg(long, value_name = "DIR", default_value = "results")]
        out: PathBuf,
        /// Worker threads; 1 runs sequentially.
        #[arg(long, value_name = "N")]
        threads: Option<usize>,
        /// Count arithmetic operations per network mode.
        #[arg(long)]
        counters: bool,
        /// Suppress the per-cell summary lines.
        #[arg(short, long)]
        quiet: bool,
    },
    /// Write one trial's channel realization as CSV.
    Channel {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Which of the configured cluster counts to use for the layout.
        #[arg(long)]
        clusters: Option<usize>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
}

/// Writes `contents` next to `path` and renames it into place, so readers
/// never see a half-written file.
fn write_atomic(path: &Path, contents: impl FnOnce(&mut NamedTempFile) -> smspa::Result<()>) -> anyhow::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = NamedTempFile::new_in(dir).with_context(|| format!("creating temporary file in {}", dir.display()))?;
    contents(&mut tmp)?;
    tmp.as_file_mut().flush()?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_outputs(record: &RunRecord, out: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_atomic(&out.join("ga_traces.csv"), |f| record.write_traces_csv(f))?;
    write_atomic(&out.join("record.json"), |f| record.write_json(f))?;
    // last, so its presence marks a complete run
    write_atomic(&out.join("summary.csv"), |f| record.write_summary_csv(f))?;
    Ok(())
}

fn print_summary(record: &RunRecord) {
    for r in record.summary() {
        println!(
            "{:<4} {:<3} {:<4} {:<3} snr={:>6} dB  mean={:.4}  std={:.4}  trials={}",
            r.mode.label(),
            r.scheduler.label(),
            r.precoder.label(),
            r.allocator.label(),
            r.snr_db,
            r.mean_rate,
            r.std_rate,
            r.trials
        );
    }
    for c in &record.costs {
        print!("{} C={} signaling_load={}", c.mode.label(), c.clusters, c.signaling_load);
        if record.config.counters {
            print!(" flop_count={}", c.flop_count);
        }
        println!();
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run {
            cfg,
            out,
            threads,
            counters,
            quiet,
        } => {
            let extra = if counters { vec!["counters=true".to_string()] } else { Vec::new() };
            let config = cfg.load(&extra)?;
            if threads == Some(0) {
                return Err(Error::config("threads", "must be at least 1").into());
            }
            let record = pipeline::run_network(&config, threads)?;
            write_outputs(&record, &out)?;
            if !quiet {
                print_summary(&record);
            }
        }
        Command::Channel {
            cfg,
            trial,
            clusters,
            out,
        } => {
            let config = cfg.load(&[])?;
            let layouts = pipeline::draw_layouts(&config, trial)?;
            let pick = match clusters {
                Some(c) => config
                    .clusters
                    .iter()
                    .position(|&x| x == c)
                    .ok_or_else(|| Error::config("clusters", format!("{c} is not a configured cluster count")))?,
                None => 0,
            };
            let seed = pipeline::channel_seed(config.seed, trial);
            let chan = geometry::draw_channel(&layouts[pick], &config.channel_params(), seed)?;
            write_atomic(&out, |f| chan.write_csv(f))?;
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>().map(Error::kind) {
        Some(ErrorKind::Config) => 2,
        Some(ErrorKind::Numerical) => 3,
        Some(ErrorKind::ResourceCap) => 4,
        Some(ErrorKind::Io) | None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
