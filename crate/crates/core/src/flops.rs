//! Operation counters for cost accounting.
//!
//! Costs are tallied in abstract units on a per-thread counter that is only
//! active inside [`measure`]. The cost model per primitive:
//!
//! | primitive                                | units        |
//! |------------------------------------------|--------------|
//! | complex multiply-add                     | 1            |
//! | matrix product `(a x b) * (b x c)`       | `a * b * c`  |
//! | inverse of an `n x n` matrix             | `n^3`        |
//! | log-determinant of an `n x n` matrix     | `n^3`        |
//! | Hermitian eigen-decomposition, `n x n`   | `n^3`        |
//! | singular values of an `m x n` matrix     | `max(m, n)^3`|
//! | squared norm / scaling of `k` entries    | `k`          |
//!
//! Work executed on other threads is not attributed to the caller, so
//! measured closures must not spawn parallel work of their own.

use std::cell::Cell;

thread_local! {
    static COUNTER: Cell<Option<u64>> = const { Cell::new(None) };
}

/// Adds `units` to the active counter, if any.
#[inline]
pub fn record(units: u64) {
    COUNTER.with(|c| {
        if let Some(v) = c.get() {
            c.set(Some(v + units));
        }
    });
}

#[inline]
pub(crate) fn matmul(a: usize, b: usize, c: usize) {
    record((a * b * c) as u64);
}

#[inline]
pub(crate) fn cubic(n: usize) {
    record((n * n * n) as u64);
}

#[inline]
pub(crate) fn linear(k: usize) {
    record(k as u64);
}

/// Whether a counter is active on the current thread.
pub fn is_active() -> bool {
    COUNTER.with(|c| c.get().is_some())
}

/// Runs `f` with a fresh counter and returns its result with the units spent.
///
/// Nested calls are supported; the inner units are also added to the outer
/// counter.
pub fn measure<T>(f: impl FnOnce() -> T) -> (T, u64) {
    let outer = COUNTER.with(|c| c.replace(Some(0)));
    let out = f();
    let spent = COUNTER.with(|c| c.get().unwrap_or(0));
    COUNTER.with(|c| c.set(outer.map(|o| o + spent)));
    (out, spent)
}
