//! Seed sweeps across methods and out-of-domain ratios, run on a pool of
//! worker threads.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use cgid_core::experiment::{Method, RunConfig};

use crate::run::{execute_run, RunOptions};
use crate::CliError;

pub const WORKERS_ENV: &str = "CGID_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepEntry {
    pub method: Method,
    pub ood_ratio: f64,
    pub seed: u64,
}

impl SweepEntry {
    pub fn config(&self, base: &RunConfig) -> RunConfig {
        let mut c = base.clone();
        c.method = self.method;
        c.data.ood_ratio = self.ood_ratio;
        c.seed = self.seed;
        c
    }

    /// Output directory name, e.g. `plrd-r60-s3`.
    pub fn dir_name(&self) -> String {
        format!(
            "{}-r{}-s{}",
            self.method.as_str(),
            (self.ood_ratio * 100.0).round() as i64,
            self.seed
        )
    }
}

/// Every combination, methods outermost and seeds innermost.
pub fn sweep_entries(methods: &[Method], ratios: &[f64], seeds: &[u64]) -> Vec<SweepEntry> {
    let mut out = Vec::new();
    for &method in methods {
        for &ood_ratio in ratios {
            for &seed in seeds {
                out.push(SweepEntry { method, ood_ratio, seed });
            }
        }
    }
    out
}

/// `CGID_WORKERS` when set to a positive integer, else the available
/// parallelism.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub entry: SweepEntry,
    pub dir: PathBuf,
    pub result: Result<(), CliError>,
}

/// Runs every entry into its own subdirectory of `out`. Outcomes come back
/// in entry order whatever the worker count.
pub fn run_sweep(base: &RunConfig, entries: &[SweepEntry], out: &Path, workers: usize) -> Vec<SweepOutcome> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<SweepOutcome>>> = Mutex::new((0..entries.len()).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..workers.clamp(1, entries.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(entry) = entries.get(i) else { break };
                let dir = out.join(entry.dir_name());
                let config = entry.config(base);
                let result = config
                    .validate()
                    .map_err(CliError::from)
                    .and_then(|_| execute_run(&config, &dir, None, RunOptions::default()).map(|_| ()));
                if let Err(e) = &result {
                    log::error!("{}: {e}", entry.dir_name());
                }
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(SweepOutcome {
                    entry: *entry,
                    dir,
                    result,
                });
            });
        }
    });
    slots
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|o| o.expect("every entry ran"))
        .collect()
}
