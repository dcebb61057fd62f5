//! Experiment runner for `rwre-core`: JSON configs, seeded parallel Monte
//! Carlo checks, versioned reports and the acceptance suite.

pub mod acceptance;
pub mod checks;
pub mod config;
pub mod report;

pub use config::{CheckKind, ConfigError, ExperimentConfig};
pub use report::{CheckResult, ExperimentReport, Runtimes, Verdict};

use anyhow::Context as _;
use checks::{run_check, Context};
use report::{Provenance, Versions, SCHEMA_VERSION};
use rwre_core::rng::split_seed;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const REPORT_FILE: &str = "report.json";
pub const RUNTIMES_FILE: &str = "runtimes.json";

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the config value, then the global pool.
    pub threads: Option<usize>,
    /// Output directory; nothing is written when `None`.
    pub out: Option<PathBuf>,
}

pub struct RunOutput {
    pub report: ExperimentReport,
    pub runtimes: Runtimes,
}

/// Runs `f` on a pool of `threads` workers, or on the global pool.
pub fn in_pool<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

/// Base seed of a check under `master`.
pub fn check_seed(master: u64, kind: CheckKind) -> u64 {
    split_seed(master, kind.stream())
}

/// Executes every enabled check. Module errors fail only their check.
pub fn run(config: &ExperimentConfig, opts: &RunOptions) -> anyhow::Result<RunOutput> {
    config.validate()?;
    let threads = opts.threads.or(config.run.threads);
    if let Some(out) = &opts.out {
        std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    }
    let started = Instant::now();
    let (checks, timings) = in_pool(threads, || execute(config, opts.out.as_deref()));
    let master = config.run.master_seed;
    let report = ExperimentReport {
        schema_version: SCHEMA_VERSION.to_string(),
        versions: Versions::current(),
        provenance: Provenance {
            config_hash: config.hash(),
            master_seed: master,
            env_seed: config.env.seed,
            check_seeds: config
                .checks
                .iter()
                .map(|&c| (c.name().to_string(), check_seed(master, c)))
                .collect(),
        },
        config: config.canonical(),
        verdict: Verdict::combine(checks.iter().map(|c| c.verdict)),
        checks,
    };
    let runtimes = Runtimes {
        config_hash: report.provenance.config_hash.clone(),
        threads: threads.unwrap_or_else(rayon::current_num_threads),
        checks: timings,
        total_seconds: started.elapsed().as_secs_f64(),
    };
    if let Some(out) = &opts.out {
        write_outputs(out, &report, &runtimes)?;
    }
    Ok(RunOutput { report, runtimes })
}

fn execute(config: &ExperimentConfig, out: Option<&Path>) -> (Vec<report::CheckResult>, BTreeMap<String, f64>) {
    let mut timings = BTreeMap::new();
    let env = config.env.build();
    let results = config
        .checks
        .iter()
        .map(|&kind| {
            let t0 = Instant::now();
            let r = match &env {
                Ok(env) => {
                    let ctx = Context {
                        env,
                        run: &config.run,
                        tolerance: config.tolerance,
                        out,
                    };
                    run_check(kind, &ctx, check_seed(config.run.master_seed, kind))
                }
                Err(e) => CheckResult::errored(kind, &anyhow::anyhow!("environment: {e}")),
            };
            timings.insert(kind.name().to_string(), t0.elapsed().as_secs_f64());
            r
        })
        .collect();
    (results, timings)
}

pub fn write_outputs(out: &Path, report: &ExperimentReport, runtimes: &Runtimes) -> anyhow::Result<()> {
    std::fs::write(out.join(REPORT_FILE), report.to_json())?;
    let mut rt = serde_json::to_string_pretty(runtimes)?;
    rt.push('\n');
    std::fs::write(out.join(RUNTIMES_FILE), rt)?;
    Ok(())
}
