use anyhow::Context as _;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rwre_cli::acceptance::{self, Scale, Settings};
use rwre_cli::checks::{self, Context};
use rwre_cli::config::{RunSpec, DEFAULT_TOLERANCE};
use rwre_cli::{in_pool, run, CheckResult, ConfigError, ExperimentConfig, RunOptions};
use rwre_core::env::{io, Distribution, EnvSpec, Generator, GeneratorParams};
use rwre_core::helmholtz::{flux, stream_from_flow, PoissonMethod};
use rwre_core::mart::{dyadic_grid, MartingaleFields};
use rwre_core::stats::Estimate;
use rwre_core::walker::{run_replicas, simulate, write_summary_csv, StartPolicy};
use rwre_core::Environment;
use serde_json::json;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "rwre", version, about = "Random walks in doubly stochastic environments on periodic tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug, Default)]
struct Common {
    /// Experiment config (JSON); supplies defaults for every other flag.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed: environment seed for gen-env, master seed elsewhere.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: config output_dir, then $RWRE_OUT, then .]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Relative tolerance for exact identities.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Worker threads.
    #[arg(long, env = "RWRE_THREADS")]
    threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GeneratorArg {
    Homogeneous,
    ConductanceStream,
    TotallyAsymmetric,
}

impl From<GeneratorArg> for Generator {
    fn from(g: GeneratorArg) -> Self {
        match g {
            GeneratorArg::Homogeneous => Generator::Homogeneous,
            GeneratorArg::ConductanceStream => Generator::ConductanceStream,
            GeneratorArg::TotallyAsymmetric => Generator::TotallyAsymmetric,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Spectral,
    Cg,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an environment and write it as JSON.
    GenEnv {
        #[arg(long, value_enum)]
        generator: Option<GeneratorArg>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long = "L")]
        side: Option<usize>,
        /// Conductance law as JSON, e.g. '{"kind":"uniform","lo":0.5,"hi":2}'.
        #[arg(long)]
        conductance: Option<String>,
        /// Stream law as JSON, e.g. '{"kind":"gaussian","mean":0,"sigma":1}'.
        #[arg(long)]
        stream: Option<String>,
        /// Accept edges with zero conductance.
        #[arg(long)]
        allow_degenerate: bool,
        /// File name inside the output directory.
        #[arg(long, default_value = "env.json")]
        name: String,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate replicas and write a per-replica summary CSV.
    Simulate {
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long = "T")]
        horizon: Option<f64>,
        #[arg(long)]
        replicas: Option<usize>,
        /// Start site, or `uniform`.
        #[arg(long)]
        start: Option<String>,
        /// Also write one JSONL trajectory per replica.
        #[arg(long)]
        trajectories: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Forward and backward martingale decompositions on a dyadic grid.
    Decompose {
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long = "T")]
        horizon: Option<f64>,
        /// Number of dyadic grid levels.
        #[arg(long, default_value_t = 5)]
        levels: usize,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        start: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Print the explicit lower matrix and the upper rate.
    Bounds {
        #[arg(long)]
        env: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Solve the corrector equations and report the effective diffusivity.
    Corrector {
        #[arg(long)]
        env: Option<PathBuf>,
        /// Write S, A and L in coordinate-list form.
        #[arg(long)]
        export_matrices: bool,
        /// Also certify B and compare the spectral route.
        #[arg(long)]
        spectral: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Rebuild a stream tensor from the environment's flow.
    Helmholtz {
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "spectral")]
        method: MethodArg,
        #[command(flatten)]
        common: Common,
    },
    /// Run every check enabled in a config and write the report.
    CheckAll {
        #[command(flatten)]
        common: Common,
    },
    /// Run acceptance criteria and print one line per criterion.
    Acceptance {
        /// Criterion number (1-9); all when omitted.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=9))]
        criterion: Option<u8>,
        /// Reduced sample sizes.
        #[arg(long)]
        quick: bool,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Usage(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

struct Resolved {
    config: Option<ExperimentConfig>,
    common: Common,
}

impl Resolved {
    fn new(common: Common) -> anyhow::Result<Self> {
        let config = common.config.as_ref().map(ExperimentConfig::load).transpose()?;
        Ok(Resolved { config, common })
    }

    fn out(&self) -> PathBuf {
        self.common
            .out
            .clone()
            .or_else(|| self.config.as_ref().and_then(|c| c.output_dir.clone()))
            .or_else(|| std::env::var_os("RWRE_OUT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }

    fn out_dir(&self) -> anyhow::Result<PathBuf> {
        let out = self.out();
        std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
        Ok(out)
    }

    fn tolerance(&self) -> f64 {
        self.common
            .tolerance
            .or(self.config.as_ref().map(|c| c.tolerance))
            .unwrap_or(DEFAULT_TOLERANCE)
    }

    fn threads(&self) -> Option<usize> {
        self.common.threads.or(self.config.as_ref().and_then(|c| c.run.threads))
    }

    fn master_seed(&self) -> u64 {
        self.common
            .seed
            .or(self.config.as_ref().map(|c| c.run.master_seed))
            .unwrap_or(0)
    }

    fn env(&self, path: Option<&Path>) -> anyhow::Result<Environment> {
        match (path, &self.config) {
            (Some(p), _) => io::load(p).with_context(|| format!("loading {}", p.display())),
            (None, Some(c)) => Ok(c.env.build()?),
            (None, None) => Err(usage("either --env or --config is required")),
        }
    }

    fn run_spec(&self, horizons: Option<Vec<f64>>, replicas: Option<usize>, start: Option<&str>, default_start: StartPolicy) -> anyhow::Result<RunSpec> {
        let base = self.config.as_ref().map(|c| &c.run);
        let horizons = horizons
            .or(base.map(|r| r.horizons.clone()))
            .ok_or_else(|| usage("--T is required without --config"))?;
        let start = match start {
            Some(s) => parse_start(s)?,
            None => base.map_or(default_start, |r| r.start),
        };
        Ok(RunSpec {
            horizons,
            replicas: replicas.or(base.map(|r| r.replicas)).unwrap_or(1),
            master_seed: self.master_seed(),
            threads: self.threads(),
            start,
        })
    }
}

fn parse_start(s: &str) -> anyhow::Result<StartPolicy> {
    if s == "uniform" {
        return Ok(StartPolicy::Uniform);
    }
    s.parse()
        .map(StartPolicy::Fixed)
        .map_err(|_| usage(format!("--start expects a site index or `uniform`, got `{s}`")))
}

fn parse_law(flag: &str, text: &str) -> anyhow::Result<Distribution> {
    serde_json::from_str(text).map_err(|e| usage(format!("{flag}: {e}")))
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json"));
}

fn print_check(r: &CheckResult) {
    print_json(&serde_json::to_value(r).expect("check serializes"));
}

fn check_ctx<'a>(env: &'a Environment, run: &'a RunSpec, tolerance: f64, out: Option<&'a Path>) -> Context<'a> {
    Context { env, run, tolerance, out }
}

fn gen_env(
    generator: Option<GeneratorArg>,
    d: Option<usize>,
    side: Option<usize>,
    conductance: Option<String>,
    stream: Option<String>,
    allow_degenerate: bool,
    name: String,
    r: &Resolved,
) -> anyhow::Result<bool> {
    let base = r.config.as_ref().map(|c| c.env.clone());
    let generator: Generator = match (generator, &base) {
        (Some(g), _) => g.into(),
        (None, Some(b)) => b.generator,
        (None, None) => return Err(usage("--generator is required without --config")),
    };
    let d = d.or(base.as_ref().map(|b| b.d)).ok_or_else(|| usage("--d is required without --config"))?;
    let side = side.or(base.as_ref().map(|b| b.side)).ok_or_else(|| usage("--L is required without --config"))?;
    let seed = r.common.seed.or(base.as_ref().map(|b| b.seed)).unwrap_or(0);
    let mut params = match &base {
        Some(b) => b.params.clone(),
        None => match generator {
            Generator::Homogeneous => GeneratorParams::default(),
            Generator::ConductanceStream | Generator::TotallyAsymmetric => GeneratorParams {
                conductance: Distribution::Uniform { lo: 0.5, hi: 2.0 },
                stream: Distribution::Gaussian { mean: 0.0, sigma: 1.0 },
                require_ellipticity: true,
            },
        },
    };
    if let Some(c) = conductance {
        params.conductance = parse_law("--conductance", &c)?;
    }
    if let Some(s) = stream {
        params.stream = parse_law("--stream", &s)?;
    }
    if allow_degenerate {
        params.require_ellipticity = false;
    }
    let spec = EnvSpec { generator, d, side, seed, params };
    let env = spec.build()?;
    let rep = env.validate_with(r.tolerance());
    let path = r.out_dir()?.join(name);
    io::save(&env, &path).with_context(|| format!("writing {}", path.display()))?;
    print_json(&json!({
        "path": path,
        "sites": env.num_sites(),
        "valid": rep.passed(),
        "max_residual": rep.max_residual(),
        "min_domination_slack": rep.min_domination_slack,
    }));
    Ok(rep.passed())
}

fn simulate_cmd(env_path: Option<PathBuf>, horizon: Option<f64>, replicas: Option<usize>, start: Option<String>, trajectories: bool, r: &Resolved) -> anyhow::Result<bool> {
    let env = r.env(env_path.as_deref())?;
    let run = r.run_spec(horizon.map(|t| vec![t]), replicas, start.as_deref(), StartPolicy::Fixed(0))?;
    let t = *run.horizons.last().expect("horizon");
    if let StartPolicy::Fixed(x) = run.start {
        if x >= env.num_sites() {
            return Err(usage(format!("start site {x} outside torus of {} sites", env.num_sites())));
        }
    }
    let out = r.out_dir()?;
    let trs = in_pool(run.threads, || {
        run_replicas(run.replicas, run.master_seed, None, |_, seed| {
            simulate(&env, run.start.site(seed, env.num_sites()), t, seed)
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    write_summary_csv(BufWriter::new(File::create(out.join("summary.csv"))?), env.dim(), &trs)?;
    let mut files = vec!["summary.csv".to_string()];
    if trajectories {
        for (i, tr) in trs.iter().enumerate() {
            let name = format!("trajectory_{i}.jsonl");
            tr.write_jsonl(BufWriter::new(File::create(out.join(&name))?))?;
            files.push(name);
        }
    }
    let sq: Vec<f64> = trs
        .iter()
        .map(|tr| tr.displacement.iter().map(|&x| (x * x) as f64).sum::<f64>() / t)
        .collect();
    let jumps: u64 = trs.iter().map(|tr| tr.num_jumps() as u64).sum();
    print_json(&json!({
        "replicas": run.replicas,
        "T": t,
        "master_seed": run.master_seed,
        "total_jumps": jumps,
        "mean_sq_over_T": (sq.len() > 1).then(|| Estimate::batch_means(&sq)),
        "out": out,
        "files": files,
    }));
    Ok(true)
}

fn decompose_cmd(env_path: Option<PathBuf>, horizon: Option<f64>, levels: usize, replicas: Option<usize>, start: Option<String>, r: &Resolved) -> anyhow::Result<bool> {
    if levels == 0 {
        return Err(usage("--levels must be at least 1"));
    }
    let env = r.env(env_path.as_deref())?;
    let run = r.run_spec(horizon.map(|t| dyadic_grid(t, levels)), replicas, start.as_deref(), StartPolicy::Uniform)?;
    let out = r.out_dir()?;
    let fields = MartingaleFields::new(&env);
    let rows = in_pool(run.threads, || {
        checks::decompose_replicas(&env, &fields, &run.horizons, run.replicas, run.master_seed, run.start)
    })?;
    checks::write_paths_csv(BufWriter::new(File::create(out.join("paths.csv"))?), env.dim(), &rows)?;
    let summary = checks::summarize_paths(&rows, &run.horizons, fields.bounds.upper);
    let identities = summary.forward_residual <= checks::PATH_TOL && summary.backward_residual <= checks::PATH_TOL && summary.x_exact;
    let orthogonality = if rows.len() >= rwre_core::mart::MIN_REPLICAS {
        let (pass, res) = checks::orthogonality_verdict(&rows, &fields.bounds.lower)?;
        Some(json!({"verdict": if pass { "pass" } else { "soft-fail" }, "results": res}))
    } else {
        None
    };
    print_json(&json!({
        "bounds": fields.bounds,
        "paths": summary,
        "identities": if identities { "pass" } else { "fail" },
        "orthogonality": orthogonality,
        "out": out,
        "files": ["paths.csv"],
    }));
    Ok(identities)
}

fn corrector_cmd(env_path: Option<PathBuf>, export: bool, spectral: bool, r: &Resolved) -> anyhow::Result<bool> {
    let env = r.env(env_path.as_deref())?;
    let out = r.out_dir()?;
    let run = r.run_spec(Some(vec![1.0]), None, None, StartPolicy::Uniform)?;
    let (res, spec) = in_pool(run.threads, || {
        let ctx = check_ctx(&env, &run, r.tolerance(), Some(&out));
        let res = checks::corrector(&ctx)?;
        let spec = if spectral { Some(checks::spectral(&ctx)?) } else { None };
        anyhow::Ok((res, spec))
    })?;
    if export {
        let asm = rwre_core::corrector::assemble(&env)?;
        for m in ['S', 'A', 'L'] {
            asm.export(m, BufWriter::new(File::create(out.join(format!("{m}.coo")))?))?;
        }
    }
    print_check(&res);
    let mut ok = !res.verdict.is_failure();
    if let Some(s) = spec {
        print_check(&s);
        ok &= !s.verdict.is_failure();
    }
    Ok(ok)
}

fn helmholtz_cmd(env_path: Option<PathBuf>, method: MethodArg, r: &Resolved) -> anyhow::Result<bool> {
    let env = r.env(env_path.as_deref())?;
    let t = env.torus();
    let method = match method {
        MethodArg::Spectral => PoissonMethod::Spectral,
        MethodArg::Cg => PoissonMethod::ConjugateGradient,
    };
    let rec = stream_from_flow(t, env.flow(), method)?;
    let rebuilt = Environment::from_parts(t.clone(), env.conductances().clone(), env.flow().clone(), Some(rec.stream.clone()))
        .with_ellipticity(env.requires_ellipticity());
    let rebuilt = match env.header() {
        Some(h) => rebuilt.with_header(h.clone()),
        None => rebuilt,
    };
    let report = rebuilt.validate_with(r.tolerance());
    let path = r.out_dir()?.join("env-helmholtz.json");
    io::save(&rebuilt, &path)?;
    let curl_gap = rwre_core::env::curl(t, &rec.stream)
        .as_slice()
        .iter()
        .zip(env.flow().as_slice())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = env.flow().as_slice().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let ok = curl_gap <= checks::HELMHOLTZ_TOL * scale && report.passed();
    print_json(&json!({
        "flux": flux(t, env.flow()),
        "residuals": rec.residuals,
        "curl_gap": curl_gap,
        "rebuilt_env_valid": report.passed(),
        "path": path,
    }));
    Ok(ok)
}

fn check_all(r: &Resolved) -> anyhow::Result<bool> {
    let mut config = r.config.clone().ok_or_else(|| usage("check-all requires --config"))?;
    if let Some(s) = r.common.seed {
        config.run.master_seed = s;
    }
    if let Some(t) = r.common.tolerance {
        config.tolerance = t;
    }
    config.validate()?;
    let out = r.out();
    let output = run(&config, &RunOptions { threads: r.threads(), out: Some(out.clone()) })?;
    for c in &output.report.checks {
        let secs = output.runtimes.checks.get(c.check.name()).copied().unwrap_or(0.0);
        let note = c.error.as_deref().or(c.recommendation.as_deref()).unwrap_or("");
        println!("{:<14} {:<9} {:>8.2} s  {note}", c.check.name(), c.verdict.to_string(), secs);
    }
    println!("report: {}", out.join(rwre_cli::REPORT_FILE).display());
    Ok(!output.report.failed())
}

fn acceptance_cmd(criterion: Option<u8>, quick: bool, r: &Resolved) -> anyhow::Result<bool> {
    let mut settings = if quick { Settings::quick(r.threads()) } else { Settings::full() };
    settings.threads = r.threads();
    if let Some(s) = r.common.seed {
        settings.seed = s;
    }
    let selected: Vec<_> = acceptance::CRITERIA
        .iter()
        .filter(|c| criterion.is_none_or(|id| c.id == id))
        .collect();
    let mut reports = Vec::new();
    let mut runtimes = serde_json::Map::new();
    let mut ok = true;
    for c in selected {
        let run = acceptance::run_criterion(c, &settings);
        println!("{}", run.line());
        ok &= run.passed();
        runtimes.insert(c.id.to_string(), json!(run.seconds));
        reports.push(run.report);
    }
    if r.common.out.is_some() || std::env::var_os("RWRE_OUT").is_some() {
        let out = r.out_dir()?;
        let mut text = serde_json::to_string_pretty(&reports)?;
        text.push('\n');
        std::fs::write(out.join("acceptance.json"), text)?;
        std::fs::write(
            out.join("acceptance-runtimes.json"),
            serde_json::to_string_pretty(&json!({ "seconds": runtimes, "scale": if settings.scale == Scale::Full { "full" } else { "quick" } }))?,
        )?;
    }
    Ok(ok)
}

fn dispatch(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::GenEnv { generator, d, side, conductance, stream, allow_degenerate, name, common } => {
            gen_env(generator, d, side, conductance, stream, allow_degenerate, name, &Resolved::new(common)?)
        }
        Command::Simulate { env, horizon, replicas, start, trajectories, common } => {
            simulate_cmd(env, horizon, replicas, start, trajectories, &Resolved::new(common)?)
        }
        Command::Decompose { env, horizon, levels, replicas, start, common } => {
            decompose_cmd(env, horizon, levels, replicas, start, &Resolved::new(common)?)
        }
        Command::Bounds { env, common } => {
            let r = Resolved::new(common)?;
            let env = r.env(env.as_deref())?;
            let run = r.run_spec(Some(vec![1.0]), None, None, StartPolicy::Uniform)?;
            let res = checks::bounds(&check_ctx(&env, &run, r.tolerance(), None));
            print_check(&res);
            Ok(!res.verdict.is_failure())
        }
        Command::Corrector { env, export_matrices, spectral, common } => {
            corrector_cmd(env, export_matrices, spectral, &Resolved::new(common)?)
        }
        Command::Helmholtz { env, method, common } => helmholtz_cmd(env, method, &Resolved::new(common)?),
        Command::CheckAll { common } => check_all(&Resolved::new(common)?),
        Command::Acceptance { criterion, quick, common } => acceptance_cmd(criterion, quick, &Resolved::new(common)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<Usage>() || e.is::<ConfigError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
