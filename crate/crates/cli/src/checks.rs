//! The eight configurable checks and the shared Monte Carlo drivers.

use crate::config::{CheckKind, RunSpec};
use crate::report::{with_reruns, CheckResult};
use anyhow::Context as _;
use rwre_core::corrector::{
    assemble, build_b, certify, effective_diffusivity, harmonic_residual, solve_harmonic,
    solve_harmonic_spectral, write_field_csv, EffectiveDiffusivity, HarmonicOptions, DEFAULT_DENSE_CAP,
};
use rwre_core::env::curl;
use rwre_core::helmholtz::{flux, stream_from_flow, PoissonMethod};
use rwre_core::mart::{
    bracket_averages, bracket_estimates, decompose_backward, drift_fields, ks_normality,
    orthogonality_tests, variance_scaling, DecompositionPaths, MartingaleFields, VarianceScaling,
};
use rwre_core::stats::{ks_critical, Estimate};
use rwre_core::walker::{run_replicas, simulate, StartPolicy};
use rwre_core::Environment;
use serde::Serialize;
use serde_json::{json, Value};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

/// Absolute tolerance of the pathwise decomposition identities.
pub const PATH_TOL: f64 = 1e-10;
/// Residual and route-agreement tolerance for harmonic coordinates.
pub const HARMONIC_TOL: f64 = 1e-8;
/// Tolerance on `max|B + Bᵀ|` and on `1 − σ_min(I + B)`.
pub const SKEW_TOL: f64 = 1e-11;
/// Curl mismatch accepted after a Helmholtz round trip.
pub const HELMHOLTZ_TOL: f64 = 1e-10;
/// Accepted range of the log-log variance slope.
pub const SLOPE_RANGE: (f64, f64) = (0.95, 1.05);
/// Largest accepted KS distance at the last sample time.
pub const KS_MAX: f64 = 0.02;
/// Width, in standard errors, of the Monte Carlo agreement bands.
pub const SE_BAND: f64 = 3.0;

/// Everything a check reads.
pub struct Context<'a> {
    pub env: &'a Environment,
    pub run: &'a RunSpec,
    /// Relative tolerance for exact identities.
    pub tolerance: f64,
    pub out: Option<&'a Path>,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn create(out: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = out.join(name);
    let f = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// One replica's backward decomposition.
#[derive(Clone, Debug)]
pub struct ReplicaPaths {
    pub seed: u64,
    pub start: usize,
    pub paths: DecompositionPaths,
    /// Whether `X` at every grid time equals the trajectory's displacement.
    pub x_exact: bool,
}

/// Simulates `replicas` walks to the last grid time and decomposes each one.
pub fn decompose_replicas(
    env: &Environment,
    fields: &MartingaleFields,
    grid: &[f64],
    replicas: usize,
    seed: u64,
    start: StartPolicy,
) -> anyhow::Result<Vec<ReplicaPaths>> {
    let horizon = *grid.last().context("empty time grid")?;
    let n = env.num_sites();
    let d = env.dim();
    run_replicas(replicas, seed, None, |_, s| -> anyhow::Result<ReplicaPaths> {
        let x0 = start.site(s, n);
        let tr = simulate(env, x0, horizon, s)?;
        let paths = decompose_backward(&tr, fields, grid)?;
        let x_exact = paths.samples.iter().all(|p| {
            let x = tr.displacement_at(p.t, d);
            p.x.iter().zip(&x).all(|(a, b)| *a == *b as f64)
        });
        Ok(ReplicaPaths {
            seed: s,
            start: x0,
            paths,
            x_exact,
        })
    })
    .into_iter()
    .collect()
}

/// `xs[r][g]`: displacement of replica `r` at `times[g]`.
pub fn displacements(
    env: &Environment,
    times: &[f64],
    replicas: usize,
    seed: u64,
    start: StartPolicy,
) -> anyhow::Result<Vec<Vec<Vec<f64>>>> {
    let horizon = *times.last().context("empty time grid")?;
    let n = env.num_sites();
    let d = env.dim();
    run_replicas(replicas, seed, None, |_, s| -> anyhow::Result<Vec<Vec<f64>>> {
        let tr = simulate(env, start.site(s, n), horizon, s)?;
        Ok(times
            .iter()
            .map(|&t| tr.displacement_at(t, d).into_iter().map(|v| v as f64).collect())
            .collect())
    })
    .into_iter()
    .collect()
}

/// Columns `replica,seed,start,t,X_1..X_d,M_*,I_*,J_*,Z_*,Y_*`.
pub fn write_paths_csv<W: Write>(mut w: W, dim: usize, rows: &[ReplicaPaths]) -> std::io::Result<()> {
    let mut header = vec!["replica".to_string(), "seed".into(), "start".into(), "t".into()];
    for p in ["X", "M", "I", "J", "Z", "Y"] {
        header.extend((1..=dim).map(|i| format!("{p}_{i}")));
    }
    writeln!(w, "{}", header.join(","))?;
    for (r, row) in rows.iter().enumerate() {
        for s in &row.paths.samples {
            let mut line = format!("{r},{},{},{}", row.seed, row.start, s.t);
            for v in [&s.x, &s.m, &s.i, &s.j, &s.z, &s.y] {
                for x in v.iter() {
                    line.push(',');
                    line.push_str(&x.to_string());
                }
            }
            writeln!(w, "{line}")?;
        }
    }
    Ok(())
}

/// Columns `t,mean_sq,se,lo,hi`.
pub fn write_variance_csv<W: Write>(mut w: W, vs: &VarianceScaling) -> std::io::Result<()> {
    writeln!(w, "t,mean_sq,se,lo,hi")?;
    for (t, e) in vs.times.iter().zip(&vs.mean_sq) {
        writeln!(w, "{t},{},{},{},{}", e.mean, e.se, e.lo, e.hi)?;
    }
    Ok(())
}

pub fn run_check(kind: CheckKind, ctx: &Context, seed: u64) -> CheckResult {
    let r = match kind {
        CheckKind::Validate => Ok(validate(ctx)),
        CheckKind::Bounds => Ok(bounds(ctx)),
        CheckKind::Decompose => decompose(ctx, seed),
        CheckKind::Orthogonality => orthogonality(ctx, seed),
        CheckKind::Corrector => corrector(ctx),
        CheckKind::Spectral => spectral(ctx),
        CheckKind::Helmholtz => helmholtz(ctx),
        CheckKind::Clt => clt(ctx, seed),
    };
    r.unwrap_or_else(|e| CheckResult::errored(kind, &e))
}

pub fn validate(ctx: &Context) -> CheckResult {
    let rep = ctx.env.validate_with(ctx.tolerance);
    let diag = ctx.env.integrability_diagnostics();
    let results = json!({
        "identities": rep.checks,
        "threshold": rep.threshold,
        "max_residual": rep.max_residual(),
        "min_domination_slack": rep.min_domination_slack,
        "min_conductance": rep.min_conductance,
        "diagnostics": {
            "r_sq": diag.r_sq,
            "r_inv_sq": diag.r_inv_sq,
            "stream_weighted": diag.stream_weighted,
            "stream_l1": diag.stream_l1,
            "singular_edges": diag.singular_edges.len(),
        },
    });
    CheckResult::exact(CheckKind::Validate, rep.passed(), results)
}

pub fn bounds(ctx: &Context) -> CheckResult {
    let env = ctx.env;
    let fields = MartingaleFields::new(env);
    let b = &fields.bounds;
    let (phi, psi) = bracket_averages(env, b);
    let (mean_phi, mean_psi) = fields.drift.means();
    let (mean_alpha, mean_beta) = fields.compensator_means();
    let tol = ctx.tolerance * b.upper.max(1.0);
    let phi_gap = max_abs_diff(&phi, &b.lower);
    let psi_gap = max_abs(&psi);
    let drift_mean = max_abs(&mean_phi).max(max_abs(&mean_psi));
    let pass = phi_gap <= tol && psi_gap <= tol && drift_mean <= tol && b.lower_trace() <= b.upper + tol;
    let results = json!({
        "lower": b.lower,
        "lower_trace": b.lower_trace(),
        "upper": b.upper,
        "s_bar": b.s_bar,
        "s_avg": b.s_avg,
        "bracket_phi_minus_lower": phi_gap,
        "bracket_psi": psi_gap,
        "drift_mean": drift_mean,
        "alpha_mean": mean_alpha,
        "beta_mean": mean_beta,
        "tolerance": tol,
    });
    CheckResult::exact(CheckKind::Bounds, pass, results)
}

#[derive(Serialize)]
pub struct PathSummary {
    pub replicas: usize,
    pub grid: Vec<f64>,
    pub forward_residual: f64,
    pub backward_residual: f64,
    pub x_exact: bool,
    /// `E|M(T)|² / T` against `Σ_k avg(s_k)`.
    pub martingale_rate: Estimate,
    pub upper: f64,
    /// Empirical `Var(Y_a(T)) / T` per coordinate.
    pub y_variance_rate: Vec<Estimate>,
}

pub fn summarize_paths(rows: &[ReplicaPaths], grid: &[f64], upper: f64) -> PathSummary {
    let last = grid.len() - 1;
    let t = grid[last];
    let d = rows.first().map_or(0, |r| r.paths.samples[last].x.len());
    let m: Vec<f64> = rows
        .iter()
        .map(|r| r.paths.samples[last].m.iter().map(|v| v * v).sum::<f64>() / t)
        .collect();
    let y_variance_rate = (0..d)
        .map(|a| {
            let ys: Vec<f64> = rows.iter().map(|r| r.paths.samples[last].y[a]).collect();
            let mean = ys.iter().sum::<f64>() / ys.len() as f64;
            let dev: Vec<f64> = ys.iter().map(|y| (y - mean) * (y - mean) / t).collect();
            Estimate::batch_means(&dev)
        })
        .collect();
    PathSummary {
        replicas: rows.len(),
        grid: grid.to_vec(),
        forward_residual: rows.iter().map(|r| r.paths.forward_residual).fold(0.0, f64::max),
        backward_residual: rows.iter().map(|r| r.paths.backward_residual).fold(0.0, f64::max),
        x_exact: rows.iter().all(|r| r.x_exact),
        martingale_rate: Estimate::batch_means(&m),
        upper,
        y_variance_rate,
    }
}

pub fn decompose(ctx: &Context, seed: u64) -> anyhow::Result<CheckResult> {
    let run = ctx.run;
    let fields = MartingaleFields::new(ctx.env);
    let grid = &run.horizons;
    let rows = decompose_replicas(ctx.env, &fields, grid, run.replicas, seed, run.start)?;
    let summary = summarize_paths(&rows, grid, fields.bounds.upper);
    let pass = summary.forward_residual <= PATH_TOL && summary.backward_residual <= PATH_TOL && summary.x_exact;
    let mut res = CheckResult::exact(CheckKind::Decompose, pass, serde_json::to_value(&summary)?);
    res.seeds = vec![seed];
    if let Some(out) = ctx.out {
        write_paths_csv(create(out, "paths.csv")?, ctx.env.dim(), &rows)?;
        res.files.push("paths.csv".into());
    }
    Ok(res)
}

/// Bracket of `Z` against the lower matrix and the two orthogonality
/// relations, from one batch of backward decompositions.
pub fn orthogonality_verdict(rows: &[ReplicaPaths], lower: &[f64]) -> anyhow::Result<(bool, Value)> {
    let paths: Vec<DecompositionPaths> = rows.iter().map(|r| r.paths.clone()).collect();
    let last = paths[0].samples.len() - 1;
    let est = bracket_estimates(&paths, last);
    let bracket_ok = est.iter().zip(lower).all(|(e, target)| e.within_se(*target, SE_BAND));
    let orth = orthogonality_tests(&paths, 0, last)?;
    let residual = rows.iter().map(|r| r.paths.max_residual()).fold(0.0, f64::max);
    let results = json!({
        "t": paths[0].samples[last].t,
        "bracket": est,
        "lower": lower,
        "bracket_within_3se": bracket_ok,
        "orthogonality": orth,
        "max_path_residual": residual,
    });
    Ok((bracket_ok && orth.pass, results))
}

pub fn orthogonality(ctx: &Context, seed: u64) -> anyhow::Result<CheckResult> {
    let run = ctx.run;
    let fields = MartingaleFields::new(ctx.env);
    let a = with_reruns(seed, |s| {
        let rows = decompose_replicas(ctx.env, &fields, &run.horizons, run.replicas, s, run.start)?;
        orthogonality_verdict(&rows, &fields.bounds.lower)
    })?;
    Ok(CheckResult::statistical(CheckKind::Orthogonality, a))
}

fn sigma_trace(sigma: &[f64], d: usize) -> f64 {
    (0..d).map(|i| sigma[i * d + i]).sum()
}

/// Effective diffusivity from the Krylov route.
pub fn diffusivity(env: &Environment) -> anyhow::Result<EffectiveDiffusivity> {
    let asm = assemble(env)?;
    Ok(effective_diffusivity(env, &asm, &HarmonicOptions::for_sites(env.num_sites()))?)
}

pub fn corrector(ctx: &Context) -> anyhow::Result<CheckResult> {
    let env = ctx.env;
    let d = env.dim();
    let asm = assemble(env)?;
    let eff = effective_diffusivity(env, &asm, &HarmonicOptions::for_sites(env.num_sites()))?;
    let rate_scale = env.max_total_rate().max(1.0);
    let tol = ctx.tolerance * rate_scale;
    let c = &asm.checks;
    let assembly_ok = c.s_dual <= tol
        && c.a_dual.is_none_or(|v| v <= tol)
        && c.s_symmetry <= tol
        && c.a_skew <= tol
        && c.l_row_sum <= tol;
    let trace = sigma_trace(&eff.sigma, d);
    let sym = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| (eff.sigma[i * d + j] - eff.sigma[j * d + i]).abs())
        .fold(0.0, f64::max);
    let margin_tol = 1e-9 * trace.abs().max(1.0);
    let reversible = env.flow().as_slice().iter().all(|&v| v == 0.0);
    let lower_ok = eff.lower_margin >= -margin_tol;
    let upper_ok = !reversible || eff.upper_margin >= -margin_tol;
    let pass = assembly_ok && eff.residual <= HARMONIC_TOL && sym <= tol && lower_ok && upper_ok;
    let results = json!({
        "sigma": eff.sigma,
        "trace": trace,
        "lower": eff.bounds.lower,
        "upper": eff.bounds.upper,
        "lower_margin": eff.lower_margin,
        "upper_margin": eff.upper_margin,
        "upper_enforced": reversible,
        "min_eigenvalue": eff.min_eigenvalue,
        "symmetry": sym,
        "residual": eff.residual,
        "assembly": asm.checks,
        "tolerance": tol,
    });
    let mut res = CheckResult::exact(CheckKind::Corrector, pass, results);
    if let Some(out) = ctx.out {
        for (i, w) in eff.correctors.iter().enumerate() {
            let name = format!("chi_{}.csv", i + 1);
            write_field_csv(create(out, &name)?, &w.potential)?;
            res.files.push(name);
        }
    }
    Ok(res)
}

/// Certificate of `B` and both harmonic-coordinate routes for every
/// coordinate drift.
pub fn spectral_verdict(env: &Environment) -> anyhow::Result<(bool, Value)> {
    let asm = assemble(env)?;
    let f = build_b(&asm, DEFAULT_DENSE_CAP)?;
    let cert = certify(&asm, &f);
    let drift = drift_fields(env);
    let opts = HarmonicOptions::for_sites(env.num_sites());
    let mut agreement = 0.0f64;
    let mut krylov_residual = 0.0f64;
    let mut spectral_residual = 0.0f64;
    for i in 0..env.dim() {
        let rhs: Vec<f64> = drift.total_component(i).iter().map(|v| -v).collect();
        let k = solve_harmonic(&asm, &rhs, &opts)?;
        let s = solve_harmonic_spectral(&asm, &f, &rhs, false)?;
        agreement = agreement.max(k.max_abs_diff(&s));
        krylov_residual = krylov_residual.max(harmonic_residual(&asm, &k, &rhs));
        spectral_residual = spectral_residual.max(harmonic_residual(&asm, &s, &rhs));
    }
    let pass = cert.b_skew <= SKEW_TOL
        && cert.min_singular >= 1.0 - SKEW_TOL
        && agreement <= HARMONIC_TOL
        && krylov_residual <= HARMONIC_TOL
        && spectral_residual <= HARMONIC_TOL;
    let results = json!({
        "certificate": cert,
        "route_agreement": agreement,
        "krylov_residual": krylov_residual,
        "spectral_residual": spectral_residual,
    });
    Ok((pass, results))
}

pub fn spectral(ctx: &Context) -> anyhow::Result<CheckResult> {
    let (pass, results) = spectral_verdict(ctx.env)?;
    Ok(CheckResult::exact(CheckKind::Spectral, pass, results))
}

pub fn helmholtz(ctx: &Context) -> anyhow::Result<CheckResult> {
    let env = ctx.env;
    let t = env.torus();
    let b = env.flow();
    let scale = max_abs(b.as_slice()).max(1.0);
    let mut pass = true;
    let mut per_method = serde_json::Map::new();
    for (name, method) in [("spectral", PoissonMethod::Spectral), ("conjugate-gradient", PoissonMethod::ConjugateGradient)] {
        let rec = stream_from_flow(t, b, method)?;
        let back = curl(t, &rec.stream);
        let gap = max_abs_diff(back.as_slice(), b.as_slice());
        let gauge = env
            .stream()
            .map(|h0| max_abs_diff(h0.canonical(), rec.stream.canonical()));
        pass &= gap <= HELMHOLTZ_TOL * scale;
        per_method.insert(
            name.into(),
            json!({
                "curl_gap": gap,
                "residuals": rec.residuals,
                "gauge_gap": gauge,
            }),
        );
    }
    let results = json!({
        "flux": flux(t, b),
        "methods": per_method,
        "tolerance": HELMHOLTZ_TOL * scale,
    });
    Ok(CheckResult::exact(CheckKind::Helmholtz, pass, results))
}

/// KS threshold for `n` samples: [`KS_MAX`], or the 99% critical value if
/// that is larger.
pub fn ks_threshold(n: usize) -> f64 {
    KS_MAX.max(ks_critical(n, 0.01))
}

/// Variance scaling, normality and, if `sigma_trace` is given, agreement of
/// the linear slope with it.
pub fn clt_verdict(times: &[f64], xs: &[Vec<Vec<f64>>], sigma_trace: Option<f64>) -> (bool, Value, VarianceScaling) {
    let vs = variance_scaling(times, xs);
    let last = times.len() - 1;
    let finals: Vec<Vec<f64>> = xs.iter().map(|r| r[last].clone()).collect();
    let ks = ks_normality(times[last], &finals);
    let ks_max = ks_threshold(xs.len());
    let slope_ok = vs.log_slope >= SLOPE_RANGE.0 && vs.log_slope <= SLOPE_RANGE.1;
    let trace_ok = sigma_trace.is_none_or(|s| vs.linear_slope.within_se(s, SE_BAND));
    let results = json!({
        "times": vs.times,
        "mean_sq": vs.mean_sq,
        "log_slope": vs.log_slope,
        "slope_range": [SLOPE_RANGE.0, SLOPE_RANGE.1],
        "linear_slope": vs.linear_slope,
        "sigma_trace": sigma_trace,
        "directional": vs.directional,
        "ks": ks,
        "ks_threshold": ks_max,
    });
    (slope_ok && ks < ks_max && trace_ok, results, vs)
}

pub fn clt(ctx: &Context, seed: u64) -> anyhow::Result<CheckResult> {
    let run = ctx.run;
    let eff = diffusivity(ctx.env)?;
    let trace = sigma_trace(&eff.sigma, ctx.env.dim());
    let mut last_vs = None;
    let a = with_reruns(seed, |s| {
        let xs = displacements(ctx.env, &run.horizons, run.replicas, s, run.start)?;
        let (pass, results, vs) = clt_verdict(&run.horizons, &xs, Some(trace));
        last_vs = Some(vs);
        Ok((pass, results))
    })?;
    let mut res = CheckResult::statistical(CheckKind::Clt, a);
    if let (Some(out), Some(vs)) = (ctx.out, last_vs) {
        write_variance_csv(create(out, "variance.csv")?, &vs)?;
        res.files.push("variance.csv".into());
    }
    Ok(res)
}
