//! The acceptance suite. Each criterion is a named function that builds its
//! own environments from a fixed seed and returns a serializable report.

use crate::checks::{
    clt_verdict, decompose_replicas, diffusivity, displacements, orthogonality_verdict,
    spectral_verdict, HELMHOLTZ_TOL, PATH_TOL, SE_BAND,
};
use crate::config::ExperimentConfig;
use crate::report::{with_reruns, Verdict};
use crate::{in_pool, run, RunOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rwre_core::env::generate::random_stream;
use rwre_core::env::{curl, Distribution, EnvSpec, FlowField, Generator, GeneratorParams};
use rwre_core::helmholtz::{stream_from_flow, HelmholtzError, PoissonMethod};
use rwre_core::mart::{bounds, dyadic_grid, MartingaleFields};
use rwre_core::rng::split_seed;
use rwre_core::stats::Estimate;
use rwre_core::walker::StartPolicy;
use rwre_core::{Environment, Torus};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::time::Instant;

/// Master seed of the suite.
pub const SUITE_SEED: u64 = 0x5eed_2024_0001;

/// Bundled config exercised by the determinism criterion and the smoke test.
pub const SMOKE_CONFIG: &str = include_str!("../configs/smoke.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    /// The stated sample sizes.
    Full,
    /// Reduced sizes, for rerun comparisons.
    Quick,
}

#[derive(Clone, Copy, Debug)]
pub struct Settings {
    pub scale: Scale,
    pub threads: Option<usize>,
    pub seed: u64,
}

impl Settings {
    pub fn full() -> Self {
        Settings {
            scale: Scale::Full,
            threads: None,
            seed: SUITE_SEED,
        }
    }

    pub fn quick(threads: Option<usize>) -> Self {
        Settings {
            scale: Scale::Quick,
            threads,
            seed: SUITE_SEED,
        }
    }

    fn pick<T>(&self, full: T, quick: T) -> T {
        match self.scale {
            Scale::Full => full,
            Scale::Quick => quick,
        }
    }

    fn seed_for(&self, id: u8) -> u64 {
        split_seed(self.seed, id as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: String,
    pub scale: Scale,
    pub verdict: Verdict,
    pub summary: String,
    pub results: Value,
}

pub struct Criterion {
    pub id: u8,
    pub name: &'static str,
    /// Wall-clock budget at full scale, seconds.
    pub budget: Option<f64>,
    pub run: fn(&Settings) -> anyhow::Result<CriterionReport>,
}

pub const CRITERIA: [Criterion; 9] = [
    Criterion { id: 1, name: "structural-exactness", budget: Some(10.0), run: criterion_1_structural_exactness },
    Criterion { id: 2, name: "homogeneous-calibration", budget: Some(120.0), run: criterion_2_homogeneous_calibration },
    Criterion { id: 3, name: "harmonic-mean-oracle", budget: Some(120.0), run: criterion_3_harmonic_mean_oracle },
    Criterion { id: 4, name: "backward-martingale", budget: Some(300.0), run: criterion_4_backward_martingale },
    Criterion { id: 5, name: "operator-certification", budget: Some(60.0), run: criterion_5_operator_certification },
    Criterion { id: 6, name: "helmholtz-round-trip", budget: Some(30.0), run: criterion_6_helmholtz_round_trip },
    Criterion { id: 7, name: "clt-shape", budget: Some(600.0), run: criterion_7_clt_shape },
    Criterion { id: 8, name: "path-identities", budget: None, run: criterion_8_path_identities },
    Criterion { id: 9, name: "determinism", budget: None, run: criterion_9_determinism },
];

pub fn criterion(id: u8) -> Option<&'static Criterion> {
    CRITERIA.iter().find(|c| c.id == id)
}

/// A criterion's report with its wall-clock time.
pub struct CriterionRun {
    pub report: CriterionReport,
    pub seconds: f64,
    pub budget: Option<f64>,
}

impl CriterionRun {
    pub fn within_budget(&self) -> bool {
        self.report.scale == Scale::Quick || self.budget.is_none_or(|b| self.seconds <= b)
    }

    pub fn passed(&self) -> bool {
        !self.report.verdict.is_failure() && self.within_budget()
    }

    /// One line: id, name, verdict, summary and timing.
    pub fn line(&self) -> String {
        let status = if self.passed() { "pass" } else { "FAIL" };
        let budget = match self.budget {
            Some(b) if !self.within_budget() => format!(", over budget of {b} s"),
            Some(b) => format!(" of {b} s"),
            None => String::new(),
        };
        format!(
            "criterion {} {:<24} {status} [{}] {} ({:.1} s{budget})",
            self.report.id, self.report.name, self.report.verdict, self.report.summary, self.seconds
        )
    }
}

pub fn run_criterion(c: &Criterion, settings: &Settings) -> CriterionRun {
    let t0 = Instant::now();
    let report = in_pool(settings.threads, || (c.run)(settings)).unwrap_or_else(|e| CriterionReport {
        id: c.id,
        name: c.name.to_string(),
        scale: settings.scale,
        verdict: Verdict::Fail,
        summary: format!("error: {e:#}"),
        results: Value::Null,
    });
    CriterionRun {
        report,
        seconds: t0.elapsed().as_secs_f64(),
        budget: c.budget,
    }
}

fn report(id: u8, s: &Settings, verdict: Verdict, summary: String, results: Value) -> CriterionReport {
    CriterionReport {
        id,
        name: criterion(id).map_or("", |c| c.name).to_string(),
        scale: s.scale,
        verdict,
        summary,
        results,
    }
}

fn build(generator: Generator, d: usize, side: usize, seed: u64, conductance: Distribution, stream: Distribution) -> anyhow::Result<Environment> {
    Ok(EnvSpec {
        generator,
        d,
        side,
        seed,
        params: GeneratorParams {
            conductance,
            stream,
            require_ellipticity: true,
        },
    }
    .build()?)
}

fn standard_stream_env(d: usize, side: usize, seed: u64) -> anyhow::Result<Environment> {
    build(
        Generator::ConductanceStream,
        d,
        side,
        seed,
        Distribution::Uniform { lo: 0.5, hi: 2.0 },
        Distribution::Gaussian { mean: 0.0, sigma: 1.0 },
    )
}

const STRUCTURAL: [&str; 7] = ["bistoch", "s-cond", "b-flow", "h-tensor", "curl", "divfree", "domin"];

/// Validation of random environments over every generator, dimension and
/// side; each structural residual must stay below `1e-12` relative to the
/// field magnitude.
pub fn criterion_1_structural_exactness(s: &Settings) -> anyhow::Result<CriterionReport> {
    let count = s.pick(100, 20);
    let conductances = [
        Distribution::Uniform { lo: 0.5, hi: 2.0 },
        Distribution::LogNormal { mu: 0.0, sigma: 1.0 },
        Distribution::TwoPoint { a: 1.0, b: 4.0, p: 0.5 },
    ];
    let streams = [
        Distribution::Gaussian { mean: 0.0, sigma: 1.0 },
        Distribution::Uniform { lo: -2.0, hi: 2.0 },
        Distribution::TwoPoint { a: -1.0, b: 3.0, p: 0.3 },
    ];
    let mut worst = vec![0.0f64; STRUCTURAL.len()];
    let mut failures = Vec::new();
    let mut per_generator = std::collections::BTreeMap::<&str, usize>::new();
    for i in 0..count {
        let d = 1 + i % 3;
        let side = [2, 4, 8][(i / 3) % 3];
        let gens: &[Generator] = if d == 1 {
            &[Generator::Homogeneous, Generator::ConductanceStream]
        } else {
            &[Generator::Homogeneous, Generator::ConductanceStream, Generator::TotallyAsymmetric]
        };
        let generator = gens[(i / 9) % gens.len()];
        let stream = if generator == Generator::TotallyAsymmetric {
            streams[i % 2].clone()
        } else {
            streams[(i / 2) % 3].clone()
        };
        let env = build(generator, d, side, split_seed(s.seed_for(1), i as u64), conductances[i % 3].clone(), stream)?;
        *per_generator.entry(generator.name()).or_default() += 1;
        let rep = env.validate();
        for c in &rep.checks {
            if let Some(j) = STRUCTURAL.iter().position(|n| *n == c.name) {
                // residual in units of the field magnitude
                let rel = c.max_residual * rwre_core::env::DEFAULT_REL_TOL / c.threshold;
                worst[j] = worst[j].max(rel);
                if !c.pass {
                    failures.push(json!({"env": i, "d": d, "L": side, "identity": c.name, "residual": c.max_residual}));
                }
            }
        }
    }
    let max = worst.iter().copied().fold(0.0, f64::max);
    let pass = failures.is_empty();
    let results = json!({
        "environments": count,
        "per_generator": per_generator,
        "worst_relative_residual": STRUCTURAL.iter().zip(&worst).map(|(n, w)| (n.to_string(), json!(w))).collect::<serde_json::Map<_, _>>(),
        "failures": failures,
    });
    Ok(report(1, s, Verdict::from_pass(pass), format!("{count} environments, worst relative residual {max:.1e}"), results))
}

/// Homogeneous walk: exact bounds and `E|X(T)|²/T = 4` within 3 SE.
pub fn criterion_2_homogeneous_calibration(s: &Settings) -> anyhow::Result<CriterionReport> {
    let env = Environment::homogeneous(Torus::new(2, 8)?, 1.0);
    let b = bounds(&env);
    let exact = b.lower_trace() == 4.0 && b.upper == 4.0;
    let t = s.pick(1000.0, 100.0);
    let replicas = s.pick(10_000, 1_000);
    let a = with_reruns(s.seed_for(2), |seed| {
        let xs = displacements(&env, &[t], replicas, seed, StartPolicy::Fixed(0))?;
        let v: Vec<f64> = xs.iter().map(|r| r[0].iter().map(|x| x * x).sum::<f64>() / t).collect();
        let est = Estimate::batch_means(&v);
        Ok((est.within_se(4.0, SE_BAND), json!({"estimate": est})))
    })?;
    let est: Estimate = serde_json::from_value(a.results["estimate"].clone())?;
    let verdict = if exact { a.verdict } else { Verdict::Fail };
    let results = json!({
        "T": t,
        "replicas": replicas,
        "lower_trace": b.lower_trace(),
        "upper": b.upper,
        "estimate": est,
        "attempts": a.passed,
        "seeds": a.seeds,
    });
    let summary = format!(
        "E|X|^2/T = {:.4} +- {:.4} (target 4), lower trace {}, upper {}",
        est.mean, est.se, b.lower_trace(), b.upper
    );
    Ok(report(2, s, verdict, summary, results))
}

/// One-dimensional two-point conductances: the corrector diffusivity equals
/// twice the harmonic mean, and the Monte Carlo slope agrees within 3 SE.
pub fn criterion_3_harmonic_mean_oracle(s: &Settings) -> anyhow::Result<CriterionReport> {
    let side = 16;
    let env = build(
        Generator::ConductanceStream,
        1,
        side,
        s.seed_for(3),
        Distribution::TwoPoint { a: 1.0, b: 4.0, p: 0.5 },
        Distribution::Constant { value: 0.0 },
    )?;
    let edges = env.conductances().edge_values(env.torus());
    let harmonic = edges.len() as f64 / edges.iter().map(|c| 1.0 / c).sum::<f64>();
    let target = 2.0 * harmonic;
    let sigma = diffusivity(&env)?.sigma[0];
    let oracle_ok = (sigma - target).abs() <= 1e-10;
    let times = dyadic_grid(s.pick(1000.0, 100.0), 4);
    let replicas = s.pick(10_000, 1_000);
    let a = with_reruns(split_seed(s.seed_for(3), 1), |seed| {
        let xs = displacements(&env, &times, replicas, seed, StartPolicy::Uniform)?;
        let (_, res, vs) = clt_verdict(&times, &xs, Some(target));
        Ok((vs.linear_slope.within_se(target, SE_BAND), res))
    })?;
    let slope: Estimate = serde_json::from_value(a.results["linear_slope"].clone())?;
    let verdict = if oracle_ok { a.verdict } else { Verdict::Fail };
    let results = json!({
        "L": side,
        "edges": edges,
        "harmonic_mean": harmonic,
        "target": target,
        "sigma": sigma,
        "oracle_gap": (sigma - target).abs(),
        "times": times,
        "replicas": replicas,
        "linear_slope": slope,
        "attempts": a.passed,
        "seeds": a.seeds,
    });
    let summary = format!(
        "sigma^2 = {sigma:.12} vs 2*harmonic mean {target:.12}, MC slope {:.4} +- {:.4}",
        slope.mean, slope.se
    );
    Ok(report(3, s, verdict, summary, results))
}

/// Bracket of the backward martingale against the lower matrix, and the
/// two orthogonality relations, on a stationary start.
pub fn criterion_4_backward_martingale(s: &Settings) -> anyhow::Result<CriterionReport> {
    let env = standard_stream_env(2, 8, s.seed_for(4))?;
    let fields = MartingaleFields::new(&env);
    let grid = s.pick(dyadic_grid(64.0, 5), dyadic_grid(16.0, 3));
    let replicas = s.pick(10_000, 1_000);
    let a = with_reruns(split_seed(s.seed_for(4), 1), |seed| {
        let rows = decompose_replicas(&env, &fields, &grid, replicas, seed, StartPolicy::Uniform)?;
        orthogonality_verdict(&rows, &fields.bounds.lower)
    })?;
    let zy: Estimate = serde_json::from_value(a.results["orthogonality"]["z_y"].clone())?;
    let zij: Estimate = serde_json::from_value(a.results["orthogonality"]["z_ij"].clone())?;
    let summary = format!(
        "bracket within 3 SE: {}, E[Z.Y] = {:.3} +- {:.3}, E[Z.(I+J)] = {:.3} +- {:.3}",
        a.results["bracket_within_3se"], zy.mean, zy.se, zij.mean, zij.se
    );
    let results = json!({
        "grid": grid,
        "replicas": replicas,
        "outcome": a.results,
        "attempts": a.passed,
        "seeds": a.seeds,
    });
    Ok(report(4, s, a.verdict, summary, results))
}

/// Skewness and contraction of `B`, and agreement of the spectral and
/// Krylov harmonic coordinates, on random environments with at most 256
/// sites.
pub fn criterion_5_operator_certification(s: &Settings) -> anyhow::Result<CriterionReport> {
    let count = s.pick(20, 5);
    let shapes = [(2, 4), (2, 8), (3, 4), (2, 16), (1, 64), (3, 6), (2, 6), (3, 5), (1, 256), (2, 10)];
    let mut envs = Vec::new();
    let mut pass = true;
    let (mut skew, mut sing, mut agree, mut resid) = (0.0f64, f64::INFINITY, 0.0f64, 0.0f64);
    for i in 0..count {
        let (d, side) = shapes[i % shapes.len()];
        let seed = split_seed(s.seed_for(5), i as u64);
        let asymmetric = i % 2 == 1 && d >= 2;
        let env = if asymmetric {
            build(Generator::TotallyAsymmetric, d, side, seed, Distribution::Constant { value: 1.0 }, Distribution::Gaussian { mean: 0.0, sigma: 1.0 })?
        } else if i % 2 == 1 {
            build(Generator::ConductanceStream, d, side, seed, Distribution::LogNormal { mu: 0.0, sigma: 0.5 }, Distribution::Constant { value: 0.0 })?
        } else {
            standard_stream_env(d, side, seed)?
        };
        let (ok, r) = spectral_verdict(&env)?;
        pass &= ok;
        let c = &r["certificate"];
        skew = skew.max(c["b_skew"].as_f64().unwrap_or(f64::NAN));
        sing = sing.min(c["min_singular"].as_f64().unwrap_or(f64::NAN));
        agree = agree.max(r["route_agreement"].as_f64().unwrap_or(f64::NAN));
        resid = resid
            .max(r["krylov_residual"].as_f64().unwrap_or(f64::NAN))
            .max(r["spectral_residual"].as_f64().unwrap_or(f64::NAN));
        envs.push(json!({
            "d": d,
            "L": side,
            "generator": if asymmetric { "totally-asymmetric" } else { "conductance-stream" },
            "pass": ok,
            "results": r,
        }));
    }
    let summary = format!(
        "{count} environments, max|B+B^T| {skew:.1e}, min sv(I+B) - 1 {:.1e}, route gap {agree:.1e}, residual {resid:.1e}",
        sing - 1.0
    );
    Ok(report(5, s, Verdict::from_pass(pass), summary, json!({ "environments": envs })))
}

/// Stream tensors rebuilt from their curls by both Poisson routes, and the
/// flux obstruction for constant drifts.
pub fn criterion_6_helmholtz_round_trip(s: &Settings) -> anyhow::Result<CriterionReport> {
    let count = s.pick(50, 10);
    let laws = [
        Distribution::Gaussian { mean: 0.0, sigma: 1.0 },
        Distribution::Uniform { lo: -3.0, hi: 1.0 },
        Distribution::TwoPoint { a: -2.0, b: 5.0, p: 0.4 },
    ];
    let mut worst = 0.0f64;
    let mut pass = true;
    for i in 0..count {
        let d = 2 + i % 2;
        let side = [2, 3, 4, 5, 6, 8][(i / 2) % 6];
        let t = Torus::new(d, side)?;
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed(s.seed_for(6), i as u64));
        let h0 = random_stream(&t, &laws[i % 3], &mut rng);
        let b = curl(&t, &h0);
        for method in [PoissonMethod::Spectral, PoissonMethod::ConjugateGradient] {
            let rec = stream_from_flow(&t, &b, method)?;
            let back = curl(&t, &rec.stream);
            let gap = back
                .as_slice()
                .iter()
                .zip(b.as_slice())
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            worst = worst.max(gap);
            pass &= gap <= HELMHOLTZ_TOL;
        }
    }
    let mut obstructions = Vec::new();
    for (d, axis, value) in [(2usize, 0usize, 0.75f64), (3, 1, -1.5)] {
        let t = Torus::new(d, 4)?;
        let edges: Vec<f64> = (0..t.num_sites())
            .flat_map(|_| (0..d).map(move |i| if i == axis { value } else { 0.0 }))
            .collect();
        let b = FlowField::from_edges(&t, &edges);
        let outcome = stream_from_flow(&t, &b, PoissonMethod::Spectral);
        let ok = matches!(outcome, Err(HelmholtzError::NonzeroFlux { direction, value: v }) if direction == axis && (v - value).abs() <= 1e-12);
        pass &= ok;
        obstructions.push(json!({
            "d": d,
            "axis": axis,
            "drift": value,
            "outcome": match &outcome { Ok(_) => "reconstructed".to_string(), Err(e) => e.to_string() },
            "pass": ok,
        }));
    }
    let summary = format!(
        "{count} stream tensors, worst curl gap {worst:.1e}, constant drift obstructed: {}",
        obstructions.iter().all(|o| o["pass"] == true)
    );
    let results = json!({
        "tensors": count,
        "worst_curl_gap": worst,
        "tolerance": HELMHOLTZ_TOL,
        "obstructions": obstructions,
    });
    Ok(report(6, s, Verdict::from_pass(pass), summary, results))
}

/// Diffusive scaling and Gaussian shape of the displacement in a quenched
/// two-dimensional environment.
pub fn criterion_7_clt_shape(s: &Settings) -> anyhow::Result<CriterionReport> {
    let env = standard_stream_env(2, 16, s.seed_for(7))?;
    let times: Vec<f64> = s.pick(vec![64.0, 128.0, 256.0, 512.0, 1024.0], vec![16.0, 32.0, 64.0, 128.0]);
    let replicas = s.pick(10_000, 1_000);
    let a = with_reruns(split_seed(s.seed_for(7), 1), |seed| {
        let xs = displacements(&env, &times, replicas, seed, StartPolicy::Uniform)?;
        let (ok, res, _) = clt_verdict(&times, &xs, None);
        Ok((ok, res))
    })?;
    let summary = format!(
        "log slope {:.4} in [0.95, 1.05], KS {:.4} < {:.4}, attempts {:?}",
        a.results["log_slope"].as_f64().unwrap_or(f64::NAN),
        a.results["ks"].as_f64().unwrap_or(f64::NAN),
        a.results["ks_threshold"].as_f64().unwrap_or(f64::NAN),
        a.passed
    );
    let results = json!({
        "L": 16,
        "replicas": replicas,
        "outcome": a.results,
        "attempts": a.passed,
        "seeds": a.seeds,
        "recommendation": a.recommendation,
    });
    Ok(report(7, s, a.verdict, summary, results))
}

/// Both pathwise decompositions on every replica of several environments.
pub fn criterion_8_path_identities(s: &Settings) -> anyhow::Result<CriterionReport> {
    let seed = s.seed_for(8);
    let envs = vec![
        ("homogeneous d=2", Environment::homogeneous(Torus::new(2, 4)?, 1.0)),
        ("conductance-stream d=1", build(Generator::ConductanceStream, 1, 16, split_seed(seed, 1), Distribution::TwoPoint { a: 1.0, b: 4.0, p: 0.5 }, Distribution::Constant { value: 0.0 })?),
        ("conductance-stream d=2", standard_stream_env(2, 8, split_seed(seed, 2))?),
        ("conductance-stream d=3", standard_stream_env(3, 4, split_seed(seed, 3))?),
        ("totally-asymmetric d=2", build(Generator::TotallyAsymmetric, 2, 4, split_seed(seed, 4), Distribution::Constant { value: 1.0 }, Distribution::Gaussian { mean: 0.0, sigma: 1.0 })?),
    ];
    let replicas = s.pick(2_000, 200);
    let grid = dyadic_grid(s.pick(128.0, 32.0), 5);
    let mut per_env = Vec::new();
    let mut worst = 0.0f64;
    let mut pass = true;
    for (i, (name, env)) in envs.iter().enumerate() {
        let fields = MartingaleFields::new(env);
        let rows = decompose_replicas(env, &fields, &grid, replicas, split_seed(seed, 100 + i as u64), StartPolicy::Uniform)?;
        let fwd = rows.iter().map(|r| r.paths.forward_residual).fold(0.0, f64::max);
        let bwd = rows.iter().map(|r| r.paths.backward_residual).fold(0.0, f64::max);
        let exact = rows.iter().all(|r| r.x_exact);
        worst = worst.max(fwd).max(bwd);
        pass &= fwd <= PATH_TOL && bwd <= PATH_TOL && exact;
        per_env.push(json!({"env": name, "forward": fwd, "backward": bwd, "x_exact": exact}));
    }
    let total = replicas * envs.len();
    let summary = format!("{total} replicas on {} environments, worst residual {worst:.1e}", envs.len());
    let results = json!({"replicas_per_env": replicas, "grid": grid, "environments": per_env, "tolerance": PATH_TOL});
    Ok(report(8, s, Verdict::from_pass(pass), summary, results))
}

fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Criteria 1 to 8 at reduced scale and the bundled experiment config, each
/// run on one and on four worker threads; the serialized reports must match
/// byte for byte.
pub fn criterion_9_determinism(s: &Settings) -> anyhow::Result<CriterionReport> {
    let mut rows = Vec::new();
    let mut pass = true;
    for c in CRITERIA.iter().filter(|c| c.id != 9) {
        let texts: Vec<String> = [1, 4]
            .iter()
            .map(|&n| {
                let r = run_criterion(c, &Settings::quick(Some(n)));
                serde_json::to_string(&r.report).expect("criterion report serializes")
            })
            .collect();
        let same = texts[0] == texts[1];
        pass &= same;
        rows.push(json!({"criterion": c.id, "identical": same, "sha256": digest(&texts[0])}));
    }
    let cfg = ExperimentConfig::from_json(SMOKE_CONFIG)?;
    let texts: Vec<String> = [1, 4]
        .iter()
        .map(|&n| {
            run(&cfg, &RunOptions { threads: Some(n), out: None }).map(|o| o.report.to_json())
        })
        .collect::<anyhow::Result<_>>()?;
    let same = texts[0] == texts[1];
    pass &= same;
    rows.push(json!({"config": "smoke.json", "identical": same, "sha256": digest(&texts[0])}));
    let identical = rows.iter().filter(|r| r["identical"] == true).count();
    let summary = format!("{identical}/{} reports byte-identical across 1 and 4 threads", rows.len());
    Ok(report(9, s, Verdict::from_pass(pass), summary, json!({ "reports": rows })))
}
