//! Event-driven simulation of the quenched walk and its environment process.

use crate::env::{Environment, RateField};
use crate::krylov::{gmres, GmresOptions};
use crate::lattice::{Dir, Torus};
use crate::rng::split_seed;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::VecDeque;
use std::io::{self, Write};

/// Above this many sites the stationary density is computed iteratively.
pub const DENSE_CAP: usize = 4096;

/// Relative residual accepted for the stationary-density equation.
pub const STATIONARY_TOL: f64 = 1e-10;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum WalkError {
    #[error("site {0} has zero total jump rate")]
    AbsorbingState(usize),
    #[error("horizon must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("rate graph is not strongly connected ({reached} of {sites} sites mutually reachable from site 0)")]
    Reducible { reached: usize, sites: usize },
    #[error("density does not solve the stationarity equation: residual {0:e}")]
    NotStationary(f64),
    #[error("stationary density solve failed: {0}")]
    Solver(String),
}

/// One quenched walk on `[0, T]`.
///
/// Jump `i` (1-based in the usual notation) is stored at index `i − 1` of
/// `times` and `dirs`; `sites[i]` is the wrapped position after it, with
/// `sites[0]` the start.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub start: usize,
    pub horizon: f64,
    pub seed: u64,
    pub times: Vec<f64>,
    pub dirs: Vec<Dir>,
    pub sites: Vec<usize>,
    pub displacement: Vec<i64>,
}

impl Trajectory {
    pub fn num_jumps(&self) -> usize {
        self.times.len()
    }

    pub fn final_site(&self) -> usize {
        *self.sites.last().expect("start site")
    }

    /// Number of jumps with `θ_i ≤ t`.
    pub fn jumps_until(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t)
    }

    pub fn site_at(&self, t: f64) -> usize {
        self.sites[self.jumps_until(t)]
    }

    /// Unwrapped `X(t) − X(0)`.
    pub fn displacement_at(&self, t: f64, dim: usize) -> Vec<i64> {
        let mut x = vec![0i64; dim];
        for k in &self.dirs[..self.jumps_until(t)] {
            x[k.axis()] += k.sign();
        }
        x
    }

    /// Holding intervals `(site, from, to)` covering `[0, T]`.
    pub fn holding_intervals(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        (0..=self.times.len()).map(move |i| {
            let from = if i == 0 { 0.0 } else { self.times[i - 1] };
            let to = self.times.get(i).copied().unwrap_or(self.horizon);
            (self.sites[i], from, to)
        })
    }

    /// Completed holding times scaled by the total rate of the site left.
    /// The final, censored interval is excluded.
    pub fn normalized_holding_times(&self, env: &Environment) -> Vec<f64> {
        self.holding_intervals()
            .take(self.times.len())
            .map(|(x, a, b)| (b - a) * env.total_rate(x))
            .collect()
    }

    /// Writes one `{"t": θ_i, "k": ±axis}` JSON record per jump.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        #[derive(Serialize)]
        struct Rec {
            t: f64,
            k: i32,
        }
        for (t, k) in self.times.iter().zip(&self.dirs) {
            let line = serde_json::to_string(&Rec { t: *t, k: k.label() })?;
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Simulates the walk in `env` from `x0` up to time `horizon`.
pub fn simulate(env: &Environment, x0: usize, horizon: f64, seed: u64) -> Result<Trajectory, WalkError> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(WalkError::InvalidHorizon(horizon));
    }
    let torus = env.torus();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut traj = Trajectory {
        start: x0,
        horizon,
        seed,
        times: Vec::new(),
        dirs: Vec::new(),
        sites: vec![x0],
        displacement: vec![0; torus.dim()],
    };
    let mut x = x0;
    let mut t = 0.0;
    loop {
        let total = env.total_rate(x);
        if total <= 0.0 {
            return Err(WalkError::AbsorbingState(x));
        }
        let hold: f64 = rng.sample::<f64, _>(Exp1) / total;
        t += hold;
        if t > horizon {
            break;
        }
        let k = pick_direction(env.rates_at(x), rng.random::<f64>() * total);
        x = torus.neighbor(x, k);
        traj.times.push(t);
        traj.dirs.push(k);
        traj.sites.push(x);
        traj.displacement[k.axis()] += k.sign();
    }
    Ok(traj)
}

fn pick_direction(rates: &[f64], u: f64) -> Dir {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in rates.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return Dir(i as u8);
            }
        }
    }
    Dir(last as u8)
}

/// The environment as seen from the walker: `(time, site)` at `t = 0` and
/// after every jump.
pub fn environment_view(traj: &Trajectory) -> Vec<(f64, usize)> {
    std::iter::once(0.0)
        .chain(traj.times.iter().copied())
        .zip(traj.sites.iter().copied())
        .collect()
}

/// Time spent at each site during `[0, T]`.
pub fn occupation(traj: &Trajectory, num_sites: usize) -> Vec<f64> {
    let mut occ = vec![0.0; num_sites];
    for (x, a, b) in traj.holding_intervals() {
        occ[x] += b - a;
    }
    occ
}

/// How replicas choose their starting site.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "site")]
pub enum StartPolicy {
    Fixed(usize),
    Uniform,
}

impl StartPolicy {
    pub fn site(self, replica_seed: u64, num_sites: usize) -> usize {
        match self {
            StartPolicy::Fixed(x) => x,
            StartPolicy::Uniform => (split_seed(replica_seed, u64::MAX) % num_sites as u64) as usize,
        }
    }
}

/// Runs `f(index, seed)` for `count` replicas and returns results in index
/// order. Seeds are split from `master`; the result does not depend on the
/// number of threads.
pub fn run_replicas<R, F>(count: usize, master: u64, threads: Option<usize>, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize, u64) -> R + Sync + Send,
{
    let job = || {
        (0..count)
            .into_par_iter()
            .map(|i| f(i, split_seed(master, i as u64)))
            .collect()
    };
    match threads {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(job),
        _ => job(),
    }
}

/// Per-replica summary row: `seed, T, X_1..X_d, n_jumps`.
pub fn write_summary_csv<W: Write>(mut w: W, dim: usize, rows: &[Trajectory]) -> io::Result<()> {
    let cols: Vec<String> = (1..=dim).map(|i| format!("X_{i}")).collect();
    writeln!(w, "seed,T,{},n_jumps", cols.join(","))?;
    for tr in rows {
        let xs: Vec<String> = tr.displacement.iter().map(i64::to_string).collect();
        writeln!(w, "{},{},{},{}", tr.seed, tr.horizon, xs.join(","), tr.num_jumps())?;
    }
    Ok(())
}

/// Site weights `ρ`, normalized so that `Σ_x ρ(x) = L^d`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityField {
    pub rho: Vec<f64>,
}

/// `max_x |Σ_k ρ(x+k) p_{−k}(x+k) − ρ(x) Σ_k p_k(x)|` relative to the largest
/// term.
pub fn stationarity_residual(torus: &Torus, rates: &RateField, rho: &[f64]) -> f64 {
    let dirs = torus.num_dirs();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for x in 0..torus.num_sites() {
        let out = rho[x] * rates.total_out(dirs, x);
        let inflow: f64 = torus
            .dirs()
            .map(|k| {
                let y = torus.neighbor(x, k);
                rho[y] * rates.get(dirs, y, k.opposite())
            })
            .sum();
        worst = worst.max((inflow - out).abs());
        scale = scale.max(out.abs()).max(inflow.abs());
    }
    if scale > 0.0 {
        worst / scale
    } else {
        worst
    }
}

fn strongly_connected(torus: &Torus, rates: &RateField) -> usize {
    let n = torus.num_sites();
    let dirs = torus.num_dirs();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(x) = queue.pop_front() {
            for k in torus.dirs() {
                let y = torus.neighbor(x, k);
                let rate = if forward {
                    rates.get(dirs, x, k)
                } else {
                    rates.get(dirs, y, k.opposite())
                };
                if rate > 0.0 && !seen[y] {
                    seen[y] = true;
                    queue.push_back(y);
                }
            }
        }
        seen
    };
    let fwd = reach(true);
    let bwd = reach(false);
    fwd.iter().zip(&bwd).filter(|(a, b)| **a && **b).count()
}

/// Solves `Σ_k ρ(x+k) p_{−k}(x+k) = ρ(x) Σ_k p_k(x)` for arbitrary rates.
///
/// The singular system `Gᵀρ = 0` is made regular by adding `11ᵀ/n`; the
/// stationary density is its unique solution with right-hand side `1`.
pub fn solve_stationary_density(torus: &Torus, rates: &RateField) -> Result<DensityField, WalkError> {
    let n = torus.num_sites();
    let dirs = torus.num_dirs();
    let reached = strongly_connected(torus, rates);
    if reached != n {
        return Err(WalkError::Reducible { reached, sites: n });
    }
    // (Gᵀρ)(x) = Σ_k ρ(x+k) p_{−k}(x+k) − ρ(x) Σ_k p_k(x)
    let apply = |rho: &[f64], out: &mut [f64]| {
        let total: f64 = rho.iter().sum::<f64>() / n as f64;
        for x in 0..n {
            let mut acc = -rho[x] * rates.total_out(dirs, x);
            for k in torus.dirs() {
                let y = torus.neighbor(x, k);
                acc += rho[y] * rates.get(dirs, y, k.opposite());
            }
            out[x] = acc + total;
        }
    };
    let mut rho = if n <= DENSE_CAP {
        let mut m = DMatrix::from_element(n, n, 1.0 / n as f64);
        for x in 0..n {
            m[(x, x)] -= rates.total_out(dirs, x);
            for k in torus.dirs() {
                let y = torus.neighbor(x, k);
                m[(x, y)] += rates.get(dirs, y, k.opposite());
            }
        }
        let sol = m
            .lu()
            .solve(&DVector::from_element(n, 1.0))
            .ok_or_else(|| WalkError::Solver("singular deflated generator".into()))?;
        sol.as_slice().to_vec()
    } else {
        let diag: Vec<f64> = (0..n)
            .map(|x| 1.0 / (1.0 / n as f64 - rates.total_out(dirs, x)))
            .collect();
        let opts = GmresOptions {
            restart: 60,
            rel_tol: 1e-13,
            max_iter: 20 * n,
        };
        let out = gmres(apply, Some(&diag), &vec![1.0; n], Some(&vec![1.0; n]), &opts);
        if !out.converged {
            return Err(WalkError::Solver(format!(
                "GMRES stopped after {} iterations at residual {:e}",
                out.iterations, out.rel_residual
            )));
        }
        out.x
    };
    let sum: f64 = rho.iter().sum();
    rho.iter_mut().for_each(|r| *r *= n as f64 / sum);
    if rho.iter().any(|&r| r <= 0.0) {
        return Err(WalkError::Solver("non-positive density component".into()));
    }
    let residual = stationarity_residual(torus, rates, &rho);
    if residual > STATIONARY_TOL {
        return Err(WalkError::NotStationary(residual));
    }
    Ok(DensityField { rho })
}

/// Rates `p̃_k(x) = ρ(x) p_k(x)`, which are bistochastic when `ρ` is
/// stationary for `p`.
pub fn reweight_rates(torus: &Torus, rates: &RateField, density: &DensityField) -> Result<Environment, WalkError> {
    let residual = stationarity_residual(torus, rates, &density.rho);
    if residual > STATIONARY_TOL {
        return Err(WalkError::NotStationary(residual));
    }
    let dirs = torus.num_dirs();
    let tilde = RateField::from_fn(torus, |x, k| density.rho[x] * rates.get(dirs, x, k));
    Ok(Environment::from_rates(torus.clone(), &tilde))
}
