//! Drift fields, martingale decompositions and the explicit diffusive bounds.
//!
//! Along a trajectory the displacement splits as `X = M + I + J` with
//! `I = ∫φ(η_s)ds`, `J = ∫ψ(η_s)ds`, and as `X = Z + Y + I + J` where `Z`
//! reweights every jump `ξ` by `s̄_ξ / s_ξ` and is compensated by `∫α(η_s)ds`.
//! Time integrals of site fields are exact sums over holding intervals.

use crate::env::Environment;
use crate::lattice::Dir;
use crate::stats::{self, Estimate};
use crate::walker::Trajectory;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum MartError {
    #[error("need at least {need} replicas, got {got}")]
    InsufficientReplicas { got: usize, need: usize },
    #[error("jump across zero-conductance edge at site {site}, direction {k}")]
    ZeroConductanceCrossing { site: usize, k: Dir },
    #[error("invalid time grid: {0}")]
    BadGrid(String),
}

/// Minimum number of replicas for [`orthogonality_tests`].
pub const MIN_REPLICAS: usize = 1000;

/// `φ` and `ψ`, stored as `x * d + i`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriftFields {
    pub dim: usize,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl DriftFields {
    pub fn phi_at(&self, x: usize) -> &[f64] {
        &self.phi[x * self.dim..(x + 1) * self.dim]
    }

    pub fn psi_at(&self, x: usize) -> &[f64] {
        &self.psi[x * self.dim..(x + 1) * self.dim]
    }

    /// `φ_i + ψ_i` as a lattice function.
    pub fn total_component(&self, i: usize) -> Vec<f64> {
        self.phi
            .iter()
            .zip(&self.psi)
            .skip(i)
            .step_by(self.dim)
            .map(|(a, b)| a + b)
            .collect()
    }

    pub fn phi_component(&self, i: usize) -> Vec<f64> {
        self.phi.iter().skip(i).step_by(self.dim).copied().collect()
    }

    /// Site averages of `φ` and `ψ`.
    pub fn means(&self) -> (Vec<f64>, Vec<f64>) {
        (site_mean(&self.phi, self.dim), site_mean(&self.psi, self.dim))
    }
}

fn site_mean(v: &[f64], dim: usize) -> Vec<f64> {
    let n = (v.len() / dim) as f64;
    (0..dim)
        .map(|i| v.iter().skip(i).step_by(dim).sum::<f64>() / n)
        .collect()
}

/// `φ_i(x) = s_{e_i}(x) − s_{e_i}(x−e_i)`, `ψ_i(x) = b_{e_i}(x) + b_{e_i}(x−e_i)`.
pub fn drift_fields(env: &Environment) -> DriftFields {
    let t = env.torus();
    let d = t.dim();
    let mut phi = vec![0.0; t.num_sites() * d];
    let mut psi = vec![0.0; t.num_sites() * d];
    for x in 0..t.num_sites() {
        for i in 0..d {
            let e = Dir::positive(i);
            let back = t.shift(x, i, -1);
            phi[x * d + i] = env.s(x, e) - env.s(back, e);
            psi[x * d + i] = env.b(x, e) + env.b(back, e);
        }
    }
    DriftFields { dim: d, phi, psi }
}

/// `φ = Σ_k k s_k`, `ψ = Σ_k k b_k`, summed over all `2d` directions.
pub fn drift_fields_direct(env: &Environment) -> DriftFields {
    let t = env.torus();
    let d = t.dim();
    let mut phi = vec![0.0; t.num_sites() * d];
    let mut psi = vec![0.0; t.num_sites() * d];
    for x in 0..t.num_sites() {
        for k in t.dirs() {
            let sign = k.sign() as f64;
            phi[x * d + k.axis()] += sign * env.s(x, k);
            psi[x * d + k.axis()] += sign * env.b(x, k);
        }
    }
    DriftFields { dim: d, phi, psi }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusivityBounds {
    /// Harmonic mean of `s_k` over sites, per direction index.
    pub s_bar: Vec<f64>,
    /// Arithmetic mean of `s_k` over sites, per direction index.
    pub s_avg: Vec<f64>,
    /// `Σ_k s̄_k k∧k`, row-major `d × d`.
    pub lower: Vec<f64>,
    /// `Σ_k avg(s_k)`.
    pub upper: f64,
}

impl DiffusivityBounds {
    pub fn dim(&self) -> usize {
        self.s_bar.len() / 2
    }

    pub fn lower_trace(&self) -> f64 {
        let d = self.dim();
        (0..d).map(|i| self.lower[i * d + i]).sum()
    }
}

pub fn bounds(env: &Environment) -> DiffusivityBounds {
    let t = env.torus();
    let d = t.dim();
    let n = t.num_sites() as f64;
    let mut s_bar = vec![0.0; 2 * d];
    let mut s_avg = vec![0.0; 2 * d];
    for k in t.dirs() {
        let mut inv = 0.0;
        let mut sum = 0.0;
        for x in 0..t.num_sites() {
            let s = env.s(x, k);
            sum += s;
            inv += if s > 0.0 { 1.0 / s } else { f64::INFINITY };
        }
        s_bar[k.index()] = if inv.is_finite() { n / inv } else { 0.0 };
        s_avg[k.index()] = sum / n;
    }
    let mut lower = vec![0.0; d * d];
    for k in t.dirs() {
        lower[k.axis() * d + k.axis()] += s_bar[k.index()];
    }
    DiffusivityBounds {
        upper: s_avg.iter().sum(),
        s_bar,
        s_avg,
        lower,
    }
}

/// Site fields needed to evaluate every decomposition along a path.
#[derive(Clone, Debug)]
pub struct MartingaleFields {
    pub dim: usize,
    pub dirs: usize,
    pub drift: DriftFields,
    pub bounds: DiffusivityBounds,
    /// `α(x) = Σ_k s̄_k b_k(x) s_k(x)^{−1} k`, stored as `x * d + i`.
    pub alpha: Vec<f64>,
    /// `s̄_k / s_k(x)` at `x * 2d + k`; `+∞` on zero-conductance edges.
    pub weight: Vec<f64>,
}

impl MartingaleFields {
    pub fn new(env: &Environment) -> Self {
        let t = env.torus();
        let d = t.dim();
        let dirs = t.num_dirs();
        let bounds = bounds(env);
        let mut alpha = vec![0.0; t.num_sites() * d];
        let mut weight = vec![0.0; t.num_sites() * dirs];
        for x in 0..t.num_sites() {
            for k in t.dirs() {
                let s = env.s(x, k);
                let sb = bounds.s_bar[k.index()];
                weight[x * dirs + k.index()] = if s > 0.0 { sb / s } else { f64::INFINITY };
                let b = env.b(x, k);
                if b != 0.0 && s > 0.0 {
                    alpha[x * d + k.axis()] += k.sign() as f64 * sb * b / s;
                }
            }
        }
        MartingaleFields {
            dim: d,
            dirs,
            drift: drift_fields(env),
            bounds,
            alpha,
            weight,
        }
    }

    /// `β = φ + ψ − α`.
    pub fn beta(&self) -> Vec<f64> {
        self.drift
            .phi
            .iter()
            .zip(&self.drift.psi)
            .zip(&self.alpha)
            .map(|((p, q), a)| p + q - a)
            .collect()
    }

    /// Site averages of `α` and `β`.
    pub fn compensator_means(&self) -> (Vec<f64>, Vec<f64>) {
        (site_mean(&self.alpha, self.dim), site_mean(&self.beta(), self.dim))
    }
}

/// Site averages of the bracket densities `Φ` and `Ψ`, each row-major `d × d`.
pub fn bracket_averages(env: &Environment, bounds: &DiffusivityBounds) -> (Vec<f64>, Vec<f64>) {
    let t = env.torus();
    let d = t.dim();
    let n = t.num_sites() as f64;
    let mut phi = vec![0.0; d * d];
    let mut psi = vec![0.0; d * d];
    for x in 0..t.num_sites() {
        for k in t.dirs() {
            let s = env.s(x, k);
            let b = env.b(x, k);
            let sb = bounds.s_bar[k.index()];
            let a = k.axis() * d + k.axis();
            phi[a] += sb * (sb / s + sb * b / (s * s));
            psi[a] += sb * (1.0 + b / s) * (1.0 - sb / s);
        }
    }
    phi.iter_mut().chain(psi.iter_mut()).for_each(|v| *v /= n);
    (phi, psi)
}

/// Values of every process at one sample time. `z` and `y` are empty for a
/// forward-only decomposition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub m: Vec<f64>,
    pub i: Vec<f64>,
    pub j: Vec<f64>,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecompositionPaths {
    pub samples: Vec<PathSample>,
    /// Largest `|M + I + J − X|` over grid and jump times.
    pub forward_residual: f64,
    /// Largest `|Z + Y + I + J − X|` over grid and jump times (0 if forward only).
    pub backward_residual: f64,
}

impl DecompositionPaths {
    pub fn max_residual(&self) -> f64 {
        self.forward_residual.max(self.backward_residual)
    }
}

/// Dyadic grid `{T/2^(levels−1), …, T/2, T}`.
pub fn dyadic_grid(horizon: f64, levels: usize) -> Vec<f64> {
    (0..levels)
        .rev()
        .map(|p| horizon / f64::powi(2.0, p as i32))
        .collect()
}

fn check_grid(grid: &[f64], horizon: f64) -> Result<(), MartError> {
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MartError::BadGrid("times must be strictly increasing".into()));
    }
    if grid.iter().any(|&g| !(0.0..=horizon).contains(&g)) {
        return Err(MartError::BadGrid(format!("times must lie in [0, {horizon}]")));
    }
    Ok(())
}

struct Accum {
    x: Vec<f64>,
    i: Vec<f64>,
    j: Vec<f64>,
    zj: Vec<f64>,
    za: Vec<f64>,
}

impl Accum {
    fn integrate(&mut self, f: &MartingaleFields, site: usize, dt: f64, backward: bool) {
        let d = f.dim;
        for a in 0..d {
            self.i[a] += f.drift.phi[site * d + a] * dt;
            self.j[a] += f.drift.psi[site * d + a] * dt;
            if backward {
                self.za[a] += f.alpha[site * d + a] * dt;
            }
        }
    }

    fn sample(&self, t: f64, f: &MartingaleFields, part: Option<(usize, f64)>, backward: bool) -> (PathSample, f64, f64) {
        let d = f.dim;
        let (mut i, mut j, mut za) = (self.i.clone(), self.j.clone(), self.za.clone());
        if let Some((site, dt)) = part {
            for a in 0..d {
                i[a] += f.drift.phi[site * d + a] * dt;
                j[a] += f.drift.psi[site * d + a] * dt;
                za[a] += f.alpha[site * d + a] * dt;
            }
        }
        let m: Vec<f64> = (0..d).map(|a| self.x[a] - i[a] - j[a]).collect();
        let fwd = (0..d)
            .map(|a| (m[a] + i[a] + j[a] - self.x[a]).abs())
            .fold(0.0, f64::max);
        let (z, y, bwd) = if backward {
            let z: Vec<f64> = (0..d).map(|a| self.zj[a] - za[a]).collect();
            let y: Vec<f64> = (0..d).map(|a| self.x[a] - i[a] - j[a] - z[a]).collect();
            let bwd = (0..d)
                .map(|a| (z[a] + y[a] + i[a] + j[a] - self.x[a]).abs())
                .fold(0.0, f64::max);
            (z, y, bwd)
        } else {
            (Vec::new(), Vec::new(), 0.0)
        };
        let s = PathSample {
            t,
            x: self.x.clone(),
            m,
            i,
            j,
            z,
            y,
        };
        (s, fwd, bwd)
    }
}

fn decompose(
    traj: &Trajectory,
    f: &MartingaleFields,
    grid: &[f64],
    backward: bool,
) -> Result<DecompositionPaths, MartError> {
    check_grid(grid, traj.horizon)?;
    let d = f.dim;
    let mut acc = Accum {
        x: vec![0.0; d],
        i: vec![0.0; d],
        j: vec![0.0; d],
        zj: vec![0.0; d],
        za: vec![0.0; d],
    };
    let mut samples = Vec::with_capacity(grid.len());
    let mut fwd_res = 0.0f64;
    let mut bwd_res = 0.0f64;
    let mut g = 0;
    let n_jumps = traj.num_jumps();
    for (idx, (site, from, to)) in traj.holding_intervals().enumerate() {
        let last = idx == n_jumps;
        while g < grid.len() && (grid[g] < to || last) {
            let (s, r1, r2) = acc.sample(grid[g], f, Some((site, grid[g] - from)), backward);
            fwd_res = fwd_res.max(r1);
            bwd_res = bwd_res.max(r2);
            samples.push(s);
            g += 1;
        }
        if last {
            break;
        }
        acc.integrate(f, site, to - from, backward);
        let k = traj.dirs[idx];
        acc.x[k.axis()] += k.sign() as f64;
        if backward {
            let w = f.weight[site * f.dirs + k.index()];
            if !w.is_finite() {
                return Err(MartError::ZeroConductanceCrossing { site, k });
            }
            acc.zj[k.axis()] += k.sign() as f64 * w;
        }
        let (_, r1, r2) = acc.sample(to, f, None, backward);
        fwd_res = fwd_res.max(r1);
        bwd_res = bwd_res.max(r2);
    }
    Ok(DecompositionPaths {
        samples,
        forward_residual: fwd_res,
        backward_residual: bwd_res,
    })
}

/// `X = M + I + J` sampled on `grid`.
pub fn decompose_forward(traj: &Trajectory, fields: &MartingaleFields, grid: &[f64]) -> Result<DecompositionPaths, MartError> {
    decompose(traj, fields, grid, false)
}

/// `X = Z + Y + I + J` (and the forward parts) sampled on `grid`.
pub fn decompose_backward(traj: &Trajectory, fields: &MartingaleFields, grid: &[f64]) -> Result<DecompositionPaths, MartError> {
    decompose(traj, fields, grid, true)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrthogonalityReport {
    pub t1: f64,
    pub t2: f64,
    /// `E[Z(t₁)·Y(t₂)]`.
    pub z_y: Estimate,
    /// `E[Z(t₁)·(I(t₂) + J(t₂))]`.
    pub z_ij: Estimate,
    pub pass: bool,
}

/// Correlations that vanish for a forward-and-backward martingale `Z`.
/// Grid indices `i1`, `i2` select `t₁`, `t₂`.
pub fn orthogonality_tests(paths: &[DecompositionPaths], i1: usize, i2: usize) -> Result<OrthogonalityReport, MartError> {
    if paths.len() < MIN_REPLICAS {
        return Err(MartError::InsufficientReplicas {
            got: paths.len(),
            need: MIN_REPLICAS,
        });
    }
    let len = paths.iter().map(|p| p.samples.len()).min().unwrap_or(0);
    if i1 > i2 || i2 >= len {
        return Err(MartError::BadGrid(format!("sample indices {i1}, {i2} outside 0..{len}")));
    }
    let mut zy = Vec::with_capacity(paths.len());
    let mut zij = Vec::with_capacity(paths.len());
    for p in paths {
        let a = &p.samples[i1];
        let b = &p.samples[i2];
        if a.z.is_empty() {
            return Err(MartError::BadGrid("backward decomposition required".into()));
        }
        zy.push(dot(&a.z, &b.y));
        let ij: Vec<f64> = b.i.iter().zip(&b.j).map(|(x, y)| x + y).collect();
        zij.push(dot(&a.z, &ij));
    }
    let z_y = Estimate::batch_means(&zy);
    let z_ij = Estimate::batch_means(&zij);
    Ok(OrthogonalityReport {
        t1: paths[0].samples[i1].t,
        t2: paths[0].samples[i2].t,
        pass: z_y.contains(0.0) && z_ij.contains(0.0),
        z_y,
        z_ij,
    })
}

/// Per-entry estimates of `E[Z(t)_a Z(t)_b] / t`, row-major `d × d`.
pub fn bracket_estimates(paths: &[DecompositionPaths], idx: usize) -> Vec<Estimate> {
    let d = paths[0].samples[idx].z.len();
    let t = paths[0].samples[idx].t;
    let mut out = Vec::with_capacity(d * d);
    for a in 0..d {
        for b in 0..d {
            let v: Vec<f64> = paths
                .iter()
                .map(|p| p.samples[idx].z[a] * p.samples[idx].z[b] / t)
                .collect();
            out.push(Estimate::batch_means(&v));
        }
    }
    out
}

/// Second-moment growth of the displacement across sample times.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarianceScaling {
    pub times: Vec<f64>,
    /// `E|X(t)|²` per sample time.
    pub mean_sq: Vec<Estimate>,
    /// Slope of `log E|X(t)|²` against `log t`.
    pub log_slope: f64,
    /// Least-squares slope of `E|X(t)|²` against `t`, estimated per replica
    /// and averaged.
    pub linear_slope: Estimate,
    /// `E(e·X(T))² / T` per coordinate at the last time.
    pub directional: Vec<Estimate>,
}

/// `xs[r][g]` is the displacement of replica `r` at `times[g]`.
pub fn variance_scaling(times: &[f64], xs: &[Vec<Vec<f64>>]) -> VarianceScaling {
    let sq = |x: &Vec<f64>| x.iter().map(|v| v * v).sum::<f64>();
    let mean_sq: Vec<Estimate> = (0..times.len())
        .map(|g| Estimate::batch_means(&xs.iter().map(|r| sq(&r[g])).collect::<Vec<_>>()))
        .collect();
    let lt: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let lv: Vec<f64> = mean_sq.iter().map(|e| e.mean.ln()).collect();
    let (log_slope, _) = stats::linear_fit(&lt, &lv);

    let tm = stats::mean(times);
    let sxx: f64 = times.iter().map(|t| (t - tm) * (t - tm)).sum();
    let per_replica: Vec<f64> = xs
        .iter()
        .map(|r| {
            times
                .iter()
                .zip(r)
                .map(|(t, x)| (t - tm) * sq(x))
                .sum::<f64>()
                / sxx
        })
        .collect();
    let last = times.len() - 1;
    let d = xs.first().map_or(0, |r| r[last].len());
    let directional = (0..d)
        .map(|a| {
            Estimate::batch_means(
                &xs.iter()
                    .map(|r| r[last][a] * r[last][a] / times[last])
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    VarianceScaling {
        times: times.to_vec(),
        mean_sq,
        log_slope,
        linear_slope: Estimate::batch_means(&per_replica),
        directional,
    }
}

/// Largest KS distance, over coordinates, of `X(t)/√t` against a centered
/// Gaussian with the sample second moment.
pub fn ks_normality(t: f64, xs: &[Vec<f64>]) -> f64 {
    let d = xs.first().map_or(0, Vec::len);
    (0..d)
        .map(|a| {
            let v: Vec<f64> = xs.iter().map(|x| x[a] / t.sqrt()).collect();
            stats::ks_centered_normal(&v)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ConductanceField, FlowField};
    use crate::lattice::Torus;
    use crate::walker::simulate;

    #[test]
    fn homogeneous_fields_vanish() {
        let env = Environment::homogeneous(Torus::new(2, 4).unwrap(), 1.0);
        let f = MartingaleFields::new(&env);
        assert!(f.drift.phi.iter().chain(&f.drift.psi).chain(&f.alpha).all(|&v| v == 0.0));
        let b = &f.bounds;
        assert_eq!(b.lower, vec![2.0, 0.0, 0.0, 2.0]);
        assert_eq!(b.upper, 4.0);
    }

    #[test]
    fn two_valued_conductances_give_harmonic_mean() {
        let t = Torus::new(1, 4).unwrap();
        let s = ConductanceField::from_edges(&t, &[1.0, 4.0, 1.0, 4.0]);
        let env = Environment::from_parts(t.clone(), s, FlowField::zero(&t), None);
        let b = bounds(&env);
        // 1 / ((1 + 1/4)/2) = 1.6
        assert!((b.s_bar[0] - 1.6).abs() < 1e-15);
        assert!((b.lower[0] - 3.2).abs() < 1e-15);
        assert!((b.upper - 5.0).abs() < 1e-15);
    }

    #[test]
    fn homogeneous_decomposition_is_trivial() {
        let env = Environment::homogeneous(Torus::new(2, 4).unwrap(), 1.0);
        let f = MartingaleFields::new(&env);
        let tr = simulate(&env, 0, 16.0, 3).unwrap();
        let grid = dyadic_grid(16.0, 5);
        let p = decompose_backward(&tr, &f, &grid).unwrap();
        for s in &p.samples {
            assert_eq!(s.m, s.x);
            assert_eq!(s.z, s.x);
            assert!(s.y.iter().all(|&v| v == 0.0));
        }
        assert_eq!(p.samples.last().unwrap().x, tr.displacement.iter().map(|&v| v as f64).collect::<Vec<_>>());
    }

    #[test]
    fn grid_must_increase() {
        let env = Environment::homogeneous(Torus::new(1, 2).unwrap(), 1.0);
        let f = MartingaleFields::new(&env);
        let tr = simulate(&env, 0, 4.0, 0).unwrap();
        assert!(matches!(decompose_forward(&tr, &f, &[2.0, 1.0]), Err(MartError::BadGrid(_))));
        assert!(matches!(decompose_forward(&tr, &f, &[5.0]), Err(MartError::BadGrid(_))));
    }

    #[test]
    fn orthogonality_needs_replicas() {
        let err = orthogonality_tests(&[], 0, 0).unwrap_err();
        assert_eq!(err, MartError::InsufficientReplicas { got: 0, need: MIN_REPLICAS });
    }

    #[test]
    fn dyadic_grid_layout() {
        assert_eq!(dyadic_grid(16.0, 5), vec![1.0, 2.0, 4.0, 8.0, 16.0]);
    }
}
