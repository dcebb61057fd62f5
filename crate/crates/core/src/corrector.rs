//! Finite-volume operators, their spectral certification, and harmonic
//! coordinates.
//!
//! Edge fields in `V` are stored on positive directions only, at index
//! `x * d + i` for `u_{e_i}(x)`; the negative directions follow from
//! `u_{−k}(x+k) = −u_k(x)`. With this layout the inner product
//! `½ Σ_k Σ_x u_k v_k` is the plain Euclidean one, and `∇ᵀ` is the true
//! adjoint of the forward-difference gradient, so `S = ∇ᵀR²∇ ⪰ 0` and the
//! generator is `L = −S + A`.

use crate::env::{curl, ConductanceField, EnvError, Environment, StreamTensor};
use crate::krylov::{gmres, GmresOptions};
use crate::lattice::{Dir, Torus};
use crate::mart::{bounds, drift_fields, DiffusivityBounds};
use crate::sparse::CsrMatrix;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::VecDeque;
use std::io::{self, Write};

/// Largest torus for which dense spectral factors are built.
pub const DEFAULT_DENSE_CAP: usize = 4096;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum CorrectorError {
    #[error("S is not positive definite on mean-zero functions: conductance graph has {components} components")]
    NotPositiveDefinite { components: usize },
    #[error("dense factors requested for {sites} sites, cap is {cap}")]
    DenseCapExceeded { sites: usize, cap: usize },
    #[error("Krylov solve stopped after {iterations} iterations at relative residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("right-hand side has nonzero mean {mean:e}")]
    InconsistentRHS { mean: f64 },
    #[error("environment has no stream tensor")]
    MissingStream,
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Residuals of the exact structural identities of the assembled operators.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssemblyChecks {
    /// `max|S_rate − ∇ᵀR²∇|`.
    pub s_dual: f64,
    /// `max|A_rate − ∇ᵀH∇|`, when a stream tensor is available.
    pub a_dual: Option<f64>,
    pub s_symmetry: f64,
    pub a_skew: f64,
    /// `max|L 1|`.
    pub l_row_sum: f64,
}

#[derive(Clone, Debug)]
pub struct OperatorAssembly {
    pub torus: Torus,
    pub s: CsrMatrix,
    pub a: CsrMatrix,
    pub l: CsrMatrix,
    /// `∇`, `(nd) × n`.
    pub grad: CsrMatrix,
    /// `r_{e_i}(x) = √s_{e_i}(x)` at `x * d + i`.
    pub r: Vec<f64>,
    /// Plaquette-projected `H` on `V`, `(nd) × (nd)`.
    pub h: Option<CsrMatrix>,
    /// Jump rates `p_k(x)` at `x * 2d + k`.
    pub rates: Vec<f64>,
    pub checks: AssemblyChecks,
}

fn components(torus: &Torus, env: &Environment) -> usize {
    let n = torus.num_sites();
    let mut seen = vec![false; n];
    let mut count = 0;
    for root in 0..n {
        if seen[root] {
            continue;
        }
        count += 1;
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(x) = queue.pop_front() {
            for k in torus.dirs() {
                let y = torus.neighbor(x, k);
                if env.s(x, k) > 0.0 && !seen[y] {
                    seen[y] = true;
                    queue.push_back(y);
                }
            }
        }
    }
    count
}

/// `∇`: `(∇f)(x, i) = f(x + e_i) − f(x)`.
pub fn gradient_matrix(torus: &Torus) -> CsrMatrix {
    let d = torus.dim();
    let n = torus.num_sites();
    let mut t = Vec::with_capacity(2 * n * d);
    for x in 0..n {
        for i in 0..d {
            t.push((x * d + i, torus.neighbor(x, Dir::positive(i)), 1.0));
            t.push((x * d + i, x, -1.0));
        }
    }
    CsrMatrix::from_triplets(n * d, n, t)
}

/// Column of the positive-direction layout holding `u_l(y)`, with its sign.
fn v_entry(torus: &Torus, y: usize, l: Dir) -> (usize, f64) {
    let d = torus.dim();
    if l.is_positive() {
        (y * d + l.axis(), 1.0)
    } else {
        (torus.neighbor(y, l) * d + l.axis(), -1.0)
    }
}

/// `(Hu)_k = ¼ Σ_l (T_{−l} + I) h_{k,l} (T_k + I) u_l`, the form of `H` that
/// maps edge fields to edge fields.
pub fn stream_matrix(torus: &Torus, h: &StreamTensor) -> CsrMatrix {
    let d = torus.dim();
    let n = torus.num_sites();
    let mut t = Vec::new();
    for x in 0..n {
        for i in 0..d {
            let e = Dir::positive(i);
            for l in torus.dirs() {
                let back = torus.neighbor(x, l.opposite());
                for base in [x, back] {
                    let c = 0.25 * h.get(torus, base, e, l);
                    if c == 0.0 {
                        continue;
                    }
                    for y in [torus.neighbor(base, e), base] {
                        let (col, sign) = v_entry(torus, y, l);
                        t.push((x * d + i, col, sign * c));
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(n * d, n * d, t)
}

/// Builds `S`, `A`, `L` from the rates and cross-checks them against the
/// divergence forms `∇ᵀR²∇` and `∇ᵀH∇`.
pub fn assemble(env: &Environment) -> Result<OperatorAssembly, CorrectorError> {
    let torus = env.torus().clone();
    let comps = components(&torus, env);
    if comps != 1 {
        return Err(CorrectorError::NotPositiveDefinite { components: comps });
    }
    let n = torus.num_sites();
    let d = torus.dim();
    let mut st = Vec::new();
    let mut at = Vec::new();
    for x in 0..n {
        for k in torus.dirs() {
            let y = torus.neighbor(x, k);
            let s = env.s(x, k);
            st.push((x, y, -s));
            st.push((x, x, s));
            let b = env.b(x, k);
            at.push((x, y, b));
            at.push((x, x, -b));
        }
    }
    let s = CsrMatrix::from_triplets(n, n, st);
    let a = CsrMatrix::from_triplets(n, n, at);
    let l = s.scale(-1.0).add(&a);

    let grad = gradient_matrix(&torus);
    let gt = grad.transpose();
    let r2: Vec<f64> = (0..n * d).map(|e| env.s(e / d, Dir::positive(e % d))).collect();
    let r = r2.iter().map(|v| v.sqrt()).collect();
    let s_div = gt.matmul(&CsrMatrix::from_diagonal(&r2)).matmul(&grad);
    let h = env.stream().map(|h| stream_matrix(&torus, h));
    let a_dual = h.as_ref().map(|hm| {
        let a_div = gt.matmul(hm).matmul(&grad);
        a.max_abs_diff(&a_div)
    });
    let ones = vec![1.0; n];
    let checks = AssemblyChecks {
        s_dual: s.max_abs_diff(&s_div),
        a_dual,
        s_symmetry: s.max_abs_diff(&s.transpose()),
        a_skew: a.add(&a.transpose()).iter().fold(0.0, |m, (_, _, v)| m.max(v.abs())),
        l_row_sum: l.mul_vec(&ones).iter().fold(0.0, |m, v| m.max(v.abs())),
    };
    let rates = (0..n).flat_map(|x| env.rates_at(x).to_vec()).collect();
    Ok(OperatorAssembly {
        torus,
        s,
        a,
        l,
        grad,
        r,
        h,
        rates,
        checks,
    })
}

impl OperatorAssembly {
    pub fn num_sites(&self) -> usize {
        self.torus.num_sites()
    }

    /// `max_x |Σ_k b_k(x)(∇g)_k(x) − (∇ᵀH∇g)(x)|` for one function `g`.
    pub fn skew_identity_residual(&self, env: &Environment, g: &[f64]) -> Result<f64, CorrectorError> {
        let hm = self.h.as_ref().ok_or(CorrectorError::MissingStream)?;
        let t = &self.torus;
        let hu = hm.mul_vec(&self.grad.mul_vec(g));
        let div = self.grad.transpose().mul_vec(&hu);
        let mut worst = 0.0f64;
        for x in 0..t.num_sites() {
            let direct: f64 = t.dirs().map(|k| env.b(x, k) * (g[t.neighbor(x, k)] - g[x])).sum();
            worst = worst.max((direct - div[x]).abs());
        }
        Ok(worst)
    }

    /// Writes `S`, `A` or `L` in coordinate-list form.
    pub fn export<W: Write>(&self, which: char, w: W) -> io::Result<()> {
        match which {
            'S' => self.s.write_coo(w),
            'A' => self.a.write_coo(w),
            _ => self.l.write_coo(w),
        }
    }
}

/// A gradient edge field together with its potential.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientField {
    pub dim: usize,
    /// `w_{e_i}(x)` at `x * d + i`.
    pub values: Vec<f64>,
    /// Mean-zero `g` with `w = ∇g`.
    pub potential: Vec<f64>,
}

impl GradientField {
    pub fn from_potential(asm: &OperatorAssembly, g: Vec<f64>) -> Self {
        GradientField {
            dim: asm.torus.dim(),
            values: asm.grad.mul_vec(&g),
            potential: g,
        }
    }

    pub fn get(&self, torus: &Torus, x: usize, k: Dir) -> f64 {
        let (idx, sign) = v_entry(torus, x, k);
        sign * self.values[idx]
    }

    /// `max |u_k(x) + u_l(x+k) − u_l(x) − u_k(x+l)|` over all `x, k, l`.
    pub fn curl_residual(&self, torus: &Torus) -> f64 {
        let mut worst = 0.0f64;
        for x in 0..torus.num_sites() {
            for k in torus.dirs() {
                for l in torus.dirs() {
                    let r = self.get(torus, x, k) + self.get(torus, torus.neighbor(x, k), l)
                        - self.get(torus, x, l)
                        - self.get(torus, torus.neighbor(x, l), k);
                    worst = worst.max(r.abs());
                }
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// `max_x |Σ_k p_k(x) w_k(x) − φ(x)|`.
pub fn harmonic_residual(asm: &OperatorAssembly, w: &GradientField, rhs: &[f64]) -> f64 {
    let t = &asm.torus;
    let dirs = t.num_dirs();
    (0..t.num_sites())
        .map(|x| {
            let lhs: f64 = t.dirs().map(|k| asm.rates[x * dirs + k.index()] * w.get(t, x, k)).sum();
            (lhs - rhs[x]).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug)]
pub struct HarmonicOptions {
    pub gmres: GmresOptions,
    /// Subtract the mean of a right-hand side instead of rejecting it.
    pub project_rhs: bool,
}

impl HarmonicOptions {
    /// Relative residual `1e−10`, restart 50, at most `20 · L^d` iterations.
    pub fn for_sites(n: usize) -> Self {
        HarmonicOptions {
            gmres: GmresOptions {
                restart: 50,
                rel_tol: 1e-10,
                max_iter: 20 * n,
            },
            project_rhs: false,
        }
    }
}

fn prepare_rhs(rhs: &[f64], project: bool) -> Result<Vec<f64>, CorrectorError> {
    let n = rhs.len() as f64;
    let mean = rhs.iter().sum::<f64>() / n;
    let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    if mean.abs() <= 1e-12 * scale {
        return Ok(rhs.to_vec());
    }
    if project {
        Ok(rhs.iter().map(|v| v - mean).collect())
    } else {
        Err(CorrectorError::InconsistentRHS { mean })
    }
}

fn center(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Solves `Σ_k p_k w_k = φ` for a gradient field `w = ∇g`, i.e. `L g = φ`,
/// by GMRES on the deflated system `(L − 11ᵀ/n) g = φ` with Jacobi
/// preconditioning.
pub fn solve_harmonic(asm: &OperatorAssembly, rhs: &[f64], opts: &HarmonicOptions) -> Result<GradientField, CorrectorError> {
    let n = asm.num_sites();
    let rhs = prepare_rhs(rhs, opts.project_rhs)?;
    if rhs.iter().all(|&v| v == 0.0) {
        return Ok(GradientField::from_potential(asm, vec![0.0; n]));
    }
    let inv_n = 1.0 / n as f64;
    let apply = |v: &[f64], out: &mut [f64]| {
        asm.l.matvec(v, out);
        let m = v.iter().sum::<f64>() * inv_n;
        out.iter_mut().for_each(|o| *o -= m);
    };
    let diag_inv: Vec<f64> = asm.l.diagonal().iter().map(|d| 1.0 / (d - inv_n)).collect();
    let out = gmres(apply, Some(&diag_inv), &rhs, None, &opts.gmres);
    if !out.converged {
        return Err(CorrectorError::NoConvergence {
            iterations: out.iterations,
            residual: out.rel_residual,
        });
    }
    let mut g = out.x;
    center(&mut g);
    Ok(GradientField::from_potential(asm, g))
}

/// Dense factors of the symmetric part and the conjugated operator
/// `B = S^{−1/2} A S^{−1/2}`. Inverse powers act on mean-zero functions and
/// vanish on constants.
#[derive(Clone, Debug)]
pub struct SpectralFactors {
    /// Eigenvalues of `S`, ascending; the first is the constant mode.
    pub eigenvalues: Vec<f64>,
    pub s_half: DMatrix<f64>,
    pub s_inv_half: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// `Λ = R∇S^{−1/2}`, `(nd) × n`.
    pub lambda: DMatrix<f64>,
}

fn dense(m: &CsrMatrix) -> DMatrix<f64> {
    m.to_dense()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Eigendecomposes `S` and forms `S^{±1/2}`, `B` and `Λ`.
pub fn build_b(asm: &OperatorAssembly, cap: usize) -> Result<SpectralFactors, CorrectorError> {
    let n = asm.num_sites();
    if n > cap {
        return Err(CorrectorError::DenseCapExceeded { sites: n, cap });
    }
    let eig = SymmetricEigen::new(dense(&asm.s));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let scale = eigenvalues.last().copied().unwrap_or(1.0).abs().max(f64::MIN_POSITIVE);
    if n > 1 && eigenvalues[1] <= 1e-13 * scale {
        return Err(CorrectorError::NotPositiveDefinite { components: 2 });
    }
    let mut s_half = DMatrix::zeros(n, n);
    let mut s_inv_half = DMatrix::zeros(n, n);
    for &i in order.iter().skip(1) {
        let q = eig.eigenvectors.column(i);
        let lam = eig.eigenvalues[i];
        let qq = q * q.transpose();
        s_half += &qq * lam.sqrt();
        s_inv_half += &qq / lam.sqrt();
    }
    // remove any trace of the constant mode
    let p0 = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64);
    s_inv_half = &p0 * s_inv_half * &p0;
    s_half = &p0 * s_half * &p0;
    symmetrize(&mut s_inv_half);
    symmetrize(&mut s_half);

    let b = &s_inv_half * dense(&asm.a) * &s_inv_half;
    let r = DMatrix::from_diagonal(&DVector::from_column_slice(&asm.r));
    let lambda = r * dense(&asm.grad) * &s_inv_half;
    Ok(SpectralFactors {
        eigenvalues,
        s_half,
        s_inv_half,
        b,
        lambda,
    })
}

/// Finite-volume certificates for `B` and the Riesz operators.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralCertificate {
    pub sites: usize,
    /// Second-smallest eigenvalue of `S` (smallest on mean-zero functions).
    pub s_gap: f64,
    /// `max|B + Bᵀ|`.
    pub b_skew: f64,
    /// Smallest singular value of `I + B`.
    pub min_singular: f64,
    /// `max|ΛᵀΛ − P₀|`, `P₀` the projection onto mean-zero functions.
    pub lambda_isometry: f64,
    pub pi_idempotent: f64,
    pub pi_symmetric: f64,
    /// `max|B − Λᵀ D Λ|` with `D = Π R⁻¹HR⁻¹ Π`, when `H` is available.
    pub d_consistency: Option<f64>,
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Above this edge count `Π` is probed with vectors instead of formed.
const PI_DENSE_LIMIT: usize = 2048;

pub fn certify(asm: &OperatorAssembly, f: &SpectralFactors) -> SpectralCertificate {
    let n = asm.num_sites();
    let b_skew = max_abs(&(&f.b + f.b.transpose()));
    let i_plus_b = DMatrix::identity(n, n) + &f.b;
    let min_singular = i_plus_b
        .singular_values()
        .iter()
        .fold(f64::INFINITY, |m, &v| m.min(v));
    let p0 = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64);
    let ltl = f.lambda.transpose() * &f.lambda;
    let lambda_isometry = max_abs(&(ltl - &p0));
    let m = f.lambda.nrows();
    let (pi_idempotent, pi_symmetric) = if m <= PI_DENSE_LIMIT {
        let pi = &f.lambda * f.lambda.transpose();
        (max_abs(&(&pi * &pi - &pi)), max_abs(&(&pi - pi.transpose())))
    } else {
        let mut worst = 0.0f64;
        for p in 0..8 {
            let v = DVector::from_fn(m, |i, _| ((i * (p + 3) + p) % 17) as f64 / 17.0 - 0.5);
            let pv = &f.lambda * (f.lambda.transpose() * &v);
            let ppv = &f.lambda * (f.lambda.transpose() * &pv);
            worst = worst.max((ppv - pv).amax());
        }
        (worst, 0.0)
    };
    let d_consistency = asm.h.as_ref().map(|h| {
        let rinv = DMatrix::from_diagonal(&DVector::from_iterator(
            asm.r.len(),
            asm.r.iter().map(|r| 1.0 / r),
        ));
        let k = &rinv * dense(h) * &rinv;
        // ΠΛ = Λ, so Λᵀ D Λ = Λᵀ K Λ
        let ldl = f.lambda.transpose() * k * &f.lambda;
        max_abs(&(&f.b - ldl))
    });
    SpectralCertificate {
        sites: n,
        s_gap: f.eigenvalues.get(1).copied().unwrap_or(0.0),
        b_skew,
        min_singular,
        lambda_isometry,
        pi_idempotent,
        pi_symmetric,
        d_consistency,
    }
}

/// Harmonic coordinates through the operator chain
/// `w = R⁻¹ Λ (I − B)⁻¹ S^{−1/2} (−φ)`.
pub fn solve_harmonic_spectral(asm: &OperatorAssembly, f: &SpectralFactors, rhs: &[f64], project_rhs: bool) -> Result<GradientField, CorrectorError> {
    let n = asm.num_sites();
    let rhs = prepare_rhs(rhs, project_rhs)?;
    let phi = DVector::from_vec(rhs);
    let y = -(&f.s_inv_half * phi);
    let i_minus_b = DMatrix::identity(n, n) - &f.b;
    let h = i_minus_b
        .lu()
        .solve(&y)
        .expect("I − B is invertible for skew B");
    let lh = &f.lambda * &h;
    let values: Vec<f64> = lh.iter().zip(&asm.r).map(|(v, r)| v / r).collect();
    let mut g: Vec<f64> = (&f.s_inv_half * h).iter().copied().collect();
    center(&mut g);
    Ok(GradientField {
        dim: asm.torus.dim(),
        values,
        potential: g,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EffectiveDiffusivity {
    /// `σ²`, row-major `d × d`.
    pub sigma: Vec<f64>,
    /// Corrector gradients `∇χ_i`.
    pub correctors: Vec<GradientField>,
    pub bounds: DiffusivityBounds,
    /// Smallest eigenvalue of `σ² − Σ_k s̄_k k∧k`.
    pub lower_margin: f64,
    /// `Σ_k avg(s_k) − trace σ²`.
    pub upper_margin: f64,
    /// Smallest eigenvalue of `σ²`.
    pub min_eigenvalue: f64,
    /// Largest residual of the corrector equations.
    pub residual: f64,
}

/// `σ²_ij = avg_x Σ_k s_k (k_i + (∇χ_i)_k)(k_j + (∇χ_j)_k)` with
/// `L χ_i = −(φ_i + ψ_i)`.
pub fn effective_diffusivity(env: &Environment, asm: &OperatorAssembly, opts: &HarmonicOptions) -> Result<EffectiveDiffusivity, CorrectorError> {
    let t = env.torus();
    let d = t.dim();
    let drift = drift_fields(env);
    let rhs: Vec<Vec<f64>> = (0..d)
        .map(|i| drift.total_component(i).iter().map(|v| -v).collect())
        .collect();
    let correctors = rhs
        .par_iter()
        .map(|r| solve_harmonic(asm, r, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let residual = correctors
        .iter()
        .zip(&rhs)
        .map(|(w, r)| harmonic_residual(asm, w, r))
        .fold(0.0, f64::max);
    let n = t.num_sites() as f64;
    let mut sigma = vec![0.0; d * d];
    for x in 0..t.num_sites() {
        for k in t.dirs() {
            let s = env.s(x, k);
            let v: Vec<f64> = (0..d)
                .map(|i| {
                    let unit = if k.axis() == i { k.sign() as f64 } else { 0.0 };
                    unit + correctors[i].get(t, x, k)
                })
                .collect();
            for i in 0..d {
                for j in 0..d {
                    sigma[i * d + j] += s * v[i] * v[j];
                }
            }
        }
    }
    sigma.iter_mut().for_each(|v| *v /= n);
    let bounds = bounds(env);
    let sig = DMatrix::from_row_slice(d, d, &sigma);
    let low = DMatrix::from_row_slice(d, d, &bounds.lower);
    let min_eig = |m: DMatrix<f64>| {
        SymmetricEigen::new(m)
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &v| a.min(v))
    };
    let lower_margin = min_eig(&sig - low);
    let upper_margin = bounds.upper - sig.trace();
    Ok(EffectiveDiffusivity {
        min_eigenvalue: min_eig(sig),
        sigma,
        correctors,
        lower_margin,
        upper_margin,
        residual,
        bounds,
    })
}

/// Clamps `r` to `[1/K, K]` and `|h|` to `K`, rederives `b = curl h`, and
/// revalidates.
pub fn truncate(env: &Environment, cutoff: f64) -> Result<Environment, CorrectorError> {
    if !(cutoff >= 1.0 && cutoff.is_finite()) {
        return Err(EnvError::Invalid(format!("truncation level must be at least 1, got {cutoff}")).into());
    }
    let t = env.torus();
    let (lo, hi) = (1.0 / (cutoff * cutoff), cutoff * cutoff);
    let edges: Vec<f64> = env
        .conductances()
        .edge_values(t)
        .iter()
        .map(|s| s.clamp(lo, hi))
        .collect();
    let s = ConductanceField::from_edges(t, &edges);
    let h = env.stream().ok_or(CorrectorError::MissingStream)?;
    let hk = h.map(|v| v.clamp(-cutoff, cutoff));
    let b = curl(t, &hk);
    let out = Environment::from_parts(t.clone(), s, b, Some(hk))
        .with_ellipticity(env.requires_ellipticity());
    let out = match env.header() {
        Some(hd) => out.with_header(hd.clone()),
        None => out,
    };
    let report = out.validate();
    if !report.passed() {
        let names: Vec<&str> = report.failures().iter().map(|c| c.name.as_str()).collect();
        return Err(EnvError::Invalid(format!("truncated environment fails {}", names.join(", "))).into());
    }
    Ok(out)
}

/// Writes `site,value` rows.
pub fn write_field_csv<W: Write>(mut w: W, values: &[f64]) -> io::Result<()> {
    writeln!(w, "site,value")?;
    for (x, v) in values.iter().enumerate() {
        writeln!(w, "{x},{v:.17e}")?;
    }
    Ok(())
}
