//! Stream tensors for divergence-free flows on the torus.
//!
//! A flow with zero flux is the curl of
//! `h_{k,l} = ∂_l Δ⁻¹ b_k − ∂_k Δ⁻¹ b_l`, where `Δ = Σ_l (T_l − I)` is the
//! lattice Laplacian. Both the curl identity and the tensor symmetries of
//! the output are measured after construction rather than trusted.

use crate::env::{curl, FlowField, StreamTensor};
use crate::lattice::{Dir, Torus};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum HelmholtzError {
    #[error("right-hand side has nonzero mean {0:e}")]
    NonZeroMean(f64),
    #[error("flow has nonzero flux {value:e} along axis {direction}")]
    NonzeroFlux { direction: usize, value: f64 },
    #[error("flow is not divergence-free at site {site} (residual {residual:e})")]
    NotDivergenceFree { site: usize, residual: f64 },
    #[error("conjugate gradients stopped after {0} iterations")]
    NoConvergence(usize),
    #[error("reconstructed stream tensor misses the flow by {0:e}")]
    PostCondition(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoissonMethod {
    Spectral,
    ConjugateGradient,
}

/// Flows whose residuals fall below `tolerance · max|b|` count as exact.
pub const STRUCTURE_TOL: f64 = 1e-12;

/// Accepted Poisson residual and curl mismatch, relative to the data scale.
pub const SOLVE_TOL: f64 = 1e-10;

/// `(Δu)(x) = Σ_l (u(x+l) − u(x))`.
pub fn laplacian(torus: &Torus, u: &[f64]) -> Vec<f64> {
    (0..torus.num_sites())
        .map(|x| torus.dirs().map(|l| u[torus.neighbor(x, l)] - u[x]).sum())
        .collect()
}

fn scale_of(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0)
}

fn fft_all_axes(torus: &Torus, data: &mut [Complex64], inverse: bool) {
    let l = torus.side();
    let d = torus.dim();
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(l)
    } else {
        planner.plan_fft_forward(l)
    };
    let mut line = vec![Complex64::new(0.0, 0.0); l];
    for axis in 0..d {
        let stride = l.pow((d - 1 - axis) as u32);
        for base in 0..torus.num_sites() {
            if (base / stride) % l != 0 {
                continue;
            }
            for (c, slot) in line.iter_mut().enumerate() {
                *slot = data[base + c * stride];
            }
            fft.process(&mut line);
            for (c, v) in line.iter().enumerate() {
                data[base + c * stride] = *v;
            }
        }
    }
}

/// Eigenvalue of `Δ` on the Fourier mode `m`: `2 Σ_j (cos(2π m_j / L) − 1)`.
pub fn laplacian_eigenvalue(torus: &Torus, mode: &[usize]) -> f64 {
    let l = torus.side() as f64;
    mode.iter()
        .map(|&m| 2.0 * ((2.0 * std::f64::consts::PI * m as f64 / l).cos() - 1.0))
        .sum()
}

fn poisson_spectral(torus: &Torus, f: &[f64]) -> Vec<f64> {
    let n = torus.num_sites();
    let mut data: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_all_axes(torus, &mut data, false);
    for (idx, v) in data.iter_mut().enumerate() {
        if idx == 0 {
            *v = Complex64::new(0.0, 0.0);
            continue;
        }
        *v /= laplacian_eigenvalue(torus, &torus.coords(idx));
    }
    fft_all_axes(torus, &mut data, true);
    data.iter().map(|c| c.re / n as f64).collect()
}

fn poisson_cg(torus: &Torus, f: &[f64]) -> Result<Vec<f64>, HelmholtzError> {
    // −Δ is positive definite on mean-zero functions
    let n = torus.num_sites();
    let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let bnorm = dot(&rhs, &rhs).sqrt();
    let mut u = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(u);
    }
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let max_iter = 20 * n;
    for _ in 0..max_iter {
        let ap: Vec<f64> = laplacian(torus, &p).iter().map(|v| -v).collect();
        let alpha = rr / dot(&p, &ap);
        u.iter_mut().zip(&p).for_each(|(u, p)| *u += alpha * p);
        r.iter_mut().zip(&ap).for_each(|(r, a)| *r -= alpha * a);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= 1e-14 * bnorm {
            let mean = u.iter().sum::<f64>() / n as f64;
            u.iter_mut().for_each(|v| *v -= mean);
            return Ok(u);
        }
        let beta = rr_new / rr;
        p.iter_mut().zip(&r).for_each(|(p, r)| *p = r + beta * *p);
        rr = rr_new;
    }
    Err(HelmholtzError::NoConvergence(max_iter))
}

/// Solves `Δu = f` for mean-zero `f`, returning the mean-zero solution.
pub fn poisson_solve(torus: &Torus, f: &[f64], method: PoissonMethod) -> Result<Vec<f64>, HelmholtzError> {
    let mean = f.iter().sum::<f64>() / f.len() as f64;
    if mean.abs() > STRUCTURE_TOL * scale_of(f) {
        return Err(HelmholtzError::NonZeroMean(mean));
    }
    match method {
        PoissonMethod::Spectral => Ok(poisson_spectral(torus, f)),
        PoissonMethod::ConjugateGradient => poisson_cg(torus, f),
    }
}

/// Per-axis site averages of `b_{e_i}`.
pub fn flux(torus: &Torus, b: &FlowField) -> Vec<f64> {
    let n = torus.num_sites() as f64;
    (0..torus.dim())
        .map(|i| b.axis_component(torus, i).iter().sum::<f64>() / n)
        .collect()
}

/// Residuals measured on a reconstructed stream tensor.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HelmholtzResiduals {
    /// `max|curl h − b|`.
    pub curl: f64,
    /// Largest gap between the formula evaluated for every ordered pair
    /// `(k, l)` and the image derived from the canonical plaquette values.
    pub symmetry: f64,
    /// Largest `|Δu_i − b_{e_i}|` over the Poisson solves.
    pub poisson: f64,
}

#[derive(Clone, Debug)]
pub struct StreamReconstruction {
    pub stream: StreamTensor,
    pub residuals: HelmholtzResiduals,
}

/// Builds a stream tensor whose curl is `b`.
pub fn stream_from_flow(torus: &Torus, b: &FlowField, method: PoissonMethod) -> Result<StreamReconstruction, HelmholtzError> {
    let dirs = torus.num_dirs();
    let tol = STRUCTURE_TOL * scale_of(b.as_slice());
    for x in 0..torus.num_sites() {
        let div: f64 = torus.dirs().map(|k| b.get(dirs, x, k)).sum();
        let anti = torus
            .dirs()
            .map(|k| (b.get(dirs, x, k) + b.get(dirs, torus.neighbor(x, k), k.opposite())).abs())
            .fold(0.0, f64::max);
        let residual = div.abs().max(anti);
        if residual > tol {
            return Err(HelmholtzError::NotDivergenceFree { site: x, residual });
        }
    }
    for (direction, value) in flux(torus, b).into_iter().enumerate() {
        if value.abs() > tol {
            return Err(HelmholtzError::NonzeroFlux { direction, value });
        }
    }

    let d = torus.dim();
    let comps: Vec<Vec<f64>> = (0..d).map(|i| b.axis_component(torus, i)).collect();
    let mut potentials = Vec::with_capacity(d);
    let mut poisson = 0.0f64;
    for c in &comps {
        let u = poisson_solve(torus, c, method)?;
        let lap = laplacian(torus, &u);
        poisson = poisson.max(lap.iter().zip(c).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())));
        potentials.push(u);
    }
    // U_k = Δ⁻¹ b_k for every direction; U_{−e_i}(x) = −U_{e_i}(x − e_i)
    let big_u = |k: Dir, x: usize| -> f64 {
        if k.is_positive() {
            potentials[k.axis()][x]
        } else {
            -potentials[k.axis()][torus.neighbor(x, k)]
        }
    };
    let formula = |x: usize, k: Dir, l: Dir| -> f64 {
        big_u(k, torus.neighbor(x, l)) - big_u(k, x) - big_u(l, torus.neighbor(x, k)) + big_u(l, x)
    };
    let stream = StreamTensor::from_fn(torus, |x, i, j| formula(x, Dir::positive(i), Dir::positive(j)));

    let mut symmetry = 0.0f64;
    for x in 0..torus.num_sites() {
        for k in torus.dirs() {
            for l in torus.dirs() {
                symmetry = symmetry.max((formula(x, k, l) - stream.get(torus, x, k, l)).abs());
            }
        }
    }
    let back = curl(torus, &stream);
    let curl_res = back
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .fold(0.0f64, |m, (a, c)| m.max((a - c).abs()));
    if curl_res > SOLVE_TOL * scale_of(b.as_slice()) {
        return Err(HelmholtzError::PostCondition(curl_res));
    }
    Ok(StreamReconstruction {
        stream,
        residuals: HelmholtzResiduals {
            curl: curl_res,
            symmetry,
            poisson,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_data() {
        let t = Torus::new(2, 4).unwrap();
        assert!(poisson_solve(&t, &[0.0; 16], PoissonMethod::Spectral).unwrap().iter().all(|&v| v == 0.0));
        let rec = stream_from_flow(&t, &FlowField::zero(&t), PoissonMethod::Spectral).unwrap();
        assert_eq!(rec.stream.max_abs(), 0.0);
    }

    #[test]
    fn constant_drift_is_obstructed() {
        let t = Torus::new(2, 3).unwrap();
        let edges: Vec<f64> = (0..9).flat_map(|_| [0.7, 0.0]).collect();
        let b = FlowField::from_edges(&t, &edges);
        let f = flux(&t, &b);
        assert!((f[0] - 0.7).abs() < 1e-15 && f[1] == 0.0);
        let err = stream_from_flow(&t, &b, PoissonMethod::Spectral).unwrap_err();
        assert!(matches!(err, HelmholtzError::NonzeroFlux { direction: 0, .. }), "{err}");
    }

    #[test]
    fn rejects_nonzero_mean() {
        let t = Torus::new(1, 4).unwrap();
        assert!(matches!(poisson_solve(&t, &[1.0; 4], PoissonMethod::ConjugateGradient), Err(HelmholtzError::NonZeroMean(_))));
    }

    #[test]
    fn divergence_is_checked() {
        let t = Torus::new(1, 4).unwrap();
        let b = FlowField::from_edges(&t, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(stream_from_flow(&t, &b, PoissonMethod::Spectral), Err(HelmholtzError::NotDivergenceFree { .. })));
    }
}
