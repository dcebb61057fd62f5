//! Restarted GMRES with right diagonal preconditioning.

#[derive(Clone, Copy, Debug)]
pub struct GmresOptions {
    pub restart: usize,
    /// Stop when `‖b − A x‖ ≤ rel_tol · ‖b‖`.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions {
            restart: 50,
            rel_tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// True relative residual of the returned iterate.
    pub rel_residual: f64,
    pub converged: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` where `apply(v, out)` computes `out = A v`.
///
/// `diag_inv`, when given, is the inverse of the preconditioner diagonal
/// `M`; the iteration then runs on `A M⁻¹ y = b` with `x = M⁻¹ y`.
pub fn gmres(
    apply: impl Fn(&[f64], &mut [f64]),
    diag_inv: Option<&[f64]>,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: &GmresOptions,
) -> GmresOutcome {
    let n = b.len();
    let m = opts.restart.max(1).min(n.max(1));
    let bnorm = norm(b);
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    if bnorm == 0.0 {
        return GmresOutcome {
            x: vec![0.0; n],
            iterations: 0,
            rel_residual: 0.0,
            converged: true,
        };
    }
    let precond = |v: &[f64], out: &mut [f64]| match diag_inv {
        Some(d) => out.iter_mut().zip(v).zip(d).for_each(|((o, v), d)| *o = v * d),
        None => out.copy_from_slice(v),
    };

    let mut r = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut basis: Vec<Vec<f64>> = vec![vec![0.0; n]; m + 1];
    let mut hess = vec![vec![0.0; m]; m + 1];
    let mut cs = vec![0.0; m];
    let mut sn = vec![0.0; m];
    let mut g = vec![0.0; m + 1];
    let mut iterations = 0;

    loop {
        apply(&x, &mut tmp);
        r.iter_mut().zip(b).zip(&tmp).for_each(|((r, b), ax)| *r = b - ax);
        let beta = norm(&r);
        let rel = beta / bnorm;
        if rel <= opts.rel_tol || iterations >= opts.max_iter {
            return GmresOutcome {
                x,
                iterations,
                rel_residual: rel,
                converged: rel <= opts.rel_tol,
            };
        }

        basis[0].iter_mut().zip(&r).for_each(|(v, r)| *v = r / beta);
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = beta;
        let mut cols = 0;

        for j in 0..m {
            precond(&basis[j], &mut z);
            apply(&z, &mut tmp);
            // modified Gram–Schmidt, two passes
            for _ in 0..2 {
                for i in 0..=j {
                    let h = dot(&tmp, &basis[i]);
                    hess[i][j] += h;
                    tmp.iter_mut().zip(&basis[i]).for_each(|(t, v)| *t -= h * v);
                }
            }
            let h_next = norm(&tmp);
            hess[j + 1][j] = h_next;
            if h_next > 0.0 {
                basis[j + 1].iter_mut().zip(&tmp).for_each(|(v, t)| *v = t / h_next);
            }

            for i in 0..j {
                let (a, c) = (hess[i][j], hess[i + 1][j]);
                hess[i][j] = cs[i] * a + sn[i] * c;
                hess[i + 1][j] = -sn[i] * a + cs[i] * c;
            }
            let (a, c) = (hess[j][j], hess[j + 1][j]);
            let rho = a.hypot(c);
            if rho == 0.0 {
                cs[j] = 1.0;
                sn[j] = 0.0;
            } else {
                cs[j] = a / rho;
                sn[j] = c / rho;
            }
            hess[j][j] = rho;
            hess[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];

            iterations += 1;
            cols = j + 1;
            if g[j + 1].abs() / bnorm <= opts.rel_tol
                || h_next == 0.0
                || iterations >= opts.max_iter
            {
                break;
            }
        }

        // back substitution for the least-squares coefficients
        let mut y = vec![0.0; cols];
        for i in (0..cols).rev() {
            let mut acc = g[i];
            for k in i + 1..cols {
                acc -= hess[i][k] * y[k];
            }
            y[i] = if hess[i][i] != 0.0 { acc / hess[i][i] } else { 0.0 };
        }
        tmp.iter_mut().for_each(|v| *v = 0.0);
        for (k, yk) in y.iter().enumerate() {
            tmp.iter_mut().zip(&basis[k]).for_each(|(t, v)| *t += yk * v);
        }
        precond(&tmp, &mut z);
        x.iter_mut().zip(&z).for_each(|(x, dz)| *x += dz);

        for row in hess.iter_mut() {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}
