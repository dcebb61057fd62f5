//! Doubly stochastic environments on periodic tori.
//!
//! An [`Environment`] carries the conductances `s`, the divergence-free flow
//! `b` (optionally as the curl of a stream tensor `h`) and the jump rates
//! `p = s + b`. Environments are immutable once built.

mod fields;
pub mod generate;
pub mod io;

pub use fields::{curl, ConductanceField, FlowField, RateField, StreamTensor};
pub use generate::{
    make_conductance_stream_env, make_totally_asymmetric_env, Distribution, EnvSpec, Generator,
    GeneratorParams,
};

use crate::lattice::{Dir, Torus};
use serde::{Deserialize, Serialize};

/// Default relative tolerance for exact identities evaluated in floating point.
pub const DEFAULT_REL_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("stream tensor identity violated at site {site} for pair ({k}, {l}): residual {residual:e}")]
    SymmetryViolation {
        site: usize,
        k: Dir,
        l: Dir,
        residual: f64,
    },
    #[error("{} edge(s) carry zero flow but weak ellipticity is required (first: site {}, {})", .0.len(), .0[0].0, .0[0].1)]
    DegenerateEdge(Vec<(usize, Dir)>),
    #[error("environment violates invariants: {0}")]
    Invalid(String),
    #[error(transparent)]
    Torus(#[from] crate::lattice::TorusError),
    #[error("malformed environment document: {0}")]
    Format(String),
}

/// Provenance stored alongside serialized environments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvHeader {
    pub d: usize,
    #[serde(rename = "L")]
    pub side: usize,
    pub seed: u64,
    pub generator: String,
    #[serde(default)]
    pub params: serde_json::Value,
}

#[derive(Clone, Debug)]
pub struct Environment {
    torus: Torus,
    s: ConductanceField,
    b: FlowField,
    h: Option<StreamTensor>,
    p: Vec<f64>,
    out_rate: Vec<f64>,
    require_ellipticity: bool,
    header: Option<EnvHeader>,
}

impl Environment {
    /// Assembles an environment from its parts without checking invariants;
    /// use [`Environment::validate`] on the result.
    pub fn from_parts(
        torus: Torus,
        s: ConductanceField,
        b: FlowField,
        h: Option<StreamTensor>,
    ) -> Self {
        let p: Vec<f64> = s
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(s, b)| s + b)
            .collect();
        let dirs = torus.num_dirs();
        let out_rate = p.chunks(dirs).map(|c| c.iter().sum()).collect();
        Environment {
            torus,
            s,
            b,
            h,
            p,
            out_rate,
            require_ellipticity: true,
            header: None,
        }
    }

    /// Splits arbitrary rates into `s_k = (p_k(x) + p_{−k}(x+k))/2` and
    /// `b_k = (p_k(x) − p_{−k}(x+k))/2`. The rates are kept verbatim.
    pub fn from_rates(torus: Torus, rates: &RateField) -> Self {
        let dirs = torus.num_dirs();
        let n = torus.num_sites();
        let mut s = vec![0.0; n * dirs];
        let mut b = vec![0.0; n * dirs];
        for x in 0..n {
            for k in torus.dirs() {
                let fwd = rates.get(dirs, x, k);
                let back = rates.get(dirs, torus.neighbor(x, k), k.opposite());
                s[x * dirs + k.index()] = 0.5 * (fwd + back);
                b[x * dirs + k.index()] = 0.5 * (fwd - back);
            }
        }
        let mut env = Self::from_parts(
            torus.clone(),
            ConductanceField::from_oriented(&torus, s),
            FlowField::from_oriented(&torus, b),
            None,
        );
        env.p = rates.as_slice().to_vec();
        env.out_rate = env.p.chunks(dirs).map(|c| c.iter().sum()).collect();
        env
    }

    /// `s ≡ value`, `b ≡ 0`.
    pub fn homogeneous(torus: Torus, value: f64) -> Self {
        let s = ConductanceField::constant(&torus, value);
        let b = FlowField::zero(&torus);
        let h = StreamTensor::zero(&torus);
        Self::from_parts(torus, s, b, Some(h))
    }

    pub fn with_ellipticity(mut self, required: bool) -> Self {
        self.require_ellipticity = required;
        self
    }

    pub fn with_header(mut self, header: EnvHeader) -> Self {
        self.header = Some(header);
        self
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn dim(&self) -> usize {
        self.torus.dim()
    }

    pub fn num_sites(&self) -> usize {
        self.torus.num_sites()
    }

    pub fn conductances(&self) -> &ConductanceField {
        &self.s
    }

    pub fn flow(&self) -> &FlowField {
        &self.b
    }

    pub fn stream(&self) -> Option<&StreamTensor> {
        self.h.as_ref()
    }

    pub fn header(&self) -> Option<&EnvHeader> {
        self.header.as_ref()
    }

    pub fn requires_ellipticity(&self) -> bool {
        self.require_ellipticity
    }

    #[inline]
    pub fn s(&self, site: usize, k: Dir) -> f64 {
        self.s.get(self.torus.num_dirs(), site, k)
    }

    #[inline]
    pub fn b(&self, site: usize, k: Dir) -> f64 {
        self.b.get(self.torus.num_dirs(), site, k)
    }

    #[inline]
    pub fn p(&self, site: usize, k: Dir) -> f64 {
        self.p[site * self.torus.num_dirs() + k.index()]
    }

    /// Rates out of `site` in direction order.
    #[inline]
    pub fn rates_at(&self, site: usize) -> &[f64] {
        let dirs = self.torus.num_dirs();
        &self.p[site * dirs..(site + 1) * dirs]
    }

    /// `Σ_k p_k(x)`.
    #[inline]
    pub fn total_rate(&self, site: usize) -> f64 {
        self.out_rate[site]
    }

    pub fn rates(&self) -> RateField {
        RateField::from_oriented(&self.torus, self.p.clone())
    }

    pub fn max_total_rate(&self) -> f64 {
        self.out_rate.iter().fold(0.0, |m, &v| m.max(v))
    }

    fn magnitude(&self) -> f64 {
        let m = self
            .s
            .as_slice()
            .iter()
            .chain(self.b.as_slice())
            .chain(&self.p)
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if m > 0.0 {
            m
        } else {
            1.0
        }
    }

    /// Checks every structural identity at relative tolerance `rel_tol`.
    pub fn validate_with(&self, rel_tol: f64) -> ValidationReport {
        let t = &self.torus;
        let dirs = t.num_dirs();
        let threshold = rel_tol * self.magnitude();
        let mut checks = Vec::new();

        let mut bistoch = Worst::default();
        let mut s_cond = Worst::default();
        let mut b_flow = Worst::default();
        let mut divfree = Worst::default();
        let mut domin = Worst::default();
        let mut min_slack = f64::INFINITY;
        let mut min_s = f64::INFINITY;
        let mut degenerate = 0usize;

        for x in 0..t.num_sites() {
            let inflow: f64 = t
                .dirs()
                .map(|k| self.p(t.neighbor(x, k), k.opposite()))
                .sum();
            bistoch.update(x, (self.total_rate(x) - inflow).abs());
            let mut div = 0.0;
            for k in t.dirs() {
                let y = t.neighbor(x, k);
                let s = self.s.get(dirs, x, k);
                let b = self.b.get(dirs, x, k);
                s_cond.update(x, (self.s.get(dirs, y, k.opposite()) - s).abs());
                s_cond.update(x, (-s).max(0.0));
                b_flow.update(x, (self.b.get(dirs, y, k.opposite()) + b).abs());
                domin.update(x, (b.abs() - s).max(0.0));
                domin.update(x, (-self.p(x, k)).max(0.0));
                min_slack = min_slack.min(s - b.abs());
                min_s = min_s.min(s);
                if s <= 0.0 {
                    degenerate += 1;
                }
                div += b;
            }
            divfree.update(x, div.abs());
        }

        checks.push(bistoch.finish("bistoch", threshold));
        checks.push(s_cond.finish("s-cond", threshold));
        checks.push(b_flow.finish("b-flow", threshold));
        checks.push(divfree.finish("divfree", threshold));
        checks.push(domin.finish("domin", threshold));

        if let Some(h) = &self.h {
            let mut sym = Worst::default();
            let r = h.symmetry_residual(t);
            sym.update(0, r);
            checks.push(sym.finish("h-tensor", threshold));

            let c = curl(t, h);
            let mut cr = Worst::default();
            for x in 0..t.num_sites() {
                for k in t.dirs() {
                    cr.update(x, (c.get(dirs, x, k) - self.b.get(dirs, x, k)).abs());
                }
            }
            checks.push(cr.finish("curl", threshold));
        }

        if self.require_ellipticity {
            checks.push(IdentityCheck {
                name: "weakell".into(),
                max_residual: degenerate as f64,
                threshold: 0.0,
                worst_site: None,
                pass: degenerate == 0 && min_s.is_finite(),
            });
        }

        ValidationReport {
            checks,
            min_domination_slack: min_slack,
            min_conductance: min_s,
            threshold,
        }
    }

    pub fn validate(&self) -> ValidationReport {
        self.validate_with(DEFAULT_REL_TOL)
    }

    /// Site-averaged integrability norms.
    pub fn integrability_diagnostics(&self) -> Diagnostics {
        let t = &self.torus;
        let n = t.num_sites() as f64;
        let dirs: Vec<Dir> = t.dirs().collect();
        let mut r_sq = vec![0.0; dirs.len()];
        let mut r_inv_sq = vec![0.0; dirs.len()];
        let mut singular_edges = Vec::new();
        for x in 0..t.num_sites() {
            for &k in &dirs {
                let s = self.s(x, k);
                r_sq[k.index()] += s;
                if s > 0.0 {
                    r_inv_sq[k.index()] += 1.0 / s;
                } else {
                    r_inv_sq[k.index()] = f64::INFINITY;
                    singular_edges.push((x, k));
                }
            }
        }
        r_sq.iter_mut().for_each(|v| *v /= n);
        r_inv_sq.iter_mut().for_each(|v| *v /= n);

        let m = dirs.len();
        let mut stream_weighted = vec![0.0; m * m];
        let mut stream_l1 = vec![0.0; m * m];
        if let Some(h) = &self.h {
            for x in 0..t.num_sites() {
                for &k in &dirs {
                    for &l in &dirs {
                        let v = h.get(t, x, k, l);
                        let idx = k.index() * m + l.index();
                        stream_l1[idx] += v.abs();
                        if v != 0.0 {
                            let s = self.s(x, l);
                            stream_weighted[idx] += if s > 0.0 { v * v / s } else { f64::INFINITY };
                        }
                    }
                }
            }
            stream_weighted.iter_mut().for_each(|v| *v /= n);
            stream_l1.iter_mut().for_each(|v| *v /= n);
        }

        Diagnostics {
            r_sq,
            r_inv_sq,
            stream_weighted,
            stream_l1,
            singular_edges,
        }
    }
}

/// Per-identity outcome of [`Environment::validate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub max_residual: f64,
    pub threshold: f64,
    pub worst_site: Option<usize>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<IdentityCheck>,
    /// `min_{x,k} (s_k(x) − |b_k(x)|)`.
    pub min_domination_slack: f64,
    pub min_conductance: f64,
    pub threshold: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&IdentityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<&IdentityCheck> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    /// Largest residual among the structural identities (excludes `weakell`).
    pub fn max_residual(&self) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.name != "weakell")
            .fold(0.0, |m, c| m.max(c.max_residual))
    }
}

#[derive(Default)]
struct Worst {
    value: f64,
    site: Option<usize>,
}

impl Worst {
    fn update(&mut self, site: usize, r: f64) {
        if r > self.value || r.is_nan() {
            self.value = r;
            self.site = Some(site);
        }
    }

    fn finish(self, name: &str, threshold: f64) -> IdentityCheck {
        IdentityCheck {
            name: name.to_string(),
            max_residual: self.value,
            threshold,
            worst_site: self.site,
            pass: self.value <= threshold,
        }
    }
}

/// Empirical versions of the integrability conditions on the rates.
///
/// Per-direction vectors are indexed by [`Dir::index`]; per-pair vectors by
/// `k * 2d + l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Site average of `s_k = r_k²`.
    pub r_sq: Vec<f64>,
    /// Site average of `1 / s_k`; `+∞` if some `s_k` vanishes.
    pub r_inv_sq: Vec<f64>,
    /// Site average of `h_{k,l}² / s_l`.
    pub stream_weighted: Vec<f64>,
    /// Site average of `|h_{k,l}|`.
    pub stream_l1: Vec<f64>,
    /// Edges with `s_k(x) = 0`.
    pub singular_edges: Vec<(usize, Dir)>,
}
