//! Constructions of doubly stochastic environments from conductances and
//! stream tensors.

use super::{curl, ConductanceField, EnvError, EnvHeader, Environment, FlowField, StreamTensor};
use crate::lattice::{Dir, Torus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, LogNormal, Normal};
use serde::{Deserialize, Serialize};

/// Marginal law of an iid edge or plaquette value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Distribution {
    Constant { value: f64 },
    Uniform { lo: f64, hi: f64 },
    LogNormal { mu: f64, sigma: f64 },
    /// `a` with probability `p`, otherwise `b`.
    TwoPoint { a: f64, b: f64, p: f64 },
    Gaussian { mean: f64, sigma: f64 },
    /// `amplitude · (−1)^{x_1+…+x_d}`; deterministic.
    Checkerboard { amplitude: f64 },
}

impl Distribution {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, parity: usize) -> f64 {
        match *self {
            Distribution::Constant { value } => value,
            Distribution::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Distribution::LogNormal { mu, sigma } => LogNormal::new(mu, sigma)
                .map(|d| d.sample(rng))
                .unwrap_or(f64::NAN),
            Distribution::TwoPoint { a, b, p } => {
                if rng.random::<f64>() < p {
                    a
                } else {
                    b
                }
            }
            Distribution::Gaussian { mean, sigma } => Normal::new(mean, sigma)
                .map(|d| d.sample(rng))
                .unwrap_or(f64::NAN),
            Distribution::Checkerboard { amplitude } => {
                if parity == 0 {
                    amplitude
                } else {
                    -amplitude
                }
            }
        }
    }

    fn check(&self) -> Result<(), String> {
        let ok = match *self {
            Distribution::Constant { value } => value.is_finite(),
            Distribution::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            Distribution::LogNormal { mu, sigma } => mu.is_finite() && sigma >= 0.0,
            Distribution::TwoPoint { a, b, p } => {
                a.is_finite() && b.is_finite() && (0.0..=1.0).contains(&p)
            }
            Distribution::Gaussian { mean, sigma } => mean.is_finite() && sigma >= 0.0,
            Distribution::Checkerboard { amplitude } => amplitude.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("invalid distribution parameters: {self:?}"))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    /// `s ≡ conductance value`, `h ≡ 0`.
    Homogeneous,
    /// Rates `s̃_k + 2(b_k)_+` with `s̃` iid per edge and `b = curl h`.
    ConductanceStream,
    /// Rates `2(b_k)_+`; every edge passable one way only.
    TotallyAsymmetric,
}

impl Generator {
    pub fn name(self) -> &'static str {
        match self {
            Generator::Homogeneous => "homogeneous",
            Generator::ConductanceStream => "conductance-stream",
            Generator::TotallyAsymmetric => "totally-asymmetric",
        }
    }
}

fn default_conductance() -> Distribution {
    Distribution::Constant { value: 1.0 }
}

fn default_stream() -> Distribution {
    Distribution::Constant { value: 0.0 }
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    #[serde(default = "default_conductance")]
    pub conductance: Distribution,
    #[serde(default = "default_stream")]
    pub stream: Distribution,
    #[serde(default = "yes")]
    pub require_ellipticity: bool,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            conductance: default_conductance(),
            stream: default_stream(),
            require_ellipticity: true,
        }
    }
}

/// Everything needed to rebuild an environment bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub generator: Generator,
    pub d: usize,
    #[serde(rename = "L")]
    pub side: usize,
    pub seed: u64,
    #[serde(default)]
    pub params: GeneratorParams,
}

impl EnvSpec {
    pub fn build(&self) -> Result<Environment, EnvError> {
        self.params.conductance.check().map_err(EnvError::Invalid)?;
        self.params.stream.check().map_err(EnvError::Invalid)?;
        let torus = Torus::new(self.d, self.side)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let env = match self.generator {
            Generator::Homogeneous => {
                let value = self.params.conductance.sample(&mut rng, 0);
                Environment::homogeneous(torus, value)
            }
            Generator::ConductanceStream => {
                let s = random_conductances(&torus, &self.params.conductance, &mut rng);
                let h = random_stream(&torus, &self.params.stream, &mut rng);
                make_conductance_stream_env(&torus, &s, &h)?
            }
            Generator::TotallyAsymmetric => {
                let h = random_stream(&torus, &self.params.stream, &mut rng);
                make_totally_asymmetric_env(&torus, &h, self.params.require_ellipticity)?
            }
        };
        let header = EnvHeader {
            d: self.d,
            side: self.side,
            seed: self.seed,
            generator: self.generator.name().to_string(),
            params: serde_json::to_value(&self.params).unwrap_or_default(),
        };
        Ok(env
            .with_ellipticity(self.params.require_ellipticity)
            .with_header(header))
    }
}

/// iid conductance per unoriented edge, edges visited as `(x, i)`.
pub fn random_conductances<R: Rng + ?Sized>(
    torus: &Torus,
    dist: &Distribution,
    rng: &mut R,
) -> ConductanceField {
    let mut edges = Vec::with_capacity(torus.num_sites() * torus.dim());
    for x in 0..torus.num_sites() {
        let parity = torus.parity(x);
        for _ in 0..torus.dim() {
            edges.push(dist.sample(rng, parity));
        }
    }
    ConductanceField::from_edges(torus, &edges)
}

/// iid value per canonical plaquette, visited as `(x, plane)`.
pub fn random_stream<R: Rng + ?Sized>(
    torus: &Torus,
    dist: &Distribution,
    rng: &mut R,
) -> StreamTensor {
    StreamTensor::from_fn(torus, |x, _, _| dist.sample(rng, torus.parity(x)))
}

fn checked_curl(torus: &Torus, h: &StreamTensor) -> Result<FlowField, EnvError> {
    if let Some(v) = h.canonical().iter().find(|v| !v.is_finite()) {
        return Err(EnvError::Invalid(format!("non-finite stream value {v}")));
    }
    let scale = h.max_abs().max(f64::MIN_POSITIVE);
    for x in 0..torus.num_sites() {
        for k in torus.dirs() {
            for l in torus.dirs() {
                let v = h.get(torus, x, k, l);
                let residual = (v + h.get(torus, x, l, k))
                    .abs()
                    .max((v + h.get(torus, torus.neighbor(x, k), k.opposite(), l)).abs())
                    .max((v + h.get(torus, torus.neighbor(x, l), k, l.opposite())).abs());
                if residual > super::DEFAULT_REL_TOL * scale {
                    return Err(EnvError::SymmetryViolation {
                        site: x,
                        k,
                        l,
                        residual,
                    });
                }
            }
        }
    }
    Ok(curl(torus, h))
}

/// Adds the flow `b = curl h` to the conductances `s̃`:
/// `p_k = s̃_k + 2(b_k)_+`, so that `s_k = s̃_k + |b_k|`.
pub fn make_conductance_stream_env(
    torus: &Torus,
    s_tilde: &ConductanceField,
    h: &StreamTensor,
) -> Result<Environment, EnvError> {
    let dirs = torus.num_dirs();
    for x in 0..torus.num_sites() {
        for k in torus.dirs() {
            let v = s_tilde.get(dirs, x, k);
            if !(v >= 0.0 && v.is_finite()) {
                return Err(EnvError::Invalid(format!(
                    "conductance {v} at site {x}, {k} is not a finite nonnegative number"
                )));
            }
            if s_tilde.get(dirs, torus.neighbor(x, k), k.opposite()) != v {
                return Err(EnvError::Invalid(format!(
                    "conductance at site {x}, {k} is not edge-symmetric"
                )));
            }
        }
    }
    let b = checked_curl(torus, h)?;
    let s: Vec<f64> = s_tilde
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(s, b)| s + b.abs())
        .collect();
    Ok(Environment::from_parts(
        torus.clone(),
        ConductanceField::from_oriented(torus, s),
        b,
        Some(h.clone()),
    ))
}

/// Rates `p_k = 2(b_k)_+` with `b = curl h`, i.e. `s_k = |b_k|`.
///
/// Edges whose flow vanishes (within the default relative tolerance) have
/// zero rate in both directions; they are rejected when
/// `require_ellipticity` is set and treated as absent otherwise.
pub fn make_totally_asymmetric_env(
    torus: &Torus,
    h: &StreamTensor,
    require_ellipticity: bool,
) -> Result<Environment, EnvError> {
    let b = checked_curl(torus, h)?;
    let dirs = torus.num_dirs();
    let scale = b.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cutoff = super::DEFAULT_REL_TOL * scale;

    let mut degenerate = Vec::new();
    let mut flow = b.as_slice().to_vec();
    for x in 0..torus.num_sites() {
        for i in 0..torus.dim() {
            let k = Dir::positive(i);
            let idx = x * dirs + k.index();
            if flow[idx].abs() <= cutoff {
                degenerate.push((x, k));
                let y = torus.neighbor(x, k);
                flow[idx] = 0.0;
                flow[y * dirs + k.opposite().index()] = 0.0;
            }
        }
    }
    if require_ellipticity && !degenerate.is_empty() {
        return Err(EnvError::DegenerateEdge(degenerate));
    }
    let b = FlowField::from_oriented(torus, flow);
    let s: Vec<f64> = b.as_slice().iter().map(|v| v.abs()).collect();
    Ok(Environment::from_parts(
        torus.clone(),
        ConductanceField::from_oriented(torus, s),
        b,
        Some(h.clone()),
    )
    .with_ellipticity(require_ellipticity))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checkerboard(t: &Torus, c: f64) -> StreamTensor {
        StreamTensor::from_fn(t, |x, _, _| if t.parity(x) == 0 { c } else { -c })
    }

    #[test]
    fn zero_stream_gives_pure_conductances() {
        let t = Torus::new(2, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_conductances(&t, &Distribution::Uniform { lo: 0.5, hi: 2.0 }, &mut rng);
        let env = make_conductance_stream_env(&t, &s, &StreamTensor::zero(&t)).unwrap();
        assert_eq!(env.rates().as_slice(), s.as_slice());
    }

    #[test]
    fn checkerboard_stream_on_unit_conductances() {
        // s = 1 + 2 = 3; p_{e1} = 5 on even sites, 1 on odd
        let t = Torus::new(2, 2).unwrap();
        let s = ConductanceField::constant(&t, 1.0);
        let env = make_conductance_stream_env(&t, &s, &checkerboard(&t, 1.0)).unwrap();
        for x in 0..t.num_sites() {
            for k in t.dirs() {
                assert_eq!(env.s(x, k), 3.0);
            }
            let expect = if t.parity(x) == 0 { 5.0 } else { 1.0 };
            assert_eq!(env.p(x, Dir::positive(0)), expect);
        }
        assert!(env.validate().passed());
    }

    #[test]
    fn checkerboard_totally_asymmetric() {
        let t = Torus::new(2, 2).unwrap();
        let env = make_totally_asymmetric_env(&t, &checkerboard(&t, 1.0), true).unwrap();
        for x in 0..t.num_sites() {
            let even = t.parity(x) == 0;
            assert_eq!(env.p(x, Dir::positive(0)), if even { 4.0 } else { 0.0 });
            for k in t.dirs() {
                assert_eq!(env.s(x, k), 2.0);
                // exactly one orientation of each edge is open
                let back = env.p(t.neighbor(x, k), k.opposite());
                assert!((env.p(x, k) == 0.0) != (back == 0.0));
            }
        }
        let rep = env.validate();
        assert!(rep.passed(), "{rep:?}");
        assert_eq!(rep.min_domination_slack, 0.0);
    }

    #[test]
    fn zero_stream_is_degenerate_when_elliptic() {
        let t = Torus::new(2, 3).unwrap();
        match make_totally_asymmetric_env(&t, &StreamTensor::zero(&t), true) {
            Err(EnvError::DegenerateEdge(edges)) => assert_eq!(edges.len(), 18),
            other => panic!("expected DegenerateEdge, got {other:?}"),
        }
        let env = make_totally_asymmetric_env(&t, &StreamTensor::zero(&t), false).unwrap();
        assert!(env.validate().passed());
        let diag = env.integrability_diagnostics();
        assert!(diag.r_inv_sq.iter().all(|v| v.is_infinite()));
    }

    #[test]
    fn asymmetric_conductances_rejected() {
        let t = Torus::new(1, 3).unwrap();
        let s = ConductanceField::from_oriented(&t, vec![1.0, 1.0, 2.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            make_conductance_stream_env(&t, &s, &StreamTensor::zero(&t)),
            Err(EnvError::Invalid(_))
        ));
    }

    #[test]
    fn spec_build_is_deterministic() {
        let spec = EnvSpec {
            generator: Generator::ConductanceStream,
            d: 2,
            side: 4,
            seed: 11,
            params: GeneratorParams {
                conductance: Distribution::LogNormal { mu: 0.0, sigma: 0.5 },
                stream: Distribution::Gaussian { mean: 0.0, sigma: 1.0 },
                require_ellipticity: true,
            },
        };
        let a = spec.build().unwrap();
        let b = spec.build().unwrap();
        assert_eq!(a.rates(), b.rates());
        assert_eq!(a.header().unwrap().generator, "conductance-stream");
    }
}
