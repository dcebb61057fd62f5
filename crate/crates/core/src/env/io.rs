//! JSON document format for environments.
//!
//! ```text
//! {
//!   "header": { "d": 2, "L": 8, "seed": 7, "generator": "...", "params": {...} },
//!   "require_ellipticity": true,
//!   "s": [ s_{e_i}(x) at index x*d + i ],
//!   "h": [ h_{e_i,e_j}(x), i<j, at index x*P + plane ]   (optional)
//!   "b": [ b_{e_i}(x) at index x*d + i ]                  (optional, only without "h")
//! }
//! ```
//!
//! Sites are in row-major order. The flow is rederived on load (`b = curl h`
//! when `h` is present) and documents whose derived fields violate the
//! environment invariants are rejected.

use super::{
    curl, ConductanceField, EnvError, EnvHeader, Environment, FlowField, StreamTensor,
    DEFAULT_REL_TOL,
};
use crate::lattice::Torus;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvDocument {
    pub header: EnvHeader,
    #[serde(default = "yes")]
    pub require_ellipticity: bool,
    pub s: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
}

fn yes() -> bool {
    true
}

impl EnvDocument {
    pub fn from_env(env: &Environment) -> Self {
        let t = env.torus();
        let header = env.header().cloned().unwrap_or_else(|| EnvHeader {
            d: t.dim(),
            side: t.side(),
            seed: 0,
            generator: "custom".into(),
            params: serde_json::Value::Null,
        });
        let (h, b) = match env.stream() {
            Some(h) => (Some(h.canonical().to_vec()), None),
            None => (None, Some(env.flow().edge_values(t))),
        };
        EnvDocument {
            header,
            require_ellipticity: env.requires_ellipticity(),
            s: env.conductances().edge_values(t),
            h,
            b,
        }
    }

    pub fn into_env(self) -> Result<Environment, EnvError> {
        let torus = Torus::new(self.header.d, self.header.side)?;
        let edges = torus.num_sites() * torus.dim();
        if self.s.len() != edges {
            return Err(EnvError::Format(format!(
                "expected {edges} conductances, found {}",
                self.s.len()
            )));
        }
        let s = ConductanceField::from_edges(&torus, &self.s);
        let (b, h) = match (self.h, self.b) {
            (Some(_), Some(_)) => {
                return Err(EnvError::Format(
                    "give either a stream tensor or a flow, not both".into(),
                ))
            }
            (Some(h), None) => {
                let plaquettes = torus.num_sites() * torus.num_planes();
                if h.len() != plaquettes {
                    return Err(EnvError::Format(format!(
                        "expected {plaquettes} stream values, found {}",
                        h.len()
                    )));
                }
                let h = StreamTensor::from_canonical(&torus, h);
                (curl(&torus, &h), Some(h))
            }
            (None, Some(b)) => {
                if b.len() != edges {
                    return Err(EnvError::Format(format!(
                        "expected {edges} flow values, found {}",
                        b.len()
                    )));
                }
                (FlowField::from_edges(&torus, &b), None)
            }
            (None, None) => (FlowField::zero(&torus), None),
        };
        let env = Environment::from_parts(torus, s, b, h)
            .with_ellipticity(self.require_ellipticity)
            .with_header(self.header);
        let report = env.validate_with(DEFAULT_REL_TOL);
        if !report.passed() {
            let names: Vec<String> = report
                .failures()
                .iter()
                .map(|c| format!("{} (residual {:e})", c.name, c.max_residual))
                .collect();
            return Err(EnvError::Invalid(names.join(", ")));
        }
        Ok(env)
    }
}

pub fn to_json(env: &Environment) -> String {
    serde_json::to_string_pretty(&EnvDocument::from_env(env)).expect("environment serializes")
}

pub fn from_json(text: &str) -> Result<Environment, EnvError> {
    let doc: EnvDocument =
        serde_json::from_str(text).map_err(|e| EnvError::Format(e.to_string()))?;
    doc.into_env()
}

pub fn save(env: &Environment, path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, to_json(env))
}

pub fn load(path: impl AsRef<Path>) -> Result<Environment, EnvError> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| EnvError::Format(format!("{}: {e}", path.as_ref().display())))?;
    from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Distribution, EnvSpec, Generator, GeneratorParams};

    #[test]
    fn roundtrip_preserves_rates() {
        let spec = EnvSpec {
            generator: Generator::TotallyAsymmetric,
            d: 2,
            side: 4,
            seed: 3,
            params: GeneratorParams {
                stream: Distribution::Uniform { lo: -1.0, hi: 1.0 },
                ..Default::default()
            },
        };
        let env = spec.build().unwrap();
        let back = from_json(&to_json(&env)).unwrap();
        assert_eq!(back.rates(), env.rates());
        assert_eq!(back.header(), env.header());
    }

    #[test]
    fn rejects_domination_violation() {
        // s = 0.1 everywhere but the stream forces |b| = 2 on some edges
        let t = Torus::new(2, 2).unwrap();
        let doc = EnvDocument {
            header: EnvHeader {
                d: 2,
                side: 2,
                seed: 0,
                generator: "custom".into(),
                params: serde_json::Value::Null,
            },
            require_ellipticity: true,
            s: vec![0.1; t.num_sites() * 2],
            h: Some(vec![1.0, -1.0, -1.0, 1.0]),
            b: None,
        };
        let err = doc.into_env().unwrap_err();
        assert!(matches!(err, EnvError::Invalid(ref m) if m.contains("domin")), "{err}");
    }

    #[test]
    fn rejects_wrong_lengths() {
        let text = r#"{"header":{"d":2,"L":3,"seed":0,"generator":"x"},"s":[1.0,2.0]}"#;
        assert!(matches!(from_json(text), Err(EnvError::Format(_))));
    }
}
