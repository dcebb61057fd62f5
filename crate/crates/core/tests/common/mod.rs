#![allow(dead_code)]

use rwre_core::env::{Distribution, EnvSpec, Generator, GeneratorParams};
use rwre_core::Environment;

pub fn spec(generator: Generator, d: usize, side: usize, seed: u64) -> EnvSpec {
    EnvSpec {
        generator,
        d,
        side,
        seed,
        params: GeneratorParams {
            conductance: Distribution::Uniform { lo: 0.5, hi: 2.0 },
            stream: Distribution::Gaussian { mean: 0.0, sigma: 1.0 },
            require_ellipticity: true,
        },
    }
}

pub fn stream_env(d: usize, side: usize, seed: u64) -> Environment {
    spec(Generator::ConductanceStream, d, side, seed).build().unwrap()
}

pub fn asymmetric_env(d: usize, side: usize, seed: u64) -> Environment {
    spec(Generator::TotallyAsymmetric, d, side, seed).build().unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}
