mod common;

use common::{max_abs, max_abs_diff, stream_env};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rwre_core::corrector::{
    assemble, build_b, certify, effective_diffusivity, harmonic_residual, solve_harmonic,
    solve_harmonic_spectral, truncate, HarmonicOptions, DEFAULT_DENSE_CAP,
};
use rwre_core::env::{ConductanceField, Distribution, EnvSpec, FlowField, Generator, GeneratorParams, StreamTensor};
use rwre_core::mart::{bounds, drift_fields};
use rwre_core::{Dir, Environment, Torus};

fn random_g(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn small_envs() -> Vec<Environment> {
    let shapes = [(1, 8), (1, 16), (2, 4), (2, 8), (3, 4), (2, 16)];
    (0..12)
        .map(|i| {
            let (d, side) = shapes[i % shapes.len()];
            stream_env(d, side, 100 + i as u64)
        })
        .collect()
}

#[test]
fn dual_assembly_agrees() {
    for env in small_envs() {
        let asm = assemble(&env).unwrap();
        let scale = env.max_total_rate();
        assert!(asm.checks.s_dual <= 1e-12 * scale);
        assert!(asm.checks.a_dual.unwrap() <= 1e-12 * scale);
        assert_eq!(asm.checks.s_symmetry, 0.0);
        assert!(asm.checks.a_skew <= 1e-14 * scale);
        assert!(asm.checks.l_row_sum <= 1e-14 * scale);
    }
}

#[test]
fn skew_identity_on_random_gradients() {
    let env = stream_env(2, 4, 7);
    let asm = assemble(&env).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let g = random_g(16, &mut rng);
        assert!(asm.skew_identity_residual(&env, &g).unwrap() <= 1e-12);
    }
}

#[test]
fn skew_identity_on_indicator_basis() {
    let env = stream_env(3, 4, 8);
    let asm = assemble(&env).unwrap();
    for x in 0..env.num_sites() {
        let mut g = vec![0.0; env.num_sites()];
        g[x] = 1.0;
        assert!(asm.skew_identity_residual(&env, &g).unwrap() <= 1e-12);
    }
}

#[test]
fn b_is_skew_and_i_plus_b_is_expansive() {
    for env in small_envs() {
        let asm = assemble(&env).unwrap();
        let f = build_b(&asm, DEFAULT_DENSE_CAP).unwrap();
        let c = certify(&asm, &f);
        assert!(c.b_skew <= 1e-11, "{c:?}");
        assert!(c.min_singular >= 1.0 - 1e-11, "{c:?}");
        assert!(c.lambda_isometry <= 1e-11, "{c:?}");
        assert!(c.pi_idempotent <= 1e-11 && c.pi_symmetric <= 1e-11, "{c:?}");
        assert!(c.d_consistency.unwrap() <= 1e-11, "{c:?}");
        assert!(c.s_gap > 0.0);
    }
}

#[test]
fn krylov_and_spectral_routes_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for env in small_envs() {
        let asm = assemble(&env).unwrap();
        let n = env.num_sites();
        let f = build_b(&asm, DEFAULT_DENSE_CAP).unwrap();
        let drift = drift_fields(&env);
        let mut rhs_list: Vec<Vec<f64>> = (0..env.dim()).map(|i| drift.total_component(i)).collect();
        let mut r = random_g(n, &mut rng);
        let mean = r.iter().sum::<f64>() / n as f64;
        r.iter_mut().for_each(|v| *v -= mean);
        rhs_list.push(r);
        for rhs in rhs_list {
            let a = solve_harmonic(&asm, &rhs, &HarmonicOptions::for_sites(n)).unwrap();
            let b = solve_harmonic_spectral(&asm, &f, &rhs, false).unwrap();
            assert!(a.max_abs_diff(&b) <= 1e-8, "{}", a.max_abs_diff(&b));
            assert!(harmonic_residual(&asm, &a, &rhs) <= 1e-8);
            assert!(harmonic_residual(&asm, &b, &rhs) <= 1e-8);
            assert!(a.curl_residual(&asm.torus) <= 1e-12);
        }
    }
}

fn reversible_env(d: usize, side: usize, seed: u64) -> Environment {
    EnvSpec {
        generator: Generator::ConductanceStream,
        d,
        side,
        seed,
        params: GeneratorParams {
            conductance: Distribution::LogNormal { mu: 0.0, sigma: 0.7 },
            ..GeneratorParams::default()
        },
    }
    .build()
    .unwrap()
}

#[test]
fn reversible_case_reduces_to_inverse_of_s() {
    let env = reversible_env(2, 4, 3);
    let asm = assemble(&env).unwrap();
    let f = build_b(&asm, DEFAULT_DENSE_CAP).unwrap();
    assert_eq!(max_abs(f.b.as_slice()), 0.0);
    let phi = drift_fields(&env).total_component(0);
    let w = solve_harmonic_spectral(&asm, &f, &phi, false).unwrap();
    // L = −S, so g = −S⁺φ
    let s_pinv = asm.s.to_dense().pseudo_inverse(1e-10).unwrap();
    let g = -(s_pinv * DVector::from_column_slice(&phi));
    let t = env.torus();
    for x in 0..t.num_sites() {
        for i in 0..t.dim() {
            let k = Dir::positive(i);
            let expect = g[t.neighbor(x, k)] - g[x];
            assert!((w.get(t, x, k) - expect).abs() < 1e-10);
        }
    }
}

#[test]
fn zero_flow_gives_unit_singular_values() {
    let env = reversible_env(1, 8, 4);
    let asm = assemble(&env).unwrap();
    let f = build_b(&asm, DEFAULT_DENSE_CAP).unwrap();
    let sv = (DMatrix::identity(8, 8) + &f.b).singular_values();
    assert!(sv.iter().all(|&v| (v - 1.0).abs() < 1e-14));
}

#[test]
fn truncation_above_range_is_identity() {
    let env = stream_env(2, 4, 12);
    let t = env.torus();
    let s = env.conductances().as_slice();
    let smax = s.iter().fold(0.0f64, |m, &v| m.max(v));
    let smin = s.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let hmax = env.stream().unwrap().max_abs();
    let k = smax.sqrt().max(1.0 / smin.sqrt()).max(hmax) * 1.5;
    let tr = truncate(&env, k).unwrap();
    assert_eq!(tr.rates().as_slice(), env.rates().as_slice());
    let b1 = build_b(&assemble(&env).unwrap(), DEFAULT_DENSE_CAP).unwrap().b;
    let b2 = build_b(&assemble(&tr).unwrap(), DEFAULT_DENSE_CAP).unwrap().b;
    assert_eq!(b1, b2);
    assert_eq!(t.num_sites(), tr.num_sites());
}

#[test]
fn truncation_below_range_clamps() {
    let env = reversible_env(2, 4, 12);
    let tr = truncate(&env, 1.1).unwrap();
    assert!(tr.validate().passed());
    let (lo, hi) = (1.0 / (1.1 * 1.1), 1.1 * 1.1);
    for (a, b) in tr.conductances().as_slice().iter().zip(env.conductances().as_slice()) {
        assert_eq!(*a, b.clamp(lo, hi));
    }
}

#[test]
fn truncation_that_breaks_domination_is_reported() {
    let env = stream_env(2, 4, 12);
    let err = truncate(&env, 1.2).unwrap_err();
    assert!(err.to_string().contains("domin"), "{err}");
    assert!(truncate(&env, 0.5).is_err());
}

fn harmonic_mean_oracle(edges: &[f64]) -> f64 {
    edges.len() as f64 / edges.iter().map(|s| 1.0 / s).sum::<f64>()
}

#[test]
fn one_dimensional_diffusivity_is_twice_harmonic_mean() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = Torus::new(1, 16).unwrap();
        let edges: Vec<f64> = (0..16).map(|_| if rng.random::<bool>() { 1.0 } else { 4.0 }).collect();
        let env = Environment::from_parts(t.clone(), ConductanceField::from_edges(&t, &edges), FlowField::zero(&t), None);
        let asm = assemble(&env).unwrap();
        let eff = effective_diffusivity(&env, &asm, &HarmonicOptions::for_sites(16)).unwrap();
        let expect = 2.0 * harmonic_mean_oracle(&edges);
        assert!((eff.sigma[0] - expect).abs() <= 1e-10, "{} vs {expect}", eff.sigma[0]);
    }
}

#[test]
fn alternating_conductances_give_three_point_two() {
    let t = Torus::new(1, 8).unwrap();
    let edges: Vec<f64> = (0..8).map(|i| if i % 2 == 0 { 1.0 } else { 4.0 }).collect();
    let env = Environment::from_parts(t.clone(), ConductanceField::from_edges(&t, &edges), FlowField::zero(&t), None);
    let asm = assemble(&env).unwrap();
    let eff = effective_diffusivity(&env, &asm, &HarmonicOptions::for_sites(8)).unwrap();
    assert!((eff.sigma[0] - 3.2).abs() <= 1e-10);
}

#[test]
fn homogeneous_diffusivity_is_identity_times_two() {
    let env = Environment::homogeneous(Torus::new(2, 4).unwrap(), 1.0);
    let asm = assemble(&env).unwrap();
    let eff = effective_diffusivity(&env, &asm, &HarmonicOptions::for_sites(16)).unwrap();
    assert_eq!(eff.sigma, vec![2.0, 0.0, 0.0, 2.0]);
    assert_eq!(eff.lower_margin, 0.0);
}

#[test]
fn diffusivity_is_symmetric_and_above_lower_bound() {
    for env in small_envs() {
        let asm = assemble(&env).unwrap();
        let eff = effective_diffusivity(&env, &asm, &HarmonicOptions::for_sites(env.num_sites())).unwrap();
        let d = env.dim();
        for i in 0..d {
            for j in 0..d {
                assert!((eff.sigma[i * d + j] - eff.sigma[j * d + i]).abs() <= 1e-12);
            }
        }
        assert!(eff.min_eigenvalue >= 0.0);
        assert!(eff.lower_margin >= -1e-9, "{}", eff.lower_margin);
        assert!(eff.residual <= 1e-8);
    }
}

#[test]
fn reversible_diffusivity_is_below_upper_rate() {
    for seed in 0..6 {
        let env = reversible_env(2, 8, seed);
        let asm = assemble(&env).unwrap();
        let eff = effective_diffusivity(&env, &asm, &HarmonicOptions::for_sites(64)).unwrap();
        assert!(eff.upper_margin >= -1e-9, "{}", eff.upper_margin);
        assert!(eff.lower_margin >= -1e-9);
    }
}

#[test]
fn flow_can_push_diffusivity_above_upper_rate() {
    // weak conductances with a strong cellular flow
    let t = Torus::new(2, 8).unwrap();
    let h = StreamTensor::from_fn(&t, |x, _, _| {
        let c = t.coords(x);
        if (c[0] / 2 + c[1] / 2) % 2 == 0 { 1.0 } else { -1.0 }
    });
    let base = ConductanceField::constant(&t, 0.05);
    let env = rwre_core::env::make_conductance_stream_env(&t, &base, &h).unwrap();
    let asm = assemble(&env).unwrap();
    let eff = effective_diffusivity(&env, &asm, &HarmonicOptions::for_sites(64)).unwrap();
    let b = bounds(&env);
    assert!(eff.upper_margin < 0.0, "trace {} upper {}", eff.sigma[0] + eff.sigma[3], b.upper);
    assert!(eff.lower_margin >= -1e-9);
}

#[test]
fn export_round_trips_generator() {
    let env = stream_env(2, 4, 5);
    let asm = assemble(&env).unwrap();
    let mut out = Vec::new();
    asm.export('L', &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    let header: Vec<usize> = lines.next().unwrap().trim_start_matches('#').split_whitespace().map(|v| v.parse().unwrap()).collect();
    assert_eq!(header, vec![16, 16, asm.l.nnz()]);
    for line in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        let (r, c, v): (usize, usize, f64) = (parts[0].parse().unwrap(), parts[1].parse().unwrap(), parts[2].parse().unwrap());
        assert_eq!(v, asm.l.get(r, c));
    }
}

#[test]
fn corrector_potential_solves_generator_equation() {
    let env = stream_env(2, 8, 9);
    let asm = assemble(&env).unwrap();
    let phi = drift_fields(&env).total_component(1);
    let w = solve_harmonic(&asm, &phi, &HarmonicOptions::for_sites(64)).unwrap();
    let lg = asm.l.mul_vec(&w.potential);
    assert!(max_abs_diff(&lg, &phi) <= 1e-8);
    assert!(w.potential.iter().sum::<f64>().abs() <= 1e-10);
}
