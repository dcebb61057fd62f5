mod common;

use common::{max_abs, max_abs_diff, spec, stream_env};
use proptest::prelude::*;
use rwre_core::env::{ConductanceField, Distribution, EnvSpec, FlowField, Generator, GeneratorParams};
use rwre_core::mart::{
    bounds, bracket_averages, bracket_estimates, decompose_backward, decompose_forward,
    drift_fields, drift_fields_direct, dyadic_grid, orthogonality_tests, variance_scaling,
    MartingaleFields,
};
use rwre_core::stats::Estimate;
use rwre_core::walker::{run_replicas, simulate, StartPolicy};
use rwre_core::{Environment, Torus};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn drift_formulas_agree(seed in any::<u64>(), d in 1usize..=3, side in prop::sample::select(vec![2usize, 4, 8])) {
        let env = stream_env(d, side, seed);
        let a = drift_fields(&env);
        let b = drift_fields_direct(&env);
        prop_assert!(max_abs_diff(&a.phi, &b.phi) <= 1e-12);
        prop_assert!(max_abs_diff(&a.psi, &b.psi) <= 1e-12);
        let (mp, mq) = a.means();
        prop_assert!(max_abs(&mp) <= 1e-12 && max_abs(&mq) <= 1e-12);
    }

    #[test]
    fn bracket_densities_average_to_lower_matrix(seed in any::<u64>(), d in 1usize..=3) {
        let env = stream_env(d, 4, seed);
        let b = bounds(&env);
        let (phi, psi) = bracket_averages(&env, &b);
        prop_assert!(max_abs_diff(&phi, &b.lower) <= 1e-12, "{:?} vs {:?}", phi, b.lower);
        prop_assert!(max_abs(&psi) <= 1e-12);
        prop_assert!(b.lower_trace() <= b.upper + 1e-12);
    }

    #[test]
    fn path_identities_hold(seed in any::<u64>(), env_seed in 0u64..1000, asym in any::<bool>()) {
        let gen = if asym { Generator::TotallyAsymmetric } else { Generator::ConductanceStream };
        let env = spec(gen, 2, 4, env_seed).build().unwrap();
        let fields = MartingaleFields::new(&env);
        let grid = dyadic_grid(50.0, 4);
        let tr = simulate(&env, 0, 50.0, seed).unwrap();
        let paths = decompose_backward(&tr, &fields, &grid).unwrap();
        prop_assert!(paths.max_residual() <= 1e-10);
        for s in &paths.samples {
            let x = tr.displacement_at(s.t, 2);
            for a in 0..2 {
                prop_assert_eq!(s.x[a], x[a] as f64);
                prop_assert!((s.m[a] + s.i[a] + s.j[a] - s.x[a]).abs() <= 1e-10);
                prop_assert!((s.z[a] + s.y[a] + s.i[a] + s.j[a] - s.x[a]).abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn drift_integrals_match_holding_interval_sums() {
    let env = stream_env(2, 4, 31);
    let fields = MartingaleFields::new(&env);
    let tr = simulate(&env, 5, 40.0, 8).unwrap();
    let paths = decompose_forward(&tr, &fields, &[40.0]).unwrap();
    let last = paths.samples.last().unwrap();
    let mut i = [0.0; 2];
    let mut j = [0.0; 2];
    for (x, a, b) in tr.holding_intervals() {
        for c in 0..2 {
            i[c] += (b - a) * fields.drift.phi_at(x)[c];
            j[c] += (b - a) * fields.drift.psi_at(x)[c];
        }
    }
    assert!(max_abs_diff(&last.i, &i) < 1e-10);
    assert!(max_abs_diff(&last.j, &j) < 1e-10);
}

#[test]
fn checkerboard_flow_has_no_antisymmetric_drift() {
    let env = EnvSpec {
        generator: Generator::ConductanceStream,
        d: 2,
        side: 2,
        seed: 0,
        params: GeneratorParams {
            stream: Distribution::Checkerboard { amplitude: 1.0 },
            ..GeneratorParams::default()
        },
    }
    .build()
    .unwrap();
    assert!(drift_fields(&env).psi.iter().all(|&v| v == 0.0));
}

#[test]
fn checkerboard_asymmetric_bounds() {
    let env = EnvSpec {
        generator: Generator::TotallyAsymmetric,
        d: 2,
        side: 2,
        seed: 0,
        params: GeneratorParams {
            stream: Distribution::Checkerboard { amplitude: 1.0 },
            ..GeneratorParams::default()
        },
    }
    .build()
    .unwrap();
    let b = bounds(&env);
    assert_eq!(b.lower, vec![4.0, 0.0, 0.0, 4.0]);
    assert_eq!(b.upper, 8.0);
}

#[test]
fn pure_conductance_compensator_vanishes() {
    let t = Torus::new(2, 4).unwrap();
    let edges: Vec<f64> = (0..32).map(|e| 1.0 + (e % 5) as f64).collect();
    let env = Environment::from_parts(t.clone(), ConductanceField::from_edges(&t, &edges), FlowField::zero(&t), None);
    let f = MartingaleFields::new(&env);
    assert!(f.alpha.iter().all(|&v| v == 0.0));
}

#[test]
fn homogeneous_martingale_variance_is_bracket_rate() {
    let env = Environment::homogeneous(Torus::new(2, 8).unwrap(), 1.0);
    let fields = MartingaleFields::new(&env);
    let t = 100.0;
    let v = run_replicas(10_000, 13, None, |_, seed| {
        let tr = simulate(&env, 0, t, seed).unwrap();
        let p = decompose_forward(&tr, &fields, &[t]).unwrap();
        let m = &p.samples[0].m;
        (m[0] * m[0] + m[1] * m[1]) / t
    });
    let est = Estimate::batch_means(&v);
    assert!(est.within_se(4.0, 3.0), "{est:?}");
}

#[test]
fn homogeneous_orthogonality_is_exact() {
    let env = Environment::homogeneous(Torus::new(2, 4).unwrap(), 1.0);
    let fields = MartingaleFields::new(&env);
    let grid = dyadic_grid(16.0, 2);
    let paths = run_replicas(1_000, 3, None, |_, seed| {
        decompose_backward(&simulate(&env, 0, 16.0, seed).unwrap(), &fields, &grid).unwrap()
    });
    assert!(orthogonality_tests(&paths, 1, 2).is_err());
    let rep = orthogonality_tests(&paths, 0, 1).unwrap();
    assert_eq!((rep.z_y.mean, rep.z_ij.mean), (0.0, 0.0));
    assert!(rep.pass);
}

#[test]
fn backward_bracket_matches_lower_matrix() {
    let env = stream_env(2, 4, 44);
    let fields = MartingaleFields::new(&env);
    let t = 64.0;
    let paths = run_replicas(10_000, 19, None, |_, seed| {
        let x0 = StartPolicy::Uniform.site(seed, env.num_sites());
        decompose_backward(&simulate(&env, x0, t, seed).unwrap(), &fields, &[t]).unwrap()
    });
    let est = bracket_estimates(&paths, 0);
    for (e, target) in est.iter().zip(&fields.bounds.lower) {
        assert!(e.within_se(*target, 3.0), "{e:?} vs {target}");
    }
}

#[test]
fn reversible_sandwich() {
    // b ≡ 0: lower ≤ E(e·X)²/t ≤ upper
    let env = EnvSpec {
        generator: Generator::ConductanceStream,
        d: 2,
        side: 8,
        seed: 6,
        params: GeneratorParams {
            conductance: Distribution::TwoPoint { a: 1.0, b: 4.0, p: 0.5 },
            ..GeneratorParams::default()
        },
    }
    .build()
    .unwrap();
    let b = bounds(&env);
    let t = 200.0;
    let xs = run_replicas(4_000, 23, None, |_, seed| {
        let x0 = StartPolicy::Uniform.site(seed, env.num_sites());
        let tr = simulate(&env, x0, t, seed).unwrap();
        vec![tr.displacement.iter().map(|&v| v as f64).collect::<Vec<_>>()]
    });
    let vs = variance_scaling(&[t], &xs);
    for (a, e) in vs.directional.iter().enumerate() {
        assert!(e.mean + 3.0 * e.se >= b.lower[a * 2 + a], "{e:?}");
        assert!(e.mean - 3.0 * e.se <= b.s_avg[2 * a] + b.s_avg[2 * a + 1], "{e:?}");
    }
}
