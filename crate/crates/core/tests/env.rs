mod common;

use common::{asymmetric_env, stream_env};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rwre_core::env::generate::{random_conductances, random_stream};
use rwre_core::env::{
    curl, io, make_conductance_stream_env, make_totally_asymmetric_env, Distribution, StreamTensor,
};
use rwre_core::{EnvError, Torus};

fn shape() -> impl Strategy<Value = (usize, usize)> {
    (1usize..=3, prop::sample::select(vec![2usize, 4, 8]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn conductance_stream_envs_validate(seed in any::<u64>(), (d, side) in shape()) {
        let t = Torus::new(d, side).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let st = random_conductances(&t, &Distribution::Uniform { lo: 0.5, hi: 2.0 }, &mut rng);
        let h = random_stream(&t, &Distribution::Gaussian { mean: 0.0, sigma: 1.0 }, &mut rng);
        let env = make_conductance_stream_env(&t, &st, &h).unwrap();
        let rep = env.validate();
        prop_assert!(rep.passed(), "{:?}", rep.failures());
        prop_assert!(rep.min_domination_slack >= 0.0);
        let dirs = t.num_dirs();
        for x in 0..t.num_sites() {
            for k in t.dirs() {
                prop_assert_eq!(env.s(x, k), st.get(dirs, x, k) + env.b(x, k).abs());
            }
        }
    }

    #[test]
    fn totally_asymmetric_envs_are_one_way(seed in any::<u64>(), d in 2usize..=3, side in prop::sample::select(vec![2usize, 4, 8])) {
        let env = asymmetric_env(d, side, seed);
        let t = env.torus().clone();
        prop_assert!(env.validate().passed());
        for x in 0..t.num_sites() {
            for i in 0..d {
                let k = rwre_core::Dir::positive(i);
                let y = t.neighbor(x, k);
                let fwd = env.p(x, k);
                let back = env.p(y, k.opposite());
                prop_assert!((fwd > 0.0) != (back > 0.0), "edge ({x},{k}) rates {fwd} {back}");
                prop_assert_eq!(env.s(x, k), env.b(x, k).abs());
            }
        }
    }

    #[test]
    fn integer_streams_have_exactly_divergence_free_curl(seed in any::<u64>(), (d, side) in shape()) {
        let t = Torus::new(d, side).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_stream(&t, &Distribution::TwoPoint { a: -3.0, b: 5.0, p: 0.4 }, &mut rng);
        let b = curl(&t, &h);
        let dirs = t.num_dirs();
        for x in 0..t.num_sites() {
            let div: f64 = t.dirs().map(|k| b.get(dirs, x, k)).sum();
            prop_assert_eq!(div, 0.0);
            for k in t.dirs() {
                prop_assert_eq!(b.get(dirs, x, k), -b.get(dirs, t.neighbor(x, k), k.opposite()));
            }
        }
    }

    #[test]
    fn json_round_trip_is_lossless(seed in any::<u64>(), (d, side) in shape()) {
        let env = stream_env(d, side, seed);
        let back = io::from_json(&io::to_json(&env)).unwrap();
        prop_assert_eq!(back.rates(), env.rates());
        prop_assert_eq!(back.header(), env.header());
    }
}

#[test]
fn float_curl_is_divergence_free_to_machine_precision() {
    for seed in 0..20 {
        let env = stream_env(3, 4, seed);
        let t = env.torus();
        let scale = env.flow().as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for x in 0..t.num_sites() {
            let div: f64 = t.dirs().map(|k| env.b(x, k)).sum();
            assert!(div.abs() <= 1e-12 * scale, "seed {seed} site {x}: {div}");
        }
    }
}

#[test]
fn loader_rejects_domination_violation() {
    let env = stream_env(2, 4, 3);
    let mut doc: serde_json::Value = serde_json::from_str(&io::to_json(&env)).unwrap();
    let s = doc["s"].as_array_mut().unwrap();
    s[5] = serde_json::json!(0.0);
    let err = io::from_json(&doc.to_string()).unwrap_err();
    assert!(matches!(err, EnvError::Invalid(_)), "{err}");
}

#[test]
fn file_round_trip() {
    let env = asymmetric_env(2, 4, 11);
    let dir = std::env::temp_dir().join(format!("rwre-env-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("env.json");
    io::save(&env, &path).unwrap();
    let back = io::load(&path).unwrap();
    assert_eq!(back.rates().as_slice(), env.rates().as_slice());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn degenerate_asymmetric_env_reports_infinite_inverse_norm() {
    let t = Torus::new(2, 4).unwrap();
    let env = make_totally_asymmetric_env(&t, &StreamTensor::zero(&t), false).unwrap();
    let diag = env.integrability_diagnostics();
    assert!(diag.r_inv_sq.iter().all(|v| v.is_infinite()));
    assert_eq!(diag.singular_edges.len(), t.num_sites() * t.num_dirs());
}

#[test]
fn stream_tensor_images_are_consistent() {
    let env = stream_env(3, 4, 99);
    let h = env.stream().unwrap();
    assert!(h.symmetry_residual(env.torus()) <= 1e-12 * h.max_abs());
}
