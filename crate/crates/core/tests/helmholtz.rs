mod common;

use common::max_abs_diff;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rwre_core::env::generate::random_stream;
use rwre_core::env::{curl, Distribution, FlowField, StreamTensor};
use rwre_core::helmholtz::{
    flux, laplacian, poisson_solve, stream_from_flow, HelmholtzError, PoissonMethod,
};
use rwre_core::Torus;

fn mean_zero(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut f: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let m = f.iter().sum::<f64>() / n as f64;
    f.iter_mut().for_each(|v| *v -= m);
    f
}

#[test]
fn single_fourier_mode() {
    for (d, side) in [(1, 8), (2, 8), (3, 6)] {
        let t = Torus::new(d, side).unwrap();
        let w = 2.0 * std::f64::consts::PI / side as f64;
        let f: Vec<f64> = (0..t.num_sites()).map(|x| (w * t.coord(x, 0) as f64).cos()).collect();
        let lambda = 2.0 * (w.cos() - 1.0);
        let expect: Vec<f64> = f.iter().map(|v| v / lambda).collect();
        for method in [PoissonMethod::Spectral, PoissonMethod::ConjugateGradient] {
            let u = poisson_solve(&t, &f, method).unwrap();
            assert!(max_abs_diff(&u, &expect) < 1e-10, "{method:?} d={d}");
        }
    }
}

#[test]
fn mixed_fourier_mode() {
    let t = Torus::new(2, 8).unwrap();
    let w = 2.0 * std::f64::consts::PI / 8.0;
    let f: Vec<f64> = (0..64)
        .map(|x| (w * t.coord(x, 0) as f64).sin() * (3.0 * w * t.coord(x, 1) as f64).cos())
        .collect();
    let lambda = 2.0 * (w.cos() - 1.0) + 2.0 * ((3.0 * w).cos() - 1.0);
    let expect: Vec<f64> = f.iter().map(|v| v / lambda).collect();
    let u = poisson_solve(&t, &f, PoissonMethod::Spectral).unwrap();
    assert!(max_abs_diff(&u, &expect) < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn poisson_routes_agree(seed in any::<u64>(), d in 1usize..=3, side in 2usize..=7) {
        let t = Torus::new(d, side).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = mean_zero(t.num_sites(), &mut rng);
        let a = poisson_solve(&t, &f, PoissonMethod::Spectral).unwrap();
        let b = poisson_solve(&t, &f, PoissonMethod::ConjugateGradient).unwrap();
        prop_assert!(max_abs_diff(&a, &b) <= 1e-9);
        prop_assert!(max_abs_diff(&laplacian(&t, &a), &f) <= 1e-10);
        prop_assert!(a.iter().sum::<f64>().abs() <= 1e-10);
    }

    #[test]
    fn curl_round_trip(seed in any::<u64>(), d in 2usize..=3, side in prop::sample::select(vec![2usize, 3, 4, 6])) {
        let t = Torus::new(d, side).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h0 = random_stream(&t, &Distribution::Gaussian { mean: 0.0, sigma: 1.0 }, &mut rng);
        let b = curl(&t, &h0);
        for method in [PoissonMethod::Spectral, PoissonMethod::ConjugateGradient] {
            let rec = stream_from_flow(&t, &b, method).unwrap();
            let back = curl(&t, &rec.stream);
            prop_assert!(max_abs_diff(back.as_slice(), b.as_slice()) <= 1e-10);
            prop_assert!(rec.stream.symmetry_residual(&t) <= 1e-11);
            prop_assert!(rec.residuals.symmetry <= 1e-11);
        }
    }
}

#[test]
fn gauge_freedom_is_visible() {
    // a constant plaquette field has zero curl, so it is lost in the round trip
    let t = Torus::new(2, 4).unwrap();
    let h0 = StreamTensor::from_fn(&t, |_, _, _| 0.8);
    let b = curl(&t, &h0);
    assert!(b.as_slice().iter().all(|&v| v == 0.0));
    let rec = stream_from_flow(&t, &b, PoissonMethod::Spectral).unwrap();
    assert_eq!(rec.stream.max_abs(), 0.0);
    assert_ne!(rec.stream.canonical(), h0.canonical());
}

#[test]
fn checkerboard_flow_has_zero_flux() {
    let t = Torus::new(2, 2).unwrap();
    let h = StreamTensor::from_fn(&t, |x, _, _| if t.parity(x) == 0 { 1.0 } else { -1.0 });
    let b = curl(&t, &h);
    assert_eq!(flux(&t, &b), vec![0.0, 0.0]);
    let rec = stream_from_flow(&t, &b, PoissonMethod::Spectral).unwrap();
    assert!(max_abs_diff(curl(&t, &rec.stream).as_slice(), b.as_slice()) <= 1e-12);
}

#[test]
fn constant_drift_is_obstructed_in_three_dimensions() {
    let t = Torus::new(3, 4).unwrap();
    let edges: Vec<f64> = (0..64).flat_map(|_| [0.0, -1.5, 0.0]).collect();
    let b = FlowField::from_edges(&t, &edges);
    match stream_from_flow(&t, &b, PoissonMethod::ConjugateGradient) {
        Err(HelmholtzError::NonzeroFlux { direction, value }) => {
            assert_eq!(direction, 1);
            assert!((value + 1.5).abs() < 1e-12);
        }
        other => panic!("{other:?}"),
    }
}
