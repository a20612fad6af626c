use rskld::quadrature::{integrate, QuadConfig};
use rskld::rmt::{log_joint_density, sample_gue_spectrum, traceless};
use rskld::rng::substream_key;
use rskld::stats::ks_one_sample;
use rskld::variational::semicircle_cdf;

#[test]
fn moderate_dimension_spectral_means() {
    let m = 50;
    let reps = 2_000;
    let (mut top, mut second_moment) = (0.0, 0.0);
    for i in 0..reps {
        let s = sample_gue_spectrum(m, substream_key(50, 0, i)).unwrap();
        let xi = s.scaled();
        top += xi[0];
        second_moment += xi.iter().map(|x| x * x).sum::<f64>() / m as f64;
        let t = traceless(&s).unwrap();
        assert!(t.eigenvalues.iter().sum::<f64>().abs() <= 1e-9 * m as f64);
    }
    let (top, second_moment) = (top / reps as f64, second_moment / reps as f64);
    assert!((1.85..=2.05).contains(&top), "{top}");
    assert!((0.95..=1.05).contains(&second_moment), "{second_moment}");
}

#[test]
fn large_sample_follows_the_semicircle() {
    let s = sample_gue_spectrum(200, 77).unwrap();
    let d = ks_one_sample(&s.scaled(), semicircle_cdf).unwrap();
    assert!(d < 0.08, "{d}");
}

#[test]
fn two_dimensional_density_integrates_to_one() {
    let cfg = QuadConfig { abs_tol: 1e-11, rel_tol: 1e-11, max_intervals: 2000 };
    // the density is symmetric; integrate over x1 >= x2 and double, truncating at |x| = 8
    let inner = |a: f64| {
        integrate(|b: f64| log_joint_density(&[a, b]).unwrap().exp(), -8.0, a, &cfg).unwrap().value
    };
    let total = 2.0 * integrate(inner, -8.0, 8.0, &cfg).unwrap().value;
    assert!((total - 1.0).abs() < 1e-3, "{total}");
}
