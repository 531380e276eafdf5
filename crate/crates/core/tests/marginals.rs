use mrisk::marginals::{Growth, KinkLines};
use mrisk::{ExpectationEngine, MarginalLaw, ScalarConvexFunction};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

fn sparse(s: f64) -> MarginalLaw {
    MarginalLaw::sparse_gaussian(s)
}

#[test]
fn gaussian_second_moment_under_any_law() {
    let e = ExpectationEngine::default();
    for law in [MarginalLaw::point(0.0), sparse(0.1), MarginalLaw::gaussian(3.0, 0.5)] {
        let (v, _) = e.expect_gw(&law, Growth::WBounded, |g, _| g * g).unwrap();
        assert!((v - 1.0).abs() < 1e-12, "{v} for {}", law.describe());
    }
    // Cauchy parts are sampled jointly in (G, W), so only the error bar applies
    let (v, err) = e.expect_gw(&MarginalLaw::sparse_cauchy(0.3), Growth::WBounded, |g, _| g * g).unwrap();
    assert!((v - 1.0).abs() <= err, "{v} +- {err}");
}

#[test]
fn mixture_moments() {
    let e = ExpectationEngine::default();
    let (v, _) = e.expect_gw(&sparse(0.1), Growth::Unbounded, |_, w| w * w).unwrap();
    assert!((v - 0.1).abs() < 1e-12);
    let (v, _) = e.expect_gw(&sparse(0.3), Growth::Unbounded, |g, w| (g + w).powi(2)).unwrap();
    assert!((v - 1.3).abs() < 1e-12);
}

#[test]
fn mixture_moment_against_plain_monte_carlo() {
    // independent oracle: 10^7 direct draws of (G, W)
    let n = 10_000_000;
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(2024);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        let g: f64 = StandardNormal.sample(&mut rng);
        let u: f64 = rand::Rng::random(&mut rng);
        let w: f64 = if u < 0.7 { 0.0 } else { StandardNormal.sample(&mut rng) };
        let v = (g + w) * (g + w);
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / n as f64;
    let se = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
    let e = ExpectationEngine::default();
    let (v, _) = e.expect_gw(&sparse(0.3), Growth::Unbounded, |g, w| (g + w).powi(2)).unwrap();
    assert!((v - mean).abs() < 4.0 * se, "{v} vs {mean} +- {se}");
}

fn gaussian_moment(k: u32) -> f64 {
    match k {
        0 => 1.0,
        2 => 1.0,
        4 => 3.0,
        _ => 0.0,
    }
}

fn normal_moment(k: u32, m: f64, s: f64) -> f64 {
    match k {
        0 => 1.0,
        1 => m,
        2 => m * m + s * s,
        3 => m.powi(3) + 3.0 * m * s * s,
        4 => m.powi(4) + 6.0 * m * m * s * s + 3.0 * s.powi(4),
        _ => unreachable!(),
    }
}

#[test]
fn polynomial_moments_up_to_degree_four() {
    let e = ExpectationEngine::default();
    let (m, s) = (0.5, 2.0);
    let law = MarginalLaw::point(-1.5).mix(&MarginalLaw::gaussian(m, s), 0.4);
    for a in 0..=4u32 {
        for b in 0..=(4 - a) {
            let (v, _) = e.expect_gw(&law, Growth::Unbounded, |g, w| g.powi(a as i32) * w.powi(b as i32)).unwrap();
            let w_moment = 0.6 * (-1.5f64).powi(b as i32) + 0.4 * normal_moment(b, m, s);
            let want = gaussian_moment(a) * w_moment;
            assert!((v - want).abs() < 1e-10 * (1.0 + want.abs()), "E g^{a} w^{b}: {v} vs {want}");
        }
    }
}

#[test]
fn doubling_nodes_stays_within_the_error_estimate() {
    let coarse = ExpectationEngine::new(61, 1000, 0);
    let fine = ExpectationEngine::new(122, 1000, 0);
    for (f, law) in [
        (ScalarConvexFunction::abs(), sparse(0.1)),
        (ScalarConvexFunction::huber(1.0), sparse(0.3)),
        (ScalarConvexFunction::quantile(0.3), MarginalLaw::gaussian(0.2, 1.5)),
        (ScalarConvexFunction::pseudo_huber(), sparse(0.5)),
    ] {
        for (alpha, kappa) in [(0.3, 0.5), (1.0, 1.0), (2.0, 0.1)] {
            let kinks = KinkLines::new(alpha, f.prox_kinks(kappa));
            let phi = |g: f64, z: f64| {
                let r = f.prox_residual(alpha * g + z, kappa);
                [r * r, r * g]
            };
            let a = coarse.expect_gw_vec(&law, Growth::WBounded, &kinks, phi).unwrap();
            let b = fine.expect_gw_vec(&law, Growth::WBounded, &kinks, phi).unwrap();
            for i in 0..2 {
                let diff = (a.value[i] - b.value[i]).abs();
                assert!(diff <= a.error[i], "{f:?} component {i}: {diff} > {}", a.error[i]);
            }
        }
    }
}

#[test]
fn sampling() {
    assert_eq!(MarginalLaw::point(0.0).sample(5, 99), vec![0.0; 5]);
    let law = sparse(0.1);
    let draws = law.sample(1_000_000, 3);
    let zeros = draws.iter().filter(|&&v| v == 0.0).count() as f64 / 1e6;
    assert!((zeros - 0.9).abs() < 1e-3, "{zeros}");
    assert_eq!(draws, law.sample(1_000_000, 3));
    assert_ne!(draws, law.sample(1_000_000, 4));
}

#[test]
fn mass_off_zero() {
    assert_eq!(MarginalLaw::point(0.0).prob_nonzero(), 0.0);
    assert!((sparse(0.1).prob_nonzero() - 0.1).abs() < 1e-15);
    for s in [0.1, 0.25, 0.9] {
        assert!((MarginalLaw::sparse_cauchy(s).prob_nonzero() - s).abs() < 1e-15);
    }
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn monte_carlo_does_not_depend_on_worker_count() {
    let law = MarginalLaw::sparse_cauchy(0.3);
    let abs = ScalarConvexFunction::abs();
    let run = || {
        let e = ExpectationEngine::new(61, 100_000, 17);
        let v = e.expect_gw(&law, Growth::WBounded, |g, z| abs.prox_residual(0.5 * g + z, 1.0).powi(2)).unwrap();
        (v, law.sample(50_000, 5))
    };
    let one = in_pool(1, run);
    let four = in_pool(4, run);
    assert_eq!(one.0 .0.to_bits(), four.0 .0.to_bits());
    assert_eq!(one.0 .1.to_bits(), four.0 .1.to_bits());
    assert_eq!(one.1, four.1);
}

#[test]
fn cauchy_needs_a_bounded_integrand() {
    let e = ExpectationEngine::new(61, 1000, 0);
    let r = e.expect_gw(&MarginalLaw::sparse_cauchy(0.2), Growth::Unbounded, |_, w| w * w);
    assert_eq!(r, Err(mrisk::Error::UnboundedFunctional));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_of_valid_mixtures_sum_to_one(s in 0.0f64..1.0, t in 0.0f64..1.0) {
        let law = sparse(s).mix(&MarginalLaw::sparse_cauchy(t), 0.5);
        prop_assert!(law.validate().is_ok());
        let total: f64 = law.atoms.iter().map(|a| a.w).sum::<f64>() + law.continuous.iter().map(|c| c.w).sum::<f64>();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!((law.prob_nonzero() - 0.5 * (s + t)).abs() < 1e-12);
    }

    #[test]
    fn descriptors_round_trip(s in 0.01f64..0.99, m in -3.0f64..3.0, sd in 0.1f64..4.0) {
        let law = MarginalLaw::point(0.0).mix(&MarginalLaw::gaussian(m, sd), s);
        let back = mrisk::descriptor::parse_law(&law.describe()).unwrap();
        prop_assert_eq!(back, law);
    }
}
