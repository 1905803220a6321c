use nalgebra::DMatrix;
use proptest::prelude::*;
use zeroinfl::count_models::Flavor;
use zeroinfl::mle::*;
use zeroinfl::synth::{gen_setting_one, SettingConfig};

fn design(x: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), 2, |i, j| if j == 0 { 1.0 } else { x[i] })
}

fn fit_both(flavor: Flavor, seed: u64) -> (Vec<u64>, DMatrix<f64>, RegressionFit, RegressionFit) {
    let (y, x) = gen_setting_one(&SettingConfig::setting_one(flavor, -0.5), seed).unwrap();
    let d = design(&x);
    let opts = FitOptions::default();
    let zinb = fit_regression(&y, &d, &d, Flavor::ZINB, &opts).unwrap();
    let hnb = fit_regression(&y, &d, &d, Flavor::HNB, &opts).unwrap();
    (y, d, zinb, hnb)
}

#[test]
fn hurdle_coefficients_are_covered() {
    let truth = [12f64.ln(), 2.0, -0.5, 2.0, 0.5f64.ln()];
    let (mut covered, mut total) = (0, 0);
    for seed in 0..10 {
        let (y, d, _, hnb) = fit_both(Flavor::HNB, seed);
        assert!(hnb.converged);
        let se = standard_errors(&y, &d, &d, &hnb).unwrap();
        let c = &hnb.coefficients;
        let est = [c.beta[0], c.beta[1], c.gamma[0], c.gamma[1], c.log_r];
        for k in 0..5 {
            total += 1;
            covered += usize::from((est[k] - truth[k]).abs() <= 3.0 * se[k]);
        }
    }
    assert!(covered as f64 >= 0.9 * total as f64, "{covered}/{total}");
}

#[test]
fn aic_prefers_the_generating_model() {
    for seed in 0..4 {
        let (_, _, zinb, hnb) = fit_both(Flavor::ZINB, 100 + seed);
        assert!(aic(&zinb) < aic(&hnb), "ZINB data, seed {seed}");
        let (_, _, zinb, hnb) = fit_both(Flavor::HNB, 200 + seed);
        assert!(aic(&hnb) < aic(&zinb), "HNB data, seed {seed}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn fitted_loglik_matches_direct_evaluation(seed in 0u64..1000) {
        let (y, d, zinb, hnb) = fit_both(Flavor::HNB, seed);
        prop_assert_eq!(zinb.aic, aic(&zinb));
        prop_assert_eq!(hnb.n_params, 5);
        prop_assert!((zinb_loglik(&y, &d, &d, &zinb.coefficients).unwrap().total - zinb.loglik).abs() < 1e-8);
        prop_assert!((hnb_loglik(&y, &d, &hnb.coefficients).unwrap() - hnb.loglik).abs() < 1e-8);
    }
}
