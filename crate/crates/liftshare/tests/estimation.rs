//! Estimation checks against the synthetic generator's known ground truth.

use liftshare::{
    coalition_weights, estimate_all, estimate_ips, estimate_mean, fit_empirical, fit_factorized,
    fit_joint, generate, marginal_effect, Coalition, Estimator, FitConfig, GeneratorConfig,
    PropensityKind, SignMode,
};

fn rct_config(n: usize, dim: usize, m: usize, seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        n,
        dim,
        m_treatments: m,
        rct: true,
        seed,
        sign_mode: SignMode::Alternating,
    }
}

fn confounded_config(n: usize, dim: usize, m: usize, seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        rct: false,
        ..rct_config(n, dim, m, seed)
    }
}

#[test]
fn joint_fit_on_rct_data_recovers_class_frequencies() {
    let (table, _) = generate(&rct_config(4000, 3, 2, 71)).unwrap();
    let model = fit_joint(&table, &FitConfig::default()).unwrap();

    // assignment ignores covariates: slopes on the original scale are small
    let summary = model.summary();
    for group in &summary.coefficients {
        for slope in &group.slopes {
            assert!(slope.abs() < 0.15, "slope {slope} too far from zero");
        }
    }

    // predicted probabilities sit near the empirical class frequencies
    let freqs = table.coalition_frequencies();
    for x in [[0.0, 0.0, 0.0], [1.0, -1.0, 0.5]] {
        let probs = model.predict(&x).unwrap();
        for (t, freq) in &freqs {
            let p = probs[t.mask() as usize];
            assert!(
                (p - freq).abs() < 0.03,
                "coalition {t}: predicted {p}, frequency {freq}"
            );
        }
    }
}

#[test]
fn factorized_fit_on_fair_coins_gives_uniform_coalitions() {
    let (table, _) = generate(&rct_config(4000, 2, 2, 5)).unwrap();
    let model = fit_factorized(&table, &FitConfig::default()).unwrap();
    for x in [[0.0, 0.0], [2.0, -0.7]] {
        for p in model.predict(&x).unwrap() {
            assert!((p - 0.25).abs() < 0.03, "coalition probability {p}");
        }
    }
}

#[test]
fn factorized_fit_recovers_the_confounded_assignment_mechanism() {
    let config = confounded_config(10_000, 5, 3, 2024);
    let (table, truth) = generate(&config).unwrap();
    let model = fit_factorized(&table, &FitConfig::default()).unwrap();

    let mut abs_err = 0.0;
    let mut count = 0usize;
    let mut true_probs = vec![0.0; 8];
    for i in 0..table.len() {
        let x = table.covariate_row(i);
        let score: f64 = x
            .iter()
            .zip(&truth.assignment_direction)
            .map(|(a, b)| a * b)
            .sum();
        for (mask, slot) in true_probs.iter_mut().enumerate() {
            let mut p = 1.0;
            for l in 0..3 {
                let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
                let pl = 1.0 / (1.0 + (-sign * score).exp());
                p *= if mask >> l & 1 == 1 { pl } else { 1.0 - pl };
            }
            *slot = p;
        }
        let fitted = model.predict(x).unwrap();
        for (a, b) in fitted.iter().zip(&true_probs) {
            abs_err += (a - b).abs();
            count += 1;
        }
    }
    let mae = abs_err / count as f64;
    assert!(mae < 0.02, "mean absolute propensity error {mae}");
}

#[test]
fn model_averaged_weights_match_the_rct_design() {
    let (table, _) = generate(&rct_config(10_000, 2, 2, 99)).unwrap();
    let model = fit_factorized(&table, &FitConfig::default()).unwrap();
    let weights = coalition_weights(&model, &table).unwrap();
    for (t, p) in weights {
        assert!((p - 0.25).abs() < 0.02, "coalition {t}: weight {p}");
    }
}

#[test]
fn mean_estimates_on_rct_data_cover_the_true_effects() {
    let config = rct_config(4000, 2, 2, 31);
    let (table, truth) = generate(&config).unwrap();
    let est = estimate_all(&table, Estimator::Mean, None, None).unwrap();
    assert_eq!(est.values.len() + 1, 4); // all four coalitions observed
    // Var(Y) = |outcome ramp|^2 + noise = 2; each arm holds about n/4 rows
    for (t, mu) in &est.values {
        let n_t = est.counts[t] as f64;
        let tol = 3.0 * (2.0_f64 / n_t).sqrt();
        let target = truth.tau[t];
        assert!(
            (mu - target).abs() < tol,
            "coalition {t}: {mu} vs {target} (tol {tol})"
        );
    }
    let base_tol = 3.0 * (2.0_f64 / est.counts[&Coalition::EMPTY] as f64).sqrt();
    assert!(est.baseline.abs() < base_tol);
}

#[test]
fn ips_matches_mean_on_rct_data() {
    let (table, _) = generate(&rct_config(5000, 2, 2, 64)).unwrap();
    let empirical = fit_empirical(&table);
    let model = fit_factorized(&table, &FitConfig::default()).unwrap();
    for mask in 0u32..4 {
        let t = Coalition(mask);
        let mean = estimate_mean(&table, t).unwrap().mu_hat;
        let exact = estimate_ips(&table, &empirical, t).unwrap().mu_hat;
        assert!((exact - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        // the fitted model deviates from the design frequencies only by
        // sampling noise, so model-based IPS stays close to the group mean
        let fitted = estimate_ips(&table, &model, t).unwrap().mu_hat;
        assert!((fitted - mean).abs() < 0.1, "{fitted} vs {mean}");
    }
}

#[test]
fn marginal_effects_match_the_uniform_coalition_average() {
    let config = rct_config(8000, 2, 3, 87);
    let (table, truth) = generate(&config).unwrap();
    for l in 0..3 {
        let effect =
            marginal_effect(&table, l, Estimator::Mean, PropensityKind::Empirical, &FitConfig::default())
                .unwrap();
        // under the uniform RCT design the marginal contrast is the average
        // effect over coalitions containing l minus the average over the rest
        let mut with = 0.0;
        let mut without = 0.0;
        for mask in 0u32..8 {
            let tau = truth.tau.get(&Coalition(mask)).copied().unwrap_or(0.0);
            if Coalition(mask).contains(l) {
                with += tau / 4.0;
            } else {
                without += tau / 4.0;
            }
        }
        let target = with - without;
        assert!(
            (effect.ate - target).abs() < 0.12,
            "experiment {l}: {} vs {target}",
            effect.ate
        );
    }
}

#[test]
fn mean_and_ips_attributions_tie_without_confounding() {
    // randomized assignment leaves the group means unbiased, so the two
    // pipelines score the same up to noise: the paired per-replication
    // error difference stays within two standard errors of zero
    use liftshare::{run_benchmark, AttributionMethod};
    let config = rct_config(10_000, 5, 3, 777);
    let replications = 20;
    let report = run_benchmark(
        &config,
        replications,
        &[Estimator::Mean, Estimator::Ips],
        &[AttributionMethod::WeightedShapley],
        1000,
    )
    .unwrap();
    let mut l2 = vec![[0.0f64; 2]; replications];
    for row in &report.rows {
        let which = usize::from(row.estimator == "ips");
        l2[row.replication][which] += (row.delta_hat - row.delta_true).powi(2);
    }
    let diffs: Vec<f64> = l2.iter().map(|e| e[1].sqrt() - e[0].sqrt()).collect();
    let mean_diff = diffs.iter().sum::<f64>() / replications as f64;
    let var = diffs
        .iter()
        .map(|d| (d - mean_diff).powi(2))
        .sum::<f64>()
        / (replications - 1) as f64;
    let se = (var / replications as f64).sqrt();
    assert!(
        mean_diff.abs() <= 2.0 * se,
        "paired error difference {mean_diff} exceeds 2 x SE {se}"
    );
}

#[test]
fn ips_beats_the_mean_estimator_under_confounding() {
    // one large confounded draw: the group means absorb the covariate ramp,
    // inverse propensity weighting removes it
    let config = confounded_config(20_000, 5, 2, 7);
    let (table, truth) = generate(&config).unwrap();
    let model = fit_factorized(&table, &FitConfig::default()).unwrap();
    let mut mean_err = 0.0;
    let mut ips_err = 0.0;
    for (t, &tau) in &truth.tau {
        mean_err += (estimate_mean(&table, *t).unwrap().mu_hat - tau).abs();
        ips_err += (estimate_ips(&table, &model, *t).unwrap().mu_hat - tau).abs();
    }
    assert!(
        ips_err < mean_err,
        "ips total error {ips_err} should undercut mean total error {mean_err}"
    );
}
