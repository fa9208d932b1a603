//! Exposure sampling and estimation against the simulated target: the
//! Bernoulli miss law calibration, placement monotonicity, the confidence
//! doubling budget, and a bootstrap check of the variance formula.

mod common;

use rand::Rng;
use symrank::backend::prompts::probe_request;
use symrank::backend::{
    parse::parse_count_reply, LlmBackend, MissModel, SimulatedLlm, SimulatorConfig,
};
use symrank::exposure::{
    estimate_profile, estimate_with_confidence, make_probe_with_window, sample_errors,
    ExposureSample,
};

fn probe_backend(probe: &symrank::exposure::ProbeTask, config: SimulatorConfig) -> LlmBackend {
    LlmBackend::simulated(SimulatedLlm::probe(
        config,
        probe.counts.clone(),
        probe.tracked.clone(),
    ))
}

#[test]
fn bernoulli_count_error_matches_the_closed_form_expectation() {
    // A token occupying positions S has expected count error
    // sum_{i in S} (1 - exposure[i]); empirical means converge like 1/sqrt(N).
    let n = 12;
    let probe = make_probe_with_window(3, n, 4, 17);
    let texts: Vec<&str> = probe.task.elements.iter().map(|e| e.text.as_str()).collect();
    let truth: Vec<f64> = (0..n).map(|i| 0.3 + 0.05 * i as f64).collect();
    let positions: Vec<usize> = texts
        .iter()
        .enumerate()
        .filter(|(_, t)| **t == probe.tracked)
        .map(|(i, _)| i)
        .collect();
    let expected: f64 = positions.iter().map(|&i| 1.0 - truth[i]).sum();

    let mut errors = Vec::new();
    for seed in 0..500u64 {
        let config = SimulatorConfig::new(truth.clone(), seed);
        let backend = probe_backend(&probe, config);
        let reply = backend.complete(&probe_request(&texts)).unwrap();
        let reported = parse_count_reply(&reply.text).unwrap();
        let got = reported.get(&probe.tracked).copied().unwrap_or(0.0);
        errors.push((probe.counts[&probe.tracked] - got).abs());
    }
    let mean = common::mean(&errors);
    let bound = 3.0 * common::stderr(&errors);
    assert!(
        (mean - expected).abs() <= bound,
        "mean error {mean} vs expectation {expected} (3 stderr = {bound})"
    );
}

#[test]
fn zero_exposure_block_loses_exactly_its_copies() {
    // Positions 2..5 hold three tracked copies and are never retained.
    let tokens: Vec<String> = ["b", "b", "a", "a", "a", "b", "b", "b"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let probe = symrank::exposure::ProbeTask::from_tokens(tokens.clone(), "a");
    let mut truth = vec![1.0; 8];
    for t in truth.iter_mut().take(5).skip(2) {
        *t = 0.0;
    }
    for seed in 0..50u64 {
        let backend = probe_backend(&probe, SimulatorConfig::new(truth.clone(), seed));
        let texts: Vec<&str> = tokens.iter().map(String::as_str).collect();
        let reply = backend.complete(&probe_request(&texts)).unwrap();
        let reported = parse_count_reply(&reply.text).unwrap();
        assert_eq!(reported["a"], 0.0, "all tracked copies sit in the dead block");
        assert_eq!(reported["b"], 5.0);
    }
}

#[test]
fn tracked_token_placed_early_sees_smaller_errors_under_decaying_exposure() {
    let n = 20;
    let probe = make_probe_with_window(2, n, 1, 3);
    assert_eq!(probe.tracked_count(), 1);
    let texts: Vec<String> = probe.task.elements.iter().map(|e| e.text.clone()).collect();
    let tracked_at = |pos: usize| -> Vec<&str> {
        let mut order: Vec<&str> = texts
            .iter()
            .filter(|t| **t != probe.tracked)
            .map(String::as_str)
            .collect();
        order.insert(pos, &probe.tracked);
        order
    };
    let truth: Vec<f64> = (1..=n).map(|i| 1.0 / i as f64).collect();

    let (mut first, mut last) = (Vec::new(), Vec::new());
    for seed in 0..200u64 {
        let backend = probe_backend(&probe, SimulatorConfig::new(truth.clone(), seed));
        for (pos, bucket) in [(0, &mut first), (n - 1, &mut last)] {
            let reply = backend.complete(&probe_request(&tracked_at(pos))).unwrap();
            let reported = parse_count_reply(&reply.text).unwrap();
            let got = reported.get(&probe.tracked).copied().unwrap_or(0.0);
            bucket.push((1.0 - got).abs());
        }
    }
    assert!(
        common::mean(&first) < common::mean(&last),
        "mean error at the front {} should undercut the back {}",
        common::mean(&first),
        common::mean(&last)
    );
}

fn threshold_config(truth: Vec<f64>, noise: f64, seed: u64) -> SimulatorConfig {
    SimulatorConfig {
        miss_model: MissModel::Threshold,
        probe_noise_std: noise,
        ..SimulatorConfig::new(truth, seed)
    }
}

#[test]
fn noiseless_discovery_converges_at_the_initial_budget() {
    let n = 30;
    let probe = make_probe_with_window(4, n, 10, 5);
    let truth: Vec<f64> = (1..=n).map(|i| 0.1 / i as f64).collect();
    let backend = probe_backend(&probe, threshold_config(truth, 0.0, 5));
    let profile = estimate_with_confidence(&backend, &probe, 1e-8, n + 10, 16 * n, 5).unwrap();
    assert_eq!(profile.df, 10, "no doubling should have happened");
    assert!(!profile.target_not_met);
    assert!(profile.max_variance() < 1e-8);
}

#[test]
fn tight_budget_sets_the_flag_without_doubling() {
    let n = 16;
    let probe = make_probe_with_window(3, n, 6, 7);
    let truth: Vec<f64> = (1..=n).map(|i| 0.1 / i as f64).collect();
    let backend = probe_backend(&probe, threshold_config(truth, 0.2, 7));
    let p0 = n + 4;
    // p_max below 2 * p0: no doubling is possible.
    let profile = estimate_with_confidence(&backend, &probe, 1e-18, p0, 2 * p0 - 1, 7).unwrap();
    assert!(profile.target_not_met);
    assert_eq!(profile.df, p0 - n);
}

#[test]
fn doubling_reduces_the_worst_variance() {
    let n = 24;
    let probe = make_probe_with_window(4, n, 8, 9);
    let truth: Vec<f64> = symrank::types::ExposureProfile::<f64>::hump(n)
        .values
        .iter()
        .map(|v| 0.1 * v / 0.95)
        .collect();
    let backend = probe_backend(&probe, threshold_config(truth, 0.15, 9));
    let samples = sample_errors(&backend, &probe, 8 * n, 9).unwrap();
    let mut last = f64::INFINITY;
    for p in [n + 8, 2 * (n + 8), 4 * (n + 8)] {
        let profile = estimate_profile(&samples[..p]).unwrap();
        let v = profile.max_variance();
        assert!(v < last, "variance {v} did not drop below {last} at p={p}");
        last = v;
    }
}

#[test]
fn reported_variances_agree_with_a_bootstrap_within_a_factor_of_two() {
    let n = 6;
    let p = 60;
    let truth = [0.9, 0.5, 0.7, 0.3, 0.8, 0.4];
    let mut rng = symrank::seed::rng(99);
    let mut gauss = move || -> f64 {
        let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let mut rng2 = symrank::seed::rng(100);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut samples: Vec<ExposureSample<f64>> = Vec::new();
    for _ in 0..p {
        let row: Vec<bool> = (0..n).map(|_| rng2.random::<f64>() < 0.5).collect();
        let signal: f64 = row
            .iter()
            .zip(truth)
            .filter(|(&on, _)| on)
            .map(|(_, x)| x)
            .sum();
        let y = signal + 0.1 * gauss();
        rows.push(row.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect());
        rhs.push(y);
        samples.push(ExposureSample {
            perm: (0..n).collect(),
            rel_row: row,
            inv_error: y,
        });
    }
    let reported = estimate_profile(&samples).unwrap().variances;

    // Independent route: bootstrap the raw least-squares estimator, solving
    // the normal equations by Gaussian elimination.
    let solve_normal = |rows: &[Vec<f64>], rhs: &[f64]| -> Vec<f64> {
        let mut ata = vec![vec![0.0f64; n]; n];
        let mut atb = vec![0.0f64; n];
        for (row, &y) in rows.iter().zip(rhs) {
            for i in 0..n {
                for j in 0..n {
                    ata[i][j] += row[i] * row[j];
                }
                atb[i] += row[i] * y;
            }
        }
        // Gaussian elimination with partial pivoting.
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&a, &b| ata[a][col].abs().total_cmp(&ata[b][col].abs()))
                .unwrap();
            ata.swap(col, pivot);
            atb.swap(col, pivot);
            for r in col + 1..n {
                let f = ata[r][col] / ata[col][col];
                for c in col..n {
                    ata[r][c] -= f * ata[col][c];
                }
                atb[r] -= f * atb[col];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = atb[i];
            for j in i + 1..n {
                s -= ata[i][j] * x[j];
            }
            x[i] = s / ata[i][i];
        }
        x
    };

    let mut rng3 = symrank::seed::rng(101);
    let boots = 400;
    let mut estimates: Vec<Vec<f64>> = Vec::with_capacity(boots);
    for _ in 0..boots {
        let pick: Vec<usize> = (0..p).map(|_| rng3.random_range(0..p)).collect();
        let rows_b: Vec<Vec<f64>> = pick.iter().map(|&i| rows[i].clone()).collect();
        let rhs_b: Vec<f64> = pick.iter().map(|&i| rhs[i]).collect();
        estimates.push(solve_normal(&rows_b, &rhs_b));
    }
    for i in 0..n {
        let values: Vec<f64> = estimates.iter().map(|e| e[i]).collect();
        let m = common::mean(&values);
        let boot_var =
            values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (boots - 1) as f64;
        let ratio = reported[i] / boot_var;
        assert!(
            (0.5..=2.0).contains(&ratio),
            "coordinate {i}: reported {} vs bootstrap {} (ratio {ratio})",
            reported[i],
            boot_var
        );
    }
}

#[test]
fn normalized_values_are_invariant_to_error_rescaling() {
    let n = 8;
    let mut rng = symrank::seed::rng(55);
    let base: Vec<ExposureSample<f64>> = (0..40)
        .map(|_| {
            let rel_row: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.5).collect();
            ExposureSample {
                perm: (0..n).collect(),
                rel_row,
                inv_error: 0.5 + rng.random::<f64>(),
            }
        })
        .collect();
    let scaled: Vec<ExposureSample<f64>> = base
        .iter()
        .map(|s| ExposureSample {
            perm: s.perm.clone(),
            rel_row: s.rel_row.clone(),
            inv_error: s.inv_error * 7.5,
        })
        .collect();
    let a = estimate_profile(&base).unwrap();
    let b = estimate_profile(&scaled).unwrap();
    let sum: f64 = a.values.iter().sum();
    assert!((sum - 1.0).abs() < 1e-12);
    for (x, y) in a.values.iter().zip(&b.values) {
        assert!((x - y).abs() < 1e-9);
    }
}
