//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured quantities. Tolerances are pinned in the asserts.
//!
//! Monte Carlo criteria use fixed seeds; everything here is deterministic.

use std::sync::Arc;

use deconv_score::families::{
    cosine_nest_gaussian, cosine_nest_uniform, gaussian_location_family, gaussian_noise_family,
    known_gaussian_noise,
};
use deconv_score::linalg::SymMat;
use deconv_score::model::{gaussian_convolution_pdf, ConvolvedModel};
use deconv_score::quadrature::{integrate, integrate_vector, Interval, QuadratureSpec};
use deconv_score::rng::{RngStream, StreamRole};
use deconv_score::scores::{
    build_efficient_scores, build_simple_scores, exp_family_score_fast, information_blocks,
    plugin_scores_example2, plugin_scores_example3,
};
use deconv_score::selection::{DataDrivenSpec, Penalty};
use deconv_score::simulation::{
    calibrate_null, d1_scan, power_curve, run_scenario, Procedure, ScanMode, ScenarioSpec, Truth,
};
use deconv_score::teststat::chi2_quantile;

fn qspec() -> QuadratureSpec {
    QuadratureSpec::default()
}

/// Criterion 1: quadrature-path Gaussian convolution against the
/// N(theta, 1 + eta^2) closed form, relative error < 1e-8 on a 121-point
/// grid over y in [-6, 6] for (theta, eta) in {0, 0.5, 1} x {0.5, 1, 2}.
#[test]
fn criterion_01_gaussian_convolution_oracle() {
    let mut worst = 0.0_f64;
    for &theta in &[0.0, 0.5, 1.0] {
        for &eta in &[0.5, 1.0, 2.0] {
            let model = ConvolvedModel::new(
                Arc::new(gaussian_location_family(theta)),
                known_gaussian_noise(eta).unwrap(),
                qspec(),
            )
            .unwrap();
            for i in 0..=120 {
                let y = -6.0 + 12.0 * i as f64 / 120.0;
                let q = model.q_density(&[theta], y).unwrap();
                let oracle = gaussian_convolution_pdf(theta, eta, y);
                let rel = ((q.value - oracle) / oracle).abs();
                worst = worst.max(rel);
            }
        }
    }
    assert!(worst < 1e-8, "worst relative error {worst:.3e}");
    println!("[PASS] criterion 1: Gaussian convolution oracle, worst rel err {worst:.3e} < 1e-8");
}

/// Criterion 2: exponential-family fast path against the generic
/// gradient-based score path, max abs difference < 1e-6 on a 101-point
/// y-grid for the k = 3 cosine family with uniform base and N(0, 0.25)
/// noise.
#[test]
fn criterion_02_score_path_identity() {
    let nest = cosine_nest_uniform(3, qspec()).unwrap();
    let model = Arc::new(
        ConvolvedModel::new(
            Arc::new(nest.level(3).unwrap()),
            known_gaussian_noise(0.5).unwrap(),
            qspec(),
        )
        .unwrap(),
    );
    let sys = build_simple_scores(model.clone()).unwrap();
    let mut worst = 0.0_f64;
    for i in 0..=100 {
        let y = -1.5 + 4.0 * i as f64 / 100.0;
        let generic = sys.l_star(y).unwrap();
        let fast = exp_family_score_fast(&model, y).unwrap();
        for j in 0..3 {
            worst = worst.max((generic[j] - fast[j]).abs());
        }
    }
    assert!(worst < 1e-6, "max abs path difference {worst:.3e}");
    println!("[PASS] criterion 2: fast path vs generic score path, max abs diff {worst:.3e} < 1e-6");
}

/// Criterion 3: mean-zero and information identities.
#[test]
fn criterion_03_identities() {
    // |E_0 l*| < 1e-6 and ||L Sigma - I||_inf < 1e-7 on the cosine nest.
    let nest = cosine_nest_uniform(3, qspec()).unwrap();
    let model = Arc::new(
        ConvolvedModel::new(
            Arc::new(nest.level(3).unwrap()),
            known_gaussian_noise(0.5).unwrap(),
            qspec(),
        )
        .unwrap(),
    );
    let sys = build_simple_scores(model.clone()).unwrap();
    let mean_worst = sys
        .mean_residuals()
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    assert!(mean_worst < 1e-6, "|E_0 l*| = {mean_worst:.3e}");

    // Freshly integrate Sigma and multiply by the stored L.
    let ev = sys.evaluator().unwrap();
    let k = sys.k();
    let tri = k * (k + 1) / 2;
    let mut buf = vec![0.0; k];
    let outer = QuadratureSpec {
        rel_tol: 1e-9,
        abs_tol: 1e-12,
        ..qspec()
    };
    let raw = integrate_vector(
        |y, out: &mut [f64]| {
            let d = ev.l_star_into(y, &mut buf).unwrap();
            let mut idx = 0;
            for i in 0..k {
                for j in i..k {
                    out[idx] = buf[i] * buf[j] * d.value;
                    idx += 1;
                }
            }
        },
        tri,
        sys.observation_window(),
        &outer,
    )
    .unwrap();
    let sigma = SymMat::from_upper(k, &raw).unwrap();
    let l = sys.l_matrix();
    let mut prod_worst = 0.0_f64;
    for i in 0..k {
        for j in 0..k {
            let mut v = 0.0;
            for t in 0..k {
                v += l.get(i, t) * sigma.get(t, j);
            }
            let expect = if i == j { 1.0 } else { 0.0 };
            prod_worst = prod_worst.max((v - expect).abs());
        }
    }
    assert!(prod_worst < 1e-7, "||L Sigma - I||_inf = {prod_worst:.3e}");

    // Example 2 blocks: I12 = 0 within 1e-7; Example 3: I22 = 0.5 at
    // eta0 = 1 within 1e-6 (fourth-moment oracle).
    let ex2 = Arc::new(
        ConvolvedModel::new(
            Arc::new(gaussian_location_family(0.0)),
            gaussian_noise_family(1.0).unwrap(),
            qspec(),
        )
        .unwrap(),
    );
    let blocks = information_blocks(&ex2, &[0.0], &[1.0]).unwrap();
    let i12 = blocks.i12.get(0, 0).abs();
    assert!(i12 < 1e-7, "I12 = {i12:.3e}");
    let i22 = blocks.i22.get(0, 0);
    assert!((i22 - 0.5).abs() < 1e-6, "I22 = {i22:.8}");

    println!(
        "[PASS] criterion 3: |E_0 l*| {mean_worst:.2e} < 1e-6, ||L Sigma - I|| {prod_worst:.2e} < 1e-7, \
         I12 {i12:.2e} < 1e-7, I22 {i22:.7} = 0.5 +- 1e-6"
    );
}

fn example2_null_scenario(n: usize, reps: usize, seed: u64) -> ScenarioSpec {
    ScenarioSpec {
        signal_truth: Truth::Normal { mean: 0.0, var: 1.0 },
        noise_truth: Truth::Normal {
            mean: 0.0,
            var: 0.25,
        },
        procedure: Procedure::Example2Plugin {
            theta0: 0.0,
            alpha: 0.05,
        },
        n,
        replications: reps,
        seed,
    }
}

/// Criterion 4: null calibration of the Example 2 plug-in W_1 at n = 2000
/// over 5000 replications: KS distance to chi-square(1) < 0.025 and
/// empirical level at alpha = 0.05 inside [0.035, 0.065].
#[test]
fn criterion_04_null_calibration_w1() {
    let spec = example2_null_scenario(2000, 5000, 0x5eed_0004);
    let cal = calibrate_null(&spec).unwrap();
    assert!(cal.ks_distance < 0.025, "KS = {:.4}", cal.ks_distance);
    assert!(
        (0.035..=0.065).contains(&cal.empirical_level),
        "level = {:.4}",
        cal.empirical_level
    );
    println!(
        "[PASS] criterion 4: W1 null calibration, KS {:.4} < 0.025, level {:.4} in [0.035, 0.065]",
        cal.ks_distance, cal.empirical_level
    );
}

fn composite_nest_model(d: usize) -> Arc<ConvolvedModel> {
    let nest = cosine_nest_gaussian(d, qspec()).unwrap();
    Arc::new(
        ConvolvedModel::new(
            Arc::new(nest.level(d).unwrap()),
            gaussian_noise_family(0.5).unwrap(),
            qspec(),
        )
        .unwrap(),
    )
}

fn schwarz_dd() -> DataDrivenSpec {
    DataDrivenSpec {
        penalty: Penalty::schwarz(),
        alpha: 0.05,
        df_at_s: false,
    }
}

/// Criterion 5: selection-rule collapse under the null. Composite cosine
/// nest (d = 5, Schwarz), n = 2000: P(S = 1) >= 0.95 and KS(W_S, chi2_1)
/// < 0.03.
#[test]
fn criterion_05_selection_collapse() {
    let spec = ScenarioSpec {
        signal_truth: Truth::Normal { mean: 0.0, var: 1.0 },
        noise_truth: Truth::Normal {
            mean: 0.0,
            var: 0.25,
        },
        procedure: Procedure::CompositeNest {
            model: composite_nest_model(5),
            dd: schwarz_dd(),
            eta_floor: 0.25,
        },
        n: 2000,
        replications: 2000,
        seed: 0x5eed_0005,
    };
    let cal = calibrate_null(&spec).unwrap();
    assert!(
        cal.fraction_s_equals_1 >= 0.95,
        "P(S = 1) = {:.4}",
        cal.fraction_s_equals_1
    );
    assert!(cal.ks_distance < 0.03, "KS = {:.4}", cal.ks_distance);
    println!(
        "[PASS] criterion 5: P(S=1) {:.4} >= 0.95, KS(W_S, chi2_1) {:.4} < 0.03",
        cal.fraction_s_equals_1, cal.ks_distance
    );
}

fn assert_monotone_within_2se(pts: &[deconv_score::simulation::PowerPoint], label: &str) {
    for w in pts.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let slack = 2.0 * (a.se * a.se + b.se * b.se).sqrt();
        assert!(
            b.rejection_rate >= a.rejection_rate - slack,
            "{label}: rate({}) = {:.4} dropped below rate({}) = {:.4} - 2se",
            b.n,
            b.rejection_rate,
            a.n,
            a.rejection_rate
        );
    }
}

/// Criterion 6: consistency under a 0.3 mean shift. Rejection rates over
/// n in {100, 400, 1600} (2000 replications each) nondecreasing within two
/// Monte Carlo standard errors and >= 0.95 at n = 1600, for both the
/// known-noise U_S lane and the composite W_S lane.
#[test]
fn criterion_06_consistency_mean_shift() {
    let signal_truth = Truth::Normal { mean: 0.3, var: 1.0 };
    let noise_truth = Truth::Normal {
        mean: 0.0,
        var: 0.25,
    };
    let grid = [100usize, 400, 1600];

    let nest = cosine_nest_gaussian(5, qspec()).unwrap();
    let simple_model = Arc::new(
        ConvolvedModel::new(
            Arc::new(nest.level(5).unwrap()),
            known_gaussian_noise(0.5).unwrap(),
            qspec(),
        )
        .unwrap(),
    );
    let simple = ScenarioSpec {
        signal_truth: signal_truth.clone(),
        noise_truth: noise_truth.clone(),
        procedure: Procedure::SimpleNest {
            model: simple_model,
            dd: schwarz_dd(),
        },
        n: 100,
        replications: 2000,
        seed: 0x5eed_0006,
    };
    let u_pts = power_curve(&simple, &grid).unwrap();
    assert_monotone_within_2se(&u_pts, "U_S");
    assert!(
        u_pts.last().unwrap().rejection_rate >= 0.95,
        "U_S rate at 1600 = {:.4}",
        u_pts.last().unwrap().rejection_rate
    );

    let composite = ScenarioSpec {
        signal_truth,
        noise_truth,
        procedure: Procedure::CompositeNest {
            model: composite_nest_model(5),
            dd: schwarz_dd(),
            eta_floor: 0.25,
        },
        n: 100,
        replications: 2000,
        seed: 0x5eed_0016,
    };
    let w_pts = power_curve(&composite, &grid).unwrap();
    assert_monotone_within_2se(&w_pts, "W_S");
    assert!(
        w_pts.last().unwrap().rejection_rate >= 0.95,
        "W_S rate at 1600 = {:.4}",
        w_pts.last().unwrap().rejection_rate
    );

    let fmt = |pts: &[deconv_score::simulation::PowerPoint]| {
        pts.iter()
            .map(|p| format!("{:.3}", p.rejection_rate))
            .collect::<Vec<_>>()
            .join(" -> ")
    };
    println!(
        "[PASS] criterion 6: mean-shift power monotone, U_S {} and W_S {} (>= 0.95 at 1600)",
        fmt(&u_pts),
        fmt(&w_pts)
    );
}

/// Criterion 7: inconsistency of the fixed k = 1 test against a symmetric
/// same-mean variance-inflated alternative, and recovery by the
/// data-driven nest (K = 2, power >= 0.9 at n = 2000).
#[test]
fn criterion_07_inconsistency_and_recovery() {
    let bimodal = Truth::SymmetricBimodal {
        center: 0.0,
        mu: 1.5,
        component_var: 0.25,
    };
    let noise_truth = Truth::Normal {
        mean: 0.0,
        var: 0.25,
    };

    // Fixed k = 1 Example 2 test stays at its level.
    let fixed = ScenarioSpec {
        signal_truth: bimodal.clone(),
        noise_truth: noise_truth.clone(),
        procedure: Procedure::Example2Plugin {
            theta0: 0.0,
            alpha: 0.05,
        },
        n: 2000,
        replications: 2000,
        seed: 0x5eed_0007,
    };
    let outcomes = run_scenario(&fixed).unwrap();
    let rate = outcomes.iter().filter(|o| o.reject).count() as f64 / outcomes.len() as f64;
    assert!(
        (rate - 0.05).abs() <= 0.03,
        "fixed k=1 rejection rate = {rate:.4}"
    );

    // The D1 scan agrees: the linear score is blind (pseudo-true eta from
    // variance matching), the cosine nest detects at K = 2.
    let var_y = bimodal.variance() + noise_truth.variance();
    let eta_star = (var_y - 1.0).sqrt();
    let ex2_model = Arc::new(
        ConvolvedModel::new(
            Arc::new(gaussian_location_family(0.0)),
            gaussian_noise_family(eta_star).unwrap(),
            qspec(),
        )
        .unwrap(),
    );
    let sys1 = build_efficient_scores(ex2_model, &[0.0], &[eta_star]).unwrap();
    let scan1 = d1_scan(&bimodal, &noise_truth, &sys1, &ScanMode::default()).unwrap();
    assert!(
        scan1.first_detectable.is_none(),
        "linear-score scan found K = {:?}",
        scan1.first_detectable
    );

    let nest_model = composite_nest_model(2);
    let sys2 = build_efficient_scores(nest_model.clone(), &[0.0, 0.0], &[eta_star]).unwrap();
    let scan2 = d1_scan(&bimodal, &noise_truth, &sys2, &ScanMode::default()).unwrap();
    assert_eq!(
        scan2.first_detectable,
        Some(2),
        "cosine nest scan expectations {:?}",
        scan2.expectations
    );

    // And the data-driven test with d >= 2 has power.
    let dd_scenario = ScenarioSpec {
        signal_truth: bimodal,
        noise_truth,
        procedure: Procedure::CompositeNest {
            model: nest_model,
            dd: schwarz_dd(),
            eta_floor: 0.25,
        },
        n: 2000,
        replications: 2000,
        seed: 0x5eed_0017,
    };
    let outcomes = run_scenario(&dd_scenario).unwrap();
    let dd_rate = outcomes.iter().filter(|o| o.reject).count() as f64 / outcomes.len() as f64;
    assert!(dd_rate >= 0.9, "data-driven rate = {dd_rate:.4}");

    println!(
        "[PASS] criterion 7: fixed k=1 rate {rate:.4} in 0.05 +- 0.03, scan K=None then K=2 \
         (C_2 = {:.4}), data-driven power {dd_rate:.4} >= 0.9",
        scan2.c_k.unwrap()
    );
}

/// Criterion 8: plug-in adequacy. The empirical value of
/// (1/sqrt(n)) |sum_j (l*_j - l*(Y_j))| decreases over n in {1e2, 1e3, 1e4}
/// and its median at n = 1e4 is below 0.1, for the Example 2 and Example 3
/// plug-ins (200 replications).
#[test]
fn criterion_08_plugin_adequacy() {
    let (theta0, eta0) = (0.0_f64, 0.5_f64);
    let sigma_y2 = 1.0 + eta0 * eta0;
    let reps = 200;
    let grid = [100usize, 1000, 10_000];

    let median = |mut v: Vec<f64>| -> f64 {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    };

    let mut ex2_medians = Vec::new();
    let mut ex3_medians = Vec::new();
    for &n in &grid {
        let mut gaps2 = Vec::with_capacity(reps);
        let mut gaps3 = Vec::with_capacity(reps);
        for rep in 0..reps {
            let mut xs = RngStream::derive(0x5eed_0008, rep as u64, StreamRole::Signal);
            let mut es = RngStream::derive(0x5eed_0008, rep as u64, StreamRole::Noise);
            let data: Vec<f64> = (0..n)
                .map(|_| theta0 + xs.standard_normal() + eta0 * es.standard_normal())
                .collect();

            // Example 2: true l*(y) = (y - theta0) / Var(Y).
            let est = plugin_scores_example2(&data, theta0).unwrap();
            let gap: f64 = est
                .values
                .iter()
                .zip(&data)
                .map(|(row, &y)| row[0] - (y - theta0) / sigma_y2)
                .sum();
            gaps2.push(gap.abs() / (n as f64).sqrt());

            // Example 3: true l*(y) = C1 (y - theta0)^2 - C2.
            let est = plugin_scores_example3(&data, eta0, None).unwrap();
            let v = eta0 * eta0 + 1.0;
            let (c1, c2) = (eta0 / (v * v), eta0 / v);
            let gap: f64 = est
                .values
                .iter()
                .zip(&data)
                .map(|(row, &y)| row[0] - (c1 * (y - theta0) * (y - theta0) - c2))
                .sum();
            gaps3.push(gap.abs() / (n as f64).sqrt());
        }
        ex2_medians.push(median(gaps2));
        ex3_medians.push(median(gaps3));
    }

    for m in [&ex2_medians, &ex3_medians] {
        assert!(m[0] > m[1] && m[1] > m[2], "medians not decreasing: {m:?}");
        assert!(m[2] < 0.1, "median at n = 1e4 is {:.4}", m[2]);
    }
    println!(
        "[PASS] criterion 8: plug-in gap medians decrease, ex2 {:?}, ex3 {:?} (< 0.1 at n = 1e4)",
        ex2_medians
            .iter()
            .map(|v| format!("{v:.4}"))
            .collect::<Vec<_>>(),
        ex3_medians
            .iter()
            .map(|v| format!("{v:.4}"))
            .collect::<Vec<_>>()
    );
}

/// Criterion 9: the linear-algebra lemmas behind the consistency proofs.
#[test]
fn criterion_09_linear_algebra_lemmas() {
    let mut rng = RngStream::derive(0x5eed_0009, 0, StreamRole::Auxiliary);

    // x A x^T > delta ||x||^2 for SPD A with min eigenvalue above delta.
    let mut violations = 0;
    for _ in 0..1000 {
        let k = 2 + (rng.next_u64() % 5) as usize;
        let mut a = SymMat::zeros(k);
        let b: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..k).map(|_| rng.standard_normal()).collect())
            .collect();
        let c = 0.1 + 1.9 * rng.uniform();
        for i in 0..k {
            for j in i..k {
                let mut v = if i == j { c } else { 0.0 };
                for t in 0..k {
                    v += b[i][t] * b[j][t];
                }
                a.set(i, j, v);
            }
        }
        let lambda_min = a.eigenvalues()[0];
        let delta = 0.98 * lambda_min * rng.uniform();
        let x: Vec<f64> = (0..k).map(|_| rng.standard_normal()).collect();
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        if norm2 == 0.0 {
            continue;
        }
        if a.quadratic_form(&x).unwrap() <= delta * norm2 {
            violations += 1;
        }
    }
    assert_eq!(violations, 0, "{violations} quadratic-form violations");

    // Matrix-limit lemma: A_n = A + B/n stays above delta for all n past
    // the explicit bound ||B||_F / (lambda_min - delta).
    for _ in 0..100 {
        let k = 2 + (rng.next_u64() % 4) as usize;
        let mut a = SymMat::zeros(k);
        let base: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..k).map(|_| rng.standard_normal()).collect())
            .collect();
        for i in 0..k {
            for j in i..k {
                let mut v = if i == j { 0.5 } else { 0.0 };
                for t in 0..k {
                    v += base[i][t] * base[j][t];
                }
                a.set(i, j, v);
            }
        }
        let mut b = SymMat::zeros(k);
        for i in 0..k {
            for j in i..k {
                b.set(i, j, 3.0 * (rng.uniform() - 0.5));
            }
        }
        let lambda_min = a.eigenvalues()[0];
        let delta = 0.9 * lambda_min;
        let mut frob = 0.0;
        for i in 0..k {
            for j in 0..k {
                frob += b.get(i, j) * b.get(i, j);
            }
        }
        let n_star = (frob.sqrt() / (lambda_min - delta)).ceil() as usize + 1;
        for factor in [1usize, 2, 4, 8] {
            let n = n_star * factor;
            let mut a_n = a.clone();
            for i in 0..k {
                for j in i..k {
                    a_n.set(i, j, a.get(i, j) + b.get(i, j) / n as f64);
                }
            }
            let min_n = a_n.eigenvalues()[0];
            assert!(
                min_n > delta,
                "A_n min eigenvalue {min_n} not above delta {delta} at n = {n}"
            );
        }
    }
    println!("[PASS] criterion 9: 1000 quadratic-form trials clean, matrix-limit lemma holds on 100 sequences");
}

/// Independent chi-square CDF oracle: u-substituted quadrature of the
/// density with libm's lgamma (a different gamma, integration route, and
/// inversion than the library path).
fn chi2_cdf_oracle(k: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let a = 0.5 * k as f64;
    let log_norm = a * std::f64::consts::LN_2 + libm::lgamma(a);
    // t = u^2: P = int_0^sqrt(x) 2 u^(k-1) e^(-u^2/2) du / (2^(k/2) Gamma(k/2)).
    let spec = QuadratureSpec {
        rel_tol: 1e-12,
        abs_tol: 1e-15,
        max_subdivisions: 400,
        truncation_mass: 1e-12,
    };
    integrate(
        |u: f64| 2.0 * u.powi(k as i32 - 1) * (-0.5 * u * u).exp() * (-log_norm).exp(),
        Interval {
            lo: 0.0,
            hi: x.sqrt(),
        },
        &spec,
    )
    .unwrap()
}

fn chi2_quantile_oracle(k: usize, p: f64) -> f64 {
    let mut hi = 1.0;
    while chi2_cdf_oracle(k, hi) < p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if chi2_cdf_oracle(k, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Criterion 10: chi2_quantile against the independent inversion oracle,
/// within 1e-8 for k in 1..=10 and p in {0.9, 0.95, 0.99}.
#[test]
fn criterion_10_quantile_oracle() {
    let mut worst = 0.0_f64;
    for k in 1..=10 {
        for &p in &[0.9, 0.95, 0.99] {
            let lib = chi2_quantile(k, p).unwrap();
            let oracle = chi2_quantile_oracle(k, p);
            worst = worst.max((lib - oracle).abs());
        }
    }
    assert!(worst < 1e-8, "worst quantile deviation {worst:.3e}");
    println!("[PASS] criterion 10: chi2 quantiles match the independent oracle, worst dev {worst:.3e} < 1e-8");
}
