//! The acceptance gate: every numbered check prints one PASS/FAIL line
//! with its measured values, then the test asserts that all passed.
//!
//! Tolerances are pinned here, next to the checks that use them.

use matshrink::estimators::{
    estimate_a_single, estimate_b_double, rls_apply, EstimatorId, Weights,
};
use matshrink::matmodel::{
    center_and_whiten, ridge_traces, spectrum_from_reduced, RidgeConfig, Sigma,
};
use matshrink::rmt::{esd_traces, median, mp_stieltjes_identity, run_sweep};
use matshrink::rng::{mean_se, substream};
use matshrink::simlab::{
    limit_blas_threads, loss, make_mean, run_experiment, sample_data, ExperimentConfig,
    MeanProfile, NoiseKind, ProfileKind, RiskTable,
};
use matshrink::sure::{minimax_estimated, sure_delta};

use ndarray::{Array, Array2};
use ndarray_linalg::{Inverse, JobSvd, SVDDC};
use rand::Rng;
use rand_distr::StandardNormal;

/// Master seed of the table reproductions.
const TABLE_SEED: u64 = 2024;

/// Absolute cell tolerance of the 1000-replication desk gate.
const CELL_TOL: f64 = 0.02;

/// The published six-estimator risk table under Gaussian noise and the
/// ramp-to-20 profile with tail 0.1; rows follow `SIZES`, columns follow
/// `EstimatorId::TABLE_SIX`.
const SIZES: [(usize, usize); 7] = [
    (100, 10),
    (100, 30),
    (100, 80),
    (101, 100),
    (10, 100),
    (30, 100),
    (80, 100),
];
const TABLE_ONE: [[f64; 6]; 7] = [
    [0.181, 0.181, 0.204, 0.184, 0.368, 0.165],
    [0.217, 0.217, 0.342, 0.237, 0.333, 0.216],
    [0.273, 0.263, 0.775, 0.294, 0.324, 0.299],
    [0.290, 0.276, 34.5, 33.8, 0.325, 0.321],
    [0.258, 0.258, 0.274, 0.259, 0.375, 0.166],
    [0.237, 0.237, 0.351, 0.255, 0.346, 0.216],
    [0.275, 0.266, 0.758, 0.296, 0.328, 0.302],
];

struct Outcome {
    id: usize,
    pass: bool,
    detail: String,
}

fn outcome(id: usize, pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        id,
        pass,
        detail: detail.into(),
    }
}

fn table_six_run(profile: MeanProfile, noise: NoiseKind, sizes: &[(usize, usize)]) -> RiskTable {
    let cfg = ExperimentConfig {
        sizes: sizes.to_vec(),
        profile,
        noise,
        reps: 1000,
        seed: TABLE_SEED,
        estimators: EstimatorId::TABLE_SIX.to_vec(),
    };
    run_experiment(&cfg).expect("valid config")
}

/// Criterion 1: the full table under Gaussian noise at desk scale. The
/// two unstable cells at (101, 100) have no finite mean, so they are
/// gated on blowing up past 10 rather than on a tolerance.
fn criterion_1() -> Outcome {
    let table = table_six_run(
        MeanProfile::new(ProfileKind::LinearRamp5, -1.0),
        NoiseKind::Gaussian,
        &SIZES,
    );
    let mut bad = Vec::new();
    for (row, &(n, p)) in SIZES.iter().enumerate() {
        for (col, id) in EstimatorId::TABLE_SIX.iter().enumerate() {
            let cell = table.cell(n, p, *id).expect("cell exists");
            let want = TABLE_ONE[row][col];
            let unstable = (n, p) == (101, 100)
                && matches!(*id, EstimatorId::Emplus | EstimatorId::Em2plus);
            let ok = if unstable {
                cell.mean > 10.0
            } else {
                (cell.mean - want).abs() <= CELL_TOL.max(3.0 * cell.se)
            };
            if !ok {
                bad.push(format!(
                    "({n},{p}) {} = {:.4} (se {:.4}) vs {want}",
                    id.as_str(),
                    cell.mean,
                    cell.se
                ));
            }
        }
    }
    if bad.is_empty() {
        outcome(1, true, "all 42 cells within max(0.02, 3 se) of the published table")
    } else {
        outcome(
            1,
            false,
            format!("{} of 42 cells off: {}", bad.len(), bad.join("; ")),
        )
    }
}

/// Criterion 2: concentrated-signal profile spot cells.
fn criterion_2() -> Outcome {
    let table = table_six_run(
        MeanProfile::new(ProfileKind::LinearRamp10, -1.0),
        NoiseKind::Gaussian,
        &[(100, 10), (101, 100)],
    );
    let js = table.cell(100, 10, EstimatorId::Jsplus).unwrap().mean;
    let d2 = table.cell(101, 100, EstimatorId::D2plus).unwrap().mean;
    let pass = (js - 0.914).abs() <= CELL_TOL && (d2 - 0.285).abs() <= CELL_TOL;
    outcome(
        2,
        pass,
        format!("js+ at (100,10) = {js:.4} vs 0.914; D2+ at (101,100) = {d2:.4} vs 0.285"),
    )
}

/// Criterion 3: heavy-tailed and skewed noise spot cells.
fn criterion_3() -> Outcome {
    let profile = MeanProfile::new(ProfileKind::LinearRamp5, -1.0);
    let t3 = table_six_run(profile, NoiseKind::StudentT3, &[(100, 30)])
        .cell(100, 30, EstimatorId::S2plus)
        .unwrap()
        .mean;
    let chi = table_six_run(profile, NoiseKind::ChiSq2, &[(100, 30)])
        .cell(100, 30, EstimatorId::S2plus)
        .unwrap()
        .mean;
    let pass = (t3 - 0.274).abs() <= CELL_TOL && (chi - 0.224).abs() <= CELL_TOL;
    outcome(
        3,
        pass,
        format!("S2+ at (100,30): t noise {t3:.4} vs 0.274, chi-square noise {chi:.4} vs 0.224"),
    )
}

/// Criterion 4: the risk-difference statistic is unbiased. Paired per
/// replication: the statistic minus np times the realized loss difference
/// must average to zero within 3 standard errors.
fn criterion_4() -> Outcome {
    let (n, p) = (12usize, 5usize);
    let theta =
        Array::from_shape_fn((p, n), |(i, j)| 2.0 * ((3 * i + j) as f64 + 1.0).sin());
    let ridge = RidgeConfig::constant(1.0).unwrap();
    let w = Weights::new(3.0, 2.0);
    let reps = 20_000u64;
    let mut paired = Vec::with_capacity(reps as usize);
    for r in 0..reps {
        let data = sample_data(&theta.view(), NoiseKind::Gaussian, 40_000 + r);
        let spec = center_and_whiten(&data).unwrap();
        let report = rls_apply(&spec, &ridge, w, false).unwrap();
        let delta = sure_delta(&spec, &ridge, w).unwrap();
        let l_est = loss(&report.theta_hat.view(), &theta.view(), &Sigma::Identity).unwrap();
        let l_x = loss(&data.values.view(), &theta.view(), &Sigma::Identity).unwrap();
        paired.push(delta - (n * p) as f64 * (l_est - l_x));
    }
    let (mean, se) = mean_se(&paired);
    let pass = mean.abs() <= 3.0 * se;
    outcome(
        4,
        pass,
        format!("paired mean {mean:.4} vs 3 se = {:.4} over {reps} replications", 3.0 * se),
    )
}

/// Criterion 5: hand-verified thresholds of the minimaxity clauses.
fn criterion_5() -> Outcome {
    let mut bad = Vec::new();

    // square case p = n-1 = 4: verdict flips at the quadratic root
    let root = (31.0 + 1185.0f64.sqrt()) / 8.0;
    if (root - 8.178).abs() > 5e-4 {
        bad.push(format!("quadratic root {root:.5} vs 8.178"));
    }
    let single = |c: f64| {
        minimax_estimated(5, 4, &RidgeConfig::trace_proportional(c).unwrap(), false).minimax
    };
    if !single(root + 1e-6) || single(root - 1e-3) {
        bad.push("threshold at the root misplaced".into());
    }

    // special-ridge clause: exact rational thresholds by dimension
    let checks = [
        // (n, p, c, double, margin = |n-p-1| - threshold)
        (15usize, 1usize, 1.0, false, 13.0 - 12.5),
        (14, 2, 0.5, false, 11.0 - 10.0),
        (15, 1, 1.0, true, 13.0 - 12.5),
        (14, 2, 0.5, true, 11.0 - 10.5),
    ];
    for (n, p, c, double, want) in checks {
        let v = minimax_estimated(n, p, &RidgeConfig::trace_proportional(c).unwrap(), double);
        if v.margin != Some(want) || !v.minimax {
            bad.push(format!(
                "({n},{p}) double={double}: margin {:?} vs {want}",
                v.margin
            ));
        }
    }
    // p = 22 threshold is negative, so any compatible n passes
    let v = minimax_estimated(
        24,
        22,
        &RidgeConfig::trace_proportional(1.0 / 22.0).unwrap(),
        false,
    );
    if !v.minimax || v.condition_id != "thm:min(iii)" {
        bad.push(format!("p=22 special clause: {v:?}"));
    }
    if bad.is_empty() {
        outcome(5, true, "quadratic root 8.178 and all rational thresholds exact")
    } else {
        outcome(5, false, bad.join("; "))
    }
}

/// Criterion 6: small-ridge and large-ridge limits of the estimated
/// weights.
fn criterion_6() -> Outcome {
    let mut bad = Vec::new();
    for ev in [vec![2.0, 2.0, 2.0, 2.0], vec![2.0, 3.0, 4.0, 5.0]] {
        let spec = spectrum_from_reduced(&ev, 13, 4).unwrap();
        let b_cap = 46.0; // (n-1)p - 2

        // vanishing constant ridge: a -> |n-p-1| - 1, b -> min(152+... , 18)
        let small = RidgeConfig::constant(1e-8).unwrap();
        let a = estimate_a_single(&spec, &small).unwrap();
        let b = estimate_b_double(&spec, &small, a).unwrap();
        if (a - 7.0).abs() > 1e-4 {
            bad.push(format!("small-ridge a = {a}"));
        }
        if (b - 18.0).abs() > 1e-3 {
            bad.push(format!("small-ridge b = {b}"));
        }

        // huge trace-proportional ridge: a/(l_i + alpha) -> ((n-1)p-2)/trW,
        // b -> 0
        let large = RidgeConfig::trace_proportional(1e6).unwrap();
        let alpha = large.alpha_hat(spec.tr_w);
        let a = estimate_a_single(&spec, &large).unwrap();
        let b = estimate_b_double(&spec, &large, a).unwrap();
        let want = b_cap / spec.tr_w;
        for &l in &spec.ev {
            let got = a / (l + alpha);
            if ((got - want) / want).abs() > 1e-4 {
                bad.push(format!("large-ridge a/(l+alpha) = {got} vs {want}"));
            }
        }
        if b.abs() > 1e-3 {
            bad.push(format!("large-ridge b = {b}"));
        }
    }
    if bad.is_empty() {
        outcome(6, true, "weight limits reached at c = 1e-8 and c = 1e6 on both spectra")
    } else {
        outcome(6, false, bad.join("; "))
    }
}

/// Criterion 7: clamping the combined multiplier does not hurt: paired
/// mean loss difference at most 2 standard errors above zero.
fn criterion_7() -> Outcome {
    let (n, p) = (30usize, 20usize);
    let profile = MeanProfile::new(ProfileKind::LinearRamp5, -1.0);
    let theta = make_mean(n, p, &profile, 700).unwrap();
    let reps = 500u64;
    let mut d_single = Vec::with_capacity(reps as usize);
    let mut d_double = Vec::with_capacity(reps as usize);
    for r in 0..reps {
        let data = sample_data(&theta.view(), NoiseKind::Gaussian, 50_000 + r);
        let spec = center_and_whiten(&data).unwrap();
        let l = |id: EstimatorId| {
            let rep = id.apply(&spec, None).unwrap();
            loss(&rep.theta_hat.view(), &theta.view(), &Sigma::Identity).unwrap()
        };
        d_single.push(l(EstimatorId::S2plus) - l(EstimatorId::S2));
        d_double.push(l(EstimatorId::D2plus) - l(EstimatorId::D2));
    }
    let (m1, s1) = mean_se(&d_single);
    let (m2, s2) = mean_se(&d_double);
    let pass = m1 <= 2.0 * s1 && m2 <= 2.0 * s2;
    outcome(
        7,
        pass,
        format!(
            "paired loss change: single {m1:.5} (se {s1:.5}), double {m2:.5} (se {s2:.5})"
        ),
    )
}

/// Criterion 8: the ridge-inverse identity and the eight trace bounds,
/// 1000 randomized cases each with zero violations.
fn criterion_8() -> Outcome {
    let mut bad = Vec::new();

    // (A A^T + aI)^{-1} A = A (A^T A + aI)^{-1} = U diag(s/(s^2+a)) V^T
    let mut rng = substream(800, 0, 0);
    for case in 0..1000 {
        let p = 1 + rng.gen_range(0..8usize);
        let n = 1 + rng.gen_range(0..8usize);
        let alpha = [1e-3, 0.7, 13.0][case % 3];
        let a: Array2<f64> = Array::from_shape_fn((p, n), |_| rng.sample(StandardNormal));
        let left = {
            let mut g = a.dot(&a.t());
            g.diag_mut().mapv_inplace(|v| v + alpha);
            g.inv().unwrap().dot(&a)
        };
        let right = {
            let mut g = a.t().dot(&a);
            g.diag_mut().mapv_inplace(|v| v + alpha);
            a.dot(&g.inv().unwrap())
        };
        let svd = {
            let (u, s, vt) = a.svddc(JobSvd::Some).unwrap();
            let (u, vt) = (u.unwrap(), vt.unwrap());
            let mut scaled = u;
            for (j, mut col) in scaled.columns_mut().into_iter().enumerate() {
                col *= s[j] / (s[j] * s[j] + alpha);
            }
            scaled.dot(&vt)
        };
        let scale = 1.0 + left.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let d1 = (&left - &right).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let d2 = (&left - &svd).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if d1 > 1e-10 * scale || d2 > 1e-10 * scale {
            bad.push(format!("inverse identity case {case}: gaps {d1:.2e}, {d2:.2e}"));
            break;
        }
    }

    // eight trace bounds under the trace-proportional ridge
    let slack = |rhs: f64| 1e-12 * (1.0 + rhs.abs());
    let le = |lhs: f64, rhs: f64| lhs <= rhs + slack(rhs);
    let mut rng = substream(800, 1, 0);
    'outer: for case in 0..1000u64 {
        let m = 1 + (case % 50) as usize;
        let n = m + 1 + (case % 5) as usize;
        let ev: Vec<f64> = (0..m)
            .map(|_| (1.5 * rng.sample::<f64, _>(StandardNormal)).exp())
            .collect();
        let spec = spectrum_from_reduced(&ev, n, m).unwrap();
        let c = [0.01, 0.1, 1.0, 10.0][case as usize % 4];
        let ridge = RidgeConfig::trace_proportional(c).unwrap();
        let t = ridge_traces(&spec, &ridge).unwrap();
        let alpha = ridge.alpha_hat(spec.tr_w);
        let mf = m as f64;
        let shrink = 1.0 - (mf - 1.0) * c / (mf * (1.0 + c));
        let tr_v2w2: f64 = spec.ev.iter().map(|&l| (l / (l + alpha)).powi(2)).sum();
        let checks = [
            le(1.0 / (1.0 + c), t.tr_vw),
            le(t.tr_vw, mf / (1.0 + c * mf)),
            le(mf * mf / (1.0 + c * mf), t.tr_v * spec.tr_w),
            le(t.tr_v * spec.tr_w, mf / c),
            le(t.tr_v2w, t.tr_v / (1.0 + c * mf)),
            le(t.tr_v / (1.0 + c * mf), t.tr_v),
            le(t.tr_v3w, t.tr_v2 / (1.0 + c * mf)),
            le(t.tr_v2 / (1.0 + c * mf), t.tr_v * t.tr_v / (1.0 + c * mf)),
            le(t.tr_v3w, t.tr_v2w * t.tr_v),
            le(t.tr_v2, t.tr_v * t.tr_v * shrink),
            le(t.tr_v3w, t.tr_v2w * t.tr_v * shrink),
            le(
                -c * (t.tr_v * spec.tr_w - t.tr_vw) / (1.0 + c * mf),
                -t.tr_vw + (1.0 + c) * tr_v2w2,
            ),
            le(-t.tr_vw + (1.0 + c) * tr_v2w2, 0.0),
        ];
        for (k, ok) in checks.iter().enumerate() {
            if !*ok {
                bad.push(format!("trace bound {k} violated at case {case} (m = {m}, c = {c})"));
                break 'outer;
            }
        }
    }
    if bad.is_empty() {
        outcome(8, true, "1000 inverse-identity and 1000 trace-bound cases clean")
    } else {
        outcome(8, false, bad.join("; "))
    }
}

/// Criterion 9: the gap between estimated and known-prior weights at
/// least halves when the dimensions quadruple.
fn criterion_9() -> Outcome {
    let recs = run_sweep(&[(200, 100), (800, 400)], 1.0, 3.0, None, 20, 900).unwrap();
    let gaps = |n: usize, f: fn(&matshrink::rmt::ConvergenceRecord) -> f64| -> f64 {
        median(
            &recs
                .iter()
                .filter(|r| r.n == n)
                .map(f)
                .collect::<Vec<_>>(),
        )
    };
    let a_small = gaps(200, |r| r.gap_a);
    let a_big = gaps(800, |r| r.gap_a);
    let b_small = gaps(200, |r| r.gap_b);
    let b_big = gaps(800, |r| r.gap_b);
    let pass = a_big <= 0.5 * a_small && b_big <= 0.5 * b_small;
    outcome(
        9,
        pass,
        format!(
            "median gap_a {a_small:.5} -> {a_big:.5}, gap_b {b_small:.5} -> {b_big:.5} (need halving)"
        ),
    )
}

/// Criterion 10: the resolvent trace at (4000, 2000) matches the
/// closed-form spectral limit.
fn criterion_10() -> Outcome {
    let (n, p) = (4000usize, 2000usize);
    let mut rng = substream(1010, 0, 0);
    let y: Array2<f64> = Array::from_shape_fn((p, n - 1), |_| rng.sample(StandardNormal));
    let (_, s, _) = y.svddc(JobSvd::None).unwrap();
    let ev: Vec<f64> = s.iter().map(|v| v * v).collect();
    let spec = spectrum_from_reduced(&ev, n, p).unwrap();
    let (t1, _) = esd_traces(&spec, 1.0).unwrap();
    let limit = mp_stieltjes_identity(0.5, 1.0).unwrap();
    let pass = (t1 - limit).abs() <= 5e-3;
    outcome(
        10,
        pass,
        format!("trace {t1:.6} vs limit {limit:.6} (tolerance 5e-3)"),
    )
}

#[test]
fn acceptance() {
    limit_blas_threads();
    let results = vec![
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
        criterion_9(),
        criterion_10(),
    ];
    let mut failed = Vec::new();
    for r in &results {
        println!(
            "ACCEPTANCE {:>2} {} - {}",
            r.id,
            if r.pass { "PASS" } else { "FAIL" },
            r.detail
        );
        if !r.pass {
            failed.push(r.id);
        }
    }
    assert!(failed.is_empty(), "criteria failed: {failed:?}");
}
