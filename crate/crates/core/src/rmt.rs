//! Large-dimension consistency experiments for the estimated shrinkage
//! weights against their known-prior optima, plus the Marchenko-Pastur
//! Stieltjes diagnostic used to sanity-check resolvent traces.

use ndarray::{Array, Array1};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, ShrinkError};
use crate::estimators::{estimate_a_single, estimate_b_double};
use crate::matmodel::{spectrum_from_centered_reduced, RidgeConfig, RidgeMode, Spectrum};
use crate::rng::substream;
use crate::sure::{bayes_optimal_weights, PriorPsi};

/// Eigenvalues of the prior covariance `Psi = I + Lambda`; all at least 1
/// because `Lambda` is nonnegative definite.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub psi_eigs: Array1<f64>,
}

impl PriorSpec {
    pub fn new(psi_eigs: Array1<f64>) -> Result<Self> {
        if psi_eigs.is_empty() {
            return Err(ShrinkError::Dimension("prior needs at least one eigenvalue".into()));
        }
        if let Some(bad) = psi_eigs.iter().find(|v| !v.is_finite() || **v < 1.0) {
            return Err(ShrinkError::Covariance(format!(
                "prior eigenvalues must be finite and >= 1, got {bad}"
            )));
        }
        Ok(PriorSpec { psi_eigs })
    }

    /// Deterministic spectrum at the `(j - 1/2)/p` quantiles of
    /// `Uniform[lo, hi]`, so the spectral distribution converges as the
    /// dimension grows.
    pub fn fixed_quantile_uniform(p: usize, lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo < 1.0 || hi < lo {
            return Err(ShrinkError::Covariance(format!(
                "need 1 <= lo <= hi, got [{lo}, {hi}]"
            )));
        }
        let eigs = Array1::from_shape_fn(p, |j| {
            lo + (hi - lo) * (j as f64 + 0.5) / p as f64
        });
        PriorSpec::new(eigs)
    }
}

/// One trial's estimated weights, their known-prior optima, and the
/// normalized gaps whose decay the theory predicts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRecord {
    pub n: usize,
    pub p: usize,
    /// Aspect ratio `p/n`.
    pub gamma: f64,
    pub a_hat: f64,
    pub a_star: f64,
    pub b_hat: f64,
    pub b_star: f64,
    /// `|a_hat - a_star| / n`.
    pub gap_a: f64,
    /// `|b_hat - b_star| / tr W`.
    pub gap_b: f64,
    pub seed: u64,
}

fn trial_with_rng(
    rng: &mut ChaCha8Rng,
    n: usize,
    p: usize,
    prior: &PriorSpec,
    ridge: &RidgeConfig,
    seed: u64,
) -> Result<ConvergenceRecord> {
    if n < 2 || p + 1 > n {
        return Err(ShrinkError::Setting(format!(
            "trial needs n - 1 >= p, got n = {n}, p = {p}"
        )));
    }
    if prior.psi_eigs.len() != p {
        return Err(ShrinkError::Dimension(format!(
            "prior has {} eigenvalues, trial has p = {p}",
            prior.psi_eigs.len()
        )));
    }
    if ridge.mode != RidgeMode::TraceProportional {
        return Err(ShrinkError::Setting(
            "a constant ridge does not scale with n; use the trace-proportional mode".into(),
        ));
    }
    let sqrt_tau = prior.psi_eigs.mapv(f64::sqrt);
    let y = Array::from_shape_fn((p, n - 1), |(i, _)| {
        sqrt_tau[i] * rng.sample::<f64, _>(StandardNormal)
    });
    let spec = spectrum_from_centered_reduced(&y, n)?;
    let a_hat = estimate_a_single(&spec, ridge)?;
    let b_hat = estimate_b_double(&spec, ridge, a_hat)?;
    let opt = bayes_optimal_weights(
        &spec,
        ridge,
        &PriorPsi::Eigenvalues(prior.psi_eigs.clone()),
        a_hat,
    )?;
    Ok(ConvergenceRecord {
        n,
        p,
        gamma: p as f64 / n as f64,
        a_hat,
        a_star: opt.a_star,
        b_hat,
        b_star: opt.b_star,
        gap_a: (a_hat - opt.a_star).abs() / n as f64,
        gap_b: (b_hat - opt.b_star).abs() / spec.tr_w,
        seed,
    })
}

/// Draws `Y` with i.i.d. `N(0, Psi)` columns, estimates the shrinkage
/// weights from `W = Y Y^T`, and compares them to the known-prior optima.
pub fn rmt_trial(
    n: usize,
    p: usize,
    prior: &PriorSpec,
    ridge: &RidgeConfig,
    seed: u64,
) -> Result<ConvergenceRecord> {
    trial_with_rng(&mut substream(seed, 0, 0), n, p, prior, ridge, seed)
}

/// Marchenko-Pastur Stieltjes transform value at `-x` for aspect ratio
/// `gamma`: the root of `gamma x m^2 + (1 - gamma + x) m - 1 = 0` lying in
/// `[1/(1+x), 1/x]`.
pub fn mp_stieltjes_identity(gamma: f64, x: f64) -> Result<f64> {
    if !(gamma.is_finite() && gamma > 0.0) || gamma == 1.0 {
        return Err(ShrinkError::Config(format!(
            "aspect ratio must be positive and not 1, got {gamma}"
        )));
    }
    if !(x.is_finite() && x > 0.0) {
        return Err(ShrinkError::Config(format!("need x > 0, got {x}")));
    }
    let b = 1.0 - gamma + x;
    let disc = (b * b + 4.0 * gamma * x).sqrt();
    // the two expressions are the same root; pick the cancellation-free one
    let m = if b >= 0.0 {
        2.0 / (b + disc)
    } else {
        (-b + disc) / (2.0 * gamma * x)
    };
    Ok(m)
}

/// Resolvent traces of the scaled Gram matrix:
/// `t1 = p^{-1} tr[(W/(n-1) + xI)^{-1}]` and the squared-resolvent `t2`.
pub fn esd_traces(spec: &Spectrum, x: f64) -> Result<(f64, f64)> {
    if !(x.is_finite() && x > 0.0) {
        return Err(ShrinkError::Config(format!("need x > 0, got {x}")));
    }
    let scale = (spec.n - 1) as f64;
    let mut t1 = 0.0;
    let mut t2 = 0.0;
    for &l in &spec.ev {
        let d = l / scale + x;
        t1 += 1.0 / d;
        t2 += 1.0 / (d * d);
    }
    // zero eigenvalues of W beyond the retained spectrum
    let zeros = (spec.p - spec.m) as f64;
    t1 += zeros / x;
    t2 += zeros / (x * x);
    Ok((t1 / spec.p as f64, t2 / spec.p as f64))
}

/// Runs `n_seeds` independent trials at every size, in parallel. The
/// ridge constant defaults to `1/min(n-1, p)` at each size unless
/// overridden.
pub fn run_sweep(
    sizes: &[(usize, usize)],
    lo: f64,
    hi: f64,
    c_override: Option<f64>,
    n_seeds: u64,
    master_seed: u64,
) -> Result<Vec<ConvergenceRecord>> {
    if sizes.is_empty() || n_seeds == 0 {
        return Err(ShrinkError::Config(
            "sweep needs at least one size and one seed".into(),
        ));
    }
    let mut jobs = Vec::new();
    for (lane, &(n, p)) in sizes.iter().enumerate() {
        if n < 2 || p + 1 > n {
            return Err(ShrinkError::Setting(format!(
                "sweep needs n - 1 >= p, got n = {n}, p = {p}"
            )));
        }
        let prior = PriorSpec::fixed_quantile_uniform(p, lo, hi)?;
        let c = c_override.unwrap_or(1.0 / p.min(n - 1) as f64);
        let ridge = RidgeConfig::trace_proportional(c)?;
        for s in 0..n_seeds {
            jobs.push((lane as u64, n, p, prior.clone(), ridge.clone(), s));
        }
    }
    jobs.par_iter()
        .map(|(lane, n, p, prior, ridge, s)| {
            trial_with_rng(&mut substream(master_seed, *lane, *s), *n, *p, prior, ridge, *s)
        })
        .collect()
}

/// CSV layout for sweep results: `n,p,gamma,gap_a,gap_b,seed`.
pub fn sweep_to_csv(records: &[ConvergenceRecord]) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["n", "p", "gamma", "gap_a", "gap_b", "seed"])
        .expect("write to vec");
    for r in records {
        wtr.write_record(&[
            r.n.to_string(),
            r.p.to_string(),
            r.gamma.to_string(),
            r.gap_a.to_string(),
            r.gap_b.to_string(),
            r.seed.to_string(),
        ])
        .expect("write to vec");
    }
    String::from_utf8(wtr.into_inner().expect("flush to vec")).expect("utf8")
}

/// Median of the values; used to damp heavy-tail trial noise.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let k = v.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}
