//! The six estimator families compared in the experiments, plus the
//! data-driven shrinkage weights.
//!
//! All estimators share the pattern: decompose the centered whitened data,
//! remap each singular value, rebuild, and add the row means back. They
//! differ only in the per-singular-value multiplier.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use ndarray_linalg::{JobSvd, SVDDC};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Result, ShrinkError};
use crate::matmodel::{ridge_traces, RidgeConfig, RidgeMode, Spectrum};
use crate::sure;

/// Ridge-family shrinkage weights: `a` scales the ridge-inverse term, `b`
/// the uniform `1/tr W` term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub a: f64,
    pub b: f64,
}

impl Weights {
    pub fn new(a: f64, b: f64) -> Self {
        Weights { a, b }
    }
}

/// A fitted estimate plus everything needed to audit it.
#[derive(Debug, Clone)]
pub struct EstimateReport {
    /// `p x n`, same shape and coordinates as the input data.
    pub theta_hat: Array2<f64>,
    /// Ridge-family weights; absent for the EM, James-Stein, and
    /// singular-value-threshold families.
    pub weights: Option<Weights>,
    /// Ridge level used, when the estimator has one.
    pub alpha_hat: Option<f64>,
    /// Multipliers actually applied per singular value. For the transposed
    /// threshold branch these refer to the transposed problem's spectrum.
    pub factors: Array1<f64>,
    /// Unbiased risk-difference estimate versus `X`, when computable;
    /// negative means improvement.
    pub sure_delta: Option<f64>,
    /// Stable identifier, see [`EstimatorId`].
    pub estimator_id: String,
}

/// Ridge-type linear shrinkage: singular value `i` is scaled by
/// `g_i = 1 - a/(l_i + alpha) - b/tr W`, optionally clamped at zero.
///
/// The clamp acts on the combined multiplier, not on each term separately.
pub fn rls_apply(
    spec: &Spectrum,
    ridge: &RidgeConfig,
    w: Weights,
    positive_part: bool,
) -> Result<EstimateReport> {
    if !w.a.is_finite() || !w.b.is_finite() {
        return Err(ShrinkError::DegenerateData(format!(
            "non-finite weights a={}, b={}",
            w.a, w.b
        )));
    }
    if spec.tr_w <= 0.0 && (w.b != 0.0 || ridge.mode == RidgeMode::TraceProportional) {
        return Err(ShrinkError::DegenerateData(
            "tr W = 0: trace-scaled shrinkage is undefined".into(),
        ));
    }
    let alpha = ridge.alpha_hat(spec.tr_w);
    let bu = if w.b == 0.0 { 0.0 } else { w.b / spec.tr_w };
    let mut factors = spec.ev.mapv(|l| 1.0 - w.a / (l + alpha) - bu);
    if positive_part {
        factors.mapv_inplace(|g| g.max(0.0));
    }
    let theta_hat = spec.rebuild(&(&spec.sv * &factors));
    let sure_delta = sure::sure_delta(spec, ridge, w).ok();
    let id = match (w.b == 0.0, ridge.mode) {
        (true, RidgeMode::Constant) => "S1",
        (true, RidgeMode::TraceProportional) => "S2",
        (false, RidgeMode::Constant) => "D1",
        (false, RidgeMode::TraceProportional) => "D2",
    };
    Ok(EstimateReport {
        theta_hat,
        weights: Some(w),
        alpha_hat: Some(alpha),
        factors,
        sure_delta,
        estimator_id: if positive_part {
            format!("{id}plus")
        } else {
            id.to_string()
        },
    })
}

/// Risk-minimizing ridge weight for single shrinkage (`b = 0`).
pub fn estimate_a_single(spec: &Spectrum, ridge: &RidgeConfig) -> Result<f64> {
    let t = ridge_traces(spec, ridge)?;
    let alpha = ridge.alpha_hat(spec.tr_w);
    Ok((spec.a0 * t.tr_v + alpha * t.tr_v * t.tr_v) / t.tr_v2w - (2.0 * ridge.c0() + 1.0))
}

/// Risk-minimizing uniform weight given the ridge weight `a_hat`.
pub fn estimate_b_double(spec: &Spectrum, ridge: &RidgeConfig, a_hat: f64) -> Result<f64> {
    let t = ridge_traces(spec, ridge)?;
    let np1 = (spec.n as f64 - 1.0) * spec.p as f64;
    Ok(np1 - 2.0 - t.tr_vw * a_hat)
}

/// Generalized Efron-Morris shrinkage through the pseudo-inverse of `W`:
/// multiplier `1 - (|n-p-1| - 1)/l_i` on nonzero singular values, with an
/// additional `b0/tr W` pull when `double` is set.
pub fn efron_morris(spec: &Spectrum, double: bool, positive_part: bool) -> Result<EstimateReport> {
    if spec.tr_w <= 0.0 {
        return Err(ShrinkError::DegenerateData(
            "tr W = 0: pseudo-inverse shrinkage is undefined".into(),
        ));
    }
    let coef = spec.a0 - 1.0;
    let b0 = if double {
        let n1 = spec.n as f64 - 1.0;
        let pf = spec.p as f64;
        (pf * pf + pf - 2.0).min(n1 * n1 + n1 - 2.0)
    } else {
        0.0
    };
    let factors = Array1::from_shape_fn(spec.m, |i| {
        let l = spec.ev[i];
        if l == 0.0 {
            1.0 // zero singular directions untouched
        } else {
            let g = 1.0 - coef / l - b0 / spec.tr_w;
            if positive_part {
                g.max(0.0)
            } else {
                g
            }
        }
    });
    let theta_hat = spec.rebuild(&(&spec.sv * &factors));
    let base = if double { "em2" } else { "em" };
    Ok(EstimateReport {
        theta_hat,
        weights: None,
        alpha_hat: None,
        factors,
        sure_delta: None,
        estimator_id: if positive_part {
            format!("{base}plus")
        } else {
            base.to_string()
        },
    })
}

/// Classical uniform shrinkage toward the row means with constant
/// `(n-1)p - 2`.
pub fn james_stein(spec: &Spectrum, positive_part: bool) -> Result<EstimateReport> {
    if spec.tr_w <= 0.0 {
        return Err(ShrinkError::DegenerateData(
            "tr W = 0: uniform shrinkage is undefined".into(),
        ));
    }
    let b_js = (spec.n as f64 - 1.0) * spec.p as f64 - 2.0;
    let mut g = 1.0 - b_js / spec.tr_w;
    if positive_part {
        g = g.max(0.0);
    }
    let factors = Array1::from_elem(spec.m, g);
    let theta_hat = spec.rebuild(&(&spec.sv * &factors));
    // a = 0 makes the risk-difference estimate ridge-free.
    let dummy = RidgeConfig::constant(1.0).expect("positive constant");
    let sure_delta = sure::sure_delta(spec, &dummy, Weights::new(0.0, b_js)).ok();
    Ok(EstimateReport {
        theta_hat,
        weights: None,
        alpha_hat: None,
        factors,
        sure_delta,
        estimator_id: if positive_part { "jsplus" } else { "js" }.to_string(),
    })
}

/// Optimal hard/soft singular value transformer for white noise: maps
/// `s` to `nu * sqrt(((s^2/nu - beta - 1)^2 - 4 beta)_+)/s` above the bulk
/// edge `s^2/nu >= (1 + sqrt(beta))^2` and to zero below it, with
/// `(nu, beta) = (n-1, p/(n-1))`.
fn threshold_singular_values(sv: &Array1<f64>, nu: f64, p_dim: f64) -> Array1<f64> {
    let beta = p_dim / nu;
    let edge = {
        let r = 1.0 + beta.sqrt();
        r * r
    };
    sv.mapv(|s| {
        if s <= 0.0 {
            return 0.0;
        }
        let t = s * s / nu;
        if t < edge {
            return 0.0;
        }
        let arg = (t - beta - 1.0) * (t - beta - 1.0) - 4.0 * beta;
        nu * arg.max(0.0).sqrt() / s
    })
}

/// Singular value thresholding estimator. For `n-1 >= p` it transforms the
/// centered whitened spectrum directly; for `p > n-1` the same estimator is
/// computed on the transposed (re-centered) whitened data and transposed
/// back.
pub fn gavish_donoho(spec: &Spectrum) -> Result<EstimateReport> {
    if spec.m < 1 {
        return Err(ShrinkError::DegenerateData("empty spectrum".into()));
    }
    let (p, n) = (spec.p, spec.n);
    if n - 1 >= p {
        let new_sv = threshold_singular_values(&spec.sv, n as f64 - 1.0, p as f64);
        let factors = Array1::from_shape_fn(spec.m, |i| {
            if spec.sv[i] > 0.0 {
                new_sv[i] / spec.sv[i]
            } else {
                0.0
            }
        });
        let theta_hat = spec.rebuild(&new_sv);
        return Ok(EstimateReport {
            theta_hat,
            weights: None,
            alpha_hat: None,
            factors,
            sure_delta: None,
            estimator_id: "gd".to_string(),
        });
    }

    // Transposed branch: rebuild the whitened data, treat its transpose as
    // the observation matrix (p columns of dimension n), and shrink there.
    let x = spec.rebuild(&spec.sv);
    let y = spec.sigma.whiten(&x);
    let z = y.t().to_owned(); // n x p
    let zbar = z.mean_axis(ndarray::Axis(1)).expect("p >= 2 when p > n-1");
    let centered = &z - &zbar.view().insert_axis(ndarray::Axis(1));
    let (u_opt, s, vt_opt) = centered.svddc(JobSvd::Some)?;
    let u = u_opt.expect("left vectors requested");
    let vt = vt_opt.expect("right vectors requested");
    let new_s = threshold_singular_values(&s, p as f64 - 1.0, n as f64);
    let factors = Array1::from_shape_fn(s.len(), |i| {
        if s[i] > SV_REL_FLOOR * s[0] {
            new_s[i] / s[i]
        } else {
            0.0
        }
    });
    let mut scaled = u;
    for (j, mut col) in scaled.columns_mut().into_iter().enumerate() {
        col *= new_s[j];
    }
    let mut zhat = scaled.dot(&vt);
    zhat += &zbar.view().insert_axis(ndarray::Axis(1));
    let theta_hat = spec.sigma.unwhiten(&zhat.t().to_owned());
    Ok(EstimateReport {
        theta_hat,
        weights: None,
        alpha_hat: None,
        factors,
        sure_delta: None,
        estimator_id: "gd".to_string(),
    })
}

const SV_REL_FLOOR: f64 = 1e-12;

/// Stable identifiers for every estimator the tooling exposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorId {
    /// Single shrinkage, constant ridge, default `c = 1`.
    S1,
    /// Single shrinkage, trace-proportional ridge, default `c = 1/min(p, n-1)`.
    S2,
    /// Double shrinkage, constant ridge.
    D1,
    /// Double shrinkage, trace-proportional ridge.
    D2,
    S2plus,
    D2plus,
    Em,
    Em2,
    Emplus,
    Em2plus,
    Js,
    Jsplus,
    Gd,
    /// Returns `X` unchanged; the Monte Carlo baseline.
    Identity,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 14] = [
        EstimatorId::S1,
        EstimatorId::S2,
        EstimatorId::D1,
        EstimatorId::D2,
        EstimatorId::S2plus,
        EstimatorId::D2plus,
        EstimatorId::Em,
        EstimatorId::Em2,
        EstimatorId::Emplus,
        EstimatorId::Em2plus,
        EstimatorId::Js,
        EstimatorId::Jsplus,
        EstimatorId::Gd,
        EstimatorId::Identity,
    ];

    /// The six columns of the risk tables, in table order.
    pub const TABLE_SIX: [EstimatorId; 6] = [
        EstimatorId::S2plus,
        EstimatorId::D2plus,
        EstimatorId::Emplus,
        EstimatorId::Em2plus,
        EstimatorId::Jsplus,
        EstimatorId::Gd,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorId::S1 => "S1",
            EstimatorId::S2 => "S2",
            EstimatorId::D1 => "D1",
            EstimatorId::D2 => "D2",
            EstimatorId::S2plus => "S2plus",
            EstimatorId::D2plus => "D2plus",
            EstimatorId::Em => "em",
            EstimatorId::Em2 => "em2",
            EstimatorId::Emplus => "emplus",
            EstimatorId::Em2plus => "em2plus",
            EstimatorId::Js => "js",
            EstimatorId::Jsplus => "jsplus",
            EstimatorId::Gd => "gd",
            EstimatorId::Identity => "identity",
        }
    }

    /// Compact column heading for risk tables.
    pub fn table_label(&self) -> &'static str {
        match self {
            EstimatorId::S2plus => "S2+",
            EstimatorId::D2plus => "D2+",
            EstimatorId::Emplus => "em+",
            EstimatorId::Em2plus => "em2+",
            EstimatorId::Jsplus => "js+",
            EstimatorId::Identity => "X",
            other => other.as_str(),
        }
    }

    /// Default ridge for the ridge-family members; `None` for the rest.
    pub fn default_ridge(&self, spec: &Spectrum) -> Option<RidgeConfig> {
        match self {
            EstimatorId::S1 | EstimatorId::D1 => Some(RidgeConfig::constant(1.0).expect("c > 0")),
            EstimatorId::S2
            | EstimatorId::D2
            | EstimatorId::S2plus
            | EstimatorId::D2plus => Some(
                RidgeConfig::trace_proportional(1.0 / spec.m as f64).expect("m >= 1"),
            ),
            _ => None,
        }
    }

    /// Applies the estimator with data-driven weights where applicable.
    /// `c_override` replaces the default ridge constant for ridge-family
    /// members and is ignored by the others.
    pub fn apply(&self, spec: &Spectrum, c_override: Option<f64>) -> Result<EstimateReport> {
        use EstimatorId::*;
        match self {
            S1 | S2 | D1 | D2 | S2plus | D2plus => {
                let mut ridge = self.default_ridge(spec).expect("ridge family");
                if let Some(c) = c_override {
                    ridge = RidgeConfig::new(ridge.mode, c)?;
                }
                let a = estimate_a_single(spec, &ridge)?;
                let double = matches!(self, D1 | D2 | D2plus);
                let b = if double {
                    estimate_b_double(spec, &ridge, a)?
                } else {
                    0.0
                };
                let plus = matches!(self, S2plus | D2plus);
                let mut rep = rls_apply(spec, &ridge, Weights::new(a, b), plus)?;
                rep.estimator_id = self.as_str().to_string();
                Ok(rep)
            }
            Em => efron_morris(spec, false, false),
            Em2 => efron_morris(spec, true, false),
            Emplus => efron_morris(spec, false, true),
            Em2plus => efron_morris(spec, true, true),
            Js => james_stein(spec, false),
            Jsplus => james_stein(spec, true),
            Gd => gavish_donoho(spec),
            Identity => Ok(EstimateReport {
                theta_hat: spec.rebuild(&spec.sv),
                weights: None,
                alpha_hat: None,
                factors: Array1::from_elem(spec.m, 1.0),
                sure_delta: Some(0.0),
                estimator_id: "identity".to_string(),
            }),
        }
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorId {
    type Err = ShrinkError;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorId::ALL
            .iter()
            .find(|id| id.as_str() == s)
            .copied()
            .ok_or_else(|| {
                ShrinkError::Config(format!(
                    "unknown estimator {s:?}; expected one of {}",
                    EstimatorId::ALL.map(|i| i.as_str()).join(", ")
                ))
            })
    }
}

impl Serialize for EstimatorId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for EstimatorId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
