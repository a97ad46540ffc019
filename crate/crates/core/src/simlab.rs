//! Monte Carlo risk experiments: mean-matrix construction, noise
//! generation, loss evaluation, and risk tables.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Once;

use ndarray::{Array, Array2, ArrayView2};
use ndarray_linalg::QR;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShrinkError};
use crate::estimators::EstimatorId;
use crate::matmodel::{center_and_whiten, DataMatrix, Sigma};
use crate::rng::{mean_se, substream};

static BLAS_THREAD_CAP: Once = Once::new();

/// Caps BLAS threading before the first decomposition so parallel
/// replication workers do not oversubscribe cores. Harmless if BLAS was
/// already initialized.
pub fn limit_blas_threads() {
    BLAS_THREAD_CAP.call_once(|| std::env::set_var("OPENBLAS_NUM_THREADS", "1"));
}

/// Shape of the leading singular values of the mean matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProfileKind {
    /// Ramp from 10 to 20 over `floor(min(n,p)/5)` values.
    LinearRamp5,
    /// Ramp from 100 to 200 over `floor(min(n,p)/10)` values.
    LinearRamp10,
}

impl ProfileKind {
    pub fn base(&self) -> f64 {
        match self {
            ProfileKind::LinearRamp5 => 10.0,
            ProfileKind::LinearRamp10 => 100.0,
        }
    }

    pub fn divisor(&self) -> usize {
        match self {
            ProfileKind::LinearRamp5 => 5,
            ProfileKind::LinearRamp10 => 10,
        }
    }
}

/// Base of the trailing singular values `tail^q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailBase {
    /// `10^q`, matching the table captions.
    #[default]
    Ten,
    /// `min(n,p)^q`, the body-text variant.
    MinDim,
}

/// Singular-value profile of the mean matrix: a short arithmetic ramp
/// followed by a flat tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanProfile {
    pub kind: ProfileKind,
    /// Tail exponent: trailing singular values are `tail^q`.
    pub q: f64,
    #[serde(default)]
    pub tail: TailBase,
}

impl MeanProfile {
    pub fn new(kind: ProfileKind, q: f64) -> Self {
        MeanProfile {
            kind,
            q,
            tail: TailBase::Ten,
        }
    }
}

/// Entry distribution of the noise matrix; all standardized to mean 0,
/// variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseKind {
    Gaussian,
    /// `t_3 * sqrt(1/3)`.
    StudentT3,
    /// `(chi^2_2 - 2) / 2`.
    ChiSq2,
}

/// Full description of one Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub sizes: Vec<(usize, usize)>,
    pub profile: MeanProfile,
    pub noise: NoiseKind,
    pub reps: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorId>,
}

/// The singular values prescribed by a profile at a given size. A single
/// ramp value degenerates to the base alone: the ramp increment carries a
/// factor of zero there, so the zero denominator never applies.
pub fn ramp_singular_values(n: usize, p: usize, profile: &MeanProfile) -> Result<Vec<f64>> {
    let k = n.min(p);
    let count = k / profile.kind.divisor();
    if count == 0 {
        return Err(ShrinkError::Config(format!(
            "profile needs floor(min(n,p)/{}) >= 1 ramp value, got 0 at (n, p) = ({n}, {p})",
            profile.kind.divisor()
        )));
    }
    let base = profile.kind.base();
    let denom = (count.max(2) - 1) as f64;
    let tail = match profile.tail {
        TailBase::Ten => 10f64.powf(profile.q),
        TailBase::MinDim => (k as f64).powf(profile.q),
    };
    let mut s = Vec::with_capacity(k);
    for i in 0..count {
        s.push(base + base * i as f64 / denom);
    }
    s.resize(k, tail);
    Ok(s)
}

/// Haar-distributed `rows x cols` orthonormal frame (`rows >= cols`),
/// drawn row-major so the stream position is reproducible.
fn haar_frame(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let g: Array2<f64> = Array::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal));
    let (q, r) = g.qr().expect("Gaussian matrix has full column rank");
    let mut q = q;
    for (j, mut col) in q.columns_mut().into_iter().enumerate() {
        if r[(j, j)] < 0.0 {
            col *= -1.0;
        }
    }
    q
}

fn make_mean_with(
    rng: &mut ChaCha8Rng,
    n: usize,
    p: usize,
    profile: &MeanProfile,
) -> Result<Array2<f64>> {
    let s = ramp_singular_values(n, p, profile)?;
    let k = s.len();
    let u0 = haar_frame(rng, p, k);
    let v0 = haar_frame(rng, n, k);
    let mut scaled = u0;
    for (j, mut col) in scaled.columns_mut().into_iter().enumerate() {
        col *= s[j];
    }
    Ok(scaled.dot(&v0.t()))
}

/// Random mean matrix `U0 diag(s) V0^T` with Haar frames and the
/// profile's singular values.
pub fn make_mean(n: usize, p: usize, profile: &MeanProfile, seed: u64) -> Result<Array2<f64>> {
    make_mean_with(&mut substream(seed, 0, 0), n, p, profile)
}

fn noise_value(rng: &mut ChaCha8Rng, noise: NoiseKind) -> f64 {
    match noise {
        NoiseKind::Gaussian => rng.sample(StandardNormal),
        NoiseKind::StudentT3 => {
            let t: f64 = rng.sample(StudentT::new(3.0).expect("valid dof"));
            t * (1.0f64 / 3.0).sqrt()
        }
        NoiseKind::ChiSq2 => {
            let x: f64 = rng.sample(ChiSquared::new(2.0).expect("valid dof"));
            (x - 2.0) / 2.0
        }
    }
}

fn sample_data_with(rng: &mut ChaCha8Rng, theta: &ArrayView2<f64>, noise: NoiseKind) -> DataMatrix {
    let x = theta.mapv(|t| t) + Array::from_shape_fn(theta.dim(), |_| noise_value(rng, noise));
    DataMatrix::new(x, Sigma::Identity).expect("mean matrix dimensions are valid")
}

/// Mean matrix plus standardized i.i.d. noise.
pub fn sample_data(theta: &ArrayView2<f64>, noise: NoiseKind, seed: u64) -> DataMatrix {
    sample_data_with(&mut substream(seed, 0, 0), theta, noise)
}

/// Normalized quadratic loss `(np)^{-1} tr[(D)^T Sigma^{-1} D]` with
/// `D = theta_hat - theta`.
pub fn loss(theta_hat: &ArrayView2<f64>, theta: &ArrayView2<f64>, sigma: &Sigma) -> Result<f64> {
    if theta_hat.dim() != theta.dim() {
        return Err(ShrinkError::Dimension(format!(
            "estimate is {:?} but mean is {:?}",
            theta_hat.dim(),
            theta.dim()
        )));
    }
    let (p, n) = theta.dim();
    let diff = theta_hat.to_owned() - theta;
    let white = sigma.whiten(&diff);
    Ok(white.iter().map(|v| v * v).sum::<f64>() / (n * p) as f64)
}

/// One risk-table cell. A nonzero `failures` count flags the cell; its
/// statistics are then reported as NaN rather than over a biased subset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub mean: f64,
    pub se: f64,
    pub failures: usize,
}

/// Monte Carlo risk estimates, one row per size, one cell per estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskTable {
    pub sizes: Vec<(usize, usize)>,
    pub estimators: Vec<EstimatorId>,
    /// `cells[size_index][estimator_index]`.
    pub cells: Vec<Vec<Cell>>,
}

impl RiskTable {
    pub fn cell(&self, n: usize, p: usize, id: EstimatorId) -> Option<&Cell> {
        let row = self.sizes.iter().position(|&s| s == (n, p))?;
        let col = self.estimators.iter().position(|&e| e == id)?;
        Some(&self.cells[row][col])
    }

    /// CSV layout: `n,p`, all estimator means, then all standard errors.
    pub fn to_csv_string(&self) -> String {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["n".to_string(), "p".to_string()];
        for id in &self.estimators {
            header.push(format!("{}_mean", id.as_str()));
        }
        for id in &self.estimators {
            header.push(format!("{}_se", id.as_str()));
        }
        wtr.write_record(&header).expect("write to vec");
        for (row, &(n, p)) in self.sizes.iter().enumerate() {
            let mut rec = vec![n.to_string(), p.to_string()];
            for cell in &self.cells[row] {
                rec.push(cell.mean.to_string());
            }
            for cell in &self.cells[row] {
                rec.push(cell.se.to_string());
            }
            wtr.write_record(&rec).expect("write to vec");
        }
        String::from_utf8(wtr.into_inner().expect("flush to vec")).expect("utf8")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    /// Aligned text table with three-decimal means, one row per size.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:>5} {:>5}", "n", "p");
        for id in &self.estimators {
            let _ = write!(out, " {:>8}", id.table_label());
        }
        out.push('\n');
        for (row, &(n, p)) in self.sizes.iter().enumerate() {
            let _ = write!(out, "{n:>5} {p:>5}");
            for cell in &self.cells[row] {
                if cell.failures > 0 {
                    let _ = write!(out, " {:>8}", format!("x({})", cell.failures));
                } else {
                    let _ = write!(out, " {:>8.3}", cell.mean);
                }
            }
            out.push('\n');
        }
        out
    }
}

fn replicate(
    cfg: &ExperimentConfig,
    n: usize,
    p: usize,
    lane: u64,
    rep: u64,
) -> Vec<Option<f64>> {
    let mut rng = substream(cfg.seed, lane, rep);
    let theta = make_mean_with(&mut rng, n, p, &cfg.profile).expect("sizes validated upfront");
    let data = sample_data_with(&mut rng, &theta.view(), cfg.noise);
    let spec = match center_and_whiten(&data) {
        Ok(s) => s,
        Err(_) => return vec![None; cfg.estimators.len()],
    };
    cfg.estimators
        .iter()
        .map(|id| {
            id.apply(&spec, None)
                .ok()
                .and_then(|rep| loss(&rep.theta_hat.view(), &theta.view(), &Sigma::Identity).ok())
        })
        .collect()
}

/// Runs the full experiment. Replications are distributed over the
/// current thread pool; the fixed substream-per-replication layout and
/// ordered reduction make the result bit-identical for any worker count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RiskTable> {
    limit_blas_threads();
    if cfg.reps == 0 {
        return Err(ShrinkError::Config("reps must be at least 1".into()));
    }
    if cfg.sizes.is_empty() || cfg.estimators.is_empty() {
        return Err(ShrinkError::Config(
            "need at least one size and one estimator".into(),
        ));
    }
    for &(n, p) in &cfg.sizes {
        if n < 2 || p < 1 {
            return Err(ShrinkError::Config(format!(
                "invalid size (n, p) = ({n}, {p})"
            )));
        }
        ramp_singular_values(n, p, &cfg.profile)?;
    }

    let mut cells = Vec::with_capacity(cfg.sizes.len());
    for (lane, &(n, p)) in cfg.sizes.iter().enumerate() {
        let losses: Vec<Vec<Option<f64>>> = (0..cfg.reps as u64)
            .into_par_iter()
            .map(|rep| replicate(cfg, n, p, lane as u64, rep))
            .collect();
        let mut row = Vec::with_capacity(cfg.estimators.len());
        for e in 0..cfg.estimators.len() {
            let failures = losses.iter().filter(|l| l[e].is_none()).count();
            if failures > 0 {
                row.push(Cell {
                    mean: f64::NAN,
                    se: f64::NAN,
                    failures,
                });
            } else {
                let vals: Vec<f64> = losses.iter().map(|l| l[e].unwrap()).collect();
                let (mean, se) = mean_se(&vals);
                row.push(Cell {
                    mean,
                    se,
                    failures: 0,
                });
            }
        }
        cells.push(row);
    }
    Ok(RiskTable {
        sizes: cfg.sizes.clone(),
        estimators: cfg.estimators.clone(),
        cells,
    })
}
