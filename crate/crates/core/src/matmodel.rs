//! Core data model: centering, whitening by the known covariance, spectral
//! decomposition, and ridge-inverse trace functionals.
//!
//! Everything downstream works in whitened coordinates on the centered data
//! matrix `Y = Sigma^{-1/2}(X - Xbar)` and its economy SVD truncated to
//! `m = min(p, n-1)` components. Both the tall (`n-1 >= p`) and wide
//! (`p > n-1`) regimes share this single orientation; the only asymmetry
//! that survives is the constant `A0 = |n - p - 1|`.

use std::path::Path;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use ndarray_linalg::{Eigh, JobSvd, SVDDC, UPLO};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShrinkError};

/// Singular values below this fraction of the largest one are treated as
/// exactly zero (rank decisions for the generalized-inverse paths).
pub const SV_ZERO_REL: f64 = 1e-12;

/// Known covariance of each observation column.
#[derive(Debug, Clone)]
pub enum Sigma {
    /// `Sigma = I_p`; whitening is the identity map.
    Identity,
    /// `Sigma = diag(d)` with strictly positive entries.
    Diagonal(Array1<f64>),
    /// General SPD matrix, stored through its symmetric square root.
    Full {
        sqrt: Array2<f64>,
        inv_sqrt: Array2<f64>,
    },
}

impl Sigma {
    /// Diagonal covariance; every entry must be finite and positive.
    pub fn diagonal(d: Array1<f64>) -> Result<Self> {
        if d.is_empty() {
            return Err(ShrinkError::Covariance("empty diagonal".into()));
        }
        if let Some(bad) = d.iter().find(|v| !v.is_finite() || **v <= 0.0) {
            return Err(ShrinkError::Covariance(format!(
                "diagonal entries must be positive, got {bad}"
            )));
        }
        Ok(Sigma::Diagonal(d))
    }

    /// General covariance; validates symmetry and positive definiteness and
    /// precomputes `Sigma^{1/2}` and `Sigma^{-1/2}`.
    pub fn full(mat: &Array2<f64>) -> Result<Self> {
        let (r, c) = mat.dim();
        if r != c || r == 0 {
            return Err(ShrinkError::Covariance(format!(
                "covariance must be square, got {r}x{c}"
            )));
        }
        let scale = mat.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if !scale.is_finite() {
            return Err(ShrinkError::Covariance("non-finite entry".into()));
        }
        let asym = (mat - &mat.t())
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        if asym > 1e-8 * (1.0 + scale) {
            return Err(ShrinkError::Covariance(format!(
                "covariance is not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        let sym = (mat + &mat.t()) * 0.5;
        let (eigs, q) = sym.eigh(UPLO::Lower)?;
        let lam_max = eigs.iter().fold(0.0f64, |acc, v| acc.max(*v));
        if eigs.iter().any(|&l| l <= SV_ZERO_REL * lam_max.max(1.0)) {
            return Err(ShrinkError::Covariance(format!(
                "covariance is not positive definite (min eigenvalue {:.3e})",
                eigs.iter().cloned().fold(f64::INFINITY, f64::min)
            )));
        }
        let scaled = |f: fn(f64) -> f64| {
            let mut cols = q.clone();
            for (j, mut col) in cols.columns_mut().into_iter().enumerate() {
                col *= f(eigs[j]);
            }
            cols.dot(&q.t())
        };
        Ok(Sigma::Full {
            sqrt: scaled(f64::sqrt),
            inv_sqrt: scaled(|l| 1.0 / l.sqrt()),
        })
    }

    /// Dimension this covariance is pinned to, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Sigma::Identity => None,
            Sigma::Diagonal(d) => Some(d.len()),
            Sigma::Full { sqrt, .. } => Some(sqrt.nrows()),
        }
    }

    fn check_dim(&self, p: usize) -> Result<()> {
        match self.dim() {
            Some(d) if d != p => Err(ShrinkError::Dimension(format!(
                "covariance is {d}-dimensional but the data has {p} rows"
            ))),
            _ => Ok(()),
        }
    }

    /// `Sigma^{-1/2} x`.
    pub fn whiten(&self, x: &Array2<f64>) -> Array2<f64> {
        match self {
            Sigma::Identity => x.clone(),
            Sigma::Diagonal(d) => {
                let mut y = x.clone();
                for (i, mut row) in y.rows_mut().into_iter().enumerate() {
                    row /= d[i].sqrt();
                }
                y
            }
            Sigma::Full { inv_sqrt, .. } => inv_sqrt.dot(x),
        }
    }

    /// `Sigma^{1/2} y`.
    pub fn unwhiten(&self, y: &Array2<f64>) -> Array2<f64> {
        match self {
            Sigma::Identity => y.clone(),
            Sigma::Diagonal(d) => {
                let mut x = y.clone();
                for (i, mut row) in x.rows_mut().into_iter().enumerate() {
                    row *= d[i].sqrt();
                }
                x
            }
            Sigma::Full { sqrt, .. } => sqrt.dot(y),
        }
    }
}

/// Observed matrix `X` (p rows = variables, n columns = observations) with
/// its known covariance.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    pub values: Array2<f64>,
    pub sigma: Sigma,
}

impl DataMatrix {
    pub fn new(values: Array2<f64>, sigma: Sigma) -> Result<Self> {
        let (p, n) = values.dim();
        if p < 1 {
            return Err(ShrinkError::Dimension("need at least one row".into()));
        }
        if n < 2 {
            return Err(ShrinkError::Dimension(format!(
                "need at least two observation columns, got {n}"
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(ShrinkError::DegenerateData("non-finite data entry".into()));
        }
        sigma.check_dim(p)?;
        Ok(DataMatrix { values, sigma })
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    pub fn n(&self) -> usize {
        self.values.ncols()
    }
}

/// Economy SVD of the whitened centered data, truncated to the
/// `m = min(p, n-1)` components that can carry signal.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub p: usize,
    pub n: usize,
    /// `min(p, n-1)`.
    pub m: usize,
    /// Singular values, descending, length `m`; hard zeros below the
    /// relative cutoff.
    pub sv: Array1<f64>,
    /// `ev[i] = sv[i]^2`, the nonzero eigenvalues of `W = Y Y^T`.
    pub ev: Array1<f64>,
    /// `tr W = sum(ev)`.
    pub tr_w: f64,
    /// `p x m` orthonormal left singular vectors (whitened coordinates).
    pub left_vecs: Array2<f64>,
    /// `n x m` orthonormal right singular vectors, orthogonal to `1_n`.
    pub right_vecs: Array2<f64>,
    /// Row means of the original data, length `p`.
    pub xbar: Array1<f64>,
    /// `|n - p - 1|`.
    pub a0: f64,
    /// Covariance carried along so estimates can be mapped back.
    pub sigma: Sigma,
}

impl Spectrum {
    /// `Xbar + Sigma^{1/2} U diag(new_sv) V^T`: rebuilds a full estimate from
    /// modified singular values.
    pub fn rebuild(&self, new_sv: &Array1<f64>) -> Array2<f64> {
        assert_eq!(new_sv.len(), self.m);
        let mut scaled = self.left_vecs.clone();
        for (j, mut col) in scaled.columns_mut().into_iter().enumerate() {
            col *= new_sv[j];
        }
        let shrunk = scaled.dot(&self.right_vecs.t());
        let mut out = self.sigma.unwhiten(&shrunk);
        out += &self.xbar.view().insert_axis(Axis(1));
        out
    }
}

/// Centers `X` by its row means, whitens by the covariance, and decomposes.
pub fn center_and_whiten(data: &DataMatrix) -> Result<Spectrum> {
    let (p, n) = data.values.dim();
    let xbar = data.values.mean_axis(Axis(1)).expect("n >= 2");
    let centered = &data.values - &xbar.view().insert_axis(Axis(1));
    let y = data.sigma.whiten(&centered);
    let m = p.min(n - 1);

    let (u_opt, s, vt_opt) = y.svddc(JobSvd::Some)?;
    let u = u_opt.expect("left vectors requested");
    let vt = vt_opt.expect("right vectors requested");

    let mut sv = s.slice(s![..m]).to_owned();
    let cutoff = SV_ZERO_REL * sv.first().copied().unwrap_or(0.0);
    sv.mapv_inplace(|v| if v <= cutoff { 0.0 } else { v });
    let ev = sv.mapv(|v| v * v);
    let tr_w = ev.sum();

    Ok(Spectrum {
        p,
        n,
        m,
        sv,
        ev,
        tr_w,
        left_vecs: u.slice(s![.., ..m]).to_owned(),
        right_vecs: vt.slice(s![..m, ..]).t().to_owned(),
        xbar,
        a0: (n as f64 - p as f64 - 1.0).abs(),
        sigma: data.sigma.clone(),
    })
}

/// Builds a synthetic spectrum from prescribed eigenvalues of `W`, with
/// identity covariance, zero row means, and canonical orthonormal frames.
///
/// The right frame is taken from the Householder reflector sending `e_1` to
/// `1_n/sqrt(n)`, so its columns are orthogonal to `1_n` exactly as for a
/// genuinely centered matrix.
pub fn spectrum_from_reduced(ev: &[f64], n: usize, p: usize) -> Result<Spectrum> {
    if n < 2 || p < 1 {
        return Err(ShrinkError::Dimension(format!(
            "need n >= 2 and p >= 1, got n={n}, p={p}"
        )));
    }
    let m = p.min(n - 1);
    if ev.len() != m {
        return Err(ShrinkError::Dimension(format!(
            "expected {m} eigenvalues for (n, p) = ({n}, {p}), got {}",
            ev.len()
        )));
    }
    if let Some(bad) = ev.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(ShrinkError::DegenerateData(format!(
            "eigenvalues must be finite and nonnegative, got {bad}"
        )));
    }
    let mut sorted = ev.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let ev = Array1::from_vec(sorted);
    let sv = ev.mapv(f64::sqrt);
    let tr_w = ev.sum();

    let mut left = Array2::zeros((p, m));
    for j in 0..m {
        left[(j, j)] = 1.0;
    }

    let rn = (n as f64).sqrt();
    let mut hu = Array1::from_elem(n, -1.0 / rn);
    hu[0] += 1.0;
    let cf = 2.0 / hu.dot(&hu);
    let mut right = Array2::zeros((n, m));
    for j in 0..m {
        let t = cf * hu[j + 1];
        let mut col = right.column_mut(j);
        col.assign(&hu.mapv(|v| -t * v));
        col[j + 1] += 1.0;
    }

    Ok(Spectrum {
        p,
        n,
        m,
        sv,
        ev,
        tr_w,
        left_vecs: left,
        right_vecs: right,
        xbar: Array1::zeros(p),
        a0: (n as f64 - p as f64 - 1.0).abs(),
        sigma: Sigma::Identity,
    })
}

/// Decomposes an already-centered, whitened `p x (n-1)` reduced matrix
/// `Y` (so `W = Y Y^T`), embedding its right singular vectors into the
/// mean-orthogonal subspace of `R^n` with the Householder frame of
/// [`spectrum_from_reduced`]. Zero row means and identity covariance.
pub fn spectrum_from_centered_reduced(y: &Array2<f64>, n: usize) -> Result<Spectrum> {
    let (p, cols) = y.dim();
    if n < 2 || cols != n - 1 || p == 0 {
        return Err(ShrinkError::Dimension(format!(
            "reduced matrix must be p x (n-1) with p >= 1, got {p} x {cols} for n = {n}"
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(ShrinkError::DegenerateData(
            "reduced matrix has non-finite entries".into(),
        ));
    }
    let m = p.min(n - 1);

    let (u_opt, s, vt_opt) = y.svddc(JobSvd::Some)?;
    let u = u_opt.expect("left vectors requested");
    let vt = vt_opt.expect("right vectors requested");

    let mut sv = s.slice(s![..m]).to_owned();
    let cutoff = SV_ZERO_REL * sv.first().copied().unwrap_or(0.0);
    sv.mapv_inplace(|v| if v <= cutoff { 0.0 } else { v });
    let ev = sv.mapv(|v| v * v);
    let tr_w = ev.sum();

    let rn = (n as f64).sqrt();
    let mut hu = Array1::from_elem(n, -1.0 / rn);
    hu[0] += 1.0;
    let cf = 2.0 / hu.dot(&hu);
    let mut right = Array2::zeros((n, m));
    for j in 0..m {
        let vj = vt.row(j);
        let dot: f64 = vj.iter().zip(hu.iter().skip(1)).map(|(a, b)| a * b).sum();
        let t = cf * dot;
        let mut col = right.column_mut(j);
        for i in 0..n {
            let base = if i == 0 { 0.0 } else { vj[i - 1] };
            col[i] = base - t * hu[i];
        }
    }

    Ok(Spectrum {
        p,
        n,
        m,
        sv,
        ev,
        tr_w,
        left_vecs: u.slice(s![.., ..m]).to_owned(),
        right_vecs: right,
        xbar: Array1::zeros(p),
        a0: (n as f64 - p as f64 - 1.0).abs(),
        sigma: Sigma::Identity,
    })
}

/// How the ridge level is tied to the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RidgeMode {
    /// `alpha_hat = c`.
    Constant,
    /// `alpha_hat = c * tr W`.
    TraceProportional,
}

/// Ridge mode plus its positive constant `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RidgeConfig {
    pub mode: RidgeMode,
    pub c: f64,
}

impl RidgeConfig {
    pub fn new(mode: RidgeMode, c: f64) -> Result<Self> {
        if !c.is_finite() || c <= 0.0 {
            return Err(ShrinkError::Ridge(format!(
                "ridge constant must be finite and positive, got {c}"
            )));
        }
        Ok(RidgeConfig { mode, c })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(RidgeMode::Constant, c)
    }

    pub fn trace_proportional(c: f64) -> Result<Self> {
        Self::new(RidgeMode::TraceProportional, c)
    }

    /// The ridge level for data with the given `tr W`.
    pub fn alpha_hat(&self, tr_w: f64) -> f64 {
        match self.mode {
            RidgeMode::Constant => self.c,
            RidgeMode::TraceProportional => self.c * tr_w,
        }
    }

    /// Coefficient of the `alpha_hat`-derivative coupling: 0 when the ridge
    /// ignores the data, `c` when it is proportional to `tr W`.
    pub fn c0(&self) -> f64 {
        match self.mode {
            RidgeMode::Constant => 0.0,
            RidgeMode::TraceProportional => self.c,
        }
    }
}

/// All trace functionals of `V = (W + alpha_hat I)^{-1}` needed by the risk
/// estimators, taken over the m retained eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeTraces {
    /// `sum 1/(l_i + alpha)`.
    pub tr_v: f64,
    /// `sum l_i/(l_i + alpha)`; equals `m - alpha * tr_v`.
    pub tr_vw: f64,
    /// `sum l_i/(l_i + alpha)^2`.
    pub tr_v2w: f64,
    /// `sum l_i/(l_i + alpha)^3`.
    pub tr_v3w: f64,
    /// `sum 1/(l_i + alpha)^2`.
    pub tr_v2: f64,
    /// `sum l_i^2/(l_i + alpha)^4`.
    pub tr_v4w2: f64,
    /// `sum l_i^2/(l_i + alpha)^3`.
    pub tr_v3w2: f64,
    /// `1/tr W`.
    pub u: f64,
}

pub fn ridge_traces(spec: &Spectrum, ridge: &RidgeConfig) -> Result<RidgeTraces> {
    if spec.tr_w <= 0.0 {
        return Err(ShrinkError::DegenerateData(
            "tr W = 0: all columns coincide, no spectrum to shrink".into(),
        ));
    }
    let alpha = ridge.alpha_hat(spec.tr_w);
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(ShrinkError::Ridge(format!(
            "ridge level must be positive, got {alpha}"
        )));
    }
    let mut t = RidgeTraces {
        tr_v: 0.0,
        tr_vw: 0.0,
        tr_v2w: 0.0,
        tr_v3w: 0.0,
        tr_v2: 0.0,
        tr_v4w2: 0.0,
        tr_v3w2: 0.0,
        u: 1.0 / spec.tr_w,
    };
    for &l in &spec.ev {
        let d = l + alpha;
        t.tr_v += 1.0 / d;
        t.tr_vw += l / d;
        t.tr_v2w += l / (d * d);
        t.tr_v3w += l / (d * d * d);
        t.tr_v2 += 1.0 / (d * d);
        t.tr_v4w2 += l * l / (d * d * d * d);
        t.tr_v3w2 += l * l / (d * d * d);
    }
    Ok(t)
}

/// Per-singular-value factors `f_i = 1/(l_i + alpha)`: applying
/// `a (W + alpha I)^{-1}` to the centered data multiplies singular direction
/// `i` by `a f_i`, in either dimension regime.
pub fn apply_ridge_inverse(spec: &Spectrum, alpha: f64) -> Result<Array1<f64>> {
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(ShrinkError::Ridge(format!(
            "ridge level must be positive, got {alpha}"
        )));
    }
    Ok(spec.ev.mapv(|l| 1.0 / (l + alpha)))
}

fn csv_error(e: csv::Error) -> ShrinkError {
    match e.into_kind() {
        csv::ErrorKind::Io(ioe) => ShrinkError::Io(ioe),
        other => ShrinkError::CsvParse {
            row: 0,
            col: 0,
            msg: format!("{other:?}"),
        },
    }
}

/// Reads a headerless comma-separated matrix; every row must have the same
/// number of fields.
pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_error)?;
    let mut cells: Vec<f64> = Vec::new();
    let mut width = 0usize;
    let mut rows = 0usize;
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| ShrinkError::CsvParse {
            row: i + 1,
            col: 0,
            msg: e.to_string(),
        })?;
        if record.len() == 1 && record[0].is_empty() {
            continue; // blank line
        }
        if rows == 0 {
            width = record.len();
        } else if record.len() != width {
            return Err(ShrinkError::CsvParse {
                row: i + 1,
                col: record.len(),
                msg: format!("expected {width} fields, found {}", record.len()),
            });
        }
        for (j, field) in record.iter().enumerate() {
            let v = f64::from_str(field).map_err(|_| ShrinkError::CsvParse {
                row: i + 1,
                col: j + 1,
                msg: format!("invalid number {field:?}"),
            })?;
            cells.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(ShrinkError::CsvParse {
            row: 1,
            col: 1,
            msg: "empty matrix file".into(),
        });
    }
    Array2::from_shape_vec((rows, width), cells)
        .map_err(|e| ShrinkError::Dimension(e.to_string()))
}

/// Writes a matrix as headerless CSV with shortest round-trip formatting.
pub fn write_matrix_csv(path: &Path, m: &ArrayView2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for row in m.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a covariance for `p`-row data: a `p x p` matrix is taken as full
/// SPD, a single row or column of length `p` as a diagonal.
pub fn read_sigma_csv(path: &Path, p: usize) -> Result<Sigma> {
    let m = read_matrix_csv(path)?;
    let (r, c) = m.dim();
    if r == 1 && c == p {
        Sigma::diagonal(m.row(0).to_owned())
    } else if c == 1 && r == p {
        Sigma::diagonal(m.column(0).to_owned())
    } else if r == p && c == p {
        Sigma::full(&m)
    } else {
        Err(ShrinkError::Dimension(format!(
            "covariance file is {r}x{c}; expected {p}x{p}, 1x{p}, or {p}x1"
        )))
    }
}
