//! Multichannel behavioral series: assembly, SVD reduction, sliding-window
//! blocking and VAR coefficient extraction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{OegError, Result};

/// A T x m multichannel time series at a fixed frame rate.
#[derive(Debug, Clone)]
pub struct ChannelSeries {
    pub values: DMatrix<f64>,
    pub frame_rate: f64,
    pub channel_names: Vec<String>,
}

impl ChannelSeries {
    pub fn new(values: DMatrix<f64>, frame_rate: f64, channel_names: Vec<String>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(OegError::TooShort {
                got: values.nrows(),
                need: 2,
            });
        }
        if channel_names.len() != values.ncols() {
            return Err(OegError::InvalidInput(format!(
                "{} channel names for {} channels",
                channel_names.len(),
                values.ncols()
            )));
        }
        Ok(ChannelSeries {
            values,
            frame_rate,
            channel_names,
        })
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }
}

/// Sliding-window layout in seconds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WindowSpec {
    pub length_s: f64,
    pub overlap_s: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            length_s: 10.0,
            overlap_s: 1.0,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.overlap_s < 0.0 || self.overlap_s >= self.length_s {
            return Err(OegError::InvalidInput(format!(
                "overlap {} must be in [0, length {})",
                self.overlap_s, self.length_s
            )));
        }
        Ok(())
    }
}

/// Fitted VAR(p) model of one window.
#[derive(Debug, Clone)]
pub struct VarModel {
    pub intercept: DVector<f64>,
    /// Lag coefficient matrices phi_1 .. phi_p, each m x m.
    pub coeffs: Vec<DMatrix<f64>>,
    pub order: usize,
    pub residual_cov: DMatrix<f64>,
    /// Set when the regressor Gram matrix needed a ridge fallback.
    pub ill_conditioned: bool,
}

/// Standardized projection onto the top-q right singular vectors.
///
/// Columns are mean-centered and scaled to unit variance before the SVD, so
/// the basis ranks directions by correlated structure rather than by raw
/// magnitude; high-variance but uninformative coordinates (e.g. poorly
/// conditioned coefficient estimates) cannot monopolize it.
#[derive(Debug, Clone)]
pub struct ReducedBasis {
    pub projection: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub scale: DVector<f64>,
    pub q: usize,
}

/// Linearly fill NaN gaps of at most `max_gap` consecutive frames per channel.
///
/// Returns the index set of rows still containing NaN afterwards; windows
/// touching those rows must be discarded by the caller.
pub fn interpolate_gaps(series: &mut ChannelSeries, max_gap: usize) -> Vec<usize> {
    let t = series.values.nrows();
    let m = series.values.ncols();
    for c in 0..m {
        let mut row = 0;
        while row < t {
            if !series.values[(row, c)].is_nan() {
                row += 1;
                continue;
            }
            let start = row;
            let mut end = row;
            while end < t && series.values[(end, c)].is_nan() {
                end += 1;
            }
            let gap = end - start;
            let before = if start > 0 {
                Some(series.values[(start - 1, c)])
            } else {
                None
            };
            let after = if end < t {
                Some(series.values[(end, c)])
            } else {
                None
            };
            if gap <= max_gap {
                match (before, after) {
                    (Some(a), Some(b)) => {
                        for (k, r) in (start..end).enumerate() {
                            let frac = (k + 1) as f64 / (gap + 1) as f64;
                            series.values[(r, c)] = a + frac * (b - a);
                        }
                    }
                    (Some(a), None) => {
                        for r in start..end {
                            series.values[(r, c)] = a;
                        }
                    }
                    (None, Some(b)) => {
                        for r in start..end {
                            series.values[(r, c)] = b;
                        }
                    }
                    (None, None) => {}
                }
            }
            row = end;
        }
    }
    (0..t)
        .filter(|&r| (0..m).any(|c| series.values[(r, c)].is_nan()))
        .collect()
}

/// Concatenate the geodesic series with auxiliary channels and standardize
/// each channel to zero mean and unit variance over the recording.
///
/// Constant channels are dropped with a warning. Lengths may differ by one
/// frame; everything is truncated to the shortest series.
pub fn assemble_channels(
    geodesic: &ChannelSeries,
    aux: &[&ChannelSeries],
) -> Result<ChannelSeries> {
    for a in aux {
        if (a.frame_rate - geodesic.frame_rate).abs() > 1e-9 {
            return Err(OegError::RateMismatch(geodesic.frame_rate, a.frame_rate));
        }
        if a.len().abs_diff(geodesic.len()) > 1 {
            return Err(OegError::InvalidInput(format!(
                "auxiliary series length {} differs from geodesic length {} by more than one frame",
                a.len(),
                geodesic.len()
            )));
        }
    }
    let t = std::iter::once(geodesic.len())
        .chain(aux.iter().map(|a| a.len()))
        .min()
        .unwrap();

    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    for series in std::iter::once(geodesic).chain(aux.iter().copied()) {
        for c in 0..series.width() {
            let col: Vec<f64> = (0..t).map(|r| series.values[(r, c)]).collect();
            columns.push((series.channel_names[c].clone(), col));
        }
    }

    let mut kept_names = Vec::new();
    let mut kept_cols: Vec<Vec<f64>> = Vec::new();
    for (name, col) in columns {
        let mean: f64 = col.iter().sum::<f64>() / t as f64;
        let var: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t as f64;
        if var < 1e-24 {
            log::warn!("dropping constant channel {name}");
            continue;
        }
        let sd = var.sqrt();
        kept_cols.push(col.iter().map(|v| (v - mean) / sd).collect());
        kept_names.push(name);
    }
    if kept_cols.is_empty() {
        return Err(OegError::InvalidInput("all channels were constant".into()));
    }
    let values = DMatrix::from_fn(t, kept_cols.len(), |r, c| kept_cols[c][r]);
    ChannelSeries::new(values, geodesic.frame_rate, kept_names)
}

/// Fit an SVD basis over stacked rows from many series.
pub fn fit_basis(data: &DMatrix<f64>, q: usize) -> Result<ReducedBasis> {
    let m = data.ncols();
    if q < 1 || q > m {
        return Err(OegError::InvalidInput(format!(
            "target dimension {q} out of range 1..={m}"
        )));
    }
    let mean = data.row_mean().transpose();
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let n = data.nrows().max(1) as f64;
    let scale = DVector::from_fn(m, |c, _| {
        let v: f64 = centered.column(c).iter().map(|x| x * x).sum::<f64>() / n;
        v.sqrt().max(1e-12)
    });
    for mut row in centered.row_iter_mut() {
        row.component_div_assign(&scale.transpose());
    }
    let svd = centered
        .try_svd(false, true, 1e-14, 0)
        .ok_or_else(|| OegError::InvalidInput("SVD failed to converge".into()))?;
    let sv = &svd.singular_values;
    let rank = sv.iter().filter(|&&s| s > 1e-10 * sv[0].max(1.0)).count();
    if q > rank {
        return Err(OegError::RankTooLow { requested: q, rank });
    }
    let vt = svd.v_t.unwrap();
    let projection = vt.rows(0, q).transpose().into_owned();
    Ok(ReducedBasis {
        projection,
        mean,
        scale,
        q,
    })
}

/// Project a series onto a reduced basis.
pub fn apply_basis(series: &ChannelSeries, basis: &ReducedBasis) -> Result<ChannelSeries> {
    if series.width() != basis.projection.nrows() {
        return Err(OegError::InvalidInput(format!(
            "series width {} does not match basis input dimension {}",
            series.width(),
            basis.projection.nrows()
        )));
    }
    let mut centered = series.values.clone();
    for mut row in centered.row_iter_mut() {
        row -= basis.mean.transpose();
        row.component_div_assign(&basis.scale.transpose());
    }
    let values = centered * &basis.projection;
    let names = (0..basis.q).map(|i| format!("pc{i}")).collect();
    ChannelSeries::new(values, series.frame_rate, names)
}

/// Project a bare matrix of row vectors onto a reduced basis.
pub fn apply_basis_rows(data: &DMatrix<f64>, basis: &ReducedBasis) -> DMatrix<f64> {
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= basis.mean.transpose();
        row.component_div_assign(&basis.scale.transpose());
    }
    centered * &basis.projection
}

/// Slice a series into overlapping windows; trailing partials are dropped.
pub fn window(series: &ChannelSeries, spec: &WindowSpec) -> Result<Vec<DMatrix<f64>>> {
    spec.validate()?;
    let win = (spec.length_s * series.frame_rate).round() as usize;
    let hop = ((spec.length_s - spec.overlap_s) * series.frame_rate).round() as usize;
    if win == 0 || hop == 0 {
        return Err(OegError::InvalidInput(
            "window or hop rounds to zero frames".into(),
        ));
    }
    let t = series.len();
    if t < win {
        return Err(OegError::TooShort { got: t, need: win });
    }
    let mut blocks = Vec::new();
    let mut start = 0;
    while start + win <= t {
        blocks.push(series.values.rows(start, win).into_owned());
        start += hop;
    }
    Ok(blocks)
}

const CONDITION_LIMIT: f64 = 1e12;

/// Ordinary least squares fit of a VAR(p) with intercept.
///
/// Falls back to a small ridge when the regressor Gram matrix is
/// ill-conditioned; the model is flagged in that case.
/// Spectral radius of the companion matrix of a VAR coefficient set;
/// the process is stationary when this is below one.
pub fn companion_radius(coeffs: &[DMatrix<f64>]) -> f64 {
    let m = coeffs[0].nrows();
    let p = coeffs.len();
    let mut companion = DMatrix::zeros(m * p, m * p);
    for (lag, phi) in coeffs.iter().enumerate() {
        companion.view_mut((0, lag * m), (m, m)).copy_from(phi);
    }
    for i in 0..m * (p - 1) {
        companion[(m + i, i)] = 1.0;
    }
    companion
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn fit_var(block: &DMatrix<f64>, p: usize) -> Result<VarModel> {
    let t = block.nrows();
    let m = block.ncols();
    if p < 1 {
        return Err(OegError::InvalidInput("VAR order must be >= 1".into()));
    }
    if t <= m * p + 1 {
        return Err(OegError::TooShort {
            got: t,
            need: m * p + 2,
        });
    }
    let rows = t - p;
    let k = 1 + m * p;
    // regressor row: [1, x_{t-1}, ..., x_{t-p}]
    let mut reg = DMatrix::zeros(rows, k);
    let mut target = DMatrix::zeros(rows, m);
    for r in 0..rows {
        let tcur = r + p;
        reg[(r, 0)] = 1.0;
        for lag in 1..=p {
            for c in 0..m {
                reg[(r, 1 + (lag - 1) * m + c)] = block[(tcur - lag, c)];
            }
        }
        for c in 0..m {
            target[(r, c)] = block[(tcur, c)];
        }
    }

    let gram = reg.transpose() * &reg;
    let eig = gram.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min().max(0.0);
    let ill = lmin <= 0.0 || lmax / lmin > CONDITION_LIMIT;
    let solve_gram = if ill {
        let ridge = 1e-6 * gram.trace();
        &gram + DMatrix::identity(k, k) * ridge
    } else {
        gram
    };
    let rhs = reg.transpose() * &target;
    let chol = solve_gram
        .cholesky()
        .ok_or_else(|| OegError::InvalidInput("regressor normal equations not solvable".into()))?;
    let beta = chol.solve(&rhs); // k x m

    let intercept = beta.row(0).transpose();
    let mut coeffs = Vec::with_capacity(p);
    for lag in 0..p {
        // beta rows 1 + lag*m .. hold phi_lag^T
        let phi_t = beta.rows(1 + lag * m, m).into_owned();
        coeffs.push(phi_t.transpose());
    }
    let residuals = &target - reg * &beta;
    let residual_cov = residuals.transpose() * &residuals / rows as f64;
    Ok(VarModel {
        intercept,
        coeffs,
        order: p,
        residual_cov,
        ill_conditioned: ill,
    })
}

/// One-step-ahead residuals of a fitted model on its block (test helper).
pub fn var_residuals(model: &VarModel, block: &DMatrix<f64>) -> DMatrix<f64> {
    let t = block.nrows();
    let m = block.ncols();
    let p = model.order;
    let mut res = DMatrix::zeros(t - p, m);
    for r in 0..t - p {
        let tcur = r + p;
        let mut pred = model.intercept.clone();
        for lag in 1..=p {
            let x = block.row(tcur - lag).transpose();
            pred += &model.coeffs[lag - 1] * x;
        }
        for c in 0..m {
            res[(r, c)] = block[(tcur, c)] - pred[c];
        }
    }
    res
}

/// Column-major stacking of the lag matrices, intercept excluded.
pub fn vectorize_coefficients(model: &VarModel) -> DVector<f64> {
    let m = model.coeffs[0].nrows();
    let len = model.order * m * m;
    let mut out = DVector::zeros(len);
    let mut idx = 0;
    for phi in &model.coeffs {
        for c in 0..m {
            for r in 0..m {
                out[idx] = phi[(r, c)];
                idx += 1;
            }
        }
    }
    out
}

/// Inverse of [`vectorize_coefficients`] (test helper).
pub fn devectorize_coefficients(v: &DVector<f64>, m: usize, p: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(p);
    let mut idx = 0;
    for _ in 0..p {
        let mut phi = DMatrix::zeros(m, m);
        for c in 0..m {
            for r in 0..m {
                phi[(r, c)] = v[idx];
                idx += 1;
            }
        }
        out.push(phi);
    }
    out
}
