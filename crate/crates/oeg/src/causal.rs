//! Tensor-based counterfactual treatment recommendation.
//!
//! Subject records are accumulated into a three-mode tensor (face-dynamics
//! features x treatment categories x severity bins), factored by higher-order
//! SVD, and searched over sparse uniform-weight treatment combinations under
//! the 50% HAMD-reduction constraint.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{apply_basis_rows, ReducedBasis};
use crate::error::{OegError, Result};

/// Number of pharmacological treatment categories.
pub const TREATMENT_CATEGORIES: usize = 11;

/// Human-readable labels of the treatment categories.
pub const TREATMENT_LABELS: [&str; TREATMENT_CATEGORIES] = [
    "antipsychotic",
    "anticonvulsant",
    "anxiolytic_prn",
    "anxiolytic_daily",
    "opioid",
    "ssri",
    "snri",
    "sndri",
    "tetracyclic_ad",
    "tricyclic_ad",
    "mao_inhibitor",
];

/// One subject's admission measurement, prescription and outcome.
#[derive(Debug, Clone)]
pub struct SubjectRecord {
    pub subject_id: String,
    /// Admission supervector (full dimension; reduced during tensor build).
    pub supervector: DVector<f64>,
    /// L1-normalized prescription over the categories; all-zero = untreated.
    pub treatment: DVector<f64>,
    pub hamd_in: u32,
    pub hamd_out: u32,
}

impl SubjectRecord {
    pub fn is_treated(&self) -> bool {
        self.treatment.iter().any(|&w| w > 0.0)
    }
}

/// Tensor construction parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TensorSpec {
    /// Target feature dimension after SVD reduction of the supervectors.
    pub feature_dim: usize,
    /// Number of severity bins.
    pub severity_bins: usize,
    /// Width of one severity bin on the HAMD scale.
    pub bin_width: f64,
}

impl Default for TensorSpec {
    fn default() -> Self {
        TensorSpec {
            feature_dim: 32,
            severity_bins: 13,
            bin_width: 4.0,
        }
    }
}

/// Dense three-mode tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub data: Vec<f64>,
    pub dims: [usize; 3],
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Tensor3 {
            data: vec![0.0; dims[0] * dims[1] * dims[2]],
            dims,
        }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.idx(i, j, k);
        self.data[idx] = v;
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Mode-k unfolding: rows indexed by mode k, columns by the other modes.
    pub fn unfold(&self, mode: usize) -> DMatrix<f64> {
        let [d0, d1, d2] = self.dims;
        match mode {
            0 => DMatrix::from_fn(d0, d1 * d2, |r, c| self.get(r, c % d1, c / d1)),
            1 => DMatrix::from_fn(d1, d0 * d2, |r, c| self.get(c % d0, r, c / d0)),
            2 => DMatrix::from_fn(d2, d0 * d1, |r, c| self.get(c % d0, c / d0, r)),
            _ => panic!("mode out of range"),
        }
    }

    /// Mode-k product with a matrix applied from the left.
    pub fn mode_product(&self, mode: usize, m: &DMatrix<f64>) -> Tensor3 {
        let [d0, d1, d2] = self.dims;
        assert_eq!(m.ncols(), self.dims[mode], "mode dimension mismatch");
        let mut dims = self.dims;
        dims[mode] = m.nrows();
        let mut out = Tensor3::zeros(dims);
        match mode {
            0 => {
                for k in 0..d2 {
                    for j in 0..d1 {
                        for r in 0..m.nrows() {
                            let mut acc = 0.0;
                            for i in 0..d0 {
                                acc += m[(r, i)] * self.get(i, j, k);
                            }
                            out.set(r, j, k, acc);
                        }
                    }
                }
            }
            1 => {
                for k in 0..d2 {
                    for i in 0..d0 {
                        for r in 0..m.nrows() {
                            let mut acc = 0.0;
                            for j in 0..d1 {
                                acc += m[(r, j)] * self.get(i, j, k);
                            }
                            out.set(i, r, k, acc);
                        }
                    }
                }
            }
            2 => {
                for j in 0..d1 {
                    for i in 0..d0 {
                        for r in 0..m.nrows() {
                            let mut acc = 0.0;
                            for k in 0..d2 {
                                acc += m[(r, k)] * self.get(i, j, k);
                            }
                            out.set(i, j, r, acc);
                        }
                    }
                }
            }
            _ => panic!("mode out of range"),
        }
        out
    }
}

/// Cohort measurement tensor plus the feature reduction used to build it.
#[derive(Debug, Clone)]
pub struct CohortTensor {
    pub data: Tensor3,
    pub spec: TensorSpec,
    /// Supervector reduction applied before the outer products.
    pub feature_basis: ReducedBasis,
}

/// Tucker factorization: core tensor plus orthonormal mode matrices.
#[derive(Debug, Clone)]
pub struct TuckerModel {
    pub core: Tensor3,
    pub modes: [DMatrix<f64>; 3],
    pub spec: TensorSpec,
    pub reconstruction_error: f64,
}

/// Outcome of the counterfactual search for one subject.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CounterfactualResult {
    pub treatment: Vec<f64>,
    pub predicted_hamd_out: f64,
    pub feasible: bool,
    /// Symmetric difference between recommended and clinical active sets.
    pub distance_from_clinical: usize,
}

/// Piecewise-linear severity embedding of a HAMD score over the bins.
pub fn severity_embedding(hamd: f64, spec: &TensorSpec) -> DVector<f64> {
    let v = spec.severity_bins;
    let mut out = DVector::zeros(v);
    // bin centers at width*(i + 1/2)
    let pos = hamd / spec.bin_width - 0.5;
    if pos <= 0.0 {
        out[0] = 1.0;
    } else if pos >= (v - 1) as f64 {
        out[v - 1] = 1.0;
    } else {
        let lo = pos.floor() as usize;
        let frac = pos - lo as f64;
        out[lo] = 1.0 - frac;
        out[lo + 1] = frac;
    }
    out
}

/// Bin-center weighted average of a severity vector, clamped to the scale.
///
/// Negative mass is clipped before normalization; returns `None` when no
/// positive mass remains.
pub fn severity_to_hamd(s: &DVector<f64>, spec: &TensorSpec) -> Option<f64> {
    let clipped: Vec<f64> = s.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total <= 1e-12 {
        return None;
    }
    let mut acc = 0.0;
    for (i, w) in clipped.iter().enumerate() {
        let center = spec.bin_width * (i as f64 + 0.5);
        acc += w * center;
    }
    Some((acc / total).clamp(0.0, 52.0))
}

/// Accumulate treated records into the cohort tensor
/// `D = sum_i x_i (outer) w_i (outer) s_i`.
pub fn build_tensor(records: &[SubjectRecord], spec: &TensorSpec) -> Result<CohortTensor> {
    let treated: Vec<&SubjectRecord> = records.iter().filter(|r| r.is_treated()).collect();
    if treated.len() < 5 {
        return Err(OegError::InsufficientCohort {
            got: treated.len(),
            need: 5,
        });
    }
    for r in &treated {
        let sum: f64 = r.treatment.iter().sum();
        if (sum - 1.0).abs() > 1e-8 || r.treatment.iter().any(|&w| w < 0.0) {
            return Err(OegError::InvalidInput(format!(
                "treatment vector of {} is not L1-normalized and nonnegative",
                r.subject_id
            )));
        }
    }

    let sv_dim = treated[0].supervector.len();
    let stacked = DMatrix::from_fn(treated.len(), sv_dim, |r, c| treated[r].supervector[c]);
    // Uncentered SVD reduction: supervectors share a dominant common
    // component (the adaptation prior), and keeping it ensures nonnegative
    // similarity between subjects in the feature mode.
    let svd = stacked
        .clone()
        .try_svd(false, true, 1e-14, 0)
        .ok_or_else(|| OegError::InvalidInput("supervector SVD failed".into()))?;
    let sv = &svd.singular_values;
    let rank = sv.iter().filter(|&&s| s > 1e-12 * sv[0].max(1.0)).count();
    if rank == 0 {
        return Err(OegError::InvalidInput(
            "cohort supervectors are numerically zero".into(),
        ));
    }
    let f = spec.feature_dim.min(sv_dim).min(rank);
    let v_t = svd.v_t.unwrap();
    let feature_basis = ReducedBasis {
        projection: v_t.rows(0, f).transpose(),
        mean: DVector::zeros(sv_dim),
        scale: DVector::from_element(sv_dim, 1.0),
        q: f,
    };
    let reduced = apply_basis_rows(&stacked, &feature_basis);

    let mut data = Tensor3::zeros([f, TREATMENT_CATEGORIES, spec.severity_bins]);
    for (row, record) in treated.iter().enumerate() {
        let s = severity_embedding(record.hamd_out as f64, spec);
        for i in 0..f {
            let x = reduced[(row, i)];
            if x == 0.0 {
                continue;
            }
            for j in 0..TREATMENT_CATEGORIES {
                let w = record.treatment[j];
                if w == 0.0 {
                    continue;
                }
                for k in 0..spec.severity_bins {
                    if s[k] == 0.0 {
                        continue;
                    }
                    let idx = data.idx(i, j, k);
                    data.data[idx] += x * w * s[k];
                }
            }
        }
    }
    Ok(CohortTensor {
        data,
        spec: *spec,
        feature_basis,
    })
}

/// Higher-order SVD with the given multilinear ranks.
pub fn hosvd(tensor: &CohortTensor, ranks: (usize, usize, usize)) -> Result<TuckerModel> {
    let ranks = [ranks.0, ranks.1, ranks.2];
    let mut modes = Vec::with_capacity(3);
    for mode in 0..3 {
        let dim = tensor.data.dims[mode];
        if ranks[mode] > dim {
            return Err(OegError::RankTooLarge {
                mode: mode + 1,
                rank: ranks[mode],
                dim,
            });
        }
        let unfolding = tensor.data.unfold(mode);
        let svd = unfolding
            .try_svd(true, false, 1e-14, 0)
            .ok_or_else(|| OegError::InvalidInput("unfolding SVD failed".into()))?;
        let u = svd.u.unwrap();
        modes.push(u.columns(0, ranks[mode]).into_owned());
    }
    let core = tensor
        .data
        .mode_product(0, &modes[0].transpose())
        .mode_product(1, &modes[1].transpose())
        .mode_product(2, &modes[2].transpose());

    let reconstruction = core
        .mode_product(0, &modes[0])
        .mode_product(1, &modes[1])
        .mode_product(2, &modes[2]);
    let mut err = 0.0;
    for (a, b) in reconstruction.data.iter().zip(&tensor.data.data) {
        err += (a - b) * (a - b);
    }
    let modes: [DMatrix<f64>; 3] = match modes.try_into() {
        Ok(m) => m,
        Err(_) => unreachable!(),
    };
    Ok(TuckerModel {
        core,
        modes,
        spec: tensor.spec,
        reconstruction_error: err.sqrt(),
    })
}

/// Severity profile predicted for reduced features `x` under treatment `w`:
/// `U3 (Z x1 (U1^T x) x2 (U2^T w))`.
pub fn predict_severity(model: &TuckerModel, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    let p1 = model.modes[0].transpose() * x;
    let p2 = model.modes[1].transpose() * w;
    let r3 = model.core.dims[2];
    let mut contracted = DVector::zeros(r3);
    for k in 0..r3 {
        let mut acc = 0.0;
        for i in 0..model.core.dims[0] {
            for j in 0..model.core.dims[1] {
                acc += model.core.get(i, j, k) * p1[i] * p2[j];
            }
        }
        contracted[k] = acc;
    }
    &model.modes[2] * contracted
}

/// Predicted discharge HAMD under a candidate treatment; `None` when the
/// severity profile carries no positive mass.
pub fn predict_hamd(model: &TuckerModel, x: &DVector<f64>, w: &DVector<f64>) -> Option<f64> {
    if w.iter().all(|&v| v == 0.0) {
        return None;
    }
    let s = predict_severity(model, x, w);
    severity_to_hamd(&s, &model.spec)
}

fn active_set(w: &DVector<f64>) -> Vec<usize> {
    (0..w.len()).filter(|&i| w[i] > 1e-12).collect()
}

fn hamming(a: &[usize], b: &[usize]) -> usize {
    let in_a = a.iter().filter(|i| !b.contains(i)).count();
    let in_b = b.iter().filter(|i| !a.contains(i)).count();
    in_a + in_b
}

/// Enumerate all uniform-weight combinations of at most `max_active`
/// categories, in lexicographic order of the active sets.
pub fn candidate_treatments(max_active: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::new();
    let mut subset: Vec<usize> = Vec::new();
    fn recurse(
        start: usize,
        remaining: usize,
        subset: &mut Vec<usize>,
        out: &mut Vec<DVector<f64>>,
    ) {
        if !subset.is_empty() {
            let mut w = DVector::zeros(TREATMENT_CATEGORIES);
            let weight = 1.0 / subset.len() as f64;
            for &i in subset.iter() {
                w[i] = weight;
            }
            out.push(w);
        }
        if remaining == 0 {
            return;
        }
        for i in start..TREATMENT_CATEGORIES {
            subset.push(i);
            recurse(i + 1, remaining - 1, subset, out);
            subset.pop();
        }
    }
    recurse(0, max_active, &mut subset, &mut out);
    out
}

const PREDICTION_TIE_TOL: f64 = 1e-9;

/// Exhaustive counterfactual search under the 50% HAMD-reduction constraint.
///
/// Returns the feasible candidate minimizing the predicted discharge HAMD,
/// ties broken by minimal deviation from the clinical prescription and then
/// by enumeration order; falls back to the best achievable candidate with
/// `feasible = false` when the constraint cannot be met.
pub fn recommend(
    model: &TuckerModel,
    x: &DVector<f64>,
    hamd_in: u32,
    clinical: &DVector<f64>,
    max_active: usize,
) -> Result<CounterfactualResult> {
    if hamd_in == 0 {
        return Err(OegError::InvalidInput(
            "admission HAMD must be positive".into(),
        ));
    }
    let clinical_active = active_set(clinical);
    let threshold = 0.5 * hamd_in as f64;

    let mut best: Option<(f64, usize, usize)> = None; // (pred, hamming, index)
    let candidates = candidate_treatments(max_active);
    for (idx, w) in candidates.iter().enumerate() {
        let Some(pred) = predict_hamd(model, x, w) else {
            continue;
        };
        let dist = hamming(&active_set(w), &clinical_active);
        let better = match &best {
            None => true,
            Some((bp, bd, _)) => {
                if pred < bp - PREDICTION_TIE_TOL {
                    true
                } else if pred > bp + PREDICTION_TIE_TOL {
                    false
                } else {
                    dist < *bd
                }
            }
        };
        if better {
            best = Some((pred, dist, idx));
        }
    }
    let (pred, dist, idx) =
        best.ok_or_else(|| OegError::InvalidInput("no candidate produced a prediction".into()))?;
    Ok(CounterfactualResult {
        treatment: candidates[idx].iter().cloned().collect(),
        predicted_hamd_out: pred,
        feasible: pred <= threshold,
        distance_from_clinical: dist,
    })
}
