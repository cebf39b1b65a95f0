//! Gaussian-process regression with dot-product covariance over
//! supervectors, leave-one-subject-out evaluation and responder labeling.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{OegError, Result};

/// GP hyperparameters and feature handling.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GpConfig {
    /// Bias variance sigma_0^2 of the dot-product covariance.
    pub bias_var: f64,
    /// Observation noise variance sigma_n^2.
    pub noise_var: f64,
    /// Center features on the training mean, then length-normalize.
    ///
    /// Supervectors adapted from one prior share a dominant common
    /// component; without centering the dot-product kernel is nearly
    /// constant and the regression collapses to the training mean.
    pub normalize: bool,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            bias_var: 1.0,
            noise_var: 0.1,
            normalize: true,
        }
    }
}

/// Fitted GP with dot-product covariance `k(x, x') = sigma_0^2 + x . x'`.
#[derive(Debug, Clone)]
pub struct GpModel {
    inputs: DMatrix<f64>,
    alpha: DVector<f64>,
    /// Training-mean feature offset; zero when normalization is off.
    center: DVector<f64>,
    bias_var: f64,
    /// Effective noise after any escalation.
    pub noise_var: f64,
    /// Set when the kernel system needed the tenfold noise escalation.
    pub noise_escalated: bool,
}

/// Fit the GP: solve `(K + sigma_n^2 I) alpha = y`.
pub fn fit(inputs: &DMatrix<f64>, targets: &DVector<f64>, cfg: &GpConfig) -> Result<GpModel> {
    let n = inputs.nrows();
    if n < 2 {
        return Err(OegError::TooShort { got: n, need: 2 });
    }
    if targets.len() != n {
        return Err(OegError::InvalidInput(format!(
            "{} targets for {n} inputs",
            targets.len()
        )));
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(OegError::InvalidInput("non-finite target".into()));
    }
    let (x, center) = if cfg.normalize {
        let center = inputs.row_mean().transpose();
        let mut centered = inputs.clone();
        for mut row in centered.row_iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v -= center[j];
            }
        }
        (normalize_rows(&centered), center)
    } else {
        (inputs.clone(), DVector::zeros(inputs.ncols()))
    };
    let gram = &x * x.transpose();
    let mut noise = cfg.noise_var;
    let mut escalated = false;
    loop {
        let mut k = gram.clone();
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] += cfg.bias_var;
            }
            k[(i, i)] += noise;
        }
        match k.cholesky() {
            Some(chol) => {
                let alpha = chol.solve(targets);
                return Ok(GpModel {
                    inputs: x,
                    alpha,
                    center: center.clone(),
                    bias_var: cfg.bias_var,
                    noise_var: noise,
                    noise_escalated: escalated,
                });
            }
            None if !escalated => {
                log::warn!("kernel system singular, raising noise variance tenfold");
                noise *= 10.0;
                escalated = true;
            }
            None => return Err(OegError::SingularSystem),
        }
    }
}

fn normalize_rows(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        let n = row.norm();
        if n > 1e-12 {
            row /= n;
        }
    }
    out
}

/// Predictive mean at a query point.
pub fn predict_mean(model: &GpModel, x: &DVector<f64>, normalize: bool) -> f64 {
    let mut q = x - &model.center;
    if normalize {
        let n = q.norm();
        if n > 1e-12 {
            q /= n;
        }
    }
    let mut total = 0.0;
    for i in 0..model.inputs.nrows() {
        let k = model.bias_var + model.inputs.row(i).transpose().dot(&q);
        total += k * model.alpha[i];
    }
    total
}

/// One labeled observation of one subject.
#[derive(Debug, Clone)]
pub struct Observation {
    pub subject_id: String,
    pub features: DVector<f64>,
    pub target: f64,
}

/// Per-subject prediction record of a cross-validation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubjectPrediction {
    pub id: String,
    pub y_true: f64,
    pub y_pred: f64,
}

/// Result of a leave-one-subject-out evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvReport {
    pub target_name: String,
    pub n_subjects: usize,
    pub pearson_r: f64,
    pub per_subject: Vec<SubjectPrediction>,
    /// Subjects whose training fold had constant targets and was skipped.
    pub skipped_subjects: Vec<String>,
}

/// Leave-one-subject-out cross validation with pooled Pearson scoring.
///
/// All observations of one subject form the test fold together.
pub fn loso_cv(
    observations: &[Observation],
    target_name: &str,
    cfg: &GpConfig,
) -> Result<CvReport> {
    let mut subjects: Vec<String> = Vec::new();
    for obs in observations {
        if !subjects.contains(&obs.subject_id) {
            subjects.push(obs.subject_id.clone());
        }
    }
    if subjects.len() < 3 {
        return Err(OegError::TooShort {
            got: subjects.len(),
            need: 3,
        });
    }
    let dim = observations[0].features.len();

    let mut per_subject = Vec::new();
    let mut skipped = Vec::new();
    for test_subject in &subjects {
        let train: Vec<&Observation> = observations
            .iter()
            .filter(|o| &o.subject_id != test_subject)
            .collect();
        let test: Vec<&Observation> = observations
            .iter()
            .filter(|o| &o.subject_id == test_subject)
            .collect();

        let y = DVector::from_fn(train.len(), |i, _| train[i].target);
        let spread = y.max() - y.min();
        if spread.abs() < 1e-12 {
            log::warn!("constant training targets for fold {test_subject}; skipping");
            skipped.push(test_subject.clone());
            continue;
        }
        let x = DMatrix::from_fn(train.len(), dim, |i, j| train[i].features[j]);
        let model = fit(&x, &y, cfg)?;
        for obs in test {
            let pred = predict_mean(&model, &obs.features, cfg.normalize);
            per_subject.push(SubjectPrediction {
                id: obs.subject_id.clone(),
                y_true: obs.target,
                y_pred: pred,
            });
        }
    }

    let y_true = DVector::from_fn(per_subject.len(), |i, _| per_subject[i].y_true);
    let y_pred = DVector::from_fn(per_subject.len(), |i, _| per_subject[i].y_pred);
    let pearson_r = pearson(&y_pred, &y_true)?;
    Ok(CvReport {
        target_name: target_name.to_string(),
        n_subjects: subjects.len(),
        pearson_r,
        per_subject,
        skipped_subjects: skipped,
    })
}

/// Sample Pearson correlation coefficient.
pub fn pearson(pred: &DVector<f64>, target: &DVector<f64>) -> Result<f64> {
    let n = pred.len();
    if n != target.len() || n < 2 {
        return Err(OegError::InvalidInput(
            "pearson needs two equal-length series of at least 2".into(),
        ));
    }
    let mp = pred.mean();
    let mt = target.mean();
    let mut cov = 0.0;
    let mut vp = 0.0;
    let mut vt = 0.0;
    for i in 0..n {
        let dp = pred[i] - mp;
        let dt = target[i] - mt;
        cov += dp * dt;
        vp += dp * dp;
        vt += dt * dt;
    }
    if vp <= 0.0 || vt <= 0.0 {
        return Err(OegError::ZeroVariance);
    }
    Ok(cov / (vp.sqrt() * vt.sqrt()))
}

/// Treatment response by the 30%-improvement rule on HAMD scores.
pub fn responder_label(hamd_in: f64, hamd_out: f64) -> Result<bool> {
    for v in [hamd_in, hamd_out] {
        if !(0.0..=52.0).contains(&v) {
            return Err(OegError::InvalidScore(v));
        }
    }
    if hamd_in <= 0.0 {
        return Err(OegError::InvalidInput(
            "admission HAMD must be positive for the responder rule".into(),
        ));
    }
    Ok((hamd_in - hamd_out) / hamd_in >= 0.30)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn raw_cfg() -> GpConfig {
        GpConfig {
            bias_var: 1.0,
            noise_var: 0.1,
            normalize: false,
        }
    }

    #[test]
    fn near_noiseless_interpolates_linear_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(20, 4, |_, _| rng.gen_range(-1.0..1.0));
        let w = DVector::from_vec(vec![0.5, -1.0, 2.0, 0.3]);
        let y = &x * &w;
        let cfg = GpConfig {
            bias_var: 1.0,
            noise_var: 1e-8,
            normalize: false,
        };
        let model = fit(&x, &y, &cfg).unwrap();
        for i in 0..20 {
            let pred = predict_mean(&model, &x.row(i).transpose(), false);
            assert!((pred - y[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_targets_predict_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(15, 3, |_, _| rng.gen_range(-1.0..1.0));
        let y = DVector::from_element(15, 3.5);
        let cfg = GpConfig {
            bias_var: 1.0,
            noise_var: 1e-8,
            normalize: false,
        };
        let model = fit(&x, &y, &cfg).unwrap();
        for i in 0..15 {
            let pred = predict_mean(&model, &x.row(i).transpose(), false);
            assert!((pred - 3.5).abs() < 1e-6);
        }
    }

    #[test]
    fn predictive_mean_matches_ridge_oracle() {
        // GP with dot-product kernel == ridge regression with penalty
        // sigma_n^2 on features augmented by the constant sqrt(bias_var)
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 25;
        let d = 4;
        let x = DMatrix::from_fn(n, d, |_, _| rng.gen_range(-1.0..1.0));
        let y = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let cfg = raw_cfg();
        let model = fit(&x, &y, &cfg).unwrap();

        // normal-equations oracle on augmented design
        let mut aug = DMatrix::zeros(n, d + 1);
        aug.view_mut((0, 0), (n, d)).copy_from(&x);
        for i in 0..n {
            aug[(i, d)] = cfg.bias_var.sqrt();
        }
        let gram = aug.transpose() * &aug + DMatrix::identity(d + 1, d + 1) * cfg.noise_var;
        let w = gram.cholesky().unwrap().solve(&(aug.transpose() * &y));

        for _ in 0..10 {
            let q = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
            let gp = predict_mean(&model, &q, false);
            let mut qa = DVector::zeros(d + 1);
            qa.view_mut((0, 0), (d, 1)).copy_from(&q);
            qa[d] = cfg.bias_var.sqrt();
            let ridge = qa.dot(&w);
            assert!((gp - ridge).abs() < 1e-6, "gp {gp} vs ridge {ridge}");
        }
    }

    #[test]
    fn orthogonal_query_without_bias_predicts_zero() {
        let x = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
        let y = DVector::from_vec(vec![1.0, -1.0, 0.5]);
        let cfg = GpConfig {
            bias_var: 0.0,
            noise_var: 0.1,
            normalize: false,
        };
        let model = fit(&x, &y, &cfg).unwrap();
        let q = DVector::from_vec(vec![0.0, 0.0, 2.0]);
        assert!(predict_mean(&model, &q, false).abs() < 1e-12);
    }

    #[test]
    fn prediction_linear_in_query_without_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(10, 3, |_, _| rng.gen_range(-1.0..1.0));
        let y = DVector::from_fn(10, |_, _| rng.gen_range(-1.0..1.0));
        let cfg = GpConfig {
            bias_var: 0.0,
            noise_var: 0.1,
            normalize: false,
        };
        let model = fit(&x, &y, &cfg).unwrap();
        let q = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
        let p1 = predict_mean(&model, &q, false);
        let p3 = predict_mean(&model, &(&q * 3.0), false);
        assert!((p3 - 3.0 * p1).abs() < 1e-10);
    }

    fn synthetic_two_regime(n: usize, sep: f64, seed: u64) -> Vec<Observation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let label = if i % 2 == 0 { 1.0 } else { -1.0 };
                let features = DVector::from_fn(6, |j, _| {
                    let center = if j == 0 { label * sep } else { 0.0 };
                    center + rng.gen_range(-0.5..0.5)
                });
                Observation {
                    subject_id: format!("s{i}"),
                    features,
                    target: label,
                }
            })
            .collect()
    }

    #[test]
    fn loso_separable_cohort_scores_high() {
        let obs = synthetic_two_regime(40, 3.0, 5);
        let report = loso_cv(&obs, "status", &GpConfig::default()).unwrap();
        assert!(report.pearson_r >= 0.9, "r = {}", report.pearson_r);
        assert_eq!(report.per_subject.len(), 40);
    }

    #[test]
    fn loso_permuted_targets_score_low() {
        let mut obs = synthetic_two_regime(40, 3.0, 6);
        // permute targets with a fixed shuffle
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut targets: Vec<f64> = obs.iter().map(|o| o.target).collect();
        for i in (1..targets.len()).rev() {
            let j = rng.gen_range(0..=i);
            targets.swap(i, j);
        }
        for (o, t) in obs.iter_mut().zip(targets) {
            o.target = t;
        }
        let report = loso_cv(&obs, "status", &GpConfig::default()).unwrap();
        assert!(report.pearson_r.abs() <= 0.3, "r = {}", report.pearson_r);
    }

    #[test]
    fn loso_partition_covers_each_subject_once() {
        let obs = synthetic_two_regime(10, 2.0, 8);
        let report = loso_cv(&obs, "status", &GpConfig::default()).unwrap();
        let mut ids: Vec<&str> = report.per_subject.iter().map(|p| p.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 10);
    }

    #[test]
    fn loso_groups_segments_by_subject() {
        // two observations per subject must land in the same fold; with the
        // subject's own rows excluded from training, a subject-unique feature
        // cannot leak
        let mut obs = synthetic_two_regime(12, 2.0, 9);
        let extra: Vec<Observation> = obs
            .iter()
            .map(|o| Observation {
                subject_id: o.subject_id.clone(),
                features: &o.features * 1.01,
                target: o.target,
            })
            .collect();
        obs.extend(extra);
        let report = loso_cv(&obs, "status", &GpConfig::default()).unwrap();
        assert_eq!(report.per_subject.len(), 24);
        assert_eq!(report.n_subjects, 12);
    }

    #[test]
    fn loso_difficulty_monotone_in_separation() {
        let mut medians = Vec::new();
        for sep in [2.0, 0.6, 0.05] {
            let mut rs: Vec<f64> = (0..10)
                .map(|s| {
                    let obs = synthetic_two_regime(30, sep, 100 + s);
                    loso_cv(&obs, "status", &GpConfig::default())
                        .unwrap()
                        .pearson_r
                })
                .collect();
            rs.sort_by(f64::total_cmp);
            medians.push((rs[4] + rs[5]) / 2.0);
        }
        assert!(
            medians[0] >= medians[1] && medians[1] >= medians[2],
            "{medians:?}"
        );
    }

    #[test]
    fn pearson_exact_cases() {
        let t = DVector::from_vec(vec![1.0, 2.0, 3.0, 5.0]);
        assert!((pearson(&t, &t).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&(-&t), &t).unwrap() + 1.0).abs() < 1e-12);
        let affine = t.map(|v| 2.5 * v + 7.0);
        assert!((pearson(&affine, &t).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_affine_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = DVector::from_fn(30, |_, _| rng.gen_range(-1.0..1.0));
        let b = DVector::from_fn(30, |_, _| rng.gen_range(-1.0..1.0));
        let base = pearson(&a, &b).unwrap();
        let shifted = pearson(&a.map(|v| 3.0 * v - 2.0), &b.map(|v| 0.5 * v + 9.0)).unwrap();
        assert!((base - shifted).abs() < 1e-12);
    }

    #[test]
    fn pearson_zero_variance_errors() {
        let a = DVector::from_element(5, 1.0);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(matches!(pearson(&a, &b), Err(OegError::ZeroVariance)));
    }

    #[test]
    fn responder_boundary_cases() {
        assert!(responder_label(20.0, 14.0).unwrap()); // exactly 30%
        assert!(!responder_label(20.0, 15.0).unwrap()); // 25%
        assert!(responder_label(24.0, 11.0).unwrap()); // ~54%
        assert!(matches!(
            responder_label(60.0, 10.0),
            Err(OegError::InvalidScore(_))
        ));
    }
}
