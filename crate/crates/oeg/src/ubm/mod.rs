//! Universal background mixture, MAP adaptation and supervector kernels.
//!
//! A diagonal-covariance GMM trained over all VAR coefficient atoms serves as
//! the prior. Per-recording MAP adaptation of the means (and weights) yields
//! a fixed-dimension supervector whose dot product is the sequence kernel.

pub mod transport;

use std::hash::{Hash, Hasher};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{OegError, Result};
use crate::manifold::Segment;

/// Diagonal-covariance Gaussian mixture over coefficient atoms.
#[derive(Debug, Clone)]
pub struct GmmModel {
    /// Component priors on the simplex.
    pub weights: DVector<f64>,
    /// C x q component means.
    pub means: DMatrix<f64>,
    /// C x q per-dimension variances, floored away from zero.
    pub variances: DMatrix<f64>,
}

impl GmmModel {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    /// Content hash identifying this prior across adaptation calls.
    pub fn id(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for v in self
            .weights
            .iter()
            .chain(self.means.iter())
            .chain(self.variances.iter())
        {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }

    /// Per-atom log densities `log(lambda_c) + log N(x; mu_c, sigma_c)`.
    fn component_log_densities(&self, atom: &DVector<f64>, weighted: bool) -> DVector<f64> {
        let c = self.components();
        let q = self.dim();
        let mut out = DVector::zeros(c);
        let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        for k in 0..c {
            let mut log_det = 0.0;
            let mut maha = 0.0;
            for j in 0..q {
                let var = self.variances[(k, j)];
                let diff = atom[j] - self.means[(k, j)];
                log_det += var.ln();
                maha += diff * diff / var;
            }
            let mut l = -(q as f64) * half_log_2pi - 0.5 * log_det - 0.5 * maha;
            if weighted {
                l += self.weights[k].max(1e-300).ln();
            }
            out[k] = l;
        }
        out
    }

    /// Log-likelihood of one atom under the mixture.
    pub fn log_density(&self, atom: &DVector<f64>) -> f64 {
        log_sum_exp(&self.component_log_densities(atom, true))
    }
}

fn log_sum_exp(v: &DVector<f64>) -> f64 {
    let max = v.max();
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Soft counts and weighted sums accumulated against a prior.
#[derive(Debug, Clone)]
pub struct SufficientStats {
    /// Soft count per component.
    pub r: DVector<f64>,
    /// C x q responsibility-weighted atom sums.
    pub z: DMatrix<f64>,
    /// Number of accumulated atoms.
    pub n: usize,
    prior_id: u64,
}

impl SufficientStats {
    pub fn prior_id(&self) -> u64 {
        self.prior_id
    }

    pub fn merge(&mut self, other: &SufficientStats) -> Result<()> {
        if self.prior_id != other.prior_id {
            return Err(OegError::PriorMismatch);
        }
        self.r += &other.r;
        self.z += &other.z;
        self.n += other.n;
        Ok(())
    }
}

/// MAP-adapted mixture: means and weights moved toward the data.
#[derive(Debug, Clone)]
pub struct AdaptedModel {
    /// C x q adapted means.
    pub means: DMatrix<f64>,
    /// Adapted weights on the simplex.
    pub weights: DVector<f64>,
    prior_id: u64,
}

impl AdaptedModel {
    pub fn prior_id(&self) -> u64 {
        self.prior_id
    }
}

/// Fixed-dimension kernel embedding of an adapted model.
#[derive(Debug, Clone)]
pub struct Supervector {
    pub values: DVector<f64>,
    pub subject_id: String,
    pub segment: Segment,
    prior_id: u64,
}

impl Supervector {
    pub fn new(
        values: DVector<f64>,
        subject_id: impl Into<String>,
        segment: Segment,
        prior_id: u64,
    ) -> Self {
        Supervector {
            values,
            subject_id: subject_id.into(),
            segment,
            prior_id,
        }
    }

    pub fn prior_id(&self) -> u64 {
        self.prior_id
    }
}

/// EM training trace: model plus the per-iteration log-likelihoods.
#[derive(Debug, Clone)]
pub struct EmReport {
    pub model: GmmModel,
    pub log_likelihoods: Vec<f64>,
    pub reseeded_components: usize,
}

const VARIANCE_FLOOR_ABS: f64 = 1e-12;

/// Train a diagonal GMM by EM with seeded k-means++ initialization.
pub fn train_em(
    atoms: &DMatrix<f64>,
    c: usize,
    seed: u64,
    max_iters: usize,
    floor_frac: f64,
) -> Result<EmReport> {
    let n = atoms.nrows();
    let q = atoms.ncols();
    if c == 0 || n == 0 {
        return Err(OegError::InvalidInput("need atoms and components".into()));
    }
    if n < 10 * c {
        log::warn!(
            "training {c} components on only {n} atoms; recommend at least {}",
            10 * c
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // global per-dimension variance fixes the floor
    let global_mean = atoms.row_mean();
    let mut global_var = DVector::zeros(q);
    for r in 0..n {
        for j in 0..q {
            let d = atoms[(r, j)] - global_mean[j];
            global_var[j] += d * d;
        }
    }
    global_var /= n as f64;
    let floor: DVector<f64> = global_var.map(|v| (floor_frac * v).max(VARIANCE_FLOOR_ABS));

    let mut means = kmeans_init(atoms, c, &mut rng);
    let mut weights = DVector::from_element(c, 1.0 / c as f64);
    let mut variances = DMatrix::from_fn(c, q, |_, j| global_var[j].max(floor[j]));

    let mut log_likelihoods = Vec::with_capacity(max_iters);
    let mut reseeded = 0usize;
    for _iter in 0..max_iters {
        let model = GmmModel {
            weights: weights.clone(),
            means: means.clone(),
            variances: variances.clone(),
        };
        // E step
        let mut r_sum = DVector::<f64>::zeros(c);
        let mut z = DMatrix::<f64>::zeros(c, q);
        let mut sq = DMatrix::<f64>::zeros(c, q);
        let mut ll = 0.0;
        for i in 0..n {
            let atom = atoms.row(i).transpose();
            let logs = model.component_log_densities(&atom, true);
            let lse = log_sum_exp(&logs);
            ll += lse;
            for k in 0..c {
                let resp = (logs[k] - lse).exp();
                r_sum[k] += resp;
                for j in 0..q {
                    z[(k, j)] += resp * atom[j];
                    sq[(k, j)] += resp * atom[j] * atom[j];
                }
            }
        }
        log_likelihoods.push(ll);

        // M step
        for k in 0..c {
            if r_sum[k] < 1e-10 {
                // reseed the empty component at the atom least explained
                let far = (0..n)
                    .min_by(|&a, &b| {
                        model
                            .log_density(&atoms.row(a).transpose())
                            .total_cmp(&model.log_density(&atoms.row(b).transpose()))
                    })
                    .unwrap();
                log::warn!("reseeding empty component {k} at atom {far}");
                reseeded += 1;
                for j in 0..q {
                    means[(k, j)] = atoms[(far, j)];
                    variances[(k, j)] = global_var[j].max(floor[j]);
                }
                weights[k] = 1.0 / n as f64;
                continue;
            }
            weights[k] = r_sum[k] / n as f64;
            for j in 0..q {
                let mu = z[(k, j)] / r_sum[k];
                means[(k, j)] = mu;
                let var = sq[(k, j)] / r_sum[k] - mu * mu;
                variances[(k, j)] = var.max(floor[j]);
            }
        }
        let wsum: f64 = weights.iter().sum();
        weights /= wsum;
    }

    Ok(EmReport {
        model: GmmModel {
            weights,
            means,
            variances,
        },
        log_likelihoods,
        reseeded_components: reseeded,
    })
}

/// k-means++ seeding followed by 10 Lloyd iterations.
fn kmeans_init(atoms: &DMatrix<f64>, c: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let n = atoms.nrows();
    let q = atoms.ncols();
    let mut centers: Vec<usize> = Vec::with_capacity(c);
    centers.push(rng.gen_range(0..n));
    let mut d2 = vec![f64::INFINITY; n];
    while centers.len() < c {
        let last = *centers.last().unwrap();
        for i in 0..n {
            let dist = (atoms.row(i) - atoms.row(last)).norm_squared();
            if dist < d2[i] {
                d2[i] = dist;
            }
        }
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            rng.gen_range(0..n)
        } else {
            let mut pick = rng.gen_range(0.0..total);
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if pick < w {
                    idx = i;
                    break;
                }
                pick -= w;
            }
            idx
        };
        centers.push(next);
    }
    let mut means = DMatrix::from_fn(c, q, |k, j| atoms[(centers[k], j)]);

    let mut assign = vec![0usize; n];
    for _ in 0..10 {
        for i in 0..n {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for k in 0..c {
                let d = (atoms.row(i) - means.row(k)).norm_squared();
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            assign[i] = best;
        }
        let mut counts = vec![0usize; c];
        let mut sums = DMatrix::<f64>::zeros(c, q);
        for i in 0..n {
            counts[assign[i]] += 1;
            for j in 0..q {
                sums[(assign[i], j)] += atoms[(i, j)];
            }
        }
        for k in 0..c {
            if counts[k] > 0 {
                for j in 0..q {
                    means[(k, j)] = sums[(k, j)] / counts[k] as f64;
                }
            }
        }
    }
    means
}

/// Posterior component responsibilities of one atom, in log space.
///
/// The numerator carries the mixture weights; pass `weighted = false` for
/// the unweighted ratio variant.
pub fn responsibilities_with(
    model: &GmmModel,
    atom: &DVector<f64>,
    weighted: bool,
) -> DVector<f64> {
    let logs = model.component_log_densities(atom, weighted);
    let lse = log_sum_exp(&logs);
    logs.map(|l| (l - lse).exp())
}

/// Weighted posterior responsibilities (the default reading).
pub fn responsibilities(model: &GmmModel, atom: &DVector<f64>) -> DVector<f64> {
    responsibilities_with(model, atom, true)
}

/// Accumulate soft counts and weighted sums over a set of atoms.
pub fn accumulate(model: &GmmModel, atoms: &DMatrix<f64>) -> SufficientStats {
    let c = model.components();
    let q = model.dim();
    let mut r = DVector::<f64>::zeros(c);
    let mut z = DMatrix::<f64>::zeros(c, q);
    for i in 0..atoms.nrows() {
        let atom = atoms.row(i).transpose();
        let resp = responsibilities(model, &atom);
        for k in 0..c {
            r[k] += resp[k];
            for j in 0..q {
                z[(k, j)] += resp[k] * atom[j];
            }
        }
    }
    SufficientStats {
        r,
        z,
        n: atoms.nrows(),
        prior_id: model.id(),
    }
}

/// Relevance-MAP adaptation of means and weights; variances stay fixed.
///
/// `mu_c = (z_c + tau mu_hat_c) / (r_c + tau)` with scalar relevance `tau`;
/// weights interpolate between the prior and the soft-count fractions with
/// `alpha_c = r_c / (r_c + tau)` and renormalize.
pub fn map_adapt(
    stats: &SufficientStats,
    prior: &GmmModel,
    relevance: f64,
) -> Result<AdaptedModel> {
    if stats.prior_id != prior.id() {
        return Err(OegError::PriorMismatch);
    }
    if relevance <= 0.0 {
        return Err(OegError::InvalidInput("relevance must be positive".into()));
    }
    let c = prior.components();
    let q = prior.dim();
    if stats.n == 0 {
        return Ok(AdaptedModel {
            means: prior.means.clone(),
            weights: prior.weights.clone(),
            prior_id: stats.prior_id,
        });
    }
    let mut means = DMatrix::zeros(c, q);
    let mut weights = DVector::zeros(c);
    for k in 0..c {
        let denom = stats.r[k] + relevance;
        for j in 0..q {
            means[(k, j)] = (stats.z[(k, j)] + relevance * prior.means[(k, j)]) / denom;
        }
        let alpha = stats.r[k] / denom;
        weights[k] = alpha * (stats.r[k] / stats.n as f64) + (1.0 - alpha) * prior.weights[k];
    }
    let wsum: f64 = weights.iter().sum();
    weights /= wsum;
    Ok(AdaptedModel {
        means,
        weights,
        prior_id: stats.prior_id,
    })
}

/// Stacked prior-scaled adapted means: `sqrt(lambda_c) sigma_c^-1/2 mu_c`.
pub fn supervector(
    adapted: &AdaptedModel,
    prior: &GmmModel,
    subject_id: impl Into<String>,
    segment: Segment,
) -> Result<Supervector> {
    if adapted.prior_id != prior.id() {
        return Err(OegError::PriorMismatch);
    }
    let c = prior.components();
    let q = prior.dim();
    let mut values = DVector::zeros(c * q);
    for k in 0..c {
        let scale = prior.weights[k].sqrt();
        for j in 0..q {
            values[k * q + j] = scale * adapted.means[(k, j)] / prior.variances[(k, j)].sqrt();
        }
    }
    Ok(Supervector {
        values,
        subject_id: subject_id.into(),
        segment,
        prior_id: adapted.prior_id,
    })
}

/// Linear sequence kernel: dot product of two supervectors from one prior.
pub fn kernel(a: &Supervector, b: &Supervector) -> Result<f64> {
    if a.prior_id != b.prior_id {
        return Err(OegError::PriorMismatch);
    }
    Ok(a.values.dot(&b.values))
}

/// Symmetric KL approximation between the prior and an adaptation:
/// `1/2 sum_c lambda_c (mu_hat_c - mu_c)^T sigma_hat_c^-1 (mu_hat_c - mu_c)`.
pub fn kl_distance(prior: &GmmModel, adapted: &AdaptedModel) -> Result<f64> {
    if adapted.prior_id != prior.id() {
        return Err(OegError::PriorMismatch);
    }
    let mut total = 0.0;
    for k in 0..prior.components() {
        let mut maha = 0.0;
        for j in 0..prior.dim() {
            let d = prior.means[(k, j)] - adapted.means[(k, j)];
            maha += d * d / prior.variances[(k, j)];
        }
        total += prior.weights[k] * maha;
    }
    Ok(0.5 * total)
}

/// Exact Wasserstein distance between the prior and adapted weights, with
/// Euclidean distances between prior component means as ground cost.
pub fn weight_wasserstein(prior: &GmmModel, adapted: &AdaptedModel) -> Result<f64> {
    if adapted.prior_id != prior.id() {
        return Err(OegError::PriorMismatch);
    }
    let c = prior.components();
    let mut cost = DMatrix::zeros(c, c);
    for i in 0..c {
        for j in 0..c {
            cost[(i, j)] = (prior.means.row(i) - prior.means.row(j)).norm();
        }
    }
    let supply: Vec<f64> = prior.weights.iter().cloned().collect();
    let demand: Vec<f64> = adapted.weights.iter().cloned().collect();
    transport::emd(&supply, &demand, &cost)
}

/// Dot product of a supervector with the control-group mean supervector.
pub fn control_mean_dot(sv: &Supervector, controls: &[Supervector]) -> Result<f64> {
    if controls.is_empty() {
        return Err(OegError::EmptyControls);
    }
    let mut mean = DVector::zeros(sv.values.len());
    for c in controls {
        if c.prior_id != sv.prior_id {
            return Err(OegError::PriorMismatch);
        }
        mean += &c.values;
    }
    mean /= controls.len() as f64;
    Ok(sv.values.dot(&mean))
}
