//! Landmark frames as points on the positive semidefinite cone `S+(d,n)`.
//!
//! A centered landmark configuration `X` (n x d, rank d) is represented by its
//! Gram matrix `G = X X^T = U R^2 U^T` where `U` is the Stiefel factor of the
//! polar decomposition and `R^2 = X^T X` is the SPD block. Geodesics on the
//! cone decompose into a Grassmann geodesic between the column spans and an
//! affine-invariant geodesic between the SPD blocks; the squared curve length
//! is `||Theta||_F^2 + k ||log R1^-1 R2^2 R1^-1||_F^2`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{OegError, Result};

/// Recording phase a sequence belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Full,
    Interview,
    Mimic,
    Story,
}

impl Segment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Segment::Full => "full",
            Segment::Interview => "interview",
            Segment::Mimic => "mimic",
            Segment::Story => "story",
        }
    }

    pub fn parse(s: &str) -> Option<Segment> {
        match s {
            "full" => Some(Segment::Full),
            "interview" => Some(Segment::Interview),
            "mimic" => Some(Segment::Mimic),
            "story" => Some(Segment::Story),
            _ => None,
        }
    }
}

/// One landmark configuration: an n x d matrix of point coordinates.
#[derive(Debug, Clone)]
pub struct LandmarkFrame {
    pub points: DMatrix<f64>,
    centered: bool,
}

impl LandmarkFrame {
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        let (n, d) = points.shape();
        if !(d == 2 || d == 3) {
            return Err(OegError::InvalidInput(format!(
                "ambient dimension must be 2 or 3, got {d}"
            )));
        }
        if n <= d {
            return Err(OegError::InvalidInput(format!(
                "need more landmarks than dimensions, got n={n}, d={d}"
            )));
        }
        Ok(LandmarkFrame {
            points,
            centered: false,
        })
    }

    pub fn landmark_count(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }
}

/// Time-ordered landmark frames from one recording.
#[derive(Debug, Clone)]
pub struct LandmarkSequence {
    pub frames: Vec<LandmarkFrame>,
    pub frame_rate: f64,
    pub subject_id: String,
    pub segment: Segment,
}

impl LandmarkSequence {
    pub fn new(
        frames: Vec<LandmarkFrame>,
        frame_rate: f64,
        subject_id: impl Into<String>,
        segment: Segment,
    ) -> Result<Self> {
        if frame_rate <= 0.0 {
            return Err(OegError::InvalidInput("frame rate must be positive".into()));
        }
        if let Some(first) = frames.first() {
            let shape = first.points.shape();
            if frames.iter().any(|f| f.points.shape() != shape) {
                return Err(OegError::InvalidInput(
                    "all frames must share the same (n, d)".into(),
                ));
            }
        }
        Ok(LandmarkSequence {
            frames,
            frame_rate,
            subject_id: subject_id.into(),
            segment,
        })
    }
}

/// `(U, R^2)` factorization of a Gram matrix.
#[derive(Debug, Clone)]
pub struct GramFactor {
    /// n x d Stiefel point: orthonormal columns spanning the shape subspace.
    pub basis: DMatrix<f64>,
    /// d x d SPD block; equals `X^T X` for the source frame.
    pub spd: DMatrix<f64>,
}

impl GramFactor {
    pub fn gram(&self) -> DMatrix<f64> {
        &self.basis * &self.spd * self.basis.transpose()
    }
}

/// Principal angles between two shape subspaces, ascending.
#[derive(Debug, Clone)]
pub struct SubspaceAngles {
    pub angles: DVector<f64>,
}

impl SubspaceAngles {
    /// Squared Frobenius norm of the diagonal angle matrix.
    pub fn squared_norm(&self) -> f64 {
        self.angles.iter().map(|a| a * a).sum()
    }
}

/// Cone-distance configuration: weight of the SPD term and SPD floor.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ManifoldConfig {
    /// Weight of the squared SPD-cone term relative to the Grassmann term.
    pub k: f64,
    /// Relative regularization floor for near-singular `X^T X`.
    pub eps: f64,
}

impl Default for ManifoldConfig {
    fn default() -> Self {
        ManifoldConfig { k: 1.0, eps: 1e-8 }
    }
}

/// Subtract the centroid from every landmark.
pub fn center_landmarks(frame: &LandmarkFrame) -> LandmarkFrame {
    let n = frame.points.nrows() as f64;
    let centroid = frame.points.row_sum() / n;
    let mut points = frame.points.clone();
    for mut row in points.row_iter_mut() {
        row -= &centroid;
    }
    LandmarkFrame {
        points,
        centered: true,
    }
}

/// Matrix of squared pairwise landmark distances.
pub fn squared_distance_matrix(frame: &LandmarkFrame) -> DMatrix<f64> {
    let n = frame.points.nrows();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = frame.points.row(i) - frame.points.row(j);
            let d2 = diff.iter().map(|v| v * v).sum();
            out[(i, j)] = d2;
            out[(j, i)] = d2;
        }
    }
    out
}

/// Gram matrix `X X^T` of a centered frame.
pub fn gram(frame: &LandmarkFrame) -> DMatrix<f64> {
    debug_assert!(frame.centered, "gram expects a centered frame");
    &frame.points * frame.points.transpose()
}

/// Polar factorization of a centered frame into a `GramFactor`.
///
/// `spd` is `X^T X` with eigenvalues floored at `eps * trace / d`; fails with
/// `DegenerateShape` when the frame is rank-deficient below that floor.
pub fn polar_factor(frame: &LandmarkFrame, cfg: &ManifoldConfig) -> Result<GramFactor> {
    let frame = if frame.centered {
        frame.clone()
    } else {
        center_landmarks(frame)
    };
    let d = frame.dim();
    let svd = frame
        .points
        .clone()
        .try_svd(true, true, 1e-14, 0)
        .ok_or_else(|| OegError::DegenerateShape("SVD failed to converge".into()))?;
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let sigma = &svd.singular_values;

    let trace: f64 = sigma.iter().map(|s| s * s).sum();
    let floor = cfg.eps * trace / d as f64;
    let sigma_min_sq = sigma[d - 1] * sigma[d - 1];
    if sigma_min_sq <= floor || trace == 0.0 {
        return Err(OegError::DegenerateShape(format!(
            "smallest squared singular value {sigma_min_sq:.3e} at or below floor {floor:.3e}"
        )));
    }

    // basis = W V^T from X = W Sigma V^T; spd = V Sigma^2 V^T = X^T X
    let basis = u * vt;
    let spd = vt.transpose() * DMatrix::from_diagonal(&sigma.map(|s| s * s)) * vt;
    let spd = 0.5 * (&spd + spd.transpose());
    Ok(GramFactor { basis, spd })
}

/// Aligned representation of a factor pair: principal angles plus the
/// rotated bases and SPD blocks in which the cone geodesic is separable.
struct AlignedPair {
    angles: DVector<f64>,
    basis_a: DMatrix<f64>,
    basis_b: DMatrix<f64>,
    spd_a: DMatrix<f64>,
    spd_b: DMatrix<f64>,
}

fn align(a: &GramFactor, b: &GramFactor) -> Result<AlignedPair> {
    if a.basis.shape() != b.basis.shape() {
        return Err(OegError::InvalidInput(
            "factors have mismatched (n, d)".into(),
        ));
    }
    let overlap = a.basis.transpose() * &b.basis;
    let svd = overlap
        .try_svd(true, true, 1e-14, 0)
        .ok_or_else(|| OegError::DegenerateShape("alignment SVD failed".into()))?;
    let v = svd.u.unwrap();
    let wt = svd.v_t.unwrap();
    // nalgebra returns descending cosines, so angles come out ascending.
    let angles = svd.singular_values.map(|c| c.clamp(0.0, 1.0).acos());
    let basis_a = &a.basis * &v;
    let basis_b = &b.basis * wt.transpose();
    let spd_a = v.transpose() * &a.spd * &v;
    let spd_b = &wt * &b.spd * wt.transpose();
    Ok(AlignedPair {
        angles,
        basis_a,
        basis_b,
        spd_a: 0.5 * (&spd_a + spd_a.transpose()),
        spd_b: 0.5 * (&spd_b + spd_b.transpose()),
    })
}

/// Principal angles between the column spans of two factors, ascending.
pub fn principal_angles(a: &GramFactor, b: &GramFactor) -> Result<SubspaceAngles> {
    let pair = align(a, b)?;
    Ok(SubspaceAngles {
        angles: pair.angles,
    })
}

const CUT_LOCUS_TOL: f64 = 1e-6;

/// Point at parameter `t` on the Grassmann geodesic from `a` to `b`.
pub fn grassmann_geodesic(a: &GramFactor, b: &GramFactor, t: f64) -> Result<DMatrix<f64>> {
    let pair = align(a, b)?;
    geodesic_basis(&pair, t)
}

fn geodesic_basis(pair: &AlignedPair, t: f64) -> Result<DMatrix<f64>> {
    let d = pair.angles.len();
    if pair
        .angles
        .iter()
        .any(|&th| th > std::f64::consts::FRAC_PI_2 - CUT_LOCUS_TOL)
    {
        return Err(OegError::CutLocus);
    }
    // M = (I - U1 U1^T) U2 W F with F the pseudoinverse of diag(sin theta);
    // in aligned coordinates each column is (B_i - A_i cos theta_i)/sin theta_i.
    let mut out = pair.basis_a.clone();
    for i in 0..d {
        let th = pair.angles[i];
        let mut col = pair.basis_a.column(i) * (th * t).cos();
        if th.sin() > 1e-12 {
            let dir = (pair.basis_b.column(i) - pair.basis_a.column(i) * th.cos()) / th.sin();
            col += dir * (th * t).sin();
        }
        out.set_column(i, &col);
    }
    Ok(out)
}

fn spd_eig_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
    let sym = 0.5 * (m + m.transpose());
    let eig = sym.symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(OegError::NotSpd(format!(
            "eigenvalue {:.3e} <= 0",
            eig.eigenvalues.min()
        )));
    }
    let mapped = DMatrix::from_diagonal(&eig.eigenvalues.map(&f));
    let out = &eig.eigenvectors * mapped * eig.eigenvectors.transpose();
    Ok(0.5 * (&out + out.transpose()))
}

pub fn spd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spd_eig_map(m, f64::sqrt)
}

pub fn spd_log(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spd_eig_map(m, f64::ln)
}

/// Affine-invariant geodesic between SPD blocks:
/// `R^2(t) = R1 exp(t log(R1^-1 R2^2 R1^-1)) R1`.
pub fn spd_geodesic(r1sq: &DMatrix<f64>, r2sq: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let r1 = spd_sqrt(r1sq)?;
    let r1_inv = spd_eig_map(r1sq, |l| 1.0 / l.sqrt())?;
    let inner = &r1_inv * r2sq * &r1_inv;
    let powed = spd_eig_map(&inner, |l| l.powf(t))?;
    let out = &r1 * powed * &r1;
    Ok(0.5 * (&out + out.transpose()))
}

/// Log-map term of the SPD geodesic: `log(R1^-1 R2^2 R1^-1)`.
fn spd_log_map(r1sq: &DMatrix<f64>, r2sq: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let r1_inv = spd_eig_map(r1sq, |l| 1.0 / l.sqrt())?;
    spd_log(&(&r1_inv * r2sq * &r1_inv))
}

/// Point at parameter `t` on the cone geodesic from `a` to `b`.
pub fn psd_geodesic(a: &GramFactor, b: &GramFactor, t: f64) -> Result<GramFactor> {
    let pair = align(a, b)?;
    let basis = geodesic_basis(&pair, t)?;
    let spd = spd_geodesic(&pair.spd_a, &pair.spd_b, t)?;
    Ok(GramFactor { basis, spd })
}

/// Squared cone distance `||Theta||_F^2 + k ||log R1^-1 R2^2 R1^-1||_F^2`,
/// evaluated on the aligned SPD blocks so that it equals the squared length
/// of the curve produced by [`psd_geodesic`].
pub fn psd_distance(a: &GramFactor, b: &GramFactor, cfg: &ManifoldConfig) -> Result<f64> {
    let pair = align(a, b)?;
    let grass: f64 = pair.angles.iter().map(|th| th * th).sum();
    if cfg.k == 0.0 {
        return Ok(grass);
    }
    let log_map = spd_log_map(&pair.spd_a, &pair.spd_b)?;
    Ok(grass + cfg.k * log_map.norm_squared())
}

/// Per-step geodesic features of a sequence.
///
/// Each row holds the principal angles between consecutive frames, the
/// sqrt(2)-scaled upper triangle of the SPD log map, and the squared cone
/// distance. Steps touching a degenerate frame are NaN rows listed in `gaps`.
#[derive(Debug, Clone)]
pub struct VelocitySeries {
    pub values: DMatrix<f64>,
    pub frame_rate: f64,
    /// Step indices whose features could not be computed.
    pub gaps: Vec<usize>,
}

/// Feature width of the velocity series for ambient dimension `d`.
pub fn velocity_width(d: usize) -> usize {
    d + d * (d + 1) / 2 + 1
}

/// Frame-by-frame geodesic velocity features of a landmark sequence.
pub fn geodesic_velocity_series(
    seq: &LandmarkSequence,
    cfg: &ManifoldConfig,
) -> Result<VelocitySeries> {
    let tau = seq.frames.len();
    if tau < 2 {
        return Err(OegError::TooShort { got: tau, need: 2 });
    }
    let d = seq.frames[0].dim();
    let width = velocity_width(d);
    let factors: Vec<Option<GramFactor>> = seq
        .frames
        .iter()
        .map(|f| polar_factor(f, cfg).ok())
        .collect();

    let mut values = DMatrix::zeros(tau - 1, width);
    let mut gaps = Vec::new();
    for t in 0..tau - 1 {
        match (&factors[t], &factors[t + 1]) {
            (Some(a), Some(b)) => {
                let pair = align(a, b)?;
                let log_map = spd_log_map(&pair.spd_a, &pair.spd_b)?;
                let mut col = 0;
                for i in 0..d {
                    values[(t, col)] = pair.angles[i];
                    col += 1;
                }
                for i in 0..d {
                    for j in i..d {
                        let scale = if i == j {
                            1.0
                        } else {
                            std::f64::consts::SQRT_2
                        };
                        values[(t, col)] = scale * log_map[(i, j)];
                        col += 1;
                    }
                }
                let grass: f64 = pair.angles.iter().map(|th| th * th).sum();
                values[(t, col)] = grass + cfg.k * log_map.norm_squared();
            }
            _ => {
                for c in 0..width {
                    values[(t, c)] = f64::NAN;
                }
                gaps.push(t);
            }
        }
    }
    Ok(VelocitySeries {
        values,
        frame_rate: seq.frame_rate,
        gaps,
    })
}

/// Generalized Procrustes alignment of a sequence to its mean shape.
///
/// Frames are centered, scaled to unit Frobenius norm and rotated onto the
/// running mean over two passes. Used for mean-shape export only.
pub fn procrustes_align(seq: &LandmarkSequence) -> Result<LandmarkSequence> {
    if seq.frames.is_empty() {
        return Err(OegError::TooShort { got: 0, need: 1 });
    }
    let mut shapes: Vec<DMatrix<f64>> = Vec::with_capacity(seq.frames.len());
    for frame in &seq.frames {
        let centered = center_landmarks(frame);
        let norm = centered.points.norm();
        if norm < 1e-12 {
            return Err(OegError::DegenerateShape(
                "zero-extent frame in Procrustes alignment".into(),
            ));
        }
        shapes.push(centered.points / norm);
    }

    let mut reference = shapes[0].clone();
    for _pass in 0..2 {
        for shape in shapes.iter_mut() {
            let rot = orthogonal_procrustes_rotation(shape, &reference)?;
            *shape = &*shape * rot;
        }
        let mut mean = DMatrix::zeros(reference.nrows(), reference.ncols());
        for shape in &shapes {
            mean += shape;
        }
        mean /= shapes.len() as f64;
        let norm = mean.norm();
        if norm < 1e-12 {
            return Err(OegError::DegenerateShape(
                "Procrustes mean collapsed to zero".into(),
            ));
        }
        reference = mean / norm;
    }

    let frames = shapes
        .into_iter()
        .map(|points| LandmarkFrame {
            points,
            centered: true,
        })
        .collect();
    LandmarkSequence::new(frames, seq.frame_rate, seq.subject_id.clone(), seq.segment)
}

/// Rotation (det +1) minimizing `||A Q - B||_F`.
fn orthogonal_procrustes_rotation(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = a.transpose() * b;
    let svd = m
        .try_svd(true, true, 1e-14, 0)
        .ok_or_else(|| OegError::DegenerateShape("Procrustes SVD failed".into()))?;
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut q = &u * &vt;
    if q.determinant() < 0.0 {
        // flip the weakest direction to stay in SO(d)
        let d = u.ncols();
        let mut u_fix = u;
        let col = -u_fix.column(d - 1);
        u_fix.set_column(d - 1, &col);
        q = u_fix * vt;
    }
    Ok(q)
}

/// Mean shape of a Procrustes-aligned sequence.
pub fn mean_shape(aligned: &LandmarkSequence) -> DMatrix<f64> {
    let (n, d) = aligned.frames[0].points.shape();
    let mut mean = DMatrix::zeros(n, d);
    for frame in &aligned.frames {
        mean += &frame.points;
    }
    mean / aligned.frames.len() as f64
}
