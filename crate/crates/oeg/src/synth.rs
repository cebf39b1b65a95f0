//! Deterministic synthetic cohort generation.
//!
//! Landmark recordings are driven by planted, stable VAR(3) regimes in a
//! six-dimensional latent space mapped onto a fixed 49-point base face.
//! HAMD trajectories and treatment assignments follow a planted effect
//! table so that downstream models can be validated against known ground
//! truth.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::causal::TREATMENT_CATEGORIES;
use crate::dynamics::companion_radius;
use crate::error::Result;
use crate::manifold::{LandmarkFrame, LandmarkSequence, Segment};

/// Number of landmarks on the base face.
pub const NUM_LANDMARKS: usize = 49;
/// Latent state dimension of the planted dynamics.
pub const LATENT_DIM: usize = 6;
/// Order of the planted autoregression.
pub const PLANTED_ORDER: usize = 3;
/// The treatment category carrying the planted strong effect.
pub const PLANTED_T_STAR: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeLabel {
    Control,
    DepressiveLike,
    SchizophrenicLike,
}

impl RegimeLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegimeLabel::Control => "control",
            RegimeLabel::DepressiveLike => "depressive_like",
            RegimeLabel::SchizophrenicLike => "schizophrenic_like",
        }
    }

    pub fn index(&self) -> usize {
        match self {
            RegimeLabel::Control => 0,
            RegimeLabel::DepressiveLike => 1,
            RegimeLabel::SchizophrenicLike => 2,
        }
    }

    pub fn is_patient(&self) -> bool {
        !matches!(self, RegimeLabel::Control)
    }
}

/// Planted dynamics of one regime.
#[derive(Debug, Clone)]
pub struct RegimeParams {
    pub label: RegimeLabel,
    /// Stable VAR(3) coefficients over the latent space.
    pub var_coeffs: Vec<DMatrix<f64>>,
    pub noise_scale: f64,
    /// Latent-to-landmark displacement maps, one n×d matrix per latent
    /// coordinate.
    pub deformation_basis: Vec<DMatrix<f64>>,
    pub separation: f64,
}

/// Expected fractional HAMD reduction per (regime, treatment category).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectTable {
    /// Rows indexed by `RegimeLabel::index`, columns by category.
    pub effects: Vec<Vec<f64>>,
}

impl Default for EffectTable {
    fn default() -> Self {
        // one strong planted treatment, everything else weak
        let mut effects = vec![vec![0.0; TREATMENT_CATEGORIES]; 3];
        for regime in 1..3 {
            for cat in 0..TREATMENT_CATEGORIES {
                effects[regime][cat] = if cat == PLANTED_T_STAR { 0.62 } else { 0.08 };
            }
        }
        EffectTable { effects }
    }
}

impl EffectTable {
    pub fn effect(&self, label: RegimeLabel, w: &DVector<f64>) -> f64 {
        let row = &self.effects[label.index()];
        (0..TREATMENT_CATEGORIES).map(|c| w[c] * row[c]).sum()
    }
}

/// Full description of a synthetic cohort.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortSpec {
    pub n_control: usize,
    pub n_depressive: usize,
    pub n_schizophrenic: usize,
    pub duration_s: f64,
    pub frame_rate: f64,
    pub seed: u64,
    /// Scales inter-regime coefficient differences; 0 collapses all regimes.
    pub separation: f64,
    /// Fraction of patients whose clinical prescription deliberately misses
    /// the planted best treatment.
    pub suboptimal_fraction: f64,
    pub effect_table: EffectTable,
    /// Plant psychomotor reaction times correlated with severity.
    pub with_reaction_times: bool,
    /// Also generate a discharge recording for every patient.
    pub with_discharge: bool,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            n_control: 20,
            n_depressive: 10,
            n_schizophrenic: 10,
            duration_s: 120.0,
            frame_rate: 25.0,
            seed: 7,
            separation: 1.0,
            suboptimal_fraction: 0.5,
            effect_table: EffectTable::default(),
            with_reaction_times: true,
            with_discharge: true,
        }
    }
}

/// One captured recording: landmarks plus auxiliary channels.
#[derive(Debug, Clone)]
pub struct Recording {
    pub landmarks: LandmarkSequence,
    /// Head-pose proxy channels (T×3).
    pub pose: DMatrix<f64>,
    /// Gaze proxy channels (T×2).
    pub gaze: DMatrix<f64>,
}

/// One generated subject with ground-truth annotations.
#[derive(Debug, Clone)]
pub struct SyntheticSubject {
    pub subject_id: String,
    pub label: RegimeLabel,
    pub landmarks: LandmarkSequence,
    /// Head-pose proxy channels (T×3).
    pub pose: DMatrix<f64>,
    /// Gaze proxy channels (T×2).
    pub gaze: DMatrix<f64>,
    /// Discharge recording of patients: dynamics relax toward the control
    /// regime in proportion to the achieved HAMD improvement.
    pub discharge: Option<Recording>,
    pub hamd_in: u32,
    pub hamd_out: u32,
    /// Clinical prescription; all-zero for controls.
    pub treatment: DVector<f64>,
    pub reaction_time_ms: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub spec: CohortSpec,
    pub subjects: Vec<SyntheticSubject>,
}

/// Fixed 49-point base face: an oval outline plus brow/eye/nose/mouth rings.
pub fn base_face() -> DMatrix<f64> {
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(NUM_LANDMARKS);
    // jaw / outline (17)
    for i in 0..17 {
        let a = std::f64::consts::PI * (0.1 + 0.8 * i as f64 / 16.0);
        pts.push((a.cos(), -1.3 * a.sin()));
    }
    // brows (2 x 5)
    for i in 0..5 {
        let x = -0.7 + 0.125 * i as f64;
        pts.push((x, 0.55 + 0.05 * (i as f64 - 2.0).abs()));
    }
    for i in 0..5 {
        let x = 0.2 + 0.125 * i as f64;
        pts.push((x, 0.55 + 0.05 * (i as f64 - 2.0).abs()));
    }
    // eyes (2 x 6)
    for i in 0..6 {
        let a = std::f64::consts::TAU * i as f64 / 6.0;
        pts.push((-0.45 + 0.16 * a.cos(), 0.30 + 0.08 * a.sin()));
    }
    for i in 0..6 {
        let a = std::f64::consts::TAU * i as f64 / 6.0;
        pts.push((0.45 + 0.16 * a.cos(), 0.30 + 0.08 * a.sin()));
    }
    // nose (4)
    for i in 0..4 {
        pts.push((0.02 * (i as f64 - 1.5), 0.1 - 0.12 * i as f64));
    }
    // mouth (6)
    for i in 0..6 {
        let a = std::f64::consts::TAU * i as f64 / 6.0;
        pts.push((0.3 * a.cos(), -0.75 + 0.12 * a.sin()));
    }
    assert_eq!(pts.len(), NUM_LANDMARKS);
    DMatrix::from_fn(
        NUM_LANDMARKS,
        2,
        |r, c| if c == 0 { pts[r].0 } else { pts[r].1 },
    )
}

/// 2x2 rotation matrix.
fn rot2(theta: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
}

/// Per-regime damped-oscillator parameters at a given separation.
fn regime_modes(label: RegimeLabel, separation: f64) -> ([f64; 3], [f64; 3]) {
    // high-Q oscillators: sharply peaked spectra make the per-window VAR
    // estimates precise, so modest regime shifts dominate estimation noise
    let rho_c = [0.985, 0.975, 0.960];
    let omega_c = [0.50, 0.90, 1.40];
    let (drho, domega) = match label {
        RegimeLabel::Control => ([0.0; 3], [0.0; 3]),
        // "rigid regulation": slightly slower decay and oscillation
        RegimeLabel::DepressiveLike => ([0.012, 0.015, 0.018], [-0.15, -0.21, -0.27]),
        // faster, more erratic oscillation at comparable energy
        RegimeLabel::SchizophrenicLike => ([-0.009, -0.012, -0.015], [0.15, 0.24, 0.33]),
    };
    let mut rho = [0.0; 3];
    let mut omega = [0.0; 3];
    for j in 0..3 {
        rho[j] = (rho_c[j] + separation * drho[j]).clamp(0.05, 0.992);
        omega[j] = omega_c[j] + separation * domega[j];
    }
    (rho, omega)
}

/// Regime-specific orthogonal mixing of the six latent coordinates, built
/// from Givens rotations across the mode pairs. Control keeps the modes
/// decoupled; each patient regime couples them along its own planes.
fn regime_mixing(label: RegimeLabel, separation: f64) -> DMatrix<f64> {
    let plan: &[(usize, usize, f64)] = match label {
        RegimeLabel::Control => &[],
        RegimeLabel::DepressiveLike => &[(0, 2, 0.66), (1, 3, 0.54), (2, 4, 0.36), (3, 5, 0.60)],
        RegimeLabel::SchizophrenicLike => {
            &[(0, 3, -0.60), (1, 4, 0.66), (2, 5, -0.45), (0, 5, 0.54)]
        }
    };
    let mut m = DMatrix::identity(LATENT_DIM, LATENT_DIM);
    for &(i, j, theta) in plan {
        let t = separation * theta;
        let mut g = DMatrix::identity(LATENT_DIM, LATENT_DIM);
        g[(i, i)] = t.cos();
        g[(j, j)] = t.cos();
        g[(i, j)] = -t.sin();
        g[(j, i)] = t.sin();
        m = g * m;
    }
    m
}

/// Planted regime dynamics; deterministic in `(label, separation, seed)`.
pub fn regime_params(label: RegimeLabel, separation: f64, seed: u64) -> RegimeParams {
    let (rho, omega) = regime_modes(label, separation);
    // three independent damped rotation blocks, echoed into lags 2 and 3
    let mut a1 = DMatrix::zeros(LATENT_DIM, LATENT_DIM);
    let mut a2 = DMatrix::zeros(LATENT_DIM, LATENT_DIM);
    let mut a3 = DMatrix::zeros(LATENT_DIM, LATENT_DIM);
    for j in 0..3 {
        let r1 = rho[j] * rot2(omega[j]);
        let r2 = -0.20 * rho[j] * rho[j] * rot2(2.0 * omega[j]);
        let r3 = 0.08 * rho[j].powi(3) * rot2(3.0 * omega[j]);
        a1.view_mut((2 * j, 2 * j), (2, 2)).copy_from(&r1);
        a2.view_mut((2 * j, 2 * j), (2, 2)).copy_from(&r2);
        a3.view_mut((2 * j, 2 * j), (2, 2)).copy_from(&r3);
    }
    let mut var_coeffs = vec![a1, a2, a3];
    // regime-specific orthogonal mixing of the latent modes: a similarity
    // transform keeps the spectrum (hence stability) but makes every
    // cross-channel coefficient entry regime-dependent, so the planted
    // signature is spread across the whole coefficient block instead of
    // hiding in three pole locations
    let mixing = regime_mixing(label, separation);
    for a in &mut var_coeffs {
        *a = &mixing * &*a * mixing.transpose();
    }
    let radius = companion_radius(&var_coeffs);
    if radius >= 0.98 {
        let shrink = 0.97 / radius;
        for (lag, a) in var_coeffs.iter_mut().enumerate() {
            *a *= shrink.powi(lag as i32 + 1);
        }
    }

    // shared deformation basis: smooth, seeded, regime-independent so the
    // planted signal lives entirely in the dynamics
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_face);
    let deformation_basis = (0..LATENT_DIM)
        .map(|_| {
            let fx = rng.gen_range(0.5..2.0);
            let fy = rng.gen_range(0.5..2.0);
            let px = rng.gen_range(0.0..std::f64::consts::TAU);
            let py = rng.gen_range(0.0..std::f64::consts::TAU);
            let base = base_face();
            DMatrix::from_fn(NUM_LANDMARKS, 2, |r, c| {
                let (x, y) = (base[(r, 0)], base[(r, 1)]);
                if c == 0 {
                    0.04 * (fx * x + fy * y + px).sin()
                } else {
                    0.04 * (fy * x - fx * y + py).cos()
                }
            })
        })
        .collect();

    // equal innovation scale across regimes: the planted signature lives in
    // the coefficients, which the per-channel standardization cannot erase
    let noise_scale = 0.25;
    RegimeParams {
        label,
        var_coeffs,
        noise_scale,
        deformation_basis,
        separation,
    }
}

/// Simulate the latent VAR(3) series (T×6) from a zero initial state.
pub fn generate_latent(regime: &RegimeParams, t: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let burn = if regime.noise_scale > 0.0 { 200 } else { 0 };
    let total = t + burn;
    let mut out = DMatrix::zeros(total, LATENT_DIM);
    for row in PLANTED_ORDER.min(total)..total {
        let mut x = DVector::zeros(LATENT_DIM);
        for lag in 1..=PLANTED_ORDER {
            x += &regime.var_coeffs[lag - 1] * out.row(row - lag).transpose();
        }
        for c in 0..LATENT_DIM {
            let e: f64 = StandardNormal.sample(rng);
            out[(row, c)] = x[c] + regime.noise_scale * e;
        }
    }
    out.rows(burn, t).into_owned()
}

/// Stream for one subject, decoupled from every other subject's stream.
fn subject_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mixed = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(index as u64);
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Fill one channel with a damped AR(2) oscillator, burn-in included.
fn fill_oscillator(
    mut col: nalgebra::DVectorViewMut<f64>,
    rho: f64,
    omega: f64,
    rng: &mut ChaCha8Rng,
) {
    let a1 = 2.0 * rho * omega.cos();
    let a2 = -rho * rho;
    let (mut prev, mut prev2) = (0.0, 0.0);
    let burn = 200;
    for row in 0..burn + col.len() {
        let e: f64 = StandardNormal.sample(rng);
        let v = a1 * prev + a2 * prev2 + 0.05 * e;
        prev2 = prev;
        prev = v;
        if row >= burn {
            col[row - burn] = v;
        }
    }
}

/// Generate one subject's landmark recording plus pose/gaze channels.
pub fn generate_subject(
    regime: &RegimeParams,
    spec: &CohortSpec,
    subject_id: &str,
    index: usize,
) -> Result<SyntheticSubject> {
    let t = (spec.duration_s * spec.frame_rate).round() as usize;
    let mut rng = subject_rng(spec.seed, index);
    let latent = generate_latent(regime, t, &mut rng);
    let base = base_face();

    let mut frames = Vec::with_capacity(t);
    for row in 0..t {
        let mut points = base.clone();
        for k in 0..LATENT_DIM {
            points += latent[(row, k)] * &regime.deformation_basis[k];
        }
        frames.push(LandmarkFrame::new(points)?);
    }
    let landmarks = LandmarkSequence::new(frames, spec.frame_rate, subject_id, Segment::Full)?;

    // pose and gaze: damped oscillators whose frequencies also shift with
    // the regime, so the auxiliary channels carry part of the signature
    // instead of acting as pure nuisance
    let sep = regime.separation;
    let shift = match regime.label {
        RegimeLabel::Control => 0.0,
        RegimeLabel::DepressiveLike => -1.0,
        RegimeLabel::SchizophrenicLike => 1.0,
    };
    let pose_modes = [(0.970, 0.10), (0.965, 0.16), (0.960, 0.24)];
    let gaze_modes = [(0.950, 0.35), (0.945, 0.55)];
    let mut pose = DMatrix::zeros(t, 3);
    for (c, &(rho, omega)) in pose_modes.iter().enumerate() {
        fill_oscillator(
            pose.column_mut(c),
            rho,
            omega + shift * sep * 0.06,
            &mut rng,
        );
    }
    let mut gaze = DMatrix::zeros(t, 2);
    for (c, &(rho, omega)) in gaze_modes.iter().enumerate() {
        fill_oscillator(
            gaze.column_mut(c),
            rho,
            omega + shift * sep * 0.12,
            &mut rng,
        );
    }

    Ok(SyntheticSubject {
        subject_id: subject_id.to_string(),
        label: regime.label,
        landmarks,
        pose,
        gaze,
        discharge: None,
        hamd_in: 0,
        hamd_out: 0,
        treatment: DVector::zeros(TREATMENT_CATEGORIES),
        reaction_time_ms: None,
    })
}

/// Regime for a patient's discharge visit: coefficient offsets shrink toward
/// the control regime by the fractional HAMD improvement.
fn discharge_regime(
    label: RegimeLabel,
    separation: f64,
    seed: u64,
    improvement: f64,
) -> RegimeParams {
    let residual = (1.0 - improvement).clamp(0.0, 1.0);
    let mut regime = regime_params(label, separation * residual, seed);
    let control_noise = regime_params(RegimeLabel::Control, 0.0, seed).noise_scale;
    regime.noise_scale += improvement.clamp(0.0, 1.0) * (control_noise - regime.noise_scale);
    regime
}

/// The suboptimal alternatives the clinical policy cycles through.
const SUBOPTIMAL_CATEGORIES: [usize; 4] = [0, 2, 8, 9];

/// Generate the full cohort with planted HAMD trajectories and treatments.
pub fn generate_cohort(spec: &CohortSpec) -> Result<SyntheticCohort> {
    let labels: Vec<RegimeLabel> = std::iter::empty()
        .chain(std::iter::repeat(RegimeLabel::Control).take(spec.n_control))
        .chain(std::iter::repeat(RegimeLabel::DepressiveLike).take(spec.n_depressive))
        .chain(std::iter::repeat(RegimeLabel::SchizophrenicLike).take(spec.n_schizophrenic))
        .collect();
    let regimes = [
        regime_params(RegimeLabel::Control, spec.separation, spec.seed),
        regime_params(RegimeLabel::DepressiveLike, spec.separation, spec.seed),
        regime_params(RegimeLabel::SchizophrenicLike, spec.separation, spec.seed),
    ];

    let mut subjects = Vec::with_capacity(labels.len());
    let mut patient_count = 0usize;
    let n_patients = spec.n_depressive + spec.n_schizophrenic;
    for (index, &label) in labels.iter().enumerate() {
        let subject_id = format!("{}{:03}", &label.as_str()[..1], index);
        let mut subject = generate_subject(&regimes[label.index()], spec, &subject_id, index)?;
        // annotation stream separated from the landmark stream
        let mut rng = subject_rng(spec.seed ^ 0xa11_0ca7e, index);
        if label.is_patient() {
            subject.hamd_in = rng.gen_range(14..=30);
            // deliberately suboptimal prescriptions for a planted fraction
            let cutoff = (spec.suboptimal_fraction * n_patients as f64).round() as usize;
            let cat = if patient_count % n_patients.max(1) < cutoff {
                SUBOPTIMAL_CATEGORIES[patient_count % SUBOPTIMAL_CATEGORIES.len()]
            } else {
                PLANTED_T_STAR
            };
            subject.treatment[cat] = 1.0;
            let effect = spec.effect_table.effect(label, &subject.treatment);
            subject.hamd_out = ((subject.hamd_in as f64) * (1.0 - effect))
                .round()
                .clamp(0.0, 52.0) as u32;
            if spec.with_discharge {
                let improvement =
                    (subject.hamd_in - subject.hamd_out) as f64 / subject.hamd_in as f64;
                let regime = discharge_regime(label, spec.separation, spec.seed, improvement);
                let dis = generate_subject(&regime, spec, &subject.subject_id, index + 100_000)?;
                subject.discharge = Some(Recording {
                    landmarks: dis.landmarks,
                    pose: dis.pose,
                    gaze: dis.gaze,
                });
            }
            patient_count += 1;
        } else {
            subject.hamd_in = rng.gen_range(0..=4);
            subject.hamd_out = rng.gen_range(0..=4);
        }
        if spec.with_reaction_times {
            let e: f64 = StandardNormal.sample(&mut rng);
            subject.reaction_time_ms = Some(250.0 + 8.0 * subject.hamd_in as f64 + 15.0 * e);
        }
        subjects.push(subject);
    }
    Ok(SyntheticCohort {
        spec: spec.clone(),
        subjects,
    })
}
