//! End-to-end orchestration: feature extraction across a cohort, background
//! model training, adaptation, cross-validation, counterfactual analysis,
//! and the file-based commands driving all of it.
//!
//! Every stage is sequential and seeded, so identical inputs and config
//! produce byte-identical artifacts.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::causal::{
    self, CounterfactualResult, SubjectRecord, TensorSpec, TuckerModel, TREATMENT_CATEGORIES,
    TREATMENT_LABELS,
};
use crate::config::{check_hash, PipelineConfig};
use crate::dynamics::{
    apply_basis, assemble_channels, fit_basis, fit_var, interpolate_gaps, vectorize_coefficients,
    window, ChannelSeries, ReducedBasis, WindowSpec,
};
use crate::error::{OegError, Result};
use crate::gpr::{self, loso_cv, CvReport, GpConfig, Observation};
use crate::io::{
    self, CohortManifest, FeatureFile, ManifestEntry, RecommendationRecord, SegmentMap,
};
use crate::manifold::{geodesic_velocity_series, ManifoldConfig, Segment};
use crate::synth::{self, CohortSpec, RegimeLabel, SyntheticCohort};
use crate::ubm::{
    accumulate, kernel, map_adapt, supervector, train_em, weight_wasserstein, AdaptedModel,
    GmmModel, Supervector,
};

/// Which visit a recording belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Visit {
    Admission,
    Discharge,
}

impl Visit {
    /// Recording identifier derived from a subject identifier.
    pub fn recording_id(&self, subject_id: &str) -> String {
        match self {
            Visit::Admission => subject_id.to_string(),
            Visit::Discharge => format!("{subject_id}__discharge"),
        }
    }
}

/// One recording queued for feature extraction.
#[derive(Debug, Clone)]
pub struct RecordingInput {
    pub subject_id: String,
    pub visit: Visit,
    pub landmarks: crate::manifold::LandmarkSequence,
    pub pose: DMatrix<f64>,
    pub gaze: DMatrix<f64>,
}

/// Extracted atoms of one recording.
#[derive(Debug, Clone)]
pub struct RecordingFeatures {
    pub subject_id: String,
    pub visit: Visit,
    /// num_windows × q2 final feature atoms.
    pub atoms: DMatrix<f64>,
    pub low_variance: bool,
    pub degenerate_frames: Vec<usize>,
}

impl RecordingFeatures {
    pub fn recording_id(&self) -> String {
        self.visit.recording_id(&self.subject_id)
    }
}

/// Clinical ground truth carried alongside a subject's recordings.
#[derive(Debug, Clone)]
pub struct ClinicalRecord {
    pub subject_id: String,
    pub label: RegimeLabel,
    pub hamd_in: u32,
    pub hamd_out: u32,
    pub treatment: DVector<f64>,
    pub reaction_time_ms: Option<f64>,
}

impl ClinicalRecord {
    pub fn is_patient(&self) -> bool {
        self.label.is_patient()
    }
}

fn velocity_channel_names(width: usize) -> Vec<String> {
    (0..width).map(|i| format!("geo_{i}")).collect()
}

/// Per-recording geodesic velocity series with gaps interpolated.
fn velocity_series(
    rec: &RecordingInput,
    cfg: &PipelineConfig,
) -> Result<(ChannelSeries, Vec<usize>)> {
    let mcfg = ManifoldConfig {
        k: cfg.manifold_k,
        eps: cfg.manifold_eps,
    };
    let vel = geodesic_velocity_series(&rec.landmarks, &mcfg)?;
    let degenerate = vel.gaps.clone();
    let width = vel.values.ncols();
    let mut series = ChannelSeries::new(vel.values, vel.frame_rate, velocity_channel_names(width))?;
    let unresolved = interpolate_gaps(&mut series, cfg.max_gap);
    if !unresolved.is_empty() {
        log::warn!(
            "{}: {} frames remain unresolved after interpolation",
            rec.subject_id,
            unresolved.len()
        );
        // unresolved rows poison their windows; zero them instead so the
        // remaining windows stay usable, the gap is already reported
        for &r in &unresolved {
            for c in 0..series.values.ncols() {
                series.values[(r, c)] = 0.0;
            }
        }
    }
    Ok((series, degenerate))
}

fn clamped_basis(data: &DMatrix<f64>, q: usize) -> Result<ReducedBasis> {
    let mut q = q.min(data.ncols()).max(1);
    loop {
        match fit_basis(data, q) {
            Ok(b) => return Ok(b),
            Err(OegError::RankTooLow { rank, .. }) if rank >= 1 => q = rank,
            Err(e) => return Err(e),
        }
    }
}

const LOW_VARIANCE_TOL: f64 = 1e-18;

/// Extract final feature atoms for a whole cohort of recordings.
///
/// Both reduction bases (velocity channels to q1, coefficient atoms to q2)
/// are fitted globally across the cohort so atoms from different recordings
/// live in one coordinate system.
pub fn extract_features(
    recordings: &[RecordingInput],
    cfg: &PipelineConfig,
) -> Result<Vec<RecordingFeatures>> {
    if recordings.is_empty() {
        return Err(OegError::InvalidInput("no recordings".into()));
    }
    // pass 1: velocity series per recording
    let mut series = Vec::with_capacity(recordings.len());
    let mut degenerate = Vec::with_capacity(recordings.len());
    let mut low_variance = Vec::with_capacity(recordings.len());
    for rec in recordings {
        let (s, gaps) = velocity_series(rec, cfg)?;
        // static means every channel is constant, so judge each channel
        // about its own mean rather than pooling across channels
        let var: f64 = (0..s.values.ncols())
            .map(|c| {
                let col = s.values.column(c);
                let mean = col.mean();
                col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64
            })
            .fold(0.0, f64::max);
        low_variance.push(var < LOW_VARIANCE_TOL);
        degenerate.push(gaps);
        series.push(s);
    }
    let active: Vec<usize> = (0..recordings.len())
        .filter(|&i| !low_variance[i])
        .collect();
    if active.is_empty() {
        return Err(OegError::InvalidInput(
            "every recording is static; nothing to model".into(),
        ));
    }

    // global q1 basis over the pooled velocity rows
    let width = series[active[0]].values.ncols();
    let total_rows: usize = active.iter().map(|&i| series[i].values.nrows()).sum();
    let mut pooled = DMatrix::zeros(total_rows, width);
    let mut row = 0;
    for &i in &active {
        pooled
            .rows_mut(row, series[i].values.nrows())
            .copy_from(&series[i].values);
        row += series[i].values.nrows();
    }
    let basis1 = clamped_basis(&pooled, cfg.q1)?;

    // pass 2: reduce, assemble with pose/gaze, window, fit, vectorize
    let wspec = WindowSpec {
        length_s: cfg.window_length_s,
        overlap_s: cfg.window_overlap_s,
    };
    let mut raw_atoms: Vec<Option<DMatrix<f64>>> = vec![None; recordings.len()];
    let mut num_windows = vec![0usize; recordings.len()];
    let mut atom_width = 0usize;
    for &i in &active {
        let rec = &recordings[i];
        let reduced = apply_basis(&series[i], &basis1)?;
        let frame_rate = reduced.frame_rate;
        let pose = ChannelSeries::new(
            rec.pose.clone(),
            frame_rate,
            vec!["pose_1".into(), "pose_2".into(), "pose_3".into()],
        )?;
        let gaze = ChannelSeries::new(
            rec.gaze.clone(),
            frame_rate,
            vec!["gaze_1".into(), "gaze_2".into()],
        )?;
        let assembled = assemble_channels(&reduced, &[&pose, &gaze])?;
        let expected = reduced.values.ncols() + 5;
        if assembled.values.ncols() != expected {
            return Err(OegError::InvalidInput(format!(
                "{}: constant channel dropped, got {} of {expected} channels",
                rec.subject_id,
                assembled.values.ncols()
            )));
        }
        let blocks = window(&assembled, &wspec)?;
        num_windows[i] = blocks.len();
        let mut rows = Vec::with_capacity(blocks.len());
        for block in &blocks {
            if block.iter().any(|v| v.is_nan()) {
                log::warn!(
                    "{}: skipping window containing unresolved gaps",
                    rec.subject_id
                );
                continue;
            }
            let model = fit_var(block, cfg.var_order)?;
            if model.ill_conditioned {
                log::warn!("{}: ill-conditioned window", rec.subject_id);
            }
            rows.push(vectorize_coefficients(&model));
        }
        if rows.is_empty() {
            return Err(OegError::TooShort { got: 0, need: 1 });
        }
        let m = DMatrix::from_fn(rows.len(), rows[0].len(), |r, c| rows[r][c]);
        atom_width = m.ncols();
        raw_atoms[i] = Some(m);
    }

    // global q2 basis over the pooled raw atoms
    let total_atoms: usize = active
        .iter()
        .map(|&i| raw_atoms[i].as_ref().unwrap().nrows())
        .sum();
    let mut pooled_atoms = DMatrix::zeros(total_atoms, atom_width);
    let mut row = 0;
    for &i in &active {
        let m = raw_atoms[i].as_ref().unwrap();
        pooled_atoms.rows_mut(row, m.nrows()).copy_from(m);
        row += m.nrows();
    }
    let basis2 = clamped_basis(&pooled_atoms, cfg.q2)?;
    let q2 = basis2.q;

    let mut out = Vec::with_capacity(recordings.len());
    for (i, rec) in recordings.iter().enumerate() {
        let atoms = match &raw_atoms[i] {
            Some(m) => crate::dynamics::apply_basis_rows(m, &basis2),
            // static recording: zero-vector atoms, one per nominal window
            None => {
                let t = series[i].values.nrows();
                let win = (cfg.window_length_s * series[i].frame_rate).round() as usize;
                let hop = ((cfg.window_length_s - cfg.window_overlap_s) * series[i].frame_rate)
                    .round() as usize;
                let nw = if t >= win { (t - win) / hop + 1 } else { 0 };
                DMatrix::zeros(nw.max(1), q2)
            }
        };
        out.push(RecordingFeatures {
            subject_id: rec.subject_id.clone(),
            visit: rec.visit,
            atoms,
            low_variance: low_variance[i],
            degenerate_frames: degenerate[i].clone(),
        });
    }
    Ok(out)
}

/// Train the background model over every recording's atoms.
pub fn train_background(features: &[RecordingFeatures], cfg: &PipelineConfig) -> Result<GmmModel> {
    let total: usize = features.iter().map(|f| f.atoms.nrows()).sum();
    if total == 0 {
        return Err(OegError::InvalidInput("no atoms to train on".into()));
    }
    let width = features[0].atoms.ncols();
    let mut pooled = DMatrix::zeros(total, width);
    let mut row = 0;
    for f in features {
        pooled.rows_mut(row, f.atoms.nrows()).copy_from(&f.atoms);
        row += f.atoms.nrows();
    }
    let c = cfg.ubm_components.min(total);
    let report = train_em(&pooled, c, cfg.seed, cfg.em_iters, cfg.variance_floor_frac)?;
    Ok(report.model)
}

/// MAP-adapt one recording and embed it as a supervector.
pub fn adapt_recording(
    prior: &GmmModel,
    features: &RecordingFeatures,
    cfg: &PipelineConfig,
) -> Result<(Supervector, AdaptedModel)> {
    let stats = accumulate(prior, &features.atoms);
    let adapted = map_adapt(&stats, prior, cfg.relevance)?;
    let sv = supervector(&adapted, prior, features.recording_id(), cfg.segment)?;
    Ok((sv, adapted))
}

/// Dense kernel matrix over a set of supervectors.
pub fn kernel_matrix(svs: &[Supervector]) -> Result<DMatrix<f64>> {
    let n = svs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kernel(&svs[i], &svs[j])?;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Cross-validation target over the cohort.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvTarget {
    /// Control (0) vs. patient (1), whole cohort.
    Status,
    /// Regime index over patients only.
    PatientType,
    /// Discharge HAMD over patients only.
    HamdOut,
    /// 30%-improvement responder flag over patients only.
    Responder,
}

impl CvTarget {
    pub fn name(&self) -> &'static str {
        match self {
            CvTarget::Status => "status",
            CvTarget::PatientType => "type",
            CvTarget::HamdOut => "hamd_out",
            CvTarget::Responder => "responder",
        }
    }

    pub fn all() -> [CvTarget; 4] {
        [
            CvTarget::Status,
            CvTarget::PatientType,
            CvTarget::HamdOut,
            CvTarget::Responder,
        ]
    }
}

/// Leave-one-subject-out evaluation of one target using admission
/// supervectors as inputs.
pub fn run_cv(
    svs: &[Supervector],
    clinical: &[ClinicalRecord],
    target: CvTarget,
    cfg: &PipelineConfig,
) -> Result<CvReport> {
    let gp = GpConfig {
        bias_var: cfg.gp_bias_var,
        noise_var: cfg.gp_noise_var,
        normalize: true,
    };
    let mut observations = Vec::new();
    for rec in clinical {
        let sv = svs
            .iter()
            .find(|s| s.subject_id == rec.subject_id)
            .ok_or_else(|| OegError::MissingArtifact(format!("supervector {}", rec.subject_id)))?;
        let y = match target {
            CvTarget::Status => {
                if rec.is_patient() {
                    1.0
                } else {
                    0.0
                }
            }
            CvTarget::PatientType => {
                if !rec.is_patient() {
                    continue;
                }
                rec.label.index() as f64
            }
            CvTarget::HamdOut => {
                if !rec.is_patient() {
                    continue;
                }
                rec.hamd_out as f64
            }
            CvTarget::Responder => {
                if !rec.is_patient() {
                    continue;
                }
                if gpr::responder_label(rec.hamd_in as f64, rec.hamd_out as f64)? {
                    1.0
                } else {
                    0.0
                }
            }
        };
        observations.push(Observation {
            subject_id: rec.subject_id.clone(),
            features: sv.values.clone(),
            target: y,
        });
    }
    loso_cv(&observations, target.name(), &gp)
}

/// Outcome of the cohort-level counterfactual analysis.
#[derive(Debug)]
pub struct CausalAnalysis {
    pub model: TuckerModel,
    pub per_subject: Vec<(String, CounterfactualResult)>,
    /// Mean predicted fractional reduction under the recommendations.
    pub recommended_mean_reduction: f64,
    /// Mean realized fractional reduction under the clinical policy.
    pub clinical_mean_reduction: f64,
}

/// Build the measurement tensor from admission supervectors, factor it, and
/// search counterfactual treatments for every patient.
pub fn causal_analysis(
    svs: &[Supervector],
    clinical: &[ClinicalRecord],
    cfg: &PipelineConfig,
) -> Result<CausalAnalysis> {
    let spec = TensorSpec {
        feature_dim: cfg.causal_feature_dim,
        severity_bins: cfg.severity_bins,
        bin_width: 52.0 / cfg.severity_bins as f64,
    };
    let mut records = Vec::new();
    for rec in clinical {
        let sv = svs
            .iter()
            .find(|s| s.subject_id == rec.subject_id)
            .ok_or_else(|| OegError::MissingArtifact(format!("supervector {}", rec.subject_id)))?;
        records.push(SubjectRecord {
            subject_id: rec.subject_id.clone(),
            supervector: sv.values.clone(),
            treatment: rec.treatment.clone(),
            hamd_in: rec.hamd_in,
            hamd_out: rec.hamd_out,
        });
    }
    let tensor = causal::build_tensor(&records, &spec)?;
    let ranks = (
        cfg.causal_rank_1.min(tensor.data.dims[0]),
        cfg.causal_rank_2.min(tensor.data.dims[1]),
        cfg.causal_rank_3.min(tensor.data.dims[2]),
    );
    let model = causal::hosvd(&tensor, ranks)?;

    let mut per_subject = Vec::new();
    let mut rec_sum = 0.0;
    let mut clin_sum = 0.0;
    let mut n = 0.0;
    for record in records.iter().filter(|r| r.is_treated()) {
        let stacked = DMatrix::from_fn(1, record.supervector.len(), |_, c| record.supervector[c]);
        let x = crate::dynamics::apply_basis_rows(&stacked, &tensor.feature_basis)
            .row(0)
            .transpose();
        let result = causal::recommend(
            &model,
            &x,
            record.hamd_in,
            &record.treatment,
            cfg.max_active,
        )?;
        rec_sum += 1.0 - result.predicted_hamd_out / record.hamd_in as f64;
        clin_sum += (record.hamd_in - record.hamd_out) as f64 / record.hamd_in as f64;
        n += 1.0;
        per_subject.push((record.subject_id.clone(), result));
    }
    Ok(CausalAnalysis {
        model,
        per_subject,
        recommended_mean_reduction: if n > 0.0 { rec_sum / n } else { 0.0 },
        clinical_mean_reduction: if n > 0.0 { clin_sum / n } else { 0.0 },
    })
}

// ---------------------------------------------------------------------------
// file-based commands

fn dataset_paths(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf, std::path::PathBuf) {
    (dir.join("landmarks"), dir.join("aux"), dir.join("segments"))
}

/// Write a generated cohort to a dataset directory.
pub fn cmd_synth(spec: &CohortSpec, out_dir: &Path) -> Result<CohortManifest> {
    let cohort = synth::generate_cohort(spec)?;
    write_dataset(&cohort, out_dir)
}

fn write_recording_files(
    landmark_dir: &Path,
    aux_dir: &Path,
    segment_dir: &Path,
    recording_id: &str,
    landmarks: &crate::manifold::LandmarkSequence,
    pose: &DMatrix<f64>,
    gaze: &DMatrix<f64>,
    frame_rate: f64,
) -> Result<(String, String, String)> {
    let lpath = landmark_dir.join(format!("{recording_id}.csv"));
    let apath = aux_dir.join(format!("{recording_id}.csv"));
    let spath = segment_dir.join(format!("{recording_id}.json"));
    io::write_landmark_csv(&lpath, landmarks)?;
    io::write_aux_csv(&apath, pose, gaze)?;
    let mut segments = std::collections::BTreeMap::new();
    segments.insert("full".to_string(), (0usize, landmarks.frames.len()));
    io::write_segments_json(
        &spath,
        &SegmentMap {
            subject: recording_id.to_string(),
            frame_rate,
            segments,
        },
    )?;
    Ok((
        format!("landmarks/{recording_id}.csv"),
        format!("aux/{recording_id}.csv"),
        format!("segments/{recording_id}.json"),
    ))
}

fn write_dataset(cohort: &SyntheticCohort, out_dir: &Path) -> Result<CohortManifest> {
    let (landmark_dir, aux_dir, segment_dir) = dataset_paths(out_dir);
    std::fs::create_dir_all(&landmark_dir)?;
    std::fs::create_dir_all(&aux_dir)?;
    std::fs::create_dir_all(&segment_dir)?;

    let mut entries = Vec::with_capacity(cohort.subjects.len());
    for s in &cohort.subjects {
        let (lrel, arel, srel) = write_recording_files(
            &landmark_dir,
            &aux_dir,
            &segment_dir,
            &s.subject_id,
            &s.landmarks,
            &s.pose,
            &s.gaze,
            cohort.spec.frame_rate,
        )?;
        let (dis_l, dis_a) = match &s.discharge {
            Some(d) => {
                let id = Visit::Discharge.recording_id(&s.subject_id);
                let (dl, da, _) = write_recording_files(
                    &landmark_dir,
                    &aux_dir,
                    &segment_dir,
                    &id,
                    &d.landmarks,
                    &d.pose,
                    &d.gaze,
                    cohort.spec.frame_rate,
                )?;
                (Some(dl), Some(da))
            }
            None => (None, None),
        };
        entries.push(ManifestEntry {
            subject_id: s.subject_id.clone(),
            label: s.label,
            landmarks: lrel,
            aux: arel,
            segments: srel,
            hamd_in: s.hamd_in,
            hamd_out: s.hamd_out,
            treatment: s.treatment.iter().cloned().collect(),
            reaction_time_ms: s.reaction_time_ms,
            discharge_landmarks: dis_l,
            discharge_aux: dis_a,
        });
    }
    let manifest = CohortManifest {
        seed: cohort.spec.seed,
        frame_rate: cohort.spec.frame_rate,
        duration_s: cohort.spec.duration_s,
        subjects: entries,
    };
    io::write_manifest(&out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Load every recording named by a dataset manifest.
pub fn load_recordings(dataset: &Path, manifest: &CohortManifest) -> Result<Vec<RecordingInput>> {
    let mut recordings = Vec::new();
    for entry in &manifest.subjects {
        let seq = io::read_landmark_csv(
            &dataset.join(&entry.landmarks),
            manifest.frame_rate,
            &entry.subject_id,
            Segment::Full,
        )?;
        let (pose, gaze) = io::read_aux_csv(&dataset.join(&entry.aux))?;
        recordings.push(RecordingInput {
            subject_id: entry.subject_id.clone(),
            visit: Visit::Admission,
            landmarks: seq,
            pose,
            gaze,
        });
        if let (Some(dl), Some(da)) = (&entry.discharge_landmarks, &entry.discharge_aux) {
            let id = Visit::Discharge.recording_id(&entry.subject_id);
            let seq =
                io::read_landmark_csv(&dataset.join(dl), manifest.frame_rate, &id, Segment::Full)?;
            let (pose, gaze) = io::read_aux_csv(&dataset.join(da))?;
            recordings.push(RecordingInput {
                subject_id: entry.subject_id.clone(),
                visit: Visit::Discharge,
                landmarks: seq,
                pose,
                gaze,
            });
        }
    }
    Ok(recordings)
}

pub fn clinical_records(manifest: &CohortManifest) -> Vec<ClinicalRecord> {
    manifest
        .subjects
        .iter()
        .map(|e| ClinicalRecord {
            subject_id: e.subject_id.clone(),
            label: e.label,
            hamd_in: e.hamd_in,
            hamd_out: e.hamd_out,
            treatment: DVector::from_vec(e.treatment.clone()),
            reaction_time_ms: e.reaction_time_ms,
        })
        .collect()
}

/// Extract features for every recording in a dataset and write them out.
pub fn cmd_features(dataset: &Path, out_dir: &Path, cfg: &PipelineConfig) -> Result<()> {
    let manifest = io::read_manifest(&dataset.join("manifest.json"))?;
    let recordings = load_recordings(dataset, &manifest)?;
    let features = extract_features(&recordings, cfg)?;
    let hash = cfg.hash();
    std::fs::create_dir_all(out_dir)?;
    for f in &features {
        let id = f.recording_id();
        io::write_features(
            &out_dir.join(format!("{id}.feat")),
            &FeatureFile {
                subject_id: id.clone(),
                segment: cfg.segment,
                config_hash: hash.clone(),
                low_variance: f.low_variance,
                data: f.atoms.clone(),
            },
        )?;
        if !f.degenerate_frames.is_empty() {
            io::write_degenerate_report(
                &out_dir.join(format!("{id}.degenerate.json")),
                &id,
                &f.degenerate_frames,
            )?;
        }
    }
    Ok(())
}

fn recording_ids(manifest: &CohortManifest) -> Vec<(String, Visit, String)> {
    let mut ids = Vec::new();
    for e in &manifest.subjects {
        ids.push((e.subject_id.clone(), Visit::Admission, e.subject_id.clone()));
        if e.discharge_landmarks.is_some() {
            ids.push((
                e.subject_id.clone(),
                Visit::Discharge,
                Visit::Discharge.recording_id(&e.subject_id),
            ));
        }
    }
    ids
}

/// Read previously extracted features, verifying config hashes.
pub fn load_features(
    dataset: &Path,
    feature_dir: &Path,
    cfg: &PipelineConfig,
) -> Result<Vec<RecordingFeatures>> {
    let manifest = io::read_manifest(&dataset.join("manifest.json"))?;
    let hash = cfg.hash();
    let mut out = Vec::new();
    for (subject_id, visit, id) in recording_ids(&manifest) {
        let path = feature_dir.join(format!("{id}.feat"));
        let file = io::read_features(&path)?;
        check_hash(&path.display().to_string(), &file.config_hash, &hash)?;
        out.push(RecordingFeatures {
            subject_id,
            visit,
            atoms: file.data,
            low_variance: file.low_variance,
            degenerate_frames: Vec::new(),
        });
    }
    Ok(out)
}

/// Train the background model from stored features.
pub fn cmd_train_ubm(
    dataset: &Path,
    feature_dir: &Path,
    model_path: &Path,
    cfg: &PipelineConfig,
) -> Result<()> {
    let features = load_features(dataset, feature_dir, cfg)?;
    let model = train_background(&features, cfg)?;
    io::write_model(
        &model_path_checked(model_path)?,
        &model,
        cfg.seed,
        cfg.variance_floor_frac,
        &cfg.hash(),
    )
}

fn model_path_checked(path: &Path) -> Result<std::path::PathBuf> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(path.to_path_buf())
}

/// MAP-adapt every recording and write supervector files.
pub fn cmd_adapt(
    dataset: &Path,
    feature_dir: &Path,
    model_path: &Path,
    out_dir: &Path,
    cfg: &PipelineConfig,
) -> Result<()> {
    let (model, model_hash) = io::read_model(model_path)?;
    check_hash(&model_path.display().to_string(), &model_hash, &cfg.hash())?;
    let features = load_features(dataset, feature_dir, cfg)?;
    std::fs::create_dir_all(out_dir)?;
    for f in &features {
        let (sv, _) = adapt_recording(&model, f, cfg)?;
        io::write_supervector(
            &out_dir.join(format!("{}.sv", f.recording_id())),
            &sv,
            &cfg.hash(),
        )?;
    }
    Ok(())
}

/// Load supervectors for the given recording identifiers.
pub fn load_supervectors(
    sv_dir: &Path,
    ids: &[String],
    cfg: &PipelineConfig,
) -> Result<Vec<Supervector>> {
    let hash = cfg.hash();
    let mut out = Vec::new();
    for id in ids {
        let path = sv_dir.join(format!("{id}.sv"));
        let (sv, sv_hash) = io::read_supervector(&path)?;
        check_hash(&path.display().to_string(), &sv_hash, &hash)?;
        out.push(sv);
    }
    Ok(out)
}

/// Kernel matrix over all admission recordings.
pub fn cmd_kernel_matrix(
    dataset: &Path,
    sv_dir: &Path,
    out_path: &Path,
    cfg: &PipelineConfig,
) -> Result<()> {
    let manifest = io::read_manifest(&dataset.join("manifest.json"))?;
    let ids: Vec<String> = manifest
        .subjects
        .iter()
        .map(|e| e.subject_id.clone())
        .collect();
    let svs = load_supervectors(sv_dir, &ids, cfg)?;
    let k = kernel_matrix(&svs)?;
    io::write_kernel_csv(&model_path_checked(out_path)?, &ids, &k)
}

/// Run leave-one-subject-out evaluation for all four targets.
pub fn cmd_cv(
    dataset: &Path,
    sv_dir: &Path,
    out_dir: &Path,
    cfg: &PipelineConfig,
) -> Result<Vec<CvReport>> {
    let manifest = io::read_manifest(&dataset.join("manifest.json"))?;
    let clinical = clinical_records(&manifest);
    let ids: Vec<String> = clinical.iter().map(|c| c.subject_id.clone()).collect();
    let svs = load_supervectors(sv_dir, &ids, cfg)?;
    std::fs::create_dir_all(out_dir)?;
    let mut reports = Vec::new();
    for target in CvTarget::all() {
        let report = run_cv(&svs, &clinical, target, cfg)?;
        io::write_cv_report_json(
            &out_dir.join(format!("cv_{}.json", target.name())),
            &report,
            &cfg.hash(),
        )?;
        io::write_cv_report_csv(&out_dir.join(format!("cv_{}.csv", target.name())), &report)?;
        reports.push(report);
    }
    Ok(reports)
}

/// Counterfactual analysis over the patient subset.
pub fn cmd_causal(
    dataset: &Path,
    sv_dir: &Path,
    out_dir: &Path,
    cfg: &PipelineConfig,
) -> Result<CausalAnalysis> {
    let manifest = io::read_manifest(&dataset.join("manifest.json"))?;
    let clinical = clinical_records(&manifest);
    let ids: Vec<String> = clinical.iter().map(|c| c.subject_id.clone()).collect();
    let svs = load_supervectors(sv_dir, &ids, cfg)?;
    let analysis = causal_analysis(&svs, &clinical, cfg)?;
    std::fs::create_dir_all(out_dir)?;

    let mut records = Vec::new();
    let mut clinical_counts = vec![0usize; TREATMENT_CATEGORIES];
    let mut recommended_counts = vec![0usize; TREATMENT_CATEGORIES];
    for (subject, result) in &analysis.per_subject {
        let clin = clinical
            .iter()
            .find(|c| &c.subject_id == subject)
            .expect("analysis subject missing from manifest");
        for c in 0..TREATMENT_CATEGORIES {
            if clin.treatment[c] > 0.0 {
                clinical_counts[c] += 1;
            }
            if result.treatment[c] > 0.0 {
                recommended_counts[c] += 1;
            }
        }
        records.push(RecommendationRecord {
            subject: subject.clone(),
            clinical: clin.treatment.iter().cloned().collect(),
            recommended: result.treatment.clone(),
            predicted_hamd_out: result.predicted_hamd_out,
            feasible: result.feasible,
        });
    }
    io::write_recommendations_json(&out_dir.join("recommendations.json"), &records, &cfg.hash())?;
    io::write_category_csv(
        &out_dir.join("categories.csv"),
        &TREATMENT_LABELS,
        &clinical_counts,
        &recommended_counts,
    )?;
    Ok(analysis)
}

/// Summary report: control-mean dot-product trajectories and the
/// Wasserstein-vs-reaction-time table.
pub fn cmd_report(
    dataset: &Path,
    feature_dir: &Path,
    model_path: &Path,
    sv_dir: &Path,
    out_dir: &Path,
    cfg: &PipelineConfig,
) -> Result<()> {
    let manifest = io::read_manifest(&dataset.join("manifest.json"))?;
    let clinical = clinical_records(&manifest);
    let (model, model_hash) = io::read_model(model_path)?;
    check_hash(&model_path.display().to_string(), &model_hash, &cfg.hash())?;
    let features = load_features(dataset, feature_dir, cfg)?;
    std::fs::create_dir_all(out_dir)?;

    let all_ids: Vec<String> = features.iter().map(|f| f.recording_id()).collect();
    let svs = load_supervectors(sv_dir, &all_ids, cfg)?;
    let find_sv = |id: &str| svs.iter().find(|s| s.subject_id == id);

    // control anchor: admission supervectors of all controls
    let controls: Vec<Supervector> = clinical
        .iter()
        .filter(|c| !c.is_patient())
        .filter_map(|c| find_sv(&c.subject_id).cloned())
        .collect();

    let mut trajectories = Vec::new();
    for c in clinical.iter().filter(|c| c.is_patient()) {
        let adm = find_sv(&c.subject_id)
            .ok_or_else(|| OegError::MissingArtifact(format!("supervector {}", c.subject_id)))?;
        let adm_dot = crate::ubm::control_mean_dot(adm, &controls)?;
        let dis_id = Visit::Discharge.recording_id(&c.subject_id);
        let dis_dot = match find_sv(&dis_id) {
            Some(dis) => Some(crate::ubm::control_mean_dot(dis, &controls)?),
            None => None,
        };
        trajectories.push(serde_json::json!({
            "subject": c.subject_id,
            "admission_dot": adm_dot,
            "discharge_dot": dis_dot,
            "responder": gpr::responder_label(c.hamd_in as f64, c.hamd_out.max(1).min(c.hamd_in) as f64).ok(),
        }));
    }

    // Wasserstein distance of the adapted weights vs. planted reaction times
    let mut wasserstein_rows = Vec::new();
    let mut wd_values = Vec::new();
    let mut rt_values = Vec::new();
    for c in &clinical {
        let f = features
            .iter()
            .find(|f| f.subject_id == c.subject_id && f.visit == Visit::Admission)
            .ok_or_else(|| OegError::MissingArtifact(format!("features {}", c.subject_id)))?;
        let (_, adapted) = adapt_recording(&model, f, cfg)?;
        let wd = weight_wasserstein(&model, &adapted)?;
        if let Some(rt) = c.reaction_time_ms {
            wd_values.push(wd);
            rt_values.push(rt);
        }
        wasserstein_rows.push((c.subject_id.clone(), wd, c.reaction_time_ms));
    }
    let rt_correlation = if rt_values.len() >= 2 {
        gpr::pearson(
            &DVector::from_vec(wd_values.clone()),
            &DVector::from_vec(rt_values.clone()),
        )
        .ok()
    } else {
        None
    };

    let mut csv = String::from("subject,wasserstein,reaction_time_ms\n");
    for (id, wd, rt) in &wasserstein_rows {
        use std::fmt::Write as _;
        let rt = rt.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(csv, "{id},{wd},{rt}");
    }
    std::fs::write(out_dir.join("wasserstein_rt.csv"), csv)?;

    let report = serde_json::json!({
        "config_hash": cfg.hash(),
        "control_mean_trajectories": trajectories,
        "wasserstein_reaction_time_pearson": rt_correlation,
        "n_controls": controls.len(),
    });
    std::fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    Ok(())
}
