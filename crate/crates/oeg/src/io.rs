//! On-disk artifact formats.
//!
//! Binary artifacts share one container layout: a single-line JSON header,
//! a newline, an 8-byte magic, then little-endian float64 payloads. Tabular
//! artifacts are plain CSV; cohort metadata is JSON.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read as _, Write as _};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{OegError, Result};
use crate::gpr::CvReport;
use crate::manifold::{LandmarkFrame, LandmarkSequence, Segment};
use crate::synth::RegimeLabel;
use crate::ubm::{GmmModel, Supervector};

pub const FEATURE_MAGIC: &[u8; 8] = b"OEGFEAT1";
pub const MODEL_MAGIC: &[u8; 8] = b"OEGGMM01";
pub const MODEL_VERSION: u32 = 1;

fn format_err(path: &Path, msg: impl Into<String>) -> OegError {
    OegError::Format {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

/// Write the shared container: header JSON, newline, magic, payload.
fn write_container(
    path: &Path,
    header: &serde_json::Value,
    magic: &[u8; 8],
    payload: &[f64],
) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    serde_json::to_writer(&mut file, header)?;
    file.write_all(b"\n")?;
    file.write_all(magic)?;
    let mut bytes = Vec::with_capacity(payload.len() * 8);
    for v in payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    file.write_all(&bytes)?;
    Ok(())
}

/// Read the shared container back; checks the magic and payload length.
fn read_container(path: &Path, magic: &[u8; 8]) -> Result<(serde_json::Value, Vec<f64>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|_| OegError::MissingArtifact(path.display().to_string()))?
        .read_to_end(&mut bytes)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| format_err(path, "missing header terminator"))?;
    let header: serde_json::Value = serde_json::from_slice(&bytes[..newline])?;
    let body = &bytes[newline + 1..];
    if body.len() < 8 || &body[..8] != magic {
        return Err(format_err(path, "bad magic"));
    }
    let payload = &body[8..];
    if payload.len() % 8 != 0 {
        return Err(format_err(path, "truncated float payload"));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, values))
}

fn header_str<'a>(h: &'a serde_json::Value, key: &str, path: &Path) -> Result<&'a str> {
    h.get(key)
        .and_then(|v| v.as_str())
        .ok_or_else(|| format_err(path, format!("header field `{key}` missing")))
}

fn header_u64(h: &serde_json::Value, key: &str, path: &Path) -> Result<u64> {
    h.get(key)
        .and_then(|v| v.as_u64())
        .ok_or_else(|| format_err(path, format!("header field `{key}` missing")))
}

fn parse_segment(s: &str, path: &Path) -> Result<Segment> {
    Segment::parse(s).ok_or_else(|| format_err(path, format!("unknown segment `{s}`")))
}

// ---------------------------------------------------------------------------
// landmark CSV

/// Write a landmark sequence as `frame,landmark,x,y[,z]` rows.
pub fn write_landmark_csv(path: &Path, seq: &LandmarkSequence) -> Result<()> {
    let d = seq
        .frames
        .first()
        .map(|f| f.points.ncols())
        .ok_or_else(|| OegError::InvalidInput("empty sequence".into()))?;
    let mut out = String::new();
    out.push_str(if d == 2 {
        "frame,landmark,x,y\n"
    } else {
        "frame,landmark,x,y,z\n"
    });
    for (t, frame) in seq.frames.iter().enumerate() {
        for l in 0..frame.points.nrows() {
            let _ = write!(out, "{t},{l}");
            for c in 0..d {
                let _ = write!(out, ",{}", frame.points[(l, c)]);
            }
            out.push('\n');
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read a landmark CSV; frames must be contiguous from 0 with a fixed
/// landmark count.
pub fn read_landmark_csv(
    path: &Path,
    frame_rate: f64,
    subject_id: &str,
    segment: Segment,
) -> Result<LandmarkSequence> {
    let text = std::fs::read_to_string(path)
        .map_err(|_| OegError::MissingArtifact(path.display().to_string()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| format_err(path, "empty file"))?;
    let d = match header.trim() {
        "frame,landmark,x,y" => 2,
        "frame,landmark,x,y,z" => 3,
        other => return Err(format_err(path, format!("unexpected header `{other}`"))),
    };
    let mut rows: Vec<(usize, usize, Vec<f64>)> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 + d {
            return Err(format_err(
                path,
                format!("line {}: expected {} fields", lineno + 2, 2 + d),
            ));
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| format_err(path, format!("line {}: bad number `{s}`", lineno + 2)))
        };
        let frame = parse(fields[0])? as usize;
        let landmark = parse(fields[1])? as usize;
        let coords = fields[2..]
            .iter()
            .map(|s| parse(s))
            .collect::<Result<Vec<f64>>>()?;
        rows.push((frame, landmark, coords));
    }
    if rows.is_empty() {
        return Err(format_err(path, "no landmark rows"));
    }
    let num_frames = rows.iter().map(|r| r.0).max().unwrap() + 1;
    let num_landmarks = rows.iter().map(|r| r.1).max().unwrap() + 1;
    if rows.len() != num_frames * num_landmarks {
        return Err(format_err(
            path,
            format!(
                "expected {} rows for {num_frames} frames x {num_landmarks} landmarks, got {}",
                num_frames * num_landmarks,
                rows.len()
            ),
        ));
    }
    let mut frames = vec![DMatrix::zeros(num_landmarks, d); num_frames];
    for (frame, landmark, coords) in rows {
        for (c, v) in coords.iter().enumerate() {
            frames[frame][(landmark, c)] = *v;
        }
    }
    let frames = frames
        .into_iter()
        .map(LandmarkFrame::new)
        .collect::<Result<Vec<_>>>()?;
    LandmarkSequence::new(frames, frame_rate, subject_id, segment)
}

// ---------------------------------------------------------------------------
// auxiliary channels CSV

/// Write pose (T×3) and gaze (T×2) channels side by side.
pub fn write_aux_csv(path: &Path, pose: &DMatrix<f64>, gaze: &DMatrix<f64>) -> Result<()> {
    if pose.nrows() != gaze.nrows() {
        return Err(OegError::InvalidInput(
            "pose and gaze lengths differ".into(),
        ));
    }
    let mut out = String::from("frame,pose_1,pose_2,pose_3,gaze_1,gaze_2\n");
    for t in 0..pose.nrows() {
        let _ = write!(out, "{t}");
        for c in 0..3 {
            let _ = write!(out, ",{}", pose[(t, c)]);
        }
        for c in 0..2 {
            let _ = write!(out, ",{}", gaze[(t, c)]);
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_aux_csv(path: &Path) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|_| OegError::MissingArtifact(path.display().to_string()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| format_err(path, "empty file"))?;
    if header.trim() != "frame,pose_1,pose_2,pose_3,gaze_1,gaze_2" {
        return Err(format_err(path, "unexpected header"));
    }
    let mut pose_rows = Vec::new();
    let mut gaze_rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(format_err(
                path,
                format!("line {}: expected 6 fields", lineno + 2),
            ));
        }
        let vals = fields[1..]
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| format_err(path, format!("line {}: bad number `{s}`", lineno + 2)))
            })
            .collect::<Result<Vec<f64>>>()?;
        pose_rows.push([vals[0], vals[1], vals[2]]);
        gaze_rows.push([vals[3], vals[4]]);
    }
    let t = pose_rows.len();
    let pose = DMatrix::from_fn(t, 3, |r, c| pose_rows[r][c]);
    let gaze = DMatrix::from_fn(t, 2, |r, c| gaze_rows[r][c]);
    Ok((pose, gaze))
}

// ---------------------------------------------------------------------------
// segments JSON

/// Frame ranges of the recording phases, `name -> [start, end)`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SegmentMap {
    pub subject: String,
    pub frame_rate: f64,
    pub segments: BTreeMap<String, (usize, usize)>,
}

pub fn write_segments_json(path: &Path, map: &SegmentMap) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(map)?)?;
    Ok(())
}

pub fn read_segments_json(path: &Path) -> Result<SegmentMap> {
    let text = std::fs::read_to_string(path)
        .map_err(|_| OegError::MissingArtifact(path.display().to_string()))?;
    Ok(serde_json::from_str(&text)?)
}

// ---------------------------------------------------------------------------
// cohort manifest

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub label: RegimeLabel,
    pub landmarks: String,
    pub aux: String,
    pub segments: String,
    pub hamd_in: u32,
    pub hamd_out: u32,
    pub treatment: Vec<f64>,
    pub reaction_time_ms: Option<f64>,
    #[serde(default)]
    pub discharge_landmarks: Option<String>,
    #[serde(default)]
    pub discharge_aux: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortManifest {
    pub seed: u64,
    pub frame_rate: f64,
    pub duration_s: f64,
    pub subjects: Vec<ManifestEntry>,
}

pub fn write_manifest(path: &Path, manifest: &CohortManifest) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(manifest)?)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<CohortManifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|_| OegError::MissingArtifact(path.display().to_string()))?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e.to_string()))
}

// ---------------------------------------------------------------------------
// feature files (OEGFEAT1)

/// One recording's windowed feature atoms.
#[derive(Debug, Clone)]
pub struct FeatureFile {
    pub subject_id: String,
    pub segment: Segment,
    pub config_hash: String,
    /// Recording carried almost no shape motion.
    pub low_variance: bool,
    /// num_windows × width atom matrix.
    pub data: DMatrix<f64>,
}

pub fn write_features(path: &Path, f: &FeatureFile) -> Result<()> {
    let header = json!({
        "kind": "features",
        "subject": f.subject_id,
        "segment": f.segment.as_str(),
        "num_windows": f.data.nrows(),
        "width": f.data.ncols(),
        "low_variance": f.low_variance,
        "config_hash": f.config_hash,
    });
    let payload: Vec<f64> = (0..f.data.nrows())
        .flat_map(|r| (0..f.data.ncols()).map(move |c| (r, c)))
        .map(|(r, c)| f.data[(r, c)])
        .collect();
    write_container(path, &header, FEATURE_MAGIC, &payload)
}

pub fn read_features(path: &Path) -> Result<FeatureFile> {
    let (header, payload) = read_container(path, FEATURE_MAGIC)?;
    let rows = header_u64(&header, "num_windows", path)? as usize;
    let cols = header_u64(&header, "width", path)? as usize;
    if payload.len() != rows * cols {
        return Err(format_err(path, "payload size does not match header"));
    }
    Ok(FeatureFile {
        subject_id: header_str(&header, "subject", path)?.to_string(),
        segment: parse_segment(header_str(&header, "segment", path)?, path)?,
        config_hash: header_str(&header, "config_hash", path)?.to_string(),
        low_variance: header
            .get("low_variance")
            .and_then(|v| v.as_bool())
            .unwrap_or(false),
        data: DMatrix::from_fn(rows, cols, |r, c| payload[r * cols + c]),
    })
}

// ---------------------------------------------------------------------------
// mixture model files (OEGGMM01)

pub fn write_model(
    path: &Path,
    model: &GmmModel,
    seed: u64,
    floor_frac: f64,
    config_hash: &str,
) -> Result<()> {
    let c = model.components();
    let q = model.dim();
    let header = json!({
        "kind": "gmm",
        "components": c,
        "dim": q,
        "floor_frac": floor_frac,
        "seed": seed,
        "version": MODEL_VERSION,
        "config_hash": config_hash,
    });
    let mut payload = Vec::with_capacity(c + 2 * c * q);
    payload.extend(model.weights.iter());
    for r in 0..c {
        for col in 0..q {
            payload.push(model.means[(r, col)]);
        }
    }
    for r in 0..c {
        for col in 0..q {
            payload.push(model.variances[(r, col)]);
        }
    }
    write_container(path, &header, MODEL_MAGIC, &payload)
}

pub fn read_model(path: &Path) -> Result<(GmmModel, String)> {
    let (header, payload) = read_container(path, MODEL_MAGIC)?;
    let c = header_u64(&header, "components", path)? as usize;
    let q = header_u64(&header, "dim", path)? as usize;
    if payload.len() != c + 2 * c * q {
        return Err(format_err(path, "payload size does not match header"));
    }
    let weights = DVector::from_fn(c, |i, _| payload[i]);
    let means = DMatrix::from_fn(c, q, |r, col| payload[c + r * q + col]);
    let variances = DMatrix::from_fn(c, q, |r, col| payload[c + c * q + r * q + col]);
    let hash = header_str(&header, "config_hash", path)?.to_string();
    Ok((
        GmmModel {
            weights,
            means,
            variances,
        },
        hash,
    ))
}

// ---------------------------------------------------------------------------
// supervector files

pub fn write_supervector(path: &Path, sv: &Supervector, config_hash: &str) -> Result<()> {
    let header = json!({
        "kind": "supervector",
        "subject": sv.subject_id,
        "segment": sv.segment.as_str(),
        "prior_id": sv.prior_id(),
        "len": sv.values.len(),
        "config_hash": config_hash,
    });
    let payload: Vec<f64> = sv.values.iter().cloned().collect();
    write_container(path, &header, FEATURE_MAGIC, &payload)
}

pub fn read_supervector(path: &Path) -> Result<(Supervector, String)> {
    let (header, payload) = read_container(path, FEATURE_MAGIC)?;
    let len = header_u64(&header, "len", path)? as usize;
    if payload.len() != len {
        return Err(format_err(path, "payload size does not match header"));
    }
    let sv = Supervector::new(
        DVector::from_vec(payload),
        header_str(&header, "subject", path)?.to_string(),
        parse_segment(header_str(&header, "segment", path)?, path)?,
        header_u64(&header, "prior_id", path)?,
    );
    let hash = header_str(&header, "config_hash", path)?.to_string();
    Ok((sv, hash))
}

// ---------------------------------------------------------------------------
// reports

pub fn write_cv_report_json(path: &Path, report: &CvReport, config_hash: &str) -> Result<()> {
    let mut value = serde_json::to_value(report)?;
    value["config_hash"] = json!(config_hash);
    std::fs::write(path, serde_json::to_string_pretty(&value)?)?;
    Ok(())
}

pub fn write_cv_report_csv(path: &Path, report: &CvReport) -> Result<()> {
    let mut out = String::from("subject,y_true,y_pred\n");
    for p in &report.per_subject {
        let _ = writeln!(out, "{},{},{}", p.id, p.y_true, p.y_pred);
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Symmetric kernel matrix with subject labels.
pub fn write_kernel_csv(path: &Path, ids: &[String], k: &DMatrix<f64>) -> Result<()> {
    if k.nrows() != ids.len() || k.ncols() != ids.len() {
        return Err(OegError::InvalidInput("kernel shape mismatch".into()));
    }
    let mut out = String::from("subject");
    for id in ids {
        let _ = write!(out, ",{id}");
    }
    out.push('\n');
    for (r, id) in ids.iter().enumerate() {
        let _ = write!(out, "{id}");
        for c in 0..ids.len() {
            let _ = write!(out, ",{}", k[(r, c)]);
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// JSON list of frame indices whose shape was degenerate.
pub fn write_degenerate_report(path: &Path, subject: &str, frames: &[usize]) -> Result<()> {
    let value = json!({ "subject": subject, "frames": frames });
    std::fs::write(path, serde_json::to_string_pretty(&value)?)?;
    Ok(())
}

/// One subject's counterfactual recommendation, serialization shape of the
/// recommendations report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecommendationRecord {
    pub subject: String,
    pub clinical: Vec<f64>,
    pub recommended: Vec<f64>,
    pub predicted_hamd_out: f64,
    pub feasible: bool,
}

pub fn write_recommendations_json(
    path: &Path,
    records: &[RecommendationRecord],
    config_hash: &str,
) -> Result<()> {
    let value = json!({
        "config_hash": config_hash,
        "recommendations": records,
    });
    std::fs::write(path, serde_json::to_string_pretty(&value)?)?;
    Ok(())
}

/// Per-category prescription frequencies, clinical vs. recommended.
pub fn write_category_csv(
    path: &Path,
    labels: &[&str],
    clinical_counts: &[usize],
    recommended_counts: &[usize],
) -> Result<()> {
    let mut out = String::from("category,clinical,recommended\n");
    for (i, name) in labels.iter().enumerate() {
        let _ = writeln!(
            out,
            "{name},{},{}",
            clinical_counts[i], recommended_counts[i]
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{base_face, NUM_LANDMARKS};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn landmark_csv_roundtrip_exact() {
        let dir = tmp();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frames: Vec<LandmarkFrame> = (0..5)
            .map(|_| {
                let mut p = base_face();
                for v in p.iter_mut() {
                    *v += rng.gen_range(-0.01..0.01);
                }
                LandmarkFrame::new(p).unwrap()
            })
            .collect();
        let seq = LandmarkSequence::new(frames, 25.0, "s1", Segment::Full).unwrap();
        let path = dir.path().join("s1.csv");
        write_landmark_csv(&path, &seq).unwrap();
        let back = read_landmark_csv(&path, 25.0, "s1", Segment::Full).unwrap();
        assert_eq!(back.frames.len(), 5);
        for (a, b) in seq.frames.iter().zip(&back.frames) {
            // shortest-roundtrip float formatting is exact
            assert_eq!(a.points, b.points);
        }
        assert_eq!(back.frames[0].points.nrows(), NUM_LANDMARKS);
    }

    #[test]
    fn landmark_csv_rejects_ragged_rows() {
        let dir = tmp();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "frame,landmark,x,y\n0,0,1.0,2.0\n0,1,3.0\n").unwrap();
        assert!(matches!(
            read_landmark_csv(&path, 25.0, "s", Segment::Full),
            Err(OegError::Format { .. })
        ));
    }

    #[test]
    fn aux_csv_roundtrip() {
        let dir = tmp();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pose = DMatrix::from_fn(7, 3, |_, _| rng.gen_range(-1.0..1.0));
        let gaze = DMatrix::from_fn(7, 2, |_, _| rng.gen_range(-1.0..1.0));
        let path = dir.path().join("aux.csv");
        write_aux_csv(&path, &pose, &gaze).unwrap();
        let (p2, g2) = read_aux_csv(&path).unwrap();
        assert_eq!(pose, p2);
        assert_eq!(gaze, g2);
    }

    #[test]
    fn feature_file_roundtrip() {
        let dir = tmp();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = FeatureFile {
            subject_id: "s9".into(),
            segment: Segment::Mimic,
            config_hash: "deadbeef".into(),
            low_variance: false,
            data: DMatrix::from_fn(4, 6, |_, _| rng.gen_range(-1.0..1.0)),
        };
        let path = dir.path().join("s9.feat");
        write_features(&path, &f).unwrap();
        let back = read_features(&path).unwrap();
        assert_eq!(back.subject_id, "s9");
        assert_eq!(back.segment, Segment::Mimic);
        assert_eq!(back.config_hash, "deadbeef");
        assert_eq!(back.data, f.data);
    }

    #[test]
    fn feature_file_bad_magic_rejected() {
        let dir = tmp();
        let path = dir.path().join("bad.feat");
        std::fs::write(&path, b"{\"kind\":\"features\"}\nNOTMAGIC").unwrap();
        assert!(matches!(read_features(&path), Err(OegError::Format { .. })));
    }

    #[test]
    fn model_file_roundtrip() {
        let dir = tmp();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = GmmModel {
            weights: DVector::from_fn(3, |_, _| 1.0 / 3.0),
            means: DMatrix::from_fn(3, 5, |_, _| rng.gen_range(-1.0..1.0)),
            variances: DMatrix::from_fn(3, 5, |_, _| rng.gen_range(0.5..2.0)),
        };
        let path = dir.path().join("ubm.gmm");
        write_model(&path, &model, 7, 0.01, "cafef00d").unwrap();
        let (back, hash) = read_model(&path).unwrap();
        assert_eq!(hash, "cafef00d");
        assert_eq!(back.weights, model.weights);
        assert_eq!(back.means, model.means);
        assert_eq!(back.variances, model.variances);
        assert_eq!(back.id(), model.id());
    }

    #[test]
    fn supervector_roundtrip() {
        let dir = tmp();
        let sv = Supervector::new(
            DVector::from_vec(vec![1.0, -2.5, 3.25]),
            "s2",
            Segment::Story,
            42,
        );
        let path = dir.path().join("s2.sv");
        write_supervector(&path, &sv, "beef").unwrap();
        let (back, hash) = read_supervector(&path).unwrap();
        assert_eq!(hash, "beef");
        assert_eq!(back.values, sv.values);
        assert_eq!(back.subject_id, "s2");
        assert_eq!(back.segment, Segment::Story);
        assert_eq!(back.prior_id(), 42);
    }

    #[test]
    fn missing_artifact_error_names_path() {
        let e = read_features(Path::new("/nonexistent/file.feat")).unwrap_err();
        match e {
            OegError::MissingArtifact(p) => assert!(p.contains("nonexistent")),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn manifest_and_segments_roundtrip() {
        let dir = tmp();
        let manifest = CohortManifest {
            seed: 7,
            frame_rate: 25.0,
            duration_s: 10.0,
            subjects: vec![ManifestEntry {
                subject_id: "c000".into(),
                label: RegimeLabel::Control,
                landmarks: "landmarks/c000.csv".into(),
                aux: "aux/c000.csv".into(),
                segments: "segments/c000.json".into(),
                hamd_in: 2,
                hamd_out: 1,
                treatment: vec![0.0; 11],
                reaction_time_ms: Some(260.0),
                discharge_landmarks: None,
                discharge_aux: None,
            }],
        };
        let path = dir.path().join("manifest.json");
        write_manifest(&path, &manifest).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back.subjects.len(), 1);
        assert_eq!(back.subjects[0].subject_id, "c000");
        assert_eq!(back.subjects[0].label, RegimeLabel::Control);

        let mut segments = BTreeMap::new();
        segments.insert("full".to_string(), (0usize, 250usize));
        let map = SegmentMap {
            subject: "c000".into(),
            frame_rate: 25.0,
            segments,
        };
        let spath = dir.path().join("c000.json");
        write_segments_json(&spath, &map).unwrap();
        assert_eq!(read_segments_json(&spath).unwrap(), map);
    }
}
