//! Pipeline configuration: flat key-value file, command-line overrides, and
//! a content hash embedded into every artifact so that mismatched stages
//! abort instead of silently mixing models.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{OegError, Result};
use crate::manifold::Segment;

/// All tunables of the pipeline, with desk-scale defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Analysis window length in seconds.
    pub window_length_s: f64,
    /// Window overlap in seconds.
    pub window_overlap_s: f64,
    /// Autoregression order per window.
    pub var_order: usize,
    /// Dimension of the reduced geodesic-velocity series.
    pub q1: usize,
    /// Dimension of the reduced coefficient atoms.
    pub q2: usize,
    /// Mixture components of the background model.
    pub ubm_components: usize,
    /// Relevance factor of the MAP adaptation.
    pub relevance: f64,
    /// EM iterations for background-model training.
    pub em_iters: usize,
    /// Variance floor as a fraction of the global per-dimension variance.
    pub variance_floor_frac: f64,
    /// Weight of the positive-definite block in the cone metric.
    pub manifold_k: f64,
    /// Numerical tolerance for degeneracy detection.
    pub manifold_eps: f64,
    /// Longest NaN gap (frames) bridged by interpolation.
    pub max_gap: usize,
    /// Bias (offset) variance of the regression kernel.
    pub gp_bias_var: f64,
    /// Observation noise variance of the regression kernel.
    pub gp_noise_var: f64,
    /// Tucker ranks over (features, treatments, severity).
    pub causal_rank_1: usize,
    pub causal_rank_2: usize,
    pub causal_rank_3: usize,
    /// Severity bins of the measurement tensor.
    pub severity_bins: usize,
    /// Reduced supervector dimension feeding the tensor.
    pub causal_feature_dim: usize,
    /// Largest number of simultaneously active treatment categories searched.
    pub max_active: usize,
    /// Master seed for every stochastic stage.
    pub seed: u64,
    /// Recording segment the pipeline operates on.
    pub segment: Segment,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            window_length_s: 10.0,
            window_overlap_s: 1.0,
            var_order: 3,
            q1: 16,
            q2: 64,
            ubm_components: 64,
            relevance: 16.0,
            em_iters: 50,
            variance_floor_frac: 0.01,
            manifold_k: 1.0,
            manifold_eps: 1e-8,
            max_gap: 5,
            gp_bias_var: 1.0,
            gp_noise_var: 0.1,
            causal_rank_1: 8,
            causal_rank_2: 8,
            causal_rank_3: 8,
            severity_bins: 13,
            causal_feature_dim: 32,
            max_active: 3,
            seed: 7,
            segment: Segment::Full,
        }
    }
}

impl PipelineConfig {
    /// Keys in canonical order; the hash is computed over this listing.
    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("window_length_s", format!("{}", self.window_length_s)),
            ("window_overlap_s", format!("{}", self.window_overlap_s)),
            ("var_order", format!("{}", self.var_order)),
            ("q1", format!("{}", self.q1)),
            ("q2", format!("{}", self.q2)),
            ("ubm_components", format!("{}", self.ubm_components)),
            ("relevance", format!("{}", self.relevance)),
            ("em_iters", format!("{}", self.em_iters)),
            (
                "variance_floor_frac",
                format!("{}", self.variance_floor_frac),
            ),
            ("manifold_k", format!("{}", self.manifold_k)),
            ("manifold_eps", format!("{}", self.manifold_eps)),
            ("max_gap", format!("{}", self.max_gap)),
            ("gp_bias_var", format!("{}", self.gp_bias_var)),
            ("gp_noise_var", format!("{}", self.gp_noise_var)),
            ("causal_rank_1", format!("{}", self.causal_rank_1)),
            ("causal_rank_2", format!("{}", self.causal_rank_2)),
            ("causal_rank_3", format!("{}", self.causal_rank_3)),
            ("severity_bins", format!("{}", self.severity_bins)),
            ("causal_feature_dim", format!("{}", self.causal_feature_dim)),
            ("max_active", format!("{}", self.max_active)),
            ("seed", format!("{}", self.seed)),
            ("segment", self.segment.as_str().to_string()),
        ]
    }

    /// Set one key from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| {
                OegError::InvalidInput(format!("cannot parse `{value}` for key `{key}`"))
            })
        }
        match key {
            "window_length_s" => self.window_length_s = num(key, value)?,
            "window_overlap_s" => self.window_overlap_s = num(key, value)?,
            "var_order" => self.var_order = num(key, value)?,
            "q1" => self.q1 = num(key, value)?,
            "q2" => self.q2 = num(key, value)?,
            "ubm_components" => self.ubm_components = num(key, value)?,
            "relevance" => self.relevance = num(key, value)?,
            "em_iters" => self.em_iters = num(key, value)?,
            "variance_floor_frac" => self.variance_floor_frac = num(key, value)?,
            "manifold_k" => self.manifold_k = num(key, value)?,
            "manifold_eps" => self.manifold_eps = num(key, value)?,
            "max_gap" => self.max_gap = num(key, value)?,
            "gp_bias_var" => self.gp_bias_var = num(key, value)?,
            "gp_noise_var" => self.gp_noise_var = num(key, value)?,
            "causal_rank_1" => self.causal_rank_1 = num(key, value)?,
            "causal_rank_2" => self.causal_rank_2 = num(key, value)?,
            "causal_rank_3" => self.causal_rank_3 = num(key, value)?,
            "severity_bins" => self.severity_bins = num(key, value)?,
            "causal_feature_dim" => self.causal_feature_dim = num(key, value)?,
            "max_active" => self.max_active = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "segment" => {
                self.segment = Segment::parse(value)
                    .ok_or_else(|| OegError::InvalidInput(format!("unknown segment `{value}`")))?
            }
            other => {
                return Err(OegError::InvalidInput(format!(
                    "unknown config key `{other}`"
                )))
            }
        }
        Ok(())
    }

    /// Load a flat `key = value` file over the defaults. Blank lines and
    /// `#` comments are ignored.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = PipelineConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| OegError::Format {
                path: path.display().to_string(),
                msg: format!("line {}: expected `key = value`", lineno + 1),
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| OegError::Format {
                    path: path.display().to_string(),
                    msg: format!("line {}: {e}", lineno + 1),
                })?;
        }
        Ok(cfg)
    }

    /// Canonical textual form (also valid as a config file).
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Hex SHA-256 of the canonical form; embedded in every artifact.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        hex::encode(digest)
    }
}

/// Abort unless an artifact's recorded config hash matches the current one.
pub fn check_hash(artifact: &str, found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(OegError::ConfigMismatch {
            artifact: artifact.to_string(),
            found: found.to_string(),
            expected: expected.to_string(),
        });
    }
    Ok(())
}
