//! Runtime configuration: defaults, a flat `key = value` file format, and
//! validation. Unknown and repeated keys are errors — a typo in a tuning
//! file should fail loudly, not silently run with defaults.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::minutiae::FalseMinutiaeConfig;

/// Name of the environment variable consulted when no config path is given.
pub const CONFIG_ENV_VAR: &str = "FPMATCH_CONFIG";

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// Target mean gray level for normalization.
    pub target_mean: f64,
    /// Target gray-level variance for normalization.
    pub target_var: f64,
    /// Block edge (pixels) for ROI segmentation.
    pub roi_block_size: usize,
    /// Minimum block variance for a block to count as foreground.
    pub roi_var_threshold: f64,
    /// Block edge (pixels) for local-mean binarization.
    pub binarize_block_size: usize,
    /// Maximum steps when tracing a ridge to estimate direction.
    pub trace_len: u32,
    pub false_minutiae: FalseMinutiaeConfig,
    /// Crop grid dimensions and per-crop size for partial generation.
    pub crop_rows: u32,
    pub crop_cols: u32,
    pub crop_width: u32,
    pub crop_height: u32,
    /// Threshold sweep for evaluation: inclusive bounds and step.
    pub sweep_lo: f64,
    pub sweep_hi: f64,
    pub sweep_step: f64,
    /// Fraction of gallery subjects a probe must beat to be flagged as a
    /// potential MasterPrint.
    pub masterprint_fraction: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            target_mean: 128.0,
            target_var: 2000.0,
            roi_block_size: 16,
            roi_var_threshold: 100.0,
            binarize_block_size: 16,
            trace_len: 10,
            false_minutiae: FalseMinutiaeConfig::default(),
            crop_rows: 4,
            crop_cols: 5,
            crop_width: 150,
            crop_height: 150,
            sweep_lo: 0.0,
            sweep_hi: 0.2,
            sweep_step: 0.001,
            masterprint_fraction: 0.04,
        }
    }
}

impl Config {
    /// Parse a flat `key = value` text. `#` starts a comment; blank lines
    /// are skipped. Every key must be known and appear at most once.
    pub fn from_str(text: &str) -> Result<Config> {
        let mut cfg = Config::default();
        let mut seen: HashSet<String> = HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, '=');
            let key = parts.next().unwrap_or("").trim();
            let value = match parts.next() {
                Some(v) => v.trim(),
                None => {
                    return Err(Error::Config(format!(
                        "line {}: expected `key = value`, got {:?}",
                        lineno + 1,
                        line
                    )))
                }
            };
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!(
                    "line {}: duplicate key {:?}",
                    lineno + 1,
                    key
                )));
            }
            cfg.set(key, value).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {}: {}", lineno + 1, msg)),
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load and validate a config file.
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::from_str(&text)
    }

    /// Resolve the effective config: an explicit path wins, then the
    /// `FPMATCH_CONFIG` environment variable, then built-in defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Config> {
        if let Some(p) = explicit {
            return Config::load(p);
        }
        if let Ok(p) = std::env::var(CONFIG_ENV_VAR) {
            if !p.is_empty() {
                return Config::load(Path::new(&p));
            }
        }
        Ok(Config::default())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("invalid value {:?} for key {:?}", value, key)))
        }
        match key {
            "target_mean" => self.target_mean = parse(key, value)?,
            "target_var" => self.target_var = parse(key, value)?,
            "roi_block_size" => self.roi_block_size = parse(key, value)?,
            "roi_var_threshold" => self.roi_var_threshold = parse(key, value)?,
            "binarize_block_size" => self.binarize_block_size = parse(key, value)?,
            "trace_len" => self.trace_len = parse(key, value)?,
            "edge_dist" => self.false_minutiae.edge_dist = parse(key, value)?,
            "break_dist" => self.false_minutiae.break_dist = parse(key, value)?,
            "break_angle" => self.false_minutiae.break_angle = parse(key, value)?,
            "spur_len" => self.false_minutiae.spur_len = parse(key, value)?,
            "bridge_len" => self.false_minutiae.bridge_len = parse(key, value)?,
            "bridge_angle" => self.false_minutiae.bridge_angle = parse(key, value)?,
            "hole_len" => self.false_minutiae.hole_len = parse(key, value)?,
            "crop_rows" => self.crop_rows = parse(key, value)?,
            "crop_cols" => self.crop_cols = parse(key, value)?,
            "crop_width" => self.crop_width = parse(key, value)?,
            "crop_height" => self.crop_height = parse(key, value)?,
            "sweep_lo" => self.sweep_lo = parse(key, value)?,
            "sweep_hi" => self.sweep_hi = parse(key, value)?,
            "sweep_step" => self.sweep_step = parse(key, value)?,
            "masterprint_fraction" => self.masterprint_fraction = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {:?}", key))),
        }
        Ok(())
    }

    /// Check every field for a usable range.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.target_mean >= 0.0 && self.target_mean <= 255.0) {
            return bad(format!("target_mean {} outside [0, 255]", self.target_mean));
        }
        if !(self.target_var > 0.0) {
            return bad(format!("target_var {} must be positive", self.target_var));
        }
        if self.roi_block_size < 4 {
            return bad(format!("roi_block_size {} below 4", self.roi_block_size));
        }
        if self.binarize_block_size < 4 {
            return bad(format!(
                "binarize_block_size {} below 4",
                self.binarize_block_size
            ));
        }
        if !(self.roi_var_threshold >= 0.0) {
            return bad(format!(
                "roi_var_threshold {} must be non-negative",
                self.roi_var_threshold
            ));
        }
        if self.trace_len < 3 {
            return bad(format!(
                "trace_len {} below 3 (directions need 3 trace steps)",
                self.trace_len
            ));
        }
        let fm = &self.false_minutiae;
        if !(fm.break_dist >= 0.0) {
            return bad(format!("break_dist {} must be non-negative", fm.break_dist));
        }
        if !(fm.break_angle >= 0.0 && fm.break_angle <= 180.0) {
            return bad(format!("break_angle {} outside [0, 180]", fm.break_angle));
        }
        if !(fm.bridge_angle > 0.0 && fm.bridge_angle <= 90.0) {
            return bad(format!("bridge_angle {} outside (0, 90]", fm.bridge_angle));
        }
        if fm.spur_len == 0 || fm.bridge_len == 0 || fm.hole_len == 0 {
            return bad("spur_len, bridge_len and hole_len must be at least 1".into());
        }
        if self.crop_rows == 0 || self.crop_cols == 0 {
            return bad("crop grid needs at least one row and one column".into());
        }
        if self.crop_width == 0 || self.crop_height == 0 {
            return bad("crop dimensions must be positive".into());
        }
        if !(self.sweep_step > 0.0) {
            return bad(format!("sweep_step {} must be positive", self.sweep_step));
        }
        if !(self.sweep_lo >= 0.0 && self.sweep_hi <= 1.0 && self.sweep_lo <= self.sweep_hi) {
            return bad(format!(
                "sweep range [{}, {}] must satisfy 0 <= lo <= hi <= 1",
                self.sweep_lo, self.sweep_hi
            ));
        }
        if !(self.masterprint_fraction > 0.0 && self.masterprint_fraction <= 1.0) {
            return bad(format!(
                "masterprint_fraction {} outside (0, 1]",
                self.masterprint_fraction
            ));
        }
        Ok(())
    }

    /// Crop-grid geometry drawn from the `crop_*` keys.
    pub fn crop_spec(&self) -> crate::gallery::CropSpec {
        crate::gallery::CropSpec {
            rows: self.crop_rows,
            cols: self.crop_cols,
            crop_w: self.crop_width,
            crop_h: self.crop_height,
        }
    }

    /// Thresholds of the evaluation sweep, ascending, both ends inclusive.
    pub fn sweep_thresholds(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0u64;
        loop {
            let t = self.sweep_lo + self.sweep_step * k as f64;
            if t > self.sweep_hi + self.sweep_step * 1e-9 {
                break;
            }
            out.push(t.min(self.sweep_hi));
            k += 1;
        }
        out
    }
}
