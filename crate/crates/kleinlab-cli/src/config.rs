//! Run configuration shared by all subcommands. Every field can be given on
//! the command line or in a TOML file; flags override the file.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

/// Base-point density for counting statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LambdaConfig {
    /// Lebesgue probability on the cusp lattice cell (boundary observer) or
    /// on the whole sphere chart (interior observer).
    Cell,
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
}

/// Reference test set `A_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ShapeConfig {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Disk { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Subcommand path, e.g. `stats gaps`; informational in files.
    pub command: String,
    /// Builtin group name (`psl2z`, `hecke:<q>`, `schottky`, `apollonian`)
    /// or a path to a TOML group spec.
    pub group: String,
    /// Orbit base point `w` as `x_1, ..., x_{n-1}, y`.
    pub w: Vec<f64>,
    /// Observer `z` (interior mode), same layout as `w`.
    pub z: Vec<f64>,
    pub t: f64,
    pub s: f64,
    /// `ball` (interior observer) or `horoball` (boundary observer).
    pub mode: String,
    pub grid: Vec<f64>,
    /// Critical exponent override; defaults to the group's claimed value.
    pub delta: Option<f64>,
    /// Patterson parameter `s`; defaults to `δ + 0.05`.
    pub patterson_s: Option<f64>,
    pub fit_window: [f64; 2],
    pub fit_samples: usize,
    pub samples: usize,
    pub counts: Vec<Vec<u32>>,
    pub beta: Vec<f64>,
    pub l_cutoff: f64,
    /// Upper end of the depth integral in limit evaluations.
    pub r_max: Option<f64>,
    pub margin: f64,
    pub t_truncate: f64,
    pub nodes: usize,
    /// `[ξ_0, R_0]` for calibrating the pair-correlation limit.
    pub calibrate: Option<[f64; 2]>,
    pub curvature_bound: f64,
    pub eps_window: [f64; 2],
    pub seed: u64,
    /// Zero means one thread per core.
    pub threads: usize,
    pub output_dir: PathBuf,
    pub lambda: LambdaConfig,
    pub shapes: Vec<ShapeConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: String::new(),
            group: "psl2z".into(),
            w: vec![0.0, 2.0],
            z: vec![0.0, 1.0],
            t: 8.0,
            s: 0.0,
            mode: "ball".into(),
            grid: (1..=12).map(|k| 0.25 * k as f64).collect(),
            delta: None,
            patterson_s: None,
            fit_window: [4.0, 10.0],
            fit_samples: 13,
            samples: 10_000,
            counts: Vec::new(),
            beta: vec![1.0],
            l_cutoff: 10.0,
            r_max: None,
            margin: 2.0,
            t_truncate: 10.0,
            nodes: 4000,
            calibrate: None,
            curvature_bound: 1e4,
            eps_window: [1e-4, 1e-2],
            seed: 1,
            threads: 0,
            output_dir: PathBuf::from("."),
            lambda: LambdaConfig::Cell,
            shapes: vec![ShapeConfig::Box {
                lo: vec![0.0],
                hi: vec![1.0],
            }],
        }
    }
}

impl RunConfig {
    pub fn to_toml(&self) -> Result<String, toml::ser::Error> {
        toml::to_string(self)
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Range checks on the numeric parameters.
    pub fn validate(&self) -> Result<(), String> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} must be finite"))
            }
        };
        finite("t", self.t)?;
        if !(self.s >= 0.0) {
            return Err("s must be nonnegative".into());
        }
        if self.w.len() < 2 || self.z.len() != self.w.len() {
            return Err("w and z need n >= 2 coordinates each, in the same dimension".into());
        }
        if !(self.w[self.w.len() - 1] > 0.0 && self.z[self.z.len() - 1] > 0.0) {
            return Err("w and z must have positive height".into());
        }
        if self.mode != "ball" && self.mode != "horoball" {
            return Err(format!("mode must be 'ball' or 'horoball', got '{}'", self.mode));
        }
        if !(self.fit_window[0] < self.fit_window[1]) || self.fit_samples < 4 {
            return Err("fit window needs lo < hi and at least 4 samples".into());
        }
        if !(self.eps_window[0] > 0.0 && self.eps_window[0] < self.eps_window[1]) {
            return Err("eps window needs 0 < lo < hi".into());
        }
        if !(self.l_cutoff > self.margin && self.margin >= 0.0) {
            return Err("need l_cutoff > margin >= 0".into());
        }
        if self.nodes == 0 || self.samples == 0 {
            return Err("nodes and samples must be positive".into());
        }
        if !(self.curvature_bound > 0.0) {
            return Err("curvature bound must be positive".into());
        }
        if self.grid.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err("grid values must be finite and nonnegative".into());
        }
        Ok(())
    }
}
