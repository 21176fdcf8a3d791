//! Scenario configuration files.
//!
//! A scenario is a flat TOML document whose keys mirror [`ScenarioConfig`].
//! Validation errors name the offending key and, when it appears in the
//! source text, its line.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use lrwh::domain::{build_domain, DomainConfig, FaceTag, MultiblockDomain, SourceKind, SourceSpec, Speeds};
use lrwh::waveholtz::{ScheduleKind, WaveHoltzParams, DEFAULT_K_2D, DEFAULT_K_3D};
use lrwh::wave2d::{WaveOptions, DEFAULT_CFL, DEFAULT_TAU};
use serde::{Deserialize, Serialize};

/// What `run` does with a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// WaveHoltz iteration (optionally accelerated).
    Waveholtz,
    /// Per-block ranks of the truncated Green's function.
    Compression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKindCfg {
    Gaussian,
    Greens,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpeedsCfg {
    Uniform(f64),
    PerBlock(Vec<f64>),
}

/// One scenario, as read from disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    pub dimension: usize,
    /// `[lo, hi]` per axis.
    pub extents: Vec<[f64; 2]>,
    pub partition: Vec<usize>,
    pub n_per_block: usize,
    #[serde(default = "default_speeds")]
    pub speeds: SpeedsCfg,
    /// Outer face tags in order `x-lo, x-hi, y-lo, y-hi[, z-lo, z-hi]`:
    /// `nonreflecting`, `neumann`, `dirichlet` or `damped`.
    pub faces: Vec<String>,
    pub source_kind: SourceKindCfg,
    pub source_center: Vec<f64>,
    /// Angular frequency; alternatively `omega_over_pi`.
    pub omega: Option<f64>,
    pub omega_over_pi: Option<f64>,
    pub theta: Option<f64>,
    #[serde(rename = "K")]
    pub k_floor: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Anderson memory (0: plain WaveHoltz).
    #[serde(default)]
    pub memory: usize,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub trapezoid_start: bool,
    #[serde(default)]
    pub seed: u64,
    /// Output directory (overridden by `--out`).
    pub out_dir: Option<PathBuf>,
    /// Also run the dense oracle and report errors and oracle ranks.
    #[serde(default)]
    pub compare_dense: bool,
    /// Stopping tolerance of the dense reference run (default `tol / 10`).
    pub oracle_tol: Option<f64>,
    /// Compression tolerances as multiples of `1/h`.
    #[serde(default)]
    pub eps_times_h: Vec<f64>,
    /// Timing study: points per wavelength per resolution.
    #[serde(default)]
    pub timing_ppw: Vec<f64>,
    #[serde(default = "default_repetitions")]
    pub timing_repetitions: usize,
}

fn default_mode() -> Mode {
    Mode::Waveholtz
}
fn default_speeds() -> SpeedsCfg {
    SpeedsCfg::Uniform(1.0)
}
fn default_tol() -> f64 {
    1e-3
}
fn default_max_iters() -> usize {
    500
}
fn default_cfl() -> f64 {
    DEFAULT_CFL
}
fn default_order() -> usize {
    4
}
fn default_tau() -> f64 {
    DEFAULT_TAU
}
fn default_repetitions() -> usize {
    100
}

/// A configuration problem, located in the source when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: Option<PathBuf>,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.path, self.line) {
            (Some(p), Some(l)) => write!(f, "{}:{}: {}", p.display(), l, self.message),
            (Some(p), None) => write!(f, "{}: {}", p.display(), self.message),
            (None, Some(l)) => write!(f, "line {}: {}", l, self.message),
            (None, None) => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Line (1-based) on which `key = ...` is assigned.
fn key_line(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let t = l.trim_start();
        t.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

fn parse_tag(s: &str) -> Option<FaceTag> {
    match s.to_ascii_lowercase().as_str() {
        "nonreflecting" | "outflow" => Some(FaceTag::Nonreflecting),
        "neumann" | "reflecting" => Some(FaceTag::Neumann),
        "dirichlet" => Some(FaceTag::Dirichlet),
        "damped" | "damping" => Some(FaceTag::Damped),
        _ => None,
    }
}

impl ScenarioConfig {
    /// Parse and validate a scenario from TOML text.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError {
            path: None,
            line: e.span().map(|s| text[..s.start].lines().count().max(1)),
            message: e.message().to_string(),
        })?;
        cfg.validate().map_err(|(key, message)| ConfigError { path: None, line: key_line(text, key), message })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: Some(path.to_path_buf()),
            line: None,
            message: format!("cannot read: {e}"),
        })?;
        Self::parse(&text).map_err(|e| ConfigError { path: Some(path.to_path_buf()), ..e })
    }

    fn validate(&self) -> Result<(), (&'static str, String)> {
        let d = self.dimension;
        if d != 2 && d != 3 {
            return Err(("dimension", format!("dimension must be 2 or 3, got {d}")));
        }
        if self.extents.len() != d {
            return Err(("extents", format!("expected {d} extents, got {}", self.extents.len())));
        }
        if self.extents.iter().any(|[lo, hi]| !(hi > lo)) {
            return Err(("extents", "each extent must satisfy lo < hi".into()));
        }
        if self.partition.len() != d || self.partition.contains(&0) {
            return Err(("partition", format!("expected {d} positive block counts")));
        }
        if self.faces.len() != 2 * d {
            return Err(("faces", format!("expected {} outer face tags, got {}", 2 * d, self.faces.len())));
        }
        if let Some(bad) = self.faces.iter().find(|f| parse_tag(f).is_none()) {
            return Err(("faces", format!("unknown face tag '{bad}'")));
        }
        if self.source_center.len() != d {
            return Err(("source_center", format!("expected {d} coordinates")));
        }
        match (self.omega, self.omega_over_pi) {
            (Some(_), Some(_)) => return Err(("omega", "give either omega or omega_over_pi, not both".into())),
            (None, None) => return Err(("omega", "omega (or omega_over_pi) is required".into())),
            _ => {}
        }
        if !(self.omega() > 0.0) {
            return Err(("omega", "omega must be positive".into()));
        }
        if let Some(t) = self.theta {
            if !(t > 0.0 && t <= 1.0) {
                return Err(("theta", "theta must lie in (0, 1]".into()));
            }
        }
        if self.k_floor.is_some_and(|k| !(k > 0.0)) {
            return Err(("K", "K must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(("tol", "tol must be positive".into()));
        }
        if self.oracle_tol.is_some_and(|t| !(t > 0.0)) {
            return Err(("oracle_tol", "oracle_tol must be positive".into()));
        }
        if !(self.cfl > 0.0 && self.cfl <= 0.5) {
            return Err(("cfl", "cfl must lie in (0, 0.5]".into()));
        }
        if self.order != 2 && self.order != 4 {
            return Err(("order", "order must be 2 or 4".into()));
        }
        if self.memory > 0 && d == 3 {
            return Err(("memory", "Anderson acceleration is only available in 2D".into()));
        }
        if self.mode == Mode::Compression && self.eps_times_h.is_empty() {
            return Err(("eps_times_h", "compression runs need at least one tolerance".into()));
        }
        if let SpeedsCfg::PerBlock(v) = &self.speeds {
            let nb: usize = self.partition.iter().product();
            if v.len() != nb {
                return Err(("speeds", format!("expected {nb} per-block speeds, got {}", v.len())));
            }
        }
        self.domain_config_with(self.n_per_block).and_then(|c| build_domain(&c).map(|_| ())).map_err(|e| ("partition", e.to_string()))?;
        Ok(())
    }

    pub fn oracle_tol(&self) -> f64 {
        self.oracle_tol.unwrap_or(self.tol / 10.0)
    }

    pub fn omega(&self) -> f64 {
        self.omega.unwrap_or_else(|| self.omega_over_pi.unwrap_or(0.0) * PI)
    }

    /// Domain description with `n` points per block and axis.
    pub fn domain_config_with(&self, n: usize) -> lrwh::Result<DomainConfig> {
        let outer = self
            .faces
            .iter()
            .map(|f| parse_tag(f).ok_or_else(|| lrwh::Error::Domain(format!("unknown face tag '{f}'"))))
            .collect::<lrwh::Result<Vec<_>>>()?;
        Ok(DomainConfig {
            dim: self.dimension,
            extents: self.extents.iter().map(|[a, b]| (*a, *b)).collect(),
            partition: self.partition.clone(),
            n,
            speeds: match &self.speeds {
                SpeedsCfg::Uniform(c) => Speeds::Uniform(*c),
                SpeedsCfg::PerBlock(v) => Speeds::PerBlock(v.clone()),
            },
            outer,
        })
    }

    pub fn domain_with(&self, n: usize) -> lrwh::Result<MultiblockDomain> {
        build_domain(&self.domain_config_with(n)?)
    }

    pub fn domain(&self) -> lrwh::Result<MultiblockDomain> {
        self.domain_with(self.n_per_block)
    }

    pub fn source(&self) -> SourceSpec {
        let mut center = [0.0; 3];
        center[..self.source_center.len()].copy_from_slice(&self.source_center);
        let kind = match self.source_kind {
            SourceKindCfg::Gaussian => SourceKind::GaussianPoint,
            SourceKindCfg::Greens => SourceKind::GreensDirichlet,
        };
        SourceSpec { kind, center, omega: self.omega() }
    }

    pub fn wave_options(&self) -> WaveOptions {
        WaveOptions { order: self.order, tau: self.tau, cfl: self.cfl }
    }

    pub fn params(&self) -> WaveHoltzParams {
        let base = if self.dimension == 3 { WaveHoltzParams::three_d() } else { WaveHoltzParams::two_d() };
        WaveHoltzParams {
            theta: self.theta.unwrap_or(base.theta),
            k_floor: self.k_floor.unwrap_or(if self.dimension == 3 { DEFAULT_K_3D } else { DEFAULT_K_2D }),
            tol: self.tol,
            max_iters: self.max_iters,
            schedule: if self.dimension == 3 { ScheduleKind::TensorTrain } else { ScheduleKind::Absolute },
            trapezoid_start: self.trapezoid_start,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
name = "t"
dimension = 2
extents = [[0.0, 2.0], [0.0, 1.0]]
partition = [2, 1]
n_per_block = 11
faces = ["nonreflecting", "nonreflecting", "neumann", "nonreflecting"]
source_kind = "gaussian"
source_center = [0.3, 0.5]
omega_over_pi = 2.0
"#;

    #[test]
    fn parses_with_defaults() {
        let c = ScenarioConfig::parse(GOOD).unwrap();
        assert_eq!(c.mode, Mode::Waveholtz);
        assert_eq!((c.order, c.cfl, c.tau, c.memory), (4, 0.15, 15.0, 0));
        assert!((c.omega() - 2.0 * PI).abs() < 1e-15);
        let p = c.params();
        assert_eq!((p.theta, p.k_floor, p.tol), (1.0, 1e-5, 1e-3));
        assert_eq!(c.domain().unwrap().num_blocks(), 2);
    }

    #[test]
    fn reports_offending_line() {
        let bad = GOOD.replace("partition = [2, 1]", "partition = [2, 1, 4]");
        let e = ScenarioConfig::parse(&bad).unwrap_err();
        assert_eq!(e.line, Some(5));
        assert!(e.message.contains("block counts"), "{}", e.message);
        let e = ScenarioConfig::parse(&GOOD.replace("\"neumann\"", "\"sticky\"")).unwrap_err();
        assert_eq!(e.line, Some(7));
        let e = ScenarioConfig::parse(&format!("{GOOD}bogus = 1\n")).unwrap_err();
        assert!(e.message.contains("bogus"), "{}", e.message);
        assert!(e.line.is_some());
    }

    #[test]
    fn rejects_conflicting_frequency() {
        let e = ScenarioConfig::parse(&format!("{GOOD}omega = 3.0\n")).unwrap_err();
        assert!(e.message.contains("either"));
    }
}
