//! Run configuration: a strict TOML document covering every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constitutive::{Eos, MaterialParams};
use crate::error::{Error, Result};
use crate::grid::{Grid, TanDeriv};
use crate::interface::{build_background, BackgroundState};
use crate::linearized::{BasicState, BumpSpec};
use crate::solver::probes::TameSpec;
use crate::solver::sources::{CleanData, Sources};
use crate::solver::{Diagnostics, RunSetup, TimeSpec};
use crate::stability::SweepSpec;

fn default_dim() -> usize {
    2
}

/// Material section.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    #[serde(default)]
    pub eos: Eos,
    /// Elastic coefficients `a_j`; unit when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
}

fn default_f_plus() -> [f64; 3] {
    [1.0, 1.0, 1.0]
}

fn default_f11_minus() -> f64 {
    0.5
}

/// Background section: `F^+ = diag(f_plus)`, `F_11^-`, `S^+`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundConfig {
    #[serde(default = "default_f_plus")]
    pub f_plus: [f64; 3],
    #[serde(default = "default_f11_minus")]
    pub f11_minus: f64,
    #[serde(default)]
    pub s_plus: f64,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        BackgroundConfig { f_plus: default_f_plus(), f11_minus: default_f11_minus(), s_plus: 0.0 }
    }
}

fn default_n1() -> usize {
    128
}

fn default_x_max() -> f64 {
    8.0
}

fn default_n_tan() -> usize {
    8
}

/// Grid section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_n1")]
    pub n1: usize,
    #[serde(default = "default_x_max")]
    pub x_max: f64,
    #[serde(default = "default_n_tan")]
    pub n_tan: usize,
    #[serde(default)]
    pub tan_deriv: TanDeriv,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n1: default_n1(), x_max: default_x_max(), n_tan: default_n_tan(), tan_deriv: TanDeriv::default() }
    }
}

fn default_time() -> TimeSpec {
    TimeSpec { t_final: 1.0, cfl: 0.4, dt_over_h: None, record_every: 10 }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Output section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    /// Write the final state as a binary snapshot.
    #[serde(default)]
    pub snapshot: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_out_dir(), snapshot: false }
    }
}

fn default_probe_grids() -> Vec<[usize; 2]> {
    vec![[64, 8], [128, 8], [256, 8]]
}

fn default_family() -> Vec<f64> {
    vec![0.4, 0.2, 0.1, 0.05]
}

/// Tame-estimate probe section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    /// `(n1, n_tan)` pairs, coarse to fine.
    #[serde(default = "default_probe_grids")]
    pub grids: Vec<[usize; 2]>,
    /// Fractions `[F_11] / F_11^+` of the jump family; empty disables it.
    #[serde(default = "default_family")]
    pub f11_family: Vec<f64>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { grids: default_probe_grids(), f11_family: default_family() }
    }
}

fn default_trace_samples() -> usize {
    200
}

fn default_trace_n1() -> usize {
    128
}

fn default_trace_n_tan() -> usize {
    32
}

fn default_trace_x_max() -> f64 {
    1.0
}

/// Trace-inequality probe section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceConfig {
    #[serde(default = "default_trace_samples")]
    pub samples: usize,
    #[serde(default = "default_trace_n1")]
    pub n1: usize,
    #[serde(default = "default_trace_n_tan")]
    pub n_tan: usize,
    #[serde(default = "default_trace_x_max")]
    pub x_max: f64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            samples: default_trace_samples(),
            n1: default_trace_n1(),
            n_tan: default_trace_n_tan(),
            x_max: default_trace_x_max(),
        }
    }
}

fn default_trials() -> usize {
    100
}

fn default_spread() -> f64 {
    0.1
}

/// Rigidity probe section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigidityConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_spread")]
    pub spread: f64,
    /// Entropy imposed on the minus side; `S^+` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_minus: Option<f64>,
}

impl Default for RigidityConfig {
    fn default() -> Self {
        RigidityConfig { trials: default_trials(), spread: default_spread(), s_minus: None }
    }
}

fn default_samples() -> usize {
    1000
}

/// Structure-check section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperbolicityConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
}

impl Default for HyperbolicityConfig {
    fn default() -> Self {
        HyperbolicityConfig { samples: default_samples() }
    }
}

/// Complete run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Subcommand this configuration was resolved for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub material: MaterialConfig,
    #[serde(default)]
    pub background: BackgroundConfig,
    /// Static perturbation of the background; `K` is its max-norm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<BumpSpec>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_time")]
    pub time: TimeSpec,
    #[serde(default)]
    pub sources: Sources,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<CleanData>,
    #[serde(default)]
    pub diagnostics: Diagnostics,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default)]
    pub trace: TraceConfig,
    #[serde(default)]
    pub rigidity: RigidityConfig,
    #[serde(default)]
    pub hyperbolicity: HyperbolicityConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            dim: default_dim(),
            seed: 0,
            material: MaterialConfig::default(),
            background: BackgroundConfig::default(),
            perturbation: None,
            grid: GridConfig::default(),
            time: default_time(),
            sources: Sources::default(),
            initial: None,
            diagnostics: Diagnostics::default(),
            output: OutputConfig::default(),
            probe: ProbeConfig::default(),
            trace: TraceConfig::default(),
            rigidity: RigidityConfig::default(),
            hyperbolicity: HyperbolicityConfig::default(),
            sweep: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().replace('\n', " ")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Write the resolved configuration as `config.toml` in `dir`.
    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("config.toml");
        std::fs::write(&path, self.to_toml()?)?;
        Ok(path)
    }

    pub fn params(&self) -> Result<MaterialParams> {
        match &self.material.a {
            Some(a) => MaterialParams::with_coefficients(self.dim, a.clone(), self.material.eos),
            None => MaterialParams::new(self.dim, self.material.eos),
        }
    }

    pub fn background(&self) -> Result<BackgroundState> {
        let b = &self.background;
        build_background(b.f_plus, b.f11_minus, b.s_plus, &self.params()?)
    }

    pub fn grid(&self) -> Result<Grid> {
        let mut g = Grid::new(self.dim, self.grid.n1, self.grid.x_max, self.grid.n_tan)?;
        g.tan_deriv = self.grid.tan_deriv;
        Ok(g)
    }

    /// Background or perturbed basic state on `grid`.
    pub fn basic_state(&self, grid: &Grid) -> Result<BasicState> {
        let params = self.params()?;
        let bg = self.background()?;
        match &self.perturbation {
            Some(b) => BasicState::perturbed(grid, &bg, b, &params),
            None => BasicState::background(grid, &bg, &params),
        }
    }

    pub fn run_setup(&self) -> Result<RunSetup> {
        let grid = self.grid()?;
        Ok(RunSetup {
            basic: self.basic_state(&grid)?,
            background: self.background()?,
            sources: self.sources.clone(),
            initial: self.initial.clone(),
            time: self.time.clone(),
            diagnostics: self.diagnostics.clone(),
        })
    }

    pub fn tame_spec(&self) -> Result<TameSpec> {
        Ok(TameSpec {
            background: self.background()?,
            params: self.params()?,
            bump: self.perturbation.clone(),
            sources: self.sources.clone(),
            time: self.time.clone(),
            dim: self.dim,
            x_max: self.grid.x_max,
            grids: self.probe.grids.iter().map(|g| (g[0], g[1])).collect(),
            norm_order: self.diagnostics.norm_order,
        })
    }

    /// Check everything that does not depend on the subcommand.
    pub fn validate(&self) -> Result<()> {
        let params = self.params()?;
        self.background()?;
        self.grid()?;
        self.time.validate()?;
        self.sources.validate(&params)?;
        if let Some(b) = &self.perturbation {
            b.validate(params.n_unknowns())?;
        }
        if let Some(c) = &self.initial {
            c.validate(self.dim)?;
        }
        if !matches!(self.diagnostics.norm_order, 1 | 3) {
            return Err(Error::InvalidParameter("norm_order must be 1 or 3".into()));
        }
        if self.probe.f11_family.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
            return Err(Error::InvalidParameter("f11_family entries must lie in (0, 1)".into()));
        }
        if self.rigidity.trials == 0 || self.trace.samples == 0 || self.hyperbolicity.samples == 0 {
            return Err(Error::InvalidParameter("sample counts must be positive".into()));
        }
        Ok(())
    }
}
