use std::path::Path;

use serde::{Deserialize, Serialize};

use super::families::FamilyConfig;
use crate::error::{Error, Result};
use crate::hilbert::{make_dilation, SemigroupSpec, SpaceSpec};
use crate::noise::{uniform_grid, MarkMeasureSpec, QWienerSpec};
use crate::sde::{CoefficientSet, SolverOpts};
use crate::spde::{SpdeProblem, DEFAULT_DIAGRAM_TOL};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub problem: ProblemConfig,
    pub noise: NoiseConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub converge: ConvergeConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default)]
    pub space: Option<SpaceSpec>,
    /// Linear part; required by the mild-solution regimes.
    #[serde(default)]
    pub semigroup: Option<SemigroupSpec>,
    /// Dilation padding (grid nodes on each side) for the shift semigroup.
    #[serde(default)]
    pub padding: usize,
    pub coefficients: FamilyConfig,
    /// Initial value (`z0` for the mild regimes).
    pub y0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub wiener: QWienerSpec,
    #[serde(default)]
    pub marks: Option<MarkMeasureSpec>,
    pub horizon: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunRegime {
    #[default]
    Global,
    Local,
    Interlace,
    NoLargeJumps,
    MildFrame,
    MildExpeuler,
}

impl RunRegime {
    pub fn is_mild(self) -> bool {
        matches!(self, RunRegime::MildFrame | RunRegime::MildExpeuler)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptsConfig {
    pub k_min: f64,
    pub k_max: f64,
    pub blowup_threshold: f64,
    pub quad_n: usize,
    pub ignore_large_jumps: bool,
}

impl Default for OptsConfig {
    fn default() -> Self {
        let d = SolverOpts::default();
        OptsConfig {
            k_min: d.k_min,
            k_max: d.k_max,
            blowup_threshold: d.blowup_threshold,
            quad_n: d.quad_n,
            ignore_large_jumps: d.ignore_large_jumps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Explicit seeds; takes precedence over `seed_count`.
    pub seeds: Option<Vec<u64>>,
    /// Seeds `0..seed_count`.
    pub seed_count: Option<usize>,
    pub regime: RunRegime,
    pub opts: OptsConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    /// One trajectory CSV per seed.
    Csv,
    /// Noise path dumps, one CSV per seed.
    NoiseCsv,
    /// Mild-solution residuals as JSON, one file per seed.
    ResidualJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: Option<String>,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { directory: None, formats: vec![OutputFormat::Csv] }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergeConfig {
    pub ladder: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Faults {
    /// Multiplies the dilation projection inside the diagram check.
    pub projection_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub diagram_tol: f64,
    pub uniqueness_tol: f64,
    pub restart_tol: f64,
    pub residual_tol: f64,
    /// Bound on the sup distance between the two mild solvers.
    pub agreement_tol: f64,
    pub faults: Faults,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            diagram_tol: DEFAULT_DIAGRAM_TOL,
            uniqueness_tol: 1e-12,
            restart_tol: 1e-12,
            residual_tol: 1e-10,
            agreement_tol: 1e-2,
            faults: Faults::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            Error::validation("config", e.to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn dim(&self) -> usize {
        self.problem.y0.len()
    }

    pub fn marks(&self) -> MarkMeasureSpec {
        self.noise.marks.clone().unwrap_or_else(|| MarkMeasureSpec::none(1))
    }

    pub fn seeds(&self) -> Vec<u64> {
        match (&self.run.seeds, self.run.seed_count) {
            (Some(s), _) => s.clone(),
            (None, Some(n)) => (0..n as u64).collect(),
            (None, None) => vec![0],
        }
    }

    pub fn solver_opts(&self) -> SolverOpts {
        let o = &self.run.opts;
        SolverOpts {
            dt: self.noise.dt,
            horizon: self.noise.horizon,
            k_min: o.k_min,
            k_max: o.k_max,
            blowup_threshold: o.blowup_threshold,
            quad_n: o.quad_n,
            ignore_large_jumps: o.ignore_large_jumps,
        }
    }

    pub fn grid(&self) -> Result<Vec<f64>> {
        uniform_grid(self.noise.horizon, self.noise.dt)
    }

    pub fn coefficients(&self) -> Result<CoefficientSet> {
        self.problem.coefficients.build(self.dim(), self.noise.wiener.dim(), self.marks().mark_dim)
    }

    /// The mild-solution problem; requires a semigroup.
    pub fn spde_problem(&self) -> Result<SpdeProblem> {
        let spec = self.problem.semigroup.clone().ok_or_else(|| {
            Error::validation("problem.semigroup", "required for the mild-solution regimes")
        })?;
        let dilation = make_dilation(&spec, self.problem.padding, self.noise.horizon)?;
        SpdeProblem::new(
            spec,
            dilation,
            self.coefficients()?,
            self.problem.y0.clone().into(),
            self.noise.horizon,
            self.verify.diagram_tol,
        )
    }

    /// Field-level checks beyond the schema.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::validation(
                "version",
                format!("unsupported config version {}, expected {CONFIG_VERSION}", self.version),
            ));
        }
        if self.problem.y0.is_empty() {
            return Err(Error::validation("problem.y0", "initial value must be nonempty"));
        }
        if let Some(space) = &self.problem.space {
            if space.dim != self.dim() {
                return Err(Error::validation(
                    "problem.space.dim",
                    format!("space has dimension {} but y0 has {}", space.dim, self.dim()),
                ));
            }
        }
        self.noise.wiener.validate()?;
        self.marks().validate()?;
        self.grid()?;
        if matches!(&self.run.seeds, Some(s) if s.is_empty()) || self.run.seed_count == Some(0) {
            return Err(Error::validation("run.seeds", "at least one seed is required"));
        }
        self.solver_opts().validate()?;
        if let Some(spec) = &self.problem.semigroup {
            if spec.dim() != self.dim() {
                return Err(Error::validation(
                    "problem.semigroup",
                    format!("semigroup acts on dimension {} but y0 has {}", spec.dim(), self.dim()),
                ));
            }
            if let SemigroupSpec::ShiftHalfline { dx, .. } = spec {
                let ratio = self.noise.dt / dx;
                if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
                    return Err(Error::validation(
                        "dt",
                        format!("dt = {} must be a multiple of the shift spacing {dx}", self.noise.dt),
                    ));
                }
            }
            spec.build()?;
        } else if self.run.regime.is_mild() {
            return Err(Error::validation("problem.semigroup", "required for the mild-solution regimes"));
        }
        if self.output.formats.contains(&OutputFormat::ResidualJson) && !self.run.regime.is_mild() {
            return Err(Error::validation("output.formats", "residual-json needs a mild regime"));
        }
        self.problem.coefficients.validate(self.dim(), self.noise.wiener.dim())?;
        for dt in &self.converge.ladder {
            uniform_grid(self.noise.horizon, *dt)
                .map_err(|_| Error::validation("converge.ladder", format!("{dt} does not divide the horizon")))?;
        }
        Ok(())
    }
}
