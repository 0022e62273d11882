use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, OutputFormat, RunRegime};
use super::families::FamilyConfig;
use super::output::{sha256_hex, write_file, FileEntry, Manifest, SeedFailure, SeedLifetime, MANIFEST_SCHEMA_VERSION};
use crate::batch::{map_slice, Execution};
use crate::error::{Error, Result};
use crate::expm::expm;
use crate::noise::{sample_noise, uniform_grid, MarkMeasureSpec, NoisePath};
use crate::sde::{solve, CoefficientSet, Lifetime, LifetimeReason, Regime, SolverOpts, Trajectory};
use crate::spde::{mild_residuals, mild_solve_exponential_euler, mild_solve_moving_frame, SpdeProblem};
use crate::vector::distance;

/// A solver fixed by a config: an SDE regime or one of the mild solvers.
pub(crate) enum Model {
    Sde { regime: Regime, coeff: CoefficientSet, y0: Vec<f64> },
    Mild { problem: Box<SpdeProblem>, expeuler: bool },
}

impl Model {
    pub(crate) fn from_config(cfg: &ExperimentConfig) -> Result<Model> {
        let regime = match cfg.run.regime {
            RunRegime::Global => Regime::Global,
            RunRegime::Local => Regime::Local,
            RunRegime::Interlace => Regime::Interlace,
            RunRegime::NoLargeJumps => Regime::NoLargeJumps,
            RunRegime::MildFrame | RunRegime::MildExpeuler => {
                return Ok(Model::Mild {
                    problem: Box::new(cfg.spde_problem()?),
                    expeuler: cfg.run.regime == RunRegime::MildExpeuler,
                })
            }
        };
        Ok(Model::Sde { regime, coeff: cfg.coefficients()?, y0: cfg.problem.y0.clone() })
    }

    pub(crate) fn solve(&self, noise: &NoisePath, opts: &SolverOpts) -> Result<Trajectory> {
        match self {
            Model::Sde { regime, coeff, y0 } => solve(*regime, coeff, y0, noise, opts),
            Model::Mild { problem, expeuler: true } => mild_solve_exponential_euler(problem, noise, opts),
            Model::Mild { problem, expeuler: false } => Ok(mild_solve_moving_frame(problem, noise, opts)?.z),
        }
    }

    pub(crate) fn problem(&self) -> Option<&SpdeProblem> {
        match self {
            Model::Mild { problem, .. } => Some(problem),
            Model::Sde { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub lifetime: Option<Lifetime>,
    pub error: Option<String>,
    pub numerical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub manifest: Manifest,
    pub outcomes: Vec<SeedOutcome>,
}

impl SimulateSummary {
    pub fn any_numerical_failure(&self) -> bool {
        self.outcomes.iter().any(|o| o.numerical)
    }

    pub fn any_failure(&self) -> bool {
        self.outcomes.iter().any(|o| o.error.is_some())
    }
}

struct SeedFiles {
    files: Vec<(String, Vec<u8>)>,
    lifetime: Lifetime,
}

fn simulate_seed(
    cfg: &ExperimentConfig,
    model: &Model,
    grid: &[f64],
    marks: &MarkMeasureSpec,
    opts: &SolverOpts,
    seed: u64,
) -> Result<SeedFiles> {
    let noise = sample_noise(&cfg.noise.wiener, marks, grid, seed)?;
    let traj = model.solve(&noise, opts)?;
    let mut files = Vec::new();
    for format in &cfg.output.formats {
        let mut buf = Vec::new();
        let name = match format {
            OutputFormat::Csv => {
                traj.write_csv(&mut buf)?;
                format!("trajectory_seed{seed}.csv")
            }
            OutputFormat::NoiseCsv => {
                noise.write_csv(&mut buf)?;
                format!("noise_seed{seed}.csv")
            }
            OutputFormat::ResidualJson => {
                let p = model.problem().ok_or_else(|| {
                    Error::validation("output.formats", "residual-json needs a mild regime")
                })?;
                let residuals = mild_residuals(p, &traj, &noise, opts.quad_n)?;
                buf = serde_json::to_vec_pretty(&residuals).expect("residuals serialize");
                format!("residuals_seed{seed}.json")
            }
        };
        files.push((name, buf));
    }
    Ok(SeedFiles { files, lifetime: traj.lifetime() })
}

/// Solves every seed of the config (in parallel under `Execution::Parallel`)
/// and writes the outputs and `manifest.json` into `out_dir` from a single
/// thread. Per-seed failures are recorded, not propagated.
pub fn run_simulate(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    exec: Execution,
    command: &str,
) -> Result<SimulateSummary> {
    let start = Instant::now();
    cfg.validate()?;
    let model = Model::from_config(cfg)?;
    let grid = cfg.grid()?;
    let marks = cfg.marks();
    let opts = cfg.solver_opts();
    let seeds = cfg.seeds();
    let results = map_slice(&seeds, exec, |&seed| simulate_seed(cfg, &model, &grid, &marks, &opts, seed));

    std::fs::create_dir_all(out_dir)?;
    let mut files: Vec<FileEntry> = Vec::new();
    let mut outcomes = Vec::with_capacity(seeds.len());
    let mut lifetimes = Vec::new();
    let mut failures = Vec::new();
    for (&seed, result) in seeds.iter().zip(results) {
        match result {
            Ok(out) => {
                for (name, bytes) in &out.files {
                    files.push(write_file(out_dir, name, bytes)?);
                }
                lifetimes.push(SeedLifetime { seed, lifetime: out.lifetime });
                outcomes.push(SeedOutcome { seed, lifetime: Some(out.lifetime), error: None, numerical: false });
            }
            Err(e) => {
                let numerical = e.is_numerical();
                failures.push(SeedFailure { seed, error: e.to_string(), numerical });
                outcomes.push(SeedOutcome { seed, lifetime: None, error: Some(e.to_string()), numerical });
            }
        }
    }
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        config_sha256: sha256_hex(cfg.to_json().as_bytes()),
        seeds,
        regime: serde_json::to_value(cfg.run.regime)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default(),
        lifetimes,
        failures,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        files,
    };
    manifest.write(out_dir)?;
    Ok(SimulateSummary { manifest, outcomes })
}

/// Reference value at the horizon for the convergence table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Oracle {
    /// Closed-form stochastic exponential of the scalar geometric equation.
    DoleansDade,
    /// `exp(A T) y0` for the noiseless linear equation.
    LinearOde,
    /// The same solver on a finer grid.
    SelfReference { dt: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub dt: f64,
    /// Mean over paths of `|Y_T - reference_T|`.
    pub error: f64,
    /// Standard error of that mean.
    pub std_error: f64,
    pub paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub oracle: Oracle,
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log error` against `log dt`; needs two rows.
    pub slope: Option<f64>,
    /// Paths excluded because a solve failed or stopped before the horizon.
    pub excluded_paths: usize,
}

impl ConvergenceTable {
    pub fn slope_display(&self) -> String {
        match self.slope {
            Some(s) => format!("{s}"),
            None => "not-available".to_string(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("dt,error,std_error,paths\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.dt, r.error, r.std_error, r.paths));
        }
        out
    }
}

/// `y0 exp((mu - sigma^2 lambda / 2 - F(B) E_B[x]) T + sigma W_T) prod (1 + xi_n)`,
/// with the compensator taken from the exact small-mark mean.
pub fn doleans_dade(mu: f64, sigma: f64, lambda: f64, y0: f64, noise: &NoisePath, jumps: bool) -> f64 {
    let t = noise.horizon();
    let mut log_part = (mu - 0.5 * sigma * sigma * lambda) * t + sigma * noise.wiener_total()[0];
    let mut product = 1.0;
    if jumps {
        let m = noise.marks();
        if let Some(s) = &m.sampler_small {
            log_part -= m.intensity_small * s.mean()[0] * t;
        }
        for j in noise.jumps() {
            product *= 1.0 + j.mark[0];
        }
    }
    y0 * log_part.exp() * product
}

fn pick_oracle(cfg: &ExperimentConfig, ladder: &[f64]) -> Oracle {
    let finest = ladder.iter().copied().fold(f64::INFINITY, f64::min);
    let sde = !cfg.run.regime.is_mild();
    match &cfg.problem.coefficients {
        FamilyConfig::Geometric { .. } if sde && cfg.dim() == 1 && cfg.noise.wiener.dim() == 1 => {
            Oracle::DoleansDade
        }
        FamilyConfig::Linear { drift_offset, diffusion_matrix, jump_vector, .. }
            if sde && drift_offset.is_empty() && diffusion_matrix.is_empty() && jump_vector.is_empty() =>
        {
            Oracle::LinearOde
        }
        _ => Oracle::SelfReference { dt: finest / 4.0 },
    }
}

fn reference(
    cfg: &ExperimentConfig,
    oracle: Oracle,
    model: &Model,
    noise: &NoisePath,
    opts: &SolverOpts,
) -> Result<Vec<f64>> {
    match oracle {
        Oracle::DoleansDade => {
            let FamilyConfig::Geometric { mu, sigma, jumps } = cfg.problem.coefficients else {
                unreachable!("oracle picked for the geometric family")
            };
            let lambda = cfg.noise.wiener.eigenvalues[0];
            Ok(vec![doleans_dade(mu, sigma, lambda, cfg.problem.y0[0], noise, jumps)])
        }
        Oracle::LinearOde => {
            let FamilyConfig::Linear { drift_matrix, .. } = &cfg.problem.coefficients else {
                unreachable!("oracle picked for the linear family")
            };
            let d = cfg.dim();
            if drift_matrix.is_empty() {
                return Ok(cfg.problem.y0.clone());
            }
            let a = nalgebra::DMatrix::from_fn(d, d, |i, j| drift_matrix[i][j] * noise.horizon());
            let y = expm(&a) * nalgebra::DVector::from_column_slice(&cfg.problem.y0);
            Ok(y.iter().copied().collect())
        }
        Oracle::SelfReference { dt } => {
            let traj = model.solve(noise, &SolverOpts { dt, ..opts.clone() })?;
            reached_horizon(&traj)
        }
    }
}

fn reached_horizon(traj: &Trajectory) -> Result<Vec<f64>> {
    let life = traj.lifetime();
    if life.reason != LifetimeReason::Horizon {
        return Err(Error::Domain(format!("path stopped at t = {} before the horizon", life.time)));
    }
    Ok(traj.last().to_vec())
}

fn factor_of(coarse: f64, fine: f64) -> Result<usize> {
    let r = coarse / fine;
    if (r - r.round()).abs() > 1e-9 * r || r.round() < 1.0 {
        return Err(Error::validation(
            "converge.ladder",
            format!("{coarse} is not a multiple of the reference step {fine}"),
        ));
    }
    Ok(r.round() as usize)
}

/// Strong error at the horizon for each step in `ladder`. Every path samples
/// its noise once on the finest grid and coarsens it for each rung.
pub fn run_converge(cfg: &ExperimentConfig, ladder: &[f64], exec: Execution) -> Result<ConvergenceTable> {
    cfg.validate()?;
    if ladder.is_empty() {
        return Err(Error::validation("ladder", "need at least one step size"));
    }
    for &dt in ladder {
        uniform_grid(cfg.noise.horizon, dt)
            .map_err(|_| Error::validation("ladder", format!("{dt} does not divide the horizon")))?;
    }
    let oracle = pick_oracle(cfg, ladder);
    let fine = match oracle {
        Oracle::SelfReference { dt } => dt,
        _ => ladder.iter().copied().fold(f64::INFINITY, f64::min),
    };
    let factors = ladder.iter().map(|&dt| factor_of(dt, fine)).collect::<Result<Vec<_>>>()?;
    let model = Model::from_config(cfg)?;
    let grid = uniform_grid(cfg.noise.horizon, fine)?;
    let marks = cfg.marks();
    let opts = cfg.solver_opts();
    let seeds = cfg.seeds();

    let per_path = map_slice(&seeds, exec, |&seed| -> Result<Vec<f64>> {
        let noise = sample_noise(&cfg.noise.wiener, &marks, &grid, seed)?;
        let reference = reference(cfg, oracle, &model, &noise, &opts)?;
        ladder
            .iter()
            .zip(&factors)
            .map(|(&dt, &f)| {
                let coarse = noise.coarsen(f)?;
                let traj = model.solve(&coarse, &SolverOpts { dt, ..opts.clone() })?;
                Ok(distance(&reached_horizon(&traj)?, &reference))
            })
            .collect()
    });
    let errors: Vec<Vec<f64>> = per_path.into_iter().filter_map(|r| r.ok()).collect();
    let excluded_paths = seeds.len() - errors.len();
    if errors.is_empty() {
        return Err(Error::Domain("every path failed or stopped before the horizon".into()));
    }
    let n = errors.len() as f64;
    let rows: Vec<ConvergenceRow> = ladder
        .iter()
        .enumerate()
        .map(|(k, &dt)| {
            let mean = errors.iter().map(|e| e[k]).sum::<f64>() / n;
            let var = errors.iter().map(|e| (e[k] - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            ConvergenceRow { dt, error: mean, std_error: (var / n).sqrt(), paths: errors.len() }
        })
        .collect();
    let slope = log_log_slope(&rows);
    Ok(ConvergenceTable { oracle, rows, slope, excluded_paths })
}

/// Least-squares slope through `(ln dt, ln error)`; `None` with fewer than
/// two usable rows.
pub fn log_log_slope(rows: &[ConvergenceRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.error > 0.0 && r.error.is_finite())
        .map(|r| (r.dt.ln(), r.error.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_exact_power_law() {
        let rows: Vec<ConvergenceRow> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&dt: &f64| ConvergenceRow { dt, error: 3.0 * dt.sqrt(), std_error: 0.0, paths: 1 })
            .collect();
        assert!((log_log_slope(&rows).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(log_log_slope(&rows[..1]), None);
    }
}
