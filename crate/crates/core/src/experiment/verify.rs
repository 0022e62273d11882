use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::runners::Model;
use crate::batch::Execution;
use crate::conditions::{
    divergence_criterion, estimate_local_lipschitz, check_linear_growth, example_kappa,
    example_kappa_integral, staircase_modulus_violation, Component, default_t_samples,
};
use crate::error::Result;
use crate::hilbert::{check_dilation_with, make_dilation};
use crate::noise::{sample_noise, shift_noise, MarkMeasureSpec};
use crate::sde::{interlace_solve, solve_no_large_jumps, ShiftedCoefficients, SolverOpts};
use crate::spde::{mild_residuals, mild_solve_exponential_euler, mild_solve_moving_frame};
use crate::vector::{distance, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Dilation,
    Uniqueness,
    Interlace,
    Residual,
    Conditions,
    All,
}

impl Suite {
    fn members(self) -> Vec<Suite> {
        match self {
            Suite::All => vec![
                Suite::Dilation,
                Suite::Uniqueness,
                Suite::Interlace,
                Suite::Residual,
                Suite::Conditions,
            ],
            s => vec![s],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub invariant: String,
    pub pass: bool,
    pub measured: Option<f64>,
    pub tol: Option<f64>,
    pub detail: String,
}

impl Check {
    fn bound(invariant: &str, measured: f64, tol: f64) -> Check {
        Check {
            invariant: invariant.into(),
            pass: measured <= tol,
            measured: Some(measured),
            tol: Some(tol),
            detail: String::new(),
        }
    }

    fn flag(invariant: &str, pass: bool, detail: impl Into<String>) -> Check {
        Check { invariant: invariant.into(), pass, measured: None, tol: None, detail: detail.into() }
    }

    fn skipped(invariant: &str, why: &str) -> Check {
        Check::flag(invariant, true, format!("skipped: {why}"))
    }

    fn failed(invariant: &str, e: impl std::fmt::Display) -> Check {
        Check::flag(invariant, false, format!("error: {e}"))
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Check {
        self.detail = detail.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suites: Vec<SuiteReport>,
    pub pass: bool,
}

/// Runs the invariant checks of `suite` on the first seed of the config.
/// Errors inside a check become failing checks.
pub fn run_verify(suite: Suite, cfg: &ExperimentConfig, _exec: Execution) -> Result<VerifyReport> {
    cfg.validate()?;
    let suites: Vec<SuiteReport> = suite
        .members()
        .into_iter()
        .map(|s| {
            let checks = match s {
                Suite::Dilation => dilation_checks(cfg),
                Suite::Uniqueness => uniqueness_checks(cfg),
                Suite::Interlace => interlace_checks(cfg),
                Suite::Residual => residual_checks(cfg),
                Suite::Conditions => condition_checks(cfg),
                Suite::All => unreachable!(),
            };
            let pass = checks.iter().all(|c| c.pass);
            SuiteReport { suite: s, checks, pass }
        })
        .collect();
    let pass = suites.iter().all(|s| s.pass);
    Ok(VerifyReport { suites, pass })
}

fn probes(dim: usize) -> Vec<StateVector> {
    let mut out: Vec<StateVector> = (0..dim.min(16))
        .map(|i| {
            let mut v = vec![0.0; dim];
            v[i] = 1.0;
            v.into()
        })
        .collect();
    out.push((0..dim).map(|i| ((i + 1) as f64).sin()).collect());
    out
}

fn dilation_checks(cfg: &ExperimentConfig) -> Vec<Check> {
    let Some(spec) = &cfg.problem.semigroup else {
        return vec![Check::skipped("dilation-diagram", "no semigroup configured")];
    };
    let run = || -> Result<Vec<Check>> {
        let sg = spec.build()?;
        let d = make_dilation(spec, cfg.problem.padding, cfg.noise.horizon)?;
        let horizon = cfg.noise.horizon;
        let times: Vec<f64> = (0..=8).map(|i| horizon * i as f64 / 8.0).collect();
        let probes = probes(spec.dim());
        let scale = cfg.verify.faults.projection_scale.unwrap_or(1.0);
        let report = check_dilation_with(&d, &sg, &times, &probes, cfg.verify.diagram_tol, |v| {
            v.iter().map(|x| x * scale).collect()
        })?;
        let mut checks = vec![Check::bound("dilation-diagram", report.max_error, cfg.verify.diagram_tol)
            .with_detail(format!("worst (t, probe) = {:?}", report.worst))];

        let omega = spec.omega();
        let mut excess: f64 = 0.0;
        for &t in &times {
            for h in &probes {
                let n = crate::vector::norm(&sg.apply(t, h)?);
                excess = excess.max(n - (omega * t).exp() * crate::vector::norm(h));
            }
        }
        checks.push(Check::bound("pseudo-contractive", excess.max(0.0), 1e-12));

        let (s, t) = (0.375 * horizon, 0.5 * horizon);
        let mut group: f64 = 0.0;
        for h in &probes {
            let y = d.embed(h)?;
            let lhs = d.group_apply(s + t, &y)?;
            let rhs = d.group_apply(s, &d.group_apply(t, &y)?)?;
            let back = d.group_apply(-t, &d.group_apply(t, &y)?)?;
            group = group.max(distance(&lhs, &rhs)).max(distance(&back, &y));
        }
        checks.push(Check::bound("group-law", group, cfg.verify.diagram_tol));
        Ok(checks)
    };
    run().unwrap_or_else(|e| vec![Check::failed("dilation-diagram", e)])
}

fn first_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.seeds()[0]
}

fn uniqueness_checks(cfg: &ExperimentConfig) -> Vec<Check> {
    let run = || -> Result<Vec<Check>> {
        let grid = cfg.grid()?;
        let marks = cfg.marks();
        let seed = first_seed(cfg);
        let n1 = sample_noise(&cfg.noise.wiener, &marks, &grid, seed)?;
        let n2 = sample_noise(&cfg.noise.wiener, &marks, &grid, seed)?;
        let model = Model::from_config(cfg)?;
        let opts = cfg.solver_opts();
        let a = model.solve(&n1, &opts)?;
        let b = model.solve(&n2, &opts)?;
        Ok(vec![
            Check::flag("noise-deterministic", n1 == n2, format!("seed {seed}")),
            Check::bound("pathwise-uniqueness", a.sup_distance(&b), cfg.verify.uniqueness_tol)
                .with_detail(format!("bitwise equal: {}", a.bitwise_eq_values(&b))),
        ])
    };
    run().unwrap_or_else(|e| vec![Check::failed("pathwise-uniqueness", e)])
}

fn interlace_checks(cfg: &ExperimentConfig) -> Vec<Check> {
    let run = || -> Result<Vec<Check>> {
        let grid = cfg.grid()?;
        let marks = cfg.marks();
        let seed = first_seed(cfg);
        let coeff = cfg.coefficients()?;
        let y0 = &cfg.problem.y0;
        let opts = cfg.solver_opts();
        let mut checks = Vec::new();

        let small_only = MarkMeasureSpec { intensity_large: 0.0, sampler_large: None, ..marks.clone() };
        let quiet = sample_noise(&cfg.noise.wiener, &small_only, &grid, seed)?;
        let a = interlace_solve(&coeff, y0, &quiet, &opts)?;
        let b = solve_no_large_jumps(&coeff, y0, &quiet, &opts)?;
        checks.push(Check::flag(
            "no-large-jumps-degeneracy",
            a.bitwise_eq_values(&b),
            "interlaced and jump-free solves compared bit for bit",
        ));

        let noise = sample_noise(&cfg.noise.wiener, &marks, &grid, seed)?;
        let traj = interlace_solve(&coeff, y0, &noise, &opts)?;
        let mut count = 0;
        let mut ok = true;
        for rec in traj.large_jumps() {
            count += 1;
            let expected = coeff.jump(rec.time, &rec.left_limit, &rec.mark);
            let same_inc = rec.increment.iter().zip(expected.iter()).all(|(x, y)| x.to_bits() == y.to_bits());
            let value = traj.value(rec.node);
            let same_val = value
                .iter()
                .zip(rec.left_limit.iter().zip(rec.increment.iter()))
                .all(|(v, (l, i))| v.to_bits() == (l + i).to_bits());
            ok &= same_inc && same_val && rec.node < traj.len();
        }
        checks.push(Check::flag("jump-identity", ok, format!("{count} large jumps")));

        match traj.large_jumps().next() {
            None => checks.push(Check::skipped("restart-consistency", "no large jumps on this path")),
            Some(rec) => {
                let tau = rec.time;
                let rest = shift_noise(&noise, tau)?;
                let shifted = ShiftedCoefficients::new(coeff.clone(), tau, true).coefficients();
                let restarted = interlace_solve(&shifted, traj.value(rec.node), &rest, &opts)?;
                let mut gap: f64 = 0.0;
                for i in 0..restarted.len().min(traj.len() - rec.node) {
                    gap = gap.max(distance(restarted.value(i), traj.value(rec.node + i)));
                }
                checks.push(
                    Check::bound("restart-consistency", gap, cfg.verify.restart_tol)
                        .with_detail(format!("restart at t = {tau}")),
                );
            }
        }
        Ok(checks)
    };
    run().unwrap_or_else(|e| vec![Check::failed("interlace", e)])
}

fn residual_checks(cfg: &ExperimentConfig) -> Vec<Check> {
    if cfg.problem.semigroup.is_none() {
        return vec![Check::skipped("mild-residual", "no semigroup configured")];
    }
    let run = || -> Result<Vec<Check>> {
        let p = cfg.spde_problem()?;
        let noise = sample_noise(&cfg.noise.wiener, &cfg.marks(), &cfg.grid()?, first_seed(cfg))?;
        let opts: SolverOpts = cfg.solver_opts();
        let z = mild_solve_exponential_euler(&p, &noise, &opts)?;
        let residual = mild_residuals(&p, &z, &noise, opts.quad_n)?
            .iter()
            .map(|r| r.residual)
            .fold(0.0, f64::max);
        let frame = mild_solve_moving_frame(&p, &noise, &opts)?;
        let n = z.len().min(frame.z.len());
        let gap = (0..n).map(|i| distance(z.value(i), frame.z.value(i))).fold(0.0, f64::max);
        Ok(vec![
            Check::bound("mild-residual", residual, cfg.verify.residual_tol),
            Check::bound("solver-agreement", gap, cfg.verify.agreement_tol),
        ])
    };
    run().unwrap_or_else(|e| vec![Check::failed("mild-residual", e)])
}

fn condition_checks(cfg: &ExperimentConfig) -> Vec<Check> {
    let mut checks = Vec::new();
    let delta = 0.1;
    let floors: Vec<f64> = (1..=6).map(|k| 10f64.powi(-(1 << k))).collect();
    let kappa = |u: f64| example_kappa(u, delta).unwrap_or(f64::NAN);
    let analytic = |eps: f64, floor: f64| example_kappa_integral(eps, floor);
    match divergence_criterion(&kappa, delta, &floors, &[], Some(&analytic)) {
        Ok(r) => {
            let dev = r.max_analytic_deviation.unwrap_or(f64::INFINITY);
            let increasing = r.integrals.windows(2).all(|w| w[1] > w[0]);
            checks.push(
                Check::bound("kappa-integral-matches-closed-form", dev, 1e-6)
                    .with_detail(format!("integrals increasing: {increasing}")),
            );
        }
        Err(e) => checks.push(Check::failed("kappa-integral-matches-closed-form", e)),
    }
    match staircase_modulus_violation(2.0, 20) {
        Ok(r) => checks.push(Check::flag(
            "staircase-modulus-violation",
            r.all_valid,
            format!("{} witnesses with gap 1", r.witnesses.len()),
        )),
        Err(e) => checks.push(Check::failed("staircase-modulus-violation", e)),
    }

    match cfg.coefficients() {
        Ok(c) => {
            let drift = Component::drift(&c);
            let t = default_t_samples(cfg.noise.horizon);
            let radii = [1.0, 2.0, 4.0, 8.0];
            match estimate_local_lipschitz(&drift, &t, &radii, 256, 0, None) {
                Ok(r) => checks.push(Check::flag(
                    "drift-local-lipschitz",
                    r.pass(),
                    format!("L_n = {:?}", r.estimates.iter().map(|e| e.estimate).collect::<Vec<_>>()),
                )),
                Err(e) => checks.push(Check::failed("drift-local-lipschitz", e)),
            }
            if c.regularity.linear_growth {
                match check_linear_growth(&drift, &t, &radii, 256, 0, None) {
                    Ok(r) => checks.push(Check::flag(
                        "drift-linear-growth",
                        r.pass(),
                        format!("K estimate {}", r.max_estimate()),
                    )),
                    Err(e) => checks.push(Check::failed("drift-linear-growth", e)),
                }
            }
        }
        Err(e) => checks.push(Check::failed("coefficients", e)),
    }
    checks
}
