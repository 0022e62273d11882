//! Mild solutions of semilinear SPDEs via the moving frame: transform the
//! coefficients through a dilation, solve the SDE in the dilation space, and
//! read off `Z = project U Y`. An exponential-Euler scheme that never touches
//! the dilation serves as an independent reference.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::hilbert::{check_dilation, DiagramReport, DilationTriple, Semigroup, SemigroupSpec};
use crate::noise::NoisePath;
use crate::sde::{
    self, CoefficientSet, DiffusionFn, DriftFn, JumpFn, JumpRecord, Regime, SolverOpts,
    Trajectory,
};
use crate::vector::{axpy, distance, norm, StateVector};

/// Tolerance the dilation diagram must meet before a problem is accepted.
pub const DEFAULT_DIAGRAM_TOL: f64 = 1e-8;

const CAPACITY_CHECKED: &str = "dilation capacity is checked against the horizon on construction";

#[derive(Debug, Clone)]
pub struct SpdeProblem {
    semigroup_spec: SemigroupSpec,
    semigroup: Semigroup,
    dilation: Arc<DilationTriple>,
    coefficients: CoefficientSet,
    z0: StateVector,
    horizon: f64,
    diagram: DiagramReport,
}

impl SpdeProblem {
    /// Validates dimensions, dilation capacity over `[0, horizon]` and the
    /// dilation diagram at tolerance `tol`.
    pub fn new(
        semigroup_spec: SemigroupSpec,
        dilation: DilationTriple,
        coefficients: CoefficientSet,
        z0: StateVector,
        horizon: f64,
        tol: f64,
    ) -> Result<Self> {
        let semigroup = semigroup_spec.build()?;
        let m = semigroup.dim();
        check_dim(m, dilation.state_dim())?;
        check_dim(m, coefficients.dim())?;
        check_dim(m, z0.len())?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::validation("horizon", "must be positive"));
        }
        let zero = vec![0.0; dilation.ambient_dim()];
        dilation.group_apply(horizon, &zero)?;
        dilation.group_apply(-horizon, &zero)?;

        let mut probes: Vec<StateVector> = (0..m)
            .step_by((m / 8).max(1))
            .map(|k| {
                let mut e = StateVector::zeros(m);
                e[k] = 1.0;
                e
            })
            .collect();
        probes.push((0..m).map(|k| 1.0 + 0.5 * (k % 3) as f64).collect());
        let times: Vec<f64> = (0..=8).map(|i| horizon * i as f64 / 8.0).collect();
        let diagram = check_dilation(&dilation, &semigroup, &times, &probes, tol)?;
        if !diagram.pass {
            return Err(Error::validation(
                "dilation",
                format!("diagram error {} exceeds tolerance {tol}", diagram.max_error),
            ));
        }
        Ok(SpdeProblem {
            semigroup_spec,
            semigroup,
            dilation: Arc::new(dilation),
            coefficients,
            z0,
            horizon,
            diagram,
        })
    }

    pub fn semigroup_spec(&self) -> &SemigroupSpec {
        &self.semigroup_spec
    }

    pub fn semigroup(&self) -> &Semigroup {
        &self.semigroup
    }

    pub fn dilation(&self) -> &DilationTriple {
        &self.dilation
    }

    pub fn coefficients(&self) -> &CoefficientSet {
        &self.coefficients
    }

    pub fn z0(&self) -> &StateVector {
        &self.z0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn diagram(&self) -> &DiagramReport {
        &self.diagram
    }

    fn check_noise(&self, noise: &NoisePath) -> Result<()> {
        if noise.horizon() > self.horizon * (1.0 + 1e-12) {
            return Err(Error::validation(
                "horizon",
                format!(
                    "noise horizon {} exceeds the problem horizon {}",
                    noise.horizon(),
                    self.horizon
                ),
            ));
        }
        Ok(())
    }

    /// `project U_t y`.
    pub fn frame_to_state(&self, t: f64, y: &[f64]) -> Result<StateVector> {
        self.dilation.project(&self.dilation.group_apply(t, y)?)
    }

    /// `U_{-t} embed h`.
    pub fn state_to_frame(&self, t: f64, h: &[f64]) -> Result<StateVector> {
        self.dilation.group_apply(-t, &self.dilation.embed(h)?)
    }
}

/// `a(t,y) = U_{-t} embed alpha(t, project U_t y)`, likewise for the
/// diffusion (column by column) and the jump coefficient.
pub fn transform_coefficients(p: &SpdeProblem) -> CoefficientSet {
    let base = &p.coefficients;
    let m = base.dim();
    let nw = base.noise_dim();
    let d = p.dilation.clone();
    let pull = {
        let d = d.clone();
        move |t: f64, y: &[f64]| d.project(&d.group_apply(t, y).expect(CAPACITY_CHECKED)).expect(CAPACITY_CHECKED)
    };
    let push = {
        let d = d.clone();
        move |t: f64, h: &[f64]| {
            d.group_apply(-t, &d.embed(h).expect(CAPACITY_CHECKED)).expect(CAPACITY_CHECKED)
        }
    };

    let drift = base.drift_fn().cloned().map(|f| -> Arc<DriftFn> {
        let (pull, push) = (pull.clone(), push.clone());
        Arc::new(move |t, y, out| {
            let z = pull(t, y);
            let mut a = vec![0.0; m];
            f(t, &z, &mut a);
            out.copy_from_slice(&push(t, &a));
        })
    });
    let diffusion = base.diffusion_fn().cloned().map(|f| -> Arc<DiffusionFn> {
        let (pull, push) = (pull.clone(), push.clone());
        Arc::new(move |t, y, out| {
            let z = pull(t, y);
            let mut sigma = vec![0.0; m * nw];
            f(t, &z, &mut sigma);
            let mut column = vec![0.0; m];
            for j in 0..nw {
                for i in 0..m {
                    column[i] = sigma[i * nw + j];
                }
                for (i, v) in push(t, &column).iter().enumerate() {
                    out[i * nw + j] = *v;
                }
            }
        })
    });
    let jump = base.jump_fn().cloned().map(|f| -> Arc<JumpFn> {
        let (pull, push) = (pull.clone(), push.clone());
        Arc::new(move |t, y, x, out| {
            let z = pull(t, y);
            let mut c = vec![0.0; m];
            f(t, &z, x, &mut c);
            out.copy_from_slice(&push(t, &c));
        })
    });
    CoefficientSet::from_parts(
        d.ambient_dim(),
        nw,
        base.mark_dim(),
        drift,
        diffusion,
        jump,
        base.regularity,
    )
}

/// The SDE regime matching the declared regularity of the coefficients.
pub fn regime_for(c: &CoefficientSet) -> Result<Regime> {
    let r = c.regularity;
    if r.globally_lipschitz || (r.locally_lipschitz && r.linear_growth) {
        Ok(Regime::Global)
    } else if r.locally_lipschitz && r.locally_bounded {
        Ok(Regime::Local)
    } else {
        Err(Error::UnsupportedRegime(
            "coefficients must be locally Lipschitz and locally bounded".into(),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualEntry {
    pub t: f64,
    pub residual: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MildSolution {
    /// The mild solution on `H`.
    pub z: Trajectory,
    /// The frame process on the dilation space.
    pub y: Trajectory,
    pub regime: Regime,
    pub residuals: Option<Vec<ResidualEntry>>,
}

/// Maps every node and jump record of a frame trajectory through
/// `project U_t`.
fn project_trajectory(p: &SpdeProblem, y: &Trajectory) -> Result<Trajectory> {
    let mut z = Trajectory::new(p.semigroup.dim());
    for i in 0..y.len() {
        let t = y.time(i);
        z.push(t, &p.frame_to_state(t, y.value(i))?);
    }
    for rec in y.jumps() {
        z.push_jump(JumpRecord {
            left_limit: p.frame_to_state(rec.time, &rec.left_limit)?,
            increment: p.frame_to_state(rec.time, &rec.increment)?,
            ..rec.clone()
        });
    }
    z.set_lifetime(y.lifetime());
    z.set_truncation(y.truncation());
    Ok(z)
}

/// Solves the transformed SDE with `Y_0 = embed z0` and projects.
pub fn mild_solve_moving_frame(
    p: &SpdeProblem,
    noise: &NoisePath,
    opts: &SolverOpts,
) -> Result<MildSolution> {
    p.check_noise(noise)?;
    let regime = regime_for(&p.coefficients)?;
    let frame = transform_coefficients(p);
    let y0 = p.dilation.embed(&p.z0)?;
    let y = sde::solve(regime, &frame, &y0, noise, opts)?;
    let z = project_trajectory(p, &y)?;
    Ok(MildSolution { z, y, regime, residuals: None })
}

/// Left-point increment `alpha dt + sigma dW - (∫_B gamma dF) dt` over `cell`.
struct Increments<'a> {
    c: &'a CoefficientSet,
    noise: &'a NoisePath,
    quad: Option<crate::noise::MarkQuadrature>,
    drift: Vec<f64>,
    diffusion: Vec<f64>,
    comp: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> Increments<'a> {
    fn new(c: &'a CoefficientSet, noise: &'a NoisePath, quad_n: usize) -> Result<Self> {
        check_dim(c.noise_dim(), noise.wiener_dim())?;
        let quad = if c.has_jump() { noise.marks().small_quadrature(quad_n)? } else { None };
        let m = c.dim();
        Ok(Increments {
            c,
            noise,
            quad,
            drift: vec![0.0; m],
            diffusion: vec![0.0; m * c.noise_dim()],
            comp: vec![0.0; m],
            scratch: vec![0.0; m],
        })
    }

    fn eval(&mut self, cell: usize, z: &[f64], out: &mut [f64]) {
        let c = self.c;
        let t = self.noise.time(cell);
        let dt = self.noise.dt(cell);
        let dw = self.noise.increment(cell);
        let nw = dw.len();
        c.drift_into(t, z, &mut self.drift);
        if c.has_diffusion() {
            c.diffusion_into(t, z, &mut self.diffusion);
        }
        if let Some(q) = &self.quad {
            q.integrate(&mut self.comp, &mut self.scratch, |x, buf| c.jump_into(t, z, x, buf));
        }
        for i in 0..z.len() {
            let mut v = self.drift[i] * dt;
            if c.has_diffusion() {
                let row = &self.diffusion[i * nw..(i + 1) * nw];
                v += row.iter().zip(dw).map(|(b, w)| b * w).sum::<f64>();
            }
            if self.quad.is_some() {
                v -= self.comp[i] * dt;
            }
            out[i] = v;
        }
    }
}

/// `Z_{i+1}- = S_dt (Z_i + increment_i)`, then every jump at node `i+1` is
/// added as `gamma(kappa, Z_{kappa-}, xi)`. Works on `H` directly.
pub fn mild_solve_exponential_euler(
    p: &SpdeProblem,
    noise: &NoisePath,
    opts: &SolverOpts,
) -> Result<Trajectory> {
    p.check_noise(noise)?;
    opts.validate()?;
    regime_for(&p.coefficients)?;
    let c = &p.coefficients;
    let m = c.dim();
    if c.has_jump() && !noise.jumps().is_empty() {
        check_dim(c.mark_dim(), noise.marks().mark_dim)?;
    }
    let mut inc = Increments::new(c, noise, opts.quad_n)?;
    let mut traj = Trajectory::new(m);
    let mut z = p.z0.clone();
    traj.push(noise.time(0), &z);
    let mut buf = vec![0.0; m];
    for cell in 0..noise.steps() {
        let node = cell + 1;
        inc.eval(cell, &z, &mut buf);
        axpy(1.0, &z, &mut buf);
        z = p.semigroup.propagate(noise.time(cell), noise.time(node), &buf)?;
        if c.has_jump() {
            for j in noise.jumps_at(node) {
                let left = z.clone();
                let increment = c.jump(noise.jump_time(j), &left, &j.mark);
                axpy(1.0, &increment, &mut z);
                traj.push_jump(JumpRecord {
                    node,
                    time: noise.time(node),
                    is_large: j.is_large,
                    mark: j.mark.clone(),
                    left_limit: left,
                    increment,
                });
            }
        }
        let r = norm(&z);
        if !r.is_finite() || r > opts.blowup_threshold {
            return Err(Error::NumericalBlowup { time: noise.time(node), norm: r });
        }
        traj.push(noise.time(node), &z);
    }
    Ok(traj)
}

/// Discretized frame process
/// `Y_t = embed z0 + sum U_{-t_i} embed(increment_i) + sum U_{-kappa} embed gamma(kappa, Z_{kappa-}, xi)`.
pub fn reconstruct_frame_process(
    p: &SpdeProblem,
    z: &Trajectory,
    noise: &NoisePath,
) -> Result<Trajectory> {
    p.check_noise(noise)?;
    check_dim(p.semigroup.dim(), z.dim())?;
    if z.len() > noise.len() {
        return Err(Error::Shape { expected: noise.len(), got: z.len() });
    }
    let c = &p.coefficients;
    let mut inc = Increments::new(c, noise, SolverOpts::default().quad_n)?;
    let mut y = p.dilation.embed(z.value(0))?;
    let mut traj = Trajectory::new(y.len());
    traj.push(noise.time(0), &y);
    let mut buf = vec![0.0; c.dim()];
    for cell in 0..z.len() - 1 {
        let node = cell + 1;
        inc.eval(cell, z.value(cell), &mut buf);
        axpy(1.0, &p.state_to_frame(noise.time(cell), &buf)?, &mut y);
        if c.has_jump() {
            for j in noise.jumps_at(node) {
                let kappa = noise.jump_time(j);
                let left = z.left_limit_at(node).unwrap_or(z.value(cell));
                let jump = p.state_to_frame(kappa, &c.jump(kappa, left, &j.mark))?;
                let before = y.clone();
                axpy(1.0, &jump, &mut y);
                traj.push_jump(JumpRecord {
                    node,
                    time: noise.time(node),
                    is_large: j.is_large,
                    mark: j.mark.clone(),
                    left_limit: before,
                    increment: jump,
                });
            }
        }
        traj.push(noise.time(node), &y);
    }
    traj.set_lifetime(z.lifetime());
    Ok(traj)
}

/// Residual of the stopped variation-of-constants formula at every node of
/// `z`, evaluated directly (quadratic cost) with the solvers' left-point rule.
pub fn mild_residuals(
    p: &SpdeProblem,
    z: &Trajectory,
    noise: &NoisePath,
    quad_n: usize,
) -> Result<Vec<ResidualEntry>> {
    p.check_noise(noise)?;
    check_dim(p.semigroup.dim(), z.dim())?;
    let c = &p.coefficients;
    let m = c.dim();
    let n = z.len();
    let mut inc = Increments::new(c, noise, quad_n)?;
    let mut increments = Vec::with_capacity(n.saturating_sub(1));
    for cell in 0..n - 1 {
        let mut buf = vec![0.0; m];
        inc.eval(cell, z.value(cell), &mut buf);
        increments.push(buf);
    }
    // (node, time, gamma(kappa, Z_{kappa-}, xi))
    let mut jumps: Vec<(usize, f64, StateVector)> = Vec::new();
    if c.has_jump() {
        for j in noise.jumps().iter().filter(|j| j.node < n) {
            let kappa = noise.jump_time(j);
            let left = z.left_limit_at(j.node).unwrap_or(z.value(j.node - 1));
            jumps.push((j.node, kappa, c.jump(kappa, left, &j.mark)));
        }
    }
    let sg = &p.semigroup;
    let mut out = Vec::with_capacity(n);
    for node in 0..n {
        let t = noise.time(node);
        let mut formula = sg.propagate(0.0, t, z.value(0))?;
        for (cell, incr) in increments.iter().enumerate().take(node) {
            axpy(1.0, &sg.propagate(noise.time(cell), t, incr)?, &mut formula);
        }
        for (_, kappa, g) in jumps.iter().filter(|(jn, _, _)| *jn <= node) {
            axpy(1.0, &sg.propagate(*kappa, t, g)?, &mut formula);
        }
        let dt = if node == 0 { 0.0 } else { noise.dt(node - 1) };
        out.push(ResidualEntry { t, residual: distance(z.value(node), &formula), dt });
    }
    Ok(out)
}

/// Residual at the grid time `t`.
pub fn mild_residual(
    p: &SpdeProblem,
    z: &Trajectory,
    noise: &NoisePath,
    t: f64,
    quad_n: usize,
) -> Result<f64> {
    let node = noise.node_of(t).ok_or(Error::Alignment { time: t })?;
    if node >= z.len() {
        return Err(Error::Domain(format!("t = {t} lies beyond the lifetime")));
    }
    let prefix = truncated(z, node);
    Ok(mild_residuals(p, &prefix, noise, quad_n)?[node].residual)
}

fn truncated(z: &Trajectory, node: usize) -> Trajectory {
    let mut out = z.clone();
    out.truncate(node);
    out
}

impl MildSolution {
    pub fn with_residuals(mut self, p: &SpdeProblem, noise: &NoisePath, quad_n: usize) -> Result<Self> {
        self.residuals = Some(mild_residuals(p, &self.z, noise, quad_n)?);
        Ok(self)
    }
}
