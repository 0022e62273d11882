//! Strong solutions in the (dilated) state space: Euler–Maruyama with
//! compensated small jumps, interlacing at large-jump times, and the
//! retraction-based globalization and localization procedures.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::noise::{large_jump_clock, MarkQuadrature, NoisePath};
use crate::vector::{distance, norm, StateVector};

/// `a(t, y)`, written into `out` (length `dim`).
pub type DriftFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;
/// `b(t, y)` as a row-major `dim x noise_dim` matrix written into `out`.
pub type DiffusionFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;
/// `c(t, y, x)`, written into `out` (length `dim`).
pub type JumpFn = dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync;

/// Declared regularity of a coefficient triple. Advisory: the conditions
/// module can check these claims independently.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Regularity {
    pub globally_lipschitz: bool,
    pub locally_lipschitz: bool,
    pub linear_growth: bool,
    pub locally_bounded: bool,
}

impl Regularity {
    pub const LIPSCHITZ: Regularity = Regularity {
        globally_lipschitz: true,
        locally_lipschitz: true,
        linear_growth: true,
        locally_bounded: true,
    };

    pub const LOCAL: Regularity = Regularity {
        globally_lipschitz: false,
        locally_lipschitz: true,
        linear_growth: false,
        locally_bounded: true,
    };

    pub const LOCAL_LINEAR_GROWTH: Regularity = Regularity {
        globally_lipschitz: false,
        locally_lipschitz: true,
        linear_growth: true,
        locally_bounded: true,
    };

    fn supports_global(&self) -> bool {
        self.globally_lipschitz || (self.locally_lipschitz && self.linear_growth)
    }

    fn supports_local(&self) -> bool {
        self.globally_lipschitz
            || (self.locally_lipschitz && (self.locally_bounded || self.linear_growth))
    }
}

/// Drift, diffusion and jump coefficients. Missing components are zero.
#[derive(Clone)]
pub struct CoefficientSet {
    dim: usize,
    noise_dim: usize,
    mark_dim: usize,
    drift: Option<Arc<DriftFn>>,
    diffusion: Option<Arc<DiffusionFn>>,
    jump: Option<Arc<JumpFn>>,
    pub regularity: Regularity,
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .field("mark_dim", &self.mark_dim)
            .field("drift", &self.drift.is_some())
            .field("diffusion", &self.diffusion.is_some())
            .field("jump", &self.jump.is_some())
            .field("regularity", &self.regularity)
            .finish()
    }
}

impl CoefficientSet {
    /// The zero coefficients on a `dim`-dimensional space driven by
    /// `noise_dim` Wiener coordinates.
    pub fn new(dim: usize, noise_dim: usize) -> Self {
        CoefficientSet {
            dim,
            noise_dim,
            mark_dim: 0,
            drift: None,
            diffusion: None,
            jump: None,
            regularity: Regularity::LIPSCHITZ,
        }
    }

    pub fn with_drift<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.drift = Some(Arc::new(f));
        self
    }

    pub fn with_diffusion<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.diffusion = Some(Arc::new(f));
        self
    }

    pub fn with_jump<F>(mut self, mark_dim: usize, f: F) -> Self
    where
        F: Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.mark_dim = mark_dim;
        self.jump = Some(Arc::new(f));
        self
    }

    pub fn with_regularity(mut self, regularity: Regularity) -> Self {
        self.regularity = regularity;
        self
    }

    pub(crate) fn from_parts(
        dim: usize,
        noise_dim: usize,
        mark_dim: usize,
        drift: Option<Arc<DriftFn>>,
        diffusion: Option<Arc<DiffusionFn>>,
        jump: Option<Arc<JumpFn>>,
        regularity: Regularity,
    ) -> Self {
        CoefficientSet { dim, noise_dim, mark_dim, drift, diffusion, jump, regularity }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn mark_dim(&self) -> usize {
        self.mark_dim
    }

    pub fn has_drift(&self) -> bool {
        self.drift.is_some()
    }

    pub fn has_diffusion(&self) -> bool {
        self.diffusion.is_some()
    }

    pub fn has_jump(&self) -> bool {
        self.jump.is_some()
    }

    pub(crate) fn drift_fn(&self) -> Option<&Arc<DriftFn>> {
        self.drift.as_ref()
    }

    pub(crate) fn diffusion_fn(&self) -> Option<&Arc<DiffusionFn>> {
        self.diffusion.as_ref()
    }

    pub(crate) fn jump_fn(&self) -> Option<&Arc<JumpFn>> {
        self.jump.as_ref()
    }

    #[inline]
    pub fn drift_into(&self, t: f64, y: &[f64], out: &mut [f64]) {
        match &self.drift {
            Some(f) => f(t, y, out),
            None => out.fill(0.0),
        }
    }

    #[inline]
    pub fn diffusion_into(&self, t: f64, y: &[f64], out: &mut [f64]) {
        match &self.diffusion {
            Some(f) => f(t, y, out),
            None => out.fill(0.0),
        }
    }

    #[inline]
    pub fn jump_into(&self, t: f64, y: &[f64], x: &[f64], out: &mut [f64]) {
        match &self.jump {
            Some(f) => f(t, y, x, out),
            None => out.fill(0.0),
        }
    }

    pub fn drift(&self, t: f64, y: &[f64]) -> StateVector {
        let mut out = StateVector::zeros(self.dim);
        self.drift_into(t, y, &mut out);
        out
    }

    /// Row-major `dim x noise_dim` matrix.
    pub fn diffusion(&self, t: f64, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim * self.noise_dim];
        self.diffusion_into(t, y, &mut out);
        out
    }

    pub fn jump(&self, t: f64, y: &[f64], x: &[f64]) -> StateVector {
        let mut out = StateVector::zeros(self.dim);
        self.jump_into(t, y, x, &mut out);
        out
    }

    /// Every coefficient composed with the retraction onto the closed ball of
    /// radius `k`.
    pub fn retracted(&self, k: f64) -> CoefficientSet {
        fn with_retraction<R>(k: f64, y: &[f64], f: impl FnOnce(&[f64]) -> R) -> R {
            let r = norm(y);
            if r <= k {
                f(y)
            } else {
                let scale = k / r;
                let z: Vec<f64> = y.iter().map(|v| v * scale).collect();
                f(&z)
            }
        }
        let drift = self.drift.clone().map(|f| -> Arc<DriftFn> {
            Arc::new(move |t, y, out| with_retraction(k, y, |z| f(t, z, out)))
        });
        let diffusion = self.diffusion.clone().map(|f| -> Arc<DiffusionFn> {
            Arc::new(move |t, y, out| with_retraction(k, y, |z| f(t, z, out)))
        });
        let jump = self.jump.clone().map(|f| -> Arc<JumpFn> {
            Arc::new(move |t, y, x, out| with_retraction(k, y, |z| f(t, z, x, out)))
        });
        CoefficientSet { drift, diffusion, jump, ..self.clone() }
    }
}

/// `base(tau + t, y) 1_Gamma`: coefficients restarted at time `tau`, switched
/// off on paths outside the event `Gamma`.
#[derive(Debug, Clone)]
pub struct ShiftedCoefficients {
    pub base: CoefficientSet,
    pub offset: f64,
    pub gate: bool,
}

impl ShiftedCoefficients {
    pub fn new(base: CoefficientSet, offset: f64, gate: bool) -> Self {
        ShiftedCoefficients { base, offset, gate }
    }

    pub fn coefficients(&self) -> CoefficientSet {
        let base = &self.base;
        if !self.gate {
            return CoefficientSet {
                drift: None,
                diffusion: None,
                jump: None,
                ..base.clone()
            };
        }
        let tau = self.offset;
        let drift = base.drift.clone().map(|f| -> Arc<DriftFn> {
            Arc::new(move |t, y, out| f(tau + t, y, out))
        });
        let diffusion = base.diffusion.clone().map(|f| -> Arc<DiffusionFn> {
            Arc::new(move |t, y, out| f(tau + t, y, out))
        });
        let jump = base.jump.clone().map(|f| -> Arc<JumpFn> {
            Arc::new(move |t, y, x, out| f(tau + t, y, x, out))
        });
        CoefficientSet { drift, diffusion, jump, ..base.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOpts {
    pub dt: f64,
    pub horizon: f64,
    pub k_min: f64,
    pub k_max: f64,
    pub blowup_threshold: f64,
    /// Quadrature nodes per mark dimension for the compensator.
    pub quad_n: usize,
    /// Lets `solve_no_large_jumps` run on noise that has large jumps.
    pub ignore_large_jumps: bool,
}

impl Default for SolverOpts {
    fn default() -> Self {
        SolverOpts {
            dt: 1e-3,
            horizon: 1.0,
            k_min: 1.0,
            k_max: 65536.0,
            blowup_threshold: 1e12,
            quad_n: 32,
            ignore_large_jumps: false,
        }
    }
}

impl SolverOpts {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::validation("dt", "must be positive"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::validation("horizon", "must be positive"));
        }
        if !(self.k_min > 0.0) {
            return Err(Error::validation("k_min", "must be positive"));
        }
        if !(self.k_max >= self.k_min) {
            return Err(Error::validation("k_max", "must be at least k_min"));
        }
        if !(self.blowup_threshold > 0.0) {
            return Err(Error::validation("blowup_threshold", "must be positive"));
        }
        if self.quad_n == 0 {
            return Err(Error::validation("quad_n", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LifetimeReason {
    Horizon,
    TruncationLevelK,
    UserStop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lifetime {
    pub time: f64,
    pub reason: LifetimeReason,
    /// Truncation radius for `TruncationLevelK`.
    pub level: Option<f64>,
}

/// Adaptive truncation used by the globalized solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub level: f64,
    pub escalations: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub node: usize,
    pub time: f64,
    pub is_large: bool,
    pub mark: Vec<f64>,
    /// State just before the jump.
    pub left_limit: StateVector,
    /// Applied jump; `value = left_limit + increment` for a large jump.
    pub increment: StateVector,
}

/// Grid-sampled cadlag path with left limits at jump nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    values: Vec<f64>,
    jumps: Vec<JumpRecord>,
    lifetime: Lifetime,
    truncation: Option<Truncation>,
}

impl Trajectory {
    pub fn new(dim: usize) -> Self {
        Trajectory {
            dim,
            times: Vec::new(),
            values: Vec::new(),
            jumps: Vec::new(),
            lifetime: Lifetime { time: 0.0, reason: LifetimeReason::Horizon, level: None },
            truncation: None,
        }
    }

    pub fn push(&mut self, t: f64, y: &[f64]) {
        debug_assert_eq!(y.len(), self.dim);
        self.times.push(t);
        self.values.extend_from_slice(y);
        self.lifetime.time = t;
    }

    pub fn push_jump(&mut self, record: JumpRecord) {
        self.jumps.push(record);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn last(&self) -> &[f64] {
        self.value(self.len() - 1)
    }

    pub fn jumps(&self) -> &[JumpRecord] {
        &self.jumps
    }

    pub fn large_jumps(&self) -> impl Iterator<Item = &JumpRecord> {
        self.jumps.iter().filter(|j| j.is_large)
    }

    /// First recorded left limit at `node`, if the node carries a jump.
    pub fn left_limit_at(&self, node: usize) -> Option<&[f64]> {
        let i = self.jumps.partition_point(|j| j.node < node);
        self.jumps.get(i).filter(|j| j.node == node).map(|j| j.left_limit.as_slice())
    }

    pub fn lifetime(&self) -> Lifetime {
        self.lifetime
    }

    pub fn set_lifetime(&mut self, lifetime: Lifetime) {
        self.lifetime = lifetime;
    }

    pub fn truncation(&self) -> Option<Truncation> {
        self.truncation
    }

    pub fn set_truncation(&mut self, truncation: Option<Truncation>) {
        self.truncation = truncation;
    }

    /// Drops every node after `last`.
    pub fn truncate(&mut self, last: usize) {
        self.times.truncate(last + 1);
        self.values.truncate((last + 1) * self.dim);
        self.jumps.retain(|j| j.node <= last);
        self.lifetime.time = self.times[last];
    }

    /// `max_i |self_i - other_i|` over the common prefix of nodes.
    pub fn sup_distance(&self, other: &Trajectory) -> f64 {
        let n = self.len().min(other.len());
        (0..n)
            .map(|i| distance(self.value(i), other.value(i)))
            .fold(0.0, f64::max)
    }

    /// Values agree bit for bit, node by node.
    pub fn bitwise_eq_values(&self, other: &Trajectory) -> bool {
        self.times.len() == other.times.len()
            && self.times.iter().zip(&other.times).all(|(a, b)| a.to_bits() == b.to_bits())
            && self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// `time, y_0.., is_jump_node, left_0..`; left-limit cells are empty away
    /// from jump nodes.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = vec!["time".to_string()];
        header.extend((0..self.dim).map(|i| format!("y{i}")));
        header.push("is_jump_node".into());
        header.extend((0..self.dim).map(|i| format!("left{i}")));
        writeln!(w, "{}", header.join(","))?;
        let mut line = String::new();
        for i in 0..self.len() {
            use std::fmt::Write as _;
            line.clear();
            let _ = write!(line, "{}", self.times[i]);
            for v in self.value(i) {
                let _ = write!(line, ",{v}");
            }
            match self.left_limit_at(i) {
                Some(left) => {
                    line.push_str(",1");
                    for v in left {
                        let _ = write!(line, ",{v}");
                    }
                }
                None => {
                    line.push_str(",0");
                    for _ in 0..self.dim {
                        line.push(',');
                    }
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Which of the solution procedures to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Retraction with adaptive truncation level.
    Global,
    /// Truncation at the level picked by the initial condition.
    Local,
    /// Interlacing with coefficients used as given.
    Interlace,
    /// Jump-free equation (large jumps not applied).
    NoLargeJumps,
}

pub fn solve(
    regime: Regime,
    coeff: &CoefficientSet,
    y0: &[f64],
    noise: &NoisePath,
    opts: &SolverOpts,
) -> Result<Trajectory> {
    match regime {
        Regime::Global => globalize_solve(coeff, y0, noise, opts),
        Regime::Local => local_solve(coeff, y0, noise, opts),
        Regime::Interlace => interlace_solve(coeff, y0, noise, opts),
        Regime::NoLargeJumps => solve_no_large_jumps(coeff, y0, noise, opts),
    }
}

struct Stepper<'a> {
    coeff: &'a CoefficientSet,
    noise: &'a NoisePath,
    quad: Option<MarkQuadrature>,
    blowup: f64,
    exit_radius: Option<f64>,
    drift: Vec<f64>,
    diffusion: Vec<f64>,
    comp: Vec<f64>,
    scratch: Vec<f64>,
    jump: Vec<f64>,
    left: Vec<f64>,
}

/// Where a stepping pass stopped.
enum Stop {
    Reached,
    Exited { node: usize },
}

impl<'a> Stepper<'a> {
    fn new(
        coeff: &'a CoefficientSet,
        y0: &[f64],
        noise: &'a NoisePath,
        opts: &SolverOpts,
        exit_radius: Option<f64>,
    ) -> Result<Self> {
        opts.validate()?;
        check_dim(coeff.dim(), y0.len())?;
        check_dim(coeff.noise_dim(), noise.wiener_dim())?;
        if !y0.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("initial value must be finite".into()));
        }
        let quad = if coeff.has_jump() {
            if !noise.jumps().is_empty() || noise.marks().intensity_small > 0.0 {
                check_dim(coeff.mark_dim(), noise.marks().mark_dim)?;
            }
            noise.marks().small_quadrature(opts.quad_n)?
        } else {
            None
        };
        let d = coeff.dim();
        Ok(Stepper {
            coeff,
            noise,
            quad,
            blowup: opts.blowup_threshold,
            exit_radius,
            drift: vec![0.0; d],
            diffusion: vec![0.0; d * coeff.noise_dim()],
            comp: vec![0.0; d],
            scratch: vec![0.0; d],
            jump: vec![0.0; d],
            left: vec![0.0; d],
        })
    }

    /// Euler step over `cell` from `y` into `out`, plus the small jumps at
    /// the right endpoint evaluated at the left-endpoint state.
    fn step(&mut self, cell: usize, y: &[f64], out: &mut [f64], traj: &mut Trajectory) {
        let (coeff, noise) = (self.coeff, self.noise);
        let t = noise.time(cell);
        let dt = noise.dt(cell);
        let dw = noise.increment(cell);
        let nw = dw.len();
        coeff.drift_into(t, y, &mut self.drift);
        let diffuse = coeff.has_diffusion();
        if diffuse {
            coeff.diffusion_into(t, y, &mut self.diffusion);
        }
        let compensate = match &self.quad {
            Some(q) => {
                let scratch = &mut self.scratch;
                q.integrate(&mut self.comp, scratch, |x, buf| coeff.jump_into(t, y, x, buf));
                true
            }
            None => false,
        };
        for i in 0..y.len() {
            let mut v = y[i] + self.drift[i] * dt;
            if diffuse {
                let row = &self.diffusion[i * nw..(i + 1) * nw];
                v += row.iter().zip(dw).map(|(b, w)| b * w).sum::<f64>();
            }
            if compensate {
                v -= self.comp[i] * dt;
            }
            out[i] = v;
        }

        let node = cell + 1;
        let jumps = noise.jumps_at(node);
        if jumps.iter().any(|j| !j.is_large) && coeff.has_jump() {
            self.left.copy_from_slice(out);
            let mut total = vec![0.0; y.len()];
            for j in jumps.iter().filter(|j| !j.is_large) {
                coeff.jump_into(noise.jump_time(j), y, &j.mark, &mut self.jump);
                for i in 0..y.len() {
                    out[i] += self.jump[i];
                    total[i] += self.jump[i];
                }
            }
            let first = jumps.iter().find(|j| !j.is_large).unwrap();
            traj.push_jump(JumpRecord {
                node,
                time: noise.time(node),
                is_large: false,
                mark: first.mark.clone(),
                left_limit: StateVector::from(self.left.as_slice()),
                increment: StateVector::from(total),
            });
        }
    }

    fn check(&self, node: usize, y: &[f64]) -> Result<bool> {
        let r = norm(y);
        if !r.is_finite() || r > self.blowup {
            return Err(Error::NumericalBlowup { time: self.noise.time(node), norm: r });
        }
        Ok(matches!(self.exit_radius, Some(k) if r > k))
    }

    /// Steps the jump-free equation from node `from` (state = last value of
    /// `traj`) to node `to`.
    fn advance(&mut self, from: usize, to: usize, traj: &mut Trajectory) -> Result<Stop> {
        let d = self.coeff.dim();
        let mut y = traj.last().to_vec();
        let mut next = vec![0.0; d];
        for cell in from..to {
            self.step(cell, &y, &mut next, traj);
            let node = cell + 1;
            traj.push(self.noise.time(node), &next);
            std::mem::swap(&mut y, &mut next);
            if self.check(node, &y)? {
                return Ok(Stop::Exited { node });
            }
        }
        Ok(Stop::Reached)
    }

    /// Replaces the value at `node` (the last one) by the post-jump state.
    fn apply_large_jumps(&mut self, node: usize, traj: &mut Trajectory) -> Result<bool> {
        let noise = self.noise;
        let d = self.coeff.dim();
        for j in noise.jumps_at(node).iter().filter(|j| j.is_large) {
            let left = StateVector::from(traj.last());
            let increment = self.coeff.jump(noise.jump_time(j), &left, &j.mark);
            let value: Vec<f64> = left.iter().zip(increment.iter()).map(|(l, c)| l + c).collect();
            let last = traj.len() - 1;
            traj.values[last * d..].copy_from_slice(&value);
            traj.push_jump(JumpRecord {
                node,
                time: noise.time(node),
                is_large: true,
                mark: j.mark.clone(),
                left_limit: left,
                increment,
            });
        }
        self.check(node, traj.last())
    }
}

struct Run {
    trajectory: Trajectory,
    exit: Option<usize>,
}

fn run(
    coeff: &CoefficientSet,
    y0: &[f64],
    noise: &NoisePath,
    opts: &SolverOpts,
    interlace: bool,
    exit_radius: Option<f64>,
) -> Result<Run> {
    let mut stepper = Stepper::new(coeff, y0, noise, opts, exit_radius)?;
    let mut traj = Trajectory::new(coeff.dim());
    traj.push(noise.time(0), y0);
    let last = noise.len() - 1;
    let mut boundaries = if interlace {
        large_jump_clock(noise)?.nodes
    } else {
        vec![0]
    };
    if *boundaries.last().unwrap() != last {
        boundaries.push(last);
    }
    if stepper.check(0, y0)? {
        return Ok(Run { trajectory: traj, exit: Some(0) });
    }
    for seg in boundaries.windows(2) {
        if let Stop::Exited { node } = stepper.advance(seg[0], seg[1], &mut traj)? {
            return Ok(Run { trajectory: traj, exit: Some(node) });
        }
        if interlace && stepper.apply_large_jumps(seg[1], &mut traj)? {
            return Ok(Run { trajectory: traj, exit: Some(seg[1]) });
        }
    }
    Ok(Run { trajectory: traj, exit: None })
}

/// Euler–Maruyama for the equation without large jumps.
pub fn solve_no_large_jumps(
    coeff: &CoefficientSet,
    y0: &[f64],
    noise: &NoisePath,
    opts: &SolverOpts,
) -> Result<Trajectory> {
    if noise.has_large_jumps() && !opts.ignore_large_jumps {
        return Err(Error::validation(
            "ignore_large_jumps",
            "noise has large jumps; set ignore_large_jumps or use interlace_solve",
        ));
    }
    Ok(run(coeff, y0, noise, opts, false, None)?.trajectory)
}

/// Jump-free solves between consecutive large-jump times, with the jump map
/// applied to the left limit at each of them.
pub fn interlace_solve(
    coeff: &CoefficientSet,
    y0: &[f64],
    noise: &NoisePath,
    opts: &SolverOpts,
) -> Result<Trajectory> {
    Ok(run(coeff, y0, noise, opts, true, None)?.trajectory)
}

/// Interlaced solve with retracted coefficients; the truncation radius is
/// doubled (and the solve restarted) until the path stays inside it.
pub fn globalize_solve(
    coeff: &CoefficientSet,
    y0: &[f64],
    noise: &NoisePath,
    opts: &SolverOpts,
) -> Result<Trajectory> {
    if !coeff.regularity.supports_global() {
        return Err(Error::UnsupportedRegime(
            "global solve needs locally Lipschitz coefficients with linear growth".into(),
        ));
    }
    opts.validate()?;
    let mut k = opts.k_min.max(2.0 * norm(y0).ceil());
    let mut escalations = 0;
    loop {
        if k > opts.k_max {
            return Err(Error::NonExplosionViolated { k, k_max: opts.k_max, time: f64::NAN });
        }
        let run = run(&coeff.retracted(k), y0, noise, opts, true, Some(k))?;
        match run.exit {
            None => {
                let mut traj = run.trajectory;
                traj.truncation = Some(Truncation { level: k, escalations });
                return Ok(traj);
            }
            Some(node) => {
                let time = noise.time(node);
                k *= 2.0;
                escalations += 1;
                if k > opts.k_max {
                    return Err(Error::NonExplosionViolated { k, k_max: opts.k_max, time });
                }
            }
        }
    }
}

/// Truncation level of the partition cell `{|y0| in [k-1, k)}`.
pub fn local_level(y0: &[f64]) -> f64 {
    norm(y0).floor() + 1.0
}

/// Retracted solve stopped at the first exit from the ball of radius
/// [`local_level`].
pub fn local_solve(
    coeff: &CoefficientSet,
    y0: &[f64],
    noise: &NoisePath,
    opts: &SolverOpts,
) -> Result<Trajectory> {
    if !coeff.regularity.supports_local() {
        return Err(Error::UnsupportedRegime(
            "local solve needs locally Lipschitz, locally bounded coefficients".into(),
        ));
    }
    let k = local_level(y0);
    let run = run(&coeff.retracted(k), y0, noise, opts, true, Some(k))?;
    let mut traj = run.trajectory;
    traj.truncation = Some(Truncation { level: k, escalations: 0 });
    if let Some(node) = run.exit {
        traj.truncate(node);
        traj.set_lifetime(Lifetime {
            time: noise.time(node),
            reason: LifetimeReason::TruncationLevelK,
            level: Some(k),
        });
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub sup_distance: f64,
    /// Common lifetime of both solutions; the distance is taken up to here.
    pub compared_until: f64,
    pub nodes_compared: usize,
    pub initial_equal: bool,
    /// Both solves produced the same values bit for bit.
    pub bitwise_equal: bool,
}

/// Two independent solves on the same noise path.
pub fn uniqueness_probe(
    regime: Regime,
    coeff: &CoefficientSet,
    y0: &[f64],
    y0_other: &[f64],
    noise: &NoisePath,
    opts: &SolverOpts,
) -> Result<UniquenessReport> {
    let a = solve(regime, coeff, y0, noise, opts)?;
    let b = solve(regime, coeff, y0_other, noise, opts)?;
    let nodes = a.len().min(b.len());
    Ok(UniquenessReport {
        sup_distance: a.sup_distance(&b),
        compared_until: a.time(nodes - 1),
        nodes_compared: nodes,
        initial_equal: y0 == y0_other,
        bitwise_equal: a.bitwise_eq_values(&b),
    })
}
