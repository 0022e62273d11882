//! Sampled checks of the regularity hypotheses (local Lipschitz, linear
//! growth, local boundedness), the comparison condition
//! `|a(y1) - a(y2)|^p <= kappa(|y1 - y2|^p)` with its divergence criterion,
//! and the two scalar examples that separate the two existence theories.
//!
//! All estimates are sampled maxima, not certified bounds.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{MarkMeasureSpec, QWienerSpec};
use crate::quadrature;
use crate::rng::{StreamId, StreamKey};
use crate::sde::CoefficientSet;
use crate::vector::{distance, norm, retract};

/// Maps `(t, y)` to a vector whose Euclidean norm is the norm the condition
/// is stated in (plain for the drift, Hilbert–Schmidt for the diffusion,
/// `L^2(F|_B)` for the jump coefficient).
pub type FeatureFn = dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync;

/// One coefficient component, seen through its feature map.
#[derive(Clone)]
pub struct Component {
    input_dim: usize,
    eval: Arc<FeatureFn>,
}

impl std::fmt::Debug for Component {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Component").field("input_dim", &self.input_dim).finish()
    }
}

impl Component {
    pub fn new<F>(input_dim: usize, f: F) -> Self
    where
        F: Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Component { input_dim, eval: Arc::new(f) }
    }

    /// A time-independent scalar function of a scalar argument.
    pub fn scalar<F>(f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Component::new(1, move |_, y| vec![f(y[0])])
    }

    pub fn drift(c: &CoefficientSet) -> Self {
        let c = c.clone();
        Component::new(c.dim(), move |t, y| c.drift(t, y).into_inner())
    }

    /// Columns scaled by `sqrt(lambda_j)`, so the Euclidean norm of the
    /// feature is the Hilbert–Schmidt norm on `Q^{1/2} U`.
    pub fn diffusion(c: &CoefficientSet, q: &QWienerSpec) -> Result<Self> {
        if q.dim() != c.noise_dim() {
            return Err(Error::Shape { expected: c.noise_dim(), got: q.dim() });
        }
        let c = c.clone();
        let scale: Vec<f64> = q.eigenvalues.iter().map(|l| l.sqrt()).collect();
        Ok(Component::new(c.dim(), move |t, y| {
            let mut b = c.diffusion(t, y);
            for row in b.chunks_mut(scale.len()) {
                for (v, s) in row.iter_mut().zip(&scale) {
                    *v *= s;
                }
            }
            b
        }))
    }

    /// `(sqrt(w_q) c(t, y, x_q))_q` for the compensator quadrature of `F|_B`.
    pub fn jump_l2(c: &CoefficientSet, m: &MarkMeasureSpec, quad_n: usize) -> Result<Self> {
        let quad = m.small_quadrature(quad_n)?;
        let c = c.clone();
        Ok(Component::new(c.dim(), move |t, y| match &quad {
            Some(q) => q
                .nodes
                .iter()
                .zip(&q.weights)
                .flat_map(|(x, w)| {
                    let s = w.sqrt();
                    c.jump(t, y, x).into_inner().into_iter().map(move |v| v * s)
                })
                .collect(),
            None => vec![0.0],
        }))
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn eval(&self, t: f64, y: &[f64]) -> Vec<f64> {
        (self.eval)(t, y)
    }
}

/// `{0, T/2, T}`.
pub fn default_t_samples(horizon: f64) -> Vec<f64> {
    vec![0.0, 0.5 * horizon, horizon]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    LocalLipschitz,
    LinearGrowth,
    LocalBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub t: f64,
    pub y1: Vec<f64>,
    /// Second point of the pair for Lipschitz estimates.
    pub y2: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusEstimate {
    pub radius: f64,
    /// Sampled maximum over the ball of this radius (and all smaller ones).
    pub estimate: f64,
    pub witness: Option<Witness>,
    pub declared: Option<f64>,
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub quantity: Quantity,
    pub samples: usize,
    pub estimates: Vec<RadiusEstimate>,
    /// Evaluations that produced non-finite values (counted, not maximized).
    pub non_finite: usize,
}

impl RegularityReport {
    /// False if any declared bound is exceeded or non-finite values occurred.
    pub fn pass(&self) -> bool {
        self.non_finite == 0 && self.estimates.iter().all(|e| e.pass != Some(false))
    }

    pub fn max_estimate(&self) -> f64 {
        self.estimates.iter().map(|e| e.estimate).fold(0.0, f64::max)
    }
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::validation("radii", "need at least one radius"));
    }
    if radii.iter().any(|r| !(*r >= 1.0 && r.is_finite())) {
        return Err(Error::validation("radii", "radii must be finite and >= 1"));
    }
    if radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::validation("radii", "radii must be strictly increasing"));
    }
    Ok(())
}

fn unit_direction<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let r = norm(&v);
        if r > 1e-300 {
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}

#[derive(Clone, Copy)]
enum Spread {
    /// Uniform in the ball.
    Uniform,
    /// Radius log-uniform in `[1e-12 n, n]`, probing the origin.
    LogRadius,
    /// On the sphere of radius `n`.
    Surface,
}

fn ball_point<R: Rng>(rng: &mut R, d: usize, n: f64, spread: Spread) -> Vec<f64> {
    let dir = unit_direction(rng, d);
    let u: f64 = rng.random();
    let r = match spread {
        Spread::Uniform => n * u.powf(1.0 / d as f64),
        Spread::LogRadius => n * 10f64.powf(-12.0 * u),
        Spread::Surface => n,
    };
    dir.into_iter().map(|x| x * r).collect()
}

/// Random stream for sample `k` of radius slot `slot`; independent of how
/// many samples are drawn, so estimates grow monotonically with `samples`.
fn sample_rng(seed: u64, slot: usize, k: usize) -> rand_chacha::ChaCha12Rng {
    StreamKey::new(seed, ((slot as u64) << 40) | k as u64).rng(StreamId::Sampling)
}

struct Best {
    value: f64,
    witness: Option<Witness>,
    non_finite: usize,
}

impl Best {
    fn new() -> Self {
        Best { value: 0.0, witness: None, non_finite: 0 }
    }

    fn offer(&mut self, value: f64, witness: impl FnOnce() -> Witness) {
        if !value.is_finite() {
            self.non_finite += 1;
        } else if value > self.value || self.witness.is_none() {
            self.value = self.value.max(value);
            self.witness = Some(witness());
        }
    }
}

fn assemble<F>(
    quantity: Quantity,
    radii: &[f64],
    samples: usize,
    declared: F,
    mut per_radius: impl FnMut(usize, f64) -> Best,
) -> RegularityReport
where
    F: Fn(f64) -> Option<f64>,
{
    let mut estimates: Vec<RadiusEstimate> = Vec::with_capacity(radii.len());
    let mut non_finite = 0;
    let mut running = Best::new();
    for (slot, &n) in radii.iter().enumerate() {
        let best = per_radius(slot, n);
        non_finite += best.non_finite;
        if best.witness.is_some() && (best.value > running.value || running.witness.is_none()) {
            running.value = best.value;
            running.witness = best.witness;
        }
        let bound = declared(n);
        estimates.push(RadiusEstimate {
            radius: n,
            estimate: running.value,
            witness: running.witness.clone(),
            declared: bound,
            pass: bound.map(|b| running.value <= b),
        });
    }
    RegularityReport { quantity, samples, estimates, non_finite }
}

/// Sampled `L_n = max ||f(t,y1) - f(t,y2)|| / ||y1 - y2||` over pairs in the
/// ball of radius `n`, for each radius. Pair separations cycle through the
/// scales `n`, `n/100` and `1e-8`.
pub fn estimate_local_lipschitz(
    f: &Component,
    t_samples: &[f64],
    radii: &[f64],
    pair_samples: usize,
    seed: u64,
    declared: Option<f64>,
) -> Result<RegularityReport> {
    check_radii(radii)?;
    if pair_samples == 0 || t_samples.is_empty() {
        return Err(Error::validation("pair_samples", "need at least one pair and one time"));
    }
    let d = f.input_dim();
    Ok(assemble(Quantity::LocalLipschitz, radii, pair_samples, |_| declared, |slot, n| {
        let mut best = Best::new();
        for k in 0..pair_samples {
            let mut rng = sample_rng(seed, slot, k);
            let spread = if k % 2 == 0 { Spread::Uniform } else { Spread::LogRadius };
            let y1 = ball_point(&mut rng, d, n, spread);
            let scale = [n, n / 100.0, 1e-8][(k / 2) % 3];
            let len = scale * (0.5 + 0.5 * rng.random::<f64>());
            let dir = unit_direction(&mut rng, d);
            let shifted: Vec<f64> = y1.iter().zip(&dir).map(|(a, b)| a + len * b).collect();
            let y2 = retract(n, &shifted).into_inner();
            let sep = distance(&y1, &y2);
            if sep == 0.0 {
                continue;
            }
            for &t in t_samples {
                let ratio = distance(&f.eval(t, &y1), &f.eval(t, &y2)) / sep;
                best.offer(ratio, || Witness { t, y1: y1.clone(), y2: Some(y2.clone()) });
            }
        }
        best
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationSweep {
    pub radius: f64,
    pub separations: Vec<f64>,
    pub estimates: Vec<f64>,
    pub witnesses: Vec<Option<Witness>>,
    /// Estimates strictly increase as the separation shrinks.
    pub strictly_increasing: bool,
}

/// Lipschitz ratios restricted to pairs at exactly the given separations
/// (in the ball of radius `n`). Growth as the separation shrinks is the
/// signature of a non-Lipschitz modulus at coincidence.
pub fn lipschitz_at_separations(
    f: &Component,
    t_samples: &[f64],
    n: f64,
    separations: &[f64],
    pair_samples: usize,
    seed: u64,
) -> Result<SeparationSweep> {
    check_radii(&[n])?;
    if separations.iter().any(|s| !(*s > 0.0 && *s < n)) {
        return Err(Error::validation("separations", "separations must lie in (0, n)"));
    }
    let d = f.input_dim();
    let mut estimates = Vec::new();
    let mut witnesses = Vec::new();
    for (slot, &s) in separations.iter().enumerate() {
        let mut best = Best::new();
        for k in 0..pair_samples {
            let mut rng = sample_rng(seed, slot, k);
            let spread = if k % 2 == 0 { Spread::Uniform } else { Spread::LogRadius };
            let mut y1 = ball_point(&mut rng, d, n, spread);
            if norm(&y1) > n - s {
                y1 = retract(n - s, &y1).into_inner();
            }
            let dir = unit_direction(&mut rng, d);
            let y2: Vec<f64> = y1.iter().zip(&dir).map(|(a, b)| a + s * b).collect();
            let sep = distance(&y1, &y2);
            if sep == 0.0 {
                continue;
            }
            for &t in t_samples {
                let ratio = distance(&f.eval(t, &y1), &f.eval(t, &y2)) / sep;
                best.offer(ratio, || Witness { t, y1: y1.clone(), y2: Some(y2.clone()) });
            }
        }
        estimates.push(best.value);
        witnesses.push(best.witness);
    }
    // separations are reported in the given order; increasing means the
    // estimate grows whenever the separation shrinks
    let mut order: Vec<usize> = (0..separations.len()).collect();
    order.sort_by(|&a, &b| separations[b].total_cmp(&separations[a]));
    let strictly_increasing = order.windows(2).all(|w| estimates[w[1]] > estimates[w[0]]);
    Ok(SeparationSweep {
        radius: n,
        separations: separations.to_vec(),
        estimates,
        witnesses,
        strictly_increasing,
    })
}

fn point_report<F>(
    quantity: Quantity,
    f: &Component,
    t_samples: &[f64],
    radii: &[f64],
    samples: usize,
    seed: u64,
    declared: F,
    ratio: fn(f64, f64) -> f64,
) -> Result<RegularityReport>
where
    F: Fn(f64) -> Option<f64>,
{
    check_radii(radii)?;
    if samples == 0 || t_samples.is_empty() {
        return Err(Error::validation("samples", "need at least one sample and one time"));
    }
    let d = f.input_dim();
    Ok(assemble(quantity, radii, samples, declared, |slot, n| {
        let mut best = Best::new();
        for k in 0..samples {
            let mut rng = sample_rng(seed, slot, k);
            let spread = [Spread::Uniform, Spread::LogRadius, Spread::Surface][k % 3];
            let y = ball_point(&mut rng, d, n, spread);
            let r = norm(&y);
            for &t in t_samples {
                let value = ratio(norm(&f.eval(t, &y)), r);
                best.offer(value, || Witness { t, y1: y.clone(), y2: None });
            }
        }
        best
    }))
}

/// Sampled `max ||f(t,y)|| / (1 + ||y||)` per radius against `k_declared`.
pub fn check_linear_growth(
    f: &Component,
    t_samples: &[f64],
    radii: &[f64],
    samples: usize,
    seed: u64,
    k_declared: Option<f64>,
) -> Result<RegularityReport> {
    point_report(Quantity::LinearGrowth, f, t_samples, radii, samples, seed, |_| k_declared, |v, r| {
        v / (1.0 + r)
    })
}

/// Sampled `M_n = max ||f(t,y)||` over the ball of radius `n`, against the
/// declared bound `m_declared(n)`.
pub fn check_locally_bounded(
    f: &Component,
    t_samples: &[f64],
    radii: &[f64],
    samples: usize,
    seed: u64,
    m_declared: Option<&dyn Fn(f64) -> f64>,
) -> Result<RegularityReport> {
    point_report(
        Quantity::LocalBound,
        f,
        t_samples,
        radii,
        samples,
        seed,
        |n| m_declared.map(|m| m(n)),
        |v, _| v,
    )
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < (-1f64).exp()) {
        return Err(Error::Domain(format!("delta = {delta} must lie in (0, 1/e)")));
    }
    Ok(())
}

/// `kappa(u) = -u ln u` near zero, continued affinely (tangent) beyond `delta`.
pub fn example_kappa(u: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if !(u >= 0.0) {
        return Err(Error::Domain(format!("kappa needs u >= 0, got {u}")));
    }
    Ok(if u == 0.0 {
        0.0
    } else if u < delta {
        -u * u.ln()
    } else {
        -delta * delta.ln() - (1.0 + delta.ln()) * (u - delta)
    })
}

/// `rho(u) = u sqrt(-ln u^2)` near zero, so that `rho(u)^2 = kappa(u^2)`.
pub fn example_rho(u: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if !(u >= 0.0) {
        return Err(Error::Domain(format!("rho needs u >= 0, got {u}")));
    }
    Ok(if u == 0.0 {
        0.0
    } else if u < delta.sqrt() {
        u * (-(u * u).ln()).sqrt()
    } else {
        (-delta * delta.ln() - (1.0 + delta.ln()) * (u * u - delta)).sqrt()
    })
}

/// `ln|ln floor| - ln|ln eps|`, the integral of `1/(-u ln u)` over `[floor, eps]`.
pub fn example_kappa_integral(eps: f64, floor: f64) -> f64 {
    floor.ln().abs().ln() - eps.ln().abs().ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// The integrals exceed every configured threshold.
    Divergent,
    /// Increments between successive floors shrink geometrically.
    Convergent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub eps: f64,
    pub floors: Vec<f64>,
    /// `∫_{floor}^{eps} du / kappa(u)` for each floor.
    pub integrals: Vec<f64>,
    pub error_estimates: Vec<f64>,
    /// Closed-form values, when supplied.
    pub analytic: Option<Vec<f64>>,
    pub max_analytic_deviation: Option<f64>,
    pub thresholds: Vec<f64>,
    pub exceeds_all_thresholds: bool,
    pub verdict: Verdict,
}

/// Evaluates `∫_{floor_m}^{eps} 1/kappa(u) du` for a decreasing sequence of
/// floors, integrating in `s = ln u` to resolve the behavior near zero.
pub fn divergence_criterion(
    kappa: &dyn Fn(f64) -> f64,
    eps: f64,
    floors: &[f64],
    thresholds: &[f64],
    analytic: Option<&dyn Fn(f64, f64) -> f64>,
) -> Result<DivergenceReport> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain("eps must be positive".into()));
    }
    if floors.iter().any(|f| !(*f > 0.0 && *f < eps)) || floors.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Domain("floors must decrease strictly inside (0, eps)".into()));
    }
    let integrand = |s: f64| -> Result<f64> {
        let u = s.exp();
        let k = kappa(u);
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Domain(format!("kappa({u}) = {k} is not positive")));
        }
        Ok(u / k)
    };
    let mut integrals = Vec::with_capacity(floors.len());
    let mut errors = Vec::with_capacity(floors.len());
    let mut upper = eps.ln();
    let mut total = 0.0;
    let mut total_err = 0.0;
    // accumulate piece by piece: [floor_m, floor_{m-1}]
    for &floor in floors {
        let q = quadrature::integrate(integrand, floor.ln(), upper, 1e-15, 1e-14, 4000)?;
        total += q.value;
        total_err += q.error;
        integrals.push(total);
        errors.push(total_err);
        upper = floor.ln();
    }
    let analytic_values = analytic.map(|a| floors.iter().map(|&f| a(eps, f)).collect::<Vec<_>>());
    let max_dev = analytic_values.as_ref().map(|a| {
        a.iter().zip(&integrals).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    });
    let last = integrals.last().copied().unwrap_or(0.0);
    let exceeds = !thresholds.is_empty() && thresholds.iter().all(|th| last > *th);
    let increments: Vec<f64> = integrals
        .iter()
        .scan(0.0, |prev, v| {
            let d = v - *prev;
            *prev = *v;
            Some(d)
        })
        .collect();
    let shrinking = increments.len() >= 3
        && increments[increments.len() - 3..]
            .windows(2)
            .all(|w| w[1] < 0.5 * w[0]);
    let verdict = if exceeds {
        Verdict::Divergent
    } else if shrinking {
        Verdict::Convergent
    } else {
        Verdict::Inconclusive
    };
    Ok(DivergenceReport {
        eps,
        floors: floors.to_vec(),
        integrals,
        error_estimates: errors,
        analytic: analytic_values,
        max_analytic_deviation: max_dev,
        thresholds: thresholds.to_vec(),
        exceeds_all_thresholds: exceeds,
        verdict,
    })
}

/// Even staircase: flat at `n` on `[n, n+1-1/(n+1)]`, then a ramp of slope
/// `n+1` up to `(n+1, n+1)`.
pub fn example_staircase(y: f64) -> f64 {
    let y = y.abs();
    let n = y.floor();
    let knee = n + 1.0 - 1.0 / (n + 1.0);
    if y <= knee {
        n
    } else {
        n + (n + 1.0) * (y - knee)
    }
}

/// Lipschitz constant of the staircase on `[n, n+1]` (its ramp slope).
pub fn staircase_lipschitz(n: u32) -> f64 {
    f64::from(n) + 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaircaseWitness {
    pub n: u32,
    pub y1: f64,
    pub y2: f64,
    pub separation: f64,
    /// `(1/n)^(1/p)`, the largest separation the argument allows.
    pub allowed: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub p: f64,
    pub witnesses: Vec<StaircaseWitness>,
    /// Every witness has gap exactly 1 and separation within the allowance.
    pub all_valid: bool,
    /// `(u, n)`: for `u` in `(0, 1]`, `kappa(u) >= kappa(1/n) >= 1` via witness `n`.
    pub kappa_lower_bounds: Vec<(f64, u32, f64)>,
}

/// Exhibits, for each `n <= n_max`, the ramp endpoints of `[n, n+1]`: they
/// are `1/(n+1)` apart yet their values differ by exactly one, so any
/// modulus in `|a(y1)-a(y2)|^p <= kappa(|y1-y2|^p)` is `>= 1` on `(0, 1]`.
pub fn staircase_modulus_violation(p: f64, n_max: u32) -> Result<ViolationReport> {
    if !(p >= 2.0 && p.is_finite()) {
        return Err(Error::Domain(format!("p = {p} must be >= 2")));
    }
    let witnesses: Vec<StaircaseWitness> = (1..=n_max)
        .map(|n| {
            let m = f64::from(n);
            let y2 = m + 1.0;
            let y1 = y2 - 1.0 / (m + 1.0);
            StaircaseWitness {
                n,
                y1,
                y2,
                separation: y2 - y1,
                allowed: (1.0 / m).powf(1.0 / p),
                gap: (example_staircase(y2) - example_staircase(y1)).abs(),
            }
        })
        .collect();
    let all_valid = witnesses.iter().all(|w| w.gap == 1.0 && w.separation <= w.allowed);
    let kappa_lower_bounds = witnesses
        .iter()
        .map(|w| (1.0 / f64::from(w.n), w.n, w.gap.powf(p)))
        .collect();
    Ok(ViolationReport { p, witnesses, all_valid, kappa_lower_bounds })
}
