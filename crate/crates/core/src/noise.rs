//! Frozen realizations of the Q-Wiener process and of the Poisson random
//! measure, split into small jumps (marks in `B`, compensated) and large
//! jumps (marks in `B^c`, finitely many on bounded intervals).

use std::io::Write;
use std::sync::Arc;

use rand::distr::{Distribution, Uniform};
use rand::Rng;
use rand_distr::{Poisson, StandardNormal, weighted::WeightedIndex};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng::{StreamId, StreamKey};
use crate::sde::CoefficientSet;
use crate::vector::{axpy, StateVector};

/// Largest number of quadrature nodes `compensator_integral` will build.
pub const MAX_QUADRATURE_NODES: usize = 1_000_000;

/// Covariance eigenvalues `lambda_j` of a trace-class Wiener process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QWienerSpec {
    pub eigenvalues: Vec<f64>,
}

impl QWienerSpec {
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        let q = QWienerSpec { eigenvalues };
        q.validate()?;
        Ok(q)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(l) = self.eigenvalues.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::validation(
                "wiener.eigenvalues",
                format!("eigenvalues must be positive and finite, got {l}"),
            ));
        }
        Ok(())
    }
}

/// Parametric mark distributions (normalized; intensities live on the measure).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MarkSampler {
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
    DiscreteAtoms { atoms: Vec<Vec<f64>>, weights: Vec<f64> },
}

impl MarkSampler {
    fn validate(&self, mark_dim: usize, field: &str) -> Result<()> {
        let bad = |msg: String| Err(Error::validation(field, msg));
        match self {
            MarkSampler::UniformBox { lower, upper } => {
                if lower.len() != mark_dim || upper.len() != mark_dim {
                    return bad(format!("box bounds must have length {mark_dim}"));
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
                    return bad("box needs lower < upper in every coordinate".into());
                }
            }
            MarkSampler::Gaussian { mean, std } => {
                if mean.len() != mark_dim || std.len() != mark_dim {
                    return bad(format!("mean and std must have length {mark_dim}"));
                }
                if std.iter().any(|s| !(*s > 0.0)) {
                    return bad("standard deviations must be positive".into());
                }
            }
            MarkSampler::DiscreteAtoms { atoms, weights } => {
                if atoms.is_empty() || atoms.len() != weights.len() {
                    return bad("need one weight per atom and at least one atom".into());
                }
                if atoms.iter().any(|a| a.len() != mark_dim) {
                    return bad(format!("atoms must have length {mark_dim}"));
                }
                if weights.iter().any(|w| !(*w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
                    return bad("weights must be nonnegative with positive sum".into());
                }
            }
        }
        Ok(())
    }

    /// Exact mean of the mark distribution.
    pub fn mean(&self) -> Vec<f64> {
        match self {
            MarkSampler::UniformBox { lower, upper } => {
                lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect()
            }
            MarkSampler::Gaussian { mean, .. } => mean.clone(),
            MarkSampler::DiscreteAtoms { atoms, weights } => {
                let total: f64 = weights.iter().sum();
                let mut out = vec![0.0; atoms.first().map_or(0, Vec::len)];
                for (a, w) in atoms.iter().zip(weights) {
                    axpy(w / total, a, &mut out);
                }
                out
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            MarkSampler::UniformBox { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(l, u)| l + (u - l) * rng.random::<f64>())
                .collect(),
            MarkSampler::Gaussian { mean, std } => mean
                .iter()
                .zip(std)
                .map(|(m, s)| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + s * z
                })
                .collect(),
            MarkSampler::DiscreteAtoms { atoms, weights } => {
                let idx = WeightedIndex::new(weights)
                    .expect("weights validated")
                    .sample(rng);
                atoms[idx].clone()
            }
        }
    }

    /// Deterministic nodes and probability weights: exact for atoms,
    /// product midpoint rule (in probability space) for densities.
    fn quadrature(&self, quad_n: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        match self {
            MarkSampler::DiscreteAtoms { atoms, weights } => {
                let total: f64 = weights.iter().sum();
                Ok((atoms.clone(), weights.iter().map(|w| w / total).collect()))
            }
            MarkSampler::UniformBox { lower, upper } => {
                let axes = lower
                    .iter()
                    .zip(upper)
                    .map(|(l, u)| {
                        (0..quad_n)
                            .map(|k| l + (u - l) * (k as f64 + 0.5) / quad_n as f64)
                            .collect()
                    })
                    .collect::<Vec<Vec<f64>>>();
                product_grid(&axes)
            }
            MarkSampler::Gaussian { mean, std } => {
                let unit = Normal::standard();
                let axes = mean
                    .iter()
                    .zip(std)
                    .map(|(m, s)| {
                        (0..quad_n)
                            .map(|k| m + s * unit.inverse_cdf((k as f64 + 0.5) / quad_n as f64))
                            .collect()
                    })
                    .collect::<Vec<Vec<f64>>>();
                product_grid(&axes)
            }
        }
    }
}

fn product_grid(axes: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let count = axes
        .iter()
        .try_fold(1usize, |acc, a| acc.checked_mul(a.len()))
        .filter(|c| *c <= MAX_QUADRATURE_NODES)
        .ok_or_else(|| {
            Error::Resource(format!(
                "mark quadrature needs more than {MAX_QUADRATURE_NODES} nodes"
            ))
        })?;
    let mut nodes = Vec::with_capacity(count);
    let mut idx = vec![0usize; axes.len()];
    for _ in 0..count {
        nodes.push(idx.iter().zip(axes).map(|(i, a)| a[*i]).collect());
        for (d, i) in idx.iter_mut().enumerate() {
            *i += 1;
            if *i < axes[d].len() {
                break;
            }
            *i = 0;
        }
    }
    Ok((nodes, vec![1.0 / count as f64; count]))
}

/// The Lévy measure `F` restricted to `B` (small marks) and `B^c` (large marks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkMeasureSpec {
    pub mark_dim: usize,
    /// `F(B)`
    #[serde(default)]
    pub intensity_small: f64,
    /// `F(B^c)`
    #[serde(default)]
    pub intensity_large: f64,
    #[serde(default)]
    pub sampler_small: Option<MarkSampler>,
    #[serde(default)]
    pub sampler_large: Option<MarkSampler>,
    /// Human-readable description of `B`; not evaluated.
    #[serde(default)]
    pub small_set: String,
}

impl MarkMeasureSpec {
    /// No jump activity at all.
    pub fn none(mark_dim: usize) -> Self {
        MarkMeasureSpec {
            mark_dim,
            intensity_small: 0.0,
            intensity_large: 0.0,
            sampler_small: None,
            sampler_large: None,
            small_set: String::new(),
        }
    }

    pub fn with_small(mut self, intensity: f64, sampler: MarkSampler) -> Self {
        self.intensity_small = intensity;
        self.sampler_small = Some(sampler);
        self
    }

    pub fn with_large(mut self, intensity: f64, sampler: MarkSampler) -> Self {
        self.intensity_large = intensity;
        self.sampler_large = Some(sampler);
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, intensity, sampler) in [
            ("marks.intensity_small", self.intensity_small, &self.sampler_small),
            ("marks.intensity_large", self.intensity_large, &self.sampler_large),
        ] {
            if !(intensity >= 0.0 && intensity.is_finite()) {
                return Err(Error::validation(name, "intensity must be finite and >= 0"));
            }
            match sampler {
                Some(s) => s.validate(self.mark_dim, name)?,
                None if intensity > 0.0 => {
                    return Err(Error::validation(name, "positive intensity needs a sampler"))
                }
                None => {}
            }
        }
        Ok(())
    }

    /// Quadrature for integrals against `F|_B`; `None` when `F(B) = 0`.
    pub fn small_quadrature(&self, quad_n: usize) -> Result<Option<MarkQuadrature>> {
        match (&self.sampler_small, self.intensity_small > 0.0) {
            (Some(s), true) => {
                let (nodes, probs) = s.quadrature(quad_n)?;
                let weights = probs.iter().map(|p| p * self.intensity_small).collect();
                Ok(Some(MarkQuadrature { nodes, weights }))
            }
            _ => Ok(None),
        }
    }
}

/// Nodes and weights with `sum(weights) = F(B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkQuadrature {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl MarkQuadrature {
    /// `out = sum_k w_k f(x_k)`, with `f` writing into a scratch buffer.
    pub fn integrate<F>(&self, out: &mut [f64], scratch: &mut [f64], mut f: F)
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            f(x, scratch);
            axpy(*w, scratch, out);
        }
    }
}

/// `∫_B c(t, y, x) F(dx)`.
pub fn compensator_integral(
    c: &CoefficientSet,
    t: f64,
    y: &[f64],
    m: &MarkMeasureSpec,
    quad_n: usize,
) -> Result<StateVector> {
    let mut out = StateVector::zeros(c.dim());
    if !c.has_jump() {
        return Ok(out);
    }
    if let Some(q) = m.small_quadrature(quad_n)? {
        let mut scratch = vec![0.0; c.dim()];
        q.integrate(&mut out, &mut scratch, |x, buf| c.jump_into(t, y, x, buf));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    /// Absolute time.
    pub time: f64,
    pub mark: Vec<f64>,
    pub is_large: bool,
    /// Index of the grid node at `time`.
    pub node: usize,
}

/// A frozen noise realization on a refined time grid.
///
/// Times are stored absolutely; `origin` is subtracted on access so that
/// repeated shifts reuse the same floating-point data.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    origin: f64,
    times: Vec<f64>,
    base_nodes: Vec<usize>,
    wiener_dim: usize,
    increments: Vec<f64>,
    jumps: Vec<Jump>,
    marks: Arc<MarkMeasureSpec>,
    seed: u64,
}

/// Uniform grid `0, dt, 2dt, ..., horizon`; `dt` must divide `horizon`.
pub fn uniform_grid(horizon: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && horizon > 0.0 && dt.is_finite() && horizon.is_finite()) {
        return Err(Error::validation("dt", "dt and horizon must be positive"));
    }
    let steps = (horizon / dt).round();
    if (steps * dt - horizon).abs() > 1e-9 * horizon || steps < 1.0 {
        return Err(Error::validation(
            "dt",
            format!("dt = {dt} does not divide horizon = {horizon}"),
        ));
    }
    let n = steps as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
    grid[n] = horizon;
    Ok(grid)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Domain("empty time grid".into()));
    }
    if grid[0] != 0.0 {
        return Err(Error::Domain("time grid must start at 0".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("time grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Samples a noise path for `seed` (path index 0).
pub fn sample_noise(
    q: &QWienerSpec,
    m: &MarkMeasureSpec,
    grid: &[f64],
    seed: u64,
) -> Result<NoisePath> {
    sample_noise_keyed(q, m, grid, StreamKey::new(seed, 0))
}

/// Samples the noise path addressed by `key`.
pub fn sample_noise_keyed(
    q: &QWienerSpec,
    m: &MarkMeasureSpec,
    grid: &[f64],
    key: StreamKey,
) -> Result<NoisePath> {
    check_grid(grid)?;
    q.validate()?;
    m.validate()?;
    let horizon = *grid.last().unwrap();

    let mut time_rng = key.rng(StreamId::JumpTimes);
    let mut mark_rng = key.rng(StreamId::Marks);
    let mut raw: Vec<(f64, Vec<f64>, bool)> = Vec::new();
    for (intensity, sampler, is_large) in [
        (m.intensity_small, &m.sampler_small, false),
        (m.intensity_large, &m.sampler_large, true),
    ] {
        let mean = intensity * horizon;
        let count = if mean > 0.0 {
            Poisson::new(mean)
                .map_err(|e| Error::Domain(format!("poisson mean {mean}: {e}")))?
                .sample(&mut time_rng) as usize
        } else {
            0
        };
        let sampler = match sampler {
            Some(s) => s,
            None => continue,
        };
        // u in [0,1) maps to (0, T]: no jump at the initial time.
        let unit = Uniform::new(0.0f64, 1.0).expect("valid range");
        for _ in 0..count {
            let u = unit.sample(&mut time_rng);
            let t = horizon * (1.0 - u);
            raw.push((t, sampler.sample(&mut mark_rng), is_large));
        }
    }
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(w) = raw.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateJumpTime { time: w[0].0 });
    }

    // refine: merge base grid and jump times
    let mut times = Vec::with_capacity(grid.len() + raw.len());
    let mut base_nodes = Vec::with_capacity(grid.len());
    let mut jumps = Vec::with_capacity(raw.len());
    let (mut gi, mut ji) = (0, 0);
    while gi < grid.len() || ji < raw.len() {
        let take_grid = ji >= raw.len() || (gi < grid.len() && grid[gi] <= raw[ji].0);
        if take_grid {
            base_nodes.push(times.len());
            times.push(grid[gi]);
            if ji < raw.len() && raw[ji].0 == grid[gi] {
                let (time, mark, is_large) = raw[ji].clone();
                jumps.push(Jump { time, mark, is_large, node: times.len() - 1 });
                ji += 1;
            }
            gi += 1;
        } else {
            let (time, mark, is_large) = raw[ji].clone();
            times.push(time);
            jumps.push(Jump { time, mark, is_large, node: times.len() - 1 });
            ji += 1;
        }
    }

    let wiener_dim = q.dim();
    let mut wiener_rng = key.rng(StreamId::Wiener);
    let mut increments = Vec::with_capacity((times.len() - 1) * wiener_dim);
    for w in times.windows(2) {
        let dt = w[1] - w[0];
        for lambda in &q.eigenvalues {
            let z: f64 = StandardNormal.sample(&mut wiener_rng);
            increments.push((dt * lambda).sqrt() * z);
        }
    }

    Ok(NoisePath {
        origin: 0.0,
        times,
        base_nodes,
        wiener_dim,
        increments,
        jumps,
        marks: Arc::new(m.clone()),
        seed: key.seed,
    })
}

impl NoisePath {
    /// Assembles a path from explicit data. Every jump time must be a node of
    /// `grid`; jumps may share a node.
    pub fn from_parts(
        grid: Vec<f64>,
        wiener_dim: usize,
        increments: Vec<f64>,
        jumps: Vec<(f64, Vec<f64>, bool)>,
        marks: MarkMeasureSpec,
        seed: u64,
    ) -> Result<NoisePath> {
        check_grid(&grid)?;
        if increments.len() != (grid.len() - 1) * wiener_dim {
            return Err(Error::Shape {
                expected: (grid.len() - 1) * wiener_dim,
                got: increments.len(),
            });
        }
        let mut js = Vec::with_capacity(jumps.len());
        for (time, mark, is_large) in jumps {
            let node = grid
                .binary_search_by(|t| t.total_cmp(&time))
                .map_err(|_| Error::Alignment { time })?;
            if mark.len() != marks.mark_dim {
                return Err(Error::Shape { expected: marks.mark_dim, got: mark.len() });
            }
            js.push(Jump { time, mark, is_large, node });
        }
        js.sort_by(|a, b| a.time.total_cmp(&b.time));
        Ok(NoisePath {
            origin: 0.0,
            base_nodes: (0..grid.len()).collect(),
            times: grid,
            wiener_dim,
            increments,
            jumps: js,
            marks: Arc::new(marks),
            seed,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn marks(&self) -> &MarkMeasureSpec {
        &self.marks
    }

    pub fn wiener_dim(&self) -> usize {
        self.wiener_dim
    }

    /// Number of grid nodes.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of cells (time steps).
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Node time measured from the start of this path.
    #[inline]
    pub fn time(&self, node: usize) -> f64 {
        self.times[node] - self.origin
    }

    /// Node time on the clock of the unshifted path.
    #[inline]
    pub fn absolute_time(&self, node: usize) -> f64 {
        self.times[node]
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.len() - 1)
    }

    /// Length of cell `i`.
    #[inline]
    pub fn dt(&self, cell: usize) -> f64 {
        self.times[cell + 1] - self.times[cell]
    }

    /// Wiener increment over cell `i`, one entry per coordinate.
    #[inline]
    pub fn increment(&self, cell: usize) -> &[f64] {
        &self.increments[cell * self.wiener_dim..(cell + 1) * self.wiener_dim]
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    /// Time of a jump measured from the start of this path.
    pub fn jump_time(&self, jump: &Jump) -> f64 {
        jump.time - self.origin
    }

    /// Jumps located at `node`, in time order.
    pub fn jumps_at(&self, node: usize) -> &[Jump] {
        let lo = self.jumps.partition_point(|j| j.node < node);
        let hi = self.jumps.partition_point(|j| j.node <= node);
        &self.jumps[lo..hi]
    }

    pub fn has_large_jumps(&self) -> bool {
        self.jumps.iter().any(|j| j.is_large)
    }

    /// Node index for a time of this path, if it is a grid point.
    pub fn node_of(&self, t: f64) -> Option<usize> {
        (0..self.len()).find(|&i| self.time(i) == t)
    }

    /// Sum of Wiener increments over the whole path.
    pub fn wiener_total(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.wiener_dim];
        for cell in 0..self.steps() {
            axpy(1.0, self.increment(cell), &mut total);
        }
        total
    }

    /// Merges every `factor` consecutive cells of the original grid, keeping
    /// jump nodes, and sums the Wiener increments accordingly.
    pub fn coarsen(&self, factor: usize) -> Result<NoisePath> {
        let base_cells = self.base_nodes.len().saturating_sub(1);
        if factor == 0 || !base_cells.is_multiple_of(factor) {
            return Err(Error::validation(
                "factor",
                format!("{factor} does not divide the {base_cells} base cells"),
            ));
        }
        let mut keep = vec![false; self.len()];
        for (k, &node) in self.base_nodes.iter().enumerate() {
            if k % factor == 0 {
                keep[node] = true;
            }
        }
        for j in &self.jumps {
            keep[j.node] = true;
        }
        keep[0] = true;
        let kept: Vec<usize> = (0..self.len()).filter(|&i| keep[i]).collect();
        let mut new_index = vec![usize::MAX; self.len()];
        for (n, &i) in kept.iter().enumerate() {
            new_index[i] = n;
        }
        let mut increments = Vec::with_capacity((kept.len() - 1) * self.wiener_dim);
        for w in kept.windows(2) {
            let mut acc = vec![0.0; self.wiener_dim];
            for cell in w[0]..w[1] {
                axpy(1.0, self.increment(cell), &mut acc);
            }
            increments.extend(acc);
        }
        let base_nodes = self
            .base_nodes
            .iter()
            .enumerate()
            .filter(|(k, _)| k % factor == 0)
            .map(|(_, &i)| new_index[i])
            .collect();
        Ok(NoisePath {
            origin: self.origin,
            times: kept.iter().map(|&i| self.times[i]).collect(),
            base_nodes,
            wiener_dim: self.wiener_dim,
            increments,
            jumps: self
                .jumps
                .iter()
                .map(|j| Jump { node: new_index[j.node], ..j.clone() })
                .collect(),
            marks: self.marks.clone(),
            seed: self.seed,
        })
    }

    /// Writes the path as `kind,time,coord,value` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "kind,time,coord,value")?;
        for i in 0..self.len() {
            writeln!(w, "grid,{},,", self.time(i))?;
        }
        for cell in 0..self.steps() {
            for (j, v) in self.increment(cell).iter().enumerate() {
                writeln!(w, "dw,{},{},{}", self.time(cell), j, v)?;
            }
        }
        for jump in &self.jumps {
            let kind = if jump.is_large { "large_jump" } else { "small_jump" };
            for (k, v) in jump.mark.iter().enumerate() {
                writeln!(w, "{kind},{},{},{}", self.jump_time(jump), k, v)?;
            }
        }
        Ok(())
    }
}

/// `rho_0 = 0 < rho_1 < ...`: the times of the large jumps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LargeJumpClock {
    pub times: Vec<f64>,
    /// Grid node of each time (`nodes[0] = 0`).
    pub nodes: Vec<usize>,
}

pub fn large_jump_clock(p: &NoisePath) -> Result<LargeJumpClock> {
    let mut times = vec![0.0];
    let mut nodes = vec![0];
    for j in p.jumps().iter().filter(|j| j.is_large) {
        let t = p.jump_time(j);
        if !(t > *times.last().unwrap()) {
            return Err(Error::DuplicateJumpTime { time: t });
        }
        times.push(t);
        nodes.push(j.node);
    }
    Ok(LargeJumpClock { times, nodes })
}

/// The noise restarted at grid time `tau`: increments and jumps after `tau`,
/// re-timed from zero. A jump exactly at `tau` stays with the earlier segment.
pub fn shift_noise(p: &NoisePath, tau: f64) -> Result<NoisePath> {
    let start = p.node_of(tau).ok_or(Error::Alignment { time: tau })?;
    shift_noise_at(p, start)
}

/// As [`shift_noise`], addressed by node index.
pub fn shift_noise_at(p: &NoisePath, start: usize) -> Result<NoisePath> {
    if start >= p.len() {
        return Err(Error::Alignment { time: f64::NAN });
    }
    let mut base_nodes: Vec<usize> = p
        .base_nodes
        .iter()
        .filter(|&&i| i >= start)
        .map(|&i| i - start)
        .collect();
    if base_nodes.first() != Some(&0) {
        base_nodes.insert(0, 0);
    }
    Ok(NoisePath {
        origin: p.times[start],
        times: p.times[start..].to_vec(),
        base_nodes,
        wiener_dim: p.wiener_dim,
        increments: p.increments[start * p.wiener_dim..].to_vec(),
        jumps: p
            .jumps
            .iter()
            .filter(|j| j.node > start)
            .map(|j| Jump { node: j.node - start, ..j.clone() })
            .collect(),
        marks: p.marks.clone(),
        seed: p.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> MarkSampler {
        MarkSampler::UniformBox { lower: vec![0.0], upper: vec![1.0] }
    }

    fn big_box() -> MarkSampler {
        MarkSampler::UniformBox { lower: vec![1.0], upper: vec![2.0] }
    }

    #[test]
    fn no_activity_keeps_grid() {
        let q = QWienerSpec::new(vec![1.0, 0.5]).unwrap();
        let grid = uniform_grid(1.0, 0.25).unwrap();
        let p = sample_noise(&q, &MarkMeasureSpec::none(1), &grid, 3).unwrap();
        assert!(p.jumps().is_empty());
        assert_eq!(p.times(), grid);
        assert_eq!(p.steps(), 4);
        assert_eq!(p.increment(2).len(), 2);
    }

    #[test]
    fn sampling_is_deterministic_and_refines_grid() {
        let q = QWienerSpec::new(vec![1.0]).unwrap();
        let m = MarkMeasureSpec::none(1)
            .with_small(4.0, unit_box())
            .with_large(3.0, big_box());
        let grid = uniform_grid(2.0, 0.5).unwrap();
        let a = sample_noise(&q, &m, &grid, 11).unwrap();
        let b = sample_noise(&q, &m, &grid, 11).unwrap();
        assert_eq!(a, b);
        assert!(!a.jumps().is_empty());
        for j in a.jumps() {
            assert_eq!(a.absolute_time(j.node), j.time);
            assert!(j.time > 0.0 && j.time <= 2.0);
            assert_eq!(j.is_large, j.mark[0] >= 1.0);
        }
        for g in &grid {
            assert!(a.node_of(*g).is_some());
        }
        assert_ne!(a, sample_noise(&q, &m, &grid, 12).unwrap());
    }

    #[test]
    fn empty_grid_is_rejected() {
        let q = QWienerSpec::new(vec![1.0]).unwrap();
        assert!(matches!(
            sample_noise(&q, &MarkMeasureSpec::none(1), &[], 0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn uniform_grid_requires_divisibility() {
        let err = uniform_grid(1.0, 0.3).unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "dt"));
    }

    fn manual_path(jumps: Vec<(f64, Vec<f64>, bool)>) -> NoisePath {
        let grid = vec![0.0, 0.3, 0.5, 0.7, 1.0];
        NoisePath::from_parts(grid, 1, vec![0.1, 0.2, 0.3, 0.4], jumps, MarkMeasureSpec::none(1), 0)
            .unwrap()
    }

    #[test]
    fn clock_extraction() {
        assert_eq!(large_jump_clock(&manual_path(vec![])).unwrap().times, vec![0.0]);
        let p = manual_path(vec![
            (0.3, vec![2.0], true),
            (0.5, vec![0.1], false),
            (0.7, vec![3.0], true),
        ]);
        let clock = large_jump_clock(&p).unwrap();
        assert_eq!(clock.times, vec![0.0, 0.3, 0.7]);
        assert_eq!(clock.nodes, vec![0, 1, 3]);
    }

    #[test]
    fn duplicate_large_jumps_are_rejected() {
        let p = manual_path(vec![(0.3, vec![2.0], true), (0.3, vec![5.0], true)]);
        assert_eq!(p.jumps_at(1).len(), 2);
        assert!(matches!(large_jump_clock(&p), Err(Error::DuplicateJumpTime { .. })));
    }

    #[test]
    fn shift_conventions() {
        let p = manual_path(vec![(0.3, vec![2.0], true), (0.7, vec![3.0], true)]);
        assert_eq!(shift_noise(&p, 0.0).unwrap(), p);
        let s = shift_noise(&p, 0.3).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s.time(0), 0.0);
        assert_eq!(s.jumps().len(), 1);
        assert!(s.jumps_at(0).is_empty());
        assert_eq!(s.increment(0), &[0.2]);
        assert!(matches!(shift_noise(&p, 0.4), Err(Error::Alignment { .. })));

        let q = QWienerSpec::new(vec![1.0]).unwrap();
        let p = sample_noise(&q, &MarkMeasureSpec::none(1), &[0.0, 0.5, 1.0], 1).unwrap();
        assert_eq!(shift_noise(&p, 0.5).unwrap().times(), vec![0.0, 0.5]);
    }

    #[test]
    fn coarsen_sums_increments_and_keeps_jumps() {
        let q = QWienerSpec::new(vec![1.0, 2.0]).unwrap();
        let m = MarkMeasureSpec::none(1).with_large(5.0, big_box());
        let grid = uniform_grid(1.0, 0.125).unwrap();
        let fine = sample_noise(&q, &m, &grid, 5).unwrap();
        let coarse = fine.coarsen(4).unwrap();
        assert_eq!(coarse.jumps().len(), fine.jumps().len());
        for j in coarse.jumps() {
            assert_eq!(coarse.absolute_time(j.node), j.time);
        }
        let (a, b) = (fine.wiener_total(), coarse.wiener_total());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(coarse.node_of(0.5).is_some());
        assert!(coarse.node_of(0.25).is_none() || fine.jumps().iter().any(|j| j.time == 0.25));
        assert!(fine.coarsen(3).is_err());
    }

    #[test]
    fn quadrature_limits() {
        let m = MarkMeasureSpec {
            mark_dim: 4,
            ..MarkMeasureSpec::none(4)
        }
        .with_small(
            1.0,
            MarkSampler::UniformBox { lower: vec![0.0; 4], upper: vec![1.0; 4] },
        );
        assert!(matches!(m.small_quadrature(100), Err(Error::Resource(_))));
        assert_eq!(m.small_quadrature(10).unwrap().unwrap().nodes.len(), 10_000);
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let p = manual_path(vec![(0.3, vec![2.0], true)]);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "kind,time,coord,value");
        assert_eq!(lines.len(), 1 + 5 + 4 + 1);
        assert!(text.contains("large_jump,0.3,0,2"));
    }
}
