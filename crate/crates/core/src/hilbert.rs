//! Truncated state spaces, semigroups `S_t` on `H_M`, and dilations
//! `(embed, U_t, project)` into a larger space on which the evolution is a
//! two-sided group with `project ∘ U_t ∘ embed = S_t`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::expm::expm;
use crate::vector::{distance, StateVector};

/// Tolerance for the pseudo-contractivity check `mu_k <= omega`.
const OMEGA_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub dim: usize,
    #[serde(default)]
    pub label: String,
}

impl SpaceSpec {
    pub fn new(dim: usize, label: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::validation("dim", "truncation level must be >= 1"));
        }
        Ok(SpaceSpec {
            dim,
            label: label.into(),
        })
    }

    pub fn composable(&self, other: &SpaceSpec) -> bool {
        self.dim == other.dim
    }
}

/// Configuration of a semigroup on `H_M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SemigroupSpec {
    /// `S_t e_k = exp(mu_k t) e_k`.
    Diagonal {
        eigenvalues: Vec<f64>,
        #[serde(default)]
        omega: f64,
    },
    /// Left translation of grid samples on the half line, zero beyond the window.
    ShiftHalfline {
        dx: f64,
        nodes: usize,
        #[serde(default)]
        omega: f64,
    },
    /// `S_t = exp(t A)` for a dense generator given row by row.
    Matrix {
        generator: Vec<Vec<f64>>,
        omega: f64,
    },
}

impl SemigroupSpec {
    pub fn dim(&self) -> usize {
        match self {
            SemigroupSpec::Diagonal { eigenvalues, .. } => eigenvalues.len(),
            SemigroupSpec::ShiftHalfline { nodes, .. } => *nodes,
            SemigroupSpec::Matrix { generator, .. } => generator.len(),
        }
    }

    pub fn omega(&self) -> f64 {
        match self {
            SemigroupSpec::Diagonal { omega, .. }
            | SemigroupSpec::ShiftHalfline { omega, .. }
            | SemigroupSpec::Matrix { omega, .. } => *omega,
        }
    }

    /// Builds the evaluable semigroup, checking the declared contractivity bound.
    pub fn build(&self) -> Result<Semigroup> {
        if self.dim() == 0 {
            return Err(Error::validation("semigroup", "dimension must be >= 1"));
        }
        match self {
            SemigroupSpec::Diagonal { eigenvalues, omega } => {
                if let Some((k, mu)) = eigenvalues
                    .iter()
                    .enumerate()
                    .find(|(_, mu)| !mu.is_finite() || **mu > omega + OMEGA_SLACK)
                {
                    return Err(Error::validation(
                        "semigroup.eigenvalues",
                        format!("eigenvalue {k} = {mu} exceeds omega = {omega}"),
                    ));
                }
                Ok(Semigroup::Diagonal(eigenvalues.clone()))
            }
            SemigroupSpec::ShiftHalfline { dx, nodes, omega } => {
                if !(*dx > 0.0 && dx.is_finite()) {
                    return Err(Error::validation("semigroup.dx", "grid spacing must be > 0"));
                }
                if *omega < 0.0 {
                    return Err(Error::validation(
                        "semigroup.omega",
                        "the shift is a contraction with norm 1 for small t; omega must be >= 0",
                    ));
                }
                Ok(Semigroup::Shift {
                    dx: *dx,
                    nodes: *nodes,
                })
            }
            SemigroupSpec::Matrix { generator, omega } => {
                let m = generator.len();
                if let Some(row) = generator.iter().position(|r| r.len() != m) {
                    return Err(Error::validation(
                        "semigroup.generator",
                        format!("row {row} has length {}, expected {m}", generator[row].len()),
                    ));
                }
                let a = DMatrix::from_fn(m, m, |i, j| generator[i][j]);
                let bound = log_norm(&a);
                if bound > omega + OMEGA_SLACK {
                    return Err(Error::validation(
                        "semigroup.omega",
                        format!("logarithmic norm {bound} of the generator exceeds omega = {omega}"),
                    ));
                }
                Ok(Semigroup::Matrix(a))
            }
        }
    }
}

/// Largest eigenvalue of the symmetric part: `||exp(tA)||_2 <= exp(t * log_norm(A))`.
pub fn log_norm(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.max()
}

/// A validated semigroup ready for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum Semigroup {
    Diagonal(Vec<f64>),
    Shift { dx: f64, nodes: usize },
    Matrix(DMatrix<f64>),
}

impl Semigroup {
    pub fn dim(&self) -> usize {
        match self {
            Semigroup::Diagonal(mu) => mu.len(),
            Semigroup::Shift { nodes, .. } => *nodes,
            Semigroup::Matrix(a) => a.nrows(),
        }
    }

    /// `S_t h`.
    pub fn apply(&self, t: f64, h: &[f64]) -> Result<StateVector> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("semigroup time must be >= 0, got {t}")));
        }
        check_dim(self.dim(), h.len())?;
        Ok(match self {
            Semigroup::Diagonal(mu) => mu.iter().zip(h).map(|(m, v)| (m * t).exp() * v).collect(),
            Semigroup::Shift { dx, nodes } => {
                let s = shift_cells(t, *dx);
                (0..*nodes)
                    .map(|i| if i + s < *nodes { h[i + s] } else { 0.0 })
                    .collect()
            }
            Semigroup::Matrix(a) => mat_vec(&expm(&(a * t)), h),
        })
    }

    /// `S_{to - from} h`. For the shift both endpoints are snapped to grid
    /// nodes separately, so propagation over consecutive intervals composes
    /// exactly.
    pub fn propagate(&self, from: f64, to: f64, h: &[f64]) -> Result<StateVector> {
        match self {
            Semigroup::Shift { dx, nodes } => {
                if !(to >= from) {
                    return Err(Error::Domain(format!("cannot propagate from {from} back to {to}")));
                }
                check_dim(*nodes, h.len())?;
                let s = shift_cells(to, *dx) - shift_cells(from, *dx);
                Ok((0..*nodes)
                    .map(|i| if i + s < *nodes { h[i + s] } else { 0.0 })
                    .collect())
            }
            _ => self.apply(to - from, h),
        }
    }
}

/// `S_t h` evaluated from a configuration.
pub fn semigroup_apply(spec: &SemigroupSpec, t: f64, h: &[f64]) -> Result<StateVector> {
    spec.build()?.apply(t, h)
}

/// Number of grid cells a translation by time `t` moves; non-aligned times
/// snap to the nearest node.
pub fn shift_cells(t: f64, dx: f64) -> usize {
    (t.abs() / dx).round() as usize
}

fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> StateVector {
    let out = m * DVector::from_column_slice(v);
    out.iter().copied().collect()
}

/// Embedding, group and projection realizing `project ∘ U_t ∘ embed = S_t`.
#[derive(Debug, Clone, PartialEq)]
pub enum DilationTriple {
    /// `embed = project = id`, `U_t = exp(tA)` for all real `t`.
    Trivial(Semigroup),
    /// Cyclic translation on a padded grid of `window + 2 * padding` nodes.
    /// The state window occupies nodes `padding .. padding + window`.
    Shift {
        dx: f64,
        window: usize,
        padding: usize,
    },
}

impl DilationTriple {
    /// Dimension of the truncated `H`.
    pub fn state_dim(&self) -> usize {
        match self {
            DilationTriple::Trivial(s) => s.dim(),
            DilationTriple::Shift { window, .. } => *window,
        }
    }

    /// Dimension of the truncated dilation space.
    pub fn ambient_dim(&self) -> usize {
        match self {
            DilationTriple::Trivial(s) => s.dim(),
            DilationTriple::Shift {
                window, padding, ..
            } => window + 2 * padding,
        }
    }

    /// Largest `|t|` for which `group_apply` keeps embedded vectors away from
    /// the wrap-around; `None` when unrestricted.
    pub fn capacity(&self) -> Option<f64> {
        match self {
            DilationTriple::Trivial(_) => None,
            DilationTriple::Shift { dx, padding, .. } => Some(*padding as f64 * dx),
        }
    }

    pub fn embed(&self, h: &[f64]) -> Result<StateVector> {
        check_dim(self.state_dim(), h.len())?;
        Ok(match self {
            DilationTriple::Trivial(_) => StateVector::from(h),
            DilationTriple::Shift { padding, .. } => {
                let mut y = StateVector::zeros(self.ambient_dim());
                y[*padding..*padding + h.len()].copy_from_slice(h);
                y
            }
        })
    }

    pub fn project(&self, y: &[f64]) -> Result<StateVector> {
        check_dim(self.ambient_dim(), y.len())?;
        Ok(match self {
            DilationTriple::Trivial(_) => StateVector::from(y),
            DilationTriple::Shift {
                window, padding, ..
            } => StateVector::from(&y[*padding..*padding + *window]),
        })
    }

    /// `U_t y` for `t` of either sign.
    pub fn group_apply(&self, t: f64, y: &[f64]) -> Result<StateVector> {
        check_dim(self.ambient_dim(), y.len())?;
        if !t.is_finite() {
            return Err(Error::Domain(format!("group time must be finite, got {t}")));
        }
        match self {
            DilationTriple::Trivial(Semigroup::Diagonal(mu)) => {
                Ok(mu.iter().zip(y).map(|(m, v)| (m * t).exp() * v).collect())
            }
            DilationTriple::Trivial(Semigroup::Matrix(a)) => Ok(mat_vec(&expm(&(a * t)), y)),
            DilationTriple::Trivial(Semigroup::Shift { .. }) => Err(Error::UnsupportedRegime(
                "the half-line shift is not invertible; use the shift dilation".into(),
            )),
            DilationTriple::Shift { dx, padding, .. } => {
                let s = shift_cells(t, *dx);
                if s > *padding {
                    return Err(Error::Capacity {
                        requested_cells: s,
                        required_padding: s,
                        padding: *padding,
                    });
                }
                let n = y.len();
                // t >= 0 moves mass toward the origin (left), t < 0 to the right.
                let offset = if t >= 0.0 { s } else { n - s % n };
                Ok((0..n).map(|j| y[(j + offset) % n]).collect())
            }
        }
    }
}

/// Builds a dilation for `spec` able to serve every time in `[0, horizon]`.
pub fn make_dilation(spec: &SemigroupSpec, padding: usize, horizon: f64) -> Result<DilationTriple> {
    let sg = spec.build()?;
    match sg {
        Semigroup::Diagonal(_) | Semigroup::Matrix(_) => Ok(DilationTriple::Trivial(sg)),
        Semigroup::Shift { dx, nodes } => {
            let required = shift_cells(horizon, dx);
            if padding < required {
                return Err(Error::Capacity {
                    requested_cells: required,
                    required_padding: required,
                    padding,
                });
            }
            Ok(DilationTriple::Shift {
                dx,
                window: nodes,
                padding,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagramReport {
    pub max_error: f64,
    /// `(time, probe index)` where the maximum was attained.
    pub worst: Option<(f64, usize)>,
    pub tol: f64,
    pub pass: bool,
}

/// Measures `max_{t,h} ||project U_t embed h - S_t h||`.
pub fn check_dilation(
    d: &DilationTriple,
    semigroup: &Semigroup,
    times: &[f64],
    probes: &[StateVector],
    tol: f64,
) -> Result<DiagramReport> {
    check_dilation_with(d, semigroup, times, probes, tol, |v| v)
}

/// As [`check_dilation`], with `post` applied to the projected vector (used
/// for fault injection).
pub fn check_dilation_with<F>(
    d: &DilationTriple,
    semigroup: &Semigroup,
    times: &[f64],
    probes: &[StateVector],
    tol: f64,
    post: F,
) -> Result<DiagramReport>
where
    F: Fn(StateVector) -> StateVector,
{
    let mut max_error = 0.0;
    let mut worst = None;
    for &t in times {
        for (k, h) in probes.iter().enumerate() {
            let lhs = post(d.project(&d.group_apply(t, &d.embed(h)?)?)?);
            let rhs = semigroup.apply(t, h)?;
            let err = distance(&lhs, &rhs);
            if err > max_error || worst.is_none() {
                max_error = f64::max(max_error, err);
                worst = Some((t, k));
            }
        }
    }
    Ok(DiagramReport {
        max_error,
        worst,
        tol,
        pass: max_error <= tol,
    })
}
