//! Named coefficient families selectable from a config.

use serde::{Deserialize, Serialize};

use crate::conditions::example_staircase;
use crate::error::{Error, Result};
use crate::sde::{CoefficientSet, Regularity};
use crate::vector::norm;

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

/// Coefficients by family. Wiener coordinate `i mod noise_dim` drives state
/// coordinate `i` wherever a family has a diagonal diffusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilyConfig {
    /// `a = A y + a0`, constant diffusion matrix, `c(y, x) = x_0 v`.
    Linear {
        #[serde(default)]
        drift_matrix: Vec<Vec<f64>>,
        #[serde(default)]
        drift_offset: Vec<f64>,
        #[serde(default)]
        diffusion_matrix: Vec<Vec<f64>>,
        #[serde(default)]
        jump_vector: Vec<f64>,
    },
    /// `a = mu y`, `b = sigma y`, `c(y, x) = x_0 y`.
    Geometric {
        mu: f64,
        sigma: f64,
        #[serde(default = "yes")]
        jumps: bool,
    },
    /// `a = scale y sin(|y|)`, additive noise `sigma`.
    SinDrift {
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        sigma: f64,
    },
    /// The even staircase applied coordinatewise, additive noise `sigma`.
    Staircase {
        #[serde(default)]
        sigma: f64,
    },
    /// `a = coef y |y|^2`, additive noise `sigma`.
    Cubic {
        #[serde(default = "one")]
        coef: f64,
        #[serde(default)]
        sigma: f64,
    },
    /// Piecewise-linear drift through `(knots, values)` applied
    /// coordinatewise, constant beyond the end knots.
    CustomTable {
        knots: Vec<f64>,
        values: Vec<f64>,
        #[serde(default)]
        sigma: f64,
    },
}

fn check_matrix(field: &str, m: &[Vec<f64>], rows: usize, cols: usize) -> Result<()> {
    if m.is_empty() {
        return Ok(());
    }
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        return Err(Error::validation(field, format!("expected a {rows}x{cols} matrix")));
    }
    Ok(())
}

fn additive(sigma: f64, dim: usize, nw: usize) -> impl Fn(f64, &[f64], &mut [f64]) + Send + Sync {
    move |_, _, out| {
        out.fill(0.0);
        for i in 0..dim {
            out[i * nw + i % nw] = sigma;
        }
    }
}

fn interpolate(knots: &[f64], values: &[f64], y: f64) -> f64 {
    if y <= knots[0] {
        return values[0];
    }
    let last = knots.len() - 1;
    if y >= knots[last] {
        return values[last];
    }
    let k = knots.partition_point(|x| *x <= y) - 1;
    let w = (y - knots[k]) / (knots[k + 1] - knots[k]);
    values[k] + w * (values[k + 1] - values[k])
}

impl FamilyConfig {
    pub fn name(&self) -> &'static str {
        match self {
            FamilyConfig::Linear { .. } => "linear",
            FamilyConfig::Geometric { .. } => "geometric",
            FamilyConfig::SinDrift { .. } => "sin-drift",
            FamilyConfig::Staircase { .. } => "staircase",
            FamilyConfig::Cubic { .. } => "cubic",
            FamilyConfig::CustomTable { .. } => "custom-table",
        }
    }

    pub fn validate(&self, dim: usize, nw: usize) -> Result<()> {
        match self {
            FamilyConfig::Linear { drift_matrix, drift_offset, diffusion_matrix, jump_vector } => {
                check_matrix("coefficients.drift_matrix", drift_matrix, dim, dim)?;
                check_matrix("coefficients.diffusion_matrix", diffusion_matrix, dim, nw)?;
                for (field, v) in [("coefficients.drift_offset", drift_offset), ("coefficients.jump_vector", jump_vector)] {
                    if !v.is_empty() && v.len() != dim {
                        return Err(Error::validation(field, format!("expected length {dim}")));
                    }
                }
            }
            FamilyConfig::CustomTable { knots, values, .. } => {
                if knots.len() < 2 || knots.len() != values.len() {
                    return Err(Error::validation(
                        "coefficients.knots",
                        "need at least two knots and one value per knot",
                    ));
                }
                if knots.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::validation("coefficients.knots", "knots must increase"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Builds the coefficient set with declared regularity flags.
    pub fn build(&self, dim: usize, nw: usize, mark_dim: usize) -> Result<CoefficientSet> {
        self.validate(dim, nw)?;
        let base = CoefficientSet::new(dim, nw);
        Ok(match self.clone() {
            FamilyConfig::Linear { drift_matrix, drift_offset, diffusion_matrix, jump_vector } => {
                let mut c = base.with_regularity(Regularity::LIPSCHITZ);
                if !drift_matrix.is_empty() || !drift_offset.is_empty() {
                    c = c.with_drift(move |_, y, out| {
                        for i in 0..y.len() {
                            let mut v = drift_offset.get(i).copied().unwrap_or(0.0);
                            if let Some(row) = drift_matrix.get(i) {
                                v += row.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
                            }
                            out[i] = v;
                        }
                    });
                }
                if !diffusion_matrix.is_empty() {
                    let flat: Vec<f64> = diffusion_matrix.concat();
                    c = c.with_diffusion(move |_, _, out| out.copy_from_slice(&flat));
                }
                if !jump_vector.is_empty() {
                    c = c.with_jump(mark_dim, move |_, _, x, out| {
                        for (o, v) in out.iter_mut().zip(&jump_vector) {
                            *o = x[0] * v;
                        }
                    });
                }
                c
            }
            FamilyConfig::Geometric { mu, sigma, jumps } => {
                let mut c = base
                    .with_regularity(Regularity::LIPSCHITZ)
                    .with_drift(move |_, y, out| {
                        for (o, v) in out.iter_mut().zip(y) {
                            *o = mu * v;
                        }
                    })
                    .with_diffusion(move |_, y, out| {
                        out.fill(0.0);
                        for (i, v) in y.iter().enumerate() {
                            out[i * nw + i % nw] = sigma * v;
                        }
                    });
                if jumps {
                    c = c.with_jump(mark_dim, |_, y, x, out| {
                        for (o, v) in out.iter_mut().zip(y) {
                            *o = x[0] * v;
                        }
                    });
                }
                c
            }
            FamilyConfig::SinDrift { scale, sigma } => base
                .with_regularity(Regularity::LOCAL_LINEAR_GROWTH)
                .with_drift(move |_, y, out| {
                    let s = norm(y).sin();
                    for (o, v) in out.iter_mut().zip(y) {
                        *o = scale * v * s;
                    }
                })
                .with_diffusion(additive(sigma, dim, nw)),
            FamilyConfig::Staircase { sigma } => base
                .with_regularity(Regularity::LOCAL_LINEAR_GROWTH)
                .with_drift(|_, y, out| {
                    for (o, v) in out.iter_mut().zip(y) {
                        *o = example_staircase(*v);
                    }
                })
                .with_diffusion(additive(sigma, dim, nw)),
            FamilyConfig::Cubic { coef, sigma } => base
                .with_regularity(Regularity::LOCAL)
                .with_drift(move |_, y, out| {
                    let r2: f64 = y.iter().map(|v| v * v).sum();
                    for (o, v) in out.iter_mut().zip(y) {
                        *o = coef * v * r2;
                    }
                })
                .with_diffusion(additive(sigma, dim, nw)),
            FamilyConfig::CustomTable { knots, values, sigma } => base
                .with_regularity(Regularity::LIPSCHITZ)
                .with_drift(move |_, y, out| {
                    for (o, v) in out.iter_mut().zip(y) {
                        *o = interpolate(&knots, &values, *v);
                    }
                })
                .with_diffusion(additive(sigma, dim, nw)),
        })
    }
}
