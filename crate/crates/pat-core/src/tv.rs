//! Penalized TV minimization solved by lagged diffusivity with inner
//! conjugate-gradient iterations.
//!
//! Minimizes `1/2 ||p - P Y||_2^2 + lambda * TV_eps(Y)` with the smoothed
//! isotropic total variation `TV_eps(Y) = sum_pixels sqrt(|grad Y|^2 + eps^2)`
//! (forward differences, zero at the far boundary). Each outer iteration
//! freezes the diffusivity `w = 1 / sqrt(|grad Y|^2 + eps^2)` and solves the
//! normal equations `(P* P + lambda grad^T w grad) Y = P* p` by CG, warm
//! started at the current iterate so the smoothed objective never increases.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::forward::ForwardOperator;
use crate::geometry::PressureData;
use crate::grid::Image;
use crate::scalar::{c, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct TvConfig<S: Scalar> {
    pub lambda: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub epsilon: f64,
    /// Starting iterate; zero image when absent.
    pub init: Option<Image<S>>,
}

impl<S: Scalar> Default for TvConfig<S> {
    fn default() -> Self {
        TvConfig {
            lambda: 0.002,
            outer_iterations: 20,
            inner_iterations: 20,
            epsilon: 1e-4,
            init: None,
        }
    }
}

impl<S: Scalar> TvConfig<S> {
    fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(invalid(format!("lambda {} must be >= 0", self.lambda)));
        }
        if !(self.epsilon > 0.0) {
            return Err(invalid(format!("epsilon {} must be > 0", self.epsilon)));
        }
        if self.outer_iterations == 0 || self.inner_iterations == 0 {
            return Err(invalid("iteration counts must be >= 1"));
        }
        Ok(())
    }
}

/// Per-run diagnostics, JSON-serializable for regression checks.
#[derive(Debug, Clone, Serialize)]
pub struct TvDiagnostics {
    /// Smoothed objective after each outer iteration (index 0: initial value).
    pub objective: Vec<f64>,
    /// Final CG residual norm per outer iteration.
    pub cg_residual: Vec<f64>,
    /// True when an inner solve stopped early on nonpositive curvature.
    pub cg_breakdown: bool,
}

/// Forward-difference gradient, zero beyond the last row/column.
fn gradient<S: Scalar>(img: &Image<S>, gx: &mut [S], gy: &mut [S]) {
    let d = img.grid().d();
    let v = img.values();
    for iy in 0..d {
        for ix in 0..d {
            let i = iy * d + ix;
            gx[i] = if ix + 1 < d { v[i + 1] - v[i] } else { S::zero() };
            gy[i] = if iy + 1 < d { v[i + d] - v[i] } else { S::zero() };
        }
    }
}

/// Exact transpose of [`gradient`]: negative divergence.
fn gradient_transpose<S: Scalar>(gx: &[S], gy: &[S], d: usize, out: &mut [S]) {
    out.fill(S::zero());
    for iy in 0..d {
        for ix in 0..d {
            let i = iy * d + ix;
            if ix + 1 < d {
                out[i] -= gx[i];
                out[i + 1] += gx[i];
            }
            if iy + 1 < d {
                out[i] -= gy[i];
                out[i + d] += gy[i];
            }
        }
    }
}

/// Smoothed objective value `1/2 ||p - P Y||^2 + lambda sum sqrt(|grad Y|^2 + eps^2)`.
pub fn tv_objective<S: Scalar>(
    op: &ForwardOperator,
    y: &Image<S>,
    data: &PressureData<S>,
    config: &TvConfig<S>,
) -> Result<f64> {
    config.validate()?;
    if y.grid() != op.grid() || data.geometry() != op.geometry() {
        return Err(invalid("tv_objective: shape mismatch with operator"));
    }
    let py = op.forward(y)?;
    let data_term: f64 = py
        .values()
        .iter()
        .zip(data.values())
        .map(|(a, b)| {
            let r = (*a - *b).to_f64().unwrap();
            r * r
        })
        .sum::<f64>()
        * 0.5;

    let n = y.grid().len();
    let mut gx = vec![S::zero(); n];
    let mut gy = vec![S::zero(); n];
    gradient(y, &mut gx, &mut gy);
    let tv: f64 = gx
        .iter()
        .zip(&gy)
        .map(|(a, b)| {
            let (a, b) = (a.to_f64().unwrap(), b.to_f64().unwrap());
            (a * a + b * b + config.epsilon * config.epsilon).sqrt()
        })
        .sum();
    Ok(data_term + config.lambda * tv)
}

/// Lagged-diffusivity TV reconstruction. Returns the final iterate and the
/// per-iteration diagnostics.
pub fn tv_reconstruct<S: Scalar>(
    data: &PressureData<S>,
    op: &ForwardOperator,
    config: &TvConfig<S>,
) -> Result<(Image<S>, TvDiagnostics)> {
    config.validate()?;
    if data.geometry() != op.geometry() {
        return Err(invalid("tv_reconstruct: data geometry does not match operator"));
    }
    let grid = op.grid();
    let d = grid.d();
    let n = grid.len();

    let mut y = match &config.init {
        Some(img) => {
            if img.grid() != grid {
                return Err(invalid("tv_reconstruct: initial iterate grid mismatch"));
            }
            img.clone()
        }
        None => Image::zeros(grid),
    };

    // right-hand side P* p, fixed across all iterations
    let rhs = op.adjoint(data)?;

    let mut diag = TvDiagnostics {
        objective: vec![tv_objective(op, &y, data, config)?],
        cg_residual: Vec::new(),
        cg_breakdown: false,
    };

    let mut gx = vec![S::zero(); n];
    let mut gy = vec![S::zero(); n];
    let mut weights = vec![0.0f64; n];
    let mut div = vec![S::zero(); n];

    // A v = P* P v + lambda grad^T (w grad v)
    let apply_system = |v: &Image<S>, weights: &[f64], gx: &mut Vec<S>, gy: &mut Vec<S>, div: &mut Vec<S>| -> Result<Vec<S>> {
        let pv = op.forward(v)?;
        let mut out = op.adjoint(&pv)?.values().to_vec();
        gradient(v, gx, gy);
        for i in 0..n {
            let w = c::<S>(weights[i] * config.lambda);
            gx[i] *= w;
            gy[i] *= w;
        }
        gradient_transpose(gx, gy, d, div);
        for i in 0..n {
            out[i] += div[i];
        }
        Ok(out)
    };

    for _ in 0..config.outer_iterations {
        // freeze diffusivity at the current iterate
        gradient(&y, &mut gx, &mut gy);
        for i in 0..n {
            let (a, b) = (gx[i].to_f64().unwrap(), gy[i].to_f64().unwrap());
            weights[i] = 1.0 / (a * a + b * b + config.epsilon * config.epsilon).sqrt();
        }

        // CG on (P*P + lambda L_w) y = P* p, warm started at y
        let ay = apply_system(&y, &weights, &mut gx, &mut gy, &mut div)?;
        let mut r: Vec<S> = rhs.values().iter().zip(&ay).map(|(b, a)| *b - *a).collect();
        let mut p = r.clone();
        let mut rs_old: S = r.iter().map(|v| *v * *v).sum();
        for _ in 0..config.inner_iterations {
            if rs_old.to_f64().unwrap() == 0.0 {
                break;
            }
            let p_img = Image::from_values(grid, p.clone())?;
            let ap = apply_system(&p_img, &weights, &mut gx, &mut gy, &mut div)?;
            let p_ap: S = p.iter().zip(&ap).map(|(a, b)| *a * *b).sum();
            if p_ap.to_f64().unwrap() <= 0.0 {
                // nonpositive curvature from rounding: keep the current iterate
                diag.cg_breakdown = true;
                break;
            }
            let alpha = rs_old / p_ap;
            for i in 0..n {
                let yi = y.values()[i] + alpha * p[i];
                y.values_mut()[i] = yi;
                r[i] = r[i] - alpha * ap[i];
            }
            let rs_new: S = r.iter().map(|v| *v * *v).sum();
            let beta = rs_new / rs_old;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
            rs_old = rs_new;
        }
        diag.cg_residual.push(rs_old.to_f64().unwrap().sqrt());
        diag.objective.push(tv_objective(op, &y, data, config)?);
    }
    Ok((y, diag))
}
