//! Circular measurement geometry and sampled detector data.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Detection circle of radius `R` with `M` equiangular detectors and a
/// uniform time grid `t_k = k * T / (Nt - 1)` on `[0, T]`. Sound speed is
/// normalized to one, so `T >= 2R` guarantees every singularity of a source
/// supported in the disc is recorded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    radius: f64,
    detectors: usize,
    final_time: f64,
    time_samples: usize,
}

impl Geometry {
    pub fn new(radius: f64, detectors: usize, final_time: f64, time_samples: usize) -> Result<Geometry> {
        if !(radius > 0.0) {
            return Err(invalid(format!("radius R={radius} must be positive")));
        }
        if detectors < 3 {
            return Err(invalid(format!("detector count M={detectors} must be >= 3")));
        }
        if final_time < 2.0 * radius {
            return Err(invalid(format!(
                "final time T={final_time} must be >= 2R={}",
                2.0 * radius
            )));
        }
        if time_samples < 2 {
            return Err(invalid(format!("time sample count Nt={time_samples} must be >= 2")));
        }
        Ok(Geometry {
            radius,
            detectors,
            final_time,
            time_samples,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn detectors(&self) -> usize {
        self.detectors
    }

    pub fn final_time(&self) -> f64 {
        self.final_time
    }

    pub fn time_samples(&self) -> usize {
        self.time_samples
    }

    pub fn dt(&self) -> f64 {
        self.final_time / (self.time_samples - 1) as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }
}

/// Detector positions `z_m = R (cos 2pi(m-1)/M, sin 2pi(m-1)/M)`,
/// `m = 1..M`, starting at `(R, 0)`.
pub fn detector_positions(geometry: &Geometry) -> Vec<(f64, f64)> {
    let m_total = geometry.detectors();
    let r = geometry.radius();
    (0..m_total)
        .map(|m| {
            let phi = 2.0 * std::f64::consts::PI * m as f64 / m_total as f64;
            (r * phi.cos(), r * phi.sin())
        })
        .collect()
}

/// `M x Nt` sampled detector signals; row `m` is the signal of detector `z_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureData<S: Scalar> {
    geometry: Geometry,
    values: Vec<S>,
}

impl<S: Scalar> PressureData<S> {
    pub fn zeros(geometry: Geometry) -> PressureData<S> {
        PressureData {
            geometry,
            values: vec![S::zero(); geometry.detectors() * geometry.time_samples()],
        }
    }

    pub fn from_values(geometry: Geometry, values: Vec<S>) -> Result<PressureData<S>> {
        if values.len() != geometry.detectors() * geometry.time_samples() {
            return Err(invalid(format!(
                "pressure buffer length {} does not match M x Nt = {} x {}",
                values.len(),
                geometry.detectors(),
                geometry.time_samples()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("pressure data contains non-finite values"));
        }
        Ok(PressureData { geometry, values })
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    pub fn row(&self, m: usize) -> &[S] {
        let nt = self.geometry.time_samples();
        &self.values[m * nt..(m + 1) * nt]
    }

    pub fn row_mut(&mut self, m: usize) -> &mut [S] {
        let nt = self.geometry.time_samples();
        &mut self.values[m * nt..(m + 1) * nt]
    }

    pub fn max_abs(&self) -> S {
        self.values
            .iter()
            .fold(S::zero(), |acc, v| acc.max(v.abs()))
    }
}
