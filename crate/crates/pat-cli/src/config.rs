//! Experiment configuration: one JSON document covering geometry, dataset,
//! and per-method settings. Defaults reproduce the full-scale setup; the
//! `desk` preset shrinks everything so end-to-end runs finish on a CPU in
//! minutes.

use pat_core::fbp::FbpConfig;
use pat_core::forward::ForwardConfig;
use pat_core::geometry::Geometry;
use pat_core::grid::Grid;
use pat_core::tv::TvConfig;
use pat_nn::optim::TrainConfig;
use pat_nn::unet::UNetConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbpSettings {
    pub truncation_time: Option<f64>,
    pub n_rho: Option<usize>,
    pub mollifier_width: Option<f64>,
}

impl Default for FbpSettings {
    fn default() -> Self {
        FbpSettings {
            truncation_time: None,
            n_rho: None,
            mollifier_width: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvSettings {
    pub lambda: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub epsilon: f64,
}

impl Default for TvSettings {
    fn default() -> Self {
        TvSettings {
            lambda: 0.002,
            outer_iterations: 20,
            inner_iterations: 20,
            epsilon: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Image grid side length.
    pub d: usize,
    /// Detection circle radius.
    pub radius: f64,
    /// Detector count.
    pub detectors: usize,
    /// Final measurement time.
    pub final_time: f64,
    /// Time samples.
    pub time_samples: usize,
    /// Training pairs.
    pub train_samples: usize,
    /// Held-out test pairs.
    pub test_samples: usize,
    /// Noise level as a fraction of the maximal data value.
    pub noise_level: f64,
    pub fbp: FbpSettings,
    pub tv: TvSettings,
    pub unet: UNetConfig,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            d: 128,
            radius: 1.0,
            detectors: 30,
            final_time: 2.0,
            time_samples: 300,
            train_samples: 1000,
            test_samples: 50,
            noise_level: 0.02,
            fbp: FbpSettings::default(),
            tv: TvSettings::default(),
            unet: UNetConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reduced sizes for CPU-minutes runs.
    pub fn desk() -> Self {
        ExperimentConfig {
            d: 64,
            time_samples: 150,
            train_samples: 200,
            unet: UNetConfig {
                features: 16,
                levels: 4,
                kernel: 3,
            },
            train: TrainConfig {
                epochs: 20,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    pub fn grid(&self) -> pat_core::Result<Grid> {
        Grid::new(self.d)
    }

    pub fn geometry(&self) -> pat_core::Result<Geometry> {
        Geometry::new(self.radius, self.detectors, self.final_time, self.time_samples)
    }

    pub fn forward_config(&self) -> pat_core::Result<ForwardConfig> {
        Ok(ForwardConfig::for_simulation(&self.geometry()?))
    }

    pub fn fbp_config(&self) -> pat_core::Result<FbpConfig> {
        let geo = self.geometry()?;
        let mut cfg = FbpConfig::for_geometry(&geo);
        if let Some(t) = self.fbp.truncation_time {
            cfg = FbpConfig::new(t, cfg.n_rho, &geo)?.with_mollifier(cfg.mollifier_width);
        }
        if let Some(n) = self.fbp.n_rho {
            cfg = FbpConfig::new(cfg.truncation_time, n, &geo)?.with_mollifier(cfg.mollifier_width);
        }
        if let Some(w) = self.fbp.mollifier_width {
            cfg = cfg.with_mollifier(w);
        }
        Ok(cfg)
    }

    pub fn tv_config<S: pat_core::scalar::Scalar>(&self) -> TvConfig<S> {
        TvConfig {
            lambda: self.tv.lambda,
            outer_iterations: self.tv.outer_iterations,
            inner_iterations: self.tv.inner_iterations,
            epsilon: self.tv.epsilon,
            init: None,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.grid()?;
        self.geometry()?;
        self.fbp_config()?;
        self.unet.validate()?;
        self.train.validate()?;
        if self.noise_level < 0.0 {
            anyhow::bail!("noise level must be >= 0");
        }
        if self.train_samples == 0 || self.test_samples == 0 {
            anyhow::bail!("sample counts must be >= 1");
        }
        let div = 1usize << (self.unet.levels - 1);
        if self.d % div != 0 {
            anyhow::bail!("d={} not divisible by 2^(levels-1)={div}", self.d);
        }
        Ok(())
    }

    /// Content hash used by manifests to detect config drift.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
