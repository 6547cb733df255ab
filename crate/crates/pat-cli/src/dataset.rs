//! Dataset generation: phantom -> truth raster -> simulated pressure
//! (optional noise) -> FBP input, with a manifest tying the files together.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use pat_core::fbp::fbp_reconstruct;
use pat_core::forward::{add_noise, simulate};
use pat_core::phantom::{
    rasterize, sample_ellipse_phantom_with, sample_shepplogan_phantom_with, EllipseClassSpec,
    Phantom,
};
use pat_core::rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::io::{save_image, save_pressure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PhantomClass {
    Ellipse,
    Shepplogan,
    /// Alternates ellipse and Shepp-Logan-type samples.
    Mixed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleEntry {
    pub index: usize,
    pub phantom: PathBuf,
    pub pressure: PathBuf,
    pub fbp: PathBuf,
    pub truth: PathBuf,
    /// RNG stream index used for the phantom draw.
    pub phantom_seed: u64,
    /// Seed of the additive noise; absent for clean data.
    pub noise_seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub class: PhantomClass,
    pub noisy: bool,
    pub seed: u64,
    pub samples: Vec<SampleEntry>,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> anyhow::Result<DatasetManifest> {
        let path = path.as_ref();
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let m: DatasetManifest =
            serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))?;
        anyhow::ensure!(
            m.config_hash == m.config.hash(),
            "{}: config hash mismatch (file edited after generation?)",
            path.display()
        );
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> anyhow::Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_vec_pretty(self)?)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    /// Resolves a sample path relative to the manifest's directory.
    pub fn resolve(&self, manifest_path: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            manifest_path.parent().unwrap_or(Path::new(".")).join(p)
        }
    }
}

fn draw_phantom(
    class: PhantomClass,
    index: usize,
    rngen: &mut rng::Rng,
) -> anyhow::Result<Phantom> {
    Ok(match class {
        PhantomClass::Ellipse => sample_ellipse_phantom_with(&EllipseClassSpec::default(), rngen),
        PhantomClass::Shepplogan => sample_shepplogan_phantom_with(rngen)?,
        PhantomClass::Mixed => {
            if index % 2 == 0 {
                sample_ellipse_phantom_with(&EllipseClassSpec::default(), rngen)
            } else {
                sample_shepplogan_phantom_with(rngen)?
            }
        }
    })
}

/// Generates `n` samples into `out_dir`. Deterministic in `seed`: sample `i`
/// draws from RNG substream `seed, i` and its noise (when enabled) from
/// substream `seed, n + i`.
pub fn gen_dataset(
    config: &ExperimentConfig,
    class: PhantomClass,
    n: usize,
    noisy: bool,
    seed: u64,
    out_dir: &Path,
) -> anyhow::Result<DatasetManifest> {
    anyhow::ensure!(n >= 1, "need at least one sample");
    config.validate()?;
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let grid = config.grid()?;
    let geometry = config.geometry()?;
    let fwd = config.forward_config()?;
    let fbp_cfg = config.fbp_config()?;

    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let mut rngen = rng::substream(seed, i as u64);
        let phantom = draw_phantom(class, i, &mut rngen)
            .with_context(|| format!("sample {i}: phantom draw failed"))?;
        let truth = rasterize::<f32>(&phantom, grid);
        let clean = simulate::<f64>(&phantom, &geometry, &fwd)
            .with_context(|| format!("sample {i}: simulation failed"))?;
        let (pressure, noise_seed) = if noisy && config.noise_level > 0.0 {
            let ns = seed.wrapping_add(n as u64).wrapping_add(i as u64);
            (
                add_noise(&clean, config.noise_level, ns)
                    .with_context(|| format!("sample {i}: noise failed"))?,
                Some(ns),
            )
        } else {
            (clean, None)
        };
        let fbp = fbp_reconstruct::<f64>(&pressure, grid, &fbp_cfg).map(|v| v as f32);

        let stem = format!("sample_{i:04}");
        let entry = SampleEntry {
            index: i,
            phantom: PathBuf::from(format!("{stem}.phantom.json")),
            pressure: PathBuf::from(format!("{stem}.pressure.patt")),
            fbp: PathBuf::from(format!("{stem}.fbp.patt")),
            truth: PathBuf::from(format!("{stem}.truth.patt")),
            phantom_seed: i as u64,
            noise_seed,
        };
        fs::write(
            out_dir.join(&entry.phantom),
            serde_json::to_vec_pretty(&phantom)?,
        )
        .with_context(|| format!("sample {i}: writing phantom"))?;
        save_pressure(out_dir.join(&entry.pressure), &pressure)
            .with_context(|| format!("sample {i}: writing pressure"))?;
        save_image(out_dir.join(&entry.fbp), &fbp)
            .with_context(|| format!("sample {i}: writing fbp input"))?;
        save_image(out_dir.join(&entry.truth), &truth)
            .with_context(|| format!("sample {i}: writing truth"))?;
        samples.push(entry);
    }

    let manifest = DatasetManifest {
        config: config.clone(),
        config_hash: config.hash(),
        class,
        noisy,
        seed,
        samples,
    };
    manifest.save(out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Loads the `(X, Y) = (fbp, truth)` image pairs of a manifest.
pub fn load_pairs(
    manifest: &DatasetManifest,
    manifest_path: &Path,
) -> anyhow::Result<Vec<(pat_core::grid::Image<f32>, pat_core::grid::Image<f32>)>> {
    manifest
        .samples
        .iter()
        .map(|s| {
            let x = crate::io::load_image::<f32>(manifest.resolve(manifest_path, &s.fbp))?;
            let y = crate::io::load_image::<f32>(manifest.resolve(manifest_path, &s.truth))?;
            Ok((x, y))
        })
        .collect()
}
