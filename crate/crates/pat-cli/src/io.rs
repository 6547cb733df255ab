//! File helpers: images and pressure data as tensor files.

use std::path::Path;

use anyhow::Context;
use pat_core::geometry::{Geometry, PressureData};
use pat_core::grid::{Grid, Image};
use pat_core::scalar::Scalar;
use pat_core::tensor_file::{load_tensor, save_tensor, NamedTensor};

pub fn save_image<S: Scalar>(path: impl AsRef<Path>, image: &Image<S>) -> anyhow::Result<()> {
    let d = image.grid().d();
    let t = NamedTensor::new("image", vec![d, d], image.values().to_vec())?;
    save_tensor(&path, &t).with_context(|| format!("writing {}", path.as_ref().display()))?;
    Ok(())
}

pub fn load_image<S: Scalar>(path: impl AsRef<Path>) -> anyhow::Result<Image<S>> {
    let t = load_tensor::<S>(&path)
        .with_context(|| format!("reading {}", path.as_ref().display()))?;
    anyhow::ensure!(
        t.dims.len() == 2 && t.dims[0] == t.dims[1],
        "{}: expected a square rank-2 tensor, got dims {:?}",
        path.as_ref().display(),
        t.dims
    );
    Ok(Image::from_values(Grid::new(t.dims[0])?, t.data)?)
}

pub fn save_pressure<S: Scalar>(
    path: impl AsRef<Path>,
    data: &PressureData<S>,
) -> anyhow::Result<()> {
    let geo = data.geometry();
    let t = NamedTensor::new(
        "pressure",
        vec![geo.detectors(), geo.time_samples()],
        data.values().to_vec(),
    )?;
    save_tensor(&path, &t).with_context(|| format!("writing {}", path.as_ref().display()))?;
    Ok(())
}

pub fn load_pressure<S: Scalar>(
    path: impl AsRef<Path>,
    geometry: Geometry,
) -> anyhow::Result<PressureData<S>> {
    let t = load_tensor::<S>(&path)
        .with_context(|| format!("reading {}", path.as_ref().display()))?;
    anyhow::ensure!(
        t.dims == vec![geometry.detectors(), geometry.time_samples()],
        "{}: dims {:?} do not match geometry ({} detectors, {} samples)",
        path.as_ref().display(),
        t.dims,
        geometry.detectors(),
        geometry.time_samples()
    );
    Ok(PressureData::from_values(geometry, t.data)?)
}
