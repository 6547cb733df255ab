//! 16-bit binary PGM (P5) export for figure rendering.

use std::fs;
use std::path::Path;

use crate::error::{invalid, Result};
use crate::grid::Image;
use crate::scalar::Scalar;

/// Renders `image` to a 16-bit P5 graymap, mapping `[lo, hi]` affinely onto
/// `[0, 65535]` with clamping. Sharing one window across exports makes the
/// resulting files comparable pixel for pixel.
pub fn export_pgm<S: Scalar>(image: &Image<S>, path: impl AsRef<Path>, window: (f64, f64)) -> Result<()> {
    fs::write(path, encode_pgm(image, window)?)?;
    Ok(())
}

pub fn encode_pgm<S: Scalar>(image: &Image<S>, (lo, hi): (f64, f64)) -> Result<Vec<u8>> {
    if !(lo < hi) {
        return Err(invalid(format!("pgm window lo={lo} must be < hi={hi}")));
    }
    let d = image.grid().d();
    let mut out = format!("P5\n{d} {d}\n65535\n").into_bytes();
    let scale = 65535.0 / (hi - lo);
    for v in image.values() {
        let t = ((v.to_f64().unwrap_or(0.0) - lo) * scale).clamp(0.0, 65535.0);
        // maxval > 255: PGM stores the most significant byte first
        out.extend_from_slice(&(t.round() as u16).to_be_bytes());
    }
    Ok(out)
}
