//! Square imaging grid on [-1,1]^2 and the images living on it.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::{c, Scalar};

/// Uniform d x d pixel grid covering [-1,1]^2.
///
/// Pixel centers sit at `x_i = -1 + (i + 0.5) * dx` with `dx = 2/d`, so the
/// grid is symmetric about the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    d: usize,
}

impl Grid {
    pub fn new(d: usize) -> Result<Grid> {
        if d < 8 {
            return Err(invalid(format!("grid size d={d} must be >= 8")));
        }
        Ok(Grid { d })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Pixel spacing, identical in both axes.
    pub fn dx(&self) -> f64 {
        2.0 / self.d as f64
    }

    /// Center coordinate of pixel index `i` along either axis.
    pub fn coord(&self, i: usize) -> f64 {
        -1.0 + (i as f64 + 0.5) * self.dx()
    }

    pub fn len(&self) -> usize {
        self.d * self.d
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Scalar field sampled on a [`Grid`]; stores the initial pressure or a
/// reconstruction. Row-major, index `iy * d + ix`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<S: Scalar> {
    grid: Grid,
    values: Vec<S>,
}

impl<S: Scalar> Image<S> {
    pub fn zeros(grid: Grid) -> Image<S> {
        Image {
            grid,
            values: vec![S::zero(); grid.len()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<S>) -> Result<Image<S>> {
        if values.len() != grid.len() {
            return Err(invalid(format!(
                "image buffer length {} does not match {}x{} grid",
                values.len(),
                grid.d(),
                grid.d()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("image contains non-finite values"));
        }
        Ok(Image { grid, values })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> S {
        self.values[iy * self.grid.d + ix]
    }

    #[inline]
    pub fn at_mut(&mut self, ix: usize, iy: usize) -> &mut S {
        &mut self.values[iy * self.grid.d + ix]
    }

    /// Elementwise map, e.g. for precision conversion.
    pub fn map<T: Scalar>(&self, f: impl Fn(S) -> T) -> Image<T> {
        Image {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Bilinear interpolation at a physical point, zero outside [-1,1]^2.
    ///
    /// The image is treated as zero beyond the outermost pixel centers so the
    /// interpolant is continuous and strictly linear in the pixel values.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> S {
        let mut acc = S::zero();
        self.scatter_bilinear(x, y, |img_val, w| {
            acc += img_val * c::<S>(w);
        });
        acc
    }

    /// Visits the up-to-four pixels touched by bilinear interpolation at
    /// `(x, y)` with their weights. Shared by interpolation and its adjoint.
    #[inline]
    pub fn bilinear_stencil(grid: Grid, x: f64, y: f64) -> BilinearStencil {
        let d = grid.d as isize;
        let dx = grid.dx();
        // fractional index relative to pixel centers
        let fx = (x + 1.0) / dx - 0.5;
        let fy = (y + 1.0) / dx - 0.5;
        let ix0 = fx.floor() as isize;
        let iy0 = fy.floor() as isize;
        let tx = fx - ix0 as f64;
        let ty = fy - iy0 as f64;
        let mut st = BilinearStencil::default();
        for (di, dj, w) in [
            (0, 0, (1.0 - tx) * (1.0 - ty)),
            (1, 0, tx * (1.0 - ty)),
            (0, 1, (1.0 - tx) * ty),
            (1, 1, tx * ty),
        ] {
            let ix = ix0 + di;
            let iy = iy0 + dj;
            if ix >= 0 && ix < d && iy >= 0 && iy < d && w != 0.0 {
                st.idx[st.n] = (iy * d + ix) as usize;
                st.w[st.n] = w;
                st.n += 1;
            }
        }
        st
    }

    #[inline]
    fn scatter_bilinear(&self, x: f64, y: f64, mut f: impl FnMut(S, f64)) {
        let st = Self::bilinear_stencil(self.grid, x, y);
        for k in 0..st.n {
            f(self.values[st.idx[k]], st.w[k]);
        }
    }

    pub fn l2_norm(&self) -> S {
        self.values.iter().map(|v| *v * *v).sum::<S>().sqrt()
    }
}

/// Up to four (index, weight) pairs of a bilinear interpolation point.
#[derive(Debug, Default, Clone, Copy)]
pub struct BilinearStencil {
    pub idx: [usize; 4],
    pub w: [f64; 4],
    pub n: usize,
}
