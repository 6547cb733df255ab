//! Analytic ellipse phantoms: the two random phantom classes and
//! rasterization onto the imaging grid.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{Grid, Image};
use crate::rng::{seeded, Rng};
use crate::scalar::{c, Scalar};

/// Solid ellipse with additive intensity. The phantom value at a point is the
/// sum of intensities of all ellipses covering it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: (f64, f64),
    pub semi_axes: (f64, f64),
    pub angle: f64,
    pub intensity: f64,
}

impl Ellipse {
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.center.0;
        let dy = y - self.center.1;
        let (s, co) = self.angle.sin_cos();
        let u = co * dx + s * dy;
        let v = -s * dx + co * dy;
        let (a, b) = self.semi_axes;
        (u / a) * (u / a) + (v / b) * (v / b) <= 1.0
    }

    /// Radius of the smallest origin-centered disc containing the support.
    pub fn outer_radius(&self) -> f64 {
        let (cx, cy) = self.center;
        (cx * cx + cy * cy).sqrt() + self.semi_axes.0.max(self.semi_axes.1)
    }

    /// Fraction of the circle of radius `r` about `(zx, zy)` lying inside the
    /// ellipse, i.e. the exact circular mean of the indicator.
    ///
    /// The inside test along the circle is a trigonometric polynomial of
    /// degree two in the angle; its sign changes are bracketed on a uniform
    /// `scan`-point grid and refined by bisection, and the covered arcs are
    /// summed.
    pub fn arc_fraction(&self, zx: f64, zy: f64, r: f64, scan: usize) -> f64 {
        let (s, co) = self.angle.sin_cos();
        let dx = zx - self.center.0;
        let dy = zy - self.center.1;
        // circle center in ellipse-aligned coordinates
        let wx = co * dx + s * dy;
        let wy = -s * dx + co * dy;
        let (a, b) = self.semi_axes;
        // g(psi) < 0 iff z + r e_{psi + angle} lies inside the ellipse
        let g = |psi: f64| -> f64 {
            let (sp, cp) = psi.sin_cos();
            let u = wx + r * cp;
            let v = wy + r * sp;
            (u / a) * (u / a) + (v / b) * (v / b) - 1.0
        };

        // quick reject/accept by distance bounds
        let dist = (wx * wx + wy * wy).sqrt();
        let rmax = a.max(b);
        let rmin = a.min(b);
        if dist - r > rmax || r - dist > rmax {
            return 0.0;
        }
        if dist + r < rmin {
            return 1.0;
        }

        let n = scan.max(64);
        let h = std::f64::consts::TAU / n as f64;
        let mut prev = g(0.0);
        let mut roots: Vec<f64> = Vec::new();
        for i in 1..=n {
            let psi = i as f64 * h;
            let cur = g(psi);
            if (prev < 0.0) != (cur < 0.0) {
                // bisect the bracket to machine precision
                let (mut lo, mut hi) = (psi - h, psi);
                let (mut glo, _) = (prev, cur);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    let gm = g(mid);
                    if (glo < 0.0) != (gm < 0.0) {
                        hi = mid;
                    } else {
                        lo = mid;
                        glo = gm;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
            prev = cur;
        }
        if roots.is_empty() {
            return if g(0.0) < 0.0 { 1.0 } else { 0.0 };
        }
        let mut inside = 0.0;
        for k in 0..roots.len() {
            let lo = roots[k];
            let hi = if k + 1 < roots.len() {
                roots[k + 1]
            } else {
                roots[0] + std::f64::consts::TAU
            };
            if g(0.5 * (lo + hi)) < 0.0 {
                inside += hi - lo;
            }
        }
        inside / std::f64::consts::TAU
    }
}

/// Sum of weighted ellipse indicators; the analytic ground truth before
/// rasterization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phantom {
    pub ellipses: Vec<Ellipse>,
}

impl Phantom {
    pub fn empty() -> Phantom {
        Phantom { ellipses: Vec::new() }
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.ellipses
            .iter()
            .filter(|e| e.contains(x, y))
            .map(|e| e.intensity)
            .sum()
    }

    /// Exact mean of the phantom over the circle of radius `r` about
    /// `(zx, zy)`: weighted sum of per-ellipse arc fractions.
    pub fn circular_mean(&self, zx: f64, zy: f64, r: f64, scan: usize) -> f64 {
        self.ellipses
            .iter()
            .map(|e| e.intensity * e.arc_fraction(zx, zy, r, scan))
            .sum()
    }

    /// Conservative support bound: max over ellipses of ||center|| + max axis.
    pub fn outer_radius(&self) -> f64 {
        self.ellipses
            .iter()
            .map(Ellipse::outer_radius)
            .fold(0.0, f64::max)
    }
}

/// Random model for the ellipse phantom class: centers uniform in
/// `(-0.5, 0.5)` per coordinate, semi-axes uniform in `(0.1, 0.2)`, ellipse
/// count uniform on `{1, ..., 5}`, axis-aligned with unit intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseClassSpec {
    pub center_range: (f64, f64),
    pub axis_range: (f64, f64),
    pub count_range: (usize, usize),
    pub angle: f64,
    pub intensity: f64,
}

impl Default for EllipseClassSpec {
    fn default() -> Self {
        EllipseClassSpec {
            center_range: (-0.5, 0.5),
            axis_range: (0.1, 0.2),
            count_range: (1, 5),
            angle: 0.0,
            intensity: 1.0,
        }
    }
}

pub fn sample_ellipse_phantom(spec: &EllipseClassSpec, seed: u64) -> Phantom {
    let mut rng = seeded(seed);
    sample_ellipse_phantom_with(spec, &mut rng)
}

pub fn sample_ellipse_phantom_with(spec: &EllipseClassSpec, rng: &mut Rng) -> Phantom {
    let (lo, hi) = spec.count_range;
    let count = rng.gen_range(lo..=hi);
    let ellipses = (0..count)
        .map(|_| Ellipse {
            center: (
                rng.gen_range(spec.center_range.0..spec.center_range.1),
                rng.gen_range(spec.center_range.0..spec.center_range.1),
            ),
            semi_axes: (
                rng.gen_range(spec.axis_range.0..spec.axis_range.1),
                rng.gen_range(spec.axis_range.0..spec.axis_range.1),
            ),
            angle: spec.angle,
            intensity: spec.intensity,
        })
        .collect();
    Phantom { ellipses }
}

const SHEPP_INTERIOR_COUNT: usize = 9;
const SHEPP_MAX_RETRIES: usize = 1000;

/// Shepp-Logan-type random phantom: one large outer ellipse of intensity 1
/// plus nine interior ellipses with random position, shape, angle and signed
/// intensity, all supports constrained to the unit disc (rejection sampling).
pub fn sample_shepplogan_phantom(seed: u64) -> Result<Phantom> {
    let mut rng = seeded(seed);
    sample_shepplogan_phantom_with(&mut rng)
}

pub fn sample_shepplogan_phantom_with(rng: &mut Rng) -> Result<Phantom> {
    let outer = Ellipse {
        center: (rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05)),
        semi_axes: (rng.gen_range(0.6..0.8), rng.gen_range(0.7..0.9)),
        angle: 0.0,
        intensity: 1.0,
    };
    debug_assert!(outer.outer_radius() <= 1.0);
    let inner_disc = outer.semi_axes.0.min(outer.semi_axes.1);

    let mut ellipses = vec![outer];
    for _ in 0..SHEPP_INTERIOR_COUNT {
        let mut placed = false;
        for _ in 0..SHEPP_MAX_RETRIES {
            // center uniform in the outer ellipse's inscribed disc
            let rr = inner_disc * rng.gen_range(0.0f64..1.0).sqrt();
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            let e = Ellipse {
                center: (outer.center.0 + rr * phi.cos(), outer.center.1 + rr * phi.sin()),
                semi_axes: (rng.gen_range(0.05..0.35), rng.gen_range(0.05..0.35)),
                angle: rng.gen_range(0.0..std::f64::consts::PI),
                intensity: rng.gen_range(-0.8..0.8),
            };
            if e.outer_radius() <= 1.0 {
                ellipses.push(e);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(invalid("shepp-logan sampler: containment retries exhausted"));
        }
    }
    Ok(Phantom { ellipses })
}

/// Supersampling factor used when rasterizing the sharp indicators.
pub const RASTER_SUPERSAMPLE: usize = 4;

/// Rasterizes the phantom: each pixel is the average of the analytic point
/// evaluation over an `ss x ss` subgrid of the pixel cell.
pub fn rasterize<S: Scalar>(phantom: &Phantom, grid: Grid) -> Image<S> {
    rasterize_supersampled(phantom, grid, RASTER_SUPERSAMPLE)
}

pub fn rasterize_supersampled<S: Scalar>(phantom: &Phantom, grid: Grid, ss: usize) -> Image<S> {
    let d = grid.d();
    let dx = grid.dx();
    let sub = dx / ss as f64;
    let inv = 1.0 / (ss * ss) as f64;
    let mut img = Image::zeros(grid);
    for iy in 0..d {
        let y0 = grid.coord(iy) - 0.5 * dx;
        for ix in 0..d {
            let x0 = grid.coord(ix) - 0.5 * dx;
            let mut acc = 0.0;
            for sy in 0..ss {
                let y = y0 + (sy as f64 + 0.5) * sub;
                for sx in 0..ss {
                    let x = x0 + (sx as f64 + 0.5) * sub;
                    acc += phantom.eval(x, y);
                }
            }
            *img.at_mut(ix, iy) = c::<S>(acc * inv);
        }
    }
    img
}
