//! Fixed layer set: convolution (cross-correlation), ReLU, 2x2 max-pool,
//! 2x2 stride-2 transposed convolution, channel concatenation. Every layer
//! ships an exact reverse-mode backward.

use pat_core::scalar::Scalar;

use crate::error::{invalid, shape, Result};
use crate::tensor::Tensor4;

/// Convolution parameters. Weight layout `[c_out][c_in][k][k]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<S: Scalar> {
    pub weight: Vec<S>,
    pub bias: Vec<S>,
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub padding: usize,
}

impl<S: Scalar> ConvParams<S> {
    pub fn zeros(c_in: usize, c_out: usize, k: usize, stride: usize, padding: usize) -> Result<Self> {
        if c_in == 0 || c_out == 0 || k == 0 || stride == 0 {
            return Err(invalid("conv dims and stride must be >= 1"));
        }
        if stride == 1 && padding == (k - 1) / 2 && k % 2 == 0 {
            return Err(invalid("same-padding convolution requires odd kernel size"));
        }
        Ok(ConvParams {
            weight: vec![S::zero(); c_out * c_in * k * k],
            bias: vec![S::zero(); c_out],
            c_in,
            c_out,
            k,
            stride,
            padding,
        })
    }

    /// Stride-1 convolution with zero same-padding; odd `k` required.
    pub fn same(c_in: usize, c_out: usize, k: usize) -> Result<Self> {
        if k % 2 == 0 {
            return Err(invalid("same-padding convolution requires odd kernel size"));
        }
        Self::zeros(c_in, c_out, k, 1, (k - 1) / 2)
    }

    #[inline]
    pub fn w_at(&self, co: usize, ci: usize, ky: usize, kx: usize) -> S {
        self.weight[((co * self.c_in + ci) * self.k + ky) * self.k + kx]
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(S) -> T) -> ConvParams<T> {
        ConvParams {
            weight: self.weight.iter().map(|&v| f(v)).collect(),
            bias: self.bias.iter().map(|&v| f(v)).collect(),
            c_in: self.c_in,
            c_out: self.c_out,
            k: self.k,
            stride: self.stride,
            padding: self.padding,
        }
    }
}

/// Parameter gradients returned by the conv backwards.
#[derive(Debug, Clone)]
pub struct ConvGrads<S: Scalar> {
    pub weight: Vec<S>,
    pub bias: Vec<S>,
}

fn out_dim(input: usize, k: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = input + 2 * padding;
    if padded < k {
        return Err(shape(format!("input {input} too small for kernel {k}")));
    }
    Ok((padded - k) / stride + 1)
}

/// Output-index range `[lo, hi)` for which `o*stride + koff - padding` lands
/// inside `[0, input)`; hoists the bounds check out of the inner loops.
#[inline]
fn valid_range(out: usize, input: usize, stride: usize, koff: usize, padding: usize) -> (usize, usize) {
    let lo = if koff >= padding {
        0
    } else {
        (padding - koff).div_ceil(stride)
    };
    let hi = if input + padding > koff {
        ((input + padding - koff - 1) / stride + 1).min(out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Cross-correlation: `y[n,co,oy,ox] = b[co] + sum w[co,ci,ky,kx] *
/// x[n,ci,oy*s+ky-p,ox*s+kx-p]`, zero outside the input.
pub fn conv2d_forward<S: Scalar>(x: &Tensor4<S>, params: &ConvParams<S>) -> Result<Tensor4<S>> {
    if x.c != params.c_in {
        return Err(shape(format!(
            "conv expects {} input channels, got {}",
            params.c_in, x.c
        )));
    }
    let (k, s, p) = (params.k, params.stride, params.padding);
    let oh = out_dim(x.h, k, s, p)?;
    let ow = out_dim(x.w, k, s, p)?;
    let mut y = Tensor4::zeros(x.n, params.c_out, oh, ow);
    for n in 0..x.n {
        for co in 0..params.c_out {
            let b = params.bias[co];
            y.plane_mut(n, co).fill(b);
            for ci in 0..params.c_in {
                let xp = x.plane(n, ci);
                for ky in 0..k {
                    for kx in 0..k {
                        let w = params.w_at(co, ci, ky, kx);
                        if w == S::zero() {
                            continue;
                        }
                        let yp = y.plane_mut(n, co);
                        let (oy_lo, oy_hi) = valid_range(oh, x.h, s, ky, p);
                        let (ox_lo, ox_hi) = valid_range(ow, x.w, s, kx, p);
                        for oy in oy_lo..oy_hi {
                            let iy = oy * s + ky - p;
                            let xrow = &xp[iy * x.w..(iy + 1) * x.w];
                            let yrow = &mut yp[oy * ow..(oy + 1) * ow];
                            if s == 1 {
                                let off = kx.wrapping_sub(p);
                                for (yv, xv) in yrow[ox_lo..ox_hi]
                                    .iter_mut()
                                    .zip(&xrow[ox_lo.wrapping_add(off)..ox_hi.wrapping_add(off)])
                                {
                                    *yv += w * *xv;
                                }
                            } else {
                                for ox in ox_lo..ox_hi {
                                    yrow[ox] += w * xrow[ox * s + kx - p];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(y)
}

/// Exact gradients of [`conv2d_forward`] with respect to input and parameters.
pub fn conv2d_backward<S: Scalar>(
    x: &Tensor4<S>,
    params: &ConvParams<S>,
    grad_out: &Tensor4<S>,
) -> Result<(Tensor4<S>, ConvGrads<S>)> {
    let (k, s, p) = (params.k, params.stride, params.padding);
    let oh = out_dim(x.h, k, s, p)?;
    let ow = out_dim(x.w, k, s, p)?;
    if grad_out.shape() != (x.n, params.c_out, oh, ow) {
        return Err(shape(format!(
            "grad_out shape {:?} does not match conv output ({}, {}, {oh}, {ow})",
            grad_out.shape(),
            x.n,
            params.c_out
        )));
    }
    let mut gx = Tensor4::zeros(x.n, x.c, x.h, x.w);
    let mut gw = vec![S::zero(); params.weight.len()];
    let mut gb = vec![S::zero(); params.c_out];
    for n in 0..x.n {
        for co in 0..params.c_out {
            let gp = grad_out.plane(n, co);
            gb[co] += gp.iter().copied().sum();
            for ci in 0..params.c_in {
                let xp = x.plane(n, ci);
                for ky in 0..k {
                    for kx in 0..k {
                        let w = params.w_at(co, ci, ky, kx);
                        let widx = ((co * params.c_in + ci) * k + ky) * k + kx;
                        let mut wg = S::zero();
                        let gxp = gx.plane_mut(n, ci);
                        let (oy_lo, oy_hi) = valid_range(oh, x.h, s, ky, p);
                        let (ox_lo, ox_hi) = valid_range(ow, x.w, s, kx, p);
                        for oy in oy_lo..oy_hi {
                            let iy = oy * s + ky - p;
                            let xrow = &xp[iy * x.w..(iy + 1) * x.w];
                            let grow = &gp[oy * ow..(oy + 1) * ow];
                            let gxrow = &mut gxp[iy * x.w..(iy + 1) * x.w];
                            if s == 1 {
                                let off = kx.wrapping_sub(p);
                                let ilo = ox_lo.wrapping_add(off);
                                let ihi = ox_hi.wrapping_add(off);
                                for ((&g, &xv), gxv) in grow[ox_lo..ox_hi]
                                    .iter()
                                    .zip(&xrow[ilo..ihi])
                                    .zip(&mut gxrow[ilo..ihi])
                                {
                                    wg += g * xv;
                                    *gxv += w * g;
                                }
                            } else {
                                for ox in ox_lo..ox_hi {
                                    let ix = ox * s + kx - p;
                                    wg += grow[ox] * xrow[ix];
                                    gxrow[ix] += w * grow[ox];
                                }
                            }
                        }
                        gw[widx] += wg;
                    }
                }
            }
        }
    }
    Ok((gx, ConvGrads { weight: gw, bias: gb }))
}

pub fn relu_forward<S: Scalar>(x: &Tensor4<S>) -> Tensor4<S> {
    x.map(|v| if v > S::zero() { v } else { S::zero() })
}

/// Masks by `x > 0`; subgradient 0 at exactly 0.
pub fn relu_backward<S: Scalar>(x: &Tensor4<S>, grad_out: &Tensor4<S>) -> Result<Tensor4<S>> {
    if !x.same_shape(grad_out) {
        return Err(shape("relu backward shape mismatch"));
    }
    let mut g = grad_out.clone();
    for (gv, &xv) in g.data.iter_mut().zip(&x.data) {
        if xv <= S::zero() {
            *gv = S::zero();
        }
    }
    Ok(g)
}

/// 2x2 stride-2 max-pool. Returns the pooled tensor and the flat argmax
/// index (into the input plane) per output element; ties go to the first
/// index in row-major window order.
pub fn maxpool2_forward<S: Scalar>(x: &Tensor4<S>) -> Result<(Tensor4<S>, Vec<usize>)> {
    if x.h % 2 != 0 || x.w % 2 != 0 {
        return Err(shape(format!("maxpool2 requires even dims, got {}x{}", x.h, x.w)));
    }
    let (oh, ow) = (x.h / 2, x.w / 2);
    let mut y = Tensor4::zeros(x.n, x.c, oh, ow);
    let mut arg = vec![0usize; x.n * x.c * oh * ow];
    let mut out_i = 0;
    for n in 0..x.n {
        for c in 0..x.c {
            let xp = x.plane(n, c);
            let yp = y.plane_mut(n, c);
            for oy in 0..oh {
                for ox in 0..ow {
                    let base = 2 * oy * x.w + 2 * ox;
                    let idxs = [base, base + 1, base + x.w, base + x.w + 1];
                    let mut best = idxs[0];
                    for &i in &idxs[1..] {
                        if xp[i] > xp[best] {
                            best = i;
                        }
                    }
                    yp[oy * ow + ox] = xp[best];
                    arg[out_i] = best;
                    out_i += 1;
                }
            }
        }
    }
    Ok((y, arg))
}

pub fn maxpool2_backward<S: Scalar>(
    x: &Tensor4<S>,
    argmax: &[usize],
    grad_out: &Tensor4<S>,
) -> Result<Tensor4<S>> {
    let (oh, ow) = (x.h / 2, x.w / 2);
    if grad_out.shape() != (x.n, x.c, oh, ow) || argmax.len() != grad_out.len() {
        return Err(shape("maxpool2 backward shape mismatch"));
    }
    let mut gx = Tensor4::zeros(x.n, x.c, x.h, x.w);
    let mut out_i = 0;
    for n in 0..x.n {
        for c in 0..x.c {
            let gp = grad_out.plane(n, c);
            let gxp = gx.plane_mut(n, c);
            for &g in gp {
                gxp[argmax[out_i]] += g;
                out_i += 1;
            }
        }
    }
    Ok(gx)
}

/// 2x2 stride-2 transposed convolution ("stamp" semantics): each input pixel
/// scatters `weight[co][ci]` into the 2x2 output block it owns; doubles the
/// spatial dims. Weight layout matches [`ConvParams`] with `k = 2`,
/// interpreted as the adjoint of a stride-2 2x2 convolution.
pub fn upconv2_forward<S: Scalar>(x: &Tensor4<S>, params: &ConvParams<S>) -> Result<Tensor4<S>> {
    if params.k != 2 || params.stride != 2 || params.padding != 0 {
        return Err(invalid("upconv2 requires k=2, stride=2, padding=0"));
    }
    if x.c != params.c_in {
        return Err(shape(format!(
            "upconv2 expects {} input channels, got {}",
            params.c_in, x.c
        )));
    }
    let (oh, ow) = (2 * x.h, 2 * x.w);
    let mut y = Tensor4::zeros(x.n, params.c_out, oh, ow);
    for n in 0..x.n {
        for co in 0..params.c_out {
            let b = params.bias[co];
            y.plane_mut(n, co).fill(b);
            for ci in 0..params.c_in {
                let xp = x.plane(n, ci);
                // note: weight indexed [co][ci] here even though c_in/c_out
                // swap roles relative to the adjoint strided conv
                let w = [
                    params.w_at(co, ci, 0, 0),
                    params.w_at(co, ci, 0, 1),
                    params.w_at(co, ci, 1, 0),
                    params.w_at(co, ci, 1, 1),
                ];
                let yp = y.plane_mut(n, co);
                for iy in 0..x.h {
                    for ix in 0..x.w {
                        let v = xp[iy * x.w + ix];
                        let base = 2 * iy * ow + 2 * ix;
                        yp[base] += w[0] * v;
                        yp[base + 1] += w[1] * v;
                        yp[base + ow] += w[2] * v;
                        yp[base + ow + 1] += w[3] * v;
                    }
                }
            }
        }
    }
    Ok(y)
}

pub fn upconv2_backward<S: Scalar>(
    x: &Tensor4<S>,
    params: &ConvParams<S>,
    grad_out: &Tensor4<S>,
) -> Result<(Tensor4<S>, ConvGrads<S>)> {
    if grad_out.shape() != (x.n, params.c_out, 2 * x.h, 2 * x.w) {
        return Err(shape("upconv2 backward shape mismatch"));
    }
    let ow = 2 * x.w;
    let mut gx = Tensor4::zeros(x.n, x.c, x.h, x.w);
    let mut gw = vec![S::zero(); params.weight.len()];
    let mut gb = vec![S::zero(); params.c_out];
    for n in 0..x.n {
        for co in 0..params.c_out {
            let gp = grad_out.plane(n, co);
            gb[co] += gp.iter().copied().sum();
            for ci in 0..params.c_in {
                let xp = x.plane(n, ci);
                let w = [
                    params.w_at(co, ci, 0, 0),
                    params.w_at(co, ci, 0, 1),
                    params.w_at(co, ci, 1, 0),
                    params.w_at(co, ci, 1, 1),
                ];
                let wbase = ((co * params.c_in + ci) * 2) * 2;
                let gxp = gx.plane_mut(n, ci);
                let mut wacc = [S::zero(); 4];
                for iy in 0..x.h {
                    for ix in 0..x.w {
                        let base = 2 * iy * ow + 2 * ix;
                        let g = [gp[base], gp[base + 1], gp[base + ow], gp[base + ow + 1]];
                        let v = xp[iy * x.w + ix];
                        gxp[iy * x.w + ix] +=
                            w[0] * g[0] + w[1] * g[1] + w[2] * g[2] + w[3] * g[3];
                        for t in 0..4 {
                            wacc[t] += g[t] * v;
                        }
                    }
                }
                for t in 0..4 {
                    gw[wbase + t] += wacc[t];
                }
            }
        }
    }
    Ok((gx, ConvGrads { weight: gw, bias: gb }))
}

pub fn concat_channels<S: Scalar>(a: &Tensor4<S>, b: &Tensor4<S>) -> Result<Tensor4<S>> {
    if a.n != b.n || a.h != b.h || a.w != b.w {
        return Err(shape(format!(
            "concat requires equal batch/spatial dims: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut y = Tensor4::zeros(a.n, a.c + b.c, a.h, a.w);
    for n in 0..a.n {
        for c in 0..a.c {
            y.plane_mut(n, c).copy_from_slice(a.plane(n, c));
        }
        for c in 0..b.c {
            y.plane_mut(n, a.c + c).copy_from_slice(b.plane(n, c));
        }
    }
    Ok(y)
}

/// Inverse of [`concat_channels`]; also serves as its backward.
pub fn split_channels<S: Scalar>(y: &Tensor4<S>, c_a: usize) -> Result<(Tensor4<S>, Tensor4<S>)> {
    if c_a == 0 || c_a >= y.c {
        return Err(shape(format!("cannot split {} channels at {c_a}", y.c)));
    }
    let mut a = Tensor4::zeros(y.n, c_a, y.h, y.w);
    let mut b = Tensor4::zeros(y.n, y.c - c_a, y.h, y.w);
    for n in 0..y.n {
        for c in 0..c_a {
            a.plane_mut(n, c).copy_from_slice(y.plane(n, c));
        }
        for c in 0..y.c - c_a {
            b.plane_mut(n, c).copy_from_slice(y.plane(n, c_a + c));
        }
    }
    Ok((a, b))
}
