//! NCHW tensor container.

use pat_core::scalar::Scalar;

use crate::error::{invalid, shape, Result};

/// Dense 4-D tensor, layout `(batch, channels, height, width)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<S: Scalar> {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Tensor4<S> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Tensor4<S> {
        Tensor4 {
            n,
            c,
            h,
            w,
            data: vec![S::zero(); n * c * h * w],
        }
    }

    pub fn from_data(n: usize, c: usize, h: usize, w: usize, data: Vec<S>) -> Result<Tensor4<S>> {
        if n == 0 || c == 0 || h == 0 || w == 0 {
            return Err(invalid("tensor dimensions must be >= 1"));
        }
        if data.len() != n * c * h * w {
            return Err(shape(format!(
                "buffer length {} does not match {n}x{c}x{h}x{w}",
                data.len()
            )));
        }
        Ok(Tensor4 { n, c, h, w, data })
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.n, self.c, self.h, self.w)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape(&self, other: &Tensor4<S>) -> bool {
        self.shape() == other.shape()
    }

    /// Plane `(n, c)` as a contiguous `h * w` slice.
    #[inline]
    pub fn plane(&self, n: usize, c: usize) -> &[S] {
        let hw = self.h * self.w;
        let start = (n * self.c + c) * hw;
        &self.data[start..start + hw]
    }

    #[inline]
    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [S] {
        let hw = self.h * self.w;
        let start = (n * self.c + c) * hw;
        &mut self.data[start..start + hw]
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(S) -> T) -> Tensor4<T> {
        Tensor4 {
            n: self.n,
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}
