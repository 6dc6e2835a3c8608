//! Execution contexts shared by inference and training.
//!
//! Network code is written once against [`Exec`]. [`Eager`] evaluates each
//! op immediately and drops intermediates as soon as they go out of scope,
//! which keeps memory flat for large images. [`crate::graph::Graph`] records
//! every op on a tape so gradients can be pulled back afterwards.

use alloc::vec::Vec;

use crate::conv;
use crate::distortion::gaf::round_half_away;
use crate::distortion::GradMode;
use crate::error::{dim_err, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{Shape, Tensor};
use crate::wavelet;

pub const BLOCK: usize = 8;

pub trait Exec {
    type T: Clone;

    fn input(&mut self, t: Tensor) -> Self::T;
    fn value<'a>(&'a self, t: &'a Self::T) -> &'a Tensor;

    fn conv3x3(&mut self, x: &Self::T, weight: ParamId, bias: ParamId) -> Result<Self::T>;
    fn leaky_relu(&mut self, x: &Self::T, slope: f32) -> Self::T;
    fn concat(&mut self, parts: &[&Self::T]) -> Result<Self::T>;

    fn add(&mut self, a: &Self::T, b: &Self::T) -> Result<Self::T>;
    fn sub(&mut self, a: &Self::T, b: &Self::T) -> Result<Self::T>;
    fn mul(&mut self, a: &Self::T, b: &Self::T) -> Result<Self::T>;
    fn sigmoid(&mut self, x: &Self::T) -> Self::T;
    fn exp(&mut self, x: &Self::T) -> Self::T;
    /// `scale * x + shift`
    fn affine(&mut self, x: &Self::T, scale: f32, shift: f32) -> Self::T;
    fn clamp(&mut self, x: &Self::T, lo: f32, hi: f32) -> Self::T;

    fn dwt(&mut self, x: &Self::T) -> Result<Self::T>;
    fn iwt(&mut self, x: &Self::T) -> Result<Self::T>;

    /// `round(x * steps) / steps` with the backward rule picked by `mode`.
    fn round(&mut self, x: &Self::T, steps: f32, mode: GradMode) -> Self::T;

    /// Per-pixel affine colour transform on 3-channel tensors.
    fn color(&mut self, x: &Self::T, matrix: &[[f32; 3]; 3], offset: &[f32; 3]) -> Result<Self::T>;
    /// Orthonormal 8x8 block DCT-II (or its inverse) per channel.
    fn block_dct(&mut self, x: &Self::T, inverse: bool) -> Result<Self::T>;
    /// Multiply every 8x8 block of channel `c` by `table[c % table_channels]`.
    fn mul_blocks(&mut self, x: &Self::T, table: &[[f32; 64]]) -> Result<Self::T>;
    /// Replicate the last row/column until the dims reach `h` x `w`.
    fn pad_edge(&mut self, x: &Self::T, h: usize, w: usize) -> Result<Self::T>;
    fn crop(&mut self, x: &Self::T, h: usize, w: usize) -> Result<Self::T>;

    /// Sum over batch items of `sum((a - b)^2)`, divided by the batch size.
    fn sq_err_per_item(&mut self, a: &Self::T, b: &Self::T) -> Result<Self::T>;
    /// Stop gradients.
    fn detach(&mut self, x: &Self::T) -> Self::T;
}

// ---------------------------------------------------------------------------
// Forward kernels shared by both contexts.

pub(crate) fn same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(dim_err!("shape mismatch {:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

#[inline]
pub(crate) fn sigmoid(v: f32) -> f32 {
    1.0 / (1.0 + libm::expf(-v))
}

pub(crate) fn round_fwd(x: &Tensor, steps: f32) -> Tensor {
    x.map(|v| round_half_away(v * steps) / steps)
}

pub(crate) fn color_fwd(x: &Tensor, m: &[[f32; 3]; 3], off: &[f32; 3]) -> Result<Tensor> {
    let s = x.shape();
    if s.c != 3 {
        return Err(dim_err!("colour transform needs 3 channels, got {:?}", s));
    }
    let plane = s.plane();
    let mut out = Tensor::zeros(s);
    for n in 0..s.n {
        let src = x.item(n);
        let dst = out.item_mut(n);
        for p in 0..plane {
            let v = [src[p], src[plane + p], src[2 * plane + p]];
            for r in 0..3 {
                dst[r * plane + p] = m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2] + off[r];
            }
        }
    }
    Ok(out)
}

pub(crate) fn color_adjoint(g: &Tensor, m: &[[f32; 3]; 3]) -> Tensor {
    let t = [
        [m[0][0], m[1][0], m[2][0]],
        [m[0][1], m[1][1], m[2][1]],
        [m[0][2], m[1][2], m[2][2]],
    ];
    color_fwd(g, &t, &[0.0; 3]).expect("gradient has the forward shape")
}

/// Orthonormal DCT-II basis, `basis[u][i]`.
pub fn dct_basis() -> [[f32; BLOCK]; BLOCK] {
    let mut d = [[0.0f32; BLOCK]; BLOCK];
    for (u, row) in d.iter_mut().enumerate() {
        let c = if u == 0 {
            libm::sqrt(1.0 / BLOCK as f64)
        } else {
            libm::sqrt(2.0 / BLOCK as f64)
        };
        for (i, v) in row.iter_mut().enumerate() {
            let angle = core::f64::consts::PI * ((2 * i + 1) * u) as f64 / (2 * BLOCK) as f64;
            *v = (c * libm::cos(angle)) as f32;
        }
    }
    d
}

fn check_blocks(s: Shape) -> Result<()> {
    if !s.h.is_multiple_of(BLOCK) || !s.w.is_multiple_of(BLOCK) {
        return Err(dim_err!("block transform needs dims divisible by 8, got {:?}", s));
    }
    Ok(())
}

/// Forward: `D X D^T`. Inverse: `D^T X D`.
pub(crate) fn block_dct_fwd(x: &Tensor, inverse: bool) -> Result<Tensor> {
    let s = x.shape();
    check_blocks(s)?;
    let d = dct_basis();
    let mut out = Tensor::zeros(s);
    let src = x.data();
    let dst = out.data_mut();
    let mut blk = [[0.0f32; BLOCK]; BLOCK];
    let mut tmp = [[0.0f32; BLOCK]; BLOCK];
    for nc in 0..s.n * s.c {
        let base = nc * s.plane();
        for by in (0..s.h).step_by(BLOCK) {
            for bx in (0..s.w).step_by(BLOCK) {
                for (i, row) in blk.iter_mut().enumerate() {
                    let o = base + (by + i) * s.w + bx;
                    row.copy_from_slice(&src[o..o + BLOCK]);
                }
                // rows
                for i in 0..BLOCK {
                    for u in 0..BLOCK {
                        let mut acc = 0.0;
                        for j in 0..BLOCK {
                            let k = if inverse { d[j][u] } else { d[u][j] };
                            acc += k * blk[i][j];
                        }
                        tmp[i][u] = acc;
                    }
                }
                // columns
                for u in 0..BLOCK {
                    for v in 0..BLOCK {
                        let mut acc = 0.0;
                        for i in 0..BLOCK {
                            let k = if inverse { d[i][u] } else { d[u][i] };
                            acc += k * tmp[i][v];
                        }
                        dst[base + (by + u) * s.w + bx + v] = acc;
                    }
                }
            }
        }
    }
    Ok(out)
}

pub(crate) fn mul_blocks_fwd(x: &Tensor, table: &[[f32; 64]]) -> Result<Tensor> {
    let s = x.shape();
    check_blocks(s)?;
    if table.is_empty() {
        return Err(dim_err!("empty block table"));
    }
    let mut out = x.clone();
    let dst = out.data_mut();
    for n in 0..s.n {
        for c in 0..s.c {
            let t = &table[c % table.len()];
            let base = (n * s.c + c) * s.plane();
            for y in 0..s.h {
                for xx in 0..s.w {
                    dst[base + y * s.w + xx] *= t[(y % BLOCK) * BLOCK + xx % BLOCK];
                }
            }
        }
    }
    Ok(out)
}

pub(crate) fn pad_edge_fwd(x: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let s = x.shape();
    if h < s.h || w < s.w || s.h == 0 || s.w == 0 {
        return Err(dim_err!("cannot pad {:?} to {}x{}", s, h, w));
    }
    Ok(Tensor::from_fn(Shape::new(s.n, s.c, h, w), |n, c, y, xx| {
        x.at(n, c, y.min(s.h - 1), xx.min(s.w - 1))
    }))
}

/// Adjoint of edge padding: fold the replicated border back.
pub(crate) fn pad_edge_adjoint(g: &Tensor, orig: Shape) -> Tensor {
    let gs = g.shape();
    let mut out = Tensor::zeros(orig);
    for n in 0..gs.n {
        for c in 0..gs.c {
            for y in 0..gs.h {
                for xx in 0..gs.w {
                    let i = out.index(n, c, y.min(orig.h - 1), xx.min(orig.w - 1));
                    out.data_mut()[i] += g.at(n, c, y, xx);
                }
            }
        }
    }
    out
}

pub(crate) fn crop_adjoint(g: &Tensor, orig: Shape) -> Tensor {
    let gs = g.shape();
    let mut out = Tensor::zeros(orig);
    for n in 0..gs.n {
        for c in 0..gs.c {
            for y in 0..gs.h {
                let src = g.index(n, c, y, 0);
                let dst = out.index(n, c, y, 0);
                out.data_mut()[dst..dst + gs.w].copy_from_slice(&g.data()[src..src + gs.w]);
            }
        }
    }
    out
}

pub(crate) fn sq_err_fwd(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape(a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(p, q)| {
            let d = (*p - *q) as f64;
            d * d
        })
        .sum();
    Ok(Tensor::scalar((sum / a.shape().n.max(1) as f64) as f32))
}

// ---------------------------------------------------------------------------

/// Immediate evaluation without a tape.
pub struct Eager<'p> {
    params: &'p ParamStore,
}

impl<'p> Eager<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self { params }
    }
}

impl Exec for Eager<'_> {
    type T = Tensor;

    fn input(&mut self, t: Tensor) -> Tensor {
        t
    }

    fn value<'a>(&'a self, t: &'a Tensor) -> &'a Tensor {
        t
    }

    fn conv3x3(&mut self, x: &Tensor, weight: ParamId, bias: ParamId) -> Result<Tensor> {
        conv::conv3x3_forward(x, self.params.value(weight), self.params.value(bias))
    }

    fn leaky_relu(&mut self, x: &Tensor, slope: f32) -> Tensor {
        x.map(|v| if v >= 0.0 { v } else { slope * v })
    }

    fn concat(&mut self, parts: &[&Tensor]) -> Result<Tensor> {
        Tensor::cat_channels(parts)
    }

    fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        a.zip_map(b, |p, q| p + q)
    }

    fn sub(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        a.zip_map(b, |p, q| p - q)
    }

    fn mul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        a.zip_map(b, |p, q| p * q)
    }

    fn sigmoid(&mut self, x: &Tensor) -> Tensor {
        x.map(sigmoid)
    }

    fn exp(&mut self, x: &Tensor) -> Tensor {
        x.map(libm::expf)
    }

    fn affine(&mut self, x: &Tensor, scale: f32, shift: f32) -> Tensor {
        x.map(|v| scale * v + shift)
    }

    fn clamp(&mut self, x: &Tensor, lo: f32, hi: f32) -> Tensor {
        x.map(|v| v.clamp(lo, hi))
    }

    fn dwt(&mut self, x: &Tensor) -> Result<Tensor> {
        wavelet::dwt(x)
    }

    fn iwt(&mut self, x: &Tensor) -> Result<Tensor> {
        wavelet::iwt(x)
    }

    fn round(&mut self, x: &Tensor, steps: f32, _mode: GradMode) -> Tensor {
        round_fwd(x, steps)
    }

    fn color(&mut self, x: &Tensor, matrix: &[[f32; 3]; 3], offset: &[f32; 3]) -> Result<Tensor> {
        color_fwd(x, matrix, offset)
    }

    fn block_dct(&mut self, x: &Tensor, inverse: bool) -> Result<Tensor> {
        block_dct_fwd(x, inverse)
    }

    fn mul_blocks(&mut self, x: &Tensor, table: &[[f32; 64]]) -> Result<Tensor> {
        mul_blocks_fwd(x, table)
    }

    fn pad_edge(&mut self, x: &Tensor, h: usize, w: usize) -> Result<Tensor> {
        pad_edge_fwd(x, h, w)
    }

    fn crop(&mut self, x: &Tensor, h: usize, w: usize) -> Result<Tensor> {
        x.crop(0, 0, h, w)
    }

    fn sq_err_per_item(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        sq_err_fwd(a, b)
    }

    fn detach(&mut self, x: &Tensor) -> Tensor {
        x.clone()
    }
}

/// Elementwise sum of several same-shaped contributions.
pub(crate) fn accumulate(into: &mut Option<Tensor>, g: Tensor) {
    match into {
        Some(t) => t.add_assign(&g),
        None => *into = Some(g),
    }
}

pub(crate) fn split_channels(t: &Tensor, sizes: &[usize]) -> Vec<Tensor> {
    let mut out = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &len in sizes {
        out.push(t.slice_channels(start, len).expect("sizes sum to channel count"));
        start += len;
    }
    out
}
