//! 3x3 stride-1 zero-padded convolution kernels.
//!
//! The batch is copied into zero-padded planes of width `w + 2`, stored
//! channel-major with all batch items of a channel back to back. In that
//! layout every kernel tap is a constant offset into the flattened planes,
//! so im2col is nine shifted copies and the whole batch is one GEMM. Output
//! columns that fall into the padding are computed and discarded. Columns
//! are processed in chunks to bound the im2col buffer on large images.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim_err, Result};
use crate::tensor::{Shape, Tensor};

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;
/// Upper bound on im2col buffer entries.
const COL_BUDGET: usize = 1 << 20;

struct Layout {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    /// Padded row width.
    wp: usize,
    /// Padded plane size.
    plane: usize,
    /// Length of one channel's run of planes.
    run: usize,
    /// GEMM column count: every position that a tap offset can start from
    /// without reading past the last plane.
    cols: usize,
    chunk: usize,
}

impl Layout {
    fn new(n: usize, cin: usize, h: usize, w: usize) -> Self {
        let wp = w + 2;
        let plane = (h + 2) * wp;
        let run = n * plane;
        Self {
            n,
            cin,
            h,
            w,
            wp,
            plane,
            run,
            cols: run - 2 * wp - 2,
            chunk: (COL_BUDGET / (TAPS * cin.max(1))).max(256),
        }
    }

    #[inline]
    fn tap_offset(&self, tap: usize) -> usize {
        (tap / KERNEL) * self.wp + tap % KERNEL
    }

    /// Column of output pixel `(n, y, x)`.
    #[inline]
    fn col(&self, n: usize, y: usize) -> usize {
        n * self.plane + y * self.wp
    }

    fn chunks(&self) -> impl Iterator<Item = (usize, usize)> {
        let (cols, chunk) = (self.cols, self.chunk);
        (0..cols).step_by(chunk).map(move |j0| (j0, chunk.min(cols - j0)))
    }

    /// `[n, c, h, w]` into `[c][n][padded plane]`.
    fn pad(&self, src: &Tensor) -> Vec<f32> {
        let mut dst = vec![0.0f32; self.cin * self.run];
        let src = src.data();
        for n in 0..self.n {
            for c in 0..self.cin {
                for y in 0..self.h {
                    let s = ((n * self.cin + c) * self.h + y) * self.w;
                    let d = c * self.run + self.col(n, y + 1) + 1;
                    dst[d..d + self.w].copy_from_slice(&src[s..s + self.w]);
                }
            }
        }
        dst
    }

    fn im2col(&self, padded: &[f32], j0: usize, len: usize, col: &mut [f32]) {
        for c in 0..self.cin {
            for tap in 0..TAPS {
                let src = c * self.run + self.tap_offset(tap) + j0;
                col[(c * TAPS + tap) * len..][..len].copy_from_slice(&padded[src..src + len]);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    rsa: usize,
    csa: usize,
    b: &[f32],
    rsb: usize,
    csb: usize,
    beta: f32,
    c: &mut [f32],
    rsc: usize,
    csc: usize,
) {
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    if m == 0 || n == 0 {
        return;
    }
    assert!(
        k == 0 || (last(m, k, rsa, csa) < a.len() && last(k, n, rsb, csb) < b.len()),
        "gemm operand out of bounds"
    );
    assert!(last(m, n, rsc, csc) < c.len(), "gemm output out of bounds");
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

pub fn weight_shape(cin: usize, cout: usize) -> Shape {
    Shape::new(cout, cin, KERNEL, KERNEL)
}

fn check(x: Shape, weight: &Tensor, bias: &Tensor) -> Result<(usize, usize)> {
    let ws = weight.shape();
    if ws.h != KERNEL || ws.w != KERNEL || ws.c != x.c {
        return Err(dim_err!("conv weight {:?} does not match input {:?}", ws, x));
    }
    if bias.len() != ws.n {
        return Err(dim_err!("conv bias of {} for {} outputs", bias.len(), ws.n));
    }
    Ok((ws.c, ws.n))
}

pub fn conv3x3_forward(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    let (cin, cout) = check(s, weight, bias)?;
    let mut out = Tensor::zeros(s.with_c(cout));
    if s.numel() == 0 {
        return Ok(out);
    }
    let lay = Layout::new(s.n, cin, s.h, s.w);
    let xpad = lay.pad(x);
    let k = cin * TAPS;
    let mut acc = vec![0.0f32; cout * lay.cols];
    let mut col = vec![0.0f32; k * lay.chunk.min(lay.cols)];
    for (j0, len) in lay.chunks() {
        lay.im2col(&xpad, j0, len, &mut col);
        gemm(cout, k, len, weight.data(), k, 1, &col, len, 1, 0.0, &mut acc[j0..], lay.cols, 1);
    }
    let dst = out.data_mut();
    for n in 0..s.n {
        for co in 0..cout {
            let b = bias.data()[co];
            for y in 0..s.h {
                let src = &acc[co * lay.cols + lay.col(n, y)..][..s.w];
                let row = &mut dst[((n * cout + co) * s.h + y) * s.w..][..s.w];
                for (d, v) in row.iter_mut().zip(src) {
                    *d = v + b;
                }
            }
        }
    }
    Ok(out)
}

/// Gradients requested from [`conv3x3_backward`].
pub struct ConvGrads {
    pub input: Option<Tensor>,
    pub weight: Option<Tensor>,
    pub bias: Option<Tensor>,
}

pub fn conv3x3_backward(
    x: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    want_input: bool,
    want_params: bool,
) -> Result<ConvGrads> {
    let s = x.shape();
    let ws = weight.shape();
    let (cin, cout) = (ws.c, ws.n);
    if s.c != cin || grad_out.shape() != s.with_c(cout) {
        return Err(dim_err!(
            "conv backward: input {:?}, weight {:?}, grad {:?}",
            s,
            ws,
            grad_out.shape()
        ));
    }
    let mut gx = want_input.then(|| Tensor::zeros(s));
    let mut gw = want_params.then(|| Tensor::zeros(ws));
    let mut gb = want_params.then(|| Tensor::zeros(Shape::new(cout, 1, 1, 1)));
    if s.numel() == 0 || (!want_input && !want_params) {
        return Ok(ConvGrads {
            input: gx,
            weight: gw,
            bias: gb,
        });
    }

    let lay = Layout::new(s.n, cin, s.h, s.w);
    let k = cin * TAPS;
    let g = grad_out.data();
    // Gradient laid out over GEMM columns; padding columns stay zero.
    let mut gcols = vec![0.0f32; cout * lay.cols];
    for n in 0..s.n {
        for co in 0..cout {
            for y in 0..s.h {
                let src = &g[((n * cout + co) * s.h + y) * s.w..][..s.w];
                gcols[co * lay.cols + lay.col(n, y)..][..s.w].copy_from_slice(src);
            }
        }
    }
    let mut col = vec![0.0f32; k * lay.chunk.min(lay.cols)];

    if let (Some(gw), Some(gb)) = (gw.as_mut(), gb.as_mut()) {
        let xpad = lay.pad(x);
        for (i, (j0, len)) in lay.chunks().enumerate() {
            lay.im2col(&xpad, j0, len, &mut col);
            let beta = if i == 0 { 0.0 } else { 1.0 };
            gemm(cout, len, k, &gcols[j0..], lay.cols, 1, &col, 1, len, beta, gw.data_mut(), k, 1);
        }
        let plane = s.plane();
        for (co, b) in gb.data_mut().iter_mut().enumerate() {
            *b = (0..s.n)
                .map(|n| g[(n * cout + co) * plane..][..plane].iter().sum::<f32>())
                .sum();
        }
    }
    if let Some(gx) = gx.as_mut() {
        let mut gpad = vec![0.0f32; cin * lay.run];
        for (j0, len) in lay.chunks() {
            gemm(k, cout, len, weight.data(), 1, k, &gcols[j0..], lay.cols, 1, 0.0, &mut col, len, 1);
            for c in 0..cin {
                for tap in 0..TAPS {
                    let dst = c * lay.run + lay.tap_offset(tap) + j0;
                    let src = &col[(c * TAPS + tap) * len..][..len];
                    for (d, v) in gpad[dst..dst + len].iter_mut().zip(src) {
                        *d += v;
                    }
                }
            }
        }
        let dst = gx.data_mut();
        for n in 0..s.n {
            for c in 0..cin {
                for y in 0..s.h {
                    let src = &gpad[c * lay.run + lay.col(n, y + 1) + 1..][..s.w];
                    dst[((n * cin + c) * s.h + y) * s.w..][..s.w].copy_from_slice(src);
                }
            }
        }
    }
    Ok(ConvGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}

/// Direct nested-loop convolution used as a test oracle.
#[cfg(test)]
pub(crate) fn conv3x3_naive(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Tensor {
    let s = x.shape();
    let ws = weight.shape();
    let mut out = Tensor::zeros(s.with_c(ws.n));
    let mut vals: alloc::vec::Vec<f32> = alloc::vec::Vec::with_capacity(out.len());
    for n in 0..s.n {
        for co in 0..ws.n {
            for y in 0..s.h {
                for xx in 0..s.w {
                    let mut acc = bias.data()[co] as f64;
                    for ci in 0..s.c {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = y as isize + ky as isize - 1;
                                let ix = xx as isize + kx as isize - 1;
                                if iy < 0 || ix < 0 || iy >= s.h as isize || ix >= s.w as isize {
                                    continue;
                                }
                                acc += weight.at(co, ci, ky, kx) as f64
                                    * x.at(n, ci, iy as usize, ix as usize) as f64;
                            }
                        }
                    }
                    vals.push(acc as f32);
                }
            }
        }
    }
    out.data_mut().copy_from_slice(&vals);
    out
}
