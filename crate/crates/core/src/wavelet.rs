//! Single-level orthonormal Haar transform.
//!
//! Every 2x2 spatial block `[[a, b], [c, d]]` maps to four coefficients
//!
//! ```text
//! LL = (a + b + c + d) / 2     LH = (a - b + c - d) / 2
//! HL = (a + b - c - d) / 2     HH = (a - b - c + d) / 2
//! ```
//!
//! The 4x4 matrix is symmetric and orthogonal, so the inverse transform uses
//! the same matrix and each transform is the adjoint of the other. Output
//! channels are grouped by band: `[LL(c0..cN), LH(..), HL(..), HH(..)]`.

use crate::error::{dim_err, Result};
use crate::tensor::{Shape, Tensor};

pub const BANDS: usize = 4;

#[inline]
fn butterfly(a: f32, b: f32, c: f32, d: f32) -> [f32; 4] {
    [
        0.5 * (a + b + c + d),
        0.5 * (a - b + c - d),
        0.5 * (a + b - c - d),
        0.5 * (a - b - c + d),
    ]
}

pub fn freq_shape(image: Shape) -> Result<Shape> {
    if !image.h.is_multiple_of(2) || !image.w.is_multiple_of(2) {
        return Err(dim_err!("wavelet transform needs even spatial dims, got {:?}", image));
    }
    Ok(Shape::new(image.n, image.c * BANDS, image.h / 2, image.w / 2))
}

pub fn image_shape(freq: Shape) -> Result<Shape> {
    if !freq.c.is_multiple_of(BANDS) {
        return Err(dim_err!(
            "inverse wavelet transform needs a channel count divisible by 4, got {:?}",
            freq
        ));
    }
    Ok(Shape::new(freq.n, freq.c / BANDS, freq.h * 2, freq.w * 2))
}

/// Image `[n, c, h, w]` to bands `[n, 4c, h/2, w/2]`.
pub fn dwt(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    let fs = freq_shape(s)?;
    let mut out = Tensor::zeros(fs);
    let src = x.data();
    let band = fs.c / BANDS * fs.plane();
    for n in 0..s.n {
        let dst = out.item_mut(n);
        for c in 0..s.c {
            for y in 0..fs.h {
                for xx in 0..fs.w {
                    let i = ((n * s.c + c) * s.h + 2 * y) * s.w + 2 * xx;
                    let coeffs = butterfly(src[i], src[i + 1], src[i + s.w], src[i + s.w + 1]);
                    let o = (c * fs.h + y) * fs.w + xx;
                    for (k, v) in coeffs.into_iter().enumerate() {
                        dst[k * band + o] = v;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Bands `[n, 4c, h, w]` back to image `[n, c, 2h, 2w]`.
pub fn iwt(f: &Tensor) -> Result<Tensor> {
    let fs = f.shape();
    let s = image_shape(fs)?;
    let mut out = Tensor::zeros(s);
    let band = s.c * fs.plane();
    for n in 0..s.n {
        let src = f.item(n);
        let dst = out.item_mut(n);
        for c in 0..s.c {
            for y in 0..fs.h {
                for xx in 0..fs.w {
                    let o = (c * fs.h + y) * fs.w + xx;
                    let [a, b, cc, d] =
                        butterfly(src[o], src[band + o], src[2 * band + o], src[3 * band + o]);
                    let i = (c * s.h + 2 * y) * s.w + 2 * xx;
                    dst[i] = a;
                    dst[i + 1] = b;
                    dst[i + s.w] = cc;
                    dst[i + s.w + 1] = d;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, uniform_tensor};
    use proptest::prelude::*;

    #[test]
    fn closed_form_two_by_two() {
        let (a, b, c, d) = (0.1f32, 0.7, 0.4, 0.9);
        let x = Tensor::from_vec(Shape::new(1, 1, 2, 2), alloc::vec![a, b, c, d]).unwrap();
        let f = dwt(&x).unwrap();
        let expect = [
            (a + b + c + d) / 2.0,
            (a - b + c - d) / 2.0,
            (a + b - c - d) / 2.0,
            (a - b - c + d) / 2.0,
        ];
        for (got, want) in f.data().iter().zip(expect) {
            assert!((got - want).abs() < 1e-7);
        }
    }

    #[test]
    fn constant_image_lands_in_ll() {
        let x = Tensor::full(Shape::new(2, 3, 4, 6), 0.3);
        let f = dwt(&x).unwrap();
        assert_eq!(f.shape(), Shape::new(2, 12, 2, 3));
        for n in 0..2 {
            for c in 0..12 {
                for y in 0..2 {
                    for xx in 0..3 {
                        let want = if c < 3 { 0.6 } else { 0.0 };
                        assert!((f.at(n, c, y, xx) - want).abs() < 1e-6);
                    }
                }
            }
        }
        let back = iwt(&f).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-6);
    }

    #[test]
    fn zero_in_zero_out() {
        let f = dwt(&Tensor::zeros(Shape::new(1, 3, 8, 8))).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0));
        let x = iwt(&Tensor::zeros(Shape::new(1, 12, 4, 4))).unwrap();
        assert!(x.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn odd_dims_and_bad_channels_rejected() {
        assert!(matches!(
            dwt(&Tensor::zeros(Shape::new(1, 3, 5, 4))),
            Err(crate::Error::Dimension(_))
        ));
        assert!(matches!(
            dwt(&Tensor::zeros(Shape::new(1, 3, 4, 7))),
            Err(crate::Error::Dimension(_))
        ));
        assert!(matches!(
            iwt(&Tensor::zeros(Shape::new(1, 6, 4, 4))),
            Err(crate::Error::Dimension(_))
        ));
    }

    proptest! {
        #[test]
        fn reconstruction_energy_and_linearity(seed in any::<u64>(), hh in 1usize..6, ww in 1usize..6, a in -2.0f32..2.0, b in -2.0f32..2.0) {
            let mut rng = seeded(seed, 0);
            let shape = Shape::new(2, 3, 2 * hh, 2 * ww);
            let x = uniform_tensor(&mut rng, shape, 0.0, 1.0);
            let y = uniform_tensor(&mut rng, shape, 0.0, 1.0);
            let fx = dwt(&x).unwrap();
            prop_assert!(iwt(&fx).unwrap().max_abs_diff(&x) <= 1e-6);

            let ex = x.sum_squares();
            prop_assert!(((fx.sum_squares() - ex) / ex).abs() <= 1e-5);

            let mix = x.zip_map(&y, |p, q| a * p + b * q).unwrap();
            let fy = dwt(&y).unwrap();
            let lin = fx.zip_map(&fy, |p, q| a * p + b * q).unwrap();
            prop_assert!(dwt(&mix).unwrap().max_abs_diff(&lin) <= 1e-5);
        }
    }
}
