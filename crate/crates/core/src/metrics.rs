//! PSNR on 8-bit images.

use alloc::vec::Vec;

use crate::distortion::gaf::round_half_away;
use crate::distortion::LEVELS;
use crate::error::{dim_err, Result};
use crate::tensor::{Shape, Tensor};

/// `10 log10(255^2 / MSE)`; `+inf` for identical inputs.
pub fn psnr(a: &[u8], b: &[u8]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(dim_err!("psnr over {} vs {} samples", a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(dim_err!("psnr of empty images"));
    }
    let sse: u64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.abs_diff(y) as u64;
            d * d
        })
        .sum();
    if sse == 0 {
        return Ok(f64::INFINITY);
    }
    let mse = sse as f64 / a.len() as f64;
    Ok(10.0 * libm::log10(255.0 * 255.0 / mse))
}

/// Clamp to `[0, 1]` and round to the nearest 8-bit level.
pub fn quantize(t: &Tensor) -> Vec<u8> {
    t.data()
        .iter()
        .map(|&v| round_half_away(v.clamp(0.0, 1.0) * LEVELS) as u8)
        .collect()
}

pub fn dequantize(shape: Shape, bytes: &[u8]) -> Result<Tensor> {
    Tensor::from_vec(shape, bytes.iter().map(|&b| b as f32 / LEVELS).collect())
}

/// Per-item PSNR between two batched tensors after 8-bit quantisation.
pub fn batch_psnr(a: &Tensor, b: &Tensor) -> Result<Vec<f64>> {
    a.expect_shape(b.shape())?;
    (0..a.shape().n)
        .map(|n| psnr(&quantize(&a.select(n)), &quantize(&b.select(n))))
        .collect()
}

/// Mean of PSNR values; infinite if any value is.
pub fn mean_db(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}
