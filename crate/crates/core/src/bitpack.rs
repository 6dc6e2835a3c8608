//! Lossless hiding when rounding is ignored.
//!
//! An 8-bit secret fits below an 8-bit host shifted into the top byte of a
//! 32-bit word: `c = 2^24 * h + s`, recovered by `s = c - 2^24 * floor(c / 2^24)`.
//! Measured against the shifted host with peak `2^32 - 1`, the container's
//! PSNR can never fall below `10 log10((2^32 - 1)^2 / 255^2)`, about 144.52 dB.
//! This is only achievable because the 32-bit container is never rounded
//! back to 8 bits.

use alloc::vec::Vec;

use crate::error::{dim_err, Result};

pub const HOST_SHIFT: u32 = 24;
const SHIFT_SCALE: u32 = 1 << HOST_SHIFT;
const WIDE_MAX: f64 = u32::MAX as f64;

/// Container words, one per host sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WideContainer {
    pub width: u32,
    pub height: u32,
    pub channels: u32,
    pub words: Vec<u32>,
}

impl WideContainer {
    pub fn new(width: u32, height: u32, channels: u32, words: Vec<u32>) -> Result<Self> {
        let want = width as usize * height as usize * channels as usize;
        if words.len() != want {
            return Err(dim_err!(
                "{} words for a {}x{}x{} container",
                words.len(),
                width,
                height,
                channels
            ));
        }
        Ok(Self {
            width,
            height,
            channels,
            words,
        })
    }
}

#[inline]
pub fn pack_sample(host: u8, secret: u8) -> u32 {
    SHIFT_SCALE * host as u32 + secret as u32
}

#[inline]
pub fn unpack_sample(word: u32) -> u8 {
    (word - SHIFT_SCALE * (word / SHIFT_SCALE)) as u8
}

pub fn pack(host: &[u8], secret: &[u8]) -> Result<Vec<u32>> {
    if host.len() != secret.len() {
        return Err(dim_err!("host has {} samples, secret {}", host.len(), secret.len()));
    }
    Ok(host.iter().zip(secret).map(|(&h, &s)| pack_sample(h, s)).collect())
}

pub fn unpack(words: &[u32]) -> Vec<u8> {
    words.iter().map(|&w| unpack_sample(w)).collect()
}

/// PSNR (dB) between the shifted host `2^24 * h` and the packed container,
/// with peak `2^32 - 1`. Infinite when the secret is all zero.
pub fn bound_check(host: &[u8], secret: &[u8]) -> Result<f64> {
    let words = pack(host, secret)?;
    if words.is_empty() {
        return Err(dim_err!("empty image"));
    }
    let sse: f64 = host
        .iter()
        .zip(&words)
        .map(|(&h, &c)| {
            let d = (c as f64) - (SHIFT_SCALE as f64) * (h as f64);
            d * d
        })
        .sum();
    let mse = sse / words.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * libm::log10(WIDE_MAX * WIDE_MAX / mse))
}

/// The analytic floor of [`bound_check`], reached when every secret sample is 255.
pub fn worst_case_psnr() -> f64 {
    10.0 * libm::log10(WIDE_MAX * WIDE_MAX / (255.0 * 255.0))
}
