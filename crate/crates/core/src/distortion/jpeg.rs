//! Differentiable JPEG simulation.
//!
//! RGB to full-range YCbCr, level shift, 8x8 orthonormal DCT, division by
//! quality-scaled quantisation tables, rounding, dequantisation and the
//! inverse path back to clamped RGB. No chroma subsampling and no entropy
//! coding, so the only loss comes from coefficient rounding.

use crate::distortion::GradMode;
use crate::error::{Error, Result};
use crate::exec::{Exec, BLOCK};

/// Luminance quantisation table (ITU-T T.81 Annex K.1), row-major.
pub const LUMA_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Chrominance quantisation table (ITU-T T.81 Annex K.2), row-major.
pub const CHROMA_TABLE: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, //
    18, 21, 26, 66, 99, 99, 99, 99, //
    24, 26, 56, 99, 99, 99, 99, 99, //
    47, 66, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99,
];

/// BT.601 full-range RGB to YCbCr, with the luma level shift folded into the
/// offset so all three outputs are centred on zero.
pub const RGB_TO_YCC: [[f32; 3]; 3] = [
    [0.299, 0.587, 0.114],
    [-0.168_736, -0.331_264, 0.5],
    [0.5, -0.418_688, -0.081_312],
];
pub const YCC_OFFSET: [f32; 3] = [-128.0, 0.0, 0.0];

pub fn check_quality(qf: u8) -> Result<()> {
    if !(1..=100).contains(&qf) {
        return Err(Error::Parameter(alloc::format!(
            "JPEG quality factor must be in 1..=100, got {qf}"
        )));
    }
    Ok(())
}

/// libjpeg quality scaling of a base table.
pub fn scaled_table(base: &[u16; 64], qf: u8) -> Result<[u16; 64]> {
    check_quality(qf)?;
    let qf = qf as u32;
    let scale = if qf < 50 { 5000 / qf } else { 200 - 2 * qf };
    let mut out = [0u16; 64];
    for (o, &q) in out.iter_mut().zip(base) {
        *o = ((q as u32 * scale + 50) / 100).clamp(1, 255) as u16;
    }
    Ok(out)
}

/// Inverse of [`RGB_TO_YCC`] together with its offset.
pub fn ycc_to_rgb() -> ([[f32; 3]; 3], [f32; 3]) {
    let m: [[f64; 3]; 3] = core::array::from_fn(|r| core::array::from_fn(|c| RGB_TO_YCC[r][c] as f64));
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let cof = |r: usize, c: usize| {
        let rows: [usize; 2] = match r {
            0 => [1, 2],
            1 => [0, 2],
            _ => [0, 1],
        };
        let cols: [usize; 2] = match c {
            0 => [1, 2],
            1 => [0, 2],
            _ => [0, 1],
        };
        let minor = m[rows[0]][cols[0]] * m[rows[1]][cols[1]] - m[rows[0]][cols[1]] * m[rows[1]][cols[0]];
        if (r + c).is_multiple_of(2) {
            minor
        } else {
            -minor
        }
    };
    let inv: [[f64; 3]; 3] = core::array::from_fn(|r| core::array::from_fn(|c| cof(c, r) / det));
    let off: [f32; 3] = core::array::from_fn(|r| {
        -(0..3).map(|c| inv[r][c] * YCC_OFFSET[c] as f64).sum::<f64>() as f32
    });
    (
        core::array::from_fn(|r| core::array::from_fn(|c| inv[r][c] as f32)),
        off,
    )
}

fn reciprocal(t: &[u16; 64]) -> [f32; 64] {
    core::array::from_fn(|i| 1.0 / t[i] as f32)
}

fn as_f32(t: &[u16; 64]) -> [f32; 64] {
    core::array::from_fn(|i| t[i] as f32)
}

/// Simulated JPEG on `[n, 3, h, w]` images in `[0, 1]`.
///
/// `rounding` controls the backward rule of the coefficient rounding; pass
/// [`GradMode::Zero`] for evaluation-time hard rounding. Images whose dims are
/// not multiples of 8 are edge-padded and cropped back.
pub fn jpeg_sim<E: Exec>(ex: &mut E, x: &E::T, qf: u8, rounding: GradMode) -> Result<E::T> {
    jpeg_with_tables(ex, x, &scaled_table(&LUMA_TABLE, qf)?, &scaled_table(&CHROMA_TABLE, qf)?, rounding)
}

pub fn jpeg_with_tables<E: Exec>(
    ex: &mut E,
    x: &E::T,
    luma: &[u16; 64],
    chroma: &[u16; 64],
    rounding: GradMode,
) -> Result<E::T> {
    let s = ex.value(x).shape();
    let ph = s.h.div_ceil(BLOCK) * BLOCK;
    let pw = s.w.div_ceil(BLOCK) * BLOCK;
    let padded = ph != s.h || pw != s.w;

    let px = ex.affine(x, 255.0, 0.0);
    let ycc = ex.color(&px, &RGB_TO_YCC, &YCC_OFFSET)?;
    let ycc = if padded { ex.pad_edge(&ycc, ph, pw)? } else { ycc };
    let coeffs = ex.block_dct(&ycc, false)?;
    let div = [reciprocal(luma), reciprocal(chroma), reciprocal(chroma)];
    let scaled = ex.mul_blocks(&coeffs, &div)?;
    let quant = ex.round(&scaled, 1.0, rounding);
    let mult = [as_f32(luma), as_f32(chroma), as_f32(chroma)];
    let dequant = ex.mul_blocks(&quant, &mult)?;
    let back = ex.block_dct(&dequant, true)?;
    let back = if padded { ex.crop(&back, s.h, s.w)? } else { back };
    let (inv, off) = ycc_to_rgb();
    let rgb = ex.color(&back, &inv, &off)?;
    let unit = ex.affine(&rgb, 1.0 / 255.0, 0.0);
    Ok(ex.clamp(&unit, 0.0, 1.0))
}
