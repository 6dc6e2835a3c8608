//! Smooth staircase used as the backward surrogate of `round`.
//!
//! `gaf(x) = s(x) * 0.5 * cos(pi * x) + 0.5 + floor(x)` where `s(x)` is `+1`
//! when `floor(x)` is odd and `-1` when it is even. It agrees with the
//! identity at every integer, is continuous across integer boundaries and its
//! slope peaks at `pi / 2` halfway between consecutive integers.

use core::f64::consts::PI;

#[inline]
fn parity_sign(floor: f64) -> f64 {
    if libm::fmod(floor, 2.0) != 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub fn gaf(x: f64) -> f64 {
    let fl = libm::floor(x);
    parity_sign(fl) * 0.5 * libm::cos(PI * x) + 0.5 + fl
}

/// Analytic derivative `-s(x) * 0.5 * pi * sin(pi * x)`.
pub fn gaf_derivative(x: f64) -> f64 {
    let fl = libm::floor(x);
    -parity_sign(fl) * 0.5 * PI * libm::sin(PI * x)
}

pub fn gaf_derivative_f32(x: f32) -> f32 {
    gaf_derivative(x as f64) as f32
}

/// Round half away from zero.
#[inline]
pub fn round_half_away(x: f32) -> f32 {
    libm::roundf(x)
}
