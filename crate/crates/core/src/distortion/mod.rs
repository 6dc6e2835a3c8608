//! Attacks applied to the container between embedding and extraction.

pub mod gaf;
pub mod jpeg;

use alloc::format;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rng::{seeded, stream};
use crate::tensor::Tensor;

/// 8-bit quantisation levels per unit of intensity.
pub const LEVELS: f32 = 255.0;

/// Backward rule for rounding during training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum GradMode {
    /// No gradient passes (rounding treated as a constant).
    Zero,
    /// Straight-through: gradient 1.
    One,
    /// Derivative of the smooth staircase in [`gaf`].
    #[default]
    Gaf,
}

impl GradMode {
    pub fn name(self) -> &'static str {
        match self {
            GradMode::Zero => "zero",
            GradMode::One => "one",
            GradMode::Gaf => "gaf",
        }
    }
}

impl FromStr for GradMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" | "0" => Ok(GradMode::Zero),
            "one" | "1" => Ok(GradMode::One),
            "gaf" => Ok(GradMode::Gaf),
            _ => Err(Error::Parameter(format!("unknown gradient mode {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Kind {
    Identity,
    Gaussian,
    Jpeg,
    Round,
    /// Rounding, then Gaussian noise.
    Rgaussian,
    /// Rounding, then JPEG.
    Rjpeg,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct DistortionSpec {
    pub kind: Kind,
    /// Noise standard deviation on the 0-255 scale.
    #[cfg_attr(feature = "serde", serde(default))]
    pub sigma: f32,
    /// JPEG quality factor.
    #[cfg_attr(feature = "serde", serde(default = "default_qf"))]
    pub qf: u8,
    #[cfg_attr(feature = "serde", serde(default))]
    pub grad_mode: GradMode,
}

#[cfg(feature = "serde")]
fn default_qf() -> u8 {
    90
}

impl DistortionSpec {
    pub const fn new(kind: Kind) -> Self {
        Self {
            kind,
            sigma: 0.0,
            qf: 90,
            grad_mode: GradMode::Gaf,
        }
    }

    pub const fn identity() -> Self {
        Self::new(Kind::Identity)
    }

    pub const fn gaussian(sigma: f32) -> Self {
        Self {
            sigma,
            ..Self::new(Kind::Gaussian)
        }
    }

    pub const fn jpeg(qf: u8) -> Self {
        Self {
            qf,
            ..Self::new(Kind::Jpeg)
        }
    }

    pub const fn round() -> Self {
        Self::new(Kind::Round)
    }

    pub const fn rgaussian(sigma: f32) -> Self {
        Self {
            sigma,
            ..Self::new(Kind::Rgaussian)
        }
    }

    pub const fn rjpeg(qf: u8) -> Self {
        Self {
            qf,
            ..Self::new(Kind::Rjpeg)
        }
    }

    pub const fn with_grad_mode(self, grad_mode: GradMode) -> Self {
        Self { grad_mode, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            Kind::Gaussian | Kind::Rgaussian if !(self.sigma >= 0.0 && self.sigma.is_finite()) => Err(
                Error::Parameter(format!("noise sigma must be a finite value >= 0, got {}", self.sigma)),
            ),
            Kind::Jpeg | Kind::Rjpeg => jpeg::check_quality(self.qf),
            _ => Ok(()),
        }
    }

    /// Short name used on the command line and in reports, e.g. `rjpeg90`.
    pub fn label(&self) -> String {
        let sigma = || {
            if libm::truncf(self.sigma) == self.sigma {
                format!("{}", self.sigma as u32)
            } else {
                format!("{}", self.sigma)
            }
        };
        match self.kind {
            Kind::Identity => "identity".into(),
            Kind::Round => "round".into(),
            Kind::Gaussian => format!("gauss{}", sigma()),
            Kind::Rgaussian => format!("rgauss{}", sigma()),
            Kind::Jpeg => format!("jpeg{}", self.qf),
            Kind::Rjpeg => format!("rjpeg{}", self.qf),
        }
    }

    /// Parse a label such as `gauss10` or `jpeg80`.
    pub fn from_label(label: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown attack label {label:?}"));
        let number = |rest: &str| -> Result<f32> {
            let v: f32 = rest.parse().map_err(|_| bad())?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad())
            }
        };
        let quality = |rest: &str| -> Result<u8> { rest.parse::<u8>().map_err(|_| bad()) };
        let spec = match label {
            "identity" => Self::identity(),
            "round" => Self::round(),
            _ => {
                if let Some(r) = label.strip_prefix("rgauss") {
                    Self::rgaussian(number(r)?)
                } else if let Some(r) = label.strip_prefix("gauss") {
                    Self::gaussian(number(r)?)
                } else if let Some(r) = label.strip_prefix("rjpeg") {
                    Self::rjpeg(quality(r)?)
                } else if let Some(r) = label.strip_prefix("jpeg") {
                    Self::jpeg(quality(r)?)
                } else {
                    return Err(bad());
                }
            }
        };
        spec.validate().map_err(|e| Error::Config(format!("{label}: {e}")))?;
        Ok(spec)
    }
}

impl fmt::Display for DistortionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Labels of the standard attack suite.
pub const STANDARD_LABELS: [&str; 10] = [
    "identity", "gauss1", "gauss10", "jpeg90", "jpeg80", "round", "rgauss1", "rgauss10", "rjpeg90",
    "rjpeg80",
];

/// `n ~ N(0, (sigma / 255)^2)` per element, deterministic in `seed`.
pub fn gaussian_noise_tensor(like: &Tensor, sigma: f32, seed: u64) -> Result<Tensor> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter(format!("noise sigma must be >= 0, got {sigma}")));
    }
    let mut rng = seeded(seed, stream::NOISE);
    let std = sigma / LEVELS;
    Ok(Tensor::from_fn(like.shape(), |_, _, _, _| {
        let v: f32 = rng.sample(StandardNormal);
        v * std
    }))
}

/// `clamp(x + n, 0, 1)` with `n` from [`gaussian_noise_tensor`].
pub fn gaussian_noise<E: Exec>(ex: &mut E, x: &E::T, sigma: f32, seed: u64) -> Result<E::T> {
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let noise = gaussian_noise_tensor(ex.value(x), sigma, seed)?;
    let n = ex.input(noise);
    let y = ex.add(x, &n)?;
    Ok(ex.clamp(&y, 0.0, 1.0))
}

/// 8-bit rounding: exact round-half-away-from-zero of `255 x` in the forward
/// pass, with the backward rule given by `mode`. Values are clamped to the
/// representable range first.
pub fn round_st<E: Exec>(ex: &mut E, x: &E::T, mode: GradMode) -> E::T {
    let c = ex.clamp(x, 0.0, 1.0);
    ex.round(&c, LEVELS, mode)
}

/// Apply an attack. In training mode rounding uses `spec.grad_mode`; in
/// evaluation mode every rounding is hard.
pub fn apply<E: Exec>(ex: &mut E, spec: &DistortionSpec, x: &E::T, seed: u64, train: bool) -> Result<E::T> {
    spec.validate()?;
    let mode = if train { spec.grad_mode } else { GradMode::Zero };
    match spec.kind {
        Kind::Identity => Ok(x.clone()),
        Kind::Gaussian => gaussian_noise(ex, x, spec.sigma, seed),
        Kind::Jpeg => jpeg::jpeg_sim(ex, x, spec.qf, mode),
        Kind::Round => Ok(round_st(ex, x, mode)),
        Kind::Rgaussian => {
            let r = round_st(ex, x, mode);
            gaussian_noise(ex, &r, spec.sigma, seed)
        }
        Kind::Rjpeg => {
            let r = round_st(ex, x, mode);
            jpeg::jpeg_sim(ex, &r, spec.qf, mode)
        }
    }
}
