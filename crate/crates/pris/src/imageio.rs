//! 8-bit RGB image files and dataset directories.

use std::path::{Path, PathBuf};

use image::{ImageFormat, RgbImage};
use pris_core::metrics::quantize;
use pris_core::{Shape, Tensor};

use crate::error::{CliError, CliResult};

/// DWT halving times the 8x8 JPEG block.
pub const SIZE_MULTIPLE: usize = 16;

pub fn load_rgb(path: &Path) -> CliResult<Tensor> {
    let img = image::open(path).map_err(|e| CliError::io(path, e))?.to_rgb8();
    Ok(from_rgb(&img))
}

pub fn from_rgb(img: &RgbImage) -> Tensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.as_raw();
    Tensor::from_fn(Shape::new(1, 3, h, w), |_, c, y, x| raw[(y * w + x) * 3 + c] as f32 / 255.0)
}

/// Planar `[1, 3, h, w]` tensor to interleaved 8-bit RGB.
pub fn to_rgb(t: &Tensor) -> CliResult<RgbImage> {
    let s = t.shape();
    if s.n != 1 || s.c != 3 {
        return Err(CliError::Data(format!("expected one RGB image, got {:?}", s)));
    }
    let planar = quantize(t);
    let mut raw = vec![0u8; planar.len()];
    for c in 0..3 {
        for i in 0..s.h * s.w {
            raw[i * 3 + c] = planar[c * s.h * s.w + i];
        }
    }
    RgbImage::from_raw(s.w as u32, s.h as u32, raw).ok_or_else(|| CliError::Data("image buffer size".into()))
}

pub fn save_png(path: &Path, t: &Tensor) -> CliResult<()> {
    to_rgb(t)?
        .save_with_format(path, ImageFormat::Png)
        .map_err(|e| CliError::io(path, e))
}

pub fn center_crop(t: &Tensor, h: usize, w: usize) -> CliResult<Tensor> {
    let s = t.shape();
    if s.h < h || s.w < w {
        return Err(CliError::Data(format!("{}x{} image is smaller than {h}x{w}", s.h, s.w)));
    }
    Ok(t.crop((s.h - h) / 2, (s.w - w) / 2, h, w)?)
}

/// Center-crop so both sides are multiples of [`SIZE_MULTIPLE`], warning
/// when pixels are dropped.
pub fn crop_to_multiple(t: &Tensor, what: &str) -> CliResult<Tensor> {
    let s = t.shape();
    let (h, w) = (s.h / SIZE_MULTIPLE * SIZE_MULTIPLE, s.w / SIZE_MULTIPLE * SIZE_MULTIPLE);
    if h == 0 || w == 0 {
        return Err(CliError::Data(format!(
            "{what} is {}x{}; both sides must be at least {SIZE_MULTIPLE}",
            s.h, s.w
        )));
    }
    if (h, w) != (s.h, s.w) {
        log::warn!("{what}: {}x{} is not a multiple of {SIZE_MULTIPLE}, center-cropping to {h}x{w}", s.h, s.w);
    }
    center_crop(t, h, w)
}

/// Sorted lossless image files in `dir`.
pub fn list_images(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png")) {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!("no PNG images in {}", dir.display())));
    }
    Ok(files)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    /// Random crops are taken during training.
    Train,
    /// Deterministic center crops.
    Test,
}

#[derive(Clone, Debug)]
pub struct DatasetHandle {
    pub dir: PathBuf,
    pub split: Split,
    /// Square crop; for the test split `None` means "largest common size".
    pub crop: Option<usize>,
}

impl DatasetHandle {
    /// Load every image. Training images are checked against the crop size
    /// and cropped later; test images are center-cropped now.
    pub fn load(&self) -> CliResult<Vec<Tensor>> {
        let images = list_images(&self.dir)?
            .iter()
            .map(|p| load_rgb(p))
            .collect::<CliResult<Vec<_>>>()?;
        match (self.split, self.crop) {
            (Split::Train, Some(c)) => {
                for (i, t) in images.iter().enumerate() {
                    let s = t.shape();
                    if s.h < c || s.w < c {
                        return Err(CliError::Data(format!(
                            "training image {i} in {} is {}x{}, smaller than the crop {c}",
                            self.dir.display(),
                            s.h,
                            s.w
                        )));
                    }
                }
                Ok(images)
            }
            (Split::Train, None) => Err(CliError::Config("training split needs a crop size".into())),
            (Split::Test, Some(c)) => images.iter().map(|t| center_crop(t, c, c)).collect(),
            (Split::Test, None) => {
                let h = images.iter().map(|t| t.shape().h).min().unwrap_or(0);
                let w = images.iter().map(|t| t.shape().w).min().unwrap_or(0);
                let (ch, cw) = (h / SIZE_MULTIPLE * SIZE_MULTIPLE, w / SIZE_MULTIPLE * SIZE_MULTIPLE);
                if ch == 0 || cw == 0 {
                    return Err(CliError::Data(format!("test images must be at least {SIZE_MULTIPLE} pixels")));
                }
                if images.iter().any(|t| t.shape().h != ch || t.shape().w != cw) {
                    log::warn!("center-cropping test images to a common {ch}x{cw}");
                }
                images.iter().map(|t| center_crop(t, ch, cw)).collect()
            }
        }
    }
}
