//! Procedural test images: smooth colour fields, a few flat shapes and a
//! little grain. Deterministic in the seed, so tests and the bundled smoke
//! data need no external dataset.

use pris_core::rng::{seeded, stream};
use pris_core::{Shape, Tensor};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn image(seed: u64, height: usize, width: usize) -> Tensor {
    let mut rng = seeded(seed, stream::DATA);
    let (h, w) = (height as f32, width as f32);

    // low-frequency waves per channel
    let waves: Vec<[f32; 5]> = (0..3 * 3)
        .map(|_| {
            [
                rng.gen_range(0.5..3.0) / h,
                rng.gen_range(0.5..3.0) / w,
                rng.gen_range(0.0..std::f32::consts::TAU),
                rng.gen_range(0.08..0.22),
                rng.gen_range(-1.0..1.0),
            ]
        })
        .collect();
    let base: [f32; 3] = std::array::from_fn(|_| rng.gen_range(0.25..0.75));
    let shapes: Vec<([f32; 4], [f32; 3], bool)> = (0..rng.gen_range(2..6))
        .map(|_| {
            let geom = [
                rng.gen_range(0.0..h),
                rng.gen_range(0.0..w),
                rng.gen_range(0.1..0.35) * h,
                rng.gen_range(0.1..0.35) * w,
            ];
            let colour = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
            (geom, colour, rng.gen_bool(0.5))
        })
        .collect();
    let grain = rng.gen_range(0.005..0.02);
    let noise: Vec<f32> = (0..3 * height * width)
        .map(|_| rng.sample::<f32, _>(StandardNormal) * grain)
        .collect();

    Tensor::from_fn(Shape::new(1, 3, height, width), |_, c, y, x| {
        let (yf, xf) = (y as f32, x as f32);
        let mut v = base[c];
        for wv in &waves[c * 3..c * 3 + 3] {
            let phase = std::f32::consts::TAU * (wv[0] * yf + wv[1] * xf * wv[4]) + wv[2];
            v += wv[3] * phase.sin();
        }
        for (g, colour, round) in &shapes {
            let (dy, dx) = ((yf - g[0]) / g[2], (xf - g[1]) / g[3]);
            let inside = if *round { dy * dy + dx * dx <= 1.0 } else { dy.abs() <= 1.0 && dx.abs() <= 1.0 };
            if inside {
                v = 0.3 * v + 0.7 * colour[c];
            }
        }
        (v + noise[(c * height + y) * width + x]).clamp(0.0, 1.0)
    })
}

/// `count` images with seeds `seed, seed + 1, ...`.
pub fn images(seed: u64, count: usize, height: usize, width: usize) -> Vec<Tensor> {
    (0..count as u64).map(|i| image(seed.wrapping_add(i), height, width)).collect()
}
