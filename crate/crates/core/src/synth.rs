//! Deterministic procedural test imagery.

use crate::imaging::warp::{convolve_cols, convolve_rows};
use crate::imaging::{gaussian_kernel, GrayImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Occluding random ellipses ("dead leaves") over a mid-gray field, lightly
/// blurred so edges are not aliased. Same seed, same image.
pub fn dead_leaves(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = vec![128f32; width * height];
    let side = width.min(height) as f64;
    let count = ((width * height) as f64 / 90.0).ceil() as usize;
    for _ in 0..count {
        let cx = rng.random_range(-0.05..1.05) * width as f64;
        let cy = rng.random_range(-0.05..1.05) * height as f64;
        // small shapes dominate, as in natural scenes
        let u: f64 = rng.random_range(0.0..1.0);
        let a = (side * 0.015).max(2.0) + u.powi(3) * side * 0.12;
        let b = a * rng.random_range(0.35..1.0);
        let rot = rng.random_range(0.0..std::f64::consts::PI);
        let val = rng.random_range(0..=255u32) as f32;
        let (s, c) = rot.sin_cos();
        let r = a.ceil() as isize + 1;
        let (x0, x1) = ((cx as isize - r).max(0), (cx as isize + r).min(width as isize - 1));
        let (y0, y1) = ((cy as isize - r).max(0), (cy as isize + r).min(height as isize - 1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                let u = (dx * c + dy * s) / a;
                let v = (-dx * s + dy * c) / b;
                if u * u + v * v <= 1.0 {
                    buf[y as usize * width + x as usize] = val;
                }
            }
        }
    }
    let k = gaussian_kernel(0.7);
    let buf = convolve_cols(&convolve_rows(&buf, width, height, &k), width, height, &k);
    GrayImage::new(
        width,
        height,
        buf.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect(),
    )
    .expect("dimensions match buffer")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_textured() {
        let a = dead_leaves(96, 80, 7);
        let b = dead_leaves(96, 80, 7);
        assert_eq!(a, b);
        assert_ne!(a, dead_leaves(96, 80, 8));
        let distinct = {
            let mut seen = [false; 256];
            a.data().iter().for_each(|&v| seen[v as usize] = true);
            seen.iter().filter(|&&s| s).count()
        };
        assert!(distinct > 40);
    }
}
