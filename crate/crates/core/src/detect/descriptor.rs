use crate::{Error, Result};
use std::f64::consts::PI;

const GRID: usize = 4;
const BINS: usize = 8;
const BIN_WIDTH_FACTOR: f64 = 3.0;
const CLIP: f32 = 0.2;
const SCALE: f32 = 512.0;
const MAX_VALUE: f32 = 256.0;

/// 4x4x8 gradient histogram around `(x, y)` in the coordinates of `img`,
/// rotated by `angle`, with spatial bins `3 * scale` pixels wide.
pub(crate) fn sift_descriptor(
    img: &[f32],
    w: usize,
    h: usize,
    x: f64,
    y: f64,
    angle: f64,
    scale: f64,
) -> Result<Vec<f32>> {
    let hist_width = BIN_WIDTH_FACTOR * scale;
    let (sin_a, cos_a) = angle.sin_cos();
    // rotated support: half-side (GRID/2 + 0.5) bins, plus one pixel for gradients
    let half = (GRID as f64 / 2.0 + 0.5) * hist_width;
    let xi = x.round();
    let yi = y.round();
    for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
        let cx = xi + half * (sx * cos_a - sy * sin_a);
        let cy = yi + half * (sx * sin_a + sy * cos_a);
        if cx < 1.0 || cy < 1.0 || cx > (w - 2) as f64 || cy > (h - 2) as f64 {
            return Err(Error::DescriptorUnavailable);
        }
    }
    let radius = (half * std::f64::consts::SQRT_2).round() as isize;
    let (xc, yc) = (xi as isize, yi as isize);
    let cos_t = cos_a / hist_width;
    let sin_t = sin_a / hist_width;
    let exp_scale = -1.0 / (0.5 * (GRID * GRID) as f64);
    let mut hist = [0f32; GRID * GRID * BINS];
    let g = GRID as f64;

    for i in -radius..=radius {
        let yy = yc + i;
        if yy < 1 || yy >= h as isize - 1 {
            continue;
        }
        for j in -radius..=radius {
            let xx = xc + j;
            if xx < 1 || xx >= w as isize - 1 {
                continue;
            }
            let (jf, if_) = (j as f64, i as f64);
            let c_rot = jf * cos_t + if_ * sin_t;
            let r_rot = -jf * sin_t + if_ * cos_t;
            let rbin = r_rot + g / 2.0 - 0.5;
            let cbin = c_rot + g / 2.0 - 0.5;
            if rbin <= -1.0 || rbin >= g || cbin <= -1.0 || cbin >= g {
                continue;
            }
            let p = yy as usize * w + xx as usize;
            let dx = (img[p + 1] - img[p - 1]) as f64;
            let dy = (img[p + w] - img[p - w]) as f64;
            let mag = dx.hypot(dy);
            if mag == 0.0 {
                continue;
            }
            let ori = (dy.atan2(dx) - angle).rem_euclid(2.0 * PI);
            let obin = ori * BINS as f64 / (2.0 * PI);
            let wgt = mag * ((c_rot * c_rot + r_rot * r_rot) * exp_scale).exp();

            let (r0, c0, o0) = (rbin.floor(), cbin.floor(), obin.floor());
            let (fr, fc, fo) = (rbin - r0, cbin - c0, obin - o0);
            for (dr, wr) in [(0, 1.0 - fr), (1, fr)] {
                let r = r0 as isize + dr;
                if r < 0 || r >= GRID as isize {
                    continue;
                }
                for (dc, wc) in [(0, 1.0 - fc), (1, fc)] {
                    let c = c0 as isize + dc;
                    if c < 0 || c >= GRID as isize {
                        continue;
                    }
                    for (dn, wo) in [(0, 1.0 - fo), (1, fo)] {
                        let o = (o0 as usize + dn) % BINS;
                        let idx = (r as usize * GRID + c as usize) * BINS + o;
                        hist[idx] += (wgt * wr * wc * wo) as f32;
                    }
                }
            }
        }
    }
    Ok(normalize(&hist))
}

fn normalize(hist: &[f32]) -> Vec<f32> {
    let norm = hist.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm <= f32::EPSILON {
        return vec![0.0; hist.len()];
    }
    let thr = CLIP * norm;
    let clipped: Vec<f32> = hist.iter().map(|v| v.min(thr)).collect();
    let norm2 = clipped.iter().map(|v| v * v).sum::<f32>().sqrt().max(f32::EPSILON);
    let k = SCALE / norm2;
    clipped.iter().map(|v| (v * k).min(MAX_VALUE)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Vec<f32> {
        (0..w * h)
            .map(|i| (i % w) as f32 * 3.0 + ((i / w) as f32 * 0.7).sin() * 20.0)
            .collect()
    }

    #[test]
    fn constant_patch_gives_zero_descriptor() {
        let img = vec![77.0f32; 64 * 64];
        let d = sift_descriptor(&img, 64, 64, 32.0, 32.0, 0.3, 2.0).unwrap();
        assert_eq!(d.len(), 128);
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn window_outside_image_is_unavailable() {
        let img = ramp(64, 64);
        let r = sift_descriptor(&img, 64, 64, 5.0, 32.0, 0.0, 2.0);
        assert!(matches!(r, Err(Error::DescriptorUnavailable)));
    }

    #[test]
    fn values_bounded_and_norm_at_most_512() {
        let img = ramp(64, 64);
        let d = sift_descriptor(&img, 64, 64, 32.0, 30.0, 1.1, 2.0).unwrap();
        assert!(d.iter().all(|&v| (0.0..=256.0).contains(&v)));
        let n: f32 = d.iter().map(|v| v * v).sum::<f32>().sqrt();
        assert!(n <= 512.0 + 1e-3 && n > 100.0);
    }

    #[test]
    fn single_strong_bin_is_clipped() {
        let mut h = vec![0f32; 128];
        h[5] = 10.0;
        h[6] = 0.1;
        let d = normalize(&h);
        assert!(d[5] <= 256.0);
        assert!(d[5] > d[6]);
    }
}
