use super::GrayImage;
use crate::error::{Error, Result};

/// Edge-preserving bilateral filter.
///
/// Each output pixel is the average of its `window` x `window` neighbourhood
/// (intersected with the image) weighted by
/// `exp(-|xi - x|^2 / 2 delta_d^2) * exp(-(f(xi) - f(x))^2 / 2 delta_r^2)`,
/// rounded to the nearest integer.
pub fn bilateral(img: &GrayImage, window: usize, delta_d: f64, delta_r: f64) -> Result<GrayImage> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::invalid(format!(
            "bilateral window must be odd and >= 3, got {window}"
        )));
    }
    if window > img.width().min(img.height()) {
        return Err(Error::invalid(format!(
            "bilateral window {window} exceeds image {}x{}",
            img.width(),
            img.height()
        )));
    }
    if !(delta_d > 0.0) || !(delta_r > 0.0) {
        return Err(Error::invalid("bilateral sigmas must be positive"));
    }

    let half = (window / 2) as isize;
    let side = window;
    let mut spatial = vec![0.0f64; side * side];
    for dy in -half..=half {
        for dx in -half..=half {
            let d2 = (dx * dx + dy * dy) as f64;
            spatial[((dy + half) as usize) * side + (dx + half) as usize] =
                (-d2 / (2.0 * delta_d * delta_d)).exp();
        }
    }
    let range: Vec<f64> = (0..256)
        .map(|d| {
            let d = d as f64;
            (-(d * d) / (2.0 * delta_r * delta_r)).exp()
        })
        .collect();

    let (w, h) = (img.width() as isize, img.height() as isize);
    let src = img.data();
    let mut out = Vec::with_capacity(src.len());
    for y in 0..h {
        let y0 = (y - half).max(0);
        let y1 = (y + half).min(h - 1);
        for x in 0..w {
            let x0 = (x - half).max(0);
            let x1 = (x + half).min(w - 1);
            let center = src[(y * w + x) as usize];
            let mut num = 0.0;
            let mut den = 0.0;
            for yy in y0..=y1 {
                let srow = ((yy - y + half) as usize) * side;
                let row = &src[(yy * w) as usize..((yy + 1) * w) as usize];
                for xx in x0..=x1 {
                    let v = row[xx as usize];
                    let wgt = spatial[srow + (xx - x + half) as usize]
                        * range[(v as i32 - center as i32).unsigned_abs() as usize];
                    num += wgt * v as f64;
                    den += wgt;
                }
            }
            out.push((num / den).round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::new(img.width(), img.height(), out)
}
