use super::GrayImage;
use crate::error::{Error, Result};

/// Largest output raster a warp may produce, in pixels.
const MAX_WARP_PIXELS: usize = 1 << 26;

/// A 2x3 affine map `p -> L p + b`, stored row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine2 {
    pub m: [[f64; 3]; 2],
}

impl Affine2 {
    pub const IDENTITY: Affine2 = Affine2 {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
    };

    pub fn new(m: [[f64; 3]; 2]) -> Self {
        Self { m }
    }

    pub fn from_linear(l: [[f64; 2]; 2]) -> Self {
        Self {
            m: [[l[0][0], l[0][1], 0.0], [l[1][0], l[1][1], 0.0]],
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: [[1.0, 0.0, tx], [0.0, 1.0, ty]],
        }
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        (
            m[0][0] * x + m[0][1] * y + m[0][2],
            m[1][0] * x + m[1][1] * y + m[1][2],
        )
    }

    pub fn linear(&self) -> [[f64; 2]; 2] {
        [[self.m[0][0], self.m[0][1]], [self.m[1][0], self.m[1][1]]]
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn inverse(&self) -> Result<Affine2> {
        let d = self.det();
        if !(d.abs() > 1e-12) {
            return Err(Error::invalid(format!("singular affine map (det {d:e})")));
        }
        let [[a, b, tx], [c, e, ty]] = self.m;
        let ia = e / d;
        let ib = -b / d;
        let ic = -c / d;
        let ie = a / d;
        Ok(Affine2 {
            m: [
                [ia, ib, -(ia * tx + ib * ty)],
                [ic, ie, -(ic * tx + ie * ty)],
            ],
        })
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Affine2) -> Affine2 {
        let a = &self.m;
        let b = &other.m;
        let mut m = [[0.0; 3]; 2];
        for r in 0..2 {
            for c in 0..3 {
                m[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
            m[r][2] += a[r][2];
        }
        Affine2 { m }
    }

    /// Homogeneous 3x3 form, row-major.
    pub fn to_matrix3(&self) -> [[f64; 3]; 3] {
        [self.m[0], self.m[1], [0.0, 0.0, 1.0]]
    }
}

/// Warps `img` by the forward map `m` (source -> destination coordinates).
///
/// The output covers the bounding box of the mapped pixel-center corners; the
/// canvas origin moves only when content would land at negative coordinates,
/// so a pure linear map yields exactly the bounding box and a positive
/// translation shifts the content. Samples are bilinear in the source; pixels
/// with no source are 0. With `antialias`, every direction the map compresses
/// (singular value `s < 1`, tilt `t = 1/s`) is first blurred in the source by a
/// Gaussian with sigma `0.8 sqrt(t^2 - 1)` along that direction.
///
/// Returns the warped image and the map from output pixels to source pixels.
pub fn warp_affine(img: &GrayImage, m: &Affine2, antialias: bool) -> Result<(GrayImage, Affine2)> {
    let det = m.det();
    if !(det.abs() > 1e-9) {
        return Err(Error::invalid(format!(
            "warp matrix is singular (|det| = {:e})",
            det.abs()
        )));
    }
    let (w, h) = (img.width(), img.height());
    let corners = [
        (0.0, 0.0),
        ((w - 1) as f64, 0.0),
        (0.0, (h - 1) as f64),
        ((w - 1) as f64, (h - 1) as f64),
    ];
    let mut min = (f64::INFINITY, f64::INFINITY);
    let mut max = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &corners {
        let (u, v) = m.apply(x, y);
        min = (min.0.min(u), min.1.min(v));
        max = (max.0.max(u), max.1.max(v));
    }
    let origin = (min.0.min(0.0), min.1.min(0.0));
    let out_w = (max.0 - origin.0 + 1e-6).floor() as usize + 1;
    let out_h = (max.1 - origin.1 + 1e-6).floor() as usize + 1;
    if out_w.saturating_mul(out_h) > MAX_WARP_PIXELS {
        return Err(Error::invalid(format!(
            "warp output {out_w}x{out_h} too large"
        )));
    }
    let forward = Affine2::translation(-origin.0, -origin.1).compose(m);
    let inverse = forward.inverse()?;

    let mut src = img.to_f32();
    if antialias {
        for (sigma_sv, dir) in singular_directions(&m.linear()) {
            if sigma_sv < 1.0 - 1e-9 {
                let t = 1.0 / sigma_sv;
                let blur = 0.8 * (t * t - 1.0).sqrt();
                src = blur_directional(&src, w, h, dir, blur);
            }
        }
    }

    let mut out = Vec::with_capacity(out_w * out_h);
    let (wf, hf) = ((w - 1) as f64, (h - 1) as f64);
    for v in 0..out_h {
        for u in 0..out_w {
            let (sx, sy) = inverse.apply(u as f64, v as f64);
            if sx < -1e-6 || sy < -1e-6 || sx > wf + 1e-6 || sy > hf + 1e-6 {
                out.push(0);
            } else {
                let s = sample_bilinear(&src, w, h, sx, sy);
                out.push((s + 0.5).floor().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Ok((GrayImage::new(out_w, out_h, out)?, inverse))
}

/// Bilinear sample with coordinates clamped to the raster.
#[inline]
pub(crate) fn sample_bilinear(src: &[f32], w: usize, h: usize, x: f64, y: f64) -> f32 {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = (x.floor() as usize).min(w - 1);
    let y0 = (y.floor() as usize).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = (x - x0 as f64) as f32;
    let fy = (y - y0 as f64) as f32;
    let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
    let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Singular values of a 2x2 matrix paired with their right singular vectors
/// (the source-space directions they scale).
fn singular_directions(l: &[[f64; 2]; 2]) -> [(f64, (f64, f64)); 2] {
    // Eigen-decomposition of L^T L.
    let a = l[0][0] * l[0][0] + l[1][0] * l[1][0];
    let b = l[0][0] * l[0][1] + l[1][0] * l[1][1];
    let c = l[0][1] * l[0][1] + l[1][1] * l[1][1];
    let disc = ((a - c) * (a - c) + 4.0 * b * b).sqrt();
    let hi = 0.5 * (a + c + disc);
    let lo = (0.5 * (a + c - disc)).max(0.0);
    if b.abs() <= 1e-14 * (a.abs() + c.abs()) {
        return [(a.sqrt(), (1.0, 0.0)), (c.sqrt(), (0.0, 1.0))];
    }
    let v1 = normalize(hi - c, b);
    let v2 = (-v1.1, v1.0);
    [(hi.sqrt(), v1), (lo.sqrt(), v2)]
}

fn normalize(x: f64, y: f64) -> (f64, f64) {
    let n = (x * x + y * y).sqrt();
    (x / n, y / n)
}

/// Normalized Gaussian taps for `sigma`, radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = ((3.0 * sigma).ceil() as usize).max(1);
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k.into_iter().map(|v| v as f32).collect()
}

/// One-dimensional Gaussian blur along `dir` with clamp-to-edge borders.
/// Axis-aligned directions use exact pixel taps; others sample bilinearly.
pub(crate) fn blur_directional(
    src: &[f32],
    w: usize,
    h: usize,
    dir: (f64, f64),
    sigma: f64,
) -> Vec<f32> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    if dir.1.abs() < 1e-9 {
        return convolve_rows(src, w, h, &k);
    }
    if dir.0.abs() < 1e-9 {
        return convolve_cols(src, w, h, &k);
    }
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f32;
            for (i, &kv) in k.iter().enumerate() {
                let s = (i as isize - r) as f64;
                acc += kv
                    * sample_bilinear(src, w, h, x as f64 + s * dir.0, y as f64 + s * dir.1);
            }
            out[y * w + x] = acc;
        }
    }
    out
}

pub(crate) fn convolve_rows(src: &[f32], w: usize, h: usize, k: &[f32]) -> Vec<f32> {
    let r = (k.len() / 2) as isize;
    let wi = w as isize;
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let orow = &mut out[y * w..(y + 1) * w];
        for x in 0..wi {
            let mut acc = 0.0f32;
            if x >= r && x + r < wi {
                let base = (x - r) as usize;
                for (i, &kv) in k.iter().enumerate() {
                    acc += kv * row[base + i];
                }
            } else {
                for (i, &kv) in k.iter().enumerate() {
                    let xx = (x + i as isize - r).clamp(0, wi - 1) as usize;
                    acc += kv * row[xx];
                }
            }
            orow[x as usize] = acc;
        }
    }
    out
}

pub(crate) fn convolve_cols(src: &[f32], w: usize, h: usize, k: &[f32]) -> Vec<f32> {
    let r = (k.len() / 2) as isize;
    let hi = h as isize;
    let mut out = vec![0.0f32; w * h];
    for y in 0..hi {
        let orow = &mut out[y as usize * w..(y as usize + 1) * w];
        for (i, &kv) in k.iter().enumerate() {
            let yy = (y + i as isize - r).clamp(0, hi - 1) as usize;
            let row = &src[yy * w..(yy + 1) * w];
            for (o, &s) in orow.iter_mut().zip(row) {
                *o += kv * s;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_warp() {
        let img = GrayImage::from_fn(13, 9, |x, y| (x * 17 + y * 5) as u8);
        let (out, inv) = warp_affine(&img, &Affine2::IDENTITY, true).unwrap();
        assert_eq!(out, img);
        assert_eq!(inv, Affine2::IDENTITY);
    }

    #[test]
    fn translation_shifts_content() {
        let img = GrayImage::from_fn(10, 8, |x, y| (1 + x * 20 + y) as u8);
        let (out, inv) = warp_affine(&img, &Affine2::translation(5.0, 3.0), false).unwrap();
        assert_eq!((out.width(), out.height()), (15, 11));
        assert_eq!(out.get(5, 3), img.get(0, 0));
        assert_eq!(out.get(14, 10), img.get(9, 7));
        assert_eq!(out.get(2, 2), 0);
        assert!((inv.m[0][2] + 5.0).abs() < 1e-12 && (inv.m[1][2] + 3.0).abs() < 1e-12);
    }

    #[test]
    fn horizontal_compression_halves_width() {
        let img = GrayImage::from_fn(100, 100, |x, y| if (x / 10 + y / 10) % 2 == 0 { 0 } else { 255 });
        let m = Affine2::from_linear([[0.5, 0.0], [0.0, 1.0]]);
        let (out, inv) = warp_affine(&img, &m, true).unwrap();
        assert_eq!((out.width(), out.height()), (50, 100));
        for &(x, y) in &[(0.0, 0.0), (99.0, 0.0), (0.0, 99.0), (99.0, 99.0)] {
            let (u, v) = m.apply(x, y);
            let (bx, by) = inv.apply(u, v);
            assert!((bx - x).abs() < 1e-6 && (by - y).abs() < 1e-6);
        }
    }

    #[test]
    fn singular_rejected() {
        let img = GrayImage::filled(4, 4, 1);
        let m = Affine2::from_linear([[1.0, 2.0], [2.0, 4.0]]);
        assert!(warp_affine(&img, &m, false).is_err());
    }

    #[test]
    fn singular_directions_of_rotated_tilt() {
        let (c, s) = (0.6f64, 0.8f64);
        // R * diag(0.25, 1): compresses source x by 4.
        let l = [[c * 0.25, -s], [s * 0.25, c]];
        let sv = singular_directions(&l);
        let small = sv.iter().find(|p| p.0 < 0.5).unwrap();
        assert!((small.0 - 0.25).abs() < 1e-12);
        assert!(small.1 .0.abs() > 1.0 - 1e-9);
    }

    #[test]
    fn compose_and_inverse() {
        let a = Affine2::new([[1.2, 0.3, 4.0], [-0.2, 0.9, -1.0]]);
        let id = a.compose(&a.inverse().unwrap());
        for r in 0..2 {
            for c in 0..3 {
                let e = Affine2::IDENTITY.m[r][c];
                assert!((id.m[r][c] - e).abs() < 1e-12);
            }
        }
    }
}
