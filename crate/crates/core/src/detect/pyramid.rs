use super::descriptor::sift_descriptor;
use super::{BaseDescriptor, DescriptorFamily, DetectorParams, Keypoint, MIN_DETECT_SIDE};
use crate::imaging::warp::{convolve_cols, convolve_rows};
use crate::imaging::{gaussian_kernel, GrayImage};
use crate::{Error, Result};
use std::f64::consts::PI;

const INPUT_SIGMA: f64 = 0.5;
const BORDER: usize = 5;
const MAX_REFINE_STEPS: usize = 5;
const ORI_BINS: usize = 36;
const ORI_SIGMA_FACTOR: f64 = 1.5;
const ORI_RADIUS_FACTOR: f64 = 3.0;

struct Octave {
    w: usize,
    h: usize,
    gauss: Vec<Vec<f32>>,
    dog: Vec<Vec<f32>>,
}

impl Octave {
    #[inline]
    fn d(&self, layer: usize, x: usize, y: usize) -> f64 {
        self.dog[layer][y * self.w + x] as f64
    }
}

/// Gaussian and DoG pyramid of one image.
pub struct ScaleSpace {
    params: DetectorParams,
    width: usize,
    height: usize,
    octaves: Vec<Octave>,
}

fn blur(src: &[f32], w: usize, h: usize, sigma: f64) -> Vec<f32> {
    if sigma <= 0.0 {
        return src.to_vec();
    }
    let k = gaussian_kernel(sigma);
    convolve_cols(&convolve_rows(src, w, h, &k), w, h, &k)
}

impl ScaleSpace {
    pub fn build(img: &GrayImage, params: &DetectorParams) -> Result<Self> {
        params.validate()?;
        let (w0, h0) = (img.width(), img.height());
        if w0 < MIN_DETECT_SIDE || h0 < MIN_DETECT_SIDE {
            return Err(Error::invalid(format!(
                "image {w0}x{h0} is smaller than {MIN_DETECT_SIDE}x{MIN_DETECT_SIDE}"
            )));
        }
        let s = params.scales_per_octave;
        let k = 2f64.powf(1.0 / s as f64);
        let sig: Vec<f64> = (0..s + 3).map(|i| params.sigma0 * k.powi(i as i32)).collect();

        let mut octaves = Vec::with_capacity(params.octaves);
        let mut base = blur(
            &img.to_f32(),
            w0,
            h0,
            (params.sigma0.powi(2) - INPUT_SIGMA.powi(2)).sqrt(),
        );
        let (mut w, mut h) = (w0, h0);
        for o in 0..params.octaves {
            if o > 0 {
                if w / 2 < 2 * BORDER + 1 || h / 2 < 2 * BORDER + 1 {
                    break;
                }
                let prev: &Octave = octaves.last().unwrap();
                let src = &prev.gauss[s];
                let (nw, nh) = (w / 2, h / 2);
                let mut down = vec![0f32; nw * nh];
                for y in 0..nh {
                    for x in 0..nw {
                        down[y * nw + x] = src[2 * y * w + 2 * x];
                    }
                }
                base = down;
                w = nw;
                h = nh;
            }
            let mut gauss = Vec::with_capacity(s + 3);
            gauss.push(std::mem::take(&mut base));
            for i in 1..s + 3 {
                let inc = (sig[i].powi(2) - sig[i - 1].powi(2)).sqrt();
                let next = blur(&gauss[i - 1], w, h, inc);
                gauss.push(next);
            }
            let dog = gauss
                .windows(2)
                .map(|p| p[1].iter().zip(&p[0]).map(|(a, b)| a - b).collect())
                .collect();
            octaves.push(Octave { w, h, gauss, dog });
        }
        Ok(ScaleSpace {
            params: params.clone(),
            width: w0,
            height: h0,
            octaves,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Refined, oriented DoG extrema, strongest first when a cap is set.
    pub fn keypoints(&self) -> Vec<Keypoint> {
        let s = self.params.scales_per_octave;
        let thr = self.params.contrast_threshold;
        let pre = 0.5 * thr;
        let mut out = Vec::new();
        for (o, oct) in self.octaves.iter().enumerate() {
            let (w, h) = (oct.w, oct.h);
            if w <= 2 * BORDER || h <= 2 * BORDER {
                continue;
            }
            for layer in 1..=s {
                for y in BORDER..h - BORDER {
                    for x in BORDER..w - BORDER {
                        let v = oct.d(layer, x, y);
                        if v.abs() <= pre || !is_extremum(oct, layer, x, y, v) {
                            continue;
                        }
                        if let Some(kp) = self.refine(o, layer, x, y) {
                            out.push(kp);
                        }
                    }
                }
            }
        }
        if self.params.max_keypoints > 0 && out.len() > self.params.max_keypoints {
            out.sort_by(|a, b| b.response.total_cmp(&a.response));
            out.truncate(self.params.max_keypoints);
        }
        out
    }

    fn refine(&self, o: usize, layer: usize, x: usize, y: usize) -> Option<Keypoint> {
        let oct = &self.octaves[o];
        let s = self.params.scales_per_octave;
        let (w, h) = (oct.w, oct.h);
        let (mut xi, mut yi, mut li) = (x as isize, y as isize, layer as isize);
        let mut off = [0.0; 3];
        let mut grad = [0.0; 3];
        let mut converged = false;
        for _ in 0..MAX_REFINE_STEPS {
            let (xu, yu, lu) = (xi as usize, yi as usize, li as usize);
            let (g, hm) = derivatives(oct, lu, xu, yu);
            grad = g;
            off = solve3(&hm, &[-g[0], -g[1], -g[2]])?;
            if off.iter().all(|v| v.abs() < 0.5) {
                converged = true;
                break;
            }
            if off.iter().any(|v| v.abs() > 1e3) {
                return None;
            }
            xi += off[0].round() as isize;
            yi += off[1].round() as isize;
            li += off[2].round() as isize;
            if li < 1
                || li > s as isize
                || xi < BORDER as isize
                || yi < BORDER as isize
                || xi >= (w - BORDER) as isize
                || yi >= (h - BORDER) as isize
            {
                return None;
            }
        }
        if !converged {
            return None;
        }
        let (xu, yu, lu) = (xi as usize, yi as usize, li as usize);
        let contrast = oct.d(lu, xu, yu)
            + 0.5 * (grad[0] * off[0] + grad[1] * off[1] + grad[2] * off[2]);
        if contrast.abs() < self.params.contrast_threshold {
            return None;
        }
        let v = oct.d(lu, xu, yu);
        let dxx = oct.d(lu, xu + 1, yu) + oct.d(lu, xu - 1, yu) - 2.0 * v;
        let dyy = oct.d(lu, xu, yu + 1) + oct.d(lu, xu, yu - 1) - 2.0 * v;
        let dxy = (oct.d(lu, xu + 1, yu + 1) - oct.d(lu, xu - 1, yu + 1)
            - oct.d(lu, xu + 1, yu - 1)
            + oct.d(lu, xu - 1, yu - 1))
            * 0.25;
        let tr = dxx + dyy;
        let det = dxx * dyy - dxy * dxy;
        let r = self.params.edge_ratio;
        if det <= 0.0 || tr * tr * r >= (r + 1.0).powi(2) * det {
            return None;
        }
        let step = (1usize << o) as f64;
        let scale_oct = self.params.sigma0 * 2f64.powf((li as f64 + off[2]) / s as f64);
        let px = (xi as f64 + off[0]) * step;
        let py = (yi as f64 + off[1]) * step;
        if px < 0.0 || py < 0.0 || px >= self.width as f64 || py >= self.height as f64 {
            return None;
        }
        let angle = dominant_orientation(&oct.gauss[lu], w, h, xu, yu, scale_oct)?;
        let mut kp = Keypoint::new(px, py, scale_oct * step, angle);
        kp.response = contrast.abs();
        Some(kp)
    }

    /// Pyramid level (octave, gaussian layer) closest to a keypoint scale.
    fn level_for(&self, scale: f64) -> (usize, usize) {
        let s = self.params.scales_per_octave as f64;
        let l = (scale / self.params.sigma0).log2();
        let o = (l + 1e-9).floor().clamp(0.0, (self.octaves.len() - 1) as f64) as usize;
        let layer = (s * (l - o as f64)).round().clamp(0.0, s + 2.0) as usize;
        (o, layer)
    }

    /// Built-in descriptor for a keypoint given in this image's coordinates.
    pub fn describe(&self, kp: &Keypoint) -> Result<BaseDescriptor> {
        if !(kp.scale > 0.0) || !kp.x.is_finite() || !kp.y.is_finite() {
            return Err(Error::invalid("keypoint needs finite position and positive scale"));
        }
        let (o, layer) = self.level_for(kp.scale);
        let oct = &self.octaves[o];
        let step = (1usize << o) as f64;
        let values = sift_descriptor(
            &oct.gauss[layer],
            oct.w,
            oct.h,
            kp.x / step,
            kp.y / step,
            kp.angle,
            kp.scale / step,
        )?;
        Ok(BaseDescriptor {
            values,
            family: DescriptorFamily::BuiltinGrad,
        })
    }
}

fn is_extremum(oct: &Octave, layer: usize, x: usize, y: usize, v: f64) -> bool {
    let w = oct.w;
    for l in layer - 1..=layer + 1 {
        let img = &oct.dog[l];
        for yy in y - 1..=y + 1 {
            let row = &img[yy * w + x - 1..yy * w + x + 2];
            for &n in row {
                let n = n as f64;
                if v > 0.0 {
                    if n > v {
                        return false;
                    }
                } else if n < v {
                    return false;
                }
            }
        }
    }
    true
}

/// Gradient and Hessian of the DoG stack in (x, y, layer).
fn derivatives(oct: &Octave, l: usize, x: usize, y: usize) -> ([f64; 3], [[f64; 3]; 3]) {
    let d = |l: usize, x: usize, y: usize| oct.d(l, x, y);
    let v = d(l, x, y);
    let dx = 0.5 * (d(l, x + 1, y) - d(l, x - 1, y));
    let dy = 0.5 * (d(l, x, y + 1) - d(l, x, y - 1));
    let ds = 0.5 * (d(l + 1, x, y) - d(l - 1, x, y));
    let dxx = d(l, x + 1, y) + d(l, x - 1, y) - 2.0 * v;
    let dyy = d(l, x, y + 1) + d(l, x, y - 1) - 2.0 * v;
    let dss = d(l + 1, x, y) + d(l - 1, x, y) - 2.0 * v;
    let dxy = 0.25 * (d(l, x + 1, y + 1) - d(l, x - 1, y + 1) - d(l, x + 1, y - 1) + d(l, x - 1, y - 1));
    let dxs = 0.25 * (d(l + 1, x + 1, y) - d(l + 1, x - 1, y) - d(l - 1, x + 1, y) + d(l - 1, x - 1, y));
    let dys = 0.25 * (d(l + 1, x, y + 1) - d(l + 1, x, y - 1) - d(l - 1, x, y + 1) + d(l - 1, x, y - 1));
    (
        [dx, dy, ds],
        [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]],
    )
}

fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let det3 = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let det = det3(a);
    if det.abs() < 1e-12 {
        return None;
    }
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let mut m = *a;
        for r in 0..3 {
            m[r][c] = b[r];
        }
        *o = det3(&m) / det;
    }
    Some(out)
}

fn dominant_orientation(
    img: &[f32],
    w: usize,
    h: usize,
    x: usize,
    y: usize,
    scale_oct: f64,
) -> Option<f64> {
    let sigma = ORI_SIGMA_FACTOR * scale_oct;
    let radius = (ORI_RADIUS_FACTOR * sigma).round() as isize;
    let denom = -1.0 / (2.0 * sigma * sigma);
    let mut hist = [0.0f64; ORI_BINS];
    for j in -radius..=radius {
        let yy = y as isize + j;
        if yy < 1 || yy >= h as isize - 1 {
            continue;
        }
        for i in -radius..=radius {
            let xx = x as isize + i;
            if xx < 1 || xx >= w as isize - 1 {
                continue;
            }
            let p = yy as usize * w + xx as usize;
            let dx = (img[p + 1] - img[p - 1]) as f64;
            let dy = (img[p + w] - img[p - w]) as f64;
            let mag = dx.hypot(dy);
            if mag == 0.0 {
                continue;
            }
            let ori = dy.atan2(dx).rem_euclid(2.0 * PI);
            let bin = ((ori * ORI_BINS as f64 / (2.0 * PI)).round() as usize) % ORI_BINS;
            hist[bin] += mag * ((i * i + j * j) as f64 * denom).exp();
        }
    }
    let n = ORI_BINS;
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            (hist[(i + n - 2) % n]
                + hist[(i + 2) % n]
                + 4.0 * (hist[(i + n - 1) % n] + hist[(i + 1) % n])
                + 6.0 * hist[i])
                / 16.0
        })
        .collect();
    let (best, &peak) = smooth
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))?;
    if peak <= 0.0 {
        return None;
    }
    let l = smooth[(best + n - 1) % n];
    let r = smooth[(best + 1) % n];
    let den = l - 2.0 * peak + r;
    let shift = if den.abs() > 1e-12 { 0.5 * (l - r) / den } else { 0.0 };
    Some(((best as f64 + shift) * 2.0 * PI / n as f64).rem_euclid(2.0 * PI))
}
