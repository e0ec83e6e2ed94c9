#![allow(dead_code)]

pub mod mser_oracle;
pub mod rig;

use affreg::affine_sim::{pose_matrix, AffinePose};
use affreg::imaging::{gaussian_kernel, warp_affine, Affine2, GrayImage};
use affreg::mser::{mser_segment, MserParams, RegionMap};
use affreg::region_desc::{region_signature, relative_position, NormalizationMode, RegionSignature};

/// Light background with one dark, asymmetric blob whose interior carries a
/// gradient (so the intensity centroid is off the shape centre). Edges are
/// 4x4 supersampled, then blurred so edges have a physical width.
pub fn blob_image() -> GrayImage {
    blur(&sharp_blob(), 1.5)
}

fn blur(img: &GrayImage, sigma: f64) -> GrayImage {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = (img.width() as isize, img.height() as isize);
    let pass = |src: &[f64], dx: isize, dy: isize| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (i, kv) in k.iter().enumerate() {
                    let o = i as isize - r;
                    let xx = (x + o * dx).clamp(0, w - 1);
                    let yy = (y + o * dy).clamp(0, h - 1);
                    acc += *kv as f64 * src[(yy * w + xx) as usize];
                }
                out[(y * w + x) as usize] = acc;
            }
        }
        out
    };
    let src: Vec<f64> = img.data().iter().map(|&v| v as f64).collect();
    let out = pass(&pass(&src, 1, 0), 0, 1);
    GrayImage::new(img.width(), img.height(), out.iter().map(|v| v.round() as u8).collect()).unwrap()
}

fn sharp_blob() -> GrayImage {
    let inside = |x: f64, y: f64| {
        ((x - 80.0) / 22.0).powi(2) + ((y - 78.0) / 12.0).powi(2) <= 1.0 || (x - 96.0).hypot(y - 90.0) <= 8.0
    };
    GrayImage::from_fn(160, 160, |x, y| {
        let mut acc = 0.0;
        for k in 0..16 {
            let sx = x as f64 - 0.375 + 0.25 * (k % 4) as f64;
            let sy = y as f64 - 0.375 + 0.25 * (k / 4) as f64;
            acc += if inside(sx, sy) { (30.0 + 100.0 * (sx - 58.0) / 50.0).clamp(30.0, 130.0) } else { 230.0 };
        }
        (acc / 16.0).round() as u8
    })
}

pub const BLOB_POINTS: [(f64, f64); 4] = [(80.0, 78.0), (70.0, 74.0), (92.0, 84.0), (96.0, 90.0)];

pub struct Located {
    pub map: RegionMap,
    pub sig: RegionSignature,
    pub area: usize,
}

pub fn locate(img: &GrayImage, x: f64, y: f64) -> Located {
    let map = mser_segment(img, &MserParams::for_image(img.width(), img.height())).unwrap();
    let id = map.region_at(x, y).unwrap().expect("no region at probe point");
    let region = map.region(id).unwrap().clone();
    let sig = region_signature(&region, img, NormalizationMode::Moment).unwrap();
    Located { map, sig, area: region.area }
}

/// Warp the blob image by `pose`; return the area ratio and the largest
/// relative-position drift over the probe points.
pub fn invariance_under(pose: &AffinePose) -> (f64, f64) {
    let img = blob_image();
    let m = Affine2::from_linear(pose_matrix(pose));
    let (warped, to_src) = warp_affine(&img, &m, true).unwrap();
    let fwd = to_src.inverse().unwrap();
    let base = locate(&img, BLOB_POINTS[0].0, BLOB_POINTS[0].1);
    let (cx, cy) = fwd.apply(BLOB_POINTS[0].0, BLOB_POINTS[0].1);
    let moved = locate(&warped, cx, cy);
    let mut drift = 0.0f64;
    for &(x, y) in &BLOB_POINTS {
        let p = relative_position(x, y, &base.sig);
        let (u, v) = fwd.apply(x, y);
        let q = relative_position(u, v, &moved.sig);
        drift = drift.max((p.0 - q.0).hypot(p.1 - q.1));
    }
    (moved.area as f64 / base.area as f64, drift)
}
