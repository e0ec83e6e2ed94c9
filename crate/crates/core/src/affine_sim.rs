//! Affine pose model, tilt-simulated view sets, and the cross-matching test
//! that decides which of two images is more affinely distorted.

use crate::detect::{extract_features, DetectorParams, Keypoint};
use crate::error::PairSide;
use crate::imaging::{warp_affine, Affine2, GrayImage};
use crate::matching::{knn_mutual, Feature, PackedSet, DEFAULT_RATIO};
use crate::region_desc::FusedDescriptor;
use crate::textfmt::fmt_sig;
use crate::{Error, Result};
use rayon::prelude::*;
use std::f64::consts::{FRAC_PI_2, SQRT_2};
use std::fmt::Write as _;
use std::path::Path;

/// `A = lambda R(psi) D(t) R(phi)` with `D(t) = diag(t, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffinePose {
    pub lambda: f64,
    pub psi: f64,
    pub t: f64,
    pub phi: f64,
}

impl AffinePose {
    pub fn new(lambda: f64, psi: f64, t: f64, phi: f64) -> Result<Self> {
        if !(lambda > 0.0 && t > 0.0) || !psi.is_finite() || !phi.is_finite() || !lambda.is_finite() || !t.is_finite() {
            return Err(Error::invalid("pose needs lambda > 0, t > 0 and finite angles"));
        }
        Ok(AffinePose { lambda, psi, t, phi })
    }

    /// Pure tilt: `lambda = 1`, `psi = 0`.
    pub fn tilt(t: f64, phi: f64) -> Result<Self> {
        Self::new(1.0, 0.0, t, phi)
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        pose_matrix(self)
    }
}

fn rot(a: f64) -> [[f64; 2]; 2] {
    let (s, c) = a.sin_cos();
    [[c, -s], [s, c]]
}

fn mul2(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

pub fn pose_matrix(pose: &AffinePose) -> [[f64; 2]; 2] {
    let d = [[pose.t, 0.0], [0.0, 1.0]];
    let m = mul2(&mul2(&rot(pose.psi), &d), &rot(pose.phi));
    m.map(|r| r.map(|v| v * pose.lambda))
}

/// `t = 1 / cos(theta)` for `0 <= theta < pi/2`.
pub fn tilt_from_angle(theta: f64) -> Result<f64> {
    if !(0.0..FRAC_PI_2).contains(&theta) {
        return Err(Error::invalid(format!("tilt angle {theta} outside [0, pi/2)")));
    }
    Ok(1.0 / theta.cos())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingSets {
    pub enlarging: Vec<f64>,
    pub reducing: Vec<f64>,
    /// Radians.
    pub phi_values: Vec<f64>,
}

impl SamplingSets {
    pub fn standard() -> Self {
        let enlarging = vec![SQRT_2, 2.0, 2.0 * SQRT_2];
        let reducing = enlarging.iter().rev().map(|t| t / 4.0).collect();
        SamplingSets {
            enlarging,
            reducing,
            phi_values: [-45.0f64, -30.0, -15.0, 0.0, 15.0, 30.0]
                .iter()
                .map(|d| d.to_radians())
                .collect(),
        }
    }
}

impl Default for SamplingSets {
    fn default() -> Self {
        Self::standard()
    }
}

/// Tilts simulated on both images by ASIFT.
pub fn asift_tilts() -> Vec<f64> {
    vec![SQRT_2, 2.0, 2.0 * SQRT_2, 4.0, 4.0 * SQRT_2]
}

/// `max(set2) / min(set1)`.
pub fn max_affine(set1: &[f64], set2: &[f64]) -> Result<f64> {
    check_set(set1)?;
    check_set(set2)?;
    let mx = set2.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mn = set1.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(mx / mn)
}

/// `a * mean(set2) - mean(set1)`.
pub fn average_differ(set1: &[f64], set2: &[f64], a: f64) -> Result<f64> {
    check_set(set1)?;
    check_set(set2)?;
    if !(a > 0.0) {
        return Err(Error::invalid("affine ratio a must be positive"));
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Ok(a * mean(set2) - mean(set1))
}

fn check_set(s: &[f64]) -> Result<()> {
    if s.is_empty() || s.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(Error::invalid("tilt set must be nonempty and positive"));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedView {
    /// 0 for the identity view, 1.. for simulated ones.
    pub view_id: u32,
    pub pose: AffinePose,
    pub image: GrayImage,
    /// View pixel to source pixel.
    pub to_original: Affine2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkippedView {
    pub t: f64,
    pub phi: f64,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ViewSet {
    pub views: Vec<SimulatedView>,
    pub skipped: Vec<SkippedView>,
}

/// View of `img` as seen under tilt `t` in direction `phi`: the source is
/// rotated by `-phi` after its x axis is scaled by `1/t`, with anti-aliasing.
/// `to_original` has linear part `D(t) R(phi)`.
pub fn simulate_tilt(img: &GrayImage, t: f64, phi: f64, view_id: u32) -> Result<SimulatedView> {
    let pose = AffinePose::tilt(t, phi)?;
    let forward = Affine2::from_linear(mul2(&rot(-phi), &[[1.0 / t, 0.0], [0.0, 1.0]]));
    let (image, to_original) = warp_affine(img, &forward, true)?;
    Ok(SimulatedView {
        view_id,
        pose,
        image,
        to_original,
    })
}

/// The unwarped image as view 0.
pub fn identity_view(img: &GrayImage) -> SimulatedView {
    SimulatedView {
        view_id: 0,
        pose: AffinePose { lambda: 1.0, psi: 0.0, t: 1.0, phi: 0.0 },
        image: img.clone(),
        to_original: Affine2::IDENTITY,
    }
}

/// One view per `(t, phi)` (t outer), ids from 1, then the identity view.
/// The `(1, 0)` pair duplicates the identity and is not simulated; failing
/// warps are recorded in `skipped`.
pub fn simulate_views(img: &GrayImage, tilts: &[f64], phis: &[f64]) -> Result<ViewSet> {
    if tilts.is_empty() || phis.is_empty() {
        return Err(Error::invalid("tilt and phi sets must be nonempty"));
    }
    check_set(tilts)?;
    let pairs: Vec<(f64, f64)> = tilts
        .iter()
        .flat_map(|&t| phis.iter().map(move |&p| (t, p)))
        .filter(|&(t, p)| !(t == 1.0 && p == 0.0))
        .collect();
    let results: Vec<(f64, f64, Result<SimulatedView>)> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, &(t, p))| (t, p, simulate_tilt(img, t, p, i as u32 + 1)))
        .collect();
    let mut set = ViewSet::default();
    for (t, phi, r) in results {
        match r {
            Ok(v) => set.views.push(v),
            Err(e) => {
                log::warn!("skipping view t={t} phi={phi}: {e}");
                set.skipped.push(SkippedView { t, phi, reason: e.to_string() });
            }
        }
    }
    set.views.push(identity_view(img));
    Ok(set)
}

/// `view_id t phi m00 m01 m02 m10 m11 m12` per view; phi in degrees.
pub fn format_manifest(views: &[SimulatedView]) -> String {
    let mut s = String::new();
    for v in views {
        let m = v.to_original.m;
        write!(s, "{} {} {}", v.view_id, fmt_sig(v.pose.t, 9), fmt_sig(v.pose.phi.to_degrees(), 9)).unwrap();
        for r in m {
            for x in r {
                write!(s, " {}", fmt_sig(x, 9)).unwrap();
            }
        }
        s.push('\n');
    }
    s
}

pub fn write_manifest(path: &Path, views: &[SimulatedView]) -> Result<()> {
    std::fs::write(path, format_manifest(views)).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AffineOrdering {
    /// `a` is the less distorted image.
    ALower,
    BLower,
    Tie,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairClassification {
    pub ordering: AffineOrdering,
    /// Matches between `a` and the tilted `b`.
    pub m_a_tilted_b: usize,
    /// Matches between the tilted `a` and `b`.
    pub m_tilted_a_b: usize,
}

fn probe_features(img: &GrayImage, params: &DetectorParams, which: PairSide, view: &'static str) -> Result<Vec<Feature>> {
    let (kps, descs) = extract_features(img, params)?;
    if kps.len() < 2 {
        return Err(Error::ClassificationFailed { which, view });
    }
    Ok(kps
        .into_iter()
        .zip(descs)
        .map(|(keypoint, d): (Keypoint, _)| Feature {
            keypoint,
            descriptor: FusedDescriptor::base_only(&d),
        })
        .collect())
}

/// Smallest count difference that orders a pair; anything closer is a tie.
pub const CLASSIFY_MIN_MARGIN: usize = 2;

/// Tilt both images by `1/cos(theta)` along x and cross-match each original
/// with the other's tilted copy. The image whose tilted copy matches the
/// other original better is the less distorted one. Counts are mutual
/// ratio-test matches, so swapping the inputs mirrors the result.
pub fn classify_affine_pair(a: &GrayImage, b: &GrayImage, theta: f64) -> Result<PairClassification> {
    classify_affine_pair_with(a, b, theta, &DetectorParams::default(), DEFAULT_RATIO)
}

pub fn classify_affine_pair_with(
    a: &GrayImage,
    b: &GrayImage,
    theta: f64,
    params: &DetectorParams,
    ratio: f64,
) -> Result<PairClassification> {
    let t = tilt_from_angle(theta)?;
    let ta = simulate_tilt(a, t, 0.0, 1)?.image;
    let tb = simulate_tilt(b, t, 0.0, 1)?.image;
    let ((fa, fta), (fb, ftb)) = rayon::join(
        || {
            rayon::join(
                || probe_features(a, params, PairSide::A, "original"),
                || probe_features(&ta, params, PairSide::A, "tilted probe"),
            )
        },
        || {
            rayon::join(
                || probe_features(b, params, PairSide::B, "original"),
                || probe_features(&tb, params, PairSide::B, "tilted probe"),
            )
        },
    );
    let (fa, fta, fb, ftb) = (fa?, fta?, fb?, ftb?);
    let pack = |f: &[Feature]| PackedSet::base_only(f);
    let m_a_tilted_b = knn_mutual(&pack(&fa)?, &pack(&ftb)?, ratio)?.len();
    let m_tilted_a_b = knn_mutual(&pack(&fta)?, &pack(&fb)?, ratio)?.len();
    let ordering = if m_tilted_a_b >= m_a_tilted_b + CLASSIFY_MIN_MARGIN {
        AffineOrdering::ALower
    } else if m_a_tilted_b >= m_tilted_a_b + CLASSIFY_MIN_MARGIN {
        AffineOrdering::BLower
    } else {
        AffineOrdering::Tie
    };
    Ok(PairClassification {
        ordering,
        m_a_tilted_b,
        m_tilted_a_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn tilt_angles() {
        assert_eq!(tilt_from_angle(0.0).unwrap(), 1.0);
        assert!(approx(tilt_from_angle(45f64.to_radians()).unwrap(), SQRT_2, 1e-12));
        assert!(approx(tilt_from_angle(60f64.to_radians()).unwrap(), 2.0, 1e-12));
        assert!(tilt_from_angle(FRAC_PI_2).is_err());
        assert!(tilt_from_angle(-0.1).is_err());
    }

    #[test]
    fn pose_matrix_examples() {
        let id = pose_matrix(&AffinePose::new(1.0, 0.0, 1.0, 0.0).unwrap());
        assert_eq!(id, [[1.0, 0.0], [0.0, 1.0]]);
        let d = pose_matrix(&AffinePose::new(1.0, 0.0, 2.0, 0.0).unwrap());
        assert_eq!(d, [[2.0, 0.0], [0.0, 1.0]]);
        let p = AffinePose::new(2.0, 30f64.to_radians(), SQRT_2, -15f64.to_radians()).unwrap();
        let m = pose_matrix(&p);
        assert!(approx(m[0][0] * m[1][1] - m[0][1] * m[1][0], 4.0 * SQRT_2, 1e-12));
        assert!(AffinePose::new(0.0, 0.0, 1.0, 0.0).is_err());
        assert!(AffinePose::new(1.0, 0.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn standard_sets() {
        let s = SamplingSets::standard();
        for i in 0..3 {
            assert!(approx(s.reducing[i], s.enlarging[2 - i] / 4.0, 0.0));
        }
        assert_eq!(s.phi_values.len() * s.enlarging.len(), 18);
        assert!(approx(max_affine(&s.reducing, &s.enlarging).unwrap(), 8.0, 1e-12));
        assert!(approx(average_differ(&s.enlarging, &s.reducing, 4.0).unwrap(), 0.0, 1e-12));
        let a = asift_tilts();
        assert!(approx(max_affine(&[1.0], &a).unwrap(), 4.0 * SQRT_2, 1e-12));
        let expect = 3.0 * a.iter().sum::<f64>() / 5.0;
        assert!(approx(average_differ(&a, &a, 4.0).unwrap(), expect, 1e-12));
        assert!(approx(expect, 9.5397, 1e-4));
        assert_eq!(max_affine(&[1.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(average_differ(&[1.0, 2.0], &[1.0, 2.0], 1.0).unwrap(), 0.0);
        assert!(max_affine(&[], &[1.0]).is_err());
    }

    #[test]
    fn identity_only_set() {
        let img = GrayImage::from_fn(20, 12, |x, y| (x * 7 + y * 3) as u8);
        let vs = simulate_views(&img, &[1.0], &[0.0]).unwrap();
        assert_eq!(vs.views.len(), 1);
        assert_eq!(vs.views[0].image, img);
        assert_eq!(vs.views[0].view_id, 0);
    }

    #[test]
    fn horizontal_tilt_halves_width() {
        let img = GrayImage::from_fn(64, 64, |x, y| ((x ^ y) * 4) as u8);
        let v = simulate_tilt(&img, 2.0, 0.0, 1).unwrap();
        assert_eq!(v.image.width(), 32);
        assert_eq!(v.image.height(), 64);
    }

    #[test]
    fn full_standard_view_set() {
        let img = GrayImage::from_fn(48, 40, |x, y| ((x * 5 + y * 9) % 256) as u8);
        let s = SamplingSets::standard();
        let vs = simulate_views(&img, &s.enlarging, &s.phi_values).unwrap();
        assert_eq!(vs.views.len(), 19);
        assert!(vs.skipped.is_empty());
        let ids: Vec<u32> = vs.views.iter().map(|v| v.view_id).collect();
        assert_eq!(ids, (1..=18).chain([0]).collect::<Vec<_>>());
        let text = format_manifest(&vs.views);
        assert_eq!(text.lines().count(), 19);
        assert_eq!(text.lines().last().unwrap(), "0 1 0 1 0 0 0 1 0");
        assert_eq!(text.lines().next().unwrap().split(' ').count(), 9);
    }

    #[test]
    fn to_original_inverts_forward_on_corners() {
        let img = GrayImage::filled(50, 30, 9);
        let s = SamplingSets::standard();
        for &t in s.enlarging.iter().chain(&s.reducing) {
            for &phi in &s.phi_values {
                let v = simulate_tilt(&img, t, phi, 1).unwrap();
                let fwd = v.to_original.inverse().unwrap();
                let lin = fwd.linear();
                let pm = pose_matrix(&v.pose);
                // forward linear part is the inverse of the pose matrix
                let prod = mul2(&pm, &lin);
                for (i, row) in prod.iter().enumerate() {
                    for (j, &x) in row.iter().enumerate() {
                        assert!(approx(x, if i == j { 1.0 } else { 0.0 }, 1e-9));
                    }
                }
                for (cx, cy) in [(0.0, 0.0), (49.0, 0.0), (0.0, 29.0), (49.0, 29.0)] {
                    let (u, w) = fwd.apply(cx, cy);
                    let (bx, by) = v.to_original.apply(u, w);
                    assert!(approx(bx, cx, 1e-6) && approx(by, cy, 1e-6));
                }
            }
        }
    }
}
