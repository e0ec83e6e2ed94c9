//! Region grayscale histogram, centroid-relative keypoint position, and
//! weighted fusion with a base descriptor.

use crate::detect::{BaseDescriptor, DescriptorFamily};
use crate::imaging::GrayImage;
use crate::mser::{BBox, Region, RegionMap};
use crate::{Error, Result};
use std::collections::HashMap;

pub const HIST_BINS: usize = 52;
pub const EXTRA_DIM: usize = HIST_BINS + 2;

/// How region pixel coordinates are mapped into the unit square before
/// moments are taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum NormalizationMode {
    /// Per-axis bounding-box rescaling.
    BoundingBox,
    /// Whitening by the region's second moments: an ellipse maps to the disk
    /// of radius 0.5 centred at (0.5, 0.5). Invariant to affine warps up to a
    /// rotation, which the centroid orientation then removes.
    #[default]
    Moment,
}

/// Pixel-to-normalized coordinate map of one region.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormFrame {
    /// `n = m * (p - origin) + offset`
    pub m: [[f64; 2]; 2],
    pub origin: (f64, f64),
    pub offset: (f64, f64),
}

impl NormFrame {
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let (dx, dy) = (x - self.origin.0, y - self.origin.1);
        (
            self.m[0][0] * dx + self.m[0][1] * dy + self.offset.0,
            self.m[1][0] * dx + self.m[1][1] * dy + self.offset.1,
        )
    }

    pub fn from_bbox(b: &BBox) -> Result<Self> {
        if b.max_x <= b.min_x || b.max_y <= b.min_y {
            return Err(Error::DegenerateRegion("bounding box has zero extent"));
        }
        Ok(NormFrame {
            m: [
                [1.0 / (b.max_x - b.min_x) as f64, 0.0],
                [0.0, 1.0 / (b.max_y - b.min_y) as f64],
            ],
            origin: (b.min_x as f64, b.min_y as f64),
            offset: (0.0, 0.0),
        })
    }

    pub fn from_moments(pixels: &[(u32, u32)]) -> Result<Self> {
        if pixels.len() < 3 {
            return Err(Error::DegenerateRegion("too few pixels for second moments"));
        }
        let n = pixels.len() as f64;
        let (mut sx, mut sy) = (0.0, 0.0);
        for &(x, y) in pixels {
            sx += x as f64;
            sy += y as f64;
        }
        let (mx, my) = (sx / n, sy / n);
        let (mut cxx, mut cxy, mut cyy) = (0.0, 0.0, 0.0);
        for &(x, y) in pixels {
            let (dx, dy) = (x as f64 - mx, y as f64 - my);
            cxx += dx * dx;
            cxy += dx * dy;
            cyy += dy * dy;
        }
        // a pixel is a unit square, not a point
        let (cxx, cxy, cyy) = (cxx / n + 1.0 / 12.0, cxy / n, cyy / n + 1.0 / 12.0);
        let w = inv_sqrt_spd(cxx, cxy, cyy)?;
        Ok(NormFrame {
            m: [[w[0][0] / 4.0, w[0][1] / 4.0], [w[1][0] / 4.0, w[1][1] / 4.0]],
            origin: (mx, my),
            offset: (0.5, 0.5),
        })
    }
}

/// `S^{-1/2}` of a symmetric positive definite 2x2 matrix.
fn inv_sqrt_spd(a: f64, b: f64, c: f64) -> Result<[[f64; 2]; 2]> {
    let tr = a + c;
    let disc = ((a - c) * (a - c) / 4.0 + b * b).sqrt();
    let l1 = tr / 2.0 + disc;
    let l2 = tr / 2.0 - disc;
    if !(l2 > 1e-9) {
        return Err(Error::DegenerateRegion("region covariance is singular"));
    }
    // eigenvector of l1
    let (vx, vy) = if b.abs() > 1e-15 {
        let (x, y) = (l1 - c, b);
        let n = x.hypot(y);
        (x / n, y / n)
    } else if a >= c {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let (s1, s2) = (1.0 / l1.sqrt(), 1.0 / l2.sqrt());
    // V diag(s1, s2) V^T with V = [[vx, -vy], [vy, vx]]
    Ok([
        [s1 * vx * vx + s2 * vy * vy, (s1 - s2) * vx * vy],
        [(s1 - s2) * vx * vy, s1 * vy * vy + s2 * vx * vx],
    ])
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionSignature {
    pub region_id: u32,
    pub histogram: [f64; HIST_BINS],
    /// Intensity centroid in normalized coordinates.
    pub centroid: (f64, f64),
    pub orientation: f64,
    pub frame: NormFrame,
}

/// Bin `k` counts intensities `5k..=5k+4`; bin 51 holds only 255.
pub fn region_histogram(pixels: &[(u32, u32)], img: &GrayImage) -> Result<[f64; HIST_BINS]> {
    if pixels.is_empty() {
        return Err(Error::invalid("empty region"));
    }
    let mut counts = [0u64; HIST_BINS];
    for &(x, y) in pixels {
        counts[img.get(x as usize, y as usize) as usize / 5] += 1;
    }
    let n = pixels.len() as f64;
    let mut h = [0.0; HIST_BINS];
    for (o, c) in h.iter_mut().zip(counts) {
        *o = c as f64 / n;
    }
    Ok(h)
}

pub fn normalize_coords(bbox: &BBox, x: f64, y: f64) -> Result<(f64, f64)> {
    Ok(NormFrame::from_bbox(bbox)?.apply(x, y))
}

/// Intensity centroid `C = (m10/m00, m01/m00)` in the frame's normalized
/// coordinates, and the main orientation. With a bounding-box frame the
/// orientation is `atan2(m01, m10)`; with a moment frame the moments are
/// taken about the frame centre (0.5, 0.5), whose position is itself
/// affine-covariant.
pub fn centroid_orientation(
    pixels: &[(u32, u32)],
    img: &GrayImage,
    frame: &NormFrame,
) -> Result<((f64, f64), f64)> {
    if pixels.is_empty() {
        return Err(Error::invalid("empty region"));
    }
    let (mut m00, mut m10, mut m01) = (0.0, 0.0, 0.0);
    for &(x, y) in pixels {
        let i = img.get(x as usize, y as usize) as f64;
        let (nx, ny) = frame.apply(x as f64, y as f64);
        m00 += i;
        m10 += nx * i;
        m01 += ny * i;
    }
    if m00 == 0.0 {
        return Err(Error::DegenerateRegion("region has zero total intensity"));
    }
    let c = (m10 / m00, m01 / m00);
    let (ox, oy) = frame.offset;
    let theta = (c.1 - oy).atan2(c.0 - ox);
    Ok((c, theta))
}

pub fn region_signature(region: &Region, img: &GrayImage, mode: NormalizationMode) -> Result<RegionSignature> {
    let frame = match mode {
        NormalizationMode::BoundingBox => NormFrame::from_bbox(&region.bbox)?,
        NormalizationMode::Moment => NormFrame::from_moments(&region.pixels)?,
    };
    let histogram = region_histogram(&region.pixels, img)?;
    let (centroid, orientation) = centroid_orientation(&region.pixels, img, &frame)?;
    Ok(RegionSignature {
        region_id: region.id,
        histogram,
        centroid,
        orientation,
        frame,
    })
}

/// Signatures for every non-degenerate region of a map.
pub fn describe_regions(
    map: &RegionMap,
    img: &GrayImage,
    mode: NormalizationMode,
) -> HashMap<u32, RegionSignature> {
    map.regions()
        .iter()
        .filter_map(|r| region_signature(r, img, mode).ok().map(|s| (r.id, s)))
        .collect()
}

/// Keypoint position relative to the centroid, in the frame rotated so the
/// x axis follows the main orientation.
pub fn relative_position(x: f64, y: f64, sig: &RegionSignature) -> (f64, f64) {
    let (nx, ny) = sig.frame.apply(x, y);
    let (px, py) = (nx - sig.centroid.0, ny - sig.centroid.1);
    let (s, c) = sig.orientation.sin_cos();
    (c * px + s * py, -s * px + c * py)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusedDescriptor {
    pub base: Vec<f32>,
    pub region_part: [f32; HIST_BINS],
    pub position_part: [f32; 2],
    pub has_region: bool,
    pub family: DescriptorFamily,
}

impl FusedDescriptor {
    pub fn dim(&self) -> usize {
        self.base.len() + EXTRA_DIM
    }

    /// Flat `[base | region | position]`.
    pub fn to_vec(&self) -> Vec<f32> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.base);
        v.extend_from_slice(&self.region_part);
        v.extend_from_slice(&self.position_part);
        v
    }

    /// Base descriptor with zero region and position parts.
    pub fn base_only(base: &BaseDescriptor) -> Self {
        FusedDescriptor {
            base: base.values.clone(),
            region_part: [0.0; HIST_BINS],
            position_part: [0.0; 2],
            has_region: false,
            family: base.family.clone(),
        }
    }
}

/// `[base | alpha1 * histogram | alpha2 * relpos]`; zeros when the keypoint
/// has no region.
pub fn fuse(
    base: &BaseDescriptor,
    signature: Option<&RegionSignature>,
    relpos: Option<(f64, f64)>,
    alpha1: f64,
    alpha2: f64,
) -> Result<FusedDescriptor> {
    if !(alpha1 >= 0.0 && alpha2 >= 0.0) {
        return Err(Error::invalid("fusion weights must be non-negative"));
    }
    let mut out = FusedDescriptor::base_only(base);
    if let Some(sig) = signature {
        out.has_region = true;
        for (o, h) in out.region_part.iter_mut().zip(&sig.histogram) {
            *o = (alpha1 * h) as f32;
        }
        if let Some((rx, ry)) = relpos {
            out.position_part = [(alpha2 * rx) as f32, (alpha2 * ry) as f32];
        }
    }
    Ok(out)
}

/// Recommended `(alpha1, alpha2)` per descriptor family.
pub fn default_weights(family: &DescriptorFamily) -> Result<(f64, f64)> {
    match family {
        DescriptorFamily::BuiltinGrad | DescriptorFamily::Sift => Ok((600.0, 300.0)),
        DescriptorFamily::Surf => Ok((0.3, 0.1)),
        DescriptorFamily::Orb => Ok((10.0, 40.0)),
        DescriptorFamily::Akaze | DescriptorFamily::Brisk => Ok((10.0, 60.0)),
        DescriptorFamily::Other(name) => Err(Error::Config(format!(
            "no default weights for descriptor family {name:?}; pass alpha1 and alpha2 explicitly"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect_pixels(x0: u32, y0: u32, x1: u32, y1: u32) -> Vec<(u32, u32)> {
        let mut v = vec![];
        for y in y0..=y1 {
            for x in x0..=x1 {
                v.push((x, y));
            }
        }
        v
    }

    #[test]
    fn histogram_examples() {
        let img = GrayImage::filled(10, 10, 7);
        let h = region_histogram(&rect_pixels(0, 0, 9, 9), &img).unwrap();
        assert_eq!(h[1], 1.0);
        assert_eq!(h.iter().sum::<f64>(), 1.0);

        let img = GrayImage::from_fn(10, 10, |x, _| if x < 5 { 0 } else { 255 });
        let h = region_histogram(&rect_pixels(0, 0, 9, 9), &img).unwrap();
        assert_eq!(h[0], 0.5);
        assert_eq!(h[51], 0.5);
        assert_eq!(GrayImage::filled(1, 1, 254).get(0, 0) / 5, 50);
        assert!(region_histogram(&[], &img).is_err());
    }

    #[test]
    fn normalize_examples() {
        let b = BBox { min_x: 10, min_y: 20, max_x: 30, max_y: 60 };
        assert_eq!(normalize_coords(&b, 10.0, 20.0).unwrap(), (0.0, 0.0));
        assert_eq!(normalize_coords(&b, 30.0, 60.0).unwrap(), (1.0, 1.0));
        assert_eq!(normalize_coords(&b, 15.0, 50.0).unwrap(), (0.25, 0.75));
        let flat = BBox { min_x: 3, min_y: 0, max_x: 3, max_y: 9 };
        assert!(matches!(normalize_coords(&flat, 3.0, 1.0), Err(Error::DegenerateRegion(_))));
    }

    #[test]
    fn symmetric_region_centroid_is_center() {
        let img = GrayImage::filled(20, 20, 90);
        let px = rect_pixels(2, 4, 12, 10);
        let b = BBox { min_x: 2, min_y: 4, max_x: 12, max_y: 10 };
        for frame in [NormFrame::from_bbox(&b).unwrap(), NormFrame::from_moments(&px).unwrap()] {
            let (c, _) = centroid_orientation(&px, &img, &frame).unwrap();
            assert!((c.0 - 0.5).abs() < 1e-12 && (c.1 - 0.5).abs() < 1e-12, "{c:?}");
        }
    }

    #[test]
    fn diagonal_mass_gives_45_degrees() {
        let img = GrayImage::filled(11, 11, 50);
        let px: Vec<(u32, u32)> = (0..11).map(|i| (i, i)).collect();
        let b = BBox { min_x: 0, min_y: 0, max_x: 10, max_y: 10 };
        let (c, th) = centroid_orientation(&px, &img, &NormFrame::from_bbox(&b).unwrap()).unwrap();
        assert!((c.0 - 0.5).abs() < 1e-12);
        assert!((th - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn intensity_scaling_keeps_centroid() {
        let a = GrayImage::from_fn(16, 16, |x, y| (10 + x * 3 + y) as u8);
        let b = GrayImage::from_fn(16, 16, |x, y| (2 * (10 + x * 3 + y)) as u8);
        let px = rect_pixels(1, 2, 14, 12);
        let f = NormFrame::from_moments(&px).unwrap();
        let ra = centroid_orientation(&px, &a, &f).unwrap();
        let rb = centroid_orientation(&px, &b, &f).unwrap();
        assert!((ra.0 .0 - rb.0 .0).abs() < 1e-12 && (ra.1 - rb.1).abs() < 1e-12);
        let zero = GrayImage::filled(16, 16, 0);
        assert!(matches!(centroid_orientation(&px, &zero, &f), Err(Error::DegenerateRegion(_))));
    }

    fn sig(centroid: (f64, f64), theta: f64) -> RegionSignature {
        RegionSignature {
            region_id: 1,
            histogram: [0.0; HIST_BINS],
            centroid,
            orientation: theta,
            frame: NormFrame { m: [[1.0, 0.0], [0.0, 1.0]], origin: (0.0, 0.0), offset: (0.0, 0.0) },
        }
    }

    #[test]
    fn relative_position_examples() {
        let s = sig((0.5, 0.5), 0.0);
        assert_eq!(relative_position(0.5, 0.5, &s), (0.0, 0.0));
        assert_eq!(relative_position(0.75, 0.5, &s), (0.25, 0.0));
        let s = sig((0.5, 0.5), std::f64::consts::FRAC_PI_2);
        let (rx, ry) = relative_position(0.5, 0.75, &s);
        assert!((rx - 0.25).abs() < 1e-12 && ry.abs() < 1e-12);
    }

    #[test]
    fn fuse_parts() {
        let base = BaseDescriptor { values: vec![1.0; 128], family: DescriptorFamily::BuiltinGrad };
        let mut s = sig((0.5, 0.5), 0.0);
        s.histogram[3] = 0.25;
        s.histogram[9] = 0.75;
        let f = fuse(&base, Some(&s), Some((0.1, -0.2)), 600.0, 300.0).unwrap();
        assert_eq!(f.dim(), 182);
        assert!((f.region_part.iter().map(|&v| v as f64).sum::<f64>() - 600.0).abs() < 1e-6);
        assert_eq!(f.position_part, [30.0, -60.0]);
        let none = fuse(&base, None, None, 600.0, 300.0).unwrap();
        assert!(!none.has_region);
        assert!(none.region_part.iter().all(|&v| v == 0.0));
        let zero = fuse(&base, Some(&s), Some((0.1, 0.2)), 0.0, 0.0).unwrap();
        assert!(zero.region_part.iter().chain(&zero.position_part).all(|&v| v == 0.0));
        assert!(fuse(&base, None, None, -1.0, 0.0).is_err());
    }

    #[test]
    fn weights_per_family() {
        assert_eq!(default_weights(&DescriptorFamily::BuiltinGrad).unwrap(), (600.0, 300.0));
        assert_eq!(default_weights(&DescriptorFamily::Orb).unwrap(), (10.0, 40.0));
        assert_eq!(default_weights(&DescriptorFamily::Surf).unwrap(), (0.3, 0.1));
        assert_eq!(default_weights(&DescriptorFamily::Brisk).unwrap(), (10.0, 60.0));
        assert!(matches!(
            default_weights(&DescriptorFamily::Other("freak".into())),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn whitening_inverts_covariance() {
        let w = inv_sqrt_spd(5.0, 1.5, 2.0).unwrap();
        // w * S * w = I
        let s = [[5.0, 1.5], [1.5, 2.0]];
        let mut ws = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    ws[i][j] += w[i][k] * s[k][j];
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                let v: f64 = (0..2).map(|k| ws[i][k] * w[k][j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }
}
