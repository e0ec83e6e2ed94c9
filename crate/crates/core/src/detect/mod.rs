//! Difference-of-Gaussians keypoints, a 4x4x8 gradient-histogram descriptor,
//! and a text interchange format for descriptors computed elsewhere.

mod descriptor;
mod interchange;
mod pyramid;

pub use interchange::{
    format_descriptors, load_external_descriptors, parse_descriptors, read_descriptor_file,
    write_descriptors, DescriptorFile,
};
pub use pyramid::ScaleSpace;

use crate::imaging::GrayImage;
use crate::{Error, Result};
use rayon::prelude::*;
use std::fmt;
use std::str::FromStr;

/// Smallest image side accepted by the detector.
pub const MIN_DETECT_SIDE: usize = 32;
/// Dimension of the built-in descriptor.
pub const BUILTIN_DIM: usize = 128;

/// Tunables for the DoG detector.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorParams {
    pub octaves: usize,
    pub scales_per_octave: usize,
    pub sigma0: f64,
    /// Minimum |DoG| at the refined extremum, in 0..255 intensity units.
    pub contrast_threshold: f64,
    /// Maximum principal-curvature ratio.
    pub edge_ratio: f64,
    /// Keep at most this many keypoints (strongest first); 0 means no cap.
    pub max_keypoints: usize,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            octaves: 3,
            scales_per_octave: 3,
            sigma0: 1.6,
            contrast_threshold: 0.03 * 255.0,
            edge_ratio: 10.0,
            max_keypoints: 0,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        if self.octaves == 0 || self.scales_per_octave == 0 {
            return Err(Error::invalid("octaves and scales per octave must be positive"));
        }
        if !(self.sigma0 > 0.5) {
            return Err(Error::invalid("sigma0 must exceed the assumed input blur 0.5"));
        }
        if !(self.contrast_threshold >= 0.0) || !(self.edge_ratio >= 1.0) {
            return Err(Error::invalid("contrast threshold must be >= 0 and edge ratio >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    /// Gaussian scale in pixels of the image the point was detected in.
    pub scale: f64,
    /// Dominant gradient orientation, radians in [0, 2pi), image axes (y down).
    pub angle: f64,
    pub view_id: u32,
    pub orig_x: f64,
    pub orig_y: f64,
    /// |DoG| at the refined extremum.
    pub response: f64,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, scale: f64, angle: f64) -> Self {
        Keypoint {
            x,
            y,
            scale,
            angle,
            view_id: 0,
            orig_x: x,
            orig_y: y,
            response: 0.0,
        }
    }
}

/// Descriptor family tag. Binary families are compared with Hamming distance
/// over their bytes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum DescriptorFamily {
    BuiltinGrad,
    Sift,
    Surf,
    Orb,
    Akaze,
    Brisk,
    Other(String),
}

impl DescriptorFamily {
    pub fn is_binary(&self) -> bool {
        matches!(self, DescriptorFamily::Orb | DescriptorFamily::Akaze | DescriptorFamily::Brisk)
    }

    pub fn is_builtin(&self) -> bool {
        matches!(self, DescriptorFamily::BuiltinGrad)
    }

    pub fn name(&self) -> &str {
        match self {
            DescriptorFamily::BuiltinGrad => "builtin_grad",
            DescriptorFamily::Sift => "sift",
            DescriptorFamily::Surf => "surf",
            DescriptorFamily::Orb => "orb",
            DescriptorFamily::Akaze => "akaze",
            DescriptorFamily::Brisk => "brisk",
            DescriptorFamily::Other(s) => s,
        }
    }
}

impl fmt::Display for DescriptorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DescriptorFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.is_empty() || t.contains(char::is_whitespace) {
            return Err(Error::invalid(format!("bad descriptor family {s:?}")));
        }
        Ok(match t.to_ascii_lowercase().as_str() {
            "builtin_grad" | "builtin" => DescriptorFamily::BuiltinGrad,
            "sift" => DescriptorFamily::Sift,
            "surf" => DescriptorFamily::Surf,
            "orb" => DescriptorFamily::Orb,
            "akaze" => DescriptorFamily::Akaze,
            "brisk" => DescriptorFamily::Brisk,
            other => DescriptorFamily::Other(other.to_string()),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaseDescriptor {
    pub values: Vec<f32>,
    pub family: DescriptorFamily,
}

impl BaseDescriptor {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Detect DoG keypoints with the default parameters.
pub fn detect_keypoints(img: &GrayImage) -> Result<Vec<Keypoint>> {
    detect_keypoints_with(img, &DetectorParams::default())
}

pub fn detect_keypoints_with(img: &GrayImage, params: &DetectorParams) -> Result<Vec<Keypoint>> {
    let ss = ScaleSpace::build(img, params)?;
    Ok(ss.keypoints())
}

/// Built-in descriptor for one keypoint. Builds a scale space; use
/// [`ScaleSpace::describe`] to amortize over many keypoints.
pub fn compute_base_descriptor(img: &GrayImage, kp: &Keypoint) -> Result<BaseDescriptor> {
    let ss = ScaleSpace::build(img, &DetectorParams::default())?;
    ss.describe(kp)
}

/// Detect and describe in one pass; keypoints whose window leaves the image
/// are dropped.
pub fn extract_features(
    img: &GrayImage,
    params: &DetectorParams,
) -> Result<(Vec<Keypoint>, Vec<BaseDescriptor>)> {
    let ss = ScaleSpace::build(img, params)?;
    let kps = ss.keypoints();
    let described: Vec<_> = kps
        .par_iter()
        .filter_map(|kp| ss.describe(kp).ok().map(|d| (*kp, d)))
        .collect();
    Ok(described.into_iter().unzip())
}
