//! End-to-end matching: classify, simulate, enhance and segment, describe,
//! fuse, match across view sets, dedupe.

use crate::affine_sim::{
    classify_affine_pair_with, simulate_views, AffineOrdering, PairClassification, SamplingSets,
    SimulatedView,
};
use crate::detect::{extract_features, DescriptorFamily, DetectorParams, Keypoint};
use crate::error::PairSide;
use crate::imaging::{enhance, EnhanceParams, GrayImage};
use crate::matching::{dedupe, match_view_sets, Feature, Match, DEFAULT_RATIO};
use crate::mser::{mser_segment, MserParams, RegionMap};
use crate::region_desc::{
    default_weights, describe_regions, fuse, relative_position, NormalizationMode, RegionSignature,
};
use crate::{Error, Result};
use rayon::prelude::*;
use std::collections::HashMap;

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub ratio: f64,
    /// `None` takes the family default.
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    /// `None` derives parameters from each image's size.
    pub enhance: Option<EnhanceParams>,
    pub mser: Option<MserParams>,
    pub simulate: bool,
    /// Probe tilt angle for classification, radians.
    pub theta: f64,
    pub sampling: SamplingSets,
    pub detector: DetectorParams,
    pub normalization: NormalizationMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            ratio: DEFAULT_RATIO,
            alpha1: None,
            alpha2: None,
            enhance: None,
            mser: None,
            simulate: true,
            theta: 45f64.to_radians(),
            sampling: SamplingSets::standard(),
            detector: DetectorParams::default(),
            normalization: NormalizationMode::default(),
        }
    }
}

impl PipelineConfig {
    pub fn weights(&self) -> Result<(f64, f64)> {
        let (d1, d2) = default_weights(&DescriptorFamily::BuiltinGrad)?;
        let (a1, a2) = (self.alpha1.unwrap_or(d1), self.alpha2.unwrap_or(d2));
        if !(a1 >= 0.0 && a2 >= 0.0) {
            return Err(Error::invalid("alpha1 and alpha2 must be non-negative"));
        }
        Ok((a1, a2))
    }
}

#[derive(Clone, Debug, Default)]
pub struct PipelineOutput {
    pub matches: Vec<Match>,
    pub classification: Option<PairClassification>,
    pub features_a: usize,
    pub features_b: usize,
    pub diagnostics: Vec<String>,
}

/// Regions of one original image, ready for keypoint lookup.
pub struct RegionContext {
    pub map: RegionMap,
    pub signatures: HashMap<u32, RegionSignature>,
}

impl RegionContext {
    pub fn build(img: &GrayImage, cfg: &PipelineConfig) -> Result<Self> {
        let ep = cfg
            .enhance
            .unwrap_or_else(|| EnhanceParams::for_image(img.width(), img.height()));
        let enhanced = enhance(img, &ep)?;
        let mp = cfg
            .mser
            .unwrap_or_else(|| MserParams::for_image(img.width(), img.height()));
        let map = mser_segment(&enhanced, &mp)?;
        let signatures = describe_regions(&map, &enhanced, cfg.normalization);
        Ok(RegionContext { map, signatures })
    }

    pub fn signature_at(&self, x: f64, y: f64) -> Option<&RegionSignature> {
        let id = self.map.region_at(x, y).ok()??;
        self.signatures.get(&id)
    }
}

/// Whether the descriptor support of `kp`, carried through `to_original`,
/// stays inside the source image.
fn support_inside(kp: &Keypoint, view: &SimulatedView, w: usize, h: usize) -> bool {
    let half = 2.5 * 3.0 * kp.scale + 1.0;
    let (s, c) = kp.angle.sin_cos();
    [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)].iter().all(|&(sx, sy)| {
        let x = kp.x + half * (sx * c - sy * s);
        let y = kp.y + half * (sx * s + sy * c);
        let (ox, oy) = view.to_original.apply(x, y);
        ox >= 0.0 && oy >= 0.0 && ox <= (w - 1) as f64 && oy <= (h - 1) as f64
    })
}

/// Detect and describe on every view, map to original coordinates, attach
/// region information.
pub fn view_features(
    views: &[SimulatedView],
    original: &GrayImage,
    regions: &RegionContext,
    cfg: &PipelineConfig,
) -> Result<Vec<Feature>> {
    let (a1, a2) = cfg.weights()?;
    let (w, h) = (original.width(), original.height());
    let per_view: Vec<Result<Vec<Feature>>> = views
        .par_iter()
        .map(|v| {
            if v.image.width() < crate::detect::MIN_DETECT_SIDE
                || v.image.height() < crate::detect::MIN_DETECT_SIDE
            {
                return Ok(Vec::new());
            }
            let (kps, descs) = extract_features(&v.image, &cfg.detector)?;
            let mut out = Vec::with_capacity(kps.len());
            for (mut kp, d) in kps.into_iter().zip(descs) {
                if !support_inside(&kp, v, w, h) {
                    continue;
                }
                let (ox, oy) = v.to_original.apply(kp.x, kp.y);
                kp.view_id = v.view_id;
                kp.orig_x = ox;
                kp.orig_y = oy;
                let sig = regions.signature_at(ox, oy);
                let rel = sig.map(|s| relative_position(ox, oy, s));
                out.push(Feature {
                    keypoint: kp,
                    descriptor: fuse(&d, sig, rel, a1, a2)?,
                });
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::new();
    for r in per_view {
        all.extend(r?);
    }
    Ok(all)
}

fn views_for(img: &GrayImage, tilts: Option<&[f64]>, cfg: &PipelineConfig) -> Result<Vec<SimulatedView>> {
    match tilts {
        Some(t) => {
            let set = simulate_views(img, t, &cfg.sampling.phi_values)?;
            Ok(set.views)
        }
        None => Ok(vec![crate::affine_sim::identity_view(img)]),
    }
}

pub fn match_pipeline(a: &GrayImage, b: &GrayImage, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let mut out = PipelineOutput::default();
    cfg.weights()?;
    let (tilts_a, tilts_b) = if cfg.simulate {
        let cls = match classify_affine_pair_with(a, b, cfg.theta, &cfg.detector, cfg.ratio) {
            Ok(c) => c,
            Err(Error::ClassificationFailed { which, view: "original" }) => {
                out.diagnostics
                    .push(format!("image {which} has no keypoints; nothing to match"));
                return Ok(out);
            }
            Err(e) => return Err(e),
        };
        out.classification = Some(cls);
        let s = &cfg.sampling;
        match cls.ordering {
            AffineOrdering::ALower => (Some(&s.enlarging[..]), Some(&s.reducing[..])),
            AffineOrdering::BLower => (Some(&s.reducing[..]), Some(&s.enlarging[..])),
            AffineOrdering::Tie => (Some(&s.enlarging[..]), Some(&s.enlarging[..])),
        }
    } else {
        (None, None)
    };

    let side = |img: &GrayImage, tilts: Option<&[f64]>| -> Result<Vec<Feature>> {
        let (views, regions) = rayon::join(
            || views_for(img, tilts, cfg),
            || RegionContext::build(img, cfg),
        );
        view_features(&views?, img, &regions?, cfg)
    };
    let (fa, fb) = rayon::join(|| side(a, tilts_a), || side(b, tilts_b));
    let (fa, fb) = (fa?, fb?);
    out.features_a = fa.len();
    out.features_b = fb.len();
    if fa.is_empty() || fb.len() < 2 {
        let which = if fa.is_empty() { PairSide::A } else { PairSide::B };
        out.diagnostics
            .push(format!("image {which} produced too few descriptors; nothing to match"));
        return Ok(out);
    }
    let raw = match_view_sets(&fa, &fb, cfg.ratio, true)?;
    log::debug!("{} raw matches from {} x {} features", raw.len(), fa.len(), fb.len());
    out.matches = dedupe(&raw);
    Ok(out)
}
