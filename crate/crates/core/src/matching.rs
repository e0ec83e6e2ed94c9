//! Exact nearest-neighbour matching with the ratio test, duplicate removal
//! and the match text format.

use crate::detect::Keypoint;
use crate::region_desc::FusedDescriptor;
use crate::textfmt::fmt_sig;
use crate::{Error, Result};
use rayon::prelude::*;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

pub const DEFAULT_RATIO: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Match {
    /// Point in image A, original coordinates.
    pub a: (f64, f64),
    /// Point in image B, original coordinates.
    pub b: (f64, f64),
    pub distance: f64,
    pub view_pair: (u32, u32),
}

/// A keypoint with its descriptor.
#[derive(Clone, Debug, PartialEq)]
pub struct Feature {
    pub keypoint: Keypoint,
    pub descriptor: FusedDescriptor,
}

/// Descriptors laid out contiguously for the distance scan.
pub struct PackedSet {
    n: usize,
    binary: bool,
    base_dim: usize,
    words: usize,
    base: Vec<f32>,
    bits: Vec<u64>,
    extra_dim: usize,
    extra: Vec<f32>,
    points: Vec<(f64, f64)>,
    views: Vec<u32>,
}

impl PackedSet {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Pack fused descriptors: base part plus the 54 region/position values.
    pub fn from_features(features: &[Feature]) -> Result<Self> {
        Self::build(features, true)
    }

    /// Pack only the base parts.
    pub fn base_only(features: &[Feature]) -> Result<Self> {
        Self::build(features, false)
    }

    fn build(features: &[Feature], with_extra: bool) -> Result<Self> {
        let (base_dim, binary) = match features.first() {
            Some(f) => (f.descriptor.base.len(), f.descriptor.family.is_binary()),
            None => (0, false),
        };
        if features
            .iter()
            .any(|f| f.descriptor.base.len() != base_dim || f.descriptor.family.is_binary() != binary)
        {
            return Err(Error::invalid("descriptor set mixes dimensions or metrics"));
        }
        let n = features.len();
        let words = base_dim.div_ceil(8);
        let extra_dim = if with_extra { crate::region_desc::EXTRA_DIM } else { 0 };
        let mut set = PackedSet {
            n,
            binary,
            base_dim,
            words,
            base: Vec::new(),
            bits: Vec::new(),
            extra_dim,
            extra: Vec::with_capacity(n * extra_dim),
            points: Vec::with_capacity(n),
            views: Vec::with_capacity(n),
        };
        for f in features {
            let d = &f.descriptor;
            if binary {
                let mut row = vec![0u64; words];
                for (i, &v) in d.base.iter().enumerate() {
                    if !(0.0..=255.0).contains(&v) {
                        return Err(Error::invalid("binary descriptor byte outside 0..=255"));
                    }
                    row[i / 8] |= (v as u8 as u64) << (8 * (i % 8));
                }
                set.bits.extend(row);
            } else {
                set.base.extend_from_slice(&d.base);
            }
            if with_extra {
                set.extra.extend_from_slice(&d.region_part);
                set.extra.extend_from_slice(&d.position_part);
            }
            set.points.push((f.keypoint.orig_x, f.keypoint.orig_y));
            set.views.push(f.keypoint.view_id);
        }
        Ok(set)
    }

    /// Split by view id, keeping the original order inside each view.
    pub fn split_by_view(features: &[Feature], with_extra: bool) -> Result<Vec<(u32, PackedSet)>> {
        let mut ids: Vec<u32> = features.iter().map(|f| f.keypoint.view_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.into_iter()
            .map(|v| {
                let sub: Vec<Feature> = features
                    .iter()
                    .filter(|f| f.keypoint.view_id == v)
                    .cloned()
                    .collect();
                Ok((v, Self::build(&sub, with_extra)?))
            })
            .collect()
    }

    #[inline]
    fn distance(&self, i: usize, other: &PackedSet, j: usize) -> f64 {
        let extra = if self.extra_dim > 0 {
            let e = self.extra_dim;
            sq_dist(&self.extra[i * e..(i + 1) * e], &other.extra[j * e..(j + 1) * e])
        } else {
            0.0
        };
        if self.binary {
            let w = self.words;
            let a = &self.bits[i * w..(i + 1) * w];
            let b = &other.bits[j * w..(j + 1) * w];
            let ham: u32 = a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum();
            ham as f64 + (extra as f64).sqrt()
        } else {
            let d = self.base_dim;
            let base = sq_dist(&self.base[i * d..(i + 1) * d], &other.base[j * d..(j + 1) * d]);
            ((base + extra) as f64).sqrt()
        }
    }
}

/// Squared Euclidean distance with a fixed 8-lane accumulation order.
#[inline]
fn sq_dist(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    for (k, (x, y)) in ra.iter().zip(rb).enumerate() {
        let d = x - y;
        acc[k] += d * d;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

/// Ratio-test matches from every descriptor of `a` to its two nearest
/// neighbours in `b`.
pub fn knn_packed(a: &PackedSet, b: &PackedSet, ratio: f64) -> Result<Vec<Match>> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid("ratio must lie in (0, 1)"));
    }
    if b.n < 2 {
        return Err(Error::invalid("need at least two descriptors to match against"));
    }
    if a.n == 0 {
        return Ok(Vec::new());
    }
    if a.binary != b.binary || a.base_dim != b.base_dim || a.extra_dim != b.extra_dim {
        return Err(Error::invalid("descriptor sets are not comparable"));
    }
    let nn = ratio_nearest(a, b, ratio);
    Ok(nn
        .into_iter()
        .enumerate()
        .filter_map(|(i, hit)| {
            hit.map(|(j, d)| Match {
                a: a.points[i],
                b: b.points[j],
                distance: d,
                view_pair: (a.views[i], b.views[j]),
            })
        })
        .collect())
}

/// For each row of `a`, its nearest row of `b` and the distance when the
/// ratio test passes.
fn ratio_nearest(a: &PackedSet, b: &PackedSet, ratio: f64) -> Vec<Option<(usize, f64)>> {
    (0..a.n)
        .into_par_iter()
        .with_min_len(64)
        .map(|i| {
            let (mut d1, mut d2, mut best) = (f64::INFINITY, f64::INFINITY, usize::MAX);
            for j in 0..b.n {
                let d = a.distance(i, b, j);
                if d < d1 {
                    d2 = d1;
                    d1 = d;
                    best = j;
                } else if d < d2 {
                    d2 = d;
                }
            }
            (d1 < ratio * d2).then_some((best, d1))
        })
        .collect()
}

/// Ratio-test matches that also pass in the reverse direction and pick
/// the same partner. Symmetric in its arguments up to swapping `a`/`b`.
pub fn knn_mutual(a: &PackedSet, b: &PackedSet, ratio: f64) -> Result<Vec<Match>> {
    if a.n < 2 || b.n < 2 {
        return Err(Error::invalid("need at least two descriptors on each side"));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid("ratio must lie in (0, 1)"));
    }
    if a.binary != b.binary || a.base_dim != b.base_dim || a.extra_dim != b.extra_dim {
        return Err(Error::invalid("descriptor sets are not comparable"));
    }
    let (fwd, back) = rayon::join(|| ratio_nearest(a, b, ratio), || ratio_nearest(b, a, ratio));
    let out = fwd
        .into_iter()
        .enumerate()
        .filter_map(|(i, hit)| {
            let (j, d) = hit?;
            matches!(back[j], Some((ii, _)) if ii == i).then(|| Match {
                a: a.points[i],
                b: b.points[j],
                distance: d,
                view_pair: (a.views[i], b.views[j]),
            })
        })
        .collect();
    Ok(out)
}

/// Match fused descriptors (base plus region parts).
pub fn knn_match(a: &[Feature], b: &[Feature], ratio: f64) -> Result<Vec<Match>> {
    knn_packed(&PackedSet::from_features(a)?, &PackedSet::from_features(b)?, ratio)
}

/// Match on the base descriptors alone.
pub fn knn_match_base(a: &[Feature], b: &[Feature], ratio: f64) -> Result<Vec<Match>> {
    knn_packed(&PackedSet::base_only(a)?, &PackedSet::base_only(b)?, ratio)
}

/// Match every view of A against every view of B and pool the results.
/// View pairs where B has fewer than two descriptors are skipped.
pub fn match_view_sets(a: &[Feature], b: &[Feature], ratio: f64, with_extra: bool) -> Result<Vec<Match>> {
    let va = PackedSet::split_by_view(a, with_extra)?;
    let vb = PackedSet::split_by_view(b, with_extra)?;
    let mut out = Vec::new();
    for (_, pa) in &va {
        for (_, pb) in &vb {
            if pb.len() >= 2 && !pa.is_empty() {
                out.extend(knn_packed(pa, pb, ratio)?);
            }
        }
    }
    Ok(out)
}

fn grid_key(p: (f64, f64)) -> (i64, i64) {
    ((p.0 / 2.0).round() as i64, (p.1 / 2.0).round() as i64)
}

/// Keep the lowest-distance match per 2-px cell of (a, b), then per 2-px
/// cell of a. Survivors keep their input order.
pub fn dedupe(matches: &[Match]) -> Vec<Match> {
    fn keep_best<K: std::hash::Hash + Eq>(ms: &[Match], idx: &[usize], key: impl Fn(&Match) -> K) -> Vec<usize> {
        let mut best: HashMap<K, usize> = HashMap::new();
        for &i in idx {
            best.entry(key(&ms[i]))
                .and_modify(|b| {
                    if ms[i].distance < ms[*b].distance {
                        *b = i;
                    }
                })
                .or_insert(i);
        }
        let mut keep: Vec<usize> = best.into_values().collect();
        keep.sort_unstable();
        keep
    }
    let all: Vec<usize> = (0..matches.len()).collect();
    let stage1 = keep_best(matches, &all, |m| (grid_key(m.a), grid_key(m.b)));
    let stage2 = keep_best(matches, &stage1, |m| grid_key(m.a));
    stage2.into_iter().map(|i| matches[i]).collect()
}

/// `ax ay bx by distance` per line, 6 significant digits.
pub fn format_matches(matches: &[Match]) -> String {
    let mut s = String::new();
    for m in matches {
        writeln!(
            s,
            "{} {} {} {} {}",
            fmt_sig(m.a.0, 6),
            fmt_sig(m.a.1, 6),
            fmt_sig(m.b.0, 6),
            fmt_sig(m.b.1, 6),
            fmt_sig(m.distance, 6)
        )
        .unwrap();
    }
    s
}

pub fn write_matches(path: &Path, matches: &[Match]) -> Result<()> {
    std::fs::write(path, format_matches(matches)).map_err(|e| Error::io(path, e))
}

pub fn parse_matches(text: &str, name: &str) -> Result<Vec<Match>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = t
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(name, i + 1, "expected numbers `ax ay bx by distance`"))?;
        if v.len() != 5 || v.iter().any(|x| !x.is_finite()) || v[4] < 0.0 {
            return Err(Error::parse(name, i + 1, "expected 5 finite values `ax ay bx by distance`"));
        }
        out.push(Match {
            a: (v[0], v[1]),
            b: (v[2], v[3]),
            distance: v[4],
            view_pair: (0, 0),
        });
    }
    Ok(out)
}

pub fn read_matches(path: &Path) -> Result<Vec<Match>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matches(&text, &path.display().to_string())
}
