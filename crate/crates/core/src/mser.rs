//! Maximally stable extremal regions from a union-find component tree.

use crate::imaging::GrayImage;
use crate::{Error, Result};
use std::fmt::Write as _;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MserParams {
    pub delta: u8,
    pub max_variation: f64,
    pub min_area: usize,
    pub max_area: usize,
    pub overlap_merge_threshold: f64,
}

impl MserParams {
    /// Defaults with `max_area` at 14.4% of the image.
    pub fn for_image(width: usize, height: usize) -> Self {
        MserParams {
            delta: 5,
            max_variation: 0.25,
            min_area: 60,
            max_area: ((0.144 * (width * height) as f64).floor() as usize).max(61),
            overlap_merge_threshold: 0.6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta < 1 {
            return Err(Error::invalid("mser delta must be >= 1"));
        }
        if !(self.max_variation > 0.0) {
            return Err(Error::invalid("mser max_variation must be positive"));
        }
        if self.min_area == 0 || self.min_area >= self.max_area {
            return Err(Error::invalid("mser areas must satisfy 0 < min_area < max_area"));
        }
        if !(self.overlap_merge_threshold > 0.0 && self.overlap_merge_threshold <= 1.0) {
            return Err(Error::invalid("overlap merge threshold must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Polarity {
    /// Component of `{I <= level}`.
    Dark,
    /// Component of `{I >= level}`.
    Light,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BBox {
    pub min_x: u32,
    pub min_y: u32,
    pub max_x: u32,
    pub max_y: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub id: u32,
    /// `(x, y)` pixels, row-major order.
    pub pixels: Vec<(u32, u32)>,
    pub area: usize,
    pub bbox: BBox,
    pub mean: f64,
    /// Threshold at which the region is a component, in original intensities.
    pub level: u8,
    pub polarity: Polarity,
    /// Area change rate at `level`.
    pub variation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionMap {
    width: usize,
    height: usize,
    label: Vec<u32>,
    regions: Vec<Region>,
}

impl RegionMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.label
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn region(&self, id: u32) -> Option<&Region> {
        if id == 0 {
            return None;
        }
        self.regions.get(id as usize - 1)
    }

    /// Region containing the pixel nearest to `(x, y)`.
    pub fn region_at(&self, x: f64, y: f64) -> Result<Option<u32>> {
        let (xr, yr) = (x.round(), y.round());
        if !(xr >= 0.0 && yr >= 0.0 && xr < self.width as f64 && yr < self.height as f64) {
            return Err(Error::invalid(format!(
                "point ({x}, {y}) outside {}x{} image",
                self.width, self.height
            )));
        }
        let l = self.label[yr as usize * self.width + xr as usize];
        Ok((l != 0).then_some(l))
    }

    /// Label raster with ids folded into 1..=255; 0 stays unlabeled.
    pub fn label_image(&self) -> GrayImage {
        let data = self
            .label
            .iter()
            .map(|&l| if l == 0 { 0 } else { ((l - 1) % 255 + 1) as u8 })
            .collect();
        GrayImage::new(self.width, self.height, data).expect("label buffer matches size")
    }

    /// `region_id area min_x min_y max_x max_y` per line.
    pub fn sidecar(&self) -> String {
        let mut s = String::new();
        for r in &self.regions {
            let b = r.bbox;
            writeln!(s, "{} {} {} {} {} {}", r.id, r.area, b.min_x, b.min_y, b.max_x, b.max_y)
                .unwrap();
        }
        s
    }
}

pub fn region_at(map: &RegionMap, x: f64, y: f64) -> Result<Option<u32>> {
    map.region_at(x, y)
}

/// An extremal region found stable on one polarity, before overlap
/// resolution.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub pixels: Vec<u32>,
    pub level: u8,
    pub polarity: Polarity,
    pub variation: f64,
}

const NONE: u32 = u32::MAX;

struct Node {
    created: u8,
    last: u8,
    parent: u32,
    children: Vec<u32>,
    /// Area at levels `created..=last`.
    areas: Vec<u32>,
    seed: u32,
}

impl Node {
    fn area(&self, l: u8) -> u32 {
        self.areas[(l - self.created) as usize]
    }
}

struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// Component tree of the lower level sets of `data`.
    fn build(data: &[u8], w: usize, h: usize) -> Tree {
        let n = w * h;
        let mut buckets = [0usize; 257];
        for &v in data {
            buckets[v as usize + 1] += 1;
        }
        for i in 0..256 {
            buckets[i + 1] += buckets[i];
        }
        let mut order = vec![0u32; n];
        let mut fill = buckets;
        for (i, &v) in data.iter().enumerate() {
            order[fill[v as usize]] = i as u32;
            fill[v as usize] += 1;
        }

        let mut parent = vec![NONE; n];
        let mut size = vec![0u32; n];
        let mut lists: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut stamp = vec![u16::MAX; n];
        let mut nodes: Vec<Node> = Vec::new();
        let mut alive: Vec<u32> = Vec::new();

        fn find(parent: &mut [u32], mut x: u32) -> u32 {
            let mut r = x;
            while parent[r as usize] != r {
                r = parent[r as usize];
            }
            while parent[x as usize] != r {
                let nx = parent[x as usize];
                parent[x as usize] = r;
                x = nx;
            }
            r
        }

        for v in 0..256usize {
            let level = &order[buckets[v]..buckets[v + 1]];
            if level.is_empty() {
                for &id in &alive {
                    let nd = &nodes[id as usize];
                    let a = size[find(&mut parent, nd.seed) as usize];
                    nodes[id as usize].areas.push(a);
                }
                continue;
            }
            for &p in level {
                parent[p as usize] = p;
                size[p as usize] = 1;
                let (x, y) = (p as usize % w, p as usize / w);
                let mut nbrs = [NONE; 4];
                if x > 0 {
                    nbrs[0] = p - 1;
                }
                if x + 1 < w {
                    nbrs[1] = p + 1;
                }
                if y > 0 {
                    nbrs[2] = p - w as u32;
                }
                if y + 1 < h {
                    nbrs[3] = p + w as u32;
                }
                for q in nbrs {
                    if q == NONE || parent[q as usize] == NONE {
                        continue;
                    }
                    let ra = find(&mut parent, p);
                    let rb = find(&mut parent, q);
                    if ra == rb {
                        continue;
                    }
                    let (big, small) = if size[ra as usize] >= size[rb as usize] {
                        (ra, rb)
                    } else {
                        (rb, ra)
                    };
                    parent[small as usize] = big;
                    size[big as usize] += size[small as usize];
                    let moved = std::mem::take(&mut lists[small as usize]);
                    lists[big as usize].extend(moved);
                }
            }
            let mut touched = Vec::new();
            for &p in level {
                let r = find(&mut parent, p);
                if stamp[r as usize] != v as u16 {
                    stamp[r as usize] = v as u16;
                    touched.push((r, p));
                }
            }
            let first_new = nodes.len() as u32;
            for (r, first) in touched {
                let list = std::mem::take(&mut lists[r as usize]);
                let id = match list.len() {
                    1 => list[0],
                    0 => {
                        nodes.push(Node {
                            created: v as u8,
                            last: 255,
                            parent: NONE,
                            children: Vec::new(),
                            areas: Vec::new(),
                            seed: first,
                        });
                        (nodes.len() - 1) as u32
                    }
                    _ => {
                        let id = nodes.len() as u32;
                        let mut seed = NONE;
                        let mut best = 0;
                        for &c in &list {
                            let cn = &mut nodes[c as usize];
                            cn.last = (v - 1) as u8;
                            cn.parent = id;
                            let a = *cn.areas.last().unwrap();
                            if a > best {
                                best = a;
                                seed = cn.seed;
                            }
                        }
                        nodes.push(Node {
                            created: v as u8,
                            last: 255,
                            parent: NONE,
                            children: list,
                            areas: Vec::new(),
                            seed,
                        });
                        id
                    }
                };
                lists[r as usize] = vec![id];
            }
            alive.retain(|&id| nodes[id as usize].parent == NONE);
            alive.extend(first_new..nodes.len() as u32);
            for &id in &alive {
                let s = nodes[id as usize].seed;
                let a = size[find(&mut parent, s) as usize];
                nodes[id as usize].areas.push(a);
            }
        }
        Tree { nodes }
    }

    /// Largest component at level `l` inside node `id`'s subtree.
    fn largest_at(&self, id: u32, l: i32) -> u32 {
        if l < 0 {
            return 0;
        }
        let nd = &self.nodes[id as usize];
        if l >= nd.created as i32 {
            return nd.area(l as u8);
        }
        nd.children.iter().map(|&c| self.largest_at(c, l)).max().unwrap_or(0)
    }

    fn variation(&self, id: u32, i: u8, delta: u8) -> f64 {
        let a = self.nodes[id as usize].area(i) as f64;
        let prev = self.largest_at(id, i as i32 - delta as i32) as f64;
        if prev == 0.0 {
            f64::INFINITY
        } else {
            (a - prev) / prev
        }
    }
}

fn flood(data: &[u8], w: usize, h: usize, seed: u32, level: u8) -> Vec<u32> {
    let mut seen = vec![false; w * h];
    let mut stack = vec![seed];
    seen[seed as usize] = true;
    let mut out = Vec::new();
    while let Some(p) = stack.pop() {
        out.push(p);
        let (x, y) = (p as usize % w, p as usize / w);
        let mut push = |q: usize| {
            if !seen[q] && data[q] <= level {
                seen[q] = true;
                stack.push(q as u32);
            }
        };
        if x > 0 {
            push(p as usize - 1);
        }
        if x + 1 < w {
            push(p as usize + 1);
        }
        if y > 0 {
            push(p as usize - w);
        }
        if y + 1 < h {
            push(p as usize + w);
        }
    }
    out.sort_unstable();
    out
}

/// Stable extremal regions of one polarity. Levels are reported in the
/// intensities of `img` (not the inverted copy).
pub fn stable_regions(img: &GrayImage, params: &MserParams, polarity: Polarity) -> Result<Vec<Candidate>> {
    params.validate()?;
    let (w, h) = (img.width(), img.height());
    let data: Vec<u8> = match polarity {
        Polarity::Dark => img.data().to_vec(),
        Polarity::Light => img.data().iter().map(|&v| 255 - v).collect(),
    };
    let tree = Tree::build(&data, w, h);
    let delta = params.delta;
    let mut out = Vec::new();
    for (id, nd) in tree.nodes.iter().enumerate() {
        let id = id as u32;
        let qs: Vec<f64> = (nd.created..=nd.last).map(|i| tree.variation(id, i, delta)).collect();
        let q_before = nd
            .children
            .iter()
            .max_by_key(|&&c| tree.nodes[c as usize].areas.last().copied().unwrap_or(0))
            .map(|&c| {
                let cn = &tree.nodes[c as usize];
                tree.variation(c, cn.last, delta)
            })
            .unwrap_or(f64::INFINITY);
        let q_after = if nd.parent == NONE {
            f64::INFINITY
        } else {
            tree.variation(nd.parent, nd.last.saturating_add(1), delta)
        };
        let mut prev_area = 0u32;
        let mut prev_taken = false;
        for (k, &q) in qs.iter().enumerate() {
            let i = nd.created + k as u8;
            let area = nd.areas[k];
            let same_set = k > 0 && area == prev_area;
            prev_area = area;
            let qp = if k == 0 { q_before } else { qs[k - 1] };
            let qn = if k + 1 < qs.len() { qs[k + 1] } else { q_after };
            let stable = q < params.max_variation
                && q <= qp
                && q <= qn
                && (area as usize) >= params.min_area
                && (area as usize) <= params.max_area;
            if same_set && prev_taken {
                continue;
            }
            prev_taken = stable;
            if stable {
                let pixels = flood(&data, w, h, nd.seed, i);
                debug_assert_eq!(pixels.len(), area as usize);
                let level = match polarity {
                    Polarity::Dark => i,
                    Polarity::Light => 255 - i,
                };
                out.push(Candidate {
                    pixels,
                    level,
                    polarity,
                    variation: q,
                });
            }
        }
    }
    Ok(out)
}

fn iou(a: &[u32], b: &[u32]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    inter as f64 / (a.len() + b.len() - inter) as f64
}

/// Segment both polarities, merge heavily overlapping regions into the
/// larger one, then keep a disjoint set, largest first.
pub fn mser_segment(img: &GrayImage, params: &MserParams) -> Result<RegionMap> {
    let (w, h) = (img.width(), img.height());
    let mut cands = stable_regions(img, params, Polarity::Dark)?;
    cands.extend(stable_regions(img, params, Polarity::Light)?);
    cands.sort_by(|a, b| {
        b.pixels
            .len()
            .cmp(&a.pixels.len())
            .then(a.pixels[0].cmp(&b.pixels[0]))
            .then((a.polarity == Polarity::Light).cmp(&(b.polarity == Polarity::Light)))
    });

    // a region absorbed by a larger one above the overlap threshold is gone
    let mut absorbed = vec![false; cands.len()];
    for i in 0..cands.len() {
        if absorbed[i] {
            continue;
        }
        for j in i + 1..cands.len() {
            if !absorbed[j] && iou(&cands[i].pixels, &cands[j].pixels) > params.overlap_merge_threshold {
                absorbed[j] = true;
            }
        }
    }

    let mut label = vec![0u32; w * h];
    let mut regions = Vec::new();
    for (c, _) in cands.iter().zip(&absorbed).filter(|(_, &a)| !a) {
        if c.pixels.iter().any(|&p| label[p as usize] != 0) {
            continue;
        }
        let id = regions.len() as u32 + 1;
        let mut bbox = BBox {
            min_x: u32::MAX,
            min_y: u32::MAX,
            max_x: 0,
            max_y: 0,
        };
        let mut sum = 0u64;
        let mut pixels = Vec::with_capacity(c.pixels.len());
        for &p in &c.pixels {
            label[p as usize] = id;
            let (x, y) = (p % w as u32, p / w as u32);
            bbox.min_x = bbox.min_x.min(x);
            bbox.min_y = bbox.min_y.min(y);
            bbox.max_x = bbox.max_x.max(x);
            bbox.max_y = bbox.max_y.max(y);
            sum += img.data()[p as usize] as u64;
            pixels.push((x, y));
        }
        regions.push(Region {
            id,
            area: pixels.len(),
            pixels,
            bbox,
            mean: sum as f64 / c.pixels.len() as f64,
            level: c.level,
            polarity: c.polarity,
            variation: c.variation,
        });
    }
    Ok(RegionMap {
        width: w,
        height: h,
        label,
        regions,
    })
}
