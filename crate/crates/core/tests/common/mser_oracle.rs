//! Exhaustive per-threshold labeling as an independent check of the
//! component-tree MSER.

use affreg::imaging::GrayImage;
use affreg::mser::{mser_segment, stable_regions, MserParams, Polarity};
use affreg::synth::dead_leaves;
use std::collections::BTreeSet;

/// Components of `{v <= level}` as sorted pixel-index lists.
fn components(data: &[u8], w: usize, h: usize, level: i32) -> Vec<Vec<u32>> {
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for start in 0..w * h {
        if seen[start] || data[start] as i32 > level {
            continue;
        }
        let mut comp = vec![];
        let mut queue = std::collections::VecDeque::from([start]);
        seen[start] = true;
        while let Some(p) = queue.pop_front() {
            comp.push(p as u32);
            let (x, y) = (p % w, p / w);
            let mut nb = vec![];
            if x > 0 { nb.push(p - 1); }
            if x + 1 < w { nb.push(p + 1); }
            if y > 0 { nb.push(p - w); }
            if y + 1 < h { nb.push(p + w); }
            for q in nb {
                if !seen[q] && data[q] as i32 <= level {
                    seen[q] = true;
                    queue.push_back(q);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

pub fn check_region(
    img: &GrayImage,
    pixels: &[u32],
    level: u8,
    polarity: Polarity,
    q: f64,
    p: &MserParams,
) -> Result<(), String> {
    let (w, h) = (img.width(), img.height());
    let (data, l): (Vec<u8>, i32) = match polarity {
        Polarity::Dark => (img.data().to_vec(), level as i32),
        Polarity::Light => (img.data().iter().map(|v| 255 - v).collect(), 255 - level as i32),
    };
    let comps = components(&data, w, h, l);
    if !comps.iter().any(|c| c == pixels) {
        return Err(format!("region of {} px is not a component at level {level}", pixels.len()));
    }
    let set: BTreeSet<u32> = pixels.iter().copied().collect();
    let prev = components(&data, w, h, l - p.delta as i32)
        .into_iter()
        .filter(|c| c.iter().all(|x| set.contains(x)))
        .map(|c| c.len())
        .max()
        .unwrap_or(0);
    if prev == 0 {
        return Err("no component at level - delta".into());
    }
    let q_oracle = (pixels.len() - prev) as f64 / prev as f64;
    if (q_oracle - q).abs() >= 1e-12 {
        return Err(format!("q {q} vs oracle {q_oracle}"));
    }
    if q_oracle >= p.max_variation {
        return Err(format!("q {q_oracle} not below {}", p.max_variation));
    }
    if pixels.len() < p.min_area || pixels.len() > p.max_area {
        return Err(format!("area {} outside limits", pixels.len()));
    }
    Ok(())
}

/// Check candidates and the final partition on `n` random 32x32 images.
/// Returns how many regions were checked.
pub fn run(n: u64) -> Result<usize, String> {
    let mut checked = 0;
    for seed in 0..n {
        let img = dead_leaves(32, 32, 1000 + seed);
        let p = MserParams { min_area: 10, ..MserParams::for_image(32, 32) };
        for pol in [Polarity::Dark, Polarity::Light] {
            for c in stable_regions(&img, &p, pol).map_err(|e| e.to_string())? {
                check_region(&img, &c.pixels, c.level, c.polarity, c.variation, &p)
                    .map_err(|e| format!("seed {seed} candidate: {e}"))?;
                checked += 1;
            }
        }
        let map = mser_segment(&img, &p).map_err(|e| e.to_string())?;
        for r in map.regions() {
            let px: Vec<u32> = r.pixels.iter().map(|&(x, y)| y * 32 + x).collect();
            check_region(&img, &px, r.level, r.polarity, r.variation, &p)
                .map_err(|e| format!("seed {seed} region {}: {e}", r.id))?;
            if r.area != px.len() {
                return Err(format!("seed {seed} region {}: area field disagrees", r.id));
            }
            checked += 1;
        }
        for (i, &l) in map.labels().iter().enumerate() {
            if l != 0 {
                let r = map.region(l).ok_or("label without region")?;
                let (x, y) = ((i % 32) as u32, (i / 32) as u32);
                if r.pixels.binary_search_by(|&(px, py)| (py, px).cmp(&(y, x))).is_err() {
                    return Err(format!("seed {seed}: label {l} at ({x},{y}) outside its region"));
                }
            }
        }
    }
    Ok(checked)
}
