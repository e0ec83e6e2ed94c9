use super::GrayImage;
use crate::error::{Error, Result};

/// Contrast-limited adaptive histogram equalization.
///
/// The image is split into a `tile_rows` x `tile_cols` grid. Each tile
/// histogram is clipped at `clip_limit`; the clipped excess is spread as
/// `excess / 256` per bin in one pass, bins reaching the limit are re-clipped
/// and the integer remainder is dropped. Each tile's clipped CDF scaled by 255
/// (rounded half up) is its gray-level map, and every output pixel blends the
/// maps of the (up to) four tiles whose centers surround it.
pub fn clahe(
    img: &GrayImage,
    tile_rows: usize,
    tile_cols: usize,
    clip_limit: u32,
) -> Result<GrayImage> {
    if tile_rows == 0 || tile_cols == 0 {
        return Err(Error::invalid("tile grid must have at least one tile"));
    }
    if tile_rows > img.height() || tile_cols > img.width() {
        return Err(Error::invalid(format!(
            "tile grid {tile_rows}x{tile_cols} larger than image {}x{}",
            img.width(),
            img.height()
        )));
    }
    if clip_limit < 1 {
        return Err(Error::invalid("clip_limit must be at least 1"));
    }

    let (w, h) = (img.width(), img.height());
    let col_bounds = partition(w, tile_cols);
    let row_bounds = partition(h, tile_rows);

    let mut luts = Vec::with_capacity(tile_rows * tile_cols);
    for r in 0..tile_rows {
        for c in 0..tile_cols {
            let mut hist = [0u32; 256];
            for y in row_bounds[r]..row_bounds[r + 1] {
                let row = &img.data()[y * w..(y + 1) * w];
                for &v in &row[col_bounds[c]..col_bounds[c + 1]] {
                    hist[v as usize] += 1;
                }
            }
            clip_histogram(&mut hist, clip_limit);
            luts.push(equalization_map(&hist));
        }
    }

    let xs = blend_weights(&col_bounds, w);
    let ys = blend_weights(&row_bounds, h);
    let mut out = Vec::with_capacity(w * h);
    for (y, &(r0, r1, wy)) in ys.iter().enumerate() {
        for (x, &(c0, c1, wx)) in xs.iter().enumerate() {
            let v = img.data()[y * w + x] as usize;
            let t = |r: usize, c: usize| luts[r * tile_cols + c][v] as f64;
            let top = (1.0 - wx) * t(r0, c0) + wx * t(r0, c1);
            let bottom = (1.0 - wx) * t(r1, c0) + wx * t(r1, c1);
            let f = (1.0 - wy) * top + wy * bottom;
            out.push((f + 0.5).floor().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::new(w, h, out)
}

/// Tile boundaries `[b0, b1, ..., bn]` with `b0 = 0`, `bn = len`.
fn partition(len: usize, n: usize) -> Vec<usize> {
    (0..=n).map(|i| i * len / n).collect()
}

pub(crate) fn clip_histogram(hist: &mut [u32; 256], clip: u32) {
    let mut excess = 0u64;
    for c in hist.iter_mut() {
        if *c > clip {
            excess += (*c - clip) as u64;
            *c = clip;
        }
    }
    let incr = (excess / 256) as u32;
    if incr == 0 {
        return;
    }
    for c in hist.iter_mut() {
        *c = (*c + incr).min(clip);
    }
}

pub(crate) fn equalization_map(hist: &[u32; 256]) -> [u8; 256] {
    let total: u64 = hist.iter().map(|&c| c as u64).sum();
    let mut lut = [0u8; 256];
    if total == 0 {
        return lut;
    }
    let mut cdf = 0u64;
    for (v, &c) in hist.iter().enumerate() {
        cdf += c as u64;
        // round-half-up of 255 * cdf / total in integer arithmetic
        lut[v] = ((2 * 255 * cdf + total) / (2 * total)) as u8;
    }
    lut
}

/// Per pixel coordinate: the two neighbouring tiles and the weight of the
/// second. Outside the outermost tile centers both tiles coincide.
fn blend_weights(bounds: &[usize], len: usize) -> Vec<(usize, usize, f64)> {
    let n = bounds.len() - 1;
    let centers: Vec<f64> = (0..n)
        .map(|i| (bounds[i] + bounds[i + 1]) as f64 / 2.0)
        .collect();
    (0..len)
        .map(|p| {
            let u = p as f64 + 0.5;
            if u <= centers[0] {
                (0, 0, 0.0)
            } else if u >= centers[n - 1] {
                (n - 1, n - 1, 0.0)
            } else {
                let j = centers.iter().rposition(|&c| c <= u).unwrap();
                let wgt = (u - centers[j]) / (centers[j + 1] - centers[j]);
                (j, j + 1, wgt)
            }
        })
        .collect()
}
