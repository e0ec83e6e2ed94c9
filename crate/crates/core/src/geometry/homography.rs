use nalgebra::{SMatrix, SymmetricEigen};
use crate::matching::Match;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// 3x3 projective map, scaled so `m[2][2] = 1` when that entry is nonzero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography {
    pub m: [[f64; 3]; 3],
}

pub(crate) fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub(crate) fn inv3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let d = det3(m);
    if !d.is_finite() || d == 0.0 {
        return None;
    }
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (i1, i2) = ((j + 1) % 3, (j + 2) % 3);
            let (j1, j2) = ((i + 1) % 3, (i + 2) % 3);
            r[i][j] = (m[i1][j1] * m[i2][j2] - m[i1][j2] * m[i2][j1]) / d;
        }
    }
    Some(r)
}

pub(crate) fn mul3(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    r
}

impl Homography {
    pub fn new(m: [[f64; 3]; 3]) -> Result<Self> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("homography has non-finite entries"));
        }
        let scale = m[2][2];
        let m = if scale != 0.0 { m.map(|r| r.map(|v| v / scale)) } else { m };
        if !(det3(&m).abs() > 1e-12) {
            return Err(Error::invalid("homography is singular"));
        }
        Ok(Homography { m })
    }

    pub fn identity() -> Self {
        Homography { m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] }
    }

    /// Transfer of `(x, y)`; `None` when the point maps to infinity.
    pub fn project(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let m = &self.m;
        let w = m[2][0] * x + m[2][1] * y + m[2][2];
        if w.abs() < 1e-12 {
            return None;
        }
        Some((
            (m[0][0] * x + m[0][1] * y + m[0][2]) / w,
            (m[1][0] * x + m[1][1] * y + m[1][2]) / w,
        ))
    }

    pub fn inverse(&self) -> Result<Homography> {
        Homography::new(inv3(&self.m).ok_or_else(|| Error::invalid("homography is singular"))?)
    }

    pub fn compose(&self, other: &Homography) -> Result<Homography> {
        Homography::new(mul3(&self.m, &other.m))
    }

    /// `max` of forward and backward transfer distances.
    pub fn symmetric_transfer(&self, inv: &Homography, a: (f64, f64), b: (f64, f64)) -> f64 {
        let f = self.project(a.0, a.1).map(|p| (p.0 - b.0).hypot(p.1 - b.1));
        let r = inv.project(b.0, b.1).map(|p| (p.0 - a.0).hypot(p.1 - a.1));
        match (f, r) {
            (Some(f), Some(r)) => f.max(r),
            _ => f64::INFINITY,
        }
    }
}

/// Similarity taking the points to zero mean and mean distance sqrt(2).
fn normalizer(pts: &[(f64, f64)]) -> [[f64; 3]; 3] {
    let n = pts.len() as f64;
    let (cx, cy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let md = pts.iter().map(|p| (p.0 - cx).hypot(p.1 - cy)).sum::<f64>() / n;
    let s = if md > 0.0 { std::f64::consts::SQRT_2 / md } else { 1.0 };
    [[s, 0.0, -s * cx], [0.0, s, -s * cy], [0.0, 0.0, 1.0]]
}

fn apply3(t: &[[f64; 3]; 3], p: (f64, f64)) -> (f64, f64) {
    (t[0][0] * p.0 + t[0][1] * p.1 + t[0][2], t[1][0] * p.0 + t[1][1] * p.1 + t[1][2])
}

/// Normalized DLT over `>= 4` correspondences.
pub fn fit_homography(src: &[(f64, f64)], dst: &[(f64, f64)]) -> Result<Homography> {
    if src.len() != dst.len() || src.len() < 4 {
        return Err(Error::EstimationFailed("need at least 4 correspondences".into()));
    }
    let t1 = normalizer(src);
    let t2 = normalizer(dst);
    let mut ata = [[0.0; 9]; 9];
    for (p, q) in src.iter().zip(dst) {
        let (x, y) = apply3(&t1, *p);
        let (u, v) = apply3(&t2, *q);
        let rows = [
            [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u],
            [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v],
        ];
        for r in &rows {
            for i in 0..9 {
                for j in 0..9 {
                    ata[i][j] += r[i] * r[j];
                }
            }
        }
    }
    let eig = SymmetricEigen::new(SMatrix::<f64, 9, 9>::from_fn(|i, j| ata[i][j]));
    let k = eig.eigenvalues.imin();
    let h: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
    let hn = [[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], h[8]]];
    let t2i = inv3(&t2).ok_or_else(|| Error::EstimationFailed("degenerate target points".into()))?;
    Homography::new(mul3(&mul3(&t2i, &hn), &t1))
        .map_err(|_| Error::EstimationFailed("degenerate configuration".into()))
}

fn collinear(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> bool {
    let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
    let scale = (b.0 - a.0).hypot(b.1 - a.1) * (c.0 - a.0).hypot(c.1 - a.1);
    cross.abs() <= 1e-9 * scale.max(1e-12)
}

fn degenerate(p: &[(f64, f64); 4]) -> bool {
    (0..4).any(|skip| {
        let t: Vec<_> = (0..4).filter(|&i| i != skip).map(|i| p[i]).collect();
        collinear(t[0], t[1], t[2])
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RansacParams {
    pub iterations: usize,
    pub inlier_eps: f64,
    pub seed: u64,
}

fn inliers_of(h: &Homography, matches: &[Match], eps: f64) -> Vec<usize> {
    let Ok(inv) = h.inverse() else { return Vec::new() };
    (0..matches.len())
        .filter(|&i| h.symmetric_transfer(&inv, matches[i].a, matches[i].b) < eps)
        .collect()
}

/// RANSAC over 4-point samples; iteration `i` draws from its own stream of
/// the seeded generator, so the result does not depend on scheduling.
pub fn estimate_h_ransac(matches: &[Match], params: &RansacParams) -> Result<(Homography, Vec<Match>)> {
    let n = matches.len();
    if n < 4 {
        return Err(Error::EstimationFailed(format!("{n} matches, need at least 4")));
    }
    if params.iterations == 0 || !(params.inlier_eps > 0.0) {
        return Err(Error::invalid("ransac needs iterations > 0 and a positive threshold"));
    }
    let best = (0..params.iterations)
        .into_par_iter()
        .filter_map(|it| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(it as u64);
            let mut idx = [0usize; 4];
            for k in 0..4 {
                loop {
                    let c = rng.random_range(0..n);
                    if !idx[..k].contains(&c) {
                        idx[k] = c;
                        break;
                    }
                }
            }
            let src = idx.map(|i| matches[i].a);
            let dst = idx.map(|i| matches[i].b);
            if degenerate(&src) || degenerate(&dst) {
                return None;
            }
            let h = fit_homography(&src, &dst).ok()?;
            let count = inliers_of(&h, matches, params.inlier_eps).len();
            Some((count, it, h))
        })
        .reduce_with(|x, y| {
            if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) {
                y
            } else {
                x
            }
        });
    let Some((count, _, h)) = best else {
        return Err(Error::EstimationFailed("every sample was degenerate".into()));
    };
    if count < 4 {
        return Err(Error::EstimationFailed("no model with 4 or more inliers".into()));
    }
    let idx = inliers_of(&h, matches, params.inlier_eps);
    let src: Vec<_> = idx.iter().map(|&i| matches[i].a).collect();
    let dst: Vec<_> = idx.iter().map(|&i| matches[i].b).collect();
    let (h, idx) = match fit_homography(&src, &dst) {
        Ok(refit) => {
            let ri = inliers_of(&refit, matches, params.inlier_eps);
            if ri.len() >= idx.len() {
                (refit, ri)
            } else {
                (h, idx)
            }
        }
        Err(_) => (h, idx),
    };
    Ok((h, idx.into_iter().map(|i| matches[i]).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt() -> Homography {
        Homography::new([[1.1, 0.05, 3.0], [-0.02, 0.9, -4.0], [1e-4, -2e-4, 1.0]]).unwrap()
    }

    fn rel_err(a: &Homography, b: &Homography) -> f64 {
        let num: f64 = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| (a.m[i][j] - b.m[i][j]).powi(2)).sum();
        let den: f64 = b.m.iter().flatten().map(|v| v * v).sum();
        (num / den).sqrt()
    }

    #[test]
    fn minimal_sample_is_exact() {
        let h = gt();
        let src = [(0.0, 0.0), (100.0, 0.0), (0.0, 80.0), (120.0, 90.0)];
        let dst: Vec<_> = src.iter().map(|p| h.project(p.0, p.1).unwrap()).collect();
        let est = fit_homography(&src, &dst).unwrap();
        assert!(rel_err(&est, &h) < 1e-9);
    }

    #[test]
    fn collinear_detection() {
        assert!(degenerate(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (5.0, 0.0)]));
        assert!(!degenerate(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]));
    }

    #[test]
    fn too_few_matches() {
        let m = Match { a: (0.0, 0.0), b: (0.0, 0.0), distance: 0.0, view_pair: (0, 0) };
        let p = RansacParams { iterations: 10, inlier_eps: 1.0, seed: 1 };
        assert!(matches!(estimate_h_ransac(&[m; 3], &p), Err(Error::EstimationFailed(_))));
    }

    #[test]
    fn inverse_roundtrip() {
        let h = gt();
        let hi = h.inverse().unwrap();
        let (x, y) = h.project(10.0, 20.0).unwrap();
        let (bx, by) = hi.project(x, y).unwrap();
        assert!((bx - 10.0).abs() < 1e-9 && (by - 20.0).abs() < 1e-9);
        assert!(Homography::new([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]]).is_err());
    }
}
