use super::fundamental::{symmetric_epipolar_distance, FundamentalMatrix};
use super::homography::Homography;
use crate::matching::Match;
use crate::{Error, Result};
use std::path::Path;

pub const DEFAULT_F_THRESHOLD: f64 = 5e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    pub n_matches: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    /// Homography accuracy (precision of RANSAC inliers) or, for the
    /// epipolar protocol, the epipolar accuracy itself.
    pub secondary: f64,
    pub threshold: f64,
    /// Set when there was nothing to evaluate; rates are then 0.
    pub empty: bool,
}

/// `0.003 sqrt(w^2 + h^2)`.
pub fn epsilon_for(width: usize, height: usize) -> Result<f64> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("image dimensions must be positive"));
    }
    Ok(0.003 * (width as f64).hypot(height as f64))
}

/// Correct when the transfer of `a` lands strictly within `eps` of `b`.
pub fn match_correct_h(m: &Match, h: &Homography, eps: f64) -> bool {
    match h.project(m.a.0, m.a.1) {
        Some(p) => (p.0 - m.b.0).hypot(p.1 - m.b.1) < eps,
        None => false,
    }
}

fn report(n: usize, correct: usize, threshold: f64) -> EvalReport {
    let accuracy = if n == 0 { 0.0 } else { correct as f64 / n as f64 };
    EvalReport {
        n_matches: n,
        n_correct: correct,
        accuracy,
        secondary: 0.0,
        threshold,
        empty: n == 0,
    }
}

pub fn accuracy_h(matches: &[Match], h_gt: &Homography, eps: f64) -> EvalReport {
    let c = matches.iter().filter(|m| match_correct_h(m, h_gt, eps)).count();
    report(matches.len(), c, eps)
}

/// Fraction of `inliers` correct under the ground truth; 0 when empty.
pub fn h_precision(inliers: &[Match], h_gt: &Homography, eps: f64) -> f64 {
    accuracy_h(inliers, h_gt, eps).accuracy
}

/// Epipolar accuracy with both images' coordinates divided by their
/// diagonal before thresholding.
pub fn accuracy_f(
    matches: &[Match],
    f_gt: &FundamentalMatrix,
    threshold: f64,
    size_a: (usize, usize),
    size_b: (usize, usize),
) -> Result<EvalReport> {
    let da = epsilon_for(size_a.0, size_a.1)? / 0.003;
    let db = epsilon_for(size_b.0, size_b.1)? / 0.003;
    // x_pix = S x_n, so the normalized matrix is S_b^T F S_a
    let mut m = f_gt.m;
    for (i, row) in m.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let si = if i < 2 { db } else { 1.0 };
            let sj = if j < 2 { da } else { 1.0 };
            *v *= si * sj;
        }
    }
    let fnorm = FundamentalMatrix { m };
    let c = matches
        .iter()
        .filter(|mt| {
            let x = (mt.a.0 / da, mt.a.1 / da);
            let xp = (mt.b.0 / db, mt.b.1 / db);
            symmetric_epipolar_distance(x, xp, &fnorm) < threshold
        })
        .count();
    let mut r = report(matches.len(), c, threshold);
    r.secondary = r.accuracy;
    Ok(r)
}

fn numbers(text: &str, name: &str) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.split('#').next().unwrap_or("");
        for tok in t.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(name, i + 1, format!("bad number {tok:?}")))?;
            out.push((i + 1, v));
        }
    }
    Ok(out)
}

/// Nine whitespace-separated reals, row-major.
pub fn parse_homography(text: &str, name: &str) -> Result<Homography> {
    let v = numbers(text, name)?;
    if v.len() != 9 {
        let line = v.get(9).map_or(text.lines().count().max(1), |x| x.0);
        return Err(Error::parse(name, line, format!("expected 9 values, found {}", v.len())));
    }
    let mut m = [[0.0; 3]; 3];
    for (k, (_, x)) in v.iter().enumerate() {
        m[k / 3][k % 3] = *x;
    }
    Homography::new(m).map_err(|e| Error::parse(name, 1, e.to_string()))
}

pub fn read_homography(path: &Path) -> Result<Homography> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_homography(&text, &path.display().to_string())
}

/// One camera of a `*_par.txt` file; projection `x ~ K (R X + t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraPose {
    pub name: String,
    pub k: [[f64; 3]; 3],
    pub r: [[f64; 3]; 3],
    pub t: [f64; 3],
}

/// First line: camera count; then `name k11..k33 r11..r33 t1 t2 t3`.
pub fn parse_par(text: &str, name: &str) -> Result<Vec<CameraPose>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let (hl, header) = lines.next().ok_or_else(|| Error::parse(name, 1, "empty camera file"))?;
    let count: usize = header
        .trim()
        .parse()
        .map_err(|_| Error::parse(name, hl + 1, "first line must be the camera count"))?;
    let mut out = Vec::with_capacity(count);
    for (i, line) in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 22 {
            return Err(Error::parse(name, i + 1, format!("expected name and 21 values, found {} fields", toks.len())));
        }
        let v: Vec<f64> = toks[1..]
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(name, i + 1, "bad number"))?;
        let mat = |o: usize| [[v[o], v[o + 1], v[o + 2]], [v[o + 3], v[o + 4], v[o + 5]], [v[o + 6], v[o + 7], v[o + 8]]];
        out.push(CameraPose {
            name: toks[0].to_string(),
            k: mat(0),
            r: mat(9),
            t: [v[18], v[19], v[20]],
        });
    }
    if out.len() != count {
        return Err(Error::parse(name, 1, format!("header declares {count} cameras, found {}", out.len())));
    }
    Ok(out)
}

pub fn read_par(path: &Path) -> Result<Vec<CameraPose>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_par(&text, &path.display().to_string())
}

/// Ground-truth F between two cameras: relative pose `R = R2 R1^T`,
/// `t = t2 - R t1`.
pub fn fundamental_between(c1: &CameraPose, c2: &CameraPose) -> Result<FundamentalMatrix> {
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = (0..3).map(|k| c2.r[i][k] * c1.r[j][k]).sum();
        }
    }
    let mut t = [0.0; 3];
    for i in 0..3 {
        t[i] = c2.t[i] - (0..3).map(|k| r[i][k] * c1.t[k]).sum::<f64>();
    }
    super::fundamental::fundamental_from_pose(&c1.k, &c2.k, &r, &t)
}
