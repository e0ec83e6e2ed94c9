use super::homography::{inv3, mul3};
use crate::{Error, Result};
use nalgebra::Matrix3;

/// Rank-2 fundamental matrix with unit Frobenius norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FundamentalMatrix {
    pub m: [[f64; 3]; 3],
}

fn transpose(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = m[j][i];
        }
    }
    r
}

fn skew(t: &[f64; 3]) -> [[f64; 3]; 3] {
    [[0.0, -t[2], t[1]], [t[2], 0.0, -t[0]], [-t[1], t[0], 0.0]]
}

impl FundamentalMatrix {
    /// Enforce rank 2 by zeroing the smallest singular value, then scale
    /// to unit Frobenius norm with the largest-magnitude entry positive.
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Self> {
        let a = Matrix3::from_fn(|i, j| m[i][j]);
        let svd = a.svd(true, true);
        let (u, vt) = match (svd.u, svd.v_t) {
            (Some(u), Some(vt)) => (u, vt),
            _ => return Err(Error::EstimationFailed("svd did not converge".into())),
        };
        let mut s = svd.singular_values;
        let (mut imin, mut smin) = (0, f64::INFINITY);
        for i in 0..3 {
            if s[i] < smin {
                smin = s[i];
                imin = i;
            }
        }
        s[imin] = 0.0;
        let r = u * Matrix3::from_diagonal(&s) * vt;
        Self::normalized(std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)])))
    }

    /// Scale to unit Frobenius norm with the largest-magnitude entry positive.
    fn normalized(m: [[f64; 3]; 3]) -> Result<Self> {
        let norm = m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::DegeneratePose("fundamental matrix vanishes"));
        }
        let mut out = m.map(|row| row.map(|v| v / norm));
        let big = out.iter().flatten().fold(0.0f64, |b, &v| if v.abs() > b.abs() { v } else { b });
        if big < 0.0 {
            out = out.map(|row| row.map(|v| -v));
        }
        Ok(FundamentalMatrix { m: out })
    }

    pub fn transpose(&self) -> FundamentalMatrix {
        FundamentalMatrix { m: transpose(&self.m) }
    }

    /// `xp^T F x` for pixel points.
    pub fn residual(&self, x: (f64, f64), xp: (f64, f64)) -> f64 {
        let fx = self.line(x);
        xp.0 * fx[0] + xp.1 * fx[1] + fx[2]
    }

    /// Epipolar line `F x` in the second image.
    pub fn line(&self, x: (f64, f64)) -> [f64; 3] {
        let m = &self.m;
        [
            m[0][0] * x.0 + m[0][1] * x.1 + m[0][2],
            m[1][0] * x.0 + m[1][1] * x.1 + m[1][2],
            m[2][0] * x.0 + m[2][1] * x.1 + m[2][2],
        ]
    }
}

/// `Kp^{-T} [t]x R K^{-1}` from the relative pose `x2 = R x1 + t`.
pub fn fundamental_from_pose(
    k: &[[f64; 3]; 3],
    kp: &[[f64; 3]; 3],
    r: &[[f64; 3]; 3],
    t: &[f64; 3],
) -> Result<FundamentalMatrix> {
    let tn = (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt();
    if !(tn > 0.0) || !tn.is_finite() {
        return Err(Error::DegeneratePose("zero baseline"));
    }
    let rrt = mul3(r, &transpose(r));
    for i in 0..3 {
        for j in 0..3 {
            if (rrt[i][j] - if i == j { 1.0 } else { 0.0 }).abs() > 1e-6 {
                return Err(Error::invalid("rotation is not orthonormal"));
            }
        }
    }
    let ki = inv3(k).ok_or_else(|| Error::invalid("intrinsics K are singular"))?;
    let kpi = inv3(kp).ok_or_else(|| Error::invalid("intrinsics K' are singular"))?;
    let f = mul3(&mul3(&mul3(&transpose(&kpi), &skew(t)), r), &ki);
    FundamentalMatrix::normalized(f)
}

/// `(xp^T F x)^2 (1/|(Fx)_12|^2 + 1/|(F^T xp)_12|^2)`; infinite when both
/// epipolar lines are undefined.
pub fn symmetric_epipolar_distance(x: (f64, f64), xp: (f64, f64), f: &FundamentalMatrix) -> f64 {
    let l2 = f.line(x);
    let l1 = f.transpose().line(xp);
    let num = {
        let r = xp.0 * l2[0] + xp.1 * l2[1] + l2[2];
        r * r
    };
    let d2 = l2[0] * l2[0] + l2[1] * l2[1];
    let d1 = l1[0] * l1[0] + l1[1] * l1[1];
    if d1 == 0.0 && d2 == 0.0 {
        return f64::INFINITY;
    }
    if num == 0.0 {
        return 0.0;
    }
    let inv = |d: f64| if d > 0.0 { 1.0 / d } else { f64::INFINITY };
    num * (inv(d2) + inv(d1))
}
