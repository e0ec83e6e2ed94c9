//! Camera rigs and homography fixtures shared by the geometry checks.

use affreg::geometry::{fundamental_from_pose, Homography};
use affreg::matching::Match;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type M3 = [[f64; 3]; 3];

pub fn mul(a: &M3, b: &M3) -> M3 {
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                r[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    r
}

pub fn mv(a: &M3, v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| a[i][0] * v[0] + a[i][1] * v[1] + a[i][2] * v[2])
}

/// Rodrigues rotation from an axis-angle vector.
pub fn rotation(w: [f64; 3]) -> M3 {
    let th = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
    if th == 0.0 {
        return [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    }
    let k = w.map(|x| x / th);
    let kx = [[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]];
    let kx2 = mul(&kx, &kx);
    let (s, c) = th.sin_cos();
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = if i == j { 1.0 } else { 0.0 } + s * kx[i][j] + (1.0 - c) * kx2[i][j];
        }
    }
    r
}

pub fn intrinsics(rng: &mut ChaCha8Rng) -> M3 {
    let f = rng.random_range(300.0..900.0);
    [
        [f, rng.random_range(-1.0..1.0), rng.random_range(200.0..400.0)],
        [0.0, f * rng.random_range(0.9..1.1), rng.random_range(150.0..300.0)],
        [0.0, 0.0, 1.0],
    ]
}

pub fn project(k: &M3, p: [f64; 3]) -> (f64, f64) {
    let x = mv(k, p);
    (x[0] / x[2], x[1] / x[2])
}

/// Largest |xp^T F x| over `n` random rigs with five points each.
pub fn worst_rig_residual(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let k1 = intrinsics(&mut rng);
        let k2 = intrinsics(&mut rng);
        let r = rotation([0, 1, 2].map(|_| rng.random_range(-0.3..0.3)));
        let mut t = [0, 1, 2].map(|_| rng.random_range(-1.0..1.0f64));
        let n = (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt();
        t = t.map(|v| v / n);
        let f = fundamental_from_pose(&k1, &k2, &r, &t).unwrap();
        for _ in 0..5 {
            let p = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(4.0..10.0)];
            let rp = mv(&r, p);
            let x = project(&k1, p);
            let xp = project(&k2, [rp[0] + t[0], rp[1] + t[1], rp[2] + t[2]]);
            worst = worst.max(f.residual(x, xp).abs());
        }
    }
    worst
}

pub fn gt_h() -> Homography {
    Homography::new([[0.9, 0.12, 14.0], [-0.08, 1.05, -6.0], [2e-4, -1e-4, 1.0]]).unwrap()
}

pub fn rel_fro(a: &Homography, b: &Homography) -> f64 {
    let d: f64 = (0..9).map(|k| (a.m[k / 3][k % 3] - b.m[k / 3][k % 3]).powi(2)).sum();
    let n: f64 = b.m.iter().flatten().map(|v| v * v).sum();
    (d / n).sqrt()
}

pub fn grid_matches(h: &Homography, n: usize) -> Vec<Match> {
    (0..n)
        .map(|i| {
            let a = ((i % 5) as f64 * 70.0 + 13.0, (i / 5) as f64 * 55.0 + (i % 3) as f64 * 9.0);
            Match { a, b: h.project(a.0, a.1).unwrap(), distance: 1.0, view_pair: (0, 0) }
        })
        .collect()
}

/// Forty exact correspondences plus as many random ones.
pub fn with_outliers(seed: u64) -> (Vec<Match>, usize) {
    let h = gt_h();
    let mut ms = grid_matches(&h, 40);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let good = ms.len();
    for _ in 0..good {
        ms.push(Match {
            a: (rng.random_range(0.0..400.0), rng.random_range(0.0..400.0)),
            b: (rng.random_range(0.0..400.0), rng.random_range(0.0..400.0)),
            distance: 1.0,
            view_pair: (0, 0),
        });
    }
    (ms, good)
}

