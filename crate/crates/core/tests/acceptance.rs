//! Acceptance criteria, one line each. Runs as its own binary
//! (`harness = false`) so every line is printed regardless of outcome.

mod common;

use affreg::affine_sim::{
    asift_tilts, average_differ, classify_affine_pair, max_affine, pose_matrix, simulate_tilt,
    AffineOrdering, AffinePose, SamplingSets,
};
use affreg::bench::{baseline_of, run_benchmark, BenchConfig, DatasetKind};
use affreg::geometry::{epsilon_for, estimate_h_ransac, RansacParams};
use affreg::imaging::write_pgm;
use affreg::matching::{knn_match, knn_match_base, match_view_sets};
use affreg::pipeline::{view_features, PipelineConfig, RegionContext};
use affreg::affine_sim::simulate_views;
use affreg::synth::dead_leaves;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{PI, SQRT_2};
use std::process::{Command, ExitCode};
use std::time::Instant;

type Outcome = Result<String, String>;

fn close(x: f64, want: f64, tol: f64) -> bool {
    (x - want).abs() <= tol
}

fn c1_constants() -> Outcome {
    let s = SamplingSets::standard();
    let ma = max_affine(&s.reducing, &s.enlarging).map_err(|e| e.to_string())?;
    let ad = average_differ(&s.enlarging, &s.reducing, 4.0).map_err(|e| e.to_string())?;
    let asift = asift_tilts();
    let ma_asift = max_affine(&[1.0], &asift).map_err(|e| e.to_string())?;
    let ad_asift = average_differ(&asift, &asift, 4.0).map_err(|e| e.to_string())?;
    let want_ad_asift = 3.0 * asift.iter().sum::<f64>() / asift.len() as f64;
    let detail = format!(
        "max_affine {ma}, average_differ {ad:e}, asift max_affine {ma_asift:.12}, asift average_differ {ad_asift:.6}"
    );
    if close(ma, 8.0, 1e-12)
        && close(ad, 0.0, 1e-12)
        && close(ma_asift, 4.0 * SQRT_2, 1e-12)
        && close(ad_asift, want_ad_asift, 1e-12)
        && close(ad_asift, 9.54, 0.01)
    {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c2_simulation_count() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let img = dir.path().join("src.pgm");
    write_pgm(&img, &dead_leaves(128, 128, 4)).map_err(|e| e.to_string())?;
    let out = dir.path().join("views");
    let o = Command::new(env!("CARGO_BIN_EXE_affreg"))
        .args(["simulate", img.to_str().unwrap(), "--enlarging", "--out-dir", out.to_str().unwrap()])
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(String::from_utf8_lossy(&o.stderr).into_owned());
    }
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).map_err(|e| e.to_string())?;
    let ids: Vec<&str> = manifest.lines().map(|l| l.split(' ').next().unwrap_or("")).collect();
    let simulated = ids.iter().filter(|&&i| i != "0").count();
    let identity = ids.iter().filter(|&&i| i == "0").count();
    let pgms = std::fs::read_dir(&out)
        .map_err(|e| e.to_string())?
        .filter(|e| e.as_ref().is_ok_and(|e| e.path().extension().is_some_and(|x| x == "pgm")))
        .count();
    let detail = format!("{simulated} simulated + {identity} identity, {pgms} PGMs");
    if simulated == 18 && identity == 1 && pgms == 19 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c3_mser() -> Outcome {
    common::mser_oracle::run(50).map(|n| format!("{n} regions on 50 images agree with exhaustive labeling"))
}

fn c4_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_det = 0.0f64;
    for _ in 0..1000 {
        let pose = AffinePose::new(
            rng.random_range(0.2..5.0),
            rng.random_range(-PI..PI),
            rng.random_range(1.0..8.0),
            rng.random_range(-PI..PI),
        )
        .unwrap();
        let m = pose_matrix(&pose);
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let want = pose.lambda * pose.lambda * pose.t;
        worst_det = worst_det.max((det - want).abs() / want);
    }
    let mut worst_area = 0.0f64;
    for phi in [0.0, 0.5, 1.2, 2.2] {
        let (ratio, _) = common::invariance_under(&AffinePose::new(1.0, 0.4, 2.0, phi).unwrap());
        worst_area = worst_area.max((ratio / 2.0 - 1.0).abs());
    }
    let mut worst_drift = 0.0f64;
    for _ in 0..50 {
        let pose = AffinePose::new(
            rng.random_range(0.8..1.2),
            rng.random_range(-PI..PI),
            rng.random_range(1.0..2.0),
            rng.random_range(0.0..PI),
        )
        .unwrap();
        worst_drift = worst_drift.max(common::invariance_under(&pose).1);
    }
    let detail = format!(
        "det rel err {worst_det:.1e}, area ratio off det by {:.1}%, relative_position drift {worst_drift:.4}",
        100.0 * worst_area
    );
    if worst_det < 1e-9 && worst_area < 0.10 && worst_drift < 0.05 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c5_geometry() -> Outcome {
    use common::rig::*;
    let resid = worst_rig_residual(1000, 5);
    let (ms, _) = with_outliers(17);
    let p = RansacParams { iterations: 2000, inlier_eps: 2.0, seed: 42 };
    let (h, _) = estimate_h_ransac(&ms, &p).map_err(|e| e.to_string())?;
    let err = rel_fro(&h, &gt_h());
    let eps = epsilon_for(800, 640).map_err(|e| e.to_string())?;
    let formula = 0.003 * (800f64 * 800.0 + 640.0 * 640.0).sqrt();
    let mut detail = format!(
        "epipolar residual {resid:.1e}, ransac rel err {err:.1e} at 50% outliers, epsilon(800x640) {eps:.5}"
    );
    let parts_ok = resid < 1e-8 && err < 1e-3 && close(eps, formula, 1e-12);
    if parts_ok && close(eps, 3.0741, 1e-4) {
        Ok(detail)
    } else {
        if parts_ok {
            detail.push_str(&format!(
                "; expected 3.0741 +- 1e-4, but 0.003*sqrt(800^2+640^2) = {formula:.5}, so the target constant is off by {:.1e}",
                3.0741 - formula
            ));
        }
        Err(detail)
    }
}

fn synthetic_config() -> BenchConfig {
    BenchConfig {
        dataset: Some(DatasetKind::Synthetic),
        synthetic_size: 512,
        seed: 42,
        ..Default::default()
    }
}

fn c6_tilt_series() -> Outcome {
    let cfg = synthetic_config();
    let full = run_benchmark(&cfg).map_err(|e| e.to_string())?;
    let base = run_benchmark(&baseline_of(&cfg)).map_err(|e| e.to_string())?;
    let ts = asift_tilts();
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, t) in ts.iter().enumerate() {
        let (f, b) = (full.rows[i].accuracy, base.rows[i].accuracy);
        parts.push(format!("t={t:.3} {:.1}%/{:.1}%", 100.0 * f, 100.0 * b));
        if *t >= 2.0 - 1e-9 && f <= b {
            ok = false;
        }
    }
    let k = 2;
    ok &= full.rows[k].accuracy > 0.5 && base.rows[k].accuracy < 0.5;
    let detail = format!("pipeline/baseline accuracy: {}", parts.join(", "));
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c7_classification() -> Outcome {
    let mut correct = 0;
    let mut misses = Vec::new();
    for k in 0..20u64 {
        let theta = (20.0 + 30.0 * k as f64 / 19.0).to_radians();
        let phi = (k as f64 * 37.0 % 180.0).to_radians();
        let src = dead_leaves(256, 256, 700 + k);
        let warped = simulate_tilt(&src, 1.0 / theta.cos(), phi, 1).map_err(|e| e.to_string())?.image;
        // alternate which side carries the warp
        let (a, b, want) = if k % 2 == 0 {
            (&src, &warped, AffineOrdering::ALower)
        } else {
            (&warped, &src, AffineOrdering::BLower)
        };
        let got = classify_affine_pair(a, b, 45f64.to_radians()).map_err(|e| e.to_string())?;
        if got.ordering == want {
            correct += 1;
        } else {
            misses.push(format!("theta {:.1}: {:?}", theta.to_degrees(), got.ordering));
        }
    }
    let mut detail = format!("{correct}/20 correct");
    if !misses.is_empty() {
        detail.push_str(&format!(" (missed {})", misses.join(", ")));
    }
    if correct >= 18 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c8_ablation() -> Outcome {
    let a = dead_leaves(256, 256, 8);
    let b = simulate_tilt(&a, 2.0, 0.3, 1).map_err(|e| e.to_string())?.image;
    let mut cfg = PipelineConfig { alpha1: Some(0.0), alpha2: Some(0.0), ..Default::default() };
    cfg.simulate = true;
    let side = |img: &affreg::imaging::GrayImage| {
        let views = simulate_views(img, &cfg.sampling.enlarging, &cfg.sampling.phi_values)?.views;
        let regions = RegionContext::build(img, &cfg)?;
        view_features(&views, img, &regions, &cfg)
    };
    let fa = side(&a).map_err(|e| e.to_string())?;
    let fb = side(&b).map_err(|e| e.to_string())?;
    let with_region = fa.iter().filter(|f| f.descriptor.has_region).count();
    let fused = knn_match(&fa, &fb, 0.8).map_err(|e| e.to_string())?;
    let base = knn_match_base(&fa, &fb, 0.8).map_err(|e| e.to_string())?;
    let pooled_fused = match_view_sets(&fa, &fb, 0.8, true).map_err(|e| e.to_string())?;
    let pooled_base = match_view_sets(&fa, &fb, 0.8, false).map_err(|e| e.to_string())?;
    let same = |x: &[affreg::matching::Match], y: &[affreg::matching::Match]| {
        x.len() == y.len()
            && x.iter().zip(y).all(|(p, q)| {
                p.a == q.a && p.b == q.b && p.view_pair == q.view_pair && p.distance.to_bits() == q.distance.to_bits()
            })
    };
    let detail = format!(
        "{} features ({with_region} inside regions), {} direct and {} pooled matches",
        fa.len(),
        fused.len(),
        pooled_fused.len()
    );
    if with_region > 0 && !fused.is_empty() && same(&fused, &base) && same(&pooled_fused, &pooled_base) {
        Ok(format!("bit-identical; {detail}"))
    } else {
        Err(format!("outputs differ; {detail}"))
    }
}

fn c9_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = BenchConfig { synthetic_size: 256, ..synthetic_config() };
    let cfg_path = dir.path().join("bench.cfg");
    std::fs::write(&cfg_path, cfg.dump()).map_err(|e| e.to_string())?;
    let run = |name: &str| -> Result<Vec<u8>, String> {
        let out = dir.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_affreg"))
            .args(["bench", "--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(String::from_utf8_lossy(&o.stderr).into_owned());
        }
        std::fs::read(out).map_err(|e| e.to_string())
    };
    let (x, y) = (run("a.csv")?, run("b.csv")?);
    let rows = String::from_utf8_lossy(&x).lines().count().saturating_sub(1);
    if x == y && rows > 0 {
        Ok(format!("two runs, {rows} rows, {} identical bytes", x.len()))
    } else {
        Err(format!("csv differs or wrong row count ({rows})"))
    }
}

/// Criteria that cannot pass as written, with the reason. They still run
/// and print FAIL; they do not fail the process.
const KNOWN_UNATTAINABLE: &[(usize, &str)] = &[(
    5,
    "the 800x640 threshold target 3.0741 disagrees with its own formula 0.003*sqrt(w^2+h^2) = 3.07350",
)];

fn main() -> ExitCode {
    let criteria: [(usize, &str, fn() -> Outcome); 9] = [
        (1, "closed-form constants", c1_constants),
        (2, "simulation count", c2_simulation_count),
        (3, "MSER brute-force equivalence", c3_mser),
        (4, "affine invariants", c4_invariants),
        (5, "geometry oracles", c5_geometry),
        (6, "tilt-series trend", c6_tilt_series),
        (7, "classification correctness", c7_classification),
        (8, "fusion ablation identity", c8_ablation),
        (9, "bench determinism", c9_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut unexpected = 0;
    for (n, name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|x| x == &n.to_string()) {
            continue;
        }
        let t0 = Instant::now();
        let r = f();
        let secs = t0.elapsed().as_secs_f64();
        match r {
            Ok(d) => println!("acceptance {n} {name}: PASS ({d}) [{secs:.1}s]"),
            Err(d) => {
                let known = KNOWN_UNATTAINABLE.iter().find(|(k, _)| *k == n);
                match known {
                    Some((_, why)) => println!("acceptance {n} {name}: FAIL ({d}) [{secs:.1}s] known: {why}"),
                    None => {
                        println!("acceptance {n} {name}: FAIL ({d}) [{secs:.1}s]");
                        unexpected += 1;
                    }
                }
            }
        }
    }
    if unexpected > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
