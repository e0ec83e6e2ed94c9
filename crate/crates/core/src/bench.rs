//! Benchmark configuration, dataset discovery and CSV reports.

use crate::affine_sim::{asift_tilts, simulate_tilt};
use crate::geometry::{
    accuracy_f, accuracy_h, epsilon_for, estimate_h_ransac, fundamental_between, h_precision,
    read_homography, read_par, Homography, RansacParams, DEFAULT_F_THRESHOLD,
};
use crate::imaging::{read_pnm, EnhanceParams, GrayImage};
use crate::mser::MserParams;
use crate::pipeline::{match_pipeline, PipelineConfig};
use crate::region_desc::NormalizationMode;
use crate::synth::dead_leaves;
use crate::textfmt::fmt_sig;
use crate::{Error, Result};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    Oxford,
    Hpatches,
    PosePar,
    Synthetic,
}

impl DatasetKind {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetKind::Oxford => "oxford",
            DatasetKind::Hpatches => "hpatches",
            DatasetKind::PosePar => "pose_par",
            DatasetKind::Synthetic => "synthetic",
        }
    }
}

impl std::fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oxford" => Ok(DatasetKind::Oxford),
            "hpatches" => Ok(DatasetKind::Hpatches),
            "pose_par" | "pose" => Ok(DatasetKind::PosePar),
            "synthetic" => Ok(DatasetKind::Synthetic),
            other => Err(Error::Config(format!("unknown dataset kind '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    /// `None` detects the kind from `path`.
    pub dataset: Option<DatasetKind>,
    /// Dataset directory, or the source image of a synthetic series. A
    /// synthetic run without a path uses a generated dead-leaves texture.
    pub path: Option<PathBuf>,
    pub pipeline: PipelineConfig,
    pub seed: u64,
    /// Pairs evaluated concurrently; 0 uses every core.
    pub jobs: usize,
    pub ransac_iterations: usize,
    pub f_threshold: f64,
    /// Pose datasets: match frame `i` with frame `i + frame_interval`.
    pub frame_interval: usize,
    /// Side of the generated synthetic source.
    pub synthetic_size: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            dataset: None,
            path: None,
            pipeline: PipelineConfig::default(),
            seed: 42,
            jobs: 0,
            ransac_iterations: RansacParams::default().iterations,
            f_threshold: DEFAULT_F_THRESHOLD,
            frame_interval: 1,
            synthetic_size: 512,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got '{v}'"))),
    }
}

fn opt_num(key: &str, v: &str) -> Result<Option<f64>> {
    if v == "auto" {
        Ok(None)
    } else {
        parse_num(key, v).map(Some)
    }
}

const ENHANCE_KEYS: [&str; 6] = [
    "enhance.tile_rows",
    "enhance.tile_cols",
    "enhance.clip_limit",
    "enhance.window",
    "enhance.delta_d",
    "enhance.delta_r",
];

const MSER_KEYS: [&str; 5] = [
    "mser.delta",
    "mser.max_variation",
    "mser.min_area",
    "mser.max_area",
    "mser.merge_overlap",
];

impl BenchConfig {
    /// Flat `key = value` text. `#` starts a comment line.
    pub fn parse(text: &str, name: &str) -> Result<Self> {
        let mut cfg = BenchConfig::default();
        let mut enh: Vec<Option<String>> = vec![None; ENHANCE_KEYS.len()];
        let mut ms: Vec<Option<String>> = vec![None; MSER_KEYS.len()];
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{name}: line {}: expected 'key = value'", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            let at = |e: Error| match e {
                Error::Config(m) => Error::Config(format!("{name}: line {}: {m}", i + 1)),
                other => Error::Config(format!("{name}: line {}: {other}", i + 1)),
            };
            if let Some(j) = ENHANCE_KEYS.iter().position(|x| *x == k) {
                enh[j] = (v != "auto").then(|| v.to_string());
                continue;
            }
            if let Some(j) = MSER_KEYS.iter().position(|x| *x == k) {
                ms[j] = (v != "auto").then(|| v.to_string());
                continue;
            }
            cfg.set(k, v).map_err(at)?;
        }
        let whole = |e: Error| Error::Config(format!("{name}: {e}"));
        cfg.pipeline.enhance = resolve_enhance(&enh).map_err(whole)?;
        cfg.pipeline.mser = resolve_mser(&ms).map_err(whole)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Set one scalar key.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let p = &mut self.pipeline;
        let d = &mut p.detector;
        match key {
            "dataset" => self.dataset = if v == "auto" { None } else { Some(v.parse()?) },
            "path" => self.path = (!v.is_empty()).then(|| PathBuf::from(v)),
            "ratio" => p.ratio = parse_num(key, v)?,
            "alpha1" => p.alpha1 = opt_num(key, v)?,
            "alpha2" => p.alpha2 = opt_num(key, v)?,
            "simulate" => p.simulate = parse_bool(key, v)?,
            "theta_deg" => p.theta = parse_num::<f64>(key, v)?.to_radians(),
            "normalization" => {
                p.normalization = match v {
                    "moment" => NormalizationMode::Moment,
                    "bbox" => NormalizationMode::BoundingBox,
                    _ => return Err(Error::Config(format!("{key}: expected moment or bbox, got '{v}'"))),
                }
            }
            "detector.octaves" => d.octaves = parse_num(key, v)?,
            "detector.scales_per_octave" => d.scales_per_octave = parse_num(key, v)?,
            "detector.sigma0" => d.sigma0 = parse_num(key, v)?,
            "detector.contrast_threshold" => d.contrast_threshold = parse_num(key, v)?,
            "detector.edge_ratio" => d.edge_ratio = parse_num(key, v)?,
            "detector.max_keypoints" => d.max_keypoints = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "jobs" => self.jobs = parse_num(key, v)?,
            "ransac.iterations" => self.ransac_iterations = parse_num(key, v)?,
            "f_threshold" => self.f_threshold = parse_num(key, v)?,
            "frame_interval" => self.frame_interval = parse_num(key, v)?,
            "synthetic.size" => self.synthetic_size = parse_num(key, v)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.pipeline;
        if !(p.ratio > 0.0 && p.ratio < 1.0) {
            return Err(Error::Config("ratio must lie in (0, 1)".into()));
        }
        p.weights()?;
        p.detector.validate()?;
        if let Some(e) = &p.enhance {
            e.validate()?;
        }
        if let Some(m) = &p.mser {
            m.validate()?;
        }
        if !(p.theta > 0.0 && p.theta < std::f64::consts::FRAC_PI_2) {
            return Err(Error::Config("theta_deg must lie in (0, 90)".into()));
        }
        if self.ransac_iterations == 0 || self.frame_interval == 0 {
            return Err(Error::Config("ransac.iterations and frame_interval must be positive".into()));
        }
        if !(self.f_threshold > 0.0) {
            return Err(Error::Config("f_threshold must be positive".into()));
        }
        if self.synthetic_size < 64 {
            return Err(Error::Config("synthetic.size must be at least 64".into()));
        }
        if let Some(path) = &self.path {
            if !path.exists() {
                return Err(Error::Config(format!("{} does not exist", path.display())));
            }
        }
        Ok(())
    }

    /// Every key with its current value; size-dependent defaults print as
    /// `auto`.
    pub fn dump(&self) -> String {
        let p = &self.pipeline;
        let d = &p.detector;
        let auto = |v: Option<f64>| v.map_or("auto".to_string(), |x| x.to_string());
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("dataset", self.dataset.map_or("auto".into(), |k| k.to_string()));
        kv("path", self.path.as_ref().map_or(String::new(), |p| p.display().to_string()));
        kv("ratio", p.ratio.to_string());
        kv("alpha1", auto(p.alpha1));
        kv("alpha2", auto(p.alpha2));
        kv("simulate", p.simulate.to_string());
        kv("theta_deg", fmt_sig(p.theta.to_degrees(), 9));
        kv(
            "normalization",
            match p.normalization {
                NormalizationMode::Moment => "moment",
                NormalizationMode::BoundingBox => "bbox",
            }
            .into(),
        );
        kv("detector.octaves", d.octaves.to_string());
        kv("detector.scales_per_octave", d.scales_per_octave.to_string());
        kv("detector.sigma0", d.sigma0.to_string());
        kv("detector.contrast_threshold", d.contrast_threshold.to_string());
        kv("detector.edge_ratio", d.edge_ratio.to_string());
        kv("detector.max_keypoints", d.max_keypoints.to_string());
        let e = p.enhance.map(|e| {
            [
                e.tile_rows.to_string(),
                e.tile_cols.to_string(),
                e.clip_limit.to_string(),
                e.bilateral_window.to_string(),
                e.delta_d.to_string(),
                e.delta_r.to_string(),
            ]
        });
        for (i, k) in ENHANCE_KEYS.iter().enumerate() {
            kv(k, e.as_ref().map_or("auto".into(), |v| v[i].clone()));
        }
        let m = p.mser.map(|m| {
            [
                m.delta.to_string(),
                m.max_variation.to_string(),
                m.min_area.to_string(),
                m.max_area.to_string(),
                m.overlap_merge_threshold.to_string(),
            ]
        });
        for (i, k) in MSER_KEYS.iter().enumerate() {
            kv(k, m.as_ref().map_or("auto".into(), |v| v[i].clone()));
        }
        kv("seed", self.seed.to_string());
        kv("jobs", self.jobs.to_string());
        kv("ransac.iterations", self.ransac_iterations.to_string());
        kv("f_threshold", self.f_threshold.to_string());
        kv("frame_interval", self.frame_interval.to_string());
        kv("synthetic.size", self.synthetic_size.to_string());
        let mut out = String::from(
            "# affreg bench configuration\n\
             # auto: enhance.* = 8x8 tiles, clip 4x mean bin count, window 9, delta_d 3, delta_r 25\n\
             # auto: mser.* = delta 5, max_variation 0.25, min_area 60, max_area 14.4% of image, merge 0.6\n\
             # auto: alpha1/alpha2 = descriptor family default\n",
        );
        out.push_str(&s);
        out
    }
}

/// The enhance keys are all-or-nothing since their defaults depend on the
/// image size.
fn resolve_enhance(v: &[Option<String>]) -> Result<Option<EnhanceParams>> {
    if v.iter().all(Option::is_none) {
        return Ok(None);
    }
    if v.iter().any(Option::is_none) {
        return Err(Error::Config("enhance.* keys must be all auto or all set".into()));
    }
    let g = |i: usize| v[i].as_deref().unwrap();
    Ok(Some(EnhanceParams {
        tile_rows: parse_num(ENHANCE_KEYS[0], g(0))?,
        tile_cols: parse_num(ENHANCE_KEYS[1], g(1))?,
        clip_limit: parse_num(ENHANCE_KEYS[2], g(2))?,
        bilateral_window: parse_num(ENHANCE_KEYS[3], g(3))?,
        delta_d: parse_num(ENHANCE_KEYS[4], g(4))?,
        delta_r: parse_num(ENHANCE_KEYS[5], g(5))?,
    }))
}

fn resolve_mser(v: &[Option<String>]) -> Result<Option<MserParams>> {
    if v.iter().all(Option::is_none) {
        return Ok(None);
    }
    if v.iter().any(Option::is_none) {
        return Err(Error::Config("mser.* keys must be all auto or all set".into()));
    }
    let g = |i: usize| v[i].as_deref().unwrap();
    Ok(Some(MserParams {
        delta: parse_num(MSER_KEYS[0], g(0))?,
        max_variation: parse_num(MSER_KEYS[1], g(1))?,
        min_area: parse_num(MSER_KEYS[2], g(2))?,
        max_area: parse_num(MSER_KEYS[3], g(3))?,
        overlap_merge_threshold: parse_num(MSER_KEYS[4], g(4))?,
    }))
}

/// Guess the dataset layout from the path.
pub fn detect_kind(path: Option<&Path>) -> Result<DatasetKind> {
    let Some(path) = path else {
        return Ok(DatasetKind::Synthetic);
    };
    if path.is_file() {
        return Ok(DatasetKind::Synthetic);
    }
    let names: Vec<String> = std::fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    if names.iter().any(|n| n.starts_with("H1to2p") || n.starts_with("H1to")) {
        Ok(DatasetKind::Oxford)
    } else if names.iter().any(|n| n.starts_with("H_1_")) {
        Ok(DatasetKind::Hpatches)
    } else if names.iter().any(|n| n.ends_with("_par.txt")) {
        Ok(DatasetKind::PosePar)
    } else {
        Err(Error::Config(format!(
            "{}: cannot tell the dataset layout; pass --dataset",
            path.display()
        )))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub pair: String,
    pub n_matches: usize,
    pub accuracy: f64,
    /// Homography accuracy, or epipolar accuracy for pose datasets.
    pub secondary: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Pairs left out, with the reason.
    pub skipped: Vec<String>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("pair,n_matches,accuracy,h_accuracy_or_f_accuracy,threshold\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:.6},{:.6},{}",
                r.pair,
                r.n_matches,
                r.accuracy,
                r.secondary,
                fmt_sig(r.threshold, 6)
            );
        }
        s
    }
}

enum Truth {
    H(Homography),
    Pose(crate::geometry::CameraPose, crate::geometry::CameraPose),
}

struct Job {
    pair: String,
    a: PathOrImage,
    b: PathOrImage,
    truth: Option<Truth>,
    missing: String,
}

enum PathOrImage {
    Path(PathBuf),
    Image(GrayImage),
}

impl PathOrImage {
    fn load(&self) -> Result<GrayImage> {
        match self {
            PathOrImage::Path(p) => read_pnm(p),
            PathOrImage::Image(i) => Ok(i.clone()),
        }
    }
}

fn first_existing(dir: &Path, stems: &[String]) -> Option<PathBuf> {
    stems.iter().map(|s| dir.join(s)).find(|p| p.is_file())
}

fn homography_jobs(dir: &Path, kind: DatasetKind) -> Result<Vec<Job>> {
    let img = |i: usize| -> Vec<String> {
        match kind {
            DatasetKind::Oxford => vec![format!("img{i}.ppm"), format!("img{i}.pgm")],
            _ => vec![format!("{i}.ppm"), format!("{i}.pgm")],
        }
    };
    let a = first_existing(dir, &img(1))
        .ok_or_else(|| Error::Config(format!("{}: reference image 1 not found", dir.display())))?;
    let mut jobs = Vec::new();
    for n in 2..=6 {
        let Some(b) = first_existing(dir, &img(n)) else {
            continue;
        };
        let hname = match kind {
            DatasetKind::Oxford => format!("H1to{n}p"),
            _ => format!("H_1_{n}"),
        };
        let hpath = dir.join(&hname);
        let truth = if hpath.is_file() { Some(Truth::H(read_homography(&hpath)?)) } else { None };
        jobs.push(Job {
            pair: format!("1-{n}"),
            a: PathOrImage::Path(a.clone()),
            b: PathOrImage::Path(b),
            truth,
            missing: format!("1-{n}: ground truth {hname} missing"),
        });
    }
    Ok(jobs)
}

/// Middlebury images usually ship as PNG; a PGM/PPM sibling with the same
/// stem is accepted in its place.
fn pose_image(dir: &Path, name: &str) -> Option<PathBuf> {
    let p = dir.join(name);
    let is_pnm = |p: &Path| matches!(p.extension().and_then(|e| e.to_str()), Some("pgm" | "ppm"));
    if p.is_file() && is_pnm(&p) {
        return Some(p);
    }
    ["pgm", "ppm"].iter().map(|e| p.with_extension(e)).find(|q| q.is_file())
}

fn pose_jobs(dir: &Path, interval: usize) -> Result<(Vec<Job>, Vec<String>)> {
    let mut pars: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with("_par.txt"))
        .collect();
    pars.sort();
    let par = pars
        .first()
        .ok_or_else(|| Error::Config(format!("{}: no *_par.txt file", dir.display())))?;
    let cams = read_par(par)?;
    let mut jobs = Vec::new();
    let mut skipped = Vec::new();
    for i in 0..cams.len().saturating_sub(interval) {
        let (c1, c2) = (&cams[i], &cams[i + interval]);
        let pair = format!("{}-{}", c1.name, c2.name);
        match (pose_image(dir, &c1.name), pose_image(dir, &c2.name)) {
            (Some(a), Some(b)) => jobs.push(Job {
                pair: pair.clone(),
                a: PathOrImage::Path(a),
                b: PathOrImage::Path(b),
                truth: Some(Truth::Pose(c1.clone(), c2.clone())),
                missing: String::new(),
            }),
            _ => skipped.push(format!("{pair}: no PGM/PPM image found")),
        }
    }
    Ok((jobs, skipped))
}

/// Tilt series `t` in {sqrt2, 2, 2 sqrt2, 4, 4 sqrt2} of one source image,
/// scored against the known warp.
fn synthetic_jobs(cfg: &BenchConfig) -> Result<Vec<Job>> {
    let src = match &cfg.path {
        Some(p) => read_pnm(p)?,
        None => dead_leaves(cfg.synthetic_size, cfg.synthetic_size, cfg.seed),
    };
    asift_tilts()
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let v = simulate_tilt(&src, t, 0.0, i as u32 + 1)?;
            let f = v.to_original.inverse()?.to_matrix3();
            Ok(Job {
                pair: format!("t={}", fmt_sig(t, 6)),
                a: PathOrImage::Image(src.clone()),
                b: PathOrImage::Image(v.image),
                truth: Some(Truth::H(Homography::new(f)?)),
                missing: String::new(),
            })
        })
        .collect()
}

fn evaluate(job: &Job, cfg: &BenchConfig) -> Result<Option<BenchRow>> {
    let Some(truth) = &job.truth else {
        return Ok(None);
    };
    let (a, b) = (job.a.load()?, job.b.load()?);
    let out = match_pipeline(&a, &b, &cfg.pipeline)?;
    for d in &out.diagnostics {
        log::info!("{}: {d}", job.pair);
    }
    let ms = &out.matches;
    let row = match truth {
        Truth::H(h) => {
            let eps = epsilon_for(b.width(), b.height())?;
            let rep = accuracy_h(ms, h, eps);
            let params = RansacParams {
                iterations: cfg.ransac_iterations,
                inlier_eps: eps,
                seed: cfg.seed,
            };
            let secondary = match estimate_h_ransac(ms, &params) {
                Ok((_, inliers)) => h_precision(&inliers, h, eps),
                Err(_) => 0.0,
            };
            BenchRow {
                pair: job.pair.clone(),
                n_matches: rep.n_matches,
                accuracy: rep.accuracy,
                secondary,
                threshold: eps,
            }
        }
        Truth::Pose(c1, c2) => {
            let f = fundamental_between(c1, c2)?;
            let size = |i: &GrayImage| (i.width(), i.height());
            let rep = accuracy_f(ms, &f, cfg.f_threshold, size(&a), size(&b))?;
            BenchRow {
                pair: job.pair.clone(),
                n_matches: rep.n_matches,
                accuracy: rep.accuracy,
                secondary: rep.secondary,
                threshold: cfg.f_threshold,
            }
        }
    };
    Ok(Some(row))
}

/// Run every pair of the configured dataset. Rows come back in dataset
/// order whatever the `jobs` setting.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let kind = match cfg.dataset {
        Some(k) => k,
        None => detect_kind(cfg.path.as_deref())?,
    };
    let mut report = BenchReport::default();
    let jobs = match kind {
        DatasetKind::Synthetic => synthetic_jobs(cfg)?,
        DatasetKind::Oxford | DatasetKind::Hpatches => {
            let dir = cfg
                .path
                .as_deref()
                .ok_or_else(|| Error::Config(format!("{kind} needs a dataset path")))?;
            homography_jobs(dir, kind)?
        }
        DatasetKind::PosePar => {
            let dir = cfg
                .path
                .as_deref()
                .ok_or_else(|| Error::Config("pose_par needs a dataset path".into()))?;
            let (jobs, skipped) = pose_jobs(dir, cfg.frame_interval)?;
            report.skipped.extend(skipped);
            jobs
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<Option<BenchRow>>> =
        pool.install(|| jobs.par_iter().map(|j| evaluate(j, cfg)).collect());
    for (job, r) in jobs.iter().zip(results) {
        match r {
            Ok(Some(row)) => report.rows.push(row),
            Ok(None) => report.skipped.push(job.missing.clone()),
            // a probe view too small to carry keypoints says nothing about the method
            Err(e @ Error::ClassificationFailed { .. }) => report.skipped.push(format!("{}: {e}", job.pair)),
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

/// A config for the synthetic series with the ablation switches applied:
/// no view simulation and zero region weights.
pub fn baseline_of(cfg: &BenchConfig) -> BenchConfig {
    let mut b = cfg.clone();
    b.pipeline.simulate = false;
    b.pipeline.alpha1 = Some(0.0);
    b.pipeline.alpha2 = Some(0.0);
    b
}
