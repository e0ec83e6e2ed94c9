use affreg::affine_sim::{
    classify_affine_pair_with, simulate_views, write_manifest, AffineOrdering, SamplingSets,
};
use affreg::bench::{run_benchmark, BenchConfig};
use affreg::detect::{
    extract_features, read_descriptor_file, write_descriptors,
    BaseDescriptor, DescriptorFamily, DetectorParams,
};
use affreg::geometry::{
    accuracy_f, accuracy_h, epsilon_for, fundamental_between, read_homography, read_par,
    DEFAULT_F_THRESHOLD,
};
use affreg::imaging::{enhance, read_pnm, write_pgm, EnhanceParams};
use affreg::matching::{read_matches, write_matches, DEFAULT_RATIO};
use affreg::mser::{mser_segment, MserParams};
use affreg::pipeline::{match_pipeline, PipelineConfig, RegionContext};
use affreg::region_desc::{default_weights, fuse, relative_position};
use affreg::textfmt::fmt_sig;
use affreg::Error;
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "affreg", version, about = "Affine-robust region features: enhance, segment, simulate, describe, match, evaluate")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// CLAHE followed by the bilateral filter.
    Enhance {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        params: EnhanceArgs,
    },
    /// MSER segmentation: label PGM plus a region sidecar.
    Segment {
        input: PathBuf,
        /// Label image (ids mod 255, 0 = unlabeled).
        #[arg(long)]
        out: PathBuf,
        /// Sidecar text; defaults to the label path with a .txt extension.
        #[arg(long)]
        sidecar: Option<PathBuf>,
        #[command(flatten)]
        mser: MserArgs,
    },
    /// Write simulated views and their manifest.
    Simulate {
        input: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Tilts {sqrt2, 2, 2 sqrt2}.
        #[arg(long, conflicts_with_all = ["reducing", "tilts"])]
        enlarging: bool,
        /// Tilts {sqrt2/4, 1/2, sqrt2/2}.
        #[arg(long, conflicts_with = "tilts")]
        reducing: bool,
        /// Explicit comma-separated tilts.
        #[arg(long, value_delimiter = ',')]
        tilts: Vec<f64>,
        /// Comma-separated phi values in degrees.
        #[arg(long, value_delimiter = ',')]
        phis: Vec<f64>,
    },
    /// Built-in keypoints and descriptors in the interchange format.
    Detect {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fused descriptors (base plus region parts) for one image.
    Describe {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Base descriptors from another extractor instead of the built-in one.
        #[arg(long)]
        external: Option<PathBuf>,
        #[arg(long)]
        alpha1: Option<f64>,
        #[arg(long)]
        alpha2: Option<f64>,
    },
    /// Run the matching pipeline on two images.
    Match {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        pipe: PipelineArgs,
    },
    /// Score a match file against a ground-truth homography.
    EvalH {
        matches: PathBuf,
        homography: PathBuf,
        /// Size of image B, used for the distance threshold.
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Score a match file against the epipolar geometry of two cameras.
    EvalF {
        matches: PathBuf,
        par: PathBuf,
        camera_a: String,
        camera_b: String,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        /// Size of image B when it differs from A.
        #[arg(long, requires = "height_b")]
        width_b: Option<usize>,
        #[arg(long, requires = "width_b")]
        height_b: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_F_THRESHOLD)]
        threshold: f64,
    },
    /// Decide which of two images carries the lower affine distortion.
    Classify {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 45.0)]
        theta_deg: f64,
        #[arg(long, default_value_t = DEFAULT_RATIO)]
        ratio: f64,
    },
    /// Evaluate a dataset and write the CSV report.
    Bench(BenchArgs),
}

#[derive(Args)]
struct EnhanceArgs {
    #[arg(long, num_args = 2, value_names = ["ROWS", "COLS"])]
    tiles: Option<Vec<usize>>,
    #[arg(long)]
    clip: Option<u32>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    delta_d: Option<f64>,
    #[arg(long)]
    delta_r: Option<f64>,
}

impl EnhanceArgs {
    fn resolve(&self, w: usize, h: usize) -> EnhanceParams {
        let mut p = EnhanceParams::for_image(w, h);
        if let Some(t) = &self.tiles {
            p.tile_rows = t[0];
            p.tile_cols = t[1];
        }
        p.clip_limit = self.clip.unwrap_or(p.clip_limit);
        p.bilateral_window = self.window.unwrap_or(p.bilateral_window);
        p.delta_d = self.delta_d.unwrap_or(p.delta_d);
        p.delta_r = self.delta_r.unwrap_or(p.delta_r);
        p
    }
}

#[derive(Args)]
struct MserArgs {
    #[arg(long)]
    delta: Option<u8>,
    #[arg(long)]
    max_variation: Option<f64>,
    #[arg(long)]
    min_area: Option<usize>,
    #[arg(long)]
    max_area: Option<usize>,
}

impl MserArgs {
    fn resolve(&self, w: usize, h: usize) -> MserParams {
        let mut p = MserParams::for_image(w, h);
        p.delta = self.delta.unwrap_or(p.delta);
        p.max_variation = self.max_variation.unwrap_or(p.max_variation);
        p.min_area = self.min_area.unwrap_or(p.min_area);
        p.max_area = self.max_area.unwrap_or(p.max_area);
        p
    }
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    alpha1: Option<f64>,
    #[arg(long)]
    alpha2: Option<f64>,
    /// Match the originals only.
    #[arg(long)]
    no_simulation: bool,
    #[arg(long)]
    theta_deg: Option<f64>,
}

impl PipelineArgs {
    fn apply(&self, p: &mut PipelineConfig) {
        if let Some(r) = self.ratio {
            p.ratio = r;
        }
        if self.alpha1.is_some() {
            p.alpha1 = self.alpha1;
        }
        if self.alpha2.is_some() {
            p.alpha2 = self.alpha2;
        }
        if self.no_simulation {
            p.simulate = false;
        }
        if let Some(t) = self.theta_deg {
            p.theta = t.to_radians();
        }
    }
}

#[derive(Args)]
struct BenchArgs {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    dump_config: bool,
    /// oxford | hpatches | pose_par | synthetic; detected from the path otherwise.
    #[arg(long)]
    dataset: Option<String>,
    /// Dataset directory, or the source image of a synthetic series.
    #[arg(long)]
    path: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    pipe: PipelineArgs,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

fn write_text(path: &Path, text: &str) -> affreg::Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn run(cmd: Cmd) -> affreg::Result<()> {
    match cmd {
        Cmd::Enhance { input, output, params } => {
            let img = read_pnm(&input)?;
            let out = enhance(&img, &params.resolve(img.width(), img.height()))?;
            write_pgm(&output, &out)?;
        }
        Cmd::Segment { input, out, sidecar, mser } => {
            let img = read_pnm(&input)?;
            let p = mser.resolve(img.width(), img.height());
            let map = mser_segment(&img, &p)?;
            write_pgm(&out, &map.label_image())?;
            let side = sidecar.unwrap_or_else(|| out.with_extension("txt"));
            write_text(&side, &map.sidecar())?;
            println!("{} regions", map.regions().len());
        }
        Cmd::Simulate { input, out_dir, enlarging, reducing, tilts, phis } => {
            let img = read_pnm(&input)?;
            let sets = SamplingSets::standard();
            // the enlarging set is also the default
            let tilts = if reducing {
                sets.reducing.clone()
            } else if enlarging || tilts.is_empty() {
                sets.enlarging.clone()
            } else {
                tilts
            };
            let phis: Vec<f64> = if phis.is_empty() {
                sets.phi_values.clone()
            } else {
                phis.iter().map(|d| d.to_radians()).collect()
            };
            let set = simulate_views(&img, &tilts, &phis)?;
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::Io { path: out_dir.clone(), source: e })?;
            for v in &set.views {
                write_pgm(out_dir.join(format!("view_{:02}.pgm", v.view_id)), &v.image)?;
            }
            write_manifest(&out_dir.join("manifest.txt"), &set.views)?;
            for s in &set.skipped {
                eprintln!("skipped t={} phi={}: {}", s.t, s.phi.to_degrees(), s.reason);
            }
            println!("{} views written", set.views.len());
        }
        Cmd::Detect { input, out } => {
            let img = read_pnm(&input)?;
            let (kps, descs) = extract_features(&img, &DetectorParams::default())?;
            write_descriptors(&out, &kps, &descs, Some(&DescriptorFamily::BuiltinGrad), &[])?;
            println!("{} keypoints", kps.len());
        }
        Cmd::Describe { input, out, external, alpha1, alpha2 } => {
            let img = read_pnm(&input)?;
            let (kps, descs, family) = match &external {
                Some(p) => {
                    let f = read_descriptor_file(p)?;
                    let fam = f.family_or_external();
                    (f.keypoints, f.descriptors, fam)
                }
                None => {
                    let (k, d) = extract_features(&img, &DetectorParams::default())?;
                    (k, d, DescriptorFamily::BuiltinGrad)
                }
            };
            let (a1, a2) = match (alpha1, alpha2) {
                (Some(a), Some(b)) => (a, b),
                (x, y) => {
                    let (d1, d2) = default_weights(&family)?;
                    (x.unwrap_or(d1), y.unwrap_or(d2))
                }
            };
            let cfg = PipelineConfig::default();
            let regions = RegionContext::build(&img, &cfg)?;
            let mut fused = Vec::with_capacity(descs.len());
            for (k, d) in kps.iter().zip(&descs) {
                let sig = regions.signature_at(k.x, k.y);
                let rel = sig.map(|s| relative_position(k.x, k.y, s));
                let f = fuse(d, sig, rel, a1, a2)?;
                fused.push(BaseDescriptor { values: f.to_vec(), family: family.clone() });
            }
            let comment = format!("fused alpha1={} alpha2={} base={family}", fmt_sig(a1, 6), fmt_sig(a2, 6));
            write_descriptors(&out, &kps, &fused, None, &[comment])?;
            println!("{} descriptors", fused.len());
        }
        Cmd::Match { a, b, out, pipe } => {
            let (ia, ib) = (read_pnm(&a)?, read_pnm(&b)?);
            let mut cfg = PipelineConfig::default();
            pipe.apply(&mut cfg);
            let res = match_pipeline(&ia, &ib, &cfg)?;
            for d in &res.diagnostics {
                eprintln!("{d}");
            }
            write_matches(&out, &res.matches)?;
            println!("{} matches", res.matches.len());
        }
        Cmd::EvalH { matches, homography, width, height, eps } => {
            let ms = read_matches(&matches)?;
            let h = read_homography(&homography)?;
            let eps = match eps {
                Some(e) => e,
                None => epsilon_for(width, height)?,
            };
            let r = accuracy_h(&ms, &h, eps);
            println!(
                "accuracy {:.6} correct {}/{} threshold {}",
                r.accuracy,
                r.n_correct,
                r.n_matches,
                fmt_sig(eps, 6)
            );
        }
        Cmd::EvalF { matches, par, camera_a, camera_b, width, height, width_b, height_b, threshold } => {
            let ms = read_matches(&matches)?;
            let cams = read_par(&par)?;
            let find = |n: &str| {
                cams.iter()
                    .find(|c| c.name == n || Path::new(&c.name).file_stem().is_some_and(|s| s == n))
                    .ok_or_else(|| usage(format!("camera '{n}' not in {}", par.display())))
            };
            let f = fundamental_between(find(&camera_a)?, find(&camera_b)?)?;
            let size_b = (width_b.unwrap_or(width), height_b.unwrap_or(height));
            let r = accuracy_f(&ms, &f, threshold, (width, height), size_b)?;
            println!(
                "accuracy {:.6} correct {}/{} threshold {}",
                r.accuracy,
                r.n_correct,
                r.n_matches,
                fmt_sig(threshold, 6)
            );
        }
        Cmd::Classify { a, b, theta_deg, ratio } => {
            let (ia, ib) = (read_pnm(&a)?, read_pnm(&b)?);
            let c = classify_affine_pair_with(&ia, &ib, theta_deg.to_radians(), &DetectorParams::default(), ratio)?;
            match c.ordering {
                AffineOrdering::ALower => println!("a: lower affine degree"),
                AffineOrdering::BLower => println!("b: lower affine degree"),
                AffineOrdering::Tie => println!("tie"),
            }
            println!("matches tilted-a/b {} a/tilted-b {}", c.m_tilted_a_b, c.m_a_tilted_b);
        }
        Cmd::Bench(args) => {
            let mut cfg = match &args.config {
                Some(p) => BenchConfig::load(p)?,
                None => BenchConfig::default(),
            };
            if let Some(d) = &args.dataset {
                cfg.set("dataset", d)?;
            }
            if let Some(p) = &args.path {
                cfg.path = Some(p.clone());
            }
            if let Some(s) = args.seed {
                cfg.seed = s;
            }
            if let Some(j) = args.jobs {
                cfg.jobs = j;
            }
            args.pipe.apply(&mut cfg.pipeline);
            cfg.validate()?;
            if args.dump_config {
                print!("{}", cfg.dump());
                return Ok(());
            }
            let report = run_benchmark(&cfg)?;
            for s in &report.skipped {
                eprintln!("skipped {s}");
            }
            let csv = report.to_csv();
            match &args.out {
                Some(p) => write_text(p, &csv)?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParameter(_) | Error::Config(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(|| run(cli.cmd)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(3),
    }
}
