//! Command-line front end for the planar reconstruction toolkit.
//!
//! Every subcommand reads and writes the frame-bundle layout documented
//! in the library's `io` module. Failures print a single diagnostic line
//! to stderr and exit with status 2.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use planar::anchors::{cluster_anchors, decode_normal, encode_normal};
use planar::benchmark::{
    complete_layout, extract_planes, pose_failure_filter, FrameAnnotation,
    DEFAULT_BEHIND_FRACTION, DEFAULT_COMPLETION_TOLERANCE, DEFAULT_MIN_AREA,
    DEFAULT_POSE_THRESHOLD,
};
use planar::geometry::{depthmap_to_coords, Vec3};
use planar::io;
use planar::metrics::{evaluate, DetectionResult};
use planar::plane::offset_from_depth;
use planar::warp::{warping_loss_grad_with, warping_loss_with, WarpLossKind};
use planar::{PlanarError, Result};

#[derive(Parser)]
#[command(name = "planar", version, about = "Piecewise planar reconstruction toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Anchor-normal utilities.
    Anchors(AnchorsCmd),
    /// Plane parameter utilities.
    Plane(PlaneCmd),
    /// Two-view warping consistency loss between two frame bundles.
    WarpLoss(WarpLossArgs),
    /// Extract ground-truth planes from a frame's depth map.
    BuildGt(BuildGtArgs),
    /// Flag frames whose plane-implied depth disagrees with sensor depth.
    FilterPose(FilterPoseArgs),
    /// Complete layout-plane masks behind occluders.
    CompleteMasks(CompleteMasksArgs),
    /// Score a predicted frame bundle against a ground-truth one.
    Eval(EvalArgs),
}

#[derive(Args)]
struct AnchorsCmd {
    #[command(subcommand)]
    command: AnchorsSub,
}

#[derive(Subcommand)]
enum AnchorsSub {
    /// Cluster unit normals into anchor directions.
    Cluster {
        /// Text file with one `nx ny nz` normal per line.
        #[arg(long)]
        input: PathBuf,
        /// Number of anchors.
        #[arg(long, default_value_t = 7)]
        k: usize,
        /// RNG seed for initialization and reseeding.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output anchor file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Round-trip normals through the anchor encoding and report error.
    Check {
        /// Anchor file produced by `anchors cluster`.
        #[arg(long)]
        anchors: PathBuf,
        /// Text file with one `nx ny nz` normal per line.
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Args)]
struct PlaneCmd {
    #[command(subcommand)]
    command: PlaneSub,
}

#[derive(Subcommand)]
enum PlaneSub {
    /// Estimate a plane offset from masked depth given the normal.
    Offset {
        /// Frame bundle directory.
        #[arg(long)]
        frame: PathBuf,
        /// Plane id whose mask supplies the support region.
        #[arg(long)]
        mask: usize,
        /// Unit normal as `nx,ny,nz`.
        #[arg(long)]
        normal: String,
    },
}

#[derive(Args)]
struct WarpLossArgs {
    /// Current frame bundle.
    #[arg(long)]
    current: PathBuf,
    /// Nearby frame bundle.
    #[arg(long)]
    nearby: PathBuf,
    /// Use the root-sum-squared loss instead of the mean distance.
    #[arg(long)]
    squared: bool,
    /// Verify the analytic gradient against finite differences.
    #[arg(long)]
    grad_check: bool,
    /// Seed for picking gradient-check entries.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BuildGtArgs {
    /// Input frame bundle (depth, pose, intrinsics).
    #[arg(long)]
    frame: PathBuf,
    /// Output bundle directory for the fitted annotation.
    #[arg(long)]
    out: PathBuf,
    /// Smallest mask kept, in pixels.
    #[arg(long, default_value_t = DEFAULT_MIN_AREA)]
    min_area: usize,
    /// Point-to-plane inlier tolerance in meters.
    #[arg(long, default_value_t = 0.01)]
    inlier_tol: f64,
    /// Maximum number of planes to extract.
    #[arg(long, default_value_t = 16)]
    max_planes: usize,
    /// RANSAC seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct FilterPoseArgs {
    /// Frame bundle with a plane table.
    #[arg(long)]
    frame: PathBuf,
    /// Sensor depth file; defaults to the bundle's sensor_depth.
    #[arg(long)]
    sensor: Option<PathBuf>,
    /// Mean-discrepancy threshold in meters.
    #[arg(long, default_value_t = DEFAULT_POSE_THRESHOLD)]
    threshold: f64,
    /// Identifier echoed in the CSV output.
    #[arg(long, default_value = "frame")]
    id: String,
}

#[derive(Args)]
struct CompleteMasksArgs {
    /// Frame bundle with layout flags in its plane table.
    #[arg(long)]
    frame: PathBuf,
    /// Depth agreement tolerance in meters.
    #[arg(long, default_value_t = DEFAULT_COMPLETION_TOLERANCE)]
    tolerance: f64,
    /// Required fraction of pixels at or behind the composed surface.
    #[arg(long, default_value_t = DEFAULT_BEHIND_FRACTION)]
    behind: f64,
    /// Output directory for completed masks and depth.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted frame bundle.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth frame bundle.
    #[arg(long)]
    gt: PathBuf,
    /// Output JSON report path.
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV path for the per-plane recall curve.
    #[arg(long)]
    curve: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("planar: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Anchors(cmd) => match cmd.command {
            AnchorsSub::Cluster { input, k, seed, out } => {
                let normals = read_normals(&input)?;
                let set = cluster_anchors(&normals, k, seed)?;
                io::write_anchors(&set, &out)?;
                println!("clustered {} normals into {} anchors -> {}", normals.len(), set.len(), out.display());
            }
            AnchorsSub::Check { anchors, input } => {
                let set = io::read_anchors(&anchors)?;
                let normals = read_normals(&input)?;
                let mut worst = 0.0f64;
                for &n in &normals {
                    let enc = encode_normal(n, &set)?;
                    let dec = decode_normal(&enc, &set)?;
                    worst = worst.max((dec - n).norm());
                }
                println!("{} normals, max round-trip error {worst:.3e}", normals.len());
            }
        },
        Command::Plane(cmd) => match cmd.command {
            PlaneSub::Offset { frame, mask, normal } => {
                let bundle = io::read_frame_bundle(&frame)?;
                let idx = bundle
                    .planes
                    .iter()
                    .position(|r| r.id == mask)
                    .ok_or_else(|| PlanarError::Domain(format!("no plane with id {mask}")))?;
                let n = parse_normal(&normal)?;
                let d = offset_from_depth(n, &bundle.depth, &bundle.masks[idx], &bundle.intrinsics)?;
                println!("{d:.9}");
            }
        },
        Command::WarpLoss(args) => {
            let current = io::read_frame_bundle(&args.current)?;
            let nearby = io::read_frame_bundle(&args.nearby)?;
            let kind = if args.squared { WarpLossKind::RootSumSquared } else { WarpLossKind::MeanDistance };
            let pose = nearby.pose.inverse().compose(&current.pose);
            let cur_coords = depthmap_to_coords(&current.depth, &current.intrinsics)?;
            let near_coords = depthmap_to_coords(&nearby.depth, &nearby.intrinsics)?;
            if args.grad_check {
                let ok = gradient_check(&cur_coords, &near_coords, &pose, &current, kind, args.seed)?;
                if !ok {
                    eprintln!("planar: gradient check failed");
                    return Ok(ExitCode::from(1));
                }
                println!("gradient check passed");
            }
            let report = warping_loss_with(&cur_coords, &near_coords, &pose, &current.intrinsics, kind)?;
            println!(
                "loss {:.9} over {} pixels ({} out of frame, {} invalid)",
                report.loss, report.contributing_pixels, report.skipped_out_of_frame, report.skipped_invalid
            );
        }
        Command::BuildGt(args) => {
            let bundle = io::read_frame_bundle(&args.frame)?;
            let extracted = extract_planes(
                &bundle.depth,
                &bundle.intrinsics,
                args.min_area,
                args.inlier_tol,
                args.max_planes,
                args.seed,
            )?;
            let (planes, masks): (Vec<_>, Vec<_>) = extracted.into_iter().unzip();
            let count = planes.len();
            let annotation = FrameAnnotation {
                is_layout: vec![false; count],
                planes,
                visible_masks: masks,
                complete_masks: None,
                gt_depth: bundle.depth.clone(),
                pose: bundle.pose.clone(),
                intrinsics: bundle.intrinsics,
            };
            io::write_annotation(&annotation, &args.out)?;
            println!("extracted {count} planes -> {}", args.out.display());
        }
        Command::FilterPose(args) => {
            let bundle = io::read_frame_bundle(&args.frame)?;
            let sensor = match &args.sensor {
                Some(path) => io::read_depth_raw(path)?,
                None => bundle.sensor_depth.clone().ok_or_else(|| {
                    PlanarError::Domain("bundle has no sensor depth; pass --sensor".into())
                })?,
            };
            let annotation = bundle.to_annotation()?;
            let decision = pose_failure_filter(&annotation, &sensor, args.threshold)?;
            println!("{},{:.6},{}", args.id, decision.discrepancy, u8::from(decision.keep));
        }
        Command::CompleteMasks(args) => {
            let bundle = io::read_frame_bundle(&args.frame)?;
            let annotation = bundle.to_annotation()?;
            match complete_layout(&annotation, args.tolerance, args.behind)? {
                Some(completion) => {
                    std::fs::create_dir_all(&args.out)?;
                    io::write_depth_raw(&completion.complete_depth, &args.out.join("complete_depth.pgdm"))?;
                    for (&idx, mask) in completion.selected.iter().zip(&completion.completed_masks) {
                        io::write_mask(mask, &args.out.join(format!("{idx:03}.png")))?;
                    }
                    println!(
                        "completed {:?} with support {} (behind fraction {:.3})",
                        completion.selected, completion.support, completion.behind_fraction
                    );
                }
                None => println!("no admissible layout composition"),
            }
        }
        Command::Eval(args) => {
            let pred = io::read_frame_bundle(&args.pred)?;
            let gt = io::read_frame_bundle(&args.gt)?;
            let gt_annotation = gt.to_annotation()?;
            let preds: Vec<DetectionResult> = pred
                .planes
                .iter()
                .zip(&pred.masks)
                .map(|(r, m)| {
                    Ok(DetectionResult {
                        plane: r.plane,
                        mask: m.clone().with_confidence(r.confidence)?,
                        confidence: r.confidence,
                    })
                })
                .collect::<Result<_>>()?;
            let pred_segmentation = io::bundle_segmentation(&pred)?;
            let report = evaluate(&preds, &pred.depth, &pred_segmentation, &gt_annotation)?;
            io::write_report_json(&report, &args.out)?;
            if let Some(curve_path) = &args.curve {
                io::write_recall_csv(&report.recall_curve, curve_path)?;
            }
            println!(
                "ap@0.4 {:.4}  ap@0.6 {:.4}  ap@0.9 {:.4}  voi {:.4}  ri {:.4}  sc {:.4}  rmse {:.4}",
                report.ap_04, report.ap_06, report.ap_09, report.voi, report.ri, report.sc, report.rmse
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn read_normals(path: &std::path::Path) -> Result<Vec<Vec3>> {
    let text = std::fs::read_to_string(path)?;
    let mut normals = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| PlanarError::Parse {
                line: idx + 1,
                message: format!("bad normal '{line}'"),
            })?;
        if parts.len() != 3 {
            return Err(PlanarError::Parse {
                line: idx + 1,
                message: format!("expected three components, got {}", parts.len()),
            });
        }
        let v = Vec3::new(parts[0], parts[1], parts[2]);
        let norm = v.norm();
        if norm < 1e-9 {
            return Err(PlanarError::Parse { line: idx + 1, message: "zero normal".into() });
        }
        normals.push(v / norm);
    }
    Ok(normals)
}

fn parse_normal(text: &str) -> Result<Vec3> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| PlanarError::Domain(format!("bad normal '{text}', expected nx,ny,nz")))?;
    if parts.len() != 3 {
        return Err(PlanarError::Domain(format!("expected 3 components, got {}", parts.len())));
    }
    let v = Vec3::new(parts[0], parts[1], parts[2]);
    let norm = v.norm();
    if norm < 1e-9 {
        return Err(PlanarError::Domain("zero-length normal".into()));
    }
    Ok(v / norm)
}

/// Spot-checks the analytic gradient at up to 200 valid entries against
/// central differences on the loss.
fn gradient_check(
    current: &planar::CoordinateMap,
    nearby: &planar::CoordinateMap,
    pose: &planar::Pose,
    frame: &io::FrameBundle,
    kind: WarpLossKind,
    seed: u64,
) -> Result<bool> {
    const H: f64 = 1e-4;
    const REL_TOL: f64 = 1e-3;
    let (_, grad) = warping_loss_grad_with(current, nearby, pose, &frame.intrinsics, kind)?;
    let mut entries: Vec<(usize, usize)> = (0..current.height())
        .flat_map(|r| (0..current.width()).map(move |c| (c, r)))
        .filter(|&(c, r)| current.is_valid(c, r))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    entries.shuffle(&mut rng);
    entries.truncate(200);
    let mut ok = true;
    for (col, row) in entries {
        for axis in 0..3 {
            let base = current.point(col, row);
            let mut delta = Vec3::zeros();
            delta[axis] = H;
            let mut plus = current.clone();
            plus.set_point(col, row, base + delta);
            let mut minus = current.clone();
            minus.set_point(col, row, base - delta);
            let lp = warping_loss_with(&plus, nearby, pose, &frame.intrinsics, kind)?.loss;
            let lm = warping_loss_with(&minus, nearby, pose, &frame.intrinsics, kind)?.loss;
            let fd = (lp - lm) / (2.0 * H);
            let an = grad.at(col, row)[axis];
            let denom = fd.abs().max(an.abs()).max(1e-8);
            if (fd - an).abs() / denom > REL_TOL {
                eprintln!(
                    "planar: gradient mismatch at ({col},{row}) axis {axis}: analytic {an:.6e} vs fd {fd:.6e}"
                );
                ok = false;
            }
        }
    }
    Ok(ok)
}
