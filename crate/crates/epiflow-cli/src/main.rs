//! `epiflow`: dense optical flow with epipolar-geometry regularizers,
//! motion segmentation, evaluation, and synthetic scene generation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use epiflow_core::{
    affinity_image_ordered, evaluate, finetune_epipolar, flow_to_color, generate,
    labels_to_color, optimize, read_flo, read_flow_png, read_image, segment_flow, write_flo,
    write_image, Error, FlowField, Image, SceneCase,
};

mod config;

#[derive(Parser)]
#[command(
    name = "epiflow",
    about = "Epipolar-constrained dense optical flow",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Flags shared by the flow-producing subcommands.
#[derive(Args)]
struct CommonOpts {
    /// Config file (flat key = value lines); overrides EPIFLOW_CONFIG.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, repeatable: --set iters_per_level=50
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Epipolar regularizer: none, sampson, lowrank, subspace.
    #[arg(long)]
    regularizer: Option<String>,
    /// Random seed (shorthand for --set rng_seed=N).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Estimate flow between two frames and write it as .flo.
    Estimate {
        img1: PathBuf,
        img2: PathBuf,
        /// Output .flo path.
        #[arg(long)]
        out: PathBuf,
        /// Also write the backward flow.
        #[arg(long)]
        backward: Option<PathBuf>,
        /// Color-wheel rendering of the flow.
        #[arg(long)]
        viz: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Refine an existing flow at the finest scale only.
    Refine {
        img1: PathBuf,
        img2: PathBuf,
        /// Initial flow (.flo) to refine.
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        viz: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Segment a flow field into rigid motions.
    Segment {
        img1: PathBuf,
        img2: PathBuf,
        /// Flow to segment (.flo); estimated from the frames when absent.
        #[arg(long)]
        flow: Option<PathBuf>,
        /// Motion count: a number, or "auto" for the eigengap choice.
        #[arg(long, default_value = "auto")]
        k: String,
        /// Largest motion count considered by the eigengap search.
        #[arg(long, default_value_t = 6)]
        k_max: usize,
        /// CSV of sampled points: index,x,y,label.
        #[arg(long)]
        out: PathBuf,
        /// Affinity heat map ordered by recovered labels.
        #[arg(long)]
        affinity: Option<PathBuf>,
        /// Dense label map rendered with the label palette.
        #[arg(long)]
        labels_png: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Compare an estimated flow against ground truth; prints one JSON object.
    Eval {
        /// Estimated flow (.flo).
        #[arg(long)]
        est: PathBuf,
        /// Ground truth: .flo, or 16-bit PNG in the (value - 2^15)/64 encoding.
        #[arg(long)]
        gt: PathBuf,
        /// Non-occluded mask PNG (nonzero = counted in epe_noc).
        #[arg(long)]
        noc: Option<PathBuf>,
    },
    /// Generate a synthetic scene with exact ground truth.
    Synth {
        /// rigid, pure-rotation, planar, parallel-translation, two-motion,
        /// three-motion, occluder
        case: String,
        /// Directory to write img1.png, img2.png, flow.flo and extras into.
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), e);
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Cmd) -> Result<(), Error> {
    match cmd {
        Cmd::Estimate { img1, img2, out, backward, viz, common } => {
            let cfg = resolve(&common)?;
            let (a, b) = (read_image(&img1)?, read_image(&img2)?);
            let result = optimize(&a, &b, &cfg, None)?;
            write_flo(&out, &result.flow)?;
            if let Some(p) = backward {
                write_flo(&p, &result.backward)?;
            }
            if let Some(p) = viz {
                write_image(&p, &flow_to_color(&result.flow, None))?;
            }
            println!(
                "{}",
                serde_json::json!({
                    "loss": result.report,
                    "iterations": result.iterations,
                    "advisories": result.advisories,
                    "out": out,
                })
            );
            Ok(())
        }
        Cmd::Refine { img1, img2, init, out, viz, common } => {
            let cfg = resolve(&common)?;
            let (a, b) = (read_image(&img1)?, read_image(&img2)?);
            let base = read_flo(&init)?;
            let result = finetune_epipolar(&a, &b, &base, None, &cfg)?;
            write_flo(&out, &result.flow)?;
            if let Some(p) = viz {
                write_image(&p, &flow_to_color(&result.flow, None))?;
            }
            println!(
                "{}",
                serde_json::json!({
                    "loss": result.report,
                    "iterations": result.iterations,
                    "advisories": result.advisories,
                    "out": out,
                })
            );
            Ok(())
        }
        Cmd::Segment {
            img1,
            img2,
            flow,
            k,
            k_max,
            out,
            affinity,
            labels_png,
            common,
        } => {
            let cfg = resolve(&common)?;
            let flow_field = match flow {
                Some(p) => read_flo(&p)?,
                None => {
                    let (a, b) = (read_image(&img1)?, read_image(&img2)?);
                    optimize(&a, &b, &cfg, None)?.flow
                }
            };
            let k = match k.as_str() {
                "auto" => None,
                n => Some(n.parse::<usize>().map_err(|_| {
                    Error::BadConfig(format!("--k expects a number or 'auto', got '{n}'"))
                })?),
            };
            let seg = segment_flow(&flow_field, None, k, k_max, &cfg.loss)?;
            write_labels_csv(&out, &seg.sample_indices, &seg.sample_labels, flow_field.width())?;
            if let Some(p) = affinity {
                write_image(&p, &affinity_image_ordered(&seg.affinity, &seg.sample_labels))?;
            }
            if let Some(p) = labels_png {
                let img =
                    labels_to_color(&seg.labels, flow_field.width(), flow_field.height());
                write_image(&p, &img)?;
            }
            println!(
                "{}",
                serde_json::json!({
                    "motions": seg.motions,
                    "samples": seg.sample_indices.len(),
                    "laplacian_eigenvalues": seg.laplacian_eigenvalues,
                    "out": out,
                })
            );
            Ok(())
        }
        Cmd::Eval { est, gt, noc } => {
            let est_flow = read_flo(&est)?;
            let (gt_flow, validity) = read_ground_truth(&gt)?;
            let noc_mask = match noc {
                Some(p) => Some(read_mask(&p)?),
                None => None,
            };
            let result = evaluate(
                &est_flow,
                &gt_flow,
                validity.as_deref(),
                noc_mask.as_deref(),
            )?;
            println!("{}", serde_json::to_string(&result).expect("serializable"));
            Ok(())
        }
        Cmd::Synth { case, out_dir, seed } => {
            let case = SceneCase::parse(&case)?;
            let scene = generate(case, seed);
            std::fs::create_dir_all(&out_dir)?;
            write_image(&out_dir.join("img1.png"), &scene.img1)?;
            write_image(&out_dir.join("img2.png"), &scene.img2)?;
            write_flo(&out_dir.join("flow.flo"), &scene.flow)?;
            if let Some(bwd) = &scene.backward {
                write_flo(&out_dir.join("backward.flo"), bwd)?;
            }
            let (w, h) = (scene.flow.width(), scene.flow.height());
            let vis = Image::from_fn(w, h, 1, |x, y, _| {
                if scene.visibility[y * w + x] {
                    1.0
                } else {
                    0.0
                }
            });
            write_image(&out_dir.join("visibility.png"), &vis)?;
            if scene.motions > 1 {
                let img = labels_to_color(&scene.labels, w, h);
                write_image(&out_dir.join("labels.png"), &img)?;
            }
            println!(
                "{}",
                serde_json::json!({
                    "case": case.name(),
                    "seed": seed,
                    "motions": scene.motions,
                    "width": w,
                    "height": h,
                    "dir": out_dir,
                })
            );
            Ok(())
        }
    }
}

fn resolve(common: &CommonOpts) -> Result<epiflow_core::OptimizerConfig, Error> {
    config::resolve(
        common.config.as_deref(),
        &common.set,
        common.regularizer.as_deref(),
        common.seed,
    )
}

fn write_labels_csv(
    path: &Path,
    indices: &[usize],
    labels: &[usize],
    width: usize,
) -> Result<(), Error> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "index,x,y,label")?;
    for (&i, &l) in indices.iter().zip(labels) {
        writeln!(out, "{},{},{},{}", i, i % width, i / width, l)?;
    }
    Ok(())
}

fn read_ground_truth(path: &Path) -> Result<(FlowField, Option<Vec<bool>>), Error> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("flo") => Ok((read_flo(path)?, None)),
        Some("png") => {
            let (flow, valid) = read_flow_png(path)?;
            Ok((flow, Some(valid)))
        }
        _ => Err(Error::BadFormat(format!(
            "ground truth must be .flo or .png, got {}",
            path.display()
        ))),
    }
}

/// Reads an 8-bit PNG as a boolean mask: any channel nonzero marks true.
fn read_mask(path: &Path) -> Result<Vec<bool>, Error> {
    let img = read_image(path)?;
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let mut mask = vec![false; w * h];
    for (i, m) in mask.iter_mut().enumerate() {
        let (x, y) = (i % w, i / w);
        *m = (0..c).any(|ch| img.at(x, y, ch) > 0.0);
    }
    Ok(mask)
}
