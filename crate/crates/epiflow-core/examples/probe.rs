//! Scratch driver for timing and accuracy probes on the synthetic scenes.

use std::time::Instant;

use epiflow_core::{
    evaluate, generate, optimize, segment_flow, segmentation_accuracy, LossConfig,
    OptimizerConfig, Regularizer, SceneCase,
};

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "seg".into());
    match which.as_str() {
        "seg" => seg_probe(),
        "rigid" => optimize_probe(SceneCase::Rigid, &[Regularizer::None, Regularizer::LowRank, Regularizer::Subspace], 5),
        "rig1" => optimize_probe(SceneCase::Rigid, &[Regularizer::None, Regularizer::LowRank, Regularizer::Subspace], 1),
        "two" => optimize_probe(SceneCase::TwoMotion, &[Regularizer::None, Regularizer::Subspace, Regularizer::Sampson], 5),
        "two1" => optimize_probe(SceneCase::TwoMotion, &[Regularizer::None, Regularizer::Subspace], 1),
        "sub2m" => optimize_probe(SceneCase::TwoMotion, &[Regularizer::Subspace], 1),
        "sub2m5" => optimize_probe(SceneCase::TwoMotion, &[Regularizer::Subspace], 5),
        "subrig" => optimize_probe(SceneCase::Rigid, &[Regularizer::Subspace], 1),
        "subrig5" => optimize_probe(SceneCase::Rigid, &[Regularizer::Subspace], 5),
        "none2m" => optimize_probe(SceneCase::TwoMotion, &[Regularizer::None], 1),
        "lowrig" => optimize_probe(SceneCase::Rigid, &[Regularizer::LowRank], 1),
        "samprig" => optimize_probe(SceneCase::Rigid, &[Regularizer::Sampson], 1),
        "planar" => optimize_probe(SceneCase::Planar, &[Regularizer::None], 5),
        "rotation" => optimize_probe(SceneCase::PureRotation, &[Regularizer::None], 5),
        "variants" => variants_probe(),
        "levels" => levels_probe(),
        "grad" => grad_probe(),
        "mu2" => mu2_probe(),
        other => eprintln!("unknown probe {other}"),
    }
}

fn seg_probe() {
    let scene = generate(SceneCase::ThreeMotion, 0);
    let cfg = LossConfig::default(); // sample_count 2000
    let t0 = Instant::now();
    let seg = segment_flow(&scene.flow, None, None, 6, &cfg).unwrap();
    let sample_truth: Vec<usize> =
        seg.sample_indices.iter().map(|&i| scene.labels[i]).collect();
    let acc = segmentation_accuracy(&seg.sample_labels, &sample_truth);
    println!(
        "three-motion 2000 samples: k={} acc={:.4} eig={:?} in {:.2?}",
        seg.motions,
        acc,
        seg.laplacian_eigenvalues
            .iter()
            .map(|v| (v * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>(),
        t0.elapsed()
    );
}

fn variants_probe() {
    let scene = generate(SceneCase::Planar, 0);
    let base = OptimizerConfig::default();
    let variants: Vec<(&str, OptimizerConfig)> = vec![
        ("default", base.clone()),
        ("tau=1e9", OptimizerConfig { loss: LossConfig { tau: 1e9, ..base.loss.clone() }, ..base.clone() }),
        ("iters=800", OptimizerConfig { iters_per_level: 800, warmup_iters: 240, ..base.clone() }),
        (
            "tau=1e9,iters=800",
            OptimizerConfig {
                iters_per_level: 800,
                loss: LossConfig { tau: 1e9, ..base.loss.clone() },
                ..base.clone()
            },
        ),
        ("no-decay", OptimizerConfig { step_decay: 1.0, ..base.clone() }),
    ];
    // loss of the ground-truth flow, for reference
    let occ = epiflow_core::OcclusionMask::all_visible(scene.img1.width(), scene.img1.height());
    let gt_rep = epiflow_core::total_loss(
        &scene.img1, &scene.img2, &scene.flow, &occ, Regularizer::None, &base.loss,
    )
    .unwrap();
    println!("GT loss: photo={:.5} smooth={:.5} total={:.5}", gt_rep.photometric, gt_rep.smoothness, gt_rep.total);
    for (name, cfg) in variants {
        let t0 = Instant::now();
        let out = optimize(&scene.img1, &scene.img2, &cfg, None).unwrap();
        let ev = evaluate(&out.flow, &scene.flow, None, None).unwrap();
        println!(
            "Planar seed=0 [{name}] epe={:.3} fl={:.3} photo={:.5} smooth={:.5} total={:.5} in {:.2?} advisories={:?}",
            ev.epe_all, ev.fl_all, out.report.photometric, out.report.smoothness, out.report.total,
            t0.elapsed(), out.advisories
        );
    }
}

/// Runs each pyramid level in isolation (zero init and cascaded init) to find
/// where the coarse-to-fine chain loses the flow.
fn levels_probe() {
    use epiflow_core::{build_pyramid, upsample_flow, FlowField};
    let scene = generate(SceneCase::Planar, 0);
    let pyr = build_pyramid(&scene.img1, &scene.img2, 4, 32);
    let nl = pyr.levels.len();
    // ground truth at level l: sample the full-res field, scale by 2^-l
    let gt_at = |l: usize| {
        let (w, h) = (pyr.levels[l].0.width(), pyr.levels[l].0.height());
        let s = (1usize << l) as f64;
        FlowField::from_fn(w, h, |x, y| {
            let v = scene.flow.sample_bilinear(x as f64 * s + (s - 1.0) / 2.0, y as f64 * s + (s - 1.0) / 2.0);
            [v[0] / s, v[1] / s]
        })
    };
    let epe = |a: &FlowField, b: &FlowField| {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(p, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
            .sum::<f64>()
            / a.data().len() as f64
    };
    let base = OptimizerConfig { levels: 1, ..OptimizerConfig::default() };

    let mut carry: Option<(FlowField, FlowField)> = None;
    for l in (0..nl).rev() {
        let (i1, i2) = &pyr.levels[l];
        let gt = gt_at(l);
        let zref = epe(&FlowField::new(gt.width(), gt.height()), &gt);
        // zero-init run of this level alone
        let out0 = optimize(i1, i2, &base, None).unwrap();
        let e0 = epe(&out0.flow, &gt);
        // cascaded: init from the previous level's result
        let (ec, next) = match carry.take() {
            Some((cf, cb)) => {
                let f = upsample_flow(&cf, gt.width(), gt.height());
                let b = upsample_flow(&cb, gt.width(), gt.height());
                let outc =
                    epiflow_core::finetune_epipolar(i1, i2, &f, Some(&b), &base).unwrap();
                let e = epe(&outc.flow, &gt);
                (Some(e), (outc.flow, outc.backward))
            }
            None => (None, (out0.flow.clone(), out0.backward.clone())),
        };
        carry = Some(next);
        println!(
            "level {l} {}x{} zero-epe={zref:.3} solo-epe={e0:.3} cascade-epe={} photo={:.5} smooth={:.5}",
            gt.width(),
            gt.height(),
            match ec {
                Some(e) => format!("{e:.3}"),
                None => "-".into(),
            },
            out0.report.photometric,
            out0.report.smoothness,
        );
    }
}

/// Compares photometric vs epipolar gradient magnitudes at the coarsest level,
/// inside and outside the repeated-texture tile, at the true flow and at a
/// one-period-off tile state.
fn grad_probe() {
    use epiflow_core::{
        build_pyramid, correspondences_at, lift, photometric_losses, sample_pixels,
        nuclear_norm_gradient, subspace_gradient, FlowField, OcclusionMask,
    };
    use rand::SeedableRng;
    let scene = generate(SceneCase::Rigid, 0);
    let pyr = build_pyramid(&scene.img1, &scene.img2, 4, 32);
    let l = pyr.levels.len() - 1;
    let (i1, i2) = &pyr.levels[l];
    let s = (1usize << l) as f64;
    let (w, h) = (i1.width(), i1.height());
    let gt = FlowField::from_fn(w, h, |x, y| {
        let v = scene.flow.sample_bilinear(x as f64 * s + (s - 1.0) / 2.0, y as f64 * s + (s - 1.0) / 2.0);
        [v[0] / s, v[1] / s]
    });
    // tile rect at this level
    let r = [64.0 / s, 192.0 / s, 38.0 / s, 154.0 / s];
    let in_tile = |x: usize, y: usize| {
        (x as f64) >= r[0] && (x as f64) < r[1] && (y as f64) >= r[2] && (y as f64) < r[3]
    };
    // one tile period off horizontally inside the tile
    let period = 16.0 / s;
    let off = FlowField::from_fn(w, h, |x, y| {
        let v = gt.get(x, y);
        if in_tile(x, y) { [v[0] + period, v[1]] } else { v }
    });
    let cfg = LossConfig::default();
    let occ = OcclusionMask::all_visible(w, h);
    for (name, state) in [("gt", &gt), ("off", &off)] {
        let photo = photometric_losses(i1, i2, state, &occ, &cfg).unwrap();
        let (mut pin, mut nin, mut pout, mut nout) = (0.0, 0usize, 0.0, 0usize);
        for y in 0..h {
            for x in 0..w {
                let g = photo.grad[y * w + x];
                let m = (g[0] * g[0] + g[1] * g[1]).sqrt();
                if in_tile(x, y) {
                    pin += m;
                    nin += 1;
                } else {
                    pout += m;
                    nout += 1;
                }
            }
        }
        println!("[{name}] photo |g|: tile={:.5} rest={:.5}", pin / nin as f64, pout / nout as f64);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let idxs = sample_pixels(&occ, cfg.sample_count, &mut rng).unwrap();
        let corrs = correspondences_at(state, &idxs);
        let lifted = lift(&corrs, cfg.lift_normalize);
        for (rname, reg) in [("lowrank", Regularizer::LowRank), ("subspace", Regularizer::Subspace)] {
            let (loss, gh) = match reg {
                Regularizer::LowRank => nuclear_norm_gradient(&lifted),
                _ => subspace_gradient(&lifted, cfg.lambda_sub),
            };
            let mu2 = cfg.mu2_for(reg);
            // chain to flow coordinates, same as the optimizer does
            let (mut ein, mut cin, mut eout, mut cout) = (0.0, 0usize, 0.0, 0usize);
            for (i, c) in corrs.iter().enumerate() {
                let (u0, u1, s2) = match &lifted.normalization {
                    Some((t1, t2)) => {
                        let u = t1 * c.x;
                        (u[0], u[1], t2[(0, 0)])
                    }
                    None => (c.x[0], c.x[1], 1.0),
                };
                let g = gh.column(i);
                let gx = s2 * (g[0] * u0 + g[3] * u1 + g[6]);
                let gy = s2 * (g[1] * u0 + g[4] * u1 + g[7]);
                let m = mu2 * (gx * gx + gy * gy).sqrt();
                let (x, y) = (idxs[i] % w, idxs[i] / w);
                if in_tile(x, y) {
                    ein += m;
                    cin += 1;
                } else {
                    eout += m;
                    cout += 1;
                }
            }
            println!(
                "[{name}] {rname}: loss={loss:.4} mu2|g|: tile={:.7} rest={:.7}",
                ein / cin.max(1) as f64,
                eout / cout.max(1) as f64
            );
        }
    }
}

/// Sweeps explicit mu2 values for both epipolar regularizers on one rigid seed.
fn mu2_probe() {
    let scene = generate(SceneCase::Rigid, 0);
    let rect = [64usize, 192, 38, 154];
    let ef: f64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    for reg in [Regularizer::None, Regularizer::LowRank, Regularizer::Subspace] {
        for mu2 in [0.03, 0.1, 0.3, 1.0] {
            let loss = LossConfig { rng_seed: 0, mu2: Some(mu2), ..LossConfig::default() };
            let ocfg = OptimizerConfig {
                regularizer: reg,
                loss,
                epi_fraction: ef,
                ..OptimizerConfig::default()
            };
            let t0 = Instant::now();
            let out = optimize(&scene.img1, &scene.img2, &ocfg, None).unwrap();
            let (mut ein, mut nin, mut eout, mut nout) = (0.0, 0usize, 0.0, 0usize);
            for y in 0..out.flow.height() {
                for x in 0..out.flow.width() {
                    let a = out.flow.get(x, y);
                    let b = scene.flow.get(x, y);
                    let e = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                    if x >= rect[0] && x < rect[1] && y >= rect[2] && y < rect[3] {
                        ein += e;
                        nin += 1;
                    } else {
                        eout += e;
                        nout += 1;
                    }
                }
            }
            println!(
                "reg={reg:?} mu2={mu2} ef={ef} epe={:.3} tile={:.3} rest={:.3} in {:.1?}",
                (ein + eout) / (nin + nout) as f64,
                ein / nin as f64,
                eout / nout as f64,
                t0.elapsed()
            );
            if matches!(reg, Regularizer::None) {
                break; // mu2 is irrelevant without a regularizer
            }
        }
    }
}

fn optimize_probe(case: SceneCase, regs: &[Regularizer], seeds: u64) {
    // repeated-texture rect of the rigid scene, for error decomposition
    let rect = [64usize, 192, 38, 154];
    let mu2: Option<f64> = std::env::args().nth(2).map(|s| s.parse().unwrap());
    let lambda_sub: Option<f64> = std::env::args().nth(3).map(|s| s.parse().unwrap());
    let iters: Option<usize> = std::env::args().nth(4).map(|s| s.parse().unwrap());
    let epi_levels: Option<usize> = std::env::args().nth(5).map(|s| s.parse().unwrap());
    for seed in 0..seeds {
        let scene = generate(case, seed);
        let zepe = scene.flow.data().iter().map(|f| (f[0] * f[0] + f[1] * f[1]).sqrt()).sum::<f64>()
            / scene.flow.data().len() as f64;
        println!("{case:?} seed={seed} zero-flow epe={zepe:.3}");
        for &reg in regs {
            let mut loss = LossConfig { rng_seed: seed, mu2, ..LossConfig::default() };
            if let Some(l) = lambda_sub {
                loss.lambda_sub = l;
            }
            let mut ocfg = OptimizerConfig { regularizer: reg, loss, ..OptimizerConfig::default() };
            if let Some(it) = iters {
                ocfg.iters_per_level = it;
            }
            if let Some(el) = epi_levels {
                ocfg.epi_levels = el;
            }
            let t0 = Instant::now();
            let out = optimize(&scene.img1, &scene.img2, &ocfg, None).unwrap();
            let ev = evaluate(&out.flow, &scene.flow, None, None).unwrap();
            let (mut ein, mut nin, mut eout, mut nout) = (0.0, 0usize, 0.0, 0usize);
            for y in 0..out.flow.height() {
                for x in 0..out.flow.width() {
                    let a = out.flow.get(x, y);
                    let b = scene.flow.get(x, y);
                    let e = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                    if x >= rect[0] && x < rect[1] && y >= rect[2] && y < rect[3] {
                        ein += e;
                        nin += 1;
                    } else {
                        eout += e;
                        nout += 1;
                    }
                }
            }
            println!(
                "{case:?} seed={seed} reg={reg:?} epe={:.3} fl={:.3} tile={:.3} rest={:.3} in {:.2?} advisories={:?}",
                ev.epe_all,
                ev.fl_all,
                ein / nin.max(1) as f64,
                eout / nout.max(1) as f64,
                t0.elapsed(),
                out.advisories
            );
        }
    }
}
