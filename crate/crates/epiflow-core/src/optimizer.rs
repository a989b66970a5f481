//! Direct minimization of the combined flow objective over an image pyramid.
//!
//! Forward and backward flow fields descend together: each direction carries
//! its own momentum state, and the occlusion masks that gate the data terms
//! are re-derived from the current flow pair every iteration once the level's
//! warmup phase ends. Updates use per-pixel normalized gradients (each pixel
//! moves at most `step` per iteration); the epipolar term runs on the finest
//! level only and acts on a fresh random subset of visible pixels per
//! iteration, so its gradient lands on a given pixel only intermittently, and
//! the normalization caps how far one such spike can push a pixel no matter
//! how large the raw magnitude is.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::epipolar::{estimate_fundamental_8pt, sampson_gradient, FundamentalMatrix};
use crate::error::Error;
use crate::photometric::{occlusion_mask, photometric_losses, PhotometricContext};
use crate::smoothness::smoothness_loss;
use crate::subspace::{lift, nuclear_norm_gradient, sample_pixels, subspace_gradient};
use crate::types::{correspondences_at, FlowField, Image, LossConfig, OcclusionMask};

pub use crate::types::Regularizer;

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    /// Maximum pyramid depth; the actual depth also respects `min_coarse_side`.
    pub levels: usize,
    pub iters_per_level: usize,
    /// Initial step size in pixels per iteration (gradients are normalized
    /// per pixel before the update, so this bounds the per-pixel motion).
    pub step: f64,
    /// The step shrinks geometrically to `step * step_decay` across each
    /// level's iterations; 1.0 keeps it constant.
    pub step_decay: f64,
    pub momentum: f64,
    /// Apply a 3x3 per-component median filter to both flow fields every
    /// this-many iterations (0 disables). Votes out pixels that hopped into
    /// a locally inconsistent photometric well.
    pub median_interval: usize,
    /// Fraction of a level's iterations during which the epipolar term is
    /// active (from the start of the level). The remaining iterations descend
    /// on photometric + smoothness alone, letting the data term re-settle
    /// anything the geometric pull dragged off its optimum while keeping the
    /// disambiguations it produced (those are photometrically neutral).
    pub epi_fraction: f64,
    /// Number of finest pyramid levels on which the epipolar term runs
    /// (1 = finest only, the default). Deeper scope lets the geometry decide
    /// repeated-texture matches while the coarse data term is still blind to
    /// them, at the cost of pressing every level toward one epipolar model.
    pub epi_levels: usize,
    /// Leading iterations of each level during which occlusion masks stay
    /// all-visible.
    pub warmup_iters: usize,
    /// Iterations between re-estimations of F for the point-to-line term.
    pub f_refresh_interval: usize,
    /// Stop coarsening before the short image side would drop below this.
    pub min_coarse_side: usize,
    pub regularizer: Regularizer,
    pub loss: LossConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            levels: 4,
            iters_per_level: 200,
            step: 0.5,
            step_decay: 0.1,
            momentum: 0.9,
            median_interval: 1,
            epi_fraction: 1.0,
            epi_levels: 1,
            warmup_iters: 60,
            f_refresh_interval: 25,
            min_coarse_side: 32,
            regularizer: Regularizer::None,
            loss: LossConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LossReport {
    pub photometric: f64,
    pub smoothness: f64,
    pub epipolar: f64,
    /// photometric + mu1 * smoothness + mu2 * epipolar
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub flow: FlowField,
    pub backward: FlowField,
    /// Forward occlusion estimate at the returned flow pair.
    pub occlusion: OcclusionMask,
    /// Losses of the returned forward flow.
    pub report: LossReport,
    /// Forward-direction losses at every visited iterate, coarsest level
    /// first. The epipolar component is nonzero only where the term runs
    /// (finest level, active fraction).
    pub history: Vec<LossReport>,
    pub advisories: Vec<String>,
    pub iterations: usize,
}

// ---- pyramid ----

#[derive(Debug, Clone)]
pub struct Pyramid {
    /// Frame pairs, finest first.
    pub levels: Vec<(Image, Image)>,
}

/// Separable binomial blur ([1,4,6,4,1]/16 per axis, clamped borders).
fn binomial_blur(img: &Image) -> Image {
    const K: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let horiz = Image::from_fn(img.width(), img.height(), img.channels(), |x, y, c| {
        K.iter()
            .enumerate()
            .map(|(i, k)| k * img.at_clamped(x as isize + i as isize - 2, y as isize, c))
            .sum()
    });
    Image::from_fn(img.width(), img.height(), img.channels(), |x, y, c| {
        K.iter()
            .enumerate()
            .map(|(i, k)| k * horiz.at_clamped(x as isize, y as isize + i as isize - 2, c))
            .sum()
    })
}

/// Anti-aliased halving: binomial blur, then 2x2 area decimation. Plain box
/// decimation folds texture waves shorter than ~4 px into false low-frequency
/// structure at the coarse levels, and descent then locks onto those ghosts.
fn downsample(img: &Image) -> Image {
    let blurred = binomial_blur(img);
    let (w2, h2) = ((img.width() / 2).max(1), (img.height() / 2).max(1));
    Image::from_fn(w2, h2, img.channels(), |x, y, c| {
        let (sx, sy) = (2 * x, 2 * y);
        // 2x and 2x+1 are in bounds whenever x < floor(w/2)
        0.25 * (blurred.at(sx, sy, c)
            + blurred.at((sx + 1).min(img.width() - 1), sy, c)
            + blurred.at(sx, (sy + 1).min(img.height() - 1), c)
            + blurred.at((sx + 1).min(img.width() - 1), (sy + 1).min(img.height() - 1), c))
    })
}

/// Halving pyramid by 2x2 area averaging. Always yields at least one level;
/// never coarsens the short side below `min_side`.
pub fn build_pyramid(img1: &Image, img2: &Image, max_levels: usize, min_side: usize) -> Pyramid {
    assert_eq!(img1.width(), img2.width());
    assert_eq!(img1.height(), img2.height());
    let mut levels = vec![(img1.clone(), img2.clone())];
    while levels.len() < max_levels.max(1) {
        let (a, b) = levels.last().unwrap();
        if (a.width() / 2).min(a.height() / 2) < min_side {
            break;
        }
        levels.push((downsample(a), downsample(b)));
    }
    Pyramid { levels }
}

/// Doubles a flow field in both extent and magnitude. Fine pixel centers map to
/// coarse coordinates via x_c = (x_f - 0.5) / 2 (area-average alignment).
pub fn upsample_flow(flow: &FlowField, width: usize, height: usize) -> FlowField {
    FlowField::from_fn(width, height, |x, y| {
        let [u, v] = flow.sample_bilinear((x as f64 - 0.5) / 2.0, (y as f64 - 0.5) / 2.0);
        [2.0 * u, 2.0 * v]
    })
}

/// 3x3 per-component median with clamped borders.
fn median3(flow: &FlowField) -> FlowField {
    let (w, h) = (flow.width(), flow.height());
    FlowField::from_fn(w, h, |x, y| {
        let mut vals = [[0.0f64; 9]; 2];
        let mut n = 0;
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                let v = flow.get(sx, sy);
                vals[0][n] = v[0];
                vals[1][n] = v[1];
                n += 1;
            }
        }
        let mut out = [0.0f64; 2];
        for k in 0..2 {
            vals[k].sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            out[k] = vals[k][4];
        }
        out
    })
}

// ---- epipolar term ----

struct EpiTerm {
    loss: f64,
    /// (pixel index, d loss / d flow), only for sampled pixels.
    grads: Vec<(usize, [f64; 2])>,
}

impl EpiTerm {
    fn zero() -> Self {
        EpiTerm { loss: 0.0, grads: Vec::new() }
    }
}

/// Low-rank mode's flow direction: the nuclear-norm subgradient component
/// along the trailing singular direction of the lifted matrix, paired with
/// the full nuclear-norm loss value.
///
/// A rigid scene bounds the lifted matrix at rank 8, so the trailing
/// singular value measures exactly the epipolar violation; the leading
/// components of the subgradient pull on singular values that scene geometry
/// and the data term pin down, and they do not vanish even at a perfectly
/// consistent flow, so descending them drags well-matched pixels off their
/// optima without reducing the violation. Flow updates therefore use only
/// the trailing component.
fn lowrank_flow_gradient(lifted: &crate::subspace::LiftedMatrix) -> (f64, nalgebra::DMatrix<f64>) {
    let (loss, _) = nuclear_norm_gradient(lifted);
    let svd = lifted.h.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd requested u");
    let vt = svd.v_t.as_ref().expect("svd requested v_t");
    let last = svd.singular_values.len() - 1;
    let n = lifted.h.ncols();
    let mut gh = nalgebra::DMatrix::<f64>::zeros(9, n);
    for i in 0..n {
        for r in 0..9 {
            gh[(r, i)] = u[(r, last)] * vt[(last, i)];
        }
    }
    (loss, gh)
}

/// Samples visible pixels, lifts the implied correspondences, and evaluates the
/// selected epipolar consistency term with its gradient chained back to the
/// flow (x' = x + v, so d/dv equals d/dx').
fn epipolar_term(
    flow: &FlowField,
    occ: &OcclusionMask,
    reg: Regularizer,
    cfg: &LossConfig,
    fmat: &mut Option<FundamentalMatrix>,
    refresh: bool,
    seed: u64,
) -> EpiTerm {
    if matches!(reg, Regularizer::None) {
        return EpiTerm::zero();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idxs = match sample_pixels(occ, cfg.sample_count, &mut rng) {
        Ok(v) => v,
        Err(_) => return EpiTerm::zero(),
    };
    let corrs = correspondences_at(flow, &idxs);
    match reg {
        Regularizer::Sampson => {
            if refresh || fmat.is_none() {
                // keep the previous estimate when the current sample is degenerate
                if let Ok(f) = estimate_fundamental_8pt(&corrs) {
                    *fmat = Some(f);
                }
            }
            let Some(f) = fmat.as_ref() else { return EpiTerm::zero() };
            let (eval, grads) = sampson_gradient(&corrs, f);
            EpiTerm {
                loss: eval.loss,
                grads: idxs.iter().zip(grads).map(|(&i, g)| (i, [g[0], g[1]])).collect(),
            }
        }
        Regularizer::LowRank | Regularizer::Subspace => {
            if corrs.len() < 9 {
                return EpiTerm::zero();
            }
            let lifted = lift(&corrs, cfg.lift_normalize);
            let (loss, gh) = if matches!(reg, Regularizer::LowRank) {
                lowrank_flow_gradient(&lifted)
            } else {
                subspace_gradient(&lifted, cfg.lambda_sub)
            };
            // h = (x u', x v', x, y u', y v', y, u', v', 1) in normalized
            // coordinates; the similarity's linear part is an isotropic scale,
            // so d u'/d x' contributes one factor of that scale
            let mut grads = Vec::with_capacity(corrs.len());
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
                grads.push((idxs[i], [gx, gy]));
            }
            EpiTerm { loss, grads }
        }
        Regularizer::None => unreachable!(),
    }
}

/// Full objective of one flow direction at its current state: photometric data
/// term, weighted smoothness, and the epipolar term on a seeded pixel sample
/// (with F estimated from that same sample when the term needs one).
pub fn total_loss(
    reference: &Image,
    target: &Image,
    flow: &FlowField,
    occ: &OcclusionMask,
    reg: Regularizer,
    cfg: &LossConfig,
) -> Result<LossReport, Error> {
    let photo = photometric_losses(reference, target, flow, occ, cfg)?;
    let smooth = smoothness_loss(flow, reference, cfg);
    let mut fmat = None;
    let epi = epipolar_term(flow, occ, reg, cfg, &mut fmat, true, cfg.rng_seed);
    let mu2 = cfg.mu2_for(reg);
    Ok(LossReport {
        photometric: photo.combined,
        smoothness: smooth.total,
        epipolar: epi.loss,
        total: photo.combined + cfg.mu1 * smooth.total + mu2 * epi.loss,
    })
}

// ---- descent ----

struct MomentumState {
    m: Vec<[f64; 2]>,
}

impl MomentumState {
    fn new(n: usize) -> Self {
        MomentumState { m: vec![[0.0; 2]; n] }
    }

    /// Folds a pre-scaled descent direction into the momentum accumulator and
    /// moves the flow by `step * m`.
    fn apply(&mut self, flow: &mut FlowField, dir: &[[f64; 2]], step: f64, beta: f64) {
        for (i, f) in flow.data_mut().iter_mut().enumerate() {
            for k in 0..2 {
                self.m[i][k] = beta * self.m[i][k] + (1.0 - beta) * dir[i][k];
                f[k] -= step * self.m[i][k];
            }
        }
    }
}

fn derive_seed(base: u64, level: usize, iter: usize, dir: usize) -> u64 {
    let mut z = base ^ ((level as u64) << 40) ^ ((iter as u64) << 8) ^ dir as u64;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// One descent step of one direction. Returns the losses at the pre-update
/// flow. Falls back to an all-visible mask if the occlusion estimate left no
/// valid pixel at all.
#[allow(clippy::too_many_arguments)]
fn step_direction(
    ctx: &PhotometricContext,
    flow: &mut FlowField,
    occ: &OcclusionMask,
    mom: &mut MomentumState,
    fmat: &mut Option<FundamentalMatrix>,
    refresh: bool,
    epi_active: bool,
    cfg: &OptimizerConfig,
    step: f64,
    seed: u64,
) -> LossReport {
    let (photo, occ_used);
    match ctx.eval(flow, occ, &cfg.loss) {
        Ok(p) => {
            photo = p;
            occ_used = None;
        }
        Err(_) => {
            let all = OcclusionMask::all_visible(flow.width(), flow.height());
            photo = ctx
                .eval(flow, &all, &cfg.loss)
                .expect("all-visible photometric evaluation cannot lack valid pixels");
            occ_used = Some(all);
        }
    }
    let occ_eff = occ_used.as_ref().unwrap_or(occ);
    let smooth = smoothness_loss(flow, ctx.reference(), &cfg.loss);
    let mu2 = cfg.loss.mu2_for(cfg.regularizer);
    let epi = if epi_active && mu2 > 0.0 {
        epipolar_term(flow, occ_eff, cfg.regularizer, &cfg.loss, fmat, refresh, seed)
    } else {
        EpiTerm::zero()
    };

    // Per-pixel normalized photometric + smoothness direction: every pixel
    // travels at most `step` per iteration no matter how its local gradient
    // scales, which is what lets weakly textured pixels keep pace. The
    // epipolar gradient is added afterwards at its true relative magnitude,
    // rescaled by the mean data-term gradient: in well-matched regions the
    // data direction is coherent and holds the flow in place, while in
    // ambiguous regions it is zero-mean noise and even a small but persistent
    // geometric pull decides the outcome. Dividing by the mean data gradient
    // also mutes the geometry early (large data gradients during travel) and
    // lets it act only once the data term has settled.
    let n = flow.width() * flow.height();
    let mut dir = vec![[0.0f64; 2]; n];
    let mut mean_mag = 0.0;
    for i in 0..n {
        let g = [
            photo.grad[i][0] + cfg.loss.mu1 * smooth.grad[i][0],
            photo.grad[i][1] + cfg.loss.mu1 * smooth.grad[i][1],
        ];
        let mag = (g[0] * g[0] + g[1] * g[1]).sqrt();
        mean_mag += mag;
        let inv = 1.0 / (mag + 1e-8);
        dir[i] = [g[0] * inv, g[1] * inv];
    }
    mean_mag = (mean_mag / n as f64).max(1e-12);
    const EPI_CLIP: f64 = 3.0;
    for (i, g) in &epi.grads {
        let mut ex = mu2 * g[0] / mean_mag;
        let mut ey = mu2 * g[1] / mean_mag;
        let m = (ex * ex + ey * ey).sqrt();
        if m > EPI_CLIP {
            ex *= EPI_CLIP / m;
            ey *= EPI_CLIP / m;
        }
        dir[*i][0] += ex;
        dir[*i][1] += ey;
    }
    mom.apply(flow, &dir, step, cfg.momentum);

    LossReport {
        photometric: photo.combined,
        smoothness: smooth.total,
        epipolar: epi.loss,
        total: photo.combined + cfg.loss.mu1 * smooth.total + mu2 * epi.loss,
    }
}

fn run_pyramid(
    pyr: &Pyramid,
    mut fwd: FlowField,
    mut bwd: FlowField,
    cfg: &OptimizerConfig,
) -> Result<OptimizeResult, Error> {
    let w0 = pyr.levels[0].0.width();
    let mut advisories = Vec::new();
    let mut iterations = 0usize;
    let mut history = Vec::with_capacity(cfg.iters_per_level * pyr.levels.len());

    for level in (0..pyr.levels.len()).rev() {
        let (i1, i2) = &pyr.levels[level];
        let (w, h) = (i1.width(), i1.height());
        if fwd.width() != w || fwd.height() != h {
            fwd = upsample_flow(&fwd, w, h);
            bwd = upsample_flow(&bwd, w, h);
        }
        let ctx_f = PhotometricContext::new(i1, i2, &cfg.loss);
        let ctx_b = PhotometricContext::new(i2, i1, &cfg.loss);
        // the forward/backward threshold shrinks with the level because the
        // true flows do, but only down to half: residual optimization error
        // does not shrink with the level, and a too-tight threshold gates the
        // data term off exactly where descent still has work to do
        let tau = cfg.loss.tau * (w as f64 / w0 as f64).max(0.5);
        let mut mom_f = MomentumState::new(w * h);
        let mut mom_b = MomentumState::new(w * h);
        let mut fmat_f: Option<FundamentalMatrix> = None;
        let mut fmat_b: Option<FundamentalMatrix> = None;
        let finest = level == 0;
        // best iterate of this level, scored by data + smoothness only: the
        // epipolar term shapes the search but must not be able to mask a
        // photometrically worse field in the selection
        let mut best: Option<(f64, FlowField, FlowField)> = None;
        let mut best_iter = 0usize;

        for iter in 0..cfg.iters_per_level {
            let warm = iter < cfg.warmup_iters;
            let (occ_f, occ_b) = if warm {
                (OcclusionMask::all_visible(w, h), OcclusionMask::all_visible(w, h))
            } else {
                (occlusion_mask(&fwd, &bwd, tau), occlusion_mask(&bwd, &fwd, tau))
            };
            let refresh = iter % cfg.f_refresh_interval.max(1) == 0;
            let frac = iter as f64 / (cfg.iters_per_level - 1).max(1) as f64;
            let step = cfg.step * cfg.step_decay.powf(frac);
            // geometry runs on the `epi_levels` finest levels only; by default
            // just the finest, so a multi-motion scene is not dragged toward
            // one coarse epipolar model
            let epi_active = level < cfg.epi_levels.max(1)
                && (iter as f64) < cfg.epi_fraction * cfg.iters_per_level as f64;
            let pre_f = fwd.clone();
            let pre_b = bwd.clone();
            let rep_f = step_direction(
                &ctx_f,
                &mut fwd,
                &occ_f,
                &mut mom_f,
                &mut fmat_f,
                refresh,
                epi_active,
                cfg,
                step,
                derive_seed(cfg.loss.rng_seed, level, iter, 0),
            );
            let rep_b = step_direction(
                &ctx_b,
                &mut bwd,
                &occ_b,
                &mut mom_b,
                &mut fmat_b,
                refresh,
                epi_active,
                cfg,
                step,
                derive_seed(cfg.loss.rng_seed, level, iter, 1),
            );
            if cfg.median_interval > 0 && (iter + 1) % cfg.median_interval == 0 {
                fwd = median3(&fwd);
                bwd = median3(&bwd);
            }
            let score = rep_f.photometric
                + cfg.loss.mu1 * rep_f.smoothness
                + rep_b.photometric
                + cfg.loss.mu1 * rep_b.smoothness;
            if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
                best = Some((score, pre_f, pre_b));
                best_iter = iter;
            }
            history.push(rep_f.clone());
            iterations += 1;
        }

        if let Some((_, bf, bb)) = best {
            fwd = bf;
            bwd = bb;
        }
        if finest && cfg.iters_per_level >= 8 {
            let tail = cfg.iters_per_level / 4;
            if best_iter + tail < cfg.iters_per_level {
                advisories.push(format!(
                    "NonConvergence: no finest-level improvement in the last {} of {} iterations",
                    cfg.iters_per_level - 1 - best_iter,
                    cfg.iters_per_level
                ));
            }
        }
    }
    let occlusion = occlusion_mask(&fwd, &bwd, cfg.loss.tau);
    let (i1, i2) = &pyr.levels[0];
    let report = total_loss(i1, i2, &fwd, &occlusion, cfg.regularizer, &cfg.loss)?;
    Ok(OptimizeResult {
        flow: fwd,
        backward: bwd,
        occlusion,
        report,
        history,
        advisories,
        iterations,
    })
}

/// Resamples a flow field to a new extent, scaling each component by the
/// extent ratio of its axis.
fn resize_flow(flow: &FlowField, width: usize, height: usize) -> FlowField {
    let sx = flow.width() as f64 / width as f64;
    let sy = flow.height() as f64 / height as f64;
    FlowField::from_fn(width, height, |x, y| {
        let [u, v] = flow
            .sample_bilinear((x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5);
        [u / sx, v / sy]
    })
}

/// Estimates forward and backward flow between two frames, coarse to fine.
/// `init`, when given, seeds the coarsest level (it must match the frame
/// extent and is resampled down); otherwise descent starts from zero flow.
pub fn optimize(
    img1: &Image,
    img2: &Image,
    cfg: &OptimizerConfig,
    init: Option<&FlowField>,
) -> Result<OptimizeResult, Error> {
    if img1.width() != img2.width() || img1.height() != img2.height() {
        return Err(Error::DimensionMismatch(format!(
            "frame sizes differ: {}x{} vs {}x{}",
            img1.width(),
            img1.height(),
            img2.width(),
            img2.height()
        )));
    }
    let pyr = build_pyramid(img1, img2, cfg.levels, cfg.min_coarse_side);
    let coarsest = pyr.levels.len() - 1;
    let (w, h) = (pyr.levels[coarsest].0.width(), pyr.levels[coarsest].0.height());
    let (fwd, bwd) = match init {
        Some(f) => {
            if f.width() != img1.width() || f.height() != img1.height() {
                return Err(Error::DimensionMismatch(format!(
                    "init flow {}x{} does not match frame {}x{}",
                    f.width(),
                    f.height(),
                    img1.width(),
                    img1.height()
                )));
            }
            let fwd = resize_flow(f, w, h);
            let mut bwd = fwd.clone();
            for v in bwd.data_mut() {
                v[0] = -v[0];
                v[1] = -v[1];
            }
            (fwd, bwd)
        }
        None => (FlowField::new(w, h), FlowField::new(w, h)),
    };
    run_pyramid(&pyr, fwd, bwd, cfg)
}

/// Refines a given flow at full resolution only (no pyramid). The backward
/// initialization defaults to the negated forward flow when absent.
pub fn finetune_epipolar(
    img1: &Image,
    img2: &Image,
    init_fwd: &FlowField,
    init_bwd: Option<&FlowField>,
    cfg: &OptimizerConfig,
) -> Result<OptimizeResult, Error> {
    if init_fwd.width() != img1.width() || init_fwd.height() != img1.height() {
        return Err(Error::DimensionMismatch(format!(
            "flow {}x{} does not match frame {}x{}",
            init_fwd.width(),
            init_fwd.height(),
            img1.width(),
            img1.height()
        )));
    }
    let bwd = match init_bwd {
        Some(b) => {
            if b.width() != init_fwd.width() || b.height() != init_fwd.height() {
                return Err(Error::DimensionMismatch(
                    "backward initialization does not match the forward flow".into(),
                ));
            }
            b.clone()
        }
        None => {
            let mut neg = init_fwd.clone();
            for f in neg.data_mut() {
                f[0] = -f[0];
                f[1] = -f[1];
            }
            neg
        }
    };
    let pyr = Pyramid { levels: vec![(img1.clone(), img2.clone())] };
    run_pyramid(&pyr, init_fwd.clone(), bwd, cfg)
}
