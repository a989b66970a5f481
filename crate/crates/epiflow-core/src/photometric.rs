//! Data terms: bilinear warping, forward-backward occlusion reasoning, census
//! signatures, and the three-part photometric loss with its flow gradient.

use crate::error::Error;
use crate::types::{charbonnier, charbonnier_deriv, FlowField, Image, LossConfig, OcclusionMask};

/// Warped image plus the per-pixel validity of the sample position. Invalid
/// pixels still hold the clamped-position sample so downstream reads are defined.
#[derive(Debug, Clone)]
pub struct Warped {
    pub image: Image,
    pub validity: Vec<bool>,
}

/// Backward-warps `target` by the flow: out(x) = target(x + v(x)), bilinear.
/// A sample is valid when the displaced position lies inside [0, W-1] x [0, H-1].
pub fn warp(target: &Image, flow: &FlowField) -> Warped {
    assert_eq!(target.width(), flow.width());
    assert_eq!(target.height(), flow.height());
    let (w, h, c) = (target.width(), target.height(), target.channels());
    let mut out = Image::new(w, h, c);
    let mut validity = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let [u, v] = flow.get(x, y);
            let sx = x as f64 + u;
            let sy = y as f64 + v;
            validity[y * w + x] =
                sx >= 0.0 && sx <= (w - 1) as f64 && sy >= 0.0 && sy <= (h - 1) as f64;
            for ch in 0..c {
                out.set(x, y, ch, target.sample_bilinear(sx, sy, ch));
            }
        }
    }
    Warped { image: out, validity }
}

/// Forward-backward consistency: pixel x is visible when
/// || v_fwd(x) + v_bwd(x + v_fwd(x)) || <= tau. Targets that leave the image are
/// marked occluded outright.
pub fn occlusion_mask(fwd: &FlowField, bwd: &FlowField, tau: f64) -> OcclusionMask {
    let (w, h) = (fwd.width(), fwd.height());
    assert_eq!((bwd.width(), bwd.height()), (w, h));
    let mut mask = OcclusionMask::all_visible(w, h);
    for y in 0..h {
        for x in 0..w {
            let [u, v] = fwd.get(x, y);
            let tx = x as f64 + u;
            let ty = y as f64 + v;
            if tx < 0.0 || tx > (w - 1) as f64 || ty < 0.0 || ty > (h - 1) as f64 {
                mask.set(x, y, false);
                continue;
            }
            let back = bwd.sample_bilinear(tx, ty);
            let rx = u + back[0];
            let ry = v + back[1];
            mask.set(x, y, (rx * rx + ry * ry).sqrt() <= tau);
        }
    }
    mask
}

/// Hard ternary census signatures: one value in {-1, 0, +1} per in-window
/// neighbor (center excluded), row-major over the window. Border neighbors are
/// read clamped to the edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CensusMap {
    pub width: usize,
    pub height: usize,
    pub radius: usize,
    /// (2r+1)^2 - 1 entries per pixel.
    pub data: Vec<i8>,
}

impl CensusMap {
    pub fn signature_len(&self) -> usize {
        let side = 2 * self.radius + 1;
        side * side - 1
    }

    pub fn signature(&self, x: usize, y: usize) -> &[i8] {
        let k = self.signature_len();
        let i = (y * self.width + x) * k;
        &self.data[i..i + k]
    }
}

/// Census transform of a single-channel image: each neighbor compared to the
/// center, differences within +-eps collapse to 0. Invariant to global additive
/// brightness changes by construction.
pub fn census_transform(img: &Image, radius: usize, eps: f64) -> CensusMap {
    assert_eq!(img.channels(), 1, "census runs on single-channel images");
    let (w, h) = (img.width(), img.height());
    let k = (2 * radius + 1) * (2 * radius + 1) - 1;
    let mut data = vec![0i8; w * h * k];
    for y in 0..h {
        for x in 0..w {
            let center = img.at(x, y, 0);
            let mut slot = (y * w + x) * k;
            for dy in -(radius as isize)..=radius as isize {
                for dx in -(radius as isize)..=radius as isize {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let v = img.at_clamped(x as isize + dx, y as isize + dy, 0);
                    let d = v - center;
                    data[slot] = if d > eps {
                        1
                    } else if d < -eps {
                        -1
                    } else {
                        0
                    };
                    slot += 1;
                }
            }
        }
    }
    CensusMap { width: w, height: h, radius, data }
}

/// Smooth ternary comparison used inside the census loss: saturates to +-1 away
/// from zero, slope 1/eps at the origin. Differentiable counterpart of the hard
/// {-1, 0, +1} signature.
#[inline]
fn soft_sign(t: f64, eps: f64) -> f64 {
    t / (t * t + eps * eps).sqrt()
}

#[inline]
fn soft_sign_deriv(t: f64, eps: f64) -> f64 {
    let d = t * t + eps * eps;
    eps * eps / (d * d.sqrt())
}

/// Smoothing width of the absolute value inside the census distance. Keeps the
/// loss differentiable where a signature difference crosses zero; the -eta
/// offset keeps identical signatures at exactly zero distance.
const CENSUS_ABS_SMOOTHING: f64 = 1e-3;

#[inline]
fn smooth_abs(t: f64) -> f64 {
    (t * t + CENSUS_ABS_SMOOTHING * CENSUS_ABS_SMOOTHING).sqrt() - CENSUS_ABS_SMOOTHING
}

#[inline]
fn smooth_abs_deriv(t: f64) -> f64 {
    t / (t * t + CENSUS_ABS_SMOOTHING * CENSUS_ABS_SMOOTHING).sqrt()
}

/// Scalar losses plus the per-pixel gradient of the weighted combination with
/// respect to the flow.
#[derive(Debug, Clone)]
pub struct PhotometricEval {
    pub intensity: f64,
    pub census: f64,
    pub gradient: f64,
    /// lambda1 * intensity + lambda2 * census + lambda3 * gradient.
    pub combined: f64,
    /// d(combined)/d(u, v) per pixel.
    pub grad: Vec<[f64; 2]>,
    /// Pixels that entered the averages (visible and validly warped).
    pub valid_count: usize,
}

/// Frame-pair state reused across evaluations at one pyramid level: grayscale
/// views and the reference census signatures.
pub struct PhotometricContext {
    reference: Image,
    target: Image,
    ref_gray: Image,
    tgt_gray: Image,
    /// Soft census signatures of the reference, (2r+1)^2-1 per pixel.
    ref_sig: Vec<f64>,
    offsets: Vec<(isize, isize)>,
}

impl PhotometricContext {
    pub fn new(reference: &Image, target: &Image, cfg: &LossConfig) -> Self {
        assert_eq!(reference.width(), target.width());
        assert_eq!(reference.height(), target.height());
        let ref_gray = reference.to_gray();
        let tgt_gray = target.to_gray();
        let r = cfg.census_radius as isize;
        let mut offsets = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                if dx != 0 || dy != 0 {
                    offsets.push((dx, dy));
                }
            }
        }
        let (w, h) = (reference.width(), reference.height());
        let k = offsets.len();
        let mut ref_sig = vec![0f64; w * h * k];
        for y in 0..h {
            for x in 0..w {
                let center = ref_gray.at(x, y, 0);
                let base = (y * w + x) * k;
                for (j, &(dx, dy)) in offsets.iter().enumerate() {
                    let v = ref_gray.at_clamped(x as isize + dx, y as isize + dy, 0);
                    ref_sig[base + j] = soft_sign(v - center, cfg.census_eps);
                }
            }
        }
        PhotometricContext {
            reference: reference.clone(),
            target: target.clone(),
            ref_gray,
            tgt_gray,
            ref_sig,
            offsets,
        }
    }

    pub fn reference(&self) -> &Image {
        &self.reference
    }

    /// Central difference of a single-channel image with clamped neighbors.
    #[inline]
    fn central_diff(img: &Image, x: usize, y: usize) -> (f64, f64) {
        let gx = (img.at_clamped(x as isize + 1, y as isize, 0)
            - img.at_clamped(x as isize - 1, y as isize, 0))
            / 2.0;
        let gy = (img.at_clamped(x as isize, y as isize + 1, 0)
            - img.at_clamped(x as isize, y as isize - 1, 0))
            / 2.0;
        (gx, gy)
    }

    pub fn eval(
        &self,
        flow: &FlowField,
        occ: &OcclusionMask,
        cfg: &LossConfig,
    ) -> Result<PhotometricEval, Error> {
        let (w, h) = (self.reference.width(), self.reference.height());
        assert_eq!((flow.width(), flow.height()), (w, h));
        assert_eq!((occ.width(), occ.height()), (w, h));
        let channels = self.reference.channels();
        let eps = cfg.charbonnier_eps;
        let k = self.offsets.len();

        let warped = warp(&self.target, flow);
        // warped gray equals warp of the gray target because both luma and
        // bilinear sampling are linear
        let warped_gray = warp(&self.tgt_gray, flow).image;

        let mut weight = vec![false; w * h];
        let mut valid_count = 0usize;
        for i in 0..w * h {
            weight[i] = occ.data()[i] && warped.validity[i];
            if weight[i] {
                valid_count += 1;
            }
        }
        if valid_count == 0 {
            return Err(Error::NoValidPixels);
        }
        let norm = valid_count as f64;

        let mut l_int = 0.0;
        let mut l_grad = 0.0;
        let mut l_cen = 0.0;
        // adjoints on the warped fields
        let mut d_color = vec![0.0f64; w * h * channels];
        let mut d_gray = vec![0.0f64; w * h];
        let mut pending = vec![0.0f64; k];

        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if !weight[i] {
                    continue;
                }
                // intensity: per-channel Charbonnier, averaged over channels
                for c in 0..channels {
                    let diff = warped.image.at(x, y, c) - self.reference.at(x, y, c);
                    l_int += charbonnier(diff, eps) / (channels as f64 * norm);
                    d_color[i * channels + c] +=
                        cfg.lambda1 * charbonnier_deriv(diff, eps) / (channels as f64 * norm);
                }

                // gradient: central differences on the gray views, averaged over axes
                let (wgx, wgy) = Self::central_diff(&warped_gray, x, y);
                let (rgx, rgy) = Self::central_diff(&self.ref_gray, x, y);
                let dgx = wgx - rgx;
                let dgy = wgy - rgy;
                l_grad += (charbonnier(dgx, eps) + charbonnier(dgy, eps)) / (2.0 * norm);
                let cx = cfg.lambda3 * charbonnier_deriv(dgx, eps) / (4.0 * norm);
                let cy = cfg.lambda3 * charbonnier_deriv(dgy, eps) / (4.0 * norm);
                let xp = (x + 1).min(w - 1);
                let xm = x.saturating_sub(1);
                let yp = (y + 1).min(h - 1);
                let ym = y.saturating_sub(1);
                d_gray[y * w + xp] += cx;
                d_gray[y * w + xm] -= cx;
                d_gray[yp * w + x] += cy;
                d_gray[ym * w + x] -= cy;

                // census: soft Hamming distance between soft ternary signatures
                let center = warped_gray.at(x, y, 0);
                let base = i * k;
                let mut dist = 0.0;
                for (j, &(dx, dy)) in self.offsets.iter().enumerate() {
                    let nb = warped_gray.at_clamped(x as isize + dx, y as isize + dy, 0);
                    let delta = nb - center;
                    let s = soft_sign(delta, cfg.census_eps);
                    let diff = s - self.ref_sig[base + j];
                    dist += smooth_abs(diff);
                    pending[j] = smooth_abs_deriv(diff) * soft_sign_deriv(delta, cfg.census_eps);
                }
                dist /= k as f64;
                l_cen += charbonnier(dist, eps) / norm;
                let coeff = cfg.lambda2 * charbonnier_deriv(dist, eps) / (k as f64 * norm);
                for (j, &(dx, dy)) in self.offsets.iter().enumerate() {
                    let g = coeff * pending[j];
                    if g == 0.0 {
                        continue;
                    }
                    let nx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                    let ny = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                    d_gray[ny * w + nx] += g;
                    d_gray[i] -= g;
                }
            }
        }

        // chain the field adjoints through the bilinear sampler
        let mut grad = vec![[0.0f64; 2]; w * h];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let [u, v] = flow.get(x, y);
                let sx = x as f64 + u;
                let sy = y as f64 + v;
                let mut gu = 0.0;
                let mut gv = 0.0;
                for c in 0..channels {
                    let a = d_color[i * channels + c];
                    if a != 0.0 {
                        let (ix, iy) = self.target.sample_bilinear_grad(sx, sy, c);
                        gu += a * ix;
                        gv += a * iy;
                    }
                }
                let ag = d_gray[i];
                if ag != 0.0 {
                    let (ix, iy) = self.tgt_gray.sample_bilinear_grad(sx, sy, 0);
                    gu += ag * ix;
                    gv += ag * iy;
                }
                grad[i] = [gu, gv];
            }
        }

        Ok(PhotometricEval {
            intensity: l_int,
            census: l_cen,
            gradient: l_grad,
            combined: cfg.lambda1 * l_int + cfg.lambda2 * l_cen + cfg.lambda3 * l_grad,
            grad,
            valid_count,
        })
    }
}

/// One-shot evaluation of the three photometric terms. Callers in a loop should
/// build a `PhotometricContext` once and reuse it.
pub fn photometric_losses(
    reference: &Image,
    target: &Image,
    flow: &FlowField,
    occ: &OcclusionMask,
    cfg: &LossConfig,
) -> Result<PhotometricEval, Error> {
    PhotometricContext::new(reference, target, cfg).eval(flow, occ, cfg)
}
