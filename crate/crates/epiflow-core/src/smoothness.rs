//! Edge-aware flow smoothness: first-order term weighted by image gradients,
//! second-order term weighted by image curvature, both l1, averaged over pixels.

use crate::types::{FlowField, Image, LossConfig};

#[derive(Debug, Clone)]
pub struct SmoothnessEval {
    pub first_order: f64,
    pub second_order: f64,
    pub total: f64,
    /// d(total)/d(u, v) per pixel.
    pub grad: Vec<[f64; 2]>,
}

#[inline]
fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// total = sum_p ( exp(-a1 |grad I|_1) |grad V|_1 + exp(-a2 |lap I|_1) |lap V|_1 ) / N
/// with forward differences for the first order and per-axis 1D second
/// differences for the second order. Differences that would read past the
/// border are dropped. Weights come from the single-channel view of `img`.
pub fn smoothness_loss(flow: &FlowField, img: &Image, cfg: &LossConfig) -> SmoothnessEval {
    let (w, h) = (flow.width(), flow.height());
    assert_eq!((img.width(), img.height()), (w, h));
    let gray = img.to_gray();
    let n = (w * h) as f64;
    let mut first = 0.0;
    let mut second = 0.0;
    let mut grad = vec![[0.0f64; 2]; w * h];

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;

            // first order: forward differences
            let mut gi = 0.0;
            if x + 1 < w {
                gi += (gray.at(x + 1, y, 0) - gray.at(x, y, 0)).abs();
            }
            if y + 1 < h {
                gi += (gray.at(x, y + 1, 0) - gray.at(x, y, 0)).abs();
            }
            let w1 = (-cfg.alpha1 * gi).exp();
            for k in 0..2 {
                if x + 1 < w {
                    let d = flow.get(x + 1, y)[k] - flow.get(x, y)[k];
                    first += w1 * d.abs();
                    let s = w1 * sgn(d) / n;
                    grad[i + 1][k] += s;
                    grad[i][k] -= s;
                }
                if y + 1 < h {
                    let d = flow.get(x, y + 1)[k] - flow.get(x, y)[k];
                    first += w1 * d.abs();
                    let s = w1 * sgn(d) / n;
                    grad[i + w][k] += s;
                    grad[i][k] -= s;
                }
            }

            // second order: 1D second differences per axis
            let mut li = 0.0;
            if x >= 1 && x + 1 < w {
                li += (gray.at(x + 1, y, 0) - 2.0 * gray.at(x, y, 0) + gray.at(x - 1, y, 0)).abs();
            }
            if y >= 1 && y + 1 < h {
                li += (gray.at(x, y + 1, 0) - 2.0 * gray.at(x, y, 0) + gray.at(x, y - 1, 0)).abs();
            }
            let w2 = (-cfg.alpha2 * li).exp();
            for k in 0..2 {
                if x >= 1 && x + 1 < w {
                    let d = flow.get(x + 1, y)[k] - 2.0 * flow.get(x, y)[k] + flow.get(x - 1, y)[k];
                    second += w2 * d.abs();
                    let s = w2 * sgn(d) / n;
                    grad[i + 1][k] += s;
                    grad[i - 1][k] += s;
                    grad[i][k] -= 2.0 * s;
                }
                if y >= 1 && y + 1 < h {
                    let d = flow.get(x, y + 1)[k] - 2.0 * flow.get(x, y)[k] + flow.get(x, y - 1)[k];
                    second += w2 * d.abs();
                    let s = w2 * sgn(d) / n;
                    grad[i + w][k] += s;
                    grad[i - w][k] += s;
                    grad[i][k] -= 2.0 * s;
                }
            }
        }
    }

    first /= n;
    second /= n;
    SmoothnessEval { first_order: first, second_order: second, total: first + second, grad }
}
