//! Visualization helpers: the 55-segment color wheel for flow fields, label
//! maps for segmentations, and grayscale affinity renderings.

use nalgebra::DMatrix;

use crate::types::{FlowField, Image};

/// Segment counts of the color wheel, in hue order: red-yellow, yellow-green,
/// green-cyan, cyan-blue, blue-magenta, magenta-red.
const WHEEL_SEGMENTS: [usize; 6] = [15, 6, 4, 11, 13, 6];

pub fn color_wheel() -> Vec<[f64; 3]> {
    let [ry, yg, gc, cb, bm, mr] = WHEEL_SEGMENTS;
    let mut wheel = Vec::with_capacity(ry + yg + gc + cb + bm + mr);
    for i in 0..ry {
        wheel.push([1.0, i as f64 / ry as f64, 0.0]);
    }
    for i in 0..yg {
        wheel.push([1.0 - i as f64 / yg as f64, 1.0, 0.0]);
    }
    for i in 0..gc {
        wheel.push([0.0, 1.0, i as f64 / gc as f64]);
    }
    for i in 0..cb {
        wheel.push([0.0, 1.0 - i as f64 / cb as f64, 1.0]);
    }
    for i in 0..bm {
        wheel.push([i as f64 / bm as f64, 0.0, 1.0]);
    }
    for i in 0..mr {
        wheel.push([1.0, 0.0, 1.0 - i as f64 / mr as f64]);
    }
    wheel
}

/// Renders a flow field with the color wheel: hue from direction, saturation
/// from magnitude. Zero flow is white; magnitudes above `max_norm` (or the
/// field maximum when absent) darken instead of saturating further.
pub fn flow_to_color(flow: &FlowField, max_norm: Option<f64>) -> Image {
    let wheel = color_wheel();
    let n = wheel.len();
    let rad_max = max_norm.unwrap_or_else(|| {
        flow.data()
            .iter()
            .map(|f| (f[0] * f[0] + f[1] * f[1]).sqrt())
            .fold(0.0, f64::max)
    });
    let rad_max = if rad_max > 1e-12 { rad_max } else { 1.0 };
    Image::from_fn(flow.width(), flow.height(), 3, |x, y, c| {
        let [u, v] = flow.get(x, y);
        if !u.is_finite() || !v.is_finite() {
            return 0.0;
        }
        let rad = (u * u + v * v).sqrt() / rad_max;
        let angle = (-v).atan2(-u) / std::f64::consts::PI; // in [-1, 1]
        let fk = (angle + 1.0) / 2.0 * (n - 1) as f64;
        let k0 = (fk.floor() as usize).min(n - 1);
        let k1 = (k0 + 1) % n;
        let f = fk - k0 as f64;
        let col = (1.0 - f) * wheel[k0][c] + f * wheel[k1][c];
        if rad <= 1.0 {
            1.0 - rad * (1.0 - col)
        } else {
            col * 0.75
        }
    })
}

/// Maximally spread hues for small label counts; golden-angle walk beyond.
fn label_palette(k: usize) -> Vec<[f64; 3]> {
    (0..k)
        .map(|i| {
            let hue = (i as f64 * 0.381966) % 1.0; // golden-ratio conjugate steps
            hsv_to_rgb(hue, 0.85, 0.95)
        })
        .collect()
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h.fract() + 1.0).fract() * 6.0;
    let i = h6.floor() as usize % 6;
    let f = h6 - h6.floor();
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Renders per-pixel labels as flat colors.
pub fn labels_to_color(labels: &[usize], width: usize, height: usize) -> Image {
    assert_eq!(labels.len(), width * height);
    let k = labels.iter().map(|&l| l + 1).max().unwrap_or(1);
    let palette = label_palette(k);
    Image::from_fn(width, height, 3, |x, y, c| palette[labels[y * width + x]][c])
}

/// Renders a nonnegative affinity matrix as a grayscale image, normalized by
/// its largest entry.
pub fn affinity_to_image(a: &DMatrix<f64>) -> Image {
    let m = a.iter().cloned().fold(0.0f64, f64::max);
    let scale = if m > 1e-300 { 1.0 / m } else { 1.0 };
    Image::from_fn(a.ncols(), a.nrows(), 1, |x, y, _| (a[(y, x)] * scale).clamp(0.0, 1.0))
}

/// Affinity heat map with the samples reordered so same-label rows sit next
/// to each other; a clean segmentation then shows as diagonal blocks.
pub fn affinity_image_ordered(a: &DMatrix<f64>, labels: &[usize]) -> Image {
    assert_eq!(a.nrows(), labels.len());
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by_key(|&i| (labels[i], i));
    let m = a.iter().cloned().fold(0.0f64, f64::max);
    let scale = if m > 1e-300 { 1.0 / m } else { 1.0 };
    Image::from_fn(a.ncols(), a.nrows(), 1, |x, y, _| {
        (a[(order[y], order[x])] * scale).clamp(0.0, 1.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wheel_has_55_distinct_saturated_colors() {
        let wheel = color_wheel();
        assert_eq!(wheel.len(), 55);
        for (i, c) in wheel.iter().enumerate() {
            let mx = c.iter().cloned().fold(0.0f64, f64::max);
            assert!((mx - 1.0).abs() < 1e-12, "entry {i} not saturated: {c:?}");
            for later in &wheel[i + 1..] {
                assert_ne!(c, later);
            }
        }
        assert_eq!(wheel[0], [1.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_flow_is_white_and_max_rightward_flow_is_red() {
        let flow = FlowField::from_fn(4, 1, |x, _| match x {
            0 => [0.0, 0.0],
            1 => [10.0, 0.0],  // rightward at the maximum
            2 => [-10.0, 0.0], // leftward
            _ => [5.0, 0.0],
        });
        let img = flow_to_color(&flow, None);
        for c in 0..3 {
            assert!((img.at(0, 0, c) - 1.0).abs() < 1e-12);
        }
        assert_eq!(
            [img.at(1, 0, 0), img.at(1, 0, 1), img.at(1, 0, 2)],
            [1.0, 0.0, 0.0]
        );
        // half magnitude: halfway between white and the full color
        assert!((img.at(3, 0, 1) - 0.5).abs() < 1e-12);
        assert!((img.at(3, 0, 0) - 1.0).abs() < 1e-12);
        // opposite direction lands on the other side of the wheel (cyan-ish)
        assert!(img.at(2, 0, 0) < 0.3);
        assert!(img.at(2, 0, 2) > 0.7);
    }

    #[test]
    fn over_range_flow_darkens() {
        let flow = FlowField::from_fn(1, 1, |_, _| [8.0, 0.0]);
        let img = flow_to_color(&flow, Some(4.0));
        assert_eq!(
            [img.at(0, 0, 0), img.at(0, 0, 1), img.at(0, 0, 2)],
            [0.75, 0.0, 0.0]
        );
    }

    #[test]
    fn label_rendering_gives_each_label_one_color() {
        let labels = vec![0, 1, 2, 0, 1, 2];
        let img = labels_to_color(&labels, 3, 2);
        for x in 0..3 {
            for c in 0..3 {
                assert_eq!(img.at(x, 0, c), img.at(x, 1, c));
            }
        }
        let a = [img.at(0, 0, 0), img.at(0, 0, 1), img.at(0, 0, 2)];
        let b = [img.at(1, 0, 0), img.at(1, 0, 1), img.at(1, 0, 2)];
        assert_ne!(a, b);
    }

    #[test]
    fn affinity_rendering_normalizes_to_unit_max() {
        let a = DMatrix::from_fn(3, 3, |i, j| (i + j) as f64);
        let img = affinity_to_image(&a);
        assert_eq!(img.at(2, 2, 0), 1.0);
        assert_eq!(img.at(0, 0, 0), 0.0);
        assert!((img.at(1, 1, 0) - 0.5).abs() < 1e-12);
    }
}
