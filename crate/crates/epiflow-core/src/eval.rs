//! Flow accuracy metrics: mean endpoint error over all and over non-occluded
//! pixels, and the fraction of outliers (error above 3 px and above 5% of the
//! true magnitude).

use serde::Serialize;

use crate::error::Error;
use crate::types::FlowField;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub epe_all: f64,
    /// Endpoint error restricted to non-occluded pixels; equals `epe_all` when
    /// no occlusion mask is supplied.
    pub epe_noc: f64,
    /// Outlier fraction: error > 3 px and > 5% of the ground-truth magnitude.
    pub fl_all: f64,
    /// Number of pixels that entered the `all` statistics.
    pub valid_count: usize,
}

/// Compares an estimate against ground truth. `valid` selects the pixels with
/// usable ground truth; `noc` additionally selects non-occluded ones for
/// `epe_noc`. Masks are per-pixel, row-major, matching the flow extent.
pub fn evaluate(
    flow: &FlowField,
    truth: &FlowField,
    valid: Option<&[bool]>,
    noc: Option<&[bool]>,
) -> Result<EvalResult, Error> {
    if flow.width() != truth.width() || flow.height() != truth.height() {
        return Err(Error::DimensionMismatch(format!(
            "flow {}x{} vs ground truth {}x{}",
            flow.width(),
            flow.height(),
            truth.width(),
            truth.height()
        )));
    }
    let n = flow.data().len();
    for (name, m) in [("valid", valid), ("noc", noc)] {
        if let Some(m) = m {
            if m.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{name} mask has {} entries for {n} pixels",
                    m.len()
                )));
            }
        }
    }

    let mut sum_all = 0.0;
    let mut count_all = 0usize;
    let mut sum_noc = 0.0;
    let mut count_noc = 0usize;
    let mut outliers = 0usize;
    for i in 0..n {
        if !valid.map_or(true, |m| m[i]) {
            continue;
        }
        let [u, v] = flow.data()[i];
        let [gu, gv] = truth.data()[i];
        let err = ((u - gu).powi(2) + (v - gv).powi(2)).sqrt();
        sum_all += err;
        count_all += 1;
        let mag = (gu * gu + gv * gv).sqrt();
        if err > 3.0 && err > 0.05 * mag {
            outliers += 1;
        }
        if noc.map_or(true, |m| m[i]) {
            sum_noc += err;
            count_noc += 1;
        }
    }
    if count_all == 0 {
        return Err(Error::NoValidPixels);
    }
    Ok(EvalResult {
        epe_all: sum_all / count_all as f64,
        epe_noc: if count_noc > 0 { sum_noc / count_noc as f64 } else { 0.0 },
        fl_all: outliers as f64 / count_all as f64,
        valid_count: count_all,
    })
}
