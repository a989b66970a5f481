//! Shared containers: images, flow fields, masks, correspondences, loss weights.

use nalgebra::Vector3;

use crate::error::Error;

/// Row-major interleaved intensity image, values in [0, 1], 1 or 3 channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

/// Rec. 601 luma weights, used wherever a single-channel view of a color image is needed.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Image { width, height, channels, data: vec![0.0; width * height * channels] }
    }

    pub fn from_fn<F: FnMut(usize, usize, usize) -> f64>(
        width: usize,
        height: usize,
        channels: usize,
        mut f: F,
    ) -> Self {
        let mut img = Image::new(width, height, channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    let v = f(x, y, c);
                    img.data[(y * width + x) * channels + c] = v;
                }
            }
        }
        img
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height * channels);
        assert!(channels == 1 || channels == 3);
        Image { width, height, channels, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Pixel read with clamp-to-edge semantics for out-of-range integer coordinates.
    #[inline]
    pub fn at_clamped(&self, x: isize, y: isize, c: usize) -> f64 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.at(xc, yc, c)
    }

    /// Bilinear sample at a continuous position. The position is clamped into
    /// [0, W-1] x [0, H-1] first, so every call returns a defined value.
    pub fn sample_bilinear(&self, x: f64, y: f64, c: usize) -> f64 {
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = xc.floor() as usize;
        let y0 = yc.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = xc - x0 as f64;
        let fy = yc - y0 as f64;
        let v00 = self.at(x0, y0, c);
        let v10 = self.at(x1, y0, c);
        let v01 = self.at(x0, y1, c);
        let v11 = self.at(x1, y1, c);
        v00 * (1.0 - fx) * (1.0 - fy)
            + v10 * fx * (1.0 - fy)
            + v01 * (1.0 - fx) * fy
            + v11 * fx * fy
    }

    /// Spatial derivative of the bilinear interpolant at a continuous position,
    /// (d/dx, d/dy). Piecewise constant per cell; positions are clamped like
    /// `sample_bilinear`.
    pub fn sample_bilinear_grad(&self, x: f64, y: f64, c: usize) -> (f64, f64) {
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = xc.floor() as usize;
        let y0 = yc.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = xc - x0 as f64;
        let fy = yc - y0 as f64;
        let v00 = self.at(x0, y0, c);
        let v10 = self.at(x1, y0, c);
        let v01 = self.at(x0, y1, c);
        let v11 = self.at(x1, y1, c);
        // beyond the border the clamped interpolant is constant along that
        // axis, so the matching derivative component is zero
        let dx = if x < 0.0 || x > (self.width - 1) as f64 {
            0.0
        } else {
            (v10 - v00) * (1.0 - fy) + (v11 - v01) * fy
        };
        let dy = if y < 0.0 || y > (self.height - 1) as f64 {
            0.0
        } else {
            (v01 - v00) * (1.0 - fx) + (v11 - v10) * fx
        };
        (dx, dy)
    }

    /// Single-channel view: identity for 1-channel images, luma for 3-channel.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        Image::from_fn(self.width, self.height, 1, |x, y, _| {
            LUMA[0] * self.at(x, y, 0) + LUMA[1] * self.at(x, y, 1) + LUMA[2] * self.at(x, y, 2)
        })
    }
}

/// Dense displacement field: per-pixel (u, v) in pixels, image-1 to image-2.
/// Origin is the top-left pixel center, x right, y down.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    data: Vec<[f64; 2]>,
}

impl FlowField {
    pub fn new(width: usize, height: usize) -> Self {
        FlowField { width, height, data: vec![[0.0, 0.0]; width * height] }
    }

    pub fn from_fn<F: FnMut(usize, usize) -> [f64; 2]>(
        width: usize,
        height: usize,
        mut f: F,
    ) -> Self {
        let mut fl = FlowField::new(width, height);
        for y in 0..height {
            for x in 0..width {
                fl.data[y * width + x] = f(x, y);
            }
        }
        fl
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[[f64; 2]] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [[f64; 2]] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 2] {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, uv: [f64; 2]) {
        self.data[y * self.width + x] = uv;
    }

    /// Bilinear sample of both components at a continuous position (clamped).
    pub fn sample_bilinear(&self, x: f64, y: f64) -> [f64; 2] {
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = xc.floor() as usize;
        let y0 = yc.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = xc - x0 as f64;
        let fy = yc - y0 as f64;
        let mut out = [0.0; 2];
        for (k, o) in out.iter_mut().enumerate() {
            let v00 = self.data[y0 * self.width + x0][k];
            let v10 = self.data[y0 * self.width + x1][k];
            let v01 = self.data[y1 * self.width + x0][k];
            let v11 = self.data[y1 * self.width + x1][k];
            *o = v00 * (1.0 - fx) * (1.0 - fy)
                + v10 * fx * (1.0 - fy)
                + v01 * (1.0 - fx) * fy
                + v11 * fx * fy;
        }
        out
    }
}

/// Per-pixel visibility mask: true = visible (not occluded).
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl OcclusionMask {
    pub fn all_visible(width: usize, height: usize) -> Self {
        OcclusionMask { width, height, data: vec![true; width * height] }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), width * height);
        OcclusionMask { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count_visible(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// One match between the two frames, stored as homogeneous 2D points with z = 1.
/// `x` is the image-1 pixel center, `x_prime` is that position displaced by the flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub x: Vector3<f64>,
    pub x_prime: Vector3<f64>,
}

impl Correspondence {
    pub fn new(x: f64, y: f64, xp: f64, yp: f64) -> Self {
        Correspondence { x: Vector3::new(x, y, 1.0), x_prime: Vector3::new(xp, yp, 1.0) }
    }
}

/// Converts a flow field into correspondences for the pixels where `mask` is visible.
/// Returns the correspondences together with the linear pixel index each one came from.
/// The construction is x' = x + v(x); subtracting the components back out recovers the
/// flow (bit-for-bit whenever the sum x + v is exactly representable).
pub fn flow_to_correspondences(
    flow: &FlowField,
    mask: Option<&OcclusionMask>,
) -> Result<(Vec<Correspondence>, Vec<usize>), Error> {
    if let Some(m) = mask {
        if m.width() != flow.width() || m.height() != flow.height() {
            return Err(Error::DimensionMismatch(format!(
                "mask {}x{} vs flow {}x{}",
                m.width(),
                m.height(),
                flow.width(),
                flow.height()
            )));
        }
    }
    let mut corrs = Vec::new();
    let mut indices = Vec::new();
    for y in 0..flow.height() {
        for x in 0..flow.width() {
            if let Some(m) = mask {
                if !m.get(x, y) {
                    continue;
                }
            }
            let [u, v] = flow.get(x, y);
            let (xf, yf) = (x as f64, y as f64);
            corrs.push(Correspondence::new(xf, yf, xf + u, yf + v));
            indices.push(y * flow.width() + x);
        }
    }
    if corrs.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok((corrs, indices))
}

/// Correspondences for an explicit set of pixel indices.
pub fn correspondences_at(flow: &FlowField, indices: &[usize]) -> Vec<Correspondence> {
    indices
        .iter()
        .map(|&i| {
            let x = i % flow.width();
            let y = i / flow.width();
            let [u, v] = flow.get(x, y);
            let (xf, yf) = (x as f64, y as f64);
            Correspondence::new(xf, yf, xf + u, yf + v)
        })
        .collect()
}

/// Robust penalty phi(x) = sqrt(x^2 + eps^2). With the default eps = 0.001 the
/// floor phi(0) = 0.001.
#[inline]
pub fn charbonnier(x: f64, eps: f64) -> f64 {
    (x * x + eps * eps).sqrt()
}

#[inline]
pub fn charbonnier_deriv(x: f64, eps: f64) -> f64 {
    x / (x * x + eps * eps).sqrt()
}

/// Which epipolar regularizer the total loss carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularizer {
    None,
    Sampson,
    LowRank,
    Subspace,
}

impl Regularizer {
    pub fn parse(s: &str) -> Result<Self, Error> {
        match s {
            "none" => Ok(Regularizer::None),
            "sampson" => Ok(Regularizer::Sampson),
            "lowrank" => Ok(Regularizer::LowRank),
            "subspace" => Ok(Regularizer::Subspace),
            other => Err(Error::BadConfig(format!("unknown regularizer '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Regularizer::None => "none",
            Regularizer::Sampson => "sampson",
            Regularizer::LowRank => "lowrank",
            Regularizer::Subspace => "subspace",
        }
    }
}

/// Weights and knobs of the composite loss. Defaults reproduce the declared
/// operating point; everything is overridable through the config file and CLI.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    /// Weight of the smoothness term.
    pub mu1: f64,
    /// Weight of the epipolar term. `None` picks the per-regularizer default:
    /// 0.02 Sampson, 0.01 low-rank, 0.001 subspace.
    pub mu2: Option<f64>,
    /// Intensity / census / gradient weights inside the photometric term.
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Edge-weight falloffs of the first- and second-order smoothness terms.
    pub alpha1: f64,
    pub alpha2: f64,
    /// Forward-backward consistency threshold in pixels.
    pub tau: f64,
    /// lambda of the union-of-subspaces loss.
    pub lambda_sub: f64,
    /// lambda of the self-expression solved for the segmentation affinity.
    /// Larger than `lambda_sub`: near the projection limit the off-subspace
    /// entries of C are weakest relative to the in-subspace ones.
    pub lambda_seg: f64,
    /// Entries kept per affinity row for segmentation (0 keeps all). The raw
    /// self-expression is dense because rigid-motion subspaces overlap in the
    /// 9-dim lifted space; keeping each sample's strongest links restores the
    /// block structure.
    pub affinity_keep: usize,
    /// Number of correspondences sampled per iteration for the epipolar terms.
    pub sample_count: usize,
    pub charbonnier_eps: f64,
    /// Census window radius (3 -> 7x7) and comparison scale on [0,1] intensities.
    pub census_radius: usize,
    pub census_eps: f64,
    /// Hartley-normalize coordinates before lifting. Raw pixel lifting is kept
    /// reachable for fidelity tests.
    pub lift_normalize: bool,
    pub rng_seed: u64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            mu1: 0.02,
            mu2: None,
            lambda1: 0.5,
            lambda2: 1.0,
            lambda3: 1.0,
            alpha1: 0.5,
            alpha2: 0.5,
            tau: 3.0,
            lambda_sub: 10.0,
            lambda_seg: 1000.0,
            affinity_keep: 24,
            sample_count: 2000,
            charbonnier_eps: 0.001,
            census_radius: 3,
            census_eps: 0.02,
            lift_normalize: true,
            rng_seed: 0,
        }
    }
}

impl LossConfig {
    /// Effective epipolar weight for a given regularizer.
    pub fn mu2_for(&self, reg: Regularizer) -> f64 {
        self.mu2.unwrap_or(match reg {
            Regularizer::None => 0.0,
            Regularizer::Sampson => 0.02,
            Regularizer::LowRank => 0.01,
            Regularizer::Subspace => 0.001,
        })
    }
}
