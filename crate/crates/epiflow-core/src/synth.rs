//! Synthetic two-frame scenes with exact ground truth. Frame 2 is an analytic
//! texture; frame 1 is that texture sampled at the flow-displaced position, so
//! photometric consistency holds by construction (no rendering, no resampling
//! error beyond the later discretization of frame 2 itself).
//!
//! The camera is fixed: focal 500 px, 256x192 image, principal point at the
//! center, scene depths inside [4, 10].

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::types::{FlowField, Image};

pub const FOCAL: f64 = 500.0;
pub const WIDTH: usize = 256;
pub const HEIGHT: usize = 192;
pub const DEPTH_MIN: f64 = 4.0;
pub const DEPTH_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneCase {
    /// General rotation + translation over a smooth depth field. The image
    /// carries a repeated-texture region over ~30% of its area.
    Rigid,
    /// Rotation only: lifted correspondences span 6 dimensions.
    PureRotation,
    /// All scene points on one plane: a homography, rank 6.
    Planar,
    /// Translation parallel to the image plane over a ruled surface whose depth
    /// is affine in the orthogonal image coordinate: rank 7. (For a generic
    /// surface this motion spans 8 dimensions; the affine-depth surface is what
    /// pins the seventh.)
    ParallelTranslation,
    /// Background motion plus one independently moving region: rank 9.
    TwoMotion,
    /// Background plus two independently moving regions.
    ThreeMotion,
    /// Static background with a textured square sliding over it; true occlusion
    /// with exact forward and backward flow.
    Occluder,
}

impl SceneCase {
    pub fn parse(s: &str) -> Result<Self, Error> {
        match s {
            "rigid" => Ok(SceneCase::Rigid),
            "pure-rotation" => Ok(SceneCase::PureRotation),
            "planar" => Ok(SceneCase::Planar),
            "parallel-translation" => Ok(SceneCase::ParallelTranslation),
            "two-motion" => Ok(SceneCase::TwoMotion),
            "three-motion" => Ok(SceneCase::ThreeMotion),
            "occluder" => Ok(SceneCase::Occluder),
            other => Err(Error::BadConfig(format!("unknown scene case '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SceneCase::Rigid => "rigid",
            SceneCase::PureRotation => "pure-rotation",
            SceneCase::Planar => "planar",
            SceneCase::ParallelTranslation => "parallel-translation",
            SceneCase::TwoMotion => "two-motion",
            SceneCase::ThreeMotion => "three-motion",
            SceneCase::Occluder => "occluder",
        }
    }

    pub fn all() -> &'static [SceneCase] {
        &[
            SceneCase::Rigid,
            SceneCase::PureRotation,
            SceneCase::Planar,
            SceneCase::ParallelTranslation,
            SceneCase::TwoMotion,
            SceneCase::ThreeMotion,
            SceneCase::Occluder,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct SynthScene {
    pub img1: Image,
    pub img2: Image,
    /// Forward ground-truth flow, frame 1 to frame 2.
    pub flow: FlowField,
    /// Backward ground truth; only the occluder scene defines one.
    pub backward: Option<FlowField>,
    /// Ground-truth visibility of frame-1 pixels (false = occluded in frame 2).
    pub visibility: Vec<bool>,
    /// Per-pixel motion id in frame 1.
    pub labels: Vec<usize>,
    /// Number of distinct motions.
    pub motions: usize,
}

// ---- analytic textures ----

struct Texture {
    waves: Vec<(f64, f64, f64, f64)>, // (fx, fy, phase, amplitude), angular frequencies
}

impl Texture {
    /// Broadband texture: periods from ~96 px down to ~9 px, random directions.
    fn broadband(rng: &mut ChaCha8Rng) -> Texture {
        let periods = [96.0, 61.0, 41.0, 23.0, 14.0, 9.0];
        let amps = [0.16, 0.14, 0.11, 0.08, 0.05, 0.035];
        let mut waves = Vec::new();
        for (p, a) in periods.iter().zip(amps.iter()) {
            let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let w = std::f64::consts::TAU / p;
            waves.push((w * th.cos(), w * th.sin(), rng.random_range(0.0..std::f64::consts::TAU), *a));
        }
        Texture { waves }
    }

    /// Periodic tile of the given period: every frequency is an integer number
    /// of cycles per period, so the pattern repeats exactly and has no seams.
    fn tiled(rng: &mut ChaCha8Rng, period: f64) -> Texture {
        let base = std::f64::consts::TAU / period;
        let harmonics: [(f64, f64); 4] = [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (2.0, 1.0)];
        let amps = [0.14, 0.12, 0.09, 0.06];
        let mut waves = Vec::new();
        for ((kx, ky), a) in harmonics.iter().zip(amps.iter()) {
            waves.push((base * kx, base * ky, rng.random_range(0.0..std::f64::consts::TAU), *a));
        }
        Texture { waves }
    }

    fn eval(&self, x: f64, y: f64) -> f64 {
        let mut v = 0.5;
        for &(fx, fy, ph, a) in &self.waves {
            v += a * (fx * x + fy * y + ph).sin();
        }
        v.clamp(0.02, 0.98)
    }
}

/// Scene texture: a broadband base, optionally overridden by a periodic tile
/// inside a rectangle (in frame-2 coordinates).
struct SceneTexture {
    base: Texture,
    tile: Option<(Texture, [f64; 4])>, // texture, [x0, x1, y0, y1]
}

impl SceneTexture {
    fn eval(&self, x: f64, y: f64) -> f64 {
        let base = self.base.eval(x, y);
        if let Some((t, r)) = &self.tile {
            let w = edge_ramp(x, r[0], r[1]) * edge_ramp(y, r[2], r[3]);
            if w > 0.0 {
                return base + w * (t.eval(x, y) - base);
            }
        }
        base
    }
}

/// 1 well inside [lo, hi], 0 outside, smoothstep ramps at the edges. A hard
/// switch would put a jump in the texture that bilinear sampling cannot
/// reproduce, breaking cross-frame consistency along the seam.
fn edge_ramp(v: f64, lo: f64, hi: f64) -> f64 {
    const RAMP: f64 = 4.0;
    smoothstep((v - lo) / RAMP) * smoothstep((hi - v) / RAMP)
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

// ---- rigid motions ----

#[derive(Debug, Clone, Copy)]
struct Motion {
    r: Matrix3<f64>,
    t: Vector3<f64>,
}

fn rotation(axis: Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let a = axis.normalize();
    let k = Matrix3::new(0.0, -a[2], a[1], a[2], 0.0, -a[0], -a[1], a[0], 0.0);
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

fn intrinsics() -> Matrix3<f64> {
    Matrix3::new(
        FOCAL,
        0.0,
        WIDTH as f64 / 2.0,
        0.0,
        FOCAL,
        HEIGHT as f64 / 2.0,
        0.0,
        0.0,
        1.0,
    )
}

/// Displacement of pixel (x, y) at depth z under the motion.
fn flow_at(k: &Matrix3<f64>, k_inv: &Matrix3<f64>, m: &Motion, x: f64, y: f64, z: f64) -> [f64; 2] {
    let p3 = k_inv * Vector3::new(x, y, 1.0) * z;
    let moved = m.r * p3 + m.t;
    debug_assert!(moved[2] > 0.5, "scene point crossed the camera plane");
    let q = k * moved;
    [q[0] / q[2] - x, q[1] / q[2] - y]
}

/// Smooth depth field spanning most of [4, 10].
fn smooth_depth(rng: &mut ChaCha8Rng) -> impl Fn(f64, f64) -> f64 {
    let p1: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let p2: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let p3: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    move |x: f64, y: f64| {
        let u = x / WIDTH as f64;
        let v = y / HEIGHT as f64;
        7.0 + 2.1 * (std::f64::consts::TAU * (1.3 * u) + p1).sin()
            * (std::f64::consts::TAU * (0.9 * v) + p2).cos()
            + 0.55 * (std::f64::consts::TAU * (2.3 * u + 1.7 * v) + p3).sin()
    }
}

fn render(tex: &SceneTexture, flow: &FlowField) -> (Image, Image) {
    let img2 = Image::from_fn(WIDTH, HEIGHT, 1, |x, y, _| tex.eval(x as f64, y as f64));
    let img1 = Image::from_fn(WIDTH, HEIGHT, 1, |x, y, _| {
        let [u, v] = flow.get(x, y);
        tex.eval(x as f64 + u, y as f64 + v)
    });
    (img1, img2)
}

fn single_motion_scene(
    rng: &mut ChaCha8Rng,
    motion: Motion,
    depth: impl Fn(f64, f64) -> f64,
    tiled_region: bool,
) -> SynthScene {
    let k = intrinsics();
    let k_inv = k.try_inverse().unwrap();
    let flow = FlowField::from_fn(WIDTH, HEIGHT, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        flow_at(&k, &k_inv, &motion, xf, yf, depth(xf, yf))
    });
    let tile = if tiled_region {
        // 128 x 116 px out of 256 x 192: 30.2% of the frame
        Some((Texture::tiled(rng, 16.0), [64.0, 192.0, 38.0, 154.0]))
    } else {
        None
    };
    let tex = SceneTexture { base: Texture::broadband(rng), tile };
    let (img1, img2) = render(&tex, &flow);
    SynthScene {
        img1,
        img2,
        flow,
        backward: None,
        visibility: vec![true; WIDTH * HEIGHT],
        labels: vec![0; WIDTH * HEIGHT],
        motions: 1,
    }
}

/// Rectangles (x0, x1, y0, y1) hosting independently moving regions.
const OBJECT_RECTS: [[usize; 4]; 2] = [[30, 112, 28, 100], [148, 230, 84, 160]];

fn multi_motion_scene(rng: &mut ChaCha8Rng, objects: usize) -> SynthScene {
    let k = intrinsics();
    let k_inv = k.try_inverse().unwrap();
    let bg_depth = smooth_depth(rng);
    let motions = [
        Motion {
            r: rotation(Vector3::new(0.15, 1.0, 0.2), 0.010),
            t: Vector3::new(0.05, 0.03, 0.09),
        },
        Motion {
            r: rotation(Vector3::new(1.0, 0.15, 0.1), -0.015),
            t: Vector3::new(-0.085, 0.055, 0.04),
        },
        Motion {
            r: rotation(Vector3::new(0.1, 0.3, 1.0), 0.019),
            t: Vector3::new(0.065, -0.080, -0.05),
        },
    ];
    let mut labels = vec![0usize; WIDTH * HEIGHT];
    for (id, rect) in OBJECT_RECTS.iter().take(objects).enumerate() {
        for y in rect[2]..rect[3] {
            for x in rect[0]..rect[1] {
                labels[y * WIDTH + x] = id + 1;
            }
        }
    }
    // objects are true planes (affine inverse depth), so each object motion
    // spans only 6 lifted dimensions and stays well separated from the others
    let object_depth = |id: usize, x: f64, y: f64| match id {
        1 => 4.8 / (1.0 + 0.0009 * (x - 71.0) + 0.0012 * (y - 64.0)),
        _ => 6.3 / (1.0 - 0.0011 * (x - 189.0) + 0.0008 * (y - 122.0)),
    };
    let flow = FlowField::from_fn(WIDTH, HEIGHT, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let id = labels[y * WIDTH + x];
        let z = if id == 0 { bg_depth(xf, yf) } else { object_depth(id, xf, yf) };
        flow_at(&k, &k_inv, &motions[id], xf, yf, z)
    });
    let tex = SceneTexture { base: Texture::broadband(rng), tile: None };
    let (img1, img2) = render(&tex, &flow);
    SynthScene {
        img1,
        img2,
        flow,
        backward: None,
        visibility: vec![true; WIDTH * HEIGHT],
        labels,
        motions: objects + 1,
    }
}

fn occluder_scene(rng: &mut ChaCha8Rng) -> SynthScene {
    let bg = Texture::broadband(rng);
    let sq = Texture::tiled(rng, 11.0);
    // square of side 56 fully inside both frames
    let (sx, sy, side) = (88.0, 60.0, 56.0);
    let (dx, dy) = (8.0, 5.0);
    let in_sq1 = |x: f64, y: f64| x >= sx && x < sx + side && y >= sy && y < sy + side;
    let in_sq2 =
        |x: f64, y: f64| x >= sx + dx && x < sx + dx + side && y >= sy + dy && y < sy + dy + side;
    let img1 = Image::from_fn(WIDTH, HEIGHT, 1, |x, y, _| {
        let (xf, yf) = (x as f64, y as f64);
        if in_sq1(xf, yf) {
            sq.eval(xf - sx, yf - sy)
        } else {
            bg.eval(xf, yf)
        }
    });
    let img2 = Image::from_fn(WIDTH, HEIGHT, 1, |x, y, _| {
        let (xf, yf) = (x as f64, y as f64);
        if in_sq2(xf, yf) {
            sq.eval(xf - sx - dx, yf - sy - dy)
        } else {
            bg.eval(xf, yf)
        }
    });
    let mut labels = vec![0usize; WIDTH * HEIGHT];
    let mut visibility = vec![true; WIDTH * HEIGHT];
    let flow = FlowField::from_fn(WIDTH, HEIGHT, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        if in_sq1(xf, yf) {
            labels[y * WIDTH + x] = 1;
            [dx, dy]
        } else {
            // static background; covered next frame = occluded
            if in_sq2(xf, yf) {
                visibility[y * WIDTH + x] = false;
            }
            [0.0, 0.0]
        }
    });
    let backward = FlowField::from_fn(WIDTH, HEIGHT, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        if in_sq2(xf, yf) {
            [-dx, -dy]
        } else {
            [0.0, 0.0]
        }
    });
    SynthScene {
        img1,
        img2,
        flow,
        backward: Some(backward),
        visibility,
        labels,
        motions: 2,
    }
}

/// Deterministic scene construction: a case and a seed fully define the output.
pub fn generate(case: SceneCase, seed: u64) -> SynthScene {
    // streams separated by case so seeds do not alias across cases
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (case.name().len() as u64) << 56 ^ 0x5f9_d1a);
    match case {
        SceneCase::Rigid => {
            let depth = smooth_depth(&mut rng);
            let motion = Motion {
                r: rotation(Vector3::new(0.15, 1.0, 0.25), 0.012),
                t: Vector3::new(0.05, 0.03, 0.10),
            };
            single_motion_scene(&mut rng, motion, depth, true)
        }
        SceneCase::PureRotation => {
            let depth = smooth_depth(&mut rng);
            let motion = Motion {
                r: rotation(Vector3::new(0.2, 1.0, 0.1), 0.008),
                t: Vector3::zeros(),
            };
            single_motion_scene(&mut rng, motion, depth, false)
        }
        SceneCase::Planar => {
            // plane: inverse depth affine in the normalized image coordinates
            let motion = Motion {
                r: rotation(Vector3::new(0.3, 0.8, 0.2), 0.010),
                t: Vector3::new(0.06, -0.04, 0.08),
            };
            let depth = |x: f64, y: f64| {
                let u = (x - WIDTH as f64 / 2.0) / FOCAL;
                let v = (y - HEIGHT as f64 / 2.0) / FOCAL;
                7.0 / (1.0 + 0.55 * u + 0.38 * v)
            };
            single_motion_scene(&mut rng, motion, depth, false)
        }
        SceneCase::ParallelTranslation => {
            // depth affine in pixel x, translation along y: two independent
            // epipolar constraints, rank 7
            let motion = Motion { r: Matrix3::identity(), t: Vector3::new(0.0, 0.13, 0.0) };
            let depth = |x: f64, _y: f64| 5.0 + 0.02 * x;
            single_motion_scene(&mut rng, motion, depth, false)
        }
        SceneCase::TwoMotion => multi_motion_scene(&mut rng, 1),
        SceneCase::ThreeMotion => multi_motion_scene(&mut rng, 2),
        SceneCase::Occluder => occluder_scene(&mut rng),
    }
}
