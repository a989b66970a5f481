//! Two-view epipolar geometry: normalized 8-point estimation and the Sampson
//! distance with its gradient in the second image.

use nalgebra::{DMatrix, Matrix3, Vector2, Vector3};

use crate::error::Error;
use crate::types::Correspondence;

/// Denominators below this are treated as singular (point at both epipoles)
/// and the correspondence is skipped.
pub const SAMPSON_DENOM_MIN: f64 = 1e-12;

/// Relative singular-value threshold for the rank test of the 8-point design matrix.
const DESIGN_RANK_TOL: f64 = 1e-8;

/// Fundamental matrix with a fixed representation: rank 2, unit Frobenius norm,
/// and the largest-magnitude entry positive.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalMatrix {
    m: Matrix3<f64>,
}

impl FundamentalMatrix {
    /// Projects an arbitrary 3x3 matrix onto the representation: zeroes the
    /// smallest singular value, rescales to unit Frobenius norm, fixes the sign.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, Error> {
        let svd = m.svd(true, true);
        let u = svd.u.ok_or(Error::SvdFailure)?;
        let vt = svd.v_t.ok_or(Error::SvdFailure)?;
        let mut s = svd.singular_values;
        // nalgebra returns descending singular values for this solver, but do not
        // rely on it: zero the smallest explicitly.
        let (mut imin, mut smin) = (0usize, s[0]);
        for i in 1..3 {
            if s[i] < smin {
                imin = i;
                smin = s[i];
            }
        }
        s[imin] = 0.0;
        let mut f = u * Matrix3::from_diagonal(&s) * vt;
        let norm = f.norm();
        if norm == 0.0 {
            return Err(Error::DegenerateConfiguration { rank: 0 });
        }
        f /= norm;
        // sign convention: the entry of largest magnitude is positive; scan order
        // is fixed (column-major) so ties resolve deterministically
        let mut best = 0.0f64;
        for v in f.iter() {
            if v.abs() > best.abs() {
                best = *v;
            }
        }
        if best < 0.0 {
            f = -f;
        }
        Ok(FundamentalMatrix { m: f })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }
}

/// Isotropic normalization of homogeneous points: centroid to the origin, mean
/// distance sqrt(2). Returns the similarity transform; apply it as T * x.
pub fn hartley_transform(points: &[Vector3<f64>]) -> Matrix3<f64> {
    let n = points.len().max(1) as f64;
    let (mut cx, mut cy) = (0.0, 0.0);
    for p in points {
        cx += p[0];
        cy += p[1];
    }
    cx /= n;
    cy /= n;
    let mut mean_dist = 0.0;
    for p in points {
        mean_dist += ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt();
    }
    mean_dist /= n;
    let s = if mean_dist > 0.0 { std::f64::consts::SQRT_2 / mean_dist } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

/// Lifted-coordinate row for one correspondence, the same component order the
/// 9-dim lifting uses: (x x', x y', x, y x', y y', y, x', y', 1). With f = vec(F)
/// stored column-major, f . row = x'^T F x.
#[inline]
pub(crate) fn epipolar_row(x: &Vector3<f64>, xp: &Vector3<f64>) -> [f64; 9] {
    [
        x[0] * xp[0],
        x[0] * xp[1],
        x[0] * xp[2],
        x[1] * xp[0],
        x[1] * xp[1],
        x[1] * xp[2],
        x[2] * xp[0],
        x[2] * xp[1],
        x[2] * xp[2],
    ]
}

/// Normalized 8-point estimation. Requires >= 8 correspondences; fails with the
/// numerical rank when the configuration is degenerate (e.g. collinear points).
pub fn estimate_fundamental_8pt(corrs: &[Correspondence]) -> Result<FundamentalMatrix, Error> {
    if corrs.len() < 8 {
        return Err(Error::TooFewPoints { got: corrs.len() });
    }
    let pts1: Vec<Vector3<f64>> = corrs.iter().map(|c| c.x).collect();
    let pts2: Vec<Vector3<f64>> = corrs.iter().map(|c| c.x_prime).collect();
    let t1 = hartley_transform(&pts1);
    let t2 = hartley_transform(&pts2);

    // at least 9 rows: the thin SVD of a wide matrix drops the right singular
    // vector spanning the nullspace, which is exactly the one needed here;
    // zero padding rows change nothing else
    let mut a = DMatrix::<f64>::zeros(corrs.len().max(9), 9);
    for (i, c) in corrs.iter().enumerate() {
        let x = t1 * c.x;
        let xp = t2 * c.x_prime;
        let row = epipolar_row(&x, &xp);
        for (j, v) in row.iter().enumerate() {
            a[(i, j)] = *v;
        }
    }

    let svd = a.svd(true, true);
    let vt = svd.v_t.as_ref().ok_or(Error::SvdFailure)?;
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let rank = sv.iter().filter(|&&s| s > smax * DESIGN_RANK_TOL).count();
    if rank < 8 {
        return Err(Error::DegenerateConfiguration { rank });
    }
    // right singular vector of the smallest singular value
    let (mut imin, mut smin) = (0usize, f64::INFINITY);
    for (i, &s) in sv.iter().enumerate() {
        if s < smin {
            imin = i;
            smin = s;
        }
    }
    let f_vec: Vec<f64> = (0..9).map(|j| vt[(imin, j)]).collect();
    // f is vec(F) column-major per the row convention above
    let f_norm = Matrix3::from_column_slice(&f_vec);
    let f_px = t2.transpose() * f_norm * t1;
    FundamentalMatrix::from_matrix(f_px)
}

/// Sampson evaluation: accumulated loss plus the number of correspondences
/// skipped for singular denominators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampsonEval {
    pub loss: f64,
    pub skipped: usize,
}

#[inline]
fn sampson_terms(c: &Correspondence, f: &Matrix3<f64>) -> (f64, Vector3<f64>, Vector3<f64>, f64) {
    let fx = f * c.x;
    let ftxp = f.transpose() * c.x_prime;
    let e = c.x_prime.dot(&fx);
    let denom = fx[0] * fx[0] + fx[1] * fx[1] + ftxp[0] * ftxp[0] + ftxp[1] * ftxp[1];
    (e, fx, ftxp, denom)
}

/// Sum over correspondences of (x'^T F x)^2 / ((Fx)_1^2 + (Fx)_2^2 + (F^T x')_1^2 + (F^T x')_2^2).
pub fn sampson_loss(corrs: &[Correspondence], f: &FundamentalMatrix) -> SampsonEval {
    let m = f.matrix();
    let mut loss = 0.0;
    let mut skipped = 0;
    for c in corrs {
        let (e, _, _, denom) = sampson_terms(c, m);
        if denom < SAMPSON_DENOM_MIN {
            skipped += 1;
            continue;
        }
        loss += e * e / denom;
    }
    SampsonEval { loss, skipped }
}

/// Sampson loss and its gradient with respect to x' (the flow-displaced point),
/// with F held constant. Skipped correspondences get a zero gradient.
pub fn sampson_gradient(
    corrs: &[Correspondence],
    f: &FundamentalMatrix,
) -> (SampsonEval, Vec<Vector2<f64>>) {
    let m = f.matrix();
    let mut loss = 0.0;
    let mut skipped = 0;
    let mut grads = vec![Vector2::zeros(); corrs.len()];
    for (i, c) in corrs.iter().enumerate() {
        let (e, fx, ftxp, denom) = sampson_terms(c, m);
        if denom < SAMPSON_DENOM_MIN {
            skipped += 1;
            continue;
        }
        loss += e * e / denom;
        for k in 0..2 {
            // d e / d x'_k = (Fx)_k ; d denom / d x'_k = 2 sum_j (F^T x')_j F_kj, j in {0,1}
            let de = fx[k];
            let dd = 2.0 * (ftxp[0] * m[(k, 0)] + ftxp[1] * m[(k, 1)]);
            grads[i][k] = 2.0 * e * de / denom - e * e * dd / (denom * denom);
        }
    }
    (SampsonEval { loss, skipped }, grads)
}
