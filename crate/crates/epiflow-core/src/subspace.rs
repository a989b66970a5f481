//! Lifting correspondences to 9-dim epipolar space, and the two losses that act
//! on the lifted matrix: nuclear norm (low-rank) and the closed-form
//! union-of-subspaces objective with its self-expression matrix.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen};
use rand::Rng;

use crate::epipolar::{epipolar_row, hartley_transform};
use crate::error::Error;
use crate::types::{Correspondence, OcclusionMask};

/// Columns with singular value below this fraction of the largest are excluded
/// from the nuclear-norm subgradient.
const NUCLEAR_SV_TOL: f64 = 1e-10;

/// 9xN matrix of lifted correspondences, one column per match.
#[derive(Debug, Clone)]
pub struct LiftedMatrix {
    /// Column i = (x x', x y', x, y x', y y', y, x', y', 1) of correspondence i,
    /// in normalized coordinates when `normalization` is set.
    pub h: DMatrix<f64>,
    /// Linear pixel index each column came from.
    pub source_pixels: Vec<usize>,
    /// Hartley transforms (image 1, image 2) applied before lifting, if any.
    pub normalization: Option<(Matrix3<f64>, Matrix3<f64>)>,
}

impl LiftedMatrix {
    pub fn ncols(&self) -> usize {
        self.h.ncols()
    }

    pub fn with_source_pixels(mut self, pixels: Vec<usize>) -> Self {
        assert_eq!(pixels.len(), self.h.ncols());
        self.source_pixels = pixels;
        self
    }
}

/// Lifts correspondences into the 9-dim epipolar space. With `normalize` set,
/// both point sets are Hartley-normalized first (the default everywhere; raw
/// pixel lifting is kept for fidelity checks). Normalization multiplies H by an
/// invertible 9x9 matrix, so ranks are preserved exactly.
pub fn lift(corrs: &[Correspondence], normalize: bool) -> LiftedMatrix {
    let normalization = if normalize {
        let pts1: Vec<_> = corrs.iter().map(|c| c.x).collect();
        let pts2: Vec<_> = corrs.iter().map(|c| c.x_prime).collect();
        Some((hartley_transform(&pts1), hartley_transform(&pts2)))
    } else {
        None
    };
    let mut h = DMatrix::<f64>::zeros(9, corrs.len());
    for (i, c) in corrs.iter().enumerate() {
        let (x, xp) = match &normalization {
            Some((t1, t2)) => (t1 * c.x, t2 * c.x_prime),
            None => (c.x, c.x_prime),
        };
        let row = epipolar_row(&x, &xp);
        for (j, v) in row.iter().enumerate() {
            h[(j, i)] = *v;
        }
    }
    LiftedMatrix { h, source_pixels: (0..corrs.len()).collect(), normalization }
}

/// One lifted column under the optional normalization of an existing
/// `LiftedMatrix`, for embedding further correspondences consistently.
pub fn lift_column(
    c: &Correspondence,
    normalization: Option<&(Matrix3<f64>, Matrix3<f64>)>,
) -> [f64; 9] {
    match normalization {
        Some((t1, t2)) => epipolar_row(&(t1 * c.x), &(t2 * c.x_prime)),
        None => epipolar_row(&c.x, &c.x_prime),
    }
}

/// Eigen-decomposition of H H^T: eigenvalues are squared singular values of H.
/// Returned eigenvalues are clamped at zero (they are nonnegative up to roundoff)
/// and not sorted.
fn gram_eigen(h: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let gram = h * h.transpose();
    let mut eig = SymmetricEigen::new(gram);
    for v in eig.eigenvalues.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    eig
}

/// Sum of singular values of the lifted matrix.
pub fn nuclear_norm_loss(lifted: &LiftedMatrix) -> f64 {
    let eig = gram_eigen(&lifted.h);
    eig.eigenvalues.iter().map(|&s| s.sqrt()).sum()
}

/// Nuclear norm and its subgradient U V^T from the thin SVD, excluding
/// directions with singular value below 1e-10 of the largest. Exact gradient
/// wherever H has full rank 9.
pub fn nuclear_norm_gradient(lifted: &LiftedMatrix) -> (f64, DMatrix<f64>) {
    let svd = lifted.h.clone().svd(true, true);
    let u = svd.u.expect("svd with u requested");
    let vt = svd.v_t.expect("svd with v_t requested");
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let loss: f64 = sv.iter().sum();
    let r = u.nrows();
    let n = vt.ncols();
    let mut grad = DMatrix::<f64>::zeros(r, n);
    for (i, &s) in sv.iter().enumerate() {
        if smax > 0.0 && s < NUCLEAR_SV_TOL * smax {
            continue;
        }
        // grad += u_i v_i^T
        for col in 0..n {
            let vic = vt[(i, col)];
            for row in 0..r {
                grad[(row, col)] += u[(row, i)] * vic;
            }
        }
    }
    (loss, grad)
}

/// Self-expression matrix of the union-of-subspaces objective.
#[derive(Debug, Clone)]
pub struct SelfExpression {
    /// N x N symmetric matrix with eigenvalues in [0, 1).
    pub c: DMatrix<f64>,
    pub lambda: f64,
}

/// Closed-form minimizer C* = (I + lambda H^T H)^-1 lambda H^T H, computed
/// through the 9x9 eigen-decomposition of H H^T: C* = H^T U diag(lambda /
/// (1 + lambda s_i)) U^T H with s_i the eigenvalues. No N x N system is formed,
/// and the expression stays finite at s_i = 0.
pub fn subspace_expression(lifted: &LiftedMatrix, lambda: f64) -> SelfExpression {
    let eig = gram_eigen(&lifted.h);
    let dim = eig.eigenvalues.len();
    let mut mid = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        let s = eig.eigenvalues[i];
        let w = lambda / (1.0 + lambda * s);
        for r in 0..dim {
            for c in 0..dim {
                mid[(r, c)] += w * eig.eigenvectors[(r, i)] * eig.eigenvectors[(c, i)];
            }
        }
    }
    let hm = &mid * &lifted.h; // 9 x N
    let c = lifted.h.transpose() * hm; // N x N
    SelfExpression { c, lambda }
}

/// Union-of-subspaces loss at the closed-form C*. Reduces to
/// 1/2 sum_i lambda s_i / (1 + lambda s_i) over eigenvalues s_i of H H^T.
pub fn subspace_loss(lifted: &LiftedMatrix, lambda: f64) -> f64 {
    let eig = gram_eigen(&lifted.h);
    0.5 * eig
        .eigenvalues
        .iter()
        .map(|&s| lambda * s / (1.0 + lambda * s))
        .sum::<f64>()
}

/// Loss and gradient with respect to H. Derivative of the spectral form:
/// grad = U diag(lambda / (1 + lambda s_i)^2) U^T H. By the envelope theorem the
/// same matrix is the full derivative of the two-term objective through C*(H),
/// so there is nothing to choose between "full" and "constant C*" here.
pub fn subspace_gradient(lifted: &LiftedMatrix, lambda: f64) -> (f64, DMatrix<f64>) {
    let eig = gram_eigen(&lifted.h);
    let dim = eig.eigenvalues.len();
    let mut loss = 0.0;
    let mut mid = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        let s = eig.eigenvalues[i];
        loss += 0.5 * lambda * s / (1.0 + lambda * s);
        let w = lambda / (1.0 + lambda * s).powi(2);
        for r in 0..dim {
            for c in 0..dim {
                mid[(r, c)] += w * eig.eigenvectors[(r, i)] * eig.eigenvectors[(c, i)];
            }
        }
    }
    let grad = mid * &lifted.h;
    (loss, grad)
}

/// Uniform sample without replacement of `count` visible pixel indices.
/// Deterministic for a fixed rng state; indices come back sorted.
pub fn sample_pixels<R: Rng>(
    mask: &OcclusionMask,
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>, Error> {
    let valid: Vec<usize> = (0..mask.data().len()).filter(|&i| mask.data()[i]).collect();
    if valid.is_empty() {
        return Err(Error::NoValidPixels);
    }
    if count >= valid.len() {
        return Ok(valid);
    }
    let picked = rand::seq::index::sample(rng, valid.len(), count);
    let mut out: Vec<usize> = picked.iter().map(|i| valid[i]).collect();
    out.sort_unstable();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_lifted(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> LiftedMatrix {
        let h = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
        LiftedMatrix { h, source_pixels: (0..cols).collect(), normalization: None }
    }

    #[test]
    fn lift_component_order_and_ninth_entry() {
        let c = Correspondence::new(2.0, 3.0, 5.0, 7.0);
        let lifted = lift(&[c], false);
        let col: Vec<f64> = (0..9).map(|i| lifted.h[(i, 0)]).collect();
        assert_eq!(col, vec![10.0, 14.0, 2.0, 15.0, 21.0, 3.0, 5.0, 7.0, 1.0]);
        // normalized lifting keeps the homogeneous 1 in the last slot
        let corrs: Vec<Correspondence> = (0..12)
            .map(|i| {
                let t = i as f64;
                Correspondence::new(10.0 * t, 3.0 * t * t, 10.0 * t + 1.0, 3.0 * t * t - 2.0)
            })
            .collect();
        let ln = lift(&corrs, true);
        assert!(ln.normalization.is_some());
        for i in 0..ln.ncols() {
            assert!((ln.h[(8, i)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_preserves_rank() {
        // zero-motion correspondences: rank 6 either way
        let corrs: Vec<Correspondence> = (0..40)
            .map(|i| {
                let x = 17.0 * ((i * 37) % 53) as f64 / 7.0 + 3.0;
                let y = 11.0 * ((i * 23) % 41) as f64 / 5.0 + 2.0;
                Correspondence::new(x, y, x, y)
            })
            .collect();
        for normalize in [false, true] {
            let l = lift(&corrs, normalize);
            let sv = l.h.clone().svd(false, false).singular_values;
            let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
            let rank = sv.iter().filter(|&&s| s > 1e-8 * smax).count();
            assert_eq!(rank, 6, "normalize = {normalize}");
        }
    }

    #[test]
    fn nuclear_norm_of_diagonal_matrix() {
        let mut h = DMatrix::<f64>::zeros(9, 12);
        let diag = [9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0];
        for (i, d) in diag.iter().enumerate() {
            h[(i, i)] = *d;
        }
        let lifted = LiftedMatrix { h, source_pixels: (0..12).collect(), normalization: None };
        let (loss, grad) = nuclear_norm_gradient(&lifted);
        assert!((loss - 45.0).abs() < 1e-10);
        assert!((nuclear_norm_loss(&lifted) - 45.0).abs() < 1e-9);
        // gradient is the sign pattern: identity block, zero elsewhere
        for r in 0..9 {
            for c in 0..12 {
                let expect = if r == c { 1.0 } else { 0.0 };
                assert!((grad[(r, c)] - expect).abs() < 1e-9, "({r},{c})");
            }
        }
    }

    #[test]
    fn nuclear_gradient_norm_bound_and_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..20 {
            let lifted = random_lifted(&mut rng, 9, 30);
            let (_, grad) = nuclear_norm_gradient(&lifted);
            assert!(grad.norm() <= 3.0 + 1e-9, "||UV^T||_F <= sqrt(min dim)");
            // random 9x30 from a continuous distribution: full rank 9 a.s., so the
            // nuclear norm is differentiable and FD applies
            let h = 1e-6;
            let mut num = 0.0;
            let mut den = 0.0;
            for r in 0..9 {
                for c in 0..30 {
                    let mut plus = lifted.clone();
                    let mut minus = lifted.clone();
                    plus.h[(r, c)] += h;
                    minus.h[(r, c)] -= h;
                    let fd = (nuclear_norm_loss(&plus) - nuclear_norm_loss(&minus)) / (2.0 * h);
                    num += (grad[(r, c)] - fd).powi(2);
                    den += fd * fd;
                }
            }
            let rel = (num / den.max(1e-30)).sqrt();
            assert!(rel < 1e-4, "trial {trial}: rel {rel:e}");
        }
    }

    // ---- dense oracle: direct evaluation of the two-term objective ----

    fn dense_expression(h: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
        let n = h.ncols();
        let hth = h.transpose() * h;
        let a = DMatrix::<f64>::identity(n, n) + &hth * lambda;
        let inv = a.try_inverse().expect("I + lambda H^T H is positive definite");
        inv * hth * lambda
    }

    fn dense_loss(h: &DMatrix<f64>, c: &DMatrix<f64>, lambda: f64) -> f64 {
        let resid = h * c - h;
        0.5 * c.norm_squared() + 0.5 * lambda * resid.norm_squared()
    }

    #[test]
    fn expression_matches_dense_inverse_and_is_contractive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &lambda in &[0.1, 10.0, 1000.0] {
            let lifted = random_lifted(&mut rng, 9, 40);
            let se = subspace_expression(&lifted, lambda);
            let dense = dense_expression(&lifted.h, lambda);
            // the oracle inverts I + lambda H^T H, so its forward error floor
            // is kappa * eps with kappa = 1 + lambda s1; scale the tolerance
            let s1 = lifted.h.clone().svd(false, false).singular_values[0].powi(2);
            let kappa = 1.0 + lambda * s1;
            let tol = 1e-9_f64.max(5e3 * kappa * f64::EPSILON);
            let rel = (se.c.clone() - &dense).norm() / dense.norm().max(1.0);
            assert!(rel < tol, "lambda {lambda}: rel {rel:e} tol {tol:e}");
            // symmetric with eigenvalues in [0, 1)
            assert!((se.c.clone() - se.c.transpose()).norm() < 1e-9);
            let eig = SymmetricEigen::new(se.c.clone());
            for &e in eig.eigenvalues.iter() {
                assert!(e > -1e-10 && e < 1.0, "eigenvalue {e}");
            }
        }
    }

    #[test]
    fn single_column_expression_is_scalar_shrinkage() {
        let mut h = DMatrix::<f64>::zeros(9, 1);
        for (i, v) in [0.3, -0.2, 0.9, 0.1, -0.5, 0.4, 0.2, -0.7, 1.0].iter().enumerate() {
            h[(i, 0)] = *v;
        }
        let t = 10.0 * h.norm_squared();
        let lifted = LiftedMatrix { h, source_pixels: vec![0], normalization: None };
        let se = subspace_expression(&lifted, 10.0);
        assert_eq!(se.c.nrows(), 1);
        assert!((se.c[(0, 0)] - t / (1.0 + t)).abs() < 1e-12);
    }

    #[test]
    fn spectral_loss_equals_dense_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for &lambda in &[0.1, 10.0, 1000.0] {
            for trial in 0..10 {
                let lifted = random_lifted(&mut rng, 9, 50);
                let spectral = subspace_loss(&lifted, lambda);
                let c = dense_expression(&lifted.h, lambda);
                let dense = dense_loss(&lifted.h, &c, lambda);
                assert!(
                    (spectral - dense).abs() <= 1e-9 * dense.max(1.0),
                    "lambda {lambda} trial {trial}: {spectral} vs {dense}"
                );
            }
        }
    }

    #[test]
    fn subspace_gradient_matches_dense_derivation() {
        // independent derivation: differentiate the dense objective through C*(H)
        // via the envelope identity grad = lambda (H C - H)(C - I)^T
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        for &lambda in &[0.1, 10.0, 1000.0] {
            let lifted = random_lifted(&mut rng, 9, 35);
            let (_, grad) = subspace_gradient(&lifted, lambda);
            let c = dense_expression(&lifted.h, lambda);
            let n = c.nrows();
            let resid = &lifted.h * &c - &lifted.h;
            let dense_grad = resid * (c - DMatrix::<f64>::identity(n, n)).transpose() * lambda;
            // the oracle's error in C (kappa * eps, see above) is multiplied
            // by lambda here while the gradient magnitude stays bounded, so
            // the comparison floor grows like kappa^2 * eps
            let s1 = lifted.h.clone().svd(false, false).singular_values[0].powi(2);
            let kappa = 1.0 + lambda * s1;
            let tol = 1e-8_f64.max(1e4 * kappa * kappa * f64::EPSILON);
            let rel = (grad.clone() - &dense_grad).norm() / dense_grad.norm().max(1e-30);
            assert!(rel < tol, "lambda {lambda}: rel {rel:e} tol {tol:e}");
        }
    }

    #[test]
    fn subspace_gradient_matches_finite_differences_and_zero_at_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let lambda = 10.0;
        for trial in 0..10 {
            let lifted = random_lifted(&mut rng, 9, 25);
            let (_, grad) = subspace_gradient(&lifted, lambda);
            let h = 1e-6;
            let mut num = 0.0;
            let mut den = 0.0;
            for r in 0..9 {
                for c in 0..25 {
                    let mut plus = lifted.clone();
                    let mut minus = lifted.clone();
                    plus.h[(r, c)] += h;
                    minus.h[(r, c)] -= h;
                    let fd = (subspace_loss(&plus, lambda) - subspace_loss(&minus, lambda))
                        / (2.0 * h);
                    num += (grad[(r, c)] - fd).powi(2);
                    den += fd * fd;
                }
            }
            let rel = (num / den.max(1e-30)).sqrt();
            assert!(rel < 1e-4, "trial {trial}: rel {rel:e}");
        }
        // zero matrix: zero loss, zero gradient
        let zero = LiftedMatrix {
            h: DMatrix::zeros(9, 10),
            source_pixels: (0..10).collect(),
            normalization: None,
        };
        let (l, g) = subspace_gradient(&zero, lambda);
        assert_eq!(l, 0.0);
        assert_eq!(g.norm(), 0.0);
    }

    #[test]
    fn loss_is_monotone_in_rank() {
        // more energy spread across directions -> larger loss
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let full = random_lifted(&mut rng, 9, 40);
        let mut low = full.clone();
        // collapse to rank 2: keep two rows, zero the rest
        for r in 2..9 {
            for c in 0..40 {
                low.h[(r, c)] = 0.0;
            }
        }
        assert!(subspace_loss(&full, 10.0) > subspace_loss(&low, 10.0));
    }

    #[test]
    fn sampling_is_deterministic_masked_and_errors_when_empty() {
        let mut mask = OcclusionMask::all_visible(64, 64);
        for i in 0..1000 {
            mask.set(i % 64, i / 64, false);
        }
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(1);
        let a = sample_pixels(&mask, 500, &mut r1).unwrap();
        let b = sample_pixels(&mask, 500, &mut r2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 500);
        let mut seen = std::collections::HashSet::new();
        for &i in &a {
            assert!(mask.data()[i], "sampled occluded pixel {i}");
            assert!(seen.insert(i), "duplicate {i}");
        }
        let empty = OcclusionMask::from_data(4, 4, vec![false; 16]);
        let mut r3 = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(sample_pixels(&empty, 5, &mut r3), Err(Error::NoValidPixels)));
    }

    #[test]
    fn sampling_spatially_uniform_chi_square() {
        // 1000x1000 all-visible mask, 2000 draws, 4x4 occupancy grid.
        // chi-square with 15 dof at significance 0.01 -> critical value 30.578.
        let mask = OcclusionMask::all_visible(1000, 1000);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let sample = sample_pixels(&mask, 2000, &mut rng).unwrap();
        let mut cells = [0usize; 16];
        for &i in &sample {
            let x = i % 1000;
            let y = i / 1000;
            cells[(y / 250) * 4 + x / 250] += 1;
        }
        let expected = 2000.0 / 16.0;
        let chi2: f64 = cells.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 30.578, "chi2 = {chi2}, cells {cells:?}");
    }
}
