//! Motion segmentation: spectral clustering of the self-expression affinity
//! built from lifted correspondences, plus model selection by the eigengap of
//! the normalized graph Laplacian.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::subspace::{lift, lift_column, sample_pixels, subspace_expression};
use crate::types::{correspondences_at, FlowField, LossConfig, OcclusionMask};

/// Past this order the full symmetric eigendecomposition is replaced by
/// Lanczos with full reorthogonalization.
const DENSE_EIGEN_CUTOFF: usize = 512;

#[derive(Debug, Clone)]
pub struct MotionLabels {
    /// Per-pixel motion label over the whole field.
    pub labels: Vec<usize>,
    /// Pixels whose lifted vectors built the affinity.
    pub sample_indices: Vec<usize>,
    /// Cluster of each sampled pixel, aligned with `sample_indices`.
    pub sample_labels: Vec<usize>,
    /// Number of motions used for the clustering.
    pub motions: usize,
    /// The (sparsified, normalized) affinity the samples were clustered on.
    pub affinity: DMatrix<f64>,
    /// Smallest Laplacian eigenvalues (ascending) inspected for model selection.
    pub laplacian_eigenvalues: Vec<f64>,
}

/// Symmetric nonnegative affinity |C| + |C^T| with a zeroed diagonal,
/// symmetrically normalized by row sums (D^{-1/2} A D^{-1/2}). The
/// normalization makes the result invariant to the overall scale of C.
pub fn build_affinity(c: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(c.nrows(), c.ncols());
    let n = c.nrows();
    let raw = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            c[(i, j)].abs() + c[(j, i)].abs()
        }
    });
    normalized_adjacency(&raw)
}

/// Keeps the `keep` largest entries of each row and re-symmetrizes by the
/// elementwise maximum, so an edge survives if either endpoint ranks it.
/// `keep == 0` returns the input unchanged.
pub fn sparsify_affinity(a: &DMatrix<f64>, keep: usize) -> DMatrix<f64> {
    let n = a.nrows();
    if keep == 0 || keep >= n {
        return a.clone();
    }
    let mut b = DMatrix::<f64>::zeros(n, n);
    let mut idx: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        idx.clear();
        idx.extend(0..n);
        idx.sort_by(|&p, &q| a[(i, q)].total_cmp(&a[(i, p)]));
        for &j in idx.iter().take(keep) {
            b[(i, j)] = a[(i, j)];
        }
    }
    DMatrix::from_fn(n, n, |i, j| b[(i, j)].max(b[(j, i)]))
}

/// D^{-1/2} A D^{-1/2}; isolated rows stay zero.
fn normalized_adjacency(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut dinv = vec![0.0f64; n];
    for i in 0..n {
        let d: f64 = a.row(i).iter().sum();
        if d > 1e-12 {
            dinv[i] = 1.0 / d.sqrt();
        }
    }
    DMatrix::from_fn(n, n, |i, j| a[(i, j)] * dinv[i] * dinv[j])
}

/// Top-k eigenpairs (descending) of a symmetric matrix. Dense below the
/// cutoff; otherwise Lanczos with full reorthogonalization. Plain subspace
/// iteration stalls here: graph adjacencies put the informative eigenvalues
/// in tight clusters and the power ratios between them approach 1.
fn top_eigenpairs(m: &DMatrix<f64>, k: usize, dense_cutoff: usize) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let k = k.min(n);
    if n <= dense_cutoff {
        let eig = nalgebra::SymmetricEigen::new(m.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let vals = order.iter().take(k).map(|&i| eig.eigenvalues[i]).collect();
        let vecs = DMatrix::from_fn(n, k, |r, c| eig.eigenvectors[(r, order[c])]);
        return (vals, vecs);
    }

    let m_max = n.min(8 * k + 120);
    let mut rng = ChaCha8Rng::seed_from_u64(0x51ab_57ac);
    let mut vs: Vec<DVector<f64>> = Vec::with_capacity(m_max + 1);
    let mut alphas: Vec<f64> = Vec::with_capacity(m_max);
    let mut betas: Vec<f64> = Vec::with_capacity(m_max);
    let random_unit = |rng: &mut ChaCha8Rng, vs: &[DVector<f64>]| -> Option<DVector<f64>> {
        for _ in 0..8 {
            let mut r = DVector::from_fn(n, |_, _| rng.random_range(-1.0f64..1.0));
            for _ in 0..2 {
                for u in vs {
                    let c = u.dot(&r);
                    r.axpy(-c, u, 1.0);
                }
            }
            let nr = r.norm();
            if nr > 1e-8 {
                return Some(r / nr);
            }
        }
        None
    };
    vs.push(random_unit(&mut rng, &vs).expect("n >= 1"));
    while alphas.len() < m_max {
        let j = alphas.len();
        let mut w = m * &vs[j];
        let alpha = vs[j].dot(&w);
        w.axpy(-alpha, &vs[j], 1.0);
        if j > 0 {
            w.axpy(-betas[j - 1], &vs[j - 1], 1.0);
        }
        // full reorthogonalization, two passes, keeps the basis orthonormal
        // to machine precision
        for _ in 0..2 {
            for u in &vs {
                let c = u.dot(&w);
                w.axpy(-c, u, 1.0);
            }
        }
        alphas.push(alpha);
        let beta = w.norm();
        if beta > 1e-13 {
            betas.push(beta);
            vs.push(w / beta);
        } else {
            // invariant subspace; continue from a fresh orthogonal direction
            match random_unit(&mut rng, &vs) {
                Some(v) => {
                    betas.push(0.0);
                    vs.push(v);
                }
                None => break,
            }
        }
    }

    let mt = alphas.len();
    let t = DMatrix::from_fn(mt, mt, |i, j| {
        if i == j {
            alphas[i]
        } else if i == j + 1 || j == i + 1 {
            betas[i.min(j)]
        } else {
            0.0
        }
    });
    let eig = nalgebra::SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..mt).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let k = k.min(mt);
    let vals: Vec<f64> = order.iter().take(k).map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::<f64>::zeros(n, k);
    for (c, &oi) in order.iter().take(k).enumerate() {
        let mut col = DVector::<f64>::zeros(n);
        for (r, v) in vs.iter().take(mt).enumerate() {
            col.axpy(eig.eigenvectors[(r, oi)], v, 1.0);
        }
        let nc = col.norm();
        if nc > 0.0 {
            col /= nc;
        }
        vecs.set_column(c, &col);
    }
    (vals, vecs)
}

// ---- k-means on embedding rows ----

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_once(
    rows: &[Vec<f64>],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, f64) {
    let n = rows.len();
    let dim = rows[0].len();
    // k-means++ seeding
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(rows[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 1e-24 {
            rng.random_range(0..n)
        } else {
            let mut r = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            pick
        };
        centers.push(rows[next].clone());
        for (i, row) in rows.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(row, centers.last().unwrap()));
        }
    }

    let mut labels = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for (i, row) in rows.iter().enumerate() {
            let mut best = (f64::MAX, 0usize);
            for (c, center) in centers.iter().enumerate() {
                let d = sq_dist(row, center);
                if d < best.0 {
                    best = (d, c);
                }
            }
            if labels[i] != best.1 {
                labels[i] = best.1;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, row) in rows.iter().enumerate() {
            counts[labels[i]] += 1;
            for (s, v) in sums[labels[i]].iter_mut().zip(row) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // re-seed an empty cluster at the point farthest from its center
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(&rows[a], &centers[labels[a]])
                            .total_cmp(&sq_dist(&rows[b], &centers[labels[b]]))
                    })
                    .unwrap();
                centers[c] = rows[far].clone();
                changed = true;
            } else {
                for (j, s) in sums[c].iter().enumerate() {
                    centers[c][j] = s / counts[c] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = rows
        .iter()
        .zip(&labels)
        .map(|(r, &l)| sq_dist(r, &centers[l]))
        .sum();
    (labels, inertia)
}

fn kmeans(rows: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Vec<usize> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    for r in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0xc1u64 << 32) ^ r as u64);
        let (labels, inertia) = kmeans_once(rows, k, &mut rng);
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, labels));
        }
    }
    best.unwrap().1
}

fn cluster_embedding(vecs: &DMatrix<f64>, k: usize, seed: u64) -> Vec<usize> {
    let n = vecs.nrows();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let row: Vec<f64> = (0..k.min(vecs.ncols())).map(|j| vecs[(i, j)]).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-12 {
                row.iter().map(|v| v / norm).collect()
            } else {
                row
            }
        })
        .collect();
    kmeans(&rows, k, seed, 10)
}

/// Clusters the rows of a symmetric affinity into k groups: row-normalized
/// top-k eigenvectors of D^{-1/2} A D^{-1/2}, then seeded k-means with
/// restarts.
pub fn spectral_cluster(a: &DMatrix<f64>, k: usize, seed: u64) -> Vec<usize> {
    assert!(k >= 1);
    let adj = normalized_adjacency(a);
    let (_, vecs) = top_eigenpairs(&adj, k, DENSE_EIGEN_CUTOFF);
    cluster_embedding(&vecs, k, seed)
}

/// Softening constant for the eigengap score: eigenvalues below this scale
/// read as "zero-like" and gaps between them score low.
const EIGENGAP_DAMP: f64 = 0.01;

/// Picks the motion count from the smallest eigenvalues of the normalized
/// Laplacian L = I - D^{-1/2} A D^{-1/2}: k maximizing the damped relative
/// gap (lam[k] - lam[k-1]) / (lam[k] + damp). A plain absolute gap fails on
/// sparsified affinities, where the spectrum keeps widening past the true
/// count; a plain ratio fails because lam[0] of a connected graph is exactly
/// zero. Returns the chosen count and the inspected eigenvalues (ascending).
pub fn estimate_motion_count(a: &DMatrix<f64>, k_max: usize) -> (usize, Vec<f64>) {
    let n = a.nrows();
    let k_max = k_max.min(n.saturating_sub(1)).max(1);
    let adj = normalized_adjacency(a);
    let (vals, _) = top_eigenpairs(&adj, k_max + 1, DENSE_EIGEN_CUTOFF);
    // adjacency eigenvalues descending -> Laplacian eigenvalues ascending
    let lam: Vec<f64> = vals.iter().map(|v| 1.0 - v).collect();
    (pick_count_by_gap(&lam), lam)
}

fn pick_count_by_gap(lam: &[f64]) -> usize {
    let mut best = (1usize, f64::MIN);
    for i in 0..lam.len().saturating_sub(1) {
        let score = (lam[i + 1] - lam[i]) / (lam[i + 1] + EIGENGAP_DAMP);
        if score > best.1 {
            best = (i + 1, score);
        }
    }
    best.0
}

/// Fraction of agreeing labels under the best one-to-one relabeling. Both
/// labelings must use ids below 9 (the search is over permutations).
pub fn segmentation_accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(pred.len(), truth.len());
    assert!(!pred.is_empty());
    let k = pred
        .iter()
        .chain(truth.iter())
        .map(|&l| l + 1)
        .max()
        .unwrap();
    assert!(k <= 8, "permutation matching supports at most 8 labels");
    let mut confusion = vec![vec![0usize; k]; k];
    for (&p, &t) in pred.iter().zip(truth) {
        confusion[p][t] += 1;
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0usize;
    permute(&mut perm, 0, &mut |p| {
        let score: usize = (0..k).map(|i| confusion[i][p[i]]).sum();
        best = best.max(score);
    });
    best as f64 / pred.len() as f64
}

fn permute(items: &mut Vec<usize>, start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, visit);
        items.swap(start, i);
    }
}

/// End-to-end segmentation of a flow field. Samples visible pixels, builds the
/// self-expression affinity from their lifted correspondences, picks the motion
/// count by eigengap unless one is given, clusters the samples spectrally, and
/// extends labels to every pixel by smallest residual against each cluster's
/// lifted subspace basis.
pub fn segment_flow(
    flow: &FlowField,
    visible: Option<&OcclusionMask>,
    k: Option<usize>,
    k_max: usize,
    cfg: &LossConfig,
) -> Result<MotionLabels, Error> {
    let all;
    let mask = match visible {
        Some(m) => m,
        None => {
            all = OcclusionMask::all_visible(flow.width(), flow.height());
            &all
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ 0x5e6_3417);
    let idxs = sample_pixels(mask, cfg.sample_count, &mut rng)?;
    let corrs = correspondences_at(flow, &idxs);
    let lifted = lift(&corrs, cfg.lift_normalize);
    let expr = subspace_expression(&lifted, cfg.lambda_seg);
    let affinity = sparsify_affinity(&build_affinity(&expr.c), cfg.affinity_keep);

    let adj = normalized_adjacency(&affinity);
    let n = adj.nrows();
    let k_max = k_max.min(n.saturating_sub(1)).max(1);
    let want = k.unwrap_or(k_max).max(1).min(n);
    let (vals, vecs) = top_eigenpairs(&adj, want.max(k_max + 1), DENSE_EIGEN_CUTOFF);
    let lam: Vec<f64> = vals.iter().take(k_max + 1).map(|v| 1.0 - v).collect();
    let motions = match k {
        Some(k) => k.max(1).min(n),
        None => pick_count_by_gap(&lam),
    };
    let sample_labels = cluster_embedding(&vecs, motions, cfg.rng_seed);

    // per-cluster orthonormal bases of the lifted columns
    let mut bases: Vec<DMatrix<f64>> = Vec::with_capacity(motions);
    for c in 0..motions {
        let cols: Vec<usize> =
            (0..n).filter(|&i| sample_labels[i] == c).collect();
        if cols.is_empty() {
            bases.push(DMatrix::zeros(9, 1));
            continue;
        }
        let sub = DMatrix::from_fn(9, cols.len(), |r, j| lifted.h[(r, cols[j])]);
        let svd = sub.svd(true, false);
        let u = svd.u.as_ref().ok_or(Error::SvdFailure)?;
        let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > 0.01 * smax)
            .count()
            .clamp(1, 8);
        bases.push(DMatrix::from_fn(9, rank, |r, j| u[(r, j)]));
    }

    let (w, h) = (flow.width(), flow.height());
    let mut labels = vec![0usize; w * h];
    let every: Vec<usize> = (0..w * h).collect();
    let full = correspondences_at(flow, &every);
    for (i, c) in full.iter().enumerate() {
        let col = lift_column(c, lifted.normalization.as_ref());
        let v = nalgebra::SVector::<f64, 9>::from_row_slice(&col);
        let norm2 = v.norm_squared();
        let mut best = (f64::MAX, 0usize);
        for (ci, b) in bases.iter().enumerate() {
            // residual ||h - B B^T h||^2 = ||h||^2 - ||B^T h||^2
            let proj = b.transpose() * v;
            let resid = norm2 - proj.norm_squared();
            if resid < best.0 {
                best = (resid, ci);
            }
        }
        labels[i] = best.1;
    }

    Ok(MotionLabels {
        labels,
        sample_indices: idxs,
        sample_labels,
        motions,
        affinity,
        laplacian_eigenvalues: lam,
    })
}
