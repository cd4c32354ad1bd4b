//! Randomized truncated SVD (range finder + power iterations).

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use super::sparse::SparseMatrix;
use super::EmbedError;
use crate::rng::rng_from_seed;

pub const OVERSAMPLING: usize = 10;
pub const POWER_ITERATIONS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub k: usize,
    /// Non-increasing.
    pub singular_values: Vec<f64>,
    /// `V x k`, orthonormal columns.
    pub right_basis: DMatrix<f64>,
    pub seed: u64,
}

impl SvdFactors {
    /// Largest absolute entry of `B^T B - I`.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.right_basis.transpose() * &self.right_basis;
        let mut worst: f64 = 0.0;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }
}

fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

/// Rank-`k` factorisation of an `N x V` matrix. Returns the factors and the
/// `N x k` document embeddings `U * diag(s)`. Deterministic for a fixed seed.
pub fn truncated_svd(
    matrix: &SparseMatrix,
    k: usize,
    seed: u64,
) -> Result<(SvdFactors, DMatrix<f64>), EmbedError> {
    let max_rank = matrix.rows.min(matrix.cols);
    if k == 0 || k > max_rank {
        return Err(EmbedError::RankTooLarge { k, max_rank });
    }
    let l = (k + OVERSAMPLING).min(max_rank);
    let mut rng = rng_from_seed(seed);
    let omega = DMatrix::from_fn(matrix.cols, l, |_, _| StandardNormal.sample(&mut rng));

    let mut q = orthonormalize(matrix.mul_dense(&omega));
    for _ in 0..POWER_ITERATIONS {
        let z = orthonormalize(matrix.tr_mul_dense(&q));
        q = orthonormalize(matrix.mul_dense(&z));
    }

    // B^T = A^T Q is V x l; its SVD gives B = (V_b S U_b^T)^T.
    let bt = matrix.tr_mul_dense(&q);
    let svd = bt.svd(true, true);
    let v_b = svd.u.expect("requested u");
    let u_bt = svd.v_t.expect("requested v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let order = &order[..k];

    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut right_basis = DMatrix::from_fn(matrix.cols, k, |r, c| v_b[(r, order[c])]);
    // Left singular vectors in the small space: columns of U_b = rows of u_bt.
    let mut u_small = DMatrix::from_fn(l, k, |r, c| u_bt[(order[c], r)]);

    // Sign convention: largest-magnitude entry of each right vector is positive.
    for c in 0..k {
        let col = right_basis.column(c);
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            right_basis.column_mut(c).neg_mut();
            u_small.column_mut(c).neg_mut();
        }
    }

    let mut embeddings = &q * u_small;
    for (c, s) in singular_values.iter().enumerate() {
        embeddings.column_mut(c).scale_mut(*s);
    }
    Ok((
        SvdFactors {
            k,
            singular_values,
            right_basis,
            seed,
        },
        embeddings,
    ))
}
