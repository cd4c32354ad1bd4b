use nalgebra::DMatrix;
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    pub dim: usize,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i] = v;
        }
        out
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_rows(cols: usize, rows: &[SparseVector]) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for r in rows {
            indices.extend_from_slice(&r.indices);
            values.extend_from_slice(&r.values);
            indptr.push(indices.len());
        }
        Self {
            rows: rows.len(),
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let rows: Vec<SparseVector> = (0..m.nrows())
            .map(|i| {
                let (indices, values) = (0..m.ncols())
                    .filter(|&j| m[(i, j)] != 0.0)
                    .map(|j| (j, m[(i, j)]))
                    .unzip();
                SparseVector {
                    dim: m.ncols(),
                    indices,
                    values,
                }
            })
            .collect();
        Self::from_rows(m.ncols(), &rows)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                out[(i, self.indices[k])] = self.values[k];
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `self * m` for a dense `cols x l` matrix.
    pub fn mul_dense(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(self.cols, m.nrows());
        let l = m.ncols();
        // Row-major copy of m so each sparse entry touches a contiguous row.
        let mt = m.transpose();
        let mt = mt.as_slice();
        let rows: Vec<Vec<f64>> = (0..self.rows)
            .into_par_iter()
            .map(|i| {
                let mut acc = vec![0.0; l];
                for k in self.indptr[i]..self.indptr[i + 1] {
                    let v = self.values[k];
                    let src = &mt[self.indices[k] * l..(self.indices[k] + 1) * l];
                    for (a, s) in acc.iter_mut().zip(src) {
                        *a += v * s;
                    }
                }
                acc
            })
            .collect();
        DMatrix::from_fn(self.rows, l, |i, c| rows[i][c])
    }

    /// `self^T * m` for a dense `rows x l` matrix.
    pub fn tr_mul_dense(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(self.rows, m.nrows());
        let l = m.ncols();
        let mt = m.transpose();
        let mt = mt.as_slice();
        // Row-major accumulator over columns of self.
        let mut acc = vec![0.0; self.cols * l];
        for i in 0..self.rows {
            let src = &mt[i * l..(i + 1) * l];
            for k in self.indptr[i]..self.indptr[i + 1] {
                let v = self.values[k];
                let dst = &mut acc[self.indices[k] * l..(self.indices[k] + 1) * l];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += v * s;
                }
            }
        }
        DMatrix::from_row_slice(self.cols, l, &acc)
    }
}
