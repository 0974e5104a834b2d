use crate::error::{AutodiffError, Result};
use crate::tensor::Scalar;

/// Constant weighted adjacency in compressed-row form. Used as the fixed left
/// operand of [`crate::Tape::spmm`]; it never receives a gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T = f32> {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    weights: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds from `(row, col, weight)` triplets. Triplets need not be sorted;
    /// duplicates are kept as separate entries.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        let mut counts = vec![0usize; rows + 1];
        for &(r, c, _) in triplets {
            if r >= rows {
                return Err(AutodiffError::IndexOutOfRange {
                    op: "csr",
                    index: r,
                    bound: rows,
                });
            }
            if c >= cols {
                return Err(AutodiffError::IndexOutOfRange {
                    op: "csr",
                    index: c,
                    bound: cols,
                });
            }
            counts[r + 1] += 1;
        }
        for i in 0..rows {
            counts[i + 1] += counts[i];
        }
        let row_ptr = counts.clone();
        let mut fill = counts;
        let mut col_idx = vec![0; triplets.len()];
        let mut weights = vec![T::zero(); triplets.len()];
        for &(r, c, w) in triplets {
            let at = fill[r];
            col_idx[at] = c;
            weights[at] = w;
            fill[r] += 1;
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            weights,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.weights[span].iter().copied())
    }

    pub fn cast<U: Scalar>(&self) -> CsrMatrix<U> {
        CsrMatrix {
            rows: self.rows,
            cols: self.cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            weights: self.weights.iter().map(|w| U::from_f64(w.as_f64())).collect(),
        }
    }
}
