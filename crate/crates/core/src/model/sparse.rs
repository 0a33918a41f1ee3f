use nalgebra::DMatrix;

/// Coordinate-format sparse matrix with entries sorted by (row, col) and
/// no duplicates. Indices are zero-based.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    /// Build from unordered triplets; duplicates are summed and explicit
    /// zeros dropped. Panics on out-of-range indices.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(i, j, _) in &entries {
            assert!(
                i < rows && j < cols,
                "triplet ({i}, {j}) outside {rows}x{cols}"
            );
        }
        entries.sort_by_key(|e| (e.0, e.1));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (i, j, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => merged.push((i, j, v)),
            }
        }
        merged.retain(|e| e.2 != 0.0);
        Self {
            rows,
            cols,
            entries: merged,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries
            .binary_search_by(|e| (e.0, e.1).cmp(&(i, j)))
            .map(|pos| self.entries[pos].2)
            .unwrap_or(0.0)
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(
            self.cols,
            self.rows,
            self.entries.iter().map(|&(i, j, v)| (j, i, v)),
        )
    }

    /// Largest entrywise deviation from symmetry.
    pub fn max_asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        self.entries
            .iter()
            .map(|&(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|e| e.2.abs()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for &(i, j, v) in &self.entries {
            out[(i, j)] = v;
        }
        out
    }

    /// Number of stored entries in column `j`.
    pub fn column_nnz(&self, j: usize) -> usize {
        self.entries.iter().filter(|e| e.1 == j).count()
    }

    /// `self^T * dense` without densifying `self`.
    pub fn transpose_mul(&self, dense: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(dense.nrows(), self.rows);
        let mut out = DMatrix::zeros(self.cols, dense.ncols());
        for &(i, j, v) in &self.entries {
            for c in 0..dense.ncols() {
                out[(j, c)] += v * dense[(i, c)];
            }
        }
        out
    }
}
