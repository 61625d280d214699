use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric sparsity pattern stored as full CSR with sorted column indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl SparsityPattern {
    /// Pattern made of dense blocks over each DOF group, plus the full diagonal.
    pub fn from_groups<'a>(n: usize, groups: impl IntoIterator<Item = &'a [usize]>) -> Result<Self> {
        let mut rows: Vec<Vec<usize>> = (0..n).map(|r| vec![r]).collect();
        for g in groups {
            for &r in g {
                if r >= n {
                    return Err(Error::InvalidInput(format!("index {r} out of range for dimension {n}")));
                }
                rows[r].extend_from_slice(g);
            }
        }
        Ok(Self::from_rows(rows))
    }

    /// Symmetrizes the given adjacency and adds the diagonal.
    pub fn from_entries(n: usize, entries: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut rows: Vec<Vec<usize>> = (0..n).map(|r| vec![r]).collect();
        for (r, c) in entries {
            if r >= n || c >= n {
                return Err(Error::InvalidInput(format!("entry ({r}, {c}) out of range for dimension {n}")));
            }
            rows[r].push(c);
            rows[c].push(r);
        }
        Ok(Self::from_rows(rows))
    }

    fn from_rows(mut rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        Self { n, row_ptr, col_idx }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries, counting both triangles.
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    pub fn row_range(&self, r: usize) -> std::ops::Range<usize> {
        self.row_ptr[r]..self.row_ptr[r + 1]
    }

    /// Storage slot of `(r, c)`.
    pub fn find(&self, r: usize, c: usize) -> Option<usize> {
        if r >= self.n {
            return None;
        }
        self.row(r).binary_search(&c).ok().map(|k| self.row_ptr[r] + k)
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        self.find(r, c).is_some()
    }

    /// Iterates `(row, col, slot)` over all stored entries.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.n).flat_map(move |r| self.row_range(r).map(move |k| (r, self.col_idx[k], k)))
    }
}

/// Symmetric sparse matrix on a shared pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
}

impl SparseSymmetric {
    /// Checks finiteness, a positive diagonal and value symmetry.
    pub fn new(pattern: Arc<SparsityPattern>, values: Vec<f64>) -> Result<Self> {
        if values.len() != pattern.nnz() {
            return Err(Error::InvalidInput(format!(
                "{} values for a pattern with {} entries",
                values.len(),
                pattern.nnz()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite matrix entry".into()));
        }
        let m = Self { pattern, values };
        for r in 0..m.dim() {
            let d = m.get(r, r);
            if d <= 0.0 {
                return Err(Error::InvalidInput(format!("diagonal entry {r} is {d}")));
            }
        }
        for (r, c, k) in m.pattern.entries() {
            if c > r {
                let t = m.get(c, r);
                if (m.values[k] - t).abs() > 1e-12 * m.values[k].abs().max(t.abs()) {
                    return Err(Error::InvalidInput(format!("entries ({r}, {c}) and ({c}, {r}) differ")));
                }
            }
        }
        Ok(m)
    }

    pub(crate) fn from_parts_unchecked(pattern: Arc<SparsityPattern>, values: Vec<f64>) -> Self {
        Self { pattern, values }
    }

    /// Keeps entries with magnitude above `drop_tol` (plus the diagonal).
    pub fn from_dense(m: &DMatrix<f64>, drop_tol: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidInput("matrix is not square".into()));
        }
        let n = m.nrows();
        let entries =
            (0..n).flat_map(|r| (0..n).map(move |c| (r, c))).filter(|&(r, c)| r != c && m[(r, c)].abs() > drop_tol);
        let pattern = Arc::new(SparsityPattern::from_entries(n, entries)?);
        let values = pattern.entries().map(|(r, c, _)| m[(r, c)]).collect();
        Self::new(pattern, values)
    }

    pub fn dim(&self) -> usize {
        self.pattern.dim()
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pattern.find(r, c).map_or(0.0, |k| self.values[k])
    }

    pub fn diagonal(&self) -> DVector<f64> {
        DVector::from_fn(self.dim(), |r, _| self.get(r, r))
    }

    /// `y = K x`.
    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.pattern.row_range(r) {
                acc += self.values[k] * x[self.pattern.col_idx[k]];
            }
            *yr = acc;
        }
    }

    pub fn mul(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.dim());
        self.mul_into(x.as_slice(), y.as_mut_slice());
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for (r, c, k) in self.pattern.entries() {
            m[(r, c)] = self.values[k];
        }
        m
    }

    /// Copy with `delta` added on the `dofs x dofs` block. The block must be in the pattern.
    pub fn with_block_added(&self, dofs: &[usize], delta: &DMatrix<f64>) -> Result<Self> {
        let mut values = self.values.clone();
        for (a, &r) in dofs.iter().enumerate() {
            for (b, &c) in dofs.iter().enumerate() {
                let k = self
                    .pattern
                    .find(r, c)
                    .ok_or_else(|| Error::InvalidInput(format!("entry ({r}, {c}) outside the pattern")))?;
                values[k] += delta[(a, b)];
            }
        }
        Ok(Self { pattern: self.pattern.clone(), values })
    }
}
