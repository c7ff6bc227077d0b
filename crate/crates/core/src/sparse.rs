//! Compressed sparse row storage and a profile (skyline) Cholesky factorization.
//!
//! The truth matrices come from lexicographically numbered structured meshes, so
//! every row's envelope is short (one grid line in 2D) and a skyline factor has
//! the same cost as a banded one without storing the band explicitly.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A real sparse matrix in CSR format with sorted, duplicate-free column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for &(i, j, v) in &sorted {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&DVector::from_element(n, 1.0))
    }

    pub fn from_diagonal(d: &DVector<f64>) -> Self {
        let n = d.len();
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: d.iter().copied().collect(),
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut triplets = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    triplets.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &triplets)
    }

    /// Drops entries with `|a_ij| <= rel_tol * max |a|`.
    pub fn pruned(&self, rel_tol: f64) -> Self {
        let cut = rel_tol * self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            triplets.extend(cols.iter().zip(vals).filter(|(_, v)| v.abs() > cut).map(|(&j, &v)| (i, j, v)));
        }
        Self::from_triplets(self.nrows, self.ncols, &triplets)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[range.clone()], &self.values[range])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> DVector<f64> {
        DVector::from_fn(self.nrows.min(self.ncols), |i, _| self.get(i, i))
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.ncols, "sparse mat-vec dimension mismatch");
        DVector::from_fn(self.nrows, |i, _| self.row_dot(i, x))
    }

    /// Dot product of row `i` with `x`.
    pub fn row_dot(&self, i: usize, x: &DVector<f64>) -> f64 {
        let (cols, vals) = self.row(i);
        cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
    }

    /// `A * X` for a dense multi-column right-hand side.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.ncols);
        let mut out = DMatrix::zeros(self.nrows, x.ncols());
        for c in 0..x.ncols() {
            for i in 0..self.nrows {
                let (cols, vals) = self.row(i);
                out[(i, c)] = cols.iter().zip(vals).map(|(&j, &v)| v * x[(j, c)]).sum();
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `diag(left) * A * diag(right)`.
    pub fn scale_rows_cols(&self, left: &DVector<f64>, right: &DVector<f64>) -> Self {
        let mut out = self.clone();
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.values[k] *= left[i] * right[self.col_idx[k]];
            }
        }
        out
    }

    /// Linear combination `sum_k c_k A_k` of matrices with equal shape.
    pub fn linear_combination(terms: &[(f64, &CsrMatrix)]) -> Self {
        assert!(!terms.is_empty(), "empty linear combination");
        let (nrows, ncols) = (terms[0].1.nrows, terms[0].1.ncols);
        if terms.len() == 1 {
            return terms[0].1.scaled(terms[0].0);
        }
        let mut triplets = Vec::new();
        for &(c, m) in terms {
            assert_eq!((m.nrows, m.ncols), (nrows, ncols));
            for i in 0..nrows {
                let (cols, vals) = m.row(i);
                triplets.extend(cols.iter().zip(vals).map(|(&j, &v)| (i, j, c * v)));
            }
        }
        Self::from_triplets(nrows, ncols, &triplets)
    }

    /// Principal submatrix on the sorted index set `idx`.
    pub fn principal_submatrix(&self, idx: &[usize]) -> Self {
        let mut position = vec![usize::MAX; self.ncols];
        for (new, &old) in idx.iter().enumerate() {
            position[old] = new;
        }
        let mut row_ptr = Vec::with_capacity(idx.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for &i in idx {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if position[j] != usize::MAX {
                    col_idx.push(position[j]);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        // monotone relabelling keeps columns sorted when idx is sorted
        Self {
            nrows: idx.len(),
            ncols: idx.len(),
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            triplets.extend(cols.iter().zip(vals).map(|(&j, &v)| (j, i, v)));
        }
        Self::from_triplets(self.ncols, self.nrows, &triplets)
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (0..self.nrows).all(|i| {
            let (cols, vals) = self.row(i);
            cols.iter()
                .zip(vals)
                .all(|(&j, &v)| (v - self.get(j, i)).abs() <= rel_tol * scale)
        })
    }

    /// Returns `c` if `self == c * other` entrywise (same pattern), else `None`.
    pub fn proportionality_to(&self, other: &CsrMatrix, rel_tol: f64) -> Option<f64> {
        if self.row_ptr != other.row_ptr || self.col_idx != other.col_idx {
            return None;
        }
        let (k, _) = other
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))?;
        if other.values[k] == 0.0 {
            return None;
        }
        let c = self.values[k] / other.values[k];
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.values
            .iter()
            .zip(&other.values)
            .all(|(a, b)| (a - c * b).abs() <= rel_tol * scale.max(f64::MIN_POSITIVE))
            .then_some(c)
    }

    /// Largest absolute row sum of `|A|` (Gershgorin bound on the spectral radius).
    pub fn gershgorin_radius(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Cholesky factor `A = L L^T` stored row-wise over each row's envelope.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    n: usize,
    first: Vec<usize>,
    ptr: Vec<usize>,
    vals: Vec<f64>,
}

impl SkylineCholesky {
    /// Factors a symmetric positive definite matrix. Only the lower triangle is read.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::DimensionMismatch {
                context: "skyline cholesky",
                expected: a.nrows,
                found: a.ncols,
            });
        }
        let n = a.nrows;
        let first: Vec<usize> = (0..n)
            .map(|i| a.row(i).0.first().copied().unwrap_or(i).min(i))
            .collect();
        let mut ptr = Vec::with_capacity(n + 1);
        ptr.push(0);
        for i in 0..n {
            ptr.push(ptr[i] + i - first[i] + 1);
        }
        let mut vals = vec![0.0; ptr[n]];
        for i in 0..n {
            let (cols, avals) = a.row(i);
            for (&j, &v) in cols.iter().zip(avals) {
                if j <= i {
                    vals[ptr[i] + j - first[i]] = v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let (head, tail) = vals.split_at_mut(ptr[i]);
                let row_j = &head[ptr[j]..ptr[j + 1]];
                let row_i = &mut tail[..ptr[i + 1] - ptr[i]];
                let dot: f64 = row_i[k0 - fi..j - fi]
                    .iter()
                    .zip(&row_j[k0 - fj..j - fj])
                    .map(|(x, y)| x * y)
                    .sum();
                let ljj = row_j[j - fj];
                row_i[j - fi] = (row_i[j - fi] - dot) / ljj;
            }
            let row_i = &mut vals[ptr[i]..ptr[i + 1]];
            let diag_pos = i - fi;
            let sq: f64 = row_i[..diag_pos].iter().map(|x| x * x).sum();
            let d = row_i[diag_pos] - sq;
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    context: "skyline cholesky",
                    pivot: i,
                });
            }
            row_i[diag_pos] = d.sqrt();
        }
        Ok(Self {
            n,
            first,
            ptr,
            vals,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored factor entries.
    pub fn envelope_size(&self) -> usize {
        self.vals.len()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut DVector<f64>) {
        assert_eq!(x.len(), self.n);
        // forward: L y = b
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.vals[self.ptr[i]..self.ptr[i + 1]];
            let dot: f64 = row[..i - fi]
                .iter()
                .zip(x.as_slice()[fi..i].iter())
                .map(|(l, y)| l * y)
                .sum();
            x[i] = (x[i] - dot) / row[i - fi];
        }
        // backward: L^T x = y, column sweep
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.vals[self.ptr[i]..self.ptr[i + 1]];
            x[i] /= row[i - fi];
            let xi = x[i];
            for (k, l) in (fi..i).zip(row.iter()) {
                x[k] -= l * xi;
            }
        }
    }

    pub fn solve_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = b.clone();
        for c in 0..b.ncols() {
            let mut col = b.column(c).into_owned();
            self.solve_in_place(&mut col);
            out.set_column(c, &col);
        }
        out
    }
}
