//! Small dense helpers: weighted Gram-Schmidt, independence filtering and
//! extreme eigenvalue estimates.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, SkylineCholesky};

/// Incrementally built basis, orthonormal in the inner product `(x, y) = x^T W y`.
///
/// `W` is supplied as a mat-vec closure so the same type serves the X_V product
/// (sparse) and the Euclidean product (`W = I`).
pub struct WeightedOrthoBasis<'a> {
    weight: Box<dyn Fn(&DVector<f64>) -> DVector<f64> + 'a>,
    droptol: f64,
    vectors: Vec<DVector<f64>>,
    weighted: Vec<DVector<f64>>,
}

/// Outcome of offering a vector to a [`WeightedOrthoBasis`].
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// Coefficients against the existing basis vectors.
    pub coefficients: Vec<f64>,
    /// Norm of the remainder after projection.
    pub remainder: f64,
    /// Norm of the candidate before projection.
    pub norm: f64,
    pub accepted: bool,
}

impl<'a> WeightedOrthoBasis<'a> {
    pub fn new(weight: impl Fn(&DVector<f64>) -> DVector<f64> + 'a, droptol: f64) -> Self {
        Self {
            weight: Box::new(weight),
            droptol,
            vectors: Vec::new(),
            weighted: Vec::new(),
        }
    }

    pub fn euclidean(droptol: f64) -> Self {
        Self::new(|x| x.clone(), droptol)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Projects `v` out of the current basis (modified Gram-Schmidt, two passes)
    /// and appends the normalized remainder unless it is below
    /// `droptol * ||v||`.
    pub fn offer(&mut self, v: &DVector<f64>) -> Projection {
        let wv = (self.weight)(v);
        let norm = v.dot(&wv).max(0.0).sqrt();
        let mut coefficients = vec![0.0; self.vectors.len()];
        let mut rem = v.clone();
        for _pass in 0..2 {
            for (k, (q, wq)) in self.vectors.iter().zip(&self.weighted).enumerate() {
                let c = wq.dot(&rem);
                rem.axpy(-c, q, 1.0);
                coefficients[k] += c;
            }
        }
        let wrem = (self.weight)(&rem);
        let remainder = rem.dot(&wrem).max(0.0).sqrt();
        let accepted = norm > 0.0 && remainder > self.droptol * norm;
        if accepted {
            self.vectors.push(rem / remainder);
            self.weighted.push(wrem / remainder);
        }
        Projection {
            coefficients,
            remainder,
            norm,
            accepted,
        }
    }

    pub fn vectors(&self) -> &[DVector<f64>] {
        &self.vectors
    }

    pub fn into_matrix(self, nrows: usize) -> DMatrix<f64> {
        columns_to_matrix(nrows, &self.vectors)
    }
}

pub fn columns_to_matrix(nrows: usize, cols: &[DVector<f64>]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(nrows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

/// Nonnegative least squares `min ||A x - b||, x >= 0` by the Lawson-Hanson
/// active set method. Returns the minimizer.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let m = a.ncols();
    let mut x = DVector::zeros(m);
    if m == 0 {
        return x;
    }
    let tol = 10.0 * f64::EPSILON * a.norm() * b.norm().max(f64::MIN_POSITIVE) * m as f64;
    let mut passive = vec![false; m];
    let solve_passive = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..m).filter(|&i| passive[i]).collect();
        let sub = a.select_columns(&idx);
        let z = sub.svd(true, true).solve(b, f64::EPSILON * m as f64).expect("svd with both factors");
        let mut s = DVector::zeros(m);
        for (k, &i) in idx.iter().enumerate() {
            s[i] = z[k];
        }
        s
    };
    for _ in 0..3 * m {
        let w = a.tr_mul(&(b - a * &x));
        let candidate = (0..m).filter(|&i| !passive[i]).max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate.filter(|&j| w[j] > tol) else {
            break;
        };
        passive[j] = true;
        for _ in 0..3 * m {
            let s = solve_passive(&passive);
            if (0..m).all(|i| !passive[i] || s[i] > 0.0) {
                x = s;
                break;
            }
            let alpha = (0..m)
                .filter(|&i| passive[i] && s[i] <= 0.0)
                .map(|i| x[i] / (x[i] - s[i]))
                .fold(f64::INFINITY, f64::min);
            x += (s - &x) * alpha;
            for i in 0..m {
                if passive[i] && x[i] <= 0.0 {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
        }
    }
    x
}

/// Indices of columns that generate the same convex cone as all of
/// `columns`: a column is dropped when its nonnegative least squares
/// remainder against the other kept columns is at most `droptol` times its
/// norm. Zero columns are dropped. Unlike a linear independence filter this
/// never removes an extreme ray, so the nonnegative span is preserved.
pub fn cone_generators(columns: &[DVector<f64>], droptol: f64) -> Vec<usize> {
    let mut keep: Vec<usize> = (0..columns.len()).filter(|&j| columns[j].norm() > 0.0).collect();
    // latest first, so that of several parallel columns the earliest stays
    for j in (0..columns.len()).rev() {
        let Some(pos) = keep.iter().position(|&k| k == j) else {
            continue;
        };
        let others: Vec<usize> = keep.iter().copied().filter(|&k| k != j).collect();
        if others.is_empty() {
            continue;
        }
        let a = columns_to_matrix(columns[j].len(), &others.iter().map(|&k| columns[k].clone()).collect::<Vec<_>>());
        let x = nnls(&a, &columns[j]);
        if (&a * x - &columns[j]).norm() <= droptol * columns[j].norm() {
            keep.remove(pos);
        }
    }
    keep
}

/// Upper triangular factor `R` (rank x m) with `G = R^T R`, where `G` is the
/// Gramian of `vectors` in the `W` inner product. Computed by weighted QR so
/// that `||R c||` evaluates `sqrt(c^T G c)` without squaring the conditioning.
pub fn weighted_r_factor(
    vectors: &[DVector<f64>],
    weight: impl Fn(&DVector<f64>) -> DVector<f64>,
    droptol: f64,
) -> DMatrix<f64> {
    let mut basis = WeightedOrthoBasis::new(weight, droptol);
    let mut entries: Vec<(Vec<f64>, Option<f64>)> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let p = basis.offer(v);
        entries.push((p.coefficients, p.accepted.then_some(p.remainder)));
    }
    let rank = basis.len();
    let mut r = DMatrix::zeros(rank, vectors.len());
    let mut row = 0;
    for (j, (coeffs, diag)) in entries.iter().enumerate() {
        for (k, &c) in coeffs.iter().enumerate() {
            r[(k, j)] = c;
        }
        if let Some(d) = diag {
            r[(row, j)] = *d;
            row += 1;
        }
    }
    r
}

/// Smallest and largest eigenvalues of a symmetric dense matrix.
pub fn symmetric_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Largest eigenvalue of a sparse symmetric positive definite matrix.
///
/// Runs Lanczos with full reorthogonalization on `(sigma I - C)^{-1}` with
/// `sigma` slightly above the Gershgorin bound, which separates the top of the
/// spectrum of `C` even when it is tightly clustered.
pub fn sparse_lambda_max(c: &CsrMatrix) -> Result<f64> {
    let n = c.nrows();
    if n == 0 {
        return Err(Error::Singular("empty matrix"));
    }
    let sigma = c.gershgorin_radius() * (1.0 + 1e-3) + f64::MIN_POSITIVE;
    let shifted = CsrMatrix::linear_combination(&[(sigma, &CsrMatrix::identity(n)), (-1.0, c)]);
    let chol = SkylineCholesky::factor(&shifted)?;
    let theta = lanczos_top(n, |x| chol.solve(x), 1e-14, 300.min(n))?;
    Ok(sigma - 1.0 / theta)
}

/// Largest eigenvalue of the symmetric operator `op` by Lanczos with full
/// reorthogonalization, stopping when the Ritz residual falls below
/// `rel_tol * theta`.
pub fn lanczos_top(
    n: usize,
    op: impl Fn(&DVector<f64>) -> DVector<f64>,
    rel_tol: f64,
    max_steps: usize,
) -> Result<f64> {
    let mut q = DVector::from_fn(n, |i, _| 1.0 + ((i * 7919) % 101) as f64 / 101.0);
    q /= q.norm();
    let mut qs: Vec<DVector<f64>> = vec![q];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut theta = 0.0;
    for k in 0..max_steps.max(1) {
        let mut w = op(&qs[k]);
        let a = qs[k].dot(&w);
        alphas.push(a);
        for _ in 0..2 {
            for qj in &qs {
                let c = qj.dot(&w);
                w.axpy(-c, qj, 1.0);
            }
        }
        let b = w.norm();
        let m = alphas.len();
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alphas[i];
            if i + 1 < m {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let (idx, &top) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .unwrap();
        theta = top;
        let last = eig.eigenvectors[(m - 1, idx)];
        if (b * last).abs() <= rel_tol * theta.abs() || b <= f64::EPSILON * theta.abs() || m == n {
            return Ok(theta);
        }
        betas.push(b);
        qs.push(w / b);
    }
    if theta > 0.0 {
        Ok(theta)
    } else {
        Err(Error::Singular("lanczos did not produce a positive Ritz value"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nnls_matches_clipped_solution() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let b = DVector::from_row_slice(&[2.0, -1.0, 5.0]);
        let x = nnls(&a, &b);
        assert!((x - DVector::from_row_slice(&[2.0, 0.0])).amax() < 1e-14);
    }

    #[test]
    fn cone_generators_keep_extreme_rays() {
        let e1 = DVector::from_row_slice(&[1.0, 0.0, 0.0]);
        let e2 = DVector::from_row_slice(&[0.0, 1.0, 0.0]);
        let mid = DVector::from_row_slice(&[0.5, 0.5, 0.0]);
        // c3 = 2 c2 - c1 is linearly dependent but outside the cone of c1, c2
        let c = |y: f64| DVector::from_row_slice(&[1.0, y, 0.0]);
        assert_eq!(cone_generators(&[e1.clone(), mid, e2], 1e-10), vec![0, 2]);
        assert_eq!(cone_generators(&[c(0.0), c(1.0), c(2.0)], 1e-10), vec![0, 2]);
        assert_eq!(cone_generators(&[e1.clone(), e1 * 3.0, DVector::zeros(3)], 1e-10), vec![0]);
    }

    #[test]
    fn gram_schmidt_drops_dependent_vectors() {
        let w = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let mut basis = WeightedOrthoBasis::new(|x| &w * x, 1e-10);
        let a = DVector::from_vec(vec![1.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        assert!(basis.offer(&a).accepted);
        assert!(basis.offer(&b).accepted);
        assert!(!basis.offer(&(&a * 3.0 - &b)).accepted);
        let m = basis.into_matrix(3);
        let gram = m.transpose() * &w * &m;
        assert!((gram - DMatrix::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn r_factor_reproduces_gramian() {
        let vs: Vec<DVector<f64>> = (0..4)
            .map(|k| DVector::from_fn(6, |i, _| ((i + 1) as f64).powi(k as i32 % 3) + k as f64))
            .collect();
        let w = DMatrix::from_fn(6, 6, |i, j| if i == j { 3.0 } else { 1.0 / (1.0 + (i + j) as f64) });
        let r = weighted_r_factor(&vs, |x| &w * x, 1e-12);
        let v = columns_to_matrix(6, &vs);
        let gram = v.transpose() * &w * &v;
        assert!((r.transpose() * &r - &gram).amax() < 1e-11 * gram.amax());
    }

    #[test]
    fn lanczos_matches_dense_top_eigenvalue() {
        let n = 60;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + 0.01 * i as f64));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let c = CsrMatrix::from_triplets(n, n, &t);
        let (_, hi) = symmetric_extremes(&c.to_dense());
        let est = sparse_lambda_max(&c).unwrap();
        assert!((est - hi).abs() < 1e-10 * hi, "{est} vs {hi}");
    }
}
