use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, SkylineCholesky};

/// Matrix access needed by the LCP solvers.
pub trait LcpMatrix {
    fn dim(&self) -> usize;
    fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64>;
    fn diagonal(&self) -> DVector<f64>;
    /// Row `i` of the matrix dotted with `x`.
    fn row_dot(&self, i: usize, x: &DVector<f64>) -> f64;
    /// Solves `M[idx, idx] y = rhs` for a sorted index set.
    fn solve_principal(&self, idx: &[usize], rhs: &DVector<f64>) -> Result<DVector<f64>>;
    /// Flop estimate of one mat-vec.
    fn mul_cost(&self) -> u64;
    /// Flop estimate of one principal solve of size `k`.
    fn solve_cost(&self, k: usize) -> u64;
}

impl LcpMatrix for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        self * x
    }

    fn diagonal(&self) -> DVector<f64> {
        DMatrix::diagonal(self)
    }

    fn row_dot(&self, i: usize, x: &DVector<f64>) -> f64 {
        (0..self.ncols()).map(|j| self[(i, j)] * x[j]).sum()
    }

    fn solve_principal(&self, idx: &[usize], rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let sub = self.select_rows(idx).select_columns(idx);
        sub.lu().solve(rhs).ok_or(Error::Singular("principal submatrix of the LCP matrix"))
    }

    fn mul_cost(&self) -> u64 {
        2 * (self.nrows() * self.ncols()) as u64
    }

    fn solve_cost(&self, k: usize) -> u64 {
        let k = k as u64;
        2 * k * k * k / 3 + 2 * k * k
    }
}

/// Symmetric positive definite sparse matrices; principal solves use a fresh
/// skyline Cholesky factor.
impl LcpMatrix for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        CsrMatrix::mul_vec(self, x)
    }

    fn diagonal(&self) -> DVector<f64> {
        CsrMatrix::diagonal(self)
    }

    fn row_dot(&self, i: usize, x: &DVector<f64>) -> f64 {
        CsrMatrix::row_dot(self, i, x)
    }

    fn solve_principal(&self, idx: &[usize], rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let sub = self.principal_submatrix(idx);
        Ok(SkylineCholesky::factor(&sub)?.solve(rhs))
    }

    fn mul_cost(&self) -> u64 {
        2 * self.nnz() as u64
    }

    fn solve_cost(&self, k: usize) -> u64 {
        // profile estimate from the average row length
        let avg = (self.nnz() as u64).div_ceil(self.nrows().max(1) as u64);
        4 * k as u64 * avg * avg
    }
}

/// Find `z >= 0` with `w = M z + q >= 0` and `z^T w = 0`.
#[derive(Debug, Clone)]
pub struct Lcp<M> {
    pub m: M,
    pub q: DVector<f64>,
}

impl<M: LcpMatrix> Lcp<M> {
    pub fn new(m: M, q: DVector<f64>) -> Result<Self> {
        if m.dim() != q.len() {
            return Err(Error::DimensionMismatch {
                context: "LCP vector q",
                expected: m.dim(),
                found: q.len(),
            });
        }
        Ok(Self { m, q })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn residuals(&self, z: &DVector<f64>, w: &DVector<f64>) -> LcpResiduals {
        LcpResiduals::of(z, w)
    }
}

/// Solver controls. `tol: None` means `1e-10 * (1 + ||q||_inf)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LcpOptions {
    pub tol: Option<f64>,
    pub max_iters: usize,
    /// Sweep limit of the projected relaxation is `sweeps_per_dim * n`.
    pub sweeps_per_dim: usize,
    /// Relaxation factor for projected SOR (1 is Gauss-Seidel).
    pub omega: f64,
    /// Fall back to least-index pivoting when block updates revisit a set.
    pub pivot_fallback: bool,
}

impl Default for LcpOptions {
    fn default() -> Self {
        Self {
            tol: None,
            max_iters: 200,
            sweeps_per_dim: 50,
            omega: 1.0,
            pivot_fallback: true,
        }
    }
}

impl LcpOptions {
    pub fn tolerance(&self, q: &DVector<f64>) -> f64 {
        self.tol.unwrap_or(1e-10 * (1.0 + q.amax()))
    }
}

/// `(min z, min w, |z^T w|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LcpResiduals {
    pub min_z: f64,
    pub min_w: f64,
    pub gap: f64,
}

impl LcpResiduals {
    pub fn of(z: &DVector<f64>, w: &DVector<f64>) -> Self {
        Self {
            min_z: z.iter().copied().fold(f64::INFINITY, f64::min),
            min_w: w.iter().copied().fold(f64::INFINITY, f64::min),
            gap: z.dot(w).abs(),
        }
    }

    pub fn within(&self, tol: f64) -> bool {
        self.min_z >= -tol && self.min_w >= -tol && self.gap <= tol * (1.0 + tol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcpSolution {
    pub z: DVector<f64>,
    pub w: DVector<f64>,
    /// Sorted support `{i : z_i > 0}`.
    pub active_set: Vec<usize>,
    pub iterations: usize,
    pub residuals: LcpResiduals,
    /// Flop estimate of the work performed.
    pub work: u64,
}

/// Solution for a given support: `z_S = -M_SS^{-1} q_S`, `z = 0` elsewhere.
fn support_solution<M: LcpMatrix>(lcp: &Lcp<M>, support: &[usize], work: &mut u64) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = lcp.dim();
    let mut z = DVector::zeros(n);
    if !support.is_empty() {
        let rhs = DVector::from_iterator(support.len(), support.iter().map(|&i| -lcp.q[i]));
        let zs = lcp.m.solve_principal(support, &rhs)?;
        for (k, &i) in support.iter().enumerate() {
            z[i] = zs[k];
        }
        *work += lcp.m.solve_cost(support.len());
    }
    let w = lcp.m.mul_vec(&z) + &lcp.q;
    *work += lcp.m.mul_cost() + n as u64;
    Ok((z, w))
}

fn finish(z: DVector<f64>, w: DVector<f64>, iterations: usize, work: u64) -> LcpSolution {
    let z = z.map(|v| v.max(0.0));
    let active_set = (0..z.len()).filter(|&i| z[i] > 0.0).collect();
    let residuals = LcpResiduals::of(&z, &w);
    LcpSolution {
        z,
        w,
        active_set,
        iterations,
        residuals,
        work,
    }
}

/// Primal-dual active set method.
///
/// Each step solves the equality system on the current support and then moves
/// every index whose sign condition is violated (`z_i < 0` inside, `w_i < 0`
/// outside). Indices with `z_i = w_i = 0` stay outside the support. If a
/// support repeats, the iteration switches to least-index single pivoting,
/// which terminates for P-matrices.
pub fn solve_lcp_active_set<M: LcpMatrix>(lcp: &Lcp<M>, opts: &LcpOptions) -> Result<LcpSolution> {
    let n = lcp.dim();
    let tol = opts.tolerance(&lcp.q);
    let mut work = 0u64;
    let mut support: Vec<usize> = (0..n).filter(|&i| lcp.q[i] < -tol).collect();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut last = DVector::zeros(n);

    for iter in 1..=opts.max_iters {
        let (z, w) = support_solution(lcp, &support, &mut work)?;
        let in_support = indicator(n, &support);
        let next: Vec<usize> = (0..n)
            .filter(|&i| if in_support[i] { z[i] > tol } else { w[i] < -tol })
            .collect();
        let feasible = (0..n).all(|i| if in_support[i] { z[i] >= -tol } else { w[i] >= -tol });
        if feasible {
            // Members with |z_i| <= tol are degenerate; dropping them gives a
            // smaller, better conditioned principal system when that support
            // is still a solution.
            if next.len() < support.len() {
                let (zp, wp) = support_solution(lcp, &next, &mut work)?;
                let in_next = indicator(n, &next);
                if (0..n).all(|i| if in_next[i] { zp[i] >= -tol } else { wp[i] >= -tol }) {
                    return Ok(finish(zp, wp, iter + 1, work));
                }
            }
            return Ok(finish(z, w, iter, work));
        }
        seen.insert(support.clone());
        last = z;
        if seen.contains(&next) {
            if !opts.pivot_fallback {
                return Err(Error::LcpNonConvergence {
                    iterations: iter,
                    reason: "active set cycle",
                    last_iterate: last,
                });
            }
            return least_index_pivoting(lcp, next, tol, iter, work, opts);
        }
        support = next;
    }
    Err(Error::LcpNonConvergence {
        iterations: opts.max_iters,
        reason: "iteration limit reached",
        last_iterate: last,
    })
}

fn indicator(n: usize, set: &[usize]) -> Vec<bool> {
    let mut flags = vec![false; n];
    for &i in set {
        flags[i] = true;
    }
    flags
}

fn least_index_pivoting<M: LcpMatrix>(
    lcp: &Lcp<M>,
    mut support: Vec<usize>,
    tol: f64,
    start: usize,
    mut work: u64,
    opts: &LcpOptions,
) -> Result<LcpSolution> {
    let n = lcp.dim();
    let budget = opts.max_iters + opts.sweeps_per_dim * n * n;
    let mut last = DVector::zeros(n);
    for iter in start + 1..=start + budget {
        let (z, w) = support_solution(lcp, &support, &mut work)?;
        let in_support = indicator(n, &support);
        let flip = (0..n).find(|&i| if in_support[i] { z[i] < -tol } else { w[i] < -tol });
        match flip {
            None => return Ok(finish(z, w, iter, work)),
            Some(i) => {
                if in_support[i] {
                    support.retain(|&k| k != i);
                } else {
                    let pos = support.partition_point(|&k| k < i);
                    support.insert(pos, i);
                }
            }
        }
        last = z;
    }
    Err(Error::LcpNonConvergence {
        iterations: start + budget,
        reason: "pivoting limit reached",
        last_iterate: last,
    })
}

/// Projected Gauss-Seidel / SOR. Stops when the natural residual
/// `||min(z, Mz + q)||_inf` is below the tolerance.
pub fn solve_lcp_projected_relaxation<M: LcpMatrix>(lcp: &Lcp<M>, opts: &LcpOptions) -> Result<LcpSolution> {
    let n = lcp.dim();
    let tol = opts.tolerance(&lcp.q);
    let diag = lcp.m.diagonal();
    if let Some(i) = (0..n).find(|&i| !(diag[i] > 0.0)) {
        return Err(Error::NotPositiveDefinite {
            context: "projected relaxation needs a positive diagonal",
            pivot: i,
        });
    }
    let mut z = DVector::zeros(n);
    let mut work = 0u64;
    let max_sweeps = (opts.sweeps_per_dim * n).max(1);
    for sweep in 1..=max_sweeps {
        for i in 0..n {
            let wi = lcp.m.row_dot(i, &z) + lcp.q[i];
            z[i] = (z[i] - opts.omega * wi / diag[i]).max(0.0);
        }
        let w = lcp.m.mul_vec(&z) + &lcp.q;
        work += 2 * lcp.m.mul_cost();
        let natural = z.iter().zip(w.iter()).map(|(a, b)| a.min(*b).abs()).fold(0.0, f64::max);
        if natural <= tol {
            return Ok(finish(z, w, sweep, work));
        }
    }
    Err(Error::LcpNonConvergence {
        iterations: max_sweeps,
        reason: "relaxation sweep limit reached",
        last_iterate: z,
    })
}

/// Largest dimension accepted by [`solve_lcp_bruteforce`].
pub const BRUTEFORCE_MAX_DIM: usize = 20;

/// Exhaustive oracle: tries supports in order of increasing size and returns
/// the first one whose equality solution satisfies all sign conditions.
pub fn solve_lcp_bruteforce<M: LcpMatrix>(lcp: &Lcp<M>, opts: &LcpOptions) -> Result<LcpSolution> {
    let n = lcp.dim();
    if n > BRUTEFORCE_MAX_DIM {
        return Err(Error::LcpTooLarge {
            n,
            max: BRUTEFORCE_MAX_DIM,
        });
    }
    let tol = opts.tolerance(&lcp.q);
    let mut work = 0u64;
    let mut count = 0usize;
    for size in 0..=n {
        for support in Combinations::new(n, size) {
            count += 1;
            let Ok((z, w)) = support_solution(lcp, &support, &mut work) else { continue };
            let in_support = indicator(n, &support);
            if (0..n).all(|i| if in_support[i] { z[i] >= -tol } else { w[i] >= -tol }) {
                return Ok(finish(z, w, count, work));
            }
        }
    }
    Err(Error::NoFeasibleActiveSet)
}

/// Lexicographic `k`-subsets of `0..n`.
struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            current: (k <= n).then(|| (0..k).collect()),
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let k = out.len();
        let mut c = out.clone();
        let mut i = k;
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            if c[i] < self.n - k + i {
                c[i] += 1;
                for j in i + 1..k {
                    c[j] = c[j - 1] + 1;
                }
                self.current = Some(c);
                break;
            }
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcp(m: &[f64], q: &[f64]) -> Lcp<DMatrix<f64>> {
        let n = q.len();
        Lcp::new(DMatrix::from_row_slice(n, n, m), DVector::from_row_slice(q)).unwrap()
    }

    fn all_solvers(p: &Lcp<DMatrix<f64>>) -> Vec<LcpSolution> {
        let o = LcpOptions {
            tol: Some(1e-13),
            ..LcpOptions::default()
        };
        vec![
            solve_lcp_active_set(p, &o).unwrap(),
            solve_lcp_projected_relaxation(p, &o).unwrap(),
            solve_lcp_bruteforce(p, &o).unwrap(),
        ]
    }

    #[test]
    fn decoupled_clip() {
        for s in all_solvers(&lcp(&[1.0, 0.0, 0.0, 1.0], &[-1.0, 1.0])) {
            assert!((s.z - DVector::from_row_slice(&[1.0, 0.0])).amax() < 1e-10);
            assert!((s.w - DVector::from_row_slice(&[0.0, 1.0])).amax() < 1e-10);
        }
    }

    #[test]
    fn feasible_start() {
        for s in all_solvers(&lcp(&[1.0, 0.0, 0.0, 1.0], &[1.0, 1.0])) {
            assert_eq!(s.z, DVector::zeros(2));
            assert_eq!(s.w, DVector::from_row_slice(&[1.0, 1.0]));
        }
    }

    #[test]
    fn interior_solution() {
        for s in all_solvers(&lcp(&[2.0, 1.0, 1.0, 2.0], &[-3.0, -3.0])) {
            assert!((s.z - DVector::from_row_slice(&[1.0, 1.0])).amax() < 1e-10);
            assert!(s.w.amax() < 1e-10);
        }
    }

    #[test]
    fn scalar_case() {
        for s in all_solvers(&lcp(&[2.0], &[-4.0])) {
            assert!((s.z[0] - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn degenerate_indices_are_inactive() {
        let s = solve_lcp_bruteforce(&lcp(&[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0]), &LcpOptions::default()).unwrap();
        assert!(s.active_set.is_empty());
        let s = solve_lcp_active_set(&lcp(&[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0]), &LcpOptions::default()).unwrap();
        assert!(s.active_set.is_empty());
    }

    #[test]
    fn bruteforce_rejects_large_problems() {
        let p = Lcp::new(DMatrix::<f64>::identity(21, 21), DVector::zeros(21)).unwrap();
        assert!(matches!(solve_lcp_bruteforce(&p, &LcpOptions::default()), Err(Error::LcpTooLarge { n: 21, .. })));
    }

    #[test]
    fn sparse_and_dense_agree() {
        let dense = DMatrix::from_row_slice(3, 3, &[4.0, -1.0, 0.0, -1.0, 4.0, -1.0, 0.0, -1.0, 4.0]);
        let q = DVector::from_row_slice(&[-1.0, 2.0, -3.0]);
        let a = solve_lcp_active_set(&Lcp::new(dense.clone(), q.clone()).unwrap(), &LcpOptions::default()).unwrap();
        let b = solve_lcp_active_set(&Lcp::new(CsrMatrix::from_dense(&dense), q).unwrap(), &LcpOptions::default()).unwrap();
        assert!((a.z - b.z).amax() < 1e-14);
    }

    #[test]
    fn combinations_enumerate_all_subsets() {
        let total: usize = (0..=5).map(|k| Combinations::new(5, k).count()).sum();
        assert_eq!(total, 32);
        assert_eq!(Combinations::new(4, 2).nth(1), Some(vec![0, 2]));
    }
}
