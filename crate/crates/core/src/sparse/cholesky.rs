use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

use super::SparseSymmetric;
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;
const PIVOT_RELATIVE: f64 = 1e-14;
const CACHE_LIMIT: usize = 64;

/// Fill-reducing ordering and the nonzero structure of the factor.
#[derive(Debug)]
pub struct SymbolicCholesky {
    n: usize,
    /// `perm[k]` is the original index placed at position `k`.
    perm: Vec<usize>,
    pinv: Vec<usize>,
    parent: Vec<usize>,
    // upper triangle of P A P^T, column-compressed
    c_ptr: Vec<usize>,
    c_idx: Vec<usize>,
    // position in the permuted upper triangle of each stored entry of A
    a_map: Vec<usize>,
    l_ptr: Vec<usize>,
    // source pattern for cache validation
    a_ptr: Vec<usize>,
    a_idx: Vec<usize>,
}

impl SymbolicCholesky {
    /// Computes an approximate minimum degree ordering and the factor pattern.
    pub fn analyze(a: &SparseSymmetric) -> Result<Self> {
        let perm = amd_order(a)?;
        Self::with_ordering(a, perm)
    }

    /// Builds the symbolic factorization for a given ordering.
    pub fn with_ordering(a: &SparseSymmetric, perm: Vec<usize>) -> Result<Self> {
        let n = a.dim();
        if perm.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: perm.len(),
            });
        }
        let mut pinv = vec![NONE; n];
        for (k, &i) in perm.iter().enumerate() {
            if i >= n || pinv[i] != NONE {
                return Err(Error::Parameter("ordering is not a permutation".into()));
            }
            pinv[i] = k;
        }

        // permuted upper triangle, remembering where each entry of A lands
        let mut counts = vec![0usize; n + 1];
        for (i, j, _) in a.iter() {
            let (pi, pj) = (pinv[i], pinv[j]);
            counts[pi.max(pj) + 1] += 1;
        }
        for k in 0..n {
            counts[k + 1] += counts[k];
        }
        let mut next = counts.clone();
        let mut c_idx = vec![0usize; a.nnz()];
        let mut a_map = vec![0usize; a.nnz()];
        for (p, (i, j, _)) in a.iter().enumerate() {
            let (pi, pj) = (pinv[i], pinv[j]);
            let col = pi.max(pj);
            let slot = next[col];
            next[col] += 1;
            c_idx[slot] = pi.min(pj);
            a_map[p] = slot;
        }
        let c_ptr = counts;

        let parent = etree(n, &c_ptr, &c_idx);

        let mut col_counts = vec![1usize; n];
        let mut stack = vec![0usize; n];
        let mut mark = vec![NONE; n];
        for k in 0..n {
            let top = ereach(&c_ptr, &c_idx, k, &parent, &mut stack, &mut mark);
            for &i in &stack[top..] {
                col_counts[i] += 1;
            }
        }
        let mut l_ptr = vec![0usize; n + 1];
        for k in 0..n {
            l_ptr[k + 1] = l_ptr[k] + col_counts[k];
        }

        Ok(Self {
            n,
            perm,
            pinv,
            parent,
            c_ptr,
            c_idx,
            a_map,
            l_ptr,
            a_ptr: a.col_ptr().to_vec(),
            a_idx: a.row_indices().to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Number of nonzeros in the factor, diagonal included.
    pub fn factor_nnz(&self) -> usize {
        self.l_ptr[self.n]
    }

    pub fn elimination_tree(&self) -> &[usize] {
        &self.parent
    }

    fn matches(&self, a: &SparseSymmetric) -> bool {
        a.same_pattern(&self.a_ptr, &self.a_idx)
    }
}

fn amd_order(a: &SparseSymmetric) -> Result<Vec<usize>> {
    let n = a.dim();
    if n == 0 {
        return Ok(Vec::new());
    }
    let (cp, ri) = a.full_pattern();
    let to_i32 = |v: usize| {
        i32::try_from(v).map_err(|_| Error::Parameter("matrix too large for ordering".into()))
    };
    let a_p: Vec<i32> = cp.iter().map(|&v| to_i32(v)).collect::<Result<_>>()?;
    let a_i: Vec<i32> = ri.iter().map(|&v| to_i32(v)).collect::<Result<_>>()?;
    let (p, _, _) = amd::order::<i32>(to_i32(n)?, &a_p, &a_i, &amd::Control::default())
        .map_err(|s| Error::Parameter(format!("ordering failed: {s:?}")))?;
    Ok(p.into_iter().map(|v| v as usize).collect())
}

fn etree(n: usize, c_ptr: &[usize], c_idx: &[usize]) -> Vec<usize> {
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for p in c_ptr[k]..c_ptr[k + 1] {
            let mut i = c_idx[p];
            while i != NONE && i < k {
                let inext = ancestor[i];
                ancestor[i] = k;
                if inext == NONE {
                    parent[i] = k;
                }
                i = inext;
            }
        }
    }
    parent
}

/// Nonzero pattern of row `k` of the factor, returned in `stack[top..]` in
/// topological order.
fn ereach(
    c_ptr: &[usize],
    c_idx: &[usize],
    k: usize,
    parent: &[usize],
    stack: &mut [usize],
    mark: &mut [usize],
) -> usize {
    let n = stack.len();
    let mut top = n;
    mark[k] = k;
    for p in c_ptr[k]..c_ptr[k + 1] {
        let mut i = c_idx[p];
        if i > k {
            continue;
        }
        let mut len = 0;
        while mark[i] != k {
            stack[len] = i;
            len += 1;
            mark[i] = k;
            i = parent[i];
        }
        while len > 0 {
            top -= 1;
            len -= 1;
            stack[top] = stack[len];
        }
    }
    top
}

fn symbolic_cache() -> &'static Mutex<HashMap<u64, Vec<Arc<SymbolicCholesky>>>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Vec<Arc<SymbolicCholesky>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cached_symbolic(a: &SparseSymmetric) -> Result<Arc<SymbolicCholesky>> {
    let key = a.pattern_hash();
    if let Some(list) = symbolic_cache().lock().unwrap().get(&key) {
        if let Some(s) = list.iter().find(|s| s.matches(a)) {
            return Ok(Arc::clone(s));
        }
    }
    let sym = Arc::new(SymbolicCholesky::analyze(a)?);
    let mut cache = symbolic_cache().lock().unwrap();
    if cache.len() >= CACHE_LIMIT {
        cache.clear();
    }
    cache.entry(key).or_default().push(Arc::clone(&sym));
    Ok(sym)
}

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
/// The symbolic analysis is shared between matrices with identical patterns.
pub fn cholesky(a: &SparseSymmetric) -> Result<CholeskyFactor> {
    let sym = cached_symbolic(a)?;
    factorize(a, &sym)
}

/// Numeric factorization reusing a precomputed symbolic analysis.
pub fn factorize(a: &SparseSymmetric, sym: &Arc<SymbolicCholesky>) -> Result<CholeskyFactor> {
    let n = sym.n;
    if a.dim() != n || !sym.matches(a) {
        return Err(Error::Parameter(
            "matrix pattern does not match the symbolic factorization".into(),
        ));
    }
    let mut cx = vec![0.0; a.nnz()];
    for (p, &v) in a.values().iter().enumerate() {
        cx[sym.a_map[p]] += v;
    }
    let max_diag = a.diagonal().into_iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let threshold = PIVOT_RELATIVE * max_diag;

    let nnz = sym.l_ptr[n];
    let mut li = vec![0usize; nnz];
    let mut lx = vec![0.0; nnz];
    let mut next: Vec<usize> = sym.l_ptr[..n].to_vec();
    let mut x = vec![0.0; n];
    let mut stack = vec![0usize; n];
    let mut mark = vec![NONE; n];
    let mut logdet = 0.0;

    for k in 0..n {
        let top = ereach(&sym.c_ptr, &sym.c_idx, k, &sym.parent, &mut stack, &mut mark);
        x[k] = 0.0;
        for p in sym.c_ptr[k]..sym.c_ptr[k + 1] {
            x[sym.c_idx[p]] = cx[p];
        }
        let mut d = x[k];
        x[k] = 0.0;
        for &i in &stack[top..] {
            let lki = x[i] / lx[sym.l_ptr[i]];
            x[i] = 0.0;
            for p in sym.l_ptr[i] + 1..next[i] {
                x[li[p]] -= lx[p] * lki;
            }
            d -= lki * lki;
            let p = next[i];
            next[i] += 1;
            li[p] = k;
            lx[p] = lki;
        }
        if !(d > threshold) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite {
                pivot: sym.perm[k],
                value: d,
            });
        }
        let p = next[k];
        next[k] += 1;
        li[p] = k;
        lx[p] = d.sqrt();
        logdet += d.ln();
    }

    Ok(CholeskyFactor {
        n,
        perm: sym.perm.clone(),
        pinv: sym.pinv.clone(),
        lower: Lower::Sparse {
            sym: Arc::clone(sym),
            li: Arc::new(li),
            lx: Arc::new(lx),
        },
        logdet,
    })
}

/// Product-form rank-one modification `L' = L Lt` with `Lt Lt^T = I + x x^T`.
#[derive(Clone, Debug)]
struct ProductUpdate {
    x: Vec<f64>,
    r: Vec<f64>,
    beta: Vec<f64>,
}

impl ProductUpdate {
    fn new(x: Vec<f64>) -> Self {
        let mut gamma = 1.0f64;
        let mut r = Vec::with_capacity(x.len());
        let mut beta = Vec::with_capacity(x.len());
        for &xk in &x {
            let t = xk * gamma;
            let rk = (1.0 + t * t).sqrt();
            beta.push(xk * gamma * gamma / rk);
            r.push(rk);
            gamma /= rk;
        }
        Self { x, r, beta }
    }

    fn mul(&self, v: &mut [f64]) {
        let mut acc = 0.0;
        for i in 0..v.len() {
            let vi = v[i];
            v[i] = self.r[i] * vi + self.x[i] * acc;
            acc += self.beta[i] * vi;
        }
    }

    fn solve_lower(&self, b: &mut [f64]) {
        let mut acc = 0.0;
        for i in 0..b.len() {
            let yi = (b[i] - self.x[i] * acc) / self.r[i];
            b[i] = yi;
            acc += self.beta[i] * yi;
        }
    }

    fn solve_upper(&self, b: &mut [f64]) {
        let mut acc = 0.0;
        for k in (0..b.len()).rev() {
            let zk = (b[k] - self.beta[k] * acc) / self.r[k];
            b[k] = zk;
            acc += self.x[k] * zk;
        }
    }

    fn log_det(&self) -> f64 {
        2.0 * self.r.iter().map(|r| r.ln()).sum::<f64>()
    }
}

#[derive(Clone, Debug)]
enum Lower {
    Sparse {
        sym: Arc<SymbolicCholesky>,
        li: Arc<Vec<usize>>,
        lx: Arc<Vec<f64>>,
    },
    Updated {
        inner: Arc<Lower>,
        upd: ProductUpdate,
    },
    Bordered {
        inner: Arc<Lower>,
        row: Vec<f64>,
        diag: f64,
    },
}

impl Lower {
    fn solve_lower(&self, b: &mut [f64]) {
        match self {
            Lower::Sparse { sym, li, lx } => {
                for j in 0..sym.n {
                    let span = sym.l_ptr[j]..sym.l_ptr[j + 1];
                    let xj = b[j] / lx[span.start];
                    b[j] = xj;
                    for p in span.start + 1..span.end {
                        b[li[p]] -= lx[p] * xj;
                    }
                }
            }
            Lower::Updated { inner, upd } => {
                inner.solve_lower(b);
                upd.solve_lower(b);
            }
            Lower::Bordered { inner, row, diag } => {
                let m = row.len();
                inner.solve_lower(&mut b[..m]);
                let dot: f64 = row.iter().zip(&b[..m]).map(|(r, y)| r * y).sum();
                b[m] = (b[m] - dot) / diag;
            }
        }
    }

    fn solve_upper(&self, b: &mut [f64]) {
        match self {
            Lower::Sparse { sym, li, lx } => {
                for j in (0..sym.n).rev() {
                    let span = sym.l_ptr[j]..sym.l_ptr[j + 1];
                    let mut s = b[j];
                    for p in span.start + 1..span.end {
                        s -= lx[p] * b[li[p]];
                    }
                    b[j] = s / lx[span.start];
                }
            }
            Lower::Updated { inner, upd } => {
                upd.solve_upper(b);
                inner.solve_upper(b);
            }
            Lower::Bordered { inner, row, diag } => {
                let m = row.len();
                let z = b[m] / diag;
                b[m] = z;
                for (bi, ri) in b[..m].iter_mut().zip(row) {
                    *bi -= ri * z;
                }
                inner.solve_upper(&mut b[..m]);
            }
        }
    }

    fn mul(&self, v: &mut [f64]) {
        match self {
            Lower::Sparse { sym, li, lx } => {
                let mut out = vec![0.0; sym.n];
                for j in 0..sym.n {
                    for p in sym.l_ptr[j]..sym.l_ptr[j + 1] {
                        out[li[p]] += lx[p] * v[j];
                    }
                }
                v.copy_from_slice(&out);
            }
            Lower::Updated { inner, upd } => {
                upd.mul(v);
                inner.mul(v);
            }
            Lower::Bordered { inner, row, diag } => {
                let m = row.len();
                let last: f64 = row.iter().zip(&v[..m]).map(|(r, y)| r * y).sum::<f64>()
                    + diag * v[m];
                inner.mul(&mut v[..m]);
                v[m] = last;
            }
        }
    }
}

/// Factor `P A P^T = L L^T`, possibly in product form after rank-one updates.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    n: usize,
    perm: Vec<usize>,
    pinv: Vec<usize>,
    lower: Lower,
    logdet: f64,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// `perm[k]` is the original index at position `k` of the factor.
    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Natural logarithm of the determinant of the factored matrix.
    pub fn log_determinant(&self) -> f64 {
        self.logdet
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut y: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        self.lower.solve_lower(&mut y);
        self.lower.solve_upper(&mut y);
        let mut x = vec![0.0; self.n];
        for (k, &i) in self.perm.iter().enumerate() {
            x[i] = y[k];
        }
        x
    }

    /// Solves for each column of `b`.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for c in 0..b.ncols() {
            let col: Vec<f64> = b.column(c).iter().copied().collect();
            let x = self.solve(&col);
            out.column_mut(c).copy_from_slice(&x);
        }
        out
    }

    /// `L^{-1} P b`, the half solve. Its squared norm equals `b^T A^{-1} b`.
    pub fn solve_half(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut y: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        self.lower.solve_lower(&mut y);
        y
    }

    /// `P^T L z`. If `z` is standard normal the result has covariance `A`.
    pub fn mul_lower(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.n);
        let mut y = z.to_vec();
        self.lower.mul(&mut y);
        let mut x = vec![0.0; self.n];
        for (k, &i) in self.perm.iter().enumerate() {
            x[i] = y[k];
        }
        x
    }

    /// Dense lower factor in permuted coordinates.
    pub fn to_dense_lower(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        let mut e = vec![0.0; self.n];
        for j in 0..self.n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            self.lower.mul(&mut e);
            l.column_mut(j).copy_from_slice(&e);
        }
        l
    }

    /// Reconstructs the factored matrix in original coordinates.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let l = self.to_dense_lower();
        let pap = &l * l.transpose();
        let mut a = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                a[(i, j)] = pap[(self.pinv[i], self.pinv[j])];
            }
        }
        a
    }

    /// Diagonal of the factor when it is a plain sparse factor.
    pub fn diagonal(&self) -> Option<Vec<f64>> {
        match &self.lower {
            Lower::Sparse { sym, lx, .. } => {
                Some((0..sym.n).map(|j| lx[sym.l_ptr[j]]).collect())
            }
            _ => None,
        }
    }
}

/// Factor of `A + w v v^T` from a factor of `A`, for `w >= 0`. The update is
/// kept in product form so a dense `v` does not fill in the sparse factor.
pub fn rank_one_update(factor: &CholeskyFactor, w: f64, v: &[f64]) -> Result<CholeskyFactor> {
    if v.len() != factor.n {
        return Err(Error::DimensionMismatch {
            expected: factor.n,
            found: v.len(),
        });
    }
    if !(w >= 0.0) || !w.is_finite() {
        return Err(Error::Parameter(format!(
            "rank-one update weight must be non-negative, got {w}"
        )));
    }
    let p = factor.solve_half(v);
    let s = w.sqrt();
    let upd = ProductUpdate::new(p.into_iter().map(|pk| s * pk).collect());
    let logdet = factor.logdet + upd.log_det();
    Ok(CholeskyFactor {
        n: factor.n,
        perm: factor.perm.clone(),
        pinv: factor.pinv.clone(),
        lower: Lower::Updated {
            inner: Arc::new(factor.lower.clone()),
            upd,
        },
        logdet,
    })
}

/// Factor of `Q + w v v^T` where `Q` is positive semidefinite with a kernel
/// that is not orthogonal to `v`, so that `Q` itself cannot be factored.
///
/// One node is split off: the remaining principal block is positive definite
/// whenever the kernel vector has full support. It is factored sparsely, the
/// rank-one term is applied in product form and the last row is bordered on.
pub fn cholesky_rank_one_bordered(
    q: &SparseSymmetric,
    w: f64,
    v: &[f64],
) -> Result<CholeskyFactor> {
    let n = q.dim();
    if v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: v.len(),
        });
    }
    if n == 0 {
        return Err(Error::Parameter("empty matrix".into()));
    }
    let order = cached_symbolic(q)?;
    let r = order.perm[n - 1];
    let rest: Vec<usize> = order.perm[..n - 1].to_vec();

    let block = q.principal_submatrix(&rest)?;
    let base = cholesky(&block)?;
    let v_rest: Vec<f64> = rest.iter().map(|&i| v[i]).collect();
    let inner = rank_one_update(&base, w, &v_rest)?;

    let mut col = vec![0.0; n - 1];
    let mut slot = vec![NONE; n];
    for (k, &i) in rest.iter().enumerate() {
        slot[i] = k;
    }
    for (i, j, val) in q.iter() {
        if j == r && i != r {
            col[slot[i]] += val;
        } else if i == r && j != r {
            col[slot[j]] += val;
        }
    }
    for (k, c) in col.iter_mut().enumerate() {
        *c += w * v_rest[k] * v[r];
    }
    let row = inner.solve_half(&col);
    let d2 = q.get(r, r) + w * v[r] * v[r] - row.iter().map(|x| x * x).sum::<f64>();
    let scale = q.diagonal().into_iter().fold(0.0f64, |m, d| m.max(d.abs())) + w * v[r] * v[r];
    if !(d2 > PIVOT_RELATIVE * scale) {
        return Err(Error::NotPositiveDefinite { pivot: r, value: d2 });
    }
    let diag = d2.sqrt();

    let mut perm: Vec<usize> = inner.perm.iter().map(|&k| rest[k]).collect();
    perm.push(r);
    let mut pinv = vec![0; n];
    for (k, &i) in perm.iter().enumerate() {
        pinv[i] = k;
    }
    Ok(CholeskyFactor {
        n,
        perm,
        pinv,
        logdet: inner.logdet + d2.ln(),
        lower: Lower::Bordered {
            inner: Arc::new(inner.lower),
            row,
            diag,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn grid_laplacian(k: usize) -> SparseSymmetric {
        let n = k * k;
        let mut t = Vec::new();
        let id = |r: usize, c: usize| r * k + c;
        for r in 0..k {
            for c in 0..k {
                if c + 1 < k {
                    let (a, b) = (id(r, c), id(r, c + 1));
                    t.extend([(a, a, 1.0), (b, b, 1.0), (a, b, -1.0)]);
                }
                if r + 1 < k {
                    let (a, b) = (id(r, c), id(r + 1, c));
                    t.extend([(a, a, 1.0), (b, b, 1.0), (a, b, -1.0)]);
                }
            }
        }
        SparseSymmetric::from_triplets(n, &t).unwrap()
    }

    fn shifted(a: &SparseSymmetric, s: f64) -> SparseSymmetric {
        a.add_diagonal(&vec![s; a.dim()]).unwrap()
    }

    #[test]
    fn factor_reconstructs_matrix() {
        let a = shifted(&grid_laplacian(6), 0.3);
        let f = cholesky(&a).unwrap();
        assert!((f.to_dense() - a.to_dense()).abs().max() < 1e-12);
        let dense_ld = a.to_dense().cholesky().unwrap().l().diagonal().map(|d| d.ln()).sum() * 2.0;
        assert!((f.log_determinant() - dense_ld).abs() < 1e-10);
    }

    #[test]
    fn solve_matches_dense() {
        let a = shifted(&grid_laplacian(5), 0.1);
        let b: Vec<f64> = (0..25).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = cholesky(&a).unwrap().solve(&b);
        let xd = a.to_dense().lu().solve(&DVector::from_row_slice(&b)).unwrap();
        for i in 0..25 {
            assert!((x[i] - xd[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let a = grid_laplacian(4);
        match cholesky(&a) {
            Err(Error::NotPositiveDefinite { .. }) => {}
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn symbolic_analysis_is_shared() {
        let a = shifted(&grid_laplacian(4), 1.0);
        let b = shifted(&grid_laplacian(4), 2.0);
        let s1 = cached_symbolic(&a).unwrap();
        let s2 = cached_symbolic(&b).unwrap();
        assert!(Arc::ptr_eq(&s1, &s2));
    }

    #[test]
    fn rank_one_update_matches_dense() {
        let a = shifted(&grid_laplacian(5), 0.2);
        let v: Vec<f64> = (0..25).map(|i| 1.0 + 0.1 * i as f64).collect();
        let f = rank_one_update(&cholesky(&a).unwrap(), 3.0, &v).unwrap();
        let vd = DVector::from_row_slice(&v);
        let dense = a.to_dense() + 3.0 * &vd * vd.transpose();
        assert!((f.to_dense() - &dense).abs().max() < 1e-10);
        let ld = dense.clone().cholesky().unwrap().l().diagonal().map(|d| d.ln()).sum() * 2.0;
        assert!((f.log_determinant() - ld).abs() < 1e-10);
        let b: Vec<f64> = (0..25).map(|i| (i as f64).cos()).collect();
        let x = f.solve(&b);
        let xd = dense.lu().solve(&DVector::from_row_slice(&b)).unwrap();
        for i in 0..25 {
            assert!((x[i] - xd[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn bordered_factor_handles_singular_base() {
        let q = grid_laplacian(6);
        let n = q.dim();
        let v = vec![1.0 / (n as f64).sqrt(); n];
        let f = cholesky_rank_one_bordered(&q, 0.5, &v).unwrap();
        let vd = DVector::from_row_slice(&v);
        let dense = q.to_dense() + 0.5 * &vd * vd.transpose();
        assert!((f.to_dense() - &dense).abs().max() < 1e-10);
        let ld = dense.clone().cholesky().unwrap().l().diagonal().map(|d| d.ln()).sum() * 2.0;
        assert!((f.log_determinant() - ld).abs() < 1e-9);
        let b: Vec<f64> = (0..n).map(|i| (0.3 * i as f64).sin()).collect();
        let x = f.solve(&b);
        let r = dense * DVector::from_row_slice(&x) - DVector::from_row_slice(&b);
        assert!(r.amax() < 1e-9);
    }

    #[test]
    fn negative_weight_rejected() {
        let a = shifted(&grid_laplacian(3), 1.0);
        assert!(rank_one_update(&cholesky(&a).unwrap(), -1.0, &[1.0; 9]).is_err());
    }

    proptest! {
        #[test]
        fn random_update_solves(seed in proptest::collection::vec(-2.0f64..2.0, 16), w in 0.0f64..50.0) {
            let a = shifted(&grid_laplacian(4), 0.5);
            let f = rank_one_update(&cholesky(&a).unwrap(), w, &seed).unwrap();
            let b: Vec<f64> = (0..16).map(|i| i as f64 - 7.5).collect();
            let x = f.solve(&b);
            let vd = DVector::from_row_slice(&seed);
            let dense = a.to_dense() + w * &vd * vd.transpose();
            let r = dense * DVector::from_row_slice(&x) - DVector::from_row_slice(&b);
            prop_assert!(r.amax() < 1e-8 * (1.0 + w));
        }
    }
}
