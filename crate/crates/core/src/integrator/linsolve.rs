//! Linear solves for the Newton matrix `I − γJ`: dense LU for small systems,
//! ILU(0)-preconditioned BiCGSTAB on a compressed sparse row matrix above.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{GlmError, Result};

/// Compressed sparse row matrix with sorted, duplicate-free column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut indptr = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            if i >= nrows || j >= ncols {
                return Err(GlmError::DimensionMismatch(format!(
                    "entry ({i}, {j}) outside a {nrows}x{ncols} matrix"
                )));
            }
            indptr[i + 1] += 1;
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        let mut fill = indptr.clone();
        let mut entries = vec![(0usize, 0.0f64); triplets.len()];
        for &(i, j, v) in triplets {
            entries[fill[i]] = (j, v);
            fill[i] += 1;
        }
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut compact = Vec::with_capacity(nrows + 1);
        compact.push(0);
        for i in 0..nrows {
            let row = &mut entries[indptr[i]..indptr[i + 1]];
            row.sort_unstable_by_key(|&(j, _)| j);
            let row_start = indices.len();
            for &(j, v) in row.iter() {
                if indices.len() > row_start && indices[indices.len() - 1] == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(j);
                    values.push(v);
                }
            }
            compact.push(indices.len());
        }
        Ok(CsrMatrix {
            nrows,
            ncols,
            indptr: compact,
            indices,
            values,
        })
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

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[i]..self.indptr[i + 1];
        self.indices[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.nrows, |i, _| self.row(i).map(|(j, v)| v * x[j]).sum())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// `I − γ·self`, keeping an explicit diagonal in every row.
    pub fn identity_minus(&self, gamma: f64) -> Result<CsrMatrix> {
        if self.nrows != self.ncols {
            return Err(GlmError::DimensionMismatch("Jacobian must be square".into()));
        }
        let n = self.nrows;
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(self.nnz() + n);
        let mut values = Vec::with_capacity(self.nnz() + n);
        indptr.push(0);
        for i in 0..n {
            let mut diagonal_done = false;
            for (j, v) in self.row(i) {
                if !diagonal_done && j >= i {
                    diagonal_done = true;
                    if j > i {
                        indices.push(i);
                        values.push(1.0);
                    } else {
                        indices.push(i);
                        values.push(1.0 - gamma * v);
                        continue;
                    }
                }
                indices.push(j);
                values.push(-gamma * v);
            }
            if !diagonal_done {
                indices.push(i);
                values.push(1.0);
            }
            indptr.push(indices.len());
        }
        Ok(CsrMatrix {
            nrows: n,
            ncols: n,
            indptr,
            indices,
            values,
        })
    }
}

/// Incomplete LU with the sparsity pattern of the matrix itself.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows;
        let mut lu = a.clone();
        let mut diag = vec![usize::MAX; n];
        for (i, d) in diag.iter_mut().enumerate() {
            for k in lu.indptr[i]..lu.indptr[i + 1] {
                if lu.indices[k] == i {
                    *d = k;
                }
            }
            if *d == usize::MAX {
                return Err(GlmError::LinearSolver(format!("ILU(0): row {i} has no diagonal entry")));
            }
        }
        let mut position = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.indptr[i], lu.indptr[i + 1]);
            for k in start..end {
                position[lu.indices[k]] = k;
            }
            for k in start..end {
                let col = lu.indices[k];
                if col >= i {
                    break;
                }
                let pivot = lu.values[diag[col]];
                if pivot == 0.0 {
                    return Err(GlmError::LinearSolver(format!("ILU(0): zero pivot in row {col}")));
                }
                let factor = lu.values[k] / pivot;
                lu.values[k] = factor;
                for kk in diag[col] + 1..lu.indptr[col + 1] {
                    let target = position[lu.indices[kk]];
                    if target != usize::MAX {
                        lu.values[target] -= factor * lu.values[kk];
                    }
                }
            }
            for k in start..end {
                position[lu.indices[k]] = usize::MAX;
            }
            if lu.values[diag[i]] == 0.0 {
                return Err(GlmError::LinearSolver(format!("ILU(0): zero pivot in row {i}")));
            }
        }
        Ok(Ilu0 { lu, diag })
    }

    /// Apply `(LU)⁻¹` by forward and backward substitution.
    pub fn apply(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.diag.len();
        let mut x = b.clone();
        for i in 0..n {
            let mut acc = x[i];
            for k in self.lu.indptr[i]..self.diag[i] {
                acc -= self.lu.values[k] * x[self.lu.indices[k]];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for k in self.diag[i] + 1..self.lu.indptr[i + 1] {
                acc -= self.lu.values[k] * x[self.lu.indices[k]];
            }
            x[i] = acc / self.lu.values[self.diag[i]];
        }
        x
    }
}

/// Right-preconditioned BiCGSTAB. Stops when `‖b − Ax‖ ≤ tol·‖b‖`.
pub fn bicgstab(
    a: &CsrMatrix,
    precond: &Ilu0,
    b: &DVector<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<(DVector<f64>, usize)> {
    let n = b.len();
    let bnorm = b.norm();
    let mut x = DVector::zeros(n);
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let target = tol * bnorm;
    let mut r = b.clone();
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = DVector::zeros(n);
    let mut p = DVector::zeros(n);
    for iter in 1..=max_iters {
        let rho_next = r0.dot(&r);
        if rho_next == 0.0 {
            return Err(GlmError::LinearSolver("BiCGSTAB breakdown (rho = 0)".into()));
        }
        let beta = (rho_next / rho) * (alpha / omega);
        rho = rho_next;
        p = &r + (&p - &v * omega) * beta;
        let p_hat = precond.apply(&p);
        v = a.mul_vec(&p_hat);
        let denom = r0.dot(&v);
        if denom == 0.0 {
            return Err(GlmError::LinearSolver("BiCGSTAB breakdown (r0·v = 0)".into()));
        }
        alpha = rho / denom;
        let s = &r - &v * alpha;
        if s.norm() <= target {
            x += p_hat * alpha;
            return Ok((x, iter));
        }
        let s_hat = precond.apply(&s);
        let t = a.mul_vec(&s_hat);
        let tt = t.dot(&t);
        if tt == 0.0 {
            return Err(GlmError::LinearSolver("BiCGSTAB breakdown (t = 0)".into()));
        }
        omega = t.dot(&s) / tt;
        x += p_hat * alpha + &s_hat * omega;
        r = s - t * omega;
        if !r.iter().all(|v| v.is_finite()) {
            return Err(GlmError::NonFinite("BiCGSTAB residual".into()));
        }
        if r.norm() <= target {
            return Ok((x, iter));
        }
        if omega == 0.0 {
            return Err(GlmError::LinearSolver("BiCGSTAB breakdown (omega = 0)".into()));
        }
    }
    Err(GlmError::LinearSolver(format!(
        "BiCGSTAB did not reach {tol:e} in {max_iters} iterations"
    )))
}

/// Jacobian of the stiff tendency.
#[derive(Debug, Clone)]
pub enum Jacobian {
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix),
}

impl Jacobian {
    pub fn dim(&self) -> usize {
        match self {
            Jacobian::Dense(m) => m.nrows(),
            Jacobian::Sparse(m) => m.nrows(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Jacobian::Dense(m) => m.clone(),
            Jacobian::Sparse(m) => m.to_dense(),
        }
    }

    /// Row-sum norm, used to size explicit start-up substeps.
    pub fn norm_inf(&self) -> f64 {
        match self {
            Jacobian::Dense(m) => m.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max),
            Jacobian::Sparse(m) => (0..m.nrows())
                .map(|i| m.row(i).map(|(_, v)| v.abs()).sum::<f64>())
                .fold(0.0, f64::max),
        }
    }
}

const ITERATIVE_TOL: f64 = 1e-14;
const ITERATIVE_MAX_ITERS: usize = 1000;

/// Factored `I − γJ`.
pub enum NewtonSolver {
    Dense(LU<f64, Dyn, Dyn>),
    Iterative { matrix: CsrMatrix, ilu: Ilu0 },
}

impl NewtonSolver {
    /// Dense LU when `dim ≤ dense_threshold`, otherwise ILU(0) + BiCGSTAB.
    pub fn new(jac: &Jacobian, gamma: f64, dense_threshold: usize) -> Result<Self> {
        let n = jac.dim();
        if n <= dense_threshold {
            let m = DMatrix::identity(n, n) - jac.to_dense() * gamma;
            let lu = m.lu();
            if !lu.is_invertible() {
                return Err(GlmError::Singular("Newton matrix I − hλJ".into()));
            }
            return Ok(NewtonSolver::Dense(lu));
        }
        let csr = match jac {
            Jacobian::Sparse(m) => m.clone(),
            Jacobian::Dense(m) => {
                let triplets: Vec<_> = (0..n)
                    .flat_map(|i| (0..n).map(move |j| (i, j)))
                    .filter(|&(i, j)| m[(i, j)] != 0.0)
                    .map(|(i, j)| (i, j, m[(i, j)]))
                    .collect();
                CsrMatrix::from_triplets(n, n, &triplets)?
            }
        };
        let matrix = csr.identity_minus(gamma)?;
        let ilu = Ilu0::new(&matrix)?;
        Ok(NewtonSolver::Iterative { matrix, ilu })
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            NewtonSolver::Dense(lu) => lu
                .solve(b)
                .ok_or_else(|| GlmError::Singular("Newton matrix I − hλJ".into())),
            NewtonSolver::Iterative { matrix, ilu } => {
                bicgstab(matrix, ilu, b, ITERATIVE_TOL, ITERATIVE_MAX_ITERS).map(|(x, _)| x)
            }
        }
    }
}
