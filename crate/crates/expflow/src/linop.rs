//! Linear operator abstraction for the stiff part of the equation.
//!
//! An [`Operator`] is the fixed linear part `A` of a semilinear problem or a
//! per-step Jacobian `J_n`. It can be stored densely, in compressed sparse
//! row form, or as a matrix-free action `v -> M v`. Evaluators only ever need
//! the matrix-vector product; the direct backend additionally materializes
//! small operators.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default dimension cap for materializing matrix-free operators by column
/// probing. The direct matrix-function path is meant for small systems.
pub const MATERIALIZE_CAP: usize = 512;

/// Structure metadata for the linear part or Jacobian.
///
/// `Normal` is accepted but treated like `None` by the evaluators; only
/// `Symmetric` (real scalars) and `Diagonal` select the diagonalization path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    None,
    Normal,
    Symmetric,
    SkewSymmetric,
    Diagonal,
}

impl Default for Structure {
    fn default() -> Self {
        Structure::None
    }
}

impl std::fmt::Display for Structure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Structure::None => "none",
            Structure::Normal => "normal",
            Structure::Symmetric => "symmetric",
            Structure::SkewSymmetric => "skewsymmetric",
            Structure::Diagonal => "diagonal",
        };
        f.write_str(s)
    }
}

/// Compressed sparse row matrix with just enough functionality for matvecs
/// and conversions.
#[derive(Debug, Clone)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds a CSR matrix from (row, col, value) triplets. Duplicate entries
    /// are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, T)],
    ) -> Result<Self> {
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::argument(format!(
                    "triplet ({r}, {c}) out of bounds for {nrows}x{ncols} matrix"
                )));
            }
        }
        let mut sorted: Vec<(usize, usize, T)> = triplets.to_vec();
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        // merge duplicates
        let mut merged: Vec<(usize, usize, T)> = Vec::with_capacity(sorted.len());
        for (r, c, v) in sorted {
            match merged.last_mut() {
                Some(&mut (lr, lc, ref mut lv)) if lr == r && lc == c => *lv += v,
                _ => merged.push((r, c, v)),
            }
        }
        let mut row_ptr = vec![0usize; nrows + 1];
        for &(r, _, _) in &merged {
            row_ptr[r + 1] += 1;
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx: merged.iter().map(|&(_, c, _)| c).collect(),
            values: merged.iter().map(|&(_, _, v)| v).collect(),
        })
    }

    pub fn from_dense(m: &DMatrix<T>) -> Self {
        let mut row_ptr = vec![0usize; m.nrows() + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let v = m[(r, c)];
                if v.modulus() != 0.0 {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr[r + 1] = col_idx.len();
        }
        CsrMatrix {
            nrows: m.nrows(),
            ncols: m.ncols(),
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.col_idx[k])] += self.values[k];
            }
        }
        m
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

    pub fn matvec(&self, v: &DVector<T>, out: &mut DVector<T>) {
        for r in 0..self.nrows {
            let mut acc = T::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * v[self.col_idx[k]];
            }
            out[r] = acc;
        }
    }
}

type MatFreeAction<T> =
    Arc<dyn Fn(&DVector<T>, &mut DVector<T>) -> Result<()> + Send + Sync + 'static>;

/// Storage variant of an operator.
#[derive(Clone)]
pub enum OperatorKind<T: Scalar> {
    Dense(Arc<DMatrix<T>>),
    Sparse(Arc<CsrMatrix<T>>),
    MatFree(MatFreeAction<T>),
}

impl<T: Scalar> std::fmt::Debug for OperatorKind<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OperatorKind::Dense(_) => f.write_str("Dense"),
            OperatorKind::Sparse(_) => f.write_str("Sparse"),
            OperatorKind::MatFree(_) => f.write_str("MatFree"),
        }
    }
}

static NEXT_OPERATOR_ID: AtomicU64 = AtomicU64::new(1);

/// The stiff linear operator: `A` of a semilinear split or a Jacobian `J_n`.
///
/// Operators are immutable after construction and cheap to clone; matrix-free
/// actions must be reentrant.
#[derive(Debug, Clone)]
pub struct Operator<T: Scalar> {
    dim: usize,
    kind: OperatorKind<T>,
    structure: Structure,
    id: u64,
}

impl<T: Scalar> Operator<T> {
    fn fresh_id() -> u64 {
        NEXT_OPERATOR_ID.fetch_add(1, Ordering::Relaxed)
    }

    /// Wraps a dense square matrix, validating the declared structure.
    pub fn dense(m: DMatrix<T>, structure: Structure) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::argument(format!(
                "operator must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let op = Operator {
            dim: m.nrows(),
            kind: OperatorKind::Dense(Arc::new(m)),
            structure,
            id: Self::fresh_id(),
        };
        op.check_structure()?;
        Ok(op)
    }

    /// Wraps a CSR matrix, validating the declared structure.
    pub fn sparse(m: CsrMatrix<T>, structure: Structure) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::argument(format!(
                "operator must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let op = Operator {
            dim: m.nrows(),
            kind: OperatorKind::Sparse(Arc::new(m)),
            structure,
            id: Self::fresh_id(),
        };
        op.check_structure()?;
        Ok(op)
    }

    /// Wraps a matrix-free action `v -> M v`. Structure is taken on trust
    /// since the action cannot be inspected.
    pub fn matfree<F>(dim: usize, structure: Structure, action: F) -> Self
    where
        F: Fn(&DVector<T>, &mut DVector<T>) -> Result<()> + Send + Sync + 'static,
    {
        Operator {
            dim,
            kind: OperatorKind::MatFree(Arc::new(action)),
            structure,
            id: Self::fresh_id(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Operator::diagonal(DVector::from_element(dim, T::one()))
    }

    pub fn diagonal(diag: DVector<T>) -> Self {
        let d = diag.len();
        let triplets: Vec<(usize, usize, T)> = diag
            .iter()
            .enumerate()
            .map(|(i, &v)| (i, i, v))
            .collect();
        let csr = CsrMatrix::from_triplets(d, d, &triplets).expect("diagonal triplets in bounds");
        Operator {
            dim: d,
            kind: OperatorKind::Sparse(Arc::new(csr)),
            structure: Structure::Diagonal,
            id: Self::fresh_id(),
        }
    }

    fn check_structure(&self) -> Result<()> {
        let m = match &self.kind {
            OperatorKind::Dense(m) => (**m).clone(),
            OperatorKind::Sparse(s) => s.to_dense(),
            OperatorKind::MatFree(_) => return Ok(()),
        };
        let max_abs = m.iter().map(|x| x.modulus()).fold(0.0f64, f64::max);
        match self.structure {
            Structure::Diagonal => {
                for r in 0..self.dim {
                    for c in 0..self.dim {
                        if r != c && m[(r, c)].modulus() != 0.0 {
                            return Err(Error::argument(
                                "structure=diagonal but off-diagonal entries are nonzero",
                            ));
                        }
                    }
                }
            }
            Structure::Symmetric => {
                let dev = sym_deviation(&m, false);
                if dev > 1e-12 * max_abs.max(f64::MIN_POSITIVE) {
                    return Err(Error::argument(format!(
                        "structure=symmetric violated: max |M - M^T| = {dev:.3e}"
                    )));
                }
            }
            Structure::SkewSymmetric => {
                let dev = sym_deviation(&m, true);
                if dev > 1e-12 * max_abs.max(f64::MIN_POSITIVE) {
                    return Err(Error::argument(format!(
                        "structure=skewsymmetric violated: max |M + M^T| = {dev:.3e}"
                    )));
                }
            }
            Structure::None | Structure::Normal => {}
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn structure(&self) -> Structure {
        self.structure
    }

    pub fn kind(&self) -> &OperatorKind<T> {
        &self.kind
    }

    /// Stable identity token; used by evaluator caches to detect operator
    /// changes.
    pub fn id(&self) -> u64 {
        self.id
    }

    /// Matrix-vector product `M v`.
    pub fn apply(&self, v: &DVector<T>) -> Result<DVector<T>> {
        if v.len() != self.dim {
            return Err(Error::argument(format!(
                "operator dimension {} does not match vector length {}",
                self.dim,
                v.len()
            )));
        }
        match &self.kind {
            OperatorKind::Dense(m) => Ok(&**m * v),
            OperatorKind::Sparse(s) => {
                let mut out = DVector::zeros(self.dim);
                s.matvec(v, &mut out);
                Ok(out)
            }
            OperatorKind::MatFree(f) => {
                let mut out = DVector::zeros(self.dim);
                f(v, &mut out)?;
                Ok(out)
            }
        }
    }

    /// Dense matrix equal to the operator's action on the standard basis.
    ///
    /// Matrix-free operators are probed column by column up to
    /// [`MATERIALIZE_CAP`].
    pub fn materialize(&self) -> Result<DMatrix<T>> {
        self.materialize_with_cap(MATERIALIZE_CAP)
    }

    pub fn materialize_with_cap(&self, cap: usize) -> Result<DMatrix<T>> {
        match &self.kind {
            OperatorKind::Dense(m) => Ok((**m).clone()),
            OperatorKind::Sparse(s) => Ok(s.to_dense()),
            OperatorKind::MatFree(_) => {
                if self.dim > cap {
                    return Err(Error::unsupported(format!(
                        "cannot materialize matrix-free operator of dimension {} (cap {})",
                        self.dim, cap
                    )));
                }
                let mut m = DMatrix::zeros(self.dim, self.dim);
                let mut e = DVector::zeros(self.dim);
                for j in 0..self.dim {
                    e[j] = T::one();
                    let col = self.apply(&e)?;
                    m.set_column(j, &col);
                    e[j] = T::zero();
                }
                Ok(m)
            }
        }
    }

    /// Conversion to dense storage (keeps structure metadata).
    pub fn to_dense_operator(&self) -> Result<Self> {
        let m = self.materialize()?;
        Ok(Operator {
            dim: self.dim,
            kind: OperatorKind::Dense(Arc::new(m)),
            structure: self.structure,
            id: Self::fresh_id(),
        })
    }

    /// Conversion to CSR storage (keeps structure metadata).
    pub fn to_sparse_operator(&self) -> Result<Self> {
        let m = self.materialize()?;
        Ok(Operator {
            dim: self.dim,
            kind: OperatorKind::Sparse(Arc::new(CsrMatrix::from_dense(&m))),
            structure: self.structure,
            id: Self::fresh_id(),
        })
    }
}

fn sym_deviation<T: Scalar>(m: &DMatrix<T>, skew: bool) -> f64 {
    let mut dev = 0.0f64;
    for r in 0..m.nrows() {
        for c in 0..r {
            let x = if skew {
                m[(r, c)] + m[(c, r)]
            } else {
                m[(r, c)] - m[(c, r)]
            };
            dev = dev.max(x.modulus());
        }
    }
    if skew {
        for r in 0..m.nrows() {
            dev = dev.max((m[(r, r)] + m[(r, r)]).modulus());
        }
    }
    dev
}

/// 1D Dirichlet Laplacian `(1/dx^2) tridiag(1, -2, 1)` on `n` inner points of
/// (0, 1) with `dx = 1/(n+1)`, scaled by `coeff`.
pub fn laplacian_1d_dirichlet<T: Scalar>(n: usize, coeff: f64) -> Operator<T> {
    let dx = 1.0 / (n as f64 + 1.0);
    let s = coeff / (dx * dx);
    let mut triplets = Vec::with_capacity(3 * n);
    for i in 0..n {
        triplets.push((i, i, T::from_f64(-2.0 * s)));
        if i + 1 < n {
            triplets.push((i, i + 1, T::from_f64(s)));
            triplets.push((i + 1, i, T::from_f64(s)));
        }
    }
    let csr = CsrMatrix::from_triplets(n, n, &triplets).expect("stencil in bounds");
    Operator::sparse(csr, Structure::Symmetric).expect("tridiagonal stencil is symmetric")
}
