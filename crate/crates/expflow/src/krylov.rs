//! Arnoldi approximation of phi-function actions for large or matrix-free
//! operators.
//!
//! All products `phi_k(c h M) v` with the same seed vector `v` are
//! approximated in one Krylov subspace; its dimension grows until a
//! generalized-residual error estimate meets the requested tolerance. If the
//! configured maximal dimension is reached first, a reduced step size is
//! signalled back to the integrator (Krylov subspaces do not depend on `h`,
//! so the basis is kept). After a step rejection, bases for unchanged seed
//! vectors are recycled.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linop::{Operator, Structure};
use crate::phifun::{phi_dense_block, PhiCombo};
use crate::scalar::Scalar;
use crate::stats::{KrylovStats, StatLabel};

const BREAKDOWN_TOL: f64 = 1e-14;

/// An Arnoldi basis for `(M, v)`: orthonormal columns `V`, the extended
/// Hessenberg matrix `H` and the seed norm `beta`.
pub struct KrylovBasis<T: Scalar> {
    v: Vec<DVector<T>>,
    /// hcols[j] holds H[0..=j+1, j] (length j+2); the last entry is the
    /// subdiagonal h_{j+2,j+1} in math indexing.
    hcols: Vec<Vec<T>>,
    beta: f64,
    exact: bool,
    label: StatLabel,
}

impl<T: Scalar> KrylovBasis<T> {
    /// Seeds a basis with `v / ||v||`.
    pub fn seeded(v: &DVector<T>, label: StatLabel) -> Result<Self> {
        let beta = v.norm();
        if beta == 0.0 {
            return Err(Error::argument("cannot seed a Krylov basis with a zero vector"));
        }
        Ok(KrylovBasis {
            v: vec![v * T::from_f64(1.0 / beta)],
            hcols: Vec::new(),
            beta,
            exact: false,
            label,
        })
    }

    pub fn dim(&self) -> usize {
        self.hcols.len()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn label(&self) -> StatLabel {
        self.label
    }

    /// Whether a happy breakdown occurred (the subspace is invariant and the
    /// approximation exact).
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    /// Square part `H_m` as a dense matrix.
    pub fn h_square(&self) -> DMatrix<T> {
        let m = self.dim();
        let mut h = DMatrix::zeros(m, m);
        for (j, col) in self.hcols.iter().enumerate() {
            for (i, &x) in col.iter().enumerate().take(m.min(col.len())) {
                if i < m {
                    h[(i, j)] = x;
                }
            }
        }
        h
    }

    /// Subdiagonal entry `h_{m+1,m}`; zero after a happy breakdown.
    pub fn h_subdiag(&self) -> f64 {
        if self.exact {
            return 0.0;
        }
        self.hcols
            .last()
            .map(|c| c[c.len() - 1].modulus())
            .unwrap_or(0.0)
    }

    fn h_max_abs(&self) -> f64 {
        self.hcols
            .iter()
            .flat_map(|c| c.iter())
            .map(|x| x.modulus())
            .fold(0.0, f64::max)
    }

    /// `beta * V_m * w` for a small coefficient vector `w`.
    pub fn lift(&self, w: &DVector<T>) -> DVector<T> {
        let d = self.v[0].len();
        let mut out = DVector::zeros(d);
        for (j, col) in self.v.iter().take(self.dim()).enumerate() {
            out += col * (w[j] * T::from_f64(self.beta));
        }
        out
    }

    /// Orthonormal basis matrix (testing helper).
    pub fn basis_matrix(&self) -> DMatrix<T> {
        let d = self.v[0].len();
        let m = self.dim();
        let mut v = DMatrix::zeros(d, m);
        for j in 0..m {
            v.set_column(j, &self.v[j]);
        }
        v
    }
}

/// Extends the basis to `target_m` columns by the Arnoldi process (modified
/// Gram-Schmidt with one reorthogonalization pass). Stops early on a happy
/// breakdown.
pub fn arnoldi_extend<T: Scalar>(
    op: &Operator<T>,
    basis: &mut KrylovBasis<T>,
    target_m: usize,
    stats: &mut KrylovStats,
) -> Result<()> {
    let target = target_m.min(op.dim());
    while basis.dim() < target && !basis.exact {
        let j = basis.dim();
        let mut w = op.apply(&basis.v[j])?;
        let mut col = Vec::with_capacity(j + 2);
        for vi in basis.v.iter().take(j + 1) {
            let hij = vi.dotc(&w);
            w -= vi * hij;
            col.push(hij);
        }
        // one full reorthogonalization pass
        for (i, vi) in basis.v.iter().take(j + 1).enumerate() {
            let c = vi.dotc(&w);
            w -= vi * c;
            col[i] += c;
        }
        let hnext = w.norm();
        col.push(T::from_f64(hnext));
        basis.hcols.push(col);
        stats.total_krylov_steps += 1;
        let href = basis.h_max_abs().max(f64::MIN_POSITIVE);
        if hnext <= BREAKDOWN_TOL * href {
            basis.exact = true;
        } else {
            basis.v.push(w * T::from_f64(1.0 / hnext));
        }
    }
    Ok(())
}

/// Generalized-residual error estimate for `phi_k(h H_m)`:
/// `beta * |h_{m+1,m}| * |(phi_k(h H_m) e_1)[m]|`.
pub fn error_estimate<T: Scalar>(basis: &KrylovBasis<T>, h: f64, k: usize) -> Result<f64> {
    let m = basis.dim();
    if m == 0 {
        return Err(Error::argument("error estimate needs at least one Krylov step"));
    }
    if basis.exact {
        return Ok(0.0);
    }
    let hm = basis.h_square();
    let e1 = unit_column(m);
    let phis = phi_dense_block(&hm, h, &e1, k, Structure::None)?;
    Ok(basis.beta * basis.h_subdiag() * phis[k][(m - 1, 0)].modulus())
}

fn unit_column<T: Scalar>(m: usize) -> DMatrix<T> {
    let mut e1 = DMatrix::zeros(m, 1);
    e1[(0, 0)] = T::one();
    e1
}

/// Store of Arnoldi bases kept across step-size retries. Keyed by
/// `(operator id, seed label)`; a hit requires the stored seed vector to be
/// unchanged bitwise (the Krylov space of `(M, v)` does not depend on `h`).
pub struct RecycleStore<T: Scalar> {
    entries: HashMap<(u64, StatLabel), (DVector<T>, KrylovBasis<T>)>,
}

impl<T: Scalar> Default for RecycleStore<T> {
    fn default() -> Self {
        RecycleStore {
            entries: HashMap::new(),
        }
    }
}

impl<T: Scalar> RecycleStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn insert(&mut self, op_id: u64, label: StatLabel, seed: DVector<T>, basis: KrylovBasis<T>) {
        self.entries.insert((op_id, label), (seed, basis));
    }
}

/// Looks up a previously built basis for `(op, label, v)`. On a hit the basis
/// is removed from the store and returned; the caller re-inserts it after
/// use.
pub fn recycle_lookup<T: Scalar>(
    store: &mut RecycleStore<T>,
    op_id: u64,
    label: StatLabel,
    v: &DVector<T>,
) -> Option<KrylovBasis<T>> {
    let matches = match store.entries.get(&(op_id, label)) {
        Some((seed, _)) => seed.len() == v.len() && seed.iter().zip(v.iter()).all(|(a, b)| a == b),
        None => false,
    };
    if matches {
        store.entries.remove(&(op_id, label)).map(|(_, b)| b)
    } else {
        None
    }
}

/// Outcome of [`approximate`].
pub struct ApproxOutcome<T: Scalar> {
    /// One result vector per requested combo, evaluated at the *returned*
    /// step size `h_out`.
    pub vectors: Vec<DVector<T>>,
    /// Equals the requested `h` on convergence; smaller if the step has to be
    /// reduced for the Krylov error to meet the tolerance.
    pub h_out: f64,
    pub converged: bool,
    pub m: usize,
}

/// Approximates `combo_i(h M) v` for every requested combo in one Krylov
/// subspace.
///
/// The subspace grows until the error estimate of every requested phi term
/// is below `tol` (checked every step up to dimension 12, then every third
/// step). If `max_dim` is reached without convergence and `allow_reduction`
/// is set, a reduced `h_out < h` is returned (`h_out = h (tol/est)^{1/k_min}`
/// bounded below by `h/4`) and the results are evaluated at `h_out`;
/// otherwise a warning is logged and the best available approximation is
/// returned.
#[allow(clippy::too_many_arguments)]
pub fn approximate<T: Scalar>(
    op: &Operator<T>,
    v: &DVector<T>,
    h: f64,
    combos: &[PhiCombo],
    tol: f64,
    max_dim: usize,
    label: StatLabel,
    store: &mut RecycleStore<T>,
    stats: &mut KrylovStats,
    allow_reduction: bool,
) -> Result<ApproxOutcome<T>> {
    if combos.is_empty() {
        return Err(Error::argument("approximate requires at least one combo"));
    }
    if tol <= 0.0 {
        return Err(Error::argument("Krylov tolerance must be positive"));
    }
    if v.len() != op.dim() {
        return Err(Error::argument(format!(
            "seed length {} does not match operator dimension {}",
            v.len(),
            op.dim()
        )));
    }
    if v.norm() == 0.0 {
        stats.matfun_evals += combos.len();
        return Ok(ApproxOutcome {
            vectors: vec![DVector::zeros(op.dim()); combos.len()],
            h_out: h,
            converged: true,
            m: 0,
        });
    }

    let mut basis = match recycle_lookup(store, op.id(), label, v) {
        Some(b) => {
            stats.recycled_subspaces += 1;
            b
        }
        None => {
            stats.subspaces_built += 1;
            KrylovBasis::seeded(v, label)?
        }
    };

    let cap = max_dim.min(op.dim());
    let mut converged = basis.dim() > 0 && check_all(&basis, h, combos, tol)?.1;
    while !converged && basis.dim() < cap && !basis.is_exact() {
        arnoldi_extend(op, &mut basis, basis.dim() + 1, stats)?;
        let m = basis.dim();
        let at_end = m == cap || basis.is_exact();
        if m <= 12 || (m - 12) % 3 == 0 || at_end {
            converged = check_all(&basis, h, combos, tol)?.1;
        }
    }
    if !converged {
        // exhaust the checks at the final dimension
        converged = check_all(&basis, h, combos, tol)?.1;
    }

    let m = basis.dim();
    stats.record_dim(label, m);

    let mut h_out = h;
    if !converged {
        let (est, _) = check_all(&basis, h, combos, tol)?;
        if allow_reduction {
            let k_min = combos
                .iter()
                .flat_map(|c| c.terms().iter().map(|&(k, _)| k))
                .filter(|&k| k >= 1)
                .min()
                .unwrap_or(1);
            let factor = (tol / est).powf(1.0 / k_min as f64).max(0.25);
            h_out = h * factor;
            stats.step_reductions += 1;
        } else {
            log::warn!(
                "Krylov approximation for {label} did not reach tol {tol:.2e} within dimension {cap} (estimate {est:.2e}); returning best available result"
            );
        }
    }

    let vectors = evaluate_combos(&basis, h_out, combos)?;
    stats.matfun_evals += combos.len();
    store.insert(op.id(), label, v.clone(), basis);
    Ok(ApproxOutcome {
        vectors,
        h_out,
        converged,
        m,
    })
}

/// Returns (worst combo estimate, all estimates below tol).
fn check_all<T: Scalar>(
    basis: &KrylovBasis<T>,
    h: f64,
    combos: &[PhiCombo],
    tol: f64,
) -> Result<(f64, bool)> {
    if basis.dim() == 0 {
        return Ok((f64::INFINITY, false));
    }
    if basis.is_exact() {
        return Ok((0.0, true));
    }
    let m = basis.dim();
    let hm = basis.h_square();
    let e1 = unit_column::<T>(m);
    let sub = basis.h_subdiag();
    let mut worst = 0.0f64;
    for combo in combos {
        let phis = phi_dense_block(&hm, h * combo.scale(), &e1, combo.max_index(), Structure::None)?;
        let mut est = 0.0;
        for &(k, a) in combo.terms() {
            est += a.abs() * basis.beta() * sub * phis[k][(m - 1, 0)].modulus();
        }
        worst = worst.max(est);
    }
    Ok((worst, worst <= tol))
}

fn evaluate_combos<T: Scalar>(
    basis: &KrylovBasis<T>,
    h: f64,
    combos: &[PhiCombo],
) -> Result<Vec<DVector<T>>> {
    let m = basis.dim();
    if m == 0 {
        return Ok(vec![DVector::zeros(basis.v[0].len()); combos.len()]);
    }
    let hm = basis.h_square();
    let e1 = unit_column::<T>(m);
    let mut out = Vec::with_capacity(combos.len());
    for combo in combos {
        let phis = phi_dense_block(&hm, h * combo.scale(), &e1, combo.max_index(), Structure::None)?;
        let mut w = DVector::<T>::zeros(m);
        for &(k, a) in combo.terms() {
            for i in 0..m {
                w[i] += phis[k][(i, 0)] * T::from_f64(a);
            }
        }
        out.push(basis.lift(&w));
    }
    Ok(out)
}
