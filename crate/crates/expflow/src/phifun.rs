//! Evaluation of the phi functions
//!
//!   phi_0(z) = e^z,   phi_{k+1}(z) = (phi_k(z) - phi_k(0)) / z,
//!   phi_k(0) = 1/k!,
//!
//! for scalars and for small dense matrices, plus the memoization used by the
//! direct matrix-function backend.
//!
//! Scalars: for |z| < 0.5 the Taylor series `sum_m z^m / (m+k)!` is summed
//! directly. Larger arguments are scaled into that disk and brought back with
//! the doubling identity
//!
//!   phi_j(2z) = 2^{-j} [ phi_0(z) phi_j(z) + sum_{l=1..j} phi_l(z) / (j-l)! ],
//!
//! whose terms are all positive for real z, so no cancellation occurs.
//!
//! Matrices: all products `phi_k(hM) B`, k = 0..kmax, come out of a single
//! matrix exponential of the augmented block matrix
//!
//!   [ hM  B  0 ... ]
//!   [  0  0  I ... ]        (kmax * p nilpotent tail)
//!   [  0  0  0 ... ]
//!
//! evaluated with degree-13 diagonal Pade and 1-norm based scaling and
//! squaring. Symmetric (real) and diagonal operators instead go through an
//! eigendecomposition and scalar phi evaluations.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linop::Structure;
use crate::scalar::Scalar;

/// Highest supported phi index. The largest index any registered scheme needs
/// is 7 (six-step Adams weights); 12 leaves margin.
pub const PHI_KMAX: usize = 12;

const TAYLOR_RADIUS: f64 = 0.5;

/// A finite linear combination `sum_k alpha_k phi_k(c z)`; the universal
/// representation of scheme coefficient functions. `scale` is the node factor
/// `c` in `phi_k(c_i z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiCombo {
    terms: Vec<(usize, f64)>,
    scale: f64,
}

impl PhiCombo {
    /// Builds a combo; terms are normalized (sorted by index, duplicates
    /// merged, zero coefficients dropped).
    pub fn new(terms: Vec<(usize, f64)>, scale: f64) -> Result<Self> {
        let mut sorted = terms;
        sorted.sort_by_key(|&(k, _)| k);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(sorted.len());
        for (k, a) in sorted {
            if k > PHI_KMAX {
                return Err(Error::unsupported(format!(
                    "phi index {k} above the supported cap {PHI_KMAX}"
                )));
            }
            match merged.last_mut() {
                Some(&mut (lk, ref mut la)) if lk == k => *la += a,
                _ => merged.push((k, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        Ok(PhiCombo {
            terms: merged,
            scale,
        })
    }

    /// `alpha * phi_k(c z)` as a single-term combo.
    pub fn single(k: usize, alpha: f64, scale: f64) -> Result<Self> {
        PhiCombo::new(vec![(k, alpha)], scale)
    }

    pub fn terms(&self) -> &[(usize, f64)] {
        &self.terms
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_index(&self) -> usize {
        self.terms.last().map(|&(k, _)| k).unwrap_or(0)
    }

    /// Value at z = 0: `sum_k alpha_k / k!`.
    pub fn value_at_zero(&self) -> f64 {
        self.terms
            .iter()
            .map(|&(k, a)| a / factorial(k))
            .sum()
    }
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Scalar `phi_k(z)`.
pub fn phi_scalar<T: Scalar>(k: usize, z: T) -> Result<T> {
    Ok(phi_scalar_all(k, z)?[k])
}

/// All of `phi_0(z) .. phi_kmax(z)` at once.
pub fn phi_scalar_all<T: Scalar>(kmax: usize, z: T) -> Result<Vec<T>> {
    if kmax > PHI_KMAX {
        return Err(Error::unsupported(format!(
            "phi index {kmax} above the supported cap {PHI_KMAX}"
        )));
    }
    if !z.modulus().is_finite() {
        return Err(Error::argument("phi argument must be finite"));
    }
    let r = z.modulus();
    if r < TAYLOR_RADIUS {
        return Ok((0..=kmax).map(|k| phi_taylor(k, z)).collect());
    }
    let s = (r / TAYLOR_RADIUS).log2().ceil().max(1.0) as u32;
    let w = z * T::from_f64(0.5f64.powi(s as i32));
    let mut phis: Vec<T> = (0..=kmax).map(|k| phi_taylor(k, w)).collect();
    for _ in 0..s {
        let prev = phis.clone();
        for (j, slot) in phis.iter_mut().enumerate() {
            let mut acc = prev[0] * prev[j];
            for l in 1..=j {
                acc += prev[l] * T::from_f64(1.0 / factorial(j - l));
            }
            *slot = acc * T::from_f64(0.5f64.powi(j as i32));
        }
    }
    Ok(phis)
}

/// Truncated Taylor sum `sum_m z^m / (m+k)!`; accurate for |z| below the
/// branch radius. Terms below 1e-18 of the partial sum are dropped.
fn phi_taylor<T: Scalar>(k: usize, z: T) -> T {
    let mut term = T::from_f64(1.0 / factorial(k));
    let mut sum = term;
    for m in 1..200 {
        term = term * z * T::from_f64(1.0 / (m + k) as f64);
        sum += term;
        if term.modulus() <= 1e-18 * sum.modulus() {
            break;
        }
    }
    sum
}

/// Evaluates a [`PhiCombo`] at a scalar argument: `sum alpha_k phi_k(c z)`.
pub fn phi_combo_scalar<T: Scalar>(combo: &PhiCombo, z: T) -> Result<T> {
    let zz = z * T::from_f64(combo.scale);
    let phis = phi_scalar_all(combo.max_index(), zz)?;
    let mut acc = T::zero();
    for &(k, a) in combo.terms() {
        acc += phis[k] * T::from_f64(a);
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// dense matrix exponential
// ---------------------------------------------------------------------------

/// Pade(13) numerator coefficients (Higham 2005).
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371920351148152;

fn one_norm<T: Scalar>(m: &DMatrix<T>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..m.ncols() {
        let s: f64 = m.column(j).iter().map(|x| x.modulus()).sum();
        best = best.max(s);
    }
    best
}

/// Matrix exponential by scaling and squaring with diagonal Pade(13).
pub fn expm_dense<T: Scalar>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    if a.nrows() != a.ncols() {
        return Err(Error::argument("expm requires a square matrix"));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let norm = one_norm(a);
    if !norm.is_finite() {
        return Err(Error::numerical("expm input contains non-finite entries"));
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as u32
    } else {
        0
    };
    let a1 = a * T::from_f64(0.5f64.powi(s as i32));
    let eye = DMatrix::<T>::identity(n, n);
    let a2 = &a1 * &a1;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let c = |i: usize| T::from_f64(PADE13[i]);
    let w1 = &a6 * c(13) + &a4 * c(11) + &a2 * c(9);
    let w2 = &a6 * c(7) + &a4 * c(5) + &a2 * c(3) + &eye * c(1);
    let u = &a1 * (&a6 * &w1 + w2);
    let z1 = &a6 * c(12) + &a4 * c(10) + &a2 * c(8);
    let v = &a6 * &z1 + &a6 * c(6) + &a4 * c(4) + &a2 * c(2) + &eye * c(0);
    let denom = &v - &u;
    let numer = &v + &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .ok_or_else(|| Error::numerical("singular Pade denominator in expm"))?;
    for _ in 0..s {
        r = &r * &r;
    }
    if r.iter().any(|x| !x.modulus().is_finite()) {
        return Err(Error::numerical("overflow in matrix exponential"));
    }
    Ok(r)
}

// ---------------------------------------------------------------------------
// symmetric eigensolver (cyclic Jacobi)
// ---------------------------------------------------------------------------

/// Eigendecomposition `M = Q diag(w) Q^T` of a real symmetric matrix by the
/// cyclic Jacobi method. Tolerance `1e-13 * ||M||_F`, at most 30 sweeps.
pub fn jacobi_symmetric(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if m.nrows() != m.ncols() {
        return Err(Error::argument("jacobi requires a square matrix"));
    }
    let n = m.nrows();
    let mut a = m.clone();
    let mut q = DMatrix::<f64>::identity(n, n);
    let fro = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-13 * fro.max(f64::MIN_POSITIVE);
    for _sweep in 0..30 {
        let off = {
            let mut s = 0.0;
            for p in 0..n {
                for r in (p + 1)..n {
                    s += 2.0 * a[(p, r)] * a[(p, r)];
                }
            }
            s.sqrt()
        };
        if off <= tol {
            return Ok((a.diagonal(), q));
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apq = a[(p, r)];
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let theta = (a[(r, r)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, r)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, r)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(r, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(r, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let qkp = q[(k, p)];
                    let qkq = q[(k, r)];
                    q[(k, p)] = c * qkp - s * qkq;
                    q[(k, r)] = s * qkp + c * qkq;
                }
            }
        }
    }
    Err(Error::numerical(
        "Jacobi eigensolver did not converge in 30 sweeps",
    ))
}

// ---------------------------------------------------------------------------
// phi_k(h M) B for dense blocks
// ---------------------------------------------------------------------------

/// Computes `[phi_0(hM) B, phi_1(hM) B, ..., phi_kmax(hM) B]`.
///
/// Diagonal and real symmetric operators use eigenvalue evaluation with
/// [`phi_scalar`]; everything else goes through the augmented matrix
/// exponential. A failing eigensolver falls back to the augmented path.
pub fn phi_dense_block<T: Scalar>(
    m: &DMatrix<T>,
    h: f64,
    b: &DMatrix<T>,
    kmax: usize,
    structure: Structure,
) -> Result<Vec<DMatrix<T>>> {
    if m.nrows() != m.ncols() {
        return Err(Error::argument("phi_dense_block requires a square matrix"));
    }
    if b.nrows() != m.nrows() {
        return Err(Error::argument(
            "phi_dense_block: B row count does not match the operator dimension",
        ));
    }
    if kmax > PHI_KMAX {
        return Err(Error::unsupported(format!(
            "phi index {kmax} above the supported cap {PHI_KMAX}"
        )));
    }
    match structure {
        Structure::Diagonal => {
            let d = m.nrows();
            let mut out = vec![DMatrix::zeros(d, b.ncols()); kmax + 1];
            for i in 0..d {
                let phis = phi_scalar_all(kmax, m[(i, i)] * T::from_f64(h))?;
                for (k, phi) in phis.iter().enumerate() {
                    for j in 0..b.ncols() {
                        out[k][(i, j)] = *phi * b[(i, j)];
                    }
                }
            }
            Ok(out)
        }
        Structure::Symmetric if !T::COMPLEX => {
            let m_real = m.map(|x| x.re());
            match jacobi_symmetric(&m_real) {
                Ok((w, q)) => {
                    let b_real = b.map(|x| x.re());
                    let qt_b = q.transpose() * &b_real;
                    let mut out = Vec::with_capacity(kmax + 1);
                    let phis_per_eig: Vec<Vec<f64>> = w
                        .iter()
                        .map(|&lam| phi_scalar_all(kmax, h * lam))
                        .collect::<Result<_>>()?;
                    for k in 0..=kmax {
                        let mut scaled = qt_b.clone();
                        for i in 0..scaled.nrows() {
                            let p = phis_per_eig[i][k];
                            for j in 0..scaled.ncols() {
                                scaled[(i, j)] *= p;
                            }
                        }
                        let res = &q * scaled;
                        out.push(res.map(T::from_f64));
                    }
                    Ok(out)
                }
                Err(e) => {
                    log::warn!("symmetric eigen path failed ({e}); falling back to augmented exponential");
                    phi_block_augmented(m, h, b, kmax)
                }
            }
        }
        _ => phi_block_augmented(m, h, b, kmax),
    }
}

fn phi_block_augmented<T: Scalar>(
    m: &DMatrix<T>,
    h: f64,
    b: &DMatrix<T>,
    kmax: usize,
) -> Result<Vec<DMatrix<T>>> {
    let d = m.nrows();
    let p = b.ncols();
    // Normalize B so the augmented norm is dominated by hM, not the seed.
    let bscale = one_norm(b);
    if bscale == 0.0 {
        let e = expm_dense(&(m * T::from_f64(h)))?;
        let mut out = vec![DMatrix::zeros(d, p); kmax + 1];
        out[0] = e * b; // zero
        return Ok(out);
    }
    let b_n = b * T::from_f64(1.0 / bscale);
    let n_aug = d + kmax.max(1) * p;
    let mut g = DMatrix::<T>::zeros(n_aug, n_aug);
    g.view_mut((0, 0), (d, d)).copy_from(&(m * T::from_f64(h)));
    if kmax == 0 {
        // only e^{hM} B needed; still use the augmented form for uniformity
        g.view_mut((0, d), (d, p)).copy_from(&b_n);
    } else {
        g.view_mut((0, d), (d, p)).copy_from(&b_n);
        for blk in 0..kmax - 1 {
            let row = d + blk * p;
            let col = d + (blk + 1) * p;
            for i in 0..p {
                g[(row + i, col + i)] = T::one();
            }
        }
    }
    let e = expm_dense(&g)?;
    let mut out = Vec::with_capacity(kmax + 1);
    let e00 = e.view((0, 0), (d, d)).into_owned();
    out.push(&e00 * b); // phi_0(hM) B = e^{hM} B
    for k in 1..=kmax {
        let blk = e.view((0, d + (k - 1) * p), (d, p)).into_owned();
        out.push(blk * T::from_f64(bscale));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// memoization for the direct backend
// ---------------------------------------------------------------------------

/// Memoized `phi_k(tau A)` blocks for a constant operator, keyed by the
/// effective step `tau = c * h`. Entries for a stale step size are dropped, so
/// constant-step runs hit the cache from the second step on.
pub struct PhiCache<T: Scalar> {
    entries: HashMap<(u64, u64), Arc<Vec<DMatrix<T>>>>,
    op_id: Option<u64>,
    hits: usize,
    misses: usize,
}

impl<T: Scalar> Default for PhiCache<T> {
    fn default() -> Self {
        PhiCache {
            entries: HashMap::new(),
            op_id: None,
            hits: 0,
            misses: 0,
        }
    }
}

/// Cache key token for a `(h, operator, kmax)` request.
pub fn cache_key(h: f64, op_id: u64, kmax: usize) -> (u64, u64, usize) {
    (h.to_bits(), op_id, kmax)
}

impl<T: Scalar> PhiCache<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Looks up `phi_k(tau A)` for `k = 0..=kmax`; on a miss the blocks are
    /// computed by `compute` and stored.
    pub fn get_or_compute(
        &mut self,
        tau: f64,
        op_id: u64,
        kmax: usize,
        compute: impl FnOnce() -> Result<Vec<DMatrix<T>>>,
    ) -> Result<Arc<Vec<DMatrix<T>>>> {
        if self.op_id != Some(op_id) {
            self.entries.clear();
            self.op_id = Some(op_id);
        }
        let key = (tau.to_bits(), op_id);
        if let Some(blocks) = self.entries.get(&key) {
            if blocks.len() > kmax {
                self.hits += 1;
                return Ok(blocks.clone());
            }
        }
        self.misses += 1;
        let blocks = Arc::new(compute()?);
        self.entries.insert(key, blocks.clone());
        Ok(blocks)
    }

    pub fn hits(&self) -> usize {
        self.hits
    }

    pub fn misses(&self) -> usize {
        self.misses
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Complex64;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn phi_at_zero() {
        assert_eq!(phi_scalar(0, 0.0).unwrap(), 1.0);
        assert_eq!(phi_scalar(2, 0.0).unwrap(), 0.5);
        assert_eq!(phi_scalar(3, 0.0).unwrap(), 1.0 / 6.0);
    }

    #[test]
    fn phi1_at_one() {
        assert_relative_eq!(
            phi_scalar(1, 1.0).unwrap(),
            1.718281828459045,
            max_relative = 1e-14
        );
    }

    #[test]
    fn phi_cap_and_argument_errors() {
        assert!(matches!(
            phi_scalar(13, 1.0),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            phi_scalar(1, f64::NAN),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn phi_matches_direct_formula_at_moderate_args() {
        // phi_k(z) = (e^z - sum_{j<k} z^j/j!) / z^k, stable enough here.
        for &z in &[2.0f64, -3.0, 7.5, -20.0, 35.0] {
            for k in 1..=4usize {
                let mut partial = 0.0;
                let mut zj = 1.0;
                for j in 0..k {
                    partial += zj / factorial(j);
                    zj *= z;
                }
                let expected = (z.exp() - partial) / z.powi(k as i32);
                let got = phi_scalar(k, z).unwrap();
                assert_relative_eq!(got, expected, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn phi_complex_consistency() {
        // phi_1(i t) from the closed form (e^{it} - 1)/(it)
        let z = Complex64::new(0.0, 2.0);
        let expected = (z.exp() - Complex64::new(1.0, 0.0)) / z;
        let got = phi_scalar(1, z).unwrap();
        assert!((got - expected).norm() <= 1e-13 * expected.norm());
    }

    #[test]
    fn combo_values() {
        let c = PhiCombo::single(1, 1.0, 1.0).unwrap();
        assert_relative_eq!(phi_combo_scalar(&c, 0.0).unwrap(), 1.0);

        let c = PhiCombo::new(vec![(2, 1.0), (3, -1.0)], 1.0).unwrap();
        assert_relative_eq!(
            phi_combo_scalar(&c, 0.0).unwrap(),
            1.0 / 3.0,
            max_relative = 1e-15
        );

        // scale 0.5 at z = 2 is phi_1(1)
        let c = PhiCombo::single(1, 1.0, 0.5).unwrap();
        assert_relative_eq!(
            phi_combo_scalar(&c, 2.0).unwrap(),
            1.718281828459045,
            max_relative = 1e-13
        );
    }

    #[test]
    fn expm_basics() {
        let z = DMatrix::<f64>::zeros(3, 3);
        assert_eq!(expm_dense(&z).unwrap(), DMatrix::identity(3, 3));

        let d = dmatrix![2.0f64.ln(), 0.0; 0.0, 0.0];
        let e = expm_dense(&d).unwrap();
        assert_relative_eq!(e[(0, 0)], 2.0, max_relative = 1e-14);
        assert_relative_eq!(e[(1, 1)], 1.0, max_relative = 1e-14);

        let th = 0.3f64;
        let r = expm_dense(&dmatrix![0.0, th; -th, 0.0]).unwrap();
        assert_relative_eq!(r[(0, 0)], th.cos(), max_relative = 1e-13);
        assert_relative_eq!(r[(0, 1)], th.sin(), max_relative = 1e-13);
        assert_relative_eq!(r[(1, 0)], -th.sin(), max_relative = 1e-13);
    }

    #[test]
    fn expm_large_norm() {
        // hard scaling case: norm ~ 100
        let a = dmatrix![-90.0, 40.0; 10.0, -60.0];
        let e = expm_dense(&a).unwrap();
        // eigen decomposition oracle: eigenvalues of a
        // tr = -150, det = 5400 - 400 = 5000 -> lambda = (-150 +- sqrt(22500-20000))/2
        let disc = (150.0f64 * 150.0 - 4.0 * 5000.0).sqrt();
        let l1 = (-150.0 + disc) / 2.0;
        let l2 = (-150.0 - disc) / 2.0;
        // v1 = [40, l1+90], v2 = [40, l2+90]
        let v = dmatrix![40.0, 40.0; l1 + 90.0, l2 + 90.0];
        let oracle = &v * dmatrix![l1.exp(), 0.0; 0.0, l2.exp()] * v.try_inverse().unwrap();
        assert!((e - &oracle).norm() <= 1e-12 * oracle.norm().max(1e-30));
    }

    #[test]
    fn dense_block_zero_matrix() {
        let m = DMatrix::<f64>::zeros(3, 3);
        let b = DMatrix::<f64>::identity(3, 3);
        let out = phi_dense_block(&m, 1.0, &b, 2, Structure::None).unwrap();
        assert!((out[0].clone() - DMatrix::identity(3, 3)).norm() <= 1e-14);
        assert!((out[1].clone() - DMatrix::identity(3, 3)).norm() <= 1e-14);
        assert!((out[2].clone() - DMatrix::identity(3, 3) * 0.5).norm() <= 1e-14);
    }

    #[test]
    fn dense_block_diagonal() {
        let m = dmatrix![1.0, 0.0; 0.0, -1.0];
        let b = DMatrix::identity(2, 2);
        let out = phi_dense_block(&m, 1.0, &b, 1, Structure::Diagonal).unwrap();
        assert_relative_eq!(out[1][(0, 0)], 1.0f64.exp() - 1.0, max_relative = 1e-13);
        assert_relative_eq!(
            out[1][(1, 1)],
            1.0 - (-1.0f64).exp(),
            max_relative = 1e-13
        );
    }

    #[test]
    fn dense_block_recursion_via_linear_solve() {
        // phi_{k+1}(M) e1 = M^{-1} (phi_k(M) - I/k!) e1, oracle by LU solve
        let m = dmatrix![
            0.3, -0.2, 0.1, 0.0, 0.05;
            0.1, 0.4, -0.3, 0.2, 0.0;
            0.0, 0.1, -0.5, 0.1, 0.2;
            0.2, 0.0, 0.1, 0.3, -0.1;
            -0.1, 0.2, 0.0, 0.1, 0.25
        ];
        let mut e1 = DMatrix::zeros(5, 1);
        e1[(0, 0)] = 1.0;
        let out = phi_dense_block(&m, 1.0, &e1, 3, Structure::None).unwrap();
        for k in 0..3usize {
            let rhs = &out[k] - &e1 * (1.0 / factorial(k));
            let oracle = m.clone().lu().solve(&rhs).unwrap();
            assert!(
                (&out[k + 1] - &oracle).norm() <= 1e-11 * oracle.norm().max(1.0),
                "recursion failed at k={k}"
            );
        }
    }

    #[test]
    fn symmetric_path_matches_augmented() {
        let mut state = 123456789u64;
        let mut rnd = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let n = 20;
        let mut m = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = rnd();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        let b = DMatrix::<f64>::from_fn(n, 2, |_, _| rnd());
        let sym = phi_dense_block(&m, 0.7, &b, 3, Structure::Symmetric).unwrap();
        let aug = phi_dense_block(&m, 0.7, &b, 3, Structure::None).unwrap();
        for k in 0..=3 {
            let scale = aug[k].norm().max(1e-30);
            assert!(
                (&sym[k] - &aug[k]).norm() / scale <= 1e-10,
                "paths disagree at k={k}"
            );
        }
    }

    #[test]
    fn cache_hit_semantics() {
        let mut cache = PhiCache::<f64>::new();
        let m = dmatrix![-1.0, 0.0; 0.0, -2.0];
        let id = DMatrix::identity(2, 2);
        let mut computes = 0;
        for _ in 0..2 {
            let _ = cache
                .get_or_compute(0.1, 7, 1, || {
                    computes += 1;
                    phi_dense_block(&m, 0.1, &id, 1, Structure::Diagonal)
                })
                .unwrap();
        }
        assert_eq!(computes, 1, "second constant-h step must reuse the cache");
        assert_eq!(cache.hits(), 1);

        // h changes: miss, recompute
        let _ = cache
            .get_or_compute(0.2, 7, 1, || {
                computes += 1;
                phi_dense_block(&m, 0.2, &id, 1, Structure::Diagonal)
            })
            .unwrap();
        assert_eq!(computes, 2);

        // operator changes: cache invalidated
        let _ = cache
            .get_or_compute(0.2, 8, 1, || {
                computes += 1;
                phi_dense_block(&m, 0.2, &id, 1, Structure::Diagonal)
            })
            .unwrap();
        assert_eq!(computes, 3);
    }
}
