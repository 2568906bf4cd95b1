//! Small dense helpers shared by the spectral and detector modules.
//!
//! Symmetric matrices are mapped to coordinates in the Frobenius-orthonormal
//! basis `E_pp`, `(E_pq + E_qp)/√2` (upper triangle, row-major), so Euclidean
//! geometry on coordinates equals Frobenius geometry on matrices.

use nalgebra::{DMatrix, DVector};

/// Entries below this (after scaling the largest entry to 1) are treated as zero.
const CANONICAL_ZERO: f64 = 1e-14;

pub fn sym_dim(n: usize) -> usize {
    n * (n + 1) / 2
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

pub fn sym_to_coords(b: &DMatrix<f64>) -> DVector<f64> {
    let n = b.nrows();
    let mut out = DVector::zeros(sym_dim(n));
    let mut k = 0;
    for p in 0..n {
        for q in p..n {
            out[k] = if p == q {
                b[(p, p)]
            } else {
                std::f64::consts::SQRT_2 * 0.5 * (b[(p, q)] + b[(q, p)])
            };
            k += 1;
        }
    }
    out
}

pub fn coords_to_sym(c: &DVector<f64>, n: usize) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(n, n);
    let mut k = 0;
    for p in 0..n {
        for q in p..n {
            if p == q {
                b[(p, p)] = c[k];
            } else {
                let v = c[k] / std::f64::consts::SQRT_2;
                b[(p, q)] = v;
                b[(q, p)] = v;
            }
            k += 1;
        }
    }
    b
}

/// Rescales `b` so its largest-magnitude entry is 1 and its first nonzero
/// entry (row-major) is positive. Returns the canonical matrix and the factor
/// `alpha` with `canonical = alpha * b`, or `None` for a zero matrix.
pub fn canonicalize(b: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    let max_abs = b.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if max_abs == 0.0 || !max_abs.is_finite() {
        return None;
    }
    let mut out = b / max_abs;
    for x in out.iter_mut() {
        if x.abs() < CANONICAL_ZERO {
            *x = 0.0;
        }
    }
    // nalgebra storage is column-major; walk rows explicitly.
    let mut sign = 1.0;
    'outer: for i in 0..out.nrows() {
        for j in 0..out.ncols() {
            let x = out[(i, j)];
            if x != 0.0 {
                sign = x.signum();
                break 'outer;
            }
        }
    }
    if sign < 0.0 {
        out.neg_mut();
    }
    Some((out, sign / max_abs))
}

/// Orthonormal basis (columns) of the numerical null space of `a`:
/// right singular vectors whose singular value is at most `tol`.
pub fn null_space(a: &DMatrix<f64>, tol: f64) -> Vec<DVector<f64>> {
    let ncols = a.ncols();
    if ncols == 0 {
        return Vec::new();
    }
    // Pad to square so the SVD returns a full right basis.
    let padded = if a.nrows() < ncols {
        let mut p = DMatrix::zeros(ncols, ncols);
        p.view_mut((0, 0), (a.nrows(), ncols)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s <= tol)
        .map(|(k, _)| v_t.row(k).transpose())
        .collect()
}

/// Minimum-norm least-squares solution of `a x = b`.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return DVector::zeros(a.ncols());
    }
    svd.solve(b, smax * 1e-13)
        .unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

/// Gram–Schmidt: appends to `basis` those of `vectors` that are independent
/// of what is already there (relative residual above `tol`).
pub fn extend_orthonormal(basis: &mut Vec<DVector<f64>>, v: &DVector<f64>, tol: f64) -> bool {
    let norm = v.norm();
    if norm == 0.0 {
        return false;
    }
    let mut r = v.clone();
    // Two passes for numerical orthogonality.
    for _ in 0..2 {
        for q in basis.iter() {
            let d = q.dot(&r);
            r.axpy(-d, q, 1.0);
        }
    }
    let rn = r.norm();
    if rn <= tol * norm {
        return false;
    }
    basis.push(r / rn);
    true
}

/// Sine of the largest principal angle between two spans given as
/// (not necessarily orthonormal) vector lists. Returns 1 when dimensions differ.
pub fn span_distance(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    let mut qa = Vec::new();
    for v in a {
        extend_orthonormal(&mut qa, v, 1e-10);
    }
    let mut qb = Vec::new();
    for v in b {
        extend_orthonormal(&mut qb, v, 1e-10);
    }
    if qa.len() != qb.len() {
        return 1.0;
    }
    let mut worst: f64 = 0.0;
    for v in &qb {
        let mut r = v.clone();
        for q in &qa {
            let d = q.dot(&r);
            r.axpy(-d, q, 1.0);
        }
        worst = worst.max(r.norm());
    }
    worst
}
