#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use quadlin::QdeSystem;

pub fn mat(n: usize, vals: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, vals)
}

pub fn vec(vals: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(vals)
}

/// Two-dimensional example with a single reduction at λ = −1.
pub fn planar() -> QdeSystem {
    QdeSystem::new(
        vec![mat(2, &[-1., 2., 2., 0.]), mat(2, &[1., 0., 0., 2.])],
        mat(2, &[-1., 2., 1., 0.]),
    )
    .unwrap()
}

/// Three-dimensional example whose reduction lives in a degenerate λ = 4
/// subspace.
pub fn spatial() -> QdeSystem {
    QdeSystem::new(
        vec![
            mat(3, &[1., -2., 0., -2., 7., 0., 0., 0., 0.]),
            mat(3, &[0., 0.5, 1., 0.5, -2., -3.5, 1., -3.5, 0.]),
            mat(3, &[0., 0., 0., 0., -1., -2., 0., -2., -7.]),
        ],
        DMatrix::from_diagonal(&vec(&[5., 2., -1.])),
    )
    .unwrap()
}

/// Adaptive Simpson quadrature of a vector-valued integrand.
pub fn simpson<F>(f: &F, a: f64, b: f64, tol: f64) -> DVector<f64>
where
    F: Fn(f64) -> DVector<f64>,
{
    fn step<F: Fn(f64) -> DVector<f64>>(
        f: &F,
        a: f64,
        b: f64,
        fa: &DVector<f64>,
        fm: &DVector<f64>,
        fb: &DVector<f64>,
        whole: &DVector<f64>,
        tol: f64,
        depth: usize,
    ) -> DVector<f64> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (fa + &flm * 4.0 + fm) * ((m - a) / 6.0);
        let right = (fm + &frm * 4.0 + fb) * ((b - m) / 6.0);
        let sum = &left + &right;
        let delta = &sum - whole;
        if depth == 0 || delta.amax() <= 15.0 * tol {
            return sum + delta / 15.0;
        }
        step(f, a, m, fa, &flm, fm, &left, tol / 2.0, depth - 1)
            + step(f, m, b, fm, &frm, fb, &right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let fm = f(0.5 * (a + b));
    let whole = (&fa + &fm * 4.0 + &fb) * ((b - a) / 6.0);
    step(f, a, b, &fa, &fm, &fb, &whole, tol, 24)
}
