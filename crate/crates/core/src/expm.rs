//! Matrix exponential by scaling and squaring with diagonal Padé approximants
//! of degree 3, 5, 7, 9 or 13, chosen from the 1-norm (Higham, 2005).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152e0;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
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

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `(U, V)` for degree `m ≤ 9`: `U` collects odd powers, `V` even powers.
fn pade_low(a: &DMatrix<f64>, coeffs: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let a2 = a * a;
    let mut odd = DMatrix::identity(n, n) * coeffs[1];
    let mut even = DMatrix::identity(n, n) * coeffs[0];
    let mut power = DMatrix::identity(n, n);
    for k in (2..coeffs.len()).step_by(2) {
        power = &power * &a2;
        even += &power * coeffs[k];
        if k + 1 < coeffs.len() {
            odd += &power * coeffs[k + 1];
        }
    }
    (a * odd, even)
}

fn pade13(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let b = &B13;
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = a * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    (u, v)
}

/// `e^{A}` for a square matrix.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { what: "matrix exponential argument".into() });
    }
    let norm = one_norm(a);
    if n == 0 || norm == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }
    let (u, v, squarings) = match THETA.iter().find(|(_, theta)| norm <= *theta) {
        Some((3, _)) => {
            let (u, v) = pade_low(a, &B3);
            (u, v, 0)
        }
        Some((5, _)) => {
            let (u, v) = pade_low(a, &B5);
            (u, v, 0)
        }
        Some((7, _)) => {
            let (u, v) = pade_low(a, &B7);
            (u, v, 0)
        }
        Some(_) => {
            let (u, v) = pade_low(a, &B9);
            (u, v, 0)
        }
        None => {
            let s = (norm / THETA_13).log2().ceil().max(0.0) as i32;
            let scaled = a / 2f64.powi(s);
            let (u, v) = pade13(&scaled);
            (u, v, s)
        }
    };
    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut x = lhs
        .lu()
        .solve(&rhs)
        .ok_or(Error::Overflow { norm })?;
    for _ in 0..squarings {
        x = &x * &x;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow { norm });
    }
    Ok(x)
}

/// `e^{M t}`.
pub fn matrix_exponential(m: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    expm(&(m * t))
}
