//! Random linearizable systems, built backwards from a chosen reduction.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::detector::reconstruct_quadratic;
use crate::error::{Error, Result};
use crate::model::QdeSystem;

pub const MIN_SYNTH_DIM: usize = 1;
pub const MAX_SYNTH_DIM: usize = 8;
const EIGENVALUE_RANGE: f64 = 3.0;
const W_RANGE: f64 = 2.0;

/// A synthesized system with the reduction it was built from.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub system: QdeSystem,
    /// Eigenvalues `s_k` of `V` (and `Vᵀ`).
    pub spectrum: Vec<f64>,
    /// Columns are the eigenvectors `r_k` of `Vᵀ`.
    pub eigenbasis: DMatrix<f64>,
    /// Zero-based indices `(j, m)`, `j ≤ m`, of the pair forming `B`.
    pub pair: (usize, usize),
    pub b: DMatrix<f64>,
    pub lambda: f64,
    pub w: DVector<f64>,
    pub m: DMatrix<f64>,
}

fn check_dim(dim: usize) -> Result<()> {
    if (MIN_SYNTH_DIM..=MAX_SYNTH_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(Error::Config(format!("synthesis dimension must be in [{MIN_SYNTH_DIM}, {MAX_SYNTH_DIM}], got {dim}")))
    }
}

/// Orthogonal factor of a random matrix with its columns rescaled into
/// `[0.5, 1.5]`; condition number at most 3.
fn random_basis(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    loop {
        let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let (q, r) = g.qr().unpack();
        if r.diagonal().iter().all(|d| d.abs() > 1e-3) {
            let scales = DVector::from_fn(n, |_, _| rng.random_range(0.5..1.5));
            return q * DMatrix::from_diagonal(&scales);
        }
    }
}

/// Builds the system from an explicit spectrum, eigenbasis of `Vᵀ`, pair and
/// `w`.
pub fn synthesize_from(
    spectrum: &[f64],
    eigenbasis: &DMatrix<f64>,
    pair: (usize, usize),
    w: &DVector<f64>,
) -> Result<Synthesis> {
    let n = spectrum.len();
    check_dim(n)?;
    let (j, m) = pair;
    if j >= n || m >= n || eigenbasis.shape() != (n, n) || w.len() != n {
        return Err(Error::Config("inconsistent synthesis inputs".into()));
    }
    let inv = eigenbasis
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Config("eigenbasis is singular".into()))?;
    let s = DMatrix::from_diagonal(&DVector::from_column_slice(spectrum));
    // Vᵀ = R S R⁻¹.
    let v = (eigenbasis * s * inv).transpose();
    let (rj, rm) = (eigenbasis.column(j), eigenbasis.column(m));
    let b = (rj * rm.transpose() + rm * rj.transpose()) * 0.5;
    let lambda = spectrum[j] + spectrum[m];
    let mm = &v - DMatrix::identity(n, n) * lambda;
    let system = reconstruct_quadratic(&b, lambda, w, &mm)?;
    Ok(Synthesis {
        system,
        spectrum: spectrum.to_vec(),
        eigenbasis: eigenbasis.clone(),
        pair,
        b,
        lambda,
        w: w.clone(),
        m: mm,
    })
}

fn draw(rng: &mut ChaCha8Rng, dim: usize) -> (Vec<f64>, DMatrix<f64>, (usize, usize), DVector<f64>) {
    let spectrum: Vec<f64> = (0..dim).map(|_| rng.random_range(-EIGENVALUE_RANGE..EIGENVALUE_RANGE)).collect();
    let basis = random_basis(rng, dim);
    let a = rng.random_range(0..dim);
    let b = rng.random_range(0..dim);
    let w = DVector::from_fn(dim, |_, _| rng.random_range(-W_RANGE..W_RANGE));
    (spectrum, basis, (a.min(b), a.max(b)), w)
}

/// A linearizable system determined by `seed` and `dim`.
pub fn synthesize(seed: u64, dim: usize) -> Result<Synthesis> {
    check_dim(dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (spectrum, basis, pair, w) = draw(&mut rng, dim);
    let name = format!("synth-{seed}-{dim}");
    let mut out = synthesize_from(&spectrum, &basis, pair, &w)?;
    out.system = out.system.with_name(name);
    Ok(out)
}

/// Like [`synthesize`], but with one eigenvalue of `V` moved onto
/// `λ = s_j + s_m` so that `M = V − λI` is singular. Needs `dim ≥ 2`.
pub fn synthesize_singular(seed: u64, dim: usize) -> Result<Synthesis> {
    check_dim(dim)?;
    if dim < 2 {
        return Err(Error::Config("a singular M needs dim ≥ 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut spectrum, basis, _, w) = draw(&mut rng, dim);
    // Pair (0, 0) with s_1 = 2 s_0 keeps the pair away from the moved index.
    spectrum[0] = rng.random_range(0.5..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    spectrum[1] = 2.0 * spectrum[0];
    let name = format!("synth-singular-{seed}-{dim}");
    let mut out = synthesize_from(&spectrum, &basis, (0, 0), &w)?;
    out.system = out.system.with_name(name);
    Ok(out)
}
