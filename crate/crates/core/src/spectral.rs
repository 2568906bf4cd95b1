//! Symmetric eigenmatrices of `V`: symmetric `B` with `VᵀB + BV = λB`.
//!
//! Two routes are provided. The outer-product route builds candidates
//! `P_jm = (r_j r_mᵀ + r_m r_jᵀ)/2` from eigenvectors `r_j` of `Vᵀ`, with
//! `λ = s_j + s_m`. The operator route forms the explicit matrix of
//! `B ↦ VᵀB + BV` on the `n(n+1)/2`-dimensional space of symmetric matrices and
//! extracts its real eigenspaces directly; it stays complete for defective `V`.

use nalgebra::{linalg::Schur, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{
    canonicalize, coords_to_sym, extend_orthonormal, null_space, span_distance, sym_dim,
    sym_to_coords,
};
use crate::model::QdeSystem;

/// Relative tolerance on the eigenmatrix residual (Frobenius norms).
pub const TOL_EIG: f64 = 1e-9;
/// Relative tolerance for treating two matrix-eigenvalues as degenerate.
pub const TOL_DEGEN: f64 = 1e-8;

/// Eigenvalues closer than this (relative to the matrix norm) are examined
/// together; perturbed Jordan blocks split by roughly `eps^(1/k)`.
const CLUSTER_TOL: f64 = 1e-4;
/// Singular-value threshold (relative) for numerical null spaces.
const NULL_TOL: f64 = 1e-8;
/// Imaginary parts below this (relative) are rounded away.
const REAL_TOL: f64 = 1e-10;
const SCHUR_MAX_ITER: usize = 10_000;

/// An eigenvalue of `Vᵀ` with one right eigenvector.
///
/// Real pairs carry a real unit vector whose first nonzero component is
/// positive. Complex pairs come in conjugate pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: Complex64,
    pub vector: DVector<Complex64>,
}

impl EigenPair {
    pub fn is_real(&self) -> bool {
        self.value.im == 0.0
    }

    /// Real part of the eigenvector (the whole vector for real pairs).
    pub fn real_vector(&self) -> DVector<f64> {
        self.vector.map(|z| z.re)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairPart {
    Real,
    Imag,
}

/// Where a candidate eigenmatrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateSource {
    /// Outer product of eigenpairs `j` and `m` (zero-based).
    Pair { j: usize, m: usize, part: PairPart },
    /// Basis vector of an eigenspace of the Lyapunov-type operator.
    Operator { index: usize },
}

impl CandidateSource {
    /// One-based label in the `P_jm` style.
    pub fn label(&self) -> String {
        match *self {
            CandidateSource::Pair { j, m, part } => {
                let base = if j < 9 && m < 9 {
                    format!("P_{}{}", j + 1, m + 1)
                } else {
                    format!("P_{},{}", j + 1, m + 1)
                };
                match part {
                    PairPart::Real => base,
                    PairPart::Imag => format!("{base}(im)"),
                }
            }
            CandidateSource::Operator { index } => format!("L_{}", index + 1),
        }
    }
}

/// A symmetric eigenmatrix of `V`, canonically scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateEigenmatrix {
    pub matrix: DMatrix<f64>,
    pub lambda: f64,
    pub source: CandidateSource,
}

/// Candidates sharing one matrix-eigenvalue; any nonzero combination of the
/// basis is itself an eigenmatrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSubspace {
    pub lambda: f64,
    pub basis: Vec<CandidateEigenmatrix>,
}

impl CandidateSubspace {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn coords(&self) -> Vec<DVector<f64>> {
        self.basis.iter().map(|c| sym_to_coords(&c.matrix)).collect()
    }
}

/// Outcome of the outer-product enumeration.
#[derive(Debug, Clone, Default)]
pub struct Enumeration {
    pub candidates: Vec<CandidateEigenmatrix>,
    /// Index pairs whose `s_j + s_m` is not real.
    pub discarded_nonreal: usize,
}

/// Everything the detector needs from step one.
#[derive(Debug, Clone)]
pub struct SpectralAnalysis {
    pub pairs: Vec<EigenPair>,
    pub enumeration: Enumeration,
    /// Operator-route subspaces merged with the outer-product subspaces.
    pub subspaces: Vec<CandidateSubspace>,
    /// Geometric multiplicities of `Vᵀ` add up to `n`.
    pub diagonalizable: bool,
    /// Largest principal-angle sine between the two routes' spans at equal λ
    /// (only meaningful when `diagonalizable`).
    pub route_mismatch: f64,
}

/// `‖VᵀP + PV − λP‖_F`.
pub fn eigenmatrix_residual(v: &DMatrix<f64>, p: &DMatrix<f64>, lambda: f64) -> f64 {
    (v.transpose() * p + p * v - p * lambda).norm()
}

/// Whether `P` passes the eigenmatrix test at `TOL_EIG`.
pub fn is_eigenmatrix(v: &DMatrix<f64>, p: &DMatrix<f64>, lambda: f64) -> bool {
    eigenmatrix_residual(v, p, lambda) <= TOL_EIG * v.norm().max(1.0) * p.norm()
}

/// Rayleigh quotient `⟨P, VᵀP + PV⟩ / ⟨P, P⟩`.
pub fn rayleigh_lambda(v: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let lp = v.transpose() * p + p * v;
    lp.dot(p) / p.norm_squared()
}

struct Eigenspace {
    value: Complex64,
    basis: Vec<DVector<Complex64>>,
}

fn schur_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER).ok_or_else(|| {
        Error::EigenSolver(format!(
            "Schur iteration did not converge for a {0}x{0} matrix",
            m.nrows()
        ))
    })?;
    Ok(schur.complex_eigenvalues().iter().cloned().collect())
}

/// Single-linkage clusters of points closer than `tol`.
fn cluster(values: &[Complex64], tol: f64) -> Vec<Vec<Complex64>> {
    let n = values.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn find(label: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while label[r] != r {
            r = label[r];
        }
        label[i] = r;
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (values[i] - values[j]).norm() <= tol {
                let (a, b) = (find(&mut label, i), find(&mut label, j));
                if a != b {
                    label[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<(usize, Vec<Complex64>)> = Vec::new();
    for i in 0..n {
        let r = find(&mut label, i);
        match groups.iter_mut().find(|(root, _)| *root == r) {
            Some((_, g)) => g.push(values[i]),
            None => groups.push((r, vec![values[i]])),
        }
    }
    groups.into_iter().map(|(_, g)| g).collect()
}

fn complex_null_space(m: &DMatrix<f64>, shift: Complex64, tol: f64) -> Vec<DVector<Complex64>> {
    let n = m.nrows();
    let mut a = m.map(|x| Complex64::new(x, 0.0));
    for i in 0..n {
        a[(i, i)] -= shift;
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s <= tol)
        .map(|(k, _)| v_t.row(k).adjoint())
        .collect()
}

fn real_null_space(m: &DMatrix<f64>, shift: f64, tol: f64) -> Vec<DVector<f64>> {
    let n = m.nrows();
    let a = m - DMatrix::identity(n, n) * shift;
    null_space(&a, tol)
}

/// Eigenspaces of a real square matrix. Complex eigenvalues are reported once
/// per conjugate pair (positive imaginary part) when `include_complex`.
fn eigenspaces(m: &DMatrix<f64>, include_complex: bool) -> Result<Vec<Eigenspace>> {
    let scale = m.norm().max(1.0);
    let values = schur_eigenvalues(m)?;
    let mut out = Vec::new();
    for group in cluster(&values, CLUSTER_TOL * scale) {
        resolve_cluster(m, &group, CLUSTER_TOL * scale, scale, include_complex, &mut out);
    }
    Ok(out)
}

fn resolve_cluster(
    m: &DMatrix<f64>,
    members: &[Complex64],
    tol: f64,
    scale: f64,
    include_complex: bool,
    out: &mut Vec<Eigenspace>,
) {
    let mean = members.iter().sum::<Complex64>() / members.len() as f64;
    let found = if mean.im.abs() <= REAL_TOL * scale {
        let basis = real_null_space(m, mean.re, NULL_TOL * scale);
        if basis.is_empty() {
            None
        } else {
            let k = basis.len() as f64;
            let value = basis.iter().map(|q| q.dot(&(m * q))).sum::<f64>() / k;
            Some(Eigenspace {
                value: Complex64::new(value, 0.0),
                basis: basis.into_iter().map(|q| q.map(|x| Complex64::new(x, 0.0))).collect(),
            })
        }
    } else if mean.im > 0.0 {
        if !include_complex {
            return;
        }
        let basis = complex_null_space(m, mean, NULL_TOL * scale);
        if basis.is_empty() {
            None
        } else {
            let mc = m.map(|x| Complex64::new(x, 0.0));
            let k = basis.len() as f64;
            let value = basis.iter().map(|q| q.dotc(&(&mc * q))).sum::<Complex64>() / k;
            Some(Eigenspace { value, basis })
        }
    } else {
        return;
    };
    match found {
        Some(space) => out.push(space),
        None if members.len() > 1 && tol > 1e-14 * scale => {
            let finer = tol * 1e-2;
            for sub in cluster(members, finer) {
                resolve_cluster(m, &sub, finer, scale, include_complex, out);
            }
        }
        None => {}
    }
}

fn normalize_real(v: &DVector<f64>) -> DVector<f64> {
    let mut r = v / v.norm();
    if let Some(first) = r.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            r.neg_mut();
        }
    }
    r
}

fn normalize_complex(v: &DVector<Complex64>) -> DVector<Complex64> {
    let r = v / Complex64::new(v.norm(), 0.0);
    let pivot = r
        .iter()
        .cloned()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or(Complex64::new(1.0, 0.0));
    let phase = pivot.conj() / pivot.norm();
    r * phase
}

/// All eigenpairs of `Vᵀ` up to geometric multiplicity, sorted by real part
/// then imaginary part.
pub fn eigendecompose_vt(system: &QdeSystem) -> Result<Vec<EigenPair>> {
    eigendecompose(&system.linear().transpose())
}

/// Eigenpairs of a general real matrix (right eigenvectors).
pub fn eigendecompose(m: &DMatrix<f64>) -> Result<Vec<EigenPair>> {
    let mut pairs = Vec::new();
    for space in eigenspaces(m, true)? {
        if space.value.im == 0.0 {
            for q in space.basis {
                let r = normalize_real(&q.map(|z| z.re));
                pairs.push(EigenPair {
                    value: space.value,
                    vector: r.map(|x| Complex64::new(x, 0.0)),
                });
            }
        } else {
            for q in space.basis {
                let r = normalize_complex(&q);
                pairs.push(EigenPair { value: space.value.conj(), vector: r.map(|z| z.conj()) });
                pairs.push(EigenPair { value: space.value, vector: r });
            }
        }
    }
    pairs.sort_by(|a, b| {
        a.value
            .re
            .total_cmp(&b.value.re)
            .then(a.value.im.total_cmp(&b.value.im))
    });
    Ok(pairs)
}

/// Outer-product candidates with diagnostics.
pub fn enumerate(pairs: &[EigenPair]) -> Enumeration {
    let mut out = Enumeration::default();
    // Per-λ orthonormal coordinates, used to drop dependent duplicates that
    // conjugate pairs produce.
    let mut spans: Vec<(f64, Vec<DVector<f64>>)> = Vec::new();
    let mut emit = |out: &mut Enumeration, p: &DMatrix<f64>, lambda: f64, source| {
        let Some((matrix, _)) = canonicalize(p) else { return };
        let coords = sym_to_coords(&matrix);
        let slot = match spans
            .iter()
            .position(|(l, _)| (l - lambda).abs() <= TOL_DEGEN * (1.0 + lambda.abs()))
        {
            Some(k) => k,
            None => {
                spans.push((lambda, Vec::new()));
                spans.len() - 1
            }
        };
        if extend_orthonormal(&mut spans[slot].1, &coords, 1e-8) {
            out.candidates.push(CandidateEigenmatrix { matrix, lambda, source });
        }
    };

    let order: Vec<(usize, usize)> = (0..pairs.len())
        .map(|j| (j, j))
        .chain((0..pairs.len()).flat_map(|j| ((j + 1)..pairs.len()).map(move |m| (j, m))))
        .collect();
    for (j, m) in order {
        let (a, b) = (&pairs[j], &pairs[m]);
        let sum = a.value + b.value;
        let mag = 1.0 + a.value.norm() + b.value.norm();
        if sum.im.abs() > REAL_TOL * mag {
            out.discarded_nonreal += 1;
            continue;
        }
        let lambda = sum.re;
        let outer = &a.vector * b.vector.transpose();
        let p = (&outer + outer.transpose()) * Complex64::new(0.5, 0.0);
        let re = p.map(|z| z.re);
        let im = p.map(|z| z.im);
        let pn = p.norm();
        if re.norm() > 1e-10 * pn {
            emit(&mut out, &re, lambda, CandidateSource::Pair { j, m, part: PairPart::Real });
        }
        if im.norm() > 1e-10 * pn {
            emit(&mut out, &im, lambda, CandidateSource::Pair { j, m, part: PairPart::Imag });
        }
    }
    out
}

/// `P_jm = (r_j r_mᵀ + r_m r_jᵀ)/2` with `λ = s_j + s_m` for every pair whose
/// sum is real; complex pairs contribute real and imaginary parts.
pub fn enumerate_candidates(pairs: &[EigenPair]) -> Vec<CandidateEigenmatrix> {
    enumerate(pairs).candidates
}

/// Merges candidates whose λ agree within `TOL_DEGEN·(1+|λ|)`.
pub fn group_degenerate(candidates: &[CandidateEigenmatrix]) -> Vec<CandidateSubspace> {
    let mut sorted: Vec<&CandidateEigenmatrix> = candidates.iter().collect();
    sorted.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let mut groups: Vec<Vec<&CandidateEigenmatrix>> = Vec::new();
    for c in sorted {
        match groups.last_mut() {
            Some(g)
                if (c.lambda - g.last().unwrap().lambda).abs()
                    <= TOL_DEGEN * (1.0 + c.lambda.abs()) =>
            {
                g.push(c)
            }
            _ => groups.push(vec![c]),
        }
    }
    groups
        .into_iter()
        .map(|g| {
            let lambda = g.iter().map(|c| c.lambda).sum::<f64>() / g.len() as f64;
            let mut ortho = Vec::new();
            let basis = g
                .into_iter()
                .filter(|c| extend_orthonormal(&mut ortho, &sym_to_coords(&c.matrix), 1e-8))
                .cloned()
                .collect();
            CandidateSubspace { lambda, basis }
        })
        .collect()
}

/// Matrix of `B ↦ VᵀB + BV` in the Frobenius-orthonormal symmetric basis.
pub fn lyapunov_operator(v: &DMatrix<f64>) -> DMatrix<f64> {
    let n = v.nrows();
    let d = sym_dim(n);
    let vt = v.transpose();
    let mut op = DMatrix::zeros(d, d);
    for k in 0..d {
        let mut e = DVector::zeros(d);
        e[k] = 1.0;
        let b = coords_to_sym(&e, n);
        let image = &vt * &b + &b * v;
        op.set_column(k, &sym_to_coords(&image));
    }
    op
}

/// Real eigenspaces of the Lyapunov-type operator, as candidate subspaces
/// sorted by ascending λ.
pub fn lyapunov_eigenmatrices(system: &QdeSystem) -> Result<Vec<CandidateSubspace>> {
    let v = system.linear();
    let n = system.dim();
    let op = lyapunov_operator(v);
    let mut index = 0;
    let mut subspaces = Vec::new();
    for space in eigenspaces(&op, false)? {
        let mut basis = Vec::new();
        for q in &space.basis {
            let coords = q.map(|z| z.re);
            let Some((matrix, _)) = canonicalize(&coords_to_sym(&coords, n)) else {
                continue;
            };
            if is_eigenmatrix(v, &matrix, space.value.re) {
                basis.push(CandidateEigenmatrix {
                    matrix,
                    lambda: space.value.re,
                    source: CandidateSource::Operator { index },
                });
                index += 1;
            }
        }
        if !basis.is_empty() {
            subspaces.push(CandidateSubspace { lambda: space.value.re, basis });
        }
    }
    subspaces.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    Ok(subspaces)
}

/// Runs both routes and merges them: outer-product candidates keep their
/// labels, operator directions outside their span are appended.
pub fn analyze(system: &QdeSystem) -> Result<SpectralAnalysis> {
    let v = system.linear();
    let pairs = eigendecompose_vt(system)?;
    let diagonalizable = pairs.len() == system.dim();
    let mut enumeration = enumerate(&pairs);
    enumeration.candidates.retain(|c| is_eigenmatrix(v, &c.matrix, c.lambda));
    let mut subspaces = group_degenerate(&enumeration.candidates);
    let operator = lyapunov_eigenmatrices(system)?;

    let mut route_mismatch: f64 = 0.0;
    for op_space in operator {
        let lambda = op_space.lambda;
        let slot = subspaces
            .iter()
            .position(|s| (s.lambda - lambda).abs() <= TOL_DEGEN * (1.0 + lambda.abs()));
        match slot {
            Some(k) => {
                let target = &mut subspaces[k];
                route_mismatch = route_mismatch.max(span_distance(&target.coords(), &op_space.coords()));
                let mut ortho = Vec::new();
                for c in target.coords() {
                    extend_orthonormal(&mut ortho, &c, 1e-8);
                }
                for member in op_space.basis {
                    if extend_orthonormal(&mut ortho, &sym_to_coords(&member.matrix), 1e-6) {
                        target.basis.push(member);
                    }
                }
            }
            None => {
                route_mismatch = 1.0;
                subspaces.push(op_space);
            }
        }
    }
    subspaces.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    Ok(SpectralAnalysis { pairs, enumeration, subspaces, diagonalizable, route_mismatch })
}
