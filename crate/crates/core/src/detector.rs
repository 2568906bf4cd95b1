//! Matching candidate eigenmatrices against the quadratic kernels.
//!
//! A symmetric eigenmatrix `B` (with `VᵀB + BV = λB`) linearizes the system
//! when some vector `w` satisfies, for every `i`,
//!
//! ```text
//! A_i = w_i B − B w e_iᵀ − e_i wᵀ B
//! ```
//!
//! This splits into the proportionality test on the `(n−1)×(n−1)` minors and
//! the column test on `A_i e_i`. Degenerate eigenvalues give a subspace of
//! candidates; there the condition is bilinear in the combination
//! coefficients and `w`, and is solved by alternating least squares.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{canonicalize, lstsq};
use crate::model::QdeSystem;
use crate::spectral::{
    self, eigenmatrix_residual, is_eigenmatrix, rayleigh_lambda, CandidateSubspace,
    SpectralAnalysis, TOL_EIG,
};

/// Relative tolerance for matching quadratic kernels.
pub const TOL_MATCH: f64 = 1e-8;
/// Seed used by [`detect`] for the degenerate-subspace search.
pub const DEFAULT_SEED: u64 = 0x5eed_0b7a;
/// Random starts per degenerate subspace.
pub const N_STARTS: usize = 16;
const MAX_ALTERNATIONS: usize = 200;
const IMPROVEMENT_TOL: f64 = 1e-14;
const POLISH_STEPS: usize = 20;

/// A verified linearization `y = x / (xᵀBx)`, `ẏ = M y + w`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearReduction {
    /// Symmetric, canonically scaled.
    pub b: DMatrix<f64>,
    pub lambda: f64,
    pub w: DVector<f64>,
    /// `V − λI`.
    pub m: DMatrix<f64>,
    pub residuals: Residuals,
}

/// Relative residuals of a reduction against its system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    /// `‖VᵀB + BV − λB‖_F / (max(‖V‖_F, 1)·‖B‖_F)`
    pub eigenmatrix: f64,
    /// `‖(A_i − w_iB + Bwe_iᵀ + e_iwᵀB)_i‖ / (1 + ‖A‖)`
    pub quadratic: f64,
}

impl Residuals {
    pub fn passes(&self) -> bool {
        self.eigenmatrix <= TOL_EIG && self.quadratic <= TOL_MATCH
    }
}

/// Why a candidate was rejected. Indices are zero-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CheckFailure {
    Proportionality { index: usize, residual: f64 },
    Column { index: usize, residual: f64 },
}

/// `w_i B − B w e_iᵀ − e_i wᵀ B`.
pub fn quadratic_kernel(b: &DMatrix<f64>, w: &DVector<f64>, i: usize) -> DMatrix<f64> {
    let u = b * w;
    let mut k = b * w[i];
    for r in 0..b.nrows() {
        k[(r, i)] -= u[r];
        k[(i, r)] -= u[r];
    }
    k
}

fn stacked_kernels(b: &DMatrix<f64>, w: &DVector<f64>) -> DVector<f64> {
    let n = b.nrows();
    let mut out = DVector::zeros(n * n * n);
    for i in 0..n {
        let k = quadratic_kernel(b, w, i);
        out.rows_mut(i * n * n, n * n).copy_from_slice(k.as_slice());
    }
    out
}

fn stacked_target(system: &QdeSystem) -> DVector<f64> {
    let n = system.dim();
    let mut out = DVector::zeros(n * n * n);
    for (i, a) in system.quadratic_kernels().iter().enumerate() {
        out.rows_mut(i * n * n, n * n).copy_from_slice(a.as_slice());
    }
    out
}

fn unit(n: usize, l: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[l] = 1.0;
    e
}

/// Columns: stacked kernels of `B` against each unit `w`.
fn w_design(b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = b.nrows();
    let cols: Vec<_> = (0..n).map(|l| stacked_kernels(b, &unit(n, l))).collect();
    DMatrix::from_columns(&cols)
}

fn c_design(basis: &[DMatrix<f64>], w: &DVector<f64>) -> DMatrix<f64> {
    let cols: Vec<_> = basis.iter().map(|p| stacked_kernels(p, w)).collect();
    DMatrix::from_columns(&cols)
}

fn combine(basis: &[DMatrix<f64>], c: &DVector<f64>) -> DMatrix<f64> {
    let n = basis[0].nrows();
    basis
        .iter()
        .zip(c.iter())
        .fold(DMatrix::zeros(n, n), |acc, (p, ck)| acc + p * *ck)
}

/// Residuals of `(B, λ, w)` against `system`.
pub fn verify(system: &QdeSystem, b: &DMatrix<f64>, lambda: f64, w: &DVector<f64>) -> Residuals {
    let v = system.linear();
    let eigen = eigenmatrix_residual(v, b, lambda) / (v.norm().max(1.0) * b.norm());
    let mismatch: f64 = system
        .quadratic_kernels()
        .iter()
        .enumerate()
        .map(|(i, a)| (a - quadratic_kernel(b, w, i)).norm_squared())
        .sum::<f64>()
        .sqrt();
    Residuals {
        eigenmatrix: eigen,
        quadratic: mismatch / (1.0 + system.quadratic_norm()),
    }
}

/// Canonicalizes `(B, w)`, derives λ and `M`, and keeps the result only if
/// it passes every condition.
pub fn certify(system: &QdeSystem, b: &DMatrix<f64>, w: &DVector<f64>) -> Option<LinearReduction> {
    let (b, alpha) = canonicalize(b)?;
    let w = w / alpha;
    let lambda = rayleigh_lambda(system.linear(), &b);
    let residuals = verify(system, &b, lambda, &w);
    if !residuals.passes() {
        return None;
    }
    let n = system.dim();
    let m = system.linear() - DMatrix::identity(n, n) * lambda;
    Some(LinearReduction { b, lambda, w, m, residuals })
}

fn minor(m: &DMatrix<f64>, i: usize) -> DMatrix<f64> {
    m.clone().remove_row(i).remove_column(i)
}

/// Proportionality test run in index order, stopping at the first failure.
/// Returns the partial `w` found so far (`None` = undetermined) and the failure.
pub fn proportionality_scan(
    system: &QdeSystem,
    b: &DMatrix<f64>,
) -> (Vec<Option<f64>>, Option<CheckFailure>) {
    let n = system.dim();
    let zero_b = TOL_MATCH * b.norm();
    let mut w = Vec::with_capacity(n);
    for i in 0..n {
        let a_minor = minor(system.quadratic(i), i);
        let b_minor = minor(b, i);
        let a_norm = a_minor.norm();
        let tol = TOL_MATCH * (1.0 + a_norm);
        if b_minor.norm() <= zero_b {
            if a_norm <= tol {
                w.push(None);
                continue;
            }
            return (w, Some(CheckFailure::Proportionality { index: i, residual: a_norm }));
        }
        let wi = a_minor.dot(&b_minor) / b_minor.norm_squared();
        let residual = (&a_minor - &b_minor * wi).norm();
        if residual > tol {
            return (w, Some(CheckFailure::Proportionality { index: i, residual }));
        }
        w.push(Some(wi));
    }
    (w, None)
}

/// Compares every `Ã_iⁱ` with `w_i B̃ⁱ`. On success returns the partial `w`.
pub fn proportionality_check(
    system: &QdeSystem,
    b: &DMatrix<f64>,
) -> std::result::Result<Vec<Option<f64>>, CheckFailure> {
    match proportionality_scan(system, b) {
        (w, None) => Ok(w),
        (_, Some(f)) => Err(f),
    }
}

/// The column test evaluated in full, for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnEvaluation {
    /// Completed `w` (undetermined entries solved by least squares).
    pub w: DVector<f64>,
    /// `w_i B e_i − B w − (e_iᵀ B w) e_i` for each `i`.
    pub rhs: Vec<DVector<f64>>,
    /// `‖A_i e_i − rhs_i‖` for each `i`.
    pub residuals: Vec<f64>,
    pub total_residual: f64,
    pub tolerance: f64,
}

impl ColumnEvaluation {
    pub fn first_failure(&self) -> Option<usize> {
        self.residuals.iter().position(|r| *r > self.tolerance)
    }

    pub fn passed(&self) -> bool {
        self.total_residual <= self.tolerance
    }
}

fn column_rhs(b: &DMatrix<f64>, w: &DVector<f64>, i: usize) -> DVector<f64> {
    let bw = b * w;
    let mut r = b.column(i) * w[i] - &bw;
    r[i] -= bw[i];
    r
}

/// Evaluates the column conditions, solving for undetermined `w_i`.
pub fn evaluate_columns(system: &QdeSystem, b: &DMatrix<f64>, partial: &[Option<f64>]) -> ColumnEvaluation {
    let n = system.dim();
    let target = DVector::from_iterator(
        n * n,
        (0..n).flat_map(|i| system.quadratic(i).column(i).iter().cloned().collect::<Vec<_>>()),
    );
    // Column k of the design: the stacked rhs for w = e_k.
    let design = DMatrix::from_columns(
        &(0..n)
            .map(|k| {
                let e = unit(n, k);
                DVector::from_iterator(n * n, (0..n).flat_map(|i| column_rhs(b, &e, i).iter().cloned().collect::<Vec<_>>()))
            })
            .collect::<Vec<_>>(),
    );
    let mut w = DVector::from_iterator(n, partial.iter().map(|x| x.unwrap_or(0.0)));
    let free: Vec<usize> = (0..n).filter(|k| partial.get(*k).copied().flatten().is_none()).collect();
    if !free.is_empty() {
        let known = &design * &w;
        let sub = DMatrix::from_columns(&free.iter().map(|k| design.column(*k).into_owned()).collect::<Vec<_>>());
        let sol = lstsq(&sub, &(&target - known));
        for (slot, k) in free.iter().enumerate() {
            w[*k] = sol[slot];
        }
    }
    let rhs: Vec<DVector<f64>> = (0..n).map(|i| column_rhs(b, &w, i)).collect();
    let residuals: Vec<f64> = (0..n)
        .map(|i| (system.quadratic(i).column(i) - &rhs[i]).norm())
        .collect();
    let total_residual = residuals.iter().map(|r| r * r).sum::<f64>().sqrt();
    ColumnEvaluation {
        w,
        rhs,
        residuals,
        total_residual,
        tolerance: TOL_MATCH * (1.0 + system.quadratic_norm()),
    }
}

/// Checks `A_i e_i = w_i B e_i − B w − (e_iᵀ B w) e_i` for all `i`.
pub fn column_check(
    system: &QdeSystem,
    b: &DMatrix<f64>,
    partial: &[Option<f64>],
) -> std::result::Result<DVector<f64>, CheckFailure> {
    let eval = evaluate_columns(system, b, partial);
    if eval.passed() {
        Ok(eval.w)
    } else {
        let index = eval.first_failure().unwrap_or(0);
        Err(CheckFailure::Column { index, residual: eval.residuals[index] })
    }
}

/// Result of searching one candidate subspace.
#[derive(Debug, Clone, Default)]
pub struct SubspaceOutcome {
    pub reductions: Vec<LinearReduction>,
    /// Combination coefficients (w.r.t. the subspace basis) of each reduction.
    pub coefficients: Vec<DVector<f64>>,
    /// Smallest relative residual reached by any start.
    pub best_residual: f64,
}

impl SubspaceOutcome {
    fn push(&mut self, red: LinearReduction, coeffs: DVector<f64>) {
        let dup = self
            .reductions
            .iter()
            .any(|r| (&r.b - &red.b).norm() <= TOL_MATCH * (1.0 + red.b.norm()));
        if !dup {
            self.reductions.push(red);
            self.coefficients.push(coeffs);
        }
    }
}

/// All verified reductions inside one subspace, using [`DEFAULT_SEED`].
pub fn solve_subspace(system: &QdeSystem, subspace: &CandidateSubspace) -> Vec<LinearReduction> {
    solve_subspace_seeded(system, subspace, DEFAULT_SEED).reductions
}

/// Subspace search with an explicit seed for the random starts.
pub fn solve_subspace_seeded(
    system: &QdeSystem,
    subspace: &CandidateSubspace,
    seed: u64,
) -> SubspaceOutcome {
    let mut outcome = SubspaceOutcome { best_residual: f64::INFINITY, ..Default::default() };
    let k = subspace.dim();
    if k == 0 {
        return outcome;
    }
    let basis: Vec<DMatrix<f64>> = subspace.basis.iter().map(|c| c.matrix.clone()).collect();
    let scale = 1.0 + system.quadratic_norm();

    if k == 1 || system.quadratic_norm() <= TOL_MATCH {
        // Singletons, and purely linear systems where w = 0 fits every member.
        for (idx, b) in basis.iter().enumerate() {
            let w = proportionality_check(system, b).and_then(|p| column_check(system, b, &p));
            match w {
                Ok(w) => {
                    let res = verify(system, b, rayleigh_lambda(system.linear(), b), &w);
                    outcome.best_residual = outcome.best_residual.min(res.quadratic);
                    if let Some(red) = certify(system, b, &w) {
                        let (_, alpha) = canonicalize(b).expect("nonzero basis");
                        outcome.push(red, unit(k, idx) * alpha);
                    }
                }
                Err(_) => {
                    let w = evaluate_columns(system, b, &vec![None; system.dim()]).w;
                    let res = verify(system, b, subspace.lambda, &w);
                    outcome.best_residual = outcome.best_residual.min(res.quadratic);
                }
            }
        }
        return outcome;
    }

    let target = stacked_target(system);
    let mut starts = vec![linearized_start(&basis, &target)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..N_STARTS {
        let c = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
        let norm = c.norm();
        if norm > 0.0 {
            starts.push(c / norm);
        }
    }

    for start in starts {
        let (c, w) = alternate(&basis, &target, start);
        let (c, _) = polish(&basis, &target, c, w);
        let b = combine(&basis, &c);
        let Some((b_can, alpha)) = canonicalize(&b) else { continue };
        if b_can.norm() == 0.0 {
            continue;
        }
        // Recompute w against the canonical B so the pair is consistent.
        let w = lstsq(&w_design(&b_can), &target);
        let residual = (&target - stacked_kernels(&b_can, &w)).norm() / scale;
        outcome.best_residual = outcome.best_residual.min(residual);
        if let Some(red) = certify(system, &b_can, &w) {
            outcome.push(red, c * alpha);
        }
    }
    outcome
}

/// Rank-one factor of the linearized problem `Σ c_k w_l T_kl = a`.
fn linearized_start(basis: &[DMatrix<f64>], target: &DVector<f64>) -> DVector<f64> {
    let k = basis.len();
    let n = basis[0].nrows();
    let mut cols = Vec::with_capacity(k * n);
    for l in 0..n {
        for p in basis {
            cols.push(stacked_kernels(p, &unit(n, l)));
        }
    }
    let z = lstsq(&DMatrix::from_columns(&cols), target);
    let zmat = DMatrix::from_column_slice(k, n, z.as_slice());
    let svd = zmat.svd(true, false);
    let u = svd.u.expect("requested u");
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, -1.0), |best, (i, s)| if *s > best.1 { (i, *s) } else { best });
    let c = u.column(idx).into_owned();
    if c.norm() > 0.0 {
        c
    } else {
        unit(k, 0)
    }
}

fn alternate(
    basis: &[DMatrix<f64>],
    target: &DVector<f64>,
    mut c: DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let scale = 1.0 + target.norm();
    let mut w = lstsq(&w_design(&combine(basis, &c)), target);
    let mut prev = f64::INFINITY;
    for _ in 0..MAX_ALTERNATIONS {
        let h = c_design(basis, &w);
        let c_new = lstsq(&h, target);
        let s = c_new.norm();
        if s == 0.0 {
            break;
        }
        c = c_new / s;
        w = lstsq(&w_design(&combine(basis, &c)), target);
        let res = (target - stacked_kernels(&combine(basis, &c), &w)).norm();
        if prev - res < IMPROVEMENT_TOL * scale {
            break;
        }
        prev = res;
    }
    (c, w)
}

/// Gauss–Newton refinement of the joint (c, w) problem; the min-norm step
/// absorbs the scaling gauge.
fn polish(
    basis: &[DMatrix<f64>],
    target: &DVector<f64>,
    mut c: DVector<f64>,
    mut w: DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let k = c.len();
    let n = w.len();
    let mut res = (target - stacked_kernels(&combine(basis, &c), &w)).norm();
    for _ in 0..POLISH_STEPS {
        if res == 0.0 {
            break;
        }
        let jc = c_design(basis, &w);
        let jw = w_design(&combine(basis, &c));
        let mut jac = DMatrix::zeros(target.len(), k + n);
        jac.view_mut((0, 0), (target.len(), k)).copy_from(&jc);
        jac.view_mut((0, k), (target.len(), n)).copy_from(&jw);
        let r = target - stacked_kernels(&combine(basis, &c), &w);
        let step = lstsq(&jac, &r);
        let c_new = &c + step.rows(0, k);
        let w_new = &w + step.rows(k, n);
        let res_new = (target - stacked_kernels(&combine(basis, &c_new), &w_new)).norm();
        if !(res_new < res) {
            break;
        }
        let s = c_new.norm();
        c = &c_new / s;
        w = w_new * s;
        res = res_new;
    }
    (c, w)
}

/// Per-candidate verdict, mirroring the step-by-step check tables.
#[derive(Debug, Clone, Serialize)]
pub struct CandidateVerdict {
    pub label: String,
    pub subspace: usize,
    pub lambda: f64,
    #[serde(rename = "P")]
    pub matrix: Vec<Vec<f64>>,
    pub proportionality: ProportionalityVerdict,
    pub column: Option<ColumnVerdict>,
    /// Basis coefficients, for rows describing a combination within a
    /// degenerate subspace.
    pub coefficients: Option<Vec<f64>>,
    pub accepted: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProportionalityVerdict {
    pub passed: bool,
    /// `null` marks an undetermined entry; entries after a failure are absent.
    pub w: Vec<Option<f64>>,
    /// One-based index of the first violated row/column deletion.
    pub failed_at: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ColumnVerdict {
    pub passed: bool,
    pub w: Vec<f64>,
    pub rhs: Vec<Vec<f64>>,
    /// One-based index of the first violated column.
    pub failed_at: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub eigenpairs: usize,
    pub diagonalizable: bool,
    pub discarded_nonreal_pairs: usize,
    pub route_mismatch: f64,
    pub subspaces: Vec<SubspaceDiagnostic>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubspaceDiagnostic {
    pub lambda: f64,
    pub dim: usize,
    pub reductions: usize,
    pub best_residual: f64,
}

/// Full result of running the detector on a system.
#[derive(Debug, Clone)]
pub struct Detection {
    pub spectral: SpectralAnalysis,
    pub reductions: Vec<LinearReduction>,
    pub verdicts: Vec<CandidateVerdict>,
    pub diagnostics: Diagnostics,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().cloned().collect()).collect()
}

fn candidate_verdict(
    system: &QdeSystem,
    label: String,
    subspace: usize,
    lambda: f64,
    b: &DMatrix<f64>,
) -> CandidateVerdict {
    let (w, failure) = proportionality_scan(system, b);
    let prop_passed = failure.is_none();
    let failed_at = match failure {
        Some(CheckFailure::Proportionality { index, .. }) => Some(index + 1),
        _ => None,
    };
    let column = prop_passed.then(|| {
        let eval = evaluate_columns(system, b, &w);
        ColumnVerdict {
            passed: eval.passed(),
            w: eval.w.iter().cloned().collect(),
            rhs: eval.rhs.iter().map(|r| r.iter().cloned().collect()).collect(),
            failed_at: eval.first_failure().map(|i| i + 1),
        }
    });
    let accepted = column.as_ref().is_some_and(|c| c.passed);
    CandidateVerdict {
        label,
        subspace,
        lambda,
        matrix: rows(b),
        proportionality: ProportionalityVerdict { passed: prop_passed, w, failed_at },
        column,
        coefficients: None,
        accepted,
    }
}

fn lex_cmp(a: &DMatrix<f64>, b: &DMatrix<f64>) -> std::cmp::Ordering {
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            let o = a[(r, c)].total_cmp(&b[(r, c)]);
            if o.is_ne() {
                return o;
            }
        }
    }
    std::cmp::Ordering::Equal
}

/// Runs the whole detector with [`DEFAULT_SEED`].
pub fn analyze(system: &QdeSystem) -> Result<Detection> {
    analyze_seeded(system, DEFAULT_SEED)
}

pub fn analyze_seeded(system: &QdeSystem, seed: u64) -> Result<Detection> {
    let spectral = spectral::analyze(system)?;
    let mut reductions: Vec<LinearReduction> = Vec::new();
    let mut verdicts = Vec::new();
    let mut sub_diag = Vec::new();
    for (s_idx, sub) in spectral.subspaces.iter().enumerate() {
        for cand in &sub.basis {
            verdicts.push(candidate_verdict(system, cand.source.label(), s_idx, cand.lambda, &cand.matrix));
        }
        let outcome = solve_subspace_seeded(system, sub, seed.wrapping_add(s_idx as u64));
        if sub.dim() > 1 {
            let labels: Vec<String> = sub.basis.iter().map(|c| c.source.label()).collect();
            let label = format!("span({})", labels.join(","));
            for (red, coeffs) in outcome.reductions.iter().zip(&outcome.coefficients) {
                let mut v = candidate_verdict(system, label.clone(), s_idx, red.lambda, &red.b);
                v.coefficients = Some(coeffs.iter().cloned().collect());
                verdicts.push(v);
            }
        }
        sub_diag.push(SubspaceDiagnostic {
            lambda: sub.lambda,
            dim: sub.dim(),
            reductions: outcome.reductions.len(),
            best_residual: outcome.best_residual,
        });
        for red in outcome.reductions {
            let dup = reductions
                .iter()
                .any(|r| (&r.b - &red.b).norm() <= TOL_MATCH * (1.0 + red.b.norm()));
            if !dup {
                reductions.push(red);
            }
        }
    }
    reductions.sort_by(|a, b| a.lambda.total_cmp(&b.lambda).then_with(|| lex_cmp(&a.b, &b.b)));
    let diagnostics = Diagnostics {
        eigenpairs: spectral.pairs.len(),
        diagonalizable: spectral.diagonalizable,
        discarded_nonreal_pairs: spectral.enumeration.discarded_nonreal,
        route_mismatch: spectral.route_mismatch,
        subspaces: sub_diag,
    };
    Ok(Detection { spectral, reductions, verdicts, diagnostics })
}

/// All verified linear reductions of `system`, ordered by ascending λ and
/// then lexicographically by canonical `B`. Empty means the system is not
/// linearizable by this transformation.
pub fn detect(system: &QdeSystem) -> Result<Vec<LinearReduction>> {
    Ok(analyze(system)?.reductions)
}

/// Builds the quadratic system whose reduction is `(B, λ, w, M)`.
pub fn reconstruct_quadratic(
    b: &DMatrix<f64>,
    lambda: f64,
    w: &DVector<f64>,
    m: &DMatrix<f64>,
) -> Result<QdeSystem> {
    let n = b.nrows();
    let v = m + DMatrix::identity(n, n) * lambda;
    if !is_eigenmatrix(&v, b, lambda) {
        return Err(Error::NotEigenmatrix { residual: eigenmatrix_residual(&v, b, lambda) });
    }
    let quadratic = (0..n).map(|i| quadratic_kernel(b, w, i)).collect();
    QdeSystem::new(quadratic, v)
}

impl LinearReduction {
    pub fn reconstruct(&self) -> Result<QdeSystem> {
        reconstruct_quadratic(&self.b, self.lambda, &self.w, &self.m)
    }

    /// `(cB, w/c)`: the same linearization under a different scale of `B`.
    pub fn rescaled(&self, c: f64) -> LinearReduction {
        LinearReduction { b: &self.b * c, w: &self.w / c, ..self.clone() }
    }
}

/// JSON shape of one reduction in the report.
#[derive(Debug, Clone, Serialize)]
pub struct ReductionReport {
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    pub lambda: f64,
    pub w: Vec<f64>,
    #[serde(rename = "M")]
    pub m: Vec<Vec<f64>>,
    pub residuals: Residuals,
}

impl From<&LinearReduction> for ReductionReport {
    fn from(r: &LinearReduction) -> Self {
        ReductionReport {
            b: rows(&r.b),
            lambda: r.lambda,
            w: r.w.iter().cloned().collect(),
            m: rows(&r.m),
            residuals: r.residuals,
        }
    }
}

/// The `check` report.
#[derive(Debug, Clone, Serialize)]
pub struct DetectionReport {
    pub solvable: bool,
    pub reductions: Vec<ReductionReport>,
    pub candidates: Vec<CandidateVerdict>,
    pub diagnostics: Diagnostics,
}

fn fmt_num(x: f64) -> String {
    let r = if x.abs() < 5e-13 { 0.0 } else { x };
    format!("{:.6}", r).trim_end_matches('0').trim_end_matches('.').to_string()
}

fn fmt_vec(v: &[f64]) -> String {
    format!("({})", v.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(", "))
}

impl Detection {
    pub fn report(&self) -> DetectionReport {
        DetectionReport {
            solvable: !self.reductions.is_empty(),
            reductions: self.reductions.iter().map(ReductionReport::from).collect(),
            candidates: self.verdicts.clone(),
            diagnostics: self.diagnostics.clone(),
        }
    }

    /// Human-readable candidate table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<22} {:>10}  {:<34} {}\n",
            "candidate", "lambda", "proportionality", "column check"
        ));
        for v in &self.verdicts {
            let prop = if v.proportionality.passed {
                let w: Vec<String> = v
                    .proportionality
                    .w
                    .iter()
                    .map(|x| x.map(fmt_num).unwrap_or_else(|| "?".into()))
                    .collect();
                format!("ok w=({})", w.join(", "))
            } else {
                format!("x at i={}", v.proportionality.failed_at.unwrap_or(0))
            };
            let col = match &v.column {
                None => "--".to_string(),
                Some(c) => {
                    let rhs: Vec<String> = c.rhs.iter().map(|r| fmt_vec(r)).collect();
                    let mark = if c.passed { "ok" } else { "x" };
                    format!("{mark} rhs={}", rhs.join(" "))
                }
            };
            let mut label = v.label.clone();
            if let Some(cf) = &v.coefficients {
                label = format!("{label} c={}", fmt_vec(cf));
            }
            out.push_str(&format!("{:<22} {:>10}  {:<34} {}\n", label, fmt_num(v.lambda), prop, col));
        }
        out
    }
}
