//! Independent numerical reference: an adaptive Dormand–Prince 5(4)
//! integrator for the raw system, comparison against the closed form, and a
//! Newton search for fixed points.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::closedform::{ClosedFormSolution, TOL_SURFACE};
use crate::detector::LinearReduction;
use crate::error::{Error, Result};
use crate::model::QdeSystem;
use crate::trajectory::Trajectory;

/// State norm beyond which an integration is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;
/// Closed-form conditioning below which a comparison window is clipped.
pub const COMPARE_CONDITIONING: f64 = 1e-3;
const NEWTON_ITERATIONS: usize = 50;
const FIXED_POINT_RESIDUAL: f64 = 1e-10;
const FIXED_POINT_MERGE: f64 = 1e-6;
const MAX_STEPS: usize = 1_000_000;

// Dormand–Prince 5(4) tableau; the nodes are unused since the field is autonomous.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Fifth-order weights minus embedded fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

/// Integration settings.
#[derive(Debug, Clone)]
pub struct IntegrationConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub t_end: f64,
    /// When set, integration stops once `xᵀBx` leaves the sign (or surface
    /// band) it started in.
    pub surface_guard: Option<DMatrix<f64>>,
}

impl IntegrationConfig {
    pub fn new(t_end: f64) -> Self {
        Self { rel_tol: 1e-10, abs_tol: 1e-12, max_step: f64::INFINITY, t_end, surface_guard: None }
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_max_step(mut self, max_step: f64) -> Self {
        self.max_step = max_step;
        self
    }

    pub fn with_surface_guard(mut self, b: DMatrix<f64>) -> Self {
        self.surface_guard = Some(b);
        self
    }

    fn validate(&self) -> Result<()> {
        let ok = self.rel_tol > 0.0
            && self.abs_tol > 0.0
            && self.max_step > 0.0
            && self.t_end.is_finite()
            && self.t_end > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "integration needs positive tolerances, max_step and t_end (got rel {}, abs {}, max_step {}, t_end {})",
                self.rel_tol, self.abs_tol, self.max_step, self.t_end
            )))
        }
    }
}

/// How an integration ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    Diverged,
    SurfaceCrossed,
}

#[derive(Debug, Clone)]
pub struct Integration {
    /// Accepted nodes; `blowup_time` is set on divergence.
    pub trajectory: Trajectory,
    pub termination: Termination,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Integration {
    pub fn diverged(&self) -> bool {
        self.termination == Termination::Diverged
    }
}

fn error_norm(err: &DVector<f64>, y: &DVector<f64>, y_new: &DVector<f64>, cfg: &IntegrationConfig) -> f64 {
    let n = err.len() as f64;
    let sum: f64 = err
        .iter()
        .zip(y.iter().zip(y_new.iter()))
        .map(|(e, (a, b))| {
            let sc = cfg.abs_tol + cfg.rel_tol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn scaled_norm(v: &DVector<f64>, y: &DVector<f64>, cfg: &IntegrationConfig) -> f64 {
    error_norm(v, y, y, cfg)
}

/// Starting step from the size of the state and of the first two derivatives.
fn initial_step<F>(f: &F, y0: &DVector<f64>, f0: &DVector<f64>, cfg: &IntegrationConfig) -> f64
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let d0 = scaled_norm(y0, y0, cfg);
    let d1 = scaled_norm(f0, y0, cfg);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(cfg.max_step).min(cfg.t_end);
    let y1 = y0 + f0 * h0;
    let f1 = f(&y1);
    let d2 = scaled_norm(&(f1 - f0), y0, cfg) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(cfg.max_step).min(cfg.t_end)
}

fn surface_sign(b: &DMatrix<f64>, x: &DVector<f64>) -> i8 {
    let q = x.dot(&(b * x));
    if q.abs() <= TOL_SURFACE * b.norm() * x.norm_squared() {
        0
    } else if q > 0.0 {
        1
    } else {
        -1
    }
}

/// Integrates `ẋ = direction · f(x)` on `[0, t_end]`; times are reported as
/// `direction · s`.
fn dopri5(system: &QdeSystem, x0: &DVector<f64>, cfg: &IntegrationConfig, direction: f64) -> Result<Integration> {
    cfg.validate()?;
    let n = system.dim();
    if x0.len() != n {
        return Err(Error::Dimension { what: "initial state".into(), expected: n, found: x0.len() });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "initial state".into() });
    }
    let f = |x: &DVector<f64>| system.rhs_unchecked(x) * direction;
    let guard = cfg.surface_guard.as_ref().map(|b| (b, surface_sign(b, x0)));

    let mut traj = Trajectory::new();
    traj.push(0.0, x0.clone());
    let mut t = 0.0;
    let mut y = x0.clone();
    let mut k1 = f(&y);
    let mut h = initial_step(&f, &y, &k1, cfg);
    let mut err_old: f64 = 1e-4;
    let mut rejected_last = false;
    let (mut accepted, mut rejected) = (0usize, 0usize);
    let mut termination = Termination::Completed;

    while t < cfg.t_end {
        if accepted + rejected >= MAX_STEPS {
            return Err(Error::StepUnderflow { t: direction * t, state: y.as_slice().to_vec() });
        }
        if h < 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t: direction * t, state: y.as_slice().to_vec() });
        }
        let last = t + h >= cfg.t_end;
        if last {
            h = cfg.t_end - t;
        }
        let k2 = f(&(&y + &k1 * (h * A21)));
        let k3 = f(&(&y + (&k1 * A31 + &k2 * A32) * h));
        let k4 = f(&(&y + (&k1 * A41 + &k2 * A42 + &k3 * A43) * h));
        let k5 = f(&(&y + (&k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * h));
        let k6 = f(&(&y + (&k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * h));
        let y_new = &y + (&k1 * A71 + &k3 * A73 + &k4 * A74 + &k5 * A75 + &k6 * A76) * h;
        let k7 = f(&y_new);
        let err_vec = (&k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * h;
        let err = error_norm(&err_vec, &y, &y_new, cfg);

        if !err.is_finite() || !y_new.iter().all(|v| v.is_finite()) {
            // Overshot into a region where the state overflows.
            if y.norm() > DIVERGENCE_NORM.sqrt() {
                termination = Termination::Diverged;
                break;
            }
            rejected += 1;
            rejected_last = true;
            h *= MIN_FACTOR;
            continue;
        }

        let fac_err = err.powf(0.2 - 0.75 * BETA);
        if err <= 1.0 {
            let factor = (SAFETY / (fac_err * err_old.powf(-BETA))).clamp(MIN_FACTOR, MAX_FACTOR);
            let mut h_new = h * if rejected_last { factor.min(1.0) } else { factor };
            h_new = h_new.min(cfg.max_step);
            err_old = err.max(1e-4);
            t = if last { cfg.t_end } else { t + h };
            y = y_new;
            k1 = k7;
            accepted += 1;
            rejected_last = false;
            traj.push(direction * t, y.clone());
            if y.norm() > DIVERGENCE_NORM {
                termination = Termination::Diverged;
                break;
            }
            if let Some((b, s0)) = guard {
                if surface_sign(b, &y) != s0 {
                    termination = Termination::SurfaceCrossed;
                    break;
                }
            }
            h = h_new;
        } else {
            rejected += 1;
            rejected_last = true;
            h *= (SAFETY / fac_err).clamp(MIN_FACTOR, 1.0);
        }
    }
    if termination == Termination::Diverged {
        traj.blowup_time = Some(direction * t);
    }
    Ok(Integration { trajectory: traj, termination, accepted_steps: accepted, rejected_steps: rejected })
}

/// Forward integration on `[0, t_end]`.
pub fn integrate(system: &QdeSystem, x0: &DVector<f64>, config: &IntegrationConfig) -> Result<Integration> {
    dopri5(system, x0, config, 1.0)
}

/// Backward integration on `[−t_end, 0]`; times are reported descending.
pub fn integrate_backward(system: &QdeSystem, x0: &DVector<f64>, config: &IntegrationConfig) -> Result<Integration> {
    dopri5(system, x0, config, -1.0)
}

/// Closed form against integrator at the integrator's accepted nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub max_rel_error: f64,
    pub t_window: [f64; 2],
    pub diverged: bool,
    pub blowup_time: Option<f64>,
}

/// Maximum relative deviation `‖x_num − x_cf‖ / ‖x_cf‖` over the accepted
/// steps of an integration to `t_end`.
///
/// The window ends before the first node where the closed form blows up or its
/// denominator loses all but `COMPARE_CONDITIONING` of its leading terms, or
/// where the integrator diverges.
pub fn compare(system: &QdeSystem, reduction: &LinearReduction, x0: &DVector<f64>, t_end: f64) -> Result<ErrorReport> {
    let max_step = (t_end / 50.0).max(f64::MIN_POSITIVE);
    compare_with(system, reduction, x0, &IntegrationConfig::new(t_end).with_max_step(max_step))
}

pub fn compare_with(
    system: &QdeSystem,
    reduction: &LinearReduction,
    x0: &DVector<f64>,
    config: &IntegrationConfig,
) -> Result<ErrorReport> {
    let sol = ClosedFormSolution::new(reduction, x0)?;
    if config.t_end == 0.0 {
        let x = sol.evaluate(0.0)?;
        return Ok(ErrorReport {
            max_rel_error: rel_error(x0, &x),
            t_window: [0.0, 0.0],
            diverged: false,
            blowup_time: None,
        });
    }
    let run = integrate(system, x0, config)?;
    let times = &run.trajectory.times;
    let closed = sol.sample(times)?;
    let mut max_err: f64 = 0.0;
    let mut window_end = 0.0;
    for (k, x_cf) in closed.states.iter().enumerate() {
        if sol.terms(closed.times[k])?.conditioning() < COMPARE_CONDITIONING {
            break;
        }
        let x_num = &run.trajectory.states[k];
        if x_num.norm() > DIVERGENCE_NORM {
            break;
        }
        max_err = max_err.max(rel_error(x_num, x_cf));
        window_end = closed.times[k];
    }
    Ok(ErrorReport {
        max_rel_error: max_err,
        t_window: [0.0, window_end],
        diverged: run.diverged(),
        blowup_time: closed.blowup_time.or(run.trajectory.blowup_time),
    })
}

fn rel_error(x_num: &DVector<f64>, x_ref: &DVector<f64>) -> f64 {
    (x_num - x_ref).norm() / x_ref.norm().max(1e-12)
}

/// Fixed points reached by Newton's method from an evenly spaced lattice of
/// starts in `bounds` (one `(lo, hi)` per axis, `grid` points each; a single
/// point sits at the centre). The origin is always included. Points are
/// returned in lexicographic order.
pub fn find_fixed_points(system: &QdeSystem, bounds: &[(f64, f64)], grid: usize) -> Result<Vec<DVector<f64>>> {
    let n = system.dim();
    if bounds.len() != n {
        return Err(Error::Dimension { what: "box".into(), expected: n, found: bounds.len() });
    }
    if grid == 0 {
        return Err(Error::Config("grid must be at least 1".into()));
    }
    let axis = |&(lo, hi): &(f64, f64)| -> Vec<f64> {
        if grid == 1 {
            vec![0.5 * (lo + hi)]
        } else {
            (0..grid).map(|k| lo + (hi - lo) * k as f64 / (grid - 1) as f64).collect()
        }
    };
    let axes: Vec<Vec<f64>> = bounds.iter().map(axis).collect();
    let mut found = vec![DVector::zeros(n)];
    let total = grid.pow(n as u32);
    for idx in 0..total {
        let mut rem = idx;
        let start = DVector::from_iterator(
            n,
            axes.iter().map(|a| {
                let v = a[rem % grid];
                rem /= grid;
                v
            }),
        );
        if let Some(root) = newton(system, start) {
            if found.iter().all(|p| (p - &root).norm() > FIXED_POINT_MERGE) {
                found.push(root);
            }
        }
    }
    found.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(found)
}

fn newton(system: &QdeSystem, mut x: DVector<f64>) -> Option<DVector<f64>> {
    for _ in 0..NEWTON_ITERATIONS {
        let f = system.rhs_unchecked(&x);
        if f.norm() <= FIXED_POINT_RESIDUAL {
            return Some(x);
        }
        let j = system.jacobian(&x).ok()?;
        let dx = j.lu().solve(&(-f))?;
        x += dx;
        if !x.iter().all(|v| v.is_finite()) {
            return None;
        }
    }
    (system.rhs_unchecked(&x).norm() <= FIXED_POINT_RESIDUAL).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64, v: f64) -> QdeSystem {
        QdeSystem::new(vec![DMatrix::from_element(1, 1, a)], DMatrix::from_element(1, 1, v)).unwrap()
    }

    #[test]
    fn logistic_matches_exact_solution() {
        // ẋ = x − x²: x(t) = x0 eᵗ / (1 − x0 + x0 eᵗ).
        let sys = scalar(-1.0, 1.0);
        let x0 = 0.1;
        let run = integrate(&sys, &DVector::from_element(1, x0), &IntegrationConfig::new(3.0)).unwrap();
        assert_eq!(run.termination, Termination::Completed);
        assert_eq!(*run.trajectory.times.last().unwrap(), 3.0);
        for (t, x) in run.trajectory.times.iter().zip(&run.trajectory.states) {
            let e = t.exp();
            let want = x0 * e / (1.0 - x0 + x0 * e);
            assert!((x[0] - want).abs() < 1e-9 * want, "t={t}");
        }
    }

    #[test]
    fn zero_system_is_constant() {
        let sys = QdeSystem::new(vec![DMatrix::zeros(2, 2); 2], DMatrix::zeros(2, 2)).unwrap();
        let x0 = DVector::from_vec(vec![0.3, -0.7]);
        let run = integrate(&sys, &x0, &IntegrationConfig::new(1.0)).unwrap();
        assert!(run.trajectory.states.iter().all(|x| x == &x0));
    }

    #[test]
    fn square_blows_up_at_reciprocal() {
        let sys = scalar(1.0, 0.0);
        let run = integrate(&sys, &DVector::from_element(1, 2.0), &IntegrationConfig::new(1.0)).unwrap();
        assert!(run.diverged());
        assert!((run.trajectory.blowup_time.unwrap() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn backward_reverses_time() {
        // ẋ = −x: backward from 1 reaches e at t = −1.
        let sys = scalar(0.0, -1.0);
        let run = integrate_backward(&sys, &DVector::from_element(1, 1.0), &IntegrationConfig::new(1.0)).unwrap();
        let (t, x) = run.trajectory.last().unwrap();
        assert_eq!(t, -1.0);
        assert!((x[0] - 1f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let sys = scalar(1.0, 0.0);
        let x0 = DVector::from_element(1, 1.0);
        assert!(integrate(&sys, &x0, &IntegrationConfig::new(0.0)).is_err());
        assert!(integrate(&sys, &x0, &IntegrationConfig::new(1.0).with_tolerances(0.0, 1e-12)).is_err());
    }

    #[test]
    fn surface_guard_stops_on_sign_change() {
        // Rotation ẋ₁ = −x₂, ẋ₂ = x₁ against the guard x₁x₂ = 0.
        let sys = QdeSystem::new(
            vec![DMatrix::zeros(2, 2); 2],
            DMatrix::from_row_slice(2, 2, &[0., -1., 1., 0.]),
        )
        .unwrap();
        let b = DMatrix::from_row_slice(2, 2, &[0., 0.5, 0.5, 0.]);
        let x0 = DVector::from_vec(vec![1.0, 0.5]);
        let cfg = IntegrationConfig::new(3.0).with_max_step(0.05).with_surface_guard(b);
        let run = integrate(&sys, &x0, &cfg).unwrap();
        assert_eq!(run.termination, Termination::SurfaceCrossed);
        let (t, _) = run.trajectory.last().unwrap();
        // x₁x₂ first vanishes when the angle reaches π/2, at t = π/2 − atan(1/2).
        assert!((t - (std::f64::consts::FRAC_PI_2 - 0.5f64.atan())).abs() < 0.06);
    }

    #[test]
    fn fixed_points_of_scalar_logistic() {
        let pts = find_fixed_points(&scalar(-1.0, 1.0), &[(-2.0, 2.0)], 5).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0][0], 0.0);
        assert!((pts[1][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_invertible_has_only_origin() {
        let sys = QdeSystem::new(vec![DMatrix::zeros(2, 2); 2], DMatrix::from_row_slice(2, 2, &[1., 2., 3., -1.])).unwrap();
        let pts = find_fixed_points(&sys, &[(-3.0, 3.0), (-3.0, 3.0)], 4).unwrap();
        assert_eq!(pts, vec![DVector::zeros(2)]);
    }
}
