//! Closed-form trajectories of linearizable quadratic systems.
//!
//! With `y = x/(xᵀBx)` obeying `ẏ = My + w`, the solution from `x0` is
//!
//! ```text
//!            e^{Mt} x0 + b0 y_p(t)
//! x(t) = ---------------------------------------------------------
//!        e^{−λt} + 2 y_p(t)ᵀ B e^{Mt} x0 + b0 y_p(t)ᵀ B y_p(t)
//! ```
//!
//! where `b0 = x0ᵀBx0` and `y_p(t) = ∫₀ᵗ e^{Ms} w ds`. On the hypersurface
//! `b0 = 0` the same expression (with the `b0` terms dropped) remains valid.

use nalgebra::{DMatrix, DVector};

use crate::detector::LinearReduction;
use crate::error::{Error, Result};
use crate::expm::expm;
use crate::trajectory::Trajectory;

/// Relative band around `xᵀBx = 0` treated as the hypersurface.
pub const TOL_SURFACE: f64 = 1e-12;
/// Relative size of the denominator below which the solution has blown up.
pub const TOL_BLOWUP: f64 = 1e-12;
const BISECTION_STEPS: usize = 20;
const BRACKET_SCAN: usize = 32;

fn quadratic_form(x: &DVector<f64>, b: &DMatrix<f64>) -> f64 {
    x.dot(&(b * x))
}

/// Whether `x` lies on `xᵀBx = 0` within the relative band.
pub fn on_hypersurface(x: &DVector<f64>, b: &DMatrix<f64>) -> bool {
    quadratic_form(x, b).abs() <= TOL_SURFACE * b.norm() * x.norm_squared()
}

/// `y = x / (xᵀBx)`.
pub fn b_transform(x: &DVector<f64>, b: &DMatrix<f64>) -> Result<DVector<f64>> {
    if on_hypersurface(x, b) {
        return Err(Error::OnHypersurface);
    }
    Ok(x / quadratic_form(x, b))
}

/// `x = y / (yᵀBy)`; the same map, since it is an involution.
pub fn inverse_b_transform(y: &DVector<f64>, b: &DMatrix<f64>) -> Result<DVector<f64>> {
    b_transform(y, b)
}

/// `(e^{Mt}, ∫₀ᵗ e^{Ms} w ds)` from the exponential of `[[M, w], [0, 0]] t`.
pub fn propagator(m: &DMatrix<f64>, w: &DVector<f64>, t: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = m.nrows();
    let mut aug = DMatrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(&(m * t));
    aug.view_mut((0, n), (n, 1)).copy_from(&(w * t));
    let e = expm(&aug)?;
    Ok((e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, 1)).column(0).into_owned()))
}

/// `y_p(t) = ∫₀ᵗ e^{Ms} w ds`; equals `(e^{Mt} − I) M⁻¹ w` for invertible `M`
/// and grows linearly along the null space of `M`.
pub fn particular_solution(m: &DMatrix<f64>, w: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    Ok(propagator(m, w, t)?.1)
}

/// Solution of `ẏ = My + w` from `y0`.
pub fn lde_solution(reduction: &LinearReduction, y0: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    let (e, yp) = propagator(&reduction.m, &reduction.w, t)?;
    Ok(e * y0 + yp)
}

/// The pieces of the closed form at one time.
#[derive(Debug, Clone)]
pub struct Terms {
    pub numerator: DVector<f64>,
    /// `e^{−λt}`
    pub decay: f64,
    /// `2 y_pᵀ B e^{Mt} x0`
    pub cross: f64,
    /// `b0 y_pᵀ B y_p`
    pub quadratic: f64,
    /// Time derivative of the denominator.
    pub slope: f64,
}

impl Terms {
    pub fn denominator(&self) -> f64 {
        self.decay + self.cross + self.quadratic
    }

    /// `|denominator| / max |term|`: near zero means the terms cancel and the
    /// state is close to a blow-up.
    pub fn conditioning(&self) -> f64 {
        let scale = self.decay.abs().max(self.cross.abs()).max(self.quadratic.abs());
        if scale == 0.0 {
            0.0
        } else {
            self.denominator().abs() / scale
        }
    }

    fn blown_up(&self) -> bool {
        self.denominator() <= 0.0 || self.conditioning() < TOL_BLOWUP
    }
}

/// A closed-form solution bound to one initial state.
///
/// The denominator equals `1` at `t = 0` and vanishes exactly where the state
/// diverges. It may cross zero or only touch it (always the latter when `B` is
/// definite), so blow-ups are searched for by sign changes and by interior
/// minima located through the analytic slope.
#[derive(Debug, Clone)]
pub struct ClosedFormSolution {
    reduction: LinearReduction,
    x0: DVector<f64>,
    b0: f64,
    y0: Option<DVector<f64>>,
}

impl ClosedFormSolution {
    pub fn new(reduction: &LinearReduction, x0: &DVector<f64>) -> Result<Self> {
        let n = reduction.b.nrows();
        if x0.len() != n {
            return Err(Error::Dimension { what: "initial state".into(), expected: n, found: x0.len() });
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "initial state".into() });
        }
        let (b0, y0) = match b_transform(x0, &reduction.b) {
            Ok(y0) => (quadratic_form(x0, &reduction.b), Some(y0)),
            Err(_) => (0.0, None),
        };
        Ok(Self { reduction: reduction.clone(), x0: x0.clone(), b0, y0 })
    }

    pub fn reduction(&self) -> &LinearReduction {
        &self.reduction
    }

    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }

    /// `x0ᵀBx0`, or 0 on the hypersurface branch.
    pub fn b0(&self) -> f64 {
        self.b0
    }

    /// `x0/(x0ᵀBx0)`; absent on the hypersurface.
    pub fn y0(&self) -> Option<&DVector<f64>> {
        self.y0.as_ref()
    }

    pub fn on_hypersurface(&self) -> bool {
        self.y0.is_none()
    }

    pub fn terms(&self, t: f64) -> Result<Terms> {
        let r = &self.reduction;
        let (e, yp) = propagator(&r.m, &r.w, t)?;
        let ex0 = e.clone() * &self.x0;
        let ew = e * &r.w;
        let byp = &r.b * &yp;
        let decay = (-r.lambda * t).exp();
        let slope = -r.lambda * decay
            + 2.0 * (ew.dot(&(&r.b * &ex0)) + byp.dot(&(&r.m * &ex0)))
            + 2.0 * self.b0 * ew.dot(&byp);
        Ok(Terms {
            numerator: &ex0 + &yp * self.b0,
            decay,
            cross: 2.0 * byp.dot(&ex0),
            quadratic: self.b0 * byp.dot(&yp),
            slope,
        })
    }

    fn blown_up_at(&self, t: f64) -> bool {
        self.terms(t).map(|tm| tm.blown_up()).unwrap_or(true)
    }

    /// Shrinks `[good, bad]` around the first blow-up.
    fn bisect(&self, mut good: f64, mut bad: f64) -> (f64, f64) {
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (good + bad);
            if self.blown_up_at(mid) {
                bad = mid;
            } else {
                good = mid;
            }
        }
        (good.min(bad), good.max(bad))
    }

    /// Interior minimum of the denominator on `[a, c]`, when its slope
    /// (taken along the direction of travel) goes from negative to positive.
    fn interior_minimum(&self, a: (f64, &Terms), c: (f64, &Terms)) -> Result<Option<(f64, f64)>> {
        let dir = (c.0 - a.0).signum();
        if !(a.1.slope * dir < 0.0 && c.1.slope * dir > 0.0) {
            return Ok(None);
        }
        let (mut lo, mut hi) = (a.0, c.0);
        loop {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if self.terms(mid)?.slope * dir < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let at = self.terms(0.5 * (lo + hi))?;
        Ok(at.blown_up().then_some((lo.min(hi), lo.max(hi))))
    }

    /// First blow-up in `(a, c]` given none up to `a`.
    fn blowup_between(&self, a: (f64, &Terms), c: (f64, &Terms)) -> Result<Option<(f64, f64)>> {
        if let Some(bracket) = self.interior_minimum(a, c)? {
            return Ok(Some(bracket));
        }
        if c.1.blown_up() {
            return Ok(Some(self.bisect(a.0, c.0)));
        }
        Ok(None)
    }

    /// State at time `t` (negative `t` runs backward).
    pub fn evaluate(&self, t: f64) -> Result<DVector<f64>> {
        let mut prev = (0.0, self.terms(0.0)?);
        for k in 1..=BRACKET_SCAN {
            let s = t * k as f64 / BRACKET_SCAN as f64;
            let cur = (s, self.terms(s)?);
            if let Some((t_lo, t_hi)) = self.blowup_between((prev.0, &prev.1), (cur.0, &cur.1))? {
                return Err(Error::Blowup { t_lo, t_hi });
            }
            prev = cur;
        }
        let d = prev.1.denominator();
        Ok(prev.1.numerator / d)
    }

    /// Samples at the given monotone times (starting at or near 0), stopping
    /// at the first blow-up, whose time is bracketed by bisection.
    pub fn sample(&self, times: &[f64]) -> Result<Trajectory> {
        let mut tr = Trajectory::new();
        let mut prev = (0.0, self.terms(0.0)?);
        for &t in times {
            let cur = (t, self.terms(t)?);
            if let Some((lo, hi)) = self.blowup_between((prev.0, &prev.1), (cur.0, &cur.1))? {
                tr.blowup_time = Some(0.5 * (lo + hi));
                break;
            }
            let d = cur.1.denominator();
            tr.push(t, cur.1.numerator.clone() / d);
            prev = cur;
        }
        Ok(tr)
    }

    /// Samples `0, dt, 2dt, ...` up to `t_end` (inclusive, within rounding).
    pub fn sample_grid(&self, t_end: f64, dt: f64) -> Result<Trajectory> {
        self.sample(&uniform_grid(t_end, dt))
    }
}

/// `0, dt, ..., t_end` with the step count rounded to the nearest integer.
/// A negative `t_end` produces a backward grid.
pub fn uniform_grid(t_end: f64, dt: f64) -> Vec<f64> {
    let steps = (t_end.abs() / dt).round() as usize;
    let sign = t_end.signum();
    (0..=steps).map(|k| sign * k as f64 * dt).collect()
}

/// One-shot evaluation of the closed form.
pub fn evaluate_solution(reduction: &LinearReduction, x0: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    ClosedFormSolution::new(reduction, x0)?.evaluate(t)
}
