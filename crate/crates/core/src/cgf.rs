//! Scalar parameters of the first-passage asymptotics derived from the CGF:
//! the tilt `α` solving `Λ'(α) = ρ`, the Cramér root `α₀`, `α_min = argmin Λ`,
//! the rate `ᾱ = α − Λ(α)/Λ'(α) = Λ*(ρ)/ρ`, and the Legendre transform `Λ*`.

use crate::error::{Error, Result};
use crate::models::IncrementModel;

/// Tolerance on `|Λ'(α) − ρ|`, relative to `max(1, |ρ|)`.
pub const SLOPE_TOL: f64 = 1e-10;
/// Tolerance on `|Λ(α₀)|`.
pub const ROOT_TOL: f64 = 1e-12;
/// Distance from a finite `s_max` at which brackets stop.
const EDGE: f64 = 1e-12;
const MAX_ITER: usize = 300;
const MAX_EXPANSIONS: usize = 80;
/// `k_u` closer than this to an integer is snapped onto it.
pub const SNAP_TOL: f64 = 1e-9;

/// Safeguarded Newton iteration for an increasing function on `[lo, hi]`
/// with `f(lo) < 0 < f(hi)`. Falls back to bisection whenever the Newton
/// step leaves the current bracket.
fn bracketed_newton<F>(mut lo: f64, mut hi: f64, tol: f64, mut eval: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    let mut x = 0.5 * (lo + hi);
    let mut best = (f64::INFINITY, x);
    for _ in 0..MAX_ITER {
        let (fx, dfx) = eval(x)?;
        if fx.abs() < best.0 {
            best = (fx.abs(), x);
        }
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let width = hi - lo;
        if width <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        let newton = x - fx / dfx;
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next == x {
            break;
        }
        // converged well below tolerance and step stalled
        if fx.abs() <= tol * 1e-4 && (next - x).abs() <= 8.0 * f64::EPSILON * x.abs() {
            x = next;
            break;
        }
        x = next;
    }
    let (fx, _) = eval(x)?;
    let (err, root) = if fx.abs() <= best.0 { (fx.abs(), x) } else { best };
    if err <= tol {
        Ok(root)
    } else {
        Err(Error::Divergence(format!(
            "root search stalled at {root} with residual {err:e} (tolerance {tol:e})"
        )))
    }
}

/// Supremum of the attainable slopes `Λ'(s)` over the MGF domain.
pub fn slope_supremum(model: &IncrementModel) -> f64 {
    let s_max = model.s_max();
    if s_max.is_finite() {
        // all shipped families with finite s_max blow up at the edge
        model
            .cgf_derivatives(s_max * (1.0 - EDGE))
            .map(|d| d.0)
            .unwrap_or(f64::INFINITY)
    } else {
        f64::INFINITY
    }
}

/// Numerical inverse of `Λ'` by bracketing and safeguarded Newton steps.
pub fn solve_slope_numeric(model: &IncrementModel, target: f64) -> Result<f64> {
    if !target.is_finite() {
        return Err(Error::Domain(format!("slope {target} is not finite")));
    }
    let tol = SLOPE_TOL * target.abs().max(1.0);
    let slope = |s: f64| model.cgf_derivatives(s).map(|(d1, d2)| (d1 - target, d2));
    let mean = model.mean();
    if target == mean {
        return Ok(0.0);
    }
    let s_max = model.s_max();
    let (lo, hi) = if target > mean {
        let hi = if s_max.is_finite() {
            let hi = s_max * (1.0 - EDGE);
            if slope(hi)?.0 < 0.0 {
                return Err(Error::NoRoot(format!(
                    "slope {target} exceeds the attainable supremum {}",
                    slope_supremum(model)
                )));
            }
            hi
        } else {
            let mut hi = 1.0;
            let mut n = 0;
            while slope(hi)?.0 < 0.0 {
                hi *= 2.0;
                n += 1;
                if n > MAX_EXPANSIONS {
                    return Err(Error::Divergence(format!(
                        "no upper bracket for slope {target}"
                    )));
                }
            }
            hi
        };
        (0.0, hi)
    } else {
        if target <= model.slope_infimum() {
            return Err(Error::NoRoot(format!(
                "slope {target} is below the attainable infimum {}",
                model.slope_infimum()
            )));
        }
        let mut lo = -1.0;
        let mut n = 0;
        while slope(lo)?.0 > 0.0 {
            lo *= 2.0;
            n += 1;
            if n > MAX_EXPANSIONS {
                return Err(Error::Divergence(format!("no lower bracket for slope {target}")));
            }
        }
        (lo, 0.0)
    };
    bracketed_newton(lo, hi, tol, slope)
}

/// Inverse of `Λ'`, closed form when the family has one.
fn solve_slope(model: &IncrementModel, target: f64) -> Result<f64> {
    match model.slope_inverse(target) {
        Some(s) if s < model.s_max() => Ok(s),
        _ => solve_slope_numeric(model, target),
    }
}

/// Tilt `α` with `Λ'(α) = ρ`.
pub fn solve_alpha(model: &IncrementModel, rho: f64) -> Result<f64> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::NoRoot(format!("target slope must be positive, got {rho}")));
    }
    let sup = slope_supremum(model);
    if rho >= sup {
        return Err(Error::NoRoot(format!(
            "slope {rho} is not below the attainable supremum {sup}"
        )));
    }
    solve_slope(model, rho)
}

/// `α_min = argmin Λ`, i.e. `Λ'(α_min) = 0`.
pub fn solve_alpha_min(model: &IncrementModel) -> Result<f64> {
    solve_slope(model, 0.0)
}

/// Numerical positive root of `Λ`, bracketed in `(α_min, s_max)`.
pub fn solve_alpha_zero_numeric(model: &IncrementModel) -> Result<f64> {
    let alpha_min = solve_alpha_min(model)?;
    let cgf = |s: f64| -> Result<(f64, f64)> { Ok((model.cgf(s)?, model.cgf_derivatives(s)?.0)) };
    let s_max = model.s_max();
    let hi = if s_max.is_finite() {
        let hi = s_max * (1.0 - EDGE);
        if cgf(hi)?.0 <= 0.0 {
            return Err(Error::NoRoot(format!(
                "Λ stays negative on (0, {s_max}); attainable slope supremum {}",
                slope_supremum(model)
            )));
        }
        hi
    } else {
        let mut step = 1.0;
        let mut n = 0;
        while cgf(alpha_min + step)?.0 <= 0.0 {
            step *= 2.0;
            n += 1;
            if n > MAX_EXPANSIONS {
                return Err(Error::NoRoot("Λ stays negative on the search range".into()));
            }
        }
        alpha_min + step
    };
    bracketed_newton(alpha_min, hi, ROOT_TOL, cgf)
}

/// Cramér root `α₀ > 0` with `Λ(α₀) = 0`.
pub fn solve_alpha_zero(model: &IncrementModel) -> Result<f64> {
    match model.cgf_root() {
        Some(root) => Ok(root),
        None => solve_alpha_zero_numeric(model),
    }
}

/// Legendre transform `Λ*(x) = sup_s {sx − Λ(s)}`, evaluated through the
/// stationarity point `Λ'(s) = x`.
pub fn legendre(model: &IncrementModel, x: f64) -> Result<f64> {
    if x == model.mean() {
        return Ok(0.0);
    }
    if !(x > model.slope_infimum() && x < slope_supremum(model)) {
        return Err(Error::Domain(format!(
            "{x} is outside the attainable slope range ({}, {})",
            model.slope_infimum(),
            slope_supremum(model)
        )));
    }
    let s = solve_slope(model, x).map_err(|e| match e {
        Error::NoRoot(msg) => Error::Domain(msg),
        other => other,
    })?;
    Ok(s * x - model.cgf(s)?)
}

/// x-intercept of the tangent to `Λ` at `alpha`: `α − Λ(α)/Λ'(α)`.
pub fn tangent_intercept(model: &IncrementModel, alpha: f64) -> Result<f64> {
    let big_lambda = model.cgf(alpha)?;
    let (slope, _) = model.cgf_derivatives(alpha)?;
    Ok(alpha - big_lambda / slope)
}

/// Every scalar the asymptotics need for one model and one slope `ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltProfile {
    pub alpha: f64,
    pub rho: f64,
    /// `λ(α)`
    pub lambda_alpha: f64,
    /// `Λ(α)`
    pub big_lambda_alpha: f64,
    /// `Λ''(α)`
    pub sigma2_alpha: f64,
    pub alpha_bar: f64,
    pub alpha_zero: f64,
    pub alpha_min: f64,
    pub s_max: f64,
    /// Room left in the MGF domain beyond `α`.
    pub xi_eff: f64,
}

pub fn build_profile(model: &IncrementModel, rho: f64) -> Result<TiltProfile> {
    let alpha = solve_alpha(model, rho)?;
    let big_lambda_alpha = model.cgf(alpha)?;
    let (_, sigma2_alpha) = model.cgf_derivatives(alpha)?;
    let alpha_bar = tangent_intercept(model, alpha)?;

    let via_legendre = legendre(model, rho)? / rho;
    if (via_legendre - alpha_bar).abs() > 1e-9 * alpha_bar.abs().max(1e-300) {
        return Err(Error::Divergence(format!(
            "rate mismatch: tangent {alpha_bar} vs Legendre {via_legendre}"
        )));
    }

    let alpha_min = solve_alpha_min(model)?;
    let alpha_zero = solve_alpha_zero(model)?;
    let s_max = model.s_max();
    Ok(TiltProfile {
        alpha,
        rho,
        lambda_alpha: big_lambda_alpha.exp(),
        big_lambda_alpha,
        sigma2_alpha,
        alpha_bar,
        alpha_zero,
        alpha_min,
        s_max,
        xi_eff: s_max - alpha,
    })
}

/// Boundary level `u` with `k_u = u/ρ` split into floor and fractional part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassageQuery {
    pub u: f64,
    pub k_u: f64,
    pub k_floor: u64,
    /// `Θ(u) = k_u − ⌊k_u⌋ ∈ [0, 1)`
    pub theta_u: f64,
}

/// Builds the query for level `u`. When `k_u` lies within [`SNAP_TOL`] of an
/// integer it is snapped onto that integer (and `u` onto `k_u·ρ`), so `Θ = 0`
/// there instead of a spurious `Θ ≈ 1`.
pub fn passage_query(profile: &TiltProfile, u: f64) -> Result<PassageQuery> {
    if !(u.is_finite() && u > 0.0) {
        return Err(Error::Domain(format!("boundary level must be positive, got {u}")));
    }
    let mut u = u;
    let mut k_u = u / profile.rho;
    let nearest = k_u.round();
    if (k_u - nearest).abs() < SNAP_TOL {
        k_u = nearest;
        u = nearest * profile.rho;
    }
    let floor = k_u.floor();
    if floor < 1.0 {
        return Err(Error::Domain(format!("k_u = {k_u} has floor below 1")));
    }
    Ok(PassageQuery {
        u,
        k_u,
        k_floor: floor as u64,
        theta_u: k_u - floor,
    })
}
