//! Closed-form asymptotics, all evaluated in natural-log domain:
//! Cramér's ruin estimate, the Bahadur-Rao point estimate (plain and with a
//! shifted level / shortened horizon), the pointwise first-passage formula
//! `C(α) λ(α)^{-Θ(u)} e^{-uᾱ} / √u`, and the one-sided tail formulas whose
//! validity depends on the sign of `Λ(α)`.

use std::f64::consts::PI;

use crate::cgf::{PassageQuery, TiltProfile};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstantMode {
    /// Bahadur-Rao constant `1/(α√(2πΛ''(α)))`.
    KnownBahadurRao,
    /// Constant supplied by a Monte Carlo estimate.
    Estimated,
    /// Rate and shape only; the constant is fixed at 1.
    ShapeOnly,
}

/// The multiplicative constant of an asymptotic formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prefactor {
    Estimated(f64),
    ShapeOnly,
}

impl Prefactor {
    fn resolve(self) -> Result<(f64, ConstantMode)> {
        match self {
            Prefactor::ShapeOnly => Ok((1.0, ConstantMode::ShapeOnly)),
            Prefactor::Estimated(c) if c > 0.0 && c.is_finite() => Ok((c, ConstantMode::Estimated)),
            Prefactor::Estimated(c) => Err(Error::Domain(format!("constant must be positive, got {c}"))),
        }
    }
}

/// `prefactor · e^{theta_power} · e^{-exponent} / √sqrt_scale`, stored by parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticEstimate {
    pub log_value: f64,
    pub prefactor: f64,
    /// Log of the `λ(α)^{…}` factor.
    pub theta_power: f64,
    pub exponent: f64,
    pub sqrt_scale: f64,
    pub constant_mode: ConstantMode,
}

impl AsymptoticEstimate {
    fn new(prefactor: f64, theta_power: f64, exponent: f64, sqrt_scale: f64, constant_mode: ConstantMode) -> Self {
        let log_value = prefactor.ln() + theta_power - exponent - 0.5 * sqrt_scale.ln();
        AsymptoticEstimate {
            log_value,
            prefactor,
            theta_power,
            exponent,
            sqrt_scale,
            constant_mode,
        }
    }

    /// Linear value; underflows to zero for deep tails.
    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }
}

fn check_profile(profile: &TiltProfile) -> Result<()> {
    if !(profile.alpha > 0.0 && profile.sigma2_alpha > 0.0 && profile.rho > 0.0) {
        return Err(Error::Domain(format!(
            "profile needs α > 0, Λ''(α) > 0, ρ > 0 (got α={}, Λ''={}, ρ={})",
            profile.alpha, profile.sigma2_alpha, profile.rho
        )));
    }
    Ok(())
}

/// `1/(α√(2πΛ''(α)))`.
pub fn bahadur_rao_constant(profile: &TiltProfile) -> f64 {
    1.0 / (profile.alpha * (2.0 * PI * profile.sigma2_alpha).sqrt())
}

/// Constant of the pointwise formula in its `√u` normalisation, given the
/// limit `J(α) = lim_L λ(α)^{-L} E[(e^{αS_{L+1}} − e^{αM_L})₊]`.
///
/// Splitting the last `L + 1` steps off a path with `τ_u = k_u` gives
/// `P[τ_u = k_u] ≈ C_BR J(α) λ(α)^{-1} e^{-uᾱ} / √k_u`, and `√k_u = √(u/ρ)`,
/// so `C(α) = C_BR · J(α) · √ρ / λ(α)`. At the Cramér point of a walk with
/// `Λ'(α₀) = 1` this is just `C_BR · J(α)`.
pub fn theorem_constant(profile: &TiltProfile, j_limit: f64) -> f64 {
    bahadur_rao_constant(profile) * j_limit * profile.rho.sqrt() / profile.lambda_alpha
}

/// `P[S_n > nρ] ≈ C_BR e^{-nΛ*(ρ)} / √n`.
pub fn bahadur_rao(profile: &TiltProfile, n: u64) -> Result<AsymptoticEstimate> {
    check_profile(profile)?;
    if n == 0 {
        return Err(Error::Domain("horizon n must be at least 1".into()));
    }
    let n = n as f64;
    Ok(AsymptoticEstimate::new(
        bahadur_rao_constant(profile),
        0.0,
        n * profile.rho * profile.alpha_bar,
        n,
        ConstantMode::KnownBahadurRao,
    ))
}

/// `P[S_{n−j} > n(ρ + δ)] ≈ C_BR e^{-nΛ*(ρ)}/√n · e^{-αnδ} λ(α)^{-j}`.
///
/// Valid only while `√n|δ| ≤ 1/2` and `j ≤ √n/2`.
pub fn perturbed_petrov(profile: &TiltProfile, n: u64, delta_n: f64, j_n: u64) -> Result<AsymptoticEstimate> {
    let base = bahadur_rao(profile, n)?;
    let root_n = (n as f64).sqrt();
    if !delta_n.is_finite() || root_n * delta_n.abs() > 0.5 || j_n as f64 > 0.5 * root_n {
        return Err(Error::PerturbationTooLarge(format!(
            "need √n|δ| ≤ 0.5 and j ≤ √n/2; got n={n}, δ={delta_n}, j={j_n}"
        )));
    }
    let n = n as f64;
    Ok(AsymptoticEstimate::new(
        base.prefactor,
        base.theta_power - (j_n as f64) * profile.big_lambda_alpha,
        base.exponent + profile.alpha * n * delta_n,
        base.sqrt_scale,
        base.constant_mode,
    ))
}

/// `P[τ_u = ⌊k_u⌋] ≈ C(α) λ(α)^{-Θ(u)} e^{-uᾱ} / √u`.
pub fn pointwise_passage(profile: &TiltProfile, query: &PassageQuery, c_alpha: Prefactor) -> Result<AsymptoticEstimate> {
    check_profile(profile)?;
    let (c, mode) = c_alpha.resolve()?;
    Ok(AsymptoticEstimate::new(
        c,
        -query.theta_u * profile.big_lambda_alpha,
        query.u * profile.alpha_bar,
        query.u,
        mode,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailSide {
    /// `P[τ_u ≤ k_u]`, requires `Λ(α) > 0`.
    AtMost,
    /// `P[k_u < τ_u < ∞]`, requires `Λ(α) < 0`.
    GreaterThan,
}

/// One-sided tails:
/// `P[τ_u ≤ k_u] ≈ C₁ λ(α)^{-Θ} e^{-uᾱ}/√u` when `Λ(α) > 0`, and
/// `P[k_u < τ_u < ∞] ≈ C₂ λ(α)^{1-Θ} e^{-uᾱ}/√u` when `Λ(α) < 0`.
pub fn lalley_tail(
    profile: &TiltProfile,
    query: &PassageQuery,
    side: TailSide,
    c_const: Prefactor,
) -> Result<AsymptoticEstimate> {
    check_profile(profile)?;
    let big_lambda = profile.big_lambda_alpha;
    let lambda_power = match side {
        TailSide::AtMost if big_lambda > 0.0 => -query.theta_u,
        TailSide::GreaterThan if big_lambda < 0.0 => 1.0 - query.theta_u,
        _ => {
            return Err(Error::Regime(format!(
                "{side:?} tail needs Λ(α) {} 0, but Λ(α) = {big_lambda}",
                if side == TailSide::AtMost { ">" } else { "<" }
            )))
        }
    };
    let (c, mode) = c_const.resolve()?;
    Ok(AsymptoticEstimate::new(
        c,
        lambda_power * big_lambda,
        query.u * profile.alpha_bar,
        query.u,
        mode,
    ))
}

/// `P[τ_u < ∞] ≈ C e^{-α₀u}`; no square-root correction.
pub fn cramer_ruin(profile: &TiltProfile, u: f64, c_const: Prefactor) -> Result<AsymptoticEstimate> {
    if !(u.is_finite() && u > 0.0) {
        return Err(Error::Domain(format!("boundary level must be positive, got {u}")));
    }
    if !(profile.alpha_zero > 0.0) {
        return Err(Error::NoRoot("Cramér root unavailable".into()));
    }
    let (c, mode) = c_const.resolve()?;
    Ok(AsymptoticEstimate::new(c, 0.0, profile.alpha_zero * u, 1.0, mode))
}
