//! Importance-sampling estimators under exponential tilting.
//!
//! A path simulated under the tilt `θ` carries the likelihood ratio
//! `exp(−θS_N + NΛ(θ))` back to the original law. Every estimator factors
//! out a deterministic reference `exp(log_ref)` that bounds its per-path
//! weights, accumulates the relative weights in `[0, 1]` (or near it), and
//! rescales at the end, so deep tails keep full precision.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cgf::{passage_query, solve_alpha, solve_alpha_min, solve_alpha_zero, TiltProfile};
use crate::error::{Error, Result};
use crate::models::{IncrementModel, TiltedSampler};
use crate::rng::{blocks, stream_rng};

/// Per-path step cap for estimators that run until crossing.
pub const STEP_CAP: u64 = 10_000_000;
pub const MIN_SAMPLES: u64 = 1_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    /// Sample standard deviation of the weights over `√n_samples`.
    pub stderr: f64,
    /// `ln(mean)`, computed from the scaled accumulators so it survives
    /// underflow of `mean`.
    pub log_mean: f64,
    pub n_samples: u64,
    pub seed: u64,
    pub tilt_theta: f64,
    /// Largest single-path weight.
    pub max_weight: f64,
    /// Paths with a nonzero weight.
    pub hits: u64,
    /// Set when the requested tilt was outside the attainable range and a
    /// fallback tilt was used instead.
    pub tilt_fallback: bool,
}

impl MonteCarloEstimate {
    pub fn relative_error(&self) -> f64 {
        self.stderr / self.mean
    }
}

/// Endpoint, running maximum and one suffix sum of a simulated path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathStats {
    /// `S_n`
    pub terminal: f64,
    /// `M_n = max_{1≤k≤n} S_k`
    pub running_max: f64,
    /// `S_i^n = S_n − S_{n−i}`
    pub suffix: f64,
}

impl PathStats {
    /// Stats of the walk built from `increments`, with suffix length `i ≤ n`.
    pub fn from_increments(increments: &[f64], i: usize) -> Result<Self> {
        let n = increments.len();
        if n == 0 || i > n {
            return Err(Error::Domain(format!("need 1 ≤ n and i ≤ n, got n={n}, i={i}")));
        }
        let mut s = 0.0;
        let mut running_max = f64::NEG_INFINITY;
        let mut prefix_at_cut = 0.0;
        for (k, x) in increments.iter().enumerate() {
            if k == n - i {
                prefix_at_cut = s;
            }
            s += x;
            running_max = running_max.max(s);
        }
        if i == 0 {
            prefix_at_cut = s;
        }
        Ok(PathStats {
            terminal: s,
            running_max,
            suffix: s - prefix_at_cut,
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct WeightStats {
    n: u64,
    mean: f64,
    m2: f64,
    max: f64,
    hits: u64,
    capped: u64,
}

impl WeightStats {
    fn push(&mut self, w: f64) {
        self.n += 1;
        let delta = w - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (w - self.mean);
        if w > self.max {
            self.max = w;
        }
        if w > 0.0 {
            self.hits += 1;
        }
    }

    fn merge(self, other: WeightStats) -> WeightStats {
        if other.n == 0 {
            return self;
        }
        if self.n == 0 {
            return other;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let (na, nb, nt) = (self.n as f64, other.n as f64, n as f64);
        WeightStats {
            n,
            mean: self.mean + delta * nb / nt,
            m2: self.m2 + other.m2 + delta * delta * na * nb / nt,
            max: self.max.max(other.max),
            hits: self.hits + other.hits,
            capped: self.capped + other.capped,
        }
    }
}

enum PathWeight {
    Weight(f64),
    Capped,
}

/// Runs `n_samples` paths over independent streams and pools the relative
/// weights in stream order.
fn simulate<F>(n_samples: u64, seed: u64, path: F) -> WeightStats
where
    F: Fn(&mut ChaCha8Rng) -> PathWeight + Sync,
{
    let layout: Vec<(u64, u64)> = blocks(n_samples).collect();
    let partials: Vec<WeightStats> = layout
        .into_par_iter()
        .map(|(stream, count)| {
            let mut rng = stream_rng(seed, stream);
            let mut stats = WeightStats::default();
            for _ in 0..count {
                match path(&mut rng) {
                    PathWeight::Weight(w) => stats.push(w),
                    PathWeight::Capped => {
                        stats.push(0.0);
                        stats.capped += 1;
                    }
                }
            }
            stats
        })
        .collect();
    partials
        .into_iter()
        .fold(WeightStats::default(), WeightStats::merge)
}

fn finish(stats: WeightStats, log_ref: f64, seed: u64, theta: f64, tilt_fallback: bool) -> Result<MonteCarloEstimate> {
    if stats.capped > 0 {
        return Err(Error::CapExceeded {
            capped: stats.capped,
            n_samples: stats.n,
            cap: STEP_CAP,
        });
    }
    let n = stats.n as f64;
    let sd = if stats.n > 1 { (stats.m2.max(0.0) / (n - 1.0)).sqrt() } else { 0.0 };
    let scale = log_ref.exp();
    Ok(MonteCarloEstimate {
        mean: scale * stats.mean,
        stderr: scale * sd / n.sqrt(),
        log_mean: log_ref + stats.mean.ln(),
        n_samples: stats.n,
        seed,
        tilt_theta: theta,
        max_weight: scale * stats.max,
        hits: stats.hits,
        tilt_fallback,
    })
}

fn check_level(u: f64) -> Result<()> {
    if !(u.is_finite() && u > 0.0) {
        return Err(Error::Domain(format!("boundary level must be positive, got {u}")));
    }
    Ok(())
}

fn check_samples(n_samples: u64) -> Result<()> {
    if n_samples < MIN_SAMPLES {
        return Err(Error::Domain(format!(
            "need at least {MIN_SAMPLES} samples, got {n_samples}"
        )));
    }
    Ok(())
}

/// Tilt with `Λ'(θ) = slope`, or the midpoint of `(α_min, s_max)` when the
/// slope is not attainable.
fn tilt_for_slope(model: &IncrementModel, slope: f64) -> Result<(f64, bool)> {
    match solve_alpha(model, slope) {
        Ok(theta) => Ok((theta, false)),
        Err(Error::NoRoot(_)) => {
            let alpha_min = solve_alpha_min(model)?;
            let s_max = model.s_max();
            let theta = if s_max.is_finite() { 0.5 * (alpha_min + s_max) } else { alpha_min + 1.0 };
            Ok((theta, true))
        }
        Err(e) => Err(e),
    }
}

/// `P[τ_u = n] = P[M_{n−1} ≤ u < S_n]`, tilted so that `Λ'(θ) = u/n`.
pub fn estimate_pointwise(model: &IncrementModel, u: f64, n: u64, n_samples: u64, seed: u64) -> Result<MonteCarloEstimate> {
    check_level(u)?;
    check_samples(n_samples)?;
    if n == 0 {
        return Err(Error::Domain("horizon n must be at least 1".into()));
    }
    let (theta, fallback) = tilt_for_slope(model, u / n as f64)?;
    let sampler = TiltedSampler::new(model.clone(), theta)?;
    let log_ref = -theta * u + n as f64 * model.cgf(theta)?;

    let stats = simulate(n_samples, seed, |rng| {
        let mut s = 0.0;
        for step in 1..=n {
            s += sampler.sample(rng);
            if s > u && step < n {
                return PathWeight::Weight(0.0);
            }
        }
        if s > u {
            let w = (-theta * (s - u)).exp();
            debug_assert!(w <= 1.0);
            PathWeight::Weight(w)
        } else {
            PathWeight::Weight(0.0)
        }
    });
    finish(stats, log_ref, seed, theta, fallback)
}

/// `P[S_n > u]`, tilted so that `Λ'(θ) = u/n`.
pub fn estimate_terminal_tail(model: &IncrementModel, u: f64, n: u64, n_samples: u64, seed: u64) -> Result<MonteCarloEstimate> {
    check_level(u)?;
    check_samples(n_samples)?;
    if n == 0 {
        return Err(Error::Domain("horizon n must be at least 1".into()));
    }
    let (theta, fallback) = tilt_for_slope(model, u / n as f64)?;
    let sampler = TiltedSampler::new(model.clone(), theta)?;
    let log_ref = -theta * u + n as f64 * model.cgf(theta)?;
    let stats = simulate(n_samples, seed, |rng| {
        let s: f64 = (0..n).map(|_| sampler.sample(rng)).sum();
        PathWeight::Weight(if s > u { (-theta * (s - u)).exp() } else { 0.0 })
    });
    finish(stats, log_ref, seed, theta, fallback)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailEvent {
    /// `{τ_u ≤ n}`
    AtMost,
    /// `{n < τ_u < ∞}`
    GreaterThanFinite,
}

/// One-sided passage probabilities, with paths stopped at the crossing.
///
/// The tilt solves `Λ'(θ) = u/n`, clamped at the Cramér root: from below for
/// `AtMost` (`θ ≥ α₀`) and from above for `GreaterThanFinite` (`θ ≤ α₀`).
/// Either way `Λ(θ)` has the sign that keeps every weight below
/// `exp(−θu + nΛ(θ))`.
pub fn estimate_tail(
    model: &IncrementModel,
    u: f64,
    n: u64,
    side: TailEvent,
    n_samples: u64,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    check_level(u)?;
    check_samples(n_samples)?;
    if n == 0 {
        return Err(Error::Domain("horizon n must be at least 1".into()));
    }
    let (theta_n, fallback) = tilt_for_slope(model, u / n as f64)?;
    let alpha_zero = solve_alpha_zero(model)?;
    let theta = match side {
        TailEvent::AtMost => theta_n.max(alpha_zero),
        TailEvent::GreaterThanFinite => theta_n.min(alpha_zero),
    };
    let sampler = TiltedSampler::new(model.clone(), theta)?;
    let big_lambda = model.cgf(theta)?;
    let log_ref = -theta * u + n as f64 * big_lambda;

    let stats = simulate(n_samples, seed, |rng| {
        let mut s = 0.0;
        let horizon = match side {
            TailEvent::AtMost => n,
            TailEvent::GreaterThanFinite => STEP_CAP,
        };
        for step in 1..=horizon {
            s += sampler.sample(rng);
            if s > u {
                let hit = match side {
                    TailEvent::AtMost => true,
                    TailEvent::GreaterThanFinite => step > n,
                };
                if !hit {
                    return PathWeight::Weight(0.0);
                }
                let excess_steps = step as f64 - n as f64;
                return PathWeight::Weight((-theta * (s - u) + excess_steps * big_lambda).exp());
            }
        }
        match side {
            TailEvent::AtMost => PathWeight::Weight(0.0),
            TailEvent::GreaterThanFinite => PathWeight::Capped,
        }
    });
    finish(stats, log_ref, seed, theta, fallback)
}

/// Ruin probability `P[τ_u < ∞]` by the Siegmund estimator: tilt by `α₀`,
/// run each path to its crossing and weight it by `exp(−α₀S_τ)`.
pub fn estimate_ruin(model: &IncrementModel, u: f64, n_samples: u64, seed: u64) -> Result<MonteCarloEstimate> {
    check_level(u)?;
    check_samples(n_samples)?;
    let alpha_zero = solve_alpha_zero(model)?;
    let sampler = TiltedSampler::new(model.clone(), alpha_zero)?;
    let stats = simulate(n_samples, seed, |rng| {
        let mut s = 0.0;
        for _ in 0..STEP_CAP {
            s += sampler.sample(rng);
            if s > u {
                return PathWeight::Weight((-alpha_zero * (s - u)).exp());
            }
        }
        PathWeight::Capped
    });
    finish(stats, -alpha_zero * u, seed, alpha_zero, false)
}

/// `J_L(α) = λ(α)^{-L} E[(e^{αS_{L+1}} − e^{αM_L})₊]` with `M_L = max(0, S_1, …, S_L)`,
/// estimated in the tilted form `λ(α) E_α[(1 − e^{α(M_L − S_{L+1})})₊]`.
pub fn estimate_theorem_constant(
    model: &IncrementModel,
    profile: &TiltProfile,
    big_l: u64,
    n_samples: u64,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    check_samples(n_samples)?;
    if big_l == 0 {
        return Err(Error::Domain("L must be at least 1".into()));
    }
    let alpha = profile.alpha;
    let sampler = TiltedSampler::new(model.clone(), alpha)?;
    let stats = simulate(n_samples, seed, |rng| {
        let mut s = 0.0;
        let mut running_max = 0.0f64;
        for _ in 0..big_l {
            s += sampler.sample(rng);
            running_max = running_max.max(s);
        }
        s += sampler.sample(rng);
        PathWeight::Weight((1.0 - (alpha * (running_max - s)).exp()).max(0.0))
    });
    finish(stats, model.cgf(alpha)?, seed, alpha, false)
}

/// Same quantity as [`estimate_theorem_constant`] sampled under the original
/// law. Its weights grow like `e^{αS_{L+1}}`, so it is only usable for small `L`.
pub fn estimate_theorem_constant_direct(
    model: &IncrementModel,
    profile: &TiltProfile,
    big_l: u64,
    n_samples: u64,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    check_samples(n_samples)?;
    if big_l == 0 {
        return Err(Error::Domain("L must be at least 1".into()));
    }
    let alpha = profile.alpha;
    let len = big_l as usize + 1;
    let stats = simulate(n_samples, seed, |rng| {
        let increments: Vec<f64> = (0..len).map(|_| model.sample(rng)).collect();
        let head = PathStats::from_increments(&increments[..len - 1], 0).expect("L ≥ 1");
        let whole = PathStats::from_increments(&increments, 1).expect("L ≥ 1");
        let m = head.running_max.max(0.0);
        PathWeight::Weight(((alpha * whole.terminal).exp() - (alpha * m).exp()).max(0.0))
    });
    finish(stats, -(big_l as f64) * model.cgf(alpha)?, seed, 0.0, false)
}

/// `P[M_{k_u−L} > u, S_{k_u−M} > u − γ]` for `L ≥ 1`, `−1 ≤ M ≤ L`, `γ ≥ 0`,
/// tilted by the profile's `α` (so `Λ'(θ) = ρ = u/k_u`).
#[allow(clippy::too_many_arguments)]
pub fn estimate_joint_bound_rate(
    model: &IncrementModel,
    profile: &TiltProfile,
    u: f64,
    big_l: u64,
    big_m: i64,
    gamma: f64,
    n_samples: u64,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    check_samples(n_samples)?;
    if big_l < 1 || big_m < -1 || big_m > big_l as i64 || !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::Domain(format!(
            "need L ≥ 1, −1 ≤ M ≤ L, γ ≥ 0; got L={big_l}, M={big_m}, γ={gamma}"
        )));
    }
    let query = passage_query(profile, u)?;
    let k = query.k_floor as i64;
    let cross_horizon = k - big_l as i64;
    if cross_horizon < 1 {
        return Err(Error::Domain(format!("k_u − L = {cross_horizon} must be at least 1")));
    }
    let cross_horizon = cross_horizon as u64;
    let terminal_horizon = (k - big_m) as u64;
    let u = query.u;
    let level = u - gamma;
    let theta = profile.alpha;
    let sampler = TiltedSampler::new(model.clone(), theta)?;
    let log_ref = -theta * level + terminal_horizon as f64 * profile.big_lambda_alpha;

    let stats = simulate(n_samples, seed, |rng| {
        let mut s = 0.0;
        let mut crossed = false;
        for step in 1..=terminal_horizon {
            s += sampler.sample(rng);
            if step <= cross_horizon && s > u {
                crossed = true;
            }
            if step == cross_horizon && !crossed {
                return PathWeight::Weight(0.0);
            }
        }
        PathWeight::Weight(if s > level { (-theta * (s - level)).exp() } else { 0.0 })
    });
    finish(stats, log_ref, seed, theta, false)
}
