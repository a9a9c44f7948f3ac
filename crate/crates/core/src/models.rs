//! Increment distributions for the random walk `S_n = X_1 + ... + X_n`.
//!
//! Every shipped family is absolutely continuous (hence nonlattice), has a
//! closed-form cumulant generating function `Λ(s) = log E[e^{sX}]`, and is
//! closed under exponential tilting, so tilted draws are exact.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngExt};
use rand_distr::{Exp1, StandardNormal};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Parameters of one distribution family. Carries no sign constraints, so it
/// also describes tilted laws (which usually have positive drift).
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Gaussian { mean: f64, variance: f64 },
    /// `X = Y - shift` with `Y ~ Exp(rate)`.
    ShiftedExponential { rate: f64, shift: f64 },
    GaussianMixture(Mixture),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Mixture {
    fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Self {
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Mixture {
            weights,
            means,
            variances,
            cumulative,
        }
    }

    fn components(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((&w, &m), &v)| (w, m, v))
    }

    /// Posterior component probabilities `w_i e^{Λ_i(s)} / λ(s)` together with `Λ(s)`.
    fn tilt_weights(&self, s: f64) -> (Vec<f64>, f64) {
        let logs: Vec<f64> = self
            .components()
            .map(|(w, m, v)| {
                if w > 0.0 {
                    w.ln() + m * s + 0.5 * v * s * s
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = logs.iter().map(|l| (l - top).exp()).sum();
        let log_lambda = top + total.ln();
        let probs = logs.iter().map(|l| (l - log_lambda).exp()).collect();
        (probs, log_lambda)
    }
}

fn std_normal() -> Normal {
    Normal::standard()
}

impl Family {
    pub fn s_max(&self) -> f64 {
        match self {
            Family::ShiftedExponential { rate, .. } => *rate,
            _ => f64::INFINITY,
        }
    }

    fn check_domain(&self, s: f64) -> Result<()> {
        if !s.is_finite() {
            return Err(Error::Domain(format!("cgf argument {s} is not finite")));
        }
        if s >= self.s_max() {
            return Err(Error::Domain(format!(
                "cgf argument {s} outside the MGF domain (s_max = {})",
                self.s_max()
            )));
        }
        Ok(())
    }

    pub fn cgf(&self, s: f64) -> Result<f64> {
        self.check_domain(s)?;
        Ok(match self {
            Family::Gaussian { mean, variance } => mean * s + 0.5 * variance * s * s,
            Family::ShiftedExponential { rate, shift } => -shift * s - (-s / rate).ln_1p(),
            Family::GaussianMixture(mix) => mix.tilt_weights(s).1,
        })
    }

    /// `(Λ'(s), Λ''(s))`.
    pub fn cgf_derivatives(&self, s: f64) -> Result<(f64, f64)> {
        self.check_domain(s)?;
        Ok(match self {
            Family::Gaussian { mean, variance } => (mean + variance * s, *variance),
            Family::ShiftedExponential { rate, shift } => {
                let gap = rate - s;
                (-shift + 1.0 / gap, 1.0 / (gap * gap))
            }
            Family::GaussianMixture(mix) => {
                let (probs, _) = mix.tilt_weights(s);
                let slopes: Vec<f64> = mix.components().map(|(_, m, v)| m + v * s).collect();
                let d1: f64 = probs.iter().zip(&slopes).map(|(p, d)| p * d).sum();
                let d2: f64 = probs
                    .iter()
                    .zip(&slopes)
                    .zip(mix.components())
                    .map(|((p, d), (_, _, v))| p * (v + (d - d1) * (d - d1)))
                    .sum();
                (d1, d2)
            }
        })
    }

    /// The law with density proportional to `e^{θx}` times this one.
    pub fn tilt(&self, theta: f64) -> Result<Family> {
        self.check_domain(theta)?;
        Ok(match self {
            Family::Gaussian { mean, variance } => Family::Gaussian {
                mean: mean + variance * theta,
                variance: *variance,
            },
            Family::ShiftedExponential { rate, shift } => Family::ShiftedExponential {
                rate: rate - theta,
                shift: *shift,
            },
            Family::GaussianMixture(mix) => {
                let (probs, _) = mix.tilt_weights(theta);
                let means = mix.components().map(|(_, m, v)| m + v * theta).collect();
                Family::GaussianMixture(Mixture::new(probs, means, mix.variances.clone()))
            }
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Family::Gaussian { mean, variance } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + variance.sqrt() * z
            }
            Family::ShiftedExponential { rate, shift } => {
                let e: f64 = rng.sample(Exp1);
                e / rate - shift
            }
            Family::GaussianMixture(mix) => {
                let pick: f64 = rng.random();
                let last = mix.weights.len() - 1;
                let idx = mix
                    .cumulative
                    .iter()
                    .position(|&c| pick < c)
                    .unwrap_or(last);
                let z: f64 = rng.sample(StandardNormal);
                mix.means[idx] + mix.variances[idx].sqrt() * z
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Family::Gaussian { mean, .. } => *mean,
            Family::ShiftedExponential { rate, shift } => 1.0 / rate - shift,
            Family::GaussianMixture(mix) => mix.components().map(|(w, m, _)| w * m).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Family::Gaussian { variance, .. } => *variance,
            Family::ShiftedExponential { rate, .. } => 1.0 / (rate * rate),
            Family::GaussianMixture(mix) => {
                let mu = self.mean();
                mix.components()
                    .map(|(w, m, v)| w * (v + (m - mu) * (m - mu)))
                    .sum()
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            Family::Gaussian { mean, variance } => {
                let sd = variance.sqrt();
                std_normal().pdf((x - mean) / sd) / sd
            }
            Family::ShiftedExponential { rate, shift } => {
                if x <= -shift {
                    0.0
                } else {
                    rate * (-rate * (x + shift)).exp()
                }
            }
            Family::GaussianMixture(mix) => mix
                .components()
                .map(|(w, m, v)| {
                    let sd = v.sqrt();
                    w * std_normal().pdf((x - m) / sd) / sd
                })
                .sum(),
        }
    }

    /// `P[X <= x]`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Family::Gaussian { mean, variance } => std_normal().cdf((x - mean) / variance.sqrt()),
            Family::ShiftedExponential { rate, shift } => {
                if x <= -shift {
                    0.0
                } else {
                    -(-rate * (x + shift)).exp_m1()
                }
            }
            Family::GaussianMixture(mix) => mix
                .components()
                .map(|(w, m, v)| w * std_normal().cdf((x - m) / v.sqrt()))
                .sum(),
        }
    }

    /// `P[X > x]`, accurate in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        match self {
            Family::Gaussian { mean, variance } => std_normal().sf((x - mean) / variance.sqrt()),
            Family::ShiftedExponential { rate, shift } => {
                if x <= -shift {
                    1.0
                } else {
                    (-rate * (x + shift)).exp()
                }
            }
            Family::GaussianMixture(mix) => mix
                .components()
                .map(|(w, m, v)| w * std_normal().sf((x - m) / v.sqrt()))
                .sum(),
        }
    }

    /// `P[a < X <= b]`, using whichever tail keeps relative precision.
    pub fn interval_prob(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let p = if a >= self.mean() {
            self.sf(a) - self.sf(b)
        } else {
            self.cdf(b) - self.cdf(a)
        };
        p.max(0.0)
    }

    /// Supremum of `|f'|` for the density `f`.
    pub fn density_lipschitz(&self) -> f64 {
        // max |φ'(z)| = φ(1) for the standard normal
        let phi1 = (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        match self {
            Family::Gaussian { variance, .. } => phi1 / variance,
            Family::ShiftedExponential { rate, .. } => rate * rate,
            Family::GaussianMixture(mix) => mix.components().map(|(w, _, v)| w * phi1 / v).sum(),
        }
    }
}

/// A validated increment law: negative mean, `P[X > 0] > 0`, nonlattice.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementModel {
    family: Family,
}

impl IncrementModel {
    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        if !(mean.is_finite() && variance.is_finite()) || variance <= 0.0 {
            return Err(Error::InvalidModel(format!(
                "gaussian needs finite mean and positive variance, got mean={mean} var={variance}"
            )));
        }
        Self::validated(Family::Gaussian { mean, variance })
    }

    pub fn shifted_exponential(rate: f64, shift: f64) -> Result<Self> {
        if !(rate.is_finite() && shift.is_finite()) || rate <= 0.0 || shift <= 0.0 {
            return Err(Error::InvalidModel(format!(
                "shiftexp needs positive rate and shift, got rate={rate} shift={shift}"
            )));
        }
        Self::validated(Family::ShiftedExponential { rate, shift })
    }

    pub fn gaussian_mixture(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || variances.len() != k {
            return Err(Error::InvalidModel(format!(
                "mixture needs equally many weights, means and variances (got {}, {}, {})",
                k,
                means.len(),
                variances.len()
            )));
        }
        let bad = |x: &f64| !x.is_finite();
        if weights.iter().any(bad) || means.iter().any(bad) || variances.iter().any(bad) {
            return Err(Error::InvalidModel("mixture parameters must be finite".into()));
        }
        if weights.iter().any(|&w| w < 0.0) || variances.iter().any(|&v| v <= 0.0) {
            return Err(Error::InvalidModel(
                "mixture weights must be nonnegative and variances positive".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidModel(format!("mixture weights sum to {total}, not 1")));
        }
        let weights = weights.iter().map(|w| w / total).collect();
        Self::validated(Family::GaussianMixture(Mixture::new(weights, means, variances)))
    }

    fn validated(family: Family) -> Result<Self> {
        let mean = family.mean();
        if mean >= 0.0 {
            return Err(Error::InvalidModel(format!(
                "increment mean must be strictly negative, got {mean}"
            )));
        }
        if family.sf(0.0) <= 0.0 {
            return Err(Error::InvalidModel("P[X > 0] must be positive".into()));
        }
        Ok(IncrementModel { family })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn s_max(&self) -> f64 {
        self.family.s_max()
    }

    /// `Λ(s)`.
    pub fn cgf(&self, s: f64) -> Result<f64> {
        self.family.cgf(s)
    }

    /// `(Λ'(s), Λ''(s))`.
    pub fn cgf_derivatives(&self, s: f64) -> Result<(f64, f64)> {
        self.family.cgf_derivatives(s)
    }

    pub fn mean(&self) -> f64 {
        self.family.mean()
    }

    pub fn variance(&self) -> f64 {
        self.family.variance()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.family.sample(rng)
    }

    pub fn tilted(&self, theta: f64) -> Result<TiltedSampler> {
        TiltedSampler::new(self.clone(), theta)
    }

    /// Closed-form inverse of `Λ'`, when the family has one.
    pub(crate) fn slope_inverse(&self, slope: f64) -> Option<f64> {
        match &self.family {
            Family::Gaussian { mean, variance } => Some((slope - mean) / variance),
            Family::ShiftedExponential { rate, shift } => {
                if slope > -shift {
                    Some(rate - 1.0 / (slope + shift))
                } else {
                    None
                }
            }
            Family::GaussianMixture(_) => None,
        }
    }

    /// Closed-form positive root of `Λ`, when the family has one.
    pub(crate) fn cgf_root(&self) -> Option<f64> {
        match &self.family {
            Family::Gaussian { mean, variance } => Some(-2.0 * mean / variance),
            _ => None,
        }
    }

    /// Infimum of the attainable slopes `Λ'(s)` as `s → -∞`.
    pub fn slope_infimum(&self) -> f64 {
        match &self.family {
            Family::ShiftedExponential { shift, .. } => -shift,
            _ => f64::NEG_INFINITY,
        }
    }
}

impl fmt::Display for IncrementModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |xs: &[f64]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        match &self.family {
            Family::Gaussian { mean, variance } => write!(f, "gaussian mean={mean} var={variance}"),
            Family::ShiftedExponential { rate, shift } => {
                write!(f, "shiftexp rate={rate} shift={shift}")
            }
            Family::GaussianMixture(mix) => write!(
                f,
                "mixture w={} mean={} var={}",
                join(&mix.weights),
                join(&mix.means),
                join(&mix.variances)
            ),
        }
    }
}

impl FromStr for IncrementModel {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let mut tokens = spec.split_whitespace();
        let kind = tokens
            .next()
            .ok_or_else(|| Error::Config("empty model spec".into()))?;
        let mut pairs = std::collections::BTreeMap::new();
        for tok in tokens {
            let (key, value) = tok
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got `{tok}`")))?;
            if pairs.insert(key, value).is_some() {
                return Err(Error::Config(format!("duplicate key `{key}` in model spec")));
            }
        }
        let mut take = |key: &str| -> Result<Vec<f64>> {
            let raw = pairs
                .remove(key)
                .ok_or_else(|| Error::Config(format!("model `{kind}` is missing `{key}=`")))?;
            raw.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Config(format!("bad number `{x}` for `{key}`: {e}")))
                })
                .collect()
        };
        let scalar = |xs: Vec<f64>, key: &str| -> Result<f64> {
            match xs.as_slice() {
                [x] => Ok(*x),
                _ => Err(Error::Config(format!("`{key}` expects a single number"))),
            }
        };
        let model = match kind {
            "gaussian" => {
                let mean = scalar(take("mean")?, "mean")?;
                let var = scalar(take("var")?, "var")?;
                IncrementModel::gaussian(mean, var)?
            }
            "shiftexp" => {
                let rate = scalar(take("rate")?, "rate")?;
                let shift = scalar(take("shift")?, "shift")?;
                IncrementModel::shifted_exponential(rate, shift)?
            }
            "mixture" => {
                let w = take("w")?;
                let mean = take("mean")?;
                let var = take("var")?;
                IncrementModel::gaussian_mixture(w, mean, var)?
            }
            other => return Err(Error::Config(format!("unknown model family `{other}`"))),
        };
        if let Some(key) = pairs.keys().next() {
            return Err(Error::Config(format!("unexpected key `{key}` for model `{kind}`")));
        }
        Ok(model)
    }
}

/// Exact sampler for the tilted law `dP_θ(x) = e^{θx} / λ(θ) dP(x)`.
#[derive(Debug, Clone)]
pub struct TiltedSampler {
    base: IncrementModel,
    theta: f64,
    tilted: Family,
}

impl TiltedSampler {
    pub fn new(base: IncrementModel, theta: f64) -> Result<Self> {
        let tilted = base.family.tilt(theta)?;
        Ok(TiltedSampler {
            base,
            theta,
            tilted,
        })
    }

    pub fn base(&self) -> &IncrementModel {
        &self.base
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn tilted_family(&self) -> &Family {
        &self.tilted
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.tilted.sample(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gauss() -> IncrementModel {
        IncrementModel::gaussian(-1.0, 1.0).unwrap()
    }

    fn shiftexp() -> IncrementModel {
        IncrementModel::shifted_exponential(1.0, 2.0).unwrap()
    }

    fn mixture() -> IncrementModel {
        IncrementModel::gaussian_mixture(vec![0.7, 0.3], vec![-1.5, 0.5], vec![1.0, 0.5]).unwrap()
    }

    fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    #[test]
    fn cgf_closed_forms() {
        assert_eq!(gauss().cgf(0.0).unwrap(), 0.0);
        assert_eq!(gauss().cgf(2.0).unwrap(), 0.0);
        assert_abs_diff_eq!(shiftexp().cgf(0.5).unwrap(), -0.306853, epsilon = 1e-6);
        assert_abs_diff_eq!(mixture().cgf(0.0).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn cgf_derivative_closed_forms() {
        assert_eq!(gauss().cgf_derivatives(1.5).unwrap(), (0.5, 1.0));
        assert_eq!(gauss().cgf_derivatives(1.0).unwrap(), (0.0, 1.0));
        let (d1, d2) = shiftexp().cgf_derivatives(0.5).unwrap();
        assert_abs_diff_eq!(d1, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d2, 4.0, epsilon = 1e-12);
        let m = mixture();
        assert_abs_diff_eq!(m.cgf_derivatives(0.0).unwrap().0, m.mean(), epsilon = 1e-14);
        assert_abs_diff_eq!(m.cgf_derivatives(0.0).unwrap().1, m.variance(), epsilon = 1e-14);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(shiftexp().cgf(1.0), Err(Error::Domain(_))));
        assert!(matches!(shiftexp().cgf(1.5), Err(Error::Domain(_))));
        assert!(matches!(gauss().cgf(f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(gauss().cgf_derivatives(f64::INFINITY), Err(Error::Domain(_))));
        assert!(matches!(shiftexp().tilted(1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn invalid_models_are_rejected() {
        assert!(IncrementModel::gaussian(0.5, 1.0).is_err());
        assert!(IncrementModel::gaussian(-1.0, 0.0).is_err());
        // mean 1/rate - shift = 0.5 > 0
        assert!(IncrementModel::shifted_exponential(1.0, 0.5).is_err());
        assert!(IncrementModel::gaussian_mixture(vec![0.5, 0.6], vec![-1.0, -1.0], vec![1.0, 1.0]).is_err());
        assert!(IncrementModel::gaussian_mixture(vec![0.5, 0.5], vec![1.0, 2.0], vec![1.0, 1.0]).is_err());
        assert!(IncrementModel::gaussian_mixture(vec![1.0], vec![-1.0, 0.0], vec![1.0]).is_err());
    }

    #[test]
    fn model_spec_grammar() {
        let g: IncrementModel = "gaussian mean=-1 var=1".parse().unwrap();
        assert_eq!(g, gauss());
        let e: IncrementModel = "shiftexp rate=1 shift=2".parse().unwrap();
        assert_eq!(e, shiftexp());
        let m: IncrementModel = "mixture w=0.7,0.3 mean=-1.5,0.5 var=1,0.5".parse().unwrap();
        assert_eq!(m, mixture());
        for model in [gauss(), shiftexp(), mixture()] {
            let again: IncrementModel = model.to_string().parse().unwrap();
            assert_eq!(again, model);
        }
        assert!("poisson mean=1".parse::<IncrementModel>().is_err());
        assert!("gaussian mean=-1".parse::<IncrementModel>().is_err());
        assert!("gaussian mean=-1 var=1 extra=2".parse::<IncrementModel>().is_err());
        assert!("gaussian mean=abc var=1".parse::<IncrementModel>().is_err());
        assert!("".parse::<IncrementModel>().is_err());
    }

    #[test]
    fn gaussian_sample_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = gauss();
        let n = 1_000_000;
        let mean = (0..n).map(|_| model.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean + 1.0).abs() < 4e-3, "mean {mean}");
    }

    #[test]
    fn shiftexp_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model = shiftexp();
        assert!((0..100_000).all(|_| model.sample(&mut rng) > -2.0));
    }

    fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (na, nb) = (a.len() as f64, b.len() as f64);
        let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / na - j as f64 / nb).abs());
        }
        d
    }

    #[test]
    fn degenerate_mixture_matches_gaussian() {
        let mix = IncrementModel::gaussian_mixture(vec![1.0], vec![-1.0], vec![1.0]).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(2);
        let n = 20_000;
        let a: Vec<f64> = (0..n).map(|_| mix.sample(&mut r1)).collect();
        let b: Vec<f64> = (0..n).map(|_| gauss().sample(&mut r2)).collect();
        let d = ks_statistic(a, b);
        // two-sample critical value at level 0.001
        let crit = 1.95 * (2.0 / n as f64).sqrt();
        assert!(d < crit, "KS statistic {d} >= {crit}");
    }

    #[test]
    fn tilted_means() {
        let n = 1_000_000;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = gauss().tilted(2.0).unwrap();
        let mean = (0..n).map(|_| g.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 4e-3, "tilted gaussian mean {mean}");

        let e = shiftexp().tilted(0.5).unwrap();
        let mean = (0..n).map(|_| e.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4e-3, "tilted shiftexp mean {mean}");
    }

    #[test]
    fn zero_tilt_is_identity() {
        for model in [gauss(), shiftexp(), mixture()] {
            let sampler = model.tilted(0.0).unwrap();
            assert_eq!(sampler.tilted_family(), model.family());
            let mut r1 = ChaCha8Rng::seed_from_u64(5);
            let mut r2 = ChaCha8Rng::seed_from_u64(5);
            for _ in 0..1000 {
                assert_eq!(sampler.sample(&mut r1), model.sample(&mut r2));
            }
        }
    }

    #[test]
    fn tilt_consistency_all_families() {
        let n = 200_000;
        for (model, theta) in [(gauss(), 1.3), (shiftexp(), 0.4), (mixture(), 0.9)] {
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            let sampler = model.tilted(theta).unwrap();
            let xs: Vec<f64> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
            let (mean, se) = mean_and_stderr(&xs);
            let target = model.cgf_derivatives(theta).unwrap().0;
            assert!((mean - target).abs() <= 5.0 * se, "{model}: {mean} vs {target} (se {se})");
        }
    }

    #[test]
    fn empirical_mgf_matches_closed_form() {
        let n = 1_000_000;
        for (model, s) in [(gauss(), 1.5), (shiftexp(), 0.5), (mixture(), 0.8)] {
            assert!(model.cgf(s).unwrap() <= 2.0);
            let mut rng = ChaCha8Rng::seed_from_u64(23);
            let xs: Vec<f64> = (0..n).map(|_| (s * model.sample(&mut rng)).exp()).collect();
            let (mean, se) = mean_and_stderr(&xs);
            let lambda = model.cgf(s).unwrap().exp();
            assert!((mean - lambda).abs() <= 5.0 * se, "{model}: {mean} vs {lambda} (se {se})");
        }
    }

    #[test]
    fn positive_part_has_mass() {
        for model in [gauss(), shiftexp(), mixture()] {
            let mut rng = ChaCha8Rng::seed_from_u64(29);
            let hits = (0..100_000).filter(|_| model.sample(&mut rng) > 0.0).count();
            assert!(hits > 0, "{model}");
        }
    }

    #[test]
    fn distribution_functions_agree() {
        for model in [gauss(), shiftexp(), mixture()] {
            let f = model.family();
            for &x in &[-3.0, -1.0, 0.0, 0.7, 2.5] {
                assert_abs_diff_eq!(f.cdf(x) + f.sf(x), 1.0, epsilon = 1e-14);
                let h = 1e-3;
                let numeric = (f.cdf(x - 2.0 * h) - 8.0 * f.cdf(x - h) + 8.0 * f.cdf(x + h) - f.cdf(x + 2.0 * h)) / (12.0 * h);
                assert_abs_diff_eq!(numeric, f.pdf(x), epsilon = 1e-8);
                assert_abs_diff_eq!(f.interval_prob(x, x + 0.3), f.cdf(x + 0.3) - f.cdf(x), epsilon = 1e-14);
            }
        }
    }

    fn model_and_point() -> impl Strategy<Value = (IncrementModel, f64)> {
        prop_oneof![
            (0.05f64..4.0).prop_map(|s| (gauss(), s)),
            (0.0f64..0.9).prop_map(|s| (shiftexp(), s)),
            (0.05f64..3.0).prop_map(|s| (mixture(), s)),
        ]
    }

    proptest! {
        #[test]
        fn finite_differences_match_derivatives((model, s) in model_and_point()) {
            let h = 1e-5;
            let (d1, d2) = model.cgf_derivatives(s).unwrap();
            let fd1 = (model.cgf(s + h).unwrap() - model.cgf(s - h).unwrap()) / (2.0 * h);
            prop_assert!((fd1 - d1).abs() <= 1e-6 * d1.abs().max(1.0), "{} s={}: {} vs {}", model, s, fd1, d1);
            let fd2 = (model.cgf(s + h).unwrap() - 2.0 * model.cgf(s).unwrap() + model.cgf(s - h).unwrap()) / (h * h);
            prop_assert!((fd2 - d2).abs() <= 1e-4 * d2.abs().max(1.0), "{} s={}: {} vs {}", model, s, fd2, d2);
            prop_assert!(d2 > 0.0);
        }
    }
}
