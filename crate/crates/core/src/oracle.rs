//! Brute-force oracle for small `u`: propagates the law of the walk on a
//! uniform grid and reads off `P[τ_u = n]`, `P[τ_u ≤ n]` and joint events.
//!
//! Cells have width `h` with `u` on a cell edge. Mass in a cell sits at its
//! centre; the transition from a centre into a cell uses the exact interval
//! probability of the increment law, so one step conserves mass up to
//! rounding. The first step starts from the point mass at 0 and is exact.
//!
//! The reported error bound is a posteriori: the same run at spacing `2h`
//! gives `|v_h − v_{2h}|`, plus a Lundberg bound `e^{−α₀(u − lo)}` per unit
//! of mass cut off below `lo`. Summation order is fixed (ascending cell
//! index), so results are bit-reproducible.

use crate::cgf::solve_alpha_zero;
use crate::error::{Error, Result};
use crate::models::{Family, IncrementModel};

pub const MAX_CELLS: usize = 10_000_000;
pub const WORK_BUDGET: f64 = 1e9;
/// Lower truncation sits this many increment standard deviations below the walk's reach.
pub const TRUNCATION_SDS: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub h: f64,
    pub lo: f64,
    /// Upper edge of the surviving region, i.e. the level `u`.
    pub hi: f64,
    /// Bound on the probability that a unit of mass cut off below `lo`
    /// would have come back above `hi`.
    pub tail_mass_bound: f64,
}

impl GridSpec {
    /// Grid for level `u` over horizon `n`: `lo = u − 40·sd − n·|mean|`.
    pub fn for_walk(model: &IncrementModel, u: f64, n: u64, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Domain(format!("grid spacing must be positive, got {h}")));
        }
        if !(u.is_finite() && u > 0.0) {
            return Err(Error::Domain(format!("boundary level must be positive, got {u}")));
        }
        let lo = u - TRUNCATION_SDS * model.variance().sqrt() - n as f64 * model.mean().abs();
        let alpha_zero = solve_alpha_zero(model)?;
        Ok(GridSpec {
            h,
            lo,
            hi: u,
            tail_mass_bound: (-alpha_zero * (u - lo)).exp(),
        })
    }

    pub fn cells(&self) -> usize {
        ((self.hi - self.lo) / self.h).ceil() as usize
    }

    fn coarsened(&self) -> GridSpec {
        GridSpec { h: 2.0 * self.h, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleValue {
    pub value: f64,
    pub error_bound: f64,
}

/// Output of one killed-walk run at a single spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct PassageDistribution {
    /// `crossing[m − 1] ≈ P[τ_u = m]` for `m = 1..=n`.
    pub crossing: Vec<f64>,
    /// Mass cut off below `lo` at each step.
    pub lost: Vec<f64>,
    /// Mass still at or below `u` after each step.
    pub surviving: Vec<f64>,
}

/// `K[d] = P[X ∈ ((d − ½)h, (d + ½)h]]` for `|d| < cells`, stored reversed so
/// the weights of every source cell for a fixed target form one contiguous slice.
struct Kernel {
    reversed: Vec<f64>,
    cells: usize,
}

impl Kernel {
    fn new(family: &Family, h: f64, cells: usize) -> Self {
        let reversed = (0..2 * cells - 1)
            .map(|p| {
                let d = (cells as f64 - 1.0) - p as f64;
                family.interval_prob((d - 0.5) * h, (d + 0.5) * h)
            })
            .collect();
        Kernel { reversed, cells }
    }

    /// `K[i − j]` for `j = 0..cells`.
    fn row(&self, i: usize) -> &[f64] {
        let start = self.cells - 1 - i;
        &self.reversed[start..start + self.cells]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

fn check_budget(cells: usize, steps: u64) -> Result<()> {
    if cells == 0 {
        return Err(Error::Domain("grid has no cells".into()));
    }
    if cells > MAX_CELLS || cells as f64 * steps as f64 > WORK_BUDGET {
        return Err(Error::BudgetExceeded(format!(
            "{cells} cells over {steps} steps exceeds the budget ({MAX_CELLS} cells, {WORK_BUDGET:e} cell-steps)"
        )));
    }
    Ok(())
}

fn check_spec(spec: &GridSpec, u: f64) -> Result<()> {
    if (spec.hi - u).abs() > 1e-12 * u.abs().max(1.0) {
        return Err(Error::Domain(format!("grid upper edge {} differs from u = {u}", spec.hi)));
    }
    if !(spec.lo < spec.hi && spec.h > 0.0) {
        return Err(Error::Domain("grid needs lo < hi and h > 0".into()));
    }
    Ok(())
}

/// Propagates the walk killed on crossing `u` for `n` steps at one spacing.
pub fn passage_distribution(model: &IncrementModel, u: f64, n: u64, spec: &GridSpec) -> Result<PassageDistribution> {
    check_spec(spec, u)?;
    if n == 0 {
        return Err(Error::Domain("horizon n must be at least 1".into()));
    }
    let cells = spec.cells();
    check_budget(cells, n)?;
    let family = model.family();
    let h = spec.h;
    let lo = u - cells as f64 * h;
    // cell i covers (lo + i h, lo + (i+1) h]; cells - 1 is the top cell
    let centre = |i: usize| lo + (i as f64 + 0.5) * h;

    let mut crossing = Vec::with_capacity(n as usize);
    let mut lost = Vec::with_capacity(n as usize);
    let mut surviving = Vec::with_capacity(n as usize);

    let mut mass: Vec<f64> = (0..cells)
        .map(|i| family.interval_prob(lo + i as f64 * h, lo + (i + 1) as f64 * h))
        .collect();
    crossing.push(family.sf(u));
    lost.push(family.cdf(lo));
    surviving.push(mass.iter().sum());

    if n > 1 {
        let kernel = Kernel::new(family, h, cells);
        let up: Vec<f64> = (0..cells).map(|j| family.sf(u - centre(j))).collect();
        let down: Vec<f64> = (0..cells).map(|j| family.cdf(lo - centre(j))).collect();
        let mut next = vec![0.0; cells];
        for _ in 1..n {
            for (i, slot) in next.iter_mut().enumerate() {
                *slot = dot(&mass, kernel.row(i));
            }
            crossing.push(dot(&mass, &up));
            lost.push(dot(&mass, &down));
            std::mem::swap(&mut mass, &mut next);
            surviving.push(mass.iter().sum());
        }
    }
    Ok(PassageDistribution {
        crossing,
        lost,
        surviving,
    })
}

fn truncation_error(spec: &GridSpec, dist: &PassageDistribution) -> f64 {
    spec.tail_mass_bound * dist.lost.iter().sum::<f64>()
}

fn with_refinement<F>(model: &IncrementModel, u: f64, n: u64, spec: &GridSpec, read: F) -> Result<OracleValue>
where
    F: Fn(&PassageDistribution) -> f64,
{
    let fine = passage_distribution(model, u, n, spec)?;
    let coarse = passage_distribution(model, u, n, &spec.coarsened())?;
    let value = read(&fine);
    let truncation = truncation_error(spec, &fine);
    if spec.tail_mass_bound * n as f64 > 0.1 * value {
        return Err(Error::TruncationTooLossy(format!(
            "truncation bound {:e} over {n} steps vs value {value:e}",
            spec.tail_mass_bound
        )));
    }
    Ok(OracleValue {
        value,
        error_bound: (value - read(&coarse)).abs() + truncation,
    })
}

/// `P[τ_u = n]`.
pub fn exact_pointwise(model: &IncrementModel, u: f64, n: u64, spec: &GridSpec) -> Result<OracleValue> {
    with_refinement(model, u, n, spec, |d| *d.crossing.last().expect("n ≥ 1"))
}

/// `P[τ_u ≤ n]`, summed over the disjoint events `{τ_u = m}`.
pub fn exact_cdf(model: &IncrementModel, u: f64, n: u64, spec: &GridSpec) -> Result<OracleValue> {
    with_refinement(model, u, n, spec, |d| d.crossing.iter().sum())
}

fn joint_single(
    model: &IncrementModel,
    u: f64,
    cross_horizon: u64,
    terminal_horizon: u64,
    gamma: f64,
    spec: &GridSpec,
) -> Result<(f64, f64)> {
    let family = model.family();
    let h = spec.h;
    let below = spec.cells();
    let above = ((TRUNCATION_SDS * model.variance().sqrt() + gamma) / h).ceil() as usize;
    let cells = below + above;
    check_budget(cells, terminal_horizon)?;
    let lo = u - below as f64 * h;
    let top = u + above as f64 * h;
    let centre = |i: usize| lo + (i as f64 + 0.5) * h;
    let shift = (gamma / h).round() as usize;
    // cells >= threshold have centres above u - γ
    let threshold = below - shift.min(below);

    // free: not yet crossed, lives on cells [0, below); crossed: anywhere on the grid
    let mut free: Vec<f64> = (0..cells)
        .map(|i| {
            if i < below {
                family.interval_prob(lo + i as f64 * h, lo + (i + 1) as f64 * h)
            } else {
                0.0
            }
        })
        .collect();
    let mut crossed: Vec<f64> = (0..cells)
        .map(|i| {
            if i >= below {
                family.interval_prob(lo + i as f64 * h, lo + (i + 1) as f64 * h)
            } else {
                0.0
            }
        })
        .collect();
    let mut escaped = family.sf(top);
    let mut lost = family.cdf(lo);

    let kernel = Kernel::new(family, h, cells);
    let up: Vec<f64> = (0..cells).map(|j| family.sf(top - centre(j))).collect();
    let down: Vec<f64> = (0..cells).map(|j| family.cdf(lo - centre(j))).collect();
    let mut next_free = vec![0.0; cells];
    let mut next_crossed = vec![0.0; cells];
    for step in 2..=terminal_horizon {
        let still_crossing = step <= cross_horizon;
        for i in 0..cells {
            let row = kernel.row(i);
            let from_free = if still_crossing { dot(&free, row) } else { 0.0 };
            let from_crossed = dot(&crossed, row);
            if i < below {
                next_free[i] = from_free;
                next_crossed[i] = from_crossed;
            } else {
                next_free[i] = 0.0;
                next_crossed[i] = from_crossed + from_free;
            }
        }
        escaped += dot(&crossed, &up);
        lost += dot(&crossed, &down);
        if still_crossing {
            escaped += dot(&free, &up);
            lost += dot(&free, &down);
        }
        std::mem::swap(&mut free, &mut next_free);
        std::mem::swap(&mut crossed, &mut next_crossed);
    }
    let value = crossed[threshold..].iter().sum::<f64>() + escaped;
    Ok((value, lost))
}

/// `P[M_C > u, S_T > u − γ]` with `M_C = max_{1≤k≤C} S_k` and `T ≥ C ≥ 1`.
/// `γ` must be a multiple of the grid spacing.
pub fn exact_joint(
    model: &IncrementModel,
    u: f64,
    cross_horizon: u64,
    terminal_horizon: u64,
    gamma: f64,
    spec: &GridSpec,
) -> Result<OracleValue> {
    check_spec(spec, u)?;
    if cross_horizon == 0 || terminal_horizon < cross_horizon {
        return Err(Error::Domain(format!(
            "need 1 ≤ C ≤ T, got C={cross_horizon}, T={terminal_horizon}"
        )));
    }
    for h in [spec.h, 2.0 * spec.h] {
        let ratio = gamma / h;
        if !(gamma >= 0.0) || (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::Domain(format!("γ = {gamma} must be a nonnegative multiple of {h}")));
        }
    }
    let (value, lost) = joint_single(model, u, cross_horizon, terminal_horizon, gamma, spec)?;
    let (coarse, _) = joint_single(model, u, cross_horizon, terminal_horizon, gamma, &spec.coarsened())?;
    if spec.tail_mass_bound * terminal_horizon as f64 > 0.1 * value {
        return Err(Error::TruncationTooLossy(format!(
            "truncation bound {:e} vs value {value:e}",
            spec.tail_mass_bound
        )));
    }
    Ok(OracleValue {
        value,
        error_bound: (value - coarse).abs() + spec.tail_mass_bound * lost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn gauss() -> IncrementModel {
        IncrementModel::gaussian(-1.0, 1.0).unwrap()
    }

    fn sf(z: f64) -> f64 {
        Normal::standard().sf(z)
    }

    #[test]
    fn one_step_is_the_increment_tail() {
        let spec = GridSpec::for_walk(&gauss(), 2.0, 1, 0.01).unwrap();
        let v = exact_pointwise(&gauss(), 2.0, 1, &spec).unwrap();
        let exact = sf(3.0);
        assert!((exact - 1.3499e-3).abs() < 1e-7);
        assert!((v.value - exact).abs() <= v.error_bound.max(1e-15));
        let c = exact_cdf(&gauss(), 2.0, 1, &spec).unwrap();
        assert_eq!(c.value, v.value);
    }

    #[test]
    fn two_steps_match_quadrature() {
        // ∫_{-∞}^{u} φ(x+1) Φ̄(u−x+1) dx by adaptive quadrature
        let reference = 0.0020107035478992815;
        let spec = GridSpec::for_walk(&gauss(), 2.0, 2, 0.01).unwrap();
        let v = exact_pointwise(&gauss(), 2.0, 2, &spec).unwrap();
        assert!(
            (v.value - reference).abs() <= v.error_bound,
            "{} ± {} vs {reference}",
            v.value,
            v.error_bound
        );
        assert!(v.error_bound < 1e-3 * reference);
    }

    #[test]
    fn mass_is_conserved() {
        for model in [
            gauss(),
            IncrementModel::shifted_exponential(1.0, 2.0).unwrap(),
            IncrementModel::gaussian_mixture(vec![0.7, 0.3], vec![-1.5, 0.5], vec![1.0, 0.5]).unwrap(),
        ] {
            let n = 6;
            let spec = GridSpec::for_walk(&model, 3.0, n, 0.02).unwrap();
            let d = passage_distribution(&model, 3.0, n, &spec).unwrap();
            let mut crossed = 0.0;
            let mut lost = 0.0;
            for step in 0..n as usize {
                crossed += d.crossing[step];
                lost += d.lost[step];
                let total = d.surviving[step] + crossed + lost;
                assert!((total - 1.0).abs() <= 1e-12 * (step + 1) as f64, "{model} step {step}: {total}");
            }
        }
    }

    #[test]
    fn cdf_is_the_sum_of_pointwise() {
        let (u, n) = (3.0, 5);
        let spec = GridSpec::for_walk(&gauss(), u, n, 0.02).unwrap();
        let cdf = exact_cdf(&gauss(), u, n, &spec).unwrap();
        let mut total = 0.0;
        let mut bound = 0.0;
        for m in 1..=n {
            let s = GridSpec::for_walk(&gauss(), u, m, 0.02).unwrap();
            let p = exact_pointwise(&gauss(), u, m, &s).unwrap();
            total += p.value;
            bound += p.error_bound;
        }
        assert!((cdf.value - total).abs() <= bound + cdf.error_bound);
    }

    #[test]
    fn halving_h_stays_within_bound() {
        let (u, n) = (3.0, 6);
        let coarse = GridSpec::for_walk(&gauss(), u, n, 0.02).unwrap();
        let fine = GridSpec { h: 0.01, ..coarse };
        let a = exact_pointwise(&gauss(), u, n, &coarse).unwrap();
        let b = exact_pointwise(&gauss(), u, n, &fine).unwrap();
        assert!((a.value - b.value).abs() < a.error_bound);
    }

    #[test]
    fn decreasing_in_u() {
        let n = 3;
        let mut prev = f64::INFINITY;
        for u in [1.0, 2.0, 3.0, 4.0, 5.0] {
            let spec = GridSpec::for_walk(&gauss(), u, n, 0.02).unwrap();
            let v = exact_pointwise(&gauss(), u, n, &spec).unwrap().value;
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn joint_reduces_to_terminal_tail() {
        // M = L, γ = 0: {M_C > u, S_C > u} = {S_C > u}
        let (u, c) = (2.0, 3);
        let spec = GridSpec::for_walk(&gauss(), u, c, 0.01).unwrap();
        let v = exact_joint(&gauss(), u, c, c, 0.0, &spec).unwrap();
        let exact = sf((u + c as f64) / (c as f64).sqrt());
        assert!((v.value - exact).abs() <= v.error_bound + 1e-6 * exact, "{} vs {exact}", v.value);
    }

    #[test]
    fn joint_with_one_step_delay() {
        // P[M_1 > u, S_2 > u] = ∫_u^∞ φ(x+1) Φ̄(u−x+1) dx, computed by quadrature
        let u = 1.0;
        let spec = GridSpec::for_walk(&gauss(), u, 2, 0.01).unwrap();
        let v = exact_joint(&gauss(), u, 1, 2, 0.0, &spec).unwrap();
        let reference = 0.006_233_002_864_977_008;
        assert!((v.value - reference).abs() <= v.error_bound + 1e-5 * reference, "{} vs {reference}", v.value);
    }

    #[test]
    fn budget_and_contract_errors() {
        let spec = GridSpec::for_walk(&gauss(), 2.0, 1, 1e-7).unwrap();
        assert!(matches!(exact_pointwise(&gauss(), 2.0, 1, &spec), Err(Error::BudgetExceeded(_))));
        let spec = GridSpec::for_walk(&gauss(), 2.0, 1, 0.01).unwrap();
        assert!(exact_pointwise(&gauss(), 3.0, 1, &spec).is_err());
        assert!(exact_joint(&gauss(), 2.0, 2, 1, 0.0, &spec).is_err());
        assert!(exact_joint(&gauss(), 2.0, 1, 2, 0.015, &spec).is_err());
        assert!(GridSpec::for_walk(&gauss(), 2.0, 1, 0.0).is_err());
    }
}
