//! Run traces, across-trial aggregation and empirical checks of the
//! concentration and convergence bounds.

use std::fmt;
use std::ops::RangeInclusive;

use rand::RngCore;

use crate::distributions::{dkw_tail_bound, ClosedFormDistribution, RiskLevel, VarEstimator};
use crate::error::{domain, unsupported, Result};
use crate::games::{ActionProfile, StochasticGame};
use crate::learning::Algorithm;
use crate::scalar::Scalar;

/// What one episode of a run looked like.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord<S> {
    /// 1-based episode index.
    pub t: usize,
    /// Joint action played at this episode.
    pub action: ActionProfile<S>,
    /// VaR value each agent used for its tail indicator.
    pub var_estimates: Vec<S>,
    /// True VaR of each agent's cost at `action`, when the game has a closed form.
    pub true_vars: Option<Vec<S>>,
    /// Squared distance of `action` to the equilibrium (set).
    pub sq_error: Option<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceMeta {
    pub game: String,
    pub algorithm: Algorithm,
    pub alphas: Vec<f64>,
    pub step: f64,
    pub episodes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace<S> {
    pub meta: TraceMeta,
    pub records: Vec<EpisodeRecord<S>>,
    /// Iterate after the last update.
    pub final_action: ActionProfile<S>,
}

impl<S: Scalar> RunTrace<S> {
    pub fn sq_errors(&self) -> Result<Vec<S>> {
        self.records
            .iter()
            .map(|r| r.sq_error)
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| unsupported("trace carries no distance to an equilibrium"))
    }

    /// `|nu_t - nu*_t|` for one agent along the trace.
    pub fn var_errors(&self, agent: usize) -> Result<Vec<S>> {
        self.records
            .iter()
            .map(|r| {
                r.true_vars
                    .as_ref()
                    .map(|tv| (r.var_estimates[agent] - tv[agent]).abs())
            })
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| unsupported("trace carries no true VaR values"))
    }
}

/// Running average `A_T = (1/T) sum_{t <= T} ||x_t - x*||^2` for every prefix.
pub fn time_averaged_error<S: Scalar>(trace: &RunTrace<S>) -> Result<Vec<S>> {
    Ok(running_mean(&trace.sq_errors()?))
}

pub fn running_mean<S: Scalar>(series: &[S]) -> Vec<S> {
    let mut acc = S::zero();
    series
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            acc = acc + v;
            acc / S::count(k + 1)
        })
        .collect()
}

pub fn running_sum<S: Scalar>(series: &[S]) -> Vec<S> {
    let mut acc = S::zero();
    series
        .iter()
        .map(|&v| {
            acc = acc + v;
            acc
        })
        .collect()
}

/// Pointwise mean and sample standard deviation of equally long series.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateTrace<S> {
    pub mean: Vec<S>,
    /// Uses the `R - 1` denominator; zero when `R = 1`.
    pub std: Vec<S>,
    pub trials: usize,
}

impl<S: Scalar> AggregateTrace<S> {
    pub fn from_series(series: &[Vec<S>]) -> Result<Self> {
        let trials = series.len();
        let len = series
            .first()
            .map(Vec::len)
            .ok_or_else(|| domain("no series to aggregate"))?;
        if series.iter().any(|s| s.len() != len) {
            return Err(domain("series to aggregate differ in length"));
        }
        let r = S::count(trials);
        let mut mean = Vec::with_capacity(len);
        let mut std = Vec::with_capacity(len);
        for t in 0..len {
            let m = series.iter().map(|s| s[t]).sum::<S>() / r;
            let var = if trials > 1 {
                series.iter().map(|s| (s[t] - m) * (s[t] - m)).sum::<S>() / (r - S::one())
            } else {
                S::zero()
            };
            mean.push(m);
            std.push(var.sqrt());
        }
        Ok(Self { mean, std, trials })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// OLS slope of `ln y` against `ln x`.
pub fn loglog_slope<S: Scalar>(points: &[(S, S)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(domain("slope fit needs at least two points"));
    }
    let mut logs = Vec::with_capacity(points.len());
    for &(x, y) in points {
        if !(x > S::zero() && y > S::zero()) {
            return Err(domain(format!(
                "log-log fit needs positive values, got ({x}, {y})"
            )));
        }
        logs.push((x.as_f64().ln(), y.as_f64().ln()));
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return Err(domain("slope fit needs at least two distinct abscissae"));
    }
    Ok(sxy / sxx)
}

/// Log-log slope of the aggregate mean against the episode count `T`
/// (1-based) over `window`.
pub fn fit_rate<S: Scalar>(
    series: &AggregateTrace<S>,
    window: RangeInclusive<usize>,
) -> Result<f64> {
    let (lo, hi) = (*window.start(), *window.end());
    if lo == 0 || hi > series.len() || lo >= hi {
        return Err(domain(format!(
            "window {lo}..={hi} does not fit a series of length {}",
            series.len()
        )));
    }
    let points: Vec<(S, S)> = (lo..=hi)
        .map(|t| (S::count(t), series.mean[t - 1]))
        .collect();
    loglog_slope(&points)
}

/// `(S_1, S_2) = (sum 1/alpha_i, sum 1/alpha_i^2)`.
pub fn risk_sums<S: Scalar>(levels: &[RiskLevel<S>]) -> (S, S) {
    levels.iter().fold((S::zero(), S::zero()), |(s1, s2), l| {
        let inv = S::one() / l.alpha();
        (s1 + inv, s2 + inv * inv)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    VarConcentration,
    VarTracking,
    ConvergenceBound,
    RateFit,
}

impl BoundKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundKind::VarConcentration => "var-concentration",
            BoundKind::VarTracking => "var-tracking",
            BoundKind::ConvergenceBound => "convergence-bound",
            BoundKind::RateFit => "rate-fit",
        }
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of comparing an empirical statistic with its theoretical bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub statistic: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Parameters of the VaR concentration check.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationCheck<S> {
    pub distribution: ClosedFormDistribution<S>,
    pub level: RiskLevel<S>,
    /// Sample size `t` of each VaR estimate.
    pub samples: usize,
    pub repeats: usize,
    pub epsilon: S,
    /// Density lower bound; defaults to the distribution's density.
    pub p_lower: Option<S>,
}

/// Empirical frequency of `|nu_hat - nu*| > eps` over independent sample sets
/// vs. `2 exp(-2 t eps^2 p^2)`. Passes when the frequency does not exceed the
/// bound by more than two binomial standard errors.
pub fn validate_var_concentration<S: Scalar, R: RngCore + ?Sized>(
    check: &ConcentrationCheck<S>,
    rng: &mut R,
) -> Result<BoundReport> {
    if check.repeats < 100 {
        return Err(domain("concentration check needs at least 100 repeats"));
    }
    if check.samples == 0 {
        return Err(domain("concentration check needs t >= 1"));
    }
    let p = check
        .p_lower
        .unwrap_or_else(|| check.distribution.density());
    let (truth, _) = check.distribution.var_cvar(check.level)?;
    let mut buf = vec![S::zero(); check.samples];
    let mut violations = 0usize;
    for _ in 0..check.repeats {
        for v in buf.iter_mut() {
            *v = check.distribution.sample(rng);
        }
        let est = VarEstimator::Exact.estimate(&mut buf, check.level)?;
        if (est - truth).abs() > check.epsilon {
            violations += 1;
        }
    }
    let freq = violations as f64 / check.repeats as f64;
    let bound = dkw_tail_bound(check.samples, check.epsilon, p).as_f64();
    let capped = bound.min(1.0);
    let slack = 2.0 * (capped * (1.0 - capped) / check.repeats as f64).sqrt();
    Ok(BoundReport {
        kind: BoundKind::VarConcentration,
        statistic: freq,
        bound,
        pass: freq <= bound + slack,
    })
}

/// Lipschitz constant and density lower bound of agent `agent`'s cost
/// distribution over all actions visited by `trace`.
pub fn density_constants_along<S: Scalar, G: StochasticGame<S> + ?Sized>(
    game: &G,
    trace: &RunTrace<S>,
    agent: usize,
) -> Result<(S, S)> {
    let mut lipschitz = S::zero();
    let mut p_lower = S::infinity();
    for r in &trace.records {
        let d = game
            .induced_cost_distribution(agent, &r.action)
            .ok_or_else(|| unsupported("cost distribution has no density at a visited action"))?;
        lipschitz = lipschitz.max(d.density());
        p_lower = p_lower.min(d.density());
    }
    Ok((lipschitz, p_lower))
}

/// Accumulated gradient-bias proxy `sum_t (B L0 / alpha) |nu_t - nu*_t|` vs.
/// `sqrt(2) B L0 / (alpha p) sqrt(ln(2T / gamma)) sqrt(t)` at every prefix `t`.
pub fn validate_var_tracking<S: Scalar>(
    trace: &RunTrace<S>,
    agent: usize,
    l0: S,
    grad_bound: S,
    p_lower: S,
    gamma: S,
) -> Result<BoundReport> {
    let errors = trace.var_errors(agent)?;
    let alpha = S::lit(trace.meta.alphas[agent]);
    if !(gamma > S::zero() && p_lower > S::zero()) {
        return Err(domain("gamma and the density lower bound must be positive"));
    }
    let horizon = S::count(errors.len());
    let scale = grad_bound * l0 / alpha;
    let coeff = S::lit(2.0).sqrt() * scale / p_lower * (S::lit(2.0) * horizon / gamma).ln().sqrt();
    let mut sum = S::zero();
    let mut bound = S::zero();
    let mut pass = true;
    for (k, &e) in errors.iter().enumerate() {
        sum = sum + scale * e;
        bound = coeff * S::count(k + 1).sqrt();
        pass &= sum <= bound;
    }
    Ok(BoundReport {
        kind: BoundKind::VarTracking,
        statistic: sum.as_f64(),
        bound: bound.as_f64(),
        pass,
    })
}

/// Constants entering the time-averaged convergence bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceConstants<S> {
    pub diameter: S,
    pub grad_bound: S,
    pub monotonicity: S,
    pub step: S,
    pub lipschitz: S,
    pub p_lower: S,
    pub gamma: S,
}

/// Right-hand side of the high-probability bound on `(1/T) sum E||x_t - x*||^2`:
/// `D^2 / (2 eta m T) + eta B^2 S_2 / (2m) + sqrt(2) D B L S_1 / (m p) sqrt(ln(2T/gamma)) / sqrt(T)`.
pub fn convergence_bound<S: Scalar>(
    c: &ConvergenceConstants<S>,
    levels: &[RiskLevel<S>],
    episodes: usize,
) -> S {
    let (s1, s2) = risk_sums(levels);
    let two = S::lit(2.0);
    let t = S::count(episodes);
    let m = c.monotonicity;
    let transient = c.diameter * c.diameter / (two * c.step * m * t);
    let variance = c.step * c.grad_bound * c.grad_bound * s2 / (two * m);
    let bias = two.sqrt() * c.diameter * c.grad_bound * c.lipschitz * s1 / (m * c.p_lower)
        * (two * t / c.gamma).ln().sqrt()
        / t.sqrt();
    transient + variance + bias
}

/// Compares the final trial-mean time-averaged error with [`convergence_bound`].
pub fn validate_convergence_bound<S: Scalar>(
    time_averaged: &AggregateTrace<S>,
    constants: &ConvergenceConstants<S>,
    levels: &[RiskLevel<S>],
) -> Result<BoundReport> {
    let last = *time_averaged
        .mean
        .last()
        .ok_or_else(|| domain("empty aggregate"))?;
    let bound = convergence_bound(constants, levels, time_averaged.len());
    Ok(BoundReport {
        kind: BoundKind::ConvergenceBound,
        statistic: last.as_f64(),
        bound: bound.as_f64(),
        pass: last <= bound,
    })
}

/// Rate fit reported as a bound check: passes when the slope is at most `max_slope`.
pub fn validate_rate<S: Scalar>(
    time_averaged: &AggregateTrace<S>,
    window: RangeInclusive<usize>,
    max_slope: f64,
) -> Result<BoundReport> {
    let slope = fit_rate(time_averaged, window)?;
    Ok(BoundReport {
        kind: BoundKind::RateFit,
        statistic: slope,
        bound: max_slope,
        pass: slope <= max_slope,
    })
}
