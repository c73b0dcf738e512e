//! Empirical distributions and the VaR/CVaR estimators built on them.
//!
//! The value at risk at level `alpha` is the `(1 - alpha)`-quantile
//! `inf { y : F(y) >= 1 - alpha }`; on an empirical distribution with `t`
//! samples this is the `ceil((1 - alpha) t)`-th order statistic. The
//! conditional value at risk uses the variational form
//! `nu + E[Z - nu]_+ / alpha` evaluated at that quantile.

use std::cmp::Ordering;

use rand::Rng;

use crate::error::{domain, state, Result};
use crate::scalar::Scalar;

/// Tail fraction `alpha` in `(0, 1]`. `alpha = 1` is the risk-neutral mean.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RiskLevel<S>(S);

impl<S: Scalar> RiskLevel<S> {
    pub fn new(alpha: S) -> Result<Self> {
        if alpha.is_finite() && alpha > S::zero() && alpha <= S::one() {
            Ok(Self(alpha))
        } else {
            Err(domain(format!(
                "risk level must lie in (0, 1], got {alpha}"
            )))
        }
    }

    pub fn risk_neutral() -> Self {
        Self(S::one())
    }

    #[inline]
    pub fn alpha(self) -> S {
        self.0
    }
}

/// 1-based rank of the order statistic that realizes `VaR_alpha` over `t` samples.
///
/// Rounding noise in `(1 - alpha) t` is snapped to the nearest integer so that
/// e.g. `alpha = 0.4, t = 1000` selects rank 600 rather than 601.
pub fn quantile_rank<S: Scalar>(t: usize, level: RiskLevel<S>) -> usize {
    if t == 0 {
        return 0;
    }
    let n = t as f64;
    let target = (1.0 - level.alpha().as_f64()) * n;
    let nearest = target.round();
    let tol = 4.0 * S::epsilon().as_f64() * n.max(1.0);
    let rank = if (target - nearest).abs() <= tol {
        nearest
    } else {
        target.ceil()
    };
    (rank as usize).clamp(1, t)
}

fn total_cmp<S: Scalar>(a: &S, b: &S) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

fn check_finite<S: Scalar>(value: S) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("sample must be finite, got {value}")))
    }
}

/// Sorted multiset of scalar cost samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmpiricalDistribution<S> {
    samples: Vec<S>,
}

impl<S: Scalar> EmpiricalDistribution<S> {
    pub fn new() -> Self {
        Self {
            samples: Vec::new(),
        }
    }

    pub fn from_samples(mut samples: Vec<S>) -> Result<Self> {
        for &s in &samples {
            check_finite(s)?;
        }
        samples.sort_unstable_by(total_cmp);
        Ok(Self { samples })
    }

    /// Inserts one sample, keeping the samples sorted. Duplicates are kept.
    pub fn insert(&mut self, value: S) -> Result<()> {
        check_finite(value)?;
        let at = self.samples.partition_point(|&s| s <= value);
        self.samples.insert(at, value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples in ascending order.
    pub fn samples(&self) -> &[S] {
        &self.samples
    }

    fn non_empty(&self) -> Result<()> {
        if self.samples.is_empty() {
            Err(state("empirical distribution has no samples"))
        } else {
            Ok(())
        }
    }

    /// Fraction of samples `<= y`.
    pub fn eval(&self, y: S) -> Result<S> {
        self.non_empty()?;
        let below = self.samples.partition_point(|&s| s <= y);
        Ok(S::count(below) / S::count(self.len()))
    }

    pub fn mean(&self) -> Result<S> {
        self.non_empty()?;
        Ok(self.samples.iter().copied().sum::<S>() / S::count(self.len()))
    }

    /// Smallest sample `y` with `eval(y) >= 1 - alpha`.
    pub fn var(&self, level: RiskLevel<S>) -> Result<S> {
        self.non_empty()?;
        Ok(self.samples[quantile_rank(self.len(), level) - 1])
    }

    /// Plug-in CVaR: `nu + sum_k [z_k - nu]_+ / (alpha t)` with `nu = var(level)`.
    pub fn cvar(&self, level: RiskLevel<S>) -> Result<S> {
        let nu = self.var(level)?;
        let rank = quantile_rank(self.len(), level);
        let excess: S = self.samples[rank..].iter().map(|&s| s - nu).sum();
        Ok(nu + excess / (level.alpha() * S::count(self.len())))
    }
}

/// VaR of an unsorted buffer in expected linear time. Reorders `values`.
pub fn var_unsorted<S: Scalar>(values: &mut [S], level: RiskLevel<S>) -> Result<S> {
    if values.is_empty() {
        return Err(state("cannot estimate VaR from zero samples"));
    }
    let rank = quantile_rank(values.len(), level);
    let (_, nth, _) = values.select_nth_unstable_by(rank - 1, total_cmp);
    Ok(*nth)
}

/// Plug-in CVaR of an unsorted buffer; same value as [`EmpiricalDistribution::cvar`].
pub fn cvar_unsorted<S: Scalar>(values: &mut [S], level: RiskLevel<S>) -> Result<S> {
    let nu = var_unsorted(values, level)?;
    let rank = quantile_rank(values.len(), level);
    // After selection every element past `rank - 1` is >= nu.
    let excess: S = values[rank..].iter().map(|&s| s - nu).sum();
    Ok(nu + excess / (level.alpha() * S::count(values.len())))
}

/// How the learner turns a batch of cost samples into a VaR estimate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum VarEstimator<S> {
    /// Exact order statistic of the samples.
    #[default]
    Exact,
    /// Order statistic snapped down to the left edge of an equal-width bin
    /// over `[min(0, min sample), upper]`; `upper` defaults to the largest sample.
    Binned { bins: usize, upper: Option<S> },
}

impl<S: Scalar> VarEstimator<S> {
    /// Estimates VaR from `values`, which may be reordered.
    pub fn estimate(&self, values: &mut [S], level: RiskLevel<S>) -> Result<S> {
        let nu = var_unsorted(values, level)?;
        match *self {
            VarEstimator::Exact => Ok(nu),
            VarEstimator::Binned { bins, upper } => {
                if bins == 0 {
                    return Err(domain("binned estimator needs at least one bin"));
                }
                let (lo, hi) = values
                    .iter()
                    .fold((S::zero(), S::neg_infinity()), |(lo, hi), &v| {
                        (lo.min(v), hi.max(v))
                    });
                let hi = upper.unwrap_or(hi);
                if hi <= lo {
                    return Ok(nu);
                }
                let width = (hi - lo) / S::count(bins);
                let idx = ((nu.min(hi) - lo) / width).floor().min(S::count(bins - 1));
                Ok(lo + idx * width)
            }
        }
    }
}

/// Parametric distributions with closed-form VaR and CVaR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosedFormDistribution<S> {
    /// `U(lo, hi)`.
    Uniform { lo: S, hi: S },
    /// `scale * U(lo, hi) + shift` with `scale > 0`.
    ScaledUniform { scale: S, shift: S, lo: S, hi: S },
}

impl<S: Scalar> ClosedFormDistribution<S> {
    pub fn uniform(lo: S, hi: S) -> Result<Self> {
        let d = ClosedFormDistribution::Uniform { lo, hi };
        d.validate()?;
        Ok(d)
    }

    pub fn scaled_uniform(scale: S, shift: S, lo: S, hi: S) -> Result<Self> {
        let d = ClosedFormDistribution::ScaledUniform {
            scale,
            shift,
            lo,
            hi,
        };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<()> {
        let (scale, shift, lo, hi) = self.parts();
        if !(lo.is_finite() && hi.is_finite() && shift.is_finite() && scale.is_finite()) {
            return Err(domain("distribution parameters must be finite"));
        }
        if hi <= lo {
            return Err(domain(format!(
                "uniform support needs hi > lo, got [{lo}, {hi}]"
            )));
        }
        if scale <= S::zero() {
            return Err(domain(format!(
                "scaled uniform needs a positive scale, got {scale}"
            )));
        }
        Ok(())
    }

    fn parts(&self) -> (S, S, S, S) {
        match *self {
            ClosedFormDistribution::Uniform { lo, hi } => (S::one(), S::zero(), lo, hi),
            ClosedFormDistribution::ScaledUniform {
                scale,
                shift,
                lo,
                hi,
            } => (scale, shift, lo, hi),
        }
    }

    /// Support `[lower, upper]`.
    pub fn support(&self) -> (S, S) {
        let (scale, shift, lo, hi) = self.parts();
        (scale * lo + shift, scale * hi + shift)
    }

    /// The density is constant on the support, so it is both the lower
    /// density bound and the CDF's Lipschitz constant.
    pub fn density(&self) -> S {
        let (a, b) = self.support();
        S::one() / (b - a)
    }

    pub fn cdf(&self, y: S) -> S {
        let (a, b) = self.support();
        ((y - a) / (b - a)).max(S::zero()).min(S::one())
    }

    pub fn mean(&self) -> S {
        let (a, b) = self.support();
        (a + b) / S::lit(2.0)
    }

    /// `(VaR_alpha, CVaR_alpha)`.
    pub fn var_cvar(&self, level: RiskLevel<S>) -> Result<(S, S)> {
        self.validate()?;
        let (a, b) = self.support();
        let alpha = level.alpha();
        let var = a + (S::one() - alpha) * (b - a);
        let cvar = a + (S::one() - alpha / S::lit(2.0)) * (b - a);
        Ok((var, cvar))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> S {
        let (a, b) = self.support();
        a + (b - a) * S::lit(rng.random::<f64>())
    }
}

/// Radius `eps` such that `P{|nu_hat - nu*| > eps} <= gamma_bar` for a VaR
/// estimate over `t` samples whose density is bounded below by `p_lower`.
pub fn dkw_confidence_width<S: Scalar>(t: usize, gamma_bar: S, p_lower: S) -> Result<S> {
    if t == 0 {
        return Err(domain("confidence width needs t >= 1"));
    }
    if !(gamma_bar > S::zero() && gamma_bar < S::one()) {
        return Err(domain(format!(
            "gamma_bar must lie in (0, 1), got {gamma_bar}"
        )));
    }
    if !(p_lower > S::zero() && p_lower.is_finite()) {
        return Err(domain(format!(
            "density lower bound must be positive, got {p_lower}"
        )));
    }
    let two = S::lit(2.0);
    Ok((two / gamma_bar).ln().sqrt() / (p_lower * (two * S::count(t)).sqrt()))
}

/// `2 exp(-2 t eps^2 p^2)`, the tail probability bound matching [`dkw_confidence_width`].
pub fn dkw_tail_bound<S: Scalar>(t: usize, eps: S, p_lower: S) -> S {
    let two = S::lit(2.0);
    two * (-two * S::count(t) * eps * eps * p_lower * p_lower).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lvl(a: f64) -> RiskLevel<f64> {
        RiskLevel::new(a).unwrap()
    }

    fn dist(v: &[f64]) -> EmpiricalDistribution<f64> {
        EmpiricalDistribution::from_samples(v.to_vec()).unwrap()
    }

    #[test]
    fn risk_level_bounds() {
        assert!(RiskLevel::new(0.0).is_err());
        assert!(RiskLevel::new(1.5).is_err());
        assert!(RiskLevel::new(f64::NAN).is_err());
        assert_eq!(RiskLevel::new(1.0).unwrap().alpha(), 1.0);
    }

    #[test]
    fn insert_keeps_order_and_duplicates() {
        let mut d = dist(&[1.0, 3.0]);
        d.insert(2.0).unwrap();
        assert_eq!(d.samples(), &[1.0, 2.0, 3.0]);
        assert_eq!(d.len(), 3);

        let mut d = dist(&[1.0]);
        d.insert(1.0).unwrap();
        assert_eq!(d.samples(), &[1.0, 1.0]);

        assert!(matches!(d.insert(f64::NAN), Err(crate::Error::Domain(_))));
        assert!(d.insert(f64::INFINITY).is_err());
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn edf_values() {
        let d = dist(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(d.eval(2.5).unwrap(), 0.5);
        assert_eq!(d.eval(0.0).unwrap(), 0.0);
        assert_eq!(d.eval(4.0).unwrap(), 1.0);
        assert_eq!(d.eval(100.0).unwrap(), 1.0);
        assert!(matches!(
            EmpiricalDistribution::<f64>::new().eval(0.0),
            Err(crate::Error::State(_))
        ));
    }

    #[test]
    fn var_and_cvar_small() {
        let d = dist(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(d.var(lvl(0.5)).unwrap(), 2.0);
        assert_eq!(d.var(lvl(1.0)).unwrap(), 1.0);
        // 2 + (0 + 0 + 1 + 2) / (0.5 * 4)
        assert_eq!(d.cvar(lvl(0.5)).unwrap(), 3.5);
        assert_eq!(d.cvar(lvl(1.0)).unwrap(), d.mean().unwrap());
        let empty = EmpiricalDistribution::<f64>::new();
        assert!(empty.var(lvl(0.5)).is_err());
        assert!(empty.cvar(lvl(0.5)).is_err());
    }

    #[test]
    fn rank_snaps_rounding_noise() {
        assert_eq!(quantile_rank(1000, lvl(0.4)), 600);
        assert_eq!(quantile_rank(10, lvl(0.7)), 3);
        assert_eq!(quantile_rank(3, lvl(0.5)), 2);
        assert_eq!(quantile_rank(5, lvl(1.0)), 1);
        assert_eq!(quantile_rank(5, lvl(1e-9)), 5);
        assert_eq!(quantile_rank(1000, RiskLevel::new(0.4f32).unwrap()), 600);
    }

    #[test]
    fn uniform_oracle_large_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = ClosedFormDistribution::uniform(0.0, 1.0).unwrap();
        let d = dist(&(0..100_000).map(|_| u.sample(&mut rng)).collect::<Vec<_>>());
        assert_abs_diff_eq!(d.var(lvl(0.4)).unwrap(), 0.6, epsilon = 0.01);
        assert_abs_diff_eq!(d.cvar(lvl(0.4)).unwrap(), 0.8, epsilon = 0.01);
    }

    #[test]
    fn closed_forms() {
        let u = ClosedFormDistribution::uniform(0.0, 1.0).unwrap();
        let (v, c) = u.var_cvar(lvl(0.4)).unwrap();
        assert_abs_diff_eq!(v, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(c, 0.8, epsilon = 1e-15);
        assert_eq!(u.var_cvar(lvl(1.0)).unwrap(), (0.0, 0.5));

        let d = 3.0;
        let ud = ClosedFormDistribution::uniform(0.0, d).unwrap();
        let (v, c) = ud.var_cvar(lvl(0.5)).unwrap();
        assert_abs_diff_eq!(v, 0.5 * d, epsilon = 1e-15);
        assert_abs_diff_eq!(c, 0.75 * d, epsilon = 1e-15);

        // 2 * U(0, 1) + 1 == U(1, 3)
        let s = ClosedFormDistribution::scaled_uniform(2.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(s.support(), (1.0, 3.0));
        assert_eq!(s.density(), 0.5);
        assert_eq!(s.var_cvar(lvl(0.5)).unwrap(), (2.0, 2.5));

        assert!(ClosedFormDistribution::uniform(1.0, 1.0).is_err());
        assert!(ClosedFormDistribution::scaled_uniform(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(ClosedFormDistribution::scaled_uniform(-1.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn dkw_width_values() {
        let eps = dkw_confidence_width(1000, 0.05, 1.0).unwrap();
        assert_abs_diff_eq!(eps, 40f64.ln().sqrt() / 2000f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(eps, 0.04295, epsilon = 5e-6);
        let quarter = dkw_confidence_width(4000, 0.05, 1.0).unwrap();
        assert_abs_diff_eq!(quarter, eps / 2.0, epsilon = 1e-15);
        let halved_p = dkw_confidence_width(1000, 0.05, 0.5).unwrap();
        assert_abs_diff_eq!(halved_p, 2.0 * eps, epsilon = 1e-15);
        assert_abs_diff_eq!(dkw_tail_bound(1000, eps, 1.0), 0.05, epsilon = 1e-12);
        assert!(dkw_confidence_width(0, 0.05, 1.0).is_err());
        assert!(dkw_confidence_width(10, 1.0, 1.0).is_err());
        assert!(dkw_confidence_width(10, 0.05, 0.0).is_err());
    }

    #[test]
    fn binned_estimator_snaps_to_left_edge() {
        let mut v = vec![0.05, 0.15, 0.25, 0.35];
        let est = VarEstimator::Binned {
            bins: 4,
            upper: Some(0.4),
        };
        // exact VaR at alpha = 0.5 is 0.15, which lies in bin [0.1, 0.2)
        assert_abs_diff_eq!(
            est.estimate(&mut v, lvl(0.5)).unwrap(),
            0.1,
            epsilon = 1e-12
        );
        let mut v = vec![0.05, 0.15, 0.25, 0.35];
        assert_eq!(
            VarEstimator::Exact.estimate(&mut v, lvl(0.5)).unwrap(),
            0.15
        );
        let mut one = vec![2.0];
        let fine = VarEstimator::Binned {
            bins: 1000,
            upper: None,
        };
        assert!(fine.estimate(&mut one, lvl(0.5)).unwrap() <= 2.0);
    }

    fn samples_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0..100.0f64, 1..60)
    }

    proptest! {
        #[test]
        fn cvar_is_monotone_in_alpha(v in samples_strategy(), a in 0.01..1.0f64, b in 0.01..1.0f64) {
            let d = dist(&v);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let slack = 1e-9 * (1.0 + v.iter().map(|x| x.abs()).fold(0.0, f64::max));
            prop_assert!(d.cvar(lvl(lo)).unwrap() + slack >= d.cvar(lvl(hi)).unwrap());
            prop_assert!(d.cvar(lvl(lo)).unwrap() + slack >= d.mean().unwrap());
            prop_assert!(d.cvar(lvl(lo)).unwrap() >= d.var(lvl(lo)).unwrap());
        }

        #[test]
        fn translation_and_scaling(v in samples_strategy(), a in 0.01..1.0f64, c in -50.0..50.0f64, s in 0.1..10.0f64) {
            let d = dist(&v);
            let shifted = dist(&v.iter().map(|x| x + c).collect::<Vec<_>>());
            let scaled = dist(&v.iter().map(|x| x * s).collect::<Vec<_>>());
            let l = lvl(a);
            let tol = 1e-9 * (1.0 + c.abs() + 100.0 * s);
            prop_assert!((shifted.var(l).unwrap() - d.var(l).unwrap() - c).abs() < tol);
            prop_assert!((shifted.cvar(l).unwrap() - d.cvar(l).unwrap() - c).abs() < tol);
            prop_assert!((scaled.var(l).unwrap() - s * d.var(l).unwrap()).abs() < tol);
            prop_assert!((scaled.cvar(l).unwrap() - s * d.cvar(l).unwrap()).abs() < tol);
        }

        #[test]
        fn insertion_matches_bulk_sort(v in samples_strategy()) {
            let mut d = EmpiricalDistribution::new();
            for &x in &v {
                d.insert(x).unwrap();
            }
            prop_assert_eq!(&d, &dist(&v));
            prop_assert!(d.samples().windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(d.eval(d.samples()[d.len() - 1]).unwrap(), 1.0);
            prop_assert_eq!(d.eval(d.samples()[0] - 1.0).unwrap(), 0.0);
        }

        #[test]
        fn edf_at_distinct_order_statistics(v in prop::collection::btree_set(-1000i32..1000, 1..50)) {
            let xs: Vec<f64> = v.into_iter().map(f64::from).collect();
            let d = dist(&xs);
            for (k, &x) in d.samples().iter().enumerate() {
                prop_assert_eq!(d.eval(x).unwrap(), (k + 1) as f64 / xs.len() as f64);
            }
        }

        #[test]
        fn selection_agrees_with_sorting(v in samples_strategy(), a in 0.01..1.0f64) {
            let d = dist(&v);
            let mut buf = v.clone();
            prop_assert_eq!(var_unsorted(&mut buf, lvl(a)).unwrap(), d.var(lvl(a)).unwrap());
            let mut buf = v.clone();
            let c = cvar_unsorted(&mut buf, lvl(a)).unwrap();
            prop_assert!((c - d.cvar(lvl(a)).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn var_is_inf_quantile(v in samples_strategy(), a in 0.01..1.0f64) {
            let d = dist(&v);
            let l = lvl(a);
            let nu = d.var(l).unwrap();
            prop_assert!(d.eval(nu).unwrap() >= 1.0 - a - 1e-12);
            // every strictly smaller sample falls short of the 1 - alpha level
            if let Some(&below) = d.samples().iter().rfind(|&&s| s < nu) {
                prop_assert!(d.eval(below).unwrap() < 1.0 - a + 1e-12);
            }
        }
    }
}
