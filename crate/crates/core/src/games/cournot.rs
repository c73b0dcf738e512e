use std::marker::PhantomData;

use rand::{Rng, RngCore};

use super::{ActionProfile, BoxActionSet, NoiseSeed, StochasticGame};
use crate::distributions::{ClosedFormDistribution, RiskLevel};
use crate::scalar::Scalar;

/// Two-firm Cournot market with a noisy linear price.
///
/// Firm `i` pays `J_i(x, xi_i) = 1 - (2 - x_1 - x_2) x_i + 0.2 x_i + xi_i x_i`
/// with `xi_i ~ U(0, 1)` and production `x_i` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CournotGame<S> {
    sets: Vec<BoxActionSet<S>>,
    _scalar: PhantomData<S>,
}

impl<S: Scalar> Default for CournotGame<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> CournotGame<S> {
    pub const NAME: &'static str = "cournot";

    const DEMAND: f64 = 2.0;
    const MARGINAL_COST: f64 = 0.2;

    pub fn new() -> Self {
        let unit = BoxActionSet::interval(S::zero(), S::one()).expect("unit interval");
        Self {
            sets: vec![unit.clone(), unit],
            _scalar: PhantomData,
        }
    }

    #[inline]
    fn total(x: &ActionProfile<S>) -> S {
        x.scalar_action(0) + x.scalar_action(1)
    }

    /// Deterministic part of the gradient: `2 x_i + x_{-i} - 1.8`.
    #[inline]
    fn grad_base(agent: usize, x: &ActionProfile<S>) -> S {
        x.scalar_action(agent) + Self::total(x) - S::lit(Self::DEMAND - Self::MARGINAL_COST)
    }

    /// The unique equilibrium of the CVaR game: solves
    /// `2 x_i + x_{-i} = 0.8 + alpha_i / 2` and clips to the box.
    pub fn exact_ne(&self, levels: &[RiskLevel<S>]) -> ActionProfile<S> {
        let rhs = |i: usize| S::lit(0.8) + levels[i].alpha() / S::lit(2.0);
        let (r1, r2) = (rhs(0), rhs(1));
        let three = S::lit(3.0);
        let two = S::lit(2.0);
        let clip = |v: S| v.max(S::zero()).min(S::one());
        ActionProfile::scalar(&[clip((two * r1 - r2) / three), clip((two * r2 - r1) / three)])
    }
}

/// Risk-averse Nash equilibrium of the built-in Cournot game.
pub fn cournot_exact_ne<S: Scalar>(levels: &[RiskLevel<S>]) -> ActionProfile<S> {
    CournotGame::new().exact_ne(levels)
}

impl<S: Scalar> StochasticGame<S> for CournotGame<S> {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn action_sets(&self) -> &[BoxActionSet<S>] {
        &self.sets
    }

    fn sample_noise(&self, _agent: usize, rng: &mut dyn RngCore) -> NoiseSeed<S> {
        NoiseSeed::scalar(S::lit(rng.random::<f64>()))
    }

    #[inline]
    fn cost(&self, agent: usize, x: &ActionProfile<S>, xi: &NoiseSeed<S>) -> S {
        let xi_own = x.scalar_action(agent);
        S::one() - (S::lit(Self::DEMAND) - Self::total(x)) * xi_own
            + S::lit(Self::MARGINAL_COST) * xi_own
            + xi.first() * xi_own
    }

    #[inline]
    fn grad_into(&self, agent: usize, x: &ActionProfile<S>, xi: &NoiseSeed<S>, out: &mut [S]) {
        out[0] = Self::grad_base(agent, x) + xi.first();
    }

    /// `|2 x_i + x_{-i} - 1.8 + xi|` over `[0, 1]^2 x [0, 1]` peaks at `2.2`.
    fn grad_bound(&self) -> S {
        S::lit(2.2)
    }

    /// The cost is nondecreasing in `xi` with slope `x_i >= 0`, so its VaR is
    /// the cost at the noise quantile `xi = 1 - alpha`.
    fn exact_var(&self, agent: usize, x: &ActionProfile<S>, level: RiskLevel<S>) -> Option<S> {
        Some(self.cost(agent, x, &NoiseSeed::scalar(S::one() - level.alpha())))
    }

    /// `2 x_i + x_{-i} - 0.8 - alpha_i / 2`, valid for nonnegative actions.
    fn exact_risk_averse_gradient(
        &self,
        agent: usize,
        x: &ActionProfile<S>,
        level: RiskLevel<S>,
    ) -> Option<Vec<S>> {
        let tail_mean = S::one() - level.alpha() / S::lit(2.0);
        Some(vec![Self::grad_base(agent, x) + tail_mean])
    }

    fn nash_equilibrium(&self, levels: &[RiskLevel<S>]) -> Option<ActionProfile<S>> {
        Some(self.exact_ne(levels))
    }

    /// `x_i * U(0, 1) + J_i(x, 0)`; degenerate (no density) when `x_i = 0`.
    fn induced_cost_distribution(
        &self,
        agent: usize,
        x: &ActionProfile<S>,
    ) -> Option<ClosedFormDistribution<S>> {
        let shift = self.cost(agent, x, &NoiseSeed::scalar(S::zero()));
        ClosedFormDistribution::scaled_uniform(x.scalar_action(agent), shift, S::zero(), S::one())
            .ok()
    }

    /// The pseudo-gradient Jacobian is `[[2, 1], [1, 2]]` for every risk profile.
    fn monotonicity_constant(&self, _levels: &[RiskLevel<S>]) -> Option<S> {
        Some(S::one())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::evaluate_cost_and_grad;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn levels(a: &[f64]) -> Vec<RiskLevel<f64>> {
        a.iter().map(|&v| RiskLevel::new(v).unwrap()).collect()
    }

    #[test]
    fn equilibrium_values() {
        let ne = cournot_exact_ne(&levels(&[0.4, 0.8]));
        assert_abs_diff_eq!(ne.scalar_action(0), 0.2667, epsilon = 5e-5);
        assert_abs_diff_eq!(ne.scalar_action(1), 0.4667, epsilon = 5e-5);

        let neutral = cournot_exact_ne(&levels(&[1.0, 1.0]));
        assert_abs_diff_eq!(neutral.scalar_action(0), 1.3 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(neutral.scalar_action(1), 1.3 / 3.0, epsilon = 1e-15);

        for a in [0.05, 0.3, 0.77] {
            let sym = cournot_exact_ne(&levels(&[a, a]));
            assert_eq!(sym.scalar_action(0), sym.scalar_action(1));
        }
    }

    #[test]
    fn equilibrium_is_stationary() {
        let game = CournotGame::<f64>::new();
        for a in [[0.4, 0.8], [1.0, 1.0], [0.1, 0.95]] {
            let lv = levels(&a);
            let ne = game.exact_ne(&lv);
            for i in 0..2 {
                let g = game.exact_risk_averse_gradient(i, &ne, lv[i]).unwrap();
                assert!(g[0].abs() < 1e-12, "agent {i} gradient {}", g[0]);
            }
        }
    }

    /// Best-response iteration on a Monte Carlo CVaR (common random numbers,
    /// grid search over own action) lands on the linear-system solution.
    #[test]
    fn equilibrium_matches_best_response_on_sampled_cvar() {
        use crate::distributions::cvar_unsorted;
        let game = CournotGame::<f64>::new();
        let lv = levels(&[1.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise: Vec<Vec<NoiseSeed<f64>>> = (0..2)
            .map(|i| (0..4_000).map(|_| game.sample_noise(i, &mut rng)).collect())
            .collect();
        let mut x = [0.5, 0.5];
        for _ in 0..15 {
            for i in 0..2 {
                let mut best = (f64::INFINITY, 0.0);
                for k in 0..=200 {
                    let cand = k as f64 / 200.0;
                    let mut trial = x;
                    trial[i] = cand;
                    let p = ActionProfile::scalar(&trial);
                    let mut costs: Vec<f64> =
                        noise[i].iter().map(|xi| game.cost(i, &p, xi)).collect();
                    let c = cvar_unsorted(&mut costs, lv[i]).unwrap();
                    if c < best.0 {
                        best = (c, cand);
                    }
                }
                x[i] = best.1;
            }
        }
        let ne = game.exact_ne(&lv);
        assert_abs_diff_eq!(x[0], ne.scalar_action(0), epsilon = 0.01);
        assert_abs_diff_eq!(x[1], ne.scalar_action(1), epsilon = 0.01);
    }

    #[test]
    fn cost_and_gradient_by_hand() {
        let game = CournotGame::<f64>::new();
        let x = ActionProfile::scalar(&[0.0, 0.5]);
        for xi in [0.0, 0.3, 1.0] {
            let (c, g) = evaluate_cost_and_grad(&game, 0, &x, &NoiseSeed::scalar(xi)).unwrap();
            assert_abs_diff_eq!(c, 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(g[0], xi - 1.3, epsilon = 1e-15);
        }
        // at the equilibrium the sample gradient at the VaR noise level is -alpha/2
        let x = ActionProfile::scalar(&[0.2667, 0.4667]);
        let (_, g) = evaluate_cost_and_grad(&game, 0, &x, &NoiseSeed::scalar(0.6)).unwrap();
        assert_abs_diff_eq!(g[0], 2.0 * 0.2667 + 0.4667 - 1.8 + 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(g[0], -0.2, epsilon = 1e-3);

        let outside = ActionProfile::scalar(&[1.5, 0.0]);
        assert!(evaluate_cost_and_grad(&game, 0, &outside, &NoiseSeed::scalar(0.1)).is_err());
    }

    #[test]
    fn gradient_bound_audit() {
        let game = CournotGame::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst = 0.0f64;
        let mut g = [0.0];
        for _ in 0..100_000 {
            let x = ActionProfile::scalar(&[rng.random(), rng.random()]);
            let i = rng.random_range(0..2);
            let xi = game.sample_noise(i, &mut rng);
            game.grad_into(i, &x, &xi, &mut g);
            worst = worst.max(g[0].abs());
        }
        assert!(worst <= game.grad_bound());
        // the corner x = (1, 1), xi = 1 attains it
        game.grad_into(
            0,
            &ActionProfile::scalar(&[1.0, 1.0]),
            &NoiseSeed::scalar(1.0),
            &mut g,
        );
        assert_abs_diff_eq!(g[0], 2.2, epsilon = 1e-15);
    }

    #[test]
    fn exact_var_matches_induced_distribution() {
        let game = CournotGame::<f64>::new();
        let x = ActionProfile::scalar(&[0.3, 0.6]);
        let lv = RiskLevel::new(0.4).unwrap();
        for i in 0..2 {
            let d = game.induced_cost_distribution(i, &x).unwrap();
            let (var, _) = d.var_cvar(lv).unwrap();
            assert_abs_diff_eq!(game.exact_var(i, &x, lv).unwrap(), var, epsilon = 1e-14);
        }
        assert!(game
            .induced_cost_distribution(0, &ActionProfile::scalar(&[0.0, 0.6]))
            .is_none());
    }

    /// Exact gradient vs `E[1{J >= nu*} grad J] / alpha` over a large sample.
    #[test]
    fn exact_gradient_consistency() {
        let game = CournotGame::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut checked = 0;
        while checked < 4 {
            let x =
                ActionProfile::scalar(&[rng.random_range(0.05..1.0), rng.random_range(0.05..1.0)]);
            let i = rng.random_range(0..2);
            let lv = RiskLevel::new(rng.random_range(0.1..1.0)).unwrap();
            let exact = game.exact_risk_averse_gradient(i, &x, lv).unwrap()[0];
            if exact.abs() < 0.2 {
                // relative error is meaningless near a stationary point
                continue;
            }
            let d = game.induced_cost_distribution(i, &x).unwrap();
            let (nu, _) = d.var_cvar(lv).unwrap();
            let mut g = [0.0];
            let n = 1_000_000;
            let mut acc = 0.0;
            for _ in 0..n {
                let xi = game.sample_noise(i, &mut rng);
                if game.cost(i, &x, &xi) >= nu {
                    game.grad_into(i, &x, &xi, &mut g);
                    acc += g[0];
                }
            }
            let mc = acc / (n as f64 * lv.alpha());
            assert!(((mc - exact) / exact).abs() < 0.01, "mc {mc} exact {exact}");
            checked += 1;
        }
    }
}
