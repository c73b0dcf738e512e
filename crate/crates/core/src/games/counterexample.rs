use rand::{Rng, RngCore};

use super::{ActionProfile, BoxActionSet, NoiseSeed, StochasticGame};
use crate::distributions::{ClosedFormDistribution, RiskLevel};
use crate::error::{domain, Result};
use crate::scalar::Scalar;

/// Two-agent quadratic game whose risk-neutral version is strongly monotone
/// while its CVaR version at `alpha = 0.5` has a whole line of equilibria.
///
/// `J_i(x, xi_i) = c + a x_i^2 + a x_i x_{-i} - a b x_i + (4a / 3d) x_i x_{-i} xi_i`
/// with `xi_i ~ U(0, d)` and actions in `[0, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCounterexampleGame<S> {
    a: S,
    b: S,
    c: S,
    d: S,
    sets: Vec<BoxActionSet<S>>,
}

impl<S: Scalar> QuadraticCounterexampleGame<S> {
    pub const NAME: &'static str = "quadratic-counterexample";

    pub fn new(a: S, b: S, c: S, d: S) -> Result<Self> {
        if !(a > S::zero() && a.is_finite()) {
            return Err(domain(format!("parameter a must be positive, got {a}")));
        }
        if !(b > S::zero() && b.is_finite()) {
            return Err(domain(format!("parameter b must be positive, got {b}")));
        }
        if !(d > S::zero() && d.is_finite()) {
            return Err(domain(format!("parameter d must be positive, got {d}")));
        }
        if !c.is_finite() {
            return Err(domain("parameter c must be finite"));
        }
        let set = BoxActionSet::interval(S::zero(), b)?;
        Ok(Self {
            a,
            b,
            c,
            d,
            sets: vec![set.clone(), set],
        })
    }

    pub fn params(&self) -> (S, S, S, S) {
        (self.a, self.b, self.c, self.d)
    }

    #[inline]
    fn noise_coeff(&self) -> S {
        S::lit(4.0) * self.a / (S::lit(3.0) * self.d)
    }

    /// Coefficient `k_i` of `a x_{-i}` in the CVaR gradient
    /// `a (2 x_i + k_i x_{-i} - b)`: `k_i = 1 + (4/3)(1 - alpha_i / 2)`.
    fn cross_coeff(level: RiskLevel<S>) -> S {
        S::one() + S::lit(4.0 / 3.0) * (S::one() - level.alpha() / S::lit(2.0))
    }

    fn is_singular(levels: &[RiskLevel<S>]) -> bool {
        let k1 = Self::cross_coeff(levels[0]);
        let k2 = Self::cross_coeff(levels[1]);
        (S::lit(4.0) - k1 * k2).abs() <= S::lit(1e3) * S::epsilon()
    }
}

impl<S: Scalar> StochasticGame<S> for QuadraticCounterexampleGame<S> {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn action_sets(&self) -> &[BoxActionSet<S>] {
        &self.sets
    }

    fn sample_noise(&self, _agent: usize, rng: &mut dyn RngCore) -> NoiseSeed<S> {
        NoiseSeed::scalar(self.d * S::lit(rng.random::<f64>()))
    }

    #[inline]
    fn cost(&self, agent: usize, x: &ActionProfile<S>, xi: &NoiseSeed<S>) -> S {
        let own = x.scalar_action(agent);
        let other = x.scalar_action(1 - agent);
        self.c + self.a * own * own + self.a * own * other - self.a * self.b * own
            + self.noise_coeff() * own * other * xi.first()
    }

    #[inline]
    fn grad_into(&self, agent: usize, x: &ActionProfile<S>, xi: &NoiseSeed<S>, out: &mut [S]) {
        let own = x.scalar_action(agent);
        let other = x.scalar_action(1 - agent);
        out[0] = S::lit(2.0) * self.a * own + self.a * other - self.a * self.b
            + self.noise_coeff() * other * xi.first();
    }

    /// The gradient ranges over `[-ab, 10ab/3]` on the box and noise support.
    fn grad_bound(&self) -> S {
        S::lit(10.0 / 3.0) * self.a * self.b
    }

    /// Nonnegative actions make the cost nondecreasing in `xi`.
    fn exact_var(&self, agent: usize, x: &ActionProfile<S>, level: RiskLevel<S>) -> Option<S> {
        let xi = (S::one() - level.alpha()) * self.d;
        Some(self.cost(agent, x, &NoiseSeed::scalar(xi)))
    }

    fn exact_risk_averse_gradient(
        &self,
        agent: usize,
        x: &ActionProfile<S>,
        level: RiskLevel<S>,
    ) -> Option<Vec<S>> {
        let own = x.scalar_action(agent);
        let other = x.scalar_action(1 - agent);
        let k = Self::cross_coeff(level);
        Some(vec![self.a * (S::lit(2.0) * own + k * other - self.b)])
    }

    /// Interior solution of the stationarity system when it is unique.
    fn nash_equilibrium(&self, levels: &[RiskLevel<S>]) -> Option<ActionProfile<S>> {
        if Self::is_singular(levels) {
            return None;
        }
        let k1 = Self::cross_coeff(levels[0]);
        let k2 = Self::cross_coeff(levels[1]);
        // 2 x1 + k1 x2 = b, k2 x1 + 2 x2 = b
        let two = S::lit(2.0);
        let det = two * two - k1 * k2;
        let x1 = self.b * (two - k1) / det;
        let x2 = self.b * (two - k2) / det;
        let ne = ActionProfile::scalar(&[x1, x2]);
        ne.is_feasible(&self.sets).then_some(ne)
    }

    /// At `alpha = (0.5, 0.5)` the equilibria form the segment
    /// `x_1 + x_2 = b / 2` inside the box.
    fn equilibrium_sq_distance(&self, levels: &[RiskLevel<S>], x: &ActionProfile<S>) -> Option<S> {
        if !Self::is_singular(levels) {
            return self.nash_equilibrium(levels).map(|ne| ne.sq_distance(x));
        }
        let half = self.b / S::lit(2.0);
        let (p, q) = (x.scalar_action(0), x.scalar_action(1));
        // project onto the line, then clamp to the segment endpoints (0, b/2) and (b/2, 0)
        let shift = (p + q - half) / S::lit(2.0);
        let u = (p - shift).max(S::zero()).min(half);
        let v = half - u;
        Some((p - u) * (p - u) + (q - v) * (q - v))
    }

    fn induced_cost_distribution(
        &self,
        agent: usize,
        x: &ActionProfile<S>,
    ) -> Option<ClosedFormDistribution<S>> {
        let own = x.scalar_action(agent);
        let other = x.scalar_action(1 - agent);
        let shift = self.cost(agent, x, &NoiseSeed::scalar(S::zero()));
        ClosedFormDistribution::scaled_uniform(
            self.noise_coeff() * own * other,
            shift,
            S::zero(),
            self.d,
        )
        .ok()
    }

    /// Smallest eigenvalue of the symmetrized CVaR pseudo-gradient Jacobian
    /// `a [[2, k_1], [k_2, 2]]`, when positive.
    fn monotonicity_constant(&self, levels: &[RiskLevel<S>]) -> Option<S> {
        let k1 = Self::cross_coeff(levels[0]);
        let k2 = Self::cross_coeff(levels[1]);
        let m = self.a * (S::lit(2.0) - (k1 + k2) / S::lit(2.0));
        (m > S::zero()).then_some(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::cvar_unsorted;
    use crate::games::evaluate_cost_and_grad;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_game() -> QuadraticCounterexampleGame<f64> {
        QuadraticCounterexampleGame::new(1.0, 1.0, 0.0, 1.0).unwrap()
    }

    fn lv(a: f64) -> RiskLevel<f64> {
        RiskLevel::new(a).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(QuadraticCounterexampleGame::new(0.0, 1.0, 0.0, 1.0).is_err());
        assert!(QuadraticCounterexampleGame::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(QuadraticCounterexampleGame::new(1.0, 1.0, 0.0, -1.0).is_err());
        assert!(QuadraticCounterexampleGame::new(1.0, 1.0, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn stationary_on_equilibrium_line_at_tail_quantile() {
        let game = unit_game();
        let x = ActionProfile::scalar(&[0.25, 0.25]);
        let (_, g) = evaluate_cost_and_grad(&game, 0, &x, &NoiseSeed::scalar(0.75)).unwrap();
        assert_abs_diff_eq!(g[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn risk_averse_cost_closed_form() {
        // CVaR_0.5 of J_i is c + a x_i^2 + 2a x_i x_{-i} - a b x_i
        let game = unit_game();
        let x = ActionProfile::scalar(&[0.3, 0.3]);
        let expected = 0.09 + 2.0 * 0.09 - 0.3;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut costs: Vec<f64> = (0..1_000_000)
            .map(|_| game.cost(0, &x, &game.sample_noise(0, &mut rng)))
            .collect();
        let mc = cvar_unsorted(&mut costs, lv(0.5)).unwrap();
        assert!(((mc - expected) / expected).abs() < 0.01, "mc {mc}");

        let (_, closed) = game
            .induced_cost_distribution(0, &x)
            .unwrap()
            .var_cvar(lv(0.5))
            .unwrap();
        assert_abs_diff_eq!(closed, expected, epsilon = 1e-14);
    }

    #[test]
    fn equilibrium_set_at_half() {
        let game = unit_game();
        let half = [lv(0.5), lv(0.5)];
        assert!(game.nash_equilibrium(&half).is_none());
        for p in [0.0, 0.1, 0.25, 0.5] {
            let x = ActionProfile::scalar(&[p, 0.5 - p]);
            for i in 0..2 {
                let g = game.exact_risk_averse_gradient(i, &x, half[i]).unwrap();
                assert_abs_diff_eq!(g[0], 0.0, epsilon = 1e-15);
            }
            assert_abs_diff_eq!(
                game.equilibrium_sq_distance(&half, &x).unwrap(),
                0.0,
                epsilon = 1e-15
            );
        }
        // (0.5, 0.5) sits 0.5 / sqrt(2) away from the line
        let far = ActionProfile::scalar(&[0.5, 0.5]);
        assert_abs_diff_eq!(
            game.equilibrium_sq_distance(&half, &far).unwrap(),
            0.125,
            epsilon = 1e-15
        );
        // beyond the segment end the nearest point is the endpoint (0.5, 0)
        let corner = ActionProfile::scalar(&[1.0, 0.0]);
        assert_abs_diff_eq!(
            game.equilibrium_sq_distance(&half, &corner).unwrap(),
            0.25,
            epsilon = 1e-15
        );
        assert!(game.monotonicity_constant(&half).is_none());
    }

    #[test]
    fn risk_neutral_equilibrium_is_unique() {
        let game = unit_game();
        let neutral = [lv(1.0), lv(1.0)];
        let ne = game.nash_equilibrium(&neutral).unwrap();
        // 2x + (5/3)x = 1
        assert_abs_diff_eq!(ne.scalar_action(0), 3.0 / 11.0, epsilon = 1e-14);
        for i in 0..2 {
            let g = game.exact_risk_averse_gradient(i, &ne, neutral[i]).unwrap();
            assert_abs_diff_eq!(g[0], 0.0, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(
            game.monotonicity_constant(&neutral).unwrap(),
            1.0 / 3.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn gradient_bound_audit() {
        let game = QuadraticCounterexampleGame::new(2.0, 1.5, 0.3, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut g = [0.0];
        for _ in 0..100_000 {
            let x = ActionProfile::scalar(&[1.5 * rng.random::<f64>(), 1.5 * rng.random::<f64>()]);
            let i = rng.random_range(0..2);
            game.grad_into(i, &x, &game.sample_noise(i, &mut rng), &mut g);
            assert!(g[0].abs() <= game.grad_bound());
        }
    }

    #[test]
    fn exact_var_matches_order_statistic() {
        let game = unit_game();
        let x = ActionProfile::scalar(&[0.4, 0.7]);
        let exact = game.exact_var(1, &x, lv(0.3)).unwrap();
        let (var, _) = game
            .induced_cost_distribution(1, &x)
            .unwrap()
            .var_cvar(lv(0.3))
            .unwrap();
        assert_abs_diff_eq!(exact, var, epsilon = 1e-14);
    }
}
