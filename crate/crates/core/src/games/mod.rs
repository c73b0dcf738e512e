//! Stochastic convex games with box action sets.
//!
//! A game exposes per-agent stochastic costs `J_i(x, xi_i)` and their partial
//! gradients with respect to the agent's own block `x_i`. Games that admit
//! closed forms additionally report the true VaR of each agent's cost, the
//! exact CVaR gradient and the risk-averse Nash equilibrium; the learners and
//! validators use these as references.

mod counterexample;
mod cournot;
mod probe;

use rand::RngCore;

pub use counterexample::QuadraticCounterexampleGame;
pub use cournot::{cournot_exact_ne, CournotGame};
pub use probe::{decomposition_check, monotonicity_probe, pair_ratio, PairSampling};

use crate::distributions::{ClosedFormDistribution, RiskLevel};
use crate::error::{domain, Result};
use crate::scalar::Scalar;

/// Axis-aligned box `[lower, upper]` for one agent's action block.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxActionSet<S> {
    lower: Vec<S>,
    upper: Vec<S>,
}

impl<S: Scalar> BoxActionSet<S> {
    pub fn new(lower: Vec<S>, upper: Vec<S>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(domain("box bounds must be nonempty and of equal dimension"));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(&l, &u)| !(l.is_finite() && u.is_finite() && l < u))
        {
            return Err(domain("box needs finite lower < upper in every coordinate"));
        }
        Ok(Self { lower, upper })
    }

    /// One-dimensional interval `[lower, upper]`.
    pub fn interval(lower: S, upper: S) -> Result<Self> {
        Self::new(vec![lower], vec![upper])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[S] {
        &self.lower
    }

    pub fn upper(&self) -> &[S] {
        &self.upper
    }

    pub fn contains(&self, x: &[S]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&l, &u))| v >= l && v <= u)
    }

    pub fn center(&self) -> Vec<S> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| (l + u) / S::lit(2.0))
            .collect()
    }

    pub fn diameter(&self) -> S {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| (u - l) * (u - l))
            .sum::<S>()
            .sqrt()
    }

    /// Euclidean projection, which is a componentwise clamp for boxes.
    pub fn project_in_place(&self, x: &mut [S]) {
        for (v, (&l, &u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.max(l).min(u);
        }
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> Vec<S> {
        use rand::Rng;
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| l + (u - l) * S::lit(rng.random::<f64>()))
            .collect()
    }
}

/// Joint action `x = (x_1, ..., x_N)`, one block per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionProfile<S> {
    blocks: Vec<Vec<S>>,
}

impl<S: Scalar> ActionProfile<S> {
    pub fn new(blocks: Vec<Vec<S>>) -> Self {
        Self { blocks }
    }

    /// Profile with a single scalar action per agent.
    pub fn scalar(actions: &[S]) -> Self {
        Self::new(actions.iter().map(|&a| vec![a]).collect())
    }

    pub fn center_of(sets: &[BoxActionSet<S>]) -> Self {
        Self::new(sets.iter().map(BoxActionSet::center).collect())
    }

    pub fn num_agents(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, agent: usize) -> &[S] {
        &self.blocks[agent]
    }

    pub fn block_mut(&mut self, agent: usize) -> &mut [S] {
        &mut self.blocks[agent]
    }

    pub fn blocks(&self) -> &[Vec<S>] {
        &self.blocks
    }

    /// All coordinates, agent-major.
    pub fn flatten(&self) -> Vec<S> {
        self.blocks.iter().flatten().copied().collect()
    }

    /// First coordinate of agent `agent`'s block; the built-in games are scalar.
    #[inline]
    pub fn scalar_action(&self, agent: usize) -> S {
        self.blocks[agent][0]
    }

    pub fn sq_distance(&self, other: &Self) -> S {
        self.blocks
            .iter()
            .flatten()
            .zip(other.blocks.iter().flatten())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum()
    }

    pub fn is_feasible(&self, sets: &[BoxActionSet<S>]) -> bool {
        self.blocks.len() == sets.len() && self.blocks.iter().zip(sets).all(|(b, s)| s.contains(b))
    }
}

/// One realization of an agent's noise `xi_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSeed<S>(Vec<S>);

impl<S: Scalar> NoiseSeed<S> {
    pub fn new(value: Vec<S>) -> Self {
        Self(value)
    }

    pub fn scalar(value: S) -> Self {
        Self(vec![value])
    }

    pub fn value(&self) -> &[S] {
        &self.0
    }

    #[inline]
    pub fn first(&self) -> S {
        self.0[0]
    }
}

/// A repeated game with stochastic per-agent costs.
///
/// `cost(i, ., xi)` must be convex in the agent's own block and
/// `grad_into` must stay within `grad_bound()` in norm on the feasible set.
pub trait StochasticGame<S: Scalar>: Send + Sync {
    fn name(&self) -> &str;

    fn action_sets(&self) -> &[BoxActionSet<S>];

    fn num_agents(&self) -> usize {
        self.action_sets().len()
    }

    fn sample_noise(&self, agent: usize, rng: &mut dyn RngCore) -> NoiseSeed<S>;

    fn cost(&self, agent: usize, x: &ActionProfile<S>, xi: &NoiseSeed<S>) -> S;

    /// Writes `grad_{x_i} J_i(x, xi)` into `out` (length = agent block dimension).
    fn grad_into(&self, agent: usize, x: &ActionProfile<S>, xi: &NoiseSeed<S>, out: &mut [S]);

    /// Uniform bound `B` on `||grad_i J_i||` over the feasible set and noise support.
    fn grad_bound(&self) -> S;

    /// Largest per-agent box diameter `D`.
    fn diameter(&self) -> S {
        self.action_sets()
            .iter()
            .map(BoxActionSet::diameter)
            .fold(S::zero(), S::max)
    }

    /// True VaR of `J_i(x, xi_i)`.
    fn exact_var(&self, _agent: usize, _x: &ActionProfile<S>, _level: RiskLevel<S>) -> Option<S> {
        None
    }

    /// Closed form of the CVaR gradient `grad_i C_i(x)`.
    fn exact_risk_averse_gradient(
        &self,
        _agent: usize,
        _x: &ActionProfile<S>,
        _level: RiskLevel<S>,
    ) -> Option<Vec<S>> {
        None
    }

    /// Unique risk-averse Nash equilibrium for the given risk profile.
    fn nash_equilibrium(&self, _levels: &[RiskLevel<S>]) -> Option<ActionProfile<S>> {
        None
    }

    /// Squared distance from `x` to the equilibrium set.
    fn equilibrium_sq_distance(&self, levels: &[RiskLevel<S>], x: &ActionProfile<S>) -> Option<S> {
        self.nash_equilibrium(levels).map(|ne| ne.sq_distance(x))
    }

    /// Distribution of `J_i(x, xi_i)` when it has a closed form.
    fn induced_cost_distribution(
        &self,
        _agent: usize,
        _x: &ActionProfile<S>,
    ) -> Option<ClosedFormDistribution<S>> {
        None
    }

    /// Strong monotonicity constant of the risk-averse game, when known and positive.
    fn monotonicity_constant(&self, _levels: &[RiskLevel<S>]) -> Option<S> {
        None
    }
}

/// `(J_i(x, xi), grad_i J_i(x, xi))` at a feasible joint action.
pub fn evaluate_cost_and_grad<S: Scalar, G: StochasticGame<S> + ?Sized>(
    game: &G,
    agent: usize,
    x: &ActionProfile<S>,
    xi: &NoiseSeed<S>,
) -> Result<(S, Vec<S>)> {
    if agent >= game.num_agents() {
        return Err(domain(format!("agent index {agent} out of range")));
    }
    if !x.is_feasible(game.action_sets()) {
        return Err(domain("joint action lies outside the action sets"));
    }
    let mut g = vec![S::zero(); x.block(agent).len()];
    game.grad_into(agent, x, xi, &mut g);
    Ok((game.cost(agent, x, xi), g))
}

/// Exact CVaR pseudo-gradient of a game as a probe oracle.
pub fn exact_gradient_oracle<'a, S: Scalar, G: StochasticGame<S> + ?Sized>(
    game: &'a G,
    levels: &'a [RiskLevel<S>],
) -> impl Fn(usize, &ActionProfile<S>) -> Vec<S> + 'a {
    move |agent, x| {
        game.exact_risk_averse_gradient(agent, x, levels[agent])
            .expect("game provides exact risk-averse gradients")
    }
}

/// Looks up a built-in game by its registered name.
#[derive(Debug, Clone, PartialEq)]
pub enum BuiltinGame<S> {
    Cournot(CournotGame<S>),
    QuadraticCounterexample(QuadraticCounterexampleGame<S>),
}

impl<S: Scalar> BuiltinGame<S> {
    pub const NAMES: [&'static str; 2] = [
        CournotGame::<f64>::NAME,
        QuadraticCounterexampleGame::<f64>::NAME,
    ];

    fn inner(&self) -> &dyn StochasticGame<S> {
        match self {
            BuiltinGame::Cournot(g) => g,
            BuiltinGame::QuadraticCounterexample(g) => g,
        }
    }
}

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*) -> $ret:ty;)*) => {
        $(fn $name(&self, $($arg: $ty),*) -> $ret {
            match self {
                BuiltinGame::Cournot(g) => g.$name($($arg),*),
                BuiltinGame::QuadraticCounterexample(g) => g.$name($($arg),*),
            }
        })*
    };
}

impl<S: Scalar> StochasticGame<S> for BuiltinGame<S> {
    fn name(&self) -> &str {
        self.inner().name()
    }

    fn action_sets(&self) -> &[BoxActionSet<S>] {
        match self {
            BuiltinGame::Cournot(g) => g.action_sets(),
            BuiltinGame::QuadraticCounterexample(g) => g.action_sets(),
        }
    }

    delegate! {
        sample_noise(agent: usize, rng: &mut dyn RngCore) -> NoiseSeed<S>;
        cost(agent: usize, x: &ActionProfile<S>, xi: &NoiseSeed<S>) -> S;
        grad_into(agent: usize, x: &ActionProfile<S>, xi: &NoiseSeed<S>, out: &mut [S]) -> ();
        grad_bound() -> S;
        exact_var(agent: usize, x: &ActionProfile<S>, level: RiskLevel<S>) -> Option<S>;
        exact_risk_averse_gradient(agent: usize, x: &ActionProfile<S>, level: RiskLevel<S>) -> Option<Vec<S>>;
        nash_equilibrium(levels: &[RiskLevel<S>]) -> Option<ActionProfile<S>>;
        equilibrium_sq_distance(levels: &[RiskLevel<S>], x: &ActionProfile<S>) -> Option<S>;
        induced_cost_distribution(agent: usize, x: &ActionProfile<S>) -> Option<ClosedFormDistribution<S>>;
        monotonicity_constant(levels: &[RiskLevel<S>]) -> Option<S>;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_projection_and_geometry() {
        let b = BoxActionSet::new(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        let mut x = vec![1.2, -0.1];
        b.project_in_place(&mut x);
        assert_eq!(x, vec![1.0, 0.0]);
        assert_eq!(b.center(), vec![0.5, 1.0]);
        assert!((b.diameter() - 5.0f64.sqrt()).abs() < 1e-15);
        assert!(b.contains(&[0.0, 2.0]));
        assert!(!b.contains(&[0.0, 2.1]));
        assert!(BoxActionSet::interval(1.0, 1.0).is_err());
        assert!(BoxActionSet::<f64>::new(vec![0.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn profile_distance() {
        let a = ActionProfile::scalar(&[0.0, 0.0]);
        let b = ActionProfile::scalar(&[3.0, 4.0]);
        assert_eq!(a.sq_distance(&b), 25.0);
        assert_eq!(b.flatten(), vec![3.0, 4.0]);
    }

    #[test]
    fn registry_names() {
        assert_eq!(
            BuiltinGame::<f64>::NAMES,
            ["cournot", "quadratic-counterexample"]
        );
    }
}
