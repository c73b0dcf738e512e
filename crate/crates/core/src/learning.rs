//! First-order risk-averse learning with projected gradient play.
//!
//! Every episode each agent draws one fresh noise realization, re-evaluates
//! its whole noise history at the current joint action, estimates the VaR of
//! the resulting cost sample and averages the sampled gradients over the tail
//! `{J >= VaR}`, scaled by `1 / (alpha t)`. All agents then take a projected
//! step from the same joint action.

use std::fmt;
use std::str::FromStr;

use crate::analysis::{EpisodeRecord, RunTrace, TraceMeta};
use crate::distributions::{RiskLevel, VarEstimator};
use crate::error::{domain, state, unsupported, Error, Result};
use crate::games::{ActionProfile, BoxActionSet, NoiseSeed, StochasticGame};
use crate::scalar::Scalar;
use crate::seeds::agent_rng;

/// CVaR gradient estimate of one agent at one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate<S> {
    pub g: Vec<S>,
    /// VaR value the tail indicator was evaluated against.
    pub var_used: S,
    /// Number of history samples with cost `>= var_used`.
    pub tail_count: usize,
}

/// Euclidean projection onto a box.
pub fn project_box<S: Scalar>(x: &[S], set: &BoxActionSet<S>) -> Vec<S> {
    let mut out = x.to_vec();
    set.project_in_place(&mut out);
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule<S> {
    /// `eta = (D / B) T^{-1/2}` with the game's diameter and gradient bound.
    Auto,
    Constant(S),
}

impl<S: Scalar> StepSchedule<S> {
    pub fn resolve(&self, diameter: S, grad_bound: S, episodes: usize) -> Result<S> {
        match *self {
            StepSchedule::Auto => {
                if episodes == 0 || !(grad_bound > S::zero()) {
                    return Err(domain("automatic step size needs T >= 1 and B > 0"));
                }
                Ok(diameter / grad_bound / S::count(episodes).sqrt())
            }
            StepSchedule::Constant(eta) if eta >= S::zero() && eta.is_finite() => Ok(eta),
            StepSchedule::Constant(eta) => {
                Err(domain(format!("step size must be >= 0, got {eta}")))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    /// VaR estimated from the empirical distribution of the noise history.
    Algorithm1,
    /// Same loop with the true VaR plugged in.
    UnbiasedFirstOrder,
}

impl Algorithm {
    pub const ALL: [Algorithm; 2] = [Algorithm::Algorithm1, Algorithm::UnbiasedFirstOrder];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Algorithm1 => "algorithm1",
            Algorithm::UnbiasedFirstOrder => "unbiased-fo",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| {
                domain(format!(
                    "unknown algorithm `{s}` (expected algorithm1 or unbiased-fo)"
                ))
            })
    }
}

/// Everything one learning run needs besides the game and the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig<S> {
    pub levels: Vec<RiskLevel<S>>,
    pub episodes: usize,
    pub step: StepSchedule<S>,
    /// Initial joint action; defaults to the center of the boxes.
    pub x0: Option<ActionProfile<S>>,
    /// Re-evaluate only the most recent `window` noise samples. Off by default;
    /// this departs from full-history re-evaluation.
    pub window: Option<usize>,
    pub estimator: VarEstimator<S>,
}

impl<S: Scalar> RunConfig<S> {
    pub fn new(levels: Vec<RiskLevel<S>>, episodes: usize) -> Self {
        Self {
            levels,
            episodes,
            step: StepSchedule::Auto,
            x0: None,
            window: None,
            estimator: VarEstimator::Exact,
        }
    }
}

/// Per-agent state carried across episodes.
#[derive(Debug, Clone)]
pub struct LearnerState<S> {
    pub agent: usize,
    pub level: RiskLevel<S>,
    pub noise_history: Vec<NoiseSeed<S>>,
    pub step: S,
}

/// Reusable buffers for the history re-evaluation.
#[derive(Debug, Default)]
struct Workspace<S> {
    costs: Vec<S>,
    scratch: Vec<S>,
    grad: Vec<S>,
}

impl<S: Scalar> Workspace<S> {
    fn evaluate_costs<G: StochasticGame<S> + ?Sized>(
        &mut self,
        game: &G,
        agent: usize,
        x: &ActionProfile<S>,
        history: &[NoiseSeed<S>],
    ) {
        self.costs.clear();
        self.costs
            .extend(history.iter().map(|xi| game.cost(agent, x, xi)));
    }

    fn estimate_var(&mut self, estimator: &VarEstimator<S>, level: RiskLevel<S>) -> Result<S> {
        self.scratch.clear();
        self.scratch.extend_from_slice(&self.costs);
        estimator.estimate(&mut self.scratch, level)
    }

    /// `(1 / (t alpha)) sum_k 1{J_k >= nu} grad J_k` over the evaluated costs.
    fn tail_gradient<G: StochasticGame<S> + ?Sized>(
        &mut self,
        game: &G,
        agent: usize,
        x: &ActionProfile<S>,
        history: &[NoiseSeed<S>],
        level: RiskLevel<S>,
        nu: S,
    ) -> GradientEstimate<S> {
        let dim = x.block(agent).len();
        let mut g = vec![S::zero(); dim];
        self.grad.resize(dim, S::zero());
        let mut tail_count = 0;
        for (xi, &cost) in history.iter().zip(&self.costs) {
            if cost >= nu {
                game.grad_into(agent, x, xi, &mut self.grad);
                for (acc, &v) in g.iter_mut().zip(&self.grad) {
                    *acc = *acc + v;
                }
                tail_count += 1;
            }
        }
        let scale = S::one() / (S::count(history.len()) * level.alpha());
        for v in &mut g {
            *v = *v * scale;
        }
        GradientEstimate {
            g,
            var_used: nu,
            tail_count,
        }
    }
}

fn check_inputs<S: Scalar, G: StochasticGame<S> + ?Sized>(
    game: &G,
    agent: usize,
    x: &ActionProfile<S>,
    history: &[NoiseSeed<S>],
) -> Result<()> {
    if history.is_empty() {
        return Err(state("noise history is empty"));
    }
    if agent >= game.num_agents() {
        return Err(domain(format!("agent index {agent} out of range")));
    }
    if !x.is_feasible(game.action_sets()) {
        return Err(domain("joint action lies outside the action sets"));
    }
    Ok(())
}

/// CVaR gradient with the VaR estimated from the history's empirical distribution.
pub fn cvar_gradient_estimate<S: Scalar, G: StochasticGame<S> + ?Sized>(
    game: &G,
    agent: usize,
    x: &ActionProfile<S>,
    history: &[NoiseSeed<S>],
    level: RiskLevel<S>,
    estimator: &VarEstimator<S>,
) -> Result<GradientEstimate<S>> {
    check_inputs(game, agent, x, history)?;
    let mut ws = Workspace::default();
    ws.evaluate_costs(game, agent, x, history);
    let nu = ws.estimate_var(estimator, level)?;
    Ok(ws.tail_gradient(game, agent, x, history, level, nu))
}

/// CVaR gradient with the tail threshold fixed to the true VaR `exact_var`.
pub fn unbiased_cvar_gradient<S: Scalar, G: StochasticGame<S> + ?Sized>(
    game: &G,
    agent: usize,
    x: &ActionProfile<S>,
    history: &[NoiseSeed<S>],
    level: RiskLevel<S>,
    exact_var: S,
) -> Result<GradientEstimate<S>> {
    check_inputs(game, agent, x, history)?;
    let mut ws = Workspace::default();
    ws.evaluate_costs(game, agent, x, history);
    Ok(ws.tail_gradient(game, agent, x, history, level, exact_var))
}

pub fn run_algorithm1<S: Scalar, G: StochasticGame<S> + ?Sized>(
    game: &G,
    config: &RunConfig<S>,
    seed: u64,
) -> Result<RunTrace<S>> {
    run(game, Algorithm::Algorithm1, config, seed)
}

pub fn run_unbiased_baseline<S: Scalar, G: StochasticGame<S> + ?Sized>(
    game: &G,
    config: &RunConfig<S>,
    seed: u64,
) -> Result<RunTrace<S>> {
    run(game, Algorithm::UnbiasedFirstOrder, config, seed)
}

/// Runs `config.episodes` episodes of simultaneous projected gradient play.
///
/// Agent `i` draws its noise from stream `i` of the generator seeded with
/// `seed`, so both algorithms see the same noise under the same seed.
pub fn run<S: Scalar, G: StochasticGame<S> + ?Sized>(
    game: &G,
    algorithm: Algorithm,
    config: &RunConfig<S>,
    seed: u64,
) -> Result<RunTrace<S>> {
    let n = game.num_agents();
    let sets = game.action_sets();
    if config.levels.len() != n {
        return Err(domain(format!(
            "expected {n} risk levels, got {}",
            config.levels.len()
        )));
    }
    if config.episodes == 0 {
        return Err(domain("number of episodes must be >= 1"));
    }
    if config.window == Some(0) {
        return Err(domain("history window must be >= 1"));
    }
    let mut x = config
        .x0
        .clone()
        .unwrap_or_else(|| ActionProfile::center_of(sets));
    if !x.is_feasible(sets) {
        return Err(domain("initial action lies outside the action sets"));
    }
    let step = config
        .step
        .resolve(game.diameter(), game.grad_bound(), config.episodes)?;
    if algorithm == Algorithm::UnbiasedFirstOrder
        && (0..n).any(|i| game.exact_var(i, &x, config.levels[i]).is_none())
    {
        return Err(unsupported(format!(
            "game `{}` has no closed-form VaR for the unbiased baseline",
            game.name()
        )));
    }

    let mut rngs: Vec<_> = (0..n).map(|i| agent_rng(seed, i)).collect();
    let mut learners: Vec<LearnerState<S>> = (0..n)
        .map(|i| LearnerState {
            agent: i,
            level: config.levels[i],
            noise_history: Vec::with_capacity(config.episodes),
            step,
        })
        .collect();
    let mut ws = Workspace::default();
    let mut records = Vec::with_capacity(config.episodes);

    for t in 1..=config.episodes {
        for (learner, rng) in learners.iter_mut().zip(&mut rngs) {
            let xi = game.sample_noise(learner.agent, rng);
            learner.noise_history.push(xi);
        }

        let true_vars: Option<Vec<S>> = learners
            .iter()
            .map(|l| game.exact_var(l.agent, &x, l.level))
            .collect();
        let mut estimates = Vec::with_capacity(n);
        for learner in &learners {
            let history = match config.window {
                Some(w) if w < learner.noise_history.len() => {
                    &learner.noise_history[learner.noise_history.len() - w..]
                }
                _ => &learner.noise_history[..],
            };
            ws.evaluate_costs(game, learner.agent, &x, history);
            let nu = match algorithm {
                Algorithm::Algorithm1 => ws.estimate_var(&config.estimator, learner.level)?,
                Algorithm::UnbiasedFirstOrder => {
                    true_vars.as_ref().expect("checked above")[learner.agent]
                }
            };
            estimates.push(ws.tail_gradient(game, learner.agent, &x, history, learner.level, nu));
        }

        records.push(EpisodeRecord {
            t,
            action: x.clone(),
            var_estimates: estimates.iter().map(|e| e.var_used).collect(),
            true_vars,
            sq_error: game.equilibrium_sq_distance(&config.levels, &x),
        });

        for (learner, est) in learners.iter().zip(&estimates) {
            let block = x.block_mut(learner.agent);
            for (v, &g) in block.iter_mut().zip(&est.g) {
                *v = *v - learner.step * g;
            }
            sets[learner.agent].project_in_place(block);
        }
    }

    Ok(RunTrace {
        meta: TraceMeta {
            game: game.name().to_string(),
            algorithm,
            alphas: config.levels.iter().map(|l| l.alpha().as_f64()).collect(),
            step: step.as_f64(),
            episodes: config.episodes,
            seed,
        },
        records,
        final_action: x,
    })
}
