//! Sampling checks of the structural properties a game has to satisfy.

use rand::{Rng, RngCore};

use super::{ActionProfile, BoxActionSet, StochasticGame};
use crate::error::{domain, state, Result};
use crate::scalar::{norm_sq, Scalar};

/// Pairs closer than this are rejected by the monotonicity probe.
const MIN_PAIR_DISTANCE: f64 = 1e-6;

/// Attempts allowed per requested pair before the probe gives up.
const ATTEMPTS_PER_PAIR: usize = 1000;

/// How the monotonicity probe draws `(x, x')`.
#[derive(Debug, Clone, PartialEq)]
pub enum PairSampling<S> {
    /// Both points independently uniform over the boxes.
    Uniform,
    /// `x` uniform, `x' = x + s * direction` with a random step `s`
    /// (direction is agent-major over all coordinates).
    Direction(Vec<S>),
}

/// `sum_i <F_i(x) - F_i(x'), x_i - x'_i> / ||x - x'||^2`, or `None` for a degenerate pair.
pub fn pair_ratio<S, F>(oracle: &F, x: &ActionProfile<S>, x_prime: &ActionProfile<S>) -> Option<S>
where
    S: Scalar,
    F: Fn(usize, &ActionProfile<S>) -> Vec<S>,
{
    let dist_sq = x.sq_distance(x_prime);
    if dist_sq.sqrt() < S::lit(MIN_PAIR_DISTANCE) {
        return None;
    }
    let inner: S = (0..x.num_agents())
        .map(|i| {
            let g = oracle(i, x);
            let g_prime = oracle(i, x_prime);
            g.iter()
                .zip(&g_prime)
                .zip(x.block(i).iter().zip(x_prime.block(i)))
                .map(|((&a, &b), (&u, &v))| (a - b) * (u - v))
                .sum::<S>()
        })
        .sum();
    Some(inner / dist_sq)
}

fn unflatten<S: Scalar>(flat: &[S], sets: &[BoxActionSet<S>]) -> ActionProfile<S> {
    let mut offset = 0;
    let blocks = sets
        .iter()
        .map(|s| {
            let b = flat[offset..offset + s.dim()].to_vec();
            offset += s.dim();
            b
        })
        .collect();
    ActionProfile::new(blocks)
}

/// Minimum observed monotonicity ratio over `num_pairs` random feasible pairs.
///
/// This is a sampling upper estimate of the strong monotonicity constant `m`;
/// a value near zero means the pseudo-gradient is flat along some direction.
pub fn monotonicity_probe<S, F, R>(
    oracle: F,
    sets: &[BoxActionSet<S>],
    num_pairs: usize,
    sampling: &PairSampling<S>,
    rng: &mut R,
) -> Result<S>
where
    S: Scalar,
    F: Fn(usize, &ActionProfile<S>) -> Vec<S>,
    R: RngCore + ?Sized,
{
    if num_pairs == 0 {
        return Err(domain("monotonicity probe needs at least one pair"));
    }
    let dim: usize = sets.iter().map(BoxActionSet::dim).sum();
    let unit_dir = match sampling {
        PairSampling::Uniform => None,
        PairSampling::Direction(d) => {
            let n = norm_sq(d).sqrt();
            if d.len() != dim || !(n > S::zero()) {
                return Err(domain(
                    "probe direction must be nonzero with one entry per coordinate",
                ));
            }
            Some(d.iter().map(|&v| v / n).collect::<Vec<_>>())
        }
    };
    let reach = sets.iter().map(BoxActionSet::diameter).sum::<S>();
    let feasible = |p: &ActionProfile<S>| p.is_feasible(sets);

    let mut min_ratio = S::infinity();
    let mut accepted = 0;
    for _ in 0..num_pairs.saturating_mul(ATTEMPTS_PER_PAIR) {
        let x = ActionProfile::new(sets.iter().map(|s| s.sample(rng)).collect());
        let x_prime = match &unit_dir {
            None => ActionProfile::new(sets.iter().map(|s| s.sample(rng)).collect()),
            Some(dir) => {
                let step = reach * S::lit(rng.random_range(-1.0..1.0));
                let flat: Vec<S> = x
                    .flatten()
                    .iter()
                    .zip(dir)
                    .map(|(&v, &d)| v + step * d)
                    .collect();
                unflatten(&flat, sets)
            }
        };
        if !feasible(&x_prime) {
            continue;
        }
        if let Some(r) = pair_ratio(&oracle, &x, &x_prime) {
            min_ratio = min_ratio.min(r);
            accepted += 1;
            if accepted == num_pairs {
                return Ok(min_ratio);
            }
        }
    }
    Err(state(format!(
        "only {accepted} of {num_pairs} non-degenerate pairs found within the attempt budget"
    )))
}

/// Checks that noise enters each cost independently of the other agents'
/// actions: `J_i(x_i, y, xi) - J_i(x_i, y, xi')` must not depend on `y`.
pub fn decomposition_check<S, G, R>(game: &G, num_samples: usize, rng: &mut R) -> bool
where
    S: Scalar,
    G: StochasticGame<S> + ?Sized,
    R: RngCore,
{
    let sets = game.action_sets();
    let tol = S::lit(1e-9);
    for _ in 0..num_samples {
        for agent in 0..game.num_agents() {
            let own = sets[agent].sample(rng);
            let xi = game.sample_noise(agent, rng);
            let xi_prime = game.sample_noise(agent, rng);
            let profile = |own: &[S], rng: &mut R| {
                let blocks = sets
                    .iter()
                    .enumerate()
                    .map(|(j, s)| {
                        if j == agent {
                            own.to_vec()
                        } else {
                            s.sample(rng)
                        }
                    })
                    .collect();
                ActionProfile::new(blocks)
            };
            let x = profile(&own, rng);
            let y = profile(&own, rng);
            let diff_x = game.cost(agent, &x, &xi) - game.cost(agent, &x, &xi_prime);
            let diff_y = game.cost(agent, &y, &xi) - game.cost(agent, &y, &xi_prime);
            if (diff_x - diff_y).abs() > tol {
                return false;
            }
        }
    }
    true
}
