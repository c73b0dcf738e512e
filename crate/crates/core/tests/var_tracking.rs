use cvar_nash::analysis::{
    density_constants_along, fit_rate, validate_var_tracking, AggregateTrace,
};
use cvar_nash::seeds::trial_seed;
use cvar_nash::{run, ActionProfile, Algorithm, CournotGame, RiskLevel, RunConfig, StochasticGame};

fn cournot_config(episodes: usize) -> RunConfig<f64> {
    let levels = vec![RiskLevel::new(0.4).unwrap(), RiskLevel::new(0.8).unwrap()];
    let mut cfg = RunConfig::new(levels, episodes);
    cfg.x0 = Some(ActionProfile::scalar(&[0.5, 0.5]));
    cfg
}

#[test]
fn var_error_decays_like_inverse_sqrt() {
    let game = CournotGame::new();
    let cfg = cournot_config(1000);
    let series: Vec<Vec<f64>> = (0..50)
        .map(|r| {
            run(&game, Algorithm::Algorithm1, &cfg, trial_seed(7, r))
                .unwrap()
                .var_errors(0)
                .unwrap()
        })
        .collect();
    let agg = AggregateTrace::from_series(&series).unwrap();
    let early: f64 = agg.mean[9..50].iter().sum::<f64>() / 41.0;
    let late: f64 = agg.mean[900..].iter().sum::<f64>() / 100.0;
    assert!(late < early / 3.0, "early {early}, late {late}");
    let slope = fit_rate(&agg, 10..=1000).unwrap();
    assert!((-0.75..=-0.3).contains(&slope), "slope {slope}");
}

#[test]
fn accumulated_var_error_within_bound() {
    let game = CournotGame::new();
    let cfg = cournot_config(2000);
    for r in 0..5 {
        let trace = run(&game, Algorithm::Algorithm1, &cfg, trial_seed(11, r)).unwrap();
        for agent in 0..2 {
            let (l0, p) = density_constants_along(&game, &trace, agent).unwrap();
            let rep = validate_var_tracking(&trace, agent, l0, game.grad_bound(), p, 0.05).unwrap();
            assert!(rep.pass, "trial {r} agent {agent}: {rep:?}");
        }
    }
}

#[test]
fn unbiased_baseline_has_no_var_error() {
    let game = CournotGame::new();
    let trace = run(&game, Algorithm::UnbiasedFirstOrder, &cournot_config(50), 3).unwrap();
    assert!(trace.var_errors(0).unwrap().iter().all(|&e| e == 0.0));
    assert!(trace.var_errors(1).unwrap().iter().all(|&e| e == 0.0));
}
