//! Experiment configuration: a flat TOML document, validated into
//! [`ExperimentConfig`] with defaults filled in.

use std::path::{Path, PathBuf};

use cvar_nash::{
    ActionProfile, Algorithm, BuiltinGame, CournotGame, QuadraticCounterexampleGame, RiskLevel,
    StepSchedule, StochasticGame, VarEstimator,
};
use thiserror::Error;
use toml::{Table, Value};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{field}: {message}")]
pub struct ConfigError {
    /// Key (or `key[index]`) the problem was found at; `<document>` for syntax errors.
    pub field: String,
    pub message: String,
}

fn err(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.into(),
        message: message.into(),
    }
}

pub const KEYS: [&str; 14] = [
    "game",
    "a",
    "b",
    "c",
    "d",
    "alphas",
    "T",
    "R",
    "seed",
    "step",
    "x0",
    "algorithms",
    "window",
    "edf",
];
const EXTRA_KEYS: [&str; 1] = ["out"];
const ALIASES: [(&str, &str); 2] = [("episodes", "T"), ("trials", "R")];

pub const DEFAULT_EPISODES: usize = 5000;
pub const DEFAULT_TRIALS: usize = 20;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_OUT: &str = "out";

#[derive(Debug, Clone, PartialEq)]
pub enum GameSpec {
    Cournot,
    QuadraticCounterexample { a: f64, b: f64, c: f64, d: f64 },
}

impl GameSpec {
    pub fn name(&self) -> &'static str {
        match self {
            GameSpec::Cournot => CournotGame::<f64>::NAME,
            GameSpec::QuadraticCounterexample { .. } => QuadraticCounterexampleGame::<f64>::NAME,
        }
    }

    pub fn build(&self) -> BuiltinGame<f64> {
        match *self {
            GameSpec::Cournot => BuiltinGame::Cournot(CournotGame::new()),
            GameSpec::QuadraticCounterexample { a, b, c, d } => {
                BuiltinGame::QuadraticCounterexample(
                    QuadraticCounterexampleGame::new(a, b, c, d).expect("parameters validated"),
                )
            }
        }
    }

    fn default_alphas(&self) -> Vec<f64> {
        match self {
            GameSpec::Cournot => vec![0.4, 0.8],
            GameSpec::QuadraticCounterexample { .. } => vec![0.5, 0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub game: GameSpec,
    pub alphas: Vec<f64>,
    pub episodes: usize,
    pub trials: usize,
    pub seed: u64,
    pub step: StepSchedule<f64>,
    /// Initial action, all coordinates agent by agent.
    pub x0: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    pub window: Option<usize>,
    pub estimator: VarEstimator<f64>,
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn levels(&self) -> Vec<RiskLevel<f64>> {
        self.alphas
            .iter()
            .map(|&a| RiskLevel::new(a).expect("validated"))
            .collect()
    }

    pub fn initial_action(&self, game: &dyn StochasticGame<f64>) -> ActionProfile<f64> {
        let mut offset = 0;
        ActionProfile::new(
            game.action_sets()
                .iter()
                .map(|s| {
                    let block = self.x0[offset..offset + s.dim()].to_vec();
                    offset += s.dim();
                    block
                })
                .collect(),
        )
    }

    pub fn run_config(&self, game: &dyn StochasticGame<f64>) -> cvar_nash::RunConfig<f64> {
        let mut cfg = cvar_nash::RunConfig::new(self.levels(), self.episodes);
        cfg.step = self.step;
        cfg.x0 = Some(self.initial_action(game));
        cfg.window = self.window;
        cfg.estimator = self.estimator;
        cfg
    }

    /// Every field written out explicitly; parses back to an identical config.
    pub fn to_toml(&self) -> String {
        let mut t = Table::new();
        t.insert("game".into(), Value::String(self.game.name().into()));
        if let GameSpec::QuadraticCounterexample { a, b, c, d } = self.game {
            for (k, v) in [("a", a), ("b", b), ("c", c), ("d", d)] {
                t.insert(k.into(), Value::Float(v));
            }
        }
        t.insert("alphas".into(), floats(&self.alphas));
        t.insert("T".into(), Value::Integer(self.episodes as i64));
        t.insert("R".into(), Value::Integer(self.trials as i64));
        t.insert("seed".into(), Value::Integer(self.seed as i64));
        t.insert(
            "step".into(),
            match self.step {
                StepSchedule::Auto => Value::String("auto".into()),
                StepSchedule::Constant(eta) => Value::Float(eta),
            },
        );
        t.insert("x0".into(), floats(&self.x0));
        t.insert(
            "algorithms".into(),
            Value::Array(
                self.algorithms
                    .iter()
                    .map(|a| Value::String(a.as_str().into()))
                    .collect(),
            ),
        );
        if let Some(w) = self.window {
            t.insert("window".into(), Value::Integer(w as i64));
        }
        t.insert("edf".into(), Value::String(estimator_name(&self.estimator)));
        t.insert(
            "out".into(),
            Value::String(self.out.to_string_lossy().into_owned()),
        );
        toml::to_string(&t).expect("plain table serializes")
    }
}

fn floats(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| Value::Float(x)).collect())
}

pub fn estimator_name(e: &VarEstimator<f64>) -> String {
    match e {
        VarEstimator::Exact => "exact".into(),
        VarEstimator::Binned { bins, upper: None } => format!("binned:{bins}"),
        VarEstimator::Binned {
            bins,
            upper: Some(u),
        } => format!("binned:{bins}:{u}"),
    }
}

fn parse_estimator(s: &str) -> Result<VarEstimator<f64>, ConfigError> {
    let bad = || {
        err(
            "edf",
            format!("expected `exact`, `binned:<bins>` or `binned:<bins>:<upper>`, got `{s}`"),
        )
    };
    if s == "exact" {
        return Ok(VarEstimator::Exact);
    }
    let mut parts = s.split(':');
    if parts.next() != Some("binned") {
        return Err(bad());
    }
    let bins: usize = parts.next().and_then(|b| b.parse().ok()).ok_or_else(bad)?;
    if bins == 0 {
        return Err(err("edf", "number of bins must be >= 1"));
    }
    let upper = match parts.next() {
        None => None,
        Some(u) => Some(
            u.parse::<f64>()
                .ok()
                .filter(|u| u.is_finite())
                .ok_or_else(bad)?,
        ),
    };
    if parts.next().is_some() {
        return Err(bad());
    }
    Ok(VarEstimator::Binned { bins, upper })
}

fn type_name(v: &Value) -> &'static str {
    v.type_str()
}

fn as_f64(field: &str, v: &Value) -> Result<f64, ConfigError> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(err(
            field,
            format!("expected a number, got {}", type_name(other)),
        )),
    }
}

fn as_count(field: &str, v: &Value) -> Result<usize, ConfigError> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        Value::Integer(i) => Err(err(
            field,
            format!("expected a nonnegative integer, got {i}"),
        )),
        other => Err(err(
            field,
            format!("expected an integer, got {}", type_name(other)),
        )),
    }
}

fn as_f64_list(field: &str, v: &Value) -> Result<Vec<f64>, ConfigError> {
    match v {
        Value::Array(items) => items
            .iter()
            .enumerate()
            .map(|(k, x)| as_f64(&format!("{field}[{k}]"), x))
            .collect(),
        other => Err(err(
            field,
            format!("expected an array of numbers, got {}", type_name(other)),
        )),
    }
}

fn as_str<'a>(field: &str, v: &'a Value) -> Result<&'a str, ConfigError> {
    v.as_str()
        .ok_or_else(|| err(field, format!("expected a string, got {}", type_name(v))))
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| err("<document>", e.to_string().trim_end().to_string()))?;
    validate_config(&table)
}

pub fn load_config(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
    parse_config(&text).map_err(|e| anyhow::anyhow!("invalid config {}: {e}", path.display()))
}

/// Applies defaults and checks every field of a raw key-value document.
pub fn validate_config(raw: &Table) -> Result<ExperimentConfig, ConfigError> {
    let mut doc = Table::new();
    for (key, value) in raw {
        let canonical = ALIASES
            .iter()
            .find(|(alias, _)| alias == key)
            .map_or(key.as_str(), |(_, k)| k);
        if !KEYS.contains(&canonical) && !EXTRA_KEYS.contains(&canonical) {
            return Err(err(key, "unknown key"));
        }
        if doc.insert(canonical.to_string(), value.clone()).is_some() {
            return Err(err(
                key,
                format!("given more than once (as `{canonical}` and an alias)"),
            ));
        }
    }
    let get = |k: &str| doc.get(k);

    let game_name = as_str(
        "game",
        get("game").ok_or_else(|| err("game", "missing required key"))?,
    )?;
    let game = match game_name {
        "cournot" => {
            if let Some(k) = ["a", "b", "c", "d"]
                .into_iter()
                .find(|k| doc.contains_key(*k))
            {
                return Err(err(k, "not a parameter of game `cournot`"));
            }
            GameSpec::Cournot
        }
        "quadratic-counterexample" => {
            let param = |k: &str, default: f64| get(k).map_or(Ok(default), |v| as_f64(k, v));
            let (a, b, c, d) = (
                param("a", 1.0)?,
                param("b", 1.0)?,
                param("c", 0.0)?,
                param("d", 1.0)?,
            );
            for (k, v) in [("a", a), ("b", b), ("d", d)] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(err(k, format!("must be positive and finite, got {v}")));
                }
            }
            if !c.is_finite() {
                return Err(err("c", "must be finite"));
            }
            GameSpec::QuadraticCounterexample { a, b, c, d }
        }
        other => {
            return Err(err(
                "game",
                format!(
                    "unknown game `{other}` (expected one of {})",
                    BuiltinGame::<f64>::NAMES.join(", ")
                ),
            ))
        }
    };
    let built = game.build();
    let num_agents = built.num_agents();

    let alphas = match get("alphas") {
        Some(v) => as_f64_list("alphas", v)?,
        None => game.default_alphas(),
    };
    if alphas.len() != num_agents {
        return Err(err(
            "alphas",
            format!("expected {num_agents} risk levels, got {}", alphas.len()),
        ));
    }
    for (k, &a) in alphas.iter().enumerate() {
        if RiskLevel::new(a).is_err() {
            return Err(err(
                format!("alphas[{k}]"),
                format!("risk level must lie in (0, 1], got {a}"),
            ));
        }
    }

    let episodes = get("T").map_or(Ok(DEFAULT_EPISODES), |v| as_count("T", v))?;
    if episodes == 0 {
        return Err(err("T", "number of episodes must be >= 1"));
    }
    let trials = get("R").map_or(Ok(DEFAULT_TRIALS), |v| as_count("R", v))?;
    if trials == 0 {
        return Err(err("R", "number of trials must be >= 1"));
    }
    let seed = get("seed").map_or(Ok(DEFAULT_SEED as usize), |v| as_count("seed", v))? as u64;

    let step = match get("step") {
        None => StepSchedule::Auto,
        Some(Value::String(s)) if s == "auto" => StepSchedule::Auto,
        Some(Value::String(s)) => {
            return Err(err(
                "step",
                format!("expected `auto` or a number, got `{s}`"),
            ))
        }
        Some(v) => {
            let eta = as_f64("step", v)?;
            if !(eta >= 0.0 && eta.is_finite()) {
                return Err(err(
                    "step",
                    format!("step size must be finite and >= 0, got {eta}"),
                ));
            }
            StepSchedule::Constant(eta)
        }
    };

    let sets = built.action_sets();
    let x0 = match get("x0") {
        Some(v) => {
            let x0 = as_f64_list("x0", v)?;
            let dim: usize = sets.iter().map(|s| s.dim()).sum();
            if x0.len() != dim {
                return Err(err(
                    "x0",
                    format!("expected {dim} coordinates, got {}", x0.len()),
                ));
            }
            x0
        }
        None => ActionProfile::center_of(sets).flatten(),
    };
    let mut offset = 0;
    for s in sets {
        for k in 0..s.dim() {
            let v = x0[offset + k];
            if !(v >= s.lower()[k] && v <= s.upper()[k]) {
                return Err(err(
                    format!("x0[{}]", offset + k),
                    format!("{v} lies outside [{}, {}]", s.lower()[k], s.upper()[k]),
                ));
            }
        }
        offset += s.dim();
    }

    let algorithms = match get("algorithms") {
        None => Algorithm::ALL.to_vec(),
        Some(Value::Array(items)) => {
            let mut out = Vec::with_capacity(items.len());
            for (k, item) in items.iter().enumerate() {
                let field = format!("algorithms[{k}]");
                let alg: Algorithm = as_str(&field, item)?
                    .parse()
                    .map_err(|e: cvar_nash::Error| err(&field, e.to_string()))?;
                if out.contains(&alg) {
                    return Err(err(field, format!("`{alg}` listed twice")));
                }
                out.push(alg);
            }
            out
        }
        Some(other) => {
            return Err(err(
                "algorithms",
                format!("expected an array, got {}", type_name(other)),
            ))
        }
    };
    if algorithms.is_empty() {
        return Err(err("algorithms", "at least one algorithm is required"));
    }

    let window = match get("window") {
        None => None,
        Some(v) => match as_count("window", v)? {
            0 => return Err(err("window", "history window must be >= 1")),
            w => Some(w),
        },
    };
    let estimator = match get("edf") {
        None => VarEstimator::Exact,
        Some(v) => parse_estimator(as_str("edf", v)?)?,
    };
    let out = match get("out") {
        None => PathBuf::from(DEFAULT_OUT),
        Some(v) => PathBuf::from(as_str("out", v)?),
    };

    let config = ExperimentConfig {
        game,
        alphas,
        episodes,
        trials,
        seed,
        step,
        x0,
        algorithms,
        window,
        estimator,
        out,
    };
    let x = config.initial_action(&built);
    if built
        .equilibrium_sq_distance(&config.levels(), &x)
        .is_none()
    {
        return Err(err(
            "alphas",
            format!(
                "game `{}` has no known equilibrium for these risk levels",
                built.name()
            ),
        ));
    }
    Ok(config)
}
