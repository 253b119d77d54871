//! Run configuration: a flat key-value text file with `#` comments, plus
//! `--key value` command-line overrides. Parsing is strict: unknown keys and
//! keys that do not apply to the configured game are usage errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use gamedyn::analysis::format_float;
use gamedyn::optim::{HyperParams, Rule, RuleKind};
use gamedyn::zoo::DivergenceObjective;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("unknown key {key:?}")]
    UnknownKey { key: String },
    #[error("key {key:?} does not apply to game {game:?}")]
    KeyNotApplicable { key: String, game: String },
    #[error("duplicate key {key:?}")]
    DuplicateKey { key: String },
    #[error("invalid value {value:?} for {key}: {reason}")]
    BadValue {
        key: &'static str,
        value: String,
        reason: String,
    },
    #[error("missing required key {key:?}")]
    MissingKey { key: &'static str },
    #[error("{0}")]
    Invalid(String),
}

/// Which benchmark game a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GameName {
    Bilinear,
    Quadratic,
    Mog,
}

impl GameName {
    pub fn name(&self) -> &'static str {
        match self {
            GameName::Bilinear => "bilinear",
            GameName::Quadratic => "quadratic",
            GameName::Mog => "mog",
        }
    }
}

impl FromStr for GameName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bilinear" => Ok(GameName::Bilinear),
            "quadratic" => Ok(GameName::Quadratic),
            "mog" => Ok(GameName::Mog),
            other => Err(format!("unknown game {other:?}")),
        }
    }
}

/// Mixture-of-Gaussians scale preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Small,
    Paper,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Small => "small",
            Preset::Paper => "paper",
        }
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "small" => Ok(Preset::Small),
            "paper" => Ok(Preset::Paper),
            other => Err(format!("unknown preset {other:?}")),
        }
    }
}

/// Fully resolved run configuration. Every field has a concrete value after
/// parsing; serialization writes the keys applicable to the configured game
/// so that parse(serialize(c)) == c.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub game: GameName,
    /// Per-player dimension of the analytic games.
    pub dim: usize,
    pub quad_a: f64,
    pub quad_b: f64,
    /// Initial state for analytic games; None means phi = ones, theta = zeros.
    pub x0: Option<Vec<f64>>,

    pub preset: Preset,
    pub objective: DivergenceObjective,
    pub batch: usize,
    pub modes: usize,
    pub sigma: f64,
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub latent_dim: usize,
    pub coverage_samples: usize,
    pub radius_multiplier: f64,
    pub eval_batch: usize,

    pub optimizer: RuleKind,
    pub h: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub momentum_gamma: f64,

    pub steps: u64,
    pub seed: u64,
    pub record_every: u64,
    pub out_dir: PathBuf,
    pub spectrum_points: Vec<u64>,
    pub clip_real: Option<f64>,
}

impl RunConfig {
    pub fn rule(&self) -> Rule {
        Rule::new(
            self.optimizer,
            HyperParams {
                h: self.h,
                gamma: self.gamma,
                alpha: self.alpha,
                epsilon: self.epsilon,
                momentum_gamma: self.momentum_gamma,
            },
        )
    }

    /// Serializes to the flat key-value format; keys not applicable to the
    /// configured game are omitted (they always hold their defaults).
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("game", self.game.name().to_string());
        match self.game {
            GameName::Bilinear => {
                kv("dim", self.dim.to_string());
                if let Some(x0) = &self.x0 {
                    kv("x0", join_floats(x0));
                }
            }
            GameName::Quadratic => {
                kv("dim", self.dim.to_string());
                kv("quad_a", format_float(self.quad_a));
                kv("quad_b", format_float(self.quad_b));
                if let Some(x0) = &self.x0 {
                    kv("x0", join_floats(x0));
                }
            }
            GameName::Mog => {
                kv("preset", self.preset.name().to_string());
                kv("objective", self.objective.name().to_string());
                kv("batch", self.batch.to_string());
                kv("modes", self.modes.to_string());
                kv("sigma", format_float(self.sigma));
                kv("hidden_layers", self.hidden_layers.to_string());
                kv("hidden_units", self.hidden_units.to_string());
                kv("latent_dim", self.latent_dim.to_string());
                kv("coverage_samples", self.coverage_samples.to_string());
                kv("radius_multiplier", format_float(self.radius_multiplier));
                kv("eval_batch", self.eval_batch.to_string());
            }
        }
        kv("optimizer", self.optimizer.name().to_string());
        kv("h", format_float(self.h));
        kv("gamma", format_float(self.gamma));
        kv("alpha", format_float(self.alpha));
        kv("epsilon", format_float(self.epsilon));
        kv("momentum_gamma", format_float(self.momentum_gamma));
        kv("steps", self.steps.to_string());
        kv("seed", self.seed.to_string());
        kv("record_every", self.record_every.to_string());
        kv("out_dir", self.out_dir.display().to_string());
        if !self.spectrum_points.is_empty() {
            let list: Vec<String> = self.spectrum_points.iter().map(|s| s.to_string()).collect();
            kv("spectrum_points", list.join(","));
        }
        if let Some(c) = self.clip_real {
            kv("clip_real", format_float(c));
        }
        out
    }

    /// Parses config text plus `--key value` overrides (applied last).
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Malformed {
                line: i + 1,
                text: raw.to_string(),
            })?;
            let key = k.trim().to_string();
            if map.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(ConfigError::DuplicateKey { key });
            }
        }
        for (k, v) in overrides {
            map.insert(k.clone(), v.clone());
        }
        Self::from_map(map)
    }

    fn from_map(mut map: BTreeMap<String, String>) -> Result<Self, ConfigError> {
        let game: GameName = take_parse(&mut map, "game")?
            .ok_or(ConfigError::MissingKey { key: "game" })?;
        let preset: Preset = take_parse(&mut map, "preset")?.unwrap_or(Preset::Small);

        // Preset-dependent defaults for the mixture-of-Gaussians game; the
        // paper-scale preset matches the published experiment, the small one
        // is sized for test suites.
        let d = MogDefaults::for_preset(preset);

        let optimizer: RuleKind = take_parse(&mut map, "optimizer")?
            .ok_or(ConfigError::MissingKey { key: "optimizer" })?;

        let config = RunConfig {
            game,
            dim: take_parse(&mut map, "dim")?.unwrap_or(1),
            quad_a: take_parse(&mut map, "quad_a")?.unwrap_or(1.0),
            quad_b: take_parse(&mut map, "quad_b")?.unwrap_or(1.0),
            x0: take_floats(&mut map, "x0")?,
            preset,
            objective: take_parse(&mut map, "objective")?
                .unwrap_or(DivergenceObjective::NonSaturating),
            batch: take_parse(&mut map, "batch")?.unwrap_or(64),
            modes: take_parse(&mut map, "modes")?.unwrap_or(d.modes),
            sigma: take_parse(&mut map, "sigma")?.unwrap_or(1e-2),
            hidden_layers: take_parse(&mut map, "hidden_layers")?.unwrap_or(d.hidden_layers),
            hidden_units: take_parse(&mut map, "hidden_units")?.unwrap_or(d.hidden_units),
            latent_dim: take_parse(&mut map, "latent_dim")?.unwrap_or(16),
            coverage_samples: take_parse(&mut map, "coverage_samples")?.unwrap_or(4096),
            radius_multiplier: take_parse(&mut map, "radius_multiplier")?.unwrap_or(2.0),
            eval_batch: take_parse(&mut map, "eval_batch")?.unwrap_or(512),
            optimizer,
            h: take_parse(&mut map, "h")?.unwrap_or(if game == GameName::Mog { d.h } else { 0.01 }),
            gamma: take_parse(&mut map, "gamma")?
                .unwrap_or(if game == GameName::Mog { d.gamma } else { 1.0 }),
            alpha: take_parse(&mut map, "alpha")?.unwrap_or(0.1),
            epsilon: take_parse(&mut map, "epsilon")?
                .unwrap_or(if game == GameName::Mog { d.epsilon } else { 1e-8 }),
            momentum_gamma: take_parse(&mut map, "momentum_gamma")?.unwrap_or(0.9),
            steps: take_parse(&mut map, "steps")?
                .unwrap_or(if game == GameName::Mog { d.steps } else { 100 }),
            seed: take_parse(&mut map, "seed")?.unwrap_or(0),
            record_every: take_parse(&mut map, "record_every")?.unwrap_or(1),
            out_dir: PathBuf::from(
                map.remove("out_dir").unwrap_or_else(|| "out".to_string()),
            ),
            spectrum_points: take_ints(&mut map, "spectrum_points")?.unwrap_or_default(),
            clip_real: take_parse(&mut map, "clip_real")?,
        };

        if let Some(key) = map.into_keys().next() {
            return Err(ConfigError::UnknownKey { key });
        }
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.steps < 1 {
            return Err(ConfigError::Invalid("steps must be >= 1".into()));
        }
        if self.record_every < 1 {
            return Err(ConfigError::Invalid("record_every must be >= 1".into()));
        }
        if self.dim < 1 {
            return Err(ConfigError::Invalid("dim must be >= 1".into()));
        }
        if self.game == GameName::Mog {
            if self.x0.is_some() {
                return Err(ConfigError::KeyNotApplicable {
                    key: "x0".into(),
                    game: "mog".into(),
                });
            }
            if self.batch < 1 || self.eval_batch < 1 {
                return Err(ConfigError::Invalid("batch sizes must be >= 1".into()));
            }
            if self.modes < 1 {
                return Err(ConfigError::Invalid("modes must be >= 1".into()));
            }
        } else if let Some(x0) = &self.x0 {
            if x0.len() != 2 * self.dim {
                return Err(ConfigError::Invalid(format!(
                    "x0 has {} entries, expected {}",
                    x0.len(),
                    2 * self.dim
                )));
            }
            if x0.iter().any(|v| !v.is_finite()) {
                return Err(ConfigError::Invalid("x0 must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Preset-scale defaults for the mixture-of-Gaussians runs.
struct MogDefaults {
    modes: usize,
    hidden_layers: usize,
    hidden_units: usize,
    steps: u64,
    h: f64,
    gamma: f64,
    epsilon: f64,
}

impl MogDefaults {
    fn for_preset(preset: Preset) -> Self {
        match preset {
            Preset::Small => MogDefaults {
                modes: 4,
                hidden_layers: 2,
                hidden_units: 8,
                steps: 2000,
                h: 3e-3,
                gamma: 1.0,
                epsilon: 1e-2,
            },
            Preset::Paper => MogDefaults {
                modes: 8,
                hidden_layers: 4,
                hidden_units: 16,
                steps: 20000,
                h: 1e-4,
                gamma: 10.0,
                epsilon: 1e-8,
            },
        }
    }
}

fn take_parse<T>(map: &mut BTreeMap<String, String>, key: &'static str) -> Result<Option<T>, ConfigError>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    match map.remove(key) {
        None => Ok(None),
        Some(v) => v.parse::<T>().map(Some).map_err(|e| ConfigError::BadValue {
            key,
            value: v,
            reason: e.to_string(),
        }),
    }
}

fn take_floats(
    map: &mut BTreeMap<String, String>,
    key: &'static str,
) -> Result<Option<Vec<f64>>, ConfigError> {
    match map.remove(key) {
        None => Ok(None),
        Some(v) => v
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map(Some)
            .map_err(|e| ConfigError::BadValue {
                key,
                value: v,
                reason: e.to_string(),
            }),
    }
}

fn take_ints(
    map: &mut BTreeMap<String, String>,
    key: &'static str,
) -> Result<Option<Vec<u64>>, ConfigError> {
    match map.remove(key) {
        None => Ok(None),
        Some(v) => {
            if v.trim().is_empty() {
                return Ok(Some(Vec::new()));
            }
            v.split(',')
                .map(|p| p.trim().parse::<u64>())
                .collect::<Result<Vec<u64>, _>>()
                .map(Some)
                .map_err(|e| ConfigError::BadValue {
                    key,
                    value: v,
                    reason: e.to_string(),
                })
        }
    }
}

fn join_floats(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| format_float(*x))
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_text() -> &'static str {
        "# comment\ngame = bilinear\noptimizer = simga\nh = 0.1\nsteps = 100\nseed = 0\nout_dir = runs/demo\n"
    }

    #[test]
    fn parse_and_round_trip() {
        let c = RunConfig::parse(base_text(), &[]).unwrap();
        assert_eq!(c.game, GameName::Bilinear);
        assert_eq!(c.optimizer, RuleKind::SimGa);
        assert_eq!(c.h, 0.1);
        let again = RunConfig::parse(&c.serialize(), &[]).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn mog_round_trip_keeps_preset_fields() {
        let text = "game = mog\npreset = small\noptimizer = rescaled-consensus\nsteps = 50\n";
        let c = RunConfig::parse(text, &[]).unwrap();
        assert_eq!(c.modes, 4);
        assert_eq!(c.hidden_units, 8);
        let again = RunConfig::parse(&c.serialize(), &[]).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn overrides_win() {
        let c = RunConfig::parse(
            base_text(),
            &[("h".into(), "0.5".into()), ("seed".into(), "7".into())],
        )
        .unwrap();
        assert_eq!(c.h, 0.5);
        assert_eq!(c.seed, 7);
    }

    #[test]
    fn unknown_key_rejected() {
        let text = format!("{}learning_rate = 3\n", base_text());
        assert!(matches!(
            RunConfig::parse(&text, &[]),
            Err(ConfigError::UnknownKey { .. })
        ));
    }

    #[test]
    fn unknown_names_rejected() {
        assert!(RunConfig::parse("game = pong\noptimizer = simga\n", &[]).is_err());
        assert!(RunConfig::parse("game = bilinear\noptimizer = sgd\n", &[]).is_err());
    }

    #[test]
    fn duplicate_key_rejected() {
        let text = format!("{}h = 0.2\n", base_text());
        assert!(matches!(
            RunConfig::parse(&text, &[]),
            Err(ConfigError::DuplicateKey { .. })
        ));
    }

    #[test]
    fn x0_must_match_dim() {
        let text = "game = bilinear\ndim = 2\nx0 = 1,0\noptimizer = simga\n";
        assert!(RunConfig::parse(text, &[]).is_err());
        let text = "game = bilinear\ndim = 2\nx0 = 1,0,0,1\noptimizer = simga\n";
        assert!(RunConfig::parse(text, &[]).is_ok());
    }

    #[test]
    fn x0_not_applicable_to_mog() {
        let text = "game = mog\nx0 = 1,0\noptimizer = simga\n";
        assert!(matches!(
            RunConfig::parse(text, &[]),
            Err(ConfigError::KeyNotApplicable { .. })
        ));
    }

    #[test]
    fn paper_preset_defaults() {
        let text = "game = mog\npreset = paper\noptimizer = rescaled-consensus\n";
        let c = RunConfig::parse(text, &[]).unwrap();
        assert_eq!(c.modes, 8);
        assert_eq!(c.hidden_layers, 4);
        assert_eq!(c.hidden_units, 16);
        assert_eq!(c.steps, 20000);
        assert_eq!(c.gamma, 10.0);
        assert_eq!(c.h, 1e-4);
    }
}
