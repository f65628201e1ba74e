//! Experiment configuration.
//!
//! Configs are TOML files whose keys mirror the field names below, e.g.
//!
//! ```toml
//! T = 100000
//! K = 20
//! d = 10
//! C = 50.0
//! attack = "garcelon"
//! policies = ["linucb", "lints", "greedy", "robustbandit", "bob_no_restart"]
//! ```
//!
//! Policies and attacks with parameters are written as inline tables:
//! `{ robust_linucb = { c_prime = 20.0 } }`, `{ context_dilation = { eta = 0.5 } }`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::adversary::AttackKind;
use crate::linalg::{beta, gamma_bound, ExplorationParams};
use crate::policies::{candidate_set, Exp3State, PolicyKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EpochLength {
    /// Derived from `β_T`, the a-priori bound on `γ_{T+1}` and `√T`.
    #[default]
    Auto,
    Fixed(u64),
}

impl Serialize for EpochLength {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            EpochLength::Auto => s.serialize_str("auto"),
            EpochLength::Fixed(h) => s.serialize_u64(*h),
        }
    }
}

impl<'de> Deserialize<'de> for EpochLength {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Str(s) if s == "auto" => Ok(EpochLength::Auto),
            Raw::Int(h) if h >= 1 => Ok(EpochLength::Fixed(h as u64)),
            _ => Err(serde::de::Error::custom(
                "epoch_length must be \"auto\" or a positive integer",
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentKind {
    #[default]
    Synthetic,
    Dataset {
        items: PathBuf,
        users: PathBuf,
        n_users: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "T")]
    pub horizon: u64,
    #[serde(rename = "K")]
    pub arms: usize,
    #[serde(rename = "d")]
    pub dim: usize,
    #[serde(rename = "C")]
    pub budget: f64,
    #[serde(default = "defaults::delta")]
    pub delta: f64,
    #[serde(default = "defaults::lambda")]
    pub lambda: f64,
    /// Reward noise standard deviation, also used in `β_t`.
    #[serde(default = "defaults::sigma")]
    pub sigma: f64,
    #[serde(default = "defaults::eps0")]
    pub eps0: f64,
    #[serde(default = "defaults::top_n_fraction")]
    pub top_n_fraction: f64,
    #[serde(default = "defaults::repetitions")]
    pub repetitions: u64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub environment: EnvironmentKind,
    #[serde(default = "defaults::attack", deserialize_with = "de_attack")]
    pub attack: AttackKind,
    #[serde(deserialize_with = "de_policies")]
    pub policies: Vec<PolicyKind>,
    #[serde(default)]
    pub epoch_length: EpochLength,
}

mod defaults {
    use crate::adversary::AttackKind;

    pub fn delta() -> f64 {
        0.01
    }
    pub fn lambda() -> f64 {
        0.1
    }
    pub fn sigma() -> f64 {
        0.1
    }
    pub fn eps0() -> f64 {
        0.01
    }
    pub fn top_n_fraction() -> f64 {
        0.5
    }
    pub fn repetitions() -> u64 {
        10
    }
    pub fn attack() -> AttackKind {
        AttackKind::None
    }
}

// Bare names are accepted for parameterised variants whose fields all have
// defaults, so `"lints"` and `"context_dilation"` work without a table.
fn de_attack<'de, D: Deserializer<'de>>(d: D) -> Result<AttackKind, D::Error> {
    match toml::Value::deserialize(d)? {
        toml::Value::String(s) if s == "context_dilation" => {
            Ok(AttackKind::ContextDilation { eta: 0.0 })
        }
        v => v.try_into().map_err(serde::de::Error::custom),
    }
}

fn de_policies<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<PolicyKind>, D::Error> {
    Vec::<toml::Value>::deserialize(d)?
        .into_iter()
        .map(|v| match v {
            toml::Value::String(s) if s == "lints" => Ok(PolicyKind::Lints { scale: None }),
            v => v.try_into().map_err(serde::de::Error::custom),
        })
        .collect()
}

/// One rejected config field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldIssue {
    pub field: String,
    pub reason: String,
}

impl fmt::Display for FieldIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("malformed config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {}", join_issues(.0))]
    Invalid(Vec<FieldIssue>),
}

fn join_issues(issues: &[FieldIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Quantities fixed by a config before any simulation runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Derived {
    pub epoch_length: u64,
    pub epoch_length_is_auto: bool,
    pub epochs: u64,
    pub candidates: Vec<f64>,
    /// EXP3 mixing rate of RobustBandit (one draw per epoch).
    pub alpha_epochs: f64,
    /// EXP3 mixing rate of BOB-No-Restart (one draw per round).
    pub alpha_rounds: f64,
    pub top_n: usize,
    pub beta_horizon: f64,
    pub gamma_bar: f64,
}

impl ExperimentConfig {
    /// Parse TOML text. Relative dataset paths are kept as written.
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.message().to_string(),
        })
    }

    /// Read, parse and validate a config file. Relative dataset paths are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_file_text(&text, path)
    }

    /// As [`ExperimentConfig::load`], for text already read from `path`.
    pub fn from_file_text(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let mut config = Self::from_toml_str(text, path)?;
        if let EnvironmentKind::Dataset { items, users, .. } = &mut config.environment {
            let base = path.parent().unwrap_or(Path::new(""));
            for p in [items, users] {
                if p.is_relative() {
                    let joined = base.join(&*p);
                    *p = std::path::absolute(&joined).unwrap_or(joined);
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config fields are TOML-representable")
    }

    /// Check every field and report all problems at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut issues = Vec::new();
        let mut bad = |field: &str, reason: &str| {
            issues.push(FieldIssue {
                field: field.to_string(),
                reason: reason.to_string(),
            })
        };
        if self.horizon == 0 {
            bad("T", "must be a positive integer");
        }
        if self.arms == 0 {
            bad("K", "must be a positive integer");
        }
        if self.dim == 0 {
            bad("d", "must be a positive integer");
        }
        if !(self.budget >= 0.0 && self.budget.is_finite()) {
            bad("C", "must be a finite non-negative number");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            bad("delta", "must lie in (0, 1)");
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            bad("lambda", "must be positive");
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            bad("sigma", "must be positive");
        }
        if !(self.eps0 > 0.0 && self.eps0.is_finite()) {
            bad("eps0", "must be positive");
        }
        if !(self.top_n_fraction > 0.0 && self.top_n_fraction <= 1.0) {
            bad("top_n_fraction", "must lie in (0, 1]");
        }
        if self.repetitions == 0 {
            bad("repetitions", "must be a positive integer");
        }
        if let EnvironmentKind::Dataset { n_users, .. } = &self.environment {
            if *n_users == 0 {
                bad("environment.dataset.n_users", "must be a positive integer");
            }
        }
        if let AttackKind::ContextDilation { eta } = self.attack {
            if !(0.0..1.0).contains(&eta) {
                bad("attack.context_dilation.eta", "must lie in [0, 1)");
            }
        }
        if self.policies.is_empty() {
            bad("policies", "must list at least one policy");
        }
        let mut labels: Vec<String> = Vec::new();
        for p in &self.policies {
            match p {
                PolicyKind::RobustLinucb { c_prime } if !(*c_prime >= 0.0 && c_prime.is_finite()) => {
                    bad("policies.robust_linucb.c_prime", "must be finite and non-negative")
                }
                PolicyKind::Lints { scale: Some(s) } if !(*s >= 0.0 && s.is_finite()) => {
                    bad("policies.lints.scale", "must be finite and non-negative")
                }
                _ => {}
            }
            let label = p.label();
            if labels.contains(&label) {
                bad("policies", &format!("duplicate entry `{label}`"));
            }
            labels.push(label);
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(issues))
        }
    }

    /// Exploration parameters; the config must already be valid.
    pub fn params(&self) -> ExplorationParams {
        ExplorationParams::new(self.sigma, self.delta, self.lambda, self.dim)
            .expect("validated config")
    }

    /// Number of trigger arms: `⌈top_n_fraction·K⌉`, at least 1.
    pub fn top_n(&self) -> usize {
        ((self.top_n_fraction * self.arms as f64).ceil() as usize).clamp(1, self.arms.max(1))
    }

    /// `H = ⌈β_T·γ̄/√(e−1)·√T⌉` with `γ̄ = gamma_bound(T+1, d, max(λ, 1))`.
    pub fn auto_epoch_length(&self) -> u64 {
        let (b, g) = self.auto_terms();
        let t = self.horizon as f64;
        let h = (b * g / (std::f64::consts::E - 1.0).sqrt() * t.sqrt()).ceil();
        if h.is_finite() && h >= 1.0 {
            h as u64
        } else {
            1
        }
    }

    fn auto_terms(&self) -> (f64, f64) {
        (
            beta(self.horizon, &self.params()),
            gamma_bound(self.horizon + 1, self.dim, self.lambda.max(1.0)),
        )
    }

    pub fn epoch_length(&self) -> u64 {
        match self.epoch_length {
            EpochLength::Auto => self.auto_epoch_length(),
            EpochLength::Fixed(h) => h,
        }
    }

    pub fn derived(&self) -> Derived {
        let h = self.epoch_length();
        let epochs = self.horizon.div_ceil(h);
        let candidates = candidate_set(self.arms, self.horizon, true);
        let alpha = |n| {
            Exp3State::new(candidates.clone(), n)
                .expect("candidate grid is valid")
                .alpha()
        };
        let (beta_horizon, gamma_bar) = self.auto_terms();
        Derived {
            epoch_length: h,
            epoch_length_is_auto: self.epoch_length == EpochLength::Auto,
            epochs,
            alpha_epochs: alpha(epochs),
            alpha_rounds: alpha(self.horizon),
            candidates,
            top_n: self.top_n(),
            beta_horizon,
            gamma_bar,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIGURE: &str = r#"
T = 1000000
K = 20
d = 10
C = 100.0
policies = ["linucb", "lints", "greedy", "robustbandit", "bob_no_restart"]
"#;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::from_toml_str(text, Path::new("test.toml"))
    }

    #[test]
    fn defaults_and_derived() {
        let c = parse(FIGURE).unwrap();
        c.validate().unwrap();
        assert_eq!(c.delta, 0.01);
        assert_eq!(c.lambda, 0.1);
        assert_eq!(c.attack, AttackKind::None);
        assert_eq!(c.environment, EnvironmentKind::Synthetic);
        assert_eq!(c.policies[1], PolicyKind::Lints { scale: None });
        let d = c.derived();
        assert_eq!(d.candidates.len(), 28);
        assert_eq!(d.top_n, 10);
        assert!(d.epoch_length_is_auto);
        assert!(d.epoch_length >= 1 && d.epoch_length <= c.horizon);
    }

    #[test]
    fn auto_epoch_length_matches_formula() {
        let c = parse(&FIGURE.replace("1000000", "100000")).unwrap();
        let p = c.params();
        let b = beta(100_000, &p);
        let g = gamma_bound(100_001, 10, 1.0);
        let expected = (b * g / (std::f64::consts::E - 1.0).sqrt() * 100_000f64.sqrt()).ceil();
        assert_eq!(c.auto_epoch_length(), expected as u64);
    }

    #[test]
    fn parameterised_entries() {
        let text = format!(
            "{FIGURE}\nattack = {{ context_dilation = {{ eta = 0.25 }} }}\nepoch_length = 7\n"
        )
        .replace(
            "\"bob_no_restart\"]",
            "\"bob_no_restart\", { robust_linucb = { c_prime = 20.0 } }, { lints = { scale = 0.5 } }]",
        );
        let c = parse(&text).unwrap();
        assert_eq!(c.attack, AttackKind::ContextDilation { eta: 0.25 });
        assert_eq!(c.epoch_length, EpochLength::Fixed(7));
        assert_eq!(c.policies[5], PolicyKind::RobustLinucb { c_prime: 20.0 });
        assert_eq!(c.policies[6], PolicyKind::Lints { scale: Some(0.5) });

        let c = parse(&format!("{FIGURE}\nattack = \"context_dilation\"\n")).unwrap();
        assert_eq!(c.attack, AttackKind::ContextDilation { eta: 0.0 });
    }

    #[test]
    fn dataset_environment() {
        let text = format!(
            "{FIGURE}\n[environment.dataset]\nitems = \"items.txt\"\nusers = \"users.txt\"\nn_users = 100\n"
        );
        let c = parse(&text).unwrap();
        assert_eq!(
            c.environment,
            EnvironmentKind::Dataset {
                items: "items.txt".into(),
                users: "users.txt".into(),
                n_users: 100
            }
        );
    }

    #[test]
    fn toml_round_trip() {
        let text = format!("{FIGURE}\nattack = \"oracle\"\nbase_seed = 42\n").replace(
            "\"greedy\"",
            "\"greedy\", { robust_linucb = { c_prime = 2.5 } }",
        );
        let c = parse(&text).unwrap();
        let again = parse(&c.to_toml_string()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn validation_names_fields() {
        let text = FIGURE
            .replace("K = 20", "K = 0")
            .replace("C = 100.0", "C = -1.0")
            + "delta = 1.5\ntop_n_fraction = 0.0\nrepetitions = 0\n";
        let err = parse(&text).unwrap().validate().unwrap_err();
        let ConfigError::Invalid(issues) = &err else {
            panic!("{err}")
        };
        let fields: Vec<&str> = issues.iter().map(|i| i.field.as_str()).collect();
        assert_eq!(fields, ["K", "C", "delta", "top_n_fraction", "repetitions"]);
        assert!(!err.to_string().contains('\n'));
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(parse("T = 1"), Err(ConfigError::Parse { .. })));
        assert!(parse(&format!("{FIGURE}\nbogus = 1\n")).is_err());
        assert!(parse(&format!("{FIGURE}\nepoch_length = 0\n")).is_err());
        assert!(parse(&format!("{FIGURE}\nepoch_length = \"never\"\n")).is_err());
        assert!(parse(&FIGURE.replace("\"greedy\"", "\"nope\"")).is_err());
        let dup = parse(&FIGURE.replace("\"greedy\"", "\"linucb\"")).unwrap();
        assert!(dup.validate().is_err());
    }

    #[test]
    fn top_n_rounds_up() {
        let mut c = parse(FIGURE).unwrap();
        c.arms = 5;
        assert_eq!(c.top_n(), 3);
        c.top_n_fraction = 0.01;
        assert_eq!(c.top_n(), 1);
        c.top_n_fraction = 1.0;
        assert_eq!(c.top_n(), 5);
    }
}
