//! Scenario files.

use std::path::Path;

use sada_core::masking::{MaskingParams, DEFAULT_P_MK, DEFAULT_P_SM, TOY_P_MK, TOY_P_SM};
use sada_core::protocol::AttackKind;
use serde::{Deserialize, Serialize};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// The toy group has 10 nonzero scalars; keep clusters well inside that.
pub const TOY_MAX_CLUSTER: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GroupName {
    #[default]
    Secp256k1,
    Toy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackName {
    InvalidSubApproval,
    FakeAverage,
    SelfKeyApproval,
}

impl From<AttackName> for AttackKind {
    fn from(a: AttackName) -> Self {
        match a {
            AttackName::InvalidSubApproval => AttackKind::InvalidSubApproval,
            AttackName::FakeAverage => AttackKind::FakeAverage,
            AttackName::SelfKeyApproval => AttackKind::SelfKeyApproval,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub kind: AttackName,
    /// 1-based cycle number.
    pub cycle: u32,
    /// 0-based member index.
    pub actor: usize,
    #[serde(default = "yes")]
    pub expected: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub n_v: usize,
    pub t_sm: usize,
    pub cycles: u32,
    pub group: GroupName,
    pub p_mk: Option<u64>,
    pub p_sm: Option<u64>,
    pub attacks: Vec<AttackSpec>,
    pub t_aud: u32,
    /// RSA-2048 for session keys and the average instead of hybrid encryption.
    pub byte_accounting: bool,
    /// Readings are uniform in `0..=data_max`.
    pub data_max: u64,
    /// Simulated seconds between cycle starts.
    pub cycle_period: u64,
    pub freshness: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed: 0,
            n_v: 20,
            t_sm: 10,
            cycles: 5,
            group: GroupName::Secp256k1,
            p_mk: None,
            p_sm: None,
            attacks: Vec::new(),
            t_aud: 1,
            byte_accounting: false,
            data_max: 1000,
            cycle_period: 60,
            freshness: 120,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::Parse {
                path: if path == "." { "$".into() } else { path },
                message: e.into_inner().to_string(),
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn moduli(&self) -> (u64, u64) {
        let (mk, sm) = match self.group {
            GroupName::Secp256k1 => (DEFAULT_P_MK, DEFAULT_P_SM),
            GroupName::Toy => (TOY_P_MK, TOY_P_SM),
        };
        (self.p_mk.unwrap_or(mk), self.p_sm.unwrap_or(sm))
    }

    pub fn masking_params(&self) -> Result<MaskingParams, ConfigError> {
        let (p_mk, p_sm) = self.moduli();
        MaskingParams::new(p_mk, p_sm, self.t_sm, self.n_v).map_err(|e| {
            use sada_core::masking::MaskingError as M;
            let path = match e {
                M::ClusterSize(_) => "n_v",
                M::Threshold { .. } => "t_sm",
                M::MaskModulus => "p_mk",
                _ => "p_sm",
            };
            invalid(path, e.to_string())
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {}, expected {CONFIG_SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if self.group == GroupName::Toy && self.n_v > TOY_MAX_CLUSTER {
            return Err(invalid("n_v", format!("the toy group supports at most {TOY_MAX_CLUSTER} members")));
        }
        let params = self.masking_params()?;
        if self.cycles == 0 {
            return Err(invalid("cycles", "must be at least 1"));
        }
        if self.t_aud == 0 {
            return Err(invalid("t_aud", "must be at least 1"));
        }
        if self.cycle_period == 0 {
            return Err(invalid("cycle_period", "must be at least 1"));
        }
        let max_sum = (self.n_v as u128) * (self.data_max as u128);
        if max_sum >= params.p_mk as u128 {
            return Err(invalid(
                "data_max",
                format!("n_v * data_max = {max_sum} must stay below p_mk = {}", params.p_mk),
            ));
        }
        let mut used = std::collections::BTreeSet::new();
        for (i, a) in self.attacks.iter().enumerate() {
            let at = |field: &str| format!("attacks[{i}].{field}");
            if a.actor >= self.n_v {
                return Err(invalid(at("actor"), format!("{} is not below n_v = {}", a.actor, self.n_v)));
            }
            if a.cycle == 0 || a.cycle > self.cycles {
                return Err(invalid(at("cycle"), format!("must be in 1..={}", self.cycles)));
            }
            if !used.insert(a.cycle) {
                return Err(invalid(at("cycle"), format!("cycle {} already has an attack", a.cycle)));
            }
            match a.kind {
                AttackName::InvalidSubApproval if self.n_v < 3 => {
                    return Err(invalid(at("kind"), "exclusion needs at least 3 members"));
                }
                AttackName::SelfKeyApproval if a.cycle == self.cycles => {
                    return Err(invalid(at("cycle"), "the audit needs a later cycle"));
                }
                _ => {}
            }
        }
        Ok(())
    }
}
