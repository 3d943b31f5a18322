//! Scenario simulator for sada-core: JSON scenarios, metrics reports, byte
//! accounting and identification cost comparison.

pub mod bytes;
pub mod config;
pub mod ident;
pub mod rsa_pke;
pub mod runner;

pub use config::{AttackName, AttackSpec, ConfigError, GroupName, ScenarioConfig};
pub use runner::{run, MetricsReport, RunVerdict, SimError};
