//! Run configuration: a TOML file with `[solver]`, `[pgrad]` and
//! `[two_metric]` tables, layered under command defaults and `--set`
//! overrides.

use std::fs;
use std::path::Path;

use boundopt::pgrad::PgradParams;
use boundopt::two_metric::ScalingStrategy;
use boundopt::SolverConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub pgrad: PgradParams,
    pub two_metric: TwoMetricConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingKind {
    Identity,
    ClippedDiagonal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoMetricConfig {
    pub scaling: ScalingKind,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub max_probes: usize,
}

impl Default for TwoMetricConfig {
    fn default() -> Self {
        Self {
            scaling: ScalingKind::Identity,
            lambda_min: 1e-2,
            lambda_max: 1e2,
            max_probes: 64,
        }
    }
}

impl TwoMetricConfig {
    pub fn strategy(&self) -> ScalingStrategy {
        match self.scaling {
            ScalingKind::Identity => ScalingStrategy::Identity,
            ScalingKind::ClippedDiagonal => ScalingStrategy::ClippedDiagonalHessian {
                lambda_min: self.lambda_min,
                lambda_max: self.lambda_max,
                max_probes: self.max_probes,
            },
        }
    }
}

impl RunConfig {
    /// Builds the configuration from, in increasing priority: built-in
    /// defaults, `defaults` supplied by the command, the config file, and
    /// `key=value` overrides. Bare keys refer to the `[solver]` table.
    pub fn load(defaults: &[(&str, Value)], file: Option<&Path>, sets: &[String]) -> Result<Self, CliError> {
        let mut table = Table::new();
        for (key, value) in defaults {
            insert_dotted(&mut table, key, value.clone())?;
        }
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(CliError::io(path))?;
            let parsed: Table = text.parse().map_err(|e: toml::de::Error| CliError::Format {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            merge(&mut table, parsed);
        }
        for set in sets {
            let (key, raw) = set
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("override `{set}` is not of the form key=value")))?;
            insert_dotted(&mut table, key.trim(), parse_value(raw.trim()))?;
        }
        Table::try_into(table).map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))
    }

    pub fn set_time_limit(&mut self, seconds: f64) {
        self.solver.max_wall_seconds = seconds;
        self.pgrad.max_wall_seconds = seconds;
    }
}

fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn insert_dotted(table: &mut Table, key: &str, value: Value) -> Result<(), CliError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    if parts.len() == 1 {
        parts.insert(0, "solver");
    }
    let (last, path) = parts.split_last().expect("non-empty key");
    let mut cur = table;
    for p in path {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("`{key}`: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_beat_file_and_defaults() {
        let dir = std::env::temp_dir().join(format!("boundopt-cfg-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.toml");
        fs::write(&path, "[solver]\neps_g = 1e-5\nmeo_enabled = true\n[pgrad]\ntol = 1e-3\n").unwrap();
        let cfg = RunConfig::load(
            &[("solver.meo_enabled", Value::Boolean(false)), ("pgrad.beta", Value::Float(0.3))],
            Some(&path),
            &["eps_h=0.01".into(), "two_metric.scaling=clipped-diagonal".into()],
        )
        .unwrap();
        fs::remove_dir_all(&dir).unwrap();
        assert_eq!(cfg.solver.eps_g, 1e-5);
        assert_eq!(cfg.solver.eps_h, 0.01);
        assert!(cfg.solver.meo_enabled);
        assert_eq!(cfg.pgrad.beta, 0.3);
        assert_eq!(cfg.pgrad.tol, 1e-3);
        assert_eq!(cfg.two_metric.scaling, ScalingKind::ClippedDiagonal);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::load(&[], None, &["solver.epsilon=1".into()]).unwrap_err();
        assert!(matches!(err, CliError::Usage(_)));
        assert!(RunConfig::load(&[], None, &["no_equals_sign".into()]).is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.solver.max_wall_seconds = f64::INFINITY;
        cfg.solver.m_hint = Some(3.5);
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
