//! Run configuration with flags > environment > config file > defaults.
//!
//! The config file is a flat `key = value` text format; `#` starts a
//! comment. Environment overrides use the `COCLUSTER_` prefix with the
//! upper-cased key (e.g. `COCLUSTER_SEED=7`).

use std::collections::HashMap;
use std::path::Path;

use cocluster::analysis::DEFAULT_EPSILON;
use cocluster::optimizer::OptimizerConfig;

pub const ENV_PREFIX: &str = "COCLUSTER_";

#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    values: HashMap<String, String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let mut values = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("{}:{}: expected `key = value`", path.display(), lineno + 1))?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }
}

fn env_value(key: &str) -> Option<String> {
    std::env::var(format!("{ENV_PREFIX}{}", key.to_uppercase())).ok()
}

/// flag > env > config file > default.
pub fn resolve<T: std::str::FromStr>(
    flag: Option<T>,
    file: &FileConfig,
    key: &str,
    default: T,
) -> Result<T, String> {
    if let Some(v) = flag {
        return Ok(v);
    }
    let parse = |raw: &str, origin: &str| {
        raw.parse::<T>()
            .map_err(|_| format!("invalid value `{raw}` for {origin} `{key}`"))
    };
    if let Some(raw) = env_value(key) {
        return parse(&raw, "environment variable");
    }
    if let Some(raw) = file.get(key) {
        return parse(raw, "config key");
    }
    Ok(default)
}

/// Optimizer knobs shared by `fit` invocations, resolved from all sources.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ResolvedFit {
    pub seed: u64,
    pub restarts: u32,
    pub max_preclusters: Option<u32>,
    pub post_opt_passes: u32,
    pub cost_tolerance: f64,
}

impl ResolvedFit {
    pub fn to_optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            seed: self.seed,
            restarts: self.restarts,
            max_preclusters: self.max_preclusters,
            post_opt_passes: self.post_opt_passes,
            cost_tolerance: self.cost_tolerance,
            ..OptimizerConfig::default()
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn resolve_fit(
    file: &FileConfig,
    seed: Option<u64>,
    restarts: Option<u32>,
    max_preclusters: Option<u32>,
    post_opt_passes: Option<u32>,
    cost_tolerance: Option<f64>,
) -> Result<ResolvedFit, String> {
    let defaults = OptimizerConfig::default();
    Ok(ResolvedFit {
        seed: resolve(seed, file, "seed", defaults.seed)?,
        restarts: resolve(restarts, file, "restarts", defaults.restarts)?,
        max_preclusters: match max_preclusters {
            Some(v) => Some(v),
            None => match resolve(None::<u32>, file, "max_preclusters", 0)? {
                0 => None,
                v => Some(v),
            },
        },
        post_opt_passes: resolve(post_opt_passes, file, "post_opt_passes", defaults.post_opt_passes)?,
        cost_tolerance: resolve(cost_tolerance, file, "cost_tolerance", defaults.cost_tolerance)?,
    })
}

pub fn resolve_epsilon(file: &FileConfig, flag: Option<f64>) -> Result<f64, String> {
    resolve(flag, file, "epsilon", DEFAULT_EPSILON)
}

pub fn resolve_threads(file: &FileConfig, flag: Option<usize>) -> Result<Option<usize>, String> {
    Ok(match flag {
        Some(v) => Some(v),
        None => match resolve(None::<usize>, file, "threads", 0)? {
            0 => None,
            v => Some(v),
        },
    })
}
