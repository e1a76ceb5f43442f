use std::collections::BTreeSet;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use super::MetricsRow;
use crate::keying::HashMode;
use crate::netsim::{run, CloneMode, ClonePlacement, Protocol, SimConfig, SimError};

/// A grid of runs: every (protocol, n, load) cell is run `trials` times
/// with seeds `base_seed + trial`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub protocols: Vec<Protocol>,
    pub n_values: Vec<usize>,
    pub load_values: Vec<f64>,
    pub trials: usize,
    pub base_seed: u64,
    /// Settings shared by every cell; protocol, n, load and seed are
    /// overwritten per run.
    pub base: SimConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            protocols: vec![Protocol::Ppp],
            n_values: vec![100],
            load_values: vec![0.0],
            trials: 1,
            base_seed: 0,
            base: SimConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("trials must be at least 1")]
    NoTrials,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("cell protocol={protocol} n={n} load={load} seed={seed}: {source}")]
    Cell {
        protocol: Protocol,
        n: usize,
        load: f64,
        seed: u64,
        #[source]
        source: SimError,
    },
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        if self.protocols.is_empty() {
            return Err(SpecError::Empty("protocols"));
        }
        if self.n_values.is_empty() {
            return Err(SpecError::Empty("n_values"));
        }
        if self.load_values.is_empty() {
            return Err(SpecError::Empty("load_values"));
        }
        if self.trials == 0 {
            return Err(SpecError::NoTrials);
        }
        Ok(())
    }

    /// Every run's config, in output order.
    pub fn configs(&self) -> Vec<SimConfig> {
        let mut out = Vec::new();
        for &protocol in &self.protocols {
            for &n in &self.n_values {
                for &load in &self.load_values {
                    for trial in 0..self.trials {
                        out.push(SimConfig {
                            protocol,
                            n,
                            load,
                            seed: self.base_seed.wrapping_add(trial as u64),
                            ..self.base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

fn list<T: FromStr>(value: &str) -> Result<Vec<T>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| format!("cannot parse {s:?}")))
        .collect()
}

fn scalar<T: FromStr>(value: &str) -> Result<T, String> {
    value.parse::<T>().map_err(|_| format!("cannot parse {value:?}"))
}

fn optional<T: FromStr>(value: &str) -> Result<Option<T>, String> {
    match value {
        "" | "none" | "default" => Ok(None),
        v => scalar(v).map(Some),
    }
}

/// Parses the line-oriented `key = value` sweep format. `#` starts a comment;
/// list values are comma separated. Keys other than the grid axes override
/// the shared simulator settings.
pub fn parse_sweep_spec(text: &str) -> Result<SweepSpec, SpecError> {
    let mut spec = SweepSpec::default();
    let mut seen = BTreeSet::new();
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| SpecError::Line { line, message };
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got {content:?}")))?;
        let (key, value) = (key.trim().to_ascii_lowercase(), value.trim());
        if !seen.insert(key.clone()) {
            return Err(err(format!("duplicate key {key:?}")));
        }
        let b = &mut spec.base;
        let result: Result<(), String> = match key.as_str() {
            "protocols" => list(value).map(|v| spec.protocols = v),
            "n_values" => list(value).map(|v| spec.n_values = v),
            "load_values" => list(value).map(|v| spec.load_values = v),
            "trials" => scalar(value).map(|v| spec.trials = v),
            "base_seed" => scalar(value).map(|v| spec.base_seed = v),
            "degree" | "target_degree" => scalar(value).map(|v| b.target_degree = v),
            "ticks" => scalar(value).map(|v| b.ticks = v),
            "channel_capacity" => optional(value).map(|v| b.channel_capacity = v),
            "clones" | "clone_count" => scalar(value).map(|v| b.clone_count = v),
            "clone_tick" | "clone_injection_tick" => scalar(value).map(|v| b.clone_injection_tick = v),
            "clone_mode" => match value {
                "identity" | "identity_only" => Ok(CloneMode::IdentityOnly),
                "stolen" | "stolen_key" => Ok(CloneMode::StolenKey),
                v => Err(format!("unknown clone mode {v:?}")),
            }
            .map(|v| b.clone_mode = v),
            "clone_placement" => match value {
                "uniform" => Ok(ClonePlacement::Uniform),
                "far" => Ok(ClonePlacement::Far),
                v => Err(format!("unknown clone placement {v:?}")),
            }
            .map(|v| b.clone_placement = v),
            "degree_t" => scalar(value).map(|v| b.degree_t = v),
            "modulus" => scalar(value).map(|v| b.modulus = v),
            "generation_period" => scalar(value).map(|v| b.generation_period = v),
            "generations" => scalar(value).map(|v| b.generations = v),
            "generation_gap" => scalar(value).map(|v| b.generation_gap = v),
            "group_size" => scalar(value).map(|v| b.group_size = v),
            "round_ticks" => scalar(value).map(|v| b.round_ticks = v),
            "refresh_ticks" => scalar(value).map(|v| b.refresh_ticks = v),
            "speed" => scalar(value).map(|v| b.speed = v),
            "speed_jitter" => scalar(value).map(|v| b.speed_jitter = v),
            "witness_count" => optional(value).map(|v| b.witness_count = v),
            "key_ttl" => optional(value).map(|v| b.key_ttl = v),
            "hash_mode" => match value {
                "mixed" => Ok(HashMode::Mixed),
                "identity" => Ok(HashMode::Identity),
                v => Err(format!("unknown hash mode {v:?}")),
            }
            .map(|v| b.hash_mode = v),
            other => Err(format!("unknown key {other:?}")),
        };
        result.map_err(err)?;
    }
    spec.validate()?;
    Ok(spec)
}

/// Runs every cell of the grid, in parallel across runs. Rows come back
/// sorted by (protocol, n, load, seed) whatever the execution order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<MetricsRow>, SweepError> {
    spec.validate()?;
    let configs = spec.configs();
    let mut rows = configs
        .par_iter()
        .map(|cfg| {
            run(cfg)
                .map(|trace| MetricsRow::from_trace(cfg, &trace))
                .map_err(|source| SweepError::Cell {
                    protocol: cfg.protocol,
                    n: cfg.n,
                    load: cfg.load,
                    seed: cfg.seed,
                    source,
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| {
        (a.protocol, a.n)
            .cmp(&(b.protocol, b.n))
            .then(a.load.total_cmp(&b.load))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(rows)
}
