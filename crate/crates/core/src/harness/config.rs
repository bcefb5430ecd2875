use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::adam::AdamConfig;
use crate::dqn::DqnConfig;
use crate::error::{Error, Result};
use crate::mlp::Activation;
use crate::network::NetworkConfig;
use crate::sarsa::SarsaHyper;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    SarsaLight,
    DqnMedium,
    DqnHeavy,
    Benchmark,
    Oma,
    NomaFixed,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::SarsaLight,
        Scenario::DqnMedium,
        Scenario::DqnHeavy,
        Scenario::Benchmark,
        Scenario::Oma,
        Scenario::NomaFixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::SarsaLight => "sarsa-light",
            Scenario::DqnMedium => "dqn-medium",
            Scenario::DqnHeavy => "dqn-heavy",
            Scenario::Benchmark => "benchmark",
            Scenario::Oma => "oma",
            Scenario::NomaFixed => "noma-fixed",
        }
    }

    pub fn default_traffic(self) -> Traffic {
        match self {
            Scenario::DqnMedium => Traffic::MEDIUM,
            Scenario::DqnHeavy => Traffic::HEAVY,
            _ => Traffic::LIGHT,
        }
    }

    pub fn is_learning(self) -> bool {
        matches!(self, Scenario::SarsaLight | Scenario::DqnMedium | Scenario::DqnHeavy)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| field_error("scenario", format!("unknown scenario '{s}'")))
    }
}

/// Range of the per-episode active-user count. The upper end doubles as the
/// per-block load cap.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Traffic {
    pub min_users: usize,
    pub max_users: usize,
}

impl Traffic {
    pub const LIGHT: Traffic = Traffic { min_users: 2, max_users: 3 };
    pub const MEDIUM: Traffic = Traffic { min_users: 2, max_users: 4 };
    pub const HEAVY: Traffic = Traffic { min_users: 2, max_users: 10 };
}

impl fmt::Display for Traffic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.min_users, self.max_users)
    }
}

impl FromStr for Traffic {
    type Err = Error;

    /// Accepts `light`, `medium`, `heavy` or an explicit `lo-hi` range.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "light" => return Ok(Traffic::LIGHT),
            "medium" => return Ok(Traffic::MEDIUM),
            "heavy" => return Ok(Traffic::HEAVY),
            _ => {}
        }
        let bad = || field_error("traffic", format!("expected light|medium|heavy or LO-HI, got '{s}'"));
        let (lo, hi) = s.split_once('-').ok_or_else(bad)?;
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        if lo == 0 || lo > hi {
            return Err(bad());
        }
        Ok(Traffic {
            min_users: lo,
            max_users: hi,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            _ => Err(field_error("format", format!("expected csv or jsonl, got '{s}'"))),
        }
    }
}

pub(crate) fn field_error(field: &str, message: impl fmt::Display) -> Error {
    Error::Config(format!("{field}: {message}"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub traffic: Traffic,
    pub seeds: Vec<u64>,
    pub episodes: usize,
    pub trials: usize,
    pub n_bs: usize,
    pub n_subchannels: usize,
    /// System bandwidth; each sub-channel gets `bandwidth_khz / n_subchannels`.
    pub bandwidth_khz: f64,
    pub power_levels_dbm: Vec<f64>,
    pub gain_levels: Vec<f64>,
    pub power_cap_w: f64,
    pub rate_threshold_bps: f64,
    pub temperature_k: f64,
    /// Size of the pool active users are drawn from. Defaults to the largest
    /// possible active count.
    pub population: Option<usize>,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub activation: Activation,
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub pretrain_length: usize,
    pub target_update_interval: usize,
    pub learning_rate: f64,
    pub fixed_power_dbm: f64,
    /// Reuse the first episode's users for every episode.
    pub freeze_instance: bool,
    pub fallback_after_stagnant: Option<usize>,
    /// Episodes averaged in the summary's final window.
    pub final_window: usize,
}

impl ExperimentConfig {
    /// Full-scale defaults for a scenario. Seeds are left empty on purpose.
    pub fn new(scenario: Scenario) -> Self {
        let net = NetworkConfig::<f64>::default();
        let dqn = DqnConfig::<f64>::default();
        let sarsa = SarsaHyper::<f64>::default();
        Self {
            scenario,
            traffic: scenario.default_traffic(),
            seeds: Vec::new(),
            episodes: 500,
            trials: 500,
            n_bs: net.n_bs,
            n_subchannels: net.n_subchannels,
            bandwidth_khz: net.total_bandwidth_hz / 1e3,
            power_levels_dbm: net.power_levels_dbm,
            gain_levels: net.gain_levels,
            power_cap_w: net.subchannel_power_cap_w,
            rate_threshold_bps: net.sic_rate_threshold_bps,
            temperature_k: net.resistor_temp_k,
            population: None,
            alpha: sarsa.alpha,
            gamma: sarsa.gamma,
            epsilon: sarsa.epsilon,
            lambda: dqn.adam.lambda,
            activation: dqn.activation,
            hidden: dqn.hidden,
            batch_size: dqn.batch_size,
            replay_capacity: dqn.replay_capacity,
            pretrain_length: dqn.pretrain_length,
            target_update_interval: dqn.target_update_interval,
            learning_rate: dqn.adam.learning_rate,
            fixed_power_dbm: 20.0,
            freeze_instance: false,
            fallback_after_stagnant: None,
            final_window: 100,
        }
    }

    pub fn network(&self) -> NetworkConfig<f64> {
        NetworkConfig {
            n_bs: self.n_bs,
            n_subchannels: self.n_subchannels,
            total_bandwidth_hz: self.bandwidth_khz * 1e3,
            max_cluster_load: self.traffic.max_users,
            subchannel_power_cap_w: self.power_cap_w,
            sic_rate_threshold_bps: self.rate_threshold_bps,
            resistor_temp_k: self.temperature_k,
            gain_levels: self.gain_levels.clone(),
            power_levels_dbm: self.power_levels_dbm.clone(),
            ..NetworkConfig::default()
        }
    }

    pub fn population(&self) -> usize {
        self.population
            .unwrap_or(self.traffic.max_users * self.n_bs * self.n_subchannels)
    }

    pub fn sarsa(&self) -> SarsaHyper<f64> {
        SarsaHyper {
            alpha: self.alpha,
            gamma: self.gamma,
            epsilon: self.epsilon,
            episodes: self.episodes,
            trials_per_episode: self.trials,
            fallback_after_stagnant: self.fallback_after_stagnant,
        }
    }

    pub fn dqn(&self) -> DqnConfig<f64> {
        DqnConfig {
            hidden: self.hidden.clone(),
            activation: self.activation,
            batch_size: self.batch_size,
            replay_capacity: self.replay_capacity,
            pretrain_length: self.pretrain_length,
            target_update_interval: self.target_update_interval,
            epsilon: self.epsilon,
            gamma: self.gamma,
            episodes: self.episodes,
            trials_per_episode: self.trials,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                lambda: self.lambda,
                ..AdamConfig::default()
            },
        }
    }

    /// Checks every field, naming the first offending one.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(field_error("seeds", "at least one seed is required"));
        }
        if self.episodes == 0 {
            return Err(field_error("episodes", "must be at least 1"));
        }
        if self.scenario.is_learning() && self.trials == 0 {
            return Err(field_error("trials", "must be at least 1"));
        }
        if !(self.bandwidth_khz > 0.0) {
            return Err(field_error("bandwidth_khz", "must be positive"));
        }
        if self.power_levels_dbm.is_empty() {
            return Err(field_error("power_levels_dbm", "must list at least one level"));
        }
        if self.gain_levels.is_empty() || self.gain_levels.iter().any(|&g| !(g > 0.0)) {
            return Err(field_error("gain_levels", "must list positive gains"));
        }
        if self.n_bs == 0 || self.n_subchannels == 0 {
            return Err(field_error("n_bs", "base stations and sub-channels must be at least 1"));
        }
        for (name, v) in [("alpha", self.alpha), ("gamma", self.gamma), ("epsilon", self.epsilon), ("lambda", self.lambda)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(field_error(name, format!("{v} is outside [0, 1]")));
            }
        }
        if self.population() < self.traffic.max_users {
            return Err(field_error("population", "smaller than the traffic upper bound"));
        }
        if self.final_window == 0 {
            return Err(field_error("final_window", "must be at least 1"));
        }
        if self.scenario == Scenario::NomaFixed && !self.power_levels_dbm.contains(&self.fixed_power_dbm) {
            return Err(field_error("fixed_power_dbm", "must be one of power_levels_dbm"));
        }
        if matches!(self.scenario, Scenario::DqnMedium | Scenario::DqnHeavy) || self.fallback_after_stagnant.is_some() {
            self.dqn().check().map_err(|e| field_error("dqn", e))?;
        }
        if !(self.learning_rate > 0.0) {
            return Err(field_error("learning_rate", "must be positive"));
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "scenario" => self.scenario = value.parse()?,
            "traffic" => self.traffic = value.parse()?,
            "seeds" => self.seeds = parse_list(key, value)?,
            "episodes" => self.episodes = parse_one(key, value)?,
            "trials" => self.trials = parse_one(key, value)?,
            "n_bs" => self.n_bs = parse_one(key, value)?,
            "n_subchannels" => self.n_subchannels = parse_one(key, value)?,
            "bandwidth_khz" => self.bandwidth_khz = parse_one(key, value)?,
            "power_levels_dbm" => self.power_levels_dbm = parse_list(key, value)?,
            "gain_levels" => self.gain_levels = parse_list(key, value)?,
            "power_cap_w" => self.power_cap_w = parse_one(key, value)?,
            "rate_threshold_bps" => self.rate_threshold_bps = parse_one(key, value)?,
            "temperature_k" => self.temperature_k = parse_one(key, value)?,
            "population" => self.population = Some(parse_one(key, value)?),
            "alpha" => self.alpha = parse_one(key, value)?,
            "gamma" => self.gamma = parse_one(key, value)?,
            "epsilon" => self.epsilon = parse_one(key, value)?,
            "lambda" => self.lambda = parse_one(key, value)?,
            "activation" => self.activation = value.parse().map_err(|e| field_error(key, e))?,
            "hidden" => self.hidden = parse_list(key, value)?,
            "batch_size" => self.batch_size = parse_one(key, value)?,
            "replay_capacity" => self.replay_capacity = parse_one(key, value)?,
            "pretrain_length" => self.pretrain_length = parse_one(key, value)?,
            "target_update_interval" => self.target_update_interval = parse_one(key, value)?,
            "learning_rate" => self.learning_rate = parse_one(key, value)?,
            "fixed_power_dbm" => self.fixed_power_dbm = parse_one(key, value)?,
            "freeze_instance" => self.freeze_instance = parse_one(key, value)?,
            "fallback_after_stagnant" => {
                self.fallback_after_stagnant = match value {
                    "off" | "none" => None,
                    v => Some(parse_one(key, v)?),
                }
            }
            "final_window" => self.final_window = parse_one(key, value)?,
            other => return Err(field_error(other, "unknown key")),
        }
        Ok(())
    }

    /// Parses a flat `key = value` file. `#` starts a comment. The scenario
    /// key, when present, is applied first so scenario defaults never
    /// override explicit keys.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = BTreeMap::new();
        let mut order = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let k = k.trim().to_string();
            if pairs.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(field_error(&k, "given twice"));
            }
            order.push(k);
        }
        let scenario = match pairs.get("scenario") {
            Some(s) => s.parse()?,
            None => return Err(field_error("scenario", "missing")),
        };
        let mut cfg = Self::new(scenario);
        for k in order.iter().filter(|k| *k != "scenario") {
            cfg.set(k, &pairs[k])?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }
}

fn parse_one<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .trim()
        .parse()
        .map_err(|_| field_error(key, format!("cannot parse '{value}'")))
}

fn parse_list<V: FromStr>(key: &str, value: &str) -> Result<Vec<V>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_one(key, s))
        .collect()
}
