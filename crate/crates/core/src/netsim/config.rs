use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::field::{is_prime, DEFAULT_MODULUS};
use crate::generations::Tick;
use crate::keying::HashMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Protocol {
    Broadcast,
    Ppp,
    RandomizedMulticast,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Broadcast, Protocol::Ppp, Protocol::RandomizedMulticast];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Broadcast => "broadcast",
            Protocol::Ppp => "ppp",
            Protocol::RandomizedMulticast => "rmulticast",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown protocol {0:?} (expected ppp, broadcast or rmulticast)")]
pub struct UnknownProtocol(pub String);

impl FromStr for Protocol {
    type Err = UnknownProtocol;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ppp" => Ok(Protocol::Ppp),
            "broadcast" => Ok(Protocol::Broadcast),
            "rmulticast" | "randomizedmulticast" | "randomized_multicast" => Ok(Protocol::RandomizedMulticast),
            _ => Err(UnknownProtocol(s.to_string())),
        }
    }
}

/// What a clone copies from its victim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CloneMode {
    /// Public identity only; the station-assigned key stays with the victim.
    #[default]
    IdentityOnly,
    /// Identity plus the victim's key and key share.
    StolenKey,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClonePlacement {
    #[default]
    Uniform,
    /// Roughly opposite the victim on the ring.
    Far,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("n must be at least 1")]
    NoNodes,
    #[error("target degree {degree} is impossible with {n} nodes")]
    ImpossibleDegree { n: usize, degree: usize },
    #[error("{0} must be positive")]
    NotPositive(&'static str),
    #[error("load must be a finite non-negative number, got {0}")]
    BadLoad(f64),
    #[error("modulus {0} must be a prime in [3, 2^32)")]
    BadModulus(u64),
    #[error("speed must be finite")]
    BadSpeed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub protocol: Protocol,
    pub n: usize,
    pub target_degree: usize,
    pub ticks: Tick,
    /// Background traffic as a multiple of channel capacity.
    pub load: f64,
    /// Messages per tick; `None` means `64 * n`.
    pub channel_capacity: Option<u64>,
    pub clone_count: usize,
    pub clone_injection_tick: Tick,
    pub clone_mode: CloneMode,
    pub clone_placement: ClonePlacement,
    pub seed: u64,
    pub degree_t: usize,
    pub modulus: u64,
    pub generation_period: Tick,
    pub generations: u32,
    /// Idle ticks between one window's close and the next generation.
    pub generation_gap: Tick,
    pub group_size: usize,
    /// Protocol round: admission retries and location-claim epochs.
    pub round_ticks: Tick,
    /// Neighbour lists are rebuilt every this many ticks.
    pub refresh_ticks: Tick,
    /// Meters per tick.
    pub speed: f64,
    /// Each vehicle's speed is drawn from `speed ± speed_jitter`.
    pub speed_jitter: f64,
    /// Randomized-multicast witnesses per claim; `None` means `ceil(sqrt(n))`.
    pub witness_count: Option<usize>,
    pub hash_mode: HashMode,
    pub key_ttl: Option<Tick>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            protocol: Protocol::Ppp,
            n: 100,
            target_degree: 8,
            ticks: 200,
            load: 0.0,
            channel_capacity: None,
            clone_count: 0,
            clone_injection_tick: 100,
            clone_mode: CloneMode::IdentityOnly,
            clone_placement: ClonePlacement::Uniform,
            seed: 0,
            degree_t: 3,
            modulus: DEFAULT_MODULUS,
            generation_period: 50,
            generations: 1,
            generation_gap: 0,
            group_size: 4,
            round_ticks: 10,
            refresh_ticks: 10,
            speed: 1.0,
            speed_jitter: 0.0,
            witness_count: None,
            hash_mode: HashMode::Mixed,
            key_ttl: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n == 0 {
            return Err(ConfigError::NoNodes);
        }
        if self.n > 1 && self.target_degree >= self.n {
            return Err(ConfigError::ImpossibleDegree {
                n: self.n,
                degree: self.target_degree,
            });
        }
        let positive = [
            ("generation_period", self.generation_period),
            ("generations", self.generations as u64),
            ("group_size", self.group_size as u64),
            ("round_ticks", self.round_ticks),
            ("refresh_ticks", self.refresh_ticks),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(ConfigError::NotPositive(name));
        }
        if self.channel_capacity == Some(0) {
            return Err(ConfigError::NotPositive("channel_capacity"));
        }
        if self.witness_count == Some(0) {
            return Err(ConfigError::NotPositive("witness_count"));
        }
        if !self.load.is_finite() || self.load < 0.0 {
            return Err(ConfigError::BadLoad(self.load));
        }
        if self.modulus < 3 || self.modulus >= 1 << 32 || !is_prime(self.modulus) {
            return Err(ConfigError::BadModulus(self.modulus));
        }
        if !self.speed.is_finite() || !self.speed_jitter.is_finite() {
            return Err(ConfigError::BadSpeed);
        }
        Ok(())
    }

    pub fn capacity(&self) -> u64 {
        self.channel_capacity.unwrap_or(64 * self.n as u64)
    }

    pub fn witnesses(&self) -> usize {
        self.witness_count
            .unwrap_or_else(|| crate::baselines::default_witness_count(self.n))
    }

    /// Start tick of generation `g`.
    pub fn generation_start(&self, g: u32) -> Tick {
        g as Tick * (self.generation_period + self.generation_gap)
    }

    /// Generation that vehicle `index` belongs to: vehicles are split into
    /// equal consecutive blocks.
    pub fn generation_of_node(&self, index: usize) -> u32 {
        (index as u64 * self.generations as u64 / self.n as u64) as u32
    }
}
