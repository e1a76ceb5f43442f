//! Deployment generations: half-open join windows, per-generation master
//! material, and erasure once a window closes.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::field::{FieldError, Modulus, SymmetricBivariatePoly};
use crate::keying::{derive_share, HashMode, KeyShare, NodeId, NodeKey};

/// Simulation time unit.
pub type Tick = u64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenerationError {
    #[error("generation {active} is still open until tick {until}")]
    Overlap { active: u32, until: Tick },
    #[error("generation period must be positive")]
    ZeroPeriod,
    #[error("generation {index} window is still open until tick {until}")]
    StillActive { index: u32, until: Tick },
    #[error("master material of generation {0} has been erased")]
    Erased(u32),
    #[error("no generation with index {0}")]
    Unknown(u32),
    #[error("clock cannot move backwards from {from} to {to}")]
    TickRegression { from: Tick, to: Tick },
    #[error(transparent)]
    Field(#[from] FieldError),
}

struct MasterMaterial {
    poly: SymmetricBivariatePoly,
    key: u64,
}

/// One deployment cohort. Window is `[deploy_time, deploy_time + period)`.
pub struct Generation {
    index: u32,
    deploy_time: Tick,
    period: Tick,
    master: Option<MasterMaterial>,
}

impl std::fmt::Debug for Generation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Generation")
            .field("index", &self.index)
            .field("deploy_time", &self.deploy_time)
            .field("period", &self.period)
            .field("erased", &self.is_erased())
            .finish()
    }
}

impl Generation {
    pub fn index(&self) -> u32 {
        self.index
    }

    pub fn deploy_time(&self) -> Tick {
        self.deploy_time
    }

    pub fn period(&self) -> Tick {
        self.period
    }

    pub fn window_end(&self) -> Tick {
        self.deploy_time + self.period
    }

    pub fn contains(&self, tick: Tick) -> bool {
        tick >= self.deploy_time && tick < self.window_end()
    }

    pub fn is_erased(&self) -> bool {
        self.master.is_none()
    }

    pub fn master_poly(&self) -> Result<&SymmetricBivariatePoly, GenerationError> {
        self.master
            .as_ref()
            .map(|m| &m.poly)
            .ok_or(GenerationError::Erased(self.index))
    }

    pub fn master_key(&self) -> Result<u64, GenerationError> {
        self.master
            .as_ref()
            .map(|m| m.key)
            .ok_or(GenerationError::Erased(self.index))
    }

    pub fn derive_share(&self, id: NodeId, key: NodeKey, mode: HashMode) -> Result<KeyShare, GenerationError> {
        Ok(derive_share(self.master_poly()?, id, key, self.index, mode))
    }

    /// Drops the master polynomial and key. Shares already handed out stay
    /// valid because they are independent copies.
    pub fn erase(&mut self, current_tick: Tick) -> Result<(), GenerationError> {
        if current_tick < self.window_end() {
            return Err(GenerationError::StillActive {
                index: self.index,
                until: self.window_end(),
            });
        }
        self.master = None;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    NotYetOpen,
    WindowExpired,
    JoinOutsideWindow,
    Erased,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Freshness {
    Accept,
    Reject(RejectReason),
}

/// Accepts only while `current_tick` and `claimed_join_tick` both sit inside
/// the generation window and its master material still exists.
pub fn verify_deployment_freshness(gen: &Generation, claimed_join_tick: Tick, current_tick: Tick) -> Freshness {
    // Expiry is checked first so that a rejection for expiry is permanent.
    if current_tick >= gen.window_end() {
        return Freshness::Reject(RejectReason::WindowExpired);
    }
    if current_tick < gen.deploy_time {
        return Freshness::Reject(RejectReason::NotYetOpen);
    }
    if gen.is_erased() {
        return Freshness::Reject(RejectReason::Erased);
    }
    if !gen.contains(claimed_join_tick) {
        return Freshness::Reject(RejectReason::JoinOutsideWindow);
    }
    Freshness::Accept
}

/// Ordered generation history kept by the central station.
#[derive(Debug, Default)]
pub struct GenerationClock {
    generations: Vec<Generation>,
    current_tick: Tick,
}

impl GenerationClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn current_tick(&self) -> Tick {
        self.current_tick
    }

    pub fn advance_to(&mut self, tick: Tick) -> Result<(), GenerationError> {
        if tick < self.current_tick {
            return Err(GenerationError::TickRegression {
                from: self.current_tick,
                to: tick,
            });
        }
        self.current_tick = tick;
        Ok(())
    }

    /// Opens the next generation at the current tick. The polynomial degree
    /// here is the key-sharing threshold, unrelated to the generation counter.
    pub fn open_generation(
        &mut self,
        period: Tick,
        degree: usize,
        modulus: Modulus,
        seed: u64,
    ) -> Result<&Generation, GenerationError> {
        if period == 0 {
            return Err(GenerationError::ZeroPeriod);
        }
        if let Some(last) = self.generations.last() {
            if self.current_tick < last.window_end() {
                return Err(GenerationError::Overlap {
                    active: last.index,
                    until: last.window_end(),
                });
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let poly = SymmetricBivariatePoly::generate(degree, modulus, rng.next_u64())?;
        let key = rng.next_u64();
        let index = self.generations.len() as u32;
        self.generations.push(Generation {
            index,
            deploy_time: self.current_tick,
            period,
            master: Some(MasterMaterial { poly, key }),
        });
        Ok(&self.generations[index as usize])
    }

    pub fn get(&self, index: u32) -> Result<&Generation, GenerationError> {
        self.generations
            .get(index as usize)
            .ok_or(GenerationError::Unknown(index))
    }

    pub fn generations(&self) -> &[Generation] {
        &self.generations
    }

    pub fn latest(&self) -> Option<&Generation> {
        self.generations.last()
    }

    pub fn generation_of_tick(&self, tick: Tick) -> Option<u32> {
        self.generations.iter().find(|g| g.contains(tick)).map(|g| g.index)
    }

    /// The generation whose window contains the current tick, if any.
    pub fn open_now(&self) -> Option<&Generation> {
        self.generations.last().filter(|g| g.contains(self.current_tick))
    }

    pub fn erase(&mut self, index: u32) -> Result<(), GenerationError> {
        let now = self.current_tick;
        self.generations
            .get_mut(index as usize)
            .ok_or(GenerationError::Unknown(index))?
            .erase(now)
    }

    /// Erases every generation whose window has closed; returns the indices
    /// erased by this call.
    pub fn erase_closed(&mut self) -> Vec<u32> {
        let now = self.current_tick;
        let mut erased = Vec::new();
        for g in &mut self.generations {
            if !g.is_erased() && now >= g.window_end() {
                g.master = None;
                erased.push(g.index);
            }
        }
        erased
    }
}
