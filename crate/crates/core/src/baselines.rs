//! Location-claim replica detection used as comparison protocols.
//!
//! * Neighbour broadcast: every vehicle announces `(id, position)` to its
//!   radio neighbours each round and relays claims it has not seen yet; any
//!   vehicle holding two same-epoch claims for one id at positions farther
//!   apart than the conflict radius raises an alert.
//! * Randomized multicast: each neighbour of a claimer forwards the claim to
//!   `g` pseudo-randomly chosen witnesses; a witness that receives two
//!   conflicting claims for one id raises an alert. Only the randomized
//!   variant is provided; line-selected multicast is not.

use std::collections::HashMap;
use std::rc::Rc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::generations::Tick;
use crate::geometry::Position;
use crate::keying::NodeId;
use crate::netsim::topology::{HopMatrix, Topology};

/// A vehicle's statement of where it is during a claim epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocationClaim {
    pub subject: NodeId,
    pub position: Position,
    pub epoch: u64,
    pub tick: Tick,
    /// The vehicle that passed the claim on.
    pub reporter: NodeId,
}

/// Two same-epoch claims for one identity that cannot both be true.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationConflict {
    pub subject: NodeId,
    pub first: (Tick, Position),
    pub second: (Tick, Position),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    New,
    Known,
    Stale,
    Conflict(LocationConflict),
}

/// Latest claim per identity, as held by a broadcast receiver or a witness.
#[derive(Debug, Clone)]
pub struct ClaimTable {
    claims: HashMap<NodeId, LocationClaim>,
    conflict_radius: f64,
    peak: usize,
}

impl ClaimTable {
    pub fn new(conflict_radius: f64) -> Self {
        ClaimTable {
            claims: HashMap::new(),
            conflict_radius,
            peak: 0,
        }
    }

    pub fn observe(&mut self, claim: &LocationClaim) -> Observation {
        match self.claims.get(&claim.subject) {
            None => {
                self.claims.insert(claim.subject, *claim);
                self.peak = self.peak.max(self.claims.len());
                Observation::New
            }
            Some(old) if claim.epoch > old.epoch => {
                self.claims.insert(claim.subject, *claim);
                Observation::New
            }
            Some(old) if claim.epoch < old.epoch => Observation::Stale,
            Some(old) => {
                if old.position.distance(&claim.position) > self.conflict_radius {
                    Observation::Conflict(LocationConflict {
                        subject: claim.subject,
                        first: (old.tick, old.position),
                        second: (claim.tick, claim.position),
                    })
                } else {
                    Observation::Known
                }
            }
        }
    }

    /// Forgets claims older than `epoch`.
    pub fn purge_before(&mut self, epoch: u64) {
        self.claims.retain(|_, c| c.epoch >= epoch);
    }

    pub fn len(&self) -> usize {
        self.claims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.claims.is_empty()
    }

    pub fn peak(&self) -> usize {
        self.peak
    }
}

/// Per-vehicle state for neighbour broadcast.
#[derive(Debug, Clone)]
pub struct BroadcastNode {
    pub id: NodeId,
    pub table: ClaimTable,
    relay: Vec<LocationClaim>,
}

impl BroadcastNode {
    pub fn new(id: NodeId, conflict_radius: f64) -> Self {
        BroadcastNode {
            id,
            table: ClaimTable::new(conflict_radius),
            relay: Vec::new(),
        }
    }

    /// Records the vehicle's own claim for a new epoch.
    pub fn refresh_own(&mut self, own: &LocationClaim) -> Option<LocationConflict> {
        match self.table.observe(own) {
            Observation::Conflict(c) => Some(c),
            _ => None,
        }
    }

    /// The round's outgoing batch: own claim followed by every claim learned
    /// since the previous round. One batch goes to each neighbour.
    pub fn outgoing(&mut self, own: LocationClaim) -> Rc<[LocationClaim]> {
        let mut batch = Vec::with_capacity(1 + self.relay.len());
        batch.push(own);
        batch.extend(self.relay.drain(..).filter(|c| c.subject != own.subject));
        batch.into()
    }

    pub fn receive(&mut self, batch: &[LocationClaim]) -> Vec<LocationConflict> {
        let mut conflicts = Vec::new();
        for claim in batch {
            match self.table.observe(claim) {
                Observation::New => self.relay.push(*claim),
                Observation::Conflict(c) => conflicts.push(c),
                Observation::Known | Observation::Stale => {}
            }
        }
        conflicts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BroadcastRound {
    /// One message per directed link.
    pub messages: usize,
    /// (receiver index, conflict) pairs.
    pub alerts: Vec<(usize, LocationConflict)>,
}

/// One loss-free broadcast round: every vehicle sends its batch to each
/// neighbour, then every receiver checks the claims against its table.
pub fn broadcast_round(
    topology: &Topology,
    nodes: &mut [BroadcastNode],
    own_claims: &[LocationClaim],
) -> BroadcastRound {
    let mut alerts = Vec::new();
    for (i, (node, own)) in nodes.iter_mut().zip(own_claims).enumerate() {
        if let Some(c) = node.refresh_own(own) {
            alerts.push((i, c));
        }
    }
    let batches: Vec<Rc<[LocationClaim]>> = nodes
        .iter_mut()
        .zip(own_claims)
        .map(|(node, own)| node.outgoing(*own))
        .collect();
    let mut messages = 0;
    for (sender, batch) in batches.iter().enumerate() {
        for &receiver in &topology.adjacency[sender] {
            messages += 1;
            for c in nodes[receiver].receive(batch) {
                alerts.push((receiver, c));
            }
        }
    }
    BroadcastRound { messages, alerts }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WitnessSet {
    pub claim_subject: NodeId,
    /// Vehicle indices, in sampling order.
    pub witnesses: Vec<usize>,
}

impl WitnessSet {
    pub fn size(&self) -> usize {
        self.witnesses.len()
    }
}

/// Samples `min(g, population - 1)` distinct witnesses from `0..population`,
/// never choosing `exclude` (the claimed identity's own vehicle).
pub fn select_witnesses(subject: NodeId, exclude: Option<usize>, population: usize, g: usize, seed: u64) -> WitnessSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool = match exclude {
        Some(e) if e < population => population - 1,
        _ => population,
    };
    let k = g.min(pool);
    let witnesses = sample(&mut rng, pool, k)
        .into_iter()
        .map(|w| match exclude {
            Some(e) if w >= e => w + 1,
            _ => w,
        })
        .collect();
    WitnessSet {
        claim_subject: subject,
        witnesses,
    }
}

/// Default witness count, `ceil(sqrt(n))`.
pub fn default_witness_count(n: usize) -> usize {
    (n as f64).sqrt().ceil() as usize
}

/// One forwarded copy of a claim.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForwardCopy {
    pub from: usize,
    pub to: usize,
    pub hops: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MulticastOutcome {
    pub witnesses: WitnessSet,
    pub copies: Vec<ForwardCopy>,
    pub alert: Option<(usize, LocationConflict)>,
}

/// Loss-free randomized multicast of one claim: each neighbour of the
/// claiming vehicle forwards it to the claim's witness set; each witness
/// checks it against its store.
#[allow(clippy::too_many_arguments)]
pub fn randomized_multicast_claim(
    claim: &LocationClaim,
    claimer: usize,
    exclude: Option<usize>,
    topology: &Topology,
    hops: &HopMatrix,
    population: usize,
    g: usize,
    seed: u64,
    stores: &mut [ClaimTable],
) -> MulticastOutcome {
    let witnesses = select_witnesses(claim.subject, exclude, population, g, seed);
    let mut copies = Vec::new();
    let mut alert = None;
    for &neighbour in &topology.adjacency[claimer] {
        for &w in &witnesses.witnesses {
            copies.push(ForwardCopy {
                from: neighbour,
                to: w,
                hops: hops.get(neighbour, w).max(1),
            });
            if let Observation::Conflict(c) = stores[w].observe(claim) {
                alert.get_or_insert((w, c));
            }
        }
    }
    MulticastOutcome {
        witnesses,
        copies,
        alert,
    }
}

/// Exact probability that two independent uniformly random `g`-subsets of
/// `n` items intersect: `1 - C(n-g, g) / C(n, g)`.
pub fn birthday_collision_exact(n: usize, g: usize) -> f64 {
    if g == 0 || n == 0 {
        return 0.0;
    }
    let g = g.min(n);
    if 2 * g > n {
        return 1.0;
    }
    let mut miss = 1.0;
    for i in 0..g {
        miss *= (n - g - i) as f64 / (n - i) as f64;
    }
    1.0 - miss
}

/// Monte Carlo estimate of the same intersection probability.
pub fn birthday_collision_oracle(n: usize, g: usize, trials: usize, seed: u64) -> f64 {
    if trials == 0 || g == 0 || n == 0 {
        return 0.0;
    }
    let g = g.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut marks = vec![0usize; n];
    let mut hits = 0usize;
    for t in 1..=trials {
        for i in sample(&mut rng, n, g) {
            marks[i] = t;
        }
        if sample(&mut rng, n, g).into_iter().any(|i| marks[i] == t) {
            hits += 1;
        }
    }
    hits as f64 / trials as f64
}
