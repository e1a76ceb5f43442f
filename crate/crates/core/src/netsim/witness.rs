//! Location-claim engines for the comparison protocols.

use std::collections::HashMap;
use std::rc::Rc;

use super::sim::{Endpoint, Engine, Envelope, World, STREAM_WITNESSES};
use super::trace::{AlertKind, MessageKind, Raiser};
use crate::baselines::{select_witnesses, BroadcastNode, ClaimTable, LocationClaim, LocationConflict, Observation};
use crate::keying::substream;

fn claim_of(w: &World, i: usize, epoch: u64) -> LocationClaim {
    let id = w.nodes[i].id;
    LocationClaim {
        subject: id,
        position: w.position(i),
        epoch,
        tick: w.tick,
        reporter: id,
    }
}

fn raise(w: &mut World, by: usize, conflict: &LocationConflict) {
    w.trace
        .raise_alert(w.tick, conflict.subject, AlertKind::LocationConflict, Raiser::Node(by));
}

pub(crate) enum ClaimMsg {
    Batch(Rc<[LocationClaim]>),
    Claim(LocationClaim),
    Forward(LocationClaim),
}

/// Every vehicle sends its claim plus newly learned claims to all
/// neighbours each tick.
pub(crate) struct BroadcastEngine {
    nodes: Vec<BroadcastNode>,
    own: Vec<Option<LocationClaim>>,
    conflict_radius: f64,
}

impl BroadcastEngine {
    pub fn new(w: &mut World) -> Self {
        let conflict_radius = 2.0 * w.topo.radius;
        BroadcastEngine {
            nodes: w
                .nodes
                .iter()
                .map(|n| BroadcastNode::new(n.id, conflict_radius))
                .collect(),
            own: vec![None; w.nodes.len()],
            conflict_radius,
        }
    }
}

impl Engine for BroadcastEngine {
    type Payload = ClaimMsg;

    fn deliver(&mut self, w: &mut World, msg: Envelope<ClaimMsg>, _out: &mut Vec<Envelope<ClaimMsg>>) {
        let (Endpoint::Node(to), ClaimMsg::Batch(batch)) = (msg.to, msg.payload) else {
            return;
        };
        if w.is_clone(to) {
            return;
        }
        for conflict in self.nodes[to].receive(&batch) {
            raise(w, to, &conflict);
        }
    }

    fn act(&mut self, w: &mut World, out: &mut Vec<Envelope<ClaimMsg>>) {
        let epoch = w.tick / w.cfg.round_ticks;
        for i in 0..w.nodes.len() {
            let own = match self.own[i] {
                Some(c) if c.epoch == epoch => c,
                _ => {
                    let c = claim_of(w, i, epoch);
                    self.own[i] = Some(c);
                    if let Some(conflict) = self.nodes[i].refresh_own(&c) {
                        if !w.is_clone(i) {
                            raise(w, i, &conflict);
                        }
                    }
                    c
                }
            };
            let batch = self.nodes[i].outgoing(own);
            for &j in w.neighbours(i) {
                out.push(Envelope::one_hop(
                    MessageKind::Claim,
                    Endpoint::Node(i),
                    Endpoint::Node(j),
                    ClaimMsg::Batch(Rc::clone(&batch)),
                ));
            }
        }
    }

    fn clones_added(&mut self, w: &mut World, first: usize) {
        for i in first..w.nodes.len() {
            self.nodes.push(BroadcastNode::new(w.nodes[i].id, self.conflict_radius));
            self.own.push(None);
        }
    }

    fn finish(&mut self, w: &mut World) {
        w.trace.node_memory = self.nodes[..w.n_original].iter().map(|n| n.table.peak()).collect();
        w.trace.node_peak_memory_entries = w.trace.node_memory.iter().copied().max().unwrap_or(0);
    }
}

/// Each vehicle claims once per epoch; every neighbour of the claimer
/// forwards the claim to the claim's witness set.
pub(crate) struct MulticastEngine {
    stores: Vec<ClaimTable>,
    g: usize,
    witness_seed: u64,
    cache: HashMap<usize, Rc<[usize]>>,
    cache_epoch: u64,
}

impl MulticastEngine {
    pub fn new(w: &World) -> Self {
        let radius = 2.0 * w.topo.radius;
        MulticastEngine {
            stores: (0..w.n_original).map(|_| ClaimTable::new(radius)).collect(),
            g: w.cfg.witnesses(),
            witness_seed: substream(w.cfg.seed, STREAM_WITNESSES),
            cache: HashMap::new(),
            cache_epoch: 0,
        }
    }

    /// The witness set of the claim `claimer` makes in `epoch`; every
    /// forwarding neighbour uses the same set.
    fn witnesses(&mut self, w: &World, claimer: usize, claim: &LocationClaim) -> Rc<[usize]> {
        if self.cache_epoch != claim.epoch {
            self.cache.clear();
            self.cache_epoch = claim.epoch;
        }
        let seed = substream(substream(self.witness_seed, claimer as u64), claim.epoch);
        let exclude = w.nodes[claimer].clone_of.unwrap_or(claimer);
        let (g, n) = (self.g, w.n_original);
        Rc::clone(self.cache.entry(claimer).or_insert_with(|| {
            select_witnesses(claim.subject, Some(exclude), n, g, seed)
                .witnesses
                .into()
        }))
    }

    fn witness(&mut self, w: &mut World, at: usize, claim: &LocationClaim) {
        if let Observation::Conflict(conflict) = self.stores[at].observe(claim) {
            raise(w, at, &conflict);
        }
    }
}

impl Engine for MulticastEngine {
    type Payload = ClaimMsg;

    fn prepare(&mut self, w: &mut World, _out: &mut Vec<Envelope<ClaimMsg>>) {
        let r = w.cfg.round_ticks;
        if w.tick.is_multiple_of(r) {
            // Keep the current epoch and stragglers from the previous one.
            let keep_from = (w.tick / r).saturating_sub(1);
            for s in &mut self.stores {
                s.purge_before(keep_from);
            }
        }
    }

    fn deliver(&mut self, w: &mut World, msg: Envelope<ClaimMsg>, out: &mut Vec<Envelope<ClaimMsg>>) {
        let (Endpoint::Node(from), Endpoint::Node(to)) = (msg.from, msg.to) else {
            return;
        };
        if w.is_clone(to) {
            return;
        }
        match msg.payload {
            ClaimMsg::Claim(claim) => {
                let forwarded = LocationClaim {
                    reporter: w.nodes[to].id,
                    ..claim
                };
                for &target in self.witnesses(w, from, &claim).iter() {
                    if target == to {
                        self.witness(w, to, &forwarded);
                        continue;
                    }
                    out.push(Envelope {
                        kind: MessageKind::ForwardClaim,
                        from: Endpoint::Node(to),
                        to: Endpoint::Node(target),
                        hops: w.hops(to, target),
                        payload: ClaimMsg::Forward(forwarded),
                    });
                }
            }
            ClaimMsg::Forward(claim) => self.witness(w, to, &claim),
            ClaimMsg::Batch(_) => {}
        }
    }

    fn act(&mut self, w: &mut World, out: &mut Vec<Envelope<ClaimMsg>>) {
        let r = w.cfg.round_ticks;
        let epoch = w.tick / r;
        for i in 0..w.nodes.len() {
            if w.tick % r != i as u64 % r {
                continue;
            }
            let claim = claim_of(w, i, epoch);
            for &j in w.neighbours(i) {
                out.push(Envelope::one_hop(
                    MessageKind::Claim,
                    Endpoint::Node(i),
                    Endpoint::Node(j),
                    ClaimMsg::Claim(claim),
                ));
            }
        }
    }

    fn finish(&mut self, w: &mut World) {
        w.trace.node_memory = self.stores.iter().map(ClaimTable::peak).collect();
        w.trace.node_peak_memory_entries = w.trace.node_memory.iter().copied().max().unwrap_or(0);
    }
}
