//! The central base station: admits vehicles into the open generation,
//! brokers keys while a requester's window is open, verifies Hello
//! challenges against the registry, and adjudicates replica alerts.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::field::FieldElement;
use crate::generations::{
    verify_deployment_freshness, Freshness, GenerationClock, GenerationError, RejectReason, Tick,
};
use crate::geometry::Position;
use crate::keying::{node_hash, pairwise_key, HashMode, IdentityHash, KeyShare, NodeId, NodeKey};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StationError {
    #[error("no generation window is open at tick {0}")]
    NoOpenGeneration(Tick),
    #[error("node {0} is not registered")]
    UnknownNode(NodeId),
    #[error("node {0} has been revoked")]
    Revoked(NodeId),
    #[error("claimed generation {generation} has not opened yet at tick {tick}")]
    GenerationNotOpen { generation: u32, tick: Tick },
    #[error("group admission needs at least one request")]
    EmptyGroup,
    #[error("group admission mixes group ids {0} and {1}")]
    MixedGroups(u32, u32),
    #[error("group admission spans generations {0:?} and {1:?}")]
    MixedGenerations(Option<u32>, Option<u32>),
    #[error("alert for {alert} does not reference node {node}")]
    AlertMismatch { node: NodeId, alert: NodeId },
    #[error(transparent)]
    Generation(#[from] GenerationError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistryEntry {
    pub node: NodeId,
    pub key: NodeKey,
    pub hash: IdentityHash,
    pub generation_index: u32,
    pub position: Position,
    pub join_tick: Tick,
    pub last_claim_tick: Tick,
    /// Key material counts as live until this tick (window end plus TTL).
    pub key_expiry: Tick,
    pub revoked: bool,
    pub group: u32,
    pub permission: u8,
    pub is_leader: bool,
    admission_nonce: u64,
}

impl RegistryEntry {
    pub fn is_active(&self, tick: Tick) -> bool {
        !self.revoked && tick < self.key_expiry
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissionRequest {
    pub node: NodeId,
    pub position: Position,
    pub tick: Tick,
    pub group: u32,
    pub permission: u8,
    /// `None` joins whichever generation is open; `Some` claims a specific one.
    pub claimed_generation: Option<u32>,
    /// Per-attempt token chosen by the vehicle; a retransmission repeats it.
    pub nonce: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AlertReason {
    DuplicateActiveId,
    ExpiredGenerationJoin,
    KeyMismatch,
}

impl AlertReason {
    pub fn as_str(self) -> &'static str {
        match self {
            AlertReason::DuplicateActiveId => "duplicate-active-id",
            AlertReason::ExpiredGenerationJoin => "expired-generation-join",
            AlertReason::KeyMismatch => "key-mismatch",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaAlert {
    pub suspect: NodeId,
    pub reason: AlertReason,
    /// (tick, position) observations backing the alert: registry entries
    /// first, then the offending request.
    pub evidence: Vec<(Tick, Position)>,
    pub tick: Tick,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Admission {
    Admitted { entry: RegistryEntry, share: KeyShare },
    Alert(ReplicaAlert),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupAdmission {
    pub leader: NodeId,
    /// Recipients of the leader's identity announcement (everyone but the leader).
    pub announcements: Vec<NodeId>,
    pub outcomes: Vec<Result<Admission, StationError>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum KeyResponse {
    Key(FieldElement),
    Rejected {
        reason: KeyRejection,
        alert: Option<ReplicaAlert>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyRejection {
    Freshness(RejectReason),
    Revoked,
    LocationConflict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hello {
    pub sender: NodeId,
    pub claimed_generation: u32,
    pub claimed_join_tick: Tick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HelloFailure {
    NotRegistered,
    Revoked,
    GenerationMismatch,
    /// Sender and receiver hold shares of different masters.
    CrossGeneration,
    KeyMismatch,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HelloOutcome {
    Verified,
    Failed {
        reason: HelloFailure,
        /// Candidate the receiver forwards to the station.
        alert: Option<ReplicaAlert>,
    },
}

/// What a Hello sender returns for challenge `c`: its pairwise key with the
/// receiver, offset by `c`.
pub fn hello_response(sender_share: &KeyShare, receiver_hash: IdentityHash, challenge: FieldElement) -> FieldElement {
    let m = sender_share.poly.modulus();
    m.add(pairwise_key(sender_share, receiver_hash), challenge)
}

#[derive(Debug, Clone)]
pub struct StationConfig {
    pub hash_mode: HashMode,
    /// Extra key lifetime past the window end. `None` means one window length.
    pub key_ttl: Option<Tick>,
    /// Two claims for one id farther apart than this are a location conflict.
    pub conflict_radius: f64,
    /// Claims closer in time than this are compared for location conflicts.
    pub conflict_window: Tick,
    pub seed: u64,
}

impl Default for StationConfig {
    fn default() -> Self {
        StationConfig {
            hash_mode: HashMode::Mixed,
            key_ttl: None,
            conflict_radius: 80.0,
            conflict_window: 10,
            seed: 0,
        }
    }
}

pub struct Station {
    config: StationConfig,
    rng: ChaCha8Rng,
    registry: BTreeMap<NodeId, RegistryEntry>,
    hash_index: HashMap<(u32, IdentityHash), NodeId>,
    alerts: Vec<ReplicaAlert>,
    alerted: BTreeSet<NodeId>,
    peak_entries: usize,
    hash_collisions: u64,
}

impl Station {
    pub fn new(config: StationConfig) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Station {
            config,
            rng,
            registry: BTreeMap::new(),
            hash_index: HashMap::new(),
            alerts: Vec::new(),
            alerted: BTreeSet::new(),
            peak_entries: 0,
            hash_collisions: 0,
        }
    }

    pub fn config(&self) -> &StationConfig {
        &self.config
    }

    pub fn entry(&self, id: NodeId) -> Option<&RegistryEntry> {
        self.registry.get(&id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &RegistryEntry> {
        self.registry.values()
    }

    pub fn active_count(&self, tick: Tick) -> usize {
        self.registry.values().filter(|e| e.is_active(tick)).count()
    }

    /// Alerts in the order they were first recorded, one per suspect.
    pub fn alerts(&self) -> &[ReplicaAlert] {
        &self.alerts
    }

    pub fn peak_entries(&self) -> usize {
        self.peak_entries
    }

    pub fn hash_collisions(&self) -> u64 {
        self.hash_collisions
    }

    /// Records an alert unless its suspect is already flagged. Returns true
    /// when the alert is new.
    pub fn record_alert(&mut self, alert: ReplicaAlert) -> bool {
        if self.alerted.insert(alert.suspect) {
            self.alerts.push(alert);
            true
        } else {
            false
        }
    }

    pub fn admit_node(&mut self, req: &AdmissionRequest, clock: &GenerationClock) -> Result<Admission, StationError> {
        if let Some(existing) = self.registry.get(&req.node) {
            if existing.revoked {
                return Err(StationError::Revoked(req.node));
            }
            if existing.is_active(req.tick) {
                if existing.admission_nonce == req.nonce {
                    // Retransmission of an admission whose response was lost.
                    let entry = existing.clone();
                    let share = clock.get(entry.generation_index)?.derive_share(
                        entry.node,
                        entry.key,
                        self.config.hash_mode,
                    )?;
                    return Ok(Admission::Admitted { entry, share });
                }
                let evidence = vec![(existing.join_tick, existing.position), (req.tick, req.position)];
                let alert = ReplicaAlert {
                    suspect: req.node,
                    reason: AlertReason::DuplicateActiveId,
                    evidence,
                    tick: req.tick,
                };
                // Original and clone are indistinguishable here: revoke the id.
                self.revoke_id(req.node);
                self.record_alert(alert.clone());
                return Ok(Admission::Alert(alert));
            }
        }

        let generation = match req.claimed_generation {
            Some(index) => {
                let gen = clock.get(index)?;
                if req.tick >= gen.window_end() {
                    let mut evidence: Vec<_> = self
                        .registry
                        .get(&req.node)
                        .map(|e| (e.join_tick, e.position))
                        .into_iter()
                        .collect();
                    evidence.push((req.tick, req.position));
                    let alert = ReplicaAlert {
                        suspect: req.node,
                        reason: AlertReason::ExpiredGenerationJoin,
                        evidence,
                        tick: req.tick,
                    };
                    if self.registry.contains_key(&req.node) {
                        self.revoke_id(req.node);
                    }
                    self.record_alert(alert.clone());
                    return Ok(Admission::Alert(alert));
                }
                if req.tick < gen.deploy_time() {
                    return Err(StationError::GenerationNotOpen {
                        generation: index,
                        tick: req.tick,
                    });
                }
                gen
            }
            None => {
                let index = clock
                    .generation_of_tick(req.tick)
                    .ok_or(StationError::NoOpenGeneration(req.tick))?;
                clock.get(index)?
            }
        };
        let master = generation.master_poly()?;
        let modulus = master.modulus();

        // Two live nodes on one hash point would break key agreement; redraw.
        let (key, hash) = loop {
            let key = NodeKey(self.rng.next_u64());
            let hash = node_hash(req.node, key, modulus, self.config.hash_mode);
            match self.hash_index.get(&(generation.index(), hash)) {
                Some(other) if *other != req.node && self.config.hash_mode == HashMode::Mixed => {
                    self.hash_collisions += 1;
                }
                _ => break (key, hash),
            }
        };
        let share = generation.derive_share(req.node, key, self.config.hash_mode)?;
        let ttl = self.config.key_ttl.unwrap_or(generation.period());
        let entry = RegistryEntry {
            node: req.node,
            key,
            hash,
            generation_index: generation.index(),
            position: req.position,
            join_tick: req.tick,
            last_claim_tick: req.tick,
            key_expiry: generation.window_end() + ttl,
            revoked: false,
            group: req.group,
            permission: req.permission,
            is_leader: false,
            admission_nonce: req.nonce,
        };
        if let Some(old) = self.registry.insert(req.node, entry.clone()) {
            self.hash_index.remove(&(old.generation_index, old.hash));
        }
        self.hash_index.insert((entry.generation_index, hash), req.node);
        self.peak_entries = self.peak_entries.max(self.registry.len());
        Ok(Admission::Admitted { entry, share })
    }

    /// Admits a bootstrap group. The member with the largest id leads and
    /// announces itself to the other members before everyone is admitted.
    pub fn admit_group(
        &mut self,
        requests: &[AdmissionRequest],
        clock: &GenerationClock,
    ) -> Result<GroupAdmission, StationError> {
        let first = requests.first().ok_or(StationError::EmptyGroup)?;
        let gen_of = |r: &AdmissionRequest| r.claimed_generation.or_else(|| clock.generation_of_tick(r.tick));
        let first_gen = gen_of(first);
        for r in requests {
            if r.group != first.group {
                return Err(StationError::MixedGroups(first.group, r.group));
            }
            if gen_of(r) != first_gen {
                return Err(StationError::MixedGenerations(first_gen, gen_of(r)));
            }
        }
        let leader = requests.iter().map(|r| r.node).max().expect("non-empty");
        let announcements = requests.iter().map(|r| r.node).filter(|&n| n != leader).collect();
        let mut outcomes = Vec::with_capacity(requests.len());
        for r in requests {
            let mut outcome = self.admit_node(r, clock);
            if let Ok(Admission::Admitted { entry, .. }) = &mut outcome {
                if entry.node == leader {
                    entry.is_leader = true;
                    if let Some(e) = self.registry.get_mut(&leader) {
                        e.is_leader = true;
                    }
                }
            }
            outcomes.push(outcome);
        }
        Ok(GroupAdmission {
            leader,
            announcements,
            outcomes,
        })
    }

    /// A registered node asks for its pairwise key with `target_hash`. Key
    /// material only flows while the requester's generation window is open.
    pub fn handle_key_request(
        &mut self,
        requester: NodeId,
        position: Position,
        target_hash: IdentityHash,
        current_tick: Tick,
        clock: &GenerationClock,
    ) -> Result<KeyResponse, StationError> {
        let entry = self
            .registry
            .get(&requester)
            .ok_or(StationError::UnknownNode(requester))?;
        if entry.revoked {
            return Ok(KeyResponse::Rejected {
                reason: KeyRejection::Revoked,
                alert: None,
            });
        }
        if current_tick.saturating_sub(entry.last_claim_tick) <= self.config.conflict_window
            && entry.position.distance(&position) > self.config.conflict_radius
        {
            let alert = ReplicaAlert {
                suspect: requester,
                reason: AlertReason::DuplicateActiveId,
                evidence: vec![(entry.last_claim_tick, entry.position), (current_tick, position)],
                tick: current_tick,
            };
            self.revoke_id(requester);
            self.record_alert(alert.clone());
            return Ok(KeyResponse::Rejected {
                reason: KeyRejection::LocationConflict,
                alert: Some(alert),
            });
        }
        let gen = clock.get(entry.generation_index)?;
        match verify_deployment_freshness(gen, entry.join_tick, current_tick) {
            Freshness::Accept => {
                let key = gen.master_poly()?.eval(entry.hash.0, target_hash.0);
                let e = self.registry.get_mut(&requester).expect("checked above");
                e.last_claim_tick = current_tick;
                e.position = position;
                Ok(KeyResponse::Key(key))
            }
            Freshness::Reject(reason) => {
                let alert = (reason == RejectReason::WindowExpired).then(|| ReplicaAlert {
                    suspect: requester,
                    reason: AlertReason::ExpiredGenerationJoin,
                    evidence: vec![(entry.join_tick, entry.position), (current_tick, position)],
                    tick: current_tick,
                });
                if let Some(a) = &alert {
                    self.revoke_id(requester);
                    self.record_alert(a.clone());
                }
                Ok(KeyResponse::Rejected {
                    reason: KeyRejection::Freshness(reason),
                    alert,
                })
            }
        }
    }

    /// Receiver-side Hello check. `response` is what the sender answered to
    /// `challenge`; the receiver recomputes it from its own share and the
    /// sender's registered hash.
    pub fn handle_hello(
        &self,
        hello: &Hello,
        response: FieldElement,
        challenge: FieldElement,
        receiver: NodeId,
        receiver_share: &KeyShare,
        current_tick: Tick,
    ) -> Result<HelloOutcome, StationError> {
        if !self.registry.contains_key(&receiver) {
            return Err(StationError::UnknownNode(receiver));
        }
        let fail = |reason| Ok(HelloOutcome::Failed { reason, alert: None });
        let Some(sender) = self.registry.get(&hello.sender) else {
            return fail(HelloFailure::NotRegistered);
        };
        if sender.revoked {
            return fail(HelloFailure::Revoked);
        }
        if sender.generation_index != hello.claimed_generation {
            return fail(HelloFailure::GenerationMismatch);
        }
        if receiver_share.generation_index != sender.generation_index {
            return fail(HelloFailure::CrossGeneration);
        }
        let m = receiver_share.poly.modulus();
        let expected = m.add(pairwise_key(receiver_share, sender.hash), challenge);
        if expected == response {
            Ok(HelloOutcome::Verified)
        } else {
            Ok(HelloOutcome::Failed {
                reason: HelloFailure::KeyMismatch,
                alert: Some(ReplicaAlert {
                    suspect: hello.sender,
                    reason: AlertReason::KeyMismatch,
                    evidence: vec![(sender.join_tick, sender.position)],
                    tick: current_tick,
                }),
            })
        }
    }

    /// Marks the entry revoked; repeated revocation is a no-op.
    pub fn revoke(&mut self, node: NodeId, alert: &ReplicaAlert) -> Result<&RegistryEntry, StationError> {
        if alert.suspect != node {
            return Err(StationError::AlertMismatch {
                node,
                alert: alert.suspect,
            });
        }
        if !self.registry.contains_key(&node) {
            return Err(StationError::UnknownNode(node));
        }
        self.revoke_id(node);
        self.record_alert(alert.clone());
        Ok(&self.registry[&node])
    }

    fn revoke_id(&mut self, node: NodeId) {
        if let Some(e) = self.registry.get_mut(&node) {
            e.revoked = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Modulus, DEFAULT_MODULUS};
    use crate::keying::derive_share;

    fn clock_window(deploy: Tick, period: Tick) -> GenerationClock {
        let mut c = GenerationClock::new();
        c.advance_to(deploy).unwrap();
        c.open_generation(period, 2, Modulus::new(DEFAULT_MODULUS).unwrap(), 11)
            .unwrap();
        c
    }

    fn req(node: u64, tick: Tick, x: f64) -> AdmissionRequest {
        AdmissionRequest {
            node: NodeId(node),
            position: Position::new(x, 0.0),
            tick,
            group: 0,
            permission: 1,
            claimed_generation: None,
            nonce: node * 1000 + tick,
        }
    }

    fn admitted(a: Admission) -> (RegistryEntry, KeyShare) {
        match a {
            Admission::Admitted { entry, share } => (entry, share),
            Admission::Alert(a) => panic!("unexpected alert {a:?}"),
        }
    }

    fn alert(a: Admission) -> ReplicaAlert {
        match a {
            Admission::Alert(a) => a,
            other => panic!("expected alert, got {other:?}"),
        }
    }

    #[test]
    fn fresh_admission() {
        let clock = clock_window(100, 50);
        let mut st = Station::new(StationConfig::default());
        let (entry, share) = admitted(st.admit_node(&req(7, 110, 0.0), &clock).unwrap());
        assert_eq!(entry.join_tick, 110);
        assert_eq!(entry.generation_index, 0);
        assert_eq!(entry.key_expiry, 200);
        assert_eq!(share.owner, NodeId(7));
        let m = Modulus::new(DEFAULT_MODULUS).unwrap();
        assert_eq!(entry.hash, node_hash(NodeId(7), entry.key, m, HashMode::Mixed));
    }

    #[test]
    fn duplicate_admission_alerts_and_revokes() {
        let clock = clock_window(100, 50);
        let mut st = Station::new(StationConfig::default());
        admitted(st.admit_node(&req(7, 110, 0.0), &clock).unwrap());
        let a = alert(st.admit_node(&req(7, 120, 500.0), &clock).unwrap());
        assert_eq!(a.reason, AlertReason::DuplicateActiveId);
        assert_eq!(a.evidence.len(), 2);
        assert!(st.entry(NodeId(7)).unwrap().revoked);
        assert_eq!(st.alerts().len(), 1);
    }

    #[test]
    fn retransmitted_admission_is_idempotent() {
        let clock = clock_window(100, 50);
        let mut st = Station::new(StationConfig::default());
        let r = req(7, 110, 0.0);
        let (e1, s1) = admitted(st.admit_node(&r, &clock).unwrap());
        let (e2, s2) = admitted(st.admit_node(&AdmissionRequest { tick: 112, ..r }, &clock).unwrap());
        assert_eq!(e1, e2);
        assert_eq!(s1, s2);
        assert!(st.alerts().is_empty());
    }

    #[test]
    fn expired_generation_join() {
        let clock = clock_window(100, 50);
        let mut st = Station::new(StationConfig::default());
        let r = AdmissionRequest {
            claimed_generation: Some(0),
            ..req(9, 160, 0.0)
        };
        let a = alert(st.admit_node(&r, &clock).unwrap());
        assert_eq!(a.reason, AlertReason::ExpiredGenerationJoin);
        assert_eq!(a.evidence, vec![(160, Position::new(0.0, 0.0))]);
    }

    #[test]
    fn no_open_generation_is_a_rejection() {
        let clock = clock_window(100, 50);
        let mut st = Station::new(StationConfig::default());
        assert_eq!(
            st.admit_node(&req(3, 160, 0.0), &clock).unwrap_err(),
            StationError::NoOpenGeneration(160)
        );
        assert!(st.alerts().is_empty());
    }

    #[test]
    fn group_bootstrap() {
        let clock = clock_window(0, 50);
        let mut st = Station::new(StationConfig::default());
        let reqs: Vec<_> = [3, 9, 5].iter().map(|&n| req(n, 10, n as f64)).collect();
        let g = st.admit_group(&reqs, &clock).unwrap();
        assert_eq!(g.leader, NodeId(9));
        assert_eq!(g.announcements, vec![NodeId(3), NodeId(5)]);
        assert_eq!(g.outcomes.len(), 3);
        assert!(g.outcomes.iter().all(|o| matches!(o, Ok(Admission::Admitted { .. }))));
        assert!(st.entry(NodeId(9)).unwrap().is_leader);
        assert!(!st.entry(NodeId(3)).unwrap().is_leader);

        let single = st.admit_group(&[req(4, 11, 0.0)], &clock).unwrap();
        assert_eq!(single.leader, NodeId(4));
        assert!(single.announcements.is_empty());
    }

    #[test]
    fn group_with_duplicate_member() {
        let clock = clock_window(0, 50);
        let mut st = Station::new(StationConfig::default());
        admitted(st.admit_node(&req(5, 5, 0.0), &clock).unwrap());
        let reqs: Vec<_> = [3, 9, 5].iter().map(|&n| req(n, 10, 300.0)).collect();
        let g = st.admit_group(&reqs, &clock).unwrap();
        let reasons: Vec<_> = g
            .outcomes
            .iter()
            .map(|o| match o {
                Ok(Admission::Admitted { .. }) => None,
                Ok(Admission::Alert(a)) => Some(a.reason),
                Err(e) => panic!("{e}"),
            })
            .collect();
        assert_eq!(reasons, vec![None, None, Some(AlertReason::DuplicateActiveId)]);
    }

    #[test]
    fn group_validation() {
        let mut clock = clock_window(0, 50);
        let mut st = Station::new(StationConfig::default());
        assert_eq!(st.admit_group(&[], &clock).unwrap_err(), StationError::EmptyGroup);
        let mixed = [
            req(1, 10, 0.0),
            AdmissionRequest {
                group: 2,
                ..req(2, 10, 0.0)
            },
        ];
        assert_eq!(
            st.admit_group(&mixed, &clock).unwrap_err(),
            StationError::MixedGroups(0, 2)
        );
        clock.advance_to(60).unwrap();
        clock
            .open_generation(50, 2, Modulus::new(DEFAULT_MODULUS).unwrap(), 12)
            .unwrap();
        let spans = [req(1, 10, 0.0), req(2, 70, 0.0)];
        assert_eq!(
            st.admit_group(&spans, &clock).unwrap_err(),
            StationError::MixedGenerations(Some(0), Some(1))
        );
    }

    #[test]
    fn key_request_inside_window_matches_master() {
        let clock = clock_window(100, 50);
        let mut st = Station::new(StationConfig::default());
        let (e, share) = admitted(st.admit_node(&req(7, 110, 0.0), &clock).unwrap());
        let (f, _) = admitted(st.admit_node(&req(8, 111, 10.0), &clock).unwrap());
        let resp = st.handle_key_request(e.node, e.position, f.hash, 120, &clock).unwrap();
        let master = clock.get(0).unwrap().master_poly().unwrap();
        assert_eq!(resp, KeyResponse::Key(master.eval(e.hash.0, f.hash.0)));
        assert_eq!(resp, KeyResponse::Key(pairwise_key(&share, f.hash)));
        // own hash: the diagonal
        let own = st.handle_key_request(e.node, e.position, e.hash, 121, &clock).unwrap();
        assert_eq!(own, KeyResponse::Key(master.eval(e.hash.0, e.hash.0)));
    }

    #[test]
    fn key_request_after_window_alerts() {
        let clock = clock_window(100, 50);
        let mut st = Station::new(StationConfig::default());
        let (e, _) = admitted(st.admit_node(&req(7, 110, 0.0), &clock).unwrap());
        match st.handle_key_request(e.node, e.position, e.hash, 170, &clock).unwrap() {
            KeyResponse::Rejected { reason, alert } => {
                assert_eq!(reason, KeyRejection::Freshness(RejectReason::WindowExpired));
                assert_eq!(alert.unwrap().reason, AlertReason::ExpiredGenerationJoin);
            }
            other => panic!("{other:?}"),
        }
        assert!(st.entry(e.node).unwrap().revoked);
        assert_eq!(
            st.handle_key_request(NodeId(99), e.position, e.hash, 170, &clock)
                .unwrap_err(),
            StationError::UnknownNode(NodeId(99))
        );
    }

    #[test]
    fn key_request_location_conflict() {
        let clock = clock_window(100, 50);
        let mut st = Station::new(StationConfig::default());
        let (e, _) = admitted(st.admit_node(&req(7, 110, 0.0), &clock).unwrap());
        // Honest drift within the conflict radius is fine.
        assert!(matches!(
            st.handle_key_request(e.node, Position::new(8.0, 0.0), e.hash, 115, &clock)
                .unwrap(),
            KeyResponse::Key(_)
        ));
        match st
            .handle_key_request(e.node, Position::new(600.0, 0.0), e.hash, 118, &clock)
            .unwrap()
        {
            KeyResponse::Rejected { reason, alert } => {
                assert_eq!(reason, KeyRejection::LocationConflict);
                assert_eq!(alert.unwrap().reason, AlertReason::DuplicateActiveId);
            }
            other => panic!("{other:?}"),
        }
    }

    fn hello_fixture() -> (
        GenerationClock,
        Station,
        RegistryEntry,
        KeyShare,
        RegistryEntry,
        KeyShare,
    ) {
        let clock = clock_window(0, 50);
        let mut st = Station::new(StationConfig::default());
        let (a, sa) = admitted(st.admit_node(&req(1, 5, 0.0), &clock).unwrap());
        let (b, sb) = admitted(st.admit_node(&req(2, 6, 20.0), &clock).unwrap());
        (clock, st, a, sa, b, sb)
    }

    #[test]
    fn honest_hello_verifies() {
        let (_, st, a, sa, b, sb) = hello_fixture();
        let m = sa.poly.modulus();
        let c = m.elem(123_456);
        let hello = Hello {
            sender: a.node,
            claimed_generation: 0,
            claimed_join_tick: a.join_tick,
        };
        let resp = hello_response(&sa, b.hash, c);
        assert_eq!(
            st.handle_hello(&hello, resp, c, b.node, &sb, 20).unwrap(),
            HelloOutcome::Verified
        );
    }

    #[test]
    fn clone_with_other_key_fails_hello() {
        let (clock, st, a, _, b, sb) = hello_fixture();
        let m = sb.poly.modulus();
        // The clone holds a share for the victim id under a different key.
        let forged_key = NodeKey(a.key.0 ^ 0xdead_beef);
        let forged = derive_share(
            clock.get(0).unwrap().master_poly().unwrap(),
            a.node,
            forged_key,
            0,
            HashMode::Mixed,
        );
        let forged_hash = node_hash(a.node, forged_key, m, HashMode::Mixed);
        assert_ne!(forged_hash, a.hash);
        let c = m.elem(42);
        let resp = hello_response(&forged, b.hash, c);
        assert_ne!(resp, m.add(pairwise_key(&sb, a.hash), c));
        let hello = Hello {
            sender: a.node,
            claimed_generation: 0,
            claimed_join_tick: a.join_tick,
        };
        match st.handle_hello(&hello, resp, c, b.node, &sb, 20).unwrap() {
            HelloOutcome::Failed { reason, alert } => {
                assert_eq!(reason, HelloFailure::KeyMismatch);
                let alert = alert.unwrap();
                assert_eq!(alert.reason, AlertReason::KeyMismatch);
                assert_eq!(alert.suspect, a.node);
                assert!(!alert.evidence.is_empty());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hello_generation_mismatch_and_unknowns() {
        let (_, st, a, sa, b, sb) = hello_fixture();
        let c = sa.poly.modulus().elem(1);
        let resp = hello_response(&sa, b.hash, c);
        let wrong_gen = Hello {
            sender: a.node,
            claimed_generation: 3,
            claimed_join_tick: a.join_tick,
        };
        assert_eq!(
            st.handle_hello(&wrong_gen, resp, c, b.node, &sb, 20).unwrap(),
            HelloOutcome::Failed {
                reason: HelloFailure::GenerationMismatch,
                alert: None
            }
        );
        let stranger = Hello {
            sender: NodeId(77),
            ..wrong_gen
        };
        assert_eq!(
            st.handle_hello(&stranger, resp, c, b.node, &sb, 20).unwrap(),
            HelloOutcome::Failed {
                reason: HelloFailure::NotRegistered,
                alert: None
            }
        );
        assert!(st.handle_hello(&stranger, resp, c, NodeId(55), &sb, 20).is_err());
    }

    #[test]
    fn revoke_then_hello_fails_and_is_idempotent() {
        let (_, mut st, a, sa, b, sb) = hello_fixture();
        let alert = ReplicaAlert {
            suspect: a.node,
            reason: AlertReason::DuplicateActiveId,
            evidence: vec![(a.join_tick, a.position)],
            tick: 10,
        };
        let once = st.revoke(a.node, &alert).unwrap().clone();
        let twice = st.revoke(a.node, &alert).unwrap().clone();
        assert_eq!(once, twice);
        assert!(once.revoked);
        assert_eq!(st.alerts().len(), 1);
        let c = sa.poly.modulus().elem(9);
        let hello = Hello {
            sender: a.node,
            claimed_generation: 0,
            claimed_join_tick: a.join_tick,
        };
        let resp = hello_response(&sa, b.hash, c);
        assert!(matches!(
            st.handle_hello(&hello, resp, c, b.node, &sb, 20).unwrap(),
            HelloOutcome::Failed {
                reason: HelloFailure::Revoked,
                ..
            }
        ));
        assert!(matches!(
            st.revoke(b.node, &alert),
            Err(StationError::AlertMismatch { .. })
        ));
    }

    #[test]
    fn duplicate_revokes_both_claimants() {
        let (clock, mut st, a, sa, b, sb) = hello_fixture();
        let clone_req = AdmissionRequest {
            nonce: 1,
            ..req(a.node.0, 12, 700.0)
        };
        assert_eq!(
            alert(st.admit_node(&clone_req, &clock).unwrap()).reason,
            AlertReason::DuplicateActiveId
        );
        // Neither the original (holding the real share) nor the clone can pass Hello now.
        let c = sa.poly.modulus().elem(5);
        let hello = Hello {
            sender: a.node,
            claimed_generation: 0,
            claimed_join_tick: a.join_tick,
        };
        let honest = hello_response(&sa, b.hash, c);
        assert!(matches!(
            st.handle_hello(&hello, honest, c, b.node, &sb, 20).unwrap(),
            HelloOutcome::Failed {
                reason: HelloFailure::Revoked,
                ..
            }
        ));
        // and a revoked id cannot re-enter
        assert_eq!(
            st.admit_node(&clone_req, &clock).unwrap_err(),
            StationError::Revoked(a.node)
        );
    }

    #[test]
    fn identity_mode_keeps_worked_example_points() {
        let clock = clock_window(0, 50);
        let mut st = Station::new(StationConfig {
            hash_mode: HashMode::Identity,
            ..Default::default()
        });
        let (e, _) = admitted(st.admit_node(&req(2, 1, 0.0), &clock).unwrap());
        assert_eq!(e.hash.value(), 2);
    }
}
