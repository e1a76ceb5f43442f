//! Station-assisted protocol: generation windows, group admission, pairwise
//! keys from polynomial shares, and Hello challenges between neighbours.

use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::CloneMode;
use super::sim::{Endpoint, Engine, Envelope, World, STREAM_GENERATIONS, STREAM_SCHEDULE, STREAM_STATION};
use super::trace::{AlertKind, Event, MessageKind, Raiser};
use crate::field::{FieldElement, Modulus};
use crate::generations::{GenerationClock, Tick};
use crate::keying::{pairwise_key, substream, IdentityHash, KeyShare};
use crate::station::{
    hello_response, Admission, AdmissionRequest, Hello, HelloOutcome, KeyResponse, ReplicaAlert, Station, StationConfig,
};

/// Arrivals are admitted together per (group, claimed generation).
type BatchKey = (u32, Option<u32>);

#[derive(Debug, Clone)]
pub(crate) enum PppMsg {
    Admission(AdmissionRequest),
    Granted {
        share: Box<KeyShare>,
        hash: IdentityHash,
        join_tick: Tick,
    },
    Leader,
    Hello(Hello),
    Challenge {
        challenge: FieldElement,
        generation: u32,
        hash: IdentityHash,
    },
    Answer {
        response: FieldElement,
        challenge: FieldElement,
    },
    KeyRequest {
        peer: usize,
        peer_hash: IdentityHash,
    },
    Brokered {
        peer: usize,
        key: FieldElement,
    },
    Alert(Box<ReplicaAlert>),
}

#[derive(Debug, Clone, Default)]
struct PppNode {
    share: Option<KeyShare>,
    hash: Option<IdentityHash>,
    join_tick: Tick,
    nonce: u64,
    /// Pairwise keys by peer vehicle index.
    keys: BTreeMap<usize, FieldElement>,
    /// Challenges sent, by the Hello sender's vehicle index.
    pending: BTreeMap<usize, (FieldElement, Hello)>,
}

pub(crate) struct PppEngine {
    station: Station,
    clock: GenerationClock,
    modulus: Modulus,
    nodes: Vec<PppNode>,
    /// Groups by scheduled join tick.
    joins: BTreeMap<Tick, Vec<u32>>,
    members: Vec<Vec<usize>>,
    group_join: Vec<Tick>,
    group_of: Vec<u32>,
    arrivals: Vec<(usize, AdmissionRequest)>,
    audited: u32,
}

impl PppEngine {
    pub fn new(w: &World) -> Self {
        let cfg = &w.cfg;
        let station = Station::new(StationConfig {
            hash_mode: cfg.hash_mode,
            key_ttl: cfg.key_ttl,
            seed: substream(cfg.seed, STREAM_STATION),
            ..StationConfig::default()
        });
        let mut members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, node) in w.nodes.iter().enumerate() {
            members.entry(node.group).or_default().push(i);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(substream(cfg.seed, STREAM_SCHEDULE));
        let spread = (cfg.generation_period / 2).max(1);
        let mut joins: BTreeMap<Tick, Vec<u32>> = BTreeMap::new();
        let mut regrouped: Vec<Vec<usize>> = Vec::new();
        let mut group_join = Vec::new();
        let mut group_of = vec![0u32; w.nodes.len()];
        // Groups never straddle generations: split by generation first.
        for indices in members.values() {
            let mut by_gen: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
            for &i in indices {
                by_gen.entry(w.nodes[i].generation_index).or_default().push(i);
            }
            for (gen, part) in by_gen {
                let g = regrouped.len() as u32;
                let tick = cfg.generation_start(gen) + rng.random_range(0..spread);
                joins.entry(tick).or_default().push(g);
                for &i in &part {
                    group_of[i] = g;
                }
                group_join.push(tick);
                regrouped.push(part);
            }
        }
        let mut nodes = vec![PppNode::default(); w.nodes.len()];
        for node in &mut nodes {
            node.nonce = rng.next_u64();
        }
        PppEngine {
            station,
            clock: GenerationClock::new(),
            modulus: Modulus::new(cfg.modulus).expect("validated modulus"),
            nodes,
            joins,
            members: regrouped,
            group_join,
            group_of,
            arrivals: Vec::new(),
            audited: 0,
        }
    }

    fn window_end(&self, w: &World, gen: u32) -> Tick {
        w.cfg.generation_start(gen) + w.cfg.generation_period
    }

    fn admission(&self, w: &World, i: usize, nonce: u64) -> AdmissionRequest {
        let node = &w.nodes[i];
        AdmissionRequest {
            node: node.id,
            position: w.position(i),
            tick: w.tick,
            group: self.group_of[node.clone_of.unwrap_or(i)],
            permission: node.permission,
            claimed_generation: Some(node.generation_index),
            nonce,
        }
    }

    fn hello(&self, w: &World, i: usize) -> Hello {
        let node = &w.nodes[i];
        let join = self.nodes[i].join_tick;
        Hello {
            sender: node.id,
            claimed_generation: node.generation_index,
            claimed_join_tick: join,
        }
    }

    fn send_hellos(&self, w: &World, i: usize, out: &mut Vec<Envelope<PppMsg>>, only_unkeyed: bool) {
        let hello = self.hello(w, i);
        for &j in w.neighbours(i) {
            if only_unkeyed && self.nodes[i].keys.contains_key(&j) {
                continue;
            }
            out.push(Envelope::one_hop(
                MessageKind::Hello,
                Endpoint::Node(i),
                Endpoint::Node(j),
                PppMsg::Hello(hello),
            ));
        }
    }

    fn raise(&self, w: &mut World, by: Raiser, alert: &ReplicaAlert) {
        w.trace
            .raise_alert(w.tick, alert.suspect, AlertKind::from(alert.reason), by);
    }

    fn station_admissions(&mut self, w: &mut World, out: &mut Vec<Envelope<PppMsg>>) {
        let arrivals = std::mem::take(&mut self.arrivals);
        let mut batches: Vec<(BatchKey, Vec<(usize, AdmissionRequest)>)> = Vec::new();
        for (i, req) in arrivals {
            let key = (req.group, req.claimed_generation);
            match batches.iter_mut().find(|(k, _)| *k == key) {
                Some((_, b)) => b.push((i, req)),
                None => batches.push((key, vec![(i, req)])),
            }
        }
        for (_, batch) in batches {
            let requests: Vec<AdmissionRequest> = batch.iter().map(|(_, r)| r.clone()).collect();
            let outcomes = match self.station.admit_group(&requests, &self.clock) {
                Ok(group) => {
                    if group
                        .outcomes
                        .iter()
                        .filter(|o| matches!(o, Ok(Admission::Admitted { .. })))
                        .count()
                        > 1
                    {
                        let leader = batch.iter().find(|(_, r)| r.node == group.leader).map(|(i, _)| *i);
                        if let Some(li) = leader {
                            w.trace.events.push((
                                w.tick,
                                Event::LeaderElected {
                                    leader: group.leader,
                                    group: requests[0].group,
                                    members: requests.len(),
                                },
                            ));
                            for (mi, r) in &batch {
                                if group.announcements.contains(&r.node) {
                                    out.push(Envelope::one_hop(
                                        MessageKind::LeaderAnnounce,
                                        Endpoint::Node(li),
                                        Endpoint::Node(*mi),
                                        PppMsg::Leader,
                                    ));
                                }
                            }
                        }
                    }
                    group.outcomes
                }
                Err(_) => requests
                    .iter()
                    .map(|r| self.station.admit_node(r, &self.clock))
                    .collect(),
            };
            for ((i, _), outcome) in batch.into_iter().zip(outcomes) {
                match outcome {
                    Ok(Admission::Admitted { entry, share }) => out.push(Envelope::one_hop(
                        MessageKind::KeyResponse,
                        Endpoint::Station,
                        Endpoint::Node(i),
                        PppMsg::Granted {
                            share: Box::new(share),
                            hash: entry.hash,
                            join_tick: entry.join_tick,
                        },
                    )),
                    Ok(Admission::Alert(alert)) => self.raise(w, Raiser::Station, &alert),
                    Err(_) => {}
                }
            }
        }
    }

    fn key_request(
        &mut self,
        w: &mut World,
        i: usize,
        peer: usize,
        peer_hash: IdentityHash,
        out: &mut Vec<Envelope<PppMsg>>,
    ) {
        let id = w.nodes[i].id;
        let response = self
            .station
            .handle_key_request(id, w.position(i), peer_hash, w.tick, &self.clock);
        match response {
            Ok(KeyResponse::Key(key)) => {
                for (to, other) in [(i, peer), (peer, i)] {
                    out.push(Envelope::one_hop(
                        MessageKind::KeyResponse,
                        Endpoint::Station,
                        Endpoint::Node(to),
                        PppMsg::Brokered { peer: other, key },
                    ));
                }
            }
            Ok(KeyResponse::Rejected { alert: Some(alert), .. }) => self.raise(w, Raiser::Station, &alert),
            Ok(KeyResponse::Rejected { alert: None, .. }) | Err(_) => {}
        }
    }

    fn audit(&mut self, w: &mut World, gen: u32) {
        let Ok(master) = self.clock.get(gen).and_then(|g| g.master_poly().cloned()) else {
            return;
        };
        let members: Vec<(&KeyShare, IdentityHash)> = (0..w.n_original)
            .filter_map(|i| {
                let node = &self.nodes[i];
                match (&node.share, node.hash) {
                    (Some(s), Some(h)) if s.generation_index == gen => Some((s, h)),
                    _ => None,
                }
            })
            .collect();
        let mut pairs = 0;
        let mut violations = 0;
        for (a, (sa, ha)) in members.iter().enumerate() {
            for (sb, hb) in &members[a + 1..] {
                pairs += 1;
                let kab = pairwise_key(sa, *hb);
                if kab != pairwise_key(sb, *ha) || kab != master.eval(ha.0, hb.0) {
                    violations += 1;
                }
            }
        }
        w.trace.key_audit.pairs += pairs;
        w.trace.key_audit.violations += violations;
        w.trace.events.push((
            w.tick,
            Event::KeyAudit {
                generation: gen,
                pairs,
                violations,
            },
        ));
    }

    fn clone_round(&mut self, w: &World, c: usize, out: &mut Vec<Envelope<PppMsg>>) {
        match w.cfg.clone_mode {
            CloneMode::IdentityOnly => {
                let nonce = self.nodes[c].nonce.wrapping_add(w.tick);
                out.push(Envelope::one_hop(
                    MessageKind::KeyRequest,
                    Endpoint::Node(c),
                    Endpoint::Station,
                    PppMsg::Admission(self.admission(w, c, nonce)),
                ));
            }
            CloneMode::StolenKey => {
                if let Some(&j) = w.neighbours(c).first() {
                    if let Some(peer_hash) = self.nodes[j].hash {
                        out.push(Envelope::one_hop(
                            MessageKind::KeyRequest,
                            Endpoint::Node(c),
                            Endpoint::Station,
                            PppMsg::KeyRequest { peer: j, peer_hash },
                        ));
                    }
                }
            }
        }
        self.send_hellos(w, c, out, false);
    }
}

impl Engine for PppEngine {
    type Payload = PppMsg;

    fn prepare(&mut self, w: &mut World, _out: &mut Vec<Envelope<PppMsg>>) {
        let t = w.tick;
        self.clock.advance_to(t).expect("ticks increase");
        // Close windows: audit the generation's keys, then erase its master.
        while self.audited < self.clock.generations().len() as u32 && t >= self.window_end(w, self.audited) {
            self.audit(w, self.audited);
            self.audited += 1;
        }
        for index in self.clock.erase_closed() {
            w.trace.events.push((t, Event::GenerationErased { index }));
        }
        let next = self.clock.generations().len() as u32;
        if next < w.cfg.generations && t == w.cfg.generation_start(next) {
            let seed = substream(substream(w.cfg.seed, STREAM_GENERATIONS), next as u64);
            let gen = self
                .clock
                .open_generation(w.cfg.generation_period, w.cfg.degree_t, self.modulus, seed)
                .expect("generation windows do not overlap");
            w.trace.events.push((
                t,
                Event::GenerationOpened {
                    index: gen.index(),
                    window_end: gen.window_end(),
                },
            ));
        }
    }

    fn deliver(&mut self, w: &mut World, msg: Envelope<PppMsg>, out: &mut Vec<Envelope<PppMsg>>) {
        let Endpoint::Node(from) = msg.from else {
            if let Endpoint::Node(to) = msg.to {
                self.at_node(w, None, to, msg.payload, out);
            }
            return;
        };
        match msg.to {
            Endpoint::Station => match msg.payload {
                PppMsg::Admission(mut req) => {
                    req.tick = w.tick;
                    req.position = w.position(from);
                    self.arrivals.push((from, req));
                }
                PppMsg::KeyRequest { peer, peer_hash } => self.key_request(w, from, peer, peer_hash, out),
                PppMsg::Alert(alert) => {
                    self.station.record_alert(*alert);
                }
                _ => {}
            },
            Endpoint::Node(to) => self.at_node(w, Some(from), to, msg.payload, out),
        }
    }

    fn flush(&mut self, w: &mut World, out: &mut Vec<Envelope<PppMsg>>) {
        if !self.arrivals.is_empty() {
            self.station_admissions(w, out);
        }
    }

    fn act(&mut self, w: &mut World, out: &mut Vec<Envelope<PppMsg>>) {
        let t = w.tick;
        if let Some(groups) = self.joins.get(&t) {
            for &g in groups {
                for &i in &self.members[g as usize] {
                    let req = self.admission(w, i, self.nodes[i].nonce);
                    out.push(Envelope::one_hop(
                        MessageKind::KeyRequest,
                        Endpoint::Node(i),
                        Endpoint::Station,
                        PppMsg::Admission(req),
                    ));
                }
            }
        }
        let round = w.cfg.round_ticks;
        for i in 0..w.n_original {
            let node = &self.nodes[i];
            let first = self.group_join[self.group_of[i] as usize];
            let end = self.window_end(w, w.nodes[i].generation_index);
            // Retransmit until admitted, while a reply can still land inside the window.
            if node.share.is_none() && t > first && (t - first).is_multiple_of(round) && t + 1 < end {
                let req = self.admission(w, i, node.nonce);
                out.push(Envelope::one_hop(
                    MessageKind::KeyRequest,
                    Endpoint::Node(i),
                    Endpoint::Station,
                    PppMsg::Admission(req),
                ));
            }
        }
        for c in w.n_original..w.nodes.len() {
            let since = t - w.cfg.clone_injection_tick;
            if since.is_multiple_of(round) {
                self.clone_round(w, c, out);
            }
        }
    }

    fn clones_added(&mut self, w: &mut World, first: usize) {
        for c in first..w.nodes.len() {
            let victim = w.nodes[c].clone_of.expect("clone");
            let mut state = PppNode {
                nonce: w.rng.next_u64(),
                join_tick: self.nodes[victim].join_tick,
                ..PppNode::default()
            };
            if w.cfg.clone_mode == CloneMode::StolenKey {
                state.share = self.nodes[victim].share.clone();
                state.hash = self.nodes[victim].hash;
            }
            self.nodes.push(state);
        }
    }

    fn topology_changed(&mut self, w: &mut World, out: &mut Vec<Envelope<PppMsg>>) {
        for i in 0..w.n_original {
            if self.nodes[i].share.is_some() {
                self.send_hellos(w, i, out, true);
            }
        }
    }

    fn finish(&mut self, w: &mut World) {
        while self.audited < self.clock.generations().len() as u32 {
            self.audit(w, self.audited);
            self.audited += 1;
        }
        // Keys brokered across generations must agree end to end.
        let mut pairs = 0;
        let mut violations = 0;
        for i in 0..w.n_original {
            for (&j, k) in self.nodes[i].keys.range(i + 1..w.n_original) {
                if let Some(back) = self.nodes[j].keys.get(&i) {
                    pairs += 1;
                    if back != k {
                        violations += 1;
                    }
                }
            }
        }
        w.trace.key_audit.pairs += pairs;
        w.trace.key_audit.violations += violations;
        w.trace.station_peak_entries = self.station.peak_entries();
        w.trace.node_memory = (0..w.n_original).map(|i| self.nodes[i].keys.len()).collect();
        w.trace.node_peak_memory_entries = w.trace.node_memory.iter().copied().max().unwrap_or(0);
    }
}

impl PppEngine {
    fn at_node(
        &mut self,
        w: &mut World,
        from: Option<usize>,
        to: usize,
        payload: PppMsg,
        out: &mut Vec<Envelope<PppMsg>>,
    ) {
        let is_clone = w.is_clone(to);
        match payload {
            PppMsg::Granted { share, hash, join_tick } => {
                let node = &mut self.nodes[to];
                if node.share.is_some() {
                    return;
                }
                node.share = Some(*share);
                node.hash = Some(hash);
                node.join_tick = join_tick;
                w.trace.events.push((
                    w.tick,
                    Event::Admitted {
                        node: w.nodes[to].id,
                        generation: w.nodes[to].generation_index,
                    },
                ));
                if !is_clone {
                    self.send_hellos(w, to, out, false);
                }
            }
            PppMsg::Brokered { peer, key } => {
                self.nodes[to].keys.insert(peer, key);
            }
            PppMsg::Leader => {}
            _ if is_clone => {
                // Clones only play the sender side of the handshake.
                if let (
                    Some(from),
                    PppMsg::Challenge {
                        challenge,
                        generation,
                        hash,
                    },
                ) = (from, payload)
                {
                    self.clone_answer(w, to, from, challenge, generation, hash, out);
                }
            }
            PppMsg::Hello(hello) => {
                let Some(from) = from else { return };
                if self.nodes[to].share.is_none() {
                    return;
                }
                let challenge = self.modulus.elem(w.rng.random_range(0..self.modulus.value()));
                self.nodes[to].pending.insert(from, (challenge, hello));
                out.push(Envelope::one_hop(
                    MessageKind::Hello,
                    Endpoint::Node(to),
                    Endpoint::Node(from),
                    PppMsg::Challenge {
                        challenge,
                        generation: w.nodes[to].generation_index,
                        hash: self.nodes[to].hash.expect("admitted"),
                    },
                ));
            }
            PppMsg::Challenge {
                challenge,
                generation,
                hash,
            } => {
                let Some(from) = from else { return };
                let node = &self.nodes[to];
                let Some(share) = &node.share else { return };
                if generation == share.generation_index {
                    let key = pairwise_key(share, hash);
                    let response = hello_response(share, hash, challenge);
                    self.nodes[to].keys.insert(from, key);
                    out.push(Envelope::one_hop(
                        MessageKind::KeyResponse,
                        Endpoint::Node(to),
                        Endpoint::Node(from),
                        PppMsg::Answer { response, challenge },
                    ));
                } else if w.tick + 1 < self.window_end(w, share.generation_index) {
                    out.push(Envelope::one_hop(
                        MessageKind::KeyRequest,
                        Endpoint::Node(to),
                        Endpoint::Station,
                        PppMsg::KeyRequest {
                            peer: from,
                            peer_hash: hash,
                        },
                    ));
                }
            }
            PppMsg::Answer { response, challenge } => {
                let Some(from) = from else { return };
                let Some((expected, hello)) = self.nodes[to].pending.remove(&from) else {
                    return;
                };
                if expected != challenge {
                    return;
                }
                let receiver = w.nodes[to].id;
                let Some(share) = &self.nodes[to].share else { return };
                match self
                    .station
                    .handle_hello(&hello, response, challenge, receiver, share, w.tick)
                {
                    Ok(HelloOutcome::Verified) => {
                        if let Some(peer) = self.station.entry(hello.sender) {
                            let key = pairwise_key(share, peer.hash);
                            self.nodes[to].keys.insert(from, key);
                        }
                    }
                    Ok(HelloOutcome::Failed { alert: Some(alert), .. }) => {
                        self.raise(w, Raiser::Node(to), &alert);
                        out.push(Envelope::one_hop(
                            MessageKind::Alert,
                            Endpoint::Node(to),
                            Endpoint::Station,
                            PppMsg::Alert(Box::new(alert)),
                        ));
                    }
                    _ => {}
                }
            }
            PppMsg::Admission(_) | PppMsg::KeyRequest { .. } | PppMsg::Alert(_) => {}
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn clone_answer(
        &mut self,
        w: &mut World,
        c: usize,
        to: usize,
        challenge: FieldElement,
        generation: u32,
        hash: IdentityHash,
        out: &mut Vec<Envelope<PppMsg>>,
    ) {
        let response = match &self.nodes[c].share {
            Some(share) if share.generation_index == generation => hello_response(share, hash, challenge),
            Some(_) => {
                out.push(Envelope::one_hop(
                    MessageKind::KeyRequest,
                    Endpoint::Node(c),
                    Endpoint::Station,
                    PppMsg::KeyRequest {
                        peer: to,
                        peer_hash: hash,
                    },
                ));
                return;
            }
            // Without the victim's key the clone can only guess.
            None => self.modulus.elem(w.rng.random_range(0..self.modulus.value())),
        };
        out.push(Envelope::one_hop(
            MessageKind::KeyResponse,
            Endpoint::Node(c),
            Endpoint::Node(to),
            PppMsg::Answer { response, challenge },
        ));
    }
}
