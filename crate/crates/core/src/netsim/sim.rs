use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::channel::Channel;
use super::config::{ClonePlacement, ConfigError, Protocol, SimConfig};
use super::ppp::PppEngine;
use super::topology::{build_with_coords, HopMatrix, RingRoad, Topology, TopologyError, UNREACHABLE};
use super::trace::{ChannelCounters, CloneRecord, Event, MessageKind, Trace};
use super::witness::{BroadcastEngine, MulticastEngine};
use crate::generations::Tick;
use crate::geometry::Position;
use crate::keying::{substream, NodeId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("no vehicle carries identity {0}")]
    UnknownVictim(NodeId),
}

/// One vehicle, honest or cloned.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub id: NodeId,
    /// Coordinate along the ring road, meters.
    pub road_position: f64,
    /// Meters per tick.
    pub velocity: f64,
    pub group: u32,
    pub permission: u8,
    pub generation_index: u32,
    pub is_clone: bool,
    /// Vehicle index of the original whose identity this clone carries.
    pub clone_of: Option<usize>,
}

/// Advances a vehicle `dt` ticks along the ring road.
pub fn step_mobility(state: &NodeState, dt: Tick, road: &RingRoad) -> NodeState {
    NodeState {
        road_position: road.wrap(state.road_position + state.velocity * dt as f64),
        ..state.clone()
    }
}

/// Creates a clone of `victim` at `road_position`. Clones of clones point
/// back at the original vehicle.
pub fn inject_clone(nodes: &[NodeState], victim: NodeId, road_position: f64) -> Result<NodeState, SimError> {
    let (index, source) = nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.id == victim)
        .min_by_key(|(_, n)| n.is_clone)
        .ok_or(SimError::UnknownVictim(victim))?;
    Ok(NodeState {
        road_position,
        is_clone: true,
        clone_of: Some(source.clone_of.unwrap_or(index)),
        ..source.clone()
    })
}

/// Where a message goes: a vehicle or the central station.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Endpoint {
    Station,
    Node(usize),
}

#[derive(Debug, Clone)]
pub(crate) struct Envelope<P> {
    pub kind: MessageKind,
    pub from: Endpoint,
    pub to: Endpoint,
    pub hops: u16,
    pub payload: P,
}

impl<P> Envelope<P> {
    pub fn one_hop(kind: MessageKind, from: Endpoint, to: Endpoint, payload: P) -> Self {
        Envelope {
            kind,
            from,
            to,
            hops: 1,
            payload,
        }
    }
}

pub(crate) struct World {
    pub cfg: SimConfig,
    pub road: RingRoad,
    pub nodes: Vec<NodeState>,
    pub n_original: usize,
    pub topo: Topology,
    pub hops: Option<HopMatrix>,
    pub tick: Tick,
    pub trace: Trace,
    pub rng: ChaCha8Rng,
}

impl World {
    pub fn position(&self, i: usize) -> Position {
        self.road.position(self.nodes[i].road_position)
    }

    pub fn neighbours(&self, i: usize) -> &[usize] {
        &self.topo.adjacency[i]
    }

    pub fn hops(&self, a: usize, b: usize) -> u16 {
        self.hops.as_ref().map_or(1, |h| h.get(a, b))
    }

    pub fn is_clone(&self, i: usize) -> bool {
        self.nodes[i].is_clone
    }

    /// Rebuilds neighbour lists; returns true when they changed.
    fn refresh_topology(&mut self) -> bool {
        let positions: Vec<Position> = (0..self.nodes.len()).map(|i| self.position(i)).collect();
        let adjacency = Topology::adjacency_within(&positions, self.topo.radius);
        if adjacency == self.topo.adjacency {
            return false;
        }
        self.topo.adjacency = adjacency;
        self.topo.n = self.nodes.len();
        if self.hops.is_some() {
            self.hops = Some(self.topo.all_pairs_hops());
        }
        self.trace.events.push((
            self.tick,
            Event::TopologyRefreshed {
                edges: self.topo.edge_count(),
            },
        ));
        true
    }
}

/// Protocol behaviour plugged into the event loop.
pub(crate) trait Engine {
    type Payload;

    /// Runs before the tick's deliveries.
    fn prepare(&mut self, _w: &mut World, _out: &mut Vec<Envelope<Self::Payload>>) {}
    fn deliver(&mut self, w: &mut World, msg: Envelope<Self::Payload>, out: &mut Vec<Envelope<Self::Payload>>);
    /// Runs after the tick's deliveries.
    fn flush(&mut self, _w: &mut World, _out: &mut Vec<Envelope<Self::Payload>>) {}
    /// Scheduled sends for the tick.
    fn act(&mut self, w: &mut World, out: &mut Vec<Envelope<Self::Payload>>);
    fn clones_added(&mut self, _w: &mut World, _first: usize) {}
    fn topology_changed(&mut self, _w: &mut World, _out: &mut Vec<Envelope<Self::Payload>>) {}
    fn finish(&mut self, w: &mut World);
}

const STREAM_TOPOLOGY: u64 = 1;
const STREAM_VELOCITY: u64 = 2;
const STREAM_CHANNEL: u64 = 3;
const STREAM_CLONES: u64 = 4;
const STREAM_PROTOCOL: u64 = 5;
pub(crate) const STREAM_STATION: u64 = 6;
pub(crate) const STREAM_GENERATIONS: u64 = 7;
pub(crate) const STREAM_SCHEDULE: u64 = 8;
pub(crate) const STREAM_WITNESSES: u64 = 9;

/// Runs one simulation. The trace is a pure function of the config.
pub fn run(cfg: &SimConfig) -> Result<Trace, SimError> {
    cfg.validate()?;
    if cfg.ticks == 0 {
        return Ok(Trace::default());
    }
    let seed = cfg.seed;
    let (topo, coords) = build_with_coords(cfg.n, cfg.target_degree, substream(seed, STREAM_TOPOLOGY))?;
    let mut vrng = ChaCha8Rng::seed_from_u64(substream(seed, STREAM_VELOCITY));
    let nodes: Vec<NodeState> = coords
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let jitter = if cfg.speed_jitter > 0.0 {
                vrng.random_range(-cfg.speed_jitter..=cfg.speed_jitter)
            } else {
                0.0
            };
            NodeState {
                id: NodeId(i as u64),
                road_position: s,
                velocity: cfg.speed + jitter,
                group: (i / cfg.group_size) as u32,
                permission: 0,
                generation_index: cfg.generation_of_node(i),
                is_clone: false,
                clone_of: None,
            }
        })
        .collect();
    let needs_hops = cfg.protocol == Protocol::RandomizedMulticast;
    let hops = needs_hops.then(|| topo.all_pairs_hops());
    let trace = Trace {
        mean_degree: topo.mean_degree(),
        diameter: topo.diameter,
        ..Trace::default()
    };
    let mut world = World {
        cfg: cfg.clone(),
        road: RingRoad::for_nodes(cfg.n),
        nodes,
        n_original: cfg.n,
        topo,
        hops,
        tick: 0,
        trace,
        rng: ChaCha8Rng::seed_from_u64(substream(seed, STREAM_PROTOCOL)),
    };
    let trace = match cfg.protocol {
        Protocol::Ppp => {
            let engine = PppEngine::new(&world);
            drive(world, engine)
        }
        Protocol::Broadcast => {
            let engine = BroadcastEngine::new(&mut world);
            drive(world, engine)
        }
        Protocol::RandomizedMulticast => {
            let engine = MulticastEngine::new(&world);
            drive(world, engine)
        }
    };
    Ok(trace)
}

fn drive<E: Engine>(mut w: World, mut engine: E) -> Trace {
    let mut channel = Channel::new(w.cfg.capacity(), w.cfg.load, substream(w.cfg.seed, STREAM_CHANNEL));
    let mut clone_rng = ChaCha8Rng::seed_from_u64(substream(w.cfg.seed, STREAM_CLONES));
    let mut inbox: Vec<Envelope<E::Payload>> = Vec::new();
    for t in 0..w.cfg.ticks {
        w.tick = t;
        let mut out = Vec::new();
        if t > 0 {
            let road = w.road;
            for node in &mut w.nodes {
                *node = step_mobility(node, 1, &road);
            }
            if t % w.cfg.refresh_ticks == 0 && w.refresh_topology() {
                engine.topology_changed(&mut w, &mut out);
            }
        }
        if t == w.cfg.clone_injection_tick && w.cfg.clone_count > 0 {
            let first = w.nodes.len();
            add_clones(&mut w, &mut clone_rng);
            w.refresh_topology();
            engine.clones_added(&mut w, first);
        }
        engine.prepare(&mut w, &mut out);
        for msg in std::mem::take(&mut inbox) {
            engine.deliver(&mut w, msg, &mut out);
        }
        engine.flush(&mut w, &mut out);
        engine.act(&mut w, &mut out);

        let mut counters = ChannelCounters::default();
        let mut routable = Vec::with_capacity(out.len());
        for msg in out {
            if msg.hops == UNREACHABLE {
                counters.protocol_sent += 1;
                counters.protocol_dropped += 1;
            } else {
                w.trace.record_transmission(msg.kind, msg.hops as u64);
                routable.push(msg);
            }
        }
        let (survivors, c) = channel.transmit(routable);
        counters.add(&c);
        w.trace.per_tick.push(counters);
        w.trace.totals.add(&counters);
        inbox = survivors;
    }
    engine.finish(&mut w);
    w.trace
}

fn add_clones(w: &mut World, rng: &mut ChaCha8Rng) {
    let n = w.n_original;
    let k = w.cfg.clone_count.min(n);
    let victims: Vec<usize> = sample(rng, n, k).into_iter().collect();
    for v in victims {
        let victim = &w.nodes[v];
        let len = w.road.length;
        let s = match w.cfg.clone_placement {
            ClonePlacement::Uniform => rng.random_range(0.0..len),
            ClonePlacement::Far => victim.road_position + len / 2.0 + rng.random_range(-len / 20.0..=len / 20.0),
        };
        let id = victim.id;
        let clone = inject_clone(&w.nodes, id, w.road.wrap(s)).expect("victim is an existing vehicle");
        let index = w.nodes.len();
        w.trace.events.push((
            w.tick,
            Event::CloneInjected {
                index,
                victim: id,
                road_position: clone.road_position,
            },
        ));
        w.trace.clones.push(CloneRecord {
            index,
            victim: id,
            original: clone.clone_of.unwrap_or(v),
            injected_at: w.tick,
        });
        w.nodes.push(clone);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(s: f64, v: f64) -> NodeState {
        NodeState {
            id: NodeId(0),
            road_position: s,
            velocity: v,
            group: 0,
            permission: 0,
            generation_index: 0,
            is_clone: false,
            clone_of: None,
        }
    }

    #[test]
    fn mobility() {
        let road = RingRoad { length: 1000.0 };
        assert_eq!(step_mobility(&node(500.0, 0.0), 1, &road).road_position, 500.0);
        assert_eq!(step_mobility(&node(500.0, 2.5), 1, &road).road_position, 502.5);
        for (s, v, dt) in [(999.0, 3.0, 1), (10.0, -20.0, 1), (900.0, 7.0, 40)] {
            let expected = (s + v * dt as f64).rem_euclid(1000.0);
            assert_eq!(step_mobility(&node(s, v), dt, &road).road_position, expected);
        }
    }

    #[test]
    fn clone_chains_to_original() {
        let mut nodes = vec![node(0.0, 1.0), node(5.0, 1.0)];
        nodes[1].id = NodeId(1);
        let c1 = inject_clone(&nodes, NodeId(1), 300.0).unwrap();
        assert!(c1.is_clone);
        assert_eq!(c1.clone_of, Some(1));
        assert_eq!(c1.road_position, 300.0);
        nodes.push(c1);
        // only clones left carrying the id: still chains to the original
        let only_clone = vec![nodes[0].clone(), nodes[2].clone()];
        assert_eq!(inject_clone(&only_clone, NodeId(1), 1.0).unwrap().clone_of, Some(1));
        assert_eq!(
            inject_clone(&nodes, NodeId(9), 1.0),
            Err(SimError::UnknownVictim(NodeId(9)))
        );
    }

    #[test]
    fn zero_ticks_is_empty() {
        let cfg = SimConfig {
            ticks: 0,
            ..SimConfig::default()
        };
        assert!(run(&cfg).unwrap().is_empty());
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = SimConfig {
            n: 0,
            ..SimConfig::default()
        };
        assert!(matches!(run(&cfg), Err(SimError::Config(ConfigError::NoNodes))));
    }
}
