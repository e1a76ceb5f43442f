//! Ring-road geometric graphs.
//!
//! Vehicles sit on a circular road of circumference `n * NODE_SPACING`
//! meters, embedded in the plane. Two vehicles are radio neighbours when
//! their planar distance is at most the radio radius.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::Position;

/// Mean road length per vehicle, meters.
pub const NODE_SPACING: f64 = 10.0;

/// Hop distance for unreachable pairs.
pub const UNREACHABLE: u16 = u16::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("need at least one node")]
    NoNodes,
    #[error("target degree {degree} is impossible with {n} nodes")]
    ImpossibleDegree { n: usize, degree: usize },
}

/// A closed road of a given circumference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingRoad {
    pub length: f64,
}

impl RingRoad {
    pub fn for_nodes(n: usize) -> Self {
        RingRoad {
            length: n.max(1) as f64 * NODE_SPACING,
        }
    }

    pub fn wrap(&self, s: f64) -> f64 {
        s.rem_euclid(self.length)
    }

    /// Planar position of road coordinate `s`.
    pub fn position(&self, s: f64) -> Position {
        let r = self.length / TAU;
        let theta = TAU * self.wrap(s) / self.length;
        Position::new(r * theta.cos(), r * theta.sin())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub n: usize,
    pub target_degree: usize,
    pub radius: f64,
    pub diameter: u32,
    pub adjacency: Vec<Vec<usize>>,
}

impl Topology {
    /// Connects every pair within `radius`. Neighbour lists are sorted.
    pub fn from_positions(positions: &[Position], radius: f64, target_degree: usize) -> Self {
        let mut topo = Topology {
            n: positions.len(),
            target_degree,
            radius,
            diameter: 0,
            adjacency: Self::adjacency_within(positions, radius),
        };
        topo.diameter = topo.all_pairs_hops().diameter();
        topo
    }

    /// Sorted neighbour lists for all pairs within `radius`.
    pub fn adjacency_within(positions: &[Position], radius: f64) -> Vec<Vec<usize>> {
        let n = positions.len();
        let mut adjacency = vec![Vec::new(); n];
        for i in 0..n {
            for j in (i + 1)..n {
                if positions[i].distance(&positions[j]) <= radius {
                    adjacency[i].push(j);
                    adjacency[j].push(i);
                }
            }
        }
        adjacency
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn mean_degree(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.adjacency.iter().map(Vec::len).sum::<usize>() as f64 / self.n as f64
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn bfs(&self, source: usize) -> Vec<u16> {
        let mut dist = vec![UNREACHABLE; self.n];
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if dist[v] == UNREACHABLE {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn all_pairs_hops(&self) -> HopMatrix {
        let mut data = Vec::with_capacity(self.n * self.n);
        for s in 0..self.n {
            data.extend(self.bfs(s));
        }
        HopMatrix { n: self.n, data }
    }

    pub fn is_connected(&self) -> bool {
        self.n == 0 || self.bfs(0).iter().all(|&d| d != UNREACHABLE)
    }
}

/// Row-major all-pairs hop counts.
#[derive(Debug, Clone, PartialEq)]
pub struct HopMatrix {
    n: usize,
    data: Vec<u16>,
}

impl HopMatrix {
    pub fn get(&self, a: usize, b: usize) -> u16 {
        self.data[a * self.n + b]
    }

    /// Largest finite hop count.
    pub fn diameter(&self) -> u32 {
        self.data
            .iter()
            .filter(|&&d| d != UNREACHABLE)
            .max()
            .copied()
            .unwrap_or(0) as u32
    }
}

/// Stratified uniform placement: vehicle `k` lands uniformly inside the
/// k-th of `n` equal road segments.
pub fn place_nodes(n: usize, road: &RingRoad, rng: &mut impl Rng) -> Vec<f64> {
    let seg = road.length / n.max(1) as f64;
    (0..n).map(|k| (k as f64 + rng.random::<f64>()) * seg).collect()
}

/// Picks the radio radius for road coordinates `coords`: the smallest radius
/// giving mean degree at least `target_degree`, grown further if needed
/// until the graph is connected.
pub fn tune_radius(positions: &[Position], target_degree: usize) -> f64 {
    let n = positions.len();
    if n < 2 {
        return 0.0;
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push((positions[i].distance(&positions[j]), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    // mean degree = 2 * edges / n
    let edges_needed = (target_degree * n).div_ceil(2).clamp(1, pairs.len());
    let degree_radius = pairs[edges_needed - 1].0;

    // Kruskal bottleneck: the longest edge needed to join every component.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut components = n;
    let mut connect_radius = 0.0;
    for &(d, i, j) in &pairs {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            parent[a] = b;
            components -= 1;
            if components == 1 {
                connect_radius = d;
                break;
            }
        }
    }
    // Pad so that rotating the whole ring cannot flip a boundary edge through rounding.
    degree_radius.max(connect_radius) * (1.0 + 1e-9)
}

/// Builds the initial ring-road topology for `n` vehicles.
pub fn build_topology(n: usize, target_degree: usize, seed: u64) -> Result<Topology, TopologyError> {
    let (topo, _) = build_with_coords(n, target_degree, seed)?;
    Ok(topo)
}

/// As [`build_topology`], also returning each vehicle's road coordinate.
pub fn build_with_coords(n: usize, target_degree: usize, seed: u64) -> Result<(Topology, Vec<f64>), TopologyError> {
    if n == 0 {
        return Err(TopologyError::NoNodes);
    }
    if target_degree >= n && n > 1 {
        return Err(TopologyError::ImpossibleDegree {
            n,
            degree: target_degree,
        });
    }
    let road = RingRoad::for_nodes(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = place_nodes(n, &road, &mut rng);
    let positions: Vec<Position> = coords.iter().map(|&s| road.position(s)).collect();
    let radius = tune_radius(&positions, target_degree);
    Ok((Topology::from_positions(&positions, radius, target_degree), coords))
}
