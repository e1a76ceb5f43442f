//! Shared radio channel with uniform random drop under congestion.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::trace::ChannelCounters;

#[derive(Debug, Clone)]
pub struct Channel {
    capacity: u64,
    background: u64,
    rng: ChaCha8Rng,
}

impl Channel {
    /// Background traffic per tick is `round(load * capacity)`.
    pub fn new(capacity: u64, load: f64, seed: u64) -> Self {
        Channel {
            capacity,
            background: (load * capacity as f64).round() as u64,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn background(&self) -> u64 {
        self.background
    }

    /// Offers one tick's protocol messages alongside the background stream.
    /// When the total exceeds capacity, exactly `capacity` messages survive,
    /// chosen uniformly at random; survivors keep their order.
    pub fn transmit<T>(&mut self, messages: Vec<T>) -> (Vec<T>, ChannelCounters) {
        let p = messages.len() as u64;
        let b = self.background;
        let total = b + p;
        let mut counters = ChannelCounters {
            protocol_sent: p,
            background_sent: b,
            ..ChannelCounters::default()
        };
        if total <= self.capacity {
            counters.protocol_delivered = p;
            counters.background_delivered = b;
            return (messages, counters);
        }
        // Sample whichever side is smaller: the surviving or the dropped
        // slots among all `total` offered messages. Protocol messages occupy
        // slots 0..p.
        let mut keep = vec![false; messages.len()];
        let drops = total - self.capacity;
        if self.capacity <= drops {
            for slot in sample(&mut self.rng, total as usize, self.capacity as usize) {
                if slot < messages.len() {
                    keep[slot] = true;
                }
            }
        } else {
            keep.fill(true);
            for slot in sample(&mut self.rng, total as usize, drops as usize) {
                if slot < messages.len() {
                    keep[slot] = false;
                }
            }
        }
        let kept = keep.iter().filter(|&&k| k).count() as u64;
        let survivors: Vec<T> = messages
            .into_iter()
            .zip(keep)
            .filter_map(|(m, k)| k.then_some(m))
            .collect();
        counters.protocol_delivered = kept;
        counters.protocol_dropped = p - kept;
        counters.background_delivered = self.capacity - kept;
        counters.background_dropped = b - (self.capacity - kept);
        (survivors, counters)
    }
}
