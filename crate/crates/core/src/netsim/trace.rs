use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::generations::Tick;
use crate::keying::NodeId;
use crate::station::AlertReason;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MessageKind {
    Hello,
    KeyRequest,
    KeyResponse,
    Claim,
    ForwardClaim,
    Alert,
    LeaderAnnounce,
}

impl MessageKind {
    pub const ALL: [MessageKind; 7] = [
        MessageKind::Hello,
        MessageKind::KeyRequest,
        MessageKind::KeyResponse,
        MessageKind::Claim,
        MessageKind::ForwardClaim,
        MessageKind::Alert,
        MessageKind::LeaderAnnounce,
    ];

    /// Wire size in bytes.
    pub fn size(self) -> u64 {
        match self {
            MessageKind::Hello => 32,
            MessageKind::KeyRequest => 40,
            MessageKind::KeyResponse => 40,
            MessageKind::Claim => 48,
            MessageKind::ForwardClaim => 48,
            MessageKind::Alert => 24,
            MessageKind::LeaderAnnounce => 16,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::Hello => "hello",
            MessageKind::KeyRequest => "key_request",
            MessageKind::KeyResponse => "key_response",
            MessageKind::Claim => "claim",
            MessageKind::ForwardClaim => "forward_claim",
            MessageKind::Alert => "alert",
            MessageKind::LeaderAnnounce => "leader_announce",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlertKind {
    DuplicateActiveId,
    ExpiredGenerationJoin,
    KeyMismatch,
    LocationConflict,
}

impl AlertKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AlertKind::DuplicateActiveId => "duplicate_active_id",
            AlertKind::ExpiredGenerationJoin => "expired_generation_join",
            AlertKind::KeyMismatch => "key_mismatch",
            AlertKind::LocationConflict => "location_conflict",
        }
    }
}

impl From<AlertReason> for AlertKind {
    fn from(r: AlertReason) -> Self {
        match r {
            AlertReason::DuplicateActiveId => AlertKind::DuplicateActiveId,
            AlertReason::ExpiredGenerationJoin => AlertKind::ExpiredGenerationJoin,
            AlertReason::KeyMismatch => AlertKind::KeyMismatch,
        }
    }
}

/// Who raised an alert.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Raiser {
    Station,
    Node(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlertRecord {
    pub tick: Tick,
    pub suspect: NodeId,
    pub kind: AlertKind,
    pub raised_by: Raiser,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CloneRecord {
    /// Vehicle index of the clone.
    pub index: usize,
    pub victim: NodeId,
    /// The original vehicle the identity was copied from.
    pub original: usize,
    pub injected_at: Tick,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    GenerationOpened {
        index: u32,
        window_end: Tick,
    },
    GenerationErased {
        index: u32,
    },
    Admitted {
        node: NodeId,
        generation: u32,
    },
    LeaderElected {
        leader: NodeId,
        group: u32,
        members: usize,
    },
    CloneInjected {
        index: usize,
        victim: NodeId,
        road_position: f64,
    },
    Alert {
        suspect: NodeId,
        kind: AlertKind,
        raised_by: Raiser,
    },
    TopologyRefreshed {
        edges: usize,
    },
    KeyAudit {
        generation: u32,
        pairs: u64,
        violations: u64,
    },
}

/// Per-tick channel accounting. `sent = delivered + dropped` for both the
/// protocol and the background stream.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChannelCounters {
    pub protocol_sent: u64,
    pub protocol_delivered: u64,
    pub protocol_dropped: u64,
    pub background_sent: u64,
    pub background_delivered: u64,
    pub background_dropped: u64,
}

impl ChannelCounters {
    pub fn add(&mut self, o: &ChannelCounters) {
        self.protocol_sent += o.protocol_sent;
        self.protocol_delivered += o.protocol_delivered;
        self.protocol_dropped += o.protocol_dropped;
        self.background_sent += o.background_sent;
        self.background_delivered += o.background_delivered;
        self.background_dropped += o.background_dropped;
    }

    pub fn conserved(&self) -> bool {
        self.protocol_sent == self.protocol_delivered + self.protocol_dropped
            && self.background_sent == self.background_delivered + self.background_dropped
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KeyAudit {
    pub pairs: u64,
    pub violations: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub events: Vec<(Tick, Event)>,
    pub per_tick: Vec<ChannelCounters>,
    pub totals: ChannelCounters,
    /// Link-level transmissions: a message routed over `h` hops counts `h`.
    pub transmissions: u64,
    pub bytes: u64,
    pub transmissions_by_kind: [u64; 7],
    /// First alert per suspect, in the order raised.
    pub alerts: Vec<AlertRecord>,
    pub clones: Vec<CloneRecord>,
    pub station_peak_entries: usize,
    pub node_peak_memory_entries: usize,
    /// Per-vehicle memory at the end of the run.
    pub node_memory: Vec<usize>,
    pub key_audit: KeyAudit,
    pub mean_degree: f64,
    pub diameter: u32,
}

impl Trace {
    pub fn is_empty(&self) -> bool {
        self.events.is_empty() && self.per_tick.is_empty() && self.transmissions == 0
    }

    pub(crate) fn record_transmission(&mut self, kind: MessageKind, hops: u64) {
        let hops = hops.max(1);
        self.transmissions += hops;
        self.bytes += hops * kind.size();
        self.transmissions_by_kind[kind.slot()] += hops;
    }

    /// Logs an alert; only the first alert for each suspect is kept.
    pub(crate) fn raise_alert(&mut self, tick: Tick, suspect: NodeId, kind: AlertKind, raised_by: Raiser) -> bool {
        if self.alerts.iter().any(|a| a.suspect == suspect) {
            return false;
        }
        self.alerts.push(AlertRecord {
            tick,
            suspect,
            kind,
            raised_by,
        });
        self.events.push((
            tick,
            Event::Alert {
                suspect,
                kind,
                raised_by,
            },
        ));
        true
    }

    pub fn alert_for(&self, suspect: NodeId) -> Option<&AlertRecord> {
        self.alerts.iter().find(|a| a.suspect == suspect)
    }

    pub fn clones_injected(&self) -> usize {
        self.clones.len()
    }

    /// Per clone: detection latency if an alert naming its identity was
    /// raised at or after injection.
    pub fn detections(&self) -> Vec<Option<Tick>> {
        self.clones
            .iter()
            .map(|c| {
                self.alert_for(c.victim)
                    .filter(|a| a.tick >= c.injected_at)
                    .map(|a| a.tick - c.injected_at)
            })
            .collect()
    }

    pub fn clones_detected(&self) -> usize {
        self.detections().iter().flatten().count()
    }

    pub fn mean_detection_latency(&self) -> Option<f64> {
        let lat: Vec<Tick> = self.detections().into_iter().flatten().collect();
        if lat.is_empty() {
            None
        } else {
            Some(lat.iter().sum::<Tick>() as f64 / lat.len() as f64)
        }
    }

    /// Alerts naming an identity that was never cloned, or raised before
    /// the identity's clone existed.
    pub fn false_positives(&self) -> usize {
        let injected: BTreeMap<NodeId, Tick> = self.clones.iter().fold(BTreeMap::new(), |mut m, c| {
            let e = m.entry(c.victim).or_insert(c.injected_at);
            *e = (*e).min(c.injected_at);
            m
        });
        self.alerts
            .iter()
            .filter(|a| injected.get(&a.suspect).is_none_or(|&t| a.tick < t))
            .count()
    }

    /// Stable text form used for byte-for-byte comparison of runs.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let t = &self.totals;
        writeln!(
            out,
            "totals sent={} delivered={} dropped={} bg_sent={} bg_delivered={} bg_dropped={}",
            t.protocol_sent,
            t.protocol_delivered,
            t.protocol_dropped,
            t.background_sent,
            t.background_delivered,
            t.background_dropped
        )
        .unwrap();
        writeln!(out, "transmissions={} bytes={}", self.transmissions, self.bytes).unwrap();
        for k in MessageKind::ALL {
            writeln!(out, "kind {} {}", k.as_str(), self.transmissions_by_kind[k.slot()]).unwrap();
        }
        writeln!(
            out,
            "station_peak={} node_peak={} audit_pairs={} audit_violations={} mean_degree={:.6} diameter={}",
            self.station_peak_entries,
            self.node_peak_memory_entries,
            self.key_audit.pairs,
            self.key_audit.violations,
            self.mean_degree,
            self.diameter
        )
        .unwrap();
        for (tick, c) in self.per_tick.iter().enumerate() {
            writeln!(
                out,
                "tick {tick} {} {} {} {} {} {}",
                c.protocol_sent,
                c.protocol_delivered,
                c.protocol_dropped,
                c.background_sent,
                c.background_delivered,
                c.background_dropped
            )
            .unwrap();
        }
        for (tick, e) in &self.events {
            writeln!(out, "event {tick} {e:?}").unwrap();
        }
        for c in &self.clones {
            writeln!(out, "clone {c:?}").unwrap();
        }
        writeln!(out, "memory {:?}", self.node_memory).unwrap();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_match_table() {
        let sizes: Vec<u64> = MessageKind::ALL.iter().map(|k| k.size()).collect();
        assert_eq!(sizes, [32, 40, 40, 48, 48, 24, 16]);
    }

    #[test]
    fn alerts_deduplicate_per_suspect() {
        let mut t = Trace::default();
        assert!(t.raise_alert(5, NodeId(1), AlertKind::KeyMismatch, Raiser::Node(0)));
        assert!(!t.raise_alert(6, NodeId(1), AlertKind::DuplicateActiveId, Raiser::Station));
        assert!(t.raise_alert(6, NodeId(2), AlertKind::DuplicateActiveId, Raiser::Station));
        assert_eq!(t.alerts.len(), 2);
        assert_eq!(t.events.len(), 2);
    }

    #[test]
    fn detection_bookkeeping() {
        let mut t = Trace::default();
        t.clones.push(CloneRecord {
            index: 10,
            victim: NodeId(3),
            original: 3,
            injected_at: 100,
        });
        t.clones.push(CloneRecord {
            index: 11,
            victim: NodeId(4),
            original: 4,
            injected_at: 100,
        });
        t.raise_alert(104, NodeId(3), AlertKind::KeyMismatch, Raiser::Node(2));
        t.raise_alert(50, NodeId(4), AlertKind::KeyMismatch, Raiser::Node(2));
        t.raise_alert(120, NodeId(7), AlertKind::KeyMismatch, Raiser::Node(2));
        assert_eq!(t.detections(), vec![Some(4), None]);
        assert_eq!(t.clones_detected(), 1);
        assert_eq!(t.mean_detection_latency(), Some(4.0));
        assert_eq!(t.false_positives(), 2);
    }

    #[test]
    fn transmissions_weight_hops() {
        let mut t = Trace::default();
        t.record_transmission(MessageKind::ForwardClaim, 3);
        t.record_transmission(MessageKind::Hello, 0);
        assert_eq!(t.transmissions, 4);
        assert_eq!(t.bytes, 3 * 48 + 32);
    }
}
