//! Experiment rows, CSV output, sweeps and their analysis.

mod analysis;
mod csv_io;
mod sweep;

pub use analysis::{
    detection_report, fit_complexity, DetectionCell, DetectionReport, FitError, FitResult, GapVerdict, OrderingCheck,
    ReportError,
};
pub use csv_io::{emit_csv, parse_csv, read_csv, write_csv, CsvError, CSV_HEADER};
pub use sweep::{parse_sweep_spec, run_sweep, SpecError, SweepError, SweepSpec};

use crate::netsim::{Protocol, SimConfig, Trace};

/// One simulation run, as written to CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub protocol: Protocol,
    pub n: usize,
    pub degree_d: usize,
    pub diameter_s: u32,
    pub load: f64,
    pub seed: u64,
    pub ticks: u64,
    pub messages_total: u64,
    pub bytes_total: u64,
    pub station_peak_entries: usize,
    pub node_peak_memory_entries: usize,
    pub clones_injected: usize,
    pub clones_detected: usize,
    pub false_positives: usize,
    /// Millisecond-rounded mean ticks from injection to first alert; `None`
    /// when nothing was detected.
    pub mean_detection_latency_ticks: Option<f64>,
}

impl MetricsRow {
    pub fn from_trace(cfg: &SimConfig, trace: &Trace) -> Self {
        MetricsRow {
            protocol: cfg.protocol,
            n: cfg.n,
            degree_d: cfg.target_degree,
            diameter_s: trace.diameter,
            load: cfg.load,
            seed: cfg.seed,
            ticks: cfg.ticks,
            messages_total: trace.transmissions,
            bytes_total: trace.bytes,
            station_peak_entries: trace.station_peak_entries,
            node_peak_memory_entries: trace.node_peak_memory_entries,
            clones_injected: trace.clones_injected(),
            clones_detected: trace.clones_detected(),
            false_positives: trace.false_positives(),
            mean_detection_latency_ticks: trace.mean_detection_latency().map(|l| (l * 1000.0).round() / 1000.0),
        }
    }

    pub fn detection_rate(&self) -> Option<f64> {
        (self.clones_injected > 0).then(|| self.clones_detected as f64 / self.clones_injected as f64)
    }
}

/// Asymptotic costs of a published technique.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceRow {
    pub technique: &'static str,
    pub communication: &'static str,
    pub memory: &'static str,
}

const REFERENCE: [ReferenceRow; 6] = [
    ReferenceRow {
        technique: "EDD",
        communication: "O(n)",
        memory: "O(n)",
    },
    ReferenceRow {
        technique: "SDC",
        communication: "O(n)+O(s)",
        memory: "NAP",
    },
    ReferenceRow {
        technique: "Randomized Multicast",
        communication: "O(n²)",
        memory: "O(n)",
    },
    ReferenceRow {
        technique: "SET",
        communication: "O(n)",
        memory: "O(D)",
    },
    ReferenceRow {
        technique: "RED",
        communication: "O(√n)",
        memory: "O(D)",
    },
    ReferenceRow {
        technique: "PPP",
        communication: "O(n)",
        memory: "O(s)",
    },
];

pub fn reference_table() -> &'static [ReferenceRow] {
    &REFERENCE
}

/// Case-insensitive lookup; simulator protocol names are accepted too.
pub fn lookup_reference(name: &str) -> Option<&'static ReferenceRow> {
    let key = match name.parse::<Protocol>() {
        Ok(Protocol::RandomizedMulticast) => "Randomized Multicast",
        Ok(Protocol::Ppp) => "PPP",
        _ => name.trim(),
    };
    REFERENCE.iter().find(|r| r.technique.eq_ignore_ascii_case(key))
}
