use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::MetricsRow;
use crate::netsim::Protocol;

/// Normal quantile for a two-sided 95% interval.
const Z95: f64 = 1.96;

/// Least-squares power law `messages ≈ e^intercept · n^exponent`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub protocol: Protocol,
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// (n, mean messages_total) points the fit used.
    pub points: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("{protocol} has load-0 rows for only {found} distinct n values; at least 4 are needed")]
    TooFewSizes { protocol: Protocol, found: usize },
    #[error("{protocol} at n={n} sent no messages; cannot take a logarithm")]
    NoMessages { protocol: Protocol, n: usize },
}

/// Fits log(mean messages_total) against log(n) over the load-0 rows of
/// `protocol`, averaging trials per n first.
pub fn fit_complexity(rows: &[MetricsRow], protocol: Protocol) -> Result<FitResult, FitError> {
    let mut by_n: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.protocol == protocol && r.load == 0.0) {
        let e = by_n.entry(r.n).or_default();
        e.0 += r.messages_total as f64;
        e.1 += 1;
    }
    if by_n.len() < 4 {
        return Err(FitError::TooFewSizes {
            protocol,
            found: by_n.len(),
        });
    }
    let points: Vec<(usize, f64)> = by_n.into_iter().map(|(n, (sum, k))| (n, sum / k as f64)).collect();
    if let Some(&(n, _)) = points.iter().find(|(_, m)| *m <= 0.0) {
        return Err(FitError::NoMessages { protocol, n });
    }
    let xs: Vec<f64> = points.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, m)| m.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(FitResult {
        protocol,
        exponent,
        intercept,
        r_squared,
        points,
    })
}

/// Mean per-trial detection rate of one (load, protocol) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionCell {
    pub load: f64,
    pub protocol: Protocol,
    pub trials: usize,
    pub mean: f64,
    pub std_dev: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub half_width: f64,
}

impl DetectionCell {
    pub fn interval(&self) -> (f64, f64) {
        (self.mean - self.half_width, self.mean + self.half_width)
    }

    fn std_err(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.std_dev / (self.trials as f64).sqrt()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapVerdict {
    /// The 95% interval of the difference lies at or above zero.
    Confirmed,
    /// Means are ordered but the interval of the difference reaches below zero.
    Inconclusive,
    /// Means are in the wrong order.
    Violated,
    /// One of the two protocols has no cell at this load.
    Missing,
}

impl GapVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            GapVerdict::Confirmed => "confirmed",
            GapVerdict::Inconclusive => "inconclusive",
            GapVerdict::Violated => "violated",
            GapVerdict::Missing => "missing",
        }
    }
}

/// Check that `higher` detects at least as well as `lower`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingCheck {
    pub load: f64,
    pub higher: Protocol,
    pub lower: Protocol,
    pub difference: f64,
    /// Lower end of the 95% interval of `rate(higher) - rate(lower)`.
    pub difference_low: f64,
    pub verdict: GapVerdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    /// Sorted by load, then protocol.
    pub cells: Vec<DetectionCell>,
    pub checks: Vec<OrderingCheck>,
}

impl DetectionReport {
    pub fn cell(&self, load: f64, protocol: Protocol) -> Option<&DetectionCell> {
        self.cells.iter().find(|c| c.load == load && c.protocol == protocol)
    }

    pub fn ordering_confirmed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.verdict == GapVerdict::Confirmed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{:>8}  {:<11} {:>6} {:>8} {:>19}",
            "load", "protocol", "trials", "rate", "95% interval"
        )
        .unwrap();
        for c in &self.cells {
            let (lo, hi) = c.interval();
            writeln!(
                out,
                "{:>8}  {:<11} {:>6} {:>8.4} [{:>7.4}, {:>7.4}]",
                c.load,
                c.protocol.as_str(),
                c.trials,
                c.mean,
                lo,
                hi
            )
            .unwrap();
        }
        for k in &self.checks {
            writeln!(
                out,
                "load {}: {} >= {}: difference {:+.4} (95% low {:+.4}) {}",
                k.load,
                k.higher,
                k.lower,
                k.difference,
                k.difference_low,
                k.verdict.as_str()
            )
            .unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("no rows with injected clones")]
    NoAdversarialRows,
}

/// The expected ordering at the highest load: randomized multicast first,
/// then the station protocol, then neighbour broadcast.
const ORDER: [(Protocol, Protocol); 2] = [
    (Protocol::RandomizedMulticast, Protocol::Ppp),
    (Protocol::Ppp, Protocol::Broadcast),
];

/// Per-cell detection rates over adversarial rows, restricted to
/// `load_levels` when given, plus ordering checks at the highest load.
pub fn detection_report(rows: &[MetricsRow], load_levels: Option<&[f64]>) -> Result<DetectionReport, ReportError> {
    let mut groups: BTreeMap<(u64, Protocol), Vec<f64>> = BTreeMap::new();
    for r in rows {
        let Some(rate) = r.detection_rate() else { continue };
        if load_levels.is_some_and(|levels| !levels.contains(&r.load)) {
            continue;
        }
        groups.entry((r.load.to_bits(), r.protocol)).or_default().push(rate);
    }
    if groups.is_empty() {
        return Err(ReportError::NoAdversarialRows);
    }
    let mut cells: Vec<DetectionCell> = groups
        .into_iter()
        .map(|((bits, protocol), rates)| {
            let t = rates.len() as f64;
            let mean = rates.iter().sum::<f64>() / t;
            let var = if rates.len() > 1 {
                rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (t - 1.0)
            } else {
                0.0
            };
            let std_dev = var.sqrt();
            DetectionCell {
                load: f64::from_bits(bits),
                protocol,
                trials: rates.len(),
                mean,
                std_dev,
                half_width: Z95 * std_dev / t.sqrt(),
            }
        })
        .collect();
    cells.sort_by(|a, b| a.load.total_cmp(&b.load).then(a.protocol.cmp(&b.protocol)));

    let top = cells.iter().map(|c| c.load).fold(f64::NEG_INFINITY, f64::max);
    let at = |p: Protocol| cells.iter().find(|c| c.load == top && c.protocol == p);
    let checks = ORDER
        .iter()
        .map(|&(higher, lower)| match (at(higher), at(lower)) {
            (Some(h), Some(l)) => {
                let difference = h.mean - l.mean;
                let se = (h.std_err().powi(2) + l.std_err().powi(2)).sqrt();
                let difference_low = difference - Z95 * se;
                let verdict = if difference < 0.0 {
                    GapVerdict::Violated
                } else if difference_low >= 0.0 {
                    GapVerdict::Confirmed
                } else {
                    GapVerdict::Inconclusive
                };
                OrderingCheck {
                    load: top,
                    higher,
                    lower,
                    difference,
                    difference_low,
                    verdict,
                }
            }
            _ => OrderingCheck {
                load: top,
                higher,
                lower,
                difference: f64::NAN,
                difference_low: f64::NAN,
                verdict: GapVerdict::Missing,
            },
        })
        .collect();
    Ok(DetectionReport { cells, checks })
}
