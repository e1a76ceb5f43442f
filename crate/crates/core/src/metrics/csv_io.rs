use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::MetricsRow;

pub const CSV_HEADER: &str = "protocol,n,degree_D,diameter_s,load,seed,ticks,messages_total,bytes_total,\
station_peak_entries,node_peak_memory_entries,clones_injected,clones_detected,false_positives,\
mean_detection_latency_ticks";

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("unexpected header {0:?}")]
    Header(String),
    #[error("line {line}: bad {field} value {value:?}")]
    Field {
        line: u64,
        field: &'static str,
        value: String,
    },
}

fn record(row: &MetricsRow) -> [String; 15] {
    [
        row.protocol.to_string(),
        row.n.to_string(),
        row.degree_d.to_string(),
        row.diameter_s.to_string(),
        row.load.to_string(),
        row.seed.to_string(),
        row.ticks.to_string(),
        row.messages_total.to_string(),
        row.bytes_total.to_string(),
        row.station_peak_entries.to_string(),
        row.node_peak_memory_entries.to_string(),
        row.clones_injected.to_string(),
        row.clones_detected.to_string(),
        row.false_positives.to_string(),
        row.mean_detection_latency_ticks
            .map(|l| format!("{l:.3}"))
            .unwrap_or_default(),
    ]
}

pub fn write_csv<W: Write>(rows: &[MetricsRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for row in rows {
        w.write_record(record(row))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `rows` to `path`, header first.
pub fn emit_csv(rows: &[MetricsRow], path: &Path) -> Result<(), CsvError> {
    let io_err = |source| CsvError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut buf = BufWriter::new(file);
    write_csv(rows, &mut buf).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(source),
        other => CsvError::Header(format!("{other:?}")),
    })?;
    buf.flush().map_err(io_err)
}

pub fn parse_csv<R: Read>(input: R) -> Result<Vec<MetricsRow>, CsvError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(CsvError::Header(header));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let get = |i: usize| rec.get(i).unwrap_or("");
        macro_rules! field {
            ($i:expr, $name:expr) => {
                get($i).parse().map_err(|_| CsvError::Field {
                    line,
                    field: $name,
                    value: get($i).to_string(),
                })?
            };
        }
        let latency = match get(14) {
            "" => None,
            s => Some(s.parse::<f64>().map_err(|_| CsvError::Field {
                line,
                field: "mean_detection_latency_ticks",
                value: s.to_string(),
            })?),
        };
        rows.push(MetricsRow {
            protocol: field!(0, "protocol"),
            n: field!(1, "n"),
            degree_d: field!(2, "degree_D"),
            diameter_s: field!(3, "diameter_s"),
            load: field!(4, "load"),
            seed: field!(5, "seed"),
            ticks: field!(6, "ticks"),
            messages_total: field!(7, "messages_total"),
            bytes_total: field!(8, "bytes_total"),
            station_peak_entries: field!(9, "station_peak_entries"),
            node_peak_memory_entries: field!(10, "node_peak_memory_entries"),
            clones_injected: field!(11, "clones_injected"),
            clones_detected: field!(12, "clones_detected"),
            false_positives: field!(13, "false_positives"),
            mean_detection_latency_ticks: latency,
        });
    }
    Ok(rows)
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricsRow>, CsvError> {
    let file = File::open(path).map_err(|source| CsvError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(io::BufReader::new(file))
}
