//! CSV artifacts.
//!
//! * trace: `customer_id,priority,arrival_time,last_service_entry,departure_time`,
//!   with an empty `departure_time` for censored customers and an empty
//!   `last_service_entry` for customers never served;
//! * snapshots: `snapshot_time,priorities`, the priorities sorted ascending
//!   and joined with `;`;
//! * curves: `p,value`, where `value` is a number, `inf`, or empty when the
//!   bin has no data.
//!
//! Numbers are written in Rust's shortest round-trip form, so re-reading a
//! file reproduces the in-memory values bit for bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use cpq::des::Entry;
use cpq::{
    BinGrid, CurveEstimate, CurveValue, CustomerRecord, Departure, ExtendedReal, Observer,
    PriorityRegistry, Snapshot,
};

use crate::error::{CliError, Result};

pub fn format_value(value: CurveValue) -> String {
    match value {
        CurveValue::Finite(x) => x.to_string(),
        CurveValue::Infinite => "inf".to_owned(),
        CurveValue::Undefined => String::new(),
    }
}

pub fn parse_value(field: &str) -> Option<CurveValue> {
    match field.trim() {
        "" => Some(CurveValue::Undefined),
        "inf" => Some(CurveValue::Infinite),
        s => s.parse().ok().map(CurveValue::Finite),
    }
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(CliError::io(path))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::Reader::from_path(path).map_err(CliError::csv(path))
}

fn parse_err(path: &Path, row: usize, message: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        row,
        message: message.into(),
    }
}

fn opt_to_string(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_trace<'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a CustomerRecord>,
) -> Result<()> {
    let mut w = writer(path)?;
    let err = CliError::csv;
    w.write_record([
        "customer_id",
        "priority",
        "arrival_time",
        "last_service_entry",
        "departure_time",
    ])
    .map_err(err(path))?;
    for r in records {
        w.write_record([
            r.customer_id.to_string(),
            r.priority.to_string(),
            r.arrival_time.to_string(),
            opt_to_string(r.last_service_entry),
            opt_to_string(r.departure_time()),
        ])
        .map_err(err(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

pub fn read_trace(path: &Path) -> Result<Vec<CustomerRecord>> {
    let mut rdr = reader(path)?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(CliError::csv(path))?;
        if rec.len() != 5 {
            return Err(parse_err(path, row, format!("expected 5 fields, got {}", rec.len())));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| parse_err(path, row, format!("bad number {:?}", &rec[i])))
        };
        let opt = |i: usize| -> Result<Option<f64>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        out.push(CustomerRecord {
            customer_id: rec[0]
                .parse()
                .map_err(|_| parse_err(path, row, "bad customer id"))?,
            priority: num(1)?,
            arrival_time: num(2)?,
            last_service_entry: opt(3)?,
            departure: opt(4)?.map_or(Departure::Censored, Departure::At),
        });
    }
    Ok(out)
}

fn join_priorities(priorities: impl Iterator<Item = f64>) -> String {
    priorities.map(|p| p.to_string()).collect::<Vec<_>>().join(";")
}

pub fn write_snapshots(path: &Path, snapshots: &[Snapshot]) -> Result<()> {
    let mut w = SnapshotWriter::create(path)?;
    for s in snapshots {
        w.write(s.time, s.priorities.iter().copied());
    }
    w.finish()
}

pub fn read_snapshots(path: &Path) -> Result<Vec<Snapshot>> {
    let mut rdr = reader(path)?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(CliError::csv(path))?;
        if rec.len() != 2 {
            return Err(parse_err(path, row, format!("expected 2 fields, got {}", rec.len())));
        }
        let time = rec[0]
            .parse()
            .map_err(|_| parse_err(path, row, "bad snapshot time"))?;
        let priorities = if rec[1].is_empty() {
            Vec::new()
        } else {
            rec[1]
                .split(';')
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(path, row, "bad priority list"))?
        };
        out.push(Snapshot { time, priorities });
    }
    Ok(out)
}

/// Streams arrival snapshots straight to disk while a simulation runs.
///
/// The first write error is kept and reported by [`SnapshotWriter::finish`].
pub struct SnapshotWriter {
    path: PathBuf,
    inner: csv::Writer<BufWriter<File>>,
    error: Option<CliError>,
}

impl SnapshotWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut inner = writer(path)?;
        inner
            .write_record(["snapshot_time", "priorities"])
            .map_err(CliError::csv(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            inner,
            error: None,
        })
    }

    fn write(&mut self, time: f64, priorities: impl Iterator<Item = f64>) {
        if self.error.is_some() {
            return;
        }
        let line = [time.to_string(), join_priorities(priorities)];
        if let Err(e) = self.inner.write_record(line) {
            self.error = Some(CliError::csv(&self.path)(e));
        }
    }

    pub fn finish(mut self) -> Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.inner.flush().map_err(CliError::io(&self.path))
    }
}

impl Observer for SnapshotWriter {
    fn before_arrival(&mut self, time: f64, registry: &PriorityRegistry) {
        self.write(time, registry.iter().map(|e: Entry| e.level));
    }
}

/// One row per bin centre.
pub fn write_curve(path: &Path, curve: &CurveEstimate) -> Result<()> {
    write_points(path, curve.points())
}

pub fn write_dense_curve(path: &Path, points: &[(f64, ExtendedReal)]) -> Result<()> {
    write_points(path, points.iter().map(|&(p, v)| (p, v.into())))
}

fn write_points(path: &Path, points: impl Iterator<Item = (f64, CurveValue)>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["p", "value"]).map_err(CliError::csv(path))?;
    for (p, v) in points {
        w.write_record([p.to_string(), format_value(v)])
            .map_err(CliError::csv(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

pub fn read_points(path: &Path) -> Result<Vec<(f64, CurveValue)>> {
    let mut rdr = reader(path)?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(CliError::csv(path))?;
        if rec.len() != 2 {
            return Err(parse_err(path, row, format!("expected 2 fields, got {}", rec.len())));
        }
        let p = rec[0].parse().map_err(|_| parse_err(path, row, "bad p"))?;
        let v = parse_value(&rec[1]).ok_or_else(|| parse_err(path, row, "bad value"))?;
        out.push((p, v));
    }
    Ok(out)
}

/// Reads a per-centre curve file back; the grid is inferred from the row count.
pub fn read_curve(path: &Path) -> Result<CurveEstimate> {
    let points = read_points(path)?;
    let grid = BinGrid::with_bins(points.len())?;
    for (i, (p, _)) in points.iter().enumerate() {
        if p.to_bits() != grid.center(i).to_bits() {
            return Err(parse_err(path, i, format!("p = {p} is not bin centre {}", grid.center(i))));
        }
    }
    Ok(CurveEstimate::new(grid, points.into_iter().map(|(_, v)| v).collect())?)
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(CliError::io(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    w.write_all(b"\n").map_err(CliError::io(path))?;
    w.flush().map_err(CliError::io(path))
}
