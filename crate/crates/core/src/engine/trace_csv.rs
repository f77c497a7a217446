//! Trace CSV: `slot,B1_pre,..,BN_pre,B1_post,..,BN_post,active,switched,packets,suppressed_mask`.
//!
//! Nodes are 1-based in the file. Floats are written in the shortest form that
//! parses back to the identical `f64`, so a trace survives a write/read cycle
//! bit for bit.

use std::io::{Read, Write};

use thiserror::Error;

use super::Trace;
use crate::model::SlotRecord;

#[derive(Debug, Error)]
pub enum TraceCsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("unrecognised trace header: {0}")]
    Header(String),
    #[error("line {line}: {msg}")]
    Row { line: u64, msg: String },
}

pub fn trace_csv_header(node_count: usize) -> Vec<String> {
    let mut cols = vec!["slot".to_string()];
    cols.extend((1..=node_count).map(|u| format!("B{u}_pre")));
    cols.extend((1..=node_count).map(|u| format!("B{u}_post")));
    cols.extend(["active", "switched", "packets", "suppressed_mask"].map(String::from));
    cols
}

pub fn write_trace_csv<W: Write>(trace: &Trace, out: W) -> Result<(), TraceCsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trace_csv_header(trace.node_count))?;
    for r in &trace.records {
        let mut row = Vec::with_capacity(2 * trace.node_count + 5);
        row.push(r.slot.to_string());
        row.extend(r.pre.iter().map(f64::to_string));
        row.extend(r.post.iter().map(f64::to_string));
        row.push((r.active + 1).to_string());
        row.push(u8::from(r.switched).to_string());
        row.push(r.packets.to_string());
        row.push(r.suppressed_mask().to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Trace, TraceCsvError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let node_count = match header.len() {
        9 => 2,
        11 => 3,
        _ => return Err(TraceCsvError::Header(header.join(","))),
    };
    if header != trace_csv_header(node_count) {
        return Err(TraceCsvError::Header(header.join(",")));
    }

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |msg: String| TraceCsvError::Row { line, msg };
        let float = |i: usize| -> Result<f64, TraceCsvError> {
            row[i].parse::<f64>().map_err(|e| bad(format!("column {}: {e}", header[i])))
        };
        let int = |i: usize| -> Result<u64, TraceCsvError> {
            row[i].parse::<u64>().map_err(|e| bad(format!("column {}: {e}", header[i])))
        };

        let n = node_count;
        let pre = (1..=n).map(float).collect::<Result<Vec<_>, _>>()?;
        let post = (n + 1..=2 * n).map(float).collect::<Result<Vec<_>, _>>()?;
        let active = int(2 * n + 1)? as usize;
        if active == 0 || active > n {
            return Err(bad(format!("active node {active} out of range")));
        }
        let switched = match int(2 * n + 2)? {
            0 => false,
            1 => true,
            other => return Err(bad(format!("switched must be 0 or 1, got {other}"))),
        };
        let mask = int(2 * n + 4)?;
        records.push(SlotRecord {
            slot: int(0)?,
            pre,
            post,
            active: active - 1,
            switched,
            packets: float(2 * n + 3)?,
            suppressed: (0..n).map(|u| mask & (1 << u) != 0).collect(),
        });
    }

    Ok(Trace {
        node_count,
        initial_active: None,
        records,
        inputs: Vec::new(),
        final_state: None,
    })
}
