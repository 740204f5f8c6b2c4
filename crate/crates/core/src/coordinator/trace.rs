use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::model::UserId;

/// One line of the iteration trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub primal_gap: f64,
    pub dual_gap: f64,
    /// Cooperative cost of each user's current schedule.
    pub objectives: BTreeMap<UserId, f64>,
}

/// Columns `k,primal_gap,dual_gap,obj_<id>...`, users in ascending order.
pub fn write_trace_csv<W: Write>(records: &[TraceRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let users: Vec<UserId> = records
        .first()
        .map(|r| r.objectives.keys().copied().collect())
        .unwrap_or_default();
    let mut header = vec!["k".to_string(), "primal_gap".into(), "dual_gap".into()];
    header.extend(users.iter().map(|u| format!("obj_{u}")));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.k.to_string(),
            format!("{:e}", r.primal_gap),
            format!("{:e}", r.dual_gap),
        ];
        row.extend(
            users
                .iter()
                .map(|u| r.objectives.get(u).map_or(String::new(), |v| v.to_string())),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRecord>, String> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(|e| e.to_string())?.clone();
    let mut users = Vec::new();
    for (i, h) in header.iter().enumerate().skip(3) {
        let id = h
            .strip_prefix("obj_")
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| format!("bad trace column {i}: {h}"))?;
        users.push(UserId(id));
    }
    let mut out = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let num = |i: usize| -> Result<f64, String> {
            rec.get(i)
                .ok_or_else(|| format!("line {}: missing column {i}", line + 2))?
                .parse::<f64>()
                .map_err(|e| format!("line {}: {e}", line + 2))
        };
        let k = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("line {}: bad k", line + 2))?;
        let mut objectives = BTreeMap::new();
        for (j, u) in users.iter().enumerate() {
            objectives.insert(*u, num(3 + j)?);
        }
        out.push(TraceRecord {
            k,
            primal_gap: num(1)?,
            dual_gap: num(2)?,
            objectives,
        });
    }
    Ok(out)
}
