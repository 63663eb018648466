//! On-disk formats: dataset CSV with a JSON sidecar, trace and index-log CSVs.
//!
//! Floats are written as `{:.16e}` (17 significant digits), which round-trips
//! every finite `f64` exactly.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{SamplingMode, Transition, TransitionDataset};
use crate::error::{BrmError, Result};
use crate::mdp::Policy;
use crate::sgda::{IndexLog, ObjectiveRecord};

pub const FORMAT_VERSION: u32 = 1;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Provenance written next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub format_version: u32,
    pub n: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub seed: u64,
    pub mode: SamplingMode,
    pub behavior_policy: Vec<Vec<f64>>,
    pub policy_hash: String,
}

/// SHA-256 over the little-endian bytes of the policy table, prefixed by its shape.
pub fn policy_hash(policy: &Policy) -> String {
    let mut h = Sha256::new();
    h.update((policy.n_states() as u64).to_le_bytes());
    h.update((policy.n_actions() as u64).to_le_bytes());
    for p in policy.as_flat() {
        h.update(p.to_le_bytes());
    }
    hex::encode(h.finalize())
}

impl DatasetSidecar {
    pub fn describe(data: &TransitionDataset) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            n: data.len(),
            n_states: data.n_states(),
            n_actions: data.n_actions(),
            seed: data.seed,
            mode: data.mode,
            behavior_policy: data.behavior_policy.rows(),
            policy_hash: policy_hash(&data.behavior_policy),
        }
    }
}

pub fn write_dataset_csv<W: Write>(data: &TransitionDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["idx", "s", "a", "r", "s_next"])
        .map_err(csv_err)?;
    for (idx, z) in data.samples.iter().enumerate() {
        w.write_record([
            idx.to_string(),
            z.s.to_string(),
            z.a.to_string(),
            fmt_f64(z.r),
            z.s_next.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> BrmError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => BrmError::Io(io),
        other => BrmError::Format(format!("{other:?}")),
    }
}

fn parse_field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    col: usize,
    name: &str,
    row: usize,
) -> Result<T> {
    let raw = rec
        .get(col)
        .ok_or_else(|| BrmError::Format(format!("row {row}: missing column {name}")))?;
    raw.trim()
        .parse()
        .map_err(|_| BrmError::Format(format!("row {row}: cannot parse {name} from {raw:?}")))
}

/// Reads a dataset CSV and checks it against its sidecar. Errors name the row.
pub fn read_dataset_csv<R: Read>(input: R, sidecar: &DatasetSidecar) -> Result<TransitionDataset> {
    if sidecar.format_version != FORMAT_VERSION {
        return Err(BrmError::Format(format!(
            "unsupported dataset format version {}",
            sidecar.format_version
        )));
    }
    let policy = Policy::from_rows(&sidecar.behavior_policy)?;
    if policy_hash(&policy) != sidecar.policy_hash {
        return Err(BrmError::Format(
            "sidecar policy hash does not match its policy".into(),
        ));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>() != ["idx", "s", "a", "r", "s_next"] {
        return Err(BrmError::Format(format!(
            "unexpected dataset header {header:?}"
        )));
    }
    let (ns, na) = (sidecar.n_states, sidecar.n_actions);
    let mut samples = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| BrmError::Format(format!("row {row}: {e}")))?;
        if rec.len() != 5 {
            return Err(BrmError::Format(format!(
                "row {row}: expected 5 fields, got {}",
                rec.len()
            )));
        }
        let idx: usize = parse_field(&rec, 0, "idx", row)?;
        if idx != row {
            return Err(BrmError::Format(format!(
                "row {row}: idx {idx} out of sequence"
            )));
        }
        let z = Transition {
            s: parse_field(&rec, 1, "s", row)?,
            a: parse_field(&rec, 2, "a", row)?,
            r: parse_field(&rec, 3, "r", row)?,
            s_next: parse_field(&rec, 4, "s_next", row)?,
        };
        if z.s >= ns || z.a >= na || z.s_next >= ns {
            return Err(BrmError::Format(format!(
                "row {row}: state or action index out of range"
            )));
        }
        if !z.r.is_finite() {
            return Err(BrmError::Format(format!("row {row}: reward is not finite")));
        }
        samples.push(z);
    }
    if samples.len() != sidecar.n {
        return Err(BrmError::Format(format!(
            "dataset has {} rows, sidecar declares {}",
            samples.len(),
            sidecar.n
        )));
    }
    Ok(TransitionDataset {
        samples,
        behavior_policy: policy,
        seed: sidecar.seed,
        mode: sidecar.mode,
    })
}

/// Trace CSV `t,phi_gap,f_value,eta`.
pub fn write_trace_csv<W: Write>(records: &[ObjectiveRecord], phi_star: f64, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "phi_gap", "f_value", "eta"])
        .map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.t.to_string(),
            fmt_f64(r.phi_value - phi_star),
            fmt_f64(r.f_value),
            fmt_f64(r.eta),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Index log CSV `t,i_1,...,i_B`.
pub fn write_index_csv<W: Write>(log: &IndexLog, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=log.batch_size()).map(|k| format!("i_{k}")));
    w.write_record(&header).map_err(csv_err)?;
    for (t, batch) in log.batches().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(batch.iter().map(usize::to_string));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_index_csv<R: Read>(input: R) -> Result<IndexLog> {
    let mut rdr = csv::Reader::from_reader(input);
    let b = rdr.headers().map_err(csv_err)?.len().saturating_sub(1);
    let mut batches = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| BrmError::Format(format!("row {row}: {e}")))?;
        let t: usize = parse_field(&rec, 0, "t", row)?;
        if t != row {
            return Err(BrmError::Format(format!(
                "row {row}: t {t} out of sequence"
            )));
        }
        batches.push(
            (1..=b)
                .map(|c| parse_field(&rec, c, "index", row))
                .collect::<Result<Vec<usize>>>()?,
        );
    }
    IndexLog::from_batches(b, &batches)
}
