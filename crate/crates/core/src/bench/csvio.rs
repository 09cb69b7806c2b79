//! CSV emission and parsing for sweep results and std tables.

use super::{LatentStd, ModelTag, RateAccuracyPoint};
use crate::error::{Error, Result};

pub const SWEEP_HEADER: &str = "model,dataset,d_y,s,total_entropy_bits,mean_bits_per_sample,accuracy,drops";

/// Serializes sweep points in their given order with fixed formatting.
pub fn sweep_csv(points: &[RateAccuracyPoint]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{}\n",
            p.model, p.dataset, p.d_y, p.s, p.total_entropy_bits, p.mean_bits_per_sample, p.accuracy, p.drops
        ));
    }
    out
}

/// Parses the exact schema [`sweep_csv`] writes.
pub fn parse_sweep_csv(text: &str) -> Result<Vec<RateAccuracyPoint>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == SWEEP_HEADER => {}
        other => {
            return Err(Error::FormatError(format!(
                "bad sweep CSV header: {:?}",
                other.unwrap_or("")
            )))
        }
    }
    let mut points = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::FormatError(format!(
                "row {}: expected 8 fields, got {}",
                i + 2,
                fields.len()
            )));
        }
        let bad = |what: &str| Error::FormatError(format!("row {}: bad {what}", i + 2));
        points.push(RateAccuracyPoint {
            model: ModelTag::parse(fields[0])?,
            dataset: fields[1].to_string(),
            d_y: fields[2].parse().map_err(|_| bad("d_y"))?,
            s: fields[3].parse().map_err(|_| bad("s"))?,
            total_entropy_bits: fields[4].parse().map_err(|_| bad("total_entropy_bits"))?,
            mean_bits_per_sample: fields[5].parse().map_err(|_| bad("mean_bits_per_sample"))?,
            accuracy: fields[6].parse().map_err(|_| bad("accuracy"))?,
            drops: fields[7].parse().map_err(|_| bad("drops"))?,
        });
    }
    Ok(points)
}

pub const STD_HEADER: &str = "rank,entry,std";

pub fn std_csv(table: &[LatentStd]) -> String {
    let mut out = String::from(STD_HEADER);
    out.push('\n');
    for r in table {
        out.push_str(&format!("{},{},{:.6}\n", r.rank, r.entry, r.std));
    }
    out
}

pub fn parse_std_csv(text: &str) -> Result<Vec<LatentStd>> {
    let mut lines = text.lines();
    if lines.next() != Some(STD_HEADER) {
        return Err(Error::FormatError("bad std CSV header".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::FormatError(format!("row {}: expected 3 fields", i + 2)));
        }
        let bad = || Error::FormatError(format!("row {}: bad value", i + 2));
        rows.push(LatentStd {
            rank: fields[0].parse().map_err(|_| bad())?,
            entry: fields[1].parse().map_err(|_| bad())?,
            std: fields[2].parse().map_err(|_| bad())?,
        });
    }
    Ok(rows)
}
