//! Dataset text format.
//!
//! ```text
//! #featproto-dataset 1
//! #modalities pathology:8 genomic:8
//! sample_id  event_time  censored  time_bin  pathology  genomic
//! s00000  81.25  0  -  0.5,-1.25,...  ...
//! ```
//!
//! Fields are tab-separated. `censored` is `0` or `1`, `time_bin` is an
//! integer or `-`, and each modality column holds its block as
//! comma-separated reals in shortest round-trip decimal form. Blank lines are
//! ignored.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use super::{valid_sample_id, Dataset, Modality};
use crate::error::{Error, Result};
use crate::scalar::{parse_real, Scalar};
use crate::types::FeatureRecord;

const MAGIC: &str = "#featproto-dataset 1";
const FIXED: [&str; 4] = ["sample_id", "event_time", "censored", "time_bin"];

impl<T: Scalar> Dataset<T> {
    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC}\n#modalities");
        for m in &self.modalities {
            out.push_str(&format!(" {}:{}", m.name, m.dim));
        }
        out.push('\n');
        let mut cols: Vec<&str> = FIXED.to_vec();
        cols.extend(self.modalities.iter().map(|m| m.name.as_str()));
        out.push_str(&cols.join("\t"));
        out.push('\n');
        for r in &self.records {
            let bin = r.time_bin.map_or("-".to_string(), |b| b.to_string());
            out.push_str(&format!(
                "{}\t{}\t{}\t{}",
                r.sample_id,
                r.event_time,
                u8::from(r.censored),
                bin
            ));
            for block in &r.modality_blocks {
                let vals: Vec<String> = block.iter().map(|x| x.to_string()).collect();
                out.push('\t');
                out.push_str(&vals.join(","));
            }
            out.push('\n');
        }
        out
    }
}

fn parse_modalities(line: &str, n: usize) -> Result<Vec<Modality>> {
    let rest = line
        .strip_prefix("#modalities")
        .ok_or_else(|| Error::parse(n, "expected `#modalities name:dim ...`"))?;
    let mut names = BTreeSet::new();
    let mut out = Vec::new();
    for tok in rest.split_whitespace() {
        let (name, dim) = tok
            .split_once(':')
            .ok_or_else(|| Error::parse(n, format!("bad modality `{tok}`")))?;
        let dim: usize = dim
            .parse()
            .ok()
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::parse(n, format!("bad modality width in `{tok}`")))?;
        if name.is_empty() || FIXED.contains(&name) || !names.insert(name) {
            return Err(Error::parse(n, format!("bad or repeated modality name `{name}`")));
        }
        out.push(Modality::new(name, dim));
    }
    if out.is_empty() {
        return Err(Error::parse(n, "no modalities declared"));
    }
    Ok(out)
}

/// Parses a dataset. With `schema`, the declared modalities must match it.
pub fn read_dataset<T: Scalar>(text: &str, schema: Option<&[Modality]>) -> Result<Dataset<T>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, MAGIC)) => {}
        _ => return Err(Error::parse(1, format!("expected header `{MAGIC}`"))),
    }
    let (n, line) = lines.next().ok_or_else(|| Error::parse(2, "missing `#modalities`"))?;
    let modalities = parse_modalities(line, n)?;
    if let Some(expected) = schema {
        if expected != modalities.as_slice() {
            let found: Vec<String> = modalities.iter().map(|m| format!("{}:{}", m.name, m.dim)).collect();
            let want: Vec<String> = expected.iter().map(|m| format!("{}:{}", m.name, m.dim)).collect();
            return Err(Error::parse(
                n,
                format!("modalities {} do not match expected {}", found.join(" "), want.join(" ")),
            ));
        }
    }
    let (n, line) = lines.next().ok_or_else(|| Error::parse(3, "missing column header"))?;
    let mut cols: Vec<&str> = FIXED.to_vec();
    cols.extend(modalities.iter().map(|m| m.name.as_str()));
    if line.split('\t').collect::<Vec<_>>() != cols {
        return Err(Error::parse(n, format!("expected columns `{}`", cols.join(" "))));
    }

    let mut seen = BTreeSet::new();
    let mut records = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != cols.len() {
            return Err(Error::parse(n, format!("expected {} fields, found {}", cols.len(), fields.len())));
        }
        let sample_id = fields[0];
        if !valid_sample_id(sample_id) {
            return Err(Error::parse(n, format!("bad sample id `{sample_id}`")));
        }
        if !seen.insert(sample_id) {
            return Err(Error::parse(n, format!("duplicate sample id `{sample_id}`")));
        }
        let event_time: T = parse_real(fields[1])
            .filter(|t: &T| t.is_finite())
            .ok_or_else(|| Error::parse(n, format!("bad event time `{}`", fields[1])))?;
        if event_time < T::zero() {
            return Err(Error::parse(n, format!("negative event time {}", fields[1])));
        }
        let censored = match fields[2] {
            "0" => false,
            "1" => true,
            other => return Err(Error::parse(n, format!("unknown censoring flag `{other}`"))),
        };
        let time_bin = match fields[3] {
            "-" => None,
            b => Some(
                b.parse::<usize>()
                    .map_err(|_| Error::parse(n, format!("bad time bin `{b}`")))?,
            ),
        };
        let mut blocks = Vec::with_capacity(modalities.len());
        for (field, m) in fields[4..].iter().zip(&modalities) {
            let block: Vec<T> = field
                .split(',')
                .map(|t| {
                    parse_real(t)
                        .filter(|x: &T| x.is_finite())
                        .ok_or_else(|| Error::parse(n, format!("bad real `{t}` in {}", m.name)))
                })
                .collect::<Result<_>>()?;
            if block.len() != m.dim {
                return Err(Error::parse(
                    n,
                    format!("{} block has {} values, expected {}", m.name, block.len(), m.dim),
                ));
            }
            blocks.push(block);
        }
        records.push(FeatureRecord {
            sample_id: sample_id.to_string(),
            modality_blocks: blocks,
            fused: None,
            event_time,
            censored,
            time_bin,
        });
    }
    Dataset::new(modalities, records)
}

pub fn load_dataset<T: Scalar>(path: impl AsRef<Path>, schema: Option<&[Modality]>) -> Result<Dataset<T>> {
    read_dataset(&fs::read_to_string(path)?, schema)
}

pub fn write_dataset<T: Scalar>(path: impl AsRef<Path>, dataset: &Dataset<T>) -> Result<()> {
    fs::write(path, dataset.to_text())?;
    Ok(())
}
