use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bumped whenever a header or column meaning changes.
pub const FORMAT_VERSION: u32 = 1;

pub const ESTIMATE_HEADER: [&str; 9] =
    ["scenario", "seed", "ebn0_db", "index", "estimator", "user", "true_power", "estimated_power", "relative_error"];

pub const BER_HEADER: [&str; 6] = ["ebn0_db", "mode", "bits", "bit_errors", "ber", "ci95_half_width"];

/// One user's estimate in one cell. `index` is the batch length for
/// convergence runs and the sample index for tracking runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub scenario: String,
    pub seed: u64,
    pub ebn0_db: f64,
    pub index: usize,
    pub estimator: String,
    pub user: usize,
    pub true_power: f64,
    pub estimated_power: f64,
    pub relative_error: f64,
}

/// Bit error rate of one receiver mode at one Eb/N0, pooled over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerRow {
    pub ebn0_db: f64,
    pub mode: String,
    pub bits: u64,
    pub bit_errors: u64,
    pub ber: f64,
    /// Wald 95% interval half-width.
    pub ci95_half_width: f64,
}

impl BerRow {
    pub fn new(ebn0_db: f64, mode: &str, bits: u64, bit_errors: u64) -> Self {
        let ber = if bits == 0 { 0.0 } else { bit_errors as f64 / bits as f64 };
        let ci95_half_width = if bits == 0 { 0.0 } else { 1.96 * (ber * (1.0 - ber) / bits as f64).sqrt() };
        Self { ebn0_db, mode: mode.to_string(), bits, bit_errors, ber, ci95_half_width }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "rows", rename_all = "snake_case")]
pub enum Rows {
    Estimates(Vec<EstimateRow>),
    Ber(Vec<BerRow>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub format: u32,
    pub scenario: String,
    pub matrix: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub meta: TableMeta,
    pub rows: Rows,
}

impl ResultTable {
    pub fn len(&self) -> usize {
        match &self.rows {
            Rows::Estimates(r) => r.len(),
            Rows::Ber(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn estimates(&self) -> Option<&[EstimateRow]> {
        match &self.rows {
            Rows::Estimates(r) => Some(r),
            Rows::Ber(_) => None,
        }
    }

    pub fn ber(&self) -> Option<&[BerRow]> {
        match &self.rows {
            Rows::Ber(r) => Some(r),
            Rows::Estimates(_) => None,
        }
    }

    /// CSV with a leading `#` line carrying the metadata.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let m = &self.meta;
        write!(out, "# cdma-lab results format {}; scenario {}; matrix {}", m.format, m.scenario, m.matrix)?;
        if let Some(note) = &m.note {
            write!(out, "; note: {note}")?;
        }
        writeln!(out)?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        match &self.rows {
            Rows::Estimates(rows) => {
                w.write_record(ESTIMATE_HEADER)?;
                for r in rows {
                    w.serialize(r)?;
                }
            }
            Rows::Ber(rows) => {
                w.write_record(BER_HEADER)?;
                for r in rows {
                    w.serialize(r)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// JSON lines: the metadata object, then one object per row.
    pub fn write_json_lines<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer(&mut out, &self.meta)?;
        writeln!(out)?;
        match &self.rows {
            Rows::Estimates(rows) => write_lines(&mut out, rows),
            Rows::Ber(rows) => write_lines(&mut out, rows),
        }
    }

    /// Reads back what [`write_csv`](Self::write_csv) produced.
    pub fn read_csv(text: &str) -> Result<Self> {
        let first = text.lines().next().unwrap_or_default();
        let meta = parse_meta_line(first)?;
        let body: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
        let mut r = csv::Reader::from_reader(body.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let rows = if header == ESTIMATE_HEADER {
            Rows::Estimates(r.deserialize().collect::<std::result::Result<_, _>>()?)
        } else if header == BER_HEADER {
            Rows::Ber(r.deserialize().collect::<std::result::Result<_, _>>()?)
        } else {
            return Err(Error::Parse { line: 2, msg: format!("unknown header {header:?}") });
        };
        Ok(Self { meta, rows })
    }
}

fn write_lines<W: Write, T: Serialize>(out: &mut W, rows: &[T]) -> Result<()> {
    for r in rows {
        serde_json::to_writer(&mut *out, r)?;
        writeln!(out)?;
    }
    Ok(())
}

fn parse_meta_line(line: &str) -> Result<TableMeta> {
    let err = |msg: &str| Error::Parse { line: 1, msg: msg.to_string() };
    let rest = line.strip_prefix("# cdma-lab results format ").ok_or_else(|| err("missing results banner"))?;
    let (head, note) = match rest.split_once("; note: ") {
        Some((h, n)) => (h, Some(n.to_string())),
        None => (rest, None),
    };
    let mut parts = head.splitn(3, "; ");
    let format = parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| err("bad format version"))?;
    let scenario = parts.next().and_then(|v| v.strip_prefix("scenario ")).ok_or_else(|| err("missing scenario"))?;
    let matrix = parts.next().and_then(|v| v.strip_prefix("matrix ")).ok_or_else(|| err("missing matrix"))?;
    Ok(TableMeta { format, scenario: scenario.to_string(), matrix: matrix.to_string(), note })
}
