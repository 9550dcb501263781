//! Patent corpus ingestion: raw-export parsing, field normalization,
//! deduplication, and stratified train/validation/test splits.
//!
//! The canonical interchange format is JSONL with snake_case field names;
//! CSV input (RFC-4180 quoting) is accepted at the parse stage.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::hash::derive_seed;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unreadable source: {0}")]
    UnreadableSource(#[from] std::io::Error),
    #[error("unknown input format: {0}")]
    UnknownFormat(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("split ratios must all be positive")]
    InvalidRatios,
    #[error("malformed record on line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
}

/// One normalized patent application.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatentRecord {
    pub application_number: String,
    pub title: String,
    #[serde(rename = "abstract", default)]
    pub abstract_text: String,
    pub application_date: NaiveDate,
    #[serde(default)]
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub publication_number: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub publication_type: Option<String>,
    #[serde(default)]
    pub field_of_invention: String,
    #[serde(default)]
    pub ipc_codes: Vec<String>,
    #[serde(default)]
    pub inventors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<String>,
}

impl PatentRecord {
    /// Empty abstracts are legal but worth surfacing in ingest summaries.
    pub fn has_empty_abstract(&self) -> bool {
        self.abstract_text.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    MissingRequiredField,
    InvalidDate,
    DuplicateKey,
    Inconsistent,
}

/// A record dropped during normalization or deduplication, with its payload
/// preserved so nothing is silently lost.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRecord {
    pub raw_payload: String,
    pub reason: RejectReason,
}

#[derive(Debug)]
pub enum Normalized {
    Accepted(PatentRecord),
    Rejected(RejectedRecord),
}

/// Reproducible train/validation/test partition of a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train_ids: Vec<String>,
    pub validation_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub seed: u64,
    pub ratios: (u32, u32, u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    Csv,
    Jsonl,
}

impl SourceFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(SourceFormat::Csv),
            "jsonl" | "ndjson" => Some(SourceFormat::Jsonl),
            _ => None,
        }
    }
}

/// A parsed-but-unnormalized record: canonical snake_case keys to raw values.
pub type RawRecord = BTreeMap<String, Value>;

/// A malformed input row, reported with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseIssue {
    pub line: usize,
    pub message: String,
}

/// Maps an input header to its canonical snake_case key, case-insensitively.
pub fn canonical_key(header: &str) -> String {
    let squashed = squash_header(header);
    match squashed.as_str() {
        "date" | "filing_date" => "application_date".to_string(),
        "ipc" | "classification" | "classification_ipc" | "ipc_classification" => {
            "ipc_codes".to_string()
        }
        "inventor" | "inventor_information" => "inventors".to_string(),
        "abstract_text" => "abstract".to_string(),
        "invention_background" | "background_of_invention" => "background".to_string(),
        "domain" | "technical_field" => "field_of_invention".to_string(),
        _ => squashed,
    }
}

fn squash_header(header: &str) -> String {
    let mut out = String::with_capacity(header.len());
    let mut pending_sep = false;
    for ch in header.chars() {
        if ch.is_alphanumeric() {
            if pending_sep && !out.is_empty() {
                out.push('_');
            }
            pending_sep = false;
            out.extend(ch.to_lowercase());
        } else {
            pending_sep = true;
        }
    }
    out
}

/// Parses a CSV or JSONL export into raw record maps. Malformed rows are
/// reported with line numbers, never dropped silently.
pub fn parse_records<R: Read>(
    source: R,
    format: SourceFormat,
) -> Result<(Vec<RawRecord>, Vec<ParseIssue>), CorpusError> {
    match format {
        SourceFormat::Jsonl => parse_jsonl(source),
        SourceFormat::Csv => parse_csv(source),
    }
}

fn parse_jsonl<R: Read>(source: R) -> Result<(Vec<RawRecord>, Vec<ParseIssue>), CorpusError> {
    let reader = BufReader::new(source);
    let mut records = Vec::new();
    let mut issues = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Value>(&line) {
            Ok(Value::Object(map)) => {
                let mut raw = RawRecord::new();
                for (key, value) in map {
                    raw.insert(canonical_key(&key), value);
                }
                records.push(raw);
            }
            Ok(_) => issues.push(ParseIssue {
                line: line_no,
                message: "expected a JSON object".to_string(),
            }),
            Err(e) => issues.push(ParseIssue {
                line: line_no,
                message: e.to_string(),
            }),
        }
    }
    Ok((records, issues))
}

fn parse_csv<R: Read>(source: R) -> Result<(Vec<RawRecord>, Vec<ParseIssue>), CorpusError> {
    let mut reader = csv::ReaderBuilder::new().from_reader(source);
    let headers: Vec<String> = match reader.headers() {
        Ok(h) => h.iter().map(canonical_key).collect(),
        Err(e) => return Err(map_csv_error(e)),
    };
    let mut records = Vec::new();
    let mut issues = Vec::new();
    for row in reader.records() {
        match row {
            Ok(row) => {
                let line = row
                    .position()
                    .map(|p| p.line() as usize)
                    .unwrap_or(records.len() + 2);
                if row.len() != headers.len() {
                    issues.push(ParseIssue {
                        line,
                        message: format!(
                            "expected {} fields, found {}",
                            headers.len(),
                            row.len()
                        ),
                    });
                    continue;
                }
                let mut raw = RawRecord::new();
                for (key, value) in headers.iter().zip(row.iter()) {
                    raw.insert(key.clone(), Value::String(value.to_string()));
                }
                records.push(raw);
            }
            Err(e) => {
                if let csv::ErrorKind::Io(_) = e.kind() {
                    return Err(map_csv_error(e));
                }
                let line = e
                    .position()
                    .map(|p| p.line() as usize)
                    .unwrap_or(records.len() + 2);
                issues.push(ParseIssue {
                    line,
                    message: e.to_string(),
                });
            }
        }
    }
    Ok((records, issues))
}

fn map_csv_error(e: csv::Error) -> CorpusError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CorpusError::UnreadableSource(io),
        other => CorpusError::MalformedRecord {
            line: 1,
            message: format!("{other:?}"),
        },
    }
}

/// Normalizes one raw record into a [`PatentRecord`], or rejects it.
/// `ingestion_date` bounds the application date: later dates are inconsistent.
pub fn normalize_record(raw: &RawRecord, ingestion_date: NaiveDate) -> Normalized {
    let reject = |reason| {
        Normalized::Rejected(RejectedRecord {
            raw_payload: serde_json::to_string(raw).unwrap_or_default(),
            reason,
        })
    };

    let application_number = match raw_str(raw, "application_number") {
        Some(s) if !s.trim().is_empty() => s.trim().to_string(),
        _ => return reject(RejectReason::MissingRequiredField),
    };
    let title = match raw_str(raw, "title").map(|s| clean_text(&s)) {
        Some(t) if !t.is_empty() => t,
        _ => return reject(RejectReason::MissingRequiredField),
    };
    let application_date = match raw_str(raw, "application_date") {
        Some(s) if !s.trim().is_empty() => match parse_flexible_date(&s) {
            Some(d) if d > ingestion_date => return reject(RejectReason::Inconsistent),
            Some(d) => d,
            None => return reject(RejectReason::InvalidDate),
        },
        _ => return reject(RejectReason::MissingRequiredField),
    };

    let abstract_text = raw_str(raw, "abstract")
        .map(|s| clean_text(&s))
        .unwrap_or_default();
    let status = raw_str(raw, "status")
        .map(|s| s.trim().to_lowercase())
        .unwrap_or_default();
    let field_of_invention = raw_str(raw, "field_of_invention")
        .map(|s| s.trim().to_lowercase())
        .unwrap_or_default();
    let publication_number = raw_str(raw, "publication_number").and_then(non_empty);
    let publication_type = raw_str(raw, "publication_type").and_then(non_empty);
    let background = raw_str(raw, "background")
        .map(|s| clean_text(&s))
        .and_then(non_empty);
    let ipc_codes = raw_list(raw, "ipc_codes")
        .iter()
        .map(|c| normalize_ipc(c))
        .filter(|c| is_normalized_ipc(c))
        .collect();
    let inventors = raw_list(raw, "inventors")
        .iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();

    Normalized::Accepted(PatentRecord {
        application_number,
        title,
        abstract_text,
        application_date,
        status,
        publication_number,
        publication_type,
        field_of_invention,
        ipc_codes,
        inventors,
        background,
    })
}

/// Bulk normalization; record order is preserved in both outputs.
pub fn normalize_records(
    raws: &[RawRecord],
    ingestion_date: NaiveDate,
) -> (Vec<PatentRecord>, Vec<RejectedRecord>) {
    #[cfg(feature = "parallel")]
    let outcomes: Vec<Normalized> = {
        use rayon::prelude::*;
        raws.par_iter()
            .map(|raw| normalize_record(raw, ingestion_date))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Normalized> = raws
        .iter()
        .map(|raw| normalize_record(raw, ingestion_date))
        .collect();

    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for outcome in outcomes {
        match outcome {
            Normalized::Accepted(r) => accepted.push(r),
            Normalized::Rejected(r) => rejected.push(r),
        }
    }
    (accepted, rejected)
}

fn raw_str(raw: &RawRecord, key: &str) -> Option<String> {
    match raw.get(key)? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn raw_list(raw: &RawRecord, key: &str) -> Vec<String> {
    match raw.get(key) {
        Some(Value::Array(items)) => items
            .iter()
            .filter_map(|v| match v {
                Value::String(s) => Some(s.clone()),
                Value::Number(n) => Some(n.to_string()),
                _ => None,
            })
            .collect(),
        Some(Value::String(s)) => s.split(';').map(|p| p.to_string()).collect(),
        _ => Vec::new(),
    }
}

fn non_empty(s: String) -> Option<String> {
    let t = s.trim();
    if t.is_empty() {
        None
    } else {
        Some(t.to_string())
    }
}

/// Trims and collapses runs of a repeated punctuation character to one.
fn clean_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut prev: Option<char> = None;
    for ch in s.trim().chars() {
        if ch.is_ascii_punctuation() && prev == Some(ch) {
            continue;
        }
        out.push(ch);
        prev = Some(ch);
    }
    out
}

fn normalize_ipc(code: &str) -> String {
    code.chars()
        .filter(|c| !c.is_whitespace())
        .flat_map(|c| c.to_uppercase())
        .collect()
}

/// Checks the normalized IPC shape: one letter A-H, two digits, one letter,
/// digits, '/', digits (e.g. G06F16/33).
pub fn is_normalized_ipc(code: &str) -> bool {
    let bytes = code.as_bytes();
    if bytes.len() < 7 {
        return false;
    }
    if !(b'A'..=b'H').contains(&bytes[0]) {
        return false;
    }
    if !bytes[1].is_ascii_digit() || !bytes[2].is_ascii_digit() {
        return false;
    }
    if !bytes[3].is_ascii_uppercase() {
        return false;
    }
    let rest = &code[4..];
    let Some(slash) = rest.find('/') else {
        return false;
    };
    let (group, sub) = rest.split_at(slash);
    let sub = &sub[1..];
    !group.is_empty()
        && !sub.is_empty()
        && group.bytes().all(|b| b.is_ascii_digit())
        && sub.bytes().all(|b| b.is_ascii_digit())
}

fn parse_flexible_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    for fmt in ["%Y-%m-%d", "%m/%d/%Y", "%d.%m.%Y"] {
        if let Ok(d) = NaiveDate::parse_from_str(s, fmt) {
            return Some(d);
        }
    }
    None
}

/// Keeps the first occurrence of each application number, in input order;
/// later occurrences are rejected as duplicates.
pub fn deduplicate(records: Vec<PatentRecord>) -> (Vec<PatentRecord>, Vec<RejectedRecord>) {
    let mut seen = HashSet::new();
    let mut kept = Vec::with_capacity(records.len());
    let mut rejected = Vec::new();
    for record in records {
        if seen.insert(record.application_number.clone()) {
            kept.push(record);
        } else {
            rejected.push(RejectedRecord {
                raw_payload: serde_json::to_string(&record).unwrap_or_default(),
                reason: RejectReason::DuplicateKey,
            });
        }
    }
    (kept, rejected)
}

/// Splits records into train/validation/test per stratum (field of invention),
/// shuffled by a PRNG seeded from `(seed, stratum)`. Remainders go to train
/// first, then validation, so per-stratum counts stay within one record of the
/// exact proportions.
pub fn stratified_split(
    records: &[PatentRecord],
    ratios: (u32, u32, u32),
    seed: u64,
) -> Result<CorpusSplit, CorpusError> {
    if records.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    if ratios.0 == 0 || ratios.1 == 0 || ratios.2 == 0 {
        return Err(CorpusError::InvalidRatios);
    }

    let mut strata: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for record in records {
        strata
            .entry(record.field_of_invention.as_str())
            .or_default()
            .push(record.application_number.as_str());
    }

    let total = u64::from(ratios.0 + ratios.1 + ratios.2);
    let mut train_ids = Vec::new();
    let mut validation_ids = Vec::new();
    let mut test_ids = Vec::new();
    for (stratum, mut ids) in strata {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stratum));
        ids.shuffle(&mut rng);

        let n = ids.len() as u64;
        let mut counts = [
            n * u64::from(ratios.0) / total,
            n * u64::from(ratios.1) / total,
            n * u64::from(ratios.2) / total,
        ];
        let mut remainder = n - counts.iter().sum::<u64>();
        for count in counts.iter_mut() {
            if remainder == 0 {
                break;
            }
            *count += 1;
            remainder -= 1;
        }

        let (train_n, val_n) = (counts[0] as usize, counts[1] as usize);
        for (i, id) in ids.into_iter().enumerate() {
            if i < train_n {
                train_ids.push(id.to_string());
            } else if i < train_n + val_n {
                validation_ids.push(id.to_string());
            } else {
                test_ids.push(id.to_string());
            }
        }
    }

    Ok(CorpusSplit {
        train_ids,
        validation_ids,
        test_ids,
        seed,
        ratios,
    })
}

/// Renders the embedding input for one record: labeled TITLE / ABSTRACT /
/// DOMAIN lines, plus BACKGROUND when present.
pub fn compose_document_text(record: &PatentRecord) -> String {
    let mut text = format!(
        "TITLE: {}\nABSTRACT: {}\nDOMAIN: {}",
        record.title, record.abstract_text, record.field_of_invention
    );
    if let Some(background) = &record.background {
        text.push_str("\nBACKGROUND: ");
        text.push_str(background);
    }
    text
}

pub fn write_corpus_jsonl<W: Write>(mut w: W, records: &[PatentRecord]) -> std::io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut w, record)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_corpus_jsonl<R: Read>(r: R) -> Result<Vec<PatentRecord>, CorpusError> {
    let reader = BufReader::new(r);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PatentRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
                line: idx + 1,
                message: e.to_string(),
            })?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_rejections_jsonl<W: Write>(
    mut w: W,
    rejected: &[RejectedRecord],
) -> std::io::Result<()> {
    for record in rejected {
        serde_json::to_writer(&mut w, record)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
