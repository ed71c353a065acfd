//! Dataset plumbing: duplicate-question TSV files, medical-subset filtering,
//! balanced sampling and QA-pair records.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::entity::{EntityExtractor, MedicalDictionary};
use crate::error::{Error, Result};
use crate::trainer::LabeledPair;

pub const PAIR_COLUMNS: [&str; 6] = ["id", "qid1", "qid2", "question1", "question2", "is_duplicate"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuoraRow {
    pub id: u64,
    pub qid1: u64,
    pub qid2: u64,
    pub question1: String,
    pub question2: String,
    pub is_duplicate: u8,
}

impl QuoraRow {
    pub fn to_labeled(&self) -> LabeledPair {
        LabeledPair {
            q1: self.question1.clone(),
            q2: self.question2.clone(),
            label: self.is_duplicate,
        }
    }
}

/// A rejected input row or line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedPairs {
    pub rows: Vec<QuoraRow>,
    pub errors: Vec<RowError>,
}

fn parse_row(rec: &csv::StringRecord) -> std::result::Result<QuoraRow, String> {
    if rec.len() != PAIR_COLUMNS.len() {
        return Err(format!("expected {} columns, found {}", PAIR_COLUMNS.len(), rec.len()));
    }
    let int = |i: usize| {
        rec[i]
            .trim()
            .parse::<u64>()
            .map_err(|_| format!("{} is not an integer: {:?}", PAIR_COLUMNS[i], &rec[i]))
    };
    let is_duplicate = match rec[5].trim() {
        "0" => 0,
        "1" => 1,
        other => return Err(format!("is_duplicate must be 0 or 1, found {other:?}")),
    };
    Ok(QuoraRow {
        id: int(0)?,
        qid1: int(1)?,
        qid2: int(2)?,
        question1: rec[3].to_owned(),
        question2: rec[4].to_owned(),
        is_duplicate,
    })
}

/// Parse a tab-separated pair file with the six-column header. Bad rows are
/// collected in `errors`; only a missing or wrong header (or an I/O failure)
/// aborts.
pub fn parse_pairs<R: Read>(source: R) -> Result<ParsedPairs> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .flexible(true)
        .has_headers(true)
        .from_reader(source);
    let header = reader.headers().map_err(|e| Error::parse(1, e.to_string()))?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != PAIR_COLUMNS {
        return Err(Error::parse(
            1,
            format!("expected header {:?}, found {:?}", PAIR_COLUMNS.join("\t"), names.join("\t")),
        ));
    }
    let mut out = ParsedPairs::default();
    let mut record = csv::StringRecord::new();
    loop {
        let line = reader.position().line();
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map_or(line, |p| p.line());
                match parse_row(&record) {
                    Ok(row) => out.rows.push(row),
                    Err(message) => out.errors.push(RowError { line, message }),
                }
            }
            Err(e) => match e.kind() {
                csv::ErrorKind::Io(_) => return Err(Error::Io(std::io::Error::other(e.to_string()))),
                _ => out.errors.push(RowError {
                    line,
                    message: e.to_string(),
                }),
            },
        }
    }
    Ok(out)
}

/// Write rows in the format `parse_pairs` reads, quoting only where needed.
pub fn serialize_pairs<W: Write>(rows: &[QuoraRow], out: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    let fail = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
    writer.write_record(PAIR_COLUMNS).map_err(fail)?;
    for r in rows {
        writer
            .write_record([
                r.id.to_string().as_str(),
                &r.qid1.to_string(),
                &r.qid2.to_string(),
                &r.question1,
                &r.question2,
                &r.is_duplicate.to_string(),
            ])
            .map_err(fail)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    /// Number of kept rows each keyword occurred in.
    pub keyword_hits: BTreeMap<String, usize>,
}

/// Keep rows where either question contains a dictionary term.
pub fn filter_medical(rows: &[QuoraRow], extractor: &EntityExtractor) -> (Vec<QuoraRow>, FilterReport) {
    let mut report = FilterReport {
        rows_read: rows.len(),
        ..FilterReport::default()
    };
    let mut kept = Vec::new();
    for row in rows {
        let mut terms: Vec<String> = extractor
            .extract(&row.question1)
            .into_iter()
            .chain(extractor.extract(&row.question2))
            .map(|m| m.term)
            .collect();
        if terms.is_empty() {
            continue;
        }
        terms.sort();
        terms.dedup();
        for t in terms {
            *report.keyword_hits.entry(t).or_default() += 1;
        }
        kept.push(row.clone());
    }
    report.rows_kept = kept.len();
    (kept, report)
}

/// `n / 2` duplicates and `n / 2` non-duplicates drawn with a seeded shuffle,
/// returned in shuffled order.
pub fn sample_balanced(rows: &[QuoraRow], n: usize, seed: u64) -> Result<Vec<QuoraRow>> {
    if !n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("sample size must be even, got {n}")));
    }
    let half = n / 2;
    let mut pos: Vec<&QuoraRow> = rows.iter().filter(|r| r.is_duplicate == 1).collect();
    let mut neg: Vec<&QuoraRow> = rows.iter().filter(|r| r.is_duplicate == 0).collect();
    if pos.len() < half || neg.len() < half {
        return Err(Error::InvalidArgument(format!(
            "need {half} rows of each label, available: {} positive, {} negative",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut out: Vec<QuoraRow> = pos[..half].iter().chain(&neg[..half]).map(|r| (*r).clone()).collect();
    out.shuffle(&mut rng);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceTag {
    Ehealthforum,
    Questiondoctor,
    Webmd,
    Other,
}

impl SourceTag {
    /// Lenient mapping of a site name ("ehealthforumQAs", "questionDoctors", ...).
    pub fn from_site(site: &str) -> SourceTag {
        let s = site.to_lowercase();
        if s.contains("ehealthforum") {
            SourceTag::Ehealthforum
        } else if s.contains("questiondoctor") {
            SourceTag::Questiondoctor
        } else if s.contains("webmd") {
            SourceTag::Webmd
        } else {
            SourceTag::Other
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRecord {
    pub question: String,
    pub answer: String,
    pub tags: Vec<String>,
    pub source_tag: SourceTag,
}

#[derive(Debug, Deserialize)]
struct QaLine {
    question: String,
    answer: String,
    #[serde(default)]
    tags: Vec<String>,
    #[serde(default)]
    source: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadedRecords {
    pub records: Vec<QaRecord>,
    pub errors: Vec<RowError>,
}

impl LoadedRecords {
    pub fn source_counts(&self) -> BTreeMap<SourceTag, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.source_tag).or_default() += 1;
        }
        counts
    }
}

/// Read `{"question", "answer", "tags", "source"}` JSON lines. Malformed
/// lines and records with an empty question or answer go to `errors`.
pub fn load_qa_records<R: BufRead>(source: R) -> Result<LoadedRecords> {
    let mut out = LoadedRecords::default();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i as u64 + 1;
        match serde_json::from_str::<QaLine>(&line) {
            Ok(q) if q.question.trim().is_empty() || q.answer.trim().is_empty() => out.errors.push(RowError {
                line: line_no,
                message: "empty question or answer".into(),
            }),
            Ok(q) => out.records.push(QaRecord {
                question: q.question,
                answer: q.answer,
                tags: q.tags,
                source_tag: q.source.as_deref().map_or(SourceTag::Other, SourceTag::from_site),
            }),
            Err(e) => out.errors.push(RowError {
                line: line_no,
                message: e.to_string(),
            }),
        }
    }
    Ok(out)
}

/// Dictionary terms that also occur as record tags.
pub fn tag_keywords(records: &[QaRecord], dict: &MedicalDictionary) -> MedicalDictionary {
    dict.restricted_to(records.iter().flat_map(|r| r.tags.iter()))
}
