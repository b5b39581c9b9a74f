//! Tab-separated input tables and CSV output.
//!
//! Input tables carry a header row. Columns are located by name, so extra
//! columns are ignored and order does not matter.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::pipeline::{
    DependencyRecord, FrequencyLexicon, RtObservation, RtRow, SurprisalEntry, SurprisalTable,
};
use crate::{Error, Result};

fn tsv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn read_rows<T: DeserializeOwned, R: Read>(table: &str, input: R) -> Result<Vec<T>> {
    let mut rdr = tsv_reader(input);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize().enumerate() {
        out.push(row.map_err(|e| Error::Table {
            table: table.to_string(),
            // header is line 1
            row: i + 2,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Deserialize)]
struct SurprisalRow {
    #[serde(default)]
    doc_id: String,
    sent_id: String,
    token_index: usize,
    form: String,
    surprisal_bits: f64,
}

/// Columns `doc_id` (optional), `sent_id`, `token_index`, `form`,
/// `surprisal_bits`.
pub fn read_surprisal_table<R: Read>(input: R) -> Result<SurprisalTable> {
    let mut table = SurprisalTable::new();
    for row in read_rows::<SurprisalRow, _>("surprisal", input)? {
        table.insert(
            &row.sent_id,
            row.token_index,
            SurprisalEntry {
                doc_id: row.doc_id,
                form: row.form,
                surprisal_bits: row.surprisal_bits,
            },
        )?;
    }
    Ok(table)
}

#[derive(Deserialize)]
struct FrequencyRow {
    form: String,
    log_frequency: f64,
}

/// Columns `form`, `log_frequency`.
pub fn read_frequency_lexicon<R: Read>(input: R) -> Result<FrequencyLexicon> {
    let rows = read_rows::<FrequencyRow, _>("frequency", input)?;
    for (i, r) in rows.iter().enumerate() {
        if !r.log_frequency.is_finite() {
            return Err(Error::Table {
                table: "frequency".into(),
                row: i + 2,
                message: format!("log frequency {} is not finite", r.log_frequency),
            });
        }
    }
    Ok(rows.into_iter().map(|r| (r.form, r.log_frequency)).collect())
}

/// Columns `participant`, `sent_id`, `token_index`, `rt_ms`.
pub fn read_reading_times<R: Read>(input: R) -> Result<Vec<RtObservation>> {
    read_rows("reading_times", input)
}

/// Header row of the dependency records CSV.
pub const DEPENDENCY_COLUMNS: &[&str] = &[
    "doc_id",
    "sent_id",
    "relation",
    "relation_class",
    "antecedent_index",
    "retrieval_index",
    "antecedent_token",
    "retrieval_token",
    "antecedent_form",
    "retrieval_form",
    "head_is_antecedent",
    "L_O",
    "L_I",
    "antecedent_surprisal_bits",
    "antecedent_log_frequency",
    "frequency_fallback",
    "sentence_position",
    "antecedent_position",
    "sentence_length",
    "baseline_surprisal_bits",
];

/// Header row of the reading-time CSV.
pub const RT_COLUMNS: &[&str] = &[
    "participant",
    "region",
    "rt_ms",
    "log_rt",
    "dependency_id",
    "doc_id",
    "sent_id",
    "relation",
    "relation_class",
    "word_index",
    "word_form",
    "word_length",
    "word_surprisal_bits",
    "prev1_surprisal_bits",
    "prev2_surprisal_bits",
    "word_log_frequency",
    "prev1_log_frequency",
    "prev2_log_frequency",
    "L_O",
    "L_I",
    "antecedent_surprisal_bits",
    "antecedent_log_frequency",
    "sentence_position",
    "antecedent_position",
    "sentence_length",
];

/// The header is written even when there are no rows.
fn write_csv<T: Serialize, W: Write>(header: &[&str], rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dependency_records<W: Write>(records: &[DependencyRecord], out: W) -> Result<()> {
    write_csv(DEPENDENCY_COLUMNS, records, out)
}

pub fn read_dependency_records<R: Read>(input: R) -> Result<Vec<DependencyRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Table {
                table: "dependencies".into(),
                row: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_rt_rows<W: Write>(rows: &[RtRow], out: W) -> Result<()> {
    write_csv(RT_COLUMNS, rows, out)
}

pub fn read_rt_rows<R: Read>(input: R) -> Result<Vec<RtRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Table {
                table: "rt_table".into(),
                row: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}
