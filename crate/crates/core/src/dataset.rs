//! Question sequences in the SQA-style TSV layout.
//!
//! Columns: `id, annotator, position, question, table_file,
//! answer_coordinates, answer_text`. List-valued fields use the Python list
//! literal style of the original release, e.g. `['England', 'Wales']` and
//! `['(0, 1)', '(3, 1)']`. A bare `answer_text` value is read as a single
//! answer.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::table::{load_table, write_table, AnswerSet, Table};
use crate::text::tokenize;

pub const TSV_HEADER: [&str; 7] = [
    "id",
    "annotator",
    "position",
    "question",
    "table_file",
    "answer_coordinates",
    "answer_text",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub sequence_id: String,
    pub annotator: u32,
    pub position: usize,
    pub question: String,
    pub tokens: Vec<String>,
    pub table_ref: String,
    pub answer_coordinates: Vec<(usize, usize)>,
    pub answer_text: Vec<String>,
    pub gold: AnswerSet,
}

impl Example {
    pub fn new(
        sequence_id: impl Into<String>,
        position: usize,
        question: impl Into<String>,
        table_ref: impl Into<String>,
        answer_text: Vec<String>,
    ) -> Self {
        let question = question.into();
        let gold = answer_text.iter().collect();
        Example {
            sequence_id: sequence_id.into(),
            annotator: 0,
            position,
            tokens: tokenize(&question),
            question,
            table_ref: table_ref.into(),
            answer_coordinates: Vec::new(),
            answer_text,
            gold,
        }
    }

    /// Stable identifier used in logs and error messages.
    pub fn key(&self) -> String {
        format!("{}#{}@{}", self.sequence_id, self.annotator, self.position)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub id: String,
    pub annotator: u32,
    pub examples: Vec<Example>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub tables: BTreeMap<String, Table>,
    pub sequences: Vec<Sequence>,
}

impl Dataset {
    pub fn table(&self, example: &Example) -> &Table {
        &self.tables[&example.table_ref]
    }

    pub fn num_examples(&self) -> usize {
        self.sequences.iter().map(|s| s.examples.len()).sum()
    }

    pub fn examples(&self) -> impl Iterator<Item = &Example> {
        self.sequences.iter().flat_map(|s| s.examples.iter())
    }

    /// Keeps only the given sequences (by index); tables are shared.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            tables: self.tables.clone(),
            sequences: indices.iter().map(|&i| self.sequences[i].clone()).collect(),
        }
    }

    /// Splits by sequence so no sequence straddles train and dev.
    pub fn split_by_sequence(&self, dev_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut idx: Vec<usize> = (0..self.sequences.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_dev = ((self.sequences.len() as f64) * dev_fraction).round() as usize;
        let n_dev = n_dev.min(self.sequences.len().saturating_sub(1));
        let (dev, train) = idx.split_at(n_dev);
        let mut train = train.to_vec();
        let mut dev = dev.to_vec();
        train.sort_unstable();
        dev.sort_unstable();
        (self.subset(&train), self.subset(&dev))
    }
}

pub fn load_dataset(questions: &Path, tables_dir: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .has_headers(true)
        .from_reader(std::fs::File::open(questions).map_err(|source| Error::Open {
            path: questions.into(),
            source,
        })?);
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| Error::Parse {
            path: questions.into(),
            line: 1,
            msg: format!("missing column {name:?}"),
        })
    };
    let cols: Vec<usize> = TSV_HEADER.iter().map(|c| col(c)).collect::<Result<_>>()?;

    let mut order: Vec<(String, u32)> = Vec::new();
    let mut grouped: BTreeMap<(String, u32), Vec<Example>> = BTreeMap::new();
    let mut tables = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let perr = |msg: String| Error::Parse {
            path: questions.into(),
            line,
            msg,
        };
        let field = |k: usize| rec.get(cols[k]).unwrap_or("").trim();
        let annotator = field(1)
            .parse::<u32>()
            .map_err(|_| perr(format!("bad annotator {:?}", field(1))))?;
        let position = field(2)
            .parse::<usize>()
            .map_err(|_| perr(format!("bad position {:?}", field(2))))?;
        let answer_coordinates = parse_coordinates(field(5)).map_err(&perr)?;
        let answer_text = parse_answer_text(field(6)).map_err(&perr)?;
        let mut ex = Example::new(field(0), position, field(3), field(4), answer_text);
        ex.annotator = annotator;
        ex.answer_coordinates = answer_coordinates;

        if !tables.contains_key(&ex.table_ref) {
            let path: PathBuf = tables_dir.join(&ex.table_ref);
            let table = load_table(&path)?;
            tables.insert(ex.table_ref.clone(), table);
        }
        let key = (ex.sequence_id.clone(), annotator);
        if !grouped.contains_key(&key) {
            order.push(key.clone());
        }
        grouped.entry(key).or_default().push(ex);
    }

    let mut sequences = Vec::with_capacity(order.len());
    for key in order {
        let mut examples = grouped.remove(&key).unwrap_or_default();
        examples.sort_by_key(|e| e.position);
        let positions: Vec<usize> = examples.iter().map(|e| e.position).collect();
        if positions.iter().enumerate().any(|(i, &p)| p != i) {
            return Err(Error::PositionGap {
                sequence: format!("{}#{}", key.0, key.1),
                found: positions,
            });
        }
        sequences.push(Sequence {
            id: key.0,
            annotator: key.1,
            examples,
        });
    }
    Ok(Dataset { tables, sequences })
}

/// Writes the question file and every table (under `tables_dir`, at each
/// example's `table_ref`).
pub fn write_dataset(dataset: &Dataset, questions: &Path, tables_dir: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .quote_style(csv::QuoteStyle::Never)
        .from_path(questions)?;
    w.write_record(TSV_HEADER)?;
    for ex in dataset.examples() {
        for text in [&ex.question, &ex.table_ref] {
            if text.contains(['\t', '\n', '\r']) {
                return Err(Error::Config(format!(
                    "{}: field contains a tab or newline: {text:?}",
                    ex.key()
                )));
            }
        }
        w.write_record([
            ex.sequence_id.clone(),
            ex.annotator.to_string(),
            ex.position.to_string(),
            ex.question.clone(),
            ex.table_ref.clone(),
            format_list(ex.answer_coordinates.iter().map(|(r, c)| format!("({r}, {c})"))),
            format_list(ex.answer_text.iter().cloned()),
        ])?;
    }
    w.flush()?;
    for (name, table) in &dataset.tables {
        let path = tables_dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        write_table(table, &path)?;
    }
    Ok(())
}

fn format_list(items: impl Iterator<Item = String>) -> String {
    let quoted: Vec<String> = items
        .map(|s| format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'")))
        .collect();
    format!("[{}]", quoted.join(", "))
}

/// Parses a Python-style list of quoted strings.
fn parse_list(s: &str) -> Result<Vec<String>, String> {
    let inner = s
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| format!("expected a bracketed list, got {s:?}"))?;
    let mut out = Vec::new();
    let mut chars = inner.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace() || *c == ',') {
            chars.next();
        }
        let Some(quote) = chars.next() else { break };
        if quote != '\'' && quote != '"' {
            return Err(format!("expected a quoted item in {s:?}"));
        }
        let mut item = String::new();
        loop {
            match chars.next() {
                Some('\\') => match chars.next() {
                    Some(c) => item.push(c),
                    None => return Err(format!("dangling escape in {s:?}")),
                },
                Some(c) if c == quote => break,
                Some(c) => item.push(c),
                None => return Err(format!("unterminated item in {s:?}")),
            }
        }
        out.push(item);
    }
    Ok(out)
}

fn parse_answer_text(s: &str) -> Result<Vec<String>, String> {
    if s.starts_with('[') {
        parse_list(s)
    } else if s.is_empty() {
        Ok(Vec::new())
    } else {
        Ok(vec![s.to_string()])
    }
}

fn parse_coordinates(s: &str) -> Result<Vec<(usize, usize)>, String> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    parse_list(s)?
        .iter()
        .map(|item| {
            let body = item
                .trim()
                .strip_prefix('(')
                .and_then(|r| r.strip_suffix(')'))
                .ok_or_else(|| format!("bad coordinate {item:?}"))?;
            let mut parts = body.split(',').map(|p| p.trim().parse::<usize>());
            match (parts.next(), parts.next(), parts.next()) {
                (Some(Ok(r)), Some(Ok(c)), None) => Ok((r, c)),
                _ => Err(format!("bad coordinate {item:?}")),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_fields() {
        assert_eq!(parse_answer_text("England").unwrap(), vec!["England"]);
        assert_eq!(
            parse_answer_text("['a', \"b's\", 'c\\'d']").unwrap(),
            vec!["a", "b's", "c'd"]
        );
        assert_eq!(parse_coordinates("['(0, 1)', '(2, 3)']").unwrap(), vec![(0, 1), (2, 3)]);
        assert!(parse_answer_text("['unterminated").is_err());
        assert!(parse_coordinates("['(0 1)']").is_err());
        let formatted = format_list(["it's".to_string(), "a\\b".to_string()].into_iter());
        assert_eq!(parse_list(&formatted).unwrap(), vec!["it's", "a\\b"]);
    }
}
