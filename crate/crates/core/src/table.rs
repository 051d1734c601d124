//! In-memory tables, answers and answer comparison.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{normalize_answer, parse_number, tokenize};

/// Header prefix marking a positional column: one whose values describe row
/// position rather than row content, so it stays in place when rows are
/// permuted.
pub const POSITIONAL_MARKER: char = '#';

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub raw: String,
    pub numeric: Option<f64>,
    norm: String,
}

impl Cell {
    pub fn new(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let numeric = parse_number(&raw);
        let norm = normalize_answer(&raw);
        Cell { raw, numeric, norm }
    }

    pub fn normalized(&self) -> &str {
        &self.norm
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub id: String,
    pub column_names: Vec<String>,
    pub positional: Vec<bool>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    /// Builds a table from raw strings. Headers starting with `#` become
    /// positional columns (the marker is not part of the name).
    pub fn from_rows(id: impl Into<String>, header: &[&str], rows: &[Vec<&str>]) -> Result<Self> {
        let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
        let rows: Vec<Vec<String>> = rows
            .iter()
            .map(|r| r.iter().map(|s| s.to_string()).collect())
            .collect();
        Self::build(id.into(), header, rows, Path::new("<memory>"))
    }

    fn build(id: String, header: Vec<String>, rows: Vec<Vec<String>>, path: &Path) -> Result<Self> {
        if header.is_empty() || header.iter().all(|h| h.trim().is_empty()) {
            return Err(Error::NoHeader { path: path.into() });
        }
        let mut column_names = Vec::with_capacity(header.len());
        let mut positional = Vec::with_capacity(header.len());
        let mut seen: Vec<Vec<String>> = Vec::new();
        for h in header {
            let h = h.trim();
            let (name, pos) = match h.strip_prefix(POSITIONAL_MARKER) {
                Some(rest) => (rest.trim().to_string(), true),
                None => (h.to_string(), false),
            };
            let toks = tokenize(&name);
            if seen.contains(&toks) {
                return Err(Error::DuplicateColumn {
                    path: path.into(),
                    name,
                });
            }
            seen.push(toks);
            column_names.push(name);
            positional.push(pos);
        }
        let width = column_names.len();
        let mut cells = Vec::with_capacity(rows.len());
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != width {
                return Err(Error::RaggedRow {
                    path: path.into(),
                    row: i,
                    found: row.len(),
                    expected: width,
                });
            }
            cells.push(row.into_iter().map(Cell::new).collect());
        }
        Ok(Table {
            id,
            column_names,
            positional,
            rows: cells,
        })
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn col_count(&self) -> usize {
        self.column_names.len()
    }

    pub fn cell(&self, row: usize, col: usize) -> &Cell {
        &self.rows[row][col]
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn is_numeric_column(&self, col: usize) -> bool {
        self.rows.iter().any(|r| r[col].numeric.is_some())
    }

    /// Every normalized cell value in the table.
    pub fn values(&self) -> BTreeSet<String> {
        self.rows
            .iter()
            .flatten()
            .map(|c| c.normalized())
            .filter(|v| !v.is_empty())
            .map(str::to_string)
            .collect()
    }

    /// Reorders rows so that new row `i` holds old row `perm[i]`. Positional
    /// columns keep their original values.
    pub fn permute_rows(&self, perm: &[usize]) -> Table {
        assert_eq!(perm.len(), self.row_count(), "permutation length");
        let rows = perm
            .iter()
            .enumerate()
            .map(|(i, &src)| {
                (0..self.col_count())
                    .map(|c| {
                        if self.positional[c] {
                            self.rows[i][c].clone()
                        } else {
                            self.rows[src][c].clone()
                        }
                    })
                    .collect()
            })
            .collect();
        Table {
            id: self.id.clone(),
            column_names: self.column_names.clone(),
            positional: self.positional.clone(),
            rows,
        }
    }

    pub fn header(&self) -> Vec<String> {
        self.column_names
            .iter()
            .zip(&self.positional)
            .map(|(n, &p)| if p { format!("{POSITIONAL_MARKER}{n}") } else { n.clone() })
            .collect()
    }
}

pub fn load_table(path: &Path) -> Result<Table> {
    if !path.exists() {
        return Err(Error::MissingTable(path.into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut records = reader.records();
    let header: Vec<String> = match records.next() {
        Some(rec) => rec?.iter().map(str::to_string).collect(),
        None => return Err(Error::NoHeader { path: path.into() }),
    };
    let mut rows = Vec::new();
    for rec in records {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    let id = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Table::build(id, header, rows, path)
}

pub fn write_table(table: &Table, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(table.header())?;
    for row in table.rows() {
        w.write_record(row.iter().map(|c| c.raw.as_str()))?;
    }
    w.flush()?;
    Ok(())
}

/// A denotation: a set of normalized answer strings.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AnswerSet(BTreeSet<String>);

impl AnswerSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, raw: &str) {
        let v = normalize_answer(raw);
        if !v.is_empty() {
            self.0.insert(v);
        }
    }

    /// Inserts a value that is already normalized (e.g. from [`Cell::normalized`]).
    pub fn insert_normalized(&mut self, norm: &str) {
        if !norm.is_empty() && !self.0.contains(norm) {
            self.0.insert(norm.to_string());
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, normalized: &str) -> bool {
        self.0.contains(normalized)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

impl<S: AsRef<str>> FromIterator<S> for AnswerSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut set = AnswerSet::new();
        for s in iter {
            set.insert(s.as_ref());
        }
        set
    }
}

impl fmt::Display for AnswerSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "}}")
    }
}

/// |a ∩ b| / |a ∪ b|, with two empty sets counting as identical.
pub fn jaccard(a: &AnswerSet, b: &AnswerSet) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.0.intersection(&b.0).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

pub fn exact_match(a: &AnswerSet, b: &AnswerSet) -> bool {
    a == b
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(vals: &[&str]) -> AnswerSet {
        vals.iter().collect()
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(jaccard(&set(&["england"]), &set(&["england"])), 1.0);
        assert!((jaccard(&set(&["a", "b"]), &set(&["b", "c"])) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(jaccard(&set(&[]), &set(&["x"])), 0.0);
        assert_eq!(jaccard(&set(&[]), &set(&[])), 1.0);
    }

    #[test]
    fn exact_match_examples() {
        assert!(exact_match(&set(&["england"]), &set(&["England "])));
        assert!(exact_match(&set(&["a", "b"]), &set(&["b", "a"])));
        assert!(!exact_match(&set(&["a", "b"]), &set(&["a"])));
    }

    #[test]
    fn cells_parse_numbers() {
        assert_eq!(Cell::new("21").numeric, Some(21.0));
        assert_eq!(Cell::new("Karen Andrew").numeric, None);
    }

    #[test]
    fn duplicate_and_ragged_are_rejected() {
        let dup = Table::from_rows("t", &["Name", "name"], &[vec!["a", "b"]]);
        assert!(matches!(dup, Err(Error::DuplicateColumn { .. })));
        let ragged = Table::from_rows("t", &["A", "B"], &[vec!["1", "2"], vec!["3"]]);
        assert!(matches!(ragged, Err(Error::RaggedRow { row: 1, .. })));
    }

    #[test]
    fn positional_columns_stay_put() {
        let t = Table::from_rows("t", &["#Row", "Club"], &[vec!["1", "a"], vec!["2", "b"]]).unwrap();
        assert_eq!(t.column_names, vec!["Row", "Club"]);
        let p = t.permute_rows(&[1, 0]);
        assert_eq!(p.cell(0, 0).raw, "1");
        assert_eq!(p.cell(0, 1).raw, "b");
        assert_eq!(p.header(), vec!["#Row", "Club"]);
    }

    fn answer_set() -> impl Strategy<Value = AnswerSet> {
        proptest::collection::vec("[a-d]", 0..4).prop_map(|v| v.iter().collect())
    }

    proptest! {
        #[test]
        fn jaccard_properties(a in answer_set(), b in answer_set()) {
            let j = jaccard(&a, &b);
            prop_assert!((0.0..=1.0).contains(&j));
            prop_assert_eq!(j, jaccard(&b, &a));
            if !a.is_empty() {
                prop_assert_eq!(jaccard(&a, &a), 1.0);
            }
            if !a.is_empty() || !b.is_empty() {
                prop_assert_eq!(exact_match(&a, &b), j == 1.0);
            }
        }
    }
}
