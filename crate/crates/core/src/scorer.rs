//! Featurized linear scoring model.
//!
//! A program's score is the sum of its actions' feature weights plus a
//! learned weight on the recall feature. Feature ids are readable strings:
//!
//! - `act=<kind>`: action-kind indicator;
//! - `act=<kind>|col_exact`, `|col_overlap`: every / some token of the
//!   referenced column name occurs in the question;
//! - `act=<kind>|col_related`: some question token occurs in a cell of the
//!   referenced column;
//! - `act=<kind>|val_exact`, `|val_overlap`: same tests on a condition literal;
//! - `q=<token>|act=<kind>`: question word conjoined with an operator kind;
//! - `recall`: share of question tokens found in the table that the program
//!   does not mention.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::dsl::{Action, ActionKind, CondOp, ProgramState};
use crate::error::{Error, Result};
use crate::table::Table;
use crate::text::{format_number, is_keyword, tokenize};

pub const RECALL: &str = "recall";

/// Sparse feature vector; stored entries are finite and non-zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureVector(BTreeMap<String, f64>);

impl FeatureVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, id: &str, value: f64) {
        if value == 0.0 {
            return;
        }
        let slot = self.0.entry(id.to_string()).or_insert(0.0);
        *slot += value;
        if *slot == 0.0 {
            self.0.remove(id);
        }
    }

    pub fn add_scaled(&mut self, other: &FeatureVector, scale: f64) {
        for (k, v) in &other.0 {
            self.add(k, v * scale);
        }
    }

    pub fn get(&self, id: &str) -> f64 {
        self.0.get(id).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.values().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.0.values_mut() {
            *v *= s;
        }
        self.0.retain(|_, v| *v != 0.0);
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for FeatureVector {
    fn from_iter<I: IntoIterator<Item = (S, f64)>>(iter: I) -> Self {
        let mut fv = FeatureVector::new();
        for (k, v) in iter {
            fv.add(&k.into(), v);
        }
        fv
    }
}

/// Model weights θ.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamVector(HashMap<String, f64>);

impl ParamVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: &str) -> f64 {
        self.0.get(id).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, id: &str, value: f64) {
        if value == 0.0 {
            self.0.remove(id);
        } else {
            self.0.insert(id.to_string(), value);
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn dot(&self, fv: &FeatureVector) -> f64 {
        fv.iter().map(|(k, v)| self.get(k) * v).sum()
    }

    pub fn dot_pairs(&self, pairs: &[(String, f64)]) -> f64 {
        pairs.iter().map(|(k, v)| self.get(k) * v).sum()
    }

    /// θ ← θ + lr·delta. Nothing changes if any resulting weight is not finite.
    pub fn apply(&mut self, delta: &FeatureVector, lr: f64) -> Result<(), String> {
        let updates: Vec<(String, f64)> = delta
            .iter()
            .map(|(k, v)| (k.to_string(), self.get(k) + lr * v))
            .collect();
        if let Some((k, _)) = updates.iter().find(|(_, v)| !v.is_finite()) {
            return Err(k.clone());
        }
        for (k, v) in updates {
            self.set(&k, v);
        }
        Ok(())
    }

    /// `feature_id<TAB>weight` lines sorted by id.
    pub fn to_checkpoint(&self) -> String {
        let mut entries: Vec<(&String, &f64)> = self.0.iter().collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        let mut out = String::new();
        for (k, v) in entries {
            let _ = writeln!(out, "{k}\t{v}");
        }
        out
    }

    pub fn from_checkpoint(text: &str, path: &Path) -> Result<ParamVector> {
        let mut params = ParamVector::new();
        for (i, line) in text.lines().enumerate() {
            let perr = |msg: String| Error::Parse {
                path: path.into(),
                line: i + 1,
                msg,
            };
            if line.is_empty() {
                continue;
            }
            let (id, w) = line
                .split_once('\t')
                .ok_or_else(|| perr("expected feature_id<TAB>weight".into()))?;
            let w: f64 = w.parse().map_err(|_| perr(format!("bad weight {w:?}")))?;
            if !w.is_finite() {
                return Err(perr(format!("non-finite weight {w}")));
            }
            if !is_known_feature(id) {
                return Err(Error::FeatureMismatch(id.to_string()));
            }
            params.set(id, w);
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_checkpoint().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ParamVector> {
        let mut text = String::new();
        for line in BufReader::new(std::fs::File::open(path).map_err(|source| Error::Open {
            path: path.into(),
            source,
        })?).lines() {
            text.push_str(&line?);
            text.push('\n');
        }
        Self::from_checkpoint(&text, path)
    }
}

const SURFACE: &[&str] = &["col_exact", "col_overlap", "col_related", "val_exact", "val_overlap"];

fn kind_by_name(name: &str) -> Option<ActionKind> {
    ActionKind::ALL.into_iter().find(|k| k.name() == name)
}

/// Whether `id` is a feature this model can produce.
pub fn is_known_feature(id: &str) -> bool {
    if id == RECALL {
        return true;
    }
    if let Some(rest) = id.strip_prefix("act=") {
        return match rest.split_once('|') {
            None => kind_by_name(rest).is_some(),
            Some((k, s)) => kind_by_name(k).is_some() && SURFACE.contains(&s),
        };
    }
    if let Some(rest) = id.strip_prefix("q=") {
        if let Some((tok, act)) = rest.split_once("|act=") {
            return !tok.is_empty()
                && tok.chars().all(|c| c.is_alphanumeric() || c == '.')
                && kind_by_name(act).is_some_and(has_lexical_features);
        }
    }
    false
}

fn has_lexical_features(kind: ActionKind) -> bool {
    !matches!(kind, ActionKind::SelectColumn | ActionKind::Stop)
}

/// Question and table token sets shared by every program scored for one
/// example.
#[derive(Debug, Clone)]
pub struct FeatureContext<'a> {
    pub table: &'a Table,
    pub question: BTreeSet<String>,
    column_tokens: Vec<BTreeSet<String>>,
    column_cell_tokens: Vec<BTreeSet<String>>,
    /// Question tokens that also occur in the table.
    table_mentions: BTreeSet<String>,
}

impl<'a> FeatureContext<'a> {
    pub fn new(table: &'a Table, question_tokens: &[String]) -> Self {
        let question: BTreeSet<String> = question_tokens.iter().cloned().collect();
        let column_tokens: Vec<BTreeSet<String>> =
            table.column_names.iter().map(|n| tokenize(n).into_iter().collect()).collect();
        let column_cell_tokens: Vec<BTreeSet<String>> = (0..table.col_count())
            .map(|c| table.rows().iter().flat_map(|r| tokenize(&r[c].raw)).collect())
            .collect();
        let table_tokens: BTreeSet<&String> =
            column_tokens.iter().chain(&column_cell_tokens).flatten().collect();
        let table_mentions = question.iter().filter(|t| table_tokens.contains(t)).cloned().collect();
        FeatureContext {
            table,
            question,
            column_tokens,
            column_cell_tokens,
            table_mentions,
        }
    }

    fn surface(&self, tokens: &BTreeSet<String>) -> (bool, bool) {
        let hits = tokens.iter().filter(|t| self.question.contains(*t)).count();
        (!tokens.is_empty() && hits == tokens.len(), hits > 0)
    }

    /// Features contributed by one action, independent of the rest of the program.
    pub fn action_features(&self, action: &Action) -> Vec<(String, f64)> {
        let kind = action.kind();
        let k = kind.name();
        let mut out = vec![(format!("act={k}"), 1.0)];
        if let Some(col) = action.column() {
            let (exact, overlap) = self.surface(&self.column_tokens[col]);
            if exact {
                out.push((format!("act={k}|col_exact"), 1.0));
            }
            if overlap {
                out.push((format!("act={k}|col_overlap"), 1.0));
            }
            if self.column_cell_tokens[col].iter().any(|t| self.question.contains(t)) {
                out.push((format!("act={k}|col_related"), 1.0));
            }
        }
        if let Action::Cond(cond) = action {
            let literal = match &cond.op {
                CondOp::Equals(v) | CondOp::NotEquals(v) => Some(tokenize(&v.raw)),
                CondOp::Greater(n) | CondOp::Less(n) => Some(tokenize(&format_number(*n))),
                CondOp::Max | CondOp::Min => None,
            };
            if let Some(toks) = literal {
                let (exact, overlap) = self.surface(&toks.into_iter().collect());
                if exact {
                    out.push((format!("act={k}|val_exact"), 1.0));
                }
                if overlap {
                    out.push((format!("act={k}|val_overlap"), 1.0));
                }
            }
        }
        if has_lexical_features(kind) {
            for q in &self.question {
                out.push((format!("q={q}|act={k}"), 1.0));
            }
        }
        out
    }

    /// Content tokens an action puts into the program text.
    pub fn action_tokens(&self, action: &Action) -> BTreeSet<String> {
        program_tokens_of(action, self.table)
    }

    pub fn recall_from_tokens(&self, program_tokens: &BTreeSet<String>) -> f64 {
        if self.table_mentions.is_empty() {
            return 0.0;
        }
        let missed = self.table_mentions.difference(program_tokens).count();
        missed as f64 / self.table_mentions.len() as f64
    }

    pub fn featurize(&self, state: &ProgramState) -> FeatureVector {
        let mut fv = FeatureVector::new();
        let mut tokens = BTreeSet::new();
        for a in &state.actions {
            for (id, v) in self.action_features(a) {
                fv.add(&id, v);
            }
            tokens.extend(self.action_tokens(a));
        }
        fv.add(RECALL, self.recall_from_tokens(&tokens));
        fv
    }

    pub fn score(&self, state: &ProgramState, params: &ParamVector) -> f64 {
        params.dot(&self.featurize(state))
    }

    /// The model is linear, so the gradient is the feature vector itself.
    pub fn score_gradient(&self, state: &ProgramState) -> FeatureVector {
        self.featurize(state)
    }
}

fn program_tokens_of(action: &Action, table: &Table) -> BTreeSet<String> {
    let mut text = String::new();
    if let Some(c) = action.column() {
        text.push_str(&table.column_names[c]);
        text.push(' ');
    }
    if let Action::Cond(cond) = action {
        match &cond.op {
            CondOp::Equals(v) | CondOp::NotEquals(v) => text.push_str(&v.raw),
            CondOp::Greater(n) | CondOp::Less(n) => text.push_str(&format_number(*n)),
            CondOp::Max | CondOp::Min => {}
        }
    }
    tokenize(&text).into_iter().filter(|t| !is_keyword(t)).collect()
}

/// Distinct non-keyword tokens of a program's canonical text.
pub fn program_tokens(state: &ProgramState, table: &Table) -> BTreeSet<String> {
    state.actions.iter().flat_map(|a| program_tokens_of(a, table)).collect()
}

/// Softmax with max subtraction.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    if scores.is_empty() {
        return Vec::new();
    }
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return vec![1.0 / scores.len() as f64; scores.len()];
    }
    let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// p_θ(y) ∝ exp(score_θ(y)) over a finite program list.
pub fn boltzmann(programs: &[ProgramState], ctx: &FeatureContext<'_>, params: &ParamVector) -> Vec<f64> {
    let scores: Vec<f64> = programs.iter().map(|p| ctx.score(p, params)).collect();
    softmax(&scores)
}
