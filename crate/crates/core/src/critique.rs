//! Critique policy: a prior over programs from surface-form match and
//! lexicon co-occurrence, and policy shaping with it.

use std::collections::BTreeSet;
use std::path::Path;

use crate::dsl::{ActionKind, ProgramState};
use crate::error::{Error, Result};
use crate::scorer::{program_tokens, softmax};
use crate::table::Table;
use crate::text::tokenize;

const DEFAULT_LEXICON: &str = include_str!("../data/lexicon.tsv");

/// Keywords a lexicon pair may point at.
pub const LEXICON_KEYWORDS: &[&str] = &["SELECT", "WHERE", "=", "!=", ">", "<", "MAX", "MIN", "OR", "FOLLOWUP", "FPCELL"];

/// Token → program keyword pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    pairs: Vec<(String, String)>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn default_pairs() -> Self {
        Self::parse(DEFAULT_LEXICON, Path::new("<built-in lexicon>")).expect("built-in lexicon parses")
    }

    /// Adds a pair; the token goes through the shared tokenizer. Duplicate
    /// pairs are ignored.
    pub fn add(&mut self, token: &str, keyword: &str) -> Result<(), String> {
        let toks = tokenize(token);
        if toks.len() != 1 {
            return Err(format!("lexicon token {token:?} must be a single token"));
        }
        if !LEXICON_KEYWORDS.contains(&keyword) {
            return Err(format!("unknown program keyword {keyword:?}"));
        }
        let pair = (toks[0].clone(), keyword.to_string());
        if !self.pairs.contains(&pair) {
            self.pairs.push(pair);
        }
        Ok(())
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lex = Lexicon::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let perr = |msg: String| Error::Parse {
                path: path.into(),
                line: i + 1,
                msg,
            };
            let (tok, kw) = line
                .split_once('\t')
                .ok_or_else(|| perr("expected token<TAB>KEYWORD".into()))?;
            lex.add(tok.trim(), kw.trim()).map_err(perr)?;
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Open {
            path: path.into(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }
}

/// Keywords present in a program.
pub fn program_keywords(state: &ProgramState) -> BTreeSet<&'static str> {
    let mut kws = BTreeSet::new();
    for a in &state.actions {
        let kind = a.kind();
        if kind != ActionKind::Stop {
            kws.insert(kind.keyword());
        }
        if matches!(a, crate::dsl::Action::Cond(_)) {
            kws.insert("WHERE");
        }
    }
    kws
}

/// Share of the program's distinct content tokens that occur in the question.
pub fn match_score(question: &BTreeSet<String>, program_tokens: &BTreeSet<String>) -> f64 {
    if program_tokens.is_empty() {
        return 0.0;
    }
    let hits = program_tokens.iter().filter(|t| question.contains(*t)).count();
    hits as f64 / program_tokens.len() as f64
}

/// Number of lexicon pairs whose token is in the question and whose keyword
/// is in the program.
pub fn co_occur_score(question: &BTreeSet<String>, keywords: &BTreeSet<&str>, lexicon: &Lexicon) -> usize {
    lexicon
        .pairs
        .iter()
        .filter(|(w, kw)| question.contains(w) && keywords.contains(kw.as_str()))
        .count()
}

/// Scores programs for one question.
#[derive(Debug, Clone)]
pub struct Critic<'a> {
    pub lexicon: &'a Lexicon,
    pub question: BTreeSet<String>,
}

impl<'a> Critic<'a> {
    pub fn new(lexicon: &'a Lexicon, question_tokens: &[String]) -> Self {
        Critic {
            lexicon,
            question: question_tokens.iter().cloned().collect(),
        }
    }

    pub fn critique_parts(&self, tokens: &BTreeSet<String>, keywords: &BTreeSet<&str>) -> f64 {
        match_score(&self.question, tokens) + co_occur_score(&self.question, keywords, self.lexicon) as f64
    }

    /// match + co_occur.
    pub fn critique(&self, state: &ProgramState, table: &Table) -> f64 {
        self.critique_parts(&program_tokens(state, table), &program_keywords(state))
    }

    /// p_c(y) ∝ exp(η · critique(y)).
    pub fn policy(&self, programs: &[ProgramState], table: &Table, eta: f64) -> Vec<f64> {
        let scores: Vec<f64> = programs.iter().map(|p| eta * self.critique(p, table)).collect();
        softmax(&scores)
    }
}

/// p(y) ∝ behavior(y) · critique(y) over a shared support.
pub fn shape(behavior: &[f64], critique: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(behavior.len(), critique.len(), "shape: supports differ");
    let prod: Vec<f64> = behavior.iter().zip(critique).map(|(b, c)| b * c).collect();
    let z: f64 = prod.iter().sum();
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::DegenerateShapedPolicy);
    }
    Ok(prod.into_iter().map(|p| p / z).collect())
}
