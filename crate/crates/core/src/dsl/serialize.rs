//! Canonical one-line program text.
//!
//! ```text
//! SELECT Club WHERE Losses > 21
//! SELECT Population WHERE Name = China OR Name = USA
//! FOLLOWUP WHERE Bronze IS MAX
//! FPCELL Name
//! SELECT Club WHERE Losses > 21 ...        (incomplete state)
//! ```
//!
//! Names and values are written bare unless they would be ambiguous (empty,
//! irregular whitespace, a quote, or a word that is a keyword or operator),
//! in which case they are double-quoted with `\"` and `\\` escapes.

use super::{Action, CondOp, Condition, Literal, ProgramState};
use crate::error::{Error, Result};
use crate::table::Table;
use crate::text::{format_number, parse_number};

const RESERVED: &[&str] = &[
    "SELECT", "WHERE", "OR", "FOLLOWUP", "FPCELL", "IS", "MAX", "MIN", "=", "!=", ">", "<", "...",
];

const ELLIPSIS: &str = "...";

fn needs_quotes(s: &str) -> bool {
    s.is_empty()
        || s.contains('"')
        || s.split(' ').any(|w| w.is_empty() || RESERVED.contains(&w))
        || s.chars().any(|c| c.is_whitespace() && c != ' ')
}

fn quote(s: &str) -> String {
    if needs_quotes(s) {
        format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
    } else {
        s.to_string()
    }
}

impl ProgramState {
    /// Renders the canonical text. Incomplete states end in `...` so the
    /// rendering is injective over states.
    pub fn render(&self, table: &Table) -> String {
        let col = |c: usize| quote(&table.column_names[c]);
        let mut out: Vec<String> = Vec::new();
        let mut after_or = false;
        for a in &self.actions {
            match a {
                Action::Select(c) => out.push(format!("SELECT {}", col(*c))),
                Action::FollowUpWhere => out.push("FOLLOWUP".into()),
                Action::FpCell(c) => out.push(format!("FPCELL {}", col(*c))),
                Action::Or => {
                    out.push("OR".into());
                    after_or = true;
                }
                Action::Cond(cond) => {
                    if !after_or {
                        out.push("WHERE".into());
                    }
                    after_or = false;
                    out.push(col(cond.column));
                    out.push(match &cond.op {
                        CondOp::Equals(v) => format!("= {}", quote(&v.raw)),
                        CondOp::NotEquals(v) => format!("!= {}", quote(&v.raw)),
                        CondOp::Greater(n) => format!("> {}", format_number(*n)),
                        CondOp::Less(n) => format!("< {}", format_number(*n)),
                        CondOp::Max => "IS MAX".into(),
                        CondOp::Min => "IS MIN".into(),
                    });
                }
                Action::Stop => {}
            }
        }
        if !self.complete {
            out.push(ELLIPSIS.into());
        }
        out.join(" ")
    }
}

#[derive(Debug, PartialEq)]
enum Tok {
    Word(String),
    Quoted(String),
}

fn lex(text: &str) -> Result<Vec<Tok>, String> {
    let mut toks = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c == ' ' {
            chars.next();
        } else if c == '"' {
            chars.next();
            let mut s = String::new();
            loop {
                match chars.next() {
                    Some('\\') => s.push(chars.next().ok_or("dangling escape")?),
                    Some('"') => break,
                    Some(c) => s.push(c),
                    None => return Err("unterminated quote".into()),
                }
            }
            toks.push(Tok::Quoted(s));
        } else {
            let mut s = String::new();
            while let Some(&c) = chars.peek() {
                if c == ' ' {
                    break;
                }
                s.push(c);
                chars.next();
            }
            toks.push(Tok::Word(s));
        }
    }
    Ok(toks)
}

struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    table: &'a Table,
}

impl Parser<'_> {
    fn peek_word(&self) -> Option<&str> {
        match self.toks.get(self.pos) {
            Some(Tok::Word(w)) => Some(w),
            _ => None,
        }
    }

    fn eat(&mut self, word: &str) -> bool {
        if self.peek_word() == Some(word) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    /// A quoted token, or bare words up to the next reserved word.
    fn phrase(&mut self, what: &str) -> Result<String, String> {
        if let Some(Tok::Quoted(s)) = self.toks.get(self.pos) {
            self.pos += 1;
            return Ok(s.clone());
        }
        let mut words = Vec::new();
        while let Some(w) = self.peek_word() {
            if RESERVED.contains(&w) {
                break;
            }
            words.push(w.to_string());
            self.pos += 1;
        }
        if words.is_empty() {
            return Err(format!("expected {what}"));
        }
        Ok(words.join(" "))
    }

    fn column(&mut self) -> Result<usize, String> {
        let name = self.phrase("a column name")?;
        self.table
            .column_index(&name)
            .ok_or_else(|| format!("unknown column {name:?}"))
    }

    fn number(&mut self) -> Result<f64, String> {
        let s = self.phrase("a number")?;
        parse_number(&s).ok_or_else(|| format!("not a number: {s:?}"))
    }

    fn condition(&mut self) -> Result<Condition, String> {
        let column = self.column()?;
        let op = match self.peek_word() {
            Some("=") => {
                self.pos += 1;
                CondOp::Equals(Literal::new(self.phrase("a value")?))
            }
            Some("!=") => {
                self.pos += 1;
                CondOp::NotEquals(Literal::new(self.phrase("a value")?))
            }
            Some(">") => {
                self.pos += 1;
                CondOp::Greater(self.number()?)
            }
            Some("<") => {
                self.pos += 1;
                CondOp::Less(self.number()?)
            }
            Some("IS") => {
                self.pos += 1;
                if self.eat("MAX") {
                    CondOp::Max
                } else if self.eat("MIN") {
                    CondOp::Min
                } else {
                    return Err("expected MAX or MIN after IS".into());
                }
            }
            _ => return Err("expected an operator".into()),
        };
        Ok(Condition { column, op })
    }

    fn program(&mut self) -> Result<ProgramState, String> {
        let mut actions = Vec::new();
        if self.eat("SELECT") {
            actions.push(Action::Select(self.column()?));
        } else if self.eat("FOLLOWUP") {
            actions.push(Action::FollowUpWhere);
        } else if self.eat("FPCELL") {
            actions.push(Action::FpCell(self.column()?));
        }
        loop {
            if self.eat("WHERE") {
                actions.push(Action::Cond(self.condition()?));
            } else if self.eat("OR") {
                actions.push(Action::Or);
                if self.peek_word() == Some(ELLIPSIS) {
                    continue;
                }
                actions.push(Action::Cond(self.condition()?));
            } else {
                break;
            }
        }
        let complete = !self.eat(ELLIPSIS);
        if self.pos != self.toks.len() {
            return Err("trailing text".into());
        }
        if complete {
            if actions.is_empty() {
                return Err("empty program".into());
            }
            actions.push(Action::Stop);
        }
        Ok(ProgramState { actions, complete })
    }
}

/// Parses canonical program text against `table`'s column names. This checks
/// the text grammar only; use [`super::ActionSpace::validate`] for legality.
pub fn parse_program(text: &str, table: &Table) -> Result<ProgramState> {
    let err = |msg: String| Error::ProgramSyntax {
        text: text.to_string(),
        msg,
    };
    let toks = lex(text).map_err(err)?;
    Parser {
        toks,
        pos: 0,
        table,
    }
    .program()
    .map_err(err)
}
