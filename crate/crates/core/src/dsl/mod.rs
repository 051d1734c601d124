//! The SQL-like program language over a single table.
//!
//! A program is a sequence of actions: one head (`SELECT <col>`,
//! `FOLLOWUP`, or `FPCELL <col>`), zero or more `WHERE` clauses, and `STOP`.
//! A clause is one condition or two conditions joined by `OR`. Clauses are
//! conjoined and evaluated left to right against the surviving rows.

use std::cmp::Ordering;
use std::fmt;

use crate::text::normalize_answer;

mod exec;
mod grammar;
mod serialize;
mod spurious;

pub use exec::execute;
pub use grammar::{enumerate_programs, ActionSpace, DEFAULT_ENUMERATION_CAP};
pub use serialize::parse_program;
pub use spurious::is_spurious;

/// A value literal taken from a table cell.
#[derive(Debug, Clone)]
pub struct Literal {
    pub raw: String,
    pub norm: String,
}

impl Literal {
    pub fn new(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let norm = normalize_answer(&raw);
        Literal { raw, norm }
    }
}

impl PartialEq for Literal {
    fn eq(&self, other: &Self) -> bool {
        self.norm == other.norm
    }
}

impl Eq for Literal {}

#[derive(Debug, Clone)]
pub enum CondOp {
    Equals(Literal),
    NotEquals(Literal),
    Greater(f64),
    Less(f64),
    Max,
    Min,
}

impl CondOp {
    fn rank(&self) -> u8 {
        match self {
            CondOp::Equals(_) => 0,
            CondOp::NotEquals(_) => 1,
            CondOp::Greater(_) => 2,
            CondOp::Less(_) => 3,
            CondOp::Max => 4,
            CondOp::Min => 5,
        }
    }

    pub fn kind(&self) -> ActionKind {
        match self {
            CondOp::Equals(_) => ActionKind::CondEquals,
            CondOp::NotEquals(_) => ActionKind::CondNotEquals,
            CondOp::Greater(_) => ActionKind::CondGreater,
            CondOp::Less(_) => ActionKind::CondLess,
            CondOp::Max => ActionKind::CondMax,
            CondOp::Min => ActionKind::CondMin,
        }
    }
}

impl PartialEq for CondOp {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for CondOp {}

impl Ord for CondOp {
    fn cmp(&self, other: &Self) -> Ordering {
        use CondOp::*;
        match (self, other) {
            (Equals(a), Equals(b)) | (NotEquals(a), NotEquals(b)) => a.norm.cmp(&b.norm),
            (Greater(a), Greater(b)) | (Less(a), Less(b)) => a.total_cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl PartialOrd for CondOp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A row filter on one column. The derived order (column, operator, value)
/// is the canonical order clauses must follow inside a program.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Condition {
    pub column: usize,
    pub op: CondOp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionKind {
    SelectColumn,
    CondEquals,
    CondNotEquals,
    CondGreater,
    CondLess,
    CondMax,
    CondMin,
    CondOr,
    FollowUpWhere,
    FpCell,
    Stop,
}

impl ActionKind {
    pub fn name(self) -> &'static str {
        match self {
            ActionKind::SelectColumn => "select",
            ActionKind::CondEquals => "eq",
            ActionKind::CondNotEquals => "neq",
            ActionKind::CondGreater => "gt",
            ActionKind::CondLess => "lt",
            ActionKind::CondMax => "max",
            ActionKind::CondMin => "min",
            ActionKind::CondOr => "or",
            ActionKind::FollowUpWhere => "followup",
            ActionKind::FpCell => "fpcell",
            ActionKind::Stop => "stop",
        }
    }

    pub const ALL: [ActionKind; 11] = [
        ActionKind::SelectColumn,
        ActionKind::CondEquals,
        ActionKind::CondNotEquals,
        ActionKind::CondGreater,
        ActionKind::CondLess,
        ActionKind::CondMax,
        ActionKind::CondMin,
        ActionKind::CondOr,
        ActionKind::FollowUpWhere,
        ActionKind::FpCell,
        ActionKind::Stop,
    ];

    /// The program keyword this kind contributes, as used by lexicon pairs.
    pub fn keyword(self) -> &'static str {
        match self {
            ActionKind::SelectColumn => "SELECT",
            ActionKind::CondEquals => "=",
            ActionKind::CondNotEquals => "!=",
            ActionKind::CondGreater => ">",
            ActionKind::CondLess => "<",
            ActionKind::CondMax => "MAX",
            ActionKind::CondMin => "MIN",
            ActionKind::CondOr => "OR",
            ActionKind::FollowUpWhere => "FOLLOWUP",
            ActionKind::FpCell => "FPCELL",
            ActionKind::Stop => "STOP",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Select(usize),
    FollowUpWhere,
    FpCell(usize),
    Cond(Condition),
    Or,
    Stop,
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Select(_) => ActionKind::SelectColumn,
            Action::FollowUpWhere => ActionKind::FollowUpWhere,
            Action::FpCell(_) => ActionKind::FpCell,
            Action::Cond(c) => c.op.kind(),
            Action::Or => ActionKind::CondOr,
            Action::Stop => ActionKind::Stop,
        }
    }

    pub fn column(&self) -> Option<usize> {
        match self {
            Action::Select(c) | Action::FpCell(c) => Some(*c),
            Action::Cond(cond) => Some(cond.column),
            _ => None,
        }
    }

    pub fn is_head(&self) -> bool {
        matches!(self, Action::Select(_) | Action::FollowUpWhere | Action::FpCell(_))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Select(c) => write!(f, "Select(col {c})"),
            Action::FpCell(c) => write!(f, "FpCell(col {c})"),
            Action::FollowUpWhere => write!(f, "FollowUpWhere"),
            Action::Or => write!(f, "Or"),
            Action::Stop => write!(f, "Stop"),
            Action::Cond(c) => write!(f, "{:?}(col {})", c.op, c.column),
        }
    }
}

/// A possibly incomplete program.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProgramState {
    pub actions: Vec<Action>,
    pub complete: bool,
}

/// How the answer is read off the surviving rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Select(usize),
    FollowUp,
    FpCell(usize),
}

impl ProgramState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn head(&self) -> Option<Head> {
        match self.actions.first()? {
            Action::Select(c) => Some(Head::Select(*c)),
            Action::FollowUpWhere => Some(Head::FollowUp),
            Action::FpCell(c) => Some(Head::FpCell(*c)),
            _ => None,
        }
    }

    pub fn conditions(&self) -> impl Iterator<Item = &Condition> {
        self.actions.iter().filter_map(|a| match a {
            Action::Cond(c) => Some(c),
            _ => None,
        })
    }

    pub fn num_conditions(&self) -> usize {
        self.conditions().count()
    }

    /// Uses the previous answer in the sequence.
    pub fn uses_prev_answer(&self) -> bool {
        matches!(self.head(), Some(Head::FollowUp | Head::FpCell(_)))
    }

    /// Groups conditions into clauses. The flag is false for a trailing
    /// `OR` still waiting for its right-hand condition.
    pub fn clauses(&self) -> Vec<(Vec<&Condition>, bool)> {
        let mut out: Vec<(Vec<&Condition>, bool)> = Vec::new();
        let mut pending_or = false;
        for a in &self.actions {
            match a {
                Action::Cond(c) => {
                    if pending_or {
                        if let Some(last) = out.last_mut() {
                            last.0.push(c);
                            last.1 = true;
                        }
                        pending_or = false;
                    } else {
                        out.push((vec![c], true));
                    }
                }
                Action::Or => {
                    pending_or = true;
                    if let Some(last) = out.last_mut() {
                        last.1 = false;
                    }
                }
                _ => {}
            }
        }
        out
    }

    pub fn with(&self, action: Action) -> ProgramState {
        let mut next = self.clone();
        next.complete = action == Action::Stop;
        next.actions.push(action);
        next
    }
}

/// A complete, syntactically valid program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program(ProgramState);

impl Program {
    /// Wraps a state that has been completed by `Stop`.
    pub fn from_state(state: ProgramState) -> Option<Program> {
        state.complete.then_some(Program(state))
    }

    pub fn state(&self) -> &ProgramState {
        &self.0
    }

    pub fn into_state(self) -> ProgramState {
        self.0
    }
}

impl std::ops::Deref for Program {
    type Target = ProgramState;

    fn deref(&self) -> &ProgramState {
        &self.0
    }
}
