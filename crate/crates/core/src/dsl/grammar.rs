//! Syntactic legality, action application and exhaustive enumeration.
//!
//! Legality rules:
//! - the first action is a head; `FOLLOWUP` and `FPCELL` need position >= 1;
//! - `FPCELL <col>` takes no conditions;
//! - clauses appear in strictly increasing canonical order of their first
//!   condition, and the right side of an `OR` is greater than its left side,
//!   so each condition set has exactly one spelling;
//! - `OR` only extends a single-condition clause;
//! - a program holds at most `max_conditions` conditions;
//! - `STOP` needs a head, cannot follow `OR`, and `FOLLOWUP` needs at least
//!   one condition before it.

use std::collections::BTreeSet;

use super::{Action, CondOp, Condition, Head, Literal, Program, ProgramState};
use crate::error::{Error, Result};
use crate::table::Table;
use crate::text::parse_number;

pub const DEFAULT_ENUMERATION_CAP: usize = 200_000;

/// The actions available for one (table, question, position) triple.
#[derive(Debug, Clone)]
pub struct ActionSpace<'a> {
    pub table: &'a Table,
    pub position: usize,
    pub max_conditions: usize,
    conditions: Vec<Condition>,
}

impl<'a> ActionSpace<'a> {
    /// Comparison literals come from the column's numeric cells and from the
    /// numbers mentioned in `question_tokens`.
    pub fn new(
        table: &'a Table,
        question_tokens: &[String],
        position: usize,
        max_conditions: usize,
    ) -> Self {
        let question_numbers: Vec<f64> =
            question_tokens.iter().filter_map(|t| parse_number(t)).collect();
        let mut conditions = Vec::new();
        for col in 0..table.col_count() {
            let mut seen = BTreeSet::new();
            for row in table.rows() {
                let cell = &row[col];
                if !cell.normalized().is_empty() && seen.insert(cell.normalized().to_string()) {
                    let lit = Literal::new(cell.raw.clone());
                    conditions.push(Condition {
                        column: col,
                        op: CondOp::Equals(lit.clone()),
                    });
                    conditions.push(Condition {
                        column: col,
                        op: CondOp::NotEquals(lit),
                    });
                }
            }
            if table.is_numeric_column(col) {
                let mut nums: Vec<f64> = table
                    .rows()
                    .iter()
                    .filter_map(|r| r[col].numeric)
                    .chain(question_numbers.iter().copied())
                    .collect();
                nums.sort_by(f64::total_cmp);
                nums.dedup();
                for n in nums {
                    conditions.push(Condition {
                        column: col,
                        op: CondOp::Greater(n),
                    });
                    conditions.push(Condition {
                        column: col,
                        op: CondOp::Less(n),
                    });
                }
                conditions.push(Condition {
                    column: col,
                    op: CondOp::Max,
                });
                conditions.push(Condition {
                    column: col,
                    op: CondOp::Min,
                });
            }
        }
        conditions.sort();
        conditions.dedup();
        ActionSpace {
            table,
            position,
            max_conditions,
            conditions,
        }
    }

    /// Every condition this space can produce, in canonical order.
    pub fn conditions(&self) -> &[Condition] {
        &self.conditions
    }

    /// Every action that could be legal somewhere in this space.
    pub fn all_actions(&self) -> Vec<Action> {
        let mut out: Vec<Action> = (0..self.table.col_count()).map(Action::Select).collect();
        out.push(Action::FollowUpWhere);
        out.extend((0..self.table.col_count()).map(Action::FpCell));
        out.extend(self.conditions.iter().cloned().map(Action::Cond));
        out.push(Action::Or);
        out.push(Action::Stop);
        out
    }

    pub fn is_legal(&self, state: &ProgramState, action: &Action) -> bool {
        if state.complete {
            return false;
        }
        let Some(last) = state.actions.last() else {
            return match action {
                Action::Select(c) => *c < self.table.col_count(),
                Action::FpCell(c) => self.position >= 1 && *c < self.table.col_count(),
                Action::FollowUpWhere => self.position >= 1,
                _ => false,
            };
        };
        let head = state.head();
        let count = state.num_conditions();
        match action {
            Action::Select(_) | Action::FollowUpWhere | Action::FpCell(_) => false,
            Action::Stop => match head {
                Some(Head::Select(_) | Head::FpCell(_)) => *last != Action::Or,
                Some(Head::FollowUp) => count >= 1 && *last != Action::Or,
                None => false,
            },
            Action::Or => {
                if matches!(head, Some(Head::FpCell(_)) | None) || count + 1 > self.max_conditions {
                    return false;
                }
                // Only a single-condition clause can be extended.
                let n = state.actions.len();
                matches!(last, Action::Cond(_)) && (n < 2 || state.actions[n - 2] != Action::Or)
            }
            Action::Cond(cond) => {
                if matches!(head, Some(Head::FpCell(_)) | None)
                    || count + 1 > self.max_conditions
                    || cond.column >= self.table.col_count()
                {
                    return false;
                }
                if *last == Action::Or {
                    // Right flank: strictly above the left flank.
                    return matches!(&state.actions[state.actions.len() - 2], Action::Cond(left) if cond > left);
                }
                // New clause: strictly above the previous clause's first condition.
                match state.clauses().last() {
                    Some((prev, _)) => cond > prev[0],
                    None => true,
                }
            }
        }
    }

    pub fn legal_actions(&self, state: &ProgramState) -> Vec<Action> {
        if state.complete {
            return Vec::new();
        }
        if state.actions.is_empty() {
            return self
                .all_actions()
                .into_iter()
                .filter(|a| self.is_legal(state, a))
                .collect();
        }
        let mut out: Vec<Action> = self
            .conditions
            .iter()
            .map(|c| Action::Cond(c.clone()))
            .filter(|a| self.is_legal(state, a))
            .collect();
        for a in [Action::Or, Action::Stop] {
            if self.is_legal(state, &a) {
                out.push(a);
            }
        }
        out
    }

    pub fn apply(&self, state: &ProgramState, action: Action) -> Result<ProgramState> {
        if !self.is_legal(state, &action) {
            return Err(Error::IllegalAction {
                state: state.render(self.table),
                action: action.to_string(),
            });
        }
        Ok(state.with(action))
    }

    /// Replays `state` action by action, checking legality at every step.
    pub fn validate(&self, state: &ProgramState) -> Result<()> {
        let mut cur = ProgramState::new();
        for a in &state.actions {
            cur = self.apply(&cur, a.clone())?;
        }
        Ok(())
    }

    /// Every complete legal program, depth first in action order.
    pub fn enumerate(&self, cap: usize) -> Result<Vec<Program>> {
        let mut out = Vec::new();
        let mut stack = vec![ProgramState::new()];
        while let Some(state) = stack.pop() {
            for a in self.legal_actions(&state).into_iter().rev() {
                let next = state.with(a);
                if next.complete {
                    out.push(Program(next));
                    if out.len() > cap {
                        return Err(Error::EnumerationCap {
                            cap,
                            reached: out.len(),
                        });
                    }
                } else {
                    stack.push(next);
                }
            }
        }
        Ok(out)
    }
}

/// All programs over `table` with no question-derived literals.
pub fn enumerate_programs(table: &Table, position: usize, max_conditions: usize) -> Result<Vec<Program>> {
    ActionSpace::new(table, &[], position, max_conditions).enumerate(DEFAULT_ENUMERATION_CAP)
}
