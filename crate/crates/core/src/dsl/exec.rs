use super::{CondOp, Condition, Head, ProgramState};
use crate::error::{Error, Result};
use crate::table::{AnswerSet, Table};

/// Runs a complete program or the completed clauses of a partial one.
///
/// `FOLLOWUP` starts from the rows holding a value of `prev`, and answers with
/// the `prev` values that survive. `FPCELL <col>` reads `<col>` from the rows
/// holding the single value of `prev`; any other `prev` size yields an empty
/// answer.
pub fn execute(state: &ProgramState, table: &Table, prev: Option<&AnswerSet>) -> Result<AnswerSet> {
    let Some(head) = state.head() else {
        return Ok(AnswerSet::new());
    };
    let prev = match (head, prev) {
        (Head::Select(_), _) => None,
        (_, Some(p)) => Some(p),
        (_, None) => return Err(Error::MissingPrevAnswer(state.render(table))),
    };

    let all = 0..table.row_count();
    let mut rows: Vec<usize> = match head {
        Head::Select(_) => all.collect(),
        Head::FollowUp => {
            let prev = prev.expect("checked above");
            all.filter(|&r| table.rows()[r].iter().any(|c| prev.contains(c.normalized())))
                .collect()
        }
        Head::FpCell(_) => {
            let prev = prev.expect("checked above");
            if prev.len() != 1 {
                return Ok(AnswerSet::new());
            }
            all.filter(|&r| table.rows()[r].iter().any(|c| prev.contains(c.normalized())))
                .collect()
        }
    };

    for (clause, done) in state.clauses() {
        if !done {
            continue;
        }
        let mut keep = vec![false; table.row_count()];
        for cond in clause {
            for r in filter(cond, table, &rows) {
                keep[r] = true;
            }
        }
        rows.retain(|&r| keep[r]);
    }

    let mut out = AnswerSet::new();
    match head {
        Head::Select(c) | Head::FpCell(c) => {
            for &r in &rows {
                out.insert_normalized(table.cell(r, c).normalized());
            }
        }
        Head::FollowUp => {
            let prev = prev.expect("checked above");
            for &r in &rows {
                for cell in &table.rows()[r] {
                    if prev.contains(cell.normalized()) {
                        out.insert_normalized(cell.normalized());
                    }
                }
            }
        }
    }
    Ok(out)
}

fn filter(cond: &Condition, table: &Table, rows: &[usize]) -> Vec<usize> {
    let col = cond.column;
    let num = |r: usize| table.cell(r, col).numeric;
    let text = |r: usize| table.cell(r, col).normalized();
    match &cond.op {
        CondOp::Equals(v) => rows.iter().copied().filter(|&r| text(r) == v.norm).collect(),
        CondOp::NotEquals(v) => rows.iter().copied().filter(|&r| text(r) != v.norm).collect(),
        CondOp::Greater(n) => rows.iter().copied().filter(|&r| num(r).is_some_and(|x| x > *n)).collect(),
        CondOp::Less(n) => rows.iter().copied().filter(|&r| num(r).is_some_and(|x| x < *n)).collect(),
        CondOp::Max | CondOp::Min => {
            let vals = rows.iter().filter_map(|&r| num(r));
            let best = if matches!(cond.op, CondOp::Max) {
                vals.fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
            } else {
                vals.fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))))
            };
            match best {
                Some(b) => rows.iter().copied().filter(|&r| num(r) == Some(b)).collect(),
                None => Vec::new(),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;

    fn rugby() -> Table {
        Table::from_rows(
            "rugby",
            &["Name", "Nation", "Points"],
            &[
                vec!["Karen Andrew", "England", "44"],
                vec!["Daniella Waterman", "England", "40"],
                vec!["Christelle Le Duff", "France", "33"],
                vec!["Charlotte Barras", "England", "30"],
                vec!["Naomi Thomas", "Wales", "25"],
                vec!["Susan Day", "England", "20"],
                vec!["Lucy Millard", "Scotland", "20"],
            ],
        )
        .unwrap()
    }

    fn run(text: &str, t: &Table, prev: Option<&AnswerSet>) -> AnswerSet {
        execute(&parse_program(text, t).unwrap(), t, prev).unwrap()
    }

    fn set(v: &[&str]) -> AnswerSet {
        v.iter().collect()
    }

    #[test]
    fn select_where_equals() {
        let t = rugby();
        assert_eq!(run("SELECT Nation WHERE Name = Karen Andrew", &t, None), set(&["England"]));
        assert_eq!(run("SELECT Nation WHERE Points IS MAX", &t, None), set(&["England"]));
    }

    #[test]
    fn comparisons_filter_rows() {
        let t = Table::from_rows(
            "toy",
            &["Club", "Losses"],
            &[vec!["Bath", "25"], vec!["Leeds", "21"], vec!["Wasps", "10"]],
        )
        .unwrap();
        assert_eq!(run("SELECT Club WHERE Losses > 21", &t, None), set(&["Bath"]));
        assert_eq!(run("SELECT Club WHERE Losses < 21", &t, None), set(&["Wasps"]));
        assert_eq!(run("SELECT Club ...", &t, None), set(&["Bath", "Leeds", "Wasps"]));
        assert_eq!(
            run("SELECT Club WHERE Club = Bath OR Club = Wasps", &t, None),
            set(&["Bath", "Wasps"])
        );
        // trailing OR: the unfinished clause is ignored
        assert_eq!(run("SELECT Club WHERE Club = Bath OR ...", &t, None), set(&["Bath", "Leeds", "Wasps"]));
    }

    #[test]
    fn extremum_is_over_surviving_rows() {
        let t = rugby();
        assert_eq!(
            run("SELECT Name WHERE Nation = Wales WHERE Points IS MAX", &t, None),
            set(&["Naomi Thomas"])
        );
        assert_eq!(run("SELECT Name WHERE Points IS MIN", &t, None), set(&["Susan Day", "Lucy Millard"]));
        assert_eq!(run("SELECT Name WHERE Name = nobody WHERE Points IS MIN", &t, None), set(&[]));
    }

    #[test]
    fn followup_and_fpcell_use_previous_answer() {
        let t = rugby();
        let prev = set(&["Karen Andrew", "Naomi Thomas", "Lucy Millard"]);
        assert_eq!(run("FOLLOWUP WHERE Points IS MAX", &t, Some(&prev)), set(&["Karen Andrew"]));
        assert_eq!(
            run("FOLLOWUP WHERE Nation != England", &t, Some(&prev)),
            set(&["Naomi Thomas", "Lucy Millard"])
        );
        assert_eq!(run("FPCELL Nation", &t, Some(&set(&["Naomi Thomas"]))), set(&["Wales"]));
        assert_eq!(run("FPCELL Nation", &t, Some(&prev)), set(&[]));
        let state = parse_program("FPCELL Nation", &t).unwrap();
        assert!(matches!(execute(&state, &t, None), Err(Error::MissingPrevAnswer(_))));
    }

    #[test]
    fn empty_state_is_empty_answer() {
        let t = rugby();
        assert!(execute(&ProgramState::new(), &t, None).unwrap().is_empty());
    }
}
