use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{execute, ProgramState};
use crate::table::{AnswerSet, Table};

/// Row-permutation test for spurious programs.
///
/// Tries the swap of the first two rows plus `trials - 1` seeded random
/// shuffles. A permutation counts when every gold value still appears in the
/// permuted table; the program is spurious if any counted permutation changes
/// its answer. Only positional columns (see [`crate::table::POSITIONAL_MARKER`])
/// can make an otherwise well-formed program order-dependent.
pub fn is_spurious(
    program: &ProgramState,
    table: &Table,
    gold: &AnswerSet,
    prev: Option<&AnswerSet>,
    trials: usize,
    seed: u64,
) -> bool {
    let n = table.row_count();
    if n < 2 {
        return false;
    }
    let Ok(original) = execute(program, table, prev) else {
        return false;
    };
    let mut perms: Vec<Vec<usize>> = Vec::with_capacity(trials.max(1));
    let mut swap: Vec<usize> = (0..n).collect();
    swap.swap(0, 1);
    perms.push(swap);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 1..trials {
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(&mut rng);
        perms.push(p);
    }
    perms.iter().any(|perm| {
        let permuted = table.permute_rows(perm);
        let values = permuted.values();
        if !gold.iter().all(|g| values.contains(g)) {
            return false;
        }
        execute(program, &permuted, prev).is_ok_and(|a| a != original)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;

    fn indexed() -> Table {
        Table::from_rows(
            "t",
            &["#Index", "Name", "Nation", "Points"],
            &[
                vec!["1", "Karen Andrew", "England", "44"],
                vec!["2", "Naomi Thomas", "Wales", "25"],
                vec!["3", "Lucy Millard", "Scotland", "20"],
            ],
        )
        .unwrap()
    }

    #[test]
    fn index_program_is_spurious() {
        let t = indexed();
        let gold: AnswerSet = ["England"].iter().collect();
        let p = parse_program("SELECT Nation WHERE Index IS MIN", &t).unwrap();
        assert_eq!(execute(&p, &t, None).unwrap(), gold);
        assert!(is_spurious(&p, &t, &gold, None, 1, 0));
    }

    #[test]
    fn order_invariant_programs_are_not() {
        let t = indexed();
        let gold: AnswerSet = ["England"].iter().collect();
        for text in ["SELECT Nation WHERE Points IS MAX", "SELECT Nation WHERE Points > 40", "SELECT Nation"] {
            let p = parse_program(text, &t).unwrap();
            assert!(!is_spurious(&p, &t, &gold, None, 10, 3), "{text}");
        }
    }
}
