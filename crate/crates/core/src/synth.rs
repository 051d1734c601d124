//! Synthetic corpus with known gold programs.
//!
//! Each sequence gets its own table: a positional `Row` column, a name
//! column, a category column and two numeric columns. Questions come from
//! templates whose wording pairs superlatives with MAX/MIN, comparatives with
//! `>`/`<`, "not" with `!=` and "or" with OR. Extreme rows are moved to the
//! top or bottom of the table often enough that `Row IS MIN`/`Row IS MAX`
//! also reach the gold answer, which is the spurious pattern the audit looks
//! for.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::{Dataset, Example, Sequence};
use crate::dsl::{enumerate_programs, execute, parse_program, ActionSpace, ProgramState};
use crate::error::{Error, Result};
use crate::parallel::{par_map, Parallelism};
use crate::table::{exact_match, AnswerSet, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub sequences: usize,
    pub seed: u64,
    pub min_rows: usize,
    pub max_rows: usize,
    /// Chance that the extreme row of a superlative question is moved to
    /// the first or last position.
    pub planted_extreme_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sequences: 50,
            seed: 7,
            min_rows: 5,
            max_rows: 7,
            planted_extreme_rate: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub dataset: Dataset,
    /// Gold program text per sequence and position.
    pub gold_programs: Vec<Vec<String>>,
}

struct Theme {
    noun: &'static str,
    name_col: &'static str,
    cat_col: &'static str,
    cat_phrase: &'static str,
    names: &'static [&'static str],
    cats: &'static [&'static str],
    numeric: &'static [&'static str],
}

const THEMES: &[Theme] = &[
    Theme {
        noun: "player",
        name_col: "Player",
        cat_col: "Nation",
        cat_phrase: "from",
        names: &[
            "Karen Andrew", "Naomi Thomas", "Lucy Millard", "Susan Day", "Paul Sievert", "Otto Brandt",
            "Marie Dupont", "Jan Kowal", "Ana Silva", "Ivo Marin", "Erik Lund", "Sara Costa",
        ],
        cats: &["England", "Wales", "France", "Scotland", "Italy"],
        numeric: &["Points", "Goals", "Caps", "Tries"],
    },
    Theme {
        noun: "club",
        name_col: "Club",
        cat_col: "City",
        cat_phrase: "based in",
        names: &[
            "Bath", "Leeds", "Wasps", "Sale", "Harlequins", "Saracens", "Bristol", "Exeter", "Gloucester",
            "Worcester", "Newcastle", "Northampton",
        ],
        cats: &["London", "Manchester", "Cardiff", "Dublin", "Glasgow"],
        numeric: &["Wins", "Losses", "Draws", "Tries"],
    },
    Theme {
        noun: "country",
        name_col: "Country",
        cat_col: "Region",
        cat_phrase: "in",
        names: &[
            "Norway", "Chile", "Kenya", "Japan", "Peru", "Ghana", "Spain", "Canada", "Egypt", "Nepal",
            "Fiji", "Poland",
        ],
        cats: &["Europe", "Asia", "Africa", "America", "Oceania"],
        numeric: &["Gold", "Silver", "Bronze", "Medals"],
    },
];

const MAX_WORDS: &[&str] = &["most", "highest", "largest", "greatest", "top"];
const MIN_WORDS: &[&str] = &["least", "lowest", "smallest", "fewest", "bottom"];
const GT_WORDS: &[&str] = &["more", "greater", "higher", "larger"];
const LT_WORDS: &[&str] = &["less", "fewer", "lower", "smaller"];

struct Built {
    table: Table,
    name_col: String,
    cat_col: String,
    numeric: Vec<String>,
    cats_used: Vec<String>,
    theme: &'static Theme,
}

fn build_table(id: &str, rng: &mut ChaCha8Rng, rows: usize) -> Built {
    let theme = &THEMES[rng.gen_range(0..THEMES.len())];
    let mut names: Vec<&str> = theme.names.to_vec();
    names.shuffle(rng);
    let mut cats: Vec<&str> = theme.cats.to_vec();
    cats.shuffle(rng);
    let ncats = rng.gen_range(2..=3);
    let cats = &cats[..ncats];
    let mut numeric: Vec<&str> = theme.numeric.to_vec();
    numeric.shuffle(rng);
    let numeric = &numeric[..2];
    let mut cols: Vec<Vec<u32>> = Vec::new();
    for _ in numeric {
        let mut pool: Vec<u32> = (1..=60).collect();
        pool.shuffle(rng);
        cols.push(pool[..rows].to_vec());
    }
    let header_owned: Vec<String> = ["#Row".to_string(), theme.name_col.to_string(), theme.cat_col.to_string()]
        .into_iter()
        .chain(numeric.iter().map(|s| s.to_string()))
        .collect();
    let mut cat_of: Vec<&str> = (0..rows).map(|r| cats[r % ncats]).collect();
    cat_of.shuffle(rng);
    let body: Vec<Vec<String>> = (0..rows)
        .map(|r| {
            vec![
                (r + 1).to_string(),
                names[r].to_string(),
                cat_of[r].to_string(),
                cols[0][r].to_string(),
                cols[1][r].to_string(),
            ]
        })
        .collect();
    let header: Vec<&str> = header_owned.iter().map(String::as_str).collect();
    let body_ref: Vec<Vec<&str>> = body.iter().map(|r| r.iter().map(String::as_str).collect()).collect();
    let table = Table::from_rows(id, &header, &body_ref).expect("generated table is well formed");
    Built {
        table,
        name_col: theme.name_col.to_string(),
        cat_col: theme.cat_col.to_string(),
        numeric: numeric.iter().map(|s| s.to_string()).collect(),
        cats_used: cats.iter().map(|s| s.to_string()).collect(),
        theme,
    }
}

/// Moves the row holding the extreme of `col` to the first or last slot,
/// keeping the positional column in place.
fn plant_extreme(table: &Table, col: usize, max: bool, rng: &mut ChaCha8Rng) -> Table {
    let n = table.row_count();
    let key = |r: usize| table.cell(r, col).numeric.unwrap_or(0.0);
    let best = (0..n)
        .max_by(|&a, &b| if max { key(a).total_cmp(&key(b)) } else { key(b).total_cmp(&key(a)) })
        .unwrap_or(0);
    let target = if rng.gen_bool(0.5) { 0 } else { n - 1 };
    let mut perm: Vec<usize> = (0..n).collect();
    perm.swap(best, target);
    table.permute_rows(&perm)
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, xs: &'a [T]) -> &'a T {
    &xs[rng.gen_range(0..xs.len())]
}

/// A threshold between two neighbouring column values, chosen so that both
/// `>` and `<` keep at least one row.
fn threshold(table: &Table, col: usize, rng: &mut ChaCha8Rng) -> u32 {
    let mut vals: Vec<u32> = (0..table.row_count())
        .filter_map(|r| table.cell(r, col).numeric.map(|v| v as u32))
        .collect();
    vals.sort_unstable();
    let n = vals.len();
    let i = rng.gen_range((n / 3).max(1)..=(2 * n / 3).clamp(1, n - 2));
    rng.gen_range(vals[i - 1] + 1..=vals[i])
}

struct Q {
    text: String,
    program: String,
}

fn lower(s: &str) -> String {
    s.to_lowercase()
}

/// The opening question; may reorder `table` to plant a spurious route.
/// Returns whether the answer is a single row.
fn first_question(b: &Built, rng: &mut ChaCha8Rng, table: &mut Table, plant_rate: f64) -> (Q, bool) {
    let noun = b.theme.noun;
    let name = &b.name_col;
    let numc = pick(rng, &b.numeric).clone();
    let col = table.column_index(&numc).expect("numeric column exists");
    let kind = rng.gen_range(0..7);
    let q = match kind {
        0 | 1 => {
            let max = kind == 0;
            if rng.gen_bool(plant_rate) {
                *table = plant_extreme(table, col, max, rng);
            }
            let w = pick(rng, if max { MAX_WORDS } else { MIN_WORDS });
            Q {
                text: format!("which {noun} had the {w} {}", lower(&numc)),
                program: format!("SELECT {name} WHERE {numc} IS {}", if max { "MAX" } else { "MIN" }),
            }
        }
        2 | 3 => {
            let gt = kind == 2;
            let t = threshold(table, col, rng);
            let w = pick(rng, if gt { GT_WORDS } else { LT_WORDS });
            Q {
                text: format!("which {noun} had {w} than {t} {}", lower(&numc)),
                program: format!("SELECT {name} WHERE {numc} {} {t}", if gt { ">" } else { "<" }),
            }
        }
        4 => {
            let c = pick(rng, &b.cats_used);
            Q {
                text: format!("which {noun} is {} {}", b.theme.cat_phrase, lower(c)),
                program: format!("SELECT {name} WHERE {} = {c}", b.cat_col),
            }
        }
        5 => {
            let c = pick(rng, &b.cats_used);
            Q {
                text: format!("which {noun} is not {} {}", b.theme.cat_phrase, lower(c)),
                program: format!("SELECT {name} WHERE {} != {c}", b.cat_col),
            }
        }
        _ => {
            let mut cs = b.cats_used.clone();
            cs.shuffle(rng);
            let (a, c) = (&cs[0], &cs[1]);
            let (lo, hi) = if lower(a) < lower(c) { (a, c) } else { (c, a) };
            Q {
                text: format!("which {noun} is {} {} or {}", b.theme.cat_phrase, lower(a), lower(c)),
                program: format!("SELECT {name} WHERE {} = {lo} OR {} = {hi}", b.cat_col, b.cat_col),
            }
        }
    };
    let single = kind <= 1;
    (q, single)
}

fn followup_question(b: &Built, rng: &mut ChaCha8Rng, prev_single: bool) -> Q {
    if prev_single {
        let numc = pick(rng, &b.numeric);
        let target = if rng.gen_bool(0.5) { numc.clone() } else { b.cat_col.clone() };
        return Q {
            text: format!("what is its {}", lower(&target)),
            program: format!("FPCELL {target}"),
        };
    }
    let numc = pick(rng, &b.numeric);
    let max = rng.gen_bool(0.5);
    let w = pick(rng, if max { MAX_WORDS } else { MIN_WORDS });
    Q {
        text: format!("of these, which had the {w} {}", lower(numc)),
        program: format!("FOLLOWUP WHERE {numc} IS {}", if max { "MAX" } else { "MIN" }),
    }
}

fn run(program: &str, table: &Table, prev: Option<&AnswerSet>) -> Result<(ProgramState, AnswerSet)> {
    let state = parse_program(program, table)?;
    let answer = execute(&state, table, prev)?;
    Ok((state, answer))
}

/// Generates the corpus. Every gold program is checked to be grammatical and
/// to execute to its recorded gold answer.
pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
    if config.min_rows < 3 || config.max_rows < config.min_rows {
        return Err(Error::Config(format!(
            "need 3 <= min_rows <= max_rows, got {}..{}",
            config.min_rows, config.max_rows
        )));
    }
    let max_rows = config.max_rows.min(THEMES.iter().map(|t| t.names.len()).min().unwrap_or(0));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut tables = BTreeMap::new();
    let mut sequences = Vec::with_capacity(config.sequences);
    let mut gold_programs = Vec::with_capacity(config.sequences);
    let mut i = 0usize;
    while sequences.len() < config.sequences {
        let id = format!("synth-{i:04}");
        i += 1;
        let table_ref = format!("{id}.csv");
        let rows = rng.gen_range(config.min_rows..=max_rows.max(config.min_rows));
        let built = build_table(&table_ref, &mut rng, rows);
        let mut table = built.table.clone();
        let (q0, single) = first_question(&built, &mut rng, &mut table, config.planted_extreme_rate);
        let mut qs = vec![q0];
        let len = rng.gen_range(1..=3usize);
        let mut prev_single = single;
        for _ in 1..len {
            let q = followup_question(&built, &mut rng, prev_single);
            prev_single = true;
            let fpcell = q.program.starts_with("FPCELL");
            qs.push(q);
            if fpcell {
                break;
            }
        }
        let mut examples = Vec::with_capacity(qs.len());
        let mut programs = Vec::with_capacity(qs.len());
        let mut prev: Option<AnswerSet> = None;
        let mut ok = true;
        for (pos, q) in qs.iter().enumerate() {
            let (state, answer) = run(&q.program, &table, prev.as_ref())?;
            let tokens = crate::text::tokenize(&q.text);
            ActionSpace::new(&table, &tokens, pos, 2).validate(&state)?;
            // a follow-up that filters nothing is not worth asking
            let no_op = q.program.starts_with("FOLLOWUP") && prev.as_ref() == Some(&answer);
            if answer.is_empty() || no_op {
                ok = false;
                break;
            }
            let mut answer_text: Vec<String> = Vec::new();
            for r in 0..table.row_count() {
                for c in 0..table.col_count() {
                    let cell = table.cell(r, c);
                    if answer.contains(cell.normalized()) && !answer_text.contains(&cell.raw) {
                        answer_text.push(cell.raw.clone());
                    }
                }
            }
            let ex = Example::new(&id, pos, q.text.clone(), &table_ref, answer_text);
            if !exact_match(&ex.gold, &answer) {
                return Err(Error::Config(format!("{id}@{pos}: gold answer does not round-trip")));
            }
            examples.push(ex);
            programs.push(state.render(&table));
            prev = Some(answer);
        }
        if !ok {
            continue;
        }
        tables.insert(table_ref.clone(), table);
        sequences.push(Sequence {
            id,
            annotator: 0,
            examples,
        });
        gold_programs.push(programs);
    }
    Ok(SynthCorpus {
        dataset: Dataset { tables, sequences },
        gold_programs,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AmbiguityStats {
    pub examples: usize,
    /// Examples with at least two compatible programs.
    pub ambiguous: usize,
}

impl AmbiguityStats {
    pub fn rate(&self) -> f64 {
        if self.examples == 0 {
            0.0
        } else {
            self.ambiguous as f64 / self.examples as f64
        }
    }
}

/// Counts examples that more than one program answers correctly, by full
/// enumeration up to `max_conditions`.
pub fn ambiguity(dataset: &Dataset, max_conditions: usize, parallelism: Parallelism) -> Result<AmbiguityStats> {
    let per_seq = par_map(&dataset.sequences, parallelism, |seq| -> Result<(usize, usize)> {
        let mut amb = 0;
        for ex in &seq.examples {
            let table = dataset.table(ex);
            let prev = ex.position.checked_sub(1).map(|p| &seq.examples[p].gold);
            let programs = enumerate_programs(table, ex.position, max_conditions)?;
            let hits = programs
                .iter()
                .filter(|p| execute(p, table, prev).is_ok_and(|a| exact_match(&a, &ex.gold)))
                .take(2)
                .count();
            if hits >= 2 {
                amb += 1;
            }
        }
        Ok((seq.examples.len(), amb))
    });
    let mut stats = AmbiguityStats::default();
    for r in per_seq {
        let (n, a) = r?;
        stats.examples += n;
        stats.ambiguous += a;
    }
    Ok(stats)
}

/// `id<TAB>position<TAB>program` lines.
pub fn write_gold_programs(corpus: &SynthCorpus, path: &Path) -> Result<()> {
    let mut out = String::from("id\tposition\tprogram\n");
    for (seq, programs) in corpus.dataset.sequences.iter().zip(&corpus.gold_programs) {
        for (pos, p) in programs.iter().enumerate() {
            let _ = writeln!(out, "{}\t{pos}\t{p}", seq.id);
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let c = SynthConfig { sequences: 20, ..SynthConfig::default() };
        let a = generate(&c).unwrap();
        let b = generate(&c).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.gold_programs, b.gold_programs);
        assert_eq!(a.dataset.sequences.len(), 20);
        let other = generate(&SynthConfig { seed: 8, ..c }).unwrap();
        assert_ne!(a.dataset, other.dataset);
    }

    #[test]
    fn gold_programs_execute_to_gold() {
        let corpus = generate(&SynthConfig::default()).unwrap();
        for (seq, programs) in corpus.dataset.sequences.iter().zip(&corpus.gold_programs) {
            for (ex, p) in seq.examples.iter().zip(programs) {
                let table = corpus.dataset.table(ex);
                let prev = ex.position.checked_sub(1).map(|i| &seq.examples[i].gold);
                let state = parse_program(p, table).unwrap();
                assert_eq!(&state.render(table), p);
                assert!(exact_match(&execute(&state, table, prev).unwrap(), &ex.gold), "{p}");
            }
        }
    }

    #[test]
    fn lexicon_words_appear() {
        let corpus = generate(&SynthConfig::default()).unwrap();
        let text: Vec<&str> = corpus.dataset.examples().map(|e| e.question.as_str()).collect();
        assert!(text.iter().any(|q| MAX_WORDS.iter().any(|w| q.contains(w))));
        assert!(text.iter().any(|q| q.contains(" not ")));
        assert!(text.iter().any(|q| q.contains(" or ")));
    }
}
