use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spfd::critique::Lexicon;
use spfd::dataset::{load_dataset, write_dataset};
use spfd::dsl::{enumerate_programs, ActionKind, execute, parse_program};
use spfd::parallel::Parallelism;
use spfd::scorer::{softmax, ParamVector, RECALL};
use spfd::search::{beam_search, SearchConfig, SearchInput};
use spfd::synth::{generate, SynthConfig};
use spfd::table::{exact_match, jaccard, AnswerSet, Table};
use spfd::text::tokenize;
use spfd::trainer::{predict, train, TrainConfig};
use spfd::updates::{competing, generalized_update, Competing, UpdateContext, UpdateSpec};

const WORDS: [&str; 4] = ["red", "blue", "green", "gold"];

fn table(seed: u64) -> Table {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = rng.gen_range(1..=3);
    let numeric = [true, false, rng.gen_bool(0.5)];
    let cells: Vec<Vec<String>> = (0..rows)
        .map(|_| {
            numeric
                .iter()
                .map(|&n| if n { rng.gen_range(1..=4).to_string() } else { WORDS[rng.gen_range(0..4)].to_string() })
                .collect()
        })
        .collect();
    let r: Vec<Vec<&str>> = cells.iter().map(|r| r.iter().map(String::as_str).collect()).collect();
    Table::from_rows("t", &["Score", "Team", "Extra"], &r).unwrap()
}

fn wide() -> SearchConfig {
    SearchConfig { beam_size: 1_000_000, max_conditions: 1, ..SearchConfig::default() }
}

fn params(seed: u64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParamVector::new();
    for kind in ActionKind::ALL {
        p.set(&format!("act={}", kind.name()), rng.gen_range(-1.0..1.0));
    }
    p.set(RECALL, rng.gen_range(-1.0..1.0));
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn programs_survive_a_text_round_trip(seed in any::<u64>(), position in 0usize..2) {
        let t = table(seed);
        for p in enumerate_programs(&t, position, 2).unwrap() {
            let text = p.state().render(&t);
            let back = parse_program(&text, &t).unwrap();
            prop_assert_eq!(back.render(&t), text);
        }
    }

    #[test]
    fn rewards_and_compatibility_agree_with_execution(seed in any::<u64>(), theta in any::<u64>()) {
        let t = table(seed);
        let tokens = tokenize("which team scored more than 2 ?");
        let gold: AnswerSet = ["red"].iter().collect();
        let input = SearchInput { table: &t, tokens: &tokens, position: 0, prev: None, gold: Some(&gold) };
        let k = beam_search(input, &params(theta), &Lexicon::default_pairs(), &wide());
        let mut seen = std::collections::BTreeSet::new();
        for c in &k.candidates {
            prop_assert!(seen.insert(c.text.clone()), "duplicate {}", c.text);
            let answer = execute(c.program.state(), &t, None).unwrap();
            prop_assert_eq!(&answer, &c.answer);
            prop_assert_eq!(c.reward, jaccard(&answer, &gold));
            prop_assert_eq!(c.compatible, exact_match(&answer, &gold));
            prop_assert!((0.0..=1.0).contains(&c.reward));
        }
    }

    #[test]
    fn competing_distributions_are_distributions(seed in any::<u64>(), theta in any::<u64>()) {
        let t = table(seed);
        let tokens = tokenize("which team has the most score");
        let gold: AnswerSet = [WORDS[(seed % 4) as usize]].iter().collect();
        let input = SearchInput { table: &t, tokens: &tokens, position: 0, prev: None, gold: Some(&gold) };
        let k = beam_search(input, &params(theta), &Lexicon::default_pairs(), &wide());
        for c in [Competing::ModelPolicy, Competing::MostViolating, Competing::ViolationUniform] {
            if let Ok(q) = competing(c, &k) {
                prop_assert!(q.iter().all(|&x| x >= 0.0));
                prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        let ctx = UpdateContext::with_default_exploration(&k, "e");
        let mut rng = ChaCha8Rng::seed_from_u64(theta);
        for spec in UpdateSpec::canonical_set() {
            let out = generalized_update(&spec, &ctx, &mut rng).unwrap();
            prop_assert!(out.delta.is_finite());
            if out.skip.is_some() {
                prop_assert!(out.delta.is_empty());
            }
        }
    }

    #[test]
    fn softmax_is_shift_invariant(xs in prop::collection::vec(-30.0f64..30.0, 1..8), c in -100.0f64..100.0) {
        let p = softmax(&xs);
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        let q = softmax(&shifted);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn corpus_files_round_trip() {
    let corpus = generate(&SynthConfig { sequences: 6, ..SynthConfig::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let q = dir.path().join("q.tsv");
    let tables = dir.path().join("tables");
    std::fs::create_dir_all(&tables).unwrap();
    write_dataset(&corpus.dataset, &q, &tables).unwrap();
    let back = load_dataset(&q, &tables).unwrap();
    assert_eq!(back, corpus.dataset);
}

#[test]
fn parallel_and_sequential_runs_are_identical() {
    let corpus = generate(&SynthConfig { sequences: 8, ..SynthConfig::default() }).unwrap();
    let lex = Lexicon::default_pairs();
    let mut config = TrainConfig {
        epochs: 3,
        search: SearchConfig { beam_size: 8, max_conditions: 1, ..SearchConfig::default() },
        update: UpdateSpec::off_policy(),
        ..TrainConfig::default()
    };
    let (par, _) = train(&corpus.dataset, &lex, &config).unwrap();
    config.parallelism = Parallelism::Sequential;
    let (seq, _) = train(&corpus.dataset, &lex, &config).unwrap();
    assert_eq!(par.to_checkpoint(), seq.to_checkpoint());
    let a = predict(&corpus.dataset, &par, &lex, &config.search, Parallelism::Auto, true);
    let b = predict(&corpus.dataset, &seq, &lex, &config.search, Parallelism::Sequential, true);
    assert_eq!(a, b);
}
