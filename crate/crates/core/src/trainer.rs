//! Training loop, evaluation, the stability metric and the spurious audit.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::critique::Lexicon;
use crate::dataset::{Dataset, Example, Sequence};
use crate::dsl::is_spurious;
use crate::error::{Error, Result};
use crate::parallel::{par_map, Parallelism};
use crate::scorer::ParamVector;
use crate::search::{beam_search, CandidateSet, SearchConfig, SearchInput};
use crate::table::{exact_match, AnswerSet};
use crate::updates::{
    exploration_policy, generalized_update, reference_program, Skip, UpdateContext, UpdateSpec,
    DEFAULT_SOFTENING,
};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub update: UpdateSpec,
    pub search: SearchConfig,
    pub seed: u64,
    pub dev_fraction: f64,
    /// Retrain on train+dev for the best number of epochs.
    pub refit: bool,
    /// Rescale any per-example delta whose L2 norm exceeds this.
    pub clip: Option<f64>,
    pub softening: f64,
    pub parallelism: Parallelism,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 30,
            update: UpdateSpec::maver(),
            search: SearchConfig::default(),
            seed: 1,
            dev_fraction: 0.2,
            refit: false,
            clip: None,
            softening: DEFAULT_SOFTENING,
            parallelism: Parallelism::Auto,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.dev_fraction >= 0.0 && self.dev_fraction < 1.0) {
            return bad(format!("dev_fraction must be in [0, 1), got {}", self.dev_fraction));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("clip must be positive, got {c}"));
            }
        }
        if !(self.softening >= 0.0 && self.softening.is_finite()) {
            return bad(format!("softening must be finite and >= 0, got {}", self.softening));
        }
        self.search.validate().map_err(Error::Config)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SkipCounts {
    pub empty_candidates: usize,
    pub no_compatible: usize,
    pub no_violation: usize,
}

impl SkipCounts {
    fn record(&mut self, skip: Skip) {
        match skip {
            Skip::EmptyCandidates => self.empty_candidates += 1,
            Skip::NoCompatible => self.no_compatible += 1,
            Skip::NoViolation => self.no_violation += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.empty_candidates + self.no_compatible + self.no_violation
    }

    fn add(&mut self, other: &SkipCounts) {
        self.empty_candidates += other.empty_candidates;
        self.no_compatible += other.no_compatible;
        self.no_violation += other.no_violation;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Exact-match accuracy on the training set after the epoch, measured
    /// like dev accuracy (score-only search, predicted previous answers).
    pub train_accuracy: f64,
    pub dev_accuracy: Option<f64>,
    pub skips: SkipCounts,
    pub wall_seconds: f64,
}

/// Wall time is excluded: equal histories are equal runs.
impl PartialEq for EpochRecord {
    fn eq(&self, other: &Self) -> bool {
        self.epoch == other.epoch
            && self.train_accuracy.to_bits() == other.train_accuracy.to_bits()
            && self.dev_accuracy.map(f64::to_bits) == other.dev_accuracy.map(f64::to_bits)
            && self.skips == other.skips
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based; 0 before the first epoch.
    pub best_epoch: usize,
    pub refit: bool,
}

impl TrainHistory {
    /// The curve used for model selection and stability: dev accuracy when
    /// there is a dev set, train accuracy otherwise.
    pub fn selection_curve(&self) -> Vec<f64> {
        self.epochs
            .iter()
            .map(|e| e.dev_accuracy.unwrap_or(e.train_accuracy))
            .collect()
    }

    pub fn stability(&self) -> Result<f64> {
        stability(&self.selection_curve())
    }

    pub fn total_skips(&self) -> SkipCounts {
        let mut s = SkipCounts::default();
        for e in &self.epochs {
            s.add(&e.skips);
        }
        s
    }
}

/// Mean absolute difference between successive accuracies.
pub fn stability(curve: &[f64]) -> Result<f64> {
    if curve.len() < 2 {
        return Err(Error::TooFewEpochs(curve.len()));
    }
    let sum: f64 = curve.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    Ok(sum / (curve.len() - 1) as f64)
}

fn search_example(
    dataset: &Dataset,
    example: &Example,
    prev: Option<&AnswerSet>,
    gold: Option<&AnswerSet>,
    params: &ParamVector,
    lexicon: &Lexicon,
    config: &SearchConfig,
) -> CandidateSet {
    let input = SearchInput {
        table: dataset.table(example),
        tokens: &example.tokens,
        position: example.position,
        prev,
        gold,
    };
    beam_search(input, params, lexicon, config)
}

fn gold_prev(seq: &Sequence, position: usize) -> Option<&AnswerSet> {
    position.checked_sub(1).map(|p| &seq.examples[p].gold)
}

fn run_epoch(
    dataset: &Dataset,
    order: &[(usize, usize)],
    params: &mut ParamVector,
    lexicon: &Lexicon,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    epoch: usize,
) -> Result<SkipCounts> {
    let mut skips = SkipCounts::default();
    let shaping_eta = config.search.shaping.then_some(config.search.eta);
    for &(s, i) in order {
        let seq = &dataset.sequences[s];
        let ex = &seq.examples[i];
        let k = search_example(
            dataset,
            ex,
            gold_prev(seq, ex.position),
            Some(&ex.gold),
            params,
            lexicon,
            &config.search,
        );
        let ctx = UpdateContext::new(&k, exploration_policy(&k, config.softening, shaping_eta), ex.key());
        let outcome = generalized_update(&config.update, &ctx, rng)?;
        if let Some(skip) = outcome.skip {
            skips.record(skip);
            continue;
        }
        let mut delta = outcome.delta;
        if let Some(clip) = config.clip {
            let n = delta.norm();
            if n > clip {
                delta.scale(clip / n);
            }
        }
        params
            .apply(&delta, config.learning_rate)
            .map_err(|_| Error::Diverged {
                epoch,
                example: ex.key(),
            })?;
    }
    Ok(skips)
}

/// Trains on `train` and returns θ from the epoch with the best `dev`
/// accuracy; ties keep the earliest epoch. Without dev examples the last
/// epoch is returned.
pub fn train_split(
    train: &Dataset,
    dev: &Dataset,
    lexicon: &Lexicon,
    config: &TrainConfig,
) -> Result<(ParamVector, TrainHistory)> {
    config.validate()?;
    if train.num_examples() == 0 {
        return Err(Error::NoExamples);
    }
    let (params, mut history) = fit(train, Some(dev).filter(|d| d.num_examples() > 0), lexicon, config, config.epochs)?;
    if config.refit && dev.num_examples() > 0 {
        let mut all = train.clone();
        all.sequences.extend(dev.sequences.iter().cloned());
        let (refit, _) = fit(&all, None, lexicon, config, history.best_epoch)?;
        history.refit = true;
        return Ok((refit, history));
    }
    Ok((params, history))
}

/// Splits `dataset` by sequence with `config.dev_fraction`, then trains.
pub fn train(dataset: &Dataset, lexicon: &Lexicon, config: &TrainConfig) -> Result<(ParamVector, TrainHistory)> {
    let (tr, dev) = dataset.split_by_sequence(config.dev_fraction, config.seed);
    train_split(&tr, &dev, lexicon, config)
}

fn fit(
    train: &Dataset,
    dev: Option<&Dataset>,
    lexicon: &Lexicon,
    config: &TrainConfig,
    epochs: usize,
) -> Result<(ParamVector, TrainHistory)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ParamVector::new();
    let mut best: Option<(f64, ParamVector)> = None;
    let mut history = TrainHistory::default();
    let mut order: Vec<(usize, usize)> = train
        .sequences
        .iter()
        .enumerate()
        .flat_map(|(s, seq)| (0..seq.examples.len()).map(move |i| (s, i)))
        .collect();
    for epoch in 1..=epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let skips = run_epoch(train, &order, &mut params, lexicon, config, &mut rng, epoch)?;
        let train_accuracy = evaluate(train, &params, lexicon, &config.search, config.parallelism)?;
        let dev_accuracy = match dev {
            Some(d) => Some(evaluate(d, &params, lexicon, &config.search, config.parallelism)?),
            None => None,
        };
        let selection = dev_accuracy.unwrap_or(train_accuracy);
        if best.as_ref().is_none_or(|(b, _)| selection > *b) {
            best = Some((selection, params.clone()));
            history.best_epoch = epoch;
        }
        log::info!(
            "epoch {epoch}: train {:.4} dev {} skipped {}",
            train_accuracy,
            dev_accuracy.map_or("-".to_string(), |a| format!("{a:.4}")),
            skips.total()
        );
        history.epochs.push(EpochRecord {
            epoch,
            train_accuracy,
            dev_accuracy,
            skips,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    let params = if dev.is_some() { best.map(|(_, p)| p).unwrap_or(params) } else { params };
    Ok((params, history))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub example: String,
    pub question: String,
    pub program: Option<String>,
    pub answer: AnswerSet,
    pub gold: AnswerSet,
    pub correct: bool,
    /// JSON line of the final beam, when requested.
    #[serde(skip)]
    pub beam: Option<String>,
}

/// Predicts every example, feeding each sequence its own predicted previous
/// answers. Sequences run in parallel against the read-only `params`.
pub fn predict(
    dataset: &Dataset,
    params: &ParamVector,
    lexicon: &Lexicon,
    config: &SearchConfig,
    parallelism: Parallelism,
    keep_beams: bool,
) -> Vec<Prediction> {
    let inference = config.for_inference();
    par_map(&dataset.sequences, parallelism, |seq| {
        let empty = AnswerSet::new();
        let mut prev: Option<AnswerSet> = None;
        let mut out = Vec::with_capacity(seq.examples.len());
        for ex in &seq.examples {
            let prev_ref = (ex.position > 0).then(|| prev.as_ref().unwrap_or(&empty));
            let k = search_example(dataset, ex, prev_ref, None, params, lexicon, &inference);
            let best = k.best_by_score();
            let answer = best.map(|c| c.answer.clone()).unwrap_or_default();
            out.push(Prediction {
                example: ex.key(),
                question: ex.question.clone(),
                program: best.map(|c| c.text.clone()),
                correct: exact_match(&answer, &ex.gold),
                gold: ex.gold.clone(),
                beam: keep_beams.then(|| k.dump_json(&ex.key())),
                answer: answer.clone(),
            });
            prev = Some(answer);
        }
        out
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Exact-match accuracy of the top-scored program, shaping off.
pub fn evaluate(
    dataset: &Dataset,
    params: &ParamVector,
    lexicon: &Lexicon,
    config: &SearchConfig,
    parallelism: Parallelism,
) -> Result<f64> {
    if dataset.num_examples() == 0 {
        return Err(Error::NoExamples);
    }
    let preds = predict(dataset, params, lexicon, config, parallelism, false);
    Ok(preds.iter().filter(|p| p.correct).count() as f64 / preds.len() as f64)
}

/// The training-time candidate set of every example as JSON lines: gold
/// previous answers, gold rewards, shaping as configured.
pub fn training_beams(
    dataset: &Dataset,
    params: &ParamVector,
    lexicon: &Lexicon,
    config: &SearchConfig,
    parallelism: Parallelism,
) -> Vec<String> {
    par_map(&dataset.sequences, parallelism, |seq| {
        seq.examples
            .iter()
            .map(|ex| {
                let prev = gold_prev(seq, ex.position);
                search_example(dataset, ex, prev, Some(&ex.gold), params, lexicon, config).dump_json(&ex.key())
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AuditResult {
    pub spurious: usize,
    pub total: usize,
    /// Sampled examples with no compatible candidate.
    pub no_compatible: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditConfig {
    pub sample_size: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            sample_size: 100,
            trials: 10,
            seed: 0,
        }
    }
}

/// Samples examples, takes the highest-scoring compatible program found by
/// reward-guided search (no shaping), and counts those that are spurious.
pub fn spurious_audit(
    dataset: &Dataset,
    params: &ParamVector,
    lexicon: &Lexicon,
    config: &SearchConfig,
    audit: &AuditConfig,
    parallelism: Parallelism,
) -> AuditResult {
    let all: Vec<(usize, usize)> = dataset
        .sequences
        .iter()
        .enumerate()
        .flat_map(|(s, seq)| (0..seq.examples.len()).map(move |i| (s, i)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(audit.seed);
    let n = audit.sample_size.min(all.len());
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, all.len(), n).into_vec();
    picked.sort_unstable();
    let sample: Vec<(usize, usize)> = picked.into_iter().map(|i| all[i]).collect();
    let search = config.for_inference();
    let verdicts = par_map(&sample, parallelism, |&(s, i)| {
        let seq = &dataset.sequences[s];
        let ex = &seq.examples[i];
        let prev = gold_prev(seq, ex.position);
        let k = search_example(dataset, ex, prev, Some(&ex.gold), params, lexicon, &search);
        reference_program(&k).map(|star| {
            let trial_seed = audit.seed ^ (s as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ i as u64;
            is_spurious(k.candidates[star].program.state(), dataset.table(ex), &ex.gold, prev, audit.trials, trial_seed)
        })
    });
    AuditResult {
        spurious: verdicts.iter().filter(|v| **v == Some(true)).count(),
        total: sample.len(),
        no_compatible: verdicts.iter().filter(|v| v.is_none()).count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Example;
    use crate::table::Table;
    use std::collections::BTreeMap;

    fn corpus() -> Dataset {
        let t = Table::from_rows(
            "clubs",
            &["Club", "Losses", "Wins"],
            &[
                vec!["Bath", "25", "3"],
                vec!["Leeds", "21", "9"],
                vec!["Wasps", "10", "14"],
                vec!["Sale", "18", "7"],
            ],
        )
        .unwrap();
        let mk = |id: &str, qs: &[(&str, &[&str])]| Sequence {
            id: id.into(),
            annotator: 0,
            examples: qs
                .iter()
                .enumerate()
                .map(|(p, (q, a))| Example::new(id, p, *q, "clubs", a.iter().map(|s| s.to_string()).collect()))
                .collect(),
        };
        Dataset {
            tables: BTreeMap::from([("clubs".to_string(), t)]),
            sequences: vec![
                mk("a", &[("which club had the most losses", &["Bath"]), ("of these, how many wins", &["3"])]),
                mk("b", &[("which club had the most wins", &["Wasps"])]),
                mk("c", &[("which club had the fewest losses", &["Wasps"])]),
                mk("d", &[("which club had more than 20 losses", &["Bath", "Leeds"])]),
            ],
        }
    }

    fn quick(update: &str) -> TrainConfig {
        TrainConfig {
            epochs: 4,
            update: update.parse().unwrap(),
            search: SearchConfig { beam_size: 16, max_conditions: 1, ..SearchConfig::default() },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn stability_examples() {
        assert_eq!(stability(&[0.5, 0.5, 0.5]).unwrap(), 0.0);
        assert!((stability(&[0.40, 0.42, 0.38]).unwrap() - 0.03).abs() < 1e-12);
        assert!(matches!(stability(&[0.4]), Err(Error::TooFewEpochs(1))));
    }

    #[test]
    fn fits_its_own_corpus() {
        let data = corpus();
        let lex = Lexicon::default_pairs();
        let config = TrainConfig {
            epochs: 15,
            search: SearchConfig { beam_size: 32, max_conditions: 1, ..SearchConfig::default() },
            ..quick("mml")
        };
        let (theta, history) = train_split(&data, &Dataset::default(), &lex, &config).unwrap();
        let acc = evaluate(&data, &theta, &lex, &config.search, Parallelism::Sequential).unwrap();
        assert_eq!(acc, 1.0, "{history:?}");
    }

    #[test]
    fn mmr_fits_a_single_example() {
        let t = Table::from_rows(
            "clubs",
            &["Club", "Losses"],
            &[vec!["Bath", "25"], vec!["Leeds", "21"], vec!["Sale", "18"], vec!["Wasps", "5"]],
        )
        .unwrap();
        let gold = ["Bath", "Leeds"].iter().map(|s| s.to_string()).collect();
        let data = Dataset {
            tables: BTreeMap::from([("clubs".to_string(), t)]),
            sequences: vec![Sequence {
                id: "a".into(),
                annotator: 0,
                examples: vec![Example::new("a", 0, "which club had more than 18 losses", "clubs", gold)],
            }],
        };
        let lex = Lexicon::new();
        let config = TrainConfig { epochs: 20, ..quick("mmr") };
        // the gold program is the only compatible one in K
        let ex = &data.sequences[0].examples[0];
        let k = search_example(&data, ex, None, Some(&ex.gold), &ParamVector::new(), &lex, &config.search);
        let compatible: Vec<&str> = k.compatible().map(|c| c.text.as_str()).collect();
        assert_eq!(compatible, ["SELECT Club WHERE Losses > 18"]);

        let (theta, _) = train_split(&data, &Dataset::default(), &lex, &config).unwrap();
        let preds = predict(&data, &theta, &lex, &config.search, Parallelism::Sequential, false);
        assert_eq!(preds[0].program.as_deref(), Some("SELECT Club WHERE Losses > 18"));
    }

    #[test]
    fn zero_model_accuracy_is_the_tie_break_baseline() {
        let data = corpus();
        let lex = Lexicon::new();
        let search = quick("mml").search;
        let acc = evaluate(&data, &ParamVector::new(), &lex, &search, Parallelism::Sequential).unwrap();
        // every score ties, so each prediction is the smallest serialization
        let preds = predict(&data, &ParamVector::new(), &lex, &search, Parallelism::Sequential, true);
        for p in &preds {
            let beam: serde_json::Value = serde_json::from_str(p.beam.as_ref().unwrap()).unwrap();
            let first = beam["beam"].as_array().unwrap().iter().map(|c| c["program"].as_str().unwrap()).min().unwrap();
            assert_eq!(p.program.as_deref(), Some(first));
        }
        assert_eq!(acc, evaluate(&data, &ParamVector::new(), &lex, &search, Parallelism::Auto).unwrap());
    }

    #[test]
    fn zero_learning_rate_keeps_theta() {
        let data = corpus();
        let lex = Lexicon::new();
        let config = TrainConfig { learning_rate: 0.0, ..quick("maver") };
        let (dev_a, dev_b) = (data.subset(&[0, 1]), data.subset(&[2, 3]));
        let (theta, history) = train_split(&dev_a, &dev_b, &lex, &config).unwrap();
        assert!(theta.is_empty());
        let curve = history.selection_curve();
        assert!(curve.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(history.stability().unwrap(), 0.0);
    }

    #[test]
    fn runs_are_reproducible() {
        let data = corpus();
        let lex = Lexicon::default_pairs();
        for spec in ["reinforce", "offpg", "mix:mmr,mml"] {
            let config = quick(spec);
            let a = train(&data, &lex, &config).unwrap();
            let b = train(&data, &lex, &TrainConfig { parallelism: Parallelism::Sequential, ..config.clone() }).unwrap();
            assert_eq!(a.1, b.1, "{spec}");
            assert_eq!(a.0.to_checkpoint(), b.0.to_checkpoint(), "{spec}");
        }
    }

    #[test]
    fn empty_inputs() {
        let lex = Lexicon::new();
        let c = SearchConfig::default();
        assert!(matches!(evaluate(&Dataset::default(), &ParamVector::new(), &lex, &c, Parallelism::Auto), Err(Error::NoExamples)));
        assert!(matches!(train(&Dataset::default(), &lex, &quick("mml")), Err(Error::NoExamples)));
        let audit = AuditConfig { sample_size: 0, ..AuditConfig::default() };
        let r = spurious_audit(&corpus(), &ParamVector::new(), &lex, &c, &audit, Parallelism::Auto);
        assert_eq!((r.spurious, r.total), (0, 0));
    }

    #[test]
    fn order_invariant_corpus_has_no_spurious_programs() {
        // no positional column: every program is order-invariant
        let r = spurious_audit(
            &corpus(),
            &ParamVector::new(),
            &Lexicon::new(),
            &SearchConfig { max_conditions: 1, ..SearchConfig::default() },
            &AuditConfig::default(),
            Parallelism::Auto,
        );
        assert_eq!(r.total, 5);
        assert_eq!(r.spurious, 0);
    }

    #[test]
    fn refit_is_flagged() {
        let data = corpus();
        let config = TrainConfig { refit: true, dev_fraction: 0.25, ..quick("mml") };
        let (_, h) = train(&data, &Lexicon::new(), &config).unwrap();
        assert!(h.refit);
        assert!(h.best_epoch >= 1 && h.best_epoch <= 4);
    }
}
