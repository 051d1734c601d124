//! Beam search over program states.
//!
//! Children are ranked by the exploration policy exp(λ·R + score). With
//! λ = ∞ this is a lexicographic sort on (reward, score) with the canonical
//! text as the final tie-break. Policy shaping adds η·critique to the score
//! component, which is the log of multiplying the behavior policy by the
//! critique policy; the normalizer does not affect ranking.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashSet};

use serde::Serialize;

use crate::critique::{program_keywords, Critic, Lexicon};
use crate::dsl::{execute, Action, ActionSpace, Program, ProgramState};
use crate::scorer::{FeatureContext, FeatureVector, ParamVector, RECALL};
use crate::table::{exact_match, jaccard, AnswerSet, Table};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Lambda {
    Infinite,
    Finite(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub beam_size: usize,
    pub max_actions: usize,
    pub max_conditions: usize,
    pub lambda: Lambda,
    /// Policy shaping: bias the search ranking with the critique.
    pub shaping: bool,
    pub eta: f64,
    /// Model shaping: add η·critique to the model score itself.
    pub model_shaping: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            beam_size: 32,
            max_actions: 6,
            max_conditions: 2,
            lambda: Lambda::Infinite,
            shaping: false,
            eta: 5.0,
            model_shaping: false,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.beam_size == 0 {
            return Err("beam_size must be at least 1".into());
        }
        if self.max_actions == 0 {
            return Err("max_actions must be at least 1".into());
        }
        if let Lambda::Finite(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(format!("lambda must be finite and >= 0, got {l}"));
            }
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(format!("eta must be finite and >= 0, got {}", self.eta));
        }
        Ok(())
    }

    /// The test-time configuration: no critique in the search ranking.
    pub fn for_inference(&self) -> SearchConfig {
        SearchConfig {
            shaping: false,
            ..self.clone()
        }
    }
}

/// Ordering key: larger `primary`, then larger `secondary`, then smaller text.
#[derive(Debug, Clone, PartialEq)]
pub struct RankKey {
    pub primary: f64,
    pub secondary: f64,
    pub text: String,
}

impl RankKey {
    /// `Less` means `self` ranks ahead of `other`.
    pub fn rank_cmp(&self, other: &RankKey) -> Ordering {
        other
            .primary
            .total_cmp(&self.primary)
            .then_with(|| other.secondary.total_cmp(&self.secondary))
            .then_with(|| self.text.cmp(&other.text))
    }
}

pub fn rank_key(text: &str, reward: f64, score: f64, critique: f64, config: &SearchConfig) -> RankKey {
    let s = if config.shaping { score + config.eta * critique } else { score };
    match config.lambda {
        Lambda::Infinite => RankKey {
            primary: reward,
            secondary: s,
            text: text.to_string(),
        },
        Lambda::Finite(l) => RankKey {
            primary: l * reward + s,
            secondary: 0.0,
            text: text.to_string(),
        },
    }
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub program: Program,
    pub text: String,
    pub features: FeatureVector,
    /// Model score (including the critique term under model shaping).
    pub score: f64,
    pub reward: f64,
    pub critique: f64,
    pub answer: AnswerSet,
    pub compatible: bool,
}

/// The programs found for one example, in final beam order.
#[derive(Debug, Clone, Default)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
}

#[derive(Serialize)]
struct DumpEntry<'a> {
    program: &'a str,
    score: f64,
    reward: f64,
    critique: f64,
    compatible: bool,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn compatible(&self) -> impl Iterator<Item = &Candidate> {
        self.candidates.iter().filter(|c| c.compatible)
    }

    pub fn texts(&self) -> Vec<&str> {
        self.candidates.iter().map(|c| c.text.as_str()).collect()
    }

    /// Highest model score, smallest text on ties.
    pub fn best_by_score(&self) -> Option<&Candidate> {
        self.candidates.iter().min_by(|a, b| {
            b.score.total_cmp(&a.score).then_with(|| a.text.cmp(&b.text))
        })
    }

    /// One JSON line describing the final beam.
    pub fn dump_json(&self, example: &str) -> String {
        let beam: Vec<DumpEntry<'_>> = self
            .candidates
            .iter()
            .map(|c| DumpEntry {
                program: &c.text,
                score: c.score,
                reward: c.reward,
                critique: c.critique,
                compatible: c.compatible,
            })
            .collect();
        serde_json::json!({ "example": example, "beam": beam }).to_string()
    }
}

/// What the search needs to know about one question.
#[derive(Debug, Clone, Copy)]
pub struct SearchInput<'a> {
    pub table: &'a Table,
    pub tokens: &'a [String],
    pub position: usize,
    /// Answer to the previous question in the sequence (gold at training
    /// time, predicted at test time).
    pub prev: Option<&'a AnswerSet>,
    /// Gold answer; `None` at test time, where every reward is zero.
    pub gold: Option<&'a AnswerSet>,
}

struct ActionInfo {
    action: Action,
    score: f64,
    tokens: BTreeSet<String>,
}

struct Node {
    state: ProgramState,
    text: String,
    action_score: f64,
    tokens: BTreeSet<String>,
    key: RankKey,
    reward: f64,
}

pub fn beam_search(
    input: SearchInput<'_>,
    params: &ParamVector,
    lexicon: &Lexicon,
    config: &SearchConfig,
) -> CandidateSet {
    let table = input.table;
    let space = ActionSpace::new(table, input.tokens, input.position, config.max_conditions);
    let ctx = FeatureContext::new(table, input.tokens);
    let critic = Critic::new(lexicon, input.tokens);
    let recall_weight = params.get(RECALL);
    let use_critique = config.shaping || config.model_shaping;

    let infos: Vec<ActionInfo> = space
        .all_actions()
        .into_iter()
        .map(|action| ActionInfo {
            score: params.dot_pairs(&ctx.action_features(&action)),
            tokens: ctx.action_tokens(&action),
            action,
        })
        .collect();

    let answer_of = |state: &ProgramState| execute(state, table, input.prev).unwrap_or_default();
    let reward_of = |answer: &AnswerSet| input.gold.map_or(0.0, |g| jaccard(answer, g));

    let mut beam = vec![Node {
        state: ProgramState::new(),
        text: String::new(),
        action_score: 0.0,
        tokens: BTreeSet::new(),
        key: RankKey {
            primary: 0.0,
            secondary: 0.0,
            text: String::new(),
        },
        reward: 0.0,
    }];
    let mut finished: Vec<Node> = Vec::new();
    let mut seen_finished: HashSet<String> = HashSet::new();

    for _ in 0..config.max_actions {
        if beam.is_empty() {
            break;
        }
        let mut children: Vec<Node> = Vec::new();
        let mut seen: HashSet<String> = HashSet::new();
        for node in &beam {
            for info in &infos {
                if !space.is_legal(&node.state, &info.action) {
                    continue;
                }
                let state = node.state.with(info.action.clone());
                let text = state.render(table);
                if !seen.insert(text.clone()) || (state.complete && seen_finished.contains(&text)) {
                    continue;
                }
                let mut tokens = node.tokens.clone();
                tokens.extend(info.tokens.iter().cloned());
                let action_score = node.action_score + info.score;
                let critique = if use_critique {
                    critic.critique_parts(&tokens, &program_keywords(&state))
                } else {
                    0.0
                };
                let mut score = action_score + recall_weight * ctx.recall_from_tokens(&tokens);
                if config.model_shaping {
                    score += config.eta * critique;
                }
                let reward = reward_of(&answer_of(&state));
                let key = rank_key(&text, reward, score, critique, config);
                children.push(Node {
                    state,
                    text,
                    action_score,
                    tokens,
                    key,
                    reward,
                });
            }
        }
        children.sort_by(|a, b| a.key.rank_cmp(&b.key));
        beam = Vec::with_capacity(config.beam_size);
        for child in children {
            if child.state.complete {
                seen_finished.insert(child.text.clone());
                finished.push(child);
            } else if beam.len() < config.beam_size {
                beam.push(child);
            }
        }
    }

    let mut candidates: Vec<(RankKey, Candidate)> = finished
        .into_iter()
        .map(|node| {
            let features = ctx.featurize(&node.state);
            let critique = critic.critique(&node.state, table);
            let mut score = params.dot(&features);
            if config.model_shaping {
                score += config.eta * critique;
            }
            let answer = answer_of(&node.state);
            let compatible = input.gold.is_some_and(|g| exact_match(&answer, g));
            let key = rank_key(&node.text, node.reward, score, critique, config);
            let program = Program::from_state(node.state).expect("finished nodes are complete");
            (
                key,
                Candidate {
                    program,
                    text: node.text,
                    features,
                    score,
                    reward: node.reward,
                    critique,
                    answer,
                    compatible,
                },
            )
        })
        .collect();
    candidates.sort_by(|a, b| a.0.rank_cmp(&b.0));
    CandidateSet {
        candidates: candidates.into_iter().map(|(_, c)| c).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::enumerate_programs;
    use crate::text::tokenize;

    fn toy() -> Table {
        Table::from_rows(
            "t",
            &["Club", "Losses"],
            &[vec!["Bath", "25"], vec!["Leeds", "21"], vec!["Wasps", "10"]],
        )
        .unwrap()
    }

    #[test]
    fn rank_key_orders_reward_then_score_then_text() {
        let c = SearchConfig::default();
        let a = rank_key("b", 1.0, 0.0, 0.0, &c);
        let b = rank_key("a", 0.5, 9.0, 0.0, &c);
        assert_eq!(a.rank_cmp(&b), Ordering::Less);
        let a = rank_key("b", 1.0, 2.0, 0.0, &c);
        let b = rank_key("a", 1.0, 1.0, 0.0, &c);
        assert_eq!(a.rank_cmp(&b), Ordering::Less);
        let a = rank_key("a", 1.0, 1.0, 0.0, &c);
        let b = rank_key("b", 1.0, 1.0, 0.0, &c);
        assert_eq!(a.rank_cmp(&b), Ordering::Less);
        // shaping adds η·critique to the score component
        let s = SearchConfig { shaping: true, eta: 5.0, ..c };
        let a = rank_key("b", 1.0, 0.0, 1.0, &s);
        let b = rank_key("a", 1.0, 4.0, 0.0, &s);
        assert_eq!(a.rank_cmp(&b), Ordering::Less);
        let f = SearchConfig { lambda: Lambda::Finite(2.0), ..SearchConfig::default() };
        let a = rank_key("a", 1.0, 0.0, 0.0, &f);
        let b = rank_key("b", 0.0, 2.5, 0.0, &f);
        assert_eq!(a.rank_cmp(&b), Ordering::Greater);
    }

    #[test]
    fn wide_beam_finds_every_program() {
        let t = toy();
        let toks = tokenize("which club had more than 21 losses");
        let gold: AnswerSet = ["Bath"].iter().collect();
        let config = SearchConfig { beam_size: 100_000, max_conditions: 1, ..SearchConfig::default() };
        let lex = Lexicon::new();
        let input = SearchInput { table: &t, tokens: &toks, position: 0, prev: None, gold: Some(&gold) };
        let k = beam_search(input, &ParamVector::new(), &lex, &config);
        let space = ActionSpace::new(&t, &toks, 0, 1);
        let mut expected: Vec<String> = space.enumerate(1_000_000).unwrap().iter().map(|p| p.render(&t)).collect();
        let mut got: Vec<String> = k.texts().iter().map(|s| s.to_string()).collect();
        expected.sort();
        got.sort();
        assert_eq!(got, expected);
        assert!(k.compatible().all(|c| c.answer == gold && c.reward == 1.0));
        // no question numbers: matches the table-only enumerator
        let k0 = beam_search(SearchInput { tokens: &[], ..input }, &ParamVector::new(), &lex, &config);
        assert_eq!(k0.len(), enumerate_programs(&t, 0, 1).unwrap().len());
    }

    #[test]
    fn zero_model_orders_by_reward_then_text() {
        let t = toy();
        let toks = tokenize("which club had more than 21 losses");
        let gold: AnswerSet = ["Bath"].iter().collect();
        let config = SearchConfig { beam_size: 8, ..SearchConfig::default() };
        let input = SearchInput { table: &t, tokens: &toks, position: 0, prev: None, gold: Some(&gold) };
        let k = beam_search(input, &ParamVector::new(), &Lexicon::new(), &config);
        assert!(!k.is_empty());
        for w in k.candidates.windows(2) {
            assert!(w[0].reward > w[1].reward || (w[0].reward == w[1].reward && w[0].text < w[1].text));
        }
        let again = beam_search(input, &ParamVector::new(), &Lexicon::new(), &config);
        assert_eq!(k.texts(), again.texts());
    }

    #[test]
    fn inference_without_gold_ranks_by_score() {
        let t = toy();
        let toks = tokenize("which club had the most losses");
        let mut theta = ParamVector::new();
        theta.set("q=most|act=max", 3.0);
        theta.set("act=select|col_exact", 1.0);
        theta.set("act=stop", 0.5);
        let config = SearchConfig { beam_size: 4, ..SearchConfig::default() };
        let input = SearchInput { table: &t, tokens: &toks, position: 0, prev: None, gold: None };
        let k = beam_search(input, &theta, &Lexicon::new(), &config);
        let best = k.best_by_score().unwrap();
        assert!(best.text.contains("IS MAX"), "{}", best.text);
        assert!(k.candidates.iter().all(|c| !c.compatible && c.reward == 0.0));
    }

    #[test]
    fn shaping_prefers_lexically_matched_comparator() {
        let t = Table::from_rows(
            "t",
            &["Club", "Losses"],
            &[vec!["Bath", "25"], vec!["Leeds", "15"], vec!["Wasps", "10"], vec!["Sale", "21"]],
        )
        .unwrap();
        let toks = tokenize("of these teams, which had more than 21 losses");
        let gold: AnswerSet = ["Bath"].iter().collect();
        let mut lex = Lexicon::new();
        lex.add("more", ">").unwrap();
        let input = SearchInput { table: &t, tokens: &toks, position: 0, prev: None, gold: Some(&gold) };
        let pos = |k: &CandidateSet, p: &str| k.texts().iter().position(|x| *x == p);
        let base = SearchConfig { beam_size: 100_000, max_conditions: 1, ..SearchConfig::default() };
        let gt = "SELECT Club WHERE Losses > 21";
        let eq = "SELECT Club WHERE Losses = 25";

        let plain = beam_search(input, &ParamVector::new(), &lex, &base);
        assert!(pos(&plain, eq).unwrap() < pos(&plain, gt).unwrap());
        let shaped = beam_search(input, &ParamVector::new(), &lex, &SearchConfig { shaping: true, ..base });
        assert!(pos(&shaped, gt).unwrap() < pos(&shaped, eq).unwrap());
        let g = &shaped.candidates[pos(&shaped, gt).unwrap()];
        let e = &shaped.candidates[pos(&shaped, eq).unwrap()];
        assert_eq!((g.reward, e.reward), (1.0, 1.0));
        assert_eq!((g.score, e.score), (0.0, 0.0));

        let mut a: Vec<&str> = plain.compatible().map(|c| c.text.as_str()).collect();
        let mut b: Vec<&str> = shaped.compatible().map(|c| c.text.as_str()).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn dump_is_one_json_object() {
        let t = toy();
        let toks = tokenize("club");
        let input = SearchInput { table: &t, tokens: &toks, position: 0, prev: None, gold: None };
        let k = beam_search(input, &ParamVector::new(), &Lexicon::new(), &SearchConfig { beam_size: 2, ..Default::default() });
        let line = k.dump_json("s#0@0");
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["example"], "s#0@0");
        assert_eq!(v["beam"].as_array().unwrap().len(), k.len());
        assert!(!line.contains('\n'));
    }
}
