//! The generalized update
//!
//! ```text
//! Δ(K) = Σ_y w(y) · (∇score(y) − Σ_y' q(y') ∇score(y'))
//! ```
//!
//! with an intensity `w` and a competing distribution `q`. Every
//! distribution is normalized over the candidate set K. The scorer is
//! linear, so ∇score(y) is the program's feature vector.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scorer::{softmax, FeatureVector};
use crate::search::{Candidate, CandidateSet};

/// Softening constant of the exploration policy used by off-policy updates.
pub const DEFAULT_SOFTENING: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Beta {
    Finite(f64),
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Intensity {
    Mml,
    Meritocratic(Beta),
    Reinforce,
    OffPolicy,
    Mmr,
    Maver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Competing {
    ModelPolicy,
    MostViolating,
    ViolationUniform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateSpec {
    pub intensity: Intensity,
    pub competing: Competing,
}

impl Intensity {
    /// The competing distribution this intensity is paired with in the
    /// canonical algorithms.
    pub fn canonical_competing(self) -> Competing {
        match self {
            Intensity::Mml | Intensity::Meritocratic(_) | Intensity::Reinforce | Intensity::OffPolicy => {
                Competing::ModelPolicy
            }
            Intensity::Mmr => Competing::MostViolating,
            Intensity::Maver => Competing::ViolationUniform,
        }
    }

    /// Whether the intensity needs a compatible program.
    fn needs_compatible(self) -> bool {
        !matches!(self, Intensity::Reinforce | Intensity::OffPolicy)
    }
}

impl FromStr for Intensity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownUpdateSpec(s.to_string());
        Ok(match s {
            "mml" => Intensity::Mml,
            "reinforce" => Intensity::Reinforce,
            "offpg" => Intensity::OffPolicy,
            "mmr" => Intensity::Mmr,
            "maver" => Intensity::Maver,
            _ => {
                let beta = s.strip_prefix("merit:").ok_or_else(bad)?;
                if beta == "inf" {
                    Intensity::Meritocratic(Beta::Infinite)
                } else {
                    let b: f64 = beta.parse().map_err(|_| bad())?;
                    if !(b >= 0.0 && b.is_finite()) {
                        return Err(bad());
                    }
                    Intensity::Meritocratic(Beta::Finite(b))
                }
            }
        })
    }
}

impl fmt::Display for Intensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Intensity::Mml => f.write_str("mml"),
            Intensity::Meritocratic(Beta::Infinite) => f.write_str("merit:inf"),
            Intensity::Meritocratic(Beta::Finite(b)) => write!(f, "merit:{b}"),
            Intensity::Reinforce => f.write_str("reinforce"),
            Intensity::OffPolicy => f.write_str("offpg"),
            Intensity::Mmr => f.write_str("mmr"),
            Intensity::Maver => f.write_str("maver"),
        }
    }
}

impl FromStr for Competing {
    type Err = Error;

    /// Accepts a distribution name or the name of an algorithm whose
    /// competing distribution is meant (`mix:mmr,mml` pairs MMR's intensity
    /// with MML's model policy).
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "model" => Ok(Competing::ModelPolicy),
            "most_violating" => Ok(Competing::MostViolating),
            "violation_uniform" => Ok(Competing::ViolationUniform),
            _ => s
                .parse::<Intensity>()
                .map(Intensity::canonical_competing)
                .map_err(|_| Error::UnknownUpdateSpec(s.to_string())),
        }
    }
}

impl fmt::Display for Competing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Competing::ModelPolicy => "model",
            Competing::MostViolating => "most_violating",
            Competing::ViolationUniform => "violation_uniform",
        })
    }
}

impl UpdateSpec {
    pub fn canonical(intensity: Intensity) -> Self {
        UpdateSpec {
            intensity,
            competing: intensity.canonical_competing(),
        }
    }

    pub fn mml() -> Self {
        Self::canonical(Intensity::Mml)
    }

    pub fn mmr() -> Self {
        Self::canonical(Intensity::Mmr)
    }

    pub fn maver() -> Self {
        Self::canonical(Intensity::Maver)
    }

    pub fn reinforce() -> Self {
        Self::canonical(Intensity::Reinforce)
    }

    pub fn off_policy() -> Self {
        Self::canonical(Intensity::OffPolicy)
    }

    pub fn meritocratic(beta: Beta) -> Self {
        Self::canonical(Intensity::Meritocratic(beta))
    }

    /// The six canonical algorithms.
    pub fn canonical_set() -> Vec<UpdateSpec> {
        vec![
            Self::mml(),
            Self::meritocratic(Beta::Finite(0.5)),
            Self::reinforce(),
            Self::off_policy(),
            Self::mmr(),
            Self::maver(),
        ]
    }

    pub fn samples(&self) -> bool {
        matches!(self.intensity, Intensity::Reinforce | Intensity::OffPolicy)
    }
}

impl FromStr for UpdateSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("mix:") {
            let (w, q) = rest
                .split_once(',')
                .ok_or_else(|| Error::UnknownUpdateSpec(s.to_string()))?;
            return Ok(UpdateSpec {
                intensity: w.trim().parse()?,
                competing: q.trim().parse()?,
            });
        }
        Ok(UpdateSpec::canonical(s.parse()?))
    }
}

impl fmt::Display for UpdateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.competing == self.intensity.canonical_competing() {
            write!(f, "{}", self.intensity)
        } else {
            write!(f, "mix:{},{}", self.intensity, self.competing)
        }
    }
}

impl Serialize for UpdateSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Why an example produced no update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Skip {
    /// Search found no complete program.
    EmptyCandidates,
    /// No candidate exact-matches the gold answer.
    NoCompatible,
    /// The margin-based competing distribution has an empty violation set.
    NoViolation,
}

/// Model policy p(y) ∝ exp(score(y)) over K.
pub fn model_policy(k: &CandidateSet) -> Vec<f64> {
    let scores: Vec<f64> = k.candidates.iter().map(|c| c.score).collect();
    softmax(&scores)
}

/// Exploration policy u(y) ∝ exp(softening·R(y) + score(y) [+ η·critique(y)]).
pub fn exploration_policy(k: &CandidateSet, softening: f64, shaping_eta: Option<f64>) -> Vec<f64> {
    let logits: Vec<f64> = k
        .candidates
        .iter()
        .map(|c| softening * c.reward + c.score + shaping_eta.map_or(0.0, |eta| eta * c.critique))
        .collect();
    softmax(&logits)
}

/// Index of the `argmax` of `key` over `indices`, smaller text on ties.
fn argmax_by(k: &CandidateSet, indices: impl Iterator<Item = usize>, key: impl Fn(&Candidate) -> f64) -> Option<usize> {
    indices.fold(None, |best: Option<usize>, i| match best {
        None => Some(i),
        Some(b) => {
            let (ci, cb) = (&k.candidates[i], &k.candidates[b]);
            match key(ci).total_cmp(&key(cb)) {
                std::cmp::Ordering::Greater => Some(i),
                std::cmp::Ordering::Equal if ci.text < cb.text => Some(i),
                _ => Some(b),
            }
        }
    })
}

/// y*: the highest-scoring compatible program.
pub fn reference_program(k: &CandidateSet) -> Option<usize> {
    argmax_by(k, (0..k.len()).filter(|&i| k.candidates[i].compatible), |c| c.score)
}

/// V = { y' ≠ y* : score(y') − R(y') ≥ score(y*) − R(y*) }.
pub fn violation_set(k: &CandidateSet, star: usize) -> Vec<usize> {
    let s = &k.candidates[star];
    let bar = s.score - s.reward;
    (0..k.len())
        .filter(|&i| i != star && k.candidates[i].score - k.candidates[i].reward >= bar)
        .collect()
}

/// ȳ = argmax_{y' ≠ y*} score(y') − R(y'), reported only when it violates.
pub fn most_violating(k: &CandidateSet, star: usize) -> Option<usize> {
    let best = argmax_by(k, (0..k.len()).filter(|&i| i != star), |c| c.score - c.reward)?;
    let (b, s) = (&k.candidates[best], &k.candidates[star]);
    (b.score - b.reward >= s.score - s.reward).then_some(best)
}

/// Inverse-CDF draw over the support sorted by serialization.
pub fn sample_from<R: Rng + ?Sized>(k: &CandidateSet, dist: &[f64], rng: &mut R) -> usize {
    assert_eq!(dist.len(), k.len(), "sample_from: distribution does not cover K");
    assert!(!dist.is_empty(), "sample_from: empty support");
    let total: f64 = dist.iter().sum();
    debug_assert!((total - 1.0).abs() < 1e-9, "sample_from: mass {total}");
    let mut order: Vec<usize> = (0..k.len()).collect();
    order.sort_by(|&a, &b| k.candidates[a].text.cmp(&k.candidates[b].text));
    let u: f64 = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = order[0];
    for &i in &order {
        if dist[i] <= 0.0 {
            continue;
        }
        acc += dist[i];
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Inputs of one update beyond K itself.
#[derive(Debug, Clone)]
pub struct UpdateContext<'a> {
    pub candidates: &'a CandidateSet,
    /// Exploration distribution over K, used by off-policy intensities.
    pub exploration: Vec<f64>,
    /// Label used in error messages.
    pub example: String,
}

impl<'a> UpdateContext<'a> {
    pub fn new(candidates: &'a CandidateSet, exploration: Vec<f64>, example: impl Into<String>) -> Self {
        UpdateContext {
            candidates,
            exploration,
            example: example.into(),
        }
    }

    /// Context whose exploration distribution is the default softened one.
    pub fn with_default_exploration(candidates: &'a CandidateSet, example: impl Into<String>) -> Self {
        Self::new(candidates, exploration_policy(candidates, DEFAULT_SOFTENING, None), example)
    }
}

/// w(y) over K, or the reason there is none. Sampling intensities draw from
/// `rng`; the others leave it untouched.
pub fn intensity<R: Rng + ?Sized>(
    intensity: Intensity,
    ctx: &UpdateContext<'_>,
    rng: &mut R,
) -> std::result::Result<Vec<f64>, Skip> {
    let k = ctx.candidates;
    if k.is_empty() {
        return Err(Skip::EmptyCandidates);
    }
    let n = k.len();
    let compat: Vec<usize> = (0..n).filter(|&i| k.candidates[i].compatible).collect();
    if intensity.needs_compatible() && compat.is_empty() {
        return Err(Skip::NoCompatible);
    }
    let mut w = vec![0.0; n];
    match intensity {
        Intensity::Mml => {
            let p = model_policy(k);
            let z: f64 = compat.iter().map(|&i| p[i]).sum();
            if z > 0.0 {
                for &i in &compat {
                    w[i] = p[i] / z;
                }
            } else {
                // every compatible program underflowed: fall back to log space
                let logits: Vec<f64> = compat.iter().map(|&i| k.candidates[i].score).collect();
                for (&i, v) in compat.iter().zip(softmax(&logits)) {
                    w[i] = v;
                }
            }
        }
        Intensity::Meritocratic(Beta::Finite(beta)) => {
            let logits: Vec<f64> = compat.iter().map(|&i| beta * k.candidates[i].score).collect();
            for (&i, v) in compat.iter().zip(softmax(&logits)) {
                w[i] = v;
            }
        }
        Intensity::Meritocratic(Beta::Infinite) => {
            let top = compat
                .iter()
                .map(|&i| k.candidates[i].score)
                .fold(f64::NEG_INFINITY, f64::max);
            let winners: Vec<usize> = compat.iter().copied().filter(|&i| k.candidates[i].score == top).collect();
            for &i in &winners {
                w[i] = 1.0 / winners.len() as f64;
            }
        }
        Intensity::Reinforce => {
            let p = model_policy(k);
            let y = sample_from(k, &p, rng);
            w[y] = k.candidates[y].reward;
        }
        Intensity::OffPolicy => {
            let p = model_policy(k);
            let y = sample_from(k, &ctx.exploration, rng);
            w[y] = k.candidates[y].reward * p[y] / ctx.exploration[y];
        }
        Intensity::Mmr | Intensity::Maver => {
            let star = reference_program(k).expect("compatible is nonempty");
            w[star] = 1.0;
        }
    }
    Ok(w)
}

/// q(y) over K, or the reason there is none.
pub fn competing(competing: Competing, k: &CandidateSet) -> std::result::Result<Vec<f64>, Skip> {
    if k.is_empty() {
        return Err(Skip::EmptyCandidates);
    }
    match competing {
        Competing::ModelPolicy => Ok(model_policy(k)),
        Competing::MostViolating | Competing::ViolationUniform => {
            let star = reference_program(k).ok_or(Skip::NoCompatible)?;
            let mut q = vec![0.0; k.len()];
            if competing == Competing::MostViolating {
                let bar = most_violating(k, star).ok_or(Skip::NoViolation)?;
                q[bar] = 1.0;
            } else {
                let v = violation_set(k, star);
                if v.is_empty() {
                    return Err(Skip::NoViolation);
                }
                for &i in &v {
                    q[i] = 1.0 / v.len() as f64;
                }
            }
            Ok(q)
        }
    }
}

/// Σ_y w(y)(f(y) − Σ_y' q(y') f(y')).
pub fn combine(k: &CandidateSet, w: &[f64], q: &[f64]) -> FeatureVector {
    let mut expected = FeatureVector::new();
    for (c, &qi) in k.candidates.iter().zip(q) {
        if qi != 0.0 {
            expected.add_scaled(&c.features, qi);
        }
    }
    let mut delta = FeatureVector::new();
    let mut total_w = 0.0;
    for (c, &wi) in k.candidates.iter().zip(w) {
        if wi != 0.0 {
            delta.add_scaled(&c.features, wi);
            total_w += wi;
        }
    }
    if total_w != 0.0 {
        delta.add_scaled(&expected, -total_w);
    }
    delta
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub delta: FeatureVector,
    pub skip: Option<Skip>,
}

/// Δ(K) for `spec`. Skips yield a zero delta and the reason.
pub fn generalized_update<R: Rng + ?Sized>(
    spec: &UpdateSpec,
    ctx: &UpdateContext<'_>,
    rng: &mut R,
) -> Result<UpdateOutcome> {
    let k = ctx.candidates;
    let skipped = |skip| {
        Ok(UpdateOutcome {
            delta: FeatureVector::new(),
            skip: Some(skip),
        })
    };
    let w = match intensity(spec.intensity, ctx, rng) {
        Ok(w) => w,
        Err(skip) => return skipped(skip),
    };
    let q = match competing(spec.competing, k) {
        Ok(q) => q,
        Err(skip) => return skipped(skip),
    };
    if w.iter().chain(&q).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            example: ctx.example.clone(),
        });
    }
    let delta = combine(k, &w, &q);
    if !delta.is_finite() {
        return Err(Error::NonFinite {
            example: ctx.example.clone(),
        });
    }
    Ok(UpdateOutcome { delta, skip: None })
}

/// The explicit objectives whose gradients the updates follow, as functions
/// of the per-candidate scores. Used for gradient checks.
pub mod objectives {
    fn logsumexp(xs: impl Iterator<Item = f64>) -> f64 {
        let xs: Vec<f64> = xs.collect();
        let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            return m;
        }
        m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
    }

    fn argmax(idx: impl Iterator<Item = usize>, key: impl Fn(usize) -> f64, texts: &[&str]) -> Option<usize> {
        idx.fold(None, |b: Option<usize>, i| match b {
            None => Some(i),
            Some(b) if key(i) > key(b) || (key(i) == key(b) && texts[i] < texts[b]) => Some(i),
            b => b,
        })
    }

    /// log Σ_{compatible} p(y) with p normalized over K.
    pub fn mml(scores: &[f64], compatible: &[bool]) -> f64 {
        let num = logsumexp(scores.iter().zip(compatible).filter(|(_, &c)| c).map(|(s, _)| *s));
        num - logsumexp(scores.iter().copied())
    }

    /// Σ_y p(y) R(y).
    pub fn expected_reward(scores: &[f64], rewards: &[f64]) -> f64 {
        super::softmax(scores).iter().zip(rewards).map(|(p, r)| p * r).sum()
    }

    fn star(scores: &[f64], compatible: &[bool], texts: &[&str]) -> Option<usize> {
        argmax((0..scores.len()).filter(|&i| compatible[i]), |i| scores[i], texts)
    }

    /// −max(0, score(ȳ) − score(y*) + R(y*) − R(ȳ)).
    pub fn mmr(scores: &[f64], rewards: &[f64], compatible: &[bool], texts: &[&str]) -> f64 {
        let Some(s) = star(scores, compatible, texts) else { return 0.0 };
        let Some(b) = argmax((0..scores.len()).filter(|&i| i != s), |i| scores[i] - rewards[i], texts) else {
            return 0.0;
        };
        -(scores[b] - scores[s] + rewards[s] - rewards[b]).max(0.0)
    }

    /// −(1/|V|) Σ_{y'∈V} (score(y') − score(y*) + R(y*) − R(y')).
    pub fn maver(scores: &[f64], rewards: &[f64], compatible: &[bool], texts: &[&str]) -> f64 {
        let Some(s) = star(scores, compatible, texts) else { return 0.0 };
        let bar = scores[s] - rewards[s];
        let v: Vec<usize> = (0..scores.len()).filter(|&i| i != s && scores[i] - rewards[i] >= bar).collect();
        if v.is_empty() {
            return 0.0;
        }
        -v.iter().map(|&i| scores[i] - scores[s] + rewards[s] - rewards[i]).sum::<f64>() / v.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{Action, Program, ProgramState};
    use crate::table::AnswerSet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Candidates with given scores, rewards and single-feature vectors.
    pub(crate) fn fake(entries: &[(&str, f64, f64)]) -> CandidateSet {
        let candidates = entries
            .iter()
            .enumerate()
            .map(|(i, &(text, score, reward))| {
                let mut features = FeatureVector::new();
                features.add(&format!("f{i}"), 1.0);
                features.add("bias", 1.0);
                Candidate {
                    program: Program::from_state(ProgramState::new().with(Action::Select(0)).with(Action::Stop)).unwrap(),
                    text: text.to_string(),
                    features,
                    score,
                    reward,
                    critique: 0.0,
                    answer: AnswerSet::new(),
                    compatible: reward == 1.0,
                }
            })
            .collect();
        CandidateSet { candidates }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn spec_strings_round_trip() {
        for s in ["mml", "merit:0.5", "merit:inf", "reinforce", "offpg", "mmr", "maver", "mix:mmr,model", "mix:maver,most_violating"] {
            let spec: UpdateSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert_eq!("mix:mmr,mml".parse::<UpdateSpec>().unwrap().to_string(), "mix:mmr,model");
        let mix: UpdateSpec = "mix:mmr,mml".parse().unwrap();
        assert_eq!(mix.intensity, Intensity::Mmr);
        assert_eq!(mix.competing, Competing::ModelPolicy);
        assert_eq!("mix:mml,mmr".parse::<UpdateSpec>().unwrap().competing, Competing::MostViolating);
        assert_eq!("mix:mmr,mmr".parse::<UpdateSpec>().unwrap(), UpdateSpec::mmr());
        for bad in ["", "sgd", "merit:", "merit:-1", "mix:mml", "mix:mml,foo"] {
            assert!(bad.parse::<UpdateSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn mml_and_meritocratic_intensities() {
        // p = (0.2, 0.6, 0.2)
        let l3 = 3f64.ln();
        let k = fake(&[("a", 0.0, 1.0), ("b", l3, 1.0), ("c", 0.0, 0.0)]);
        let ctx = UpdateContext::with_default_exploration(&k, "x");
        let w = intensity(Intensity::Mml, &ctx, &mut rng()).unwrap();
        assert!((w[0] - 0.25).abs() < 1e-15 && (w[1] - 0.75).abs() < 1e-15 && w[2] == 0.0);
        let w0 = intensity(Intensity::Meritocratic(Beta::Finite(0.0)), &ctx, &mut rng()).unwrap();
        assert_eq!(w0, vec![0.5, 0.5, 0.0]);
        let w1 = intensity(Intensity::Meritocratic(Beta::Finite(1.0)), &ctx, &mut rng()).unwrap();
        for (a, b) in w1.iter().zip(&w) {
            assert!((a - b).abs() < 1e-12);
        }
        let wi = intensity(Intensity::Meritocratic(Beta::Infinite), &ctx, &mut rng()).unwrap();
        assert_eq!(wi, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn reference_and_violations() {
        let k = fake(&[("ystar", 1.0, 1.0), ("yprime", 1.5, 0.0)]);
        assert_eq!(reference_program(&k), Some(0));
        assert_eq!(violation_set(&k, 0), vec![1]);
        assert_eq!(most_violating(&k, 0), Some(1));

        let k = fake(&[("ystar", 1.0, 1.0), ("low", -5.0, 0.0)]);
        assert!(violation_set(&k, 0).is_empty());
        assert_eq!(most_violating(&k, 0), None);

        let k = fake(&[("p1", 2.0, 1.0), ("p2", 5.0, 1.0)]);
        assert_eq!(reference_program(&k), Some(1));
        let k = fake(&[("zz", 2.0, 1.0), ("aa", 2.0, 1.0)]);
        assert_eq!(reference_program(&k), Some(1));
        // margins 0.5 and 1.2; ties go to the smaller text
        let k = fake(&[("s", 0.0, 1.0), ("b", -0.5, 0.0), ("a", 0.2, 0.0), ("c", 0.2, 0.0)]);
        assert_eq!(most_violating(&k, 0), Some(2));
        assert_eq!(reference_program(&fake(&[("x", 0.0, 0.5)])), None);
    }

    #[test]
    fn competing_distributions() {
        let k = fake(&[("a", 0.0, 1.0), ("b", 0.0, 0.0), ("c", 0.0, 0.0), ("d", 0.0, 0.0)]);
        assert_eq!(competing(Competing::ModelPolicy, &k).unwrap(), vec![0.25; 4]);
        let k = fake(&[("s", 0.0, 1.0), ("b", 0.0, 0.0), ("c", 2.0, 0.0), ("d", -3.0, 0.0)]);
        assert_eq!(competing(Competing::ViolationUniform, &k).unwrap(), vec![0.0, 0.5, 0.5, 0.0]);
        assert_eq!(competing(Competing::MostViolating, &k).unwrap(), vec![0.0, 0.0, 1.0, 0.0]);
        let none = fake(&[("s", 5.0, 1.0), ("b", 0.0, 0.0)]);
        assert_eq!(competing(Competing::MostViolating, &none), Err(Skip::NoViolation));
        assert_eq!(competing(Competing::ViolationUniform, &fake(&[("b", 0.0, 0.0)])), Err(Skip::NoCompatible));
    }

    #[test]
    fn mmr_delta_is_feature_difference() {
        let k = fake(&[("s", 1.0, 1.0), ("b", 1.5, 0.0), ("c", -4.0, 0.0)]);
        let ctx = UpdateContext::with_default_exploration(&k, "x");
        let out = generalized_update(&UpdateSpec::mmr(), &ctx, &mut rng()).unwrap();
        let mut expect = FeatureVector::new();
        expect.add("f0", 1.0);
        expect.add("f1", -1.0);
        assert_eq!(out.delta, expect);
        assert_eq!(out.skip, None);
    }

    #[test]
    fn skips_give_zero_delta() {
        let k = fake(&[("a", 0.0, 0.5), ("b", 0.0, 0.0)]);
        let ctx = UpdateContext::with_default_exploration(&k, "x");
        for spec in [UpdateSpec::mml(), UpdateSpec::mmr(), UpdateSpec::maver()] {
            let out = generalized_update(&spec, &ctx, &mut rng()).unwrap();
            assert!(out.delta.is_empty());
            assert_eq!(out.skip, Some(Skip::NoCompatible));
        }
        let empty = CandidateSet::default();
        let ctx = UpdateContext::with_default_exploration(&empty, "x");
        let out = generalized_update(&UpdateSpec::reinforce(), &ctx, &mut rng()).unwrap();
        assert_eq!(out.skip, Some(Skip::EmptyCandidates));
    }

    #[test]
    fn non_finite_scores_are_an_error() {
        let k = fake(&[("a", f64::NAN, 1.0), ("b", 0.0, 0.0)]);
        let ctx = UpdateContext::with_default_exploration(&k, "seq#0@1");
        let err = generalized_update(&UpdateSpec::mml(), &ctx, &mut rng()).unwrap_err();
        assert!(err.to_string().contains("seq#0@1"));
    }

    #[test]
    fn sampler_is_deterministic_and_calibrated() {
        let k = fake(&[("b", 0.0, 0.0), ("a", 0.0, 0.0)]);
        assert_eq!(sample_from(&k, &[0.0, 1.0], &mut rng()), 1);
        let draws = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| sample_from(&k, &[0.5, 0.5], &mut r)).collect::<Vec<_>>()
        };
        assert_eq!(draws(3), draws(3));
        let mut r = rng();
        let n = 100_000;
        let hits = (0..n).filter(|_| sample_from(&k, &[0.75, 0.25], &mut r) == 0).count();
        assert!((hits as f64 / n as f64 - 0.75).abs() < 0.01);
    }

    #[test]
    fn off_policy_with_u_equal_p_matches_reinforce() {
        let k = fake(&[("a", 0.3, 1.0), ("b", -0.2, 0.5), ("c", 1.1, 0.0)]);
        let ctx = UpdateContext::new(&k, model_policy(&k), "x");
        for seed in 0..20 {
            let a = generalized_update(&UpdateSpec::reinforce(), &ctx, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let b = generalized_update(&UpdateSpec::off_policy(), &ctx, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn objectives_examples() {
        let scores = [0.0, 3f64.ln(), 0.0];
        let compat = [true, true, false];
        assert!((objectives::mml(&scores, &compat) - 0.8f64.ln()).abs() < 1e-15);
        let texts = ["s", "b"];
        assert_eq!(objectives::mmr(&[1.0, 1.5], &[1.0, 0.0], &[true, false], &texts), -1.5);
        assert_eq!(objectives::mmr(&[1.0, -1.5], &[1.0, 0.0], &[true, false], &texts), 0.0);
        assert_eq!(objectives::maver(&[1.0, 1.5], &[1.0, 0.0], &[true, false], &texts), -1.5);
    }
}
