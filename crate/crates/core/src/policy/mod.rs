//! Featurized softmax sequence policy from query text to edit programs.
//!
//! At step `t` the policy scores every vocabulary token linearly from sparse
//! binary features of the query and the previously emitted token, then
//! samples from the softmax. Log-probabilities and their gradients are
//! exact, which is what the REINFORCE estimator needs.

mod train;

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{tokenize_query, validate_for_variant, DslError, Program, ProgramToken};
use crate::scene::Variant;

pub use train::{
    evaluate_greedy, finetune, pretrain_supervised, program_reward, Baseline, CurvePoint, Example, RewardMode,
    TrainConfig,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("query has no words")]
    EmptyQuery,
    #[error("GED must be a nonnegative number, got {0}")]
    NegativeDistance(f64),
    #[error("trajectory {0} has no reward")]
    UnsetReward(usize),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("no training pairs")]
    EmptyPairs,
    #[error("dataset has no examples")]
    EmptyDataset,
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("token {0} appears twice in the vocabulary")]
    DuplicateToken(String),
    #[error("gold program uses token {0}, which is not in the vocabulary")]
    TokenNotInVocab(String),
    #[error("gold program {program} is invalid: {source}")]
    InvalidGold { program: String, source: DslError },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("invalid model file: {0}")]
    Model(String),
}

/// `max(0, 1 - d)`: the same clamp serves both presets.
pub fn reward_from_ged(d: f64) -> Result<f64, PolicyError> {
    if d.is_nan() || d < 0.0 {
        return Err(PolicyError::NegativeDistance(d));
    }
    Ok((1.0 - d).max(0.0))
}

/// Exact-match reward: 1 iff the distance is zero.
pub fn reward01(d: f64) -> Result<f64, PolicyError> {
    reward_from_ged(d)?;
    Ok(if d == 0.0 { 1.0 } else { 0.0 })
}

/// A query resolved against the policy's word and bigram dictionaries.
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    pub tokens: Vec<String>,
    words: Vec<usize>,
    bigrams: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub context: Vec<String>,
    /// Vocabulary indices, one per step.
    pub actions: Vec<usize>,
    pub logprobs: Vec<f64>,
    pub reward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    variant: Variant,
    vocab: Vec<ProgramToken>,
    max_len: usize,
    words: Vec<String>,
    bigrams: Vec<String>,
    word_index: HashMap<String, usize>,
    bigram_index: HashMap<String, usize>,
    theta: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyFile {
    variant: Variant,
    max_len: usize,
    vocab: Vec<String>,
    words: Vec<String>,
    bigrams: Vec<String>,
    theta: Vec<f64>,
}

fn bigrams_of(tokens: &[String]) -> impl Iterator<Item = String> + '_ {
    tokens.windows(2).map(|w| format!("{} {}", w[0], w[1]))
}

impl Policy {
    /// Zero-initialized policy whose dictionaries cover `queries`.
    pub fn new(variant: Variant, vocab: Vec<ProgramToken>, max_len: usize, queries: &[&str]) -> Result<Policy, PolicyError> {
        let mut words = BTreeSet::new();
        let mut bigrams = BTreeSet::new();
        for q in queries {
            let toks = tokenize_query(q);
            bigrams.extend(bigrams_of(&toks));
            words.extend(toks);
        }
        Policy::from_parts(variant, vocab, max_len, words.into_iter().collect(), bigrams.into_iter().collect(), None)
    }

    fn from_parts(
        variant: Variant,
        vocab: Vec<ProgramToken>,
        max_len: usize,
        words: Vec<String>,
        bigrams: Vec<String>,
        theta: Option<Vec<f64>>,
    ) -> Result<Policy, PolicyError> {
        if vocab.is_empty() {
            return Err(PolicyError::EmptyVocabulary);
        }
        let mut seen = BTreeSet::new();
        for t in &vocab {
            if !seen.insert(t) {
                return Err(PolicyError::DuplicateToken(t.to_string()));
            }
        }
        if max_len == 0 {
            return Err(PolicyError::Config("max_len must be positive".into()));
        }
        let word_index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        let bigram_index = bigrams.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        let mut p = Policy { variant, vocab, max_len, words, bigrams, word_index, bigram_index, theta: Vec::new() };
        let size = p.n_features() * p.n_actions();
        match theta {
            Some(t) if t.len() != size => {
                return Err(PolicyError::Model(format!("expected {size} parameters, found {}", t.len())))
            }
            Some(t) => p.theta = t,
            None => p.theta = vec![0.0; size],
        }
        Ok(p)
    }

    /// Every non-add token legal for `variant`, plus the add tokens the golds use.
    pub fn full_vocab(variant: Variant, golds: &[Program]) -> Vec<ProgramToken> {
        let mut vocab: Vec<ProgramToken> =
            ProgramToken::all_for(variant).into_iter().filter(|t| !matches!(t, ProgramToken::Add(_))).collect();
        let adds: BTreeSet<ProgramToken> =
            golds.iter().flat_map(|g| g.body()).filter(|t| matches!(t, ProgramToken::Add(_))).cloned().collect();
        vocab.extend(adds);
        vocab
    }

    /// Only the tokens the golds use, plus padding.
    pub fn observed_vocab(golds: &[Program]) -> Vec<ProgramToken> {
        let mut set: BTreeSet<ProgramToken> = golds.iter().flat_map(|g| g.body()).cloned().collect();
        set.insert(ProgramToken::NullPad);
        set.into_iter().collect()
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn vocab(&self) -> &[ProgramToken] {
        &self.vocab
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn n_actions(&self) -> usize {
        self.vocab.len()
    }

    pub fn n_features(&self) -> usize {
        let (l, w, b) = (self.max_len, self.words.len(), self.bigrams.len());
        1 + l + (self.vocab.len() + 1) + w * (1 + l) + b * (1 + l)
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn token_index(&self, token: &ProgramToken) -> Option<usize> {
        self.vocab.iter().position(|t| t == token)
    }

    pub fn context(&self, query: &str) -> Result<Context, PolicyError> {
        self.context_from_tokens(tokenize_query(query))
    }

    pub fn context_from_tokens(&self, tokens: Vec<String>) -> Result<Context, PolicyError> {
        if tokens.is_empty() {
            return Err(PolicyError::EmptyQuery);
        }
        let mut words: Vec<usize> = tokens.iter().filter_map(|w| self.word_index.get(w).copied()).collect();
        words.sort_unstable();
        words.dedup();
        let mut bigrams: Vec<usize> = bigrams_of(&tokens).filter_map(|b| self.bigram_index.get(&b).copied()).collect();
        bigrams.sort_unstable();
        bigrams.dedup();
        Ok(Context { tokens, words, bigrams })
    }

    /// Active feature indices at step `t` after emitting `prev`.
    pub fn features(&self, ctx: &Context, t: usize, prev: Option<usize>) -> Vec<usize> {
        let (l, v, w, b) = (self.max_len, self.vocab.len(), self.words.len(), self.bigrams.len());
        let prev_base = 1 + l;
        let word_base = prev_base + v + 1;
        let word_t_base = word_base + w;
        let bigram_base = word_t_base + w * l;
        let bigram_t_base = bigram_base + b;
        let mut f = Vec::with_capacity(3 + 2 * (ctx.words.len() + ctx.bigrams.len()));
        f.push(0);
        f.push(1 + t);
        f.push(prev_base + prev.unwrap_or(v));
        for &i in &ctx.words {
            f.push(word_base + i);
            f.push(word_t_base + i * l + t);
        }
        for &i in &ctx.bigrams {
            f.push(bigram_base + i);
            f.push(bigram_t_base + i * l + t);
        }
        f
    }

    fn scores(&self, features: &[usize]) -> Vec<f64> {
        let a = self.vocab.len();
        let mut s = vec![0.0; a];
        for &f in features {
            for (si, th) in s.iter_mut().zip(&self.theta[f * a..(f + 1) * a]) {
                *si += th;
            }
        }
        s
    }

    /// Log-softmax over the vocabulary at step `t`.
    pub fn log_probs(&self, ctx: &Context, t: usize, prev: Option<usize>) -> Vec<f64> {
        let s = self.scores(&self.features(ctx, t, prev));
        let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + s.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        s.into_iter().map(|x| x - log_z).collect()
    }

    pub fn probs(&self, ctx: &Context, t: usize, prev: Option<usize>) -> Vec<f64> {
        self.log_probs(ctx, t, prev).into_iter().map(f64::exp).collect()
    }

    /// Log-probability of the whole action sequence.
    pub fn log_prob(&self, ctx: &Context, actions: &[usize]) -> f64 {
        let mut prev = None;
        let mut total = 0.0;
        for (t, &a) in actions.iter().enumerate() {
            total += self.log_probs(ctx, t, prev)[a];
            prev = Some(a);
        }
        total
    }

    pub fn sample<R: Rng>(&self, ctx: &Context, rng: &mut R) -> Trajectory {
        let mut actions = Vec::with_capacity(self.max_len);
        let mut logprobs = Vec::with_capacity(self.max_len);
        let mut prev = None;
        for t in 0..self.max_len {
            let lp = self.log_probs(ctx, t, prev);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = lp.len() - 1;
            for (i, x) in lp.iter().enumerate() {
                acc += x.exp();
                if u < acc {
                    pick = i;
                    break;
                }
            }
            actions.push(pick);
            logprobs.push(lp[pick]);
            prev = Some(pick);
        }
        Trajectory { context: ctx.tokens.clone(), actions, logprobs, reward: None }
    }

    /// Most likely token at each step.
    pub fn greedy(&self, ctx: &Context) -> Vec<usize> {
        let mut actions = Vec::with_capacity(self.max_len);
        let mut prev = None;
        for t in 0..self.max_len {
            let lp = self.log_probs(ctx, t, prev);
            let mut best = 0;
            for (i, x) in lp.iter().enumerate() {
                if *x > lp[best] {
                    best = i;
                }
            }
            actions.push(best);
            prev = Some(best);
        }
        actions
    }

    /// Adds `coef[t] * d log pi(a_t | s_t) / d theta` into `out`.
    pub fn accumulate_grad(&self, ctx: &Context, actions: &[usize], coef: &[f64], out: &mut [f64]) {
        let a_n = self.vocab.len();
        let mut prev = None;
        for (t, &a) in actions.iter().enumerate() {
            let c = coef[t];
            if c != 0.0 {
                let feats = self.features(ctx, t, prev);
                let p = self.probs(ctx, t, prev);
                for &f in &feats {
                    let row = &mut out[f * a_n..(f + 1) * a_n];
                    for (b, g) in row.iter_mut().enumerate() {
                        let indicator = if b == a { 1.0 } else { 0.0 };
                        *g += c * (indicator - p[b]);
                    }
                }
            }
            prev = Some(a);
        }
    }

    /// Program from the actions, cut at the first padding token.
    pub fn decode(&self, actions: &[usize]) -> Result<Program, DslError> {
        let body: Vec<ProgramToken> = actions
            .iter()
            .map(|&a| self.vocab[a].clone())
            .take_while(|t| *t != ProgramToken::NullPad)
            .collect();
        let program = Program::new(body, self.max_len)?;
        validate_for_variant(&program, self.variant)?;
        Ok(program)
    }

    /// Vocabulary indices of a gold program, padding included.
    pub fn encode_program(&self, program: &Program) -> Result<Vec<usize>, PolicyError> {
        validate_for_variant(program, self.variant)
            .map_err(|source| PolicyError::InvalidGold { program: program.to_string(), source })?;
        if program.max_len() != self.max_len {
            return Err(PolicyError::Config(format!(
                "gold program length {} differs from policy length {}",
                program.max_len(),
                self.max_len
            )));
        }
        program
            .tokens()
            .iter()
            .map(|t| self.token_index(t).ok_or_else(|| PolicyError::TokenNotInVocab(t.to_string())))
            .collect()
    }

    pub fn to_json(&self) -> String {
        let file = PolicyFile {
            variant: self.variant,
            max_len: self.max_len,
            vocab: self.vocab.iter().map(|t| t.to_string()).collect(),
            words: self.words.clone(),
            bigrams: self.bigrams.clone(),
            theta: self.theta.clone(),
        };
        serde_json::to_string(&file).expect("model serialization cannot fail") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Policy, PolicyError> {
        let file: PolicyFile = serde_json::from_str(text).map_err(|e| PolicyError::Model(e.to_string()))?;
        let vocab = file
            .vocab
            .iter()
            .map(|s| s.parse::<ProgramToken>().map_err(|e| PolicyError::Model(format!("token {s:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        Policy::from_parts(file.variant, vocab, file.max_len, file.words, file.bigrams, Some(file.theta))
    }
}

/// Convenience wrapper: sample from a seed.
pub fn sample_program(p: &Policy, query: &str, seed: u64) -> Result<Trajectory, PolicyError> {
    let ctx = p.context(query)?;
    Ok(p.sample(&ctx, &mut crate::rng_for(seed, 0)))
}

/// Batch mean of `(r - baseline) * sum_t gamma^(T-1-t) * grad log pi(a_t | s_t)`.
///
/// The reward arrives after the last step, so step `t` sees it discounted
/// by the number of steps that follow.
pub fn reinforce_gradient(p: &Policy, batch: &[Trajectory], baseline: f64, gamma: f64) -> Result<Vec<f64>, PolicyError> {
    if batch.is_empty() {
        return Err(PolicyError::EmptyBatch);
    }
    let mut grad = vec![0.0; p.theta.len()];
    let n = batch.len() as f64;
    for (i, tr) in batch.iter().enumerate() {
        let r = tr.reward.ok_or(PolicyError::UnsetReward(i))?;
        let adv = (r - baseline) / n;
        if adv == 0.0 {
            continue;
        }
        let ctx = p.context_from_tokens(tr.context.clone())?;
        let steps = tr.actions.len();
        let coef: Vec<f64> = (0..steps).map(|t| adv * gamma.powi((steps - 1 - t) as i32)).collect();
        p.accumulate_grad(&ctx, &tr.actions, &coef, &mut grad);
    }
    Ok(grad)
}
