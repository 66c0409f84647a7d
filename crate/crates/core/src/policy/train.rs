//! Supervised pretraining and REINFORCE finetuning with the GED reward.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{reinforce_gradient, reward01, reward_from_ged, Context, Policy, PolicyError};
use crate::dsl::Program;
use crate::engine::execute;
use crate::ged::{ged_within, CostModel};
use crate::scene::SceneGraph;
use crate::{rng_for, Preset};

const STREAM_SPLIT: u64 = 1;
const STREAM_BATCH: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    Ged,
    Binary,
}

impl FromStr for RewardMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ged" => Ok(RewardMode::Ged),
            "binary" => Ok(RewardMode::Binary),
            _ => Err(format!("unknown reward mode {s:?} (expected ged or binary)")),
        }
    }
}

impl fmt::Display for RewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardMode::Ged => "ged",
            RewardMode::Binary => "binary",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    None,
    MovingAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub pretrain_learning_rate: f64,
    pub pretrain_epochs: usize,
    pub batch_size: usize,
    pub iterations: usize,
    pub early_stop_patience: usize,
    /// Iterations between validation evaluations.
    pub eval_every: usize,
    pub baseline: Baseline,
    pub baseline_decay: f64,
    pub reward: RewardMode,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 1.0,
            learning_rate: 1e-4,
            pretrain_learning_rate: 6e-4,
            pretrain_epochs: 200,
            batch_size: 64,
            iterations: 1000,
            early_stop_patience: 5,
            eval_every: 20,
            baseline: Baseline::MovingAverage,
            baseline_decay: 0.9,
            reward: RewardMode::Ged,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn for_preset(preset: Preset) -> Self {
        let pretrain_learning_rate = match preset {
            Preset::Css => 6e-4,
            Preset::Crir => 7e-4,
        };
        TrainConfig { pretrain_learning_rate, ..TrainConfig::default() }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: String| Err(PolicyError::Config(m));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        for (name, v) in [("learning_rate", self.learning_rate), ("pretrain_learning_rate", self.pretrain_learning_rate)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("iterations", self.iterations),
            ("early_stop_patience", self.early_stop_patience),
            ("eval_every", self.eval_every),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return bad(format!("baseline_decay must lie in [0, 1), got {}", self.baseline_decay));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad(format!("validation_fraction must lie in [0, 1), got {}", self.validation_fraction));
        }
        Ok(())
    }
}

/// One finetuning query: text, the scene it edits, and the scene it should yield.
#[derive(Debug, Clone)]
pub struct Example {
    pub query: String,
    pub input: SceneGraph,
    pub target: SceneGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub mean_reward: Option<f64>,
    pub validation_reward: Option<f64>,
}

/// Full-batch gradient ascent on the mean gold log-likelihood.
/// Returns the trained policy and the loss (mean negative log-likelihood)
/// before each epoch and after the last.
pub fn pretrain_supervised(
    policy: &Policy,
    pairs: &[(String, Program)],
    learning_rate: f64,
    epochs: usize,
) -> Result<(Policy, Vec<f64>), PolicyError> {
    if pairs.is_empty() {
        return Err(PolicyError::EmptyPairs);
    }
    let data: Vec<(Context, Vec<usize>)> = pairs
        .iter()
        .map(|(q, g)| Ok((policy.context(q)?, policy.encode_program(g)?)))
        .collect::<Result<_, PolicyError>>()?;
    let mut p = policy.clone();
    let n = data.len() as f64;
    let loss = |p: &Policy| -data.iter().map(|(c, a)| p.log_prob(c, a)).sum::<f64>() / n;
    let mut losses = Vec::with_capacity(epochs + 1);
    for _ in 0..epochs {
        losses.push(loss(&p));
        let mut grad = vec![0.0; p.theta.len()];
        for (ctx, actions) in &data {
            p.accumulate_grad(ctx, actions, &vec![1.0 / n; actions.len()], &mut grad);
        }
        for (th, g) in p.theta.iter_mut().zip(&grad) {
            *th += learning_rate * g;
        }
    }
    losses.push(loss(&p));
    Ok((p, losses))
}

/// Reward of the program decoded from `actions` on one example. Programs
/// that fail to decode or execute earn 0.
pub fn program_reward(policy: &Policy, actions: &[usize], ex: &Example, cost: &CostModel, mode: RewardMode) -> f64 {
    let Ok(program) = policy.decode(actions) else { return 0.0 };
    let Ok(run) = execute(&program, &ex.input) else { return 0.0 };
    let bound = match mode {
        RewardMode::Ged => 1.0,
        RewardMode::Binary => 0.0,
    };
    match ged_within(&run.graph, &ex.target, cost, bound) {
        Ok(Some(d)) => match mode {
            RewardMode::Ged => reward_from_ged(d),
            RewardMode::Binary => reward01(d),
        }
        .unwrap_or(0.0),
        _ => 0.0,
    }
}

/// Mean reward of greedy decoding over `examples`.
pub fn evaluate_greedy(policy: &Policy, examples: &[Example], cost: &CostModel, mode: RewardMode) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let rewards: Vec<f64> = examples
        .par_iter()
        .map(|ex| match policy.context(&ex.query) {
            Ok(ctx) => program_reward(policy, &policy.greedy(&ctx), ex, cost, mode),
            Err(_) => 0.0,
        })
        .collect();
    rewards.iter().sum::<f64>() / rewards.len() as f64
}

/// REINFORCE finetuning with early stopping on a held-out validation split.
/// Returns the policy with the best validation reward (the starting policy
/// counts) and the learning curve.
pub fn finetune(
    policy: &Policy,
    examples: &[Example],
    cost: &CostModel,
    cfg: &TrainConfig,
) -> Result<(Policy, Vec<CurvePoint>), PolicyError> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(PolicyError::EmptyDataset);
    }
    let contexts: Vec<Context> = examples.iter().map(|e| policy.context(&e.query)).collect::<Result<_, _>>()?;

    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng_for(cfg.seed, STREAM_SPLIT));
    let n_val = if examples.len() < 2 {
        0
    } else {
        ((examples.len() as f64 * cfg.validation_fraction).round() as usize).clamp(1, examples.len() - 1)
    };
    let mut val_idx = order[..n_val].to_vec();
    let mut train_idx = order[n_val..].to_vec();
    val_idx.sort_unstable();
    train_idx.sort_unstable();
    let validation: Vec<Example> = val_idx.iter().map(|&i| examples[i].clone()).collect();

    let mut p = policy.clone();
    let mut curve = Vec::new();
    let mut best: Option<(f64, Policy)> = None;
    let mut stale = 0;
    if !validation.is_empty() {
        let v = evaluate_greedy(&p, &validation, cost, cfg.reward);
        curve.push(CurvePoint { iteration: 0, mean_reward: None, validation_reward: Some(v) });
        best = Some((v, p.clone()));
    }

    let mut rng = rng_for(cfg.seed, STREAM_BATCH);
    let mut average: Option<f64> = None;
    for it in 1..=cfg.iterations {
        let picks: Vec<(usize, u64)> =
            (0..cfg.batch_size).map(|_| (train_idx[rng.gen_range(0..train_idx.len())], rng.gen())).collect();
        let batch: Vec<_> = picks
            .par_iter()
            .map(|&(i, s)| {
                let mut tr = p.sample(&contexts[i], &mut ChaCha8Rng::seed_from_u64(s));
                tr.reward = Some(program_reward(&p, &tr.actions, &examples[i], cost, cfg.reward));
                tr
            })
            .collect();
        let mean = batch.iter().map(|t| t.reward.unwrap_or(0.0)).sum::<f64>() / batch.len() as f64;
        let b = match cfg.baseline {
            Baseline::None => 0.0,
            Baseline::MovingAverage => *average.get_or_insert(mean),
        };
        let grad = reinforce_gradient(&p, &batch, b, cfg.gamma)?;
        for (th, g) in p.theta.iter_mut().zip(&grad) {
            *th += cfg.learning_rate * g;
        }
        if let Some(avg) = average.as_mut() {
            *avg = cfg.baseline_decay * *avg + (1.0 - cfg.baseline_decay) * mean;
        }

        let mut point = CurvePoint { iteration: it, mean_reward: Some(mean), validation_reward: None };
        if !validation.is_empty() && (it % cfg.eval_every == 0 || it == cfg.iterations) {
            let v = evaluate_greedy(&p, &validation, cost, cfg.reward);
            point.validation_reward = Some(v);
            match &best {
                Some((b, _)) if v <= *b => stale += 1,
                _ => {
                    best = Some((v, p.clone()));
                    stale = 0;
                }
            }
        }
        curve.push(point);
        if stale >= cfg.early_stop_patience {
            break;
        }
    }
    Ok((best.map_or(p, |(_, bp)| bp), curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{Cell, ProgramToken};
    use crate::scene::Variant;

    #[test]
    fn memorizes_a_single_pair() {
        let gold = Program::new(vec![ProgramToken::Remove, ProgramToken::Location(Cell::MM)], 4).unwrap();
        let vocab = Policy::full_vocab(Variant::Grid, std::slice::from_ref(&gold));
        let p = Policy::new(Variant::Grid, vocab, 4, &["remove the center object"]).unwrap();
        let pairs = vec![("remove the center object".to_string(), gold.clone())];
        let (p, losses) = pretrain_supervised(&p, &pairs, 0.5, 30).unwrap();
        assert!(losses.last().unwrap() < losses.first().unwrap());
        let ctx = p.context("remove the center object").unwrap();
        assert_eq!(p.decode(&p.greedy(&ctx)).unwrap(), gold);
        assert_eq!(pretrain_supervised(&p, &[], 0.5, 1).unwrap_err(), PolicyError::EmptyPairs);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { gamma: 1.5, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        assert_eq!("binary".parse::<RewardMode>(), Ok(RewardMode::Binary));
        assert!("banana".parse::<RewardMode>().is_err());
    }
}
