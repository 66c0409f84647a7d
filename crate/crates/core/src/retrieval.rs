//! Ranking a scene database by graph edit distance, and recall@k.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::datagen::{Dataset, EditType, Template};
use crate::dsl::Program;
use crate::engine::execute;
use crate::ged::{ged, ged_within, lower_bound, CostModel, GedError};
use crate::rng_for;
use crate::scene::SceneGraph;

/// Slack when comparing a lower bound against an exact distance.
const EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error(transparent)]
    Ged(#[from] GedError),
    #[error("query {0} has no target")]
    MissingTarget(String),
    #[error("k must be positive")]
    ZeroK,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalResult {
    pub query_id: String,
    pub ranked_ids: Vec<String>,
    pub distances: Vec<f64>,
}

/// Random tie-break key per database entry.
fn tie_keys(n: usize, seed: u64) -> Vec<u64> {
    let mut rng = rng_for(seed, 0);
    (0..n).map(|_| rng.gen()).collect()
}

fn assemble(query_id: &str, db: &[(String, SceneGraph)], mut scored: Vec<(f64, u64, usize)>) -> RetrievalResult {
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    RetrievalResult {
        query_id: query_id.to_string(),
        ranked_ids: scored.iter().map(|s| db[s.2].0.clone()).collect(),
        distances: scored.iter().map(|s| s.0).collect(),
    }
}

/// Full ranking by ascending distance; exact ties are ordered by seeded keys.
pub fn rank_by_ged(
    query_id: &str,
    q: &SceneGraph,
    db: &[(String, SceneGraph)],
    m: &CostModel,
    seed: u64,
) -> Result<RetrievalResult, RetrievalError> {
    let keys = tie_keys(db.len(), seed);
    let scored = db
        .par_iter()
        .enumerate()
        .map(|(i, (_, g))| ged(q, g, m).map(|d| (d, keys[i], i)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble(query_id, db, scored))
}

/// The first `k` entries of [`rank_by_ged`], computed with lower-bound pruning.
pub fn rank_top_k(
    query_id: &str,
    q: &SceneGraph,
    db: &[(String, SceneGraph)],
    m: &CostModel,
    k: usize,
    seed: u64,
) -> Result<RetrievalResult, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::ZeroK);
    }
    let keys = tie_keys(db.len(), seed);
    let mut bounds = db
        .iter()
        .enumerate()
        .map(|(i, (_, g))| lower_bound(q, g, m).map(|lb| (lb, i)))
        .collect::<Result<Vec<_>, _>>()?;
    bounds.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut found: Vec<(f64, u64, usize)> = Vec::with_capacity(k + 1);
    for (lb, i) in bounds {
        let kth = if found.len() >= k { found[k - 1].0 } else { f64::INFINITY };
        if lb > kth + EPS {
            break;
        }
        let d = if kth.is_finite() { ged_within(q, &db[i].1, m, kth)? } else { Some(ged(q, &db[i].1, m)?) };
        if let Some(d) = d {
            found.push((d, keys[i], i));
            found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            found.truncate(k);
        }
    }
    Ok(assemble(query_id, db, found))
}

/// Fraction of results whose target id appears among the first `k` ranked ids.
pub fn recall_at_k(
    results: &[RetrievalResult],
    targets: &BTreeMap<String, String>,
    k: usize,
) -> Result<f64, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::ZeroK);
    }
    if results.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for r in results {
        let target = targets.get(&r.query_id).ok_or_else(|| RetrievalError::MissingTarget(r.query_id.clone()))?;
        if r.ranked_ids.iter().take(k).any(|id| id == target) {
            hits += 1;
        }
    }
    Ok(hits as f64 / results.len() as f64)
}

/// Hits and totals per template and edit type.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecallTable {
    pub k: usize,
    pub cells: BTreeMap<Template, BTreeMap<EditType, (usize, usize)>>,
}

fn ratio(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

impl RecallTable {
    fn sum<'a>(it: impl Iterator<Item = &'a (usize, usize)>) -> (usize, usize) {
        it.fold((0, 0), |(h, t), (h2, t2)| (h + h2, t + t2))
    }

    pub fn recall(&self, template: Template, edit: EditType) -> Option<f64> {
        self.cells.get(&template)?.get(&edit).map(|&(h, t)| ratio(h, t))
    }

    pub fn template_recall(&self, template: Template) -> Option<f64> {
        let (h, t) = Self::sum(self.cells.get(&template)?.values());
        Some(ratio(h, t))
    }

    pub fn edit_recall(&self, edit: EditType) -> Option<f64> {
        let (h, t) = Self::sum(self.cells.values().filter_map(|row| row.get(&edit)));
        (t > 0).then(|| ratio(h, t))
    }

    pub fn overall(&self) -> f64 {
        let (h, t) = Self::sum(self.cells.values().flat_map(|row| row.values()));
        ratio(h, t)
    }

    /// Tab-separated table: one row per template plus an overall row, one
    /// column per edit type plus an overall column.
    pub fn to_tsv(&self) -> String {
        let fmt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let mut out = String::from("template\tadd\tremove\tmake\toverall\n");
        for &t in self.cells.keys() {
            out.push_str(t.name());
            for e in EditType::ALL {
                out.push('\t');
                out.push_str(&fmt(self.recall(t, e)));
            }
            out.push('\t');
            out.push_str(&fmt(self.template_recall(t)));
            out.push('\n');
        }
        out.push_str("overall");
        for e in EditType::ALL {
            out.push('\t');
            out.push_str(&fmt(self.edit_recall(e)));
        }
        out.push('\t');
        out.push_str(&fmt(Some(self.overall())));
        out.push('\n');
        out
    }
}

/// Runs `programs[i]` on the input scene of query `i`, ranks the database
/// against the result, and tallies recall@k. Programs that fail to execute
/// leave the input scene unchanged.
pub fn evaluate_programs(
    ds: &Dataset,
    programs: &[Program],
    m: &CostModel,
    k: usize,
    seed: u64,
) -> Result<(RecallTable, Vec<RetrievalResult>), RetrievalError> {
    let db = ds.database();
    let results = ds
        .queries
        .par_iter()
        .zip(programs)
        .enumerate()
        .map(|(i, (q, program))| {
            let input = &ds.scenes[&q.input_scene_id];
            let edited = execute(program, input).map_or_else(|_| input.clone(), |run| run.graph);
            let tie_seed = rng_for(seed, 1 + i as u64).gen();
            rank_top_k(&q.query_id, &edited, &db, m, k, tie_seed)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut table = RecallTable { k, cells: BTreeMap::new() };
    for (q, r) in ds.queries.iter().zip(&results) {
        let cell = table.cells.entry(q.template).or_default().entry(q.edit_type).or_default();
        cell.1 += 1;
        if r.ranked_ids.iter().take(k).any(|id| *id == q.target_scene_id) {
            cell.0 += 1;
        }
    }
    Ok((table, results))
}
