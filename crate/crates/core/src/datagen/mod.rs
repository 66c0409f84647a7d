//! Synthetic datasets: random scenes, template queries with gold programs,
//! and their edited target scenes.
//!
//! On disk a dataset is a directory holding `manifest.json`,
//! `scenes/<id>.json` (one scene file per graph) and `queries.jsonl`.

mod queries;
mod scenes;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{DslError, Program, DEFAULT_MAX_LEN};
use crate::engine::execute;
use crate::ged::ged;
use crate::policy::Example;
use crate::scene::{parse_scene, serialize_scene, Attribute, SceneError, SceneGraph};
use crate::{rng_for, Preset};

pub use queries::{generate_query, EditType, GeneratedQuery, QueryOptions, Template};
pub use scenes::{default_objects, generate_scene, FLOOR, MIN_SEPARATION};

const SCENE_ATTEMPTS: u64 = 1000;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid dataset config: {0}")]
    Config(String),
    #[error("{0} objects do not fit in nine grid cells")]
    CellCapacity(usize),
    #[error("could not place {0} objects apart after bounded retries")]
    Placement(usize),
    #[error("scene admits no referent chain for the template")]
    NoReferentChain,
    #[error("no usable scene for {template}/{edit} after {attempts} attempts")]
    Exhausted { template: Template, edit: EditType, attempts: u64 },
    #[error("self-check failed: {0}")]
    SelfCheck(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("query {query}: gold program: {source}")]
    Program { query: String, source: DslError },
    #[error("query {query} references missing scene {scene}")]
    MissingScene { query: String, scene: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> DatasetError {
    DatasetError::Io { path: path.display().to_string(), message: e.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub preset: Preset,
    pub seed: u64,
    pub queries: usize,
    /// Database size; distractor scenes pad the query scenes up to it.
    pub db_scenes: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub max_len: usize,
    pub make_attributes: Vec<Attribute>,
    /// Without adds, queries split 2:1 between remove and make.
    pub include_add: bool,
}

impl DatasetConfig {
    pub fn new(preset: Preset, seed: u64) -> Self {
        let objects = default_objects(preset);
        DatasetConfig {
            preset,
            seed,
            queries: 250,
            db_scenes: 300,
            min_objects: *objects.start(),
            max_objects: *objects.end(),
            max_len: DEFAULT_MAX_LEN,
            make_attributes: preset.variant().schema().to_vec(),
            include_add: true,
        }
    }

    /// Per-template (add, remove, make) counts.
    pub fn counts(&self) -> Result<(usize, usize, usize), DatasetError> {
        let n_templates = Template::for_variant(self.preset.variant()).len();
        if self.queries == 0 || !self.queries.is_multiple_of(n_templates) {
            return Err(DatasetError::Config(format!(
                "{} queries do not split evenly over {n_templates} templates",
                self.queries
            )));
        }
        let q = self.queries / n_templates;
        if self.include_add {
            if !q.is_multiple_of(5) {
                return Err(DatasetError::Config(format!(
                    "{q} queries per template do not split 2:2:1 into add, remove and make"
                )));
            }
            Ok((2 * q / 5, 2 * q / 5, q / 5))
        } else {
            let make = (q as f64 / 3.0).round() as usize;
            Ok((0, q - make, make))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub query_id: String,
    pub text: String,
    pub gold: Program,
    pub input_scene_id: String,
    pub target_scene_id: String,
    pub template: Template,
    pub edit_type: EditType,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryRow {
    id: String,
    text: String,
    gold: String,
    input: String,
    target: String,
    template: Template,
    edit_type: EditType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub seed: u64,
    pub preset: Preset,
    pub split: Split,
    pub max_len: usize,
    /// template -> edit type -> query count.
    pub counts: BTreeMap<Template, BTreeMap<EditType, usize>>,
    pub scene_ids: Vec<String>,
    pub config: DatasetConfig,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub scenes: BTreeMap<String, SceneGraph>,
    pub queries: Vec<QueryRecord>,
}

fn scene_id(i: usize) -> String {
    format!("s{i:05}")
}

fn query_id(i: usize) -> String {
    format!("q{i:05}")
}

/// Random stream for one generation task, disjoint across splits and tasks.
fn stream(split: Split, kind: u64, index: u64) -> u64 {
    ((split as u64) << 60) | (kind << 48) | index
}

/// Checks that the gold program turns the input into the target exactly and
/// ends attending the edited object alone.
pub fn self_check(q: &GeneratedQuery, preset: Preset) -> Result<(), DatasetError> {
    let fail = |m: String| DatasetError::SelfCheck(format!("{:?}: {m}", q.text));
    let run = execute(&q.gold, &q.input).map_err(|e| fail(e.to_string()))?;
    if let Some(f) = run.fault {
        return Err(fail(f.to_string()));
    }
    let d = ged(&run.graph, &q.target, &preset.cost_model()).map_err(|e| fail(e.to_string()))?;
    if d != 0.0 {
        return Err(fail(format!("distance to target is {d}")));
    }
    if run.final_attention() != Some(&[q.referent][..]) {
        return Err(fail(format!("final attention {:?}, expected [{}]", run.final_attention(), q.referent)));
    }
    Ok(())
}

/// Generates one split. Each remove or make query gets its own fresh
/// scene; every remove query is also rewritten as an add query over the
/// same pair of scenes.
pub fn build_dataset(cfg: &DatasetConfig, split: Split) -> Result<Dataset, DatasetError> {
    let (n_add, n_remove, n_make) = cfg.counts()?;
    if n_add > n_remove {
        return Err(DatasetError::Config("adds are rewritten removes, so #add cannot exceed #remove".into()));
    }
    if cfg.min_objects > cfg.max_objects {
        return Err(DatasetError::Config("min_objects exceeds max_objects".into()));
    }
    let opts = QueryOptions { max_len: cfg.max_len, make_attributes: cfg.make_attributes.clone() };
    let templates = Template::for_variant(cfg.preset.variant());

    let mut scenes: BTreeMap<String, SceneGraph> = BTreeMap::new();
    let mut scene_ids = Vec::new();
    let mut queries = Vec::new();
    let mut counts: BTreeMap<Template, BTreeMap<EditType, usize>> = BTreeMap::new();
    let add_scene = |g: SceneGraph, scenes: &mut BTreeMap<String, SceneGraph>, ids: &mut Vec<String>| {
        let id = scene_id(ids.len());
        ids.push(id.clone());
        scenes.insert(id.clone(), g);
        id
    };

    for (ti, &template) in templates.iter().enumerate() {
        let mut generated: Vec<GeneratedQuery> = Vec::new();
        for j in 0..n_remove + n_make {
            let edit = if j < n_remove { EditType::Remove } else { EditType::Make };
            let task = ((ti as u64) << 20) | j as u64;
            let mut found = None;
            for attempt in 0..SCENE_ATTEMPTS {
                let mut rng = rng_for(cfg.seed, stream(split, 1, (task << 12) | attempt));
                let scene = generate_scene(&mut rng, cfg.min_objects..=cfg.max_objects, cfg.preset)?;
                match generate_query(template, edit, &scene, &mut rng, &opts) {
                    Ok(q) => {
                        found = Some(q);
                        break;
                    }
                    Err(DatasetError::NoReferentChain) => continue,
                    Err(e) => return Err(e),
                }
            }
            generated.push(found.ok_or(DatasetError::Exhausted { template, edit, attempts: SCENE_ATTEMPTS })?);
        }
        let adds: Vec<GeneratedQuery> =
            generated[..n_add].iter().map(|q| q.to_add().expect("removes convert to adds")).collect();

        let mut ids = Vec::with_capacity(generated.len());
        for q in &generated {
            let input = add_scene(q.input.clone(), &mut scenes, &mut scene_ids);
            let target = add_scene(q.target.clone(), &mut scenes, &mut scene_ids);
            ids.push((input, target));
        }
        let ordered = adds
            .iter()
            .zip(&ids)
            .map(|(q, (input, target))| (q, target.clone(), input.clone()))
            .chain(generated.iter().zip(&ids).map(|(q, (input, target))| (q, input.clone(), target.clone())));
        for (q, input, target) in ordered {
            self_check(q, cfg.preset)?;
            *counts.entry(template).or_default().entry(q.edit_type).or_default() += 1;
            queries.push(QueryRecord {
                query_id: query_id(queries.len()),
                text: q.text.clone(),
                gold: q.gold.clone(),
                input_scene_id: input,
                target_scene_id: target,
                template,
                edit_type: q.edit_type,
            });
        }
    }

    let mut k = 0u64;
    while scene_ids.len() < cfg.db_scenes {
        let g = generate_scene(&mut rng_for(cfg.seed, stream(split, 2, k)), cfg.min_objects..=cfg.max_objects, cfg.preset)?;
        add_scene(g, &mut scenes, &mut scene_ids);
        k += 1;
    }

    let manifest = DatasetManifest {
        seed: cfg.seed,
        preset: cfg.preset,
        split,
        max_len: cfg.max_len,
        counts,
        scene_ids: scene_ids.clone(),
        config: cfg.clone(),
    };
    Ok(Dataset { manifest, scenes, queries })
}

impl Dataset {
    pub fn write(&self, dir: &Path) -> Result<(), DatasetError> {
        let scene_dir = dir.join("scenes");
        fs::create_dir_all(&scene_dir).map_err(|e| io_err(&scene_dir, e))?;
        let manifest = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes") + "\n";
        let path = dir.join("manifest.json");
        fs::write(&path, manifest).map_err(|e| io_err(&path, e))?;
        for (id, g) in &self.scenes {
            let path = scene_dir.join(format!("{id}.json"));
            fs::write(&path, serialize_scene(g)).map_err(|e| io_err(&path, e))?;
        }
        let mut lines = String::new();
        for q in &self.queries {
            let row = QueryRow {
                id: q.query_id.clone(),
                text: q.text.clone(),
                gold: q.gold.to_string(),
                input: q.input_scene_id.clone(),
                target: q.target_scene_id.clone(),
                template: q.template,
                edit_type: q.edit_type,
            };
            lines.push_str(&serde_json::to_string(&row).expect("row serializes"));
            lines.push('\n');
        }
        let path = dir.join("queries.jsonl");
        fs::write(&path, lines).map_err(|e| io_err(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Dataset, DatasetError> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| io_err(&path, e))?;
        let mut scenes = BTreeMap::new();
        for id in &manifest.scene_ids {
            let path = dir.join("scenes").join(format!("{id}.json"));
            let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            scenes.insert(id.clone(), parse_scene(&text).map_err(|e| io_err(&path, e))?);
        }
        let path = dir.join("queries.jsonl");
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let mut queries = Vec::new();
        for (line_no, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let row: QueryRow =
                serde_json::from_str(line).map_err(|e| io_err(&path, format!("line {}: {e}", line_no + 1)))?;
            let gold = Program::parse(&row.gold, manifest.max_len)
                .map_err(|source| DatasetError::Program { query: row.id.clone(), source })?;
            for scene in [&row.input, &row.target] {
                if !scenes.contains_key(scene) {
                    return Err(DatasetError::MissingScene { query: row.id.clone(), scene: scene.clone() });
                }
            }
            queries.push(QueryRecord {
                query_id: row.id,
                text: row.text,
                gold,
                input_scene_id: row.input,
                target_scene_id: row.target,
                template: row.template,
                edit_type: row.edit_type,
            });
        }
        Ok(Dataset { manifest, scenes, queries })
    }

    /// Database entries in id order.
    pub fn database(&self) -> Vec<(String, SceneGraph)> {
        self.scenes.iter().map(|(id, g)| (id.clone(), g.clone())).collect()
    }

    pub fn examples(&self) -> Vec<Example> {
        self.queries
            .iter()
            .map(|q| Example {
                query: q.text.clone(),
                input: self.scenes[&q.input_scene_id].clone(),
                target: self.scenes[&q.target_scene_id].clone(),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_split() {
        let cfg = DatasetConfig::new(Preset::Crir, 0);
        assert_eq!(cfg.counts().unwrap(), (20, 20, 10));
        let css = DatasetConfig { queries: 200, include_add: false, ..DatasetConfig::new(Preset::Css, 0) };
        assert_eq!(css.counts().unwrap(), (0, 133, 67));
        let bad = DatasetConfig { queries: 251, ..cfg };
        assert!(bad.counts().is_err());
    }

    #[test]
    fn small_relational_dataset() {
        let cfg = DatasetConfig { queries: 25, db_scenes: 40, ..DatasetConfig::new(Preset::Crir, 2) };
        let ds = build_dataset(&cfg, Split::Train).unwrap();
        assert_eq!(ds.queries.len(), 25);
        assert_eq!(ds.scenes.len(), 40);
        for t in Template::ALL {
            let c = &ds.manifest.counts[&t];
            assert_eq!((c[&EditType::Add], c[&EditType::Remove], c[&EditType::Make]), (2, 2, 1));
        }
    }
}
