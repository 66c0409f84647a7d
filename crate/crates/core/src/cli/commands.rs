use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::Serialize;

use super::{CliError, ProgramSource, RunConfig, VocabMode};
use crate::datagen::{build_dataset, Dataset, Split};
use crate::dsl::{validate_for_variant, Program};
use crate::engine::{execute, ExecutionTrace, Fault, Mode};
use crate::ged::{ged as graph_edit_distance, ged_astar, CostModel};
use crate::policy::{finetune, pretrain_supervised, CurvePoint, Policy};
use crate::retrieval::evaluate_programs;
use crate::scene::{parse_scene, serialize_scene, SceneGraph};
use crate::{rng_for, Preset};

/// Stream for the pretraining subset, apart from those the trainer uses.
const STREAM_PRETRAIN: u64 = 0x7072;

fn read_scene(path: &Path) -> Result<SceneGraph, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_scene(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn output_dir(cfg: &RunConfig) -> Result<Option<&Path>, CliError> {
    match cfg.paths.output.as_deref() {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            Ok(Some(dir))
        }
        None => Ok(None),
    }
}

fn load_dataset(cfg: &RunConfig) -> Result<(Dataset, Preset), CliError> {
    let dir = cfg.paths.dataset.as_deref().ok_or_else(|| CliError::Config("a dataset directory is required".into()))?;
    let ds = Dataset::load(dir).map_err(|e| CliError::Input(e.to_string()))?;
    let preset = ds.manifest.preset;
    if let Some(p) = cfg.preset {
        if p != preset {
            return Err(CliError::Config(format!("preset {p} does not match dataset preset {preset}")));
        }
    }
    Ok((ds, preset))
}

pub fn generate(cfg: &RunConfig) -> Result<String, CliError> {
    let dir = cfg.paths.output.as_deref().ok_or_else(|| CliError::Config("generate needs --out".into()))?;
    let preset = cfg.preset_or(Preset::Css);
    let dcfg = cfg.dataset_config(preset);
    let mut out = String::new();
    for split in [Split::Train, Split::Test] {
        let ds = build_dataset(&dcfg, split).map_err(|e| CliError::Run(e.to_string()))?;
        let sub = dir.join(split.name());
        ds.write(&sub).map_err(|e| CliError::Run(e.to_string()))?;
        out.push_str(&format!("{}\t{} queries\t{} scenes\n", sub.display(), ds.queries.len(), ds.scenes.len()));
    }
    let mut resolved = cfg.clone();
    resolved.preset = Some(preset);
    resolved.write_manifest(dir)?;
    Ok(out)
}

#[derive(Serialize)]
struct ExecReport<'a> {
    scene: serde_json::Value,
    trace: &'a ExecutionTrace,
    mode: Mode,
    fault: Option<&'a Fault>,
}

pub fn exec(cfg: &RunConfig, scene: &Path, program: &str, trace: bool) -> Result<String, CliError> {
    let g = read_scene(scene)?;
    let p = Program::parse(program, cfg.generate.max_len).map_err(|e| CliError::Input(e.to_string()))?;
    validate_for_variant(&p, g.variant()).map_err(|e| CliError::Input(e.to_string()))?;
    let run = execute(&p, &g).map_err(|e| CliError::Run(e.to_string()))?;
    let scene_json = serialize_scene(&run.graph);
    let text = if trace {
        let report = ExecReport {
            scene: serde_json::from_str(&scene_json).expect("serialized scene is JSON"),
            trace: &run.trace,
            mode: run.mode,
            fault: run.fault.as_ref(),
        };
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
    } else {
        scene_json.trim_end().to_string() + "\n"
    };
    if let Some(dir) = output_dir(cfg)? {
        write_file(&dir.join("scene.json"), &scene_json)?;
        if trace {
            write_file(&dir.join("trace.json"), &run.trace.to_json())?;
        }
        cfg.write_manifest(dir)?;
    }
    if let Some(f) = &run.fault {
        eprintln!("warning: {f}; scene returned unchanged");
    }
    Ok(text)
}

pub fn ged(cfg: &RunConfig, a: &Path, b: &Path, matching: bool) -> Result<String, CliError> {
    let g1 = read_scene(a)?;
    let g2 = read_scene(b)?;
    let preset = cfg.preset.unwrap_or(match g1.variant() {
        crate::scene::Variant::Grid => Preset::Css,
        crate::scene::Variant::Relational => Preset::Crir,
    });
    let m: CostModel = cfg.cost_model(preset)?;
    let input_err = |e: crate::ged::GedError| CliError::Input(e.to_string());
    let d = graph_edit_distance(&g1, &g2, &m).map_err(input_err)?;
    let mut out = format!("{d:?}\n");
    if matching {
        let (_, mt) = ged_astar(&g1, &g2, &m).map_err(input_err)?;
        for (u, v) in &mt.pairs {
            out.push_str(&format!("{u}\t{v}\n"));
        }
        for u in &mt.deleted {
            out.push_str(&format!("{u}\t-\n"));
        }
        for v in &mt.inserted {
            out.push_str(&format!("-\t{v}\n"));
        }
    }
    Ok(out)
}

fn curve_tsv(curve: &[CurvePoint]) -> String {
    let fmt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
    let mut out = String::from("iteration\tmean_reward\tvalidation_reward\n");
    for c in curve {
        out.push_str(&format!("{}\t{}\t{}\n", c.iteration, fmt(c.mean_reward), fmt(c.validation_reward)));
    }
    out
}

pub fn train(cfg: &RunConfig) -> Result<String, CliError> {
    let (ds, preset) = load_dataset(cfg)?;
    let tcfg = cfg.train_config(preset);
    let run_err = |e: crate::policy::PolicyError| CliError::Run(e.to_string());

    let golds: Vec<Program> = ds.queries.iter().map(|q| q.gold.clone()).collect();
    let vocab = match cfg.train.vocab {
        VocabMode::Full => Policy::full_vocab(preset.variant(), &golds),
        VocabMode::Observed => Policy::observed_vocab(&golds),
    };
    let texts: Vec<&str> = ds.queries.iter().map(|q| q.text.as_str()).collect();
    let policy = Policy::new(preset.variant(), vocab, ds.manifest.max_len, &texts).map_err(run_err)?;

    let mut order: Vec<usize> = (0..ds.queries.len()).collect();
    order.shuffle(&mut rng_for(cfg.seed, STREAM_PRETRAIN));
    let n_pre = ((ds.queries.len() as f64 * cfg.train.pretrain_fraction).round() as usize).clamp(1, ds.queries.len());
    let mut pre_idx = order[..n_pre].to_vec();
    pre_idx.sort_unstable();
    let pairs: Vec<(String, Program)> =
        pre_idx.iter().map(|&i| (ds.queries[i].text.clone(), ds.queries[i].gold.clone())).collect();

    let (pretrained, losses) =
        pretrain_supervised(&policy, &pairs, tcfg.pretrain_learning_rate, tcfg.pretrain_epochs).map_err(run_err)?;
    let m = cfg.cost_model(preset)?;
    let (best, curve) = finetune(&pretrained, &ds.examples(), &m, &tcfg).map_err(run_err)?;

    let mut resolved = cfg.clone();
    resolved.preset = Some(preset);
    if let Some(dir) = output_dir(cfg)? {
        write_file(&dir.join("model.json"), &best.to_json())?;
        write_file(&dir.join("curve.tsv"), &curve_tsv(&curve))?;
        resolved.paths.model = Some(dir.join("model.json"));
        resolved.write_manifest(dir)?;
    }
    let mut out = format!(
        "pretrain\t{} queries\tloss {:.6} -> {:.6}\n",
        pairs.len(),
        losses.first().copied().unwrap_or(f64::NAN),
        losses.last().copied().unwrap_or(f64::NAN)
    );
    out.push_str(&curve_tsv(&curve));
    Ok(out)
}

pub fn eval(cfg: &RunConfig) -> Result<String, CliError> {
    let (ds, preset) = load_dataset(cfg)?;
    let m = cfg.cost_model(preset)?;
    let programs: Vec<Program> = match ProgramSource::parse(&cfg.eval.programs)? {
        ProgramSource::Gold => ds.queries.iter().map(|q| q.gold.clone()).collect(),
        ProgramSource::Policy(path) => {
            let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            let policy = Policy::from_json(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            if policy.variant() != preset.variant() {
                return Err(CliError::Config(format!(
                    "model is for {} scenes, dataset is {}",
                    policy.variant().name(),
                    preset.variant().name()
                )));
            }
            ds.queries
                .iter()
                .map(|q| {
                    policy
                        .context(&q.text)
                        .ok()
                        .and_then(|ctx| policy.decode(&policy.greedy(&ctx)).ok())
                        .unwrap_or_else(|| Program::empty(policy.max_len()))
                })
                .collect()
        }
    };
    let (table, results) =
        evaluate_programs(&ds, &programs, &m, cfg.eval.k, cfg.seed).map_err(|e| CliError::Run(e.to_string()))?;
    let tsv = table.to_tsv();
    if let Some(dir) = output_dir(cfg)? {
        write_file(&dir.join("recall.tsv"), &tsv)?;
        let mut lines = String::new();
        for r in &results {
            lines.push_str(&serde_json::to_string(r).expect("result serializes"));
            lines.push('\n');
        }
        write_file(&dir.join("rankings.jsonl"), &lines)?;
        let mut resolved = cfg.clone();
        resolved.preset = Some(preset);
        resolved.write_manifest(dir)?;
    }
    Ok(tsv)
}
