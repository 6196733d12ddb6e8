//! Stage implementations. Each writes into its own output directory, echoes
//! the effective configuration there and records a manifest.

use crate::config::{Config, ConfigError, Representation};
use crate::harness::{load_motions, optimize_runs, DesignSpace, HarnessError, Problem, SeededRun, Summary};
use anyhow::{bail, Context, Result};
use nalgebra::DVector;
use screwdesign::dataset::{
    curate, curate_dh, dh_header, load_records, matrix_csv, read_matrix_csv, screw_header, synthesize_robots,
    Archetype, CuratedSet,
};
use screwdesign::latent_tools::{export_map, interpolate_strip, strip_csv, LatentMap};
use screwdesign::manifold::{history_csv, reconstruction_mse, train, AeModel, Checkpoint, EpochStats};
use screwdesign::retarget::{evaluate_structure, ObjectiveReport};
use screwdesign::screw_model::SLOT_COUNT;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::path::{Path, PathBuf};

/// `runs/<timestamp>/<stage>/`, or `out` when given.
pub fn stage_dir(cfg: &Config, stage: &str, out: Option<&Path>) -> PathBuf {
    match out {
        Some(p) => p.to_path_buf(),
        None => {
            let ts = chrono::Local::now().format("%Y%m%d-%H%M%S");
            cfg.paths.runs_dir.join(ts.to_string()).join(stage)
        }
    }
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn prepare(dir: &Path, cfg: &Config) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write(&dir.join("config.toml"), cfg.to_toml())
}

fn manifest(dir: &Path, stage: &str, details: serde_json::Value) -> Result<()> {
    let m = json!({
        "stage": stage,
        "version": env!("CARGO_PKG_VERSION"),
        "details": details,
    });
    write(&dir.join("manifest.json"), serde_json::to_string_pretty(&m)?)
}

fn required<'a>(p: &'a Option<PathBuf>, what: &'static str) -> Result<&'a PathBuf> {
    p.as_ref().ok_or_else(|| ConfigError::Missing(what).into())
}

pub struct Dataset {
    pub names: Vec<String>,
    pub rows: Vec<DVector<f64>>,
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (names, rows, _) = read_matrix_csv(&text).with_context(|| format!("parsing {}", path.display()))?;
    if rows.is_empty() {
        bail!("{}: no records", path.display());
    }
    Ok(Dataset { names, rows })
}

pub fn load_checkpoint(path: &Path) -> Result<(Checkpoint, AeModel<f64>)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let ck = Checkpoint::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    let model = ck.to_model()?;
    Ok((ck, model))
}

/// Writes `n` synthetic robot records as `<name>.json`.
pub fn cmd_synth(cfg: &Config, dir: &Path) -> Result<Vec<PathBuf>> {
    prepare(dir, cfg)?;
    let s = &cfg.synth;
    let records = synthesize_robots(s.n, &Archetype::all(), &s.jitter, s.seed);
    let robots = dir.join("robots");
    std::fs::create_dir_all(&robots)?;
    let mut out = Vec::new();
    for r in &records {
        let p = robots.join(format!("{}.json", r.name));
        write(&p, r.to_json())?;
        out.push(p);
    }
    manifest(dir, "synth", json!({ "n": s.n, "seed": s.seed, "jitter": s.jitter }))?;
    Ok(out)
}

pub struct CurateOutcome {
    pub set: CuratedSet,
    pub matrix: PathBuf,
}

/// Curates the configured record directory into `curated.csv` and
/// `report.json`.
pub fn cmd_curate(cfg: &Config, dir: &Path) -> Result<CurateOutcome> {
    let robots = required(&cfg.paths.robots, "paths.robots")?;
    let records = load_records(robots)?;
    let (set, header) = match cfg.curate.rep {
        Representation::Screw => (curate(&records)?, screw_header()),
        Representation::Dh => (curate_dh(&records)?, dh_header()),
    };
    prepare(dir, cfg)?;
    let matrix = dir.join("curated.csv");
    write(&matrix, matrix_csv(&set.names, &set.vectors, &header))?;
    write(&dir.join("report.json"), serde_json::to_string_pretty(&set.report)?)?;
    manifest(
        dir,
        "curate",
        json!({ "robots": robots, "rep": cfg.curate.rep, "count": set.names.len() }),
    )?;
    Ok(CurateOutcome { set, matrix })
}

pub struct TrainOutcome {
    pub model: AeModel<f64>,
    pub history: Vec<EpochStats>,
    pub final_mse: f64,
    pub checkpoint: PathBuf,
}

/// Trains on the configured dataset; writes `checkpoint.json` and
/// `history.csv`.
pub fn cmd_train(cfg: &Config, dir: &Path) -> Result<TrainOutcome> {
    let path = required(&cfg.paths.dataset, "paths.dataset")?;
    let data = load_dataset(path)?;
    let (model, history) = train(&data.rows, &cfg.train)?;
    let final_mse = reconstruction_mse(&model, &data.rows)?;
    prepare(dir, cfg)?;
    let checkpoint = dir.join("checkpoint.json");
    write(&checkpoint, Checkpoint::from_model(&model, &cfg.train).to_json())?;
    write(&dir.join("history.csv"), history_csv(&history))?;
    manifest(
        dir,
        "train",
        json!({ "dataset": path, "rows": data.rows.len(), "train": cfg.train, "final_mse": final_mse }),
    )?;
    Ok(TrainOutcome {
        model,
        history,
        final_mse,
        checkpoint,
    })
}

/// A decoded design: the feature vector is what `eval` re-scores.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DesignFile {
    pub rep: Representation,
    /// Search-space point, when the design came from an optimizer.
    #[serde(default)]
    pub point: Vec<f64>,
    pub features: Vec<f64>,
    #[serde(default)]
    pub active_slots: Vec<usize>,
    #[serde(default)]
    pub total: Option<f64>,
}

impl DesignFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Builds the optimization problem described by `cfg`.
pub fn build_problem(cfg: &Config) -> Result<Problem> {
    let o = &cfg.optimize;
    let space = if o.raw_space {
        DesignSpace::raw(o.rep, cfg.objective.epsilon)
    } else {
        let path = required(&cfg.paths.checkpoint, "paths.checkpoint")?;
        let (_, model) = load_checkpoint(path)?;
        let space = DesignSpace::latent(model, cfg.objective.epsilon)?;
        if space.rep != o.rep {
            return Err(ConfigError::Invalid(format!(
                "checkpoint decodes {:?} features but optimize.rep is {:?}",
                space.rep, o.rep
            ))
            .into());
        }
        space
    };
    let motions = load_motions(&cfg.motion)?;
    Ok(Problem::new(space, motions, &cfg.objective))
}

pub struct OptimizeOutcome {
    pub runs: Vec<SeededRun>,
    pub summary: Summary,
}

/// Runs the seeded VOO protocol; writes one log and one best design per run
/// plus `summary.json`.
pub fn cmd_optimize(cfg: &Config, dir: &Path) -> Result<OptimizeOutcome> {
    let problem = build_problem(cfg)?;
    let runs = optimize_runs(&problem, &cfg.optimize)?;
    prepare(dir, cfg)?;
    for r in &runs {
        write(&dir.join(format!("run_{:02}.csv", r.index)), r.result.log_csv())?;
        let features = problem.space.features(&r.result.best_point)?;
        let body = problem.space.decode(&r.result.best_point)?;
        let mask = body.active_mask();
        let design = DesignFile {
            rep: problem.space.rep,
            point: r.result.best_point.clone(),
            features: features.iter().copied().collect(),
            active_slots: (0..SLOT_COUNT).filter(|i| mask[*i]).collect(),
            total: Some(r.result.best_value),
        };
        write(
            &dir.join(format!("best_{:02}.json", r.index)),
            serde_json::to_string_pretty(&design)?,
        )?;
    }
    let summary = Summary::from_runs(&runs);
    write(&dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    let seeds: Vec<u64> = runs.iter().map(|r| r.seed).collect();
    manifest(
        dir,
        "optimize",
        json!({
            "rep": cfg.optimize.rep,
            "raw_space": cfg.optimize.raw_space,
            "dim": problem.space.dim(),
            "master_seed": cfg.optimize.master_seed,
            "seeds": seeds,
            "checkpoint": cfg.paths.checkpoint,
            "motions": cfg.motion.clips,
            "summary": summary.display(),
        }),
    )?;
    Ok(OptimizeOutcome { runs, summary })
}

/// Scores a saved design against the configured motions.
pub fn cmd_eval(cfg: &Config, design: &Path) -> Result<ObjectiveReport<f64>> {
    let d = DesignFile::load(design)?;
    if d.features.len() != d.rep.feature_dim() {
        bail!(
            "{}: {} features, {:?} needs {}",
            design.display(),
            d.features.len(),
            d.rep,
            d.rep.feature_dim()
        );
    }
    let body = d.rep.decode_features(&d.features, cfg.objective.epsilon)?;
    let motions = load_motions(&cfg.motion)?;
    let report = evaluate_structure(
        &body,
        &motions,
        &cfg.objective.retarget_spec(),
        cfg.objective.joint_weight,
    )
    .map_err(HarnessError::from)?;
    Ok(report)
}

fn model_and_data(cfg: &Config) -> Result<(AeModel<f64>, Dataset)> {
    let (_, model) = load_checkpoint(required(&cfg.paths.checkpoint, "paths.checkpoint")?)?;
    let data = load_dataset(required(&cfg.paths.dataset, "paths.dataset")?)?;
    if let Some(r) = data.rows.first() {
        if r.len() != model.input_dim() {
            bail!("dataset has {} columns, checkpoint expects {}", r.len(), model.input_dim());
        }
    }
    Ok((model, data))
}

/// Encodes the dataset, clusters the codes and writes `latent_map.csv`
/// (and `.svg` for 2-D codes).
pub fn cmd_latent_map(cfg: &Config, dir: &Path) -> Result<(LatentMap, Vec<PathBuf>)> {
    let (model, data) = model_and_data(cfg)?;
    let map = LatentMap::build(&model, &data.names, &data.rows, cfg.latent.k, cfg.latent.seed)?;
    prepare(dir, cfg)?;
    let files = export_map(&map, &dir.join("latent_map"))?;
    manifest(dir, "latent_map", json!({ "k": cfg.latent.k, "seed": cfg.latent.seed }))?;
    Ok((map, files))
}

/// Decodes an evenly spaced strip between two robots' codes; writes
/// `strip.csv` with per-step activity masks.
pub fn cmd_interp(cfg: &Config, dir: &Path) -> Result<PathBuf> {
    let (model, data) = model_and_data(cfg)?;
    if Representation::from_feature_dim(model.input_dim()) != Some(Representation::Screw) {
        bail!("interpolation strips need a screw-feature checkpoint");
    }
    let find = |name: &Option<String>, what: &str| -> Result<DVector<f64>> {
        let name = name.as_deref().ok_or_else(|| anyhow::anyhow!("missing --{what} robot name"))?;
        let i = data
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| anyhow::anyhow!("unknown robot {name:?}"))?;
        Ok(model.encode(&data.rows[i])?)
    };
    let za = find(&cfg.latent.from, "from")?;
    let zb = find(&cfg.latent.to, "to")?;
    let strip = interpolate_strip(&model, &za, &zb, cfg.latent.steps, cfg.objective.epsilon)?;
    prepare(dir, cfg)?;
    let path = dir.join("strip.csv");
    write(&path, strip_csv(&strip))?;
    manifest(
        dir,
        "interp",
        json!({ "from": cfg.latent.from, "to": cfg.latent.to, "steps": cfg.latent.steps }),
    )?;
    Ok(path)
}
