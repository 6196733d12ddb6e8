//! Design spaces, motion loading and the multi-seed optimization protocol.

use crate::config::{MotionSection, ObjectiveSection, OptimizeSection, Representation};
use nalgebra::DVector;
use rayon::prelude::*;
use screwdesign::dh_model::{dh_clamp, dh_to_screw, DhChainHalf, DH_FEATURE_DIM};
use screwdesign::manifold::{AeModel, ManifoldError};
use screwdesign::motion_io::{extract_upper_body, parse_bvh, synth, ExtractOptions, JoiMap, MotionClip, MotionError};
use screwdesign::retarget::{evaluate_structure, ObjectiveReport, RetargetError, RetargetSpec};
use screwdesign::screw_model::{activate_decoded, ScrewModelError, FEATURE_DIM};
use screwdesign::voo::{run_seed, voo_run, RunResult, VooConfig, VooError};
use screwdesign::FullBody;
use serde::Serialize;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Structure(#[from] ScrewModelError),
    #[error(transparent)]
    Retarget(#[from] RetargetError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error("{0}")]
    Config(String),
    #[error("optimizer: {0}")]
    Optimizer(String),
}

impl Representation {
    pub fn feature_dim(self) -> usize {
        match self {
            Representation::Screw => FEATURE_DIM,
            Representation::Dh => DH_FEATURE_DIM,
        }
    }

    pub fn from_feature_dim(dim: usize) -> Option<Self> {
        match dim {
            FEATURE_DIM => Some(Representation::Screw),
            DH_FEATURE_DIM => Some(Representation::Dh),
            _ => None,
        }
    }

    /// Turns a feature vector into a mirrored full body. Screw vectors use
    /// the axis-norm activation rule; DH vectors are clamped and use the DH
    /// activity rule, and the left arm is the sagittal mirror of the right.
    pub fn decode_features(self, v: &[f64], epsilon: f64) -> Result<FullBody, ScrewModelError> {
        match self {
            Representation::Screw => activate_decoded(v, epsilon),
            Representation::Dh => {
                let half = dh_clamp(&DhChainHalf::unflatten(v)?);
                let (slots, active, _) = dh_to_screw(&half);
                Ok(FullBody::from_slots(&slots, &active))
            }
        }
    }
}

/// Where the optimizer searches: a decoder's latent space or the feature
/// vector itself.
#[derive(Clone, Debug)]
pub struct DesignSpace {
    pub rep: Representation,
    pub decoder: Option<AeModel<f64>>,
    pub epsilon: f64,
}

impl DesignSpace {
    pub fn latent(model: AeModel<f64>, epsilon: f64) -> Result<Self, HarnessError> {
        let rep = Representation::from_feature_dim(model.input_dim()).ok_or_else(|| {
            HarnessError::Config(format!("decoder output size {} is not a known representation", model.input_dim()))
        })?;
        Ok(Self {
            rep,
            decoder: Some(model),
            epsilon,
        })
    }

    pub fn raw(rep: Representation, epsilon: f64) -> Self {
        Self {
            rep,
            decoder: None,
            epsilon,
        }
    }

    pub fn dim(&self) -> usize {
        self.decoder.as_ref().map_or(self.rep.feature_dim(), AeModel::latent_dim)
    }

    pub fn features(&self, x: &[f64]) -> Result<DVector<f64>, HarnessError> {
        match &self.decoder {
            Some(m) => Ok(m.decode(&DVector::from_column_slice(x))?),
            None => Ok(DVector::from_column_slice(x)),
        }
    }

    pub fn decode(&self, x: &[f64]) -> Result<FullBody, HarnessError> {
        let v = self.features(x)?;
        Ok(self.rep.decode_features(v.as_slice(), self.epsilon)?)
    }
}

/// Loads one clip: a BVH path or `synthetic:<name>`.
pub fn load_motion(source: &str, sec: &MotionSection) -> Result<MotionClip<f64>, HarnessError> {
    let bvh = match source.strip_prefix("synthetic:") {
        Some(name) => {
            let m = synth::SyntheticMotion::from_name(name)
                .ok_or_else(|| HarnessError::Config(format!("unknown synthetic motion {name:?}")))?;
            synth::generate(m, sec.synthetic_frames)
        }
        None => {
            let text = std::fs::read_to_string(Path::new(source))
                .map_err(|e| HarnessError::Config(format!("{source}: {e}")))?;
            parse_bvh(&text)?
        }
    };
    let mut map = JoiMap::cmu();
    for (track, joint) in &sec.joint_map {
        map = map.with(track, joint);
    }
    let opts = ExtractOptions {
        stride: sec.stride,
        ..ExtractOptions::default()
    };
    Ok(extract_upper_body(&bvh, &map, &opts)?)
}

pub fn load_motions(sec: &MotionSection) -> Result<Vec<MotionClip<f64>>, HarnessError> {
    if sec.clips.is_empty() {
        return Err(HarnessError::Config("no motion clips configured".into()));
    }
    sec.clips.iter().map(|c| load_motion(c, sec)).collect()
}

/// Frozen design space plus the motions and objective settings.
#[derive(Clone, Debug)]
pub struct Problem {
    pub space: DesignSpace,
    pub motions: Vec<MotionClip<f64>>,
    pub spec: RetargetSpec<f64>,
    pub joint_weight: f64,
}

impl Problem {
    pub fn new(space: DesignSpace, motions: Vec<MotionClip<f64>>, objective: &ObjectiveSection) -> Self {
        Self {
            space,
            motions,
            spec: objective.retarget_spec(),
            joint_weight: objective.joint_weight,
        }
    }

    pub fn report(&self, x: &[f64]) -> Result<ObjectiveReport<f64>, HarnessError> {
        let body = self.space.decode(x)?;
        Ok(evaluate_structure(&body, &self.motions, &self.spec, self.joint_weight)?)
    }

    pub fn objective(&self, x: &[f64]) -> Result<f64, HarnessError> {
        Ok(self.report(x)?.total)
    }
}

/// One seeded run of the protocol.
#[derive(Clone, Debug)]
pub struct SeededRun {
    pub index: usize,
    pub seed: u64,
    pub result: RunResult,
}

/// Runs VOO once per seed `run_seed(master, i)`, `i < runs`, fanned out over
/// a thread pool. Results come back in seed order.
pub fn optimize_runs(problem: &Problem, sec: &OptimizeSection) -> Result<Vec<SeededRun>, HarnessError> {
    let base = sec.voo(problem.space.dim());
    base.validate().map_err(HarnessError::Config)?;
    run_protocol(&base, sec.master_seed, sec.runs, sec.workers, |cfg| {
        voo_run(cfg, |x| problem.objective(x))
    })
}

/// Generic multi-seed driver used by both VOO and the random-search baseline.
pub fn run_protocol<F>(
    base: &VooConfig,
    master_seed: u64,
    runs: usize,
    workers: usize,
    run: F,
) -> Result<Vec<SeededRun>, HarnessError>
where
    F: Fn(&VooConfig) -> Result<RunResult, VooError<HarnessError>> + Sync,
{
    let job = || {
        (0..runs)
            .into_par_iter()
            .map(|index| {
                let seed = run_seed(master_seed, index);
                let cfg = VooConfig { seed, ..base.clone() };
                run(&cfg)
                    .map(|result| SeededRun { index, seed, result })
                    .map_err(|e| HarnessError::Optimizer(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()
    };
    if workers == 0 {
        job()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| HarnessError::Config(e.to_string()))?
            .install(job)
    }
}

/// Per-run minima and their mean and sample standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub runs: usize,
    pub minima: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub best_run: usize,
}

impl Summary {
    pub fn from_minima(minima: Vec<f64>) -> Self {
        let n = minima.len();
        let mean = minima.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            minima.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let best_run = minima
            .iter()
            .enumerate()
            .fold(0, |b, (i, m)| if *m < minima[b] { i } else { b });
        Self {
            runs: n,
            median: median(&minima),
            minima,
            mean,
            std: var.sqrt(),
            best_run,
        }
    }

    pub fn from_runs(runs: &[SeededRun]) -> Self {
        Self::from_minima(runs.iter().map(|r| r.result.best_value).collect())
    }

    /// `mean±std` with one decimal, as reported in result tables.
    pub fn display(&self) -> String {
        format!("{:.1}±{:.1}", self.mean, self.std)
    }
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Per-evaluation median of the best-so-far traces.
pub fn median_trace(runs: &[SeededRun]) -> Vec<f64> {
    let len = runs.iter().map(|r| r.result.trace.len()).min().unwrap_or(0);
    (0..len)
        .map(|i| median(&runs.iter().map(|r| r.result.trace[i]).collect::<Vec<_>>()))
        .collect()
}
