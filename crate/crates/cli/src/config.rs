//! TOML configuration shared by every stage. Each section has defaults, so
//! an empty file is a valid configuration.

use screwdesign::dataset::Jitter;
use screwdesign::kinematics::IkParams;
use screwdesign::manifold::TrainConfig;
use screwdesign::retarget::{AlignMode, RetargetSpec, DEFAULT_JOINT_WEIGHT};
use screwdesign::screw_model::ACTIVATION_THRESHOLD;
use screwdesign::voo::{LocalAcceptance, VooConfig, DEFAULT_MASTER_SEED};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub paths: Paths,
    pub synth: SynthSection,
    pub curate: CurateSection,
    pub train: TrainConfig,
    pub motion: MotionSection,
    pub objective: ObjectiveSection,
    pub optimize: OptimizeSection,
    pub latent: LatentSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Root of `<timestamp>/<stage>/` output directories.
    pub runs_dir: PathBuf,
    /// Directory of robot record JSON files.
    pub robots: Option<PathBuf>,
    /// Curated matrix CSV.
    pub dataset: Option<PathBuf>,
    /// Trained model checkpoint.
    pub checkpoint: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            runs_dir: PathBuf::from("runs"),
            robots: None,
            dataset: None,
            checkpoint: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n: usize,
    pub seed: u64,
    pub jitter: Jitter,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            n: 30,
            seed: 0,
            jitter: Jitter::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    #[default]
    Screw,
    Dh,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurateSection {
    pub rep: Representation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionSection {
    /// BVH paths, or `synthetic:<wave|chicken|swim>`.
    pub clips: Vec<String>,
    /// Length of synthetic clips.
    pub synthetic_frames: usize,
    pub stride: usize,
    /// BVH joint name per track, overriding the CMU defaults.
    pub joint_map: Vec<(String, String)>,
}

impl Default for MotionSection {
    fn default() -> Self {
        Self {
            clips: vec!["synthetic:wave".into()],
            synthetic_frames: 60,
            stride: 1,
            joint_map: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveSection {
    pub joint_weight: f64,
    pub epsilon: f64,
    pub align: AlignMode,
    pub joint_limit: f64,
    pub ik_damping: f64,
    pub ik_max_iters: usize,
    pub ik_tol: f64,
    pub ik_max_step: f64,
    pub ik_restarts: usize,
}

impl Default for ObjectiveSection {
    fn default() -> Self {
        let ik = RetargetSpec::<f64>::default().ik;
        Self {
            joint_weight: DEFAULT_JOINT_WEIGHT,
            epsilon: ACTIVATION_THRESHOLD,
            align: AlignMode::Trajectory,
            joint_limit: std::f64::consts::PI,
            ik_damping: ik.damping,
            ik_max_iters: ik.max_iters,
            ik_tol: ik.tol,
            ik_max_step: ik.max_step,
            ik_restarts: ik.restarts,
        }
    }
}

impl ObjectiveSection {
    pub fn retarget_spec(&self) -> RetargetSpec<f64> {
        RetargetSpec {
            ik: IkParams {
                damping: self.ik_damping,
                max_iters: self.ik_max_iters,
                tol: self.ik_tol,
                max_step: self.ik_max_step,
                restarts: self.ik_restarts,
            },
            joint_limit: self.joint_limit,
            align: self.align,
            ..RetargetSpec::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeSection {
    /// Feature representation being designed.
    pub rep: Representation,
    /// Search the feature vector directly instead of a decoder's latent
    /// space.
    pub raw_space: bool,
    pub master_seed: u64,
    pub runs: usize,
    pub lo: f64,
    pub hi: f64,
    pub p_global: f64,
    pub sigma_c: f64,
    pub n_switch: usize,
    pub max_inner: usize,
    pub n_init: usize,
    pub iters: usize,
    pub acceptance: LocalAcceptance,
    /// Worker threads for the seeded runs; 0 picks the machine default.
    pub workers: usize,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        let v = VooConfig::default();
        Self {
            rep: Representation::Screw,
            raw_space: false,
            master_seed: DEFAULT_MASTER_SEED,
            runs: 10,
            lo: v.bounds[0].0,
            hi: v.bounds[0].1,
            p_global: v.p_global,
            sigma_c: v.sigma_c,
            n_switch: v.n_switch,
            max_inner: v.max_inner,
            n_init: v.n_init,
            iters: v.iters,
            acceptance: v.acceptance,
            workers: 0,
        }
    }
}

impl OptimizeSection {
    /// VOO settings for a `dim`-dimensional box; the seed is set per run.
    pub fn voo(&self, dim: usize) -> VooConfig {
        VooConfig {
            p_global: self.p_global,
            sigma_c: self.sigma_c,
            n_switch: self.n_switch,
            max_inner: self.max_inner,
            n_init: self.n_init,
            iters: self.iters,
            acceptance: self.acceptance,
            ..VooConfig::cube(dim, self.lo, self.hi)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatentSection {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub from: Option<String>,
    pub to: Option<String>,
    pub steps: usize,
}

impl Default for LatentSection {
    fn default() -> Self {
        Self {
            k: 5,
            seed: 0,
            max_iters: 100,
            from: None,
            to: None,
            steps: 8,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("missing setting: {0}")]
    Missing(&'static str),
    #[error("invalid setting: {0}")]
    Invalid(String),
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
