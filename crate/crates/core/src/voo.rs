//! Voronoi optimistic optimization over an axis-aligned box.
//!
//! Each step either samples the box uniformly or samples near the current
//! best point, accepting a candidate only when its squared distance to the
//! best is below the squared distance from the best to its nearest evaluated
//! neighbour. Candidates are uniform for the first `n_switch` draws and
//! Gaussian around the best afterwards; when `max_inner` draws are
//! exhausted a uniform sample is used instead.
//!
//! [`LocalAcceptance::Cell`] replaces the radius test with exact Voronoi
//! cell membership (the candidate's nearest evaluated point is the best).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt::{self, Write as _};
use thiserror::Error;

pub const DEFAULT_MASTER_SEED: u64 = 123_456_789;

#[derive(Debug, Error)]
pub enum VooError<E: fmt::Debug + fmt::Display> {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("objective failed at {point:?}: {error}")]
    Objective { point: Vec<f64>, error: E },
}

/// Test applied to local candidates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalAcceptance {
    /// Squared distance to the best below the squared nearest-neighbour
    /// distance of the best.
    #[default]
    Radius,
    /// No evaluated point is closer to the candidate than the best.
    Cell,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VooConfig {
    /// `(min, max)` per dimension.
    pub bounds: Vec<(f64, f64)>,
    pub p_global: f64,
    pub sigma_c: f64,
    pub n_switch: usize,
    pub max_inner: usize,
    pub n_init: usize,
    pub iters: usize,
    pub seed: u64,
    pub acceptance: LocalAcceptance,
}

impl Default for VooConfig {
    fn default() -> Self {
        Self::cube(2, -15.0, 15.0)
    }
}

impl VooConfig {
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self {
            bounds: vec![(lo, hi); dim],
            p_global: 0.55,
            sigma_c: 0.6,
            n_switch: 20,
            max_inner: 500,
            n_init: 16,
            iters: 30,
            seed: DEFAULT_MASTER_SEED,
            acceptance: LocalAcceptance::Radius,
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn budget(&self) -> usize {
        self.n_init + self.iters
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.p_global) {
            return Err(format!("p_global {} outside [0, 1]", self.p_global));
        }
        if self.n_init == 0 {
            return Err("n_init must be at least 1".into());
        }
        if self.bounds.is_empty() {
            return Err("box has no dimensions".into());
        }
        if let Some((i, b)) = self.bounds.iter().enumerate().find(|(_, b)| !(b.0 < b.1)) {
            return Err(format!("empty interval {b:?} in dimension {i}"));
        }
        if !(self.sigma_c > 0.0) {
            return Err("sigma_c must be positive".into());
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.bounds).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

/// Seed of run `index` in a multi-run protocol.
pub fn run_seed(master: u64, index: usize) -> u64 {
    master.wrapping_add(index as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Init,
    Global,
    LocalUniform,
    LocalGaussian,
    Fallback,
}

impl SampleKind {
    pub fn name(self) -> &'static str {
        match self {
            SampleKind::Init => "init",
            SampleKind::Global => "global",
            SampleKind::LocalUniform => "local_uniform",
            SampleKind::LocalGaussian => "local_gaussian",
            SampleKind::Fallback => "fallback",
        }
    }
}

impl fmt::Display for SampleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub point: Vec<f64>,
    pub value: f64,
    pub kind: SampleKind,
    /// A Gaussian candidate was clamped into the box.
    pub clamped: bool,
}

#[derive(Clone, Debug)]
pub struct VooState {
    pub archive: Vec<Evaluation>,
    pub best: usize,
    pub rng: ChaCha8Rng,
}

impl VooState {
    pub fn best(&self) -> &Evaluation {
        &self.archive[self.best]
    }

    fn record(&mut self, e: Evaluation) {
        // strict improvement keeps the earliest of tied values
        if self.archive.is_empty() || e.value < self.archive[self.best].value {
            self.best = self.archive.len();
        }
        self.archive.push(e);
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn uniform_point<R: Rng>(bounds: &[(f64, f64)], rng: &mut R) -> Vec<f64> {
    bounds.iter().map(|(lo, hi)| rng.random_range(*lo..*hi)).collect()
}

fn evaluate<E, F>(
    objective: &mut F,
    point: Vec<f64>,
    kind: SampleKind,
    clamped: bool,
) -> Result<Evaluation, VooError<E>>
where
    E: fmt::Debug + fmt::Display,
    F: FnMut(&[f64]) -> Result<f64, E>,
{
    match objective(&point) {
        Ok(value) => Ok(Evaluation {
            point,
            value,
            kind,
            clamped,
        }),
        Err(error) => Err(VooError::Objective { point, error }),
    }
}

/// Evaluates `n_init` uniform samples.
pub fn voo_init<E, F>(cfg: &VooConfig, objective: &mut F) -> Result<VooState, VooError<E>>
where
    E: fmt::Debug + fmt::Display,
    F: FnMut(&[f64]) -> Result<f64, E>,
{
    cfg.validate().map_err(VooError::InvalidConfig)?;
    let mut state = VooState {
        archive: Vec::with_capacity(cfg.budget()),
        best: 0,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };
    for _ in 0..cfg.n_init {
        let p = uniform_point(&cfg.bounds, &mut state.rng);
        let e = evaluate(objective, p, SampleKind::Init, false)?;
        state.record(e);
    }
    Ok(state)
}

/// Draws a candidate as described in the module docs, without evaluating it.
fn propose(cfg: &VooConfig, state: &mut VooState) -> (Vec<f64>, SampleKind, bool) {
    let go_global = state.rng.random::<f64>() < cfg.p_global;
    if go_global || state.archive.len() < 2 {
        return (uniform_point(&cfg.bounds, &mut state.rng), SampleKind::Global, false);
    }
    let best = state.archive[state.best].point.clone();
    let radius = state
        .archive
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != state.best)
        .map(|(_, e)| sq_dist(&e.point, &best))
        .fold(f64::INFINITY, f64::min);
    let sigma = cfg.sigma_c * (radius / cfg.dim() as f64).sqrt();
    for draw in 0..cfg.max_inner {
        let (cand, kind, clamped) = if draw < cfg.n_switch {
            (uniform_point(&cfg.bounds, &mut state.rng), SampleKind::LocalUniform, false)
        } else {
            let mut clamped = false;
            let cand = best
                .iter()
                .zip(&cfg.bounds)
                .map(|(c, (lo, hi))| {
                    let n: f64 = state.rng.sample(StandardNormal);
                    let x = c + sigma * n;
                    let y = x.clamp(*lo, *hi);
                    clamped |= y != x;
                    y
                })
                .collect();
            (cand, SampleKind::LocalGaussian, clamped)
        };
        let d = sq_dist(&cand, &best);
        let accept = match cfg.acceptance {
            LocalAcceptance::Radius => d < radius,
            LocalAcceptance::Cell => state.archive.iter().all(|e| d <= sq_dist(&cand, &e.point)),
        };
        if accept {
            return (cand, kind, clamped);
        }
    }
    (uniform_point(&cfg.bounds, &mut state.rng), SampleKind::Fallback, false)
}

/// One global-or-local step.
pub fn voo_step<E, F>(state: &mut VooState, cfg: &VooConfig, objective: &mut F) -> Result<(), VooError<E>>
where
    E: fmt::Debug + fmt::Display,
    F: FnMut(&[f64]) -> Result<f64, E>,
{
    let (p, kind, clamped) = propose(cfg, state);
    let e = evaluate(objective, p, kind, clamped)?;
    state.record(e);
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub best_point: Vec<f64>,
    pub best_value: f64,
    /// Best value after each evaluation.
    pub trace: Vec<f64>,
    pub evaluations: Vec<Evaluation>,
}

impl RunResult {
    fn from_archive(archive: Vec<Evaluation>) -> Self {
        let mut trace = Vec::with_capacity(archive.len());
        let mut best = 0;
        for (i, e) in archive.iter().enumerate() {
            if e.value < archive[best].value {
                best = i;
            }
            trace.push(archive[best].value);
        }
        Self {
            best_point: archive[best].point.clone(),
            best_value: archive[best].value,
            trace,
            evaluations: archive,
        }
    }

    /// `eval_index, x0.., value, best_so_far, sample_kind, clamped`.
    pub fn log_csv(&self) -> String {
        let dim = self.best_point.len();
        let mut s = String::from("eval_index");
        for i in 0..dim {
            let _ = write!(s, ",x{i}");
        }
        s.push_str(",value,best_so_far,sample_kind,clamped\n");
        for (i, (e, b)) in self.evaluations.iter().zip(&self.trace).enumerate() {
            let _ = write!(s, "{i}");
            for x in &e.point {
                let _ = write!(s, ",{x}");
            }
            let _ = writeln!(s, ",{},{},{},{}", e.value, b, e.kind, e.clamped);
        }
        s
    }
}

/// `n_init` uniform starts followed by `iters` steps.
pub fn voo_run<E, F>(cfg: &VooConfig, mut objective: F) -> Result<RunResult, VooError<E>>
where
    E: fmt::Debug + fmt::Display,
    F: FnMut(&[f64]) -> Result<f64, E>,
{
    let mut state = voo_init(cfg, &mut objective)?;
    for _ in 0..cfg.iters {
        voo_step(&mut state, cfg, &mut objective)?;
    }
    Ok(RunResult::from_archive(state.archive))
}

/// Uniform random search with the same budget and seed as `cfg`.
pub fn random_search<E, F>(cfg: &VooConfig, mut objective: F) -> Result<RunResult, VooError<E>>
where
    E: fmt::Debug + fmt::Display,
    F: FnMut(&[f64]) -> Result<f64, E>,
{
    cfg.validate().map_err(VooError::InvalidConfig)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut archive = Vec::with_capacity(cfg.budget());
    for _ in 0..cfg.budget() {
        let p = uniform_point(&cfg.bounds, &mut rng);
        archive.push(evaluate(&mut objective, p, SampleKind::Global, false)?);
    }
    Ok(RunResult::from_archive(archive))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn sphere(x: &[f64]) -> Result<f64, Infallible> {
        Ok((x[0] - 3.0).powi(2) + (x[1] + 4.0).powi(2))
    }

    #[test]
    fn default_budget_is_46() {
        let r = voo_run(&VooConfig::default(), sphere).unwrap();
        assert_eq!(r.trace.len(), 46);
        assert_eq!(r.evaluations.len(), 46);
    }

    #[test]
    fn zero_iterations_returns_initial_best() {
        let cfg = VooConfig {
            iters: 0,
            ..VooConfig::default()
        };
        let r = voo_run(&cfg, sphere).unwrap();
        assert_eq!(r.evaluations.len(), 16);
        let min = r.evaluations.iter().map(|e| e.value).fold(f64::INFINITY, f64::min);
        assert_eq!(r.best_value, min);
    }

    #[test]
    fn constant_objective_keeps_first_point() {
        let mut count = 0;
        let state = voo_init(&VooConfig::default(), &mut |_: &[f64]| -> Result<f64, Infallible> {
            count += 1;
            Ok(1.0)
        })
        .unwrap();
        assert_eq!(count, 16);
        assert_eq!(state.best, 0);
    }

    #[test]
    fn single_point_archive_forces_global() {
        let cfg = VooConfig {
            n_init: 1,
            iters: 1,
            p_global: 0.0,
            ..VooConfig::default()
        };
        let r = voo_run(&cfg, sphere).unwrap();
        assert_eq!(r.evaluations[1].kind, SampleKind::Global);
    }

    #[test]
    fn local_samples_fall_inside_radius() {
        let cfg = VooConfig {
            p_global: 0.0,
            ..VooConfig::default()
        };
        let mut state = voo_init(&cfg, &mut sphere).unwrap();
        for _ in 0..30 {
            let best = state.best().point.clone();
            let r = state
                .archive
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != state.best)
                .map(|(_, e)| sq_dist(&e.point, &best))
                .fold(f64::INFINITY, f64::min);
            voo_step(&mut state, &cfg, &mut sphere).unwrap();
            let e = state.archive.last().unwrap();
            if matches!(e.kind, SampleKind::LocalUniform | SampleKind::LocalGaussian) {
                assert!(sq_dist(&e.point, &best) < r);
            }
        }
    }

    #[test]
    fn cell_samples_are_closest_to_best() {
        let cfg = VooConfig {
            p_global: 0.0,
            acceptance: LocalAcceptance::Cell,
            ..VooConfig::default()
        };
        let mut state = voo_init(&cfg, &mut sphere).unwrap();
        for _ in 0..30 {
            let before = state.archive.clone();
            let best = state.best().point.clone();
            voo_step(&mut state, &cfg, &mut sphere).unwrap();
            let e = state.archive.last().unwrap();
            if matches!(e.kind, SampleKind::LocalUniform | SampleKind::LocalGaussian) {
                let d = sq_dist(&e.point, &best);
                assert!(before.iter().all(|o| d <= sq_dist(&e.point, &o.point)));
            }
        }
    }

    #[test]
    fn log_has_one_row_per_evaluation() {
        let r = voo_run(&VooConfig::default(), sphere).unwrap();
        let csv = r.log_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "eval_index,x0,x1,value,best_so_far,sample_kind,clamped");
        assert_eq!(lines.count(), 46);
    }

    #[test]
    fn objective_errors_name_the_point() {
        let err = voo_run(&VooConfig::default(), |x: &[f64]| -> Result<f64, String> {
            Err(format!("bad {}", x.len()))
        })
        .unwrap_err();
        assert!(matches!(err, VooError::Objective { ref point, .. } if point.len() == 2));
    }
}
