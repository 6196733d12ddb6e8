//! Motion retargeting onto candidate structures and the design objective.
//!
//! A candidate is scored by retargeting each human clip onto it with
//! scaled-direction targets and damped least-squares IK, aligning the result
//! to the human trajectory with a single similarity transform, and adding a
//! per-joint penalty.

use crate::kinematics::{
    solve_ik, IkParams, JointConfig, KinematicChain, KinematicsError, Marker,
};
use crate::motion_io::{Joi, MotionClip, MotionError};
use crate::scalar::{lit, Scalar};
use crate::screw_model::{FullBodyStructure, Side};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Scale applied to PA-MPJPE when reported.
pub const REPORT_SCALE: f64 = 100.0;

/// Default weight of the active-joint penalty.
pub const DEFAULT_JOINT_WEIGHT: f64 = 3.5;

#[derive(Debug, Error)]
pub enum RetargetError {
    #[error("point cloud has no spread; similarity alignment is undefined")]
    DegenerateGeometry,
    #[error("clips differ in shape: {0}")]
    ShapeMismatch(String),
    #[error("robot has no marker for {0}")]
    MissingMarker(String),
    #[error("empty motion clip")]
    EmptyClip,
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// Links a human track to a robot slot anchor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JoiBinding {
    pub joi: Joi,
    pub slot: usize,
    pub side: Option<Side>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignMode {
    /// One transform over all frames.
    #[default]
    Trajectory,
    /// A separate transform per frame.
    PerFrame,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetargetSpec<T: Scalar> {
    pub bindings: Vec<JoiBinding>,
    pub ik: IkParams<T>,
    /// Symmetric joint limit in radians.
    pub joint_limit: T,
    pub align: AlignMode,
}

impl<T: Scalar> Default for RetargetSpec<T> {
    fn default() -> Self {
        Self {
            bindings: default_bindings(),
            // frames are warm-started from the previous solution; random
            // restarts would break continuity and cost most of the runtime
            ik: IkParams {
                restarts: 0,
                ..IkParams::default()
            },
            joint_limit: T::pi(),
            align: AlignMode::Trajectory,
        }
    }
}

/// Root on the first torso slot, neck and head on the first and last neck
/// slots, and shoulder, elbow and wrist on the first shoulder, elbow and
/// last wrist slots of each arm.
pub fn default_bindings() -> Vec<JoiBinding> {
    let b = |joi, slot, side| JoiBinding { joi, slot, side };
    vec![
        b(Joi::Root, 0, None),
        b(Joi::Neck, 6, None),
        b(Joi::Head, 9, None),
        b(Joi::LeftShoulder, 11, Some(Side::Left)),
        b(Joi::LeftElbow, 15, Some(Side::Left)),
        b(Joi::LeftWrist, 19, Some(Side::Left)),
        b(Joi::RightShoulder, 11, Some(Side::Right)),
        b(Joi::RightElbow, 15, Some(Side::Right)),
        b(Joi::RightWrist, 19, Some(Side::Right)),
    ]
}

/// Similarity transform `x -> s R x + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Similarity<T: Scalar> {
    pub scale: T,
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
}

impl<T: Scalar> Similarity<T> {
    pub fn identity() -> Self {
        Self {
            scale: T::one(),
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p * self.scale + self.translation
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Alignment<T: Scalar> {
    pub transform: Similarity<T>,
    pub aligned: Vec<Vector3<T>>,
    /// Sum of squared residuals after alignment.
    pub sse: T,
}

fn centroid<T: Scalar>(pts: &[Vector3<T>]) -> Vector3<T> {
    let n: T = lit(pts.len() as f64);
    pts.iter().fold(Vector3::zeros(), |acc, p| acc + p) / n
}

/// Least-squares similarity taking `b` onto `a` (Umeyama).
///
/// Collinear clouds are accepted: the rotation about the line is arbitrary
/// but the residual is not. A cloud of coincident points is rejected.
pub fn procrustes_align<T: Scalar>(
    a: &[Vector3<T>],
    b: &[Vector3<T>],
) -> Result<Alignment<T>, RetargetError> {
    if a.len() != b.len() {
        return Err(RetargetError::ShapeMismatch(format!(
            "{} vs {} points",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(RetargetError::EmptyClip);
    }
    let (ma, mb) = (centroid(a), centroid(b));
    let mut cov = Matrix3::zeros();
    let mut var_b = T::zero();
    for (pa, pb) in a.iter().zip(b) {
        let (da, db) = (pa - ma, pb - mb);
        cov += da * db.transpose();
        var_b += db.norm_squared();
    }
    let scale_ref = b.iter().fold(T::zero(), |m, p| m.max(p.norm())).max(T::one());
    if var_b <= lit::<T>(1e-24) * scale_ref * scale_ref {
        return Err(RetargetError::DegenerateGeometry);
    }
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut s_diag = Vector3::new(T::one(), T::one(), T::one());
    if (u.determinant() * vt.determinant()) < T::zero() {
        // flip the direction of least correlation
        let k = (0..3)
            .min_by(|&i, &j| {
                svd.singular_values[i]
                    .partial_cmp(&svd.singular_values[j])
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(2);
        s_diag[k] = -T::one();
    }
    let rotation = u * Matrix3::from_diagonal(&s_diag) * vt;
    let trace = svd.singular_values.dot(&s_diag);
    let scale = trace / var_b;
    let translation = ma - rotation * mb * scale;
    let transform = Similarity {
        scale,
        rotation,
        translation,
    };
    let aligned: Vec<_> = b.iter().map(|p| transform.apply(p)).collect();
    let sse = a
        .iter()
        .zip(&aligned)
        .fold(T::zero(), |acc, (p, q)| acc + (p - q).norm_squared());
    Ok(Alignment {
        transform,
        aligned,
        sse,
    })
}

/// PA-MPJPE with its unscaled value and per-frame means.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PaMpjpe<T: Scalar> {
    /// Reported value, `raw * 100`.
    pub value: T,
    pub raw: T,
    pub per_frame: Vec<T>,
}

fn check_shapes<T: Scalar>(src: &MotionClip<T>, tar: &MotionClip<T>) -> Result<(), RetargetError> {
    if src.frame_count() == 0 {
        return Err(RetargetError::EmptyClip);
    }
    if src.frame_count() != tar.frame_count() || src.track_count() != tar.track_count() {
        return Err(RetargetError::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            src.frame_count(),
            src.track_count(),
            tar.frame_count(),
            tar.track_count()
        )));
    }
    Ok(())
}

fn frame_means<T: Scalar>(
    a: &[Vector3<T>],
    b: &[Vector3<T>],
    tracks: usize,
) -> Vec<T> {
    let n: T = lit(tracks as f64);
    a.chunks(tracks)
        .zip(b.chunks(tracks))
        .map(|(fa, fb)| {
            fa.iter()
                .zip(fb)
                .fold(T::zero(), |acc, (p, q)| acc + (p - q).norm())
                / n
        })
        .collect()
}

fn summarize<T: Scalar>(per_frame: Vec<T>) -> PaMpjpe<T> {
    let n: T = lit(per_frame.len() as f64);
    let raw = per_frame.iter().fold(T::zero(), |a, b| a + *b) / n;
    PaMpjpe {
        value: raw * lit(REPORT_SCALE),
        raw,
        per_frame,
    }
}

/// Mean per-marker error after aligning `tar` onto `src`.
pub fn pa_mpjpe_detail<T: Scalar>(
    src: &MotionClip<T>,
    tar: &MotionClip<T>,
    mode: AlignMode,
) -> Result<PaMpjpe<T>, RetargetError> {
    check_shapes(src, tar)?;
    let tracks = src.track_count();
    let per_frame = match mode {
        AlignMode::Trajectory => {
            let a: Vec<_> = src.frames.iter().flatten().copied().collect();
            let b: Vec<_> = tar.frames.iter().flatten().copied().collect();
            let al = procrustes_align(&a, &b)?;
            frame_means(&a, &al.aligned, tracks)
        }
        AlignMode::PerFrame => {
            let mut out = Vec::with_capacity(src.frame_count());
            for (fa, fb) in src.frames.iter().zip(&tar.frames) {
                let al = procrustes_align(fa, fb)?;
                out.extend(frame_means(fa, &al.aligned, tracks));
            }
            out
        }
    };
    Ok(summarize(per_frame))
}

/// Reported (x100) PA-MPJPE over whole trajectories.
pub fn pa_mpjpe<T: Scalar>(src: &MotionClip<T>, tar: &MotionClip<T>) -> Result<T, RetargetError> {
    Ok(pa_mpjpe_detail(src, tar, AlignMode::Trajectory)?.value)
}

/// Error of the limiting alignment that collapses `tar` to a point: the mean
/// distance of `src` from its own centroid (or per-frame centroids).
fn collapsed_error<T: Scalar>(src: &MotionClip<T>, mode: AlignMode) -> PaMpjpe<T> {
    let tracks = src.track_count();
    let per_frame = match mode {
        AlignMode::Trajectory => {
            let a: Vec<_> = src.frames.iter().flatten().copied().collect();
            let c = centroid(&a);
            let b = vec![c; a.len()];
            frame_means(&a, &b, tracks)
        }
        AlignMode::PerFrame => src
            .frames
            .iter()
            .flat_map(|f| {
                let c = centroid(f);
                frame_means(f, &vec![c; f.len()], tracks)
            })
            .collect(),
    };
    summarize(per_frame)
}

/// Active joints of the mirrored body: central joints once, arm joints on
/// both sides.
pub fn count_active_joints<T: Scalar>(body: &FullBodyStructure<T>) -> usize {
    body.central().count() + 2 * body.right().count()
}

/// Robot markers for the bound slots, in binding order.
pub fn robot_markers<T: Scalar>(
    body: &FullBodyStructure<T>,
    bindings: &[JoiBinding],
) -> Result<Vec<Marker<T>>, RetargetError> {
    bindings
        .iter()
        .map(|b| {
            body.point(b.slot, b.side)
                .map(|p| Marker {
                    home: p.position,
                    body: p.attached_to,
                })
                .ok_or_else(|| RetargetError::MissingMarker(b.joi.name().to_string()))
        })
        .collect()
}

/// Scaled-direction targets: each human segment direction applied with the
/// robot's home segment length, starting from the robot's home root.
fn targets_for_frame<T: Scalar>(
    bindings: &[JoiBinding],
    human: &[Vector3<T>],
    home: &[Vector3<T>],
) -> Vec<Vector3<T>> {
    let index = |joi: Joi| bindings.iter().position(|b| b.joi == joi);
    let mut out: Vec<Option<Vector3<T>>> = vec![None; bindings.len()];
    let tiny: T = lit(1e-9);
    // parents precede children in `Joi::ALL`; loop until every target is set
    for _ in 0..bindings.len() {
        for (k, b) in bindings.iter().enumerate() {
            if out[k].is_some() {
                continue;
            }
            let parent = b.joi.parent().and_then(index);
            match parent {
                None => out[k] = Some(home[k]),
                Some(p) => {
                    let Some(base) = out[p] else { continue };
                    let robot_seg = home[k] - home[p];
                    let len = robot_seg.norm();
                    let human_seg = human[k] - human[p];
                    let hn = human_seg.norm();
                    let dir = if hn > tiny {
                        human_seg / hn
                    } else if len > tiny {
                        robot_seg / len
                    } else {
                        Vector3::zeros()
                    };
                    out[k] = Some(base + dir * len);
                }
            }
        }
    }
    out.into_iter()
        .zip(home)
        .map(|(t, h)| t.unwrap_or(*h))
        .collect()
}

/// Retargets `src` onto `body` and returns the robot marker trajectories
/// with the human track names.
pub fn retarget<T: Scalar>(
    body: &FullBodyStructure<T>,
    src: &MotionClip<T>,
    spec: &RetargetSpec<T>,
) -> Result<MotionClip<T>, RetargetError> {
    if src.frame_count() == 0 {
        return Err(RetargetError::EmptyClip);
    }
    let names: Vec<&str> = spec.bindings.iter().map(|b| b.joi.name()).collect();
    let human = src.select(&names)?;
    let markers = robot_markers(body, &spec.bindings)?;
    let home: Vec<_> = markers.iter().map(|m| m.home).collect();
    let chain = KinematicChain::from_structure(body, markers)?;
    let mut cfg = JointConfig::zeros(chain.dof(), spec.joint_limit);
    let mut frames = Vec::with_capacity(human.frame_count());
    for frame in &human.frames {
        let targets: Vec<(usize, Vector3<T>)> = targets_for_frame(&spec.bindings, frame, &home)
            .into_iter()
            .enumerate()
            .collect();
        let sol = solve_ik(&chain, &targets, &cfg, &spec.ik)?;
        frames.push(sol.markers);
        cfg = sol.config;
    }
    Ok(MotionClip::new(
        src.frame_time,
        names.iter().map(|s| s.to_string()).collect(),
        frames,
    )?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MotionScore<T: Scalar> {
    pub pa_mpjpe: T,
    pub raw: T,
    pub per_frame: Vec<T>,
    /// True when the robot markers collapsed to a point and the limiting
    /// alignment was used.
    pub collapsed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObjectiveReport<T: Scalar> {
    /// Sum of reported PA-MPJPE over motions.
    pub pa_mpjpe: T,
    pub n_tot: usize,
    pub joint_weight: T,
    pub total: T,
    pub motions: Vec<MotionScore<T>>,
}

/// Scores a decoded structure against a set of motions.
pub fn evaluate_structure<T: Scalar>(
    body: &FullBodyStructure<T>,
    motions: &[MotionClip<T>],
    spec: &RetargetSpec<T>,
    joint_weight: T,
) -> Result<ObjectiveReport<T>, RetargetError> {
    let names: Vec<&str> = spec.bindings.iter().map(|b| b.joi.name()).collect();
    let mut scores = Vec::with_capacity(motions.len());
    for m in motions {
        let src = m.select(&names)?;
        let tar = retarget(body, &src, spec)?;
        let score = match pa_mpjpe_detail(&src, &tar, spec.align) {
            Ok(p) => MotionScore {
                pa_mpjpe: p.value,
                raw: p.raw,
                per_frame: p.per_frame,
                collapsed: false,
            },
            Err(RetargetError::DegenerateGeometry) => {
                let p = collapsed_error(&src, spec.align);
                MotionScore {
                    pa_mpjpe: p.value,
                    raw: p.raw,
                    per_frame: p.per_frame,
                    collapsed: true,
                }
            }
            Err(e) => return Err(e),
        };
        scores.push(score);
    }
    let pa = scores.iter().fold(T::zero(), |acc, s| acc + s.pa_mpjpe);
    let n_tot = count_active_joints(body);
    Ok(ObjectiveReport {
        pa_mpjpe: pa,
        n_tot,
        joint_weight,
        total: pa + joint_weight * lit(n_tot as f64),
        motions: scores,
    })
}

/// Decodes `x` and scores it.
pub fn total_objective<T: Scalar, D, E>(
    x: &[T],
    decode: D,
    motions: &[MotionClip<T>],
    spec: &RetargetSpec<T>,
    joint_weight: T,
) -> Result<ObjectiveReport<T>, RetargetError>
where
    D: Fn(&[T]) -> Result<FullBodyStructure<T>, E>,
    RetargetError: From<E>,
{
    let body = decode(x)?;
    evaluate_structure(&body, motions, spec, joint_weight)
}
