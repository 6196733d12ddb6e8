//! Screw-theoretic rigid-body kinematics: exponential map, product of
//! exponentials forward kinematics over joint trees, and damped
//! least-squares inverse kinematics on marker positions.

use crate::scalar::{lit, Scalar};
use crate::screw_model::{FullBodyStructure, ScrewJoint};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KinematicsError {
    #[error("configuration has {got} angles, chain has {expected} joints")]
    ConfigMismatch { expected: usize, got: usize },
    #[error("joint {joint} has parent {parent}, parents must precede children")]
    BadParent { joint: usize, parent: usize },
    #[error("marker {marker} attached to missing joint {joint}")]
    BadMarker { marker: usize, joint: usize },
}

/// Rotation plus translation, acting as `x -> R x + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform<T: Scalar> {
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
}

impl<T: Scalar> RigidTransform<T> {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<T>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    pub fn from_rotation(r: Matrix3<T>) -> Self {
        Self {
            rotation: r,
            translation: Vector3::zeros(),
        }
    }

    pub fn rot_x(angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        let (o, l) = (T::zero(), T::one());
        Self::from_rotation(Matrix3::new(l, o, o, o, c, -s, o, s, c))
    }

    pub fn rot_y(angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        let (o, l) = (T::zero(), T::one());
        Self::from_rotation(Matrix3::new(c, o, s, o, l, o, -s, o, c))
    }

    pub fn rot_z(angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        let (o, l) = (T::zero(), T::one());
        Self::from_rotation(Matrix3::new(c, -s, o, s, c, o, o, o, l))
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<T>) -> Vector3<T> {
        self.rotation * v
    }
}

impl<T: Scalar> std::ops::Mul for RigidTransform<T> {
    type Output = Self;

    fn mul(self, rhs: Self) -> Self {
        self.compose(&rhs)
    }
}

pub fn skew<T: Scalar>(w: &Vector3<T>) -> Matrix3<T> {
    let o = T::zero();
    Matrix3::new(o, -w.z, w.y, w.z, o, -w.x, -w.y, w.x, o)
}

/// Zero-pitch twist `(omega, v)` with `v = -omega x q`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Twist<T: Scalar> {
    pub omega: Vector3<T>,
    pub v: Vector3<T>,
}

impl<T: Scalar> Twist<T> {
    pub fn new(omega: Vector3<T>, v: Vector3<T>) -> Self {
        Self { omega, v }
    }

    pub fn revolute(joint: &ScrewJoint<T>) -> Self {
        Self {
            omega: joint.omega,
            v: joint.moment(),
        }
    }

    pub fn pitch_residual(&self) -> T {
        self.omega.dot(&self.v)
    }
}

/// Matrix exponential of the twist scaled by `theta`.
///
/// Expects `|omega|` to be 0 or 1; a zero axis gives the pure translation
/// `v * theta`.
pub fn screw_exp<T: Scalar>(t: &Twist<T>, theta: T) -> RigidTransform<T> {
    if t.omega.norm_squared() <= lit(1e-24) {
        return RigidTransform::from_translation(t.v * theta);
    }
    let w = skew(&t.omega);
    let w2 = w * w;
    let (s, c) = theta.sin_cos();
    let one_c = T::one() - c;
    let rotation = Matrix3::identity() + w * s + w2 * one_c;
    let g = Matrix3::identity() * theta + w * one_c + w2 * (theta - s);
    RigidTransform {
        rotation,
        translation: g * t.v,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainJoint<T: Scalar> {
    pub twist: Twist<T>,
    /// Home-configuration anchor, a point on the axis.
    pub anchor: Vector3<T>,
    pub parent: Option<usize>,
}

/// A point rigidly attached to a joint's body (or to the fixed base).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Marker<T: Scalar> {
    pub home: Vector3<T>,
    pub body: Option<usize>,
}

/// Joint tree with space-frame twists at the home configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct KinematicChain<T: Scalar> {
    joints: Vec<ChainJoint<T>>,
    markers: Vec<Marker<T>>,
    /// `path[i][j]` is true when joint `j` lies on the path from the base to
    /// joint `i` (inclusive).
    path: Vec<Vec<bool>>,
}

impl<T: Scalar> KinematicChain<T> {
    pub fn new(joints: Vec<ChainJoint<T>>, markers: Vec<Marker<T>>) -> Result<Self, KinematicsError> {
        let n = joints.len();
        let mut path = vec![vec![false; n]; n];
        for (i, j) in joints.iter().enumerate() {
            if let Some(p) = j.parent {
                if p >= i {
                    return Err(KinematicsError::BadParent { joint: i, parent: p });
                }
                let parent_path = path[p].clone();
                path[i] = parent_path;
            }
            path[i][i] = true;
        }
        for (m, mk) in markers.iter().enumerate() {
            if let Some(b) = mk.body {
                if b >= n {
                    return Err(KinematicsError::BadMarker { marker: m, joint: b });
                }
            }
        }
        Ok(Self {
            joints,
            markers,
            path,
        })
    }

    /// Chain over the active joints of a full body, with the given points as
    /// markers.
    pub fn from_structure(
        body: &FullBodyStructure<T>,
        markers: Vec<Marker<T>>,
    ) -> Result<Self, KinematicsError> {
        let joints = body
            .joints
            .iter()
            .map(|j| ChainJoint {
                twist: Twist::revolute(&j.screw),
                anchor: j.screw.q,
                parent: j.parent,
            })
            .collect();
        Self::new(joints, markers)
    }

    pub fn joints(&self) -> &[ChainJoint<T>] {
        &self.joints
    }

    pub fn markers(&self) -> &[Marker<T>] {
        &self.markers
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn home_markers(&self) -> Vec<Vector3<T>> {
        self.markers.iter().map(|m| m.home).collect()
    }

    /// Whether `joint` moves `marker`.
    pub fn moves(&self, joint: usize, marker: usize) -> bool {
        self.markers[marker]
            .body
            .is_some_and(|b| self.path[b][joint])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointConfig<T: Scalar> {
    pub angles: Vec<T>,
    pub limits: Vec<(T, T)>,
}

impl<T: Scalar> JointConfig<T> {
    pub fn zeros(n: usize, limit: T) -> Self {
        Self {
            angles: vec![T::zero(); n],
            limits: vec![(-limit, limit); n],
        }
    }

    pub fn clamp(&mut self) {
        for (a, (lo, hi)) in self.angles.iter_mut().zip(&self.limits) {
            *a = a.clamp(*lo, *hi);
        }
    }

    pub fn within_limits(&self) -> bool {
        self.angles
            .iter()
            .zip(&self.limits)
            .all(|(a, (lo, hi))| lo <= a && a <= hi)
    }

    /// Whether any joint sits on one of its bounds.
    pub fn at_limit(&self) -> bool {
        self.angles
            .iter()
            .zip(&self.limits)
            .any(|(a, (lo, hi))| a <= lo || a >= hi)
    }
}

/// World-frame result of forward kinematics.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainPose<T: Scalar> {
    /// Accumulated product of exponentials per joint.
    pub transforms: Vec<RigidTransform<T>>,
    pub markers: Vec<Vector3<T>>,
}

impl<T: Scalar> ChainPose<T> {
    pub fn body_transform(&self, body: Option<usize>) -> RigidTransform<T> {
        body.map_or_else(RigidTransform::identity, |b| self.transforms[b])
    }
}

/// Product of exponentials along each root-to-joint path, applied to the
/// markers' home positions.
pub fn forward_kinematics<T: Scalar>(
    chain: &KinematicChain<T>,
    angles: &[T],
) -> Result<ChainPose<T>, KinematicsError> {
    if angles.len() != chain.dof() {
        return Err(KinematicsError::ConfigMismatch {
            expected: chain.dof(),
            got: angles.len(),
        });
    }
    let mut transforms: Vec<RigidTransform<T>> = Vec::with_capacity(chain.dof());
    for (j, theta) in chain.joints.iter().zip(angles) {
        let local = screw_exp(&j.twist, *theta);
        let t = match j.parent {
            Some(p) => transforms[p] * local,
            None => local,
        };
        transforms.push(t);
    }
    let markers = chain
        .markers
        .iter()
        .map(|m| match m.body {
            Some(b) => transforms[b].transform_point(&m.home),
            None => m.home,
        })
        .collect();
    Ok(ChainPose {
        transforms,
        markers,
    })
}

/// Positional geometric Jacobian of all markers (rows `3m..3m+3` per
/// marker), column `i` being `omega_i x (p - q_i)` in the current pose.
pub fn marker_jacobian<T: Scalar>(chain: &KinematicChain<T>, pose: &ChainPose<T>) -> DMatrix<T> {
    let mut jac = DMatrix::zeros(3 * chain.markers.len(), chain.dof());
    for (i, j) in chain.joints.iter().enumerate() {
        let frame = pose.body_transform(j.parent);
        let w = frame.transform_vector(&j.twist.omega);
        let q = frame.transform_point(&j.anchor);
        for (m, p) in pose.markers.iter().enumerate() {
            if chain.moves(i, m) {
                let col = if j.twist.omega.norm_squared() > lit(1e-24) {
                    w.cross(&(p - q))
                } else {
                    frame.transform_vector(&j.twist.v)
                };
                jac.fixed_view_mut::<3, 1>(3 * m, i).copy_from(&col);
            }
        }
    }
    jac
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IkParams<T: Scalar> {
    pub damping: T,
    pub max_iters: usize,
    pub tol: T,
    /// Largest joint change per iteration, in radians; longer steps are
    /// scaled down.
    pub max_step: T,
    /// Seeded retries after a descent stalls against a joint limit.
    pub restarts: usize,
}

impl<T: Scalar> Default for IkParams<T> {
    fn default() -> Self {
        Self {
            damping: lit(1e-2),
            max_iters: 200,
            tol: lit(1e-5),
            max_step: lit(0.5),
            restarts: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IkSolution<T: Scalar> {
    pub config: JointConfig<T>,
    /// Euclidean norm of the stacked marker residual.
    pub residual: T,
    pub iterations: usize,
    pub markers: Vec<Vector3<T>>,
}

fn residual_vector<T: Scalar>(
    markers: &[Vector3<T>],
    targets: &[(usize, Vector3<T>)],
) -> DVector<T> {
    let mut e = DVector::zeros(3 * targets.len());
    for (k, (m, t)) in targets.iter().enumerate() {
        e.fixed_rows_mut::<3>(3 * k).copy_from(&(t - markers[*m]));
    }
    e
}

/// Damped least-squares IK on marker positions.
///
/// Each iteration solves `(J J^T + lambda^2 I) y = e`, steps `J^T y`
/// (scaled down to at most `params.max_step` per joint) and clamps to the
/// joint limits. A step that raises the residual is rejected
/// and the damping raised tenfold; accepted steps relax it back towards
/// `params.damping`. A descent that stalls above tolerance with a joint
/// pinned at a limit is retried from up to `params.restarts` seeded
/// configurations drawn inside the limits. The best configuration seen is
/// returned whether or not the tolerance was met; `iterations` counts all
/// descents.
pub fn solve_ik<T: Scalar>(
    chain: &KinematicChain<T>,
    targets: &[(usize, Vector3<T>)],
    cfg0: &JointConfig<T>,
    params: &IkParams<T>,
) -> Result<IkSolution<T>, KinematicsError> {
    let mut cfg = cfg0.clone();
    cfg.clamp();
    let mut best = descend(chain, targets, cfg, params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut iterations = best.iterations;
    for _ in 0..params.restarts {
        if best.residual <= params.tol || !best.config.at_limit() {
            break;
        }
        let mut seed = cfg0.clone();
        for (a, &(lo, hi)) in seed.angles.iter_mut().zip(&cfg0.limits) {
            let lo = lo.max(-T::pi());
            let hi = hi.min(T::pi());
            let u: f64 = rng.random();
            *a = lo + (hi - lo) * lit(u);
        }
        let sol = descend(chain, targets, seed, params)?;
        iterations += sol.iterations;
        if sol.residual < best.residual {
            best = sol;
        }
    }
    best.iterations = iterations;
    Ok(best)
}

fn descend<T: Scalar>(
    chain: &KinematicChain<T>,
    targets: &[(usize, Vector3<T>)],
    mut cfg: JointConfig<T>,
    params: &IkParams<T>,
) -> Result<IkSolution<T>, KinematicsError> {
    let mut pose = forward_kinematics(chain, &cfg.angles)?;
    let mut e = residual_vector(&pose.markers, targets);
    let mut err = e.norm();
    let mut lambda = params.damping;
    let lambda_cap: T = lit(1e6);
    let mut iterations = 0;

    let rows: Vec<usize> = targets
        .iter()
        .flat_map(|(m, _)| [3 * m, 3 * m + 1, 3 * m + 2])
        .collect();

    while iterations < params.max_iters && err > params.tol && chain.dof() > 0 {
        iterations += 1;
        let full = marker_jacobian(chain, &pose);
        let jac = full.select_rows(rows.iter());
        let mut jjt = &jac * jac.transpose();
        for d in 0..jjt.nrows() {
            jjt[(d, d)] += lambda * lambda;
        }
        let Some(y) = jjt.cholesky().map(|c| c.solve(&e)) else {
            lambda *= lit(10.0);
            if lambda > lambda_cap {
                break;
            }
            continue;
        };
        let mut step = jac.transpose() * y;
        let longest = step.amax();
        if longest > params.max_step {
            step *= params.max_step / longest;
        }
        let mut trial = cfg.clone();
        for (a, d) in trial.angles.iter_mut().zip(step.iter()) {
            *a += *d;
        }
        trial.clamp();
        let trial_pose = forward_kinematics(chain, &trial.angles)?;
        let trial_e = residual_vector(&trial_pose.markers, targets);
        let trial_err = trial_e.norm();
        if trial_err < err {
            let moved = trial
                .angles
                .iter()
                .zip(&cfg.angles)
                .fold(T::zero(), |acc, (a, b)| acc.max((*a - *b).abs()));
            let gain = err - trial_err;
            cfg = trial;
            pose = trial_pose;
            e = trial_e;
            err = trial_err;
            lambda = (lambda * lit(0.1)).max(params.damping);
            if moved < lit(1e-12) || gain < err * lit(1e-10) {
                break;
            }
        } else {
            lambda *= lit(10.0);
            if lambda > lambda_cap {
                break;
            }
        }
    }
    Ok(IkSolution {
        config: cfg,
        residual: err,
        iterations,
        markers: pose.markers,
    })
}
