//! Denavit-Hartenberg baseline representation with an extra axis offset.
//!
//! Each slot stores `(theta, d, a, alpha, tau)`: the classical DH step from
//! the previous frame followed by a slide `tau` along the new joint axis, so
//! the frame origin lands on the joint anchor. Padded slots are all zero and
//! leave the frame unchanged.

use crate::kinematics::RigidTransform;
use crate::scalar::{lit, Scalar};
use crate::screw_model::{
    GroupKind, ScrewJoint, ScrewModelError, SlotLayout, UpperBodyStructure, MIN_SCALE, SLOT_COUNT,
};
use nalgebra::{DVector, Vector3};

pub const DH_SLOT_COUNT: usize = 21;
pub const DH_SLOT_WIDTH: usize = 5;
pub const DH_FEATURE_DIM: usize = DH_SLOT_COUNT * DH_SLOT_WIDTH;
/// Index of the right TCP slot.
pub const TCP_SLOT: usize = 20;
/// Link lengths with magnitude at or below this are clamped to zero.
pub const CLAMP_THRESHOLD: f64 = 0.01;
/// Twist below which a decoded slot with no link offsets is coaxial with its
/// predecessor, and therefore treated as inactive.
pub const COAXIAL_ANGLE: f64 = 0.05;

const PARALLEL_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DhJoint<T: Scalar> {
    pub theta: T,
    pub d: T,
    pub a: T,
    pub alpha: T,
    pub tau: T,
}

impl<T: Scalar> DhJoint<T> {
    pub fn new(theta: T, d: T, a: T, alpha: T, tau: T) -> Self {
        Self {
            theta,
            d,
            a,
            alpha,
            tau,
        }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero(), T::zero(), T::zero())
    }

    pub fn is_finite(&self) -> bool {
        [self.theta, self.d, self.a, self.alpha, self.tau]
            .iter()
            .all(|x| x.is_finite())
    }
}

/// Right half in the DH layout: torso, neck, right arm and right TCP.
#[derive(Clone, Debug, PartialEq)]
pub struct DhChainHalf<T: Scalar> {
    pub slots: [DhJoint<T>; DH_SLOT_COUNT],
    pub presence: [bool; DH_SLOT_COUNT],
}

impl<T: Scalar> Default for DhChainHalf<T> {
    fn default() -> Self {
        Self {
            slots: [DhJoint::zero(); DH_SLOT_COUNT],
            presence: [false; DH_SLOT_COUNT],
        }
    }
}

impl<T: Scalar> DhChainHalf<T> {
    pub fn flatten(&self) -> DVector<T> {
        DVector::from_iterator(
            DH_FEATURE_DIM,
            self.slots
                .iter()
                .flat_map(|j| [j.theta, j.d, j.a, j.alpha, j.tau]),
        )
    }

    /// Presence is inferred with [`is_active_slot`]; the TCP is always
    /// present.
    pub fn unflatten(v: &[T]) -> Result<Self, ScrewModelError> {
        if v.len() != DH_FEATURE_DIM {
            return Err(ScrewModelError::DimensionMismatch {
                expected: DH_FEATURE_DIM,
                got: v.len(),
            });
        }
        let mut out = Self::default();
        for (i, c) in v.chunks_exact(DH_SLOT_WIDTH).enumerate() {
            out.slots[i] = DhJoint::new(c[0], c[1], c[2], c[3], c[4]);
            out.presence[i] = i == TCP_SLOT || is_active_slot(&out.slots[i]);
        }
        Ok(out)
    }
}

/// Column names for the 105-wide DH feature CSV.
pub fn dh_feature_header() -> Vec<String> {
    let layout = SlotLayout::dh();
    (0..DH_SLOT_COUNT)
        .flat_map(|s| {
            let base = layout.slot_name(s);
            ["theta", "d", "a", "alpha", "tau"]
                .into_iter()
                .map(move |c| format!("{base}_{c}"))
        })
        .collect()
}

/// A slot is active unless it is coaxial with its predecessor: no link
/// offsets (after clamping) and no twist.
pub fn is_active_slot<T: Scalar>(j: &DhJoint<T>) -> bool {
    let thr: T = lit(CLAMP_THRESHOLD);
    !(j.d.abs() <= thr
        && j.a.abs() <= thr
        && j.tau.abs() <= thr
        && j.alpha.abs() < lit(COAXIAL_ANGLE))
}

/// `Rz(theta) Tz(d) Tx(a) Rx(alpha) Tz(tau)`.
pub fn dh_transform<T: Scalar>(j: &DhJoint<T>) -> RigidTransform<T> {
    RigidTransform::rot_z(j.theta)
        * RigidTransform::from_translation(Vector3::new(T::zero(), T::zero(), j.d))
        * RigidTransform::from_translation(Vector3::new(j.a, T::zero(), T::zero()))
        * RigidTransform::rot_x(j.alpha)
        * RigidTransform::from_translation(Vector3::new(T::zero(), T::zero(), j.tau))
}

/// Sagittal mirror: negates `theta` and `alpha`.
pub fn dh_mirror<T: Scalar>(half: &DhChainHalf<T>) -> DhChainHalf<T> {
    let mut out = half.clone();
    for j in out.slots.iter_mut() {
        j.theta = -j.theta;
        j.alpha = -j.alpha;
    }
    out
}

/// Zeroes `d` and `a` whose magnitude is at most 0.01 (inclusive).
pub fn dh_clamp<T: Scalar>(half: &DhChainHalf<T>) -> DhChainHalf<T> {
    let thr: T = lit(CLAMP_THRESHOLD);
    let mut out = half.clone();
    for j in out.slots.iter_mut() {
        if j.d.abs() <= thr {
            j.d = T::zero();
        }
        if j.a.abs() <= thr {
            j.a = T::zero();
        }
    }
    out
}

/// Scales lengths by `1 / ref_height` and rebases the first torso slot's `d`
/// by the base link's height `base_z`.
pub fn dh_normalize<T: Scalar>(
    half: &DhChainHalf<T>,
    ref_height: T,
    base_z: T,
) -> Result<DhChainHalf<T>, ScrewModelError> {
    if ref_height <= lit(MIN_SCALE) || !ref_height.is_finite() {
        return Err(ScrewModelError::DegenerateScale {
            distance: crate::scalar::to_f64(ref_height),
        });
    }
    let mut out = half.clone();
    for j in out.slots.iter_mut() {
        j.d /= ref_height;
        j.a /= ref_height;
        j.tau /= ref_height;
    }
    out.slots[0].d -= base_z / ref_height;
    Ok(out)
}

/// World-frame pose of one DH slot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DhAnchor<T: Scalar> {
    pub slot: usize,
    pub position: Vector3<T>,
    /// Joint axis; `None` for the TCP, which is a position only.
    pub axis: Option<Vector3<T>>,
    pub present: bool,
    pub frame: RigidTransform<T>,
}

/// Composes the DH steps from the base along `layout`'s hierarchy. The neck
/// and the arm both branch off the last torso frame.
pub fn dh_world_anchors<T: Scalar>(half: &DhChainHalf<T>, layout: &SlotLayout) -> Vec<DhAnchor<T>> {
    let mut frames: Vec<RigidTransform<T>> = Vec::with_capacity(layout.len());
    let mut out = Vec::with_capacity(layout.len());
    for slot in 0..layout.len().min(DH_SLOT_COUNT) {
        let parent = layout
            .predecessor(slot)
            .map_or_else(RigidTransform::identity, |p| frames[p]);
        let frame = parent * dh_transform(&half.slots[slot]);
        frames.push(frame);
        let is_tcp = layout.group_of(slot) == GroupKind::Tcp;
        out.push(DhAnchor {
            slot,
            position: frame.translation,
            axis: (!is_tcp).then(|| frame.rotation.column(2).into_owned()),
            present: half.presence[slot],
            frame,
        });
    }
    out
}

/// DH step from `frame` to a joint with axis `omega` through `q`.
///
/// Skew axes use the common normal `z x omega`. Parallel axes use the normal
/// through the child anchor (`tau = 0`). Intersecting axes give `a = 0`.
pub fn dh_step_to_axis<T: Scalar>(
    frame: &RigidTransform<T>,
    omega: &Vector3<T>,
    q: &Vector3<T>,
) -> DhJoint<T> {
    let x = frame.rotation.column(0).into_owned();
    let z = frame.rotation.column(2).into_owned();
    let o = frame.translation;
    let w = omega.normalize();
    let cross = z.cross(&w);
    let s = cross.norm();
    let angle_about = |from: &Vector3<T>, to: &Vector3<T>, about: &Vector3<T>| {
        about.dot(&from.cross(to)).atan2(from.dot(to))
    };
    if s > lit(PARALLEL_TOL) {
        let n = cross / s;
        let w0 = o - q;
        let b = z.dot(&w);
        let dz = z.dot(&w0);
        let ew = w.dot(&w0);
        let denom = T::one() - b * b;
        let t1 = (b * ew - dz) / denom;
        let t2 = (ew - b * dz) / denom;
        let p1 = o + z * t1;
        let p2 = q + w * t2;
        DhJoint {
            theta: angle_about(&x, &n, &z),
            d: t1,
            a: (p2 - p1).dot(&n),
            alpha: s.atan2(z.dot(&w)),
            tau: -t2,
        }
    } else {
        translation_step(frame, q, z.dot(&w) < T::zero())
    }
}

/// Pure positional step keeping the frame's z axis (flipped when `flip`).
fn translation_step<T: Scalar>(frame: &RigidTransform<T>, q: &Vector3<T>, flip: bool) -> DhJoint<T> {
    let x = frame.rotation.column(0).into_owned();
    let z = frame.rotation.column(2).into_owned();
    let rel = q - frame.translation;
    let d = rel.dot(&z);
    let radial = rel - z * d;
    let a = radial.norm();
    let theta = if a > lit(1e-12) {
        let n = radial / a;
        z.dot(&x.cross(&n)).atan2(x.dot(&n))
    } else {
        T::zero()
    };
    DhJoint {
        theta,
        d,
        a,
        alpha: if flip { T::pi() } else { T::zero() },
        tau: T::zero(),
    }
}

/// Extracts DH parameters from a screw structure expressed with the base
/// frame at the origin. Padded slots become all-zero steps. The TCP goes to
/// `tcp`, or to the last wrist slot's anchor when absent.
pub fn dh_from_screw<T: Scalar>(
    s: &UpperBodyStructure<T>,
    tcp: Option<Vector3<T>>,
) -> DhChainHalf<T> {
    let layout = SlotLayout::dh();
    let mut half = DhChainHalf::default();
    let mut frames: Vec<RigidTransform<T>> = Vec::with_capacity(DH_SLOT_COUNT);
    for slot in 0..DH_SLOT_COUNT {
        let parent = layout
            .predecessor(slot)
            .map_or_else(RigidTransform::identity, |p| frames[p]);
        let joint = if slot == TCP_SLOT {
            half.presence[slot] = true;
            let target = tcp.unwrap_or(s.slots[SLOT_COUNT - 1].q);
            translation_step(&parent, &target, false)
        } else if s.presence[slot] {
            half.presence[slot] = true;
            dh_step_to_axis(&parent, &s.slots[slot].omega, &s.slots[slot].q)
        } else {
            DhJoint::zero()
        };
        frames.push(parent * dh_transform(&joint));
        half.slots[slot] = joint;
    }
    half
}

/// Screw view of a DH half: per-slot `(axis, anchor)`, the activity mask and
/// the TCP position. Inactive slots become placeholders at their frame
/// origin.
pub fn dh_to_screw<T: Scalar>(
    half: &DhChainHalf<T>,
) -> ([ScrewJoint<T>; SLOT_COUNT], [bool; SLOT_COUNT], Vector3<T>) {
    let anchors = dh_world_anchors(half, &SlotLayout::dh());
    let mut slots = [ScrewJoint::zero(); SLOT_COUNT];
    let mut active = [false; SLOT_COUNT];
    for a in anchors.iter().take(SLOT_COUNT) {
        if half.presence[a.slot] {
            slots[a.slot] = ScrewJoint::new(a.axis.unwrap_or_else(Vector3::z), a.position);
            active[a.slot] = true;
        } else {
            slots[a.slot] = ScrewJoint::placeholder(a.position);
        }
    }
    (slots, active, anchors[TCP_SLOT].position)
}
