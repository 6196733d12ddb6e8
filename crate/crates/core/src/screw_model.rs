//! Screw-axis design representation.
//!
//! Every revolute joint is stored as a world-frame axis direction `omega`
//! and a point `q` on that axis. A robot's upper body is encoded by its
//! torso, neck and right arm only: 20 slots of `(omega, q)`, flattened to a
//! 120-dimensional feature vector. The left arm is recovered by mirroring
//! across the sagittal (`y = 0`) plane.

use crate::scalar::{lit, Scalar};
use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use thiserror::Error;

/// Number of slots in the right-half screw layout.
pub const SLOT_COUNT: usize = 20;
/// Components per slot: `(wx, wy, wz, qx, qy, qz)`.
pub const SLOT_WIDTH: usize = 6;
/// Length of the flattened feature vector.
pub const FEATURE_DIM: usize = SLOT_COUNT * SLOT_WIDTH;
/// Number of central (torso + neck) slots.
pub const CENTRAL_SLOTS: usize = 10;
/// Axis norm below which an extracted joint counts as missing.
pub const MISSING_AXIS_THRESHOLD: f64 = 1e-2;
/// Axis norm at or above which a decoded joint counts as active.
pub const ACTIVATION_THRESHOLD: f64 = 0.5;
/// Smallest admissible shoulder-to-base distance.
pub const MIN_SCALE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScrewModelError {
    #[error("degenerate normalization scale {distance:e}")]
    DegenerateScale { distance: f64 },
    #[error("group {group} holds {count} joints but has capacity {capacity}")]
    CapacityExceeded {
        group: GroupKind,
        count: usize,
        capacity: usize,
    },
    #[error("expected a vector of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("group {kind} {reason}")]
    InvalidGroup { kind: GroupKind, reason: &'static str },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// Anatomical joint groups. `Tcp` only exists in the DH layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Torso,
    Neck,
    ShoulderGirdle,
    Shoulder,
    UpperArm,
    Elbow,
    Forearm,
    Wrist,
    Tcp,
}

impl GroupKind {
    pub const SCREW_GROUPS: [GroupKind; 8] = [
        GroupKind::Torso,
        GroupKind::Neck,
        GroupKind::ShoulderGirdle,
        GroupKind::Shoulder,
        GroupKind::UpperArm,
        GroupKind::Elbow,
        GroupKind::Forearm,
        GroupKind::Wrist,
    ];

    /// Torso and neck sit on the body midline and carry no side.
    pub fn is_central(self) -> bool {
        matches!(self, GroupKind::Torso | GroupKind::Neck)
    }

    /// Parent group along the kinematic hierarchy.
    pub fn parent(self) -> Option<GroupKind> {
        use GroupKind::*;
        match self {
            Torso => None,
            Neck | ShoulderGirdle => Some(Torso),
            Shoulder => Some(ShoulderGirdle),
            UpperArm => Some(Shoulder),
            Elbow => Some(UpperArm),
            Forearm => Some(Elbow),
            Wrist => Some(Forearm),
            Tcp => Some(Wrist),
        }
    }

    pub fn name(self) -> &'static str {
        use GroupKind::*;
        match self {
            Torso => "torso",
            Neck => "neck",
            ShoulderGirdle => "shoulder_girdle",
            Shoulder => "shoulder",
            UpperArm => "upper_arm",
            Elbow => "elbow",
            Forearm => "forearm",
            Wrist => "wrist",
            Tcp => "tcp",
        }
    }
}

impl fmt::Display for GroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A group together with its side. Central groups have no side, arm groups
/// exactly one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JointGroup {
    pub kind: GroupKind,
    pub side: Option<Side>,
}

impl JointGroup {
    pub fn new(kind: GroupKind, side: Option<Side>) -> Result<Self, ScrewModelError> {
        match (kind.is_central(), side) {
            (true, Some(_)) => Err(ScrewModelError::InvalidGroup {
                kind,
                reason: "must not carry a side",
            }),
            (false, None) => Err(ScrewModelError::InvalidGroup {
                kind,
                reason: "requires a side",
            }),
            _ => Ok(Self { kind, side }),
        }
    }

    pub fn central(kind: GroupKind) -> Self {
        debug_assert!(kind.is_central());
        Self { kind, side: None }
    }

    pub fn right(kind: GroupKind) -> Self {
        debug_assert!(!kind.is_central());
        Self {
            kind,
            side: Some(Side::Right),
        }
    }
}

/// Ordered `(group, capacity)` list. Slots inside a group follow chain order,
/// base to distal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotLayout {
    groups: Vec<(GroupKind, usize)>,
}

impl SlotLayout {
    /// The 20-slot right-half screw layout.
    pub fn screw() -> Self {
        use GroupKind::*;
        Self {
            groups: vec![
                (Torso, 6),
                (Neck, 4),
                (ShoulderGirdle, 1),
                (Shoulder, 3),
                (UpperArm, 1),
                (Elbow, 1),
                (Forearm, 1),
                (Wrist, 3),
            ],
        }
    }

    /// The 21-slot right-half DH layout (screw layout plus the right TCP).
    pub fn dh() -> Self {
        let mut layout = Self::screw();
        layout.groups.push((GroupKind::Tcp, 1));
        layout
    }

    pub fn groups(&self) -> &[(GroupKind, usize)] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(|(_, c)| c).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn capacity(&self, kind: GroupKind) -> usize {
        self.groups
            .iter()
            .find(|(g, _)| *g == kind)
            .map_or(0, |(_, c)| *c)
    }

    pub fn group_range(&self, kind: GroupKind) -> Range<usize> {
        let mut start = 0;
        for &(g, c) in &self.groups {
            if g == kind {
                return start..start + c;
            }
            start += c;
        }
        start..start
    }

    pub fn group_of(&self, slot: usize) -> GroupKind {
        let mut start = 0;
        for &(g, c) in &self.groups {
            if slot < start + c {
                return g;
            }
            start += c;
        }
        panic!("slot {slot} outside layout of {} slots", start)
    }

    /// Previous slot along the kinematic hierarchy: the preceding slot of the
    /// same group, else the last slot of the nearest ancestor group. `None`
    /// means the slot hangs off the base.
    pub fn predecessor(&self, slot: usize) -> Option<usize> {
        let kind = self.group_of(slot);
        let range = self.group_range(kind);
        if slot > range.start {
            return Some(slot - 1);
        }
        let mut parent = kind.parent();
        while let Some(p) = parent {
            let r = self.group_range(p);
            if !r.is_empty() {
                return Some(r.end - 1);
            }
            parent = p.parent();
        }
        None
    }

    pub fn slot_name(&self, slot: usize) -> String {
        let kind = self.group_of(slot);
        let offset = slot - self.group_range(kind).start;
        format!("s{slot:02}_{}{offset}", kind.name())
    }
}

/// One revolute joint: unit (or zero placeholder) axis `omega` through `q`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScrewJoint<T: Scalar> {
    pub omega: Vector3<T>,
    pub q: Vector3<T>,
}

impl<T: Scalar> ScrewJoint<T> {
    pub fn new(omega: Vector3<T>, q: Vector3<T>) -> Self {
        Self { omega, q }
    }

    /// Orientationless placeholder at `q`.
    pub fn placeholder(q: Vector3<T>) -> Self {
        Self {
            omega: Vector3::zeros(),
            q,
        }
    }

    pub fn zero() -> Self {
        Self::placeholder(Vector3::zeros())
    }

    /// Reflection through the sagittal plane.
    pub fn mirrored(&self) -> Self {
        Self {
            omega: Vector3::new(self.omega.x, -self.omega.y, self.omega.z),
            q: Vector3::new(self.q.x, -self.q.y, self.q.z),
        }
    }

    pub fn axis_norm(&self) -> T {
        self.omega.norm()
    }

    /// Moment vector `v = -omega x q` of the zero-pitch screw.
    pub fn moment(&self) -> Vector3<T> {
        -self.omega.cross(&self.q)
    }
}

/// Right-half encoding: 20 slots in [`SlotLayout::screw`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct UpperBodyStructure<T: Scalar> {
    pub slots: [ScrewJoint<T>; SLOT_COUNT],
    /// `true` for joints that were present before padding.
    pub presence: [bool; SLOT_COUNT],
}

impl<T: Scalar> Default for UpperBodyStructure<T> {
    fn default() -> Self {
        Self {
            slots: [ScrewJoint::zero(); SLOT_COUNT],
            presence: [false; SLOT_COUNT],
        }
    }
}

impl<T: Scalar> UpperBodyStructure<T> {
    pub fn padded_slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.presence
            .iter()
            .enumerate()
            .filter(|(_, p)| !**p)
            .map(|(i, _)| i)
    }

    pub fn present_count(&self) -> usize {
        self.presence.iter().filter(|p| **p).count()
    }
}

/// Joints collected per group, each list in chain order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroupedJoints<T: Scalar> {
    pub groups: BTreeMap<GroupKind, Vec<ScrewJoint<T>>>,
}

impl<T: Scalar> GroupedJoints<T> {
    pub fn new() -> Self {
        Self {
            groups: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, kind: GroupKind, joint: ScrewJoint<T>) {
        self.groups.entry(kind).or_default().push(joint);
    }

    pub fn with(mut self, kind: GroupKind, joints: Vec<ScrewJoint<T>>) -> Self {
        self.groups.insert(kind, joints);
        self
    }
}

/// A joint as read from a full-body, world-frame source.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawJoint<T: Scalar> {
    pub group: JointGroup,
    pub joint: ScrewJoint<T>,
}

/// Centers on the base, scales by the shoulder-to-base distance, drops the
/// left side and pads the right half.
///
/// `raw` must list the joints of each group in chain order.
pub fn normalize_structure<T: Scalar>(
    raw: &[RawJoint<T>],
    base_position: Vector3<T>,
    shoulder_positions: (Vector3<T>, Vector3<T>),
) -> Result<UpperBodyStructure<T>, ScrewModelError> {
    let scale = reference_height(base_position, shoulder_positions)?;
    let mut grouped = GroupedJoints::new();
    for r in raw.iter().filter(|r| r.group.side != Some(Side::Left)) {
        grouped.push(
            r.group.kind,
            ScrewJoint::new(r.joint.omega, (r.joint.q - base_position) / scale),
        );
    }
    pad_structure(&grouped)
}

/// Distance between the mean shoulder position and the base.
pub fn reference_height<T: Scalar>(
    base_position: Vector3<T>,
    shoulder_positions: (Vector3<T>, Vector3<T>),
) -> Result<T, ScrewModelError> {
    let mid = (shoulder_positions.0 + shoulder_positions.1) * lit::<T>(0.5);
    let scale = (mid - base_position).norm();
    if scale <= lit(MIN_SCALE) || !scale.is_finite() {
        return Err(ScrewModelError::DegenerateScale {
            distance: crate::scalar::to_f64(scale),
        });
    }
    Ok(scale)
}

/// Pads per-group joint lists into the fixed 20-slot layout using the
/// default missing-axis threshold.
pub fn pad_structure<T: Scalar>(
    partial: &GroupedJoints<T>,
) -> Result<UpperBodyStructure<T>, ScrewModelError> {
    pad_structure_with(partial, lit(MISSING_AXIS_THRESHOLD))
}

/// Padding rules:
/// * joints whose axis norm is below `missing_threshold` count as missing;
/// * missing slots get `omega = 0`;
/// * their `q` is the mean of the group's present joints, or, for an empty
///   group, the mean of the nearest ancestor group that has present joints
///   (the base origin when none does).
pub fn pad_structure_with<T: Scalar>(
    partial: &GroupedJoints<T>,
    missing_threshold: T,
) -> Result<UpperBodyStructure<T>, ScrewModelError> {
    let layout = SlotLayout::screw();
    for (kind, joints) in &partial.groups {
        let capacity = layout.capacity(*kind);
        if joints.len() > capacity {
            return Err(ScrewModelError::CapacityExceeded {
                group: *kind,
                count: joints.len(),
                capacity,
            });
        }
    }

    let present: BTreeMap<GroupKind, Vec<ScrewJoint<T>>> = partial
        .groups
        .iter()
        .map(|(k, js)| {
            let kept = js
                .iter()
                .filter(|j| j.axis_norm() >= missing_threshold && j.q.iter().all(|c| c.is_finite()))
                .copied()
                .collect::<Vec<_>>();
            (*k, kept)
        })
        .collect();
    let group_mean = |kind: GroupKind| -> Option<Vector3<T>> {
        let js = present.get(&kind)?;
        if js.is_empty() {
            return None;
        }
        let sum = js.iter().fold(Vector3::zeros(), |acc, j| acc + j.q);
        Some(sum / lit::<T>(js.len() as f64))
    };

    let mut out = UpperBodyStructure::default();
    for &(kind, _) in layout.groups() {
        let range = layout.group_range(kind);
        let fill = {
            let mut g = Some(kind);
            let mut found = None;
            while let Some(k) = g {
                if let Some(m) = group_mean(k) {
                    found = Some(m);
                    break;
                }
                g = k.parent();
            }
            found.unwrap_or_else(Vector3::zeros)
        };
        let joints = present.get(&kind).map(Vec::as_slice).unwrap_or(&[]);
        for (offset, slot) in range.enumerate() {
            match joints.get(offset) {
                Some(j) => {
                    out.slots[slot] = *j;
                    out.presence[slot] = true;
                }
                None => out.slots[slot] = ScrewJoint::placeholder(fill),
            }
        }
    }
    Ok(out)
}

/// Sagittal mirror of a list of arm joints; slot order is preserved.
pub fn mirror_right_to_left<T: Scalar>(right: &[ScrewJoint<T>]) -> Vec<ScrewJoint<T>> {
    right.iter().map(ScrewJoint::mirrored).collect()
}

/// Slot `i` lands in components `[6i, 6i + 6)` as `(wx, wy, wz, qx, qy, qz)`.
pub fn flatten<T: Scalar>(s: &UpperBodyStructure<T>) -> DVector<T> {
    DVector::from_iterator(
        FEATURE_DIM,
        s.slots
            .iter()
            .flat_map(|j| j.omega.iter().chain(j.q.iter()).copied().collect::<Vec<_>>()),
    )
}

/// Inverse of [`flatten`]. Presence is inferred from the axis norm.
pub fn unflatten<T: Scalar>(v: &[T]) -> Result<UpperBodyStructure<T>, ScrewModelError> {
    if v.len() != FEATURE_DIM {
        return Err(ScrewModelError::DimensionMismatch {
            expected: FEATURE_DIM,
            got: v.len(),
        });
    }
    let mut out = UpperBodyStructure::default();
    for (i, chunk) in v.chunks_exact(SLOT_WIDTH).enumerate() {
        let j = ScrewJoint::new(
            Vector3::new(chunk[0], chunk[1], chunk[2]),
            Vector3::new(chunk[3], chunk[4], chunk[5]),
        );
        out.presence[i] = j.axis_norm() >= lit(MISSING_AXIS_THRESHOLD);
        out.slots[i] = j;
    }
    Ok(out)
}

/// Feature CSV column names, `s00_torso0_wx` .. `s19_wrist2_qz`.
pub fn feature_header() -> Vec<String> {
    let layout = SlotLayout::screw();
    (0..SLOT_COUNT)
        .flat_map(|s| {
            let base = layout.slot_name(s);
            ["wx", "wy", "wz", "qx", "qy", "qz"]
                .into_iter()
                .map(move |c| format!("{base}_{c}"))
        })
        .collect()
}

/// An active joint of the mirrored full body.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BodyJoint<T: Scalar> {
    pub screw: ScrewJoint<T>,
    /// Slot index in the right-half layout.
    pub slot: usize,
    /// `None` for torso and neck.
    pub side: Option<Side>,
    /// Index of the parent joint; `None` for joints attached to the base.
    pub parent: Option<usize>,
}

/// A slot anchor kept as a rigid point even when its joint is inactive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlotPoint<T: Scalar> {
    pub slot: usize,
    pub side: Option<Side>,
    pub position: Vector3<T>,
    /// Nearest active joint at or above this slot; the point moves with it.
    pub attached_to: Option<usize>,
}

/// Mirrored full upper body: active joints wired into a tree plus every slot
/// anchor.
///
/// Joints are ordered torso, neck, right arm, left arm, so every parent index
/// is smaller than its child's.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FullBodyStructure<T: Scalar> {
    pub joints: Vec<BodyJoint<T>>,
    pub points: Vec<SlotPoint<T>>,
}

impl<T: Scalar> FullBodyStructure<T> {
    /// Wires the active slots of a right-half layout into a full body. The
    /// arm chain hangs off the last active torso joint (or the base).
    pub fn from_slots(slots: &[ScrewJoint<T>; SLOT_COUNT], active: &[bool; SLOT_COUNT]) -> Self {
        let layout = SlotLayout::screw();
        let mut joints: Vec<BodyJoint<T>> = Vec::new();
        let mut points = Vec::with_capacity(CENTRAL_SLOTS + 2 * (SLOT_COUNT - CENTRAL_SLOTS));
        // joint index of each central slot, if active
        let mut central_index = [None; CENTRAL_SLOTS];

        let nearest_active = |slot: Option<usize>, index_of: &dyn Fn(usize) -> Option<usize>| {
            let mut s = slot;
            while let Some(i) = s {
                if let Some(j) = index_of(i) {
                    return Some(j);
                }
                s = layout.predecessor(i);
            }
            None
        };

        for slot in 0..CENTRAL_SLOTS {
            let idx = |i: usize| if i < CENTRAL_SLOTS { central_index[i] } else { None };
            if active[slot] {
                let parent = nearest_active(layout.predecessor(slot), &idx);
                central_index[slot] = Some(joints.len());
                joints.push(BodyJoint {
                    screw: slots[slot],
                    slot,
                    side: None,
                    parent,
                });
            }
        }
        for (slot, screw) in slots.iter().enumerate().take(CENTRAL_SLOTS) {
            let idx = |i: usize| central_index[i];
            points.push(SlotPoint {
                slot,
                side: None,
                position: screw.q,
                attached_to: nearest_active(Some(slot), &idx),
            });
        }

        for side in [Side::Right, Side::Left] {
            let mut arm_index = [None; SLOT_COUNT];
            arm_index[..CENTRAL_SLOTS].copy_from_slice(&central_index);
            for slot in CENTRAL_SLOTS..SLOT_COUNT {
                let screw = match side {
                    Side::Right => slots[slot],
                    Side::Left => slots[slot].mirrored(),
                };
                if active[slot] {
                    let idx = |i: usize| arm_index[i];
                    let parent = nearest_active(layout.predecessor(slot), &idx);
                    arm_index[slot] = Some(joints.len());
                    joints.push(BodyJoint {
                        screw,
                        slot,
                        side: Some(side),
                        parent,
                    });
                }
                let idx = |i: usize| arm_index[i];
                points.push(SlotPoint {
                    slot,
                    side: Some(side),
                    position: screw.q,
                    attached_to: nearest_active(Some(slot), &idx),
                });
            }
        }
        Self { joints, points }
    }

    pub fn central(&self) -> impl Iterator<Item = &BodyJoint<T>> {
        self.joints.iter().filter(|j| j.side.is_none())
    }

    pub fn right(&self) -> impl Iterator<Item = &BodyJoint<T>> {
        self.joints.iter().filter(|j| j.side == Some(Side::Right))
    }

    pub fn left(&self) -> impl Iterator<Item = &BodyJoint<T>> {
        self.joints.iter().filter(|j| j.side == Some(Side::Left))
    }

    pub fn point(&self, slot: usize, side: Option<Side>) -> Option<&SlotPoint<T>> {
        let side = if slot < CENTRAL_SLOTS { None } else { side };
        self.points.iter().find(|p| p.slot == slot && p.side == side)
    }

    /// Per-slot activity of the right-half layout.
    pub fn active_mask(&self) -> [bool; SLOT_COUNT] {
        let mut mask = [false; SLOT_COUNT];
        for j in self.joints.iter().filter(|j| j.side != Some(Side::Left)) {
            mask[j.slot] = true;
        }
        mask
    }
}

/// Applies the activation rule to a decoded feature vector.
///
/// A slot is active when its axis norm is at least `epsilon` (and nonzero);
/// active axes are renormalized to unit length. The right arm is mirrored to
/// produce the left one.
pub fn activate_decoded<T: Scalar>(
    v: &[T],
    epsilon: T,
) -> Result<FullBodyStructure<T>, ScrewModelError> {
    let s = unflatten(v)?;
    let mut slots = s.slots;
    let mut active = [false; SLOT_COUNT];
    for (slot, a) in slots.iter_mut().zip(active.iter_mut()) {
        let n = slot.axis_norm();
        if n >= epsilon && n > T::zero() && n.is_finite() {
            slot.omega /= n;
            *a = true;
        }
    }
    Ok(FullBodyStructure::from_slots(&slots, &active))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn layout_capacities() {
        let l = SlotLayout::screw();
        assert_eq!(l.len(), 20);
        assert_eq!(SlotLayout::dh().len(), 21);
        assert_eq!(l.group_range(GroupKind::Neck), 6..10);
        assert_eq!(l.group_range(GroupKind::Wrist), 17..20);
        assert_eq!(l.predecessor(0), None);
        assert_eq!(l.predecessor(6), Some(5));
        assert_eq!(l.predecessor(10), Some(5));
        assert_eq!(l.predecessor(11), Some(10));
        assert_eq!(l.slot_name(17), "s17_wrist0");
    }

    #[test]
    fn group_sides() {
        assert!(JointGroup::new(GroupKind::Torso, Some(Side::Left)).is_err());
        assert!(JointGroup::new(GroupKind::Elbow, None).is_err());
        assert!(JointGroup::new(GroupKind::Elbow, Some(Side::Right)).is_ok());
    }

    #[test]
    fn normalize_halves_positions() {
        let raw = [RawJoint {
            group: JointGroup::central(GroupKind::Torso),
            joint: ScrewJoint::new(v(0., 0., 1.), v(0., 0., 1.)),
        }];
        let s = normalize_structure(&raw, v(0., 0., 0.), (v(0., 0.3, 2.), v(0., -0.3, 2.))).unwrap();
        assert_eq!(s.slots[0].q, v(0., 0., 0.5));
        assert_eq!(s.slots[0].omega, v(0., 0., 1.));
        assert!(s.presence[0]);
    }

    #[test]
    fn normalize_rejects_degenerate_scale() {
        let err = normalize_structure::<f64>(&[], v(1., 2., 3.), (v(1., 2.5, 3.), v(1., 1.5, 3.)));
        assert!(matches!(err, Err(ScrewModelError::DegenerateScale { .. })));
    }

    #[test]
    fn normalize_discards_left_side() {
        let raw = [
            RawJoint {
                group: JointGroup::right(GroupKind::Elbow),
                joint: ScrewJoint::new(v(0., 1., 0.), v(0., -0.2, 0.5)),
            },
            RawJoint {
                group: JointGroup {
                    kind: GroupKind::Elbow,
                    side: Some(Side::Left),
                },
                joint: ScrewJoint::new(v(0., 1., 0.), v(0., 0.2, 0.5)),
            },
        ];
        let s = normalize_structure(&raw, v(0., 0., 0.), (v(0., 0.2, 1.), v(0., -0.2, 1.))).unwrap();
        let elbow = SlotLayout::screw().group_range(GroupKind::Elbow).start;
        assert_eq!(s.slots[elbow].q, v(0., -0.2, 0.5));
        assert_eq!(s.present_count(), 1);
    }

    #[test]
    fn empty_elbow_inherits_upper_arm() {
        let g = GroupedJoints::new().with(
            GroupKind::UpperArm,
            vec![ScrewJoint::new(v(1., 0., 0.), v(0.1, 0.3, 0.9))],
        );
        let s = pad_structure(&g).unwrap();
        let elbow = SlotLayout::screw().group_range(GroupKind::Elbow).start;
        assert_eq!(s.slots[elbow], ScrewJoint::placeholder(v(0.1, 0.3, 0.9)));
        assert!(!s.presence[elbow]);
    }

    #[test]
    fn partial_wrist_uses_group_mean() {
        let g = GroupedJoints::new().with(
            GroupKind::Wrist,
            vec![ScrewJoint::new(v(0., 1., 0.), v(0.2, 0.4, 0.8))],
        );
        let s = pad_structure(&g).unwrap();
        let r = SlotLayout::screw().group_range(GroupKind::Wrist);
        assert!(s.presence[r.start]);
        for slot in r.start + 1..r.end {
            assert_eq!(s.slots[slot], ScrewJoint::placeholder(v(0.2, 0.4, 0.8)));
        }
    }

    #[test]
    fn tiny_axis_counts_as_missing() {
        let g = GroupedJoints::new().with(
            GroupKind::Torso,
            vec![
                ScrewJoint::new(v(0., 0., 1.), v(0., 0., 0.2)),
                ScrewJoint::new(v(0., 0., 0.005), v(0., 0., 0.6)),
            ],
        );
        let s = pad_structure(&g).unwrap();
        assert!(s.presence[0]);
        assert!(!s.presence[1]);
        assert_eq!(s.slots[1], ScrewJoint::placeholder(v(0., 0., 0.2)));
    }

    #[test]
    fn capacity_is_enforced() {
        let j = ScrewJoint::new(v(1., 0., 0.), v(0., 0., 0.));
        let g = GroupedJoints::new().with(GroupKind::Shoulder, vec![j; 4]);
        assert_eq!(
            pad_structure(&g),
            Err(ScrewModelError::CapacityExceeded {
                group: GroupKind::Shoulder,
                count: 4,
                capacity: 3
            })
        );
    }

    #[test]
    fn empty_tree_falls_back_to_base() {
        let s = pad_structure::<f64>(&GroupedJoints::new()).unwrap();
        assert!(s.slots.iter().all(|j| *j == ScrewJoint::zero()));
    }

    #[test]
    fn mirror_examples() {
        let j = ScrewJoint::new(v(0., 1., 0.), v(0.1, 0.2, 0.3));
        assert_eq!(j.mirrored(), ScrewJoint::new(v(0., -1., 0.), v(0.1, -0.2, 0.3)));
        assert_eq!(ScrewJoint::<f64>::zero().mirrored(), ScrewJoint::zero());
        let sag = ScrewJoint::new(v(1., 0., 0.), v(0.3, 0., 0.5));
        assert_eq!(mirror_right_to_left(&[sag]), vec![sag]);
    }

    #[test]
    fn flatten_layout() {
        let mut s = UpperBodyStructure::<f64>::default();
        assert!(flatten(&s).iter().all(|x| *x == 0.0));
        s.slots[0] = ScrewJoint::new(v(0., 0., 1.), v(0., 0., 0.5));
        let f = flatten(&s);
        assert_eq!(f.len(), 120);
        assert_eq!(f[2], 1.0);
        assert_eq!(f[5], 0.5);
        assert_eq!(f.iter().filter(|x| **x != 0.0).count(), 2);
        assert!(unflatten(&[0.0f64; 119]).is_err());
    }

    #[test]
    fn activation_rule() {
        let mut v120 = vec![0.0f64; FEATURE_DIM];
        v120[2] = 0.4;
        let s = activate_decoded(&v120, 0.5).unwrap();
        assert!(s.joints.is_empty());
        v120[2] = 0.8;
        let s = activate_decoded(&v120, 0.5).unwrap();
        assert_eq!(s.joints[0].screw.omega, v(0., 0., 1.));
    }

    #[test]
    fn torso_and_shoulder_mirror_into_three_joints() {
        let mut v120 = vec![0.0f64; FEATURE_DIM];
        v120[2] = 1.0;
        let shoulder = SlotLayout::screw().group_range(GroupKind::Shoulder).start;
        v120[shoulder * 6 + 1] = 1.0;
        v120[shoulder * 6 + 4] = -0.3;
        let s = activate_decoded(&v120, 0.5).unwrap();
        assert_eq!(s.joints.len(), 3);
        assert_eq!(s.central().count(), 1);
        let r = s.right().next().unwrap();
        let l = s.left().next().unwrap();
        assert_eq!(r.parent, Some(0));
        assert_eq!(l.parent, Some(0));
        assert_eq!(l.screw.q.y, 0.3);
        assert_eq!(s.points.len(), 30);
        let wrist = s.point(19, Some(Side::Left)).unwrap();
        assert_eq!(wrist.attached_to, Some(2));
    }

    #[test]
    fn arms_root_at_base_without_torso() {
        let mut v120 = vec![0.0f64; FEATURE_DIM];
        v120[10 * 6 + 2] = 1.0;
        let s = activate_decoded(&v120, 0.5).unwrap();
        assert_eq!(s.joints.len(), 2);
        assert!(s.joints.iter().all(|j| j.parent.is_none()));
    }

    #[test]
    fn header_names() {
        let h = feature_header();
        assert_eq!(h.len(), 120);
        assert_eq!(h[0], "s00_torso0_wx");
        assert_eq!(h[119], "s19_wrist2_qz");
    }
}
