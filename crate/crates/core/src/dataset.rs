//! Robot records, curation into feature matrices, and synthetic robot
//! families.
//!
//! A record lists world-frame joint axes and anchors of a robot posed in
//! A-pose, together with its base and shoulder positions. Curation centres
//! on the base, scales by the shoulder-to-base distance, keeps the right half
//! and pads it into the fixed slot layout.

use crate::dh_model::{dh_from_screw, dh_normalize, DhChainHalf, DH_FEATURE_DIM};
use crate::screw_model::{
    flatten, normalize_structure, pad_structure, reference_height, GroupKind, GroupedJoints, JointGroup,
    RawJoint, ScrewJoint, ScrewModelError, Side, SlotLayout, UpperBodyStructure, FEATURE_DIM,
    MISSING_AXIS_THRESHOLD,
};
use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Relative left/right discrepancy above which an ingest warning is raised.
pub const ASYMMETRY_TOLERANCE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("record {record:?}, field {field}: {message}")]
    Schema {
        record: String,
        field: String,
        message: String,
    },
    #[error("record {record:?}: {source}")]
    Structure {
        record: String,
        source: ScrewModelError,
    },
    #[error("no records")]
    NoRecords,
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("matrix CSV: {0}")]
    Matrix(String),
}

fn schema(record: &str, field: impl Into<String>, message: impl Into<String>) -> DatasetError {
    DatasetError::Schema {
        record: record.to_string(),
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RobotType {
    #[serde(rename = "humanoid")]
    Humanoid,
    #[serde(rename = "non-bipedal")]
    NonBipedal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointRecord {
    pub group: GroupKind,
    #[serde(default)]
    pub side: Option<Side>,
    pub axis_world: [f64; 3],
    pub anchor_world: [f64; 3],
    /// Index of the parent joint in the record; `None` for joints on the
    /// base.
    #[serde(default)]
    pub parent: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotRecord {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: RobotType,
    pub base_position: [f64; 3],
    /// Left, then right.
    pub shoulder_positions: [[f64; 3]; 2],
    pub joints: Vec<JointRecord>,
    /// Left, then right tool centre points (used by the DH representation).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tcp_positions: Option<[[f64; 3]; 2]>,
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

impl RobotRecord {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }

    pub fn base(&self) -> Vector3<f64> {
        v3(self.base_position)
    }

    /// `(left, right)`.
    pub fn shoulders(&self) -> (Vector3<f64>, Vector3<f64>) {
        (v3(self.shoulder_positions[0]), v3(self.shoulder_positions[1]))
    }

    /// Checks field values, group/side consistency and the parent tree, and
    /// returns each joint's depth below the base.
    pub fn validate(&self) -> Result<Vec<usize>, DatasetError> {
        let name = self.name.as_str();
        if name.trim().is_empty() {
            return Err(schema(name, "name", "must not be empty"));
        }
        if name.contains([',', '"', '\n', '\r']) {
            return Err(schema(name, "name", "must not contain commas, quotes or line breaks"));
        }
        let finite = |a: &[f64; 3]| a.iter().all(|v| v.is_finite());
        if !finite(&self.base_position) {
            return Err(schema(name, "base_position", "non-finite component"));
        }
        for (i, s) in self.shoulder_positions.iter().enumerate() {
            if !finite(s) {
                return Err(schema(name, format!("shoulder_positions[{i}]"), "non-finite component"));
            }
        }
        if let Some(t) = &self.tcp_positions {
            if !t.iter().all(finite) {
                return Err(schema(name, "tcp_positions", "non-finite component"));
            }
        }
        let n = self.joints.len();
        for (i, j) in self.joints.iter().enumerate() {
            if j.group == GroupKind::Tcp {
                return Err(schema(name, format!("joints[{i}].group"), "tcp is not a joint group"));
            }
            JointGroup::new(j.group, j.side).map_err(|e| schema(name, format!("joints[{i}].side"), e.to_string()))?;
            if !finite(&j.axis_world) {
                return Err(schema(name, format!("joints[{i}].axis_world"), "non-finite component"));
            }
            if !finite(&j.anchor_world) {
                return Err(schema(name, format!("joints[{i}].anchor_world"), "non-finite component"));
            }
            if let Some(p) = j.parent {
                if p >= n || p == i {
                    return Err(schema(name, format!("joints[{i}].parent"), format!("invalid index {p}")));
                }
            }
        }
        let mut depth = vec![0; n];
        for (i, d) in depth.iter_mut().enumerate() {
            let mut cur = self.joints[i].parent;
            let mut steps = 0;
            while let Some(p) = cur {
                steps += 1;
                if steps > n {
                    return Err(schema(name, format!("joints[{i}].parent"), "parent links form a cycle"));
                }
                cur = self.joints[p].parent;
            }
            *d = steps;
        }
        Ok(depth)
    }

    /// Joints in chain order (by depth, then record order), with axes of
    /// usable length rescaled to unit length.
    fn ordered_joints(&self, depth: &[usize]) -> Vec<RawJoint<f64>> {
        let mut idx: Vec<usize> = (0..self.joints.len()).collect();
        idx.sort_by_key(|&i| (depth[i], i));
        idx.into_iter()
            .map(|i| {
                let j = &self.joints[i];
                let mut omega = v3(j.axis_world);
                let n = omega.norm();
                if n >= MISSING_AXIS_THRESHOLD {
                    omega /= n;
                }
                RawJoint {
                    group: JointGroup {
                        kind: j.group,
                        side: j.side,
                    },
                    joint: ScrewJoint::new(omega, v3(j.anchor_world)),
                }
            })
            .collect()
    }
}

/// Per-robot curation notes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurationEntry {
    pub name: String,
    /// Joints kept from the right half and midline.
    pub present_joints: usize,
    pub padded_slots: Vec<String>,
    /// `(group, source)` for every group with padded slots; the source is
    /// `group_mean`, the ancestor group the anchor came from, or `base`.
    pub fallbacks: Vec<(GroupKind, String)>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CuratedSet {
    pub names: Vec<String>,
    pub vectors: Vec<DVector<f64>>,
    pub report: Vec<CurationEntry>,
}

fn fallback_sources(s: &UpperBodyStructure<f64>) -> Vec<(GroupKind, String)> {
    let layout = SlotLayout::screw();
    let has_present = |k: GroupKind| layout.group_range(k).any(|i| s.presence[i]);
    let mut out = Vec::new();
    for &(kind, _) in layout.groups() {
        let range = layout.group_range(kind);
        if range.clone().all(|i| s.presence[i]) {
            continue;
        }
        let source = if has_present(kind) {
            "group_mean".to_string()
        } else {
            let mut g = kind.parent();
            loop {
                match g {
                    Some(k) if has_present(k) => break k.name().to_string(),
                    Some(k) => g = k.parent(),
                    None => break "base".to_string(),
                }
            }
        };
        out.push((kind, source));
    }
    out
}

fn axis_gap(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (a - b).norm().min((a + b).norm())
}

/// Compares the left arm, mirrored, against the right arm.
fn asymmetry_warnings(rec: &RobotRecord, raw: &[RawJoint<f64>], scale: f64) -> Vec<String> {
    let mut out = Vec::new();
    let (ls, rs) = rec.shoulders();
    let mirror = |p: &Vector3<f64>| Vector3::new(p.x, -p.y, p.z);
    let base = rec.base();
    let gap = (mirror(&(ls - base)) - (rs - base)).norm() / scale;
    if gap > ASYMMETRY_TOLERANCE {
        out.push(format!("shoulder positions differ by {:.1}% after mirroring", gap * 100.0));
    }
    let mut sides: BTreeMap<GroupKind, [Vec<&ScrewJoint<f64>>; 2]> = BTreeMap::new();
    for r in raw {
        match r.group.side {
            Some(Side::Left) => sides.entry(r.group.kind).or_default()[0].push(&r.joint),
            Some(Side::Right) => sides.entry(r.group.kind).or_default()[1].push(&r.joint),
            None => {}
        }
    }
    for (kind, [left, right]) in &sides {
        if left.len() != right.len() {
            out.push(format!("{kind}: {} left vs {} right joints", left.len(), right.len()));
            continue;
        }
        for (k, (l, r)) in left.iter().zip(right).enumerate() {
            let dq = (mirror(&(l.q - base)) - (r.q - base)).norm() / scale;
            let dw = axis_gap(&mirror(&l.omega), &r.omega);
            if dq > ASYMMETRY_TOLERANCE || dw > ASYMMETRY_TOLERANCE {
                out.push(format!(
                    "{kind}[{k}]: left and right differ after mirroring (anchor {:.1}%, axis {:.3})",
                    dq * 100.0,
                    dw
                ));
            }
        }
    }
    out
}

/// Normalized, padded right half of one record plus its report entry.
pub fn curate_record(rec: &RobotRecord) -> Result<(UpperBodyStructure<f64>, CurationEntry), DatasetError> {
    let depth = rec.validate()?;
    let raw = rec.ordered_joints(&depth);
    let structure_err = |source| DatasetError::Structure {
        record: rec.name.clone(),
        source,
    };
    let scale = reference_height(rec.base(), rec.shoulders()).map_err(structure_err)?;
    let s = normalize_structure(&raw, rec.base(), rec.shoulders()).map_err(structure_err)?;
    let layout = SlotLayout::screw();
    let entry = CurationEntry {
        name: rec.name.clone(),
        present_joints: s.present_count(),
        padded_slots: s.padded_slots().map(|i| layout.slot_name(i)).collect(),
        fallbacks: fallback_sources(&s),
        warnings: asymmetry_warnings(rec, &raw, scale),
    };
    Ok((s, entry))
}

fn sorted_unique(records: &[RobotRecord]) -> Result<Vec<&RobotRecord>, DatasetError> {
    if records.is_empty() {
        return Err(DatasetError::NoRecords);
    }
    let mut sorted: Vec<&RobotRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    if let Some(w) = sorted.windows(2).find(|w| w[0].name == w[1].name) {
        return Err(schema(&w[0].name, "name", "duplicate robot name"));
    }
    Ok(sorted)
}

/// Curates every record into a 120-column matrix. Rows are sorted by robot
/// name, so the result does not depend on input order.
pub fn curate(records: &[RobotRecord]) -> Result<CuratedSet, DatasetError> {
    let sorted = sorted_unique(records)?;
    let mut set = CuratedSet {
        names: Vec::with_capacity(sorted.len()),
        vectors: Vec::with_capacity(sorted.len()),
        report: Vec::with_capacity(sorted.len()),
    };
    for rec in sorted {
        let (s, entry) = curate_record(rec)?;
        set.names.push(rec.name.clone());
        set.vectors.push(flatten(&s));
        set.report.push(entry);
    }
    Ok(set)
}

/// Normalized DH half of one record. Anchors are taken relative to the
/// base's floor projection, so the first torso step carries the base
/// height before normalization removes it.
pub fn curate_dh_record(rec: &RobotRecord) -> Result<DhChainHalf<f64>, DatasetError> {
    let depth = rec.validate()?;
    let structure_err = |source| DatasetError::Structure {
        record: rec.name.clone(),
        source,
    };
    let base = rec.base();
    let shift = Vector3::new(base.x, base.y, 0.0);
    let mut grouped = GroupedJoints::new();
    for r in rec.ordered_joints(&depth).into_iter().filter(|r| r.group.side != Some(Side::Left)) {
        grouped.push(r.group.kind, ScrewJoint::new(r.joint.omega, r.joint.q - shift));
    }
    let s = pad_structure(&grouped).map_err(structure_err)?;
    let tcp = rec.tcp_positions.map(|t| v3(t[1]) - shift);
    let half = dh_from_screw(&s, tcp);
    let scale = reference_height(base, rec.shoulders()).map_err(structure_err)?;
    dh_normalize(&half, scale, base.z).map_err(structure_err)
}

/// DH counterpart of [`curate`]: a 105-column matrix.
pub fn curate_dh(records: &[RobotRecord]) -> Result<CuratedSet, DatasetError> {
    let sorted = sorted_unique(records)?;
    let mut set = CuratedSet {
        names: Vec::with_capacity(sorted.len()),
        vectors: Vec::with_capacity(sorted.len()),
        report: Vec::with_capacity(sorted.len()),
    };
    for rec in sorted {
        let (_, entry) = curate_record(rec)?;
        let half = curate_dh_record(rec)?;
        set.names.push(rec.name.clone());
        set.vectors.push(half.flatten());
        set.report.push(entry);
    }
    Ok(set)
}

/// `name` column followed by the given feature columns.
pub fn matrix_csv(names: &[String], vectors: &[DVector<f64>], header: &[String]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head = vec!["name".to_string()];
    head.extend(header.iter().cloned());
    w.write_record(&head).expect("in-memory write");
    for (n, v) in names.iter().zip(vectors) {
        let mut row = vec![n.clone()];
        row.extend(v.iter().map(|x| x.to_string()));
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// Reads a matrix written by [`matrix_csv`]; returns names, rows and the
/// feature header.
#[allow(clippy::type_complexity)]
pub fn read_matrix_csv(text: &str) -> Result<(Vec<String>, Vec<DVector<f64>>, Vec<String>), DatasetError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| DatasetError::Matrix(e.to_string()))?
        .iter()
        .skip(1)
        .map(str::to_string)
        .collect();
    let (mut names, mut rows) = (Vec::new(), Vec::new());
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| DatasetError::Matrix(e.to_string()))?;
        let mut it = rec.iter();
        names.push(it.next().unwrap_or_default().to_string());
        let vals = it
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| DatasetError::Matrix(format!("row {}: {e}", i + 1)))?;
        if vals.len() != header.len() {
            return Err(DatasetError::Matrix(format!(
                "row {} has {} values, header has {}",
                i + 1,
                vals.len(),
                header.len()
            )));
        }
        rows.push(DVector::from_vec(vals));
    }
    Ok((names, rows, header))
}

/// Reads every `*.json` record in a directory, in file-name order.
pub fn load_records(dir: &Path) -> Result<Vec<RobotRecord>, DatasetError> {
    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
        move |source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(DatasetError::NoRecords);
    }
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(io(p))?;
            RobotRecord::from_json(&text).map_err(|e| DatasetError::Parse {
                path: p.clone(),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Axis of a synthetic joint, resolved against the local limb direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisSpec {
    /// World x (forward).
    X,
    /// World y (left).
    Y,
    /// World z (up).
    Z,
    /// Along the limb segment.
    Along,
    /// Perpendicular to the limb in its swing plane (elbow-like flexion).
    Across,
    /// A fixed world vector, normalized when used.
    Fixed([f64; 3]),
}

impl AxisSpec {
    fn resolve(self, limb: &Vector3<f64>) -> Vector3<f64> {
        match self {
            AxisSpec::X => Vector3::x(),
            AxisSpec::Y => Vector3::y(),
            AxisSpec::Z => Vector3::z(),
            AxisSpec::Along => limb.normalize(),
            AxisSpec::Across => limb.cross(&Vector3::x()).normalize(),
            AxisSpec::Fixed(v) => v3(v).normalize(),
        }
    }
}

/// Parametric upper body used to generate synthetic robots. Lengths in
/// metres, angles in radians; the right arm is described and mirrored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Archetype {
    pub name: String,
    pub kind: RobotType,
    pub base_height: f64,
    /// Base to shoulder line.
    pub torso_height: f64,
    pub torso_axes: Vec<AxisSpec>,
    pub neck_length: f64,
    pub neck_axes: Vec<AxisSpec>,
    pub shoulder_half_width: f64,
    pub girdle: bool,
    pub shoulder_axes: Vec<AxisSpec>,
    pub upper_arm_roll: bool,
    pub elbow: bool,
    pub forearm_roll: bool,
    pub wrist_axes: Vec<AxisSpec>,
    pub upper_arm_length: f64,
    pub forearm_length: f64,
    pub hand_length: f64,
    /// A-pose arm angle away from vertical.
    pub abduction: f64,
}

impl Archetype {
    pub fn tall_humanoid() -> Self {
        use AxisSpec::*;
        Self {
            name: "tall_humanoid".into(),
            kind: RobotType::Humanoid,
            base_height: 1.0,
            torso_height: 0.45,
            torso_axes: vec![Z, Y],
            neck_length: 0.2,
            neck_axes: vec![Z, Y],
            shoulder_half_width: 0.2,
            girdle: false,
            shoulder_axes: vec![Y, X, Along],
            upper_arm_roll: false,
            elbow: true,
            forearm_roll: true,
            wrist_axes: vec![Across, Y],
            upper_arm_length: 0.3,
            forearm_length: 0.28,
            hand_length: 0.1,
            abduction: 0.2,
        }
    }

    pub fn dual_arm_pedestal() -> Self {
        use AxisSpec::*;
        Self {
            name: "dual_arm_pedestal".into(),
            kind: RobotType::NonBipedal,
            base_height: 0.8,
            torso_height: 0.3,
            torso_axes: vec![Z],
            neck_length: 0.15,
            neck_axes: vec![Z],
            shoulder_half_width: 0.26,
            girdle: false,
            shoulder_axes: vec![Z, Y],
            upper_arm_roll: true,
            elbow: true,
            forearm_roll: true,
            wrist_axes: vec![Across, Along],
            upper_arm_length: 0.37,
            forearm_length: 0.37,
            hand_length: 0.15,
            abduction: 0.35,
        }
    }

    pub fn compact_humanoid() -> Self {
        use AxisSpec::*;
        Self {
            name: "compact_humanoid".into(),
            kind: RobotType::Humanoid,
            base_height: 0.28,
            torso_height: 0.16,
            torso_axes: vec![],
            neck_length: 0.06,
            neck_axes: vec![Z, Y],
            shoulder_half_width: 0.07,
            girdle: false,
            shoulder_axes: vec![Y, X],
            upper_arm_roll: false,
            elbow: true,
            forearm_roll: false,
            wrist_axes: vec![],
            upper_arm_length: 0.09,
            forearm_length: 0.12,
            hand_length: 0.04,
            abduction: 0.25,
        }
    }

    pub fn all() -> Vec<Self> {
        vec![Self::tall_humanoid(), Self::dual_arm_pedestal(), Self::compact_humanoid()]
    }

    /// The archetype as a record named `name`.
    pub fn record(&self, name: &str) -> RobotRecord {
        let mirror = |p: Vector3<f64>| Vector3::new(p.x, -p.y, p.z);
        let arr = |p: Vector3<f64>| [p.x, p.y, p.z];
        let base = Vector3::new(0.0, 0.0, self.base_height);
        let top = self.base_height + self.torso_height;
        let mut joints: Vec<JointRecord> = Vec::new();
        let push = |joints: &mut Vec<JointRecord>, group, side, axis: Vector3<f64>, anchor: Vector3<f64>, parent| {
            joints.push(JointRecord {
                group,
                side,
                axis_world: arr(axis),
                anchor_world: arr(anchor),
                parent,
            });
            Some(joints.len() - 1)
        };

        let up = Vector3::z();
        let mut torso_tip = None;
        for (k, a) in self.torso_axes.iter().enumerate() {
            let q = Vector3::new(0.0, 0.0, self.base_height + self.torso_height * (0.1 + 0.12 * k as f64));
            torso_tip = push(&mut joints, GroupKind::Torso, None, a.resolve(&up), q, torso_tip);
        }
        let mut neck_tip = torso_tip;
        for (k, a) in self.neck_axes.iter().enumerate() {
            let q = Vector3::new(0.0, 0.0, top + self.neck_length * (0.35 + 0.3 * k as f64));
            neck_tip = push(&mut joints, GroupKind::Neck, None, a.resolve(&up), q, neck_tip);
        }

        let w = self.shoulder_half_width;
        let shoulder = Vector3::new(0.0, -w, top);
        let upper = Vector3::new(0.0, -self.abduction.sin(), -self.abduction.cos());
        let elbow = shoulder + upper * self.upper_arm_length;
        let fore = (upper + Vector3::new(0.25, 0.0, 0.0)).normalize();
        let wrist = elbow + fore * self.forearm_length;
        let tcp = wrist + fore * self.hand_length;

        // right arm as (group, axis, anchor) in chain order
        let mut arm: Vec<(GroupKind, Vector3<f64>, Vector3<f64>)> = Vec::new();
        if self.girdle {
            arm.push((GroupKind::ShoulderGirdle, Vector3::x(), Vector3::new(0.0, -0.45 * w, top)));
        }
        for a in &self.shoulder_axes {
            arm.push((GroupKind::Shoulder, a.resolve(&upper), shoulder));
        }
        if self.upper_arm_roll {
            arm.push((GroupKind::UpperArm, upper, shoulder + upper * (0.4 * self.upper_arm_length)));
        }
        if self.elbow {
            arm.push((GroupKind::Elbow, AxisSpec::Across.resolve(&upper), elbow));
        }
        if self.forearm_roll {
            arm.push((GroupKind::Forearm, fore, elbow + fore * (0.45 * self.forearm_length)));
        }
        for a in &self.wrist_axes {
            arm.push((GroupKind::Wrist, a.resolve(&fore), wrist));
        }
        for side in [Side::Right, Side::Left] {
            let mut tip = torso_tip;
            for (g, axis, q) in &arm {
                let (axis, q) = match side {
                    Side::Right => (*axis, *q),
                    Side::Left => (mirror(*axis), mirror(*q)),
                };
                tip = push(&mut joints, *g, Some(side), axis, q, tip);
            }
        }
        RobotRecord {
            name: name.to_string(),
            kind: self.kind,
            base_position: arr(base),
            shoulder_positions: [arr(mirror(shoulder)), arr(shoulder)],
            joints,
            tcp_positions: Some([arr(mirror(tcp)), arr(tcp)]),
        }
    }
}

/// Random perturbation applied to archetypes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Jitter {
    /// Relative length change, uniform in `+-length`.
    pub length: f64,
    /// Axis tilt and abduction change scale, in radians.
    pub angle: f64,
    /// Probability of toggling each optional joint.
    pub count: f64,
}

impl Default for Jitter {
    fn default() -> Self {
        Self {
            length: 0.15,
            angle: 0.15,
            count: 0.25,
        }
    }
}

impl Jitter {
    pub fn none() -> Self {
        Self {
            length: 0.0,
            angle: 0.0,
            count: 0.0,
        }
    }

    pub fn is_none(&self) -> bool {
        self.length == 0.0 && self.angle == 0.0 && self.count == 0.0
    }
}

fn jitter_axis<R: Rng>(a: AxisSpec, limb: &Vector3<f64>, angle: f64, rng: &mut R) -> AxisSpec {
    let base = a.resolve(limb);
    let noise = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let v = (base + noise * angle).normalize();
    AxisSpec::Fixed([v.x, v.y, v.z])
}

fn toggle_count<R: Rng>(axes: &mut Vec<AxisSpec>, min: usize, max: usize, extra: AxisSpec, p: f64, rng: &mut R) {
    if rng.random::<f64>() >= p {
        return;
    }
    let grow = rng.random::<bool>();
    if grow && axes.len() < max {
        axes.push(extra);
    } else if axes.len() > min {
        axes.pop();
    } else if axes.len() < max {
        axes.push(extra);
    }
}

impl Archetype {
    /// A randomly perturbed copy; returns `self` unchanged when `j` is zero.
    pub fn jittered<R: Rng>(&self, j: &Jitter, rng: &mut R) -> Self {
        if j.is_none() {
            return self.clone();
        }
        let mut a = self.clone();
        let mut scale = |x: &mut f64| *x *= 1.0 + j.length * rng.random_range(-1.0..1.0);
        scale(&mut a.torso_height);
        scale(&mut a.neck_length);
        scale(&mut a.shoulder_half_width);
        scale(&mut a.upper_arm_length);
        scale(&mut a.forearm_length);
        scale(&mut a.hand_length);
        a.abduction = (a.abduction + j.angle * rng.random_range(-1.0..1.0)).clamp(0.0, 1.2);

        toggle_count(&mut a.torso_axes, 0, 3, AxisSpec::X, j.count, rng);
        toggle_count(&mut a.neck_axes, 0, 3, AxisSpec::X, j.count, rng);
        toggle_count(&mut a.shoulder_axes, 1, 3, AxisSpec::Along, j.count, rng);
        toggle_count(&mut a.wrist_axes, 0, 3, AxisSpec::Across, j.count, rng);
        for flag in [&mut a.girdle, &mut a.upper_arm_roll, &mut a.forearm_roll] {
            if rng.random::<f64>() < j.count {
                *flag = !*flag;
            }
        }

        let up = Vector3::z();
        let upper = Vector3::new(0.0, -a.abduction.sin(), -a.abduction.cos());
        let fore = (upper + Vector3::new(0.25, 0.0, 0.0)).normalize();
        for ax in a.torso_axes.iter_mut().chain(a.neck_axes.iter_mut()) {
            *ax = jitter_axis(*ax, &up, j.angle, rng);
        }
        for ax in a.shoulder_axes.iter_mut() {
            *ax = jitter_axis(*ax, &upper, j.angle, rng);
        }
        for ax in a.wrist_axes.iter_mut() {
            *ax = jitter_axis(*ax, &fore, j.angle, rng);
        }
        a
    }
}

/// `n` robots cycling through `archetypes`, each jittered from one seeded
/// stream. Names are `<archetype>_<index>`.
pub fn synthesize_robots(n: usize, archetypes: &[Archetype], jitter: &Jitter, seed: u64) -> Vec<RobotRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let arch = &archetypes[i % archetypes.len()];
            let a = arch.jittered(jitter, &mut rng);
            a.record(&format!("{}_{:02}", arch.name, i))
        })
        .collect()
}

/// Header of the curated screw matrix.
pub fn screw_header() -> Vec<String> {
    let h = crate::screw_model::feature_header();
    debug_assert_eq!(h.len(), FEATURE_DIM);
    h
}

/// Header of the curated DH matrix.
pub fn dh_header() -> Vec<String> {
    let h = crate::dh_model::dh_feature_header();
    debug_assert_eq!(h.len(), DH_FEATURE_DIM);
    h
}
