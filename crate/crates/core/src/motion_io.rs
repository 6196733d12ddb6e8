//! BVH motion capture parsing, hierarchy forward kinematics and extraction
//! of normalized upper-body marker trajectories.

use crate::kinematics::RigidTransform;
use crate::scalar::{lit, to_f64, Scalar};
use nalgebra::{Matrix3, Vector3};
use std::fmt::Write as _;
use std::str::FromStr;
use thiserror::Error;

pub mod synth;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MotionError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("expected {expected} channel values, found {found}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("unresolved joint of interest: {0}")]
    MissingJoi(String),
    #[error("degenerate skeleton scale")]
    DegenerateScale,
    #[error("clip has no frames")]
    Empty,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    Xposition,
    Yposition,
    Zposition,
    Xrotation,
    Yrotation,
    Zrotation,
}

impl Channel {
    pub fn is_rotation(self) -> bool {
        matches!(self, Channel::Xrotation | Channel::Yrotation | Channel::Zrotation)
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Xposition => "Xposition",
            Channel::Yposition => "Yposition",
            Channel::Zposition => "Zposition",
            Channel::Xrotation => "Xrotation",
            Channel::Yrotation => "Yrotation",
            Channel::Zrotation => "Zrotation",
        }
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "xposition" => Channel::Xposition,
            "yposition" => Channel::Yposition,
            "zposition" => Channel::Zposition,
            "xrotation" => Channel::Xrotation,
            "yrotation" => Channel::Yrotation,
            "zrotation" => Channel::Zrotation,
            _ => return Err(format!("unknown channel {s:?}")),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BvhJoint {
    pub name: String,
    pub parent: Option<usize>,
    pub offset: Vector3<f64>,
    pub channels: Vec<Channel>,
    /// Index of this joint's first channel within a frame.
    pub channel_start: usize,
    pub end_site: Option<Vector3<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BvhSkeleton {
    pub joints: Vec<BvhJoint>,
}

impl BvhSkeleton {
    pub fn channel_count(&self) -> usize {
        self.joints.iter().map(|j| j.channels.len()).sum()
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }
}

/// Parsed BVH file. Rotation channels are stored in radians.
#[derive(Clone, Debug, PartialEq)]
pub struct BvhMotion {
    pub skeleton: BvhSkeleton,
    pub frame_time: f64,
    pub frames: Vec<Vec<f64>>,
}

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let items = text
            .lines()
            .enumerate()
            .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t)))
            .collect();
        Self { items, pos: 0 }
    }

    fn line(&self) -> usize {
        self.items
            .get(self.pos)
            .or_else(|| self.items.last())
            .map_or(0, |(l, _)| *l)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, MotionError> {
        Err(MotionError::Parse {
            line: self.line(),
            message: message.into(),
        })
    }

    fn next(&mut self) -> Result<&'a str, MotionError> {
        match self.items.get(self.pos) {
            Some((_, t)) => {
                self.pos += 1;
                Ok(t)
            }
            None => self.err("unexpected end of input"),
        }
    }

    fn peek(&self) -> Option<&'a str> {
        self.items.get(self.pos).map(|(_, t)| *t)
    }

    fn expect(&mut self, want: &str) -> Result<(), MotionError> {
        let t = self.next()?;
        if t.eq_ignore_ascii_case(want) {
            Ok(())
        } else {
            self.pos -= 1;
            self.err(format!("expected {want:?}, found {t:?}"))
        }
    }

    fn number(&mut self) -> Result<f64, MotionError> {
        let t = self.next()?;
        t.parse().or_else(|_| {
            self.pos -= 1;
            self.err(format!("expected a number, found {t:?}"))
        })
    }

    fn vec3(&mut self) -> Result<Vector3<f64>, MotionError> {
        Ok(Vector3::new(self.number()?, self.number()?, self.number()?))
    }
}

/// Parses a BVH document (HIERARCHY and MOTION sections).
pub fn parse_bvh(text: &str) -> Result<BvhMotion, MotionError> {
    let mut tk = Tokens::new(text);
    tk.expect("HIERARCHY")?;
    let mut skeleton = BvhSkeleton::default();
    tk.expect("ROOT")?;
    parse_joint(&mut tk, &mut skeleton, None)?;
    if tk.peek().is_some_and(|t| t.eq_ignore_ascii_case("ROOT")) {
        return tk.err("multiple ROOT joints are not supported");
    }

    tk.expect("MOTION")?;
    tk.expect("Frames:")?;
    let count = tk.number()?;
    if count < 0.0 || count.fract() != 0.0 {
        return tk.err("frame count must be a non-negative integer");
    }
    let count = count as usize;
    tk.expect("Frame")?;
    tk.expect("Time:")?;
    let frame_time = tk.number()?;

    let width = skeleton.channel_count();
    let mut values = Vec::with_capacity(count * width);
    while let Some(t) = tk.peek() {
        match t.parse::<f64>() {
            Ok(x) => {
                values.push(x);
                tk.pos += 1;
            }
            Err(_) => return tk.err(format!("expected a channel value, found {t:?}")),
        }
    }
    if values.len() != count * width {
        return Err(MotionError::ChannelMismatch {
            expected: count * width,
            found: values.len(),
        });
    }
    let frames = values
        .chunks(width.max(1))
        .take(count)
        .map(|row| {
            let mut row = row.to_vec();
            for j in &skeleton.joints {
                for (k, c) in j.channels.iter().enumerate() {
                    if c.is_rotation() {
                        row[j.channel_start + k] = row[j.channel_start + k].to_radians();
                    }
                }
            }
            row
        })
        .collect();
    Ok(BvhMotion {
        skeleton,
        frame_time,
        frames,
    })
}

fn parse_joint(
    tk: &mut Tokens<'_>,
    skel: &mut BvhSkeleton,
    parent: Option<usize>,
) -> Result<(), MotionError> {
    let name = tk.next()?.to_string();
    tk.expect("{")?;
    tk.expect("OFFSET")?;
    let offset = tk.vec3()?;
    let mut channels = Vec::new();
    if tk.peek().is_some_and(|t| t.eq_ignore_ascii_case("CHANNELS")) {
        tk.next()?;
        let n = tk.number()?;
        if n < 0.0 || n.fract() != 0.0 {
            return tk.err("channel count must be a non-negative integer");
        }
        for _ in 0..n as usize {
            let t = tk.next()?;
            match t.parse::<Channel>() {
                Ok(c) => channels.push(c),
                Err(e) => {
                    tk.pos -= 1;
                    return tk.err(e);
                }
            }
        }
    }
    let index = skel.joints.len();
    skel.joints.push(BvhJoint {
        name,
        parent,
        offset,
        channel_start: skel.channel_count(),
        channels,
        end_site: None,
    });
    loop {
        let t = tk.next()?;
        if t == "}" {
            return Ok(());
        } else if t.eq_ignore_ascii_case("JOINT") {
            parse_joint(tk, skel, Some(index))?;
        } else if t.eq_ignore_ascii_case("End") {
            tk.expect("Site")?;
            tk.expect("{")?;
            tk.expect("OFFSET")?;
            skel.joints[index].end_site = Some(tk.vec3()?);
            tk.expect("}")?;
        } else {
            tk.pos -= 1;
            return tk.err(format!("unexpected token {t:?} in joint body"));
        }
    }
}

/// Serializes back to BVH text, rotations in degrees.
pub fn write_bvh(m: &BvhMotion) -> String {
    let mut out = String::from("HIERARCHY\n");
    fn joint(out: &mut String, skel: &BvhSkeleton, i: usize, depth: usize) {
        let pad = "  ".repeat(depth);
        let j = &skel.joints[i];
        let kw = if j.parent.is_none() { "ROOT" } else { "JOINT" };
        let _ = writeln!(out, "{pad}{kw} {}", j.name);
        let _ = writeln!(out, "{pad}{{");
        let o = j.offset;
        let _ = writeln!(out, "{pad}  OFFSET {} {} {}", o.x, o.y, o.z);
        if !j.channels.is_empty() {
            let names: Vec<_> = j.channels.iter().map(|c| c.name()).collect();
            let _ = writeln!(out, "{pad}  CHANNELS {} {}", names.len(), names.join(" "));
        }
        for c in (0..skel.joints.len()).filter(|c| skel.joints[*c].parent == Some(i)) {
            joint(out, skel, c, depth + 1);
        }
        if let Some(e) = j.end_site {
            let _ = writeln!(out, "{pad}  End Site");
            let _ = writeln!(out, "{pad}  {{");
            let _ = writeln!(out, "{pad}    OFFSET {} {} {}", e.x, e.y, e.z);
            let _ = writeln!(out, "{pad}  }}");
        }
        let _ = writeln!(out, "{pad}}}");
    }
    if !m.skeleton.joints.is_empty() {
        joint(&mut out, &m.skeleton, 0, 0);
    }
    let _ = writeln!(out, "MOTION\nFrames: {}\nFrame Time: {}", m.frames.len(), m.frame_time);
    for row in &m.frames {
        let mut vals = row.clone();
        for j in &m.skeleton.joints {
            for (k, c) in j.channels.iter().enumerate() {
                if c.is_rotation() {
                    vals[j.channel_start + k] = vals[j.channel_start + k].to_degrees();
                }
            }
        }
        let line: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

/// World positions for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonPose {
    pub joints: Vec<Vector3<f64>>,
    /// End-site positions, indexed like `joints`.
    pub end_sites: Vec<Option<Vector3<f64>>>,
}

/// `world = parent * Trans(offset) * Trans(position channels) * Rot(channels)`,
/// rotations composed in the declared channel order.
pub fn skeleton_fk(skel: &BvhSkeleton, frame: &[f64]) -> Result<SkeletonPose, MotionError> {
    if frame.len() != skel.channel_count() {
        return Err(MotionError::ChannelMismatch {
            expected: skel.channel_count(),
            found: frame.len(),
        });
    }
    let mut world: Vec<RigidTransform<f64>> = Vec::with_capacity(skel.joints.len());
    let mut pose = SkeletonPose {
        joints: Vec::with_capacity(skel.joints.len()),
        end_sites: Vec::with_capacity(skel.joints.len()),
    };
    for j in &skel.joints {
        let mut translation = j.offset;
        let mut rotation = RigidTransform::identity();
        for (k, c) in j.channels.iter().enumerate() {
            let v = frame[j.channel_start + k];
            match c {
                Channel::Xposition => translation.x += v,
                Channel::Yposition => translation.y += v,
                Channel::Zposition => translation.z += v,
                Channel::Xrotation => rotation = rotation * RigidTransform::rot_x(v),
                Channel::Yrotation => rotation = rotation * RigidTransform::rot_y(v),
                Channel::Zrotation => rotation = rotation * RigidTransform::rot_z(v),
            }
        }
        let local = RigidTransform::from_translation(translation) * rotation;
        let w = match j.parent {
            Some(p) => world[p] * local,
            None => local,
        };
        pose.joints.push(w.translation);
        pose.end_sites.push(j.end_site.map(|e| w.transform_point(&e)));
        world.push(w);
    }
    Ok(pose)
}

/// Joints of interest shared by the human source and the robot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Joi {
    Root,
    Neck,
    Head,
    LeftShoulder,
    LeftElbow,
    LeftWrist,
    RightShoulder,
    RightElbow,
    RightWrist,
}

impl Joi {
    pub const ALL: [Joi; 9] = [
        Joi::Root,
        Joi::Neck,
        Joi::Head,
        Joi::LeftShoulder,
        Joi::LeftElbow,
        Joi::LeftWrist,
        Joi::RightShoulder,
        Joi::RightElbow,
        Joi::RightWrist,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Joi::Root => "root",
            Joi::Neck => "neck",
            Joi::Head => "head",
            Joi::LeftShoulder => "l_shoulder",
            Joi::LeftElbow => "l_elbow",
            Joi::LeftWrist => "l_wrist",
            Joi::RightShoulder => "r_shoulder",
            Joi::RightElbow => "r_elbow",
            Joi::RightWrist => "r_wrist",
        }
    }

    pub fn from_name(s: &str) -> Option<Joi> {
        Joi::ALL.into_iter().find(|j| j.name() == s)
    }

    /// Parent in the marker tree used to build scaled direction targets.
    pub fn parent(self) -> Option<Joi> {
        match self {
            Joi::Root => None,
            Joi::Neck | Joi::LeftShoulder | Joi::RightShoulder => Some(Joi::Root),
            Joi::Head => Some(Joi::Neck),
            Joi::LeftElbow => Some(Joi::LeftShoulder),
            Joi::LeftWrist => Some(Joi::LeftElbow),
            Joi::RightElbow => Some(Joi::RightShoulder),
            Joi::RightWrist => Some(Joi::RightElbow),
        }
    }
}

/// Track name to BVH joint name. A track resolves to the joint's position, or
/// to its end site when the BVH name is suffixed with `/end`.
#[derive(Clone, Debug, PartialEq)]
pub struct JoiMap {
    pub entries: Vec<(String, String)>,
}

impl JoiMap {
    /// Names used by the CMU motion capture skeletons.
    pub fn cmu() -> Self {
        let pairs = [
            ("root", "Hips"),
            ("neck", "Neck"),
            ("head", "Head/end"),
            ("l_shoulder", "LeftArm"),
            ("l_elbow", "LeftForeArm"),
            ("l_wrist", "LeftHand"),
            ("r_shoulder", "RightArm"),
            ("r_elbow", "RightForeArm"),
            ("r_wrist", "RightHand"),
        ];
        Self {
            entries: pairs
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
        }
    }

    /// Each BVH joint mapped to a track of the same name.
    pub fn identity(skel: &BvhSkeleton) -> Self {
        Self {
            entries: skel
                .joints
                .iter()
                .map(|j| (j.name.clone(), j.name.clone()))
                .collect(),
        }
    }

    pub fn with(mut self, track: &str, joint: &str) -> Self {
        match self.entries.iter_mut().find(|(t, _)| t == track) {
            Some(e) => e.1 = joint.to_string(),
            None => self.entries.push((track.to_string(), joint.to_string())),
        }
        self
    }

    pub fn without(mut self, track: &str) -> Self {
        self.entries.retain(|(t, _)| t != track);
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractOptions {
    /// Maps BVH coordinates into the robot frame (x forward, y left, z up).
    pub axes: Matrix3<f64>,
    /// Keep every `stride`-th frame.
    pub stride: usize,
    /// Tracks whose rest-pose midpoint-to-root distance sets the scale.
    pub scale_tracks: (String, String, String),
}

impl Default for ExtractOptions {
    fn default() -> Self {
        // BVH is y-up with the actor facing +z and +x to their left.
        let axes = Matrix3::new(0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
        Self {
            axes,
            stride: 1,
            scale_tracks: ("root".into(), "l_shoulder".into(), "r_shoulder".into()),
        }
    }
}

/// Marker trajectories: `frames[f][j]` is track `j`'s position in frame `f`.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionClip<T: Scalar> {
    pub frame_time: T,
    pub names: Vec<String>,
    pub frames: Vec<Vec<Vector3<T>>>,
}

impl<T: Scalar> MotionClip<T> {
    pub fn new(frame_time: T, names: Vec<String>, frames: Vec<Vec<Vector3<T>>>) -> Result<Self, MotionError> {
        if frames.is_empty() {
            return Err(MotionError::Empty);
        }
        if frames.iter().any(|f| f.len() != names.len()) {
            return Err(MotionError::ChannelMismatch {
                expected: names.len(),
                found: frames.iter().map(Vec::len).find(|l| *l != names.len()).unwrap_or(0),
            });
        }
        if frames.iter().flatten().any(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(MotionError::Parse {
                line: 0,
                message: "non-finite position".into(),
            });
        }
        Ok(Self {
            frame_time,
            names,
            frames,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn track_count(&self) -> usize {
        self.names.len()
    }

    pub fn track(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Keeps the named tracks, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<Self, MotionError> {
        let idx = names
            .iter()
            .map(|n| self.track(n).ok_or_else(|| MotionError::MissingJoi(n.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            frame_time: self.frame_time,
            names: names.iter().map(|s| s.to_string()).collect(),
            frames: self
                .frames
                .iter()
                .map(|f| idx.iter().map(|i| f[*i]).collect())
                .collect(),
        })
    }

    pub fn cast<U: Scalar>(&self) -> MotionClip<U> {
        MotionClip {
            frame_time: lit(to_f64(self.frame_time)),
            names: self.names.clone(),
            frames: self
                .frames
                .iter()
                .map(|f| f.iter().map(|p| p.map(|c| lit::<U>(to_f64(c)))).collect())
                .collect(),
        }
    }

    /// CSV with columns `frame,joint,x,y,z`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,joint,x,y,z\n");
        for (f, frame) in self.frames.iter().enumerate() {
            for (name, p) in self.names.iter().zip(frame) {
                let _ = writeln!(out, "{f},{name},{},{},{}", p.x, p.y, p.z);
            }
        }
        out
    }
}

fn resolve(skel: &BvhSkeleton, joint: &str) -> Option<(usize, bool)> {
    match joint.strip_suffix("/end") {
        Some(base) => skel
            .find(base)
            .filter(|i| skel.joints[*i].end_site.is_some())
            .map(|i| (i, true)),
        None => skel.find(joint).map(|i| (i, false)),
    }
}

/// Extracts the mapped tracks, removes the root translation, rotates into
/// the robot frame and divides by the rest-pose shoulder-to-root distance.
pub fn extract_upper_body(
    motion: &BvhMotion,
    map: &JoiMap,
    opts: &ExtractOptions,
) -> Result<MotionClip<f64>, MotionError> {
    let skel = &motion.skeleton;
    let mut resolved = Vec::with_capacity(map.entries.len());
    for (track, joint) in &map.entries {
        let r = resolve(skel, joint).ok_or_else(|| MotionError::MissingJoi(track.clone()))?;
        resolved.push(r);
    }
    let track_index = |name: &str| {
        map.entries
            .iter()
            .position(|(t, _)| t == name)
            .ok_or_else(|| MotionError::MissingJoi(name.to_string()))
    };
    let (root_t, ls_t, rs_t) = &opts.scale_tracks;
    let (root, ls, rs) = (track_index(root_t)?, track_index(ls_t)?, track_index(rs_t)?);

    let sample = |frame: &[f64]| -> Result<Vec<Vector3<f64>>, MotionError> {
        let pose = skeleton_fk(skel, frame)?;
        Ok(resolved
            .iter()
            .map(|(i, end)| {
                if *end {
                    pose.end_sites[*i].unwrap_or(pose.joints[*i])
                } else {
                    pose.joints[*i]
                }
            })
            .collect())
    };
    let rest = sample(&vec![0.0; skel.channel_count()])?;
    let scale = ((rest[ls] + rest[rs]) * 0.5 - rest[root]).norm();
    if !(scale > 1e-9) {
        return Err(MotionError::DegenerateScale);
    }

    let stride = opts.stride.max(1);
    let mut frames = Vec::new();
    for frame in motion.frames.iter().step_by(stride) {
        let pts = sample(frame)?;
        let origin = pts[root];
        frames.push(pts.iter().map(|p| opts.axes * (p - origin) / scale).collect());
    }
    MotionClip::new(
        motion.frame_time * stride as f64,
        map.entries.iter().map(|(t, _)| t.clone()).collect(),
        frames,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const MINIMAL: &str = "HIERARCHY
ROOT Hips
{
  OFFSET 0 0 0
  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
}
MOTION
Frames: 2
Frame Time: 0.0333
0 0 0 0 0 0
1 2 3 10 20 30
";

    const TWO: &str = "HIERARCHY
ROOT Hips
{
  OFFSET 0 0 0
  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
  JOINT Chest
  {
    OFFSET 0 1 0
    CHANNELS 3 Zrotation Xrotation Yrotation
    End Site
    {
      OFFSET 0 0.5 0
    }
  }
}
MOTION
Frames: 1
Frame Time: 0.01
0 0 0 90 0 0 0 0 0
";

    #[test]
    fn parses_minimal_file() {
        let m = parse_bvh(MINIMAL).unwrap();
        assert_eq!(m.skeleton.joints.len(), 1);
        assert_eq!(m.frames.len(), 2);
        assert_eq!(m.frames[1].len(), 6);
        assert_relative_eq!(m.frames[1][3], 10f64.to_radians());
        assert_eq!(m.frames[1][0], 1.0);
    }

    #[test]
    fn truncated_motion_is_channel_mismatch() {
        let text = MINIMAL.trim_end().rsplit_once(' ').unwrap().0;
        assert_eq!(
            parse_bvh(text),
            Err(MotionError::ChannelMismatch { expected: 12, found: 11 })
        );
    }

    #[test]
    fn malformed_input_reports_line() {
        let bad = MINIMAL.replace("OFFSET 0 0 0", "OFFSET 0 zero 0");
        match parse_bvh(&bad) {
            Err(MotionError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_bvh("MOTION"), Err(MotionError::Parse { line: 1, .. })));
    }

    #[test]
    fn rotation_order_follows_declaration() {
        let m = parse_bvh(MINIMAL).unwrap();
        let skel = BvhSkeleton {
            joints: vec![
                m.skeleton.joints[0].clone(),
                BvhJoint {
                    name: "c".into(),
                    parent: Some(0),
                    offset: Vector3::new(0.3, 1.0, -0.2),
                    channels: vec![],
                    channel_start: 6,
                    end_site: None,
                },
            ],
        };
        let (z, x, y) = (0.3, -0.5, 1.1);
        let pose = skeleton_fk(&skel, &[0.0, 0.0, 0.0, z, x, y]).unwrap();
        // Hand-built Euler composition Rz * Rx * Ry.
        let rz = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), z);
        let rx = nalgebra::Rotation3::from_axis_angle(&Vector3::x_axis(), x);
        let ry = nalgebra::Rotation3::from_axis_angle(&Vector3::y_axis(), y);
        let want = rz * rx * ry * Vector3::new(0.3, 1.0, -0.2);
        assert_relative_eq!(pose.joints[1], want, epsilon = 1e-12);
    }

    #[test]
    fn fk_offsets_translation_and_rotation() {
        let m = parse_bvh(TWO).unwrap();
        let zero = skeleton_fk(&m.skeleton, &[0.0; 9]).unwrap();
        assert_eq!(zero.joints[1], Vector3::new(0.0, 1.0, 0.0));
        assert_eq!(zero.end_sites[1], Some(Vector3::new(0.0, 1.5, 0.0)));
        let moved = skeleton_fk(&m.skeleton, &[1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(moved.joints[1], Vector3::new(1.0, 3.0, 3.0));
        let rotated = skeleton_fk(&m.skeleton, &m.frames[0]).unwrap();
        assert_relative_eq!(rotated.joints[1], Vector3::new(-1.0, 0.0, 0.0), epsilon = 1e-12);
        assert!(skeleton_fk(&m.skeleton, &[0.0; 3]).is_err());
    }

    #[test]
    fn write_then_parse_is_stable() {
        let m = parse_bvh(TWO).unwrap();
        let again = parse_bvh(&write_bvh(&m)).unwrap();
        assert_eq!(again.skeleton, m.skeleton);
        for (a, b) in again.frames.iter().flatten().zip(m.frames.iter().flatten()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn extraction_requires_mapped_joints() {
        let m = synth::wave_hello(4);
        let map = JoiMap::cmu().with("r_wrist", "NoSuchHand");
        assert_eq!(
            extract_upper_body(&m, &map, &ExtractOptions::default()),
            Err(MotionError::MissingJoi("r_wrist".into()))
        );
    }

    #[test]
    fn extraction_is_scale_invariant() {
        let m = synth::wave_hello(6);
        let mut big = m.clone();
        for j in big.skeleton.joints.iter_mut() {
            j.offset *= 2.0;
            j.end_site = j.end_site.map(|e| e * 2.0);
        }
        for f in big.frames.iter_mut() {
            for v in f.iter_mut().take(3) {
                *v *= 2.0;
            }
        }
        let opts = ExtractOptions::default();
        let a = extract_upper_body(&m, &JoiMap::cmu(), &opts).unwrap();
        let b = extract_upper_body(&big, &JoiMap::cmu(), &opts).unwrap();
        assert_eq!(a.names, b.names);
        for (p, q) in a.frames.iter().flatten().zip(b.frames.iter().flatten()) {
            assert_relative_eq!(p, q, epsilon = 1e-12);
        }
        assert_eq!(a.track_count(), 9);
        assert!(a.frames.iter().all(|f| f[0] == Vector3::zeros()));
    }

    #[test]
    fn identity_map_keeps_every_joint() {
        let m = synth::wave_hello(3);
        let map = JoiMap::identity(&m.skeleton)
            .with("root", "Hips")
            .with("l_shoulder", "LeftArm")
            .with("r_shoulder", "RightArm");
        let clip = extract_upper_body(&m, &map, &ExtractOptions::default()).unwrap();
        assert_eq!(clip.track_count(), m.skeleton.joints.len() + 3);
    }

    #[test]
    fn stride_subsamples() {
        let m = synth::wave_hello(10);
        let opts = ExtractOptions {
            stride: 3,
            ..ExtractOptions::default()
        };
        let clip = extract_upper_body(&m, &JoiMap::cmu(), &opts).unwrap();
        assert_eq!(clip.frame_count(), 4);
    }

    #[test]
    fn csv_export() {
        let clip = MotionClip::new(0.1, vec!["a".into()], vec![vec![Vector3::new(1.0, 2.0, 3.0)]]).unwrap();
        assert_eq!(clip.to_csv(), "frame,joint,x,y,z\n0,a,1,2,3\n");
        assert_eq!(MotionClip::<f64>::new(0.1, vec![], vec![]), Err(MotionError::Empty));
    }
}
