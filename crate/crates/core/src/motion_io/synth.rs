//! Procedural CMU-style upper-body motions, used as stand-ins for recorded
//! clips in tests and demos.
//!
//! The skeleton is y-up, faces +z, and has the actor's left at +x. All
//! non-root joints carry `Zrotation Xrotation Yrotation` channels like the
//! CMU files.

use super::{BvhJoint, BvhMotion, BvhSkeleton, Channel};
use nalgebra::{Rotation3, Vector3};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticMotion {
    /// Right forearm waving above a sideways upper arm.
    Wave,
    /// Bent elbows flapping with moderate torso yaw.
    Chicken,
    /// Alternating arm circles with torso yaw and pitch.
    Swim,
}

impl SyntheticMotion {
    pub fn name(self) -> &'static str {
        match self {
            SyntheticMotion::Wave => "wave",
            SyntheticMotion::Chicken => "chicken",
            SyntheticMotion::Swim => "swim",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Self::Wave, Self::Chicken, Self::Swim]
            .into_iter()
            .find(|m| m.name() == s)
    }
}

const FRAME_TIME: f64 = 1.0 / 30.0;

/// Name, parent, offset and end site.
type SynthJoint = (&'static str, Option<usize>, Vector3<f64>, Option<Vector3<f64>>);

fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
    Vector3::new(x, y, z)
}

/// CMU-like hierarchy (units roughly inches).
pub fn skeleton() -> BvhSkeleton {
    let zxy = vec![Channel::Zrotation, Channel::Xrotation, Channel::Yrotation];
    let root_channels = vec![
        Channel::Xposition,
        Channel::Yposition,
        Channel::Zposition,
        Channel::Zrotation,
        Channel::Xrotation,
        Channel::Yrotation,
    ];
    let hierarchy: [SynthJoint; 14] = [
        ("Hips", None, v(0., 0., 0.), None),
        ("LowerBack", Some(0), v(0., 2., 0.), None),
        ("Spine", Some(1), v(0., 4., 0.), None),
        ("Spine1", Some(2), v(0., 4., 0.), None),
        ("Neck", Some(3), v(0., 3., 0.), None),
        ("Head", Some(4), v(0., 2., 0.), Some(v(0., 3., 0.))),
        ("LeftShoulder", Some(3), v(1.5, 2., 0.), None),
        ("LeftArm", Some(6), v(3., 0., 0.), None),
        ("LeftForeArm", Some(7), v(5., 0., 0.), None),
        ("LeftHand", Some(8), v(4.5, 0., 0.), Some(v(1.5, 0., 0.))),
        ("RightShoulder", Some(3), v(-1.5, 2., 0.), None),
        ("RightArm", Some(10), v(-3., 0., 0.), None),
        ("RightForeArm", Some(11), v(-5., 0., 0.), None),
        ("RightHand", Some(12), v(-4.5, 0., 0.), Some(v(-1.5, 0., 0.))),
    ];
    let mut joints = Vec::new();
    let mut start = 0;
    for (name, parent, offset, end_site) in hierarchy {
        let channels = if parent.is_none() {
            root_channels.clone()
        } else {
            zxy.clone()
        };
        let n = channels.len();
        joints.push(BvhJoint {
            name: name.to_string(),
            parent,
            offset,
            channels,
            channel_start: start,
            end_site,
        });
        start += n;
    }
    BvhSkeleton { joints }
}

/// `(z, x, y)` angles with `R = Rz(z) Rx(x) Ry(y)`.
fn zxy_angles(r: &Rotation3<f64>) -> [f64; 3] {
    let m = r.matrix();
    let x = m[(2, 1)].clamp(-1.0, 1.0).asin();
    let z = (-m[(0, 1)]).atan2(m[(1, 1)]);
    let y = (-m[(2, 0)]).atan2(m[(2, 2)]);
    [z, x, y]
}

fn between(from: &Vector3<f64>, to: &Vector3<f64>) -> Rotation3<f64> {
    Rotation3::rotation_between(from, to).unwrap_or_else(|| {
        // antiparallel: half turn about any perpendicular axis
        Rotation3::from_axis_angle(&Vector3::y_axis(), PI)
    })
}

/// Local rotations of an arm whose upper arm and forearm point along `upper`
/// and `fore` in the chest frame; `rest` is the arm's rest direction.
fn arm_rotations(rest: Vector3<f64>, upper: Vector3<f64>, fore: Vector3<f64>) -> [Rotation3<f64>; 2] {
    let ru = between(&rest, &upper.normalize());
    let rf = between(&rest, &(ru.inverse() * fore.normalize()));
    [ru, rf]
}

struct PoseSpec {
    root: Vector3<f64>,
    spine: Rotation3<f64>,
    left: [Rotation3<f64>; 2],
    right: [Rotation3<f64>; 2],
}

fn pose(motion: SyntheticMotion, t: f64) -> PoseSpec {
    let lrest = v(1., 0., 0.);
    let rrest = v(-1., 0., 0.);
    let hang_l = v(0.35, -1., 0.05);
    match motion {
        SyntheticMotion::Wave => {
            let s = (2.0 * PI * t).sin();
            let fore = v(-0.55 * s - 0.15, 1.0, 0.25);
            PoseSpec {
                root: v(0.2 * s, 35.0, 0.0),
                spine: Rotation3::from_euler_angles(0.0, 0.03 * s, 0.0),
                left: arm_rotations(lrest, hang_l, hang_l),
                right: arm_rotations(rrest, v(-1.0, 0.2, 0.3), fore),
            }
        }
        SyntheticMotion::Chicken => {
            let flap = 0.5 + 0.5 * (2.0 * PI * 2.0 * t).sin();
            let yaw = 0.18 * (2.0 * PI * 0.5 * t).sin();
            let up_l = v(0.3 + 0.6 * flap, -0.9, -0.15);
            let up_r = v(-0.3 - 0.6 * flap, -0.9, -0.15);
            PoseSpec {
                root: v(0.0, 35.0 + 0.3 * flap, 0.0),
                spine: Rotation3::from_axis_angle(&Vector3::y_axis(), yaw),
                left: arm_rotations(lrest, up_l, v(0.25, 0.35, 1.0)),
                right: arm_rotations(rrest, up_r, v(-0.25, 0.35, 1.0)),
            }
        }
        SyntheticMotion::Swim => {
            let phase = 2.0 * PI * 0.75 * t;
            let circle = |p: f64, side: f64| v(0.3 * side, p.cos(), p.sin());
            let yaw = 0.25 * phase.sin();
            let pitch = 0.35 + 0.1 * (2.0 * phase).sin();
            let spine = Rotation3::from_axis_angle(&Vector3::y_axis(), yaw)
                * Rotation3::from_axis_angle(&Vector3::x_axis(), pitch);
            let ul = circle(phase, 1.0);
            let ur = circle(phase + PI, -1.0);
            PoseSpec {
                root: v(0.0, 35.0, 0.5 * t),
                spine,
                left: arm_rotations(lrest, ul, ul + v(0.0, 0.0, 0.3)),
                right: arm_rotations(rrest, ur, ur + v(0.0, 0.0, 0.3)),
            }
        }
    }
}

/// A procedurally generated clip of `frames` frames at 30 Hz.
pub fn generate(motion: SyntheticMotion, frames: usize) -> BvhMotion {
    let skeleton = skeleton();
    let width = skeleton.channel_count();
    let mut rows = Vec::with_capacity(frames);
    for f in 0..frames {
        let t = f as f64 * FRAME_TIME;
        let p = pose(motion, t);
        let mut row = vec![0.0; width];
        row[0] = p.root.x;
        row[1] = p.root.y;
        row[2] = p.root.z;
        let mut set = |name: &str, r: &Rotation3<f64>| {
            let j = skeleton.joints.iter().find(|j| j.name == name).expect("known joint");
            let s = j.channel_start + j.channels.len() - 3;
            row[s..s + 3].copy_from_slice(&zxy_angles(r));
        };
        set("Spine", &p.spine);
        set("LeftArm", &p.left[0]);
        set("LeftForeArm", &p.left[1]);
        set("RightArm", &p.right[0]);
        set("RightForeArm", &p.right[1]);
        rows.push(row);
    }
    BvhMotion {
        skeleton,
        frame_time: FRAME_TIME,
        frames: rows,
    }
}

pub fn wave_hello(frames: usize) -> BvhMotion {
    generate(SyntheticMotion::Wave, frames)
}
