//! Motion-driven design of humanoid upper-body kinematics.
//!
//! Robot designs are encoded as screw axes `(omega, q)` in a fixed 20-slot
//! right-half layout, compressed by an isometry-regularized autoencoder and
//! searched with Voronoi optimistic optimization against a
//! retarget-then-Procrustes objective.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`, which is what the command-line pipeline
//! uses.

pub mod dataset;
pub mod dh_model;
pub mod kinematics;
pub mod latent_tools;
pub mod manifold;
pub mod motion_io;
pub mod retarget;
pub mod scalar;
pub mod screw_model;
pub mod voo;

pub use scalar::Scalar;

pub type ScrewJointF = screw_model::ScrewJoint<f64>;
pub type Structure = screw_model::UpperBodyStructure<f64>;
pub type FullBody = screw_model::FullBodyStructure<f64>;
pub type Chain = kinematics::KinematicChain<f64>;
pub type Transform = kinematics::RigidTransform<f64>;
