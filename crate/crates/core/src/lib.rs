//! Decoupled LiDAR odometry.
//!
//! Rotation between two scans is estimated from the pattern that surface
//! normals trace on the unit sphere, which is unaffected by translation. The
//! scans are then unrotated and the remaining pure translation is recovered
//! by registering line clouds. A linear motion model seeds each frame and a
//! pose graph with skip edges refines the trajectory.

pub mod eigen;
pub mod error;
pub mod geometry;
pub mod graphopt;
pub mod ingest;
pub mod normals;
pub mod pipeline;
pub mod rotation;
pub mod spatial;
pub mod synth;
pub mod translation;

pub use error::{Error, Result};
pub use geometry::{Point3, RigidTransform, Rotation3, UnitVec3, Vec3};
pub use spatial::NeighborIndex;
