//! Rigid-formation geometry: node positions are the anchor position plus a
//! rotated body-frame offset, so the whole formation is parameterized by the
//! anchor state alone.
//!
//! Attitude follows the intrinsic Z-Y-X convention: `R = Rz(yaw) Ry(pitch)
//! Rx(roll)`. In 2D the formation lives in the plane, offsets carry a zero
//! third component, and only yaw is allowed.

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Vector3};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("dimension must be 2 or 3, got {0}")]
    BadDimension(usize),
    #[error("expected a {expected}-dimensional vector, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("offset {index} is invalid: {reason}")]
    BadOffset { index: usize, reason: String },
    #[error("2D formations admit yaw only; roll and pitch must be zero")]
    AttitudeNotPlanar,
    #[error("vector components must be finite")]
    NonFinite,
}

/// Body-to-world rotation angles in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attitude {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Attitude {
    pub const ZERO: Attitude = Attitude {
        roll: 0.0,
        pitch: 0.0,
        yaw: 0.0,
    };

    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Attitude { roll, pitch, yaw }
    }

    pub fn from_degrees(roll: f64, pitch: f64, yaw: f64) -> Self {
        Attitude {
            roll: roll.to_radians(),
            pitch: pitch.to_radians(),
            yaw: yaw.to_radians(),
        }
    }

    /// World-frame rotation matrix `Rz(yaw) Ry(pitch) Rx(roll)`.
    pub fn rotation(&self) -> Matrix3<f64> {
        *Rotation3::from_euler_angles(self.roll, self.pitch, self.yaw).matrix()
    }
}

/// Shape of a multi-node formation: one anchor plus `offsets.len()` buddies
/// at fixed body-frame displacements.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationSpec {
    dimension: usize,
    offsets: Vec<Vector3<f64>>,
    attitude: Attitude,
}

impl FormationSpec {
    pub fn new(
        dimension: usize,
        offsets: Vec<Vector3<f64>>,
        attitude: Attitude,
    ) -> Result<Self, GeometryError> {
        if dimension != 2 && dimension != 3 {
            return Err(GeometryError::BadDimension(dimension));
        }
        if dimension == 2 && (attitude.roll != 0.0 || attitude.pitch != 0.0) {
            return Err(GeometryError::AttitudeNotPlanar);
        }
        for (index, off) in offsets.iter().enumerate() {
            let bad = |reason: &str| GeometryError::BadOffset {
                index,
                reason: reason.to_string(),
            };
            if !off.iter().all(|v| v.is_finite()) {
                return Err(bad("components must be finite"));
            }
            if off.norm() == 0.0 {
                return Err(bad("offset must be non-zero"));
            }
            if dimension == 2 && off.z != 0.0 {
                return Err(bad("third component must be zero in 2D"));
            }
        }
        Ok(FormationSpec {
            dimension,
            offsets,
            attitude,
        })
    }

    /// Formation consisting of the anchor alone.
    pub fn single(dimension: usize) -> Result<Self, GeometryError> {
        FormationSpec::new(dimension, Vec::new(), Attitude::ZERO)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Total node count M (anchor included).
    pub fn node_count(&self) -> usize {
        self.offsets.len() + 1
    }

    pub fn offsets(&self) -> &[Vector3<f64>] {
        &self.offsets
    }

    pub fn attitude(&self) -> Attitude {
        self.attitude
    }
}

/// World positions of every formation node, anchor first.
#[derive(Debug, Clone, PartialEq)]
pub struct NodePositions {
    positions: Vec<DVector<f64>>,
}

impl NodePositions {
    pub fn anchor(&self) -> &DVector<f64> {
        &self.positions[0]
    }

    pub fn get(&self, node: usize) -> &DVector<f64> {
        &self.positions[node]
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, DVector<f64>> {
        self.positions.iter()
    }
}

/// Places every node given the anchor's world position: node i sits at
/// `anchor + R * offset_i`.
pub fn formation_positions(
    anchor: &DVector<f64>,
    spec: &FormationSpec,
) -> Result<NodePositions, GeometryError> {
    if anchor.len() != spec.dimension {
        return Err(GeometryError::DimensionMismatch {
            expected: spec.dimension,
            got: anchor.len(),
        });
    }
    if !anchor.iter().all(|v| v.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let rot = spec.attitude.rotation();
    let mut positions = Vec::with_capacity(spec.node_count());
    positions.push(anchor.clone());
    for off in &spec.offsets {
        let world = rot * off;
        let mut p = anchor.clone();
        for k in 0..spec.dimension {
            p[k] += world[k];
        }
        positions.push(p);
    }
    Ok(NodePositions { positions })
}

/// Jacobian of each node position with respect to the anchor position. The
/// offsets are constant in the world frame, so every block is the identity.
pub fn formation_jacobian(spec: &FormationSpec) -> Vec<DMatrix<f64>> {
    (0..spec.node_count())
        .map(|_| DMatrix::identity(spec.dimension, spec.dimension))
        .collect()
}
