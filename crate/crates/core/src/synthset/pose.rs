use std::f64::consts::{FRAC_PI_2, SQRT_2, TAU};

use serde::{Deserialize, Serialize};

use crate::rng::SeededRng;

/// One frame of the parametric walk cycle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseSpec {
    pub pose_id: usize,
    /// Position in the gait cycle, `[0, 1)`.
    pub phase: f64,
    /// Peak hip flexion, radians.
    pub stride_amplitude: f64,
    /// Peak shoulder flexion, radians.
    pub arm_swing: f64,
    /// Heading of the body in the scene, radians. Multiples of π/2 give
    /// walking away, sideways and towards.
    pub yaw_offset: f64,
}

/// Joint angles in radians, index 0 = left, 1 = right. Positive hip and
/// shoulder angles swing the limb forward; knee and elbow angles are flexion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointAngles {
    pub hip: [f64; 2],
    pub knee: [f64; 2],
    pub shoulder: [f64; 2],
    pub elbow: [f64; 2],
}

pub const STRIDE_RANGE: (f64, f64) = (0.30, 0.55);
pub const ARM_SWING_RANGE: (f64, f64) = (0.20, 0.50);
pub const MAX_KNEE_FLEXION: f64 = 0.9;
pub const MAX_ELBOW_FLEXION: f64 = 0.6;

const DEFAULT_STRIDE: f64 = 0.42;
const DEFAULT_ARM_SWING: f64 = 0.35;

impl PoseSpec {
    /// Legs passing each other, arms at rest, facing the zero heading.
    pub fn neutral(pose_id: usize) -> Self {
        Self {
            pose_id,
            phase: 0.0,
            stride_amplitude: DEFAULT_STRIDE,
            arm_swing: DEFAULT_ARM_SWING,
            yaw_offset: 0.0,
        }
    }

    pub fn joint_angles(&self) -> JointAngles {
        let side = |phase: f64| {
            let s = (TAU * phase).sin();
            let c = (TAU * phase).cos();
            // Knee bends while the leg swings through behind the body.
            let knee = MAX_KNEE_FLEXION * (s - c).max(0.0) / SQRT_2;
            let elbow = 0.15 + (MAX_ELBOW_FLEXION - 0.15) * 0.5 * (1.0 - s);
            (self.stride_amplitude * s, knee, -self.arm_swing * s, elbow)
        };
        let l = side(self.phase);
        let r = side(self.phase + 0.5);
        JointAngles {
            hip: [l.0, r.0],
            knee: [l.1, r.1],
            shoulder: [l.2, r.2],
            elbow: [l.3, r.3],
        }
    }
}

/// `n` poses with phases `i/n`, jittered gait style, and headings cycling
/// through forwards, sideways, backwards and the other side. A single pose
/// is the neutral one.
pub fn sample_poses(n: usize, rng: &mut SeededRng) -> Vec<PoseSpec> {
    if n == 1 {
        return vec![PoseSpec::neutral(0)];
    }
    (0..n)
        .map(|i| PoseSpec {
            pose_id: i,
            phase: i as f64 / n as f64,
            stride_amplitude: rng.range(STRIDE_RANGE.0, STRIDE_RANGE.1),
            arm_swing: rng.range(ARM_SWING_RANGE.0, ARM_SWING_RANGE.1),
            yaw_offset: ((i % 4) as f64 * FRAC_PI_2 + rng.range(-0.35, 0.35)).rem_euclid(TAU),
        })
        .collect()
}

/// A viewpoint on the hemisphere around the subject.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraSample {
    /// `[0, 2π)`.
    pub azimuth: f64,
    /// `[0, π/2]`; 0 is the horizon.
    pub elevation: f64,
    /// Metres, `[6, 10]`.
    pub distance: f64,
}

pub const DISTANCE_RANGE: (f64, f64) = (6.0, 10.0);

impl CameraSample {
    /// Maps three uniforms in `[0, 1)` to a viewpoint uniform over the
    /// hemisphere surface.
    pub fn from_uniforms(u_azimuth: f64, u_height: f64, u_distance: f64) -> Self {
        Self {
            azimuth: TAU * u_azimuth,
            elevation: u_height.asin(),
            distance: DISTANCE_RANGE.0 + (DISTANCE_RANGE.1 - DISTANCE_RANGE.0) * u_distance,
        }
    }
}

pub fn sample_camera(rng: &mut SeededRng) -> CameraSample {
    let a = rng.uniform();
    let h = rng.uniform();
    let d = rng.uniform();
    CameraSample::from_uniforms(a, h, d)
}

/// Quadrant of the azimuth, 0..4; serves as the camera label of a synthetic
/// image.
pub fn camera_id(camera: &CameraSample) -> u32 {
    ((camera.azimuth.rem_euclid(TAU) / FRAC_PI_2) as u32).min(3)
}
