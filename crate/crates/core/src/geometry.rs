//! Coordinate frames, direction vectors and propagation delays.
//!
//! Positions live in a global Cartesian frame (meters). Each RIS carries a
//! local frame obtained from its Euler angles; directions seen by an RIS are
//! expressed in that local frame and parametrised by azimuth and elevation as
//! `t = [cos φ cos θ, sin φ cos θ, sin θ]`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Point3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// A point in the global frame, meters.
pub type Position3 = Point3<f64>;

/// Orthonormal rotation from an RIS local frame to the global frame.
pub type RotationMatrix = Rotation3<f64>;

/// Minimum separation for two points to count as distinct.
const MIN_SEPARATION_M: f64 = 1e-9;

/// Intrinsic Z-Y-X Euler angles (yaw about z, then pitch about y, then roll
/// about x), radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAngles {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl EulerAngles {
    pub fn new(yaw: f64, pitch: f64, roll: f64) -> Result<Self> {
        for (name, v) in [("yaw", yaw), ("pitch", pitch), ("roll", roll)] {
            if !v.is_finite() || v.abs() > PI + 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "{name} = {v} outside [-pi, pi]"
                )));
            }
        }
        Ok(Self { yaw, pitch, roll })
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Rotation about the global z axis only.
    pub fn yaw_only(yaw: f64) -> Result<Self> {
        Self::new(yaw, 0.0, 0.0)
    }
}

/// Builds `Q = Rz(yaw) · Ry(pitch) · Rx(roll)`.
pub fn rotation_from_euler(angles: &EulerAngles) -> RotationMatrix {
    Rotation3::from_euler_angles(angles.roll, angles.pitch, angles.yaw)
}

/// Unit direction from `from` towards `to`, expressed in the local frame of `q`.
pub fn local_direction(
    q: &RotationMatrix,
    from: &Position3,
    to: &Position3,
) -> Result<Unit<Vector3<f64>>> {
    let delta = to - from;
    let norm = delta.norm();
    if !(norm > MIN_SEPARATION_M) {
        return Err(Error::DegenerateGeometry(format!(
            "coincident points {from} and {to}"
        )));
    }
    Ok(Unit::new_normalize(q.inverse_transform_vector(&delta)))
}

/// Azimuth `φ ∈ (−π, π]` and elevation `θ ∈ [−π/2, π/2]`, radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnglePair {
    pub azimuth: f64,
    pub elevation: f64,
}

impl AnglePair {
    pub fn new(azimuth: f64, elevation: f64) -> Self {
        Self { azimuth, elevation }
    }

    /// Unit direction `t(φ, θ)`.
    pub fn direction(&self) -> Vector3<f64> {
        direction_from_angles(self.azimuth, self.elevation)
    }
}

/// Result of inverting the direction parametrisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleReading {
    pub angles: AnglePair,
    /// Set when the direction is a pole: the azimuth is undefined and reported as 0.
    pub gimbal: bool,
}

/// `t(φ, θ) = [cos φ cos θ, sin φ cos θ, sin θ]`.
pub fn direction_from_angles(azimuth: f64, elevation: f64) -> Vector3<f64> {
    let (sp, cp) = azimuth.sin_cos();
    let (st, ct) = elevation.sin_cos();
    Vector3::new(cp * ct, sp * ct, st)
}

/// Partial derivatives `(∂t/∂φ, ∂t/∂θ)` of the direction parametrisation.
pub fn direction_partials(azimuth: f64, elevation: f64) -> (Vector3<f64>, Vector3<f64>) {
    let (sp, cp) = azimuth.sin_cos();
    let (st, ct) = elevation.sin_cos();
    (
        Vector3::new(-sp * ct, cp * ct, 0.0),
        Vector3::new(-cp * st, -sp * st, ct),
    )
}

pub fn angles_from_direction(t: &Vector3<f64>) -> Result<AngleReading> {
    let norm = t.norm();
    if !((norm - 1.0).abs() <= 1e-9) {
        return Err(Error::InvalidParameter(format!(
            "direction must be unit norm, got |t| = {norm}"
        )));
    }
    let horizontal = t.x.hypot(t.y);
    let elevation = t.z.atan2(horizontal);
    if horizontal <= 1e-12 {
        let elevation = if t.z > 0.0 { FRAC_PI_2 } else { -FRAC_PI_2 };
        return Ok(AngleReading {
            angles: AnglePair::new(0.0, elevation),
            gimbal: true,
        });
    }
    let mut azimuth = t.y.atan2(t.x);
    if azimuth <= -PI {
        azimuth = PI;
    }
    Ok(AngleReading {
        angles: AnglePair::new(azimuth, elevation),
        gimbal: false,
    })
}

/// Position and orientation of an RIS plate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub position: Position3,
    pub orientation: EulerAngles,
}

impl Placement {
    pub fn new(position: Position3, orientation: EulerAngles) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn rotation(&self) -> RotationMatrix {
        rotation_from_euler(&self.orientation)
    }

    /// Direction from the plate towards `target`, in the plate's local frame.
    pub fn direction_to(&self, target: &Position3) -> Result<Vector3<f64>> {
        local_direction(&self.rotation(), &self.position, target).map(Unit::into_inner)
    }
}

/// Everything the simulator knows about where things are.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneGeometry {
    pub bs: Position3,
    pub ue: Position3,
    pub ris_l: Placement,
    pub ris_u: Placement,
    /// Clock offset `B` between UE and BS, expressed in meters.
    pub clock_offset_m: f64,
}

impl SceneGeometry {
    pub fn validate(&self) -> Result<()> {
        let pts = [
            ("bs", self.bs),
            ("ue", self.ue),
            ("legitimate ris", self.ris_l.position),
            ("unauthorized ris", self.ris_u.position),
        ];
        for (name, p) in &pts {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} position not finite")));
            }
        }
        if !self.clock_offset_m.is_finite() {
            return Err(Error::InvalidParameter("clock offset not finite".into()));
        }
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                if (pts[i].1 - pts[j].1).norm() <= MIN_SEPARATION_M {
                    return Err(Error::DegenerateGeometry(format!(
                        "{} and {} coincide",
                        pts[i].0, pts[j].0
                    )));
                }
            }
        }
        Ok(())
    }

    /// Shifts every position by `offset`.
    pub fn translated(&self, offset: &Vector3<f64>) -> Self {
        let mut out = *self;
        out.bs += offset;
        out.ue += offset;
        out.ris_l.position += offset;
        out.ris_u.position += offset;
        out
    }

    /// UE direction seen from the legitimate RIS (arrival), local frame.
    pub fn legit_arrival(&self) -> Result<Vector3<f64>> {
        self.ris_l.direction_to(&self.ue)
    }

    /// BS direction seen from the legitimate RIS (departure), local frame.
    pub fn legit_departure(&self) -> Result<Vector3<f64>> {
        self.ris_l.direction_to(&self.bs)
    }

    pub fn unauth_arrival(&self) -> Result<Vector3<f64>> {
        self.ris_u.direction_to(&self.ue)
    }

    pub fn unauth_departure(&self) -> Result<Vector3<f64>> {
        self.ris_u.direction_to(&self.bs)
    }
}

/// Delays and pseudoranges of the three paths (clock offset included).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathDelays {
    pub tau_u: f64,
    pub tau_rl: f64,
    pub tau_ru: f64,
    pub d_u: f64,
    pub d_rl: f64,
    pub d_ru: f64,
}

pub fn path_geometry(scene: &SceneGeometry) -> Result<PathDelays> {
    scene.validate()?;
    let b = scene.clock_offset_m;
    let d_u = (scene.bs - scene.ue).norm() + b;
    let d_rl = (scene.bs - scene.ris_l.position).norm()
        + (scene.ue - scene.ris_l.position).norm()
        + b;
    let d_ru = (scene.bs - scene.ris_u.position).norm()
        + (scene.ue - scene.ris_u.position).norm()
        + b;
    Ok(PathDelays {
        tau_u: d_u / SPEED_OF_LIGHT,
        tau_rl: d_rl / SPEED_OF_LIGHT,
        tau_ru: d_ru / SPEED_OF_LIGHT,
        d_u,
        d_rl,
        d_ru,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table_scene() -> SceneGeometry {
        SceneGeometry {
            bs: Position3::new(0.0, 0.0, 0.0),
            ue: Position3::new(1.0, 4.0, -2.0),
            ris_l: Placement::new(Position3::new(-2.0, 4.0, 0.0), EulerAngles::zero()),
            ris_u: Placement::new(Position3::new(2.0, 5.0, 0.0), EulerAngles::zero()),
            clock_offset_m: 5.0,
        }
    }

    #[test]
    fn identity_rotation() {
        let q = rotation_from_euler(&EulerAngles::zero());
        assert!((q.matrix() - nalgebra::Matrix3::identity()).norm() < 1e-15);
    }

    #[test]
    fn half_turn_about_z() {
        let q = rotation_from_euler(&EulerAngles::new(PI, 0.0, 0.0).unwrap());
        let m = q.matrix();
        assert!((m[(0, 0)] + 1.0).abs() < 1e-12);
        assert!((m[(1, 1)] + 1.0).abs() < 1e-12);
        assert!((m[(2, 2)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn euler_range_is_checked() {
        assert!(EulerAngles::new(4.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn direction_along_z() {
        let q = rotation_from_euler(&EulerAngles::zero());
        let t = local_direction(&q, &Position3::origin(), &Position3::new(0.0, 0.0, 1.0)).unwrap();
        assert!((t.into_inner() - Vector3::z()).norm() < 1e-15);
    }

    #[test]
    fn direction_ris_to_ue_table_scene() {
        let s = table_scene();
        let t = s.legit_arrival().unwrap();
        let expected = Vector3::new(3.0, 0.0, -2.0) / 13f64.sqrt();
        assert!((t - expected).norm() < 1e-12);
    }

    #[test]
    fn coincident_points_rejected() {
        let q = rotation_from_euler(&EulerAngles::zero());
        let p = Position3::new(1.0, 2.0, 3.0);
        assert!(matches!(
            local_direction(&q, &p, &p),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn angles_of_axis_and_pole() {
        let r = angles_from_direction(&Vector3::x()).unwrap();
        assert_eq!(r.angles, AnglePair::new(0.0, 0.0));
        assert!(!r.gimbal);
        let r = angles_from_direction(&Vector3::z()).unwrap();
        assert!(r.gimbal);
        assert_eq!(r.angles.azimuth, 0.0);
        assert!((r.angles.elevation - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn non_unit_direction_rejected() {
        assert!(angles_from_direction(&Vector3::new(1.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn pseudorange_table_scene() {
        let d = path_geometry(&table_scene()).unwrap();
        let expected = 21f64.sqrt() + 5.0;
        assert!((d.d_u - expected).abs() < 1e-12);
        assert!((d.d_u - 9.582_575_694_955_84).abs() < 1e-9);
        assert!((d.tau_u * SPEED_OF_LIGHT - d.d_u).abs() < 1e-9);
        let expected_rl = 20f64.sqrt() + 13f64.sqrt() + 5.0;
        assert!((d.d_rl - expected_rl).abs() < 1e-12);
    }

    #[test]
    fn zero_clock_offset_gives_geometric_distance() {
        let mut s = table_scene();
        s.clock_offset_m = 0.0;
        let d = path_geometry(&s).unwrap();
        assert!((d.d_u - (s.bs - s.ue).norm()).abs() < 1e-15);
    }

    #[test]
    fn coincident_scene_rejected() {
        let mut s = table_scene();
        s.ris_u.position = s.ris_l.position;
        assert!(path_geometry(&s).is_err());
    }

    fn arb_point() -> impl Strategy<Value = Position3> {
        (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y, z)| Position3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn rotation_is_orthonormal(yaw in -PI..PI, pitch in -PI..PI, roll in -PI..PI) {
            let q = rotation_from_euler(&EulerAngles::new(yaw, pitch, roll).unwrap());
            let m = q.matrix();
            prop_assert!((m.transpose() * m - nalgebra::Matrix3::identity()).norm() < 1e-12);
            prop_assert!((m.determinant() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn local_direction_is_unit(yaw in -PI..PI, a in arb_point(), b in arb_point()) {
            prop_assume!((a - b).norm() > 1e-3);
            let q = rotation_from_euler(&EulerAngles::new(yaw, 0.3, -0.2).unwrap());
            let t = local_direction(&q, &a, &b).unwrap();
            prop_assert!((t.norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn angle_round_trip(phi in -3.1f64..3.1, theta in -1.5f64..1.5) {
            let t = direction_from_angles(phi, theta);
            let r = angles_from_direction(&t).unwrap();
            prop_assert!((r.angles.azimuth - phi).abs() < 1e-9);
            prop_assert!((r.angles.elevation - theta).abs() < 1e-9);
            prop_assert!((r.angles.direction() - t).norm() < 1e-9);
        }

        #[test]
        fn triangle_inequality_and_translation(ue in arb_point(), shift in arb_point()) {
            let mut s = table_scene();
            s.ue = ue;
            prop_assume!(s.validate().is_ok());
            prop_assume!((s.ue - s.bs).norm() > 1e-3);
            let d = path_geometry(&s).unwrap();
            prop_assert!(d.d_rl >= d.d_u - 1e-12);
            prop_assert!(d.d_ru >= d.d_u - 1e-12);
            let moved = path_geometry(&s.translated(&shift.coords)).unwrap();
            prop_assert!((moved.d_u - d.d_u).abs() < 1e-9);
            prop_assert!((moved.d_rl - d.d_rl).abs() < 1e-9);
            prop_assert!((moved.d_ru - d.d_ru).abs() < 1e-9);
        }
    }
}
