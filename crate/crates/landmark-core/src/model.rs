//! Geometric and domain types shared by every pipeline stage.
//!
//! All types are immutable values and safe to share across threads. Angles are
//! stored as a scalar radian in [-pi, pi) rather than a rotation matrix, so
//! rigidity holds exactly with no orthonormality drift; the matrix form is
//! computed on demand inside [`RigidTransform2::apply`].

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// A position in meters, either in a recording's private frame or the shared frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Wraps an angle into the canonical range [-pi, pi).
pub fn normalize_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let wrapped = theta - two_pi * ((theta + std::f64::consts::PI) / two_pi).floor();
    // Rounding can land exactly on pi; fold it back to the half-open range.
    if wrapped >= std::f64::consts::PI {
        wrapped - two_pi
    } else {
        wrapped
    }
}

/// Rigid motion of the plane: rotation by `theta` followed by translation by `(tx, ty)`.
///
/// One transform per recording maps that recording's frame into the shared frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform2 {
    /// Rotation angle in radians, canonical range [-pi, pi).
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
}

impl RigidTransform2 {
    pub fn new(theta: f64, tx: f64, ty: f64) -> Self {
        Self {
            theta: normalize_angle(theta),
            tx,
            ty,
        }
    }

    pub fn identity() -> Self {
        Self {
            theta: 0.0,
            tx: 0.0,
            ty: 0.0,
        }
    }

    /// Returns a copy with `theta` wrapped into [-pi, pi).
    pub fn normalized(&self) -> Self {
        Self::new(self.theta, self.tx, self.ty)
    }

    /// q = R(theta) p + t
    pub fn apply(&self, p: Point2) -> Point2 {
        let (sin, cos) = self.theta.sin_cos();
        Point2 {
            x: cos * p.x - sin * p.y + self.tx,
            y: sin * p.x + cos * p.y + self.ty,
        }
    }

    /// Transform sending `apply`'s outputs back to its inputs: p = R(-theta) (q - t).
    pub fn inverse(&self) -> Self {
        let (sin, cos) = (-self.theta).sin_cos();
        Self {
            theta: normalize_angle(-self.theta),
            tx: -(cos * self.tx - sin * self.ty),
            ty: -(sin * self.tx + cos * self.ty),
        }
    }

    /// Composition `self` after `other`: (self ∘ other)(p) = self.apply(other.apply(p)).
    pub fn compose(&self, other: &RigidTransform2) -> Self {
        let t = self.apply(Point2::new(other.tx, other.ty));
        Self {
            theta: normalize_angle(self.theta + other.theta),
            tx: t.x,
            ty: t.y,
        }
    }
}

/// One landmark sighting inside a recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub recording_id: String,
    /// Index into the flattened observation list spanning all recordings.
    pub obs_index: usize,
    /// Canonical landmark label (or raw note text when identification found no match).
    pub label: String,
    /// Position in the recording's own frame.
    pub position: Point2,
    /// Free-text semantic description, stored verbatim.
    pub note: String,
    pub timestamp: DateTime<Utc>,
}

/// A single movement sample relative to the recording start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    /// Seconds since recording start; non-negative, strictly increasing along a trajectory.
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

/// One user session: annotations plus the optional trajectory they were taken along.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub recording_id: String,
    pub observations: Vec<Observation>,
    pub trajectory: Option<Vec<TrajectorySample>>,
}

impl Recording {
    /// Checks the recording invariants: non-empty id, matching observation ids,
    /// non-decreasing observation timestamps, finite positions, and a strictly
    /// increasing non-negative trajectory time base.
    pub fn validate(&self) -> crate::Result<()> {
        if self.recording_id.is_empty() {
            return Err(crate::Error::InvalidInput(
                "recording_id must be non-empty".into(),
            ));
        }
        let mut last_ts = None;
        for obs in &self.observations {
            if obs.recording_id != self.recording_id {
                return Err(crate::Error::InvalidInput(format!(
                    "observation {} carries recording_id '{}', expected '{}'",
                    obs.obs_index, obs.recording_id, self.recording_id
                )));
            }
            if !obs.position.is_finite() {
                return Err(crate::Error::InvalidInput(format!(
                    "observation {} has a non-finite position",
                    obs.obs_index
                )));
            }
            if let Some(prev) = last_ts {
                if obs.timestamp < prev {
                    return Err(crate::Error::InvalidInput(format!(
                        "observation timestamps decrease within recording '{}'",
                        self.recording_id
                    )));
                }
            }
            last_ts = Some(obs.timestamp);
        }
        if let Some(traj) = &self.trajectory {
            let mut last_t = f64::NEG_INFINITY;
            for sample in traj {
                if sample.t < 0.0 || !sample.t.is_finite() {
                    return Err(crate::Error::InvalidInput(format!(
                        "trajectory time {} is negative or non-finite",
                        sample.t
                    )));
                }
                if sample.t <= last_t {
                    return Err(crate::Error::InvalidInput(format!(
                        "trajectory times must be strictly increasing in recording '{}'",
                        self.recording_id
                    )));
                }
                last_t = sample.t;
            }
        }
        Ok(())
    }
}

/// Flattens recordings into one observation list, assigning sequential `obs_index`
/// values. The resulting index space is what relatedness matrices and alignment
/// problems are built over.
pub fn flatten_observations(recordings: &[Recording]) -> Vec<Observation> {
    let mut out = Vec::with_capacity(recordings.iter().map(|r| r.observations.len()).sum());
    for recording in recordings {
        for obs in &recording.observations {
            let mut obs = obs.clone();
            obs.obs_index = out.len();
            out.push(obs);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_close(p: Point2, x: f64, y: f64, tol: f64) {
        assert!(
            (p.x - x).abs() < tol && (p.y - y).abs() < tol,
            "({}, {}) vs ({x}, {y})",
            p.x,
            p.y
        );
    }

    #[test]
    fn apply_identity() {
        let t = RigidTransform2::identity();
        assert_close(t.apply(Point2::new(3.0, 4.0)), 3.0, 4.0, 1e-15);
    }

    #[test]
    fn apply_quarter_turn() {
        let t = RigidTransform2::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0);
        assert_close(t.apply(Point2::new(1.0, 0.0)), 0.0, 1.0, 1e-15);
    }

    #[test]
    fn apply_quarter_turn_with_translation() {
        // R(pi/2) (1,0) = (0,1); plus t = (2,-1) gives (2,0).
        let t = RigidTransform2::new(std::f64::consts::FRAC_PI_2, 2.0, -1.0);
        assert_close(t.apply(Point2::new(1.0, 0.0)), 2.0, 0.0, 1e-15);
    }

    #[test]
    fn inverse_identity() {
        let inv = RigidTransform2::identity().inverse();
        assert_eq!(inv, RigidTransform2::identity());
    }

    #[test]
    fn inverse_pure_rotation() {
        let inv = RigidTransform2::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0).inverse();
        assert!((inv.theta + std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert_close(Point2::new(inv.tx, inv.ty), 0.0, 0.0, 1e-15);
    }

    #[test]
    fn inverse_with_translation() {
        // t_inv = -R(-theta) t: for theta = pi/2, t = (2,-1) that is (1, 2).
        // Cross-checked by the round-trip below rather than trusting the algebra.
        let t = RigidTransform2::new(std::f64::consts::FRAC_PI_2, 2.0, -1.0);
        let inv = t.inverse();
        assert!((inv.theta + std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert_close(Point2::new(inv.tx, inv.ty), 1.0, 2.0, 1e-12);
        let p = Point2::new(1.0, 0.0);
        let back = inv.apply(t.apply(p));
        assert_close(back, p.x, p.y, 1e-12);
    }

    #[test]
    fn round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let t = RigidTransform2::new(
                rng.random_range(-10.0..10.0),
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
            );
            let p = Point2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
            let back = t.inverse().apply(t.apply(p));
            assert!(back.distance(&p) < 1e-12, "{back:?} vs {p:?}");
        }
    }

    #[test]
    fn rigidity_preserves_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let t = RigidTransform2::new(
                rng.random_range(-10.0..10.0),
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
            );
            let a = Point2::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
            let b = Point2::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
            let before = a.distance(&b);
            let after = t.apply(a).distance(&t.apply(b));
            assert!((before - after).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_angle_idempotent_and_canonical() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let theta = rng.random_range(-100.0..100.0);
            let once = normalize_angle(theta);
            assert!((-std::f64::consts::PI..std::f64::consts::PI).contains(&once));
            assert_eq!(once, normalize_angle(once));
        }
        assert_eq!(normalize_angle(std::f64::consts::PI), -std::f64::consts::PI);
        assert_eq!(normalize_angle(-std::f64::consts::PI), -std::f64::consts::PI);
    }

    #[test]
    fn compose_matches_sequential_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..200 {
            let a = RigidTransform2::new(
                rng.random_range(-4.0..4.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            );
            let b = RigidTransform2::new(
                rng.random_range(-4.0..4.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            );
            let p = Point2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let via_compose = a.compose(&b).apply(p);
            let sequential = a.apply(b.apply(p));
            assert!(via_compose.distance(&sequential) < 1e-12);
        }
    }

    #[test]
    fn recording_validation_rejects_mismatched_ids() {
        let obs = Observation {
            recording_id: "other".into(),
            obs_index: 0,
            label: "A".into(),
            position: Point2::new(0.0, 0.0),
            note: String::new(),
            timestamp: Utc::now(),
        };
        let rec = Recording {
            recording_id: "rec-1".into(),
            observations: vec![obs],
            trajectory: None,
        };
        assert!(rec.validate().is_err());
    }

    #[test]
    fn flatten_assigns_sequential_indices() {
        let mk = |rid: &str, n: usize| Recording {
            recording_id: rid.to_string(),
            observations: (0..n)
                .map(|k| Observation {
                    recording_id: rid.to_string(),
                    obs_index: 0,
                    label: format!("L{k}"),
                    position: Point2::new(k as f64, 0.0),
                    note: String::new(),
                    timestamp: DateTime::<Utc>::from_timestamp(k as i64, 0).unwrap(),
                })
                .collect(),
            trajectory: None,
        };
        let flat = flatten_observations(&[mk("a", 2), mk("b", 3)]);
        assert_eq!(flat.len(), 5);
        for (i, obs) in flat.iter().enumerate() {
            assert_eq!(obs.obs_index, i);
        }
        assert_eq!(flat[2].recording_id, "b");
    }
}
