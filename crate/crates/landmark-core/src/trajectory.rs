//! Stationary-averaging: turn a text annotation's timestamp plus a movement
//! trajectory into a single landmark position.
//!
//! People pause when they type a note. We average the trajectory samples near
//! the annotation time whose instantaneous speed says "stopped"; if the user
//! never stopped (some start typing as soon as a landmark is visible), we fall
//! back to the sample nearest in time.

use crate::model::{Point2, TrajectorySample};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryParams {
    /// Samples moving slower than this count as stationary, in m/s.
    pub speed_threshold: f64,
    /// Full width of the time window centered on the annotation, in seconds.
    pub window: f64,
}

impl Default for StationaryParams {
    fn default() -> Self {
        // Conservative walking-pause values; both are configurable end to end.
        Self {
            speed_threshold: 0.2,
            window: 3.0,
        }
    }
}

/// Instantaneous speed at sample `i`, as the finite difference to the next
/// sample (backward difference for the final sample). A single-sample
/// trajectory has no usable difference; its speed is reported as infinite so
/// the caller takes the nearest-sample fallback.
fn speed_at(trajectory: &[TrajectorySample], i: usize) -> f64 {
    let n = trajectory.len();
    if n < 2 {
        return f64::INFINITY;
    }
    let (a, b) = if i + 1 < n {
        (&trajectory[i], &trajectory[i + 1])
    } else {
        (&trajectory[n - 2], &trajectory[n - 1])
    };
    let dt = b.t - a.t;
    (b.x - a.x).hypot(b.y - a.y) / dt
}

/// Estimates where the user stood when the annotation at `annotation_time`
/// (seconds since recording start) was written.
///
/// Returns the mean of windowed samples moving below `speed_threshold`, or the
/// globally nearest-in-time sample when none qualify. The annotation must fall
/// within one full window of the trajectory's time span.
pub fn stationary_position(
    trajectory: &[TrajectorySample],
    annotation_time: f64,
    params: &StationaryParams,
) -> Result<Point2> {
    if trajectory.is_empty() {
        return Err(Error::InvalidInput(
            "cannot locate an annotation on an empty trajectory".into(),
        ));
    }
    if !(params.speed_threshold > 0.0) || !(params.window > 0.0) {
        return Err(Error::InvalidInput(
            "speed_threshold and window must be strictly positive".into(),
        ));
    }
    if !annotation_time.is_finite() {
        return Err(Error::InvalidInput(format!(
            "annotation_time must be finite, got {annotation_time}"
        )));
    }
    let min = trajectory.first().unwrap().t - params.window;
    let max = trajectory.last().unwrap().t + params.window;
    if annotation_time < min || annotation_time > max {
        return Err(Error::OutOfRange {
            time: annotation_time,
            min,
            max,
        });
    }

    let half = params.window / 2.0;
    let mut sum_x = 0.0;
    let mut sum_y = 0.0;
    let mut count = 0usize;
    for (i, s) in trajectory.iter().enumerate() {
        if (s.t - annotation_time).abs() <= half
            && speed_at(trajectory, i) < params.speed_threshold
        {
            sum_x += s.x;
            sum_y += s.y;
            count += 1;
        }
    }
    if count > 0 {
        return Ok(Point2::new(sum_x / count as f64, sum_y / count as f64));
    }

    // No stationary sample near the annotation: nearest in time, earliest on ties.
    let nearest = trajectory
        .iter()
        .min_by(|a, b| {
            (a.t - annotation_time)
                .abs()
                .partial_cmp(&(b.t - annotation_time).abs())
                .unwrap()
        })
        .unwrap();
    Ok(Point2::new(nearest.x, nearest.y))
}
