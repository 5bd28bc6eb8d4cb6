//! Map-versus-ground-truth scoring.
//!
//! The generated map lives in an arbitrary shared frame, so it is first fitted
//! to ground truth with the optimal similarity transform (rotation,
//! translation, uniform scale — Umeyama's SVD solution), then scored by the
//! mean distance between matched landmark pairs and by how many distinct
//! ground-truth ids the map covers.

use std::collections::BTreeMap;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::aggregate::SemanticLandmarkMap;
use crate::model::{Point2, RigidTransform2};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthLandmark {
    pub id: String,
    pub position: Point2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub landmarks: Vec<TruthLandmark>,
}

impl GroundTruth {
    pub fn validate(&self) -> Result<()> {
        if self.landmarks.is_empty() {
            return Err(Error::InvalidInput("ground truth has no landmarks".into()));
        }
        for lm in &self.landmarks {
            if !lm.position.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "ground-truth landmark '{}' has a non-finite position",
                    lm.id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean distance between matched pairs after similarity alignment, meters.
    pub positional_error: f64,
    /// Distinct ground-truth ids covered by at least one cluster label.
    pub coverage: usize,
    pub matched_pairs: usize,
    /// Uniform scale of the fitted similarity.
    pub scale: f64,
    /// Rotation + translation of the fitted similarity; the full map applied
    /// to a point p is scale·R(θ)·p + t (see [`apply_similarity`]).
    pub applied_transform: RigidTransform2,
    /// Raw cluster count, reported alongside distinct-id coverage.
    pub cluster_count: usize,
}

/// Applies the similarity q = scale·R(θ)·p + t.
pub fn apply_similarity(scale: f64, transform: &RigidTransform2, p: Point2) -> Point2 {
    let (sin, cos) = transform.theta.sin_cos();
    Point2::new(
        scale * (cos * p.x - sin * p.y) + transform.tx,
        scale * (sin * p.x + cos * p.y) + transform.ty,
    )
}

/// Least-squares similarity fit: minimizes Σ‖s·R·src_k + t − dst_k‖² via SVD
/// of the cross-covariance, with the determinant forced to +1 so reflections
/// are never returned.
pub fn umeyama_similarity(src: &[Point2], dst: &[Point2]) -> Result<(f64, RigidTransform2)> {
    if src.len() != dst.len() {
        return Err(Error::InvalidInput(format!(
            "similarity fit needs paired points, got {} vs {}",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "similarity fit needs at least 2 point pairs, got {}",
            src.len()
        )));
    }
    let n = src.len() as f64;
    let mean = |pts: &[Point2]| {
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(x, y), p| (x + p.x, y + p.y));
        Vector2::new(sx / n, sy / n)
    };
    let mu_src = mean(src);
    let mu_dst = mean(dst);

    let mut covariance = Matrix2::zeros();
    let mut src_var = 0.0;
    for (a, b) in src.iter().zip(dst) {
        let ac = Vector2::new(a.x, a.y) - mu_src;
        let bc = Vector2::new(b.x, b.y) - mu_dst;
        covariance += bc * ac.transpose();
        src_var += ac.norm_squared();
    }
    covariance /= n;
    src_var /= n;
    if src_var <= f64::EPSILON {
        return Err(Error::InvalidInput(
            "similarity fit is degenerate: all source points coincide".into(),
        ));
    }

    let svd = covariance.svd(true, true);
    let u = svd.u.expect("2x2 SVD with u requested");
    let v_t = svd.v_t.expect("2x2 SVD with v_t requested");
    // Reflection correction: flip the smallest singular direction when the
    // raw product would have determinant −1.
    let sign = if (u * v_t).determinant() < 0.0 { -1.0 } else { 1.0 };
    let correction = Matrix2::new(1.0, 0.0, 0.0, sign);
    let rotation = u * correction * v_t;
    let scale = (svd.singular_values[0] + sign * svd.singular_values[1]) / src_var;
    let translation = mu_dst - scale * rotation * mu_src;
    let theta = rotation[(1, 0)].atan2(rotation[(0, 0)]);
    Ok((scale, RigidTransform2::new(theta, translation.x, translation.y)))
}

/// Scores `map` against `truth`.
///
/// Clusters whose label equals a ground-truth id that is unique on both sides
/// (one truth landmark, one cluster) anchor the similarity fit. Clusters of
/// duplicated ids are then matched to the nearest same-id truth landmark in
/// the aligned frame and included in the mean. Coverage counts distinct truth
/// ids appearing as a cluster label.
pub fn positional_error(map: &SemanticLandmarkMap, truth: &GroundTruth) -> Result<EvalReport> {
    truth.validate()?;

    let mut truth_by_id: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (k, lm) in truth.landmarks.iter().enumerate() {
        truth_by_id.entry(lm.id.as_str()).or_default().push(k);
    }
    let mut clusters_by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (k, cluster) in map.clusters.iter().enumerate() {
        clusters_by_label.entry(cluster.label.as_str()).or_default().push(k);
    }

    let coverage = truth_by_id
        .keys()
        .filter(|id| clusters_by_label.contains_key(*id))
        .count();

    // Anchor pairs: id unique in truth, label unique among clusters.
    let mut src = Vec::new();
    let mut dst = Vec::new();
    for (id, truth_indices) in &truth_by_id {
        if truth_indices.len() != 1 {
            continue;
        }
        match clusters_by_label.get(id) {
            Some(cluster_indices) if cluster_indices.len() == 1 => {
                src.push(map.clusters[cluster_indices[0]].position);
                dst.push(truth.landmarks[truth_indices[0]].position);
            }
            _ => {}
        }
    }
    if src.len() < 2 {
        return Err(Error::Unmatchable(format!(
            "only {} uniquely-matchable landmark(s); at least 2 are needed to align the frames",
            src.len()
        )));
    }
    let (scale, transform) = umeyama_similarity(&src, &dst).map_err(|e| {
        Error::Unmatchable(format!("matched landmarks cannot anchor an alignment: {e}"))
    })?;

    let mut total_distance = 0.0;
    let mut matched_pairs = 0usize;
    for (label, cluster_indices) in &clusters_by_label {
        let Some(truth_indices) = truth_by_id.get(label) else {
            continue; // label absent from ground truth: unmatched, not scored
        };
        for &c in cluster_indices {
            let aligned = apply_similarity(scale, &transform, map.clusters[c].position);
            // Unique pairs reduce to their own counterpart; duplicated ids
            // take the nearest same-id truth landmark post-alignment.
            let nearest = truth_indices
                .iter()
                .map(|&t| aligned.distance(&truth.landmarks[t].position))
                .min_by(|a, b| a.partial_cmp(b).unwrap())
                .unwrap();
            total_distance += nearest;
            matched_pairs += 1;
        }
    }

    Ok(EvalReport {
        positional_error: total_distance / matched_pairs as f64,
        coverage,
        matched_pairs,
        scale,
        applied_transform: transform,
        cluster_count: map.clusters.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::{LandmarkCluster, SemanticLandmarkMap};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn points(raw: &[(f64, f64)]) -> Vec<Point2> {
        raw.iter().map(|&(x, y)| Point2::new(x, y)).collect()
    }

    fn residual(scale: f64, transform: &RigidTransform2, src: &[Point2], dst: &[Point2]) -> f64 {
        src.iter()
            .zip(dst)
            .map(|(a, b)| {
                let q = apply_similarity(scale, transform, *a);
                let d = q.distance(b);
                d * d
            })
            .sum()
    }

    /// Brute-force oracle: global grid over (θ, s) with the closed-form
    /// optimal translation per cell, then local grid refinement.
    fn brute_force_similarity(src: &[Point2], dst: &[Point2]) -> f64 {
        let n = src.len() as f64;
        let mean = |pts: &[Point2]| {
            let (sx, sy) = pts.iter().fold((0.0, 0.0), |(x, y), p| (x + p.x, y + p.y));
            (sx / n, sy / n)
        };
        let (mx_src, my_src) = mean(src);
        let (mx_dst, my_dst) = mean(dst);
        let eval = |theta: f64, s: f64| -> f64 {
            let (sin, cos) = theta.sin_cos();
            let tx = mx_dst - s * (cos * mx_src - sin * my_src);
            let ty = my_dst - s * (sin * mx_src + cos * my_src);
            residual(s, &RigidTransform2 { theta, tx, ty }, src, dst)
        };

        let mut best = (f64::INFINITY, 0.0, 1.0);
        for ti in 0..720 {
            let theta = -std::f64::consts::PI + ti as f64 * (2.0 * std::f64::consts::PI / 720.0);
            for si in 0..80 {
                let s = 0.2 * (25.0f64).powf(si as f64 / 79.0); // log grid over [0.2, 5]
                let r = eval(theta, s);
                if r < best.0 {
                    best = (r, theta, s);
                }
            }
        }
        let (mut span_theta, mut span_scale) = (0.02, 0.1);
        for _ in 0..9 {
            let (_, center_theta, center_scale) = best;
            for ti in -8i32..=8 {
                for si in -8i32..=8 {
                    let theta = center_theta + ti as f64 * span_theta / 8.0;
                    let s = (center_scale + si as f64 * span_scale / 8.0).max(1e-6);
                    let r = eval(theta, s);
                    if r < best.0 {
                        best = (r, theta, s);
                    }
                }
            }
            span_theta /= 6.0;
            span_scale /= 6.0;
        }
        best.0
    }

    #[test]
    fn identity_fit() {
        let src = points(&[(0.0, 0.0), (4.0, 0.0), (0.0, 3.0)]);
        let (scale, transform) = umeyama_similarity(&src, &src).unwrap();
        assert!((scale - 1.0).abs() < 1e-12);
        assert!(transform.theta.abs() < 1e-12);
        assert!(transform.tx.abs() < 1e-12 && transform.ty.abs() < 1e-12);
        assert!(residual(scale, &transform, &src, &src) < 1e-18);
    }

    #[test]
    fn recovers_constructed_similarity() {
        let src = points(&[(0.0, 0.0), (4.0, 0.0), (0.0, 3.0), (2.0, 2.0)]);
        let theta = std::f64::consts::FRAC_PI_3;
        let wanted = RigidTransform2::new(theta, 1.0, 1.0);
        let dst: Vec<Point2> = src.iter().map(|p| apply_similarity(2.0, &wanted, *p)).collect();
        let (scale, transform) = umeyama_similarity(&src, &dst).unwrap();
        assert!((scale - 2.0).abs() < 1e-9);
        assert!((transform.theta - theta).abs() < 1e-9);
        assert!((transform.tx - 1.0).abs() < 1e-9);
        assert!((transform.ty - 1.0).abs() < 1e-9);
    }

    #[test]
    fn matches_brute_force_oracle_on_random_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(707);
        for _ in 0..10 {
            let src: Vec<Point2> = (0..5)
                .map(|_| Point2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
                .collect();
            let motion = RigidTransform2::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            let true_scale = rng.random_range(0.5..2.0);
            // Noise keeps the optimum non-trivial.
            let dst: Vec<Point2> = src
                .iter()
                .map(|p| {
                    let q = apply_similarity(true_scale, &motion, *p);
                    Point2::new(
                        q.x + rng.random_range(-0.1..0.1),
                        q.y + rng.random_range(-0.1..0.1),
                    )
                })
                .collect();
            let (scale, transform) = umeyama_similarity(&src, &dst).unwrap();
            let closed_form = residual(scale, &transform, &src, &dst);
            let brute = brute_force_similarity(&src, &dst);
            assert!(
                (closed_form - brute).abs() < 1e-6,
                "residuals diverge: {closed_form} vs {brute}"
            );
            assert!(closed_form <= brute + 1e-9, "oracle beat the closed form");
        }
    }

    #[test]
    fn degenerate_inputs_rejected() {
        let one = points(&[(1.0, 1.0)]);
        assert!(umeyama_similarity(&one, &one).is_err());
        let coincident = points(&[(2.0, 2.0), (2.0, 2.0), (2.0, 2.0)]);
        let spread = points(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]);
        assert!(umeyama_similarity(&coincident, &spread).is_err());
        // Coincident *destination* is fine: scale collapses to 0.
        let (scale, _) = umeyama_similarity(&spread, &coincident).unwrap();
        assert!(scale.abs() < 1e-12);
        assert!(umeyama_similarity(&spread, &one).is_err());
    }

    fn simple_cluster(label: &str, x: f64, y: f64) -> LandmarkCluster {
        LandmarkCluster {
            member_indices: vec![],
            label: label.into(),
            position: Point2::new(x, y),
            notes: vec![],
        }
    }

    fn map_of(clusters: Vec<LandmarkCluster>) -> SemanticLandmarkMap {
        SemanticLandmarkMap { clusters, frame_note: String::new() }
    }

    fn truth_of(raw: &[(&str, f64, f64)]) -> GroundTruth {
        GroundTruth {
            landmarks: raw
                .iter()
                .map(|&(id, x, y)| TruthLandmark { id: id.into(), position: Point2::new(x, y) })
                .collect(),
        }
    }

    #[test]
    fn identical_map_scores_zero_error_full_coverage() {
        let truth = truth_of(&[("A", 0.0, 0.0), ("B", 4.0, 0.0), ("C", 0.0, 3.0)]);
        let map = map_of(vec![
            simple_cluster("A", 0.0, 0.0),
            simple_cluster("B", 4.0, 0.0),
            simple_cluster("C", 0.0, 3.0),
        ]);
        let report = positional_error(&map, &truth).unwrap();
        assert!(report.positional_error < 1e-9);
        assert_eq!(report.coverage, 3);
        assert_eq!(report.matched_pairs, 3);
        assert_eq!(report.cluster_count, 3);
        assert!((report.scale - 1.0).abs() < 1e-9);
    }

    #[test]
    fn similarity_transformed_map_scores_zero() {
        let truth = truth_of(&[("A", 0.0, 0.0), ("B", 4.0, 0.0), ("C", 0.0, 3.0)]);
        let warp = RigidTransform2::new(1.1, -3.0, 2.0);
        let map = map_of(
            truth
                .landmarks
                .iter()
                .map(|lm| {
                    let p = apply_similarity(1.7, &warp, lm.position);
                    simple_cluster(&lm.id, p.x, p.y)
                })
                .collect(),
        );
        let report = positional_error(&map, &truth).unwrap();
        assert!(report.positional_error < 1e-9, "{}", report.positional_error);
        assert!((report.scale - 1.0 / 1.7).abs() < 1e-9);
    }

    #[test]
    fn missing_landmarks_reduce_coverage_not_error() {
        let ids = ["A", "B", "C", "D", "E", "F", "G", "H", "I", "J"];
        let truth = truth_of(
            &ids.iter()
                .enumerate()
                .map(|(k, id)| (*id, k as f64, (k * k) as f64 * 0.1))
                .collect::<Vec<_>>(),
        );
        let map = map_of(
            truth.landmarks[..8]
                .iter()
                .map(|lm| simple_cluster(&lm.id, lm.position.x, lm.position.y))
                .collect(),
        );
        let report = positional_error(&map, &truth).unwrap();
        assert_eq!(report.coverage, 8);
        assert_eq!(report.matched_pairs, 8);
        assert!(report.positional_error < 1e-9);
    }

    #[test]
    fn duplicated_ids_match_nearest_after_alignment() {
        // Truth has two X's; the map found both, plus two unique anchors.
        let truth = truth_of(&[
            ("A", 0.0, 0.0),
            ("B", 10.0, 0.0),
            ("X", 2.0, 5.0),
            ("X", 8.0, 5.0),
        ]);
        let map = map_of(vec![
            simple_cluster("A", 0.0, 0.0),
            simple_cluster("B", 10.0, 0.0),
            simple_cluster("X", 2.3, 5.0), // 0.3 from the left X
            simple_cluster("X", 7.6, 5.0), // 0.4 from the right X
        ]);
        let report = positional_error(&map, &truth).unwrap();
        assert_eq!(report.matched_pairs, 4);
        // Anchors contribute ~0; duplicates contribute their nearest-distance.
        assert!((report.positional_error - (0.3 + 0.4) / 4.0).abs() < 1e-6);
        assert_eq!(report.coverage, 3, "A, B, X — distinct ids");
    }

    #[test]
    fn too_few_anchors_is_unmatchable() {
        let truth = truth_of(&[("A", 0.0, 0.0), ("B", 4.0, 0.0)]);
        let map = map_of(vec![simple_cluster("A", 0.0, 0.0), simple_cluster("Z", 1.0, 1.0)]);
        let err = positional_error(&map, &truth).unwrap_err();
        assert!(matches!(err, Error::Unmatchable(_)), "{err:?}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn coincident_anchors_are_unmatchable() {
        let truth = truth_of(&[("A", 0.0, 0.0), ("B", 4.0, 0.0)]);
        let map = map_of(vec![simple_cluster("A", 1.0, 1.0), simple_cluster("B", 1.0, 1.0)]);
        let err = positional_error(&map, &truth).unwrap_err();
        assert!(matches!(err, Error::Unmatchable(_)), "{err:?}");
    }

    #[test]
    fn error_is_invariant_under_similarity_of_the_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(808);
        for _ in 0..20 {
            let truth = truth_of(&[
                ("A", 0.0, 0.0),
                ("B", 6.0, 1.0),
                ("C", 2.0, 7.0),
                ("D", -3.0, 4.0),
            ]);
            let map = map_of(
                truth
                    .landmarks
                    .iter()
                    .map(|lm| {
                        simple_cluster(
                            &lm.id,
                            lm.position.x + rng.random_range(-0.5..0.5),
                            lm.position.y + rng.random_range(-0.5..0.5),
                        )
                    })
                    .collect(),
            );
            let base = positional_error(&map, &truth).unwrap();

            let warp = RigidTransform2::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            );
            let warp_scale = rng.random_range(0.3..3.0);
            let warped = map_of(
                map.clusters
                    .iter()
                    .map(|c| {
                        let p = apply_similarity(warp_scale, &warp, c.position);
                        simple_cluster(&c.label, p.x, p.y)
                    })
                    .collect(),
            );
            let moved = positional_error(&warped, &truth).unwrap();
            assert!(
                (base.positional_error - moved.positional_error).abs() < 1e-9,
                "{} vs {}",
                base.positional_error,
                moved.positional_error
            );
        }
    }

    #[test]
    fn error_is_the_plain_mean_of_pair_distances() {
        let truth = truth_of(&[("A", 0.0, 0.0), ("B", 10.0, 0.0), ("C", 0.0, 10.0)]);
        // Identity-aligned by construction (anchors exact), C displaced by 0.9.
        let map = map_of(vec![
            simple_cluster("A", 0.0, 0.0),
            simple_cluster("B", 10.0, 0.0),
            simple_cluster("C", 0.9, 10.0),
        ]);
        let report = positional_error(&map, &truth).unwrap();
        let expected = {
            let d = [
                apply_similarity(report.scale, &report.applied_transform, map.clusters[0].position)
                    .distance(&truth.landmarks[0].position),
                apply_similarity(report.scale, &report.applied_transform, map.clusters[1].position)
                    .distance(&truth.landmarks[1].position),
                apply_similarity(report.scale, &report.applied_transform, map.clusters[2].position)
                    .distance(&truth.landmarks[2].position),
            ];
            d.iter().sum::<f64>() / 3.0
        };
        assert!((report.positional_error - expected).abs() < 1e-12);
    }

    #[test]
    fn coverage_is_monotone_and_bounded() {
        let truth = truth_of(&[("A", 0.0, 0.0), ("B", 4.0, 0.0), ("C", 0.0, 3.0)]);
        let mut clusters = vec![simple_cluster("A", 0.0, 0.0), simple_cluster("B", 4.0, 0.0)];
        let base = positional_error(&map_of(clusters.clone()), &truth).unwrap();
        assert_eq!(base.coverage, 2);

        clusters.push(simple_cluster("Z", 9.0, 9.0)); // unknown id: no change
        let with_unknown = positional_error(&map_of(clusters.clone()), &truth).unwrap();
        assert_eq!(with_unknown.coverage, 2);

        clusters.push(simple_cluster("C", 0.0, 3.1));
        let with_new = positional_error(&map_of(clusters.clone()), &truth).unwrap();
        assert_eq!(with_new.coverage, 3);
        assert!(with_new.coverage <= truth.landmarks.len());
    }
}
