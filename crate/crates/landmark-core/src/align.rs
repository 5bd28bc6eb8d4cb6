//! Relatedness-weighted rigid alignment of recordings into one shared frame.
//!
//! Minimizes  L = Σ_i Σ_j S[i][j] ‖q_i − q_j‖²  over one rigid transform per
//! recording, where q_i = R(θ_Ω) p_i + t_Ω  for observation i of recording Ω.
//! The first recording is pinned to the identity (gauge fixing — the objective
//! is invariant under a common rigid motion, so some frame must be chosen);
//! the rest are found by gradient descent with backtracking line search and
//! random restarts.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{normalize_angle, Observation, Point2, RigidTransform2};
use crate::relatedness::RelatednessMatrix;
use crate::{seeding, Error, Result};

/// Backtracking gives up once the trial step shrinks below this.
const STEP_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct AlignmentProblem {
    pub observations: Vec<Observation>,
    pub relatedness: RelatednessMatrix,
    /// Distinct recording ids in order; the first is the gauge recording.
    pub recording_ids: Vec<String>,
}

impl AlignmentProblem {
    /// Builds a problem, deriving `recording_ids` in first-appearance order.
    pub fn new(observations: Vec<Observation>, relatedness: RelatednessMatrix) -> Result<Self> {
        let mut recording_ids: Vec<String> = Vec::new();
        for obs in &observations {
            if !recording_ids.contains(&obs.recording_id) {
                recording_ids.push(obs.recording_id.clone());
            }
        }
        let problem = Self { observations, relatedness, recording_ids };
        problem.validate()?;
        Ok(problem)
    }

    pub fn validate(&self) -> Result<()> {
        if self.observations.is_empty() {
            return Err(Error::InvalidInput("alignment needs at least one observation".into()));
        }
        if self.relatedness.n() != self.observations.len() {
            return Err(Error::InvalidInput(format!(
                "relatedness is {}×{0} but there are {} observations",
                self.relatedness.n(),
                self.observations.len()
            )));
        }
        self.relatedness.validate()?;
        let mut seen = std::collections::BTreeSet::new();
        for id in &self.recording_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidInput(format!("recording id '{id}' listed twice")));
            }
        }
        for obs in &self.observations {
            if !seen.contains(obs.recording_id.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "observation references unknown recording '{}'",
                    obs.recording_id
                )));
            }
            if !obs.position.is_finite() {
                return Err(Error::InvalidInput("non-finite observation position".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Stop when the relative objective decrease falls below this.
    pub rel_tol: f64,
    /// Total descent runs; run 0 starts from identity, the rest from random poses.
    pub restarts: usize,
    /// Random restarts draw translations from [−scale, scale]².
    pub restart_translation_scale: f64,
    pub seed: u64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            max_iters: 10_000,
            rel_tol: 1e-8,
            restarts: 8,
            restart_translation_scale: 5.0,
            seed: 0,
        }
    }
}

impl AlignmentConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.rel_tol > 0.0) {
            return Err(Error::InvalidInput(
                "learning_rate and rel_tol must be strictly positive".into(),
            ));
        }
        if self.restarts < 1 || self.max_iters < 1 {
            return Err(Error::InvalidInput("restarts and max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub transforms: BTreeMap<String, RigidTransform2>,
    /// Objective value at the returned transforms.
    pub objective: f64,
    /// Accepted descent iterations in the winning restart.
    pub iterations: usize,
    pub restart_index: usize,
    /// True when no cross-recording relatedness existed, so the identity
    /// transforms were returned unoptimized.
    pub degenerate: bool,
}

/// Index-based view of a problem, shared by objective/gradient/optimize.
struct Evaluator {
    points: Vec<Point2>,
    /// Observation index → recording index (into `recording_ids`).
    rec_of: Vec<usize>,
    /// Nonzero upper-triangle relatedness entries (i < j).
    pairs: Vec<(u32, u32, f64)>,
    recordings: usize,
}

impl Evaluator {
    fn new(problem: &AlignmentProblem) -> Self {
        let index: BTreeMap<&str, usize> = problem
            .recording_ids
            .iter()
            .enumerate()
            .map(|(k, id)| (id.as_str(), k))
            .collect();
        Self {
            points: problem.observations.iter().map(|o| o.position).collect(),
            rec_of: problem
                .observations
                .iter()
                .map(|o| index[o.recording_id.as_str()])
                .collect(),
            pairs: problem
                .relatedness
                .nonzero_pairs()
                .into_iter()
                .map(|(i, j, s)| (i as u32, j as u32, s))
                .collect(),
            recordings: problem.recording_ids.len(),
        }
    }

    fn has_cross_recording_pair(&self) -> bool {
        self.pairs
            .iter()
            .any(|&(i, j, _)| self.rec_of[i as usize] != self.rec_of[j as usize])
    }

    /// q_i = R(θ) p_i + t for every observation, written into `q`.
    fn transform_points(&self, transforms: &[RigidTransform2], q: &mut Vec<Point2>) {
        let trig: Vec<(f64, f64)> = transforms.iter().map(|t| t.theta.sin_cos()).collect();
        q.clear();
        q.extend(self.points.iter().zip(&self.rec_of).map(|(p, &r)| {
            let (sin, cos) = trig[r];
            let t = &transforms[r];
            Point2::new(cos * p.x - sin * p.y + t.tx, sin * p.x + cos * p.y + t.ty)
        }));
    }

    /// L = 2 Σ_{i<j} S[i][j] ‖q_i − q_j‖²  (the ordered double sum folded).
    fn objective_of(&self, q: &[Point2]) -> f64 {
        let mut total = 0.0;
        for &(i, j, s) in &self.pairs {
            let a = &q[i as usize];
            let b = &q[j as usize];
            let dx = a.x - b.x;
            let dy = a.y - b.y;
            total += s * (dx * dx + dy * dy);
        }
        2.0 * total
    }

    fn objective(&self, transforms: &[RigidTransform2], scratch: &mut Vec<Point2>) -> f64 {
        self.transform_points(transforms, scratch);
        self.objective_of(scratch)
    }

    /// Analytic gradient per recording as (dL/dθ, dL/dtx, dL/dty).
    ///
    /// Each unordered pair term 2·S‖q_i − q_j‖² contributes
    /// 4·S·(q_i − q_j)ᵀ (∂q_i/∂param − ∂q_j/∂param), with ∂q/∂t the identity
    /// columns and ∂q/∂θ = R′(θ) p.
    fn gradient(
        &self,
        transforms: &[RigidTransform2],
        q: &mut Vec<Point2>,
        grad: &mut Vec<(f64, f64, f64)>,
    ) {
        self.transform_points(transforms, q);
        grad.clear();
        grad.resize(self.recordings, (0.0, 0.0, 0.0));
        let trig: Vec<(f64, f64)> = transforms.iter().map(|t| t.theta.sin_cos()).collect();
        for &(i, j, s) in &self.pairs {
            let (i, j) = (i as usize, j as usize);
            let dx = q[i].x - q[j].x;
            let dy = q[i].y - q[j].y;
            let f = 4.0 * s;
            let (a, b) = (self.rec_of[i], self.rec_of[j]);

            let (sin_a, cos_a) = trig[a];
            let p = &self.points[i];
            // R′(θ) p = (−sinθ·px − cosθ·py, cosθ·px − sinθ·py)
            let ga = &mut grad[a];
            ga.0 += f * (dx * (-sin_a * p.x - cos_a * p.y) + dy * (cos_a * p.x - sin_a * p.y));
            ga.1 += f * dx;
            ga.2 += f * dy;

            let (sin_b, cos_b) = trig[b];
            let p = &self.points[j];
            let gb = &mut grad[b];
            gb.0 -= f * (dx * (-sin_b * p.x - cos_b * p.y) + dy * (cos_b * p.x - sin_b * p.y));
            gb.1 -= f * dx;
            gb.2 -= f * dy;
        }
    }
}

fn transforms_vec(
    problem: &AlignmentProblem,
    transforms: &BTreeMap<String, RigidTransform2>,
) -> Result<Vec<RigidTransform2>> {
    problem
        .recording_ids
        .iter()
        .map(|id| {
            transforms.get(id).copied().ok_or_else(|| {
                Error::InvalidInput(format!("no transform supplied for recording '{id}'"))
            })
        })
        .collect()
}

/// The alignment objective at the given per-recording transforms.
pub fn objective(
    problem: &AlignmentProblem,
    transforms: &BTreeMap<String, RigidTransform2>,
) -> Result<f64> {
    problem.validate()?;
    let vec = transforms_vec(problem, transforms)?;
    let evaluator = Evaluator::new(problem);
    let mut scratch = Vec::new();
    Ok(evaluator.objective(&vec, &mut scratch))
}

/// The analytic gradient per recording as (dL/dθ, dL/dtx, dL/dty).
///
/// The gauge recording's gradient is included here; `optimize` zeroes it
/// before every update step.
pub fn gradient(
    problem: &AlignmentProblem,
    transforms: &BTreeMap<String, RigidTransform2>,
) -> Result<BTreeMap<String, (f64, f64, f64)>> {
    problem.validate()?;
    let vec = transforms_vec(problem, transforms)?;
    let evaluator = Evaluator::new(problem);
    let mut q = Vec::new();
    let mut grad = Vec::new();
    evaluator.gradient(&vec, &mut q, &mut grad);
    Ok(problem
        .recording_ids
        .iter()
        .cloned()
        .zip(grad.iter().copied())
        .collect())
}

/// One gradient-descent run from `start`; returns (transforms, objective,
/// accepted iterations). Calls `on_accept(objective)` after every accepted step.
fn descend(
    evaluator: &Evaluator,
    start: Vec<RigidTransform2>,
    config: &AlignmentConfig,
    on_accept: &mut dyn FnMut(f64),
) -> (Vec<RigidTransform2>, f64, usize) {
    let mut current = start;
    let mut q = Vec::new();
    let mut grad = Vec::new();
    let mut candidate = current.clone();
    let mut objective = evaluator.objective(&current, &mut q);

    for iteration in 1..=config.max_iters {
        evaluator.gradient(&current, &mut q, &mut grad);
        grad[0] = (0.0, 0.0, 0.0); // gauge stays pinned
        if grad.iter().all(|g| g.0 == 0.0 && g.1 == 0.0 && g.2 == 0.0) {
            return (current, objective, iteration - 1);
        }

        // Backtracking: halve the step until the objective does not increase.
        let mut step = config.learning_rate;
        loop {
            for (k, t) in current.iter().enumerate() {
                let g = grad[k];
                candidate[k] = RigidTransform2 {
                    theta: normalize_angle(t.theta - step * g.0),
                    tx: t.tx - step * g.1,
                    ty: t.ty - step * g.2,
                };
            }
            let trial = evaluator.objective(&candidate, &mut q);
            if trial <= objective {
                let relative_drop = if objective > 0.0 {
                    (objective - trial) / objective
                } else {
                    0.0
                };
                std::mem::swap(&mut current, &mut candidate);
                objective = trial;
                on_accept(objective);
                if relative_drop < config.rel_tol {
                    return (current, objective, iteration);
                }
                break;
            }
            step /= 2.0;
            if step < STEP_FLOOR {
                // No descent direction at representable step sizes.
                return (current, objective, iteration - 1);
            }
        }
    }
    (current, objective, config.max_iters)
}

/// Minimizes the objective over per-recording rigid transforms.
///
/// Restart 0 starts at the identity; restarts 1.. draw θ ~ U[−π, π) and
/// t ~ U[−scale, scale]² per non-gauge recording from a stream derived from
/// (seed, restart index). The restart with the smallest final objective wins;
/// ties go to the lowest restart index.
pub fn optimize(problem: &AlignmentProblem, config: &AlignmentConfig) -> Result<AlignmentResult> {
    optimize_observed(problem, config, &mut |_, _| {})
}

/// `optimize` with a per-acceptance hook `(restart_index, objective)`;
/// used by tests to check descent monotonicity.
#[doc(hidden)]
pub fn optimize_observed(
    problem: &AlignmentProblem,
    config: &AlignmentConfig,
    on_accept: &mut dyn FnMut(usize, f64),
) -> Result<AlignmentResult> {
    problem.validate()?;
    config.validate()?;
    let evaluator = Evaluator::new(problem);
    let identity = vec![RigidTransform2::identity(); evaluator.recordings];

    let pack = |transforms: &[RigidTransform2]| -> BTreeMap<String, RigidTransform2> {
        problem
            .recording_ids
            .iter()
            .cloned()
            .zip(transforms.iter().copied())
            .collect()
    };

    if evaluator.recordings == 1 {
        let mut scratch = Vec::new();
        let objective = evaluator.objective(&identity, &mut scratch);
        return Ok(AlignmentResult {
            transforms: pack(&identity),
            objective,
            iterations: 0,
            restart_index: 0,
            degenerate: false,
        });
    }
    if !evaluator.has_cross_recording_pair() {
        let mut scratch = Vec::new();
        let objective = evaluator.objective(&identity, &mut scratch);
        return Ok(AlignmentResult {
            transforms: pack(&identity),
            objective,
            iterations: 0,
            restart_index: 0,
            degenerate: true,
        });
    }

    let mut best: Option<(Vec<RigidTransform2>, f64, usize, usize)> = None;
    for restart in 0..config.restarts {
        let start = if restart == 0 {
            identity.clone()
        } else {
            let mut rng = seeding::rng_indexed("align/restart", config.seed, restart as u64);
            let scale = config.restart_translation_scale;
            std::iter::once(RigidTransform2::identity())
                .chain((1..evaluator.recordings).map(|_| {
                    RigidTransform2::new(
                        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
                        rng.random_range(-scale..=scale),
                        rng.random_range(-scale..=scale),
                    )
                }))
                .collect()
        };
        let (transforms, objective, iterations) =
            descend(&evaluator, start, config, &mut |obj| on_accept(restart, obj));
        let improved = match &best {
            None => true,
            Some((_, best_obj, _, _)) => objective < *best_obj,
        };
        if improved {
            best = Some((transforms, objective, iterations, restart));
        }
    }
    let (transforms, objective, iterations, restart_index) = best.unwrap();
    Ok(AlignmentResult {
        transforms: pack(&transforms),
        objective,
        iterations,
        restart_index,
        degenerate: false,
    })
}
