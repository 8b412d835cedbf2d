//! Lloyd's k-means with k-means++ seeding and a single-point transfer pass
//! (Hartigan) once Lloyd reaches its fixpoint.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SemanticsError;

pub const DEFAULT_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub level_k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub seed: u64,
    pub inertia: f64,
}

impl ClusterModel {
    /// Index of the nearest centroid; ties go to the lowest index.
    pub fn assign(&self, point: &[f64]) -> usize {
        nearest(&self.centroids, point).0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmeansResult {
    pub model: ClusterModel,
    pub assignments: Vec<usize>,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>], p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, p);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn assign_all(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let a = points
        .iter()
        .map(|p| {
            let (i, d) = nearest(centroids, p);
            inertia += d;
            i
        })
        .collect();
    (a, inertia)
}

pub(crate) fn check_points(points: &[Vec<f64>]) -> Result<usize, SemanticsError> {
    let dim = points.first().ok_or(SemanticsError::Empty)?.len();
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(SemanticsError::DimensionMismatch { expected: dim, found: p.len() });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(SemanticsError::NonFinite { index: i });
        }
    }
    Ok(dim)
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.gen_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let idx = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            // All remaining mass is zero: every point coincides with a centroid.
            Err(_) => rng.gen_range(0..n),
        };
        let c = points[idx].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Means of the assigned points; an empty cluster takes the point farthest
/// from its current centroid (each point used at most once per step).
fn update(points: &[Vec<f64>], assignments: &[usize], centroids: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = centroids.len();
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p) {
            *s += x;
        }
    }
    let mut used = vec![false; points.len()];
    let mut out = Vec::with_capacity(k);
    for c in 0..k {
        if counts[c] > 0 {
            out.push(sums[c].iter().map(|s| s / counts[c] as f64).collect());
            continue;
        }
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            let d = sq_dist(p, &centroids[assignments[i]]);
            if !used[i] && d > far_d {
                far = Some(i);
                far_d = d;
            }
        }
        match far {
            Some(i) => {
                used[i] = true;
                out.push(points[i].clone());
            }
            None => out.push(centroids[c].clone()),
        }
    }
    out
}

/// Moves single points between clusters while that strictly lowers the
/// inertia. Returns whether any point moved.
fn transfer_pass(points: &[Vec<f64>], assignments: &mut [usize], k: usize) -> bool {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments.iter()) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p) {
            *s += x;
        }
    }
    let mean = |s: &[f64], n: usize| s.iter().map(|v| v / n as f64).collect::<Vec<_>>();
    let mut moved = false;
    for (i, p) in points.iter().enumerate() {
        let a = assignments[i];
        if counts[a] < 2 {
            continue;
        }
        let remove = counts[a] as f64 / (counts[a] - 1) as f64 * sq_dist(p, &mean(&sums[a], counts[a]));
        let mut best: Option<(usize, f64)> = None;
        for b in (0..k).filter(|&b| b != a) {
            let add = if counts[b] == 0 {
                0.0
            } else {
                counts[b] as f64 / (counts[b] + 1) as f64 * sq_dist(p, &mean(&sums[b], counts[b]))
            };
            if best.is_none_or(|(_, d)| add < d) {
                best = Some((b, add));
            }
        }
        if let Some((b, add)) = best {
            // Relative margin keeps rounding noise from cycling points.
            if add < remove * (1.0 - 1e-12) {
                for (s, x) in sums[a].iter_mut().zip(p) {
                    *s -= x;
                }
                for (s, x) in sums[b].iter_mut().zip(p) {
                    *s += x;
                }
                counts[a] -= 1;
                counts[b] += 1;
                assignments[i] = b;
                moved = true;
            }
        }
    }
    moved
}

/// Clusters `points` into `min(k, n)` groups.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iters: usize) -> Result<KmeansResult, SemanticsError> {
    check_points(points)?;
    if k == 0 {
        return Err(SemanticsError::Config("k must be at least 1".into()));
    }
    let k = k.min(points.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let (mut assignments, mut inertia) = assign_all(points, &centroids);
    let mut history = vec![inertia];
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let next = update(points, &assignments, &centroids);
        let (next_assign, next_inertia) = assign_all(points, &next);
        centroids = next;
        inertia = next_inertia;
        history.push(inertia);
        let mut done = next_assign == assignments;
        assignments = next_assign;
        if done && iterations < max_iters {
            let mut moved = assignments.clone();
            if transfer_pass(points, &mut moved, k) {
                // Centroids of the improved partition; Lloyd resumes from there.
                centroids = update(points, &moved, &centroids);
                assignments = moved;
                done = false;
            }
        }
        if done {
            break;
        }
    }
    Ok(KmeansResult {
        model: ClusterModel { level_k: k, centroids, seed, inertia },
        assignments,
        inertia_history: history,
        iterations,
    })
}

/// Lowest-inertia run over `seeds`; ties keep the earlier seed.
pub fn kmeans_best_of(
    points: &[Vec<f64>],
    k: usize,
    seeds: impl IntoIterator<Item = u64>,
    max_iters: usize,
) -> Result<KmeansResult, SemanticsError> {
    let mut best: Option<KmeansResult> = None;
    for s in seeds {
        let r = kmeans(points, k, s, max_iters)?;
        if best.as_ref().is_none_or(|b| r.model.inertia < b.model.inertia) {
            best = Some(r);
        }
    }
    best.ok_or_else(|| SemanticsError::Config("no seeds given".into()))
}
