//! Dataset quality and diversity scores, k-means reduction and projection
//! export.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize, Serializer};

use crate::backends::Projector;
use crate::{Error, Result};

const PROB_TOLERANCE: f64 = 1e-6;

/// One class posterior `p(y | x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbRow(Vec<f64>);

impl ProbRow {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::invalid("probability row is empty"));
        }
        if probabilities
            .iter()
            .any(|p| !p.is_finite() || !(0.0..=1.0).contains(p))
        {
            return Err(Error::invalid("probabilities must lie in [0, 1]"));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > PROB_TOLERANCE {
            return Err(Error::invalid(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self(probabilities))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ProbRow {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ProbRow> for Vec<f64> {
    fn from(r: ProbRow) -> Self {
        r.0
    }
}

/// `exp(mean_x KL(p(y|x) ‖ p(y)))` over the full set, no splits.
pub fn inception_score(rows: &[ProbRow]) -> Result<f64> {
    let Some(first) = rows.first() else {
        return Err(Error::invalid("inception score needs at least one row"));
    };
    let classes = first.0.len();
    if rows.iter().any(|r| r.0.len() != classes) {
        return Err(Error::invalid("probability rows differ in class count"));
    }
    let n = rows.len() as f64;
    let mut marginal = vec![0.0; classes];
    for r in rows {
        for (m, p) in marginal.iter_mut().zip(&r.0) {
            *m += p / n;
        }
    }
    let mean_kl = rows
        .iter()
        .map(|r| {
            r.0.iter()
                .zip(&marginal)
                .filter(|(&p, _)| p > 0.0)
                .map(|(&p, &m)| p * (p / m).ln())
                .sum::<f64>()
        })
        .sum::<f64>()
        / n;
    Ok(mean_kl.max(0.0).exp())
}

/// Mean absolute difference between two perceptual feature vectors.
pub fn perceptual_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid(format!(
            "perceptual features of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

/// Mean of `distance` over all unordered member pairs.
pub fn intra_cluster_distance_with<T>(
    members: &[T],
    distance: impl Fn(&T, &T) -> Result<f64>,
) -> Result<f64> {
    if members.len() < 2 {
        return Err(Error::UndefinedDistance(members.len()));
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..members.len() {
        for j in i + 1..members.len() {
            sum += distance(&members[i], &members[j])?;
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

pub fn intra_cluster_distance(features: &[Vec<f64>]) -> Result<f64> {
    intra_cluster_distance_with(features, |a, b| perceptual_distance(a, b))
}

/// Mean of per-cluster distances.
pub fn dataset_il(cluster_ils: &[f64]) -> Result<f64> {
    if cluster_ils.is_empty() {
        return Err(Error::invalid("no clusters with at least two members"));
    }
    Ok(cluster_ils.iter().sum::<f64>() / cluster_ils.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Inertia after seeding and after each Lloyd iteration.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeans {
    pub fn inertia(&self) -> f64 {
        *self.inertia_history.last().expect("history is never empty")
    }
}

pub const KMEANS_MAX_ITER: usize = 100;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations until assignments stop
/// changing or [`KMEANS_MAX_ITER`] is reached.
pub fn kmeans_reduce(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Result<KMeans> {
    if k == 0 || points.len() < k {
        return Err(Error::invalid(format!(
            "k-means needs 1 <= k <= N, got k={k}, N={}",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::invalid("points differ in dimension"));
    }

    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&d| d > 0.0).expect("total > 0");
            }
            chosen
        } else {
            // Every remaining point duplicates a centroid.
            rng.random_range(0..points.len())
        };
        centroids.push(points[idx].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }

    let assign = |centroids: &[Vec<f64>]| -> (Vec<usize>, f64) {
        let mut inertia = 0.0;
        let a = points
            .iter()
            .map(|p| {
                let (i, d) = nearest(p, centroids);
                inertia += d;
                i
            })
            .collect();
        (a, inertia)
    };
    let (mut assignments, inertia) = assign(&centroids);
    let mut history = vec![inertia];
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITER {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for (c, (s, &n)) in centroids.iter_mut().zip(sums.into_iter().zip(&counts)) {
            if n > 0 {
                *c = s.into_iter().map(|v| v / n as f64).collect();
            }
        }
        let (next, inertia) = assign(&centroids);
        history.push(inertia);
        let stable = next == assignments;
        assignments = next;
        if stable {
            break;
        }
    }
    Ok(KMeans {
        centroids,
        assignments,
        inertia_history: history,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub mean: [f64; 2],
    /// Row-major 2×2 sample covariance.
    pub covariance: [[f64; 2]; 2],
}

fn ellipse(points: &[[f64; 2]]) -> Ellipse {
    let n = points.len() as f64;
    let mean = [
        points.iter().map(|p| p[0]).sum::<f64>() / n,
        points.iter().map(|p| p[1]).sum::<f64>() / n,
    ];
    let denom = (n - 1.0).max(1.0);
    let mut cov = [[0.0; 2]; 2];
    for p in points {
        let d = [p[0] - mean[0], p[1] - mean[1]];
        for i in 0..2 {
            for j in 0..2 {
                cov[i][j] += d[i] * d[j] / denom;
            }
        }
    }
    Ellipse {
        mean,
        covariance: cov,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub rows: Vec<(String, [f64; 2])>,
    pub ellipses: BTreeMap<String, Ellipse>,
}

impl Projection {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,x,y\n");
        for (g, [x, y]) in &self.rows {
            let _ = writeln!(out, "{g},{x},{y}");
        }
        out
    }
}

/// Projects every group's features with one shared projector call and
/// optionally reduces each group to `reduce_to` k-means centroids.
pub fn export_projection(
    groups: &[(String, Vec<Vec<f64>>)],
    projector: &dyn Projector,
    reduce_to: Option<usize>,
    rng: &mut impl Rng,
) -> Result<Projection> {
    for (name, _) in groups {
        if name.contains([',', '\n', '"']) {
            return Err(Error::invalid(format!("group label {name:?} is not CSV-safe")));
        }
    }
    let all: Vec<Vec<f64>> = groups.iter().flat_map(|(_, f)| f.iter().cloned()).collect();
    let projected = projector
        .project(&all)
        .map_err(|e| e.at_stage("projection"))?;
    if projected.len() != all.len() {
        return Err(Error::invalid("projector returned the wrong number of points"));
    }
    let mut rows = Vec::new();
    let mut ellipses = BTreeMap::new();
    let mut offset = 0;
    for (name, feats) in groups {
        let pts: Vec<[f64; 2]> = projected[offset..offset + feats.len()].to_vec();
        offset += feats.len();
        let pts = match reduce_to {
            Some(k) if pts.len() > k => {
                let as_vec: Vec<Vec<f64>> = pts.iter().map(|p| p.to_vec()).collect();
                kmeans_reduce(&as_vec, k, rng)?
                    .centroids
                    .into_iter()
                    .map(|c| [c[0], c[1]])
                    .collect()
            }
            _ => pts,
        };
        if !pts.is_empty() {
            ellipses.insert(name.clone(), ellipse(&pts));
        }
        rows.extend(pts.into_iter().map(|p| (name.clone(), p)));
    }
    Ok(Projection { rows, ellipses })
}

fn two_decimals<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64((v * 100.0).round() / 100.0)
}

fn two_decimals_opt<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => two_decimals(v, s),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub object_name: String,
    pub images: usize,
    #[serde(serialize_with = "two_decimals")]
    pub is: f64,
    /// Absent when no cluster has two members.
    #[serde(serialize_with = "two_decimals_opt")]
    pub il: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// How IL clusters were formed.
    pub cluster_definition: String,
    pub categories: Vec<CategoryMetrics>,
    #[serde(serialize_with = "two_decimals")]
    pub mean_is: f64,
    #[serde(serialize_with = "two_decimals_opt")]
    pub mean_il: Option<f64>,
}

impl MetricReport {
    pub fn from_categories(categories: Vec<CategoryMetrics>) -> Result<Self> {
        if categories.is_empty() {
            return Err(Error::invalid("no categories to report"));
        }
        let mean_is = categories.iter().map(|c| c.is).sum::<f64>() / categories.len() as f64;
        let ils: Vec<f64> = categories.iter().filter_map(|c| c.il).collect();
        Ok(Self {
            cluster_definition: "object_name+description".into(),
            mean_is,
            mean_il: dataset_il(&ils).ok(),
            categories,
        })
    }
}
