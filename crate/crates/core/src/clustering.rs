//! K-means over encodings, representative extraction and the mean/median
//! angle baselines.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angle_opt::{AngleDatabase, AngleRecord};
use crate::error::{Error, Result};
use crate::features::{validate_collection, Encoding, EncodingSource, Scaler};
use crate::qaoa_sim::AngleVector;
use crate::rng::{derive_seed, rng_from_seed};

pub const KMEANS_RESTARTS: usize = 10;
pub const KMEANS_MAX_ITER: usize = 300;
pub const KMEANS_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RepresentativeRule {
    Centroid,
    ClosestPoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AggregateStat {
    Mean,
    Median,
}

/// Raw K-means output over plain points.
#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Within-cluster sum of squares of an explicit assignment.
pub fn inertia(points: &[Vec<f64>], centroids: &[Vec<f64>], labels: &[usize]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum()
}

fn kmeans_plus_plus<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut chosen = vec![rng.random_range(0..points.len())];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| sq_dist(p, &points[chosen[0]]))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            pick.expect("positive total weight")
        } else {
            // every remaining point coincides with a chosen center
            (0..points.len())
                .find(|i| !chosen.contains(i))
                .expect("k <= number of points")
        };
        chosen.push(next);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

fn assign(points: &[Vec<f64>], centroids: &mut [Vec<f64>], labels: &mut [usize]) {
    let k = centroids.len();
    let mut dist = vec![0.0; points.len()];
    for (i, p) in points.iter().enumerate() {
        let (c, d) = nearest(p, centroids);
        labels[i] = c;
        dist[i] = d;
    }
    // empty clusters take the point farthest from its centroid
    loop {
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            break;
        };
        let far = (0..points.len())
            .filter(|&i| counts[labels[i]] > 1)
            .fold(None, |acc: Option<usize>, i| match acc {
                Some(b) if dist[b] >= dist[i] => Some(b),
                _ => Some(i),
            })
            .expect("k <= number of points");
        labels[far] = empty;
        dist[far] = 0.0;
        centroids[empty] = points[far].clone();
    }
}

fn update(points: &[Vec<f64>], labels: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        s.iter_mut().for_each(|v| *v /= c as f64);
    }
    sums
}

fn lloyd(points: &[Vec<f64>], k: usize, seed: u64) -> KMeans {
    let dim = points[0].len();
    let mut rng = rng_from_seed(seed);
    let mut centroids = kmeans_plus_plus(points, k, &mut rng);
    let mut labels = vec![0; points.len()];
    let mut previous = f64::INFINITY;
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITER {
        iterations += 1;
        assign(points, &mut centroids, &mut labels);
        let assigned = inertia(points, &centroids, &labels);
        let updated = update(points, &labels, k, dim);
        let shift = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        let current = inertia(points, &centroids, &labels);
        debug_assert!(
            assigned <= previous * (1.0 + 1e-12) + 1e-12
                && current <= assigned * (1.0 + 1e-12) + 1e-12,
            "inertia increased: {previous} -> {assigned} -> {current}"
        );
        previous = current;
        if shift < KMEANS_TOL {
            break;
        }
    }
    assign(points, &mut centroids, &mut labels);
    let inertia = inertia(points, &centroids, &labels);
    KMeans {
        centroids,
        labels,
        inertia,
        iterations,
    }
}

/// Best of [`KMEANS_RESTARTS`] k-means++/Lloyd runs by inertia (ties go
/// to the earliest restart).
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeans> {
    if k == 0 || k > points.len() {
        return Err(Error::Parameter(format!(
            "k = {k} needs 1 <= k <= {} points",
            points.len()
        )));
    }
    let runs: Vec<KMeans> = (0..KMEANS_RESTARTS as u64)
        .into_par_iter()
        .map(|r| lloyd(points, k, derive_seed(seed, &[r])))
        .collect();
    Ok(runs
        .into_iter()
        .reduce(|best, r| if r.inertia < best.inertia { r } else { best })
        .expect("at least one restart"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub source: EncodingSource,
    /// Centroids in the (possibly standardized) clustering space.
    pub centroids: Vec<Vec<f64>>,
    pub representative_rule: RepresentativeRule,
    pub assignments: BTreeMap<String, usize>,
    pub inertia: f64,
    pub seed: u64,
    /// Training instance nearest to each centroid.
    pub nearest: Vec<String>,
    #[serde(default)]
    pub scaler: Option<Scaler>,
}

/// Fits K-means on `encodings`, standardizing first when `standardize`.
pub fn kmeans_fit(
    encodings: &[Encoding],
    k: usize,
    seed: u64,
    rule: RepresentativeRule,
    standardize: bool,
) -> Result<ClusterModel> {
    let (source, _) = validate_collection(encodings)?;
    if rule == RepresentativeRule::Centroid && source != EncodingSource::AngleValues {
        return Err(Error::Contract(format!(
            "centroid representatives need angle-valued encodings, got {source:?}"
        )));
    }
    let scaler = if standardize {
        Some(Scaler::fit(encodings)?)
    } else {
        None
    };
    let points: Vec<Vec<f64>> = match &scaler {
        Some(s) => encodings
            .iter()
            .map(|e| s.transform(e).map(|t| t.vector))
            .collect::<Result<_>>()?,
        None => encodings.iter().map(|e| e.vector.clone()).collect(),
    };
    let fit = kmeans(&points, k, seed)?;
    let nearest = fit
        .centroids
        .iter()
        .map(|c| {
            let (i, _) = nearest(c, &points);
            encodings[i].instance_id.clone()
        })
        .collect();
    let assignments = encodings
        .iter()
        .zip(&fit.labels)
        .map(|(e, &l)| (e.instance_id.clone(), l))
        .collect();
    Ok(ClusterModel {
        k,
        source,
        centroids: fit.centroids,
        representative_rule: rule,
        assignments,
        inertia: fit.inertia,
        seed,
        nearest,
        scaler,
    })
}

/// Standardization policy: angle values are clustered raw, every other
/// source is z-scored.
pub fn default_standardize(source: EncodingSource) -> bool {
    source != EncodingSource::AngleValues
}

/// One angle vector per cluster at depth `p`.
pub fn representatives(
    model: &ClusterModel,
    db: &AngleDatabase,
    p: usize,
) -> Result<Vec<AngleVector>> {
    match model.representative_rule {
        RepresentativeRule::ClosestPoint => model
            .nearest
            .iter()
            .map(|id| {
                db.get(id, p).map(|r| r.angles.clone()).ok_or_else(|| {
                    Error::Parameter(format!("angle database has no record for {id} at p={p}"))
                })
            })
            .collect(),
        RepresentativeRule::Centroid => {
            if model.source != EncodingSource::AngleValues {
                return Err(Error::Contract(format!(
                    "centroid representatives need angle-valued encodings, got {:?}",
                    model.source
                )));
            }
            model
                .centroids
                .iter()
                .map(|c| {
                    let raw: Vec<f64> = match &model.scaler {
                        Some(s) => c
                            .iter()
                            .zip(s.mean.iter().zip(&s.std))
                            .map(|(z, (m, sd))| m + z * sd)
                            .collect(),
                        None => c.clone(),
                    };
                    if raw.len() != 2 * p {
                        return Err(Error::Dimension(format!(
                            "centroid of length {} is not a depth-{p} angle vector",
                            raw.len()
                        )));
                    }
                    AngleVector::from_flat(&raw)
                })
                .collect()
        }
    }
}

/// The stored optimal angles as an `AngleValues` encoding.
pub fn angle_encoding(r: &AngleRecord) -> Encoding {
    Encoding {
        instance_id: r.instance_id.clone(),
        source: EncodingSource::AngleValues,
        vector: r.angles.to_flat(),
        feature_names: Vec::new(),
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Component-wise mean or median of every optimal angle vector at depth `p`.
pub fn aggregate_baseline<'a, I>(records: I, p: usize, stat: AggregateStat) -> Result<AngleVector>
where
    I: IntoIterator<Item = &'a AngleRecord>,
{
    let flats: Vec<Vec<f64>> = records
        .into_iter()
        .filter(|r| r.p == p)
        .map(|r| r.angles.to_flat())
        .collect();
    if flats.is_empty() {
        return Err(Error::Parameter(format!("no angle records at p={p}")));
    }
    let out: Vec<f64> = (0..2 * p)
        .map(|d| {
            let mut col: Vec<f64> = flats.iter().map(|f| f[d]).collect();
            match stat {
                AggregateStat::Mean => col.iter().sum::<f64>() / col.len() as f64,
                AggregateStat::Median => median(&mut col),
            }
        })
        .collect();
    AngleVector::from_flat(&out)
}
