//! Metrics, cross-validation, the train-small/test-big split and ECDFs.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::angle_opt::AngleDatabase;
use crate::clustering::{AggregateStat, ClusterModel, RepresentativeRule};
use crate::error::{Error, Result};
use crate::features::{instance_features, Encoding, EncodingSource};
use crate::instances::ProblemInstance;
use crate::ising::NativeObjective;
use crate::recommend::{
    aggregate_recommendation, angle_encodings, evaluate_instance, fit_recommendations, method_name,
    RecommendationSet,
};
use crate::rng::{derive_seed, rng_from_seed};

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Expected cut over optimal cut, from an Ising (negated-cut) expectation.
pub fn approximation_ratio(expectation_ising: f64, c_opt_cut: f64) -> Result<f64> {
    if c_opt_cut.is_nan() || c_opt_cut <= 0.0 {
        return Err(Error::Domain(format!(
            "approximation ratio needs a positive optimal cut, got {c_opt_cut}"
        )));
    }
    Ok(-expectation_ising / c_opt_cut)
}

/// `(c_opt - E) / c_opt` for a minimization problem with negative optimum.
pub fn optimality_gap(expectation: f64, c_opt: f64) -> Result<f64> {
    if c_opt.is_nan() || c_opt >= 0.0 {
        return Err(Error::Domain(format!(
            "optimality gap needs a negative optimum, got {c_opt}; \
             regenerate or exclude this instance"
        )));
    }
    Ok((c_opt - expectation) / c_opt)
}

/// `(c_opt - e_opt) / (c_opt - e_cluster)` in the native convention.
/// A recommendation that hits the optimum exactly yields `+inf`.
pub fn ratio_to_optimal(c_opt: f64, e_opt: f64, e_cluster: f64) -> f64 {
    let den = c_opt - e_cluster;
    if den == 0.0 {
        f64::INFINITY
    } else {
        (c_opt - e_opt) / den
    }
}

mod extended_float {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else if *v < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => s.parse::<f64>().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioSample {
    pub instance_id: String,
    pub method: String,
    pub depth: usize,
    pub k: usize,
    /// Ratio-to-optimal; `inf` marks an optimum hit.
    #[serde(with = "extended_float")]
    pub ratio: f64,
    #[serde(default)]
    pub fold: Option<usize>,
    /// Circuits evaluated for this instance by the recommendation.
    pub circuit_calls: usize,
    /// Circuit calls (objective plus finite-difference) of the best BFGS
    /// restart in the database.
    pub bfgs_calls: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcdfCurve {
    pub method: String,
    pub sample: Vec<f64>,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

/// `F(t) = (1/R) sum_i 1[0 <= t <= r_i]`, evaluated on `grid`.
///
/// The indicator counts samples at or above `t`, so `F` is non-increasing
/// in `t` for `t >= 0` and zero for `t < 0`.
pub fn ecdf(method: &str, samples: &[f64], grid: &[f64]) -> Result<EcdfCurve> {
    if samples.is_empty() {
        return Err(Error::Parameter(format!("no samples for method {method}")));
    }
    let mut sample = samples.to_vec();
    sample.sort_by(f64::total_cmp);
    let r = sample.len() as f64;
    let values = grid
        .iter()
        .map(|&t| {
            if t < 0.0 {
                return 0.0;
            }
            // samples >= t
            let below = sample.partition_point(|&x| x < t);
            (sample.len() - below) as f64 / r
        })
        .collect();
    Ok(EcdfCurve {
        method: method.to_string(),
        sample,
        grid: grid.to_vec(),
        values,
    })
}

/// Sorted distinct finite sample values.
pub fn default_grid(samples: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = samples.iter().copied().filter(|v| v.is_finite()).collect();
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

/// Percentile bootstrap 95% interval of the median.
pub fn bootstrap_median_ci(values: &[f64], resamples: usize, seed: u64) -> Option<(f64, f64)> {
    if values.is_empty() || resamples == 0 {
        return None;
    }
    let mut rng = rng_from_seed(seed);
    let mut buf = vec![0.0; values.len()];
    let mut medians: Vec<f64> = (0..resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = values[rng.random_range(0..values.len())];
            }
            median(&buf).expect("nonempty")
        })
        .collect();
    medians.sort_by(f64::total_cmp);
    let at = |q: f64| medians[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    Some((at(0.025), at(0.975)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub depth: usize,
    pub k: usize,
    pub count: usize,
    /// Samples with an infinite ratio, excluded from the median.
    pub optimum_hits: usize,
    pub median: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub median_bfgs_calls: Option<f64>,
    pub circuit_calls_per_instance: usize,
}

/// One summary per `(method, depth, k)`, in sorted key order.
pub fn summarize(samples: &[RatioSample], seed: u64) -> Vec<MethodSummary> {
    let mut groups: BTreeMap<(String, usize, usize), Vec<&RatioSample>> = BTreeMap::new();
    for s in samples {
        groups
            .entry((s.method.clone(), s.depth, s.k))
            .or_default()
            .push(s);
    }
    groups
        .into_iter()
        .map(|((method, depth, k), group)| {
            let finite: Vec<f64> = group
                .iter()
                .map(|s| s.ratio)
                .filter(|r| r.is_finite())
                .collect();
            let ci = bootstrap_median_ci(&finite, BOOTSTRAP_RESAMPLES, seed);
            let calls: Vec<f64> = group.iter().map(|s| s.bfgs_calls as f64).collect();
            MethodSummary {
                optimum_hits: group.len() - finite.len(),
                count: group.len(),
                median: median(&finite),
                ci_low: ci.map(|c| c.0),
                ci_high: ci.map(|c| c.1),
                median_bfgs_calls: median(&calls),
                circuit_calls_per_instance: group
                    .iter()
                    .map(|s| s.circuit_calls)
                    .max()
                    .unwrap_or(0),
                method,
                depth,
                k,
            }
        })
        .collect()
}

/// How recommendations are produced from the training split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum MethodKind {
    Cluster {
        source: EncodingSource,
        rule: RepresentativeRule,
        k: usize,
    },
    Aggregate {
        stat: AggregateStat,
    },
}

impl MethodKind {
    pub fn name(&self) -> String {
        match self {
            MethodKind::Cluster { source, rule, .. } => method_name(*source, *rule),
            MethodKind::Aggregate {
                stat: AggregateStat::Mean,
            } => "mean".into(),
            MethodKind::Aggregate {
                stat: AggregateStat::Median,
            } => "median".into(),
        }
    }

    pub fn k(&self) -> usize {
        match self {
            MethodKind::Cluster { k, .. } => *k,
            MethodKind::Aggregate { .. } => 1,
        }
    }
}

/// Data shared by every evaluation protocol.
#[derive(Clone, Copy)]
pub struct EvalInputs<'a> {
    pub instances: &'a [ProblemInstance],
    pub db: &'a AngleDatabase,
    /// Externally computed encodings keyed by instance id.
    pub external: Option<&'a HashMap<String, Encoding>>,
}

/// Encodings for every instance that has one; instances whose features are
/// undefined are skipped with a warning.
pub fn encodings_for(
    source: EncodingSource,
    inputs: &EvalInputs,
    depth: usize,
    exclude_counts: bool,
) -> Result<HashMap<String, Encoding>> {
    let mut out = HashMap::new();
    for inst in inputs.instances {
        let enc = match source {
            EncodingSource::AngleValues => {
                match angle_encodings(inputs.db, [inst.id.as_str()], depth) {
                    Ok(mut v) => v.pop(),
                    Err(_) => None,
                }
            }
            EncodingSource::InstanceFeatures => match instance_features(inst, exclude_counts) {
                Ok(e) => Some(e),
                Err(e) => {
                    warn!("skipping {}: {e}", inst.id);
                    None
                }
            },
            EncodingSource::ExternalEmbedding => {
                let table = inputs.external.ok_or_else(|| {
                    Error::Parameter("external-embedding method without embeddings".into())
                })?;
                table.get(&inst.id).cloned()
            }
        };
        if let Some(e) = enc {
            out.insert(inst.id.clone(), e);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub instance_id: String,
    pub fold: usize,
}

/// Seeded fold partition. With `stratified`, instances are grouped by node
/// count and dealt round-robin so every fold sees every size.
pub fn assign_folds(
    instances: &[ProblemInstance],
    folds: usize,
    seed: u64,
    stratified: bool,
) -> Result<Vec<FoldAssignment>> {
    if folds < 2 || folds > instances.len() {
        return Err(Error::Parameter(format!(
            "need 2 <= folds <= {} instances, got {folds}",
            instances.len()
        )));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, inst) in instances.iter().enumerate() {
        groups
            .entry(if stratified { inst.n } else { 0 })
            .or_default()
            .push(i);
    }
    let mut fold_of = vec![0; instances.len()];
    let mut next = 0;
    for (key, mut members) in groups {
        let mut rng = rng_from_seed(derive_seed(seed, &[key as u64]));
        members.shuffle(&mut rng);
        for i in members {
            fold_of[i] = next % folds;
            next += 1;
        }
    }
    Ok(instances
        .iter()
        .zip(fold_of)
        .map(|(inst, fold)| FoldAssignment {
            instance_id: inst.id.clone(),
            fold,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldFit {
    pub recs: RecommendationSet,
    pub model: Option<ClusterModel>,
}

/// Fits one method on training ids only.
pub fn fit_fold(
    method: &MethodKind,
    train_ids: &[&str],
    encodings: &HashMap<String, Encoding>,
    db: &AngleDatabase,
    depth: usize,
    seed: u64,
) -> Result<FoldFit> {
    match method {
        MethodKind::Aggregate { stat } => Ok(FoldFit {
            recs: aggregate_recommendation(db, train_ids, depth, *stat, seed)?,
            model: None,
        }),
        MethodKind::Cluster { rule, k, .. } => {
            let train: Vec<Encoding> = train_ids
                .iter()
                .filter(|id| db.get(id, depth).is_some())
                .filter_map(|id| encodings.get(*id).cloned())
                .collect();
            let (model, recs) = fit_recommendations(&train, db, depth, *k, *rule, seed)?;
            Ok(FoldFit {
                recs,
                model: Some(model),
            })
        }
    }
}

fn method_source(method: &MethodKind) -> EncodingSource {
    match method {
        MethodKind::Cluster { source, .. } => *source,
        MethodKind::Aggregate { .. } => EncodingSource::AngleValues,
    }
}

fn samples_for(
    method: &MethodKind,
    fit: &FoldFit,
    test: &[&ProblemInstance],
    db: &AngleDatabase,
    depth: usize,
    fold: Option<usize>,
) -> Result<Vec<RatioSample>> {
    let mut out = Vec::with_capacity(test.len());
    for inst in test {
        let Some(rec) = db.get(&inst.id, depth) else {
            continue;
        };
        let outcome = evaluate_instance(&fit.recs, inst)?;
        let native = NativeObjective::of(inst.kind());
        let ratio = ratio_to_optimal(
            rec.c_opt,
            native.from_energy(rec.expectation),
            native.from_energy(outcome.best_expectation),
        );
        out.push(RatioSample {
            instance_id: inst.id.clone(),
            method: method.name(),
            depth,
            k: method.k(),
            ratio,
            fold,
            circuit_calls: outcome.circuit_calls,
            bfgs_calls: rec.best_restart_calls + rec.best_restart_gradient_calls,
        });
    }
    Ok(out)
}

/// Per-fold fits at one depth; `None` for folds too small to fit.
pub fn cv_fits(
    method: &MethodKind,
    inputs: &EvalInputs,
    encodings: &HashMap<String, Encoding>,
    assignment: &[FoldAssignment],
    depth: usize,
    seed: u64,
) -> Result<Vec<Option<FoldFit>>> {
    let folds = assignment.iter().map(|a| a.fold + 1).max().unwrap_or(0);
    (0..folds)
        .map(|f| {
            let train: Vec<&str> = assignment
                .iter()
                .filter(|a| a.fold != f)
                .map(|a| a.instance_id.as_str())
                .filter(|id| inputs.db.get(id, depth).is_some())
                .filter(|id| {
                    matches!(method, MethodKind::Aggregate { .. }) || encodings.contains_key(*id)
                })
                .collect();
            if train.len() < method.k() {
                warn!(
                    "fold {f} at p={depth}: {} training points for k={}, skipped",
                    train.len(),
                    method.k()
                );
                return Ok(None);
            }
            let fold_seed = derive_seed(seed, &[1, f as u64, depth as u64]);
            fit_fold(method, &train, encodings, inputs.db, depth, fold_seed).map(Some)
        })
        .collect()
}

#[derive(Clone, Debug, Default)]
pub struct CvRun {
    pub samples: Vec<RatioSample>,
    pub folds: Vec<FoldAssignment>,
    pub skipped_folds: usize,
}

/// K-fold cross-validation; every instance is tested once per depth.
pub fn run_cv(
    method: &MethodKind,
    inputs: &EvalInputs,
    depths: &[usize],
    folds: usize,
    seed: u64,
    stratified: bool,
) -> Result<CvRun> {
    let assignment = assign_folds(inputs.instances, folds, derive_seed(seed, &[0]), stratified)?;
    let fold_of: HashMap<&str, usize> = assignment
        .iter()
        .map(|a| (a.instance_id.as_str(), a.fold))
        .collect();
    let mut run = CvRun::default();
    for &depth in depths {
        let encodings = encodings_for(method_source(method), inputs, depth, false)?;
        let fits = cv_fits(method, inputs, &encodings, &assignment, depth, seed)?;
        for (f, fit) in fits.iter().enumerate() {
            let Some(fit) = fit else {
                run.skipped_folds += 1;
                continue;
            };
            let test: Vec<&ProblemInstance> = inputs
                .instances
                .iter()
                .filter(|i| fold_of[i.id.as_str()] == f)
                .collect();
            run.samples
                .extend(samples_for(method, fit, &test, inputs.db, depth, Some(f))?);
        }
    }
    run.folds = assignment;
    Ok(run)
}

/// Node counts `<= cutoff` train, the rest test. The cutoff is the node
/// count whose cumulative share is closest to `train_frac` (ties go to the
/// smaller training set); at least one size is always held out.
pub fn size_split(
    instances: &[ProblemInstance],
    train_frac: f64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&train_frac) {
        return Err(Error::Parameter(format!(
            "train_frac {train_frac} outside [0, 1]"
        )));
    }
    let sizes: BTreeSet<usize> = instances.iter().map(|i| i.n).collect();
    if sizes.len() < 2 {
        return Err(Error::Parameter(
            "size split needs at least two distinct node counts".into(),
        ));
    }
    let total = instances.len() as f64;
    let mut best: Option<(f64, usize)> = None;
    let mut cum = 0usize;
    for &n in sizes.iter().take(sizes.len() - 1) {
        cum += instances.iter().filter(|i| i.n == n).count();
        let gap = (cum as f64 / total - train_frac).abs();
        if best.is_none_or(|(g, _)| gap < g - 1e-12) {
            best = Some((gap, n));
        }
    }
    let cutoff = best.expect("two sizes").1;
    let (train, test): (Vec<usize>, Vec<usize>) =
        (0..instances.len()).partition(|&i| instances[i].n <= cutoff);
    Ok((train, test))
}

/// Train on the smallest instances, test on the largest. Instance features
/// drop their count entries in this mode.
pub fn run_size_split(
    method: &MethodKind,
    inputs: &EvalInputs,
    depths: &[usize],
    train_frac: f64,
    seed: u64,
) -> Result<Vec<RatioSample>> {
    let (train_idx, test_idx) = size_split(inputs.instances, train_frac)?;
    let mut out = Vec::new();
    for &depth in depths {
        let encodings = encodings_for(method_source(method), inputs, depth, true)?;
        let train: Vec<&str> = train_idx
            .iter()
            .map(|&i| inputs.instances[i].id.as_str())
            .filter(|id| inputs.db.get(id, depth).is_some())
            .filter(|id| {
                matches!(method, MethodKind::Aggregate { .. }) || encodings.contains_key(*id)
            })
            .collect();
        if train.len() < method.k() {
            return Err(Error::Parameter(format!(
                "{} training instances at p={depth} for k={}",
                train.len(),
                method.k()
            )));
        }
        let fit = fit_fold(
            method,
            &train,
            &encodings,
            inputs.db,
            depth,
            derive_seed(seed, &[2, depth as u64]),
        )?;
        let test: Vec<&ProblemInstance> = test_idx.iter().map(|&i| &inputs.instances[i]).collect();
        out.extend(samples_for(method, &fit, &test, inputs.db, depth, None)?);
    }
    Ok(out)
}
