//! K-angle recommendation: evaluate a frozen set of `K` angle vectors on
//! each instance and keep the best, with no optimizer in the loop.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angle_opt::AngleDatabase;
use crate::clustering::{
    aggregate_baseline, angle_encoding, default_standardize, kmeans_fit, representatives,
    AggregateStat, ClusterModel, RepresentativeRule,
};
use crate::error::{Error, Result};
use crate::features::{Encoding, EncodingSource};
use crate::instances::ProblemInstance;
use crate::ising::to_ising;
use crate::qaoa_sim::{AngleVector, QaoaState, Simulator};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: String,
    pub source: Option<EncodingSource>,
    pub rule: Option<RepresentativeRule>,
    pub k: usize,
    pub seed: u64,
    /// Free-form reference to the cluster model, e.g. its file path.
    #[serde(default)]
    pub cluster_model: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSet")]
pub struct RecommendationSet {
    pub depth: usize,
    pub angles: Vec<AngleVector>,
    pub provenance: Provenance,
}

#[derive(Deserialize)]
struct RawSet {
    depth: usize,
    angles: Vec<AngleVector>,
    provenance: Provenance,
}

impl TryFrom<RawSet> for RecommendationSet {
    type Error = Error;
    fn try_from(r: RawSet) -> Result<Self> {
        RecommendationSet::new(r.depth, r.angles, r.provenance)
    }
}

impl RecommendationSet {
    pub fn new(depth: usize, angles: Vec<AngleVector>, provenance: Provenance) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::Parameter("recommendation set needs K >= 1".into()));
        }
        if let Some(a) = angles.iter().find(|a| a.depth() != depth) {
            return Err(Error::Dimension(format!(
                "angle vector of depth {} in a depth-{depth} set",
                a.depth()
            )));
        }
        Ok(RecommendationSet {
            depth,
            angles,
            provenance,
        })
    }

    pub fn k(&self) -> usize {
        self.angles.len()
    }

    pub fn from_cluster_model(
        model: &ClusterModel,
        db: &AngleDatabase,
        depth: usize,
    ) -> Result<Self> {
        let angles = representatives(model, db, depth)?;
        RecommendationSet::new(
            depth,
            angles,
            Provenance {
                method: method_name(model.source, model.representative_rule),
                source: Some(model.source),
                rule: Some(model.representative_rule),
                k: model.k,
                seed: model.seed,
                cluster_model: None,
            },
        )
    }
}

pub fn method_name(source: EncodingSource, rule: RepresentativeRule) -> String {
    let s = match source {
        EncodingSource::AngleValues => "angles",
        EncodingSource::InstanceFeatures => "features",
        EncodingSource::ExternalEmbedding => "embedding",
    };
    let r = match rule {
        RepresentativeRule::Centroid => "centroid",
        RepresentativeRule::ClosestPoint => "closest",
    };
    format!("{s}-{r}")
}

/// Clusters training encodings and freezes the resulting `K` angle vectors.
/// Angle-valued encodings are clustered raw, all others standardized.
pub fn fit_recommendations(
    train: &[Encoding],
    db: &AngleDatabase,
    depth: usize,
    k: usize,
    rule: RepresentativeRule,
    seed: u64,
) -> Result<(ClusterModel, RecommendationSet)> {
    let source = train
        .first()
        .map(|e| e.source)
        .ok_or_else(|| Error::Parameter("no training encodings".into()))?;
    let model = kmeans_fit(train, k, seed, rule, default_standardize(source))?;
    let recs = RecommendationSet::from_cluster_model(&model, db, depth)?;
    Ok((model, recs))
}

/// Angle-valued training encodings at `depth` for the given ids.
pub fn angle_encodings<'a, I>(db: &AngleDatabase, ids: I, depth: usize) -> Result<Vec<Encoding>>
where
    I: IntoIterator<Item = &'a str>,
{
    ids.into_iter()
        .map(|id| {
            db.get(id, depth).map(angle_encoding).ok_or_else(|| {
                Error::Parameter(format!(
                    "angle database has no record for {id} at p={depth}"
                ))
            })
        })
        .collect()
}

pub fn aggregate_recommendation(
    db: &AngleDatabase,
    train_ids: &[&str],
    depth: usize,
    stat: AggregateStat,
    seed: u64,
) -> Result<RecommendationSet> {
    let records: Vec<_> = train_ids
        .iter()
        .filter_map(|id| db.get(id, depth))
        .collect();
    let angles = aggregate_baseline(records, depth, stat)?;
    RecommendationSet::new(
        depth,
        vec![angles],
        Provenance {
            method: match stat {
                AggregateStat::Mean => "mean".into(),
                AggregateStat::Median => "median".into(),
            },
            source: None,
            rule: None,
            k: 1,
            seed,
            cluster_model: None,
        },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommendationOutcome {
    pub instance_id: String,
    pub depth: usize,
    /// Best expectation among the `K` circuits, Ising convention.
    pub best_expectation: f64,
    pub best_angle_index: usize,
    pub per_angle_expectations: Vec<f64>,
    pub circuit_calls: usize,
}

/// Index and value of the smallest entry; ties go to the lowest index.
pub fn argmin_first(values: &[f64]) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

/// Evaluates every angle vector once and returns the best state together
/// with all expectations.
pub fn evaluate_angles(sim: &Simulator, angles: &[AngleVector]) -> (usize, Vec<f64>, QaoaState) {
    let mut best: Option<(f64, QaoaState)> = None;
    let mut values = Vec::with_capacity(angles.len());
    for a in angles {
        let state = sim.evolve(a);
        let e = sim
            .expectation(&state)
            .expect("state built by this simulator");
        values.push(e);
        if best.as_ref().is_none_or(|(b, _)| e < *b) {
            best = Some((e, state));
        }
    }
    let (idx, _) = argmin_first(&values);
    let (_, state) = best.expect("K >= 1");
    (idx, values, state)
}

pub fn evaluate_instance(
    recs: &RecommendationSet,
    inst: &ProblemInstance,
) -> Result<RecommendationOutcome> {
    let sim = Simulator::new(&to_ising(inst)?)?;
    let values: Vec<f64> = recs.angles.iter().map(|a| sim.energy_at(a)).collect();
    let (best_angle_index, best_expectation) = argmin_first(&values);
    Ok(RecommendationOutcome {
        instance_id: inst.id.clone(),
        depth: recs.depth,
        best_expectation,
        best_angle_index,
        circuit_calls: values.len(),
        per_angle_expectations: values,
    })
}

/// Exactly `K` circuit evaluations per test instance, in input order.
pub fn recommend_and_evaluate(
    recs: &RecommendationSet,
    test: &[ProblemInstance],
) -> Result<Vec<RecommendationOutcome>> {
    test.par_iter()
        .map(|inst| evaluate_instance(recs, inst))
        .collect()
}
