//! Late fusion of two unimodal extractors and the data-split strategies.
//!
//! `D_a` is all training data (the leave-out group excluded), `D_1`/`D_2` its
//! stratified halves:
//!
//! | strategy | extractors | fusion model |
//! |----------|------------|--------------|
//! | S_1-1    | D_1        | D_1          |
//! | S_1-2    | D_1        | D_2          |
//! | S_a-a    | D_a        | D_a          |
//!
//! Fused features are the raw extractor activations concatenated `V ⌢ A`.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{metrics_report, IntraDivisor, LabeledFeatureSet};
use crate::toytrain::{export_features, make_synthetic_dataset, train, DatasetSpec, MLPModel, ModelSpec, TrainConfig};

/// Splits `D_a` into two halves, stratified by class and group.
///
/// Members of each (class, group) stratum are shuffled and dealt alternately
/// to the halves; the alternation carries over between strata so that per
/// class, and overall, the halves differ by at most one sample.
pub fn split_dataset(data: &LabeledFeatureSet<f64>, seed: u64) -> Result<(LabeledFeatureSet<f64>, LabeledFeatureSet<f64>)> {
    if data.len() < 2 {
        return Err(Error::TooSmall(data.len()));
    }
    let mut strata: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (r, &label) in data.labels().iter().enumerate() {
        let group = data.groups().map_or(0, |g| g[r]);
        strata.entry((label, group)).or_default().push(r);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut halves = (Vec::new(), Vec::new());
    let mut toggle = false;
    for rows in strata.values_mut() {
        rows.shuffle(&mut rng);
        for &r in rows.iter() {
            if toggle { &mut halves.1 } else { &mut halves.0 }.push(r);
            toggle = !toggle;
        }
    }
    halves.0.sort_unstable();
    halves.1.sort_unstable();
    Ok((data.select(&halves.0), data.select(&halves.1)))
}

/// Concatenates aligned feature sets, `V` first.
pub fn fuse(v: &LabeledFeatureSet<f64>, a: &LabeledFeatureSet<f64>) -> Result<LabeledFeatureSet<f64>> {
    if v.len() != a.len() {
        return Err(Error::AlignmentMismatch(format!("{} vs {} samples", v.len(), a.len())));
    }
    match (v.ids(), a.ids()) {
        (Some(x), Some(y)) if x != y => return Err(Error::AlignmentMismatch("sample ids differ".into())),
        (Some(_), None) | (None, Some(_)) => return Err(Error::AlignmentMismatch("ids on one side only".into())),
        _ => {}
    }
    if v.labels() != a.labels() {
        return Err(Error::AlignmentMismatch("labels differ".into()));
    }
    let vectors = v.vectors().iter().zip(a.vectors()).map(|(x, y)| x.iter().chain(y).copied().collect()).collect();
    let mut fused = LabeledFeatureSet::new(vectors, v.labels().to_vec(), v.class_names().to_vec())?.with_split(v.split());
    if let Some(g) = v.groups() {
        fused = fused.with_groups(g.to_vec())?;
    }
    if let Some(i) = v.ids() {
        fused = fused.with_ids(i.to_vec())?;
    }
    Ok(fused)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "S_1-1")]
    S11,
    #[serde(rename = "S_1-2")]
    S12,
    #[serde(rename = "S_a-a")]
    Saa,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::S11, Strategy::S12, Strategy::Saa];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::S11 => "S_1-1",
            Strategy::S12 => "S_1-2",
            Strategy::Saa => "S_a-a",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S_1-1" | "s11" | "1-1" => Ok(Strategy::S11),
            "S_1-2" | "s12" | "1-2" => Ok(Strategy::S12),
            "S_a-a" | "saa" | "a-a" => Ok(Strategy::Saa),
            other => Err(Error::BadSpec(format!("unknown strategy `{other}`"))),
        }
    }
}

/// The fusion-stage classifier. `Linear` is the cross-entropy stand-in for a
/// linear SVM; `Mlp` is a toytrain network on the fused features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FusionModel {
    Linear { config: TrainConfig },
    Mlp { model: ModelSpec, config: TrainConfig },
}

impl FusionModel {
    fn parts(&self) -> (ModelSpec, &TrainConfig) {
        match self {
            FusionModel::Linear { config } => (ModelSpec { hidden: Vec::new(), head_bias: true }, config),
            FusionModel::Mlp { model, config } => (model.clone(), config),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extractor {
    pub model: ModelSpec,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionExperimentConfig {
    pub modality_v: DatasetSpec,
    pub modality_a: DatasetSpec,
    pub extractor_v: Extractor,
    pub extractor_a: Extractor,
    pub fusion: FusionModel,
    pub strategies: Vec<Strategy>,
    pub leave_out_group: usize,
    /// Offsets every seed in the config (datasets, split, training).
    pub seed: u64,
}

impl FusionExperimentConfig {
    /// The same experiment with every seed shifted by `seed`.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Which sample ids train what.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyData {
    pub extractor_ids: BTreeSet<usize>,
    pub fusion_ids: BTreeSet<usize>,
}

pub fn strategy_data(strategy: Strategy, d1: &BTreeSet<usize>, d2: &BTreeSet<usize>, da: &BTreeSet<usize>) -> StrategyData {
    let (extractor_ids, fusion_ids) = match strategy {
        Strategy::S11 => (d1.clone(), d1.clone()),
        Strategy::S12 => (d1.clone(), d2.clone()),
        Strategy::Saa => (da.clone(), da.clone()),
    };
    StrategyData { extractor_ids, fusion_ids }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorMetrics {
    pub modality: String,
    pub c_r: f64,
    pub s_r: f64,
    pub train_accuracy: f64,
    pub heldout_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub strategy: Strategy,
    pub heldout_accuracy: f64,
    pub fusion_train_accuracy: f64,
    pub extractor_samples: usize,
    pub fusion_samples: usize,
    pub extractors: Vec<ExtractorMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionOutcome {
    pub seed: u64,
    pub leave_out_group: usize,
    pub heldout_samples: usize,
    pub results: Vec<StrategyResult>,
}

impl FusionOutcome {
    pub fn accuracy(&self, strategy: Strategy) -> Option<f64> {
        self.results.iter().find(|r| r.strategy == strategy).map(|r| r.heldout_accuracy)
    }
}

fn ids_of(set: &LabeledFeatureSet<f64>) -> Vec<usize> {
    set.ids().map(<[usize]>::to_vec).unwrap_or_else(|| (0..set.len()).collect())
}

fn subset(set: &LabeledFeatureSet<f64>, ids: &BTreeSet<usize>) -> LabeledFeatureSet<f64> {
    let rows: Vec<usize> = ids_of(set).iter().enumerate().filter(|(_, id)| ids.contains(id)).map(|(r, _)| r).collect();
    set.select(&rows)
}

fn reseed(config: &TrainConfig, offset: u64) -> TrainConfig {
    TrainConfig { seed: config.seed.wrapping_add(offset), ..config.clone() }
}

fn accuracy(model: &MLPModel, set: &LabeledFeatureSet<f64>) -> f64 {
    model.evaluate(set).1
}

struct Modality<'a> {
    name: &'static str,
    train: LabeledFeatureSet<f64>,
    heldout: LabeledFeatureSet<f64>,
    extractor: &'a Extractor,
}

/// Runs every requested strategy on one draw of the data.
pub fn run_strategy(config: &FusionExperimentConfig) -> Result<FusionOutcome> {
    let seed = config.seed;
    let draw = |spec: &DatasetSpec| -> Result<_> {
        let spec = DatasetSpec { holdout_group: Some(config.leave_out_group), seed: spec.seed.wrapping_add(seed), ..spec.clone() };
        make_synthetic_dataset(&spec)
    };
    let (v_train, v_held) = draw(&config.modality_v)?;
    let (a_train, a_held) = draw(&config.modality_a)?;
    if ids_of(&v_train) != ids_of(&a_train) || v_train.labels() != a_train.labels() || v_train.groups() != a_train.groups() {
        return Err(Error::AlignmentMismatch("modality specs disagree on labels or groups".into()));
    }
    let heldout_ids: BTreeSet<usize> = ids_of(&v_held).into_iter().collect();

    let (d1, d2) = split_dataset(&v_train, seed)?;
    let d1: BTreeSet<usize> = ids_of(&d1).into_iter().collect();
    let d2: BTreeSet<usize> = ids_of(&d2).into_iter().collect();
    let da: BTreeSet<usize> = ids_of(&v_train).into_iter().collect();

    let modalities = [
        Modality { name: "V", train: v_train, heldout: v_held, extractor: &config.extractor_v },
        Modality { name: "A", train: a_train, heldout: a_held, extractor: &config.extractor_a },
    ];
    let (fusion_spec, fusion_cfg) = config.fusion.parts();

    let mut results = Vec::new();
    for &strategy in &config.strategies {
        let data = strategy_data(strategy, &d1, &d2, &da);
        if !data.extractor_ids.is_disjoint(&heldout_ids) || !data.fusion_ids.is_disjoint(&heldout_ids) {
            return Err(Error::BadSpec("held-out samples leaked into training data".into()));
        }
        let mut fusion_train = Vec::new();
        let mut fusion_test = Vec::new();
        let mut extractors = Vec::new();
        for (k, m) in modalities.iter().enumerate() {
            let ex_train = subset(&m.train, &data.extractor_ids);
            let cfg = reseed(&m.extractor.config, seed.wrapping_mul(31).wrapping_add(k as u64));
            let (model, _) = train(&m.extractor.model, &cfg, &ex_train, None)?;

            let ex_feats = export_features(&model, &ex_train)?.features;
            let held_feats = export_features(&model, &m.heldout)?.features;
            let report = metrics_report(
                &ex_feats.without_zero_vectors().0,
                &held_feats.without_zero_vectors().0,
                IntraDivisor::Literal,
                None,
            );
            let (c_r, s_r) = report.map(|r| (r.c_r, r.s_r)).unwrap_or((f64::NAN, f64::NAN));
            extractors.push(ExtractorMetrics {
                modality: m.name.into(),
                c_r,
                s_r,
                train_accuracy: accuracy(&model, &ex_train),
                heldout_accuracy: accuracy(&model, &m.heldout),
            });
            fusion_train.push(export_features(&model, &subset(&m.train, &data.fusion_ids))?.features);
            fusion_test.push(held_feats);
        }
        let f_train = fuse(&fusion_train[0], &fusion_train[1])?;
        let f_test = fuse(&fusion_test[0], &fusion_test[1])?;
        let cfg = reseed(fusion_cfg, seed.wrapping_mul(31).wrapping_add(7));
        let (fusion, _) = train(&fusion_spec, &cfg, &f_train, None)?;
        results.push(StrategyResult {
            strategy,
            heldout_accuracy: accuracy(&fusion, &f_test),
            fusion_train_accuracy: accuracy(&fusion, &f_train),
            extractor_samples: data.extractor_ids.len(),
            fusion_samples: data.fusion_ids.len(),
            extractors,
        });
    }
    Ok(FusionOutcome { seed, leave_out_group: config.leave_out_group, heldout_samples: heldout_ids.len(), results })
}

/// Per-seed outcomes and the per-strategy mean held-out accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyComparison {
    pub outcomes: Vec<FusionOutcome>,
    pub mean_accuracy: Vec<(Strategy, f64)>,
}

pub fn compare_strategies(config: &FusionExperimentConfig, seeds: &[u64]) -> Result<StrategyComparison> {
    let outcomes = seeds.iter().map(|&s| run_strategy(&config.with_seed(s))).collect::<Result<Vec<_>>>()?;
    let mean_accuracy = config
        .strategies
        .iter()
        .map(|&st| {
            let accs: Vec<f64> = outcomes.iter().filter_map(|o| o.accuracy(st)).collect();
            (st, accs.iter().sum::<f64>() / accs.len().max(1) as f64)
        })
        .collect();
    Ok(StrategyComparison { outcomes, mean_accuracy })
}
