//! The acquire, annotate, retrain cycle.
//!
//! History convention: the record for round `r` carries the validation
//! accuracy of the classifier trained on the labels held *before* round
//! `r`'s acquisition, together with the ids that round acquired. Record 0 is
//! therefore the seed-only classifier. After the last round one more record
//! (with no acquisitions) holds the final retrained classifier, so a run of
//! `R` rounds has `R + 1` records and its curve starts at the seed budget.

use std::collections::{BTreeMap, HashSet};
use std::time::{Duration, Instant};

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{AcquisitionError, AcquisitionStrategy, Mode, ScoredPool};
use crate::classifier::{self, ClassifierError, LinearClassifier, TrainConfig};
use crate::embeddings::{Dataset, DatasetError, Split};
use crate::oracle::{now_millis, AnnotationRequest, LabelAnswer, LabelQuery, Oracle, OracleError, SimulatedOracle};
use crate::rng::{run_rng, ExperimentRng};
use crate::{ClassId, SampleId};

#[derive(Debug, Error)]
pub enum AlError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error("class {class:?} has {available} train samples, {needed} needed for seeding")]
    InsufficientSeeds {
        class: String,
        available: usize,
        needed: usize,
    },
    #[error("round {round}: oracle failed: {source}")]
    Oracle {
        round: usize,
        #[source]
        source: OracleError,
    },
    #[error("round {round}: rejected oracle answer: {reason}")]
    BadAnswer { round: usize, reason: String },
    #[error("unlabeled pool is exhausted")]
    PoolExhausted,
    #[error("cannot aggregate runs: {0}")]
    Aggregate(String),
    #[error("run {run}: {source}")]
    Run {
        run: usize,
        #[source]
        source: Box<AlError>,
    },
}

/// Optional stop rule: halt when the best validation accuracy of the last
/// `window` records does not beat the best before them by `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlateauRule {
    pub delta: f64,
    pub window: usize,
}

impl Default for PlateauRule {
    fn default() -> Self {
        Self {
            delta: 0.001,
            window: 20,
        }
    }
}

impl PlateauRule {
    pub fn fires(&self, history: &[RoundRecord]) -> bool {
        let accs: Vec<f64> = history.iter().filter_map(|r| r.val_accuracy).collect();
        if self.window == 0 || accs.len() <= self.window {
            return false;
        }
        let split = accs.len() - self.window;
        let before = accs[..split].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let recent = accs[split..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        recent < before + self.delta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub strategy: AcquisitionStrategy,
    pub rounds: usize,
    pub seeds_per_class: usize,
    pub train: TrainConfig,
    pub run_seed: u64,
    pub runs: usize,
    pub early_stop: Option<PlateauRule>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            strategy: AcquisitionStrategy::default(),
            rounds: 100,
            seeds_per_class: 5,
            train: TrainConfig::default(),
            run_seed: 0,
            runs: 10,
            early_stop: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), AlError> {
        if self.rounds == 0 {
            return Err(AlError::Config("rounds must be >= 1".into()));
        }
        if self.seeds_per_class == 0 {
            return Err(AlError::Config("seeds_per_class must be >= 1".into()));
        }
        if self.runs == 0 {
            return Err(AlError::Config("runs must be >= 1".into()));
        }
        self.train.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Acquired {
    pub id: SampleId,
    pub label: ClassId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Labels the logged classifier was trained on (seeds included).
    pub cumulative_labels: usize,
    /// `None` when the validation split carries no ground truth.
    pub val_accuracy: Option<f64>,
    /// Distinct predicted classes among the pool at scoring time.
    pub pool_classes: usize,
    pub acquired: Vec<Acquired>,
}

/// Mutable state of one run. The loop is its only writer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlState {
    /// D_l in acquisition order.
    pub labeled_ids: Vec<SampleId>,
    /// D_u, ascending.
    pub pool_ids: Vec<SampleId>,
    pub acquired_labels: BTreeMap<SampleId, ClassId>,
    pub round: usize,
    pub rng: ExperimentRng,
    pub history: Vec<RoundRecord>,
    #[serde(default)]
    pub finished: bool,
    #[serde(skip)]
    pub durations: Vec<Duration>,
}

impl AlState {
    pub fn budget(&self) -> usize {
        self.labeled_ids.len()
    }

    fn labeled_labels(&self) -> Vec<ClassId> {
        self.labeled_ids.iter().map(|id| self.acquired_labels[id]).collect()
    }

    /// Checks the set invariants against `dataset`.
    pub fn check_invariants(&self, dataset: &Dataset) -> Result<(), String> {
        let labeled: HashSet<SampleId> = self.labeled_ids.iter().copied().collect();
        if labeled.len() != self.labeled_ids.len() {
            return Err("duplicate id in D_l".into());
        }
        if self.pool_ids.iter().any(|id| labeled.contains(id)) {
            return Err("D_l and D_u overlap".into());
        }
        let mut union: Vec<SampleId> = self.labeled_ids.iter().chain(&self.pool_ids).copied().collect();
        union.sort_unstable();
        if union != dataset.ids_in(Split::Train) {
            return Err("D_l and D_u do not partition the train split".into());
        }
        if self.acquired_labels.len() != labeled.len() || self.acquired_labels.keys().any(|id| !labeled.contains(id)) {
            return Err("acquired labels do not cover exactly D_l".into());
        }
        Ok(())
    }
}

fn queries(dataset: &Dataset, ids: &[SampleId], round: usize) -> Vec<LabelQuery> {
    let issued_at = now_millis();
    ids.iter()
        .map(|&id| LabelQuery {
            id,
            round,
            issued_at,
            metadata: dataset.metadata_for(id).cloned().unwrap_or_default(),
        })
        .collect()
}

/// Checks that `answers` label exactly one pool id each with a valid class.
fn validate_answers(
    answers: &[LabelAnswer],
    pool: &[SampleId],
    expected: usize,
    classes: usize,
    round: usize,
) -> Result<(), AlError> {
    let bad = |reason: String| AlError::BadAnswer { round, reason };
    if answers.len() != expected {
        return Err(bad(format!("{} answers for {expected} queries", answers.len())));
    }
    let mut seen = HashSet::new();
    for a in answers {
        if pool.binary_search(&a.id).is_err() {
            return Err(bad(format!("sample {} is not in the unlabeled pool", a.id)));
        }
        if !seen.insert(a.id) {
            return Err(bad(format!("sample {} answered twice", a.id)));
        }
        if usize::from(a.class_id) >= classes {
            return Err(bad(format!("class id {} out of range", a.class_id)));
        }
    }
    Ok(())
}

/// Builds the seed set D_l and charges the oracle for it.
///
/// With ground truth available, draws exactly `seeds_per_class` train
/// samples per class uniformly without replacement. Without labels (human
/// mode on raw embeddings) it draws `K * seeds_per_class` train samples
/// uniformly and lets the oracle label them.
pub fn seed_initial(
    dataset: &Dataset,
    seeds_per_class: usize,
    mut rng: ExperimentRng,
    oracle: &mut dyn Oracle,
) -> Result<AlState, AlError> {
    if seeds_per_class == 0 {
        return Err(AlError::Config("seeds_per_class must be >= 1".into()));
    }
    let train = dataset.ids_in(Split::Train);
    let seeds: Vec<SampleId> = match dataset.labels() {
        Some(labels) => {
            let mut seeds = Vec::with_capacity(seeds_per_class * dataset.num_classes());
            for (class, name) in dataset.classes().iter().enumerate() {
                let members: Vec<SampleId> = train
                    .iter()
                    .copied()
                    .filter(|&id| usize::from(labels[id]) == class)
                    .collect();
                if members.len() < seeds_per_class {
                    return Err(AlError::InsufficientSeeds {
                        class: name.clone(),
                        available: members.len(),
                        needed: seeds_per_class,
                    });
                }
                seeds.extend(
                    index::sample(&mut rng, members.len(), seeds_per_class)
                        .into_iter()
                        .map(|i| members[i]),
                );
            }
            seeds
        }
        None => {
            let needed = seeds_per_class * dataset.num_classes();
            if train.len() < needed {
                return Err(AlError::InsufficientSeeds {
                    class: "<unlabeled>".into(),
                    available: train.len(),
                    needed,
                });
            }
            index::sample(&mut rng, train.len(), needed)
                .into_iter()
                .map(|i| train[i])
                .collect()
        }
    };

    let request = AnnotationRequest {
        round: 0,
        queries: queries(dataset, &seeds, 0),
        selected: Vec::new(),
        backlog: Vec::new(),
        class_aware: false,
    };
    let answers = oracle
        .annotate(&request)
        .map_err(|source| AlError::Oracle { round: 0, source })?;
    let mut sorted_train = train.clone();
    sorted_train.sort_unstable();
    validate_answers(&answers, &sorted_train, seeds.len(), dataset.num_classes(), 0)?;

    let labeled_ids: Vec<SampleId> = answers.iter().map(|a| a.id).collect();
    let acquired_labels: BTreeMap<SampleId, ClassId> = answers.iter().map(|a| (a.id, a.class_id)).collect();
    let pool_ids = train.into_iter().filter(|id| !acquired_labels.contains_key(id)).collect();
    Ok(AlState {
        labeled_ids,
        pool_ids,
        acquired_labels,
        round: 0,
        rng,
        history: Vec::new(),
        finished: false,
        durations: Vec::new(),
    })
}

/// Trains a cold-started probe on D_l; the shuffle seed comes from `rng`.
fn fit(
    state: &AlState,
    dataset: &Dataset,
    train_cfg: &TrainConfig,
    rng: &mut ExperimentRng,
) -> Result<LinearClassifier, AlError> {
    let cfg = TrainConfig {
        seed: rng.random(),
        ..train_cfg.clone()
    };
    let vectors = dataset.gather(&state.labeled_ids);
    Ok(classifier::train(
        vectors.view(),
        &state.labeled_labels(),
        dataset.num_classes(),
        &cfg,
    )?)
}

fn split_accuracy(clf: &LinearClassifier, dataset: &Dataset, split: Split) -> Result<Option<f64>, AlError> {
    if !dataset.has_labels() {
        return Ok(None);
    }
    let ids = dataset.ids_in(split);
    if ids.is_empty() {
        return Ok(None);
    }
    let vectors = dataset.gather(&ids);
    Ok(Some(clf.evaluate(vectors.view(), &dataset.labels_for(&ids)?)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundOutcome {
    pub acquired: usize,
    /// The pool is empty after this round.
    pub exhausted: bool,
}

/// One acquire, annotate, merge step.
///
/// Trains on the current D_l, logs its validation accuracy, scores D_u only,
/// selects, queries the oracle and merges the answers. On any error the
/// state (RNG included) is left exactly as it was, so the round can be
/// retried.
pub fn run_round(
    state: &mut AlState,
    dataset: &Dataset,
    config: &ExperimentConfig,
    oracle: &mut dyn Oracle,
) -> Result<RoundOutcome, AlError> {
    if state.pool_ids.is_empty() {
        return Err(AlError::PoolExhausted);
    }
    let started = Instant::now();
    let round = state.round;
    let mut rng = state.rng.clone();

    let clf = fit(state, dataset, &config.train, &mut rng)?;
    let val_accuracy = split_accuracy(&clf, dataset, Split::Validation)?;

    let pool_vectors = dataset.gather(&state.pool_ids);
    let probs = clf.predict_batch(pool_vectors.view())?;
    let scored = ScoredPool::new(state.pool_ids.clone(), probs.view(), config.strategy.rule, &mut rng)?;
    let pool_classes = scored.predicted.iter().collect::<HashSet<_>>().len();
    let selection = scored.select(config.strategy.mode);
    if selection.exhausted || selection.ids.is_empty() {
        return Err(AlError::PoolExhausted);
    }

    let ranked = scored.ranked();
    let chosen: HashSet<SampleId> = selection.ids.iter().copied().collect();
    let selected = selection
        .ids
        .iter()
        .map(|id| *ranked.iter().find(|c| c.id == *id).expect("selected from pool"))
        .collect();
    let request = AnnotationRequest {
        round,
        queries: queries(dataset, &selection.ids, round),
        selected,
        backlog: ranked.into_iter().filter(|c| !chosen.contains(&c.id)).collect(),
        class_aware: config.strategy.mode == Mode::ClassAware,
    };
    let answers = oracle
        .annotate(&request)
        .map_err(|source| AlError::Oracle { round, source })?;
    validate_answers(&answers, &state.pool_ids, selection.ids.len(), dataset.num_classes(), round)?;

    let cumulative_labels = state.labeled_ids.len();
    let acquired: Vec<Acquired> = answers
        .iter()
        .map(|a| Acquired {
            id: a.id,
            label: a.class_id,
        })
        .collect();
    for a in &acquired {
        state.labeled_ids.push(a.id);
        state.acquired_labels.insert(a.id, a.label);
    }
    let taken: HashSet<SampleId> = acquired.iter().map(|a| a.id).collect();
    state.pool_ids.retain(|id| !taken.contains(id));
    state.history.push(RoundRecord {
        round,
        cumulative_labels,
        val_accuracy,
        pool_classes,
        acquired,
    });
    state.durations.push(started.elapsed());
    state.round += 1;
    state.rng = rng;
    Ok(RoundOutcome {
        acquired: taken.len(),
        exhausted: state.pool_ids.is_empty(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinalMetrics {
    pub val_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
}

/// Retrains on the final D_l, appends the closing record and evaluates on
/// the test split.
pub fn finish(state: &mut AlState, dataset: &Dataset, config: &ExperimentConfig) -> Result<FinalMetrics, AlError> {
    let started = Instant::now();
    let mut rng = state.rng.clone();
    let clf = fit(state, dataset, &config.train, &mut rng)?;
    let val_accuracy = split_accuracy(&clf, dataset, Split::Validation)?;
    let test_accuracy = split_accuracy(&clf, dataset, Split::Test)?;
    let pool_classes = if state.pool_ids.is_empty() {
        0
    } else {
        let probs = clf.predict_batch(dataset.gather(&state.pool_ids).view())?;
        probs
            .rows()
            .into_iter()
            .map(|r| classifier::argmax(&r.to_vec()))
            .collect::<HashSet<_>>()
            .len()
    };
    state.history.push(RoundRecord {
        round: state.round,
        cumulative_labels: state.labeled_ids.len(),
        val_accuracy,
        pool_classes,
        acquired: Vec::new(),
    });
    state.durations.push(started.elapsed());
    state.rng = rng;
    state.finished = true;
    Ok(FinalMetrics {
        val_accuracy,
        test_accuracy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Completed,
    PoolExhausted,
    Plateau,
}

/// One replica's full record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentLog {
    pub run_index: usize,
    pub seed_labels: usize,
    pub history: Vec<RoundRecord>,
    pub total_labels: usize,
    pub final_val_accuracy: Option<f64>,
    pub final_test_accuracy: Option<f64>,
    pub stop: StopReason,
    /// Wall-clock per record; kept out of the serialized log so logs compare
    /// byte for byte.
    #[serde(skip)]
    pub durations: Vec<Duration>,
}

/// Runs seeding, up to `config.rounds` rounds and the final retrain for
/// replica `run_index`.
pub fn run_experiment(
    dataset: &Dataset,
    config: &ExperimentConfig,
    run_index: usize,
    oracle: &mut dyn Oracle,
) -> Result<ExperimentLog, AlError> {
    config.validate()?;
    dataset.require_splits()?;
    let rng = run_rng(config.run_seed, run_index as u64);
    let mut state = seed_initial(dataset, config.seeds_per_class, rng, oracle)?;
    let seed_labels = state.budget();

    let mut stop = StopReason::Completed;
    for _ in 0..config.rounds {
        if state.pool_ids.is_empty() {
            stop = StopReason::PoolExhausted;
            break;
        }
        let outcome = run_round(&mut state, dataset, config, oracle)?;
        if config.early_stop.is_some_and(|rule| rule.fires(&state.history)) {
            stop = StopReason::Plateau;
            break;
        }
        if outcome.exhausted {
            stop = StopReason::PoolExhausted;
            break;
        }
    }
    let metrics = finish(&mut state, dataset, config)?;
    Ok(ExperimentLog {
        run_index,
        seed_labels,
        total_labels: state.budget(),
        history: state.history,
        final_val_accuracy: metrics.val_accuracy,
        final_test_accuracy: metrics.test_accuracy,
        stop,
        durations: state.durations,
    })
}

/// Runs `config.runs` replicas against fresh simulated oracles. Replicas are
/// independent, so `parallel` only changes wall-clock time, not results.
pub fn run_replicas(dataset: &Dataset, config: &ExperimentConfig, parallel: bool) -> Result<Vec<ExperimentLog>, AlError> {
    config.validate()?;
    let one = |run: usize| {
        run_experiment(dataset, config, run, &mut SimulatedOracle::new(dataset))
            .map_err(|e| AlError::Run { run, source: Box::new(e) })
    };
    if parallel {
        (0..config.runs).into_par_iter().map(one).collect()
    } else {
        (0..config.runs).map(one).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample (n - 1) standard deviation; 0 for a single value.
    pub std: f64,
}

impl MeanStd {
    /// Order-independent: values are sorted before summation.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = if v.len() < 2 {
            0.0
        } else {
            let mut sq: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
            sq.sort_by(f64::total_cmp);
            (sq.iter().sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(Self { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStat {
    pub round: usize,
    pub cumulative_labels: MeanStd,
    pub val_accuracy: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub runs: usize,
    pub rounds: Vec<RoundStat>,
    pub final_val_accuracy: MeanStd,
    pub final_test_accuracy: MeanStd,
    pub total_labels: MeanStd,
}

/// Per-round and final mean and sample standard deviation across replicas.
pub fn aggregate_runs(logs: &[ExperimentLog]) -> Result<ExperimentSummary, AlError> {
    let first = logs.first().ok_or_else(|| AlError::Aggregate("no logs".into()))?;
    let len = first.history.len();
    if let Some(bad) = logs.iter().find(|l| l.history.len() != len) {
        return Err(AlError::Aggregate(format!(
            "run {} has {} records, run {} has {len}",
            bad.run_index,
            bad.history.len(),
            first.run_index
        )));
    }
    let missing = |what: &str| AlError::Aggregate(format!("{what} accuracy missing (unlabeled split?)"));
    let rounds = (0..len)
        .map(|r| {
            let accs = logs
                .iter()
                .map(|l| l.history[r].val_accuracy)
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| missing("validation"))?;
            let labels: Vec<f64> = logs.iter().map(|l| l.history[r].cumulative_labels as f64).collect();
            Ok(RoundStat {
                round: first.history[r].round,
                cumulative_labels: MeanStd::of(&labels).expect("nonempty"),
                val_accuracy: MeanStd::of(&accs).expect("nonempty"),
            })
        })
        .collect::<Result<Vec<_>, AlError>>()?;
    let collect = |f: fn(&ExperimentLog) -> Option<f64>, what: &str| {
        logs.iter()
            .map(f)
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| missing(what))
            .map(|v| MeanStd::of(&v).expect("nonempty"))
    };
    let totals: Vec<f64> = logs.iter().map(|l| l.total_labels as f64).collect();
    Ok(ExperimentSummary {
        runs: logs.len(),
        rounds,
        final_val_accuracy: collect(|l| l.final_val_accuracy, "final validation")?,
        final_test_accuracy: collect(|l| l.final_test_accuracy, "final test")?,
        total_labels: MeanStd::of(&totals).expect("nonempty"),
    })
}
