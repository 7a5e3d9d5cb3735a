//! Uncertainty scoring of pool samples and batch selection.
//!
//! Every rule is oriented so that a higher score means more uncertain, which
//! keeps selection rule-agnostic: the smallest-margin argmin becomes an
//! argmax over `1 - margin`.

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::argmax;
use crate::{ClassId, SampleId};

#[derive(Debug, Error, PartialEq)]
pub enum AcquisitionError {
    #[error("rule {rule} needs at least 2 classes, got {classes}")]
    TooFewClasses { rule: Rule, classes: usize },
    #[error("{ids} ids for {rows} probability rows")]
    LengthMismatch { ids: usize, rows: usize },
    #[error("requested {requested} samples from a pool of {pool}")]
    PoolTooSmall { requested: usize, pool: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    SmallestMargin,
    LargestMargin,
    LeastConfidence,
    Entropy,
    Norm,
    Random,
}

impl Rule {
    pub const ALL: [Rule; 6] = [
        Rule::SmallestMargin,
        Rule::LargestMargin,
        Rule::LeastConfidence,
        Rule::Entropy,
        Rule::Norm,
        Rule::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Rule::SmallestMargin => "smallest-margin",
            Rule::LargestMargin => "largest-margin",
            Rule::LeastConfidence => "least-confidence",
            Rule::Entropy => "entropy",
            Rule::Norm => "norm",
            Rule::Random => "random",
        }
    }

    fn needs_two_classes(self) -> bool {
        matches!(self, Rule::SmallestMargin | Rule::LargestMargin)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Rule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Rule::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| {
                format!(
                    "unknown strategy {s:?} (expected one of: {})",
                    Rule::ALL.map(Rule::as_str).join(", ")
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// One sample per predicted class per round.
    ClassAware,
    /// A fixed number of samples (one by default) from the whole pool.
    ClassAgnostic,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::ClassAware, Mode::ClassAgnostic];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::ClassAware => "class-aware",
            Mode::ClassAgnostic => "class-agnostic",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode {s:?} (expected class-aware or class-agnostic)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AcquisitionStrategy {
    pub rule: Rule,
    pub mode: Mode,
}

impl AcquisitionStrategy {
    pub fn new(rule: Rule, mode: Mode) -> Self {
        Self { rule, mode }
    }
}

impl Default for AcquisitionStrategy {
    fn default() -> Self {
        Self::new(Rule::SmallestMargin, Mode::ClassAware)
    }
}

impl fmt::Display for AcquisitionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.rule, self.mode)
    }
}

/// Largest and second-largest entries of a probability row.
fn top_two(p: &[f64]) -> (f64, f64) {
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &v in p {
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    (first, second)
}

/// Uncertainty score of one probability row (not defined for
/// [`Rule::Random`], which is drawn in [`score`]).
pub fn score_row(p: &[f64], rule: Rule) -> f64 {
    match rule {
        Rule::SmallestMargin => {
            let (first, second) = top_two(p);
            1.0 - (first - second)
        }
        Rule::LargestMargin => {
            let first = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let last = p.iter().copied().fold(f64::INFINITY, f64::min);
            1.0 - (first - last)
        }
        Rule::LeastConfidence => 1.0 - p.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Rule::Entropy => -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>(),
        Rule::Norm => 1.0 - p.iter().map(|v| v * v).sum::<f64>().sqrt(),
        Rule::Random => unreachable!("random scores come from the experiment rng"),
    }
}

/// Scores every row of an `n x K` probability matrix; higher = more uncertain.
///
/// The random rule draws one uniform `[0, 1)` value per row from `rng`; the
/// other rules leave `rng` untouched.
pub fn score<R: RngCore + ?Sized>(
    probs: ArrayView2<'_, f64>,
    rule: Rule,
    rng: &mut R,
) -> Result<Vec<f64>, AcquisitionError> {
    let classes = probs.ncols();
    if rule.needs_two_classes() && classes < 2 {
        return Err(AcquisitionError::TooFewClasses { rule, classes });
    }
    Ok(match rule {
        Rule::Random => (0..probs.nrows()).map(|_| rng.random::<f64>()).collect(),
        _ => probs
            .rows()
            .into_iter()
            .map(|row| match row.as_slice() {
                Some(p) => score_row(p, rule),
                None => score_row(&row.to_vec(), rule),
            })
            .collect(),
    })
}

/// Pool samples with their uncertainty scores and predicted classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPool {
    pub ids: Vec<SampleId>,
    pub scores: Vec<f64>,
    pub predicted: Vec<ClassId>,
}

/// One pool candidate, as handed to an oracle that may need replacements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: SampleId,
    pub score: f64,
    pub predicted: ClassId,
}

/// Ids chosen for labeling. `exhausted` is set when the pool was empty.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Selection {
    pub ids: Vec<SampleId>,
    pub exhausted: bool,
}

/// Ordering used by every selection: score descending, then id ascending.
fn rank(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then(a.id.cmp(&b.id))
}

impl ScoredPool {
    pub fn new<R: RngCore + ?Sized>(
        ids: Vec<SampleId>,
        probs: ArrayView2<'_, f64>,
        rule: Rule,
        rng: &mut R,
    ) -> Result<Self, AcquisitionError> {
        if ids.len() != probs.nrows() {
            return Err(AcquisitionError::LengthMismatch {
                ids: ids.len(),
                rows: probs.nrows(),
            });
        }
        let scores = score(probs, rule, rng)?;
        let predicted = probs
            .rows()
            .into_iter()
            .map(|row| argmax(&row.to_vec()) as ClassId)
            .collect();
        Ok(Self { ids, scores, predicted })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn candidates(&self) -> impl Iterator<Item = Candidate> + '_ {
        self.ids
            .iter()
            .zip(&self.scores)
            .zip(&self.predicted)
            .map(|((&id, &score), &predicted)| Candidate { id, score, predicted })
    }

    /// All candidates, most uncertain first (ties by lowest id).
    pub fn ranked(&self) -> Vec<Candidate> {
        let mut all: Vec<Candidate> = self.candidates().collect();
        all.sort_by(rank);
        all
    }

    /// The `k` most uncertain ids (lowest id wins ties).
    pub fn select_class_agnostic(&self, k: usize) -> Result<Selection, AcquisitionError> {
        if self.is_empty() {
            return Ok(Selection {
                ids: Vec::new(),
                exhausted: true,
            });
        }
        if k > self.len() {
            return Err(AcquisitionError::PoolTooSmall {
                requested: k,
                pool: self.len(),
            });
        }
        let mut all: Vec<Candidate> = self.candidates().collect();
        if k < all.len() {
            all.select_nth_unstable_by(k, rank);
            all.truncate(k);
        }
        all.sort_by(rank);
        Ok(Selection {
            ids: all.into_iter().map(|c| c.id).collect(),
            exhausted: false,
        })
    }

    /// For each predicted class, the most uncertain pool sample predicted as
    /// that class. Classes nobody is predicted as contribute nothing. Ids are
    /// returned in class order.
    pub fn select_class_aware(&self) -> Selection {
        if self.is_empty() {
            return Selection {
                ids: Vec::new(),
                exhausted: true,
            };
        }
        let classes = self.predicted.iter().map(|&c| usize::from(c) + 1).max().unwrap_or(0);
        let mut best: Vec<Option<Candidate>> = vec![None; classes];
        for cand in self.candidates() {
            let slot = &mut best[usize::from(cand.predicted)];
            match slot {
                Some(cur) if rank(&cand, cur).is_ge() => {}
                _ => *slot = Some(cand),
            }
        }
        Selection {
            ids: best.into_iter().flatten().map(|c| c.id).collect(),
            exhausted: false,
        }
    }

    pub fn select(&self, mode: Mode) -> Selection {
        match mode {
            Mode::ClassAware => self.select_class_aware(),
            Mode::ClassAgnostic => self
                .select_class_agnostic(1)
                .expect("k = 1 never exceeds a nonempty pool"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    fn pool(ids: Vec<SampleId>, scores: Vec<f64>, predicted: Vec<ClassId>) -> ScoredPool {
        ScoredPool { ids, scores, predicted }
    }

    #[test]
    fn smallest_margin_example() {
        let s = score(array![[0.5, 0.3, 0.2]].view(), Rule::SmallestMargin, &mut rng()).unwrap();
        assert!((s[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn entropy_extremes() {
        let s = score(array![[0.25, 0.25, 0.25, 0.25], [0.0, 1.0, 0.0, 0.0]].view(), Rule::Entropy, &mut rng()).unwrap();
        assert!((s[0] - 4f64.ln()).abs() < 1e-12);
        assert!((s[0] - 1.3863).abs() < 1e-4);
        assert_eq!(s[1], 0.0);
    }

    #[test]
    fn norm_extremes() {
        for k in 2..8usize {
            let uniform = Array2::from_elem((1, k), 1.0 / k as f64);
            let s = score(uniform.view(), Rule::Norm, &mut rng()).unwrap();
            assert!((s[0] - (1.0 - 1.0 / (k as f64).sqrt())).abs() < 1e-12);
            let mut onehot = Array2::zeros((1, k));
            onehot[[0, k - 1]] = 1.0;
            assert_eq!(score(onehot.view(), Rule::Norm, &mut rng()).unwrap()[0], 0.0);
        }
    }

    #[test]
    fn margin_rules_need_two_classes() {
        let p = array![[1.0], [1.0]];
        for rule in [Rule::SmallestMargin, Rule::LargestMargin] {
            assert_eq!(
                score(p.view(), rule, &mut rng()),
                Err(AcquisitionError::TooFewClasses { rule, classes: 1 })
            );
        }
        assert!(score(p.view(), Rule::Entropy, &mut rng()).is_ok());
    }

    #[test]
    fn largest_margin_is_top_minus_bottom() {
        let s = score(array![[0.6, 0.3, 0.1]].view(), Rule::LargestMargin, &mut rng()).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn random_scores_replay_from_seed() {
        let p = Array2::from_elem((5, 3), 1.0 / 3.0);
        let a = score(p.view(), Rule::Random, &mut rng()).unwrap();
        let b = score(p.view(), Rule::Random, &mut rng()).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn class_agnostic_examples() {
        let p = pool(vec![10, 20], vec![0.8, 0.2], vec![0, 1]);
        assert_eq!(p.select_class_agnostic(1).unwrap().ids, vec![10]);
        let tied = pool(vec![7, 3, 5], vec![0.4, 0.4, 0.4], vec![0, 0, 0]);
        assert_eq!(tied.select_class_agnostic(1).unwrap().ids, vec![3]);
        let mut all = tied.select_class_agnostic(3).unwrap().ids;
        all.sort();
        assert_eq!(all, vec![3, 5, 7]);
        assert!(tied.select_class_agnostic(4).is_err());
    }

    #[test]
    fn empty_pool_signals_exhaustion() {
        let empty = pool(vec![], vec![], vec![]);
        assert!(empty.select_class_agnostic(1).unwrap().exhausted);
        let sel = empty.select_class_aware();
        assert!(sel.exhausted && sel.ids.is_empty());
    }

    #[test]
    fn class_aware_examples() {
        let p = pool(vec![0, 1, 2], vec![0.9, 0.5, 0.4], vec![0, 0, 1]);
        assert_eq!(p.select_class_aware().ids, vec![0, 2]);
        let one_class = pool(vec![4, 5, 6], vec![0.1, 0.9, 0.3], vec![0, 0, 0]);
        assert_eq!(one_class.select_class_aware().ids, vec![5]);
        let tie = pool(vec![9, 2, 6], vec![0.5, 0.5, 0.1], vec![1, 1, 0]);
        assert_eq!(tie.select_class_aware().ids, vec![6, 2]);
    }

    #[test]
    fn strategy_strings() {
        for rule in Rule::ALL {
            assert_eq!(rule.as_str().parse::<Rule>().unwrap(), rule);
        }
        assert_eq!("class-aware".parse::<Mode>().unwrap(), Mode::ClassAware);
        assert!("margin".parse::<Rule>().is_err());
        let json = serde_json::to_string(&AcquisitionStrategy::default()).unwrap();
        assert_eq!(json, r#"{"rule":"smallest-margin","mode":"class-aware"}"#);
    }

    fn prob_row(k: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.001f64..1.0, k).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn score_ranges(row in (2usize..10).prop_flat_map(prob_row)) {
            let k = row.len() as f64;
            for rule in [Rule::SmallestMargin, Rule::LargestMargin, Rule::LeastConfidence, Rule::Norm] {
                let s = score_row(&row, rule);
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&s), "{rule}: {s}");
            }
            let h = score_row(&row, Rule::Entropy);
            prop_assert!(h >= -1e-12 && h <= k.ln() + 1e-12);
        }

        #[test]
        fn uniform_beats_one_hot(k in 2usize..12, hot in 0usize..12) {
            let hot = hot % k;
            let uniform = vec![1.0 / k as f64; k];
            let mut onehot = vec![0.0; k];
            onehot[hot] = 1.0;
            for rule in Rule::ALL.into_iter().filter(|&r| r != Rule::Random) {
                prop_assert!(score_row(&uniform, rule) > score_row(&onehot, rule), "{rule}");
            }
        }

        #[test]
        fn scores_are_row_permutation_equivariant(
            rows in prop::collection::vec(prob_row(4), 1..30),
            seed in any::<u64>(),
        ) {
            let n = rows.len();
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            let probs = Array2::from_shape_vec((n, 4), flat).unwrap();
            let mut perm: Vec<usize> = (0..n).collect();
            use rand::seq::SliceRandom;
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let permuted = probs.select(ndarray::Axis(0), &perm);
            for rule in Rule::ALL.into_iter().filter(|&r| r != Rule::Random) {
                let a = score(probs.view(), rule, &mut rng()).unwrap();
                let b = score(permuted.view(), rule, &mut rng()).unwrap();
                for (j, &i) in perm.iter().enumerate() {
                    prop_assert_eq!(a[i], b[j]);
                }
            }
        }

        #[test]
        fn one_minus_margin_argmax_is_raw_margin_argmin(rows in prop::collection::vec(prob_row(5), 1..50)) {
            let n = rows.len();
            let probs = Array2::from_shape_vec((n, 5), rows.iter().flatten().copied().collect()).unwrap();
            let pool = ScoredPool::new((0..n).collect(), probs.view(), Rule::SmallestMargin, &mut rng()).unwrap();
            let picked = pool.select_class_agnostic(1).unwrap().ids[0];
            // raw margin argmin, first index wins ties
            let margins: Vec<f64> = rows.iter().map(|r| {
                let mut s = r.clone();
                s.sort_by(|a, b| b.total_cmp(a));
                s[0] - s[1]
            }).collect();
            let mut best = 0;
            for i in 1..n {
                if margins[i] < margins[best] {
                    best = i;
                }
            }
            prop_assert_eq!(picked, best);
        }
    }
}
