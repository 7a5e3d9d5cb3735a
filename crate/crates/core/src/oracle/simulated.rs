use std::collections::HashSet;

use super::{now_millis, AnnotationRequest, LabelAnswer, Oracle, OracleError};
use crate::embeddings::{Dataset, Split};
use crate::{ClassId, SampleId};

/// Ground-truth lookup standing in for the annotator.
#[derive(Debug, Clone)]
pub struct SimulatedOracle<'a> {
    dataset: &'a Dataset,
    labeled: HashSet<SampleId>,
}

impl<'a> SimulatedOracle<'a> {
    pub fn new(dataset: &'a Dataset) -> Self {
        Self {
            dataset,
            labeled: HashSet::new(),
        }
    }

    fn check(&self, id: SampleId) -> Result<ClassId, OracleError> {
        let labels = self.dataset.labels().ok_or(OracleError::Unlabeled)?;
        if id >= self.dataset.len() {
            return Err(OracleError::UnknownId(id));
        }
        if self.dataset.split(id) != Split::Train {
            return Err(OracleError::NotTrain(id));
        }
        if self.labeled.contains(&id) {
            return Err(OracleError::AlreadyLabeled(id));
        }
        Ok(labels[id])
    }

    /// Stored label of `id`; charges one label.
    pub fn simulated_label(&mut self, id: SampleId) -> Result<ClassId, OracleError> {
        let label = self.check(id)?;
        self.labeled.insert(id);
        Ok(label)
    }
}

impl Oracle for SimulatedOracle<'_> {
    fn annotate(&mut self, request: &AnnotationRequest) -> Result<Vec<LabelAnswer>, OracleError> {
        let mut seen = HashSet::new();
        for q in &request.queries {
            self.check(q.id)?;
            if !seen.insert(q.id) {
                return Err(OracleError::AlreadyLabeled(q.id));
            }
        }
        let now = now_millis();
        request
            .queries
            .iter()
            .map(|q| {
                Ok(LabelAnswer {
                    id: q.id,
                    class_id: self.simulated_label(q.id)?,
                    annotator: "simulated".into(),
                    answered_at: now,
                })
            })
            .collect()
    }

    fn budget(&self) -> usize {
        self.labeled.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::LabelQuery;
    use ndarray::array;

    fn dataset() -> Dataset {
        Dataset::new(
            array![[0.0f32], [1.0], [2.0], [3.0]],
            vec![Split::Train, Split::Train, Split::Validation, Split::Train],
            Some(vec![3, 1, 0, 2]),
            (0..4).map(|c| c.to_string()).collect(),
            None,
        )
        .unwrap()
    }

    fn request(ids: &[SampleId]) -> AnnotationRequest {
        AnnotationRequest {
            round: 0,
            queries: ids
                .iter()
                .map(|&id| LabelQuery {
                    id,
                    round: 0,
                    issued_at: 0,
                    metadata: Default::default(),
                })
                .collect(),
            selected: vec![],
            backlog: vec![],
            class_aware: false,
        }
    }

    #[test]
    fn lookup_and_accounting() {
        let d = dataset();
        let mut oracle = SimulatedOracle::new(&d);
        assert_eq!(oracle.simulated_label(0).unwrap(), 3);
        assert_eq!(oracle.simulated_label(0), Err(OracleError::AlreadyLabeled(0)));
        assert_eq!(oracle.simulated_label(2), Err(OracleError::NotTrain(2)));
        assert_eq!(oracle.simulated_label(9), Err(OracleError::UnknownId(9)));
        let answers = oracle.annotate(&request(&[3, 1])).unwrap();
        assert_eq!(answers.iter().map(|a| (a.id, a.class_id)).collect::<Vec<_>>(), vec![(3, 2), (1, 1)]);
        assert_eq!(oracle.budget(), 3);
    }

    #[test]
    fn failed_batch_charges_nothing() {
        let d = dataset();
        let mut oracle = SimulatedOracle::new(&d);
        assert_eq!(oracle.annotate(&request(&[0, 2])), Err(OracleError::NotTrain(2)));
        assert_eq!(oracle.annotate(&request(&[1, 1])), Err(OracleError::AlreadyLabeled(1)));
        assert_eq!(oracle.budget(), 0);
    }

    #[test]
    fn unlabeled_dataset() {
        let d = Dataset::new(array![[0.0f32]], vec![Split::Train], None, vec!["a".into()], None).unwrap();
        assert_eq!(SimulatedOracle::new(&d).simulated_label(0), Err(OracleError::Unlabeled));
    }
}
