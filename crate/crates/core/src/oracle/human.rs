use std::collections::HashSet;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::{now_millis, AnnotationRequest, LabelAnswer, LabelQuery, Oracle, OracleError};
use crate::acquisition::Candidate;
use crate::embeddings::Metadata;
use crate::{ClassId, SampleId};

/// Why a label post or skip was refused.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelRejection {
    #[error("sample {0} already has a label")]
    Conflict(SampleId),
    #[error("sample {0} has no open query")]
    UnknownId(SampleId),
    #[error("class id {class_id} out of range for {classes} classes")]
    InvalidClass { class_id: ClassId, classes: usize },
    #[error("no replacement left in the pool for sample {0}")]
    NoReplacement(SampleId),
}

#[derive(Debug)]
struct Slot {
    query: LabelQuery,
    predicted: Option<ClassId>,
    answer: Option<LabelAnswer>,
}

#[derive(Debug, Default)]
struct Batch {
    round: usize,
    requested: Vec<SampleId>,
    slots: Vec<Slot>,
    backlog: Vec<Candidate>,
    metadata: Vec<(SampleId, Metadata)>,
    class_aware: bool,
    skipped: HashSet<SampleId>,
}

#[derive(Debug)]
struct QueueState {
    classes: usize,
    batch: Option<Batch>,
    /// Every id labeled in a completed batch (including seeds).
    labeled: HashSet<SampleId>,
    closed: bool,
}

#[derive(Debug)]
struct Shared {
    state: Mutex<QueueState>,
    changed: Condvar,
}

/// Serialized hand-off point between the AL loop and annotators.
///
/// Cloning yields another handle to the same queue. All mutation happens
/// under one lock, so concurrent label posts are ordered and the first
/// valid answer for an id wins.
#[derive(Debug, Clone)]
pub struct LabelQueue {
    shared: Arc<Shared>,
}

impl LabelQueue {
    pub fn new(classes: usize, already_labeled: impl IntoIterator<Item = SampleId>) -> Self {
        Self {
            shared: Arc::new(Shared {
                state: Mutex::new(QueueState {
                    classes,
                    batch: None,
                    labeled: already_labeled.into_iter().collect(),
                    closed: false,
                }),
                changed: Condvar::new(),
            }),
        }
    }

    fn lock(&self) -> MutexGuard<'_, QueueState> {
        self.shared.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Publishes a batch. Re-publishing the batch that is already open (same
    /// round, same requested ids) keeps its answers so a retried round does
    /// not throw away work.
    pub fn enqueue(&self, request: &AnnotationRequest, metadata_of: impl Fn(SampleId) -> Metadata) {
        let mut state = self.lock();
        let requested = request.ids();
        if let Some(open) = &state.batch {
            if open.round == request.round && open.requested == requested {
                return;
            }
        }
        let slots = request
            .queries
            .iter()
            .enumerate()
            .map(|(i, q)| Slot {
                query: q.clone(),
                predicted: request.selected.get(i).map(|c| c.predicted),
                answer: None,
            })
            .collect();
        let metadata = request.backlog.iter().map(|c| (c.id, metadata_of(c.id))).collect();
        state.batch = Some(Batch {
            round: request.round,
            requested,
            slots,
            backlog: request.backlog.clone(),
            metadata,
            class_aware: request.class_aware,
            skipped: HashSet::new(),
        });
        self.shared.changed.notify_all();
    }

    /// Open (unanswered) queries in batch order.
    pub fn pending(&self) -> Vec<LabelQuery> {
        let state = self.lock();
        state
            .batch
            .iter()
            .flat_map(|b| b.slots.iter())
            .filter(|s| s.answer.is_none())
            .map(|s| s.query.clone())
            .collect()
    }

    pub fn classes(&self) -> usize {
        self.lock().classes
    }

    pub fn post_label(&self, id: SampleId, class_id: ClassId, annotator: &str) -> Result<(), LabelRejection> {
        let mut state = self.lock();
        let classes = state.classes;
        if state.labeled.contains(&id) {
            return Err(LabelRejection::Conflict(id));
        }
        let slot = state
            .batch
            .as_mut()
            .and_then(|b| b.slots.iter_mut().find(|s| s.query.id == id))
            .ok_or(LabelRejection::UnknownId(id))?;
        if slot.answer.is_some() {
            return Err(LabelRejection::Conflict(id));
        }
        if usize::from(class_id) >= classes {
            return Err(LabelRejection::InvalidClass { class_id, classes });
        }
        slot.answer = Some(LabelAnswer {
            id,
            class_id,
            annotator: annotator.to_owned(),
            answered_at: now_millis(),
        });
        self.shared.changed.notify_all();
        Ok(())
    }

    /// Replaces the open query for `id` with the next most uncertain pool
    /// sample not already queued or skipped. In class-aware batches the
    /// replacement keeps the skipped query's predicted class when possible.
    pub fn skip(&self, id: SampleId) -> Result<LabelQuery, LabelRejection> {
        let mut state = self.lock();
        let labeled = state.labeled.clone();
        let batch = state.batch.as_mut().ok_or(LabelRejection::UnknownId(id))?;
        let idx = batch
            .slots
            .iter()
            .position(|s| s.query.id == id)
            .ok_or(LabelRejection::UnknownId(id))?;
        if batch.slots[idx].answer.is_some() {
            return Err(LabelRejection::Conflict(id));
        }
        let queued: HashSet<SampleId> = batch.slots.iter().map(|s| s.query.id).collect();
        let usable = |c: &&Candidate| {
            !queued.contains(&c.id) && !batch.skipped.contains(&c.id) && !labeled.contains(&c.id)
        };
        let want = batch.slots[idx].predicted.filter(|_| batch.class_aware);
        let pick = want
            .and_then(|class| batch.backlog.iter().filter(usable).find(|c| c.predicted == class))
            .or_else(|| batch.backlog.iter().find(usable))
            .copied()
            .ok_or(LabelRejection::NoReplacement(id))?;
        let metadata = batch
            .metadata
            .iter()
            .find(|(mid, _)| *mid == pick.id)
            .map(|(_, m)| m.clone())
            .unwrap_or_default();
        batch.skipped.insert(id);
        let query = LabelQuery {
            id: pick.id,
            round: batch.round,
            issued_at: now_millis(),
            metadata,
        };
        batch.slots[idx] = Slot {
            query: query.clone(),
            predicted: Some(pick.predicted),
            answer: None,
        };
        self.shared.changed.notify_all();
        Ok(query)
    }

    /// Blocks until every query of `round` is answered, then closes the
    /// batch and returns the answers in query order. `None` waits forever.
    pub fn await_answers(&self, round: usize, timeout: Option<Duration>) -> Result<Vec<LabelAnswer>, OracleError> {
        let deadline = timeout.map(|t| Instant::now() + t);
        let mut state = self.lock();
        loop {
            if state.closed {
                return Err(OracleError::Closed);
            }
            let (answered, total) = match &state.batch {
                Some(b) if b.round == round => (
                    b.slots.iter().filter(|s| s.answer.is_some()).count(),
                    b.slots.len(),
                ),
                _ => (0, 0),
            };
            if total > 0 && answered == total {
                let batch = state.batch.take().expect("checked above");
                let answers: Vec<LabelAnswer> = batch.slots.into_iter().filter_map(|s| s.answer).collect();
                state.labeled.extend(answers.iter().map(|a| a.id));
                return Ok(answers);
            }
            state = match deadline {
                None => self.shared.changed.wait(state).unwrap_or_else(|e| e.into_inner()),
                Some(deadline) => {
                    let now = Instant::now();
                    if now >= deadline {
                        return Err(OracleError::Timeout { round, answered, total });
                    }
                    self.shared
                        .changed
                        .wait_timeout(state, deadline - now)
                        .unwrap_or_else(|e| e.into_inner())
                        .0
                }
            };
        }
    }

    /// Wakes any waiter with [`OracleError::Closed`].
    pub fn close(&self) {
        self.lock().closed = true;
        self.shared.changed.notify_all();
    }
}

/// [`Oracle`] backed by a [`LabelQueue`] that humans answer.
pub struct HumanOracle {
    queue: LabelQueue,
    timeout: Option<Duration>,
    metadata: Box<dyn Fn(SampleId) -> Metadata + Send>,
    budget: usize,
}

impl HumanOracle {
    pub fn new(
        queue: LabelQueue,
        timeout: Option<Duration>,
        metadata: impl Fn(SampleId) -> Metadata + Send + 'static,
    ) -> Self {
        Self {
            queue,
            timeout,
            metadata: Box::new(metadata),
            budget: 0,
        }
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn queue(&self) -> &LabelQueue {
        &self.queue
    }
}

impl Oracle for HumanOracle {
    fn annotate(&mut self, request: &AnnotationRequest) -> Result<Vec<LabelAnswer>, OracleError> {
        self.queue.enqueue(request, &self.metadata);
        let answers = self.queue.await_answers(request.round, self.timeout)?;
        self.budget += answers.len();
        Ok(answers)
    }

    fn budget(&self) -> usize {
        self.budget
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::thread;

    fn query(id: SampleId, round: usize) -> LabelQuery {
        LabelQuery {
            id,
            round,
            issued_at: 0,
            metadata: Metadata::from([("clip".to_string(), format!("{id}.wav"))]),
        }
    }

    fn cand(id: SampleId, score: f64, predicted: ClassId) -> Candidate {
        Candidate { id, score, predicted }
    }

    fn request(round: usize, ids: &[SampleId], backlog: Vec<Candidate>, class_aware: bool) -> AnnotationRequest {
        AnnotationRequest {
            round,
            queries: ids.iter().map(|&id| query(id, round)).collect(),
            selected: ids.iter().enumerate().map(|(i, &id)| cand(id, 1.0, i as ClassId)).collect(),
            backlog,
            class_aware,
        }
    }

    fn meta(id: SampleId) -> Metadata {
        Metadata::from([("clip".to_string(), format!("{id}.wav"))])
    }

    #[test]
    fn six_queries_six_answers() {
        let queue = LabelQueue::new(6, []);
        let ids = [10, 11, 12, 13, 14, 15];
        queue.enqueue(&request(0, &ids, vec![], true), meta);
        assert_eq!(queue.pending().len(), 6);
        let annotator = queue.clone();
        let worker = thread::spawn(move || {
            // answer out of order; results still come back in query order
            for &id in ids.iter().rev() {
                annotator.post_label(id, (id - 10) as ClassId, "ann").unwrap();
            }
        });
        let answers = queue.await_answers(0, Some(Duration::from_secs(5))).unwrap();
        worker.join().unwrap();
        assert_eq!(answers.iter().map(|a| a.id).collect::<Vec<_>>(), ids);
        assert_eq!(answers.iter().map(|a| a.class_id).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4, 5]);
        assert!(queue.pending().is_empty());
    }

    #[test]
    fn rejections() {
        let queue = LabelQueue::new(3, [99]);
        queue.enqueue(&request(0, &[1, 2], vec![], false), meta);
        assert_eq!(
            queue.post_label(1, 3, "a"),
            Err(LabelRejection::InvalidClass { class_id: 3, classes: 3 })
        );
        assert_eq!(queue.pending().len(), 2, "invalid answer leaves the query open");
        queue.post_label(1, 2, "a").unwrap();
        assert_eq!(queue.post_label(1, 0, "b"), Err(LabelRejection::Conflict(1)));
        assert_eq!(queue.post_label(7, 0, "b"), Err(LabelRejection::UnknownId(7)));
        assert_eq!(queue.post_label(99, 0, "b"), Err(LabelRejection::Conflict(99)));
        assert_eq!(queue.pending().iter().map(|q| q.id).collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn timeout_keeps_batch_open_for_retry() {
        let queue = LabelQueue::new(2, []);
        let req = request(4, &[5, 6], vec![], false);
        queue.enqueue(&req, meta);
        queue.post_label(5, 1, "a").unwrap();
        assert_eq!(
            queue.await_answers(4, Some(Duration::from_millis(20))),
            Err(OracleError::Timeout { round: 4, answered: 1, total: 2 })
        );
        queue.enqueue(&req, meta);
        queue.post_label(6, 0, "a").unwrap();
        let answers = queue.await_answers(4, Some(Duration::from_millis(20))).unwrap();
        assert_eq!(answers.len(), 2);
    }

    #[test]
    fn skip_replaces_with_next_best_same_class() {
        let queue = LabelQueue::new(3, []);
        let backlog = vec![cand(30, 0.9, 2), cand(31, 0.8, 0), cand(32, 0.7, 1), cand(33, 0.6, 0)];
        // query 20 was predicted class 0, query 21 class 1
        queue.enqueue(&request(1, &[20, 21], backlog, true), meta);
        let replacement = queue.skip(20).unwrap();
        assert_eq!(replacement.id, 31);
        assert_eq!(replacement.metadata["clip"], "31.wav");
        let second = queue.skip(31).unwrap();
        assert_eq!(second.id, 33);
        assert_eq!(queue.skip(20), Err(LabelRejection::UnknownId(20)));
        assert_eq!(queue.pending().iter().map(|q| q.id).collect::<Vec<_>>(), vec![33, 21]);
    }

    #[test]
    fn skip_class_agnostic_and_exhaustion() {
        let queue = LabelQueue::new(2, []);
        queue.enqueue(&request(0, &[1], vec![cand(2, 0.5, 1)], false), meta);
        assert_eq!(queue.skip(1).unwrap().id, 2);
        assert_eq!(queue.skip(2), Err(LabelRejection::NoReplacement(2)));
    }

    #[test]
    fn human_oracle_counts_budget_and_closes() {
        let queue = LabelQueue::new(2, []);
        let mut oracle = HumanOracle::new(queue.clone(), Some(Duration::from_secs(5)), meta).with_budget(4);
        let poster = queue.clone();
        let worker = thread::spawn(move || loop {
            let pending = poster.pending();
            if let Some(q) = pending.first() {
                poster.post_label(q.id, 1, "bot").unwrap();
                return;
            }
            thread::sleep(Duration::from_millis(1));
        });
        let answers = oracle.annotate(&request(0, &[8], vec![], false)).unwrap();
        worker.join().unwrap();
        assert_eq!(answers[0].class_id, 1);
        assert_eq!(oracle.budget(), 5);
        queue.close();
        assert_eq!(queue.await_answers(1, None), Err(OracleError::Closed));
    }
}
