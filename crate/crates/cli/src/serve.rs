//! Human-oracle service: one AL experiment whose labels come from HTTP.
//!
//! A worker thread owns the experiment state and is its only writer. It
//! talks to the HTTP handlers exclusively through the [`LabelQueue`] and
//! publishes a read-only [`Status`] after every change. A snapshot is
//! written after seeding and after every round, so a restarted service
//! resumes exactly where it stopped.

use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::thread::JoinHandle;
use std::time::Duration;

use aloe_core::al_loop::{finish, AlError, AlState, ExperimentConfig};
use aloe_core::embeddings::{read_dataset, Dataset};
use aloe_core::oracle::snapshot::{read_snapshot, write_snapshot, Snapshot};
use aloe_core::oracle::{HumanOracle, LabelQueue, LabelRejection, OracleError, SimulatedOracle};
use aloe_core::rng::run_rng;
use aloe_core::{run_round, seed_initial, AcquisitionStrategy, ClassId, SampleId};
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::ServeArgs;
use crate::error::CliError;

const INDEX_HTML: &str = include_str!("../assets/index.html");

pub struct ServeOptions {
    pub dataset: Dataset,
    pub config: ExperimentConfig,
    pub state_dir: PathBuf,
    /// Per-round wait before a partial batch is reissued; `None` waits forever.
    pub timeout: Option<Duration>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub round: usize,
    pub val_accuracy: Option<f64>,
    pub cumulative_labels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Status {
    pub round: usize,
    /// |D_l|, seeds included.
    pub labeled: usize,
    /// |D_u|.
    pub pool: usize,
    /// Acquisition rounds this experiment runs for.
    pub budget: usize,
    pub finished: bool,
    pub final_test_accuracy: Option<f64>,
    /// Set when the worker stopped on an error.
    pub error: Option<String>,
    pub history: Vec<HistoryEntry>,
}

impl Status {
    fn of(state: Option<&AlState>, rounds: usize, final_test_accuracy: Option<f64>) -> Self {
        let Some(state) = state else {
            return Self {
                round: 0,
                labeled: 0,
                pool: 0,
                budget: rounds,
                finished: false,
                final_test_accuracy: None,
                error: None,
                history: Vec::new(),
            };
        };
        Self {
            round: state.round,
            labeled: state.labeled_ids.len(),
            pool: state.pool_ids.len(),
            budget: rounds,
            finished: state.finished,
            final_test_accuracy,
            error: None,
            history: state
                .history
                .iter()
                .map(|r| HistoryEntry {
                    round: r.round,
                    val_accuracy: r.val_accuracy,
                    cumulative_labels: r.cumulative_labels,
                })
                .collect(),
        }
    }
}

#[derive(Clone)]
struct AppState {
    queue: LabelQueue,
    status: Arc<RwLock<Status>>,
    classes: Arc<Vec<String>>,
}

/// A running experiment plus the handles needed to serve and stop it.
pub struct Service {
    queue: LabelQueue,
    status: Arc<RwLock<Status>>,
    classes: Arc<Vec<String>>,
    worker: Option<JoinHandle<Result<(), CliError>>>,
}

struct Worker {
    dataset: Arc<Dataset>,
    config: ExperimentConfig,
    state_dir: PathBuf,
    timeout: Option<Duration>,
    queue: LabelQueue,
    status: Arc<RwLock<Status>>,
}

impl Service {
    /// Loads (or refuses) the snapshot in `state_dir` and starts the worker.
    pub fn start(opts: ServeOptions) -> Result<Self, CliError> {
        opts.config.validate()?;
        opts.dataset.require_splits()?;
        if opts.dataset.num_classes() < 2 {
            return Err(CliError::Usage(
                "need at least two classes to annotate (pass --classes for unlabeled data)".into(),
            ));
        }
        let resumed = match read_snapshot(&opts.state_dir)? {
            Some(s) => {
                s.check_compatible(&opts.dataset, &opts.config)?;
                log::info!(
                    "resuming from {} at round {}",
                    opts.state_dir.display(),
                    s.state.round
                );
                Some(s)
            }
            None => None,
        };
        let queue = LabelQueue::new(
            opts.dataset.num_classes(),
            resumed.iter().flat_map(|s| s.state.labeled_ids.iter().copied()),
        );
        let status = Arc::new(RwLock::new(Status::of(
            resumed.as_ref().map(|s| &s.state),
            opts.config.rounds,
            resumed.as_ref().and_then(|s| s.final_test_accuracy),
        )));
        let classes = Arc::new(opts.dataset.classes().to_vec());
        let worker = Worker {
            dataset: Arc::new(opts.dataset),
            config: opts.config,
            state_dir: opts.state_dir,
            timeout: opts.timeout,
            queue: queue.clone(),
            status: status.clone(),
        };
        let handle = std::thread::Builder::new()
            .name("aloe-loop".into())
            .spawn(move || {
                let status = worker.status.clone();
                let result = worker.run(resumed.map(|s| s.state));
                if let Err(e) = &result {
                    log::error!("experiment stopped: {e}");
                    write_status(&status, |s| s.error = Some(e.to_string()));
                }
                result
            })
            .map_err(|e| CliError::Runtime(format!("cannot start worker: {e}")))?;
        Ok(Self {
            queue,
            status,
            classes,
            worker: Some(handle),
        })
    }

    pub fn router(&self) -> Router {
        router(AppState {
            queue: self.queue.clone(),
            status: self.status.clone(),
            classes: self.classes.clone(),
        })
    }

    pub fn status(&self) -> Status {
        self.status.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Stops waiting for labels and joins the worker. Completed rounds are
    /// already on disk; the open batch is dropped and reissued on restart.
    pub fn shutdown(mut self) -> Result<(), CliError> {
        self.queue.close();
        self.join()
    }

    fn join(&mut self) -> Result<(), CliError> {
        match self.worker.take() {
            Some(h) => h
                .join()
                .map_err(|_| CliError::Runtime("experiment worker panicked".into()))?,
            None => Ok(()),
        }
    }
}

impl Drop for Service {
    fn drop(&mut self) {
        if self.worker.is_some() {
            self.queue.close();
            let _ = self.join();
        }
    }
}

fn write_status(status: &RwLock<Status>, f: impl FnOnce(&mut Status)) {
    f(&mut status.write().unwrap_or_else(|e| e.into_inner()));
}

/// What the worker should do after an oracle failure.
enum Retry {
    Again,
    Stop,
}

fn on_oracle_error(e: AlError) -> Result<Retry, CliError> {
    match e {
        AlError::Oracle {
            source: OracleError::Timeout { round, answered, total },
            ..
        } => {
            log::warn!("round {round}: {answered}/{total} labels before timeout; reissuing");
            Ok(Retry::Again)
        }
        AlError::Oracle {
            source: OracleError::Closed,
            ..
        } => Ok(Retry::Stop),
        other => Err(other.into()),
    }
}

impl Worker {
    fn human(&self, already: usize) -> HumanOracle {
        let dataset = self.dataset.clone();
        HumanOracle::new(self.queue.clone(), self.timeout, move |id: SampleId| {
            dataset.metadata_for(id).cloned().unwrap_or_default()
        })
        .with_budget(already)
    }

    fn publish(&self, state: &AlState, final_test_accuracy: Option<f64>) {
        let status = Status::of(Some(state), self.config.rounds, final_test_accuracy);
        write_status(&self.status, |s| *s = status);
    }

    fn save(&self, state: &AlState, final_test_accuracy: Option<f64>) -> Result<(), CliError> {
        let mut snap = Snapshot::new(&self.dataset, &self.config, state);
        snap.final_test_accuracy = final_test_accuracy;
        write_snapshot(&self.state_dir, &snap)?;
        self.publish(state, final_test_accuracy);
        Ok(())
    }

    /// Seeds the experiment: ground truth when the dataset has it (exactly
    /// as a simulated run would), otherwise the annotators label a uniform
    /// seed sample.
    fn seed(&self) -> Result<Option<AlState>, CliError> {
        let d = &*self.dataset;
        let spc = self.config.seeds_per_class;
        loop {
            let rng = run_rng(self.config.run_seed, 0);
            let result = if d.has_labels() {
                seed_initial(d, spc, rng, &mut SimulatedOracle::new(d))
            } else {
                seed_initial(d, spc, rng, &mut self.human(0))
            };
            match result {
                Ok(state) => return Ok(Some(state)),
                Err(e) => match on_oracle_error(e)? {
                    Retry::Again => continue,
                    Retry::Stop => return Ok(None),
                },
            }
        }
    }

    fn run(self, resumed: Option<AlState>) -> Result<(), CliError> {
        let mut state = match resumed {
            Some(s) => s,
            None => match self.seed()? {
                Some(s) => {
                    self.save(&s, None)?;
                    s
                }
                None => return Ok(()),
            },
        };
        let d = &*self.dataset;
        let mut oracle = self.human(state.budget());
        while !state.finished {
            let plateau = self.config.early_stop.is_some_and(|r| r.fires(&state.history));
            if state.round >= self.config.rounds || state.pool_ids.is_empty() || plateau {
                let metrics = finish(&mut state, d, &self.config)?;
                self.save(&state, metrics.test_accuracy)?;
                log::info!("experiment finished after {} rounds", state.round);
                break;
            }
            match run_round(&mut state, d, &self.config, &mut oracle) {
                Ok(_) => self.save(&state, None)?,
                Err(e) => match on_oracle_error(e)? {
                    Retry::Again => continue,
                    Retry::Stop => return Ok(()),
                },
            }
        }
        Ok(())
    }
}

fn router(state: AppState) -> Router {
    Router::new()
        .route("/", get(index))
        .route("/api/status", get(status))
        .route("/api/classes", get(classes))
        .route("/api/queue", get(queue))
        .route("/api/labels", post(labels))
        .route("/api/skip", post(skip))
        .with_state(state)
}

async fn index() -> Html<&'static str> {
    Html(INDEX_HTML)
}

async fn status(State(app): State<AppState>) -> Json<Status> {
    Json(app.status.read().unwrap_or_else(|e| e.into_inner()).clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub id: ClassId,
    pub name: String,
}

async fn classes(State(app): State<AppState>) -> Json<Vec<ClassEntry>> {
    Json(
        app.classes
            .iter()
            .enumerate()
            .map(|(i, name)| ClassEntry {
                id: i as ClassId,
                name: name.clone(),
            })
            .collect(),
    )
}

/// One open query as shown to annotators: no embedding, only metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub id: SampleId,
    pub round: usize,
    pub metadata: aloe_core::embeddings::Metadata,
}

async fn queue(State(app): State<AppState>) -> Json<Vec<QueueEntry>> {
    Json(
        app.queue
            .pending()
            .into_iter()
            .map(|q| QueueEntry {
                id: q.id,
                round: q.round,
                metadata: q.metadata,
            })
            .collect(),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelBody {
    pub id: SampleId,
    pub class_id: ClassId,
    #[serde(default = "anonymous")]
    pub annotator: String,
}

fn anonymous() -> String {
    "anonymous".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkipBody {
    pub id: SampleId,
}

fn rejection(e: LabelRejection) -> Response {
    let code = match e {
        LabelRejection::Conflict(_) | LabelRejection::NoReplacement(_) => StatusCode::CONFLICT,
        LabelRejection::UnknownId(_) | LabelRejection::InvalidClass { .. } => StatusCode::UNPROCESSABLE_ENTITY,
    };
    (code, Json(json!({ "error": e.to_string() }))).into_response()
}

async fn labels(State(app): State<AppState>, Json(body): Json<LabelBody>) -> Response {
    match app.queue.post_label(body.id, body.class_id, &body.annotator) {
        Ok(()) => Json(json!({ "accepted": body.id, "open": app.queue.pending().len() })).into_response(),
        Err(e) => rejection(e),
    }
}

async fn skip(State(app): State<AppState>, Json(body): Json<SkipBody>) -> Response {
    match app.queue.skip(body.id) {
        Ok(q) => Json(QueueEntry {
            id: q.id,
            round: q.round,
            metadata: q.metadata,
        })
        .into_response(),
        Err(e) => rejection(e),
    }
}

/// `aloe serve`: load data, start the worker, serve until Ctrl-C.
pub fn run_blocking(a: ServeArgs) -> Result<(), CliError> {
    let mut dataset = read_dataset(&a.data)?;
    if !a.classes.is_empty() {
        dataset = dataset.with_classes(a.classes)?;
    }
    let mut config = ExperimentConfig {
        strategy: AcquisitionStrategy::new(a.strategy, a.mode),
        runs: 1,
        ..Default::default()
    };
    a.experiment.apply(&mut config);
    let service = Service::start(ServeOptions {
        dataset,
        config,
        state_dir: a.state_dir,
        timeout: a.timeout_secs.map(Duration::from_secs),
    })?;
    let app = service.router();
    let addr = format!("{}:{}", a.host, a.port);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Runtime(format!("cannot bind {addr}: {e}")))?;
        log::info!("serving on http://{addr}");
        eprintln!("serving on http://{addr}");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Runtime(e.to_string()))
    })?;
    service.shutdown()
}
