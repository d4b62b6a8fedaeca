//! HTTP service: submit one annotated image, poll the run, fetch the mask.
//!
//! Runs execute one at a time in submission order on a blocking worker thread;
//! request handlers only touch the record table.

pub mod record;
mod routes;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use tokio::sync::mpsc;
use yoho_core::annotation::AnnotatedImage;
use yoho_core::config::RunConfig;
use yoho_core::pipeline::{run_pipeline, Stage};

pub use record::{Artifacts, RunRecord, RunState};
pub use routes::{router, MAX_IMAGE_BYTES};

struct Job {
    run_id: String,
    annotated: AnnotatedImage,
    config: RunConfig,
}

struct Shared {
    root: PathBuf,
    runs: RwLock<BTreeMap<String, RunRecord>>,
    queue: mpsc::UnboundedSender<Job>,
    next_id: Mutex<u64>,
}

/// Handle shared by the request handlers and the worker.
#[derive(Clone)]
pub struct AppState {
    shared: Arc<Shared>,
}

impl AppState {
    /// Loads the records under `root` and starts the worker. Runs that were in
    /// flight when a previous process stopped are marked failed.
    pub fn start(root: &Path) -> Result<Self, yoho_core::io::IoError> {
        yoho_core::io::create_dir_all(root)?;
        let records_dir = root.join(record::RECORDS_DIR);
        let mut runs = BTreeMap::new();
        let mut next = 1;
        for mut rec in RunRecord::load_all(&records_dir) {
            if !rec.state.is_terminal() {
                rec.state = RunState::Failed {
                    reason: "interrupted by a service restart".into(),
                };
                rec.updated_at = record::now();
                rec.save(&records_dir)?;
            }
            if let Some(n) = rec.run_id.strip_prefix("run-").and_then(|n| n.parse::<u64>().ok()) {
                next = next.max(n + 1);
            }
            runs.insert(rec.run_id.clone(), rec);
        }
        let (tx, rx) = mpsc::unbounded_channel();
        let state = AppState {
            shared: Arc::new(Shared {
                root: root.to_path_buf(),
                runs: RwLock::new(runs),
                queue: tx,
                next_id: Mutex::new(next),
            }),
        };
        tokio::spawn(worker(state.clone(), rx));
        Ok(state)
    }

    pub fn root(&self) -> &Path {
        &self.shared.root
    }

    fn records_dir(&self) -> PathBuf {
        self.shared.root.join(record::RECORDS_DIR)
    }

    pub fn get(&self, id: &str) -> Option<RunRecord> {
        self.shared.runs.read().expect("run table").get(id).cloned()
    }

    pub fn list(&self) -> Vec<RunRecord> {
        self.shared.runs.read().expect("run table").values().cloned().collect()
    }

    fn allocate_id(&self) -> String {
        let mut next = self.shared.next_id.lock().expect("id counter");
        let id = format!("run-{:06}", *next);
        *next += 1;
        id
    }

    /// Records a queued run and hands it to the worker.
    fn submit(&self, annotated: AnnotatedImage, mut config: RunConfig, profile: String) -> Result<RunRecord, yoho_core::io::IoError> {
        let run_id = self.allocate_id();
        config.output_root = self.shared.root.clone();
        config.run_id = run_id.clone();
        let t = record::now();
        let rec = RunRecord {
            run_id: run_id.clone(),
            state: RunState::Queued,
            profile,
            image_width: annotated.width(),
            image_height: annotated.height(),
            created_at: t,
            started_at: None,
            finished_at: None,
            updated_at: t,
            artifacts: Artifacts {
                root: config.run_dir(),
                mask: None,
                prob: None,
                history: None,
                checkpoint: None,
            },
            final_train_dice: None,
        };
        rec.save(&self.records_dir())?;
        self.shared.runs.write().expect("run table").insert(run_id.clone(), rec.clone());
        let job = Job {
            run_id,
            annotated,
            config,
        };
        if self.shared.queue.send(job).is_err() {
            log::error!("worker is gone; run {} stays queued", rec.run_id);
        }
        Ok(rec)
    }

    /// Applies `f` to a record if the resulting state keeps the run's order, then persists it.
    fn update(&self, id: &str, f: impl FnOnce(&mut RunRecord)) {
        let snapshot = {
            let mut runs = self.shared.runs.write().expect("run table");
            let Some(rec) = runs.get_mut(id) else { return };
            let mut next = rec.clone();
            f(&mut next);
            if next.state != rec.state && !rec.state.can_become(&next.state) {
                log::warn!("run {id}: ignoring transition {:?} -> {:?}", rec.state, next.state);
                return;
            }
            next.updated_at = record::now();
            *rec = next.clone();
            next
        };
        if let Err(e) = snapshot.save(&self.records_dir()) {
            log::warn!("run {id}: cannot persist record: {e}");
        }
    }

    fn execute(&self, job: Job) {
        let id = job.run_id.clone();
        self.update(&id, |r| r.started_at = Some(record::now()));
        let mut progress = |stage: &Stage| {
            let state = match stage {
                Stage::Rendering => RunState::Rendering,
                Stage::Training { step, total } => RunState::Training {
                    step: *step,
                    total: *total,
                },
                Stage::Inferring => RunState::Inferring,
            };
            self.update(&id, |r| r.state = state);
        };
        match run_pipeline(&job.annotated, &job.config, false, &mut progress) {
            Ok(summary) => self.update(&id, |r| {
                r.state = RunState::Done;
                r.finished_at = Some(record::now());
                r.final_train_dice = summary.final_train_dice;
                r.artifacts.mask = Some(summary.paths.mask.clone());
                r.artifacts.prob = Some(summary.paths.prob.clone());
                r.artifacts.history = Some(summary.paths.history.clone());
                r.artifacts.checkpoint = Some(summary.paths.checkpoint.clone());
            }),
            Err(e) => {
                log::warn!("run {id} failed: {e}");
                self.update(&id, |r| {
                    r.state = RunState::Failed { reason: e.to_string() };
                    r.finished_at = Some(record::now());
                });
            }
        }
    }
}

async fn worker(state: AppState, mut rx: mpsc::UnboundedReceiver<Job>) {
    while let Some(job) = rx.recv().await {
        let s = state.clone();
        let id = job.run_id.clone();
        if let Err(e) = tokio::task::spawn_blocking(move || s.execute(job)).await {
            state.update(&id, |r| {
                r.state = RunState::Failed {
                    reason: format!("worker crashed: {e}"),
                };
                r.finished_at = Some(record::now());
            });
        }
    }
}
