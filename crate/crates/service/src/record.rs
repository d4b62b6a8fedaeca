//! Run records and their on-disk copies.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use yoho_core::io;

/// Records live next to, not inside, the run directories.
pub const RECORDS_DIR: &str = "records";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunState {
    Queued,
    Rendering,
    Training { step: usize, total: usize },
    Inferring,
    Done,
    Failed { reason: String },
}

impl RunState {
    fn rank(&self) -> u8 {
        match self {
            RunState::Queued => 0,
            RunState::Rendering => 1,
            RunState::Training { .. } => 2,
            RunState::Inferring => 3,
            RunState::Done | RunState::Failed { .. } => 4,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.rank() == 4
    }

    /// Whether moving from `self` to `next` keeps the listed order.
    pub fn can_become(&self, next: &RunState) -> bool {
        if self.is_terminal() {
            return false;
        }
        if matches!(next, RunState::Failed { .. }) {
            return true;
        }
        match (self, next) {
            (RunState::Training { step: a, .. }, RunState::Training { step: b, .. }) => b >= a,
            _ => next.rank() > self.rank(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub root: PathBuf,
    pub mask: Option<PathBuf>,
    pub prob: Option<PathBuf>,
    pub history: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    #[serde(flatten)]
    pub state: RunState,
    pub profile: String,
    pub image_width: usize,
    pub image_height: usize,
    /// Seconds since the Unix epoch.
    pub created_at: f64,
    pub started_at: Option<f64>,
    pub finished_at: Option<f64>,
    pub updated_at: f64,
    pub artifacts: Artifacts,
    pub final_train_dice: Option<f64>,
}

pub fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

impl RunRecord {
    pub fn save(&self, records: &Path) -> Result<(), io::IoError> {
        io::create_dir_all(records)?;
        let json = serde_json::to_vec_pretty(self).expect("record serializes");
        io::write_atomic(&records.join(format!("{}.json", self.run_id)), &json)
    }

    /// Every readable record in `records`.
    pub fn load_all(records: &Path) -> Vec<Self> {
        let Ok(entries) = std::fs::read_dir(records) else {
            return Vec::new();
        };
        let mut out: Vec<Self> = entries
            .flatten()
            .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
            .filter_map(|e| std::fs::read(e.path()).ok())
            .filter_map(|raw| serde_json::from_slice(&raw).ok())
            .collect();
        out.sort_by(|a: &Self, b| a.run_id.cmp(&b.run_id));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transitions_follow_the_listed_order() {
        let training = |step| RunState::Training { step, total: 40 };
        let failed = RunState::Failed { reason: "x".into() };
        assert!(RunState::Queued.can_become(&RunState::Rendering));
        assert!(RunState::Rendering.can_become(&training(0)));
        assert!(training(3).can_become(&training(4)));
        assert!(!training(4).can_become(&training(3)));
        assert!(training(40).can_become(&RunState::Inferring));
        assert!(RunState::Inferring.can_become(&RunState::Done));
        assert!(!RunState::Inferring.can_become(&RunState::Rendering));
        assert!(RunState::Queued.can_become(&failed));
        assert!(!RunState::Done.can_become(&failed));
        assert!(!failed.can_become(&RunState::Queued));
    }
}
