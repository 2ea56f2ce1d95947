//! Session state and the in-memory store with optional file persistence.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use base64::Engine;
use ptzcal_core::camera::{BaseRecord, CameraBase, PtzParams};
use ptzcal_core::descriptor::GrayImage;
use ptzcal_core::{CalibSolution, FieldModel};
use serde::{Deserialize, Serialize};
use tokio::sync::{Mutex, RwLock};

use crate::api::{AnnotationPoint, SessionView, SolutionPayload};

#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub base: CameraBase,
    pub field: FieldModel,
    pub image: Option<GrayImage>,
    pub ground_truth: Option<PtzParams>,
    pub annotation: Vec<AnnotationPoint>,
    pub last_solution: Option<CalibSolution>,
}

impl Session {
    pub fn view(&self) -> SessionView {
        SessionView {
            session_id: self.id.clone(),
            base: BaseRecord::from(&self.base),
            field: self.field.clone(),
            has_image: self.image.is_some(),
            ground_truth: self.ground_truth,
            annotation: self.annotation.clone(),
            last_solution: self.last_solution.as_ref().map(SolutionPayload::from),
        }
    }
}

/// On-disk form of a session.
#[derive(Debug, Serialize, Deserialize)]
struct SessionRecord {
    id: String,
    base: BaseRecord,
    field: FieldModel,
    image_pgm_base64: Option<String>,
    ground_truth: Option<PtzParams>,
    annotation: Vec<AnnotationPoint>,
    last_solution: Option<CalibSolution>,
}

impl From<&Session> for SessionRecord {
    fn from(s: &Session) -> Self {
        Self {
            id: s.id.clone(),
            base: BaseRecord::from(&s.base),
            field: s.field.clone(),
            image_pgm_base64: s
                .image
                .as_ref()
                .map(|i| base64::engine::general_purpose::STANDARD.encode(i.to_pgm())),
            ground_truth: s.ground_truth,
            annotation: s.annotation.clone(),
            last_solution: s.last_solution,
        }
    }
}

impl TryFrom<SessionRecord> for Session {
    type Error = String;

    fn try_from(r: SessionRecord) -> Result<Self, String> {
        let image = match r.image_pgm_base64 {
            Some(b) => {
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(b)
                    .map_err(|e| e.to_string())?;
                Some(GrayImage::from_pgm(&bytes).map_err(|e| e.to_string())?)
            }
            None => None,
        };
        Ok(Session {
            id: r.id,
            base: CameraBase::try_from(&r.base).map_err(|e| e.to_string())?,
            field: r.field,
            image,
            ground_truth: r.ground_truth,
            annotation: r.annotation,
            last_solution: r.last_solution,
        })
    }
}

/// Sessions keyed by id. Each session sits behind its own lock, so
/// requests on one session run one at a time while different sessions
/// proceed independently.
#[derive(Debug, Default)]
pub struct SessionStore {
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
    persist_dir: Option<PathBuf>,
}

impl SessionStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Store backed by `dir`; sessions already saved there are loaded.
    pub fn persistent(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut sessions = HashMap::new();
        let mut max_id = 0;
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = std::fs::read_to_string(&path)?;
            let record: SessionRecord = serde_json::from_str(&text)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
            let session = Session::try_from(record)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
            if let Some(n) = session.id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
                max_id = max_id.max(n);
            }
            sessions.insert(session.id.clone(), Arc::new(Mutex::new(session)));
        }
        Ok(Self {
            sessions: RwLock::new(sessions),
            next_id: AtomicU64::new(max_id),
            persist_dir: Some(dir.to_path_buf()),
        })
    }

    fn new_id(&self) -> String {
        format!("s{}", self.next_id.fetch_add(1, Ordering::Relaxed) + 1)
    }

    /// Inserts a session built for a fresh id and returns the id.
    pub async fn create(&self, build: impl FnOnce(String) -> Session) -> std::io::Result<String> {
        let id = self.new_id();
        let session = build(id.clone());
        self.save(&session)?;
        self.sessions.write().await.insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(id)
    }

    pub async fn get(&self, id: &str) -> Option<Arc<Mutex<Session>>> {
        self.sessions.read().await.get(id).cloned()
    }

    pub async fn len(&self) -> usize {
        self.sessions.read().await.len()
    }

    pub async fn is_empty(&self) -> bool {
        self.len().await == 0
    }

    /// Writes the session file when persistence is enabled.
    pub fn save(&self, session: &Session) -> std::io::Result<()> {
        let Some(dir) = &self.persist_dir else {
            return Ok(());
        };
        let text = serde_json::to_string(&SessionRecord::from(session)).map_err(std::io::Error::other)?;
        let tmp = dir.join(format!("{}.json.tmp", session.id));
        std::fs::write(&tmp, text)?;
        std::fs::rename(tmp, dir.join(format!("{}.json", session.id)))
    }
}
