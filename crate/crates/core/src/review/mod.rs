//! Clinician review sessions.
//!
//! A session turns a [`ReviewBatch`] into items (one per rationale), hides
//! each rationale's source behind a key `S1..Sm`, and gives every rater a
//! seeded item order. Everything is persisted as an append-only event log
//! (`<root>/<session>.jsonl`); state is rebuilt from the log on load, and
//! aggregates are always computed from the latest sheets in that state.

mod server;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use crate::eval::{ReviewBatch, ReviewGroup};
pub use server::{router, serve};

pub const SCORE_MAX: i32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Criterion {
    Consistency,
    Correctness,
    Specificity,
    Helpfulness,
    HumanLikeness,
}

impl Criterion {
    pub const ALL: [Criterion; 5] = [
        Criterion::Consistency,
        Criterion::Correctness,
        Criterion::Specificity,
        Criterion::Helpfulness,
        Criterion::HumanLikeness,
    ];
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Taxonomy {
    MedicallyCorrect,
    InappropriateExpression,
    Ambiguity,
    IncorrectKnowledge,
}

impl Taxonomy {
    pub const ALL: [Taxonomy; 4] =
        [Taxonomy::MedicallyCorrect, Taxonomy::InappropriateExpression, Taxonomy::Ambiguity, Taxonomy::IncorrectKnowledge];
}

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("session {0} already exists")]
    DuplicateSession(String),
    #[error("invalid session id {0:?} (use letters, digits, '-' or '_')")]
    InvalidSessionId(String),
    #[error("unknown item {0}")]
    UnknownItem(String),
    #[error("unknown rater {0}")]
    UnknownRater(String),
    #[error("item {item} is not assigned to rater {rater}")]
    NotAssigned { item: String, rater: String },
    #[error("{criterion}: score {value} is outside 0-{SCORE_MAX}")]
    ScoreOutOfRange { criterion: Criterion, value: i32 },
    #[error("{0}: score missing")]
    MissingCriterion(Criterion),
    #[error("review batch is empty")]
    EmptyBatch,
    #[error("at least one rater is required")]
    NoRaters,
    #[error("duplicate rater {0}")]
    DuplicateRater(String),
    #[error("{path}: {message}")]
    Log { path: String, message: String },
}

impl ReviewError {
    /// The offending field, for validation errors.
    pub fn field(&self) -> Option<String> {
        match self {
            ReviewError::ScoreOutOfRange { criterion, .. } | ReviewError::MissingCriterion(criterion) => {
                Some(criterion.to_string())
            }
            ReviewError::UnknownItem(_) | ReviewError::NotAssigned { .. } => Some("item_id".into()),
            ReviewError::UnknownRater(_) => Some("rater_id".into()),
            _ => None,
        }
    }
}

/// What a rater sees. The source key is blinded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub item_id: String,
    pub description: String,
    pub rationale: String,
    pub source_key: String,
    pub group: ReviewGroup,
    #[serde(default)]
    pub reference: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreSheet {
    pub item_id: String,
    pub rater_id: String,
    pub scores: BTreeMap<Criterion, i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxonomy: Option<BTreeSet<Taxonomy>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl ScoreSheet {
    pub fn new(item_id: &str, rater_id: &str, scores: [i32; 5]) -> Self {
        ScoreSheet {
            item_id: item_id.to_string(),
            rater_id: rater_id.to_string(),
            scores: Criterion::ALL.into_iter().zip(scores).collect(),
            taxonomy: None,
            timestamp: None,
        }
    }

    pub fn with_taxonomy(mut self, tags: &[Taxonomy]) -> Self {
        self.taxonomy = Some(tags.iter().copied().collect());
        self
    }

    pub fn validate(&self) -> Result<(), ReviewError> {
        for c in Criterion::ALL {
            match self.scores.get(&c) {
                None => return Err(ReviewError::MissingCriterion(c)),
                Some(&v) if !(0..=SCORE_MAX).contains(&v) => {
                    return Err(ReviewError::ScoreOutOfRange { criterion: c, value: v })
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    fn annotated(&self) -> Option<&BTreeSet<Taxonomy>> {
        self.taxonomy.as_ref().filter(|t| !t.is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignmentMode {
    /// Every rater scores every item.
    #[default]
    AllRaters,
    /// Items are dealt round-robin, each to exactly one rater.
    Split,
}

impl std::str::FromStr for AssignmentMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all-raters" | "all" => Ok(AssignmentMode::AllRaters),
            "split" => Ok(AssignmentMode::Split),
            other => Err(format!("unknown assignment mode {other:?} (expected all-raters or split)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    SessionCreated {
        session_id: String,
        created_at: String,
        seed: u64,
        assignment: AssignmentMode,
        raters: Vec<String>,
        items: Vec<ReviewItem>,
        /// Blinded key → real source. Never served.
        source_map: BTreeMap<String, String>,
        queues: BTreeMap<String, Vec<String>>,
    },
    ScoreSubmitted {
        sheet: ScoreSheet,
    },
}

#[derive(Debug, Clone)]
struct SessionState {
    session_id: String,
    seed: u64,
    assignment: AssignmentMode,
    raters: Vec<String>,
    items: BTreeMap<String, ReviewItem>,
    source_map: BTreeMap<String, String>,
    queues: BTreeMap<String, Vec<String>>,
    latest: BTreeMap<(String, String), ScoreSheet>,
    audit: Vec<ScoreSheet>,
}

impl SessionState {
    fn from_events(events: impl IntoIterator<Item = Event>) -> Option<Self> {
        let mut state: Option<SessionState> = None;
        for ev in events {
            match ev {
                Event::SessionCreated { session_id, seed, assignment, raters, items, source_map, queues, .. } => {
                    state = Some(SessionState {
                        session_id,
                        seed,
                        assignment,
                        raters,
                        items: items.into_iter().map(|i| (i.item_id.clone(), i)).collect(),
                        source_map,
                        queues,
                        latest: BTreeMap::new(),
                        audit: Vec::new(),
                    })
                }
                Event::ScoreSubmitted { sheet } => {
                    if let Some(s) = state.as_mut() {
                        s.apply(sheet);
                    }
                }
            }
        }
        state
    }

    fn apply(&mut self, sheet: ScoreSheet) {
        self.latest.insert((sheet.rater_id.clone(), sheet.item_id.clone()), sheet.clone());
        self.audit.push(sheet);
    }

    fn check(&self, sheet: &ScoreSheet) -> Result<(), ReviewError> {
        sheet.validate()?;
        if !self.items.contains_key(&sheet.item_id) {
            return Err(ReviewError::UnknownItem(sheet.item_id.clone()));
        }
        let queue = self.queues.get(&sheet.rater_id).ok_or_else(|| ReviewError::UnknownRater(sheet.rater_id.clone()))?;
        if !queue.contains(&sheet.item_id) {
            return Err(ReviewError::NotAssigned { item: sheet.item_id.clone(), rater: sheet.rater_id.clone() });
        }
        Ok(())
    }

    fn pending(&self, rater: &str) -> Result<Vec<&ReviewItem>, ReviewError> {
        let queue = self.queues.get(rater).ok_or_else(|| ReviewError::UnknownRater(rater.to_string()))?;
        Ok(queue
            .iter()
            .filter(|id| !self.latest.contains_key(&(rater.to_string(), (*id).clone())))
            .map(|id| &self.items[id])
            .collect())
    }

    fn progress(&self) -> Progress {
        let raters = self
            .raters
            .iter()
            .map(|r| {
                let assigned = self.queues[r].len();
                let pending = self.pending(r).map(|p| p.len()).unwrap_or(0);
                (r.clone(), RaterProgress { assigned, submitted: assigned - pending, pending })
            })
            .collect::<BTreeMap<_, _>>();
        Progress {
            session_id: self.session_id.clone(),
            items: self.items.len(),
            assignments: raters.values().map(|p| p.assigned).sum(),
            submitted: raters.values().map(|p| p.submitted).sum(),
            pending: raters.values().map(|p| p.pending).sum(),
            raters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaterProgress {
    pub assigned: usize,
    pub submitted: usize,
    pub pending: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub session_id: String,
    pub items: usize,
    pub assignments: usize,
    pub submitted: usize,
    pub pending: usize,
    pub raters: BTreeMap<String, RaterProgress>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCell {
    pub source_key: String,
    pub group: ReviewGroup,
    pub criterion: Criterion,
    pub mean: f64,
    pub n: usize,
    pub per_rater: BTreeMap<String, f64>,
}

/// Mean absolute score difference between two raters on items both scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub criterion: Criterion,
    pub mean_abs_diff: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyReport {
    /// Sheets carrying at least one category.
    pub annotated: usize,
    /// Share of annotated sheets carrying each category.
    pub fractions: BTreeMap<Taxonomy, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub session_id: String,
    pub sheets: usize,
    pub cells: Vec<AggregateCell>,
    pub agreement: Vec<Agreement>,
    pub taxonomy: TaxonomyReport,
}

impl AggregateReport {
    pub fn cell(&self, source_key: &str, group: ReviewGroup, criterion: Criterion) -> Option<&AggregateCell> {
        self.cells.iter().find(|c| c.source_key == source_key && c.group == group && c.criterion == criterion)
    }
}

fn mean(xs: &[i32]) -> f64 {
    xs.iter().map(|&x| f64::from(x)).sum::<f64>() / xs.len() as f64
}

fn aggregate_state(state: &SessionState) -> AggregateReport {
    type Key = (String, ReviewGroup, Criterion);
    let mut all: BTreeMap<Key, Vec<i32>> = BTreeMap::new();
    let mut by_rater: BTreeMap<Key, BTreeMap<String, Vec<i32>>> = BTreeMap::new();
    for ((rater, item_id), sheet) in &state.latest {
        let item = &state.items[item_id];
        for (&c, &v) in &sheet.scores {
            let key = (item.source_key.clone(), item.group, c);
            all.entry(key.clone()).or_default().push(v);
            by_rater.entry(key).or_default().entry(rater.clone()).or_default().push(v);
        }
    }
    let cells = all
        .into_iter()
        .map(|(key, scores)| {
            let per_rater = by_rater[&key].iter().map(|(r, xs)| (r.clone(), mean(xs))).collect();
            AggregateCell { source_key: key.0, group: key.1, criterion: key.2, mean: mean(&scores), n: scores.len(), per_rater }
        })
        .collect();

    let mut per_item: BTreeMap<&str, Vec<&ScoreSheet>> = BTreeMap::new();
    for ((_, item_id), sheet) in &state.latest {
        per_item.entry(item_id.as_str()).or_default().push(sheet);
    }
    let agreement = Criterion::ALL
        .into_iter()
        .filter_map(|c| {
            let mut diffs = Vec::new();
            for sheets in per_item.values() {
                for (i, a) in sheets.iter().enumerate() {
                    for b in &sheets[i + 1..] {
                        diffs.push((a.scores[&c] - b.scores[&c]).abs());
                    }
                }
            }
            (!diffs.is_empty()).then(|| Agreement { criterion: c, mean_abs_diff: mean(&diffs), pairs: diffs.len() })
        })
        .collect();

    let annotated: Vec<&BTreeSet<Taxonomy>> = state.latest.values().filter_map(ScoreSheet::annotated).collect();
    let fractions = if annotated.is_empty() {
        BTreeMap::new()
    } else {
        Taxonomy::ALL
            .into_iter()
            .map(|t| (t, annotated.iter().filter(|s| s.contains(&t)).count() as f64 / annotated.len() as f64))
            .collect()
    };
    AggregateReport {
        session_id: state.session_id.clone(),
        sheets: state.latest.len(),
        cells,
        agreement,
        taxonomy: TaxonomyReport { annotated: annotated.len(), fractions },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionOptions {
    pub session_id: Option<String>,
    pub assignment: AssignmentMode,
}

impl Default for SessionOptions {
    fn default() -> Self {
        SessionOptions { session_id: None, assignment: AssignmentMode::AllRaters }
    }
}

/// Queue contents returned to a rater.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueView {
    pub session_id: String,
    pub rater: String,
    pub remaining: usize,
    pub items: Vec<ReviewItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub item_id: String,
    pub rater_id: String,
    pub replaced: bool,
    pub remaining: usize,
}

struct Session {
    log: PathBuf,
    state: RwLock<SessionState>,
    writer: Mutex<()>,
}

/// All sessions under one directory.
pub struct ReviewStore {
    root: PathBuf,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
}

fn log_err(path: &Path, e: impl std::fmt::Display) -> ReviewError {
    ReviewError::Log { path: path.display().to_string(), message: e.to_string() }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Reads a session log. A torn final line (no trailing newline) is ignored.
fn read_events(path: &Path) -> Result<Vec<Event>, ReviewError> {
    let text = std::fs::read_to_string(path).map_err(|e| log_err(path, e))?;
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut events = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(ev) => events.push(ev),
            Err(_) if i + 1 == lines.len() && !complete => break,
            Err(e) => return Err(log_err(path, format!("line {}: {e}", i + 1))),
        }
    }
    Ok(events)
}

fn append_event(path: &Path, ev: &Event, create_new: bool) -> Result<(), ReviewError> {
    let mut line = serde_json::to_string(ev).map_err(|e| log_err(path, e))?;
    line.push('\n');
    let mut opts = OpenOptions::new();
    if create_new {
        opts.write(true).create_new(true);
    } else {
        // drop a torn tail first, or the new event would be glued onto it
        let text = std::fs::read(path).map_err(|e| log_err(path, e))?;
        if text.last().is_some_and(|&b| b != b'\n') {
            let keep = text.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
            let f = OpenOptions::new().write(true).open(path).map_err(|e| log_err(path, e))?;
            f.set_len(keep as u64).map_err(|e| log_err(path, e))?;
        }
        opts.append(true);
    }
    let mut f = opts.open(path).map_err(|e| log_err(path, e))?;
    f.write_all(line.as_bytes()).map_err(|e| log_err(path, e))?;
    f.sync_data().map_err(|e| log_err(path, e))
}

/// Rebuilds a session from its log and aggregates it, bypassing any store.
pub fn aggregate_from_log(path: &Path) -> Result<AggregateReport, ReviewError> {
    let state = SessionState::from_events(read_events(path)?).ok_or_else(|| log_err(path, "no session_created event"))?;
    Ok(aggregate_state(&state))
}

impl ReviewStore {
    /// Opens `root`, loading every `*.jsonl` session log in it.
    pub fn open(root: &Path) -> Result<Self, ReviewError> {
        std::fs::create_dir_all(root).map_err(|e| log_err(root, e))?;
        let mut sessions = HashMap::new();
        let entries = std::fs::read_dir(root).map_err(|e| log_err(root, e))?;
        for entry in entries {
            let path = entry.map_err(|e| log_err(root, e))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("jsonl") {
                continue;
            }
            if let Some(state) = SessionState::from_events(read_events(&path)?) {
                sessions.insert(
                    state.session_id.clone(),
                    Arc::new(Session { log: path, state: RwLock::new(state), writer: Mutex::new(()) }),
                );
            }
        }
        Ok(ReviewStore { root: root.to_path_buf(), sessions: RwLock::new(sessions) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("store lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    fn session(&self, id: &str) -> Result<Arc<Session>, ReviewError> {
        self.sessions.read().expect("store lock").get(id).cloned().ok_or_else(|| ReviewError::UnknownSession(id.to_string()))
    }

    pub fn log_path(&self, id: &str) -> Result<PathBuf, ReviewError> {
        Ok(self.session(id)?.log.clone())
    }

    /// Creates and persists a session; returns its id.
    pub fn create_session(
        &self,
        batch: &ReviewBatch,
        raters: &[String],
        seed: u64,
        opts: &SessionOptions,
    ) -> Result<String, ReviewError> {
        if batch.item_count() == 0 {
            return Err(ReviewError::EmptyBatch);
        }
        if raters.is_empty() {
            return Err(ReviewError::NoRaters);
        }
        let mut seen = BTreeSet::new();
        for r in raters {
            if !seen.insert(r) {
                return Err(ReviewError::DuplicateRater(r.clone()));
            }
        }
        let session_id = match &opts.session_id {
            Some(id) => id.clone(),
            None => {
                let mut h = Sha256::new();
                h.update(serde_json::to_vec(batch).expect("batch is serializable"));
                h.update(seed.to_le_bytes());
                h.update(raters.join("\n").as_bytes());
                format!("session-{}", &hex::encode(h.finalize())[..12])
            }
        };
        if !valid_id(&session_id) {
            return Err(ReviewError::InvalidSessionId(session_id));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sources: Vec<String> = batch
            .records
            .iter()
            .flat_map(|r| r.rationales.iter().map(|x| x.source.clone()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        sources.shuffle(&mut rng);
        let key_of: BTreeMap<String, String> =
            sources.iter().enumerate().map(|(i, s)| (s.clone(), format!("S{}", i + 1))).collect();
        let source_map = key_of.iter().map(|(s, k)| (k.clone(), s.clone())).collect();

        let mut items = Vec::new();
        for rec in &batch.records {
            for r in &rec.rationales {
                let key = &key_of[&r.source];
                items.push(ReviewItem {
                    item_id: format!("{}-{key}", rec.record_id),
                    description: rec.description.clone(),
                    rationale: r.rationale.clone(),
                    source_key: key.clone(),
                    group: rec.group,
                    reference: r.reference,
                });
            }
        }
        let ids: Vec<String> = items.iter().map(|i| i.item_id.clone()).collect();
        let mut queues: BTreeMap<String, Vec<String>> = BTreeMap::new();
        match opts.assignment {
            AssignmentMode::AllRaters => {
                for r in raters {
                    let mut q = ids.clone();
                    q.shuffle(&mut rng);
                    queues.insert(r.clone(), q);
                }
            }
            AssignmentMode::Split => {
                let mut deal = ids.clone();
                deal.shuffle(&mut rng);
                for r in raters {
                    queues.insert(r.clone(), Vec::new());
                }
                for (i, id) in deal.into_iter().enumerate() {
                    queues.get_mut(&raters[i % raters.len()]).expect("rater queue").push(id);
                }
            }
        }

        let event = Event::SessionCreated {
            session_id: session_id.clone(),
            created_at: chrono::Utc::now().to_rfc3339(),
            seed,
            assignment: opts.assignment,
            raters: raters.to_vec(),
            items,
            source_map,
            queues,
        };
        let mut sessions = self.sessions.write().expect("store lock");
        let log = self.root.join(format!("{session_id}.jsonl"));
        if sessions.contains_key(&session_id) || log.exists() {
            return Err(ReviewError::DuplicateSession(session_id));
        }
        append_event(&log, &event, true)?;
        let state = SessionState::from_events([event]).expect("created event");
        sessions.insert(session_id.clone(), Arc::new(Session { log, state: RwLock::new(state), writer: Mutex::new(()) }));
        Ok(session_id)
    }

    /// Validates, persists, then applies a sheet. A sheet for an item the
    /// rater already scored replaces it; both stay in the log.
    pub fn submit_score(&self, session_id: &str, mut sheet: ScoreSheet) -> Result<Ack, ReviewError> {
        let session = self.session(session_id)?;
        let _w = session.writer.lock().expect("session writer");
        session.state.read().expect("session lock").check(&sheet)?;
        if sheet.timestamp.is_none() {
            sheet.timestamp = Some(chrono::Utc::now().to_rfc3339());
        }
        append_event(&session.log, &Event::ScoreSubmitted { sheet: sheet.clone() }, false)?;
        let mut state = session.state.write().expect("session lock");
        let replaced = state.latest.contains_key(&(sheet.rater_id.clone(), sheet.item_id.clone()));
        let (item_id, rater_id) = (sheet.item_id.clone(), sheet.rater_id.clone());
        state.apply(sheet);
        let remaining = state.pending(&rater_id)?.len();
        Ok(Ack { item_id, rater_id, replaced, remaining })
    }

    pub fn queue(&self, session_id: &str, rater: &str) -> Result<QueueView, ReviewError> {
        let session = self.session(session_id)?;
        let state = session.state.read().expect("session lock");
        let items: Vec<ReviewItem> = state.pending(rater)?.into_iter().cloned().collect();
        Ok(QueueView { session_id: session_id.to_string(), rater: rater.to_string(), remaining: items.len(), items })
    }

    pub fn progress(&self, session_id: &str) -> Result<Progress, ReviewError> {
        Ok(self.session(session_id)?.state.read().expect("session lock").progress())
    }

    pub fn aggregate(&self, session_id: &str) -> Result<AggregateReport, ReviewError> {
        Ok(aggregate_state(&self.session(session_id)?.state.read().expect("session lock")))
    }

    /// Every submitted sheet in submission order, replaced ones included.
    pub fn audit(&self, session_id: &str) -> Result<Vec<ScoreSheet>, ReviewError> {
        Ok(self.session(session_id)?.state.read().expect("session lock").audit.clone())
    }

    /// Blinded key → real source. For the study owner; never served over HTTP.
    pub fn unblind(&self, session_id: &str) -> Result<BTreeMap<String, String>, ReviewError> {
        Ok(self.session(session_id)?.state.read().expect("session lock").source_map.clone())
    }

    pub fn seed(&self, session_id: &str) -> Result<u64, ReviewError> {
        Ok(self.session(session_id)?.state.read().expect("session lock").seed)
    }

    pub fn assignment(&self, session_id: &str) -> Result<AssignmentMode, ReviewError> {
        Ok(self.session(session_id)?.state.read().expect("session lock").assignment)
    }
}
