//! Rationalization and diagnosis campaigns, and the distillation export.
//!
//! A campaign builds one request per case, fans the requests out over up
//! to `max_in_flight` worker threads and commits results in input order.
//! With a campaign directory, each finished request is appended to
//! `checkpoint.jsonl` as it arrives; a rerun over the same directory reuses
//! every successful entry whose request digest still matches.
//!
//! Directory layout: `config.json` (settings snapshot), `checkpoint.jsonl`
//! (arrival order), `results.jsonl` (input order), `summary.json` (counts and
//! timestamps) and, for diagnosis runs, `predictions.json`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

use crate::cohort::{Diagnosis, PatientRecord};
use crate::jsonl::{self, JsonlError};
use crate::llm::{Backend, CompletionRequest};
use crate::parse::{parse_output, split_sections, ParsedOutput};
use crate::prompts::{build_diagnosis_prompt, build_rationalization_prompt, DecodeParams, DiagnoseMode, Exemplar, PromptError};
use crate::textualize::{describe, LevelCase, ThresholdTable};

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error("prompt for record {record_id}: {source}")]
    Prompt { record_id: String, source: PromptError },
    #[error("{0} is not supported")]
    Unsupported(&'static str),
    #[error("campaign directory {dir} holds a different configuration; use a new campaign id")]
    ConfigMismatch { dir: String },
    #[error("multimodal export needs mri_ref on every triplet; missing for: {}", .0.join(", "))]
    MissingMriRef(Vec<String>),
    #[error("triplet {0} has an empty description or rationale")]
    InvalidTriplet(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

/// One patient as the runner sees it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseInput {
    pub record_id: String,
    pub description: String,
    pub gold: Diagnosis,
    pub mri_ref: Option<String>,
}

/// Textualizes `records` against `table`.
pub fn case_inputs(records: &[PatientRecord], table: &ThresholdTable, case: LevelCase) -> Vec<CaseInput> {
    records
        .iter()
        .map(|r| CaseInput {
            record_id: r.id.clone(),
            description: describe(r, table, case).text,
            gold: r.gold,
            mri_ref: r.mri_ref.clone(),
        })
        .collect()
}

/// How rationale and diagnosis are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Rationale then diagnosis in a single completion.
    #[default]
    SingleCompletion,
    /// Separate rationale and diagnosis requests. Not implemented.
    TwoStage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignOptions {
    pub campaign_id: String,
    pub model_id: String,
    /// Free-form backend description stored in the config snapshot.
    pub backend_label: String,
    pub seed: u64,
    pub decode: DecodeParams,
    pub strategy: Strategy,
    /// Caps the backend's own limit.
    pub max_in_flight: Option<usize>,
    #[serde(skip)]
    pub dir: Option<PathBuf>,
}

impl CampaignOptions {
    pub fn new(campaign_id: &str, model_id: &str) -> Self {
        CampaignOptions {
            campaign_id: campaign_id.to_string(),
            model_id: model_id.to_string(),
            backend_label: String::new(),
            seed: 0,
            decode: DecodeParams::default(),
            strategy: Strategy::SingleCompletion,
            max_in_flight: None,
            dir: None,
        }
    }

    pub fn in_dir(mut self, dir: &Path) -> Self {
        self.dir = Some(dir.to_path_buf());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    /// Short error class, e.g. `cache-miss`.
    pub class: String,
    pub message: String,
}

/// One checkpoint line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Attempt {
    record_id: String,
    digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    failure: Option<Failure>,
}

#[derive(Serialize)]
struct ConfigSnapshot<'a> {
    kind: &'a str,
    #[serde(flatten)]
    options: CampaignOptions,
    mode: Option<DiagnoseMode>,
    k: Option<usize>,
    records: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub campaign_id: String,
    pub total: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub reused_from_checkpoint: usize,
    pub started_at: String,
    pub finished_at: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunnerError + '_ {
    move |source| RunnerError::Io { path: path.display().to_string(), source }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunnerError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

/// Creates the directory and checks or writes the config snapshot.
/// Returns the checkpointed attempts by record id.
fn open_dir(dir: &Path, snapshot: &ConfigSnapshot<'_>) -> Result<HashMap<String, Attempt>, RunnerError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let config_path = dir.join("config.json");
    let fresh = serde_json::to_value(snapshot)?;
    if config_path.exists() {
        let text = std::fs::read_to_string(&config_path).map_err(io_err(&config_path))?;
        let stored: serde_json::Value = serde_json::from_str(&text)?;
        if stored != fresh {
            return Err(RunnerError::ConfigMismatch { dir: dir.display().to_string() });
        }
    } else {
        write_json(&config_path, &fresh)?;
    }
    let checkpoint = dir.join("checkpoint.jsonl");
    let mut done = HashMap::new();
    if checkpoint.exists() {
        for a in jsonl::read::<Attempt>(&checkpoint)? {
            if a.text.is_some() {
                done.insert(a.record_id.clone(), a);
            }
        }
    }
    Ok(done)
}

struct Executed {
    attempts: Vec<Attempt>,
    reused: usize,
    started_at: String,
}

fn execute(
    backend: &dyn Backend,
    jobs: &[(String, CompletionRequest)],
    limit: usize,
    resume: HashMap<String, Attempt>,
    checkpoint: Option<&Path>,
) -> Result<Executed, RunnerError> {
    let started_at = chrono::Utc::now().to_rfc3339();
    let mut slots: Vec<Option<Attempt>> = vec![None; jobs.len()];
    let mut pending = Vec::new();
    for (i, (id, req)) in jobs.iter().enumerate() {
        match resume.get(id) {
            Some(a) if a.digest == req.digest() => slots[i] = Some(a.clone()),
            _ => pending.push(i),
        }
    }
    let reused = jobs.len() - pending.len();
    let next = AtomicUsize::new(0);
    let workers = limit.max(1).min(pending.len());
    let (tx, rx) = mpsc::channel::<(usize, Attempt)>();
    let mut write_error = None;
    std::thread::scope(|s| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, pending) = (&next, &pending);
            s.spawn(move || loop {
                let Some(&i) = pending.get(next.fetch_add(1, Ordering::Relaxed)) else { break };
                let (id, req) = &jobs[i];
                let mut a = Attempt { record_id: id.clone(), digest: req.digest(), text: None, failure: None };
                match backend.complete(req) {
                    Ok(c) => a.text = Some(c.text),
                    Err(e) => a.failure = Some(Failure { class: e.class().to_string(), message: e.to_string() }),
                }
                if tx.send((i, a)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, a) in rx {
            if let (Some(path), None) = (checkpoint, &write_error) {
                if let Err(e) = jsonl::append(path, &a) {
                    write_error = Some(e);
                }
            }
            slots[i] = Some(a);
        }
    });
    if let Some(e) = write_error {
        return Err(e.into());
    }
    let attempts = slots.into_iter().map(|a| a.expect("every job reports")).collect();
    Ok(Executed { attempts, reused, started_at })
}

fn limit(backend: &dyn Backend, opts: &CampaignOptions) -> usize {
    let b = backend.max_in_flight().max(1);
    opts.max_in_flight.map_or(b, |m| m.clamp(1, b))
}

fn finish_dir<T: Serialize>(
    dir: &Path,
    opts: &CampaignOptions,
    results: &[T],
    ex: &Executed,
) -> Result<CampaignSummary, RunnerError> {
    jsonl::write(&dir.join("results.jsonl"), results)?;
    let summary = summarize(opts, ex);
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

fn summarize(opts: &CampaignOptions, ex: &Executed) -> CampaignSummary {
    let failed = ex.attempts.iter().filter(|a| a.failure.is_some()).count();
    CampaignSummary {
        campaign_id: opts.campaign_id.clone(),
        total: ex.attempts.len(),
        succeeded: ex.attempts.len() - failed,
        failed,
        reused_from_checkpoint: ex.reused,
        started_at: ex.started_at.clone(),
        finished_at: chrono::Utc::now().to_rfc3339(),
    }
}

// ---------------------------------------------------------------- rationalize

/// A training example: description, rationale and gold label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistillTriplet {
    #[serde(rename = "id")]
    pub record_id: String,
    pub description: String,
    pub rationale: String,
    #[serde(rename = "diagnosis")]
    pub gold: Diagnosis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mri_ref: Option<String>,
}

impl DistillTriplet {
    pub fn is_valid(&self) -> bool {
        !self.description.trim().is_empty() && !self.rationale.trim().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum RationaleStatus {
    Accepted,
    EmptyRationale,
    Filtered,
    Failed { failure: Failure },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationaleOutcome {
    pub record_id: String,
    #[serde(flatten)]
    pub status: RationaleStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RationalizeReport {
    pub campaign_id: String,
    /// Accepted triplets in input order.
    pub triplets: Vec<DistillTriplet>,
    /// One entry per input case.
    pub outcomes: Vec<RationaleOutcome>,
    pub summary: CampaignSummary,
}

impl RationalizeReport {
    pub fn flagged(&self) -> impl Iterator<Item = &RationaleOutcome> {
        self.outcomes.iter().filter(|o| o.status != RationaleStatus::Accepted)
    }
}

/// Pass-through rationale filter.
pub fn keep_all(_: &DistillTriplet) -> bool {
    true
}

/// Runs the rationalization prompt (gold label shown) over every case.
pub fn rationalize_dataset(
    cases: &[CaseInput],
    backend: &dyn Backend,
    exemplars: &[Exemplar],
    opts: &CampaignOptions,
) -> Result<RationalizeReport, RunnerError> {
    rationalize_dataset_filtered(cases, backend, exemplars, opts, &keep_all)
}

/// As [`rationalize_dataset`], with a hook that may reject triplets.
pub fn rationalize_dataset_filtered(
    cases: &[CaseInput],
    backend: &dyn Backend,
    exemplars: &[Exemplar],
    opts: &CampaignOptions,
    filter: &dyn Fn(&DistillTriplet) -> bool,
) -> Result<RationalizeReport, RunnerError> {
    if opts.strategy == Strategy::TwoStage {
        return Err(RunnerError::Unsupported("the two-stage strategy"));
    }
    let jobs = cases
        .iter()
        .map(|c| {
            let bundle = build_rationalization_prompt(exemplars, &c.description, c.gold)
                .map_err(|source| RunnerError::Prompt { record_id: c.record_id.clone(), source })?;
            Ok((c.record_id.clone(), bundle.with_decode(opts.decode).to_request(&opts.model_id)))
        })
        .collect::<Result<Vec<_>, RunnerError>>()?;

    let snapshot = ConfigSnapshot { kind: "rationalize", options: opts.clone(), mode: None, k: None, records: cases.len() };
    let resume = match &opts.dir {
        Some(d) => open_dir(d, &snapshot)?,
        None => HashMap::new(),
    };
    let checkpoint = opts.dir.as_ref().map(|d| d.join("checkpoint.jsonl"));
    let ex = execute(backend, &jobs, limit(backend, opts), resume, checkpoint.as_deref())?;

    let mut triplets = Vec::new();
    let mut outcomes = Vec::with_capacity(cases.len());
    for (case, attempt) in cases.iter().zip(&ex.attempts) {
        let status = match (&attempt.text, &attempt.failure) {
            (_, Some(f)) => RationaleStatus::Failed { failure: f.clone() },
            (Some(text), None) => {
                let rationale = split_sections(text).rationale;
                let t = DistillTriplet {
                    record_id: case.record_id.clone(),
                    description: case.description.clone(),
                    rationale,
                    gold: case.gold,
                    mri_ref: case.mri_ref.clone(),
                };
                if !t.is_valid() {
                    RationaleStatus::EmptyRationale
                } else if !filter(&t) {
                    RationaleStatus::Filtered
                } else {
                    triplets.push(t);
                    RationaleStatus::Accepted
                }
            }
            (None, None) => unreachable!("attempt without text or failure"),
        };
        outcomes.push(RationaleOutcome { record_id: case.record_id.clone(), status });
    }
    let summary = match &opts.dir {
        Some(d) => finish_dir(d, opts, &outcomes, &ex)?,
        None => summarize(opts, &ex),
    };
    Ok(RationalizeReport { campaign_id: opts.campaign_id.clone(), triplets, outcomes, summary })
}

// ------------------------------------------------------------------ diagnose

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionEntry {
    pub record_id: String,
    pub gold: Diagnosis,
    pub description: String,
    /// Raw completion text, empty on failure.
    pub completion: String,
    pub parsed: ParsedOutput,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
    pub request_digest: String,
}

impl PredictionEntry {
    pub fn is_correct(&self) -> bool {
        self.parsed.prediction == Some(self.gold)
    }
}

/// Per-record outputs of one diagnosis campaign. Holds no timestamps so
/// reruns serialize identically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub campaign_id: String,
    pub model_id: String,
    pub mode: DiagnoseMode,
    pub k: usize,
    pub seed: u64,
    pub entries: Vec<PredictionEntry>,
    /// Entries without a prediction, failures included.
    pub unparseable: usize,
}

impl PredictionSet {
    pub fn save(&self, path: &Path) -> Result<(), RunnerError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self, RunnerError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn failures(&self) -> impl Iterator<Item = (&str, &Failure)> {
        self.entries.iter().filter_map(|e| e.failure.as_ref().map(|f| (e.record_id.as_str(), f)))
    }
}

/// Runs the multiple-choice diagnosis prompt over every case.
pub fn diagnose_batch(
    cases: &[CaseInput],
    backend: &dyn Backend,
    exemplars: &[Exemplar],
    mode: DiagnoseMode,
    k: usize,
    opts: &CampaignOptions,
) -> Result<PredictionSet, RunnerError> {
    if opts.strategy == Strategy::TwoStage {
        return Err(RunnerError::Unsupported("the two-stage strategy"));
    }
    let jobs = cases
        .iter()
        .map(|c| {
            let bundle = build_diagnosis_prompt(exemplars, &c.description, mode, k)
                .map_err(|source| RunnerError::Prompt { record_id: c.record_id.clone(), source })?;
            Ok((c.record_id.clone(), bundle.with_decode(opts.decode).to_request(&opts.model_id)))
        })
        .collect::<Result<Vec<_>, RunnerError>>()?;

    let snapshot = ConfigSnapshot { kind: "diagnose", options: opts.clone(), mode: Some(mode), k: Some(k), records: cases.len() };
    let resume = match &opts.dir {
        Some(d) => open_dir(d, &snapshot)?,
        None => HashMap::new(),
    };
    let checkpoint = opts.dir.as_ref().map(|d| d.join("checkpoint.jsonl"));
    let ex = execute(backend, &jobs, limit(backend, opts), resume, checkpoint.as_deref())?;

    let entries: Vec<PredictionEntry> = cases
        .iter()
        .zip(&ex.attempts)
        .map(|(case, a)| {
            let text = a.text.clone().unwrap_or_default();
            let parsed = if a.failure.is_some() { ParsedOutput::unparseable() } else { parse_output(&text) };
            PredictionEntry {
                record_id: case.record_id.clone(),
                gold: case.gold,
                description: case.description.clone(),
                completion: text,
                parsed,
                failure: a.failure.clone(),
                request_digest: a.digest.clone(),
            }
        })
        .collect();
    let set = PredictionSet {
        campaign_id: opts.campaign_id.clone(),
        model_id: opts.model_id.clone(),
        mode,
        k,
        seed: opts.seed,
        unparseable: entries.iter().filter(|e| e.parsed.prediction.is_none()).count(),
        entries,
    };
    if let Some(d) = &opts.dir {
        finish_dir(d, opts, &set.entries, &ex)?;
        set.save(&d.join("predictions.json"))?;
    }
    Ok(set)
}

// -------------------------------------------------------------------- export

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Modality {
    TextOnly,
    Multimodal,
}

impl std::str::FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text-only" => Ok(Modality::TextOnly),
            "multimodal" => Ok(Modality::Multimodal),
            other => Err(format!("unknown modality {other:?} (expected text-only or multimodal)")),
        }
    }
}

/// Writes one `{id, description, rationale, diagnosis[, mri_ref]}` line per
/// triplet. Returns the number of lines written.
pub fn export_distill(triplets: &[DistillTriplet], path: &Path, modality: Modality) -> Result<usize, RunnerError> {
    if let Some(bad) = triplets.iter().find(|t| !t.is_valid()) {
        return Err(RunnerError::InvalidTriplet(bad.record_id.clone()));
    }
    let lines: Vec<DistillTriplet> = match modality {
        Modality::TextOnly => triplets.iter().map(|t| DistillTriplet { mri_ref: None, ..t.clone() }).collect(),
        Modality::Multimodal => {
            let missing: Vec<String> =
                triplets.iter().filter(|t| t.mri_ref.is_none()).map(|t| t.record_id.clone()).collect();
            if !missing.is_empty() {
                return Err(RunnerError::MissingMriRef(missing));
            }
            triplets.to_vec()
        }
    };
    jsonl::write(path, &lines)?;
    Ok(lines.len())
}

pub fn load_distill(path: &Path) -> Result<Vec<DistillTriplet>, RunnerError> {
    Ok(jsonl::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{BackendKind, Completion, LlmError, MockBackend};
    use crate::prompts::builtin_exemplars;

    fn cases(n: usize) -> Vec<CaseInput> {
        let ex = builtin_exemplars();
        (0..n)
            .map(|i| {
                let e = &ex[i % ex.len()];
                CaseInput {
                    record_id: format!("R{i:03}"),
                    description: e.description.clone(),
                    gold: e.diagnosis,
                    mri_ref: (i % 2 == 0).then(|| format!("mri/R{i:03}.nii.gz")),
                }
            })
            .collect()
    }

    struct Flaky;

    impl Backend for Flaky {
        fn complete(&self, r: &CompletionRequest) -> Result<Completion, LlmError> {
            if r.last_user().unwrap_or("").contains("80-year") {
                return Err(LlmError::Transport { attempts: 3, message: "boom".into() });
            }
            MockBackend::default().complete(r)
        }
    }

    #[test]
    fn two_stage_is_a_stub() {
        let mut opts = CampaignOptions::new("c", "m");
        opts.strategy = Strategy::TwoStage;
        let err = diagnose_batch(&cases(1), &MockBackend::default(), &builtin_exemplars(), DiagnoseMode::Cot, 2, &opts);
        assert!(matches!(err, Err(RunnerError::Unsupported(_))));
    }

    #[test]
    fn rationalize_keeps_one_outcome_per_case() {
        let report =
            rationalize_dataset(&cases(10), &MockBackend::default(), &builtin_exemplars(), &CampaignOptions::new("c", "m"))
                .unwrap();
        assert_eq!(report.outcomes.len(), 10);
        assert_eq!(report.triplets.len(), 10);
        assert!(report.triplets.iter().all(|t| t.is_valid() && !t.rationale.contains("Diagnosis:")));
    }

    #[test]
    fn filter_hook_rejects() {
        let report = rationalize_dataset_filtered(
            &cases(6),
            &MockBackend::default(),
            &builtin_exemplars(),
            &CampaignOptions::new("c", "m"),
            &|t| t.gold != Diagnosis::Ad,
        )
        .unwrap();
        assert_eq!(report.triplets.len(), 4);
        assert_eq!(report.flagged().count(), 2);
    }

    #[test]
    fn failures_are_recorded_not_dropped() {
        let mut cs = cases(4);
        cs[1].description = cs[1].description.replace("69-year", "80-year");
        let set = diagnose_batch(&cs, &Flaky, &builtin_exemplars(), DiagnoseMode::Cot, 2, &CampaignOptions::new("c", "m"))
            .unwrap();
        assert_eq!(set.entries.len(), 4);
        assert_eq!(set.failures().count(), 1);
        assert_eq!(set.entries[1].failure.as_ref().unwrap().class, "transport");
        assert_eq!(set.unparseable, 1);
    }

    #[test]
    fn export_text_only_drops_mri_ref_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let ts: Vec<DistillTriplet> = cases(3)
            .into_iter()
            .map(|c| DistillTriplet {
                record_id: c.record_id,
                description: c.description,
                rationale: "r".into(),
                gold: c.gold,
                mri_ref: None,
            })
            .collect();
        let p = dir.path().join("d.jsonl");
        assert_eq!(export_distill(&ts, &p, Modality::TextOnly).unwrap(), 3);
        assert_eq!(load_distill(&p).unwrap(), ts);
        let first = std::fs::read_to_string(&p).unwrap();
        let v: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
        assert_eq!(v["diagnosis"], "AD");
        assert!(v.get("mri_ref").is_none());
    }

    #[test]
    fn multimodal_lists_missing_ids() {
        let dir = tempfile::tempdir().unwrap();
        let ts: Vec<DistillTriplet> = cases(3)
            .into_iter()
            .map(|c| DistillTriplet {
                record_id: c.record_id,
                description: c.description,
                rationale: "r".into(),
                gold: c.gold,
                mri_ref: c.mri_ref,
            })
            .collect();
        let err = export_distill(&ts, &dir.path().join("d.jsonl"), Modality::Multimodal).unwrap_err();
        match err {
            RunnerError::MissingMriRef(ids) => assert_eq!(ids, vec!["R001".to_string()]),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn completions_are_tagged() {
        let c = MockBackend::default()
            .complete(&build_diagnosis_prompt(&builtin_exemplars(), &cases(1)[0].description, DiagnoseMode::Cot, 2)
                .unwrap()
                .to_request("m"))
            .unwrap();
        assert_eq!(c.backend, BackendKind::Mock);
    }
}
