//! Accuracy / per-class precision and recall, subsampling for
//! data-efficiency sweeps, and review-batch sampling.
//!
//! Unparseable outputs are wrong for accuracy and recall and count as a
//! prediction of no class, so they never enter a precision denominator.
//! A class nobody predicted has undefined precision (`None`, printed `—`).

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cohort::{Diagnosis, PatientRecord};
use crate::parse::Prediction;
use crate::prompts::DiagnoseMode;
use crate::runner::{DistillTriplet, PredictionSet};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("prediction set is empty")]
    Empty,
    #[error("fraction must be in (0, 1], got {0}")]
    Fraction(f64),
    #[error("subsample of {fraction} over {size} records is empty")]
    EmptySubsample { fraction: f64, size: usize },
    #[error("no prediction sets given")]
    NoModels,
    #[error("prediction sets cover different records ({0} differs from the first)")]
    RecordMismatch(String),
    #[error(
        "not enough eligible records for {requested} per group: {misdiagnosed} misdiagnosed by every model, {correct} correct under every model"
    )]
    NotEnoughEligible { requested: usize, misdiagnosed: usize, correct: usize },
}

/// Counts indexed `[gold][predicted]` in AD, MCI, NC order, plus the
/// unparseable outputs for each gold class.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 3]; 3],
    pub unparseable: [usize; 3],
}

impl ConfusionMatrix {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Diagnosis, Prediction)>) -> Self {
        let mut m = ConfusionMatrix::default();
        for (gold, pred) in pairs {
            m.add(gold, pred);
        }
        m
    }

    pub fn add(&mut self, gold: Diagnosis, pred: Prediction) {
        match pred {
            Some(p) => self.counts[gold.index()][p.index()] += 1,
            None => self.unparseable[gold.index()] += 1,
        }
    }

    pub fn total(&self) -> usize {
        Diagnosis::ALL.iter().map(|&d| self.gold_total(d)).sum()
    }

    pub fn gold_total(&self, gold: Diagnosis) -> usize {
        self.counts[gold.index()].iter().sum::<usize>() + self.unparseable[gold.index()]
    }

    pub fn predicted_total(&self, pred: Diagnosis) -> usize {
        self.counts.iter().map(|row| row[pred.index()]).sum()
    }

    pub fn true_positives(&self, d: Diagnosis) -> usize {
        self.counts[d.index()][d.index()]
    }

    pub fn correct(&self) -> usize {
        Diagnosis::ALL.iter().map(|&d| self.true_positives(d)).sum()
    }

    pub fn unparseable_total(&self) -> usize {
        self.unparseable.iter().sum()
    }
}

/// One value per class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PerClass {
    #[serde(rename = "AD")]
    pub ad: Option<f64>,
    #[serde(rename = "MCI")]
    pub mci: Option<f64>,
    #[serde(rename = "NC")]
    pub nc: Option<f64>,
}

impl PerClass {
    fn from_fn(f: impl Fn(Diagnosis) -> Option<f64>) -> Self {
        PerClass { ad: f(Diagnosis::Ad), mci: f(Diagnosis::Mci), nc: f(Diagnosis::Nc) }
    }

    pub fn get(&self, d: Diagnosis) -> Option<f64> {
        match d {
            Diagnosis::Ad => self.ad,
            Diagnosis::Mci => self.mci,
            Diagnosis::Nc => self.nc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub campaign_id: String,
    pub model_id: String,
    pub mode: DiagnoseMode,
    pub k: usize,
    pub total: usize,
    pub correct: usize,
    pub unparseable: usize,
    pub accuracy: f64,
    pub precision: PerClass,
    pub recall: PerClass,
    pub confusion: ConfusionMatrix,
}

impl MetricsReport {
    /// Row label for the prompt column: `Clinical CoT` or `k-shot`.
    pub fn prompt_label(&self) -> String {
        match self.mode {
            DiagnoseMode::Cot => "Clinical CoT".to_string(),
            DiagnoseMode::Standard => format!("{}-shot", self.k),
        }
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics_from_matrix(m: &ConfusionMatrix) -> Result<(f64, PerClass, PerClass), EvalError> {
    let total = m.total();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    let accuracy = m.correct() as f64 / total as f64;
    let precision = PerClass::from_fn(|d| ratio(m.true_positives(d), m.predicted_total(d)));
    let recall = PerClass::from_fn(|d| ratio(m.true_positives(d), m.gold_total(d)));
    Ok((accuracy, precision, recall))
}

pub fn compute_metrics(set: &PredictionSet) -> Result<MetricsReport, EvalError> {
    let confusion = ConfusionMatrix::from_pairs(set.entries.iter().map(|e| (e.gold, e.parsed.prediction)));
    let (accuracy, precision, recall) = metrics_from_matrix(&confusion)?;
    Ok(MetricsReport {
        campaign_id: set.campaign_id.clone(),
        model_id: set.model_id.clone(),
        mode: set.mode,
        k: set.k,
        total: confusion.total(),
        correct: confusion.correct(),
        unparseable: confusion.unparseable_total(),
        accuracy,
        precision,
        recall,
        confusion,
    })
}

fn pct(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{:.1}", x * 100.0),
        None => "—".to_string(),
    }
}

/// Text table, one row per report: model, prompt, accuracy, then precision
/// and recall for AD, MCI, NC, as percentages with one decimal.
pub fn format_table(reports: &[MetricsReport]) -> String {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let mut row = vec![r.model_id.clone(), r.prompt_label(), pct(Some(r.accuracy))];
            row.extend(Diagnosis::ALL.iter().map(|&d| pct(r.precision.get(d))));
            row.extend(Diagnosis::ALL.iter().map(|&d| pct(r.recall.get(d))));
            row
        })
        .collect();
    let header = ["Model", "Prompt", "Total", "AD", "MCI", "NC", "AD", "MCI", "NC"];
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    widths[2] = widths[2].max("Accuracy".len());
    let pad = |s: &str, w: usize| format!("{s}{}", " ".repeat(w.saturating_sub(s.chars().count())));
    let group_width = |range: std::ops::Range<usize>| widths[range.clone()].iter().sum::<usize>() + 2 * (range.len() - 1);

    let mut out = String::new();
    let lead = widths[0] + widths[1] + 4;
    out.push_str(&format!(
        "{}{}  {}  {}\n",
        " ".repeat(lead),
        pad("Accuracy", widths[2]),
        pad("Precision", group_width(3..6)),
        "Recall"
    ));
    let line = |cells: Vec<String>| {
        cells.iter().zip(&widths).map(|(c, &w)| pad(c, w)).collect::<Vec<_>>().join("  ").trim_end().to_string()
    };
    out.push_str(&line(header.iter().map(|s| s.to_string()).collect()));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

// ------------------------------------------------------------- subsampling

fn shuffled(mut idx: Vec<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    idx.shuffle(rng);
    idx
}

/// Per-class quotas summing to `n`: floors of the proportional shares, the
/// remainder going to the largest fractional parts (ties to AD, MCI, NC order).
pub fn stratified_quotas(class_counts: [usize; 3], n: usize) -> [usize; 3] {
    let total: usize = class_counts.iter().sum();
    if total == 0 {
        return [0; 3];
    }
    let mut quotas = [0usize; 3];
    let mut rems = [(0usize, 0usize); 3];
    for c in 0..3 {
        let num = n * class_counts[c];
        quotas[c] = num / total;
        rems[c] = (num % total, c);
    }
    let mut left = n - quotas.iter().sum::<usize>();
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, c) in rems {
        if left == 0 {
            break;
        }
        quotas[c] += 1;
        left -= 1;
    }
    quotas
}

/// Keeps `floor(fraction * len)` items, in their original order.
pub fn subsample_by<T: Clone>(
    items: &[T],
    class_of: impl Fn(&T) -> Diagnosis,
    fraction: f64,
    seed: u64,
    stratified: bool,
) -> Result<Vec<T>, EvalError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(EvalError::Fraction(fraction));
    }
    // the epsilon keeps e.g. 0.29 * 100 from flooring to 28
    let n = ((fraction * items.len() as f64) + 1e-9).floor() as usize;
    let n = n.min(items.len());
    if n == 0 {
        return Err(EvalError::EmptySubsample { fraction, size: items.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = if stratified {
        let mut by_class: [Vec<usize>; 3] = Default::default();
        for (i, it) in items.iter().enumerate() {
            by_class[class_of(it).index()].push(i);
        }
        let quotas = stratified_quotas([by_class[0].len(), by_class[1].len(), by_class[2].len()], n);
        by_class
            .into_iter()
            .zip(quotas)
            .flat_map(|(idx, q)| shuffled(idx, &mut rng).into_iter().take(q).collect::<Vec<_>>())
            .collect()
    } else {
        shuffled((0..items.len()).collect(), &mut rng).into_iter().take(n).collect()
    };
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| items[i].clone()).collect())
}

pub fn subsample(records: &[PatientRecord], fraction: f64, seed: u64, stratified: bool) -> Result<Vec<PatientRecord>, EvalError> {
    subsample_by(records, |r| r.gold, fraction, seed, stratified)
}

// ---------------------------------------------------------- review sampling

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ReviewGroup {
    Misdiagnoses,
    CorrectDiagnoses,
}

/// A rationale attributed to its (unblinded) source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourcedRationale {
    pub source: String,
    pub rationale: String,
    pub prediction: Prediction,
    /// Written with the gold label visible.
    #[serde(default)]
    pub reference: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub record_id: String,
    pub group: ReviewGroup,
    pub gold: Diagnosis,
    pub description: String,
    pub rationales: Vec<SourcedRationale>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewBatch {
    pub seed: u64,
    pub sources: Vec<String>,
    pub records: Vec<ReviewRecord>,
}

impl ReviewBatch {
    pub fn item_count(&self) -> usize {
        self.records.iter().map(|r| r.rationales.len()).sum()
    }

    /// Attaches reference rationales for records present in `triplets`.
    /// Returns how many were attached.
    pub fn add_reference(&mut self, triplets: &[DistillTriplet], source: &str) -> usize {
        let by_id: HashMap<&str, &DistillTriplet> = triplets.iter().map(|t| (t.record_id.as_str(), t)).collect();
        let mut attached = 0;
        for r in &mut self.records {
            if let Some(t) = by_id.get(r.record_id.as_str()) {
                r.rationales.push(SourcedRationale {
                    source: source.to_string(),
                    rationale: t.rationale.clone(),
                    prediction: Some(t.gold),
                    reference: true,
                });
                attached += 1;
            }
        }
        if attached > 0 && !self.sources.iter().any(|s| s == source) {
            self.sources.push(source.to_string());
        }
        attached
    }
}

fn source_labels(sets: &[PredictionSet]) -> Vec<String> {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for s in sets {
        *seen.entry(s.model_id.as_str()).or_default() += 1;
    }
    sets.iter()
        .map(|s| if seen[s.model_id.as_str()] > 1 { s.campaign_id.clone() } else { s.model_id.clone() })
        .collect()
}

/// Samples `n_per_group` records misdiagnosed by every model and as many
/// diagnosed correctly by every model. Each record carries every model's
/// rationale.
pub fn sample_for_review(sets: &[PredictionSet], n_per_group: usize, seed: u64) -> Result<ReviewBatch, EvalError> {
    let first = sets.first().ok_or(EvalError::NoModels)?;
    let ids: HashSet<&str> = first.entries.iter().map(|e| e.record_id.as_str()).collect();
    let lookups: Vec<HashMap<&str, &crate::runner::PredictionEntry>> = sets
        .iter()
        .map(|s| s.entries.iter().map(|e| (e.record_id.as_str(), e)).collect())
        .collect();
    for (s, l) in sets.iter().zip(&lookups) {
        if l.len() != ids.len() || !ids.iter().all(|id| l.contains_key(id)) {
            return Err(EvalError::RecordMismatch(s.campaign_id.clone()));
        }
    }
    let mut wrong = Vec::new();
    let mut right = Vec::new();
    for e in &first.entries {
        let id = e.record_id.as_str();
        let correct: Vec<bool> = lookups.iter().map(|l| l[id].is_correct()).collect();
        if correct.iter().all(|&c| !c) {
            wrong.push(id);
        } else if correct.iter().all(|&c| c) {
            right.push(id);
        }
    }
    if wrong.len() < n_per_group || right.len() < n_per_group || n_per_group == 0 {
        return Err(EvalError::NotEnoughEligible {
            requested: n_per_group,
            misdiagnosed: wrong.len(),
            correct: right.len(),
        });
    }
    let labels = source_labels(sets);
    let position: HashMap<&str, usize> = first.entries.iter().enumerate().map(|(i, e)| (e.record_id.as_str(), i)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(2 * n_per_group);
    for (group, mut pool) in [(ReviewGroup::Misdiagnoses, wrong), (ReviewGroup::CorrectDiagnoses, right)] {
        pool.shuffle(&mut rng);
        let mut picked: Vec<&str> = pool.into_iter().take(n_per_group).collect();
        picked.sort_by_key(|id| position[id]);
        for id in picked {
            let base = lookups[0][id];
            records.push(ReviewRecord {
                record_id: id.to_string(),
                group,
                gold: base.gold,
                description: base.description.clone(),
                rationales: lookups
                    .iter()
                    .zip(&labels)
                    .map(|(l, label)| SourcedRationale {
                        source: label.clone(),
                        rationale: l[id].parsed.rationale.clone(),
                        prediction: l[id].parsed.prediction,
                        reference: false,
                    })
                    .collect(),
            });
        }
    }
    Ok(ReviewBatch { seed, sources: labels, records })
}

/// Samples `n` (record, model) rationales whose diagnosis was wrong, from any
/// model, independently of [`sample_for_review`]. Used for the error
/// taxonomy. Rationales of one record are grouped under a single
/// [`ReviewRecord`].
pub fn sample_misdiagnosed_rationales(sets: &[PredictionSet], n: usize, seed: u64) -> Result<ReviewBatch, EvalError> {
    if sets.is_empty() {
        return Err(EvalError::NoModels);
    }
    let labels = source_labels(sets);
    let mut pool: Vec<(usize, usize)> = Vec::new();
    for (m, s) in sets.iter().enumerate() {
        for (i, e) in s.entries.iter().enumerate() {
            if !e.is_correct() {
                pool.push((m, i));
            }
        }
    }
    if n == 0 || pool.len() < n {
        return Err(EvalError::NotEnoughEligible { requested: n, misdiagnosed: pool.len(), correct: 0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    let mut picked = pool[..n].to_vec();
    picked.sort_unstable();

    let mut records: Vec<ReviewRecord> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (m, i) in picked {
        let e = &sets[m].entries[i];
        let slot = *index.entry(e.record_id.clone()).or_insert_with(|| {
            records.push(ReviewRecord {
                record_id: e.record_id.clone(),
                group: ReviewGroup::Misdiagnoses,
                gold: e.gold,
                description: e.description.clone(),
                rationales: Vec::new(),
            });
            records.len() - 1
        });
        records[slot].rationales.push(SourcedRationale {
            source: labels[m].clone(),
            rationale: e.parsed.rationale.clone(),
            prediction: e.parsed.prediction,
            reference: false,
        });
    }
    Ok(ReviewBatch { seed, sources: labels, records })
}
