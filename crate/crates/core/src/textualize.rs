//! Region volumes to NO / MILD / SEVERE atrophy labels, and the patient
//! description text built from them.
//!
//! Thresholds come from class means inside a demographic group, computed on
//! the training split only. For a region with normal polarity
//!
//! ```text
//! no_bound     = (mean_NC + mean_MCI) / 2
//! severe_bound = (mean_AD + mean_MCI) / 2
//! ```
//!
//! and a volume strictly above `no_bound` is NO atrophy, strictly below
//! `severe_bound` is SEVERE, anything else MILD. The lateral ventricle grows
//! with disease, so its comparisons are mirrored.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cohort::{Diagnosis, PatientRecord, Polarity, RegionName, Sex};
use crate::jsonl::{self, JsonlError};

#[derive(Debug, thiserror::Error)]
pub enum TextualizeError {
    #[error("training split is empty")]
    EmptyTrain,
    #[error("training split has no {} cases; thresholds need all three classes", codes(.0))]
    GlobalMissingClass(Vec<Diagnosis>),
    #[error("global class means for {0} are not ordered; thresholds would be inverted")]
    GlobalUnordered(RegionName),
    #[error("missing atrophy label for region {0}")]
    MissingLabel(RegionName),
    #[error("threshold table has no global entry for {0}")]
    IncompleteTable(RegionName),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

fn codes(ds: &[Diagnosis]) -> String {
    ds.iter().map(|d| d.code()).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AtrophyLevel {
    #[serde(rename = "NO")]
    No,
    #[serde(rename = "MILD")]
    Mild,
    #[serde(rename = "SEVERE")]
    Severe,
}

/// How atrophy levels are spelled in the description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelCase {
    /// "Severe"
    #[default]
    Sentence,
    /// "SEVERE"
    Upper,
}

impl AtrophyLevel {
    pub const ALL: [AtrophyLevel; 3] = [AtrophyLevel::No, AtrophyLevel::Mild, AtrophyLevel::Severe];

    pub fn word(self, case: LevelCase) -> &'static str {
        match (self, case) {
            (AtrophyLevel::No, LevelCase::Sentence) => "No",
            (AtrophyLevel::Mild, LevelCase::Sentence) => "Mild",
            (AtrophyLevel::Severe, LevelCase::Sentence) => "Severe",
            (AtrophyLevel::No, LevelCase::Upper) => "NO",
            (AtrophyLevel::Mild, LevelCase::Upper) => "MILD",
            (AtrophyLevel::Severe, LevelCase::Upper) => "SEVERE",
        }
    }
}

impl fmt::Display for AtrophyLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.word(LevelCase::Upper))
    }
}

/// Demographic grouping used before averaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Grouping {
    /// Sex crossed with half-open age buckets `[k*width, (k+1)*width)`.
    SexAgeBucket { width: u32 },
    /// A single group holding everyone.
    Global,
}

impl Default for Grouping {
    fn default() -> Self {
        Grouping::SexAgeBucket { width: 5 }
    }
}

impl Grouping {
    pub fn key(&self, rec: &PatientRecord) -> GroupKey {
        match *self {
            Grouping::SexAgeBucket { width } => {
                let width = width.max(1);
                let start = rec.age / width * width;
                GroupKey { sex: Some(rec.sex), age: Some((start, start + width)) }
            }
            Grouping::Global => GroupKey::GLOBAL,
        }
    }
}

/// `None` components mean "any". [`GroupKey::GLOBAL`] is the ungrouped key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub sex: Option<Sex>,
    /// Half-open `[start, end)` age bucket.
    pub age: Option<(u32, u32)>,
}

impl GroupKey {
    pub const GLOBAL: GroupKey = GroupKey { sex: None, age: None };

    pub fn is_global(&self) -> bool {
        *self == GroupKey::GLOBAL
    }
}

/// Per-class member counts (AD, MCI, NC) behind an entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassSupport {
    pub ad: usize,
    pub mci: usize,
    pub nc: usize,
}

impl ClassSupport {
    fn add(&mut self, d: Diagnosis) {
        match d {
            Diagnosis::Ad => self.ad += 1,
            Diagnosis::Mci => self.mci += 1,
            Diagnosis::Nc => self.nc += 1,
        }
    }

    pub fn missing(&self) -> Vec<Diagnosis> {
        Diagnosis::ALL
            .into_iter()
            .filter(|d| match d {
                Diagnosis::Ad => self.ad == 0,
                Diagnosis::Mci => self.mci == 0,
                Diagnosis::Nc => self.nc == 0,
            })
            .collect()
    }
}

/// Why a group entry uses the global bounds instead of its own.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Fallback {
    MissingClass { classes: Vec<Diagnosis> },
    /// Group means produce bounds that break the polarity invariant.
    Unordered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEntry {
    pub no_bound: f64,
    pub severe_bound: f64,
    pub polarity: Polarity,
    /// Class counts of the group the entry belongs to.
    pub support: ClassSupport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<Fallback>,
}

impl ThresholdEntry {
    pub fn new(no_bound: f64, severe_bound: f64, polarity: Polarity) -> Self {
        ThresholdEntry { no_bound, severe_bound, polarity, support: ClassSupport::default(), fallback: None }
    }

    fn well_ordered(&self) -> bool {
        match self.polarity {
            Polarity::Normal => self.no_bound >= self.severe_bound,
            Polarity::Inverted => self.no_bound <= self.severe_bound,
        }
    }
}

/// Group x region threshold entries. The [`GroupKey::GLOBAL`] group is always
/// present and covers all 14 regions.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    pub grouping: Grouping,
    pub entries: BTreeMap<GroupKey, BTreeMap<RegionName, ThresholdEntry>>,
}

/// One line of the audit file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ThresholdLine {
    group: GroupKey,
    region: RegionName,
    #[serde(flatten)]
    entry: ThresholdEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GroupingLine {
    grouping: Grouping,
}

impl ThresholdTable {
    /// Entry for `rec`'s group, or the global entry when the group was
    /// never seen during training.
    pub fn lookup(&self, rec: &PatientRecord, region: RegionName) -> &ThresholdEntry {
        let key = self.grouping.key(rec);
        self.entries
            .get(&key)
            .and_then(|m| m.get(&region))
            .unwrap_or_else(|| &self.entries[&GroupKey::GLOBAL][&region])
    }

    pub fn global(&self, region: RegionName) -> Option<&ThresholdEntry> {
        self.entries.get(&GroupKey::GLOBAL).and_then(|m| m.get(&region))
    }

    /// Group entries that fell back to the global bounds.
    pub fn fallbacks(&self) -> impl Iterator<Item = (&GroupKey, RegionName, &Fallback)> {
        self.entries.iter().flat_map(|(g, m)| {
            m.iter().filter_map(move |(r, e)| e.fallback.as_ref().map(|f| (g, *r, f)))
        })
    }

    pub fn label(&self, rec: &PatientRecord) -> BTreeMap<RegionName, AtrophyLevel> {
        RegionName::ALL
            .iter()
            .map(|&r| (r, label_atrophy(rec.volume(r), self.lookup(rec, r))))
            .collect()
    }

    /// Writes a grouping header line followed by one line per group x region.
    pub fn save(&self, path: &Path) -> Result<(), TextualizeError> {
        let mut lines: Vec<serde_json::Value> =
            vec![serde_json::to_value(GroupingLine { grouping: self.grouping }).map_err(JsonlError::from)?];
        for (group, regions) in &self.entries {
            for (region, entry) in regions {
                let line = ThresholdLine { group: *group, region: *region, entry: entry.clone() };
                lines.push(serde_json::to_value(line).map_err(JsonlError::from)?);
            }
        }
        jsonl::write(path, &lines)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ThresholdTable, TextualizeError> {
        let raw: Vec<serde_json::Value> = jsonl::read(path)?;
        let mut grouping = Grouping::default();
        let mut entries: BTreeMap<GroupKey, BTreeMap<RegionName, ThresholdEntry>> = BTreeMap::new();
        for value in raw {
            if value.get("grouping").is_some() {
                let g: GroupingLine = serde_json::from_value(value).map_err(JsonlError::from)?;
                grouping = g.grouping;
            } else {
                let line: ThresholdLine = serde_json::from_value(value).map_err(JsonlError::from)?;
                entries.entry(line.group).or_default().insert(line.region, line.entry);
            }
        }
        let table = ThresholdTable { grouping, entries };
        for r in RegionName::ALL {
            if table.global(r).is_none() {
                return Err(TextualizeError::IncompleteTable(r));
            }
        }
        Ok(table)
    }
}

fn bounds(means: [f64; 3], polarity: Polarity, support: ClassSupport) -> ThresholdEntry {
    let [ad, mci, nc] = means;
    ThresholdEntry {
        no_bound: (nc + mci) / 2.0,
        severe_bound: (ad + mci) / 2.0,
        polarity,
        support,
        fallback: None,
    }
}

#[derive(Default)]
struct Accumulator {
    support: ClassSupport,
    sums: [[f64; 3]; 14],
}

impl Accumulator {
    fn add(&mut self, rec: &PatientRecord) {
        self.support.add(rec.gold);
        for r in RegionName::ALL {
            self.sums[r.index()][rec.gold.index()] += rec.volume(r);
        }
    }

    fn means(&self, region: RegionName) -> [f64; 3] {
        let counts = [self.support.ad, self.support.mci, self.support.nc];
        let s = self.sums[region.index()];
        [0, 1, 2].map(|c| s[c] / counts[c] as f64)
    }
}

/// Builds the threshold table from training records.
///
/// Groups lacking a class, or whose means yield bounds that violate the
/// polarity ordering, reuse the global bounds; the reason is kept on the
/// entry.
pub fn compute_thresholds(train: &[PatientRecord], grouping: Grouping) -> Result<ThresholdTable, TextualizeError> {
    if train.is_empty() {
        return Err(TextualizeError::EmptyTrain);
    }
    let mut global = Accumulator::default();
    let mut groups: BTreeMap<GroupKey, Accumulator> = BTreeMap::new();
    for rec in train {
        global.add(rec);
        groups.entry(grouping.key(rec)).or_default().add(rec);
    }
    let missing = global.support.missing();
    if !missing.is_empty() {
        return Err(TextualizeError::GlobalMissingClass(missing));
    }
    let mut global_entries = BTreeMap::new();
    for r in RegionName::ALL {
        let e = bounds(global.means(r), r.polarity(), global.support);
        if !e.well_ordered() {
            return Err(TextualizeError::GlobalUnordered(r));
        }
        global_entries.insert(r, e);
    }

    let mut entries = BTreeMap::new();
    for (key, acc) in groups {
        if key.is_global() {
            continue;
        }
        let missing = acc.support.missing();
        let mut m = BTreeMap::new();
        for r in RegionName::ALL {
            let fallback = |reason: Fallback| ThresholdEntry {
                support: acc.support,
                fallback: Some(reason),
                ..global_entries[&r].clone()
            };
            let entry = if !missing.is_empty() {
                fallback(Fallback::MissingClass { classes: missing.clone() })
            } else {
                let e = bounds(acc.means(r), r.polarity(), acc.support);
                if e.well_ordered() {
                    e
                } else {
                    fallback(Fallback::Unordered)
                }
            };
            m.insert(r, entry);
        }
        entries.insert(key, m);
    }
    entries.insert(GroupKey::GLOBAL, global_entries);
    Ok(ThresholdTable { grouping, entries })
}

/// Strict comparisons: a volume equal to a bound is MILD.
pub fn label_atrophy(volume: f64, entry: &ThresholdEntry) -> AtrophyLevel {
    match entry.polarity {
        Polarity::Normal => {
            if volume > entry.no_bound {
                AtrophyLevel::No
            } else if volume < entry.severe_bound {
                AtrophyLevel::Severe
            } else {
                AtrophyLevel::Mild
            }
        }
        Polarity::Inverted => {
            if volume < entry.no_bound {
                AtrophyLevel::No
            } else if volume > entry.severe_bound {
                AtrophyLevel::Severe
            } else {
                AtrophyLevel::Mild
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientDescription {
    pub record_id: String,
    pub text: String,
    pub labels: BTreeMap<RegionName, AtrophyLevel>,
}

/// Noun phrase following the level word in a region line.
pub fn region_phrase(region: RegionName) -> &'static str {
    match region {
        RegionName::Hippocampus => "hippocampal atrophy",
        RegionName::Amygdala => "amygdala atrophy",
        RegionName::Entorhinal => "entorhinal atrophy",
        RegionName::Parahippocampus => "parahippocampal atrophy",
        RegionName::MedialTemporalLobe => "medial temporal lobe atrophy",
        RegionName::Fusiform => "fusiform atrophy",
        RegionName::Precuneus => "precuneus atrophy",
        RegionName::SuperiorParietal => "superior parietal atrophy",
        RegionName::LateralVentricle => "ventricle enlargement",
        RegionName::FrontalLobe => "frontal lobe atrophy",
        RegionName::TemporalLobe => "temporal lobe atrophy",
        RegionName::ParietalLobe => "parietal lobe atrophy",
        RegionName::OccipitalLobe => "occipital lobe atrophy",
        RegionName::CerebralCortex => "cerebral cortex atrophy",
    }
}

pub const MRI_INTRO: &str = "Also, based on their MRI scans:";
pub const REGION_LINE_PREFIX: &str = "- This patient has ";

fn apoe4_clause(copies: u8) -> &'static str {
    match copies {
        0 => "has no APOE4 gene",
        1 => "carries one copy of the APOE4 gene",
        _ => "carries two copies of the APOE4 gene",
    }
}

pub fn render_description(
    record: &PatientRecord,
    labels: &BTreeMap<RegionName, AtrophyLevel>,
) -> Result<PatientDescription, TextualizeError> {
    render_description_with(record, labels, LevelCase::default())
}

/// Renders the description: demographics, MMSE + APOE4, then one line per
/// region in canonical order. No trailing newline.
pub fn render_description_with(
    record: &PatientRecord,
    labels: &BTreeMap<RegionName, AtrophyLevel>,
    case: LevelCase,
) -> Result<PatientDescription, TextualizeError> {
    let mut text = format!(
        "This patient is a {}-year-old {} who has completed {} years of education",
        record.age,
        record.sex.word(),
        record.education_years
    );
    match &record.marital_status {
        Some(status) => text.push_str(&format!(" and is {status}.\n")),
        None => text.push_str(".\n"),
    }
    text.push_str(&format!(
        "The patient has a Mini-mental State Examination score of {:.1}/30 and {}.\n",
        f64::from(record.mmse),
        apoe4_clause(record.apoe4_copies)
    ));
    text.push_str(MRI_INTRO);
    for region in RegionName::ALL {
        let level = labels.get(&region).ok_or(TextualizeError::MissingLabel(region))?;
        text.push('\n');
        text.push_str(REGION_LINE_PREFIX);
        text.push_str(level.word(case));
        text.push(' ');
        text.push_str(region_phrase(region));
        text.push('.');
    }
    let labels = RegionName::ALL.iter().map(|r| (*r, labels[r])).collect();
    Ok(PatientDescription { record_id: record.id.clone(), text, labels })
}

/// Labels a record against `table` and renders its description.
pub fn describe(record: &PatientRecord, table: &ThresholdTable, case: LevelCase) -> PatientDescription {
    let labels = table.label(record);
    render_description_with(record, &labels, case).expect("label map covers every region")
}
