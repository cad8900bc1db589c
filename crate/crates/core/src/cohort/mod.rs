//! Patient records, cohort files, deterministic splits and the synthetic
//! cohort generator that stands in for restricted imaging datasets.

mod io;
mod split;
mod synth;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use io::{load_cohort, save_cohort, CohortFormat};
pub use split::{split, SplitAssignment, SplitCounts};
pub use synth::{generate_cohort, ClassParams, SynthSpec};

#[derive(Debug, thiserror::Error)]
pub enum CohortError {
    #[error("row {row}: {field} {reason}")]
    Field { row: usize, field: String, reason: String },
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("missing region columns: {}", .0.join(", "))]
    MissingRegions(Vec<String>),
    #[error("missing required column: {0}")]
    MissingColumn(String),
    #[error("duplicate id {id} (rows {first} and {second})")]
    DuplicateId { id: String, first: usize, second: usize },
    #[error("split counts {requested} do not sum to cohort size {size}")]
    SplitCounts { requested: usize, size: usize },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Gold or predicted diagnosis class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Diagnosis {
    #[serde(rename = "AD")]
    Ad,
    #[serde(rename = "MCI")]
    Mci,
    #[serde(rename = "NC")]
    Nc,
}

impl Diagnosis {
    /// Order of the multiple-choice options: (A), (B), (C).
    pub const ALL: [Diagnosis; 3] = [Diagnosis::Ad, Diagnosis::Mci, Diagnosis::Nc];

    pub fn code(self) -> &'static str {
        match self {
            Diagnosis::Ad => "AD",
            Diagnosis::Mci => "MCI",
            Diagnosis::Nc => "NC",
        }
    }

    pub fn full_name(self) -> &'static str {
        match self {
            Diagnosis::Ad => "Alzheimer's Disease",
            Diagnosis::Mci => "Mild Cognitive Impairment",
            Diagnosis::Nc => "Normal Cognition",
        }
    }

    pub fn letter(self) -> char {
        match self {
            Diagnosis::Ad => 'A',
            Diagnosis::Mci => 'B',
            Diagnosis::Nc => 'C',
        }
    }

    pub fn from_letter(c: char) -> Option<Diagnosis> {
        match c.to_ascii_uppercase() {
            'A' => Some(Diagnosis::Ad),
            'B' => Some(Diagnosis::Mci),
            'C' => Some(Diagnosis::Nc),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Diagnosis::Ad => 0,
            Diagnosis::Mci => 1,
            Diagnosis::Nc => 2,
        }
    }
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.full_name())
    }
}

impl FromStr for Diagnosis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "AD" => Ok(Diagnosis::Ad),
            "MCI" => Ok(Diagnosis::Mci),
            "NC" => Ok(Diagnosis::Nc),
            other => Err(format!("unknown diagnosis {other:?} (expected AD, MCI or NC)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sex {
    M,
    F,
}

impl Sex {
    pub fn word(self) -> &'static str {
        match self {
            Sex::M => "Male",
            Sex::F => "Female",
        }
    }
}

impl FromStr for Sex {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "M" => Ok(Sex::M),
            "F" => Ok(Sex::F),
            other => Err(format!("unknown sex {other:?} (expected M or F)")),
        }
    }
}

/// Whether a larger region volume means healthier (`Normal`) or more
/// diseased (`Inverted`, the ventricles).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Normal,
    Inverted,
}

/// The 14 brain regions tracked per patient, in canonical description order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegionName {
    Hippocampus,
    Amygdala,
    Entorhinal,
    Parahippocampus,
    MedialTemporalLobe,
    Fusiform,
    Precuneus,
    SuperiorParietal,
    LateralVentricle,
    FrontalLobe,
    TemporalLobe,
    ParietalLobe,
    OccipitalLobe,
    CerebralCortex,
}

impl RegionName {
    pub const ALL: [RegionName; 14] = [
        RegionName::Hippocampus,
        RegionName::Amygdala,
        RegionName::Entorhinal,
        RegionName::Parahippocampus,
        RegionName::MedialTemporalLobe,
        RegionName::Fusiform,
        RegionName::Precuneus,
        RegionName::SuperiorParietal,
        RegionName::LateralVentricle,
        RegionName::FrontalLobe,
        RegionName::TemporalLobe,
        RegionName::ParietalLobe,
        RegionName::OccipitalLobe,
        RegionName::CerebralCortex,
    ];

    /// Column / key name used in cohort files.
    pub fn as_str(self) -> &'static str {
        match self {
            RegionName::Hippocampus => "Hippocampus",
            RegionName::Amygdala => "Amygdala",
            RegionName::Entorhinal => "Entorhinal",
            RegionName::Parahippocampus => "Parahippocampus",
            RegionName::MedialTemporalLobe => "MedialTemporalLobe",
            RegionName::Fusiform => "Fusiform",
            RegionName::Precuneus => "Precuneus",
            RegionName::SuperiorParietal => "SuperiorParietal",
            RegionName::LateralVentricle => "LateralVentricle",
            RegionName::FrontalLobe => "FrontalLobe",
            RegionName::TemporalLobe => "TemporalLobe",
            RegionName::ParietalLobe => "ParietalLobe",
            RegionName::OccipitalLobe => "OccipitalLobe",
            RegionName::CerebralCortex => "CerebralCortex",
        }
    }

    pub fn polarity(self) -> Polarity {
        match self {
            RegionName::LateralVentricle => Polarity::Inverted,
            _ => Polarity::Normal,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for RegionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegionName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RegionName::ALL
            .iter()
            .copied()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown region {s:?}"))
    }
}

pub const MMSE_MAX: u8 = 30;

/// One subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: String,
    pub age: u32,
    pub sex: Sex,
    pub education_years: u32,
    pub marital_status: Option<String>,
    pub mmse: u8,
    pub apoe4_copies: u8,
    pub region_volumes: BTreeMap<RegionName, f64>,
    pub gold: Diagnosis,
    pub mri_ref: Option<String>,
}

impl PatientRecord {
    pub fn volume(&self, region: RegionName) -> f64 {
        self.region_volumes[&region]
    }

    /// Checks the record invariants. `Err` carries `(field, reason)`.
    pub fn validate(&self) -> Result<(), (String, String)> {
        if self.id.is_empty() {
            return Err(("id".into(), "empty".into()));
        }
        if self.mmse > MMSE_MAX {
            return Err(("mmse".into(), "out of range".into()));
        }
        if self.apoe4_copies > 2 {
            return Err(("apoe4_copies".into(), "out of range".into()));
        }
        let missing: Vec<_> = RegionName::ALL
            .iter()
            .filter(|r| !self.region_volumes.contains_key(r))
            .map(|r| r.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(("region_volumes".into(), format!("missing {}", missing.join(", "))));
        }
        for (region, &v) in &self.region_volumes {
            if !(v.is_finite() && v > 0.0) {
                return Err((region.as_str().into(), "volume must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CohortSource {
    Ingested,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub records: Vec<PatientRecord>,
    pub source: CohortSource,
}

impl Cohort {
    /// Validates every record and id uniqueness. Row numbers are 1-based.
    pub fn new(records: Vec<PatientRecord>, source: CohortSource) -> Result<Self, CohortError> {
        let mut seen: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
        for (i, rec) in records.iter().enumerate() {
            let row = i + 1;
            rec.validate()
                .map_err(|(field, reason)| CohortError::Field { row, field, reason })?;
            if let Some(first) = seen.insert(rec.id.as_str(), row) {
                return Err(CohortError::DuplicateId { id: rec.id.clone(), first, second: row });
            }
        }
        Ok(Cohort { records, source })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&PatientRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Records whose id is in `ids`, in cohort order.
    pub fn select(&self, ids: &[String]) -> Vec<PatientRecord> {
        let wanted: HashSet<&str> = ids.iter().map(String::as_str).collect();
        self.records.iter().filter(|r| wanted.contains(r.id.as_str())).cloned().collect()
    }

    pub fn class_counts(&self) -> [usize; 3] {
        class_counts(&self.records)
    }
}

pub fn class_counts(records: &[PatientRecord]) -> [usize; 3] {
    let mut counts = [0; 3];
    for r in records {
        counts[r.gold.index()] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagnosis_round_trips_through_code_and_letter() {
        for d in Diagnosis::ALL {
            assert_eq!(d.code().parse::<Diagnosis>().unwrap(), d);
            assert_eq!(Diagnosis::from_letter(d.letter()), Some(d));
        }
        assert_eq!(Diagnosis::Ad.full_name(), "Alzheimer's Disease");
        assert_eq!(Diagnosis::Mci.full_name(), "Mild Cognitive Impairment");
        assert_eq!(Diagnosis::Nc.full_name(), "Normal Cognition");
        assert!("Alzheimer".parse::<Diagnosis>().is_err());
    }

    #[test]
    fn region_set_is_closed_and_only_ventricle_is_inverted() {
        assert_eq!(RegionName::ALL.len(), 14);
        let inverted: Vec<_> =
            RegionName::ALL.iter().filter(|r| r.polarity() == Polarity::Inverted).collect();
        assert_eq!(inverted, vec![&RegionName::LateralVentricle]);
        for r in RegionName::ALL {
            assert_eq!(r.as_str().parse::<RegionName>().unwrap(), r);
        }
    }
}
