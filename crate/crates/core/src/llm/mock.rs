use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendKind, Completion, CompletionRequest, LlmError};
use crate::cohort::Diagnosis;
use crate::prompts::{DESCRIPTION_CUE, DIAGNOSIS_CUE, QUESTION};
use crate::textualize::REGION_LINE_PREFIX;

/// Thresholds of the mock diagnosis rule.
///
/// `score = severe_weight * #SEVERE + mild_weight * #MILD`; the MMSE band is
/// NC at `>= mmse_nc_min`, MCI at `>= mmse_mci_min`, AD below. The label is
/// AD if `score >= ad_min_score` or the band is AD, NC if
/// `score <= nc_max_score` and the band is NC, MCI otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockRules {
    pub severe_weight: u32,
    pub mild_weight: u32,
    pub ad_min_score: u32,
    pub nc_max_score: u32,
    pub mmse_nc_min: u32,
    pub mmse_mci_min: u32,
}

impl Default for MockRules {
    fn default() -> Self {
        MockRules {
            severe_weight: 2,
            mild_weight: 1,
            ad_min_score: 20,
            nc_max_score: 7,
            mmse_nc_min: 27,
            mmse_mci_min: 24,
        }
    }
}

impl MockRules {
    pub fn score(&self, s: &DescriptionSummary) -> u32 {
        self.severe_weight * s.severe + self.mild_weight * s.mild
    }

    pub fn mmse_band(&self, mmse: u32) -> Diagnosis {
        if mmse >= self.mmse_nc_min {
            Diagnosis::Nc
        } else if mmse >= self.mmse_mci_min {
            Diagnosis::Mci
        } else {
            Diagnosis::Ad
        }
    }

    pub fn decide(&self, s: &DescriptionSummary) -> Diagnosis {
        let score = self.score(s);
        let band = self.mmse_band(s.mmse);
        if score >= self.ad_min_score || band == Diagnosis::Ad {
            Diagnosis::Ad
        } else if score <= self.nc_max_score && band == Diagnosis::Nc {
            Diagnosis::Nc
        } else {
            Diagnosis::Mci
        }
    }
}

/// What the mock reads from a description.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DescriptionSummary {
    pub severe: u32,
    pub mild: u32,
    pub none: u32,
    pub mmse: u32,
    /// Gold label given in a rationalization prompt, if any.
    pub given: Option<Diagnosis>,
}

static MMSE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"score of (\d+)(?:\.\d+)?/30").unwrap());

/// Takes the block after the last `Patient Description:` cue (or the
/// whole text) and counts region levels, the MMSE score and any gold
/// label line.
fn summarize(text: &str) -> Result<DescriptionSummary, LlmError> {
    let target = match text.rfind(DESCRIPTION_CUE) {
        Some(i) => &text[i + DESCRIPTION_CUE.len()..],
        None => text,
    };
    let mut s = DescriptionSummary { severe: 0, mild: 0, none: 0, mmse: 0, given: None };
    let mut mmse = None;
    for line in target.lines().map(str::trim) {
        if line.starts_with(QUESTION) {
            break;
        }
        if let Some(label) = line.strip_prefix(DIAGNOSIS_CUE) {
            let label = label.trim();
            s.given = Diagnosis::ALL.into_iter().find(|d| d.full_name() == label);
            continue;
        }
        if let Some(rest) = line.strip_prefix(REGION_LINE_PREFIX) {
            let word = rest.split_whitespace().next().unwrap_or("").to_ascii_lowercase();
            match word.as_str() {
                "severe" => s.severe += 1,
                "mild" => s.mild += 1,
                "no" => s.none += 1,
                _ => {}
            }
            continue;
        }
        if mmse.is_none() {
            if let Some(c) = MMSE.captures(line) {
                mmse = c[1].parse().ok();
            }
        }
    }
    if s.severe + s.mild + s.none == 0 {
        return Err(LlmError::UnparseableDescription("no region atrophy lines".into()));
    }
    s.mmse = mmse.ok_or_else(|| LlmError::UnparseableDescription("no MMSE score".into()))?;
    Ok(s)
}

fn render(rules: &MockRules, s: &DescriptionSummary) -> String {
    let label = rules.decide(s);
    let score = rules.score(s);
    let band = rules.mmse_band(s.mmse);
    let mut text = String::from("Medical Rationale:\n");
    text.push_str(&format!(
        "The MRI findings show severe atrophy in {} and mild atrophy in {} of the {} examined regions, a weighted atrophy burden of {}.\n",
        s.severe,
        s.mild,
        s.severe + s.mild + s.none,
        score
    ));
    text.push_str(&format!(
        "The Mini-mental State Examination score of {}/30 falls in the range expected for {}.\n",
        s.mmse,
        band.full_name().to_lowercase()
    ));
    let summary = match label {
        Diagnosis::Ad => "Taken together, widespread atrophy and cognitive decline point to a neurodegenerative process.",
        Diagnosis::Mci => "Taken together, the partial atrophy and modest cognitive findings point to an intermediate stage.",
        Diagnosis::Nc => "Taken together, preserved brain volumes and intact cognition argue against neurodegeneration.",
    };
    text.push_str(summary);
    if let Some(given) = s.given {
        text.push_str(&format!(" These observations are read in light of the stated diagnosis of {}.", given.full_name()));
    }
    text.push_str(&format!("\n{DIAGNOSIS_CUE} ({}) {}", label.letter(), label.full_name()));
    text
}

/// Runs the default rule over `description` (a bare description or a
/// whole prompt).
pub fn mock_diagnose(description: &str) -> Result<Completion, LlmError> {
    let rules = MockRules::default();
    let s = summarize(description)?;
    Ok(Completion {
        text: render(&rules, &s),
        backend: BackendKind::Mock,
        latency_ms: 0,
        request_digest: String::new(),
    })
}

/// Deterministic rule-based backend for offline runs.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    pub rules: MockRules,
}

impl MockBackend {
    pub fn new(rules: MockRules) -> Self {
        MockBackend { rules }
    }

    pub fn summarize(text: &str) -> Result<DescriptionSummary, LlmError> {
        summarize(text)
    }
}

impl Backend for MockBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError> {
        request.validate()?;
        let text = request
            .last_user()
            .ok_or_else(|| LlmError::InvalidRequest("no user message".into()))?;
        let s = summarize(text)?;
        Ok(Completion {
            text: render(&self.rules, &s),
            backend: BackendKind::Mock,
            latency_ms: 0,
            request_digest: request.digest(),
        })
    }
}
