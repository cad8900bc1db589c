//! Pulls the rationale and the predicted diagnosis out of completion text.
//!
//! The answer scope is the text after the final `Diagnosis:` cue, or the
//! whole text when there is no cue. Within it, the rules apply in order:
//!
//! 1. a choice letter `(A)`, `(B)` or `(C)` on the first non-empty line;
//! 2. an exact full label name (case-insensitive), last occurrence wins;
//! 3. an inflected label name in the last 200 characters, last occurrence wins.
//!
//! Nothing matching is [`MatchKind::None`]. Parsing never fails.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::cohort::Diagnosis;

/// `None` means the output could not be mapped onto a label.
pub type Prediction = Option<Diagnosis>;

pub const FUZZY_WINDOW_CHARS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchKind {
    Letter,
    FullName,
    FuzzyName,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedOutput {
    pub rationale: String,
    pub prediction: Prediction,
    pub match_kind: MatchKind,
}

impl ParsedOutput {
    pub fn unparseable() -> Self {
        ParsedOutput { rationale: String::new(), prediction: None, match_kind: MatchKind::None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sections {
    pub rationale: String,
    pub diagnosis_line: String,
}

static DIAGNOSIS_CUE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)diagnosis\s*:").unwrap());
static RATIONALE_CUE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)medical\s+rationale\s*:").unwrap());
static LETTER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\(\s*([ABCabc])\s*\)").unwrap());
static FULL_NAME: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)(alzheimer'?s\s+disease)|(mild\s+cognitive\s+impairment)|(normal\s+cognition)").unwrap()
});
static FUZZY_NAME: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(concat!(
        r"(?i)(alzheimer[’']?s?\b|\balzheimer)",
        r"|(mild(ly)?\s+cognitive(ly)?\s+impair\w*|\bmci\b)",
        r"|(normal(ly)?\s+cogniti\w*|cognitively\s+normal|\bnormal\s+cognitive\s+function)",
    ))
    .unwrap()
});

const TRIM: &[char] = &['*', '#', '_', ' ', '\t', '\r', '\n'];

fn final_cue(text: &str) -> Option<regex::Match<'_>> {
    DIAGNOSIS_CUE.find_iter(text).last()
}

/// Splits at the final `Diagnosis:` cue and the last `Medical Rationale:`
/// cue before it.
pub fn split_sections(text: &str) -> Sections {
    let (body, diagnosis_line) = match final_cue(text) {
        Some(m) => (&text[..m.start()], text[m.end()..].trim_matches(TRIM)),
        None => (text, ""),
    };
    let rationale = match RATIONALE_CUE.find_iter(body).last() {
        Some(m) => &body[m.end()..],
        None => body,
    };
    Sections { rationale: rationale.trim_matches(TRIM).to_string(), diagnosis_line: diagnosis_line.to_string() }
}

fn answer_scope(text: &str) -> &str {
    match final_cue(text) {
        Some(m) => &text[m.end()..],
        None => text,
    }
}

fn which(caps: &regex::Captures<'_>) -> Option<Diagnosis> {
    Diagnosis::ALL.into_iter().enumerate().find(|(i, _)| caps.get(i + 1).is_some()).map(|(_, d)| d)
}

fn tail_chars(s: &str, n: usize) -> &str {
    match s.char_indices().rev().nth(n.saturating_sub(1)) {
        Some((idx, _)) if n > 0 => &s[idx..],
        _ => s,
    }
}

pub fn parse_diagnosis(text: &str) -> (Prediction, MatchKind) {
    let scope = answer_scope(text);
    let first_line = scope.lines().map(|l| l.trim_matches(TRIM)).find(|l| !l.is_empty()).unwrap_or("");
    if let Some(c) = LETTER.captures(first_line) {
        let letter = c[1].chars().next().expect("one char");
        return (Diagnosis::from_letter(letter), MatchKind::Letter);
    }
    if let Some(d) = FULL_NAME.captures_iter(scope).last().and_then(|c| which(&c)) {
        return (Some(d), MatchKind::FullName);
    }
    let window = tail_chars(scope, FUZZY_WINDOW_CHARS);
    if let Some(d) = FUZZY_NAME.captures_iter(window).last().and_then(|c| {
        if c.get(1).is_some() {
            Some(Diagnosis::Ad)
        } else if c.get(2).is_some() {
            Some(Diagnosis::Mci)
        } else if c.get(5).is_some() {
            Some(Diagnosis::Nc)
        } else {
            None
        }
    }) {
        return (Some(d), MatchKind::FuzzyName);
    }
    (None, MatchKind::None)
}

pub fn parse_output(text: &str) -> ParsedOutput {
    let sections = split_sections(text);
    let (prediction, match_kind) = parse_diagnosis(text);
    ParsedOutput { rationale: sections.rationale, prediction, match_kind }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn letter_on_diagnosis_line() {
        assert_eq!(
            parse_diagnosis("Diagnosis: (A) Alzheimer's Disease"),
            (Some(Diagnosis::Ad), MatchKind::Letter)
        );
    }

    #[test]
    fn full_name_in_prose() {
        assert_eq!(
            parse_diagnosis("the findings indicate normal cognition."),
            (Some(Diagnosis::Nc), MatchKind::FullName)
        );
    }

    #[test]
    fn empty_is_unparseable() {
        assert_eq!(parse_diagnosis(""), (None, MatchKind::None));
        assert_eq!(parse_output("").match_kind, MatchKind::None);
    }

    #[test]
    fn letter_beats_conflicting_name() {
        assert_eq!(
            parse_diagnosis("Diagnosis: (C) Alzheimer's Disease"),
            (Some(Diagnosis::Nc), MatchKind::Letter)
        );
    }

    #[test]
    fn fuzzy_inflection_in_tail() {
        assert_eq!(
            parse_diagnosis("Overall the picture suggests the patient is mildly cognitively impaired."),
            (Some(Diagnosis::Mci), MatchKind::FuzzyName)
        );
        assert_eq!(
            parse_diagnosis("Conclusion: consistent with Alzheimers."),
            (Some(Diagnosis::Ad), MatchKind::FuzzyName)
        );
        let far = format!("Likely Alzheimers. {}", "x".repeat(250));
        assert_eq!(parse_diagnosis(&far), (None, MatchKind::None));
    }

    #[test]
    fn sections_split_on_cues() {
        let s = split_sections("Medical Rationale: X. Diagnosis: (B) Mild Cognitive Impairment");
        assert_eq!(s.rationale, "X.");
        assert_eq!(s.diagnosis_line, "(B) Mild Cognitive Impairment");

        let s = split_sections("no cues here");
        assert_eq!(s.rationale, "no cues here");
        assert_eq!(s.diagnosis_line, "");

        let s = split_sections("Medical Rationale: R. Diagnosis: maybe. More text. Diagnosis: (C) Normal Cognition");
        assert_eq!(s.rationale, "R. Diagnosis: maybe. More text.");
        assert_eq!(s.diagnosis_line, "(C) Normal Cognition");
    }

    #[test]
    fn markdown_wrapped_cues() {
        let p = parse_output("**Medical Rationale:** atrophy.\n**Diagnosis:** (B) Mild Cognitive Impairment");
        assert_eq!(p.rationale, "atrophy.");
        assert_eq!(p.prediction, Some(Diagnosis::Mci));
        assert_eq!(p.match_kind, MatchKind::Letter);
    }

    proptest! {
        #[test]
        fn never_panics(s in "\\PC*") {
            let p = parse_output(&s);
            prop_assert_eq!(p.prediction.is_none(), p.match_kind == MatchKind::None);
        }

        #[test]
        fn diagnosis_line_alone_parses_the_same(
            prefix in "[a-zA-Z .,()'\n]{0,80}",
            answer in prop_oneof![
                Just("(A) Alzheimer's Disease".to_string()),
                Just("(b) mild cognitive impairment".to_string()),
                Just("Normal Cognition".to_string()),
                Just("likely alzheimers".to_string()),
                Just("( C )".to_string()),
                "[a-z ]{0,30}",
            ],
        ) {
            let text = format!("{prefix}\nDiagnosis: {answer}");
            let line = split_sections(&text).diagnosis_line;
            prop_assert_eq!(parse_diagnosis(&text), parse_diagnosis(&line));
        }
    }
}
