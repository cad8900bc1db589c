use clinreason_core::parse::{parse_diagnosis, parse_output, split_sections};
use clinreason_core::{Diagnosis, MatchKind};
use proptest::prelude::*;
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    name: String,
    text: String,
    expected: Option<Diagnosis>,
    kind: MatchKind,
}

fn cases() -> Vec<Case> {
    include_str!("fixtures/parser_cases.jsonl").lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn fixture_suite() {
    let cases = cases();
    assert!(cases.len() >= 50);
    let wrong: Vec<String> = cases
        .iter()
        .filter_map(|c| {
            let got = parse_diagnosis(&c.text);
            (got != (c.expected, c.kind)).then(|| format!("{}: got {got:?}", c.name))
        })
        .collect();
    assert!(wrong.is_empty(), "{wrong:#?}");
}

#[test]
fn fixtures_cover_the_required_shapes() {
    let cases = cases();
    for d in Diagnosis::ALL {
        assert!(cases.iter().any(|c| c.kind == MatchKind::Letter && c.expected == Some(d)));
        assert!(cases.iter().any(|c| c.kind == MatchKind::FullName && c.expected == Some(d)));
    }
    assert!(cases.iter().filter(|c| c.expected.is_none()).count() >= 10);
}

#[test]
fn sections() {
    let s = split_sections("Medical Rationale:\nAtrophy is severe.\n\nDiagnosis: (A) Alzheimer's Disease");
    assert_eq!(s.rationale, "Atrophy is severe.");
    assert_eq!(s.diagnosis_line, "(A) Alzheimer's Disease");
    // no cues: everything is rationale
    let s = split_sections("just prose");
    assert_eq!((s.rationale.as_str(), s.diagnosis_line.as_str()), ("just prose", ""));
    // the last rationale cue before the final diagnosis wins
    let s = split_sections("Medical Rationale: a\nMedical Rationale: b\nDiagnosis: x");
    assert_eq!(s.rationale, "b");
    let p = parse_output("");
    assert_eq!(p.prediction, None);
    assert_eq!(p.rationale, "");
}

proptest! {
    #[test]
    fn never_panics(s in any::<String>()) {
        let _ = parse_output(&s);
    }

    #[test]
    fn canonical_answer_line_round_trips(prose in "[a-z ,.]{0,300}", letter in 0usize..3) {
        let d = Diagnosis::ALL[letter];
        let text = format!("Medical Rationale:\n{prose}\nDiagnosis: ({}) {}", d.letter(), d.full_name());
        let p = parse_output(&text);
        prop_assert_eq!(p.prediction, Some(d));
        prop_assert_eq!(p.match_kind, MatchKind::Letter);
        prop_assert_eq!(p.rationale, prose.trim_matches(|c: char| c == ' '  || c == '\n'));
    }
}
