//! Independent oracles shared by the integration and acceptance tests.
//! Nothing here calls into the library's own threshold, labelling or
//! mock-rule code.
#![allow(dead_code)]

use std::collections::BTreeMap;

use clinreason_core::cohort::{generate_cohort, SynthSpec};
use clinreason_core::{Diagnosis, PatientRecord, RegionName, Sex};

pub const REGIONS: [(&str, RegionName); 14] = [
    ("hippocampal atrophy", RegionName::Hippocampus),
    ("amygdala atrophy", RegionName::Amygdala),
    ("entorhinal atrophy", RegionName::Entorhinal),
    ("parahippocampal atrophy", RegionName::Parahippocampus),
    ("medial temporal lobe atrophy", RegionName::MedialTemporalLobe),
    ("fusiform atrophy", RegionName::Fusiform),
    ("precuneus atrophy", RegionName::Precuneus),
    ("superior parietal atrophy", RegionName::SuperiorParietal),
    ("ventricle enlargement", RegionName::LateralVentricle),
    ("frontal lobe atrophy", RegionName::FrontalLobe),
    ("temporal lobe atrophy", RegionName::TemporalLobe),
    ("parietal lobe atrophy", RegionName::ParietalLobe),
    ("occipital lobe atrophy", RegionName::OccipitalLobe),
    ("cerebral cortex atrophy", RegionName::CerebralCortex),
];

/// 0 = NO, 1 = MILD, 2 = SEVERE.
pub type Level = u8;

pub fn cohort(n: usize, seed: u64) -> Vec<PatientRecord> {
    generate_cohort(&SynthSpec::default().with_total(n), seed).unwrap().records
}

fn inverted(r: RegionName) -> bool {
    r == RegionName::LateralVentricle
}

/// Class means (AD, MCI, NC) of one region over `members`, or `None` if a
/// class is absent.
pub fn class_means(members: &[&PatientRecord], region: RegionName) -> Option<[f64; 3]> {
    let mut sum = [0.0; 3];
    let mut n = [0usize; 3];
    for m in members {
        let c = match m.gold {
            Diagnosis::Ad => 0,
            Diagnosis::Mci => 1,
            Diagnosis::Nc => 2,
        };
        sum[c] += m.region_volumes[&region];
        n[c] += 1;
    }
    if n.contains(&0) {
        return None;
    }
    Some([sum[0] / n[0] as f64, sum[1] / n[1] as f64, sum[2] / n[2] as f64])
}

/// (no_bound, severe_bound) from class means, if they respect the region's
/// direction.
fn bounds_from(means: [f64; 3], region: RegionName) -> Option<(f64, f64)> {
    let [ad, mci, nc] = means;
    let no = (nc + mci) / 2.0;
    let severe = (ad + mci) / 2.0;
    let ok = if inverted(region) { no <= severe } else { no >= severe };
    ok.then_some((no, severe))
}

pub fn same_group(a: &PatientRecord, sex: Sex, age: u32, width: u32) -> bool {
    a.sex == sex && a.age / width == age / width
}

/// Brute-force bounds for a (sex, age) cell: group means if the group is
/// complete and ordered, else the global bounds.
pub fn oracle_bounds(train: &[PatientRecord], sex: Sex, age: u32, width: u32, region: RegionName) -> (f64, f64) {
    let all: Vec<&PatientRecord> = train.iter().collect();
    let global = bounds_from(class_means(&all, region).expect("global classes"), region).expect("global ordered");
    let members: Vec<&PatientRecord> = train.iter().filter(|r| same_group(r, sex, age, width)).collect();
    class_means(&members, region).and_then(|m| bounds_from(m, region)).unwrap_or(global)
}

pub fn oracle_level(volume: f64, (no, severe): (f64, f64), region: RegionName) -> Level {
    if inverted(region) {
        if volume < no {
            0
        } else if volume > severe {
            2
        } else {
            1
        }
    } else if volume > no {
        0
    } else if volume < severe {
        2
    } else {
        1
    }
}

pub fn oracle_labels(train: &[PatientRecord], rec: &PatientRecord, width: u32) -> BTreeMap<RegionName, Level> {
    REGIONS
        .iter()
        .map(|&(_, r)| (r, oracle_level(rec.region_volumes[&r], oracle_bounds(train, rec.sex, rec.age, width, r), r)))
        .collect()
}

/// Inverse of the description template: region lines back to levels, in
/// the order they appear. `Err` describes the first malformed line.
pub fn parse_region_lines(text: &str) -> Result<Vec<(RegionName, Level)>, String> {
    let mut out = Vec::new();
    for line in text.lines().filter(|l| l.starts_with("- ")) {
        let rest = line
            .strip_prefix("- This patient has ")
            .and_then(|r| r.strip_suffix('.'))
            .ok_or_else(|| format!("bad region line {line:?}"))?;
        let (word, phrase) = rest.split_once(' ').ok_or_else(|| format!("no level in {line:?}"))?;
        let level = match word.to_ascii_lowercase().as_str() {
            "no" => 0,
            "mild" => 1,
            "severe" => 2,
            _ => return Err(format!("unknown level {word:?}")),
        };
        let region = REGIONS
            .iter()
            .find(|(p, _)| *p == phrase)
            .map(|(_, r)| *r)
            .ok_or_else(|| format!("unknown phrase {phrase:?}"))?;
        out.push((region, level));
    }
    Ok(out)
}

/// MMSE integer from a description.
pub fn parse_mmse(text: &str) -> Option<u32> {
    let start = text.find("score of ")? + "score of ".len();
    let digits: String = text[start..].chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

/// The documented mock rule, applied by hand: s = 2·severe + mild;
/// AD if s ≥ ad_min or MMSE < 24; NC if s ≤ nc_max and MMSE ≥ 27; else MCI.
pub fn oracle_mock(description: &str, ad_min: u32, nc_max: u32) -> Diagnosis {
    let levels = parse_region_lines(description).expect("well-formed description");
    let s: u32 = levels.iter().map(|&(_, l)| u32::from(l)).sum();
    let mmse = parse_mmse(description).expect("mmse");
    if s >= ad_min || mmse < 24 {
        Diagnosis::Ad
    } else if s <= nc_max && mmse >= 27 {
        Diagnosis::Nc
    } else {
        Diagnosis::Mci
    }
}

/// The fixed patient behind the prompt golden files.
pub fn golden_description() -> String {
    use clinreason_core::textualize::{render_description, AtrophyLevel};
    let levels = [2, 2, 1, 2, 1, 0, 1, 1, 2, 0, 1, 1, 0, 0];
    let labels: BTreeMap<RegionName, AtrophyLevel> = REGIONS
        .iter()
        .zip(levels)
        .map(|(&(_, r), l)| (r, [AtrophyLevel::No, AtrophyLevel::Mild, AtrophyLevel::Severe][l]))
        .collect();
    let rec = PatientRecord {
        id: "GOLDEN-1".into(),
        age: 76,
        sex: Sex::M,
        education_years: 16,
        marital_status: Some("Married".into()),
        mmse: 25,
        apoe4_copies: 1,
        region_volumes: REGIONS.iter().map(|&(_, r)| (r, 6.0)).collect(),
        gold: Diagnosis::Mci,
        mri_ref: None,
    };
    render_description(&rec, &labels).unwrap().text
}

pub fn golden_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Compares `text` with a checked-in golden file; `UPDATE_GOLDEN=1`
/// rewrites it instead.
pub fn check_golden(name: &str, text: &str) -> Result<(), String> {
    let path = golden_dir().join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(golden_dir()).unwrap();
        std::fs::write(&path, text).unwrap();
        return Ok(());
    }
    let want = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if want == text {
        Ok(())
    } else {
        let line = want.lines().zip(text.lines()).position(|(a, b)| a != b).map_or(0, |i| i + 1);
        Err(format!("{name} differs from golden (first differing line {line})"))
    }
}

/// (golden file name, rendered prompt) for the three prompt kinds.
pub fn golden_prompts() -> Vec<(&'static str, String)> {
    use clinreason_core::prompts::*;
    let ex = builtin_exemplars();
    let d = golden_description();
    vec![
        ("prompt1_candidate.txt", build_candidate_prompt(&d, Diagnosis::Mci).unwrap().render()),
        ("prompt2_rationalize.txt", build_rationalization_prompt(&ex, &d, Diagnosis::Mci).unwrap().render()),
        ("prompt3_diagnose_cot.txt", build_diagnosis_prompt(&ex, &d, DiagnoseMode::Cot, 2).unwrap().render()),
        ("prompt3_diagnose_standard_k3.txt", build_diagnosis_prompt(&ex, &d, DiagnoseMode::Standard, 3).unwrap().render()),
    ]
}

pub mod review {
    use clinreason_core::eval::{ReviewBatch, ReviewGroup, ReviewRecord, SourcedRationale};
    use clinreason_core::review::{ReviewStore, ScoreSheet, SessionOptions, Taxonomy};
    use clinreason_core::Diagnosis;

    pub fn batch(records: &[(&str, ReviewGroup)], sources: &[&str]) -> ReviewBatch {
        ReviewBatch {
            seed: 0,
            sources: sources.iter().map(|s| s.to_string()).collect(),
            records: records
                .iter()
                .map(|&(id, group)| ReviewRecord {
                    record_id: id.to_string(),
                    group,
                    gold: Diagnosis::Mci,
                    description: format!("description of {id}"),
                    rationales: sources
                        .iter()
                        .map(|s| SourcedRationale {
                            source: s.to_string(),
                            rationale: format!("{s} on {id}"),
                            prediction: Some(Diagnosis::Ad),
                            reference: false,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Two raters, three records (two misdiagnosed, one correct), two
    /// sources: six items. Scores per (record, source, rater) in criterion
    /// order.
    pub const SCORES: [(&str, &str, &str, [i32; 5]); 12] = [
        ("R1", "x", "a", [5, 4, 3, 2, 1]),
        ("R2", "x", "a", [3, 3, 3, 3, 3]),
        ("R3", "x", "a", [4, 4, 4, 4, 4]),
        ("R1", "y", "a", [0, 1, 2, 3, 4]),
        ("R2", "y", "a", [2, 2, 2, 2, 2]),
        ("R3", "y", "a", [5, 5, 5, 5, 5]),
        ("R1", "x", "b", [4, 4, 4, 4, 4]),
        ("R2", "x", "b", [2, 3, 4, 5, 1]),
        ("R3", "x", "b", [4, 5, 4, 5, 4]),
        ("R1", "y", "b", [1, 1, 1, 1, 1]),
        ("R2", "y", "b", [3, 2, 1, 0, 5]),
        ("R3", "y", "b", [5, 4, 5, 4, 5]),
    ];

    /// Hand-computed cell means: (source, group, per-criterion means).
    pub const MEANS: [(&str, ReviewGroup, [f64; 5]); 4] = [
        ("x", ReviewGroup::Misdiagnoses, [3.5, 3.5, 3.5, 3.5, 2.25]),
        ("x", ReviewGroup::CorrectDiagnoses, [4.0, 4.5, 4.0, 4.5, 4.0]),
        ("y", ReviewGroup::Misdiagnoses, [1.5, 1.5, 1.5, 1.5, 3.0]),
        ("y", ReviewGroup::CorrectDiagnoses, [5.0, 4.5, 5.0, 4.5, 5.0]),
    ];

    /// Mean |a - b| per criterion over the six items.
    pub const AGREEMENT: [f64; 5] = [4.0 / 6.0, 2.0 / 6.0, 4.0 / 6.0, 10.0 / 6.0, 11.0 / 6.0];

    pub fn six_item_session(store: &ReviewStore) -> String {
        let b = batch(
            &[("R1", ReviewGroup::Misdiagnoses), ("R2", ReviewGroup::Misdiagnoses), ("R3", ReviewGroup::CorrectDiagnoses)],
            &["x", "y"],
        );
        let raters = vec!["a".to_string(), "b".to_string()];
        let opts = SessionOptions { session_id: Some("six".into()), ..Default::default() };
        let id = store.create_session(&b, &raters, 17, &opts).unwrap();
        let key_of: std::collections::BTreeMap<String, String> =
            store.unblind(&id).unwrap().into_iter().map(|(k, s)| (s, k)).collect();
        for (rec, src, rater, scores) in SCORES {
            let item = format!("{rec}-{}", key_of[src]);
            store.submit_score(&id, ScoreSheet::new(&item, rater, scores)).unwrap();
        }
        id
    }

    /// 32 misdiagnosed items, one rater: 24 medically correct, 8 with
    /// incorrect knowledge; two of the correct ones also flag inappropriate
    /// expression and two ambiguity.
    pub fn taxonomy_session(store: &ReviewStore) -> String {
        let ids: Vec<String> = (0..32).map(|i| format!("T{i:02}")).collect();
        let recs: Vec<(&str, ReviewGroup)> = ids.iter().map(|i| (i.as_str(), ReviewGroup::Misdiagnoses)).collect();
        let b = batch(&recs, &["m"]);
        let opts = SessionOptions { session_id: Some("taxonomy".into()), ..Default::default() };
        let id = store.create_session(&b, &["r".to_string()], 3, &opts).unwrap();
        for (i, rec) in ids.iter().enumerate() {
            let mut tags = vec![if i < 24 { Taxonomy::MedicallyCorrect } else { Taxonomy::IncorrectKnowledge }];
            match i {
                0 | 1 => tags.push(Taxonomy::InappropriateExpression),
                2 | 3 => tags.push(Taxonomy::Ambiguity),
                _ => {}
            }
            let sheet = ScoreSheet::new(&format!("{rec}-S1"), "r", [3; 5]).with_taxonomy(&tags);
            store.submit_score(&id, sheet).unwrap();
        }
        id
    }
}
