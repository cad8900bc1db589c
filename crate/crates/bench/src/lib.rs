//! Shared fixtures for the pipeline benchmarks.

use clinreason_core::cohort::{generate_cohort, SynthSpec};
use clinreason_core::runner::{case_inputs, CaseInput};
use clinreason_core::textualize::{compute_thresholds, Grouping, LevelCase, ThresholdTable};
use clinreason_core::PatientRecord;

pub struct Fixture {
    pub records: Vec<PatientRecord>,
    pub table: ThresholdTable,
    pub cases: Vec<CaseInput>,
}

/// A seeded synthetic cohort of `n` records with thresholds fitted on all of it.
pub fn fixture(n: usize, seed: u64) -> Fixture {
    let cohort = generate_cohort(&SynthSpec::default().with_total(n), seed).expect("default spec is valid");
    let table = compute_thresholds(&cohort.records, Grouping::default()).expect("every class present");
    let cases = case_inputs(&cohort.records, &table, LevelCase::Sentence);
    Fixture { records: cohort.records, table, cases }
}
