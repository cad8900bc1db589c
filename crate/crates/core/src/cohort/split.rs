use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Cohort, CohortError, PatientRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn new(train: usize, valid: usize, test: usize) -> Self {
        SplitCounts { train, valid, test }
    }

    pub fn total(&self) -> usize {
        self.train + self.valid + self.test
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<String>,
    pub valid: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
    pub stratified: bool,
}

/// Seeded shuffle followed by prefix slicing into train, valid, test.
///
/// In stratified mode each class is shuffled on its own, then the classes
/// are merged so that every class is spread evenly over the ordering
/// (item `j` of a class of size `n` sits at fractional position
/// `(j + 0.5) / n`). Any contiguous slice then keeps the cohort's class
/// ratio up to rounding.
pub fn split(
    cohort: &Cohort,
    counts: SplitCounts,
    seed: u64,
    stratify: bool,
) -> Result<SplitAssignment, CohortError> {
    if counts.total() != cohort.len() {
        return Err(CohortError::SplitCounts { requested: counts.total(), size: cohort.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<&PatientRecord> = if stratify {
        let mut by_class: [Vec<&PatientRecord>; 3] = Default::default();
        for rec in &cohort.records {
            by_class[rec.gold.index()].push(rec);
        }
        let mut keyed = Vec::with_capacity(cohort.len());
        for (class, members) in by_class.iter_mut().enumerate() {
            members.shuffle(&mut rng);
            let n = members.len() as f64;
            for (j, rec) in members.iter().enumerate() {
                keyed.push(((j as f64 + 0.5) / n, class, *rec));
            }
        }
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        keyed.into_iter().map(|(_, _, r)| r).collect()
    } else {
        let mut all: Vec<&PatientRecord> = cohort.records.iter().collect();
        all.shuffle(&mut rng);
        all
    };
    let ids: Vec<String> = order.into_iter().map(|r| r.id.clone()).collect();
    let (train, rest) = ids.split_at(counts.train);
    let (valid, test) = rest.split_at(counts.valid);
    Ok(SplitAssignment {
        train: train.to_vec(),
        valid: valid.to_vec(),
        test: test.to_vec(),
        seed,
        stratified: stratify,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{generate_cohort, SynthSpec};
    use std::collections::HashSet;

    fn cohort(n_each: usize) -> Cohort {
        let spec = SynthSpec::default().with_counts([n_each, n_each, n_each]);
        generate_cohort(&spec, 7).unwrap()
    }

    #[test]
    fn wrong_counts_are_rejected() {
        let c = cohort(4);
        assert!(matches!(
            split(&c, SplitCounts::new(5, 5, 5), 1, false),
            Err(CohortError::SplitCounts { requested: 15, size: 12 })
        ));
    }

    #[test]
    fn degenerate_split_puts_everything_in_train() {
        let c = cohort(4);
        let s = split(&c, SplitCounts::new(12, 0, 0), 1, false).unwrap();
        assert_eq!(s.train.len(), 12);
        assert!(s.valid.is_empty() && s.test.is_empty());
    }

    #[test]
    fn split_is_a_deterministic_partition() {
        let c = cohort(20);
        for stratify in [false, true] {
            let a = split(&c, SplitCounts::new(40, 5, 15), 3, stratify).unwrap();
            let b = split(&c, SplitCounts::new(40, 5, 15), 3, stratify).unwrap();
            assert_eq!(a, b);
            let all: HashSet<_> = a.train.iter().chain(&a.valid).chain(&a.test).collect();
            assert_eq!(all.len(), 60);
            let other = split(&c, SplitCounts::new(40, 5, 15), 4, stratify).unwrap();
            assert_ne!(a.train, other.train);
        }
    }
}
