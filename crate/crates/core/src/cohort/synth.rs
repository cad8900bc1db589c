use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Cohort, CohortError, CohortSource, Diagnosis, PatientRecord, Polarity, RegionName, Sex};

const MARITAL: [&str; 4] = ["Married", "Widowed", "Divorced", "Never married"];

/// Distribution parameters for one diagnosis class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassParams {
    pub region_mean: BTreeMap<RegionName, f64>,
    pub region_sd: BTreeMap<RegionName, f64>,
    pub mmse_mean: f64,
    pub mmse_sd: f64,
    /// Probability of carrying 0, 1, 2 APOE4 copies.
    pub apoe4_probs: [f64; 3],
}

impl ClassParams {
    fn uniform(normal_mean: f64, ventricle_mean: f64, mmse_mean: f64, mmse_sd: f64, apoe4: [f64; 3]) -> Self {
        let mut region_mean = BTreeMap::new();
        let mut region_sd = BTreeMap::new();
        for r in RegionName::ALL {
            match r.polarity() {
                Polarity::Normal => {
                    region_mean.insert(r, normal_mean);
                    region_sd.insert(r, 0.4);
                }
                Polarity::Inverted => {
                    region_mean.insert(r, ventricle_mean);
                    region_sd.insert(r, 2.0);
                }
            }
        }
        ClassParams { region_mean, region_sd, mmse_mean, mmse_sd, apoe4_probs: apoe4 }
    }
}

/// Parameters of the synthetic cohort generator. `classes` and `counts`
/// are indexed AD, MCI, NC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: [ClassParams; 3],
    pub counts: [usize; 3],
    /// Inclusive age range.
    pub age_range: (u32, u32),
    pub male_fraction: f64,
    /// Inclusive range of years of education.
    pub education_range: (u32, u32),
    pub id_prefix: String,
    pub with_mri_refs: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            classes: [
                ClassParams::uniform(5.5, 30.0, 21.0, 2.0, [0.30, 0.50, 0.20]),
                ClassParams::uniform(6.5, 25.0, 26.0, 1.5, [0.50, 0.40, 0.10]),
                ClassParams::uniform(7.5, 20.0, 29.0, 1.0, [0.70, 0.25, 0.05]),
            ],
            counts: [100, 100, 100],
            age_range: (55, 89),
            male_fraction: 0.5,
            education_range: (8, 20),
            id_prefix: "SYN".to_string(),
            with_mri_refs: true,
        }
    }
}

impl SynthSpec {
    pub fn with_counts(mut self, counts: [usize; 3]) -> Self {
        self.counts = counts;
        self
    }

    /// Splits `n` as evenly as possible over AD, MCI, NC.
    pub fn with_total(self, n: usize) -> Self {
        let base = n / 3;
        let rem = n % 3;
        let counts = [base + usize::from(rem > 0), base + usize::from(rem > 1), base];
        self.with_counts(counts)
    }

    fn params(&self, d: Diagnosis) -> &ClassParams {
        &self.classes[d.index()]
    }

    pub fn validate(&self) -> Result<(), CohortError> {
        let bad = |msg: String| Err(CohortError::InvalidSpec(msg));
        for d in Diagnosis::ALL {
            let p = self.params(d);
            let sum: f64 = p.apoe4_probs.iter().sum();
            if p.apoe4_probs.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (sum - 1.0).abs() > 1e-9 {
                return bad(format!("{} APOE4 probabilities must sum to 1 (got {sum})", d.code()));
            }
            if !(p.mmse_sd > 0.0) {
                return bad(format!("{} MMSE stddev must be > 0", d.code()));
            }
            for r in RegionName::ALL {
                let (Some(&m), Some(&sd)) = (p.region_mean.get(&r), p.region_sd.get(&r)) else {
                    return bad(format!("{} is missing parameters for {r}", d.code()));
                };
                if !(sd > 0.0) {
                    return bad(format!("{} {r} stddev must be > 0", d.code()));
                }
                if !(m > 0.0) {
                    return bad(format!("{} {r} mean must be > 0", d.code()));
                }
            }
        }
        for r in RegionName::ALL {
            let [ad, mci, nc] = Diagnosis::ALL.map(|d| self.params(d).region_mean[&r]);
            let ordered = match r.polarity() {
                Polarity::Normal => nc > mci && mci > ad,
                Polarity::Inverted => ad > mci && mci > nc,
            };
            if !ordered {
                let want = match r.polarity() {
                    Polarity::Normal => "mean(NC) > mean(MCI) > mean(AD)",
                    Polarity::Inverted => "mean(AD) > mean(MCI) > mean(NC)",
                };
                return bad(format!("{r} violates {want}"));
            }
        }
        if self.age_range.0 > self.age_range.1 {
            return bad("age range is empty".into());
        }
        if self.education_range.0 > self.education_range.1 {
            return bad("education range is empty".into());
        }
        if !(0.0..=1.0).contains(&self.male_fraction) {
            return bad("male fraction must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// Draws a cohort with exactly `spec.counts` records per class. The class
/// sequence is shuffled so records of different classes are interleaved.
pub fn generate_cohort(spec: &SynthSpec, seed: u64) -> Result<Cohort, CohortError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes: Vec<Diagnosis> = Diagnosis::ALL
        .iter()
        .flat_map(|&d| std::iter::repeat_n(d, spec.counts[d.index()]))
        .collect();
    classes.shuffle(&mut rng);
    let width = classes.len().max(1).to_string().len().max(5);

    let mut records = Vec::with_capacity(classes.len());
    for (i, gold) in classes.into_iter().enumerate() {
        let p = spec.params(gold);
        let id = format!("{}-{:0width$}", spec.id_prefix, i + 1);
        let age = rng.random_range(spec.age_range.0..=spec.age_range.1);
        let sex = if rng.random::<f64>() < spec.male_fraction { Sex::M } else { Sex::F };
        let education_years = rng.random_range(spec.education_range.0..=spec.education_range.1);
        let marital_status = Some(MARITAL[rng.random_range(0..MARITAL.len())].to_string());
        let mmse_draw = Normal::new(p.mmse_mean, p.mmse_sd)
            .expect("validated stddev")
            .sample(&mut rng);
        let mmse = mmse_draw.round().clamp(0.0, f64::from(super::MMSE_MAX)) as u8;
        let u: f64 = rng.random();
        let apoe4_copies = if u < p.apoe4_probs[0] {
            0
        } else if u < p.apoe4_probs[0] + p.apoe4_probs[1] {
            1
        } else {
            2
        };
        let mut region_volumes = BTreeMap::new();
        for r in RegionName::ALL {
            let dist = Normal::new(p.region_mean[&r], p.region_sd[&r]).expect("validated stddev");
            let mut v = dist.sample(&mut rng);
            // Volumes must stay positive; redraw the (vanishingly rare) non-positive tail.
            while v <= 0.0 {
                v = dist.sample(&mut rng);
            }
            region_volumes.insert(r, v);
        }
        let mri_ref = spec.with_mri_refs.then(|| format!("mri/{id}.nii.gz"));
        records.push(PatientRecord {
            id,
            age,
            sex,
            education_years,
            marital_status,
            mmse,
            apoe4_copies,
            region_volumes,
            gold,
            mri_ref,
        });
    }
    Cohort::new(records, CohortSource::Synthetic)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_class_partition() {
        let c = generate_cohort(&SynthSpec::default().with_counts([10, 10, 10]), 42).unwrap();
        assert_eq!(c.len(), 30);
        assert_eq!(c.class_counts(), [10, 10, 10]);
        assert_eq!(c.source, CohortSource::Synthetic);
    }

    #[test]
    fn same_seed_same_cohort() {
        let spec = SynthSpec::default().with_counts([10, 10, 10]);
        let a = generate_cohort(&spec, 42).unwrap();
        let b = generate_cohort(&spec, 42).unwrap();
        let c = generate_cohort(&spec, 43).unwrap();
        assert_eq!(serde_json::to_string(&a.records).unwrap(), serde_json::to_string(&b.records).unwrap());
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn with_total_spreads_remainder() {
        assert_eq!(SynthSpec::default().with_total(7124).counts, [2375, 2375, 2374]);
        assert_eq!(SynthSpec::default().with_total(300).counts, [100, 100, 100]);
    }

    #[test]
    fn invalid_specs_name_the_violation() {
        let mut spec = SynthSpec::default();
        spec.classes[0].apoe4_probs = [0.5, 0.5, 0.5];
        let msg = generate_cohort(&spec, 1).unwrap_err().to_string();
        assert!(msg.contains("AD APOE4 probabilities"), "{msg}");

        let mut spec = SynthSpec::default();
        spec.classes[2].region_mean.insert(RegionName::Hippocampus, 6.0);
        let msg = generate_cohort(&spec, 1).unwrap_err().to_string();
        assert!(msg.contains("Hippocampus violates mean(NC) > mean(MCI) > mean(AD)"), "{msg}");

        let mut spec = SynthSpec::default();
        spec.classes[1].region_sd.insert(RegionName::LateralVentricle, 0.0);
        assert!(generate_cohort(&spec, 1).unwrap_err().to_string().contains("stddev"));

        let mut spec = SynthSpec::default();
        spec.classes[1].region_mean.insert(RegionName::LateralVentricle, 35.0);
        assert!(generate_cohort(&spec, 1)
            .unwrap_err()
            .to_string()
            .contains("mean(AD) > mean(MCI) > mean(NC)"));
    }

    #[test]
    fn nc_hippocampus_mean_within_three_standard_errors() {
        let spec = SynthSpec::default().with_counts([200, 200, 200]);
        let c = generate_cohort(&spec, 42).unwrap();
        let vols: Vec<f64> = c
            .records
            .iter()
            .filter(|r| r.gold == Diagnosis::Nc)
            .map(|r| r.volume(RegionName::Hippocampus))
            .collect();
        let n = vols.len() as f64;
        let mean = vols.iter().sum::<f64>() / n;
        let se = 0.4 / n.sqrt();
        assert!((mean - 7.5).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn mmse_is_clipped_and_records_validate() {
        let mut spec = SynthSpec::default().with_counts([50, 50, 50]);
        spec.classes[2].mmse_mean = 31.0;
        spec.classes[0].mmse_mean = -2.0;
        let c = generate_cohort(&spec, 9).unwrap();
        assert!(c.records.iter().all(|r| r.mmse <= 30 && r.validate().is_ok()));
        assert!(c.records.iter().any(|r| r.mmse == 30));
        assert!(c.records.iter().any(|r| r.mmse == 0));
    }
}
