//! Subject-level stratified fold assignment, repeated with derived seeds.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{EvalError, Result};
use crate::corpus::{Diagnosis, Sex, SubjectMeta};
use crate::rng::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    /// Subject codes in sorted order.
    pub subjects: Vec<String>,
    /// `assignment[repeat][i]` is the fold of `subjects[i]`.
    pub assignment: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn fold_of(&self, repeat: usize, subject: &str) -> Option<usize> {
        let i = self.subjects.binary_search_by(|s| s.as_str().cmp(subject)).ok()?;
        self.assignment.get(repeat).map(|a| a[i])
    }

    /// Subjects assigned to `fold` in `repeat`.
    pub fn members(&self, repeat: usize, fold: usize) -> Vec<&str> {
        self.subjects
            .iter()
            .zip(&self.assignment[repeat])
            .filter(|(_, &f)| f == fold)
            .map(|(s, _)| s.as_str())
            .collect()
    }
}

/// Stratifies by sex x diagnosis: each stratum is shuffled, the strata are
/// laid end to end and dealt round-robin into `k` folds, whose labels are
/// then permuted. Every fold receives the floor or ceiling of its share of
/// each stratum.
pub fn make_folds<'a, I>(subjects: I, k: usize, repeats: usize, seed: u64) -> Result<FoldPlan>
where
    I: IntoIterator<Item = &'a SubjectMeta>,
{
    let mut metas: Vec<&SubjectMeta> = subjects.into_iter().collect();
    metas.sort_by(|a, b| a.subject_code.cmp(&b.subject_code));
    metas.dedup_by(|a, b| a.subject_code == b.subject_code);
    if k < 2 || k > metas.len() {
        return Err(EvalError::TooFewSubjectsForK { k, subjects: metas.len() });
    }
    let mut strata: BTreeMap<(Sex, Diagnosis), Vec<usize>> = BTreeMap::new();
    for (i, m) in metas.iter().enumerate() {
        strata.entry((m.sex, m.diagnosis)).or_default().push(i);
    }
    let assignment = (0..repeats)
        .map(|r| {
            let mut rng = rng_for(seed, &[r as u64]);
            let mut order = Vec::with_capacity(metas.len());
            for members in strata.values() {
                let mut m = members.clone();
                m.shuffle(&mut rng);
                order.extend(m);
            }
            let mut relabel: Vec<usize> = (0..k).collect();
            relabel.shuffle(&mut rng);
            let mut folds = vec![0usize; metas.len()];
            for (pos, &i) in order.iter().enumerate() {
                folds[i] = relabel[pos % k];
            }
            folds
        })
        .collect();
    Ok(FoldPlan {
        k,
        repeats,
        seed,
        subjects: metas.iter().map(|m| m.subject_code.clone()).collect(),
        assignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn reference_subjects() -> Vec<SubjectMeta> {
        let mut v = Vec::new();
        let groups = [(Sex::Female, Diagnosis::Normal, 12), (Sex::Female, Diagnosis::Pathological, 8), (Sex::Male, Diagnosis::Normal, 14), (Sex::Male, Diagnosis::Pathological, 11)];
        for (sex, diagnosis, n) in groups {
            for _ in 0..n {
                v.push(SubjectMeta { subject_code: format!("P{:02}", v.len()), sex, age: 60.0, diagnosis });
            }
        }
        v
    }

    #[test]
    fn reference_strata_balanced() {
        let subjects = reference_subjects();
        let plan = make_folds(&subjects, 9, 30, 11).unwrap();
        for r in 0..30 {
            for f in 0..9 {
                let members = plan.members(r, f);
                assert_eq!(members.len(), 5);
                for (sex, dx, total) in [(Sex::Female, Diagnosis::Normal, 12.0), (Sex::Female, Diagnosis::Pathological, 8.0), (Sex::Male, Diagnosis::Normal, 14.0), (Sex::Male, Diagnosis::Pathological, 11.0)] {
                    let c = members
                        .iter()
                        .filter(|s| subjects.iter().any(|m| &m.subject_code == *s && m.sex == sex && m.diagnosis == dx))
                        .count() as f64;
                    assert!((c - total / 9.0).abs() <= 1.0);
                }
            }
        }
    }

    #[test]
    fn leave_one_out_when_k_equals_n() {
        let subjects = reference_subjects();
        let plan = make_folds(&subjects, 45, 2, 1).unwrap();
        for r in 0..2 {
            for f in 0..45 {
                assert_eq!(plan.members(r, f).len(), 1);
            }
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let subjects = reference_subjects();
        assert_eq!(make_folds(&subjects, 9, 2, 5).unwrap(), make_folds(&subjects, 9, 2, 5).unwrap());
        assert_ne!(make_folds(&subjects, 9, 2, 5).unwrap().assignment, make_folds(&subjects, 9, 2, 6).unwrap().assignment);
        let plan = make_folds(&subjects, 9, 2, 5).unwrap();
        assert_ne!(plan.assignment[0], plan.assignment[1]);
    }

    #[test]
    fn too_few_subjects() {
        let subjects = reference_subjects();
        assert!(matches!(make_folds(&subjects[..5], 9, 1, 0), Err(EvalError::TooFewSubjectsForK { k: 9, subjects: 5 })));
    }
}
