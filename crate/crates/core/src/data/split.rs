use std::collections::BTreeSet;

use super::dataset::PosePair;
use crate::error::{Error, Result};

/// Subject-disjoint partition. Samples whose subject is in neither set are
/// kept in `excluded`, so `train + test + excluded` always accounts for
/// every input sample.
#[derive(Debug, Clone, Default)]
pub struct SubjectSplit {
    pub train: Vec<PosePair>,
    pub test: Vec<PosePair>,
    pub excluded: Vec<PosePair>,
}

pub fn split_by_subject(
    data: &[PosePair],
    train_subjects: &[String],
    test_subjects: &[String],
) -> Result<SubjectSplit> {
    let train: BTreeSet<&str> = train_subjects.iter().map(String::as_str).collect();
    let test: BTreeSet<&str> = test_subjects.iter().map(String::as_str).collect();
    let overlap: Vec<&str> = train.intersection(&test).copied().collect();
    if !overlap.is_empty() {
        return Err(Error::Split(format!(
            "subjects in both train and test sets: {}",
            overlap.join(",")
        )));
    }
    let mut out = SubjectSplit::default();
    for p in data {
        if train.contains(p.subject.as_str()) {
            out.train.push(p.clone());
        } else if test.contains(p.subject.as_str()) {
            out.test.push(p.clone());
        } else {
            out.excluded.push(p.clone());
        }
    }
    if out.test.is_empty() {
        log::warn!("test split is empty: none of {:?} present in data", test_subjects);
    }
    if out.train.is_empty() {
        log::warn!("train split is empty: none of {:?} present in data", train_subjects);
    }
    if !out.excluded.is_empty() {
        log::warn!("{} samples belong to neither split", out.excluded.len());
    }
    Ok(out)
}

pub fn parse_subjects(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(String::from)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{synth_generate, SynthOptions};
    use crate::data::CameraModel;

    fn subjects(s: &str) -> Vec<String> {
        parse_subjects(s)
    }

    #[test]
    fn five_two_partition() {
        let data = synth_generate(70, 1, &CameraModel::default(), &SynthOptions::default()).unwrap();
        let s = split_by_subject(&data, &subjects("S1,S2,S3,S4,S5"), &subjects("S6,S7")).unwrap();
        assert_eq!(s.train.len() + s.test.len(), data.len());
        assert!(s.excluded.is_empty());
        assert_eq!(s.test.len(), 20);
        assert!(s.train.iter().all(|p| !["S6", "S7"].contains(&p.subject.as_str())));
    }

    #[test]
    fn absent_test_subjects_give_empty_test() {
        let data = synth_generate(10, 1, &CameraModel::default(), &SynthOptions::default()).unwrap();
        let all = subjects("S1,S2,S3,S4,S5,S6,S7");
        let s = split_by_subject(&data, &all, &subjects("S9,S11")).unwrap();
        assert!(s.test.is_empty());
        assert_eq!(s.train.len(), 10);
    }

    #[test]
    fn overlap_rejected() {
        let err = split_by_subject(&[], &subjects("S1,S2"), &subjects("S1")).unwrap_err();
        assert!(err.to_string().contains("S1"));
    }
}
