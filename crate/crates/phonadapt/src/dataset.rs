//! Frame-level datasets: features plus whichever targets the consuming
//! stage needs (single-label phoneme ids, multi-label binary vectors),
//! a per-frame domain tag, and utterance boundaries.
//!
//! Unsupervised adaptation is enforced structurally: training code that
//! must not see target labels receives an [`Dataset::unlabeled`] view,
//! which simply lacks the label fields.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const SOURCE_DOMAIN: u8 = 0;
pub const TARGET_DOMAIN: u8 = 1;

/// One utterance's frame range inside a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UttSpan {
    pub id: String,
    pub range: Range<usize>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    features: Matrix,
    phoneme_ids: Option<Vec<usize>>,
    multilabel_targets: Option<Matrix>,
    domains: Vec<u8>,
    utterances: Vec<UttSpan>,
}

impl Dataset {
    /// A dataset whose every frame carries the same domain tag, with a
    /// single implicit utterance spanning all frames.
    pub fn from_features(features: Matrix, domain: u8) -> Result<Dataset> {
        let n = features.rows();
        Dataset::new(
            features,
            None,
            None,
            vec![domain; n],
            vec![UttSpan {
                id: "all".into(),
                range: 0..n,
            }],
        )
    }

    pub fn new(
        features: Matrix,
        phoneme_ids: Option<Vec<usize>>,
        multilabel_targets: Option<Matrix>,
        domains: Vec<u8>,
        utterances: Vec<UttSpan>,
    ) -> Result<Dataset> {
        let n = features.rows();
        if let Some(ids) = &phoneme_ids {
            if ids.len() != n {
                return Err(Error::Dim(format!("{} phoneme ids for {n} frames", ids.len())));
            }
        }
        if let Some(t) = &multilabel_targets {
            if t.rows() != n {
                return Err(Error::Dim(format!("{} target rows for {n} frames", t.rows())));
            }
        }
        if domains.len() != n {
            return Err(Error::Dim(format!("{} domain tags for {n} frames", domains.len())));
        }
        if let Some(&bad) = domains.iter().find(|&&d| d > 1) {
            return Err(Error::DomainLabel(bad));
        }
        let mut cursor = 0;
        for span in &utterances {
            if span.range.start != cursor || span.range.end > n || span.range.start > span.range.end {
                return Err(Error::Data(format!(
                    "utterance {:?} spans {:?}, expected contiguous coverage of 0..{n}",
                    span.id, span.range
                )));
            }
            cursor = span.range.end;
        }
        if cursor != n {
            return Err(Error::Data(format!("utterance spans cover 0..{cursor}, dataset has {n} frames")));
        }
        Ok(Dataset {
            features,
            phoneme_ids,
            multilabel_targets,
            domains,
            utterances,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn phoneme_ids(&self) -> Option<&[usize]> {
        self.phoneme_ids.as_deref()
    }

    pub fn multilabel_targets(&self) -> Option<&Matrix> {
        self.multilabel_targets.as_ref()
    }

    pub fn domains(&self) -> &[u8] {
        &self.domains
    }

    pub fn utterances(&self) -> &[UttSpan] {
        &self.utterances
    }

    pub fn require_phoneme_ids(&self) -> Result<&[usize]> {
        self.phoneme_ids.as_deref().ok_or_else(|| Error::Data("dataset has no phoneme ids".into()))
    }

    pub fn require_multilabel_targets(&self) -> Result<&Matrix> {
        self.multilabel_targets.as_ref().ok_or_else(|| Error::Data("dataset has no multi-label targets".into()))
    }

    /// Label-free view of the same frames. Training code given this view
    /// cannot read labels because they are gone, not merely ignored.
    pub fn unlabeled(&self) -> Dataset {
        Dataset {
            features: self.features.clone(),
            phoneme_ids: None,
            multilabel_targets: None,
            domains: self.domains.clone(),
            utterances: self.utterances.clone(),
        }
    }

    /// Copies the selected frames into a new dataset (one synthetic
    /// utterance). Labels follow when present.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n_frames()) {
            return Err(Error::Index(format!("frame {bad} out of range for {} frames", self.n_frames())));
        }
        let features = self.features.gather_rows(indices);
        let phoneme_ids = self.phoneme_ids.as_ref().map(|ids| indices.iter().map(|&i| ids[i]).collect());
        let multilabel_targets = self.multilabel_targets.as_ref().map(|t| t.gather_rows(indices));
        let domains = indices.iter().map(|&i| self.domains[i]).collect();
        Dataset::new(
            features,
            phoneme_ids,
            multilabel_targets,
            domains,
            vec![UttSpan {
                id: "subset".into(),
                range: 0..indices.len(),
            }],
        )
    }

    /// Replaces the feature matrix, keeping labels and structure. The row
    /// count must not change (labels stay aligned).
    pub fn with_features(&self, features: Matrix) -> Result<Dataset> {
        if features.rows() != self.n_frames() {
            return Err(Error::Dim(format!(
                "replacement features have {} rows, dataset has {}",
                features.rows(),
                self.n_frames()
            )));
        }
        Ok(Dataset {
            features,
            phoneme_ids: self.phoneme_ids.clone(),
            multilabel_targets: self.multilabel_targets.clone(),
            domains: self.domains.clone(),
            utterances: self.utterances.clone(),
        })
    }

    /// Replaces the single-label targets (e.g. with self-labels during
    /// reverse cross-validation).
    pub fn with_phoneme_ids(&self, ids: Vec<usize>) -> Result<Dataset> {
        if ids.len() != self.n_frames() {
            return Err(Error::Dim(format!("{} ids for {} frames", ids.len(), self.n_frames())));
        }
        Ok(Dataset {
            features: self.features.clone(),
            phoneme_ids: Some(ids),
            multilabel_targets: self.multilabel_targets.clone(),
            domains: self.domains.clone(),
            utterances: self.utterances.clone(),
        })
    }
}
