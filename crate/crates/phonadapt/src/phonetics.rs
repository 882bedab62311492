//! SPE phonetic features: the phoneme -> binary-feature table, its file
//! format and validation, frame-level multi-label targets from phoneme
//! alignments, and the evaluation fold of the TIMIT inventory to 39
//! phones.
//!
//! The feature system has 14 binary attributes; `silence` is last and
//! behaves as a class marker: any entry that sets it sets nothing else.
//! The shipped table (`data/spe_timit.txt`) covers the 61-phone TIMIT
//! inventory plus `sil` and is data, not code.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const N_FEATURES: usize = 14;

/// Canonical feature order; files must declare it in their header row.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "vocalic",
    "consonantal",
    "high",
    "back",
    "low",
    "anterior",
    "coronal",
    "round",
    "tense",
    "voice",
    "continuant",
    "nasal",
    "strident",
    "silence",
];

/// The canonical silence symbol; every table must define it.
pub const SILENCE: &str = "sil";

const BUILTIN_TABLE: &str = include_str!("../data/spe_timit.txt");
const BUILTIN_FOLD: &str = include_str!("../data/timit_fold39.txt");

/// Strips a trailing comment. A `#` opens a comment only at the start
/// of a line or after whitespace, so symbols like `h#` survive.
fn strip_comment(line: &str) -> &str {
    let mut prev_ws = true;
    for (i, c) in line.char_indices() {
        if c == '#' && prev_ws {
            return &line[..i];
        }
        prev_ws = c.is_whitespace();
    }
    line
}

pub type FeatureVector = [u8; N_FEATURES];

fn silence_vector() -> FeatureVector {
    let mut v = [0u8; N_FEATURES];
    v[N_FEATURES - 1] = 1;
    v
}

/// Validated phoneme -> feature-vector table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeTable {
    entries: Vec<(String, FeatureVector)>,
    index: HashMap<String, usize>,
}

impl SpeTable {
    pub fn parse(text: &str) -> Result<SpeTable> {
        let mut lines = text.lines().map(strip_comment).filter(|l| !l.trim().is_empty());

        let header = lines.next().ok_or_else(|| Error::TableSchema("empty table: missing feature-name header".into()))?;
        let names: Vec<&str> = header.split_whitespace().collect();
        if names.len() != N_FEATURES {
            return Err(Error::TableSchema(format!(
                "header declares {} features, expected {N_FEATURES}",
                names.len()
            )));
        }
        if names != FEATURE_NAMES {
            return Err(Error::TableSchema(format!(
                "header feature names/order do not match the canonical list {FEATURE_NAMES:?}"
            )));
        }

        let mut entries: Vec<(String, FeatureVector)> = Vec::new();
        let mut index = HashMap::new();
        for line in lines {
            let mut tokens = line.split_whitespace();
            let symbol = tokens.next().expect("non-empty line").to_string();
            let values: Vec<&str> = tokens.collect();
            if values.len() != N_FEATURES {
                return Err(Error::TableSchema(format!(
                    "row for {symbol:?} has {} feature values, expected {N_FEATURES}",
                    values.len()
                )));
            }
            let mut bits = [0u8; N_FEATURES];
            for (b, v) in bits.iter_mut().zip(&values) {
                *b = match *v {
                    "0" => 0,
                    "1" => 1,
                    other => {
                        return Err(Error::TableFormat(format!(
                            "row for {symbol:?}: feature value {other:?} is not 0 or 1"
                        )))
                    }
                };
            }
            if index.contains_key(&symbol) {
                return Err(Error::TableFormat(format!("duplicate phoneme {symbol:?}")));
            }
            index.insert(symbol.clone(), entries.len());
            entries.push((symbol, bits));
        }

        let table = SpeTable { entries, index };
        table.validate()?;
        Ok(table)
    }

    fn validate(&self) -> Result<()> {
        let sil = silence_vector();
        match self.index.get(SILENCE) {
            None => return Err(Error::TableValidation(format!("table has no {SILENCE:?} entry"))),
            Some(&i) => {
                if self.entries[i].1 != sil {
                    return Err(Error::TableValidation(format!(
                        "{SILENCE:?} must carry only the silence bit"
                    )));
                }
            }
        }
        for (symbol, bits) in &self.entries {
            if bits.iter().all(|&b| b == 0) {
                return Err(Error::TableValidation(format!("{symbol:?} has no feature bits set")));
            }
            if bits[N_FEATURES - 1] == 1 && *bits != sil {
                return Err(Error::TableValidation(format!(
                    "{symbol:?} sets the silence bit together with other features"
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SpeTable> {
        SpeTable::parse(&fs::read_to_string(path)?)
    }

    /// The shipped TIMIT table.
    pub fn builtin_timit() -> SpeTable {
        SpeTable::parse(BUILTIN_TABLE).expect("shipped table is valid")
    }

    /// Text form in the table file format; parsing it back yields
    /// identical entries.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push_str(&FEATURE_NAMES.join(" "));
        out.push('\n');
        for (symbol, bits) in &self.entries {
            out.push_str(symbol);
            for b in bits {
                out.push(' ');
                out.push(if *b == 1 { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn phonemes(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(s, _)| s.as_str())
    }

    pub fn features(&self, phoneme: &str) -> Result<&FeatureVector> {
        self.index
            .get(phoneme)
            .map(|&i| &self.entries[i].1)
            .ok_or_else(|| Error::UnknownPhoneme(phoneme.to_string()))
    }

    /// Stable integer id of a phoneme: its row index in the table.
    pub fn phoneme_id(&self, phoneme: &str) -> Result<usize> {
        self.index.get(phoneme).copied().ok_or_else(|| Error::UnknownPhoneme(phoneme.to_string()))
    }

    pub fn symbol(&self, id: usize) -> Result<&str> {
        self.entries
            .get(id)
            .map(|(s, _)| s.as_str())
            .ok_or_else(|| Error::Index(format!("phoneme id {id} out of range for {} entries", self.len())))
    }

    pub fn silence_id(&self) -> usize {
        self.phoneme_id(SILENCE).expect("validated tables contain sil")
    }

    /// True when the symbol carries the silence-only vector (sil, h#,
    /// closures, ...).
    pub fn is_silence_symbol(&self, phoneme: &str) -> Result<bool> {
        Ok(self.features(phoneme)?[N_FEATURES - 1] == 1)
    }
}

/// Exact table lookup of a phoneme's feature vector.
pub fn phoneme_to_features(phoneme: &str, table: &SpeTable) -> Result<FeatureVector> {
    table.features(phoneme).copied()
}

/// One aligned phoneme interval, in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct PhoneSegment {
    pub phoneme: String,
    pub start: f64,
    pub end: f64,
}

fn validate_segments(segments: &[PhoneSegment]) -> Result<()> {
    for (i, seg) in segments.iter().enumerate() {
        if !(seg.start < seg.end) {
            return Err(Error::Alignment(format!(
                "segment {i} ({:?}) has start {} >= end {}",
                seg.phoneme, seg.start, seg.end
            )));
        }
        if i > 0 && segments[i - 1].end > seg.start {
            return Err(Error::Alignment(format!(
                "segments {} and {i} overlap or are unsorted ({} > {})",
                i - 1,
                segments[i - 1].end,
                seg.start
            )));
        }
    }
    Ok(())
}

/// Parses a phone alignment file: one `start end phone` triple per
/// line, times in seconds, `#` comments and blank lines ignored.
/// Segments must be sorted and non-overlapping.
pub fn parse_alignment(text: &str) -> Result<Vec<PhoneSegment>> {
    let mut segments = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Alignment(format!(
                "line {}: expected `start end phone`, got {raw:?}",
                ln + 1
            )));
        }
        let parse_time = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Alignment(format!("line {}: bad time {s:?}", ln + 1)))
        };
        segments.push(PhoneSegment {
            start: parse_time(fields[0])?,
            end: parse_time(fields[1])?,
            phoneme: fields[2].to_string(),
        });
    }
    validate_segments(&segments)?;
    Ok(segments)
}

/// Reads and parses an alignment file.
pub fn load_alignment(path: &Path) -> Result<Vec<PhoneSegment>> {
    parse_alignment(&fs::read_to_string(path)?)
}

/// Converts a phoneme alignment into per-frame multi-label targets and
/// phoneme ids.
///
/// A frame takes the features of the segment containing its *center*,
/// with half-open membership `[start, end)` (a center exactly on a
/// boundary belongs to the following segment). Centers in gaps — or
/// before the first / after the last segment — get the silence vector
/// and the silence id.
pub fn frame_targets(
    segments: &[PhoneSegment],
    frame_times: &[f64],
    table: &SpeTable,
) -> Result<(Matrix, Vec<usize>)> {
    validate_segments(segments)?;
    // Resolve features and ids once per segment (and catch unknown
    // phonemes before emitting anything).
    let resolved: Vec<(FeatureVector, usize)> = segments
        .iter()
        .map(|s| Ok((*table.features(&s.phoneme)?, table.phoneme_id(&s.phoneme)?)))
        .collect::<Result<_>>()?;
    let silence = (silence_vector(), table.silence_id());

    let mut targets = Matrix::zeros(frame_times.len(), N_FEATURES);
    let mut ids = Vec::with_capacity(frame_times.len());
    for (t_idx, &t) in frame_times.iter().enumerate() {
        // Last segment with start <= t, if any; then check t < end.
        let pos = segments.partition_point(|s| s.start <= t);
        let hit = pos
            .checked_sub(1)
            .filter(|&i| t < segments[i].end)
            .map(|i| &resolved[i])
            .unwrap_or(&silence);
        for (c, &b) in hit.0.iter().enumerate() {
            targets.set(t_idx, c, b as f64);
        }
        ids.push(hit.1);
    }
    Ok((targets, ids))
}

/// Inventory fold for evaluation (61 TIMIT phones + sil -> 39). A rule
/// can delete a phone (glottal stop) so it vanishes from scored
/// sequences. Phones without a rule map to themselves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldMap {
    rules: HashMap<String, Option<String>>,
}

impl FoldMap {
    pub fn parse(text: &str) -> Result<FoldMap> {
        let mut rules = HashMap::new();
        for line in text.lines().map(strip_comment) {
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.is_empty() {
                continue;
            }
            if tokens.len() != 2 {
                return Err(Error::TableFormat(format!(
                    "fold rule needs exactly 'source target', got {line:?}"
                )));
            }
            let target = if tokens[1] == "-" { None } else { Some(tokens[1].to_string()) };
            if rules.insert(tokens[0].to_string(), target).is_some() {
                return Err(Error::TableFormat(format!("duplicate fold rule for {:?}", tokens[0])));
            }
        }
        Ok(FoldMap { rules })
    }

    pub fn load(path: &Path) -> Result<FoldMap> {
        FoldMap::parse(&fs::read_to_string(path)?)
    }

    /// The shipped TIMIT 61 -> 39 fold.
    pub fn builtin_timit39() -> FoldMap {
        FoldMap::parse(BUILTIN_FOLD).expect("shipped fold map is valid")
    }

    /// Folded symbol, or `None` when the phone is deleted.
    pub fn fold<'a>(&'a self, symbol: &'a str) -> Option<&'a str> {
        match self.rules.get(symbol) {
            Some(Some(target)) => Some(target.as_str()),
            Some(None) => None,
            None => Some(symbol),
        }
    }

    /// Maps every table id into a folded id space: returns the per-id
    /// mapping (`None` = deleted) and the folded inventory in order of
    /// first appearance over the table.
    pub fn fold_ids(&self, table: &SpeTable) -> (Vec<Option<usize>>, Vec<String>) {
        let mut inventory: Vec<String> = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        let mut mapping = Vec::with_capacity(table.len());
        for symbol in table.phonemes() {
            match self.fold(symbol) {
                None => mapping.push(None),
                Some(folded) => {
                    let id = *seen.entry(folded.to_string()).or_insert_with(|| {
                        inventory.push(folded.to_string());
                        inventory.len() - 1
                    });
                    mapping.push(Some(id));
                }
            }
        }
        (mapping, inventory)
    }
}
