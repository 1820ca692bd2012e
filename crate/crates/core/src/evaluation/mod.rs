//! Blind scoring of candidate descriptions: eval-set construction with
//! per-rater shuffling, a durable score store, normalised aggregates and an
//! HTTP service for raters.

pub mod server;
mod store;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::store::{Ack, ScoreStore, StoreEntry, SNAPSHOT_EVERY};
use crate::rng::{derive_seed, fnv1a, rng_from_seed};

/// Points awarded for a description that fully matches the window.
pub const MAX_SCORE: u8 = 2;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("model {model_id} has no description for window {window_id}")]
    MissingDescription { model_id: String, window_id: String },
    #[error("score {0} is outside 0..=2")]
    InvalidScore(u8),
    #[error("unknown item {0}")]
    UnknownItem(String),
    #[error("unknown slot {slot} for item {item_id}")]
    UnknownSlot { item_id: String, slot: String },
    #[error("rater id must not be empty")]
    EmptyRater,
    #[error("{item_id}/{rater_id}/{model_id} already scored {existing}")]
    AlreadyScored {
        item_id: String,
        rater_id: String,
        model_id: String,
        existing: u8,
    },
    #[error("{} (item, rater, model) triples are unscored", .0.len())]
    IncompleteScores(Vec<(String, String, String)>),
    #[error("no raters to aggregate over")]
    NoRaters,
    #[error("too many candidates ({0}); slots are single letters")]
    TooManyCandidates(usize),
    #[error("duplicate item id {0}")]
    DuplicateItem(String),
    #[error("store: {0}")]
    Io(#[from] std::io::Error),
    #[error("store record: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    Test,
    Holdout,
}

/// A window offered for evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalWindow {
    pub window_id: String,
    pub split: EvalSplit,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub model_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub item_id: String,
    pub window_id: String,
    pub split: EvalSplit,
    pub values: Vec<f64>,
    /// Canonical order (sorted by model id); raters see a permutation.
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSet {
    pub seed: u64,
    pub items: Vec<EvalItem>,
}

/// Slot label for position `i` (`A`, `B`, …).
pub fn slot_label(i: usize) -> String {
    char::from(b'A' + i as u8).to_string()
}

pub fn slot_index(label: &str) -> Option<usize> {
    match label.as_bytes() {
        [c] if c.is_ascii_uppercase() => Some((c - b'A') as usize),
        _ => None,
    }
}

impl EvalSet {
    pub fn item(&self, item_id: &str) -> Option<&EvalItem> {
        self.items.iter().find(|i| i.item_id == item_id)
    }

    pub fn model_ids(&self) -> BTreeSet<String> {
        self.items
            .iter()
            .flat_map(|i| i.candidates.iter().map(|c| c.model_id.clone()))
            .collect()
    }

    /// Order in which `rater` sees the candidates of `item`: entry `k` is the
    /// canonical index of the candidate shown in slot `k`.
    pub fn permutation(&self, item: &EvalItem, rater: &str) -> Vec<usize> {
        let key = derive_seed(derive_seed(self.seed, fnv1a(item.item_id.as_bytes())), fnv1a(rater.as_bytes()));
        let mut order: Vec<usize> = (0..item.candidates.len()).collect();
        order.shuffle(&mut rng_from_seed(key));
        order
    }

    /// Model behind `slot` for `rater`.
    pub fn resolve_slot(&self, item_id: &str, rater: &str, slot: &str) -> Result<String, EvalError> {
        let item = self.item(item_id).ok_or_else(|| EvalError::UnknownItem(item_id.to_string()))?;
        let perm = self.permutation(item, rater);
        let unknown = || EvalError::UnknownSlot {
            item_id: item_id.to_string(),
            slot: slot.to_string(),
        };
        let k = slot_index(slot).ok_or_else(unknown)?;
        let canonical = *perm.get(k).ok_or_else(unknown)?;
        Ok(item.candidates[canonical].model_id.clone())
    }
}

/// One item per window, candidates drawn from every model's outputs.
pub fn build_eval_set(
    windows: &[EvalWindow],
    outputs: &BTreeMap<String, BTreeMap<String, String>>,
    seed: u64,
) -> Result<EvalSet, EvalError> {
    if outputs.len() > 26 {
        return Err(EvalError::TooManyCandidates(outputs.len()));
    }
    let mut seen = BTreeSet::new();
    let mut items = Vec::with_capacity(windows.len());
    for (k, w) in windows.iter().enumerate() {
        if !seen.insert(w.window_id.clone()) {
            return Err(EvalError::DuplicateItem(w.window_id.clone()));
        }
        let candidates = outputs
            .iter()
            .map(|(model_id, texts)| {
                texts
                    .get(&w.window_id)
                    .map(|text| Candidate {
                        model_id: model_id.clone(),
                        text: text.clone(),
                    })
                    .ok_or_else(|| EvalError::MissingDescription {
                        model_id: model_id.clone(),
                        window_id: w.window_id.clone(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        items.push(EvalItem {
            item_id: format!("item-{:04}", k + 1),
            window_id: w.window_id.clone(),
            split: w.split,
            values: w.values.clone(),
            candidates,
        });
    }
    Ok(EvalSet { seed, items })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub item_id: String,
    pub rater_id: String,
    pub slot: String,
    pub model_id: String,
    pub score: u8,
    pub timestamp: String,
}

/// Raters that appear in `records`.
pub fn raters_in(records: &[ScoreRecord]) -> Vec<String> {
    records
        .iter()
        .map(|r| r.rater_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// `Σ scores / (2·R·N)` over the items of `split`, requiring every
/// `(item, rater, model)` triple to be scored.
pub fn normalized_score(
    records: &[ScoreRecord],
    set: &EvalSet,
    raters: &[String],
    model_id: &str,
    split: EvalSplit,
) -> Result<f64, EvalError> {
    let (sum, max) = score_totals(records, set, raters, model_id, split)?;
    Ok(sum as f64 / max as f64)
}

/// Integer score sum and maximum attainable sum for one model and split.
pub fn score_totals(
    records: &[ScoreRecord],
    set: &EvalSet,
    raters: &[String],
    model_id: &str,
    split: EvalSplit,
) -> Result<(u64, u64), EvalError> {
    if raters.is_empty() {
        return Err(EvalError::NoRaters);
    }
    let index: BTreeMap<(&str, &str, &str), u8> = records
        .iter()
        .map(|r| ((r.item_id.as_str(), r.rater_id.as_str(), r.model_id.as_str()), r.score))
        .collect();
    let items: Vec<&EvalItem> = set.items.iter().filter(|i| i.split == split).collect();
    let mut sum = 0u64;
    let mut missing = Vec::new();
    for item in &items {
        for rater in raters {
            match index.get(&(item.item_id.as_str(), rater.as_str(), model_id)) {
                Some(s) => sum += *s as u64,
                None => missing.push((item.item_id.clone(), rater.clone(), model_id.to_string())),
            }
        }
    }
    if !missing.is_empty() {
        return Err(EvalError::IncompleteScores(missing));
    }
    Ok((sum, MAX_SCORE as u64 * raters.len() as u64 * items.len() as u64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub model_id: String,
    pub split: EvalSplit,
    pub items: usize,
    pub raters: usize,
    pub total: u64,
    pub max: u64,
    pub normalized: f64,
}

/// Normalised scores for every model and every split that has items.
pub fn summarize_scores(records: &[ScoreRecord], set: &EvalSet, raters: &[String]) -> Result<Vec<ModelScore>, EvalError> {
    let splits: BTreeSet<EvalSplit> = set.items.iter().map(|i| i.split).collect();
    let mut out = Vec::new();
    for model_id in set.model_ids() {
        for &split in &splits {
            let (total, max) = score_totals(records, set, raters, &model_id, split)?;
            out.push(ModelScore {
                model_id: model_id.clone(),
                split,
                items: set.items.iter().filter(|i| i.split == split).count(),
                raters: raters.len(),
                total,
                max,
                normalized: total as f64 / max as f64,
            });
        }
    }
    Ok(out)
}
