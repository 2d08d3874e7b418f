//! Dictionary-free spelling correction.
//!
//! Targets are admitted into a per-locale vocabulary in descending frequency
//! order. A target at edit distance 1 from an already admitted word, and at
//! most `rho` times as frequent, is folded into that word instead of being
//! admitted. No external word list is involved: whatever most users type is
//! by construction the correct spelling.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use hashbrown::HashMap;

use crate::entry::EntryKind;
use crate::mapping::CandidateMap;
use crate::normalize::contains_emoji;

/// True iff the Damerau-Levenshtein distance between `a` and `b` is exactly
/// 1, counted over Unicode scalar values.
pub fn within_distance_1(a: &str, b: &str) -> bool {
    if a == b {
        return false;
    }
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let prefix = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
    let (la, lb) = (a.len(), b.len());
    if la == lb {
        let substitution = a[prefix + 1..] == b[prefix + 1..];
        let transposition = prefix + 1 < la
            && a[prefix] == b[prefix + 1]
            && a[prefix + 1] == b[prefix]
            && a[prefix + 2..] == b[prefix + 2..];
        substitution || transposition
    } else if lb == la + 1 {
        a[prefix..] == b[prefix + 1..]
    } else if la == lb + 1 {
        a[prefix + 1..] == b[prefix..]
    } else {
        false
    }
}

/// Per-locale vocabulary plus misspelling -> canonical word map.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorrectionDictionary {
    pub locale: String,
    /// Admitted words in admission order, with misspelling counts folded in.
    pub entries: Vec<(String, u64)>,
    pub correction_map: BTreeMap<String, String>,
}

impl CorrectionDictionary {
    pub fn canonical<'a>(&'a self, word: &'a str) -> &'a str {
        self.correction_map.get(word).map_or(word, String::as_str)
    }

    pub fn frequency(&self, word: &str) -> Option<u64> {
        self.entries.iter().find(|(w, _)| w == word).map(|(_, f)| *f)
    }

    pub fn total_frequency(&self) -> u64 {
        self.entries.iter().map(|(_, f)| f).sum()
    }
}

/// Sorts by descending frequency, ties by word. Duplicate words are summed.
pub fn admission_order<I, S>(target_frequencies: I) -> Vec<(String, u64)>
where
    I: IntoIterator<Item = (S, u64)>,
    S: Into<String>,
{
    let mut merged: BTreeMap<String, u64> = BTreeMap::new();
    for (word, freq) in target_frequencies {
        *merged.entry(word.into()).or_default() += freq;
    }
    let mut order: Vec<(String, u64)> = merged.into_iter().collect();
    order.sort_by(|(wa, fa), (wb, fb)| fb.cmp(fa).then_with(|| wa.cmp(wb)));
    order
}

/// Builds the correction dictionary for one locale.
///
/// A candidate is attributed to the first admitted word, in admission
/// order, that is at distance 1 and satisfies `freq(candidate) <= rho *
/// freq(word)`. Its count is then added to that word. Strings containing
/// emoji are admitted as-is and never take part in matching.
///
/// Candidates are found through a symmetric-delete index (every admitted
/// word and its single-deletion variants), which yields the same result as
/// scanning the whole dictionary.
pub fn build_dictionary<I, S>(target_frequencies: I, locale: &str, rho: f64) -> CorrectionDictionary
where
    I: IntoIterator<Item = (S, u64)>,
    S: Into<String>,
{
    let mut dict = CorrectionDictionary {
        locale: locale.into(),
        ..CorrectionDictionary::default()
    };
    let mut index: HashMap<String, Vec<u32>> = HashMap::new();
    let mut hits: Vec<u32> = Vec::new();

    for (word, freq) in admission_order(target_frequencies) {
        if contains_emoji(&word) {
            dict.entries.push((word, freq));
            continue;
        }
        let variants = deletion_variants(&word);
        hits.clear();
        for key in core::iter::once(&word).chain(&variants) {
            if let Some(ids) = index.get(key.as_str()) {
                hits.extend_from_slice(ids);
            }
        }
        hits.sort_unstable();
        hits.dedup();
        let owner = hits.iter().copied().find(|&id| {
            let (known, known_freq) = &dict.entries[id as usize];
            freq as f64 <= rho * *known_freq as f64 && within_distance_1(&word, known)
        });
        match owner {
            Some(id) => {
                let (known, known_freq) = &mut dict.entries[id as usize];
                *known_freq += freq;
                dict.correction_map.insert(word, known.clone());
            }
            None => {
                let id = dict.entries.len() as u32;
                for key in variants.into_iter().chain(core::iter::once(word.clone())) {
                    let ids = index.entry(key).or_default();
                    if ids.last() != Some(&id) {
                        ids.push(id);
                    }
                }
                dict.entries.push((word, freq));
            }
        }
    }
    dict
}

fn deletion_variants(word: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(word.len());
    for (i, c) in word.char_indices() {
        let mut v = String::with_capacity(word.len());
        v.push_str(&word[..i]);
        v.push_str(&word[i + c.len_utf8()..]);
        out.push(v);
    }
    out
}

/// Rewrites misspelled targets to their canonical word. Subquery keys are
/// left untouched so that common misspellings keep matching online.
pub fn apply_corrections(mut candidates: CandidateMap, dict: &CorrectionDictionary) -> CandidateMap {
    for (subquery, entry) in candidates.entries.iter_mut() {
        if let Some(canonical) = dict.correction_map.get(&entry.target) {
            entry.target = canonical.clone();
            entry.kind = if *subquery == entry.target {
                EntryKind::Identity
            } else {
                EntryKind::Correction
            };
        }
    }
    candidates
}
