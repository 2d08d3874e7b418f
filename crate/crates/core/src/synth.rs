//! Deterministic synthetic keystroke logs with a ground-truth manifest.
//!
//! [`generate`] simulates users typing sampled phrases one keystroke at a
//! time, with adjacent-key substitutions, accidental spaces and
//! deletion-and-retype detours, plus planted misspellings at a chosen
//! frequency ratio. The [`Manifest`] it returns is computed by a separate,
//! deliberately naive recount of the generated events (no code shared with
//! the real pipeline stages), so comparing the two checks the pipeline.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entry::{escape_field, unescape, EntryKind, QplEntry};
use crate::mapping::{ConfigError, Denominator, PipelineConfig};
use crate::normalize::{contains_emoji, normalize_locale, normalize_query};
use crate::session::{QueryStateEvent, Session};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabularyEntry {
    pub phrase: String,
    pub weight: f64,
}

/// Per-keystroke error probabilities. At most one error is made per
/// keystroke, and every error is corrected before the next keystroke.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TypoModel {
    /// Hit a neighbouring key, then delete it.
    pub substitution: f64,
    /// Hit space instead of the intended key, type one more key, then
    /// delete both.
    pub space: f64,
    /// After a keystroke, delete up to three characters and retype them.
    pub retype: f64,
}

/// Extra episodes that end at a misspelled target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedMisspelling {
    /// Vocabulary phrase being misspelled.
    pub target: String,
    /// The misspelling; picked at random (one substitution away) if absent.
    #[serde(default)]
    pub misspelling: Option<String>,
    /// Planted episodes = floor(ratio * completed episodes of `target`).
    pub ratio: f64,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub locale: String,
    pub vocabulary: Vec<VocabularyEntry>,
    #[serde(default)]
    pub typo: TypoModel,
    /// Probability that an intent is given up part way through.
    #[serde(default)]
    pub abandonment: f64,
    pub user_count: u64,
    pub sessions_per_user: u64,
    #[serde(default = "one")]
    pub intents_per_session: u64,
    #[serde(default)]
    pub misspellings: Vec<PlantedMisspelling>,
    /// Thresholds the manifest's expected entries are computed with.
    #[serde(default)]
    pub pipeline: PipelineConfig,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("{name} must be a probability in [0, 1], got {value}")]
    Probability { name: &'static str, value: f64 },
    #[error("weight for {phrase:?} must be positive and finite")]
    Weight { phrase: String },
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("phrase {0:?} must be non-empty, normalized and emoji-free")]
    Phrase(String),
    #[error("phrase {0:?} appears twice")]
    DuplicatePhrase(String),
    #[error("locale {0:?} is not usable")]
    Locale(String),
    #[error("user_count, sessions_per_user and intents_per_session must be positive")]
    Volume,
    #[error("misspelling target {0:?} is not in the vocabulary")]
    UnknownTarget(String),
    #[error("{misspelling:?} is not a usable misspelling of {target:?}")]
    Misspelling { target: String, misspelling: String },
    #[error("could not find a misspelling for {0:?}")]
    NoMisspelling(String),
    #[error(transparent)]
    Pipeline(#[from] ConfigError),
}

impl GeneratorSpec {
    /// A spec with every probability at zero and the default pipeline
    /// thresholds.
    pub fn noiseless(seed: u64, locale: &str, vocabulary: &[(&str, f64)], user_count: u64, sessions_per_user: u64) -> Self {
        Self {
            seed,
            locale: locale.into(),
            vocabulary: vocabulary
                .iter()
                .map(|(phrase, weight)| VocabularyEntry {
                    phrase: (*phrase).into(),
                    weight: *weight,
                })
                .collect(),
            typo: TypoModel::default(),
            abandonment: 0.0,
            user_count,
            sessions_per_user,
            intents_per_session: 1,
            misspellings: Vec::new(),
            pipeline: PipelineConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        for (name, value) in [
            ("typo.substitution", self.typo.substitution),
            ("typo.space", self.typo.space),
            ("typo.retype", self.typo.retype),
            ("abandonment", self.abandonment),
        ] {
            check_probability(name, value)?;
        }
        if self.vocabulary.is_empty() {
            return Err(SpecError::EmptyVocabulary);
        }
        if normalize_locale(&self.locale).as_deref() != Some(self.locale.as_str()) {
            return Err(SpecError::Locale(self.locale.clone()));
        }
        if self.user_count == 0 || self.sessions_per_user == 0 || self.intents_per_session == 0 {
            return Err(SpecError::Volume);
        }
        let mut seen = BTreeSet::new();
        for v in &self.vocabulary {
            if !is_plain_phrase(&v.phrase) {
                return Err(SpecError::Phrase(v.phrase.clone()));
            }
            if !(v.weight.is_finite() && v.weight > 0.0) {
                return Err(SpecError::Weight { phrase: v.phrase.clone() });
            }
            if !seen.insert(v.phrase.as_str()) {
                return Err(SpecError::DuplicatePhrase(v.phrase.clone()));
            }
        }
        for m in &self.misspellings {
            check_probability("misspellings.ratio", m.ratio)?;
            if !seen.contains(m.target.as_str()) {
                return Err(SpecError::UnknownTarget(m.target.clone()));
            }
            if let Some(word) = &m.misspelling {
                if !is_plain_phrase(word) || seen.contains(word.as_str()) || edit_distance(word, &m.target) != 1 {
                    return Err(SpecError::Misspelling {
                        target: m.target.clone(),
                        misspelling: word.clone(),
                    });
                }
            }
        }
        self.pipeline.validate()?;
        Ok(())
    }
}

fn check_probability(name: &'static str, value: f64) -> Result<(), SpecError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(SpecError::Probability { name, value })
    }
}

fn is_plain_phrase(s: &str) -> bool {
    !s.is_empty()
        && normalize_query(s) == s
        && !contains_emoji(s)
        && !s.contains("  ")
        && !s.chars().any(|c| c.is_control())
}

/// Generator output.
#[derive(Debug, Clone)]
pub struct Generated {
    /// Sessions in emission order, events already normalized.
    pub sessions: Vec<Session>,
    pub manifest: Manifest,
}

impl Generated {
    /// The sessions in the ingestion log format, one JSON event per line.
    pub fn log(&self) -> String {
        let mut out = String::new();
        for event in self.sessions.iter().flat_map(|s| &s.events) {
            out.push_str(&event.to_log_line());
            out.push('\n');
        }
        out
    }
}

/// Generates sessions for `spec`. The same spec always yields the same
/// output.
pub fn generate(spec: &GeneratorSpec) -> Result<Generated, SpecError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let phrases: Vec<Vec<char>> = spec.vocabulary.iter().map(|v| v.phrase.chars().collect()).collect();
    let sampler = WeightedIndex::new(spec.vocabulary.iter().map(|v| v.weight))
        .map_err(|_| SpecError::Weight { phrase: spec.vocabulary[0].phrase.clone() })?;

    let mut sessions = Vec::new();
    let mut completed = vec![0u64; phrases.len()];
    let mut planted_paths: BTreeMap<(String, String), u64> = BTreeMap::new();
    for user in 0..spec.user_count {
        for k in 0..spec.sessions_per_user {
            let mut states: Vec<String> = Vec::new();
            for intent in 0..spec.intents_per_session {
                if intent > 0 {
                    states.push(String::new());
                }
                let pick = sampler.sample(&mut rng);
                let chars = &phrases[pick];
                let cut = if chars.len() > 1 && rng.gen_bool(spec.abandonment) {
                    rng.gen_range(1..chars.len())
                } else {
                    chars.len()
                };
                if cut == chars.len() {
                    completed[pick] += 1;
                    let mut prefixes = BTreeSet::new();
                    for end in 1..=cut {
                        prefixes.insert(normalize_query(&chars[..end].iter().collect::<String>()));
                    }
                    for prefix in prefixes {
                        *planted_paths.entry((prefix, spec.vocabulary[pick].phrase.clone())).or_default() += 1;
                    }
                }
                type_intent(&mut rng, &chars[..cut], &spec.typo, &mut states);
            }
            sessions.push(make_session(format!("s{user}-{k}"), &format!("u{user}"), &spec.locale, &states));
        }
    }

    let mut planted_misspellings = Vec::new();
    for (i, plant) in spec.misspellings.iter().enumerate() {
        let truth = spec.vocabulary.iter().position(|v| v.phrase == plant.target).expect("validated");
        let word = match &plant.misspelling {
            Some(word) => word.clone(),
            None => pick_misspelling(&mut rng, &plant.target, &spec.vocabulary)?,
        };
        let episodes = floor_ratio(completed[truth], plant.ratio);
        let chars: Vec<char> = word.chars().collect();
        for j in 0..episodes {
            let mut states = Vec::new();
            type_intent(&mut rng, &chars, &TypoModel::default(), &mut states);
            let user = j % spec.user_count;
            sessions.push(make_session(format!("m{i}-{j}"), &format!("u{user}"), &spec.locale, &states));
        }
        planted_misspellings.push((word, plant.target.clone()));
    }

    let manifest = oracle::recount(spec, &sessions, planted_paths, &planted_misspellings);
    Ok(Generated { sessions, manifest })
}

fn floor_ratio(count: u64, ratio: f64) -> u64 {
    // The small bias keeps products like 200 * 0.005 from rounding down.
    (count as f64 * ratio + 1e-9) as u64
}

fn make_session(session_id: String, user: &str, locale: &str, states: &[String]) -> Session {
    let events = states
        .iter()
        .enumerate()
        .map(|(seq, text)| {
            QueryStateEvent::normalized(&session_id, user, locale, seq as u64, text).expect("locale validated")
        })
        .collect();
    Session { session_id, events }
}

/// Appends the raw search-box states produced while typing `chars`.
/// Errors are only made after the first keystroke, so the box never empties
/// part way through an intent.
fn type_intent(rng: &mut ChaCha8Rng, chars: &[char], typo: &TypoModel, states: &mut Vec<String>) {
    let mut state = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let eligible = i > 0 && c != ' ' && !state.ends_with(' ');
        if eligible && rng.gen_bool(typo.substitution) {
            let wrong = neighbour(rng, c, chars);
            states.push(format!("{state}{wrong}"));
            states.push(state.clone());
        } else if eligible && rng.gen_bool(typo.space) {
            states.push(format!("{state} "));
            if let Some(&next) = chars.get(i + 1).filter(|n| **n != ' ') {
                states.push(format!("{state} {next}"));
                states.push(format!("{state} "));
            }
            states.push(state.clone());
        }
        state.push(c);
        states.push(state.clone());
        let len = i + 1;
        if len >= 2 && rng.gen_bool(typo.retype) {
            let back = rng.gen_range(1..=(len - 1).min(3));
            let mut popped = Vec::new();
            for _ in 0..back {
                popped.push(state.pop().expect("len >= 2"));
                states.push(state.clone());
            }
            while let Some(p) = popped.pop() {
                state.push(p);
                states.push(state.clone());
            }
        }
    }
}

const QWERTY: [&str; 3] = ["qwertyuiop", "asdfghjkl", "zxcvbnm"];

/// A key next to `c` on a QWERTY layout; for other characters, another
/// character of the same phrase (or `x`).
fn neighbour(rng: &mut ChaCha8Rng, c: char, phrase: &[char]) -> char {
    for (r, row) in QWERTY.iter().enumerate() {
        if let Some(col) = row.find(c) {
            let mut options: Vec<char> = Vec::new();
            for (dr, dc) in [(0i32, -1i32), (0, 1), (-1, 0), (1, 0), (-1, 1), (1, -1)] {
                let (nr, nc) = (r as i32 + dr, col as i32 + dc);
                if let Some(k) = QWERTY.get(nr as usize).and_then(|row| row.chars().nth(nc as usize)) {
                    if nr >= 0 && nc >= 0 {
                        options.push(k);
                    }
                }
            }
            return options[rng.gen_range(0..options.len())];
        }
    }
    let others: Vec<char> = phrase.iter().copied().filter(|&o| o != c && o != ' ').collect();
    if others.is_empty() {
        if c == 'x' { 'y' } else { 'x' }
    } else {
        others[rng.gen_range(0..others.len())]
    }
}

/// One keyboard substitution away from `target` and not within one edit of
/// any vocabulary phrase other than `target`.
fn pick_misspelling(rng: &mut ChaCha8Rng, target: &str, vocabulary: &[VocabularyEntry]) -> Result<String, SpecError> {
    let chars: Vec<char> = target.chars().collect();
    let positions: Vec<usize> = (1..chars.len()).filter(|&i| chars[i] != ' ').collect();
    if positions.is_empty() {
        return Err(SpecError::NoMisspelling(target.into()));
    }
    for _ in 0..100 {
        let at = positions[rng.gen_range(0..positions.len())];
        let mut word = chars.clone();
        word[at] = neighbour(rng, chars[at], &chars);
        let word: String = word.into_iter().collect();
        let clear = vocabulary
            .iter()
            .all(|v| v.phrase == target || edit_distance(&word, &v.phrase) > 1);
        if word != target && is_plain_phrase(&word) && clear {
            return Ok(word);
        }
    }
    Err(SpecError::NoMisspelling(target.into()))
}

/// Damerau-Levenshtein distance (optimal string alignment) by full
/// dynamic programming over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut best = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                best = best.min(d[i - 2][j - 2] + 1);
            }
            d[i][j] = best;
        }
    }
    d[a.len()][b.len()]
}

/// A prefix the generator typed on the way to a completed phrase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantedTruth {
    pub subquery: String,
    pub target: String,
    /// Completed episodes that passed through `subquery`.
    pub episodes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantedMisspellingRecord {
    pub misspelling: String,
    pub truth: String,
    /// Episodes that ended at the misspelling, counted from the log.
    pub frequency: u64,
    pub truth_frequency: u64,
}

/// Names of the counts a manifest carries, matching the build report.
pub const COUNT_NAMES: [&str; 9] = [
    "sessions",
    "episodes",
    "pairs",
    "distinct_pairs",
    "promoted",
    "corrected",
    "merged",
    "identity_dropped",
    "final_entries",
];

/// Ground truth for one generated log.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub seed: u64,
    pub locale: String,
    /// Entries the build should produce with the spec's pipeline thresholds
    /// and no translation table, sorted by key.
    pub expected: Vec<QplEntry>,
    pub planted: Vec<PlantedTruth>,
    pub misspellings: Vec<PlantedMisspellingRecord>,
    /// Every correction the dictionary should contain.
    pub corrections: BTreeMap<String, String>,
    pub counts: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManifestError {
    #[error("missing or malformed manifest header")]
    Header,
    #[error("manifest line {0} is malformed")]
    Line(usize),
}

impl Manifest {
    /// Line-oriented text in the snapshot's escaping, one marker per line:
    /// `count`, `expected` (followed by a snapshot entry line), `planted`,
    /// `misspelling` and `correction`.
    pub fn to_text(&self) -> String {
        let mut out = format!("#qpl-manifest\tformat=1\tseed={}\tlocale={}\n", self.seed, self.locale);
        for (name, value) in &self.counts {
            out.push_str(&format!("count\t{name}\t{value}\n"));
        }
        for e in &self.expected {
            out.push_str("expected\t");
            out.push_str(&e.to_line());
            out.push('\n');
        }
        let l = escape_field(&self.locale);
        for p in &self.planted {
            out.push_str(&format!(
                "planted\t{l}\t{}\t{}\t{}\n",
                escape_field(&p.subquery),
                escape_field(&p.target),
                p.episodes
            ));
        }
        for m in &self.misspellings {
            out.push_str(&format!(
                "misspelling\t{l}\t{}\t{}\t{}\t{}\n",
                escape_field(&m.misspelling),
                escape_field(&m.truth),
                m.frequency,
                m.truth_frequency
            ));
        }
        for (wrong, right) in &self.corrections {
            out.push_str(&format!("correction\t{l}\t{}\t{}\n", escape_field(wrong), escape_field(right)));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ManifestError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(ManifestError::Header)?;
        let fields: Vec<&str> = header.split('\t').collect();
        let (seed, locale) = match fields.as_slice() {
            ["#qpl-manifest", "format=1", seed, locale] => (
                seed.strip_prefix("seed=").and_then(|s| s.parse().ok()).ok_or(ManifestError::Header)?,
                locale.strip_prefix("locale=").ok_or(ManifestError::Header)?.to_string(),
            ),
            _ => return Err(ManifestError::Header),
        };
        let mut manifest = Manifest {
            seed,
            locale,
            expected: Vec::new(),
            planted: Vec::new(),
            misspellings: Vec::new(),
            corrections: BTreeMap::new(),
            counts: BTreeMap::new(),
        };
        for (i, line) in lines.enumerate() {
            let n = i + 2;
            let bad = || ManifestError::Line(n);
            let (marker, rest) = line.split_once('\t').ok_or_else(bad)?;
            let f: Vec<&str> = rest.split('\t').collect();
            let text = |s: &str| unescape(s).map_err(|_| bad());
            let num = |s: &str| s.parse::<u64>().map_err(|_| bad());
            match (marker, f.as_slice()) {
                ("count", [name, value]) => {
                    manifest.counts.insert((*name).into(), num(value)?);
                }
                ("expected", _) => manifest.expected.push(QplEntry::from_line(rest).map_err(|_| bad())?),
                ("planted", [_, sub, target, episodes]) => manifest.planted.push(PlantedTruth {
                    subquery: text(sub)?,
                    target: text(target)?,
                    episodes: num(episodes)?,
                }),
                ("misspelling", [_, wrong, truth, freq, truth_freq]) => {
                    manifest.misspellings.push(PlantedMisspellingRecord {
                        misspelling: text(wrong)?,
                        truth: text(truth)?,
                        frequency: num(freq)?,
                        truth_frequency: num(truth_freq)?,
                    })
                }
                ("correction", [_, wrong, right]) => {
                    manifest.corrections.insert(text(wrong)?, text(right)?);
                }
                _ => return Err(bad()),
            }
        }
        Ok(manifest)
    }
}

/// Brute-force recount of a generated log. Deliberately written without the
/// pipeline's stage functions: plain loops, sorted maps and a full
/// dynamic-programming edit distance.
mod oracle {
    use super::*;

    struct Support {
        events: u64,
        users: BTreeSet<String>,
    }

    pub(super) fn recount(
        spec: &GeneratorSpec,
        sessions: &[Session],
        planted_paths: BTreeMap<(String, String), u64>,
        planted_misspellings: &[(String, String)],
    ) -> Manifest {
        let cfg = &spec.pipeline;
        let mut counts: BTreeMap<String, u64> = COUNT_NAMES.iter().map(|n| (n.to_string(), 0)).collect();
        *counts.get_mut("sessions").unwrap() = sessions.len() as u64;

        // (subquery, target) -> support
        let mut support: BTreeMap<(String, String), Support> = BTreeMap::new();
        for session in sessions {
            let mut episode: Vec<&str> = Vec::new();
            let mut user = "";
            let texts = session.events.iter().map(|e| (e.query_text.as_str(), e.user_id.as_str()));
            for (text, u) in texts.chain(core::iter::once(("", ""))) {
                if !text.is_empty() {
                    if episode.is_empty() {
                        user = u;
                    }
                    episode.push(text);
                    continue;
                }
                if episode.is_empty() {
                    continue;
                }
                *counts.get_mut("episodes").unwrap() += 1;
                let mut target = episode[0];
                for s in &episode {
                    if s.chars().count() >= target.chars().count() {
                        target = s;
                    }
                }
                let distinct: BTreeSet<&str> = episode.iter().copied().collect();
                *counts.get_mut("pairs").unwrap() += distinct.len() as u64;
                for s in distinct {
                    let slot = support.entry((s.into(), target.into())).or_insert(Support {
                        events: 0,
                        users: BTreeSet::new(),
                    });
                    slot.events += 1;
                    slot.users.insert(user.into());
                }
                episode.clear();
            }
        }
        *counts.get_mut("distinct_pairs").unwrap() = support.len() as u64;

        let weight = |s: &Support| match cfg.denominator {
            Denominator::Events => s.events,
            Denominator::Users => s.users.len() as u64,
        };
        let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
        for ((sub, _), s) in &support {
            *totals.entry(sub.as_str()).or_default() += weight(s);
        }

        // subquery -> (target, confidence, events, users)
        let mut promoted: BTreeMap<&str, (&str, f64, u64, u64)> = BTreeMap::new();
        for ((sub, target), s) in &support {
            let p = weight(s) as f64 / totals[sub.as_str()] as f64;
            if p < cfg.tau || (s.users.len() as u64) < cfg.k_min {
                continue;
            }
            let better = match promoted.get(sub.as_str()) {
                None => true,
                Some((t, _, events, _)) => s.events > *events || (s.events == *events && target.as_str() < *t),
            };
            if better {
                promoted.insert(sub, (target, p, s.events, s.users.len() as u64));
            }
        }
        *counts.get_mut("promoted").unwrap() = promoted.len() as u64;

        let mut frequencies: Vec<(&str, u64)> = support
            .iter()
            .filter(|((sub, target), _)| sub == target)
            .map(|((sub, _), s)| (sub.as_str(), s.events))
            .collect();
        frequencies.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let mut admitted: Vec<(&str, u64)> = Vec::new();
        let mut corrections: BTreeMap<String, String> = BTreeMap::new();
        for (word, freq) in frequencies {
            let owner = admitted
                .iter()
                .position(|(known, kf)| edit_distance(word, known) == 1 && freq as f64 <= cfg.rho * *kf as f64);
            match owner {
                Some(i) => {
                    admitted[i].1 += freq;
                    corrections.insert(word.into(), admitted[i].0.into());
                }
                None => admitted.push((word, freq)),
            }
        }

        let mut expected = Vec::new();
        for (sub, (target, p, events, users)) in promoted {
            let (target, kind) = match corrections.get(target) {
                Some(fixed) => {
                    *counts.get_mut("corrected").unwrap() += 1;
                    (fixed.as_str(), EntryKind::Correction)
                }
                None => (target, EntryKind::Completion),
            };
            if sub == target {
                *counts.get_mut("identity_dropped").unwrap() += 1;
                continue;
            }
            expected.push(QplEntry {
                locale: spec.locale.clone(),
                source: sub.into(),
                expansion: target.into(),
                kind,
                confidence: p,
                event_count: events,
                distinct_users: users,
            });
        }
        *counts.get_mut("final_entries").unwrap() = expected.len() as u64;
        expected.sort_by_key(QplEntry::key);

        let frequency_of = |word: &str| support.get(&(word.into(), word.into())).map_or(0, |s| s.events);
        let misspellings = planted_misspellings
            .iter()
            .map(|(wrong, truth)| PlantedMisspellingRecord {
                misspelling: wrong.clone(),
                truth: truth.clone(),
                frequency: frequency_of(wrong),
                truth_frequency: frequency_of(truth),
            })
            .collect();
        let planted = planted_paths
            .into_iter()
            .map(|((subquery, target), episodes)| PlantedTruth { subquery, target, episodes })
            .collect();

        Manifest {
            seed: spec.seed,
            locale: spec.locale.clone(),
            expected,
            planted,
            misspellings,
            corrections,
            counts,
        }
    }
}

/// Target frequencies for a dictionary-only experiment: a vocabulary of
/// random phrases, pairwise at least three edits apart, each with one
/// planted misspelling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpellCorpus {
    pub vocabulary: Vec<String>,
    /// (word, episodes ending at it) for vocabulary and misspellings alike.
    pub frequencies: Vec<(String, u64)>,
    /// (misspelling, truth)
    pub planted: Vec<(String, String)>,
}

/// Builds a corpus of `phrases` vocabulary phrases with frequencies in
/// 200..=2000. Each phrase gets a misspelling one edit away (substitution,
/// insertion, deletion or transposition) with frequency
/// floor(ratio * frequency); phrases where that is zero get none.
pub fn spell_corpus(seed: u64, phrases: usize, ratio: f64) -> SpellCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vocabulary: Vec<String> = Vec::with_capacity(phrases);
    while vocabulary.len() < phrases {
        let words = rng.gen_range(1..=2);
        let phrase = (0..words)
            .map(|_| {
                let len = rng.gen_range(3..=7);
                (0..len).map(|_| (b'a' + rng.gen_range(0..26u8)) as char).collect::<String>()
            })
            .collect::<Vec<_>>()
            .join(" ");
        if vocabulary.iter().all(|v| edit_distance(v, &phrase) >= 3) {
            vocabulary.push(phrase);
        }
    }

    let mut frequencies = Vec::new();
    let mut planted = Vec::new();
    let mut used: BTreeSet<String> = vocabulary.iter().cloned().collect();
    for truth in &vocabulary {
        let freq = rng.gen_range(200..=2000u64);
        frequencies.push((truth.clone(), freq));
        let count = floor_ratio(freq, ratio);
        if count == 0 {
            continue;
        }
        let wrong = loop {
            let candidate = single_edit(&mut rng, truth);
            if is_plain_phrase(&candidate) && !used.contains(&candidate) {
                break candidate;
            }
        };
        used.insert(wrong.clone());
        frequencies.push((wrong.clone(), count));
        planted.push((wrong, truth.clone()));
    }
    SpellCorpus {
        vocabulary,
        frequencies,
        planted,
    }
}

fn single_edit(rng: &mut ChaCha8Rng, word: &str) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    let at = rng.gen_range(0..chars.len());
    let letter = (b'a' + rng.gen_range(0..26u8)) as char;
    match rng.gen_range(0..4) {
        0 if chars[at] != letter => chars[at] = letter,
        1 => chars.insert(at, letter),
        2 if chars.len() > 1 => {
            chars.remove(at);
        }
        3 if at + 1 < chars.len() && chars[at] != chars[at + 1] => chars.swap(at, at + 1),
        _ => chars.insert(chars.len(), letter),
    }
    chars.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::{episode_target, segment_episodes};

    fn states(g: &Generated) -> Vec<Vec<&str>> {
        g.sessions
            .iter()
            .map(|s| s.events.iter().map(|e| e.query_text.as_str()).collect())
            .collect()
    }

    #[test]
    fn noiseless_love_is_a_prefix_chain() {
        let g = generate(&GeneratorSpec::noiseless(7, "en", &[("love", 1.0)], 3, 2)).unwrap();
        assert_eq!(g.sessions.len(), 6);
        for s in states(&g) {
            assert_eq!(s, ["l", "lo", "lov", "love"]);
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let mut spec = GeneratorSpec::noiseless(42, "en", &[("good morning", 3.0), ("heart", 1.0)], 20, 3);
        spec.typo = TypoModel {
            substitution: 0.1,
            space: 0.05,
            retype: 0.1,
        };
        spec.abandonment = 0.2;
        spec.intents_per_session = 3;
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.log(), b.log());
        assert_eq!(a.manifest.to_text(), b.manifest.to_text());
        spec.seed = 43;
        assert_ne!(generate(&spec).unwrap().log(), a.log());
    }

    #[test]
    fn typos_never_change_the_intent() {
        let mut spec = GeneratorSpec::noiseless(5, "en", &[("good morning", 1.0), ("thanksgiving", 1.0)], 30, 4);
        spec.typo = TypoModel {
            substitution: 0.3,
            space: 0.3,
            retype: 0.3,
        };
        spec.intents_per_session = 2;
        let g = generate(&spec).unwrap();
        let mut noisy = 0;
        for session in &g.sessions {
            for ep in segment_episodes(session) {
                let target = episode_target(&ep.states).unwrap();
                assert!(target == "good morning" || target == "thanksgiving", "{target}");
                noisy += usize::from(ep.states.len() > target.chars().count());
            }
        }
        assert!(noisy > 0);
    }

    #[test]
    fn thanksgiving_misspelling_expected_in_corrections() {
        let mut spec = GeneratorSpec::noiseless(11, "en", &[("thanksgiving", 1000.0), ("love", 10.0)], 100, 3);
        spec.misspellings.push(PlantedMisspelling {
            target: "thanksgiving".into(),
            misspelling: None,
            ratio: 0.005,
        });
        let g = generate(&spec).unwrap();
        let m = &g.manifest;
        assert_eq!(m.misspellings.len(), 1);
        let record = &m.misspellings[0];
        assert!(record.frequency >= 1);
        assert!(record.frequency as f64 <= 0.01 * record.truth_frequency as f64);
        assert_eq!(edit_distance(&record.misspelling, "thanksgiving"), 1);
        assert_eq!(m.corrections.get(&record.misspelling).map(String::as_str), Some("thanksgiving"));
    }

    #[test]
    fn manifest_text_round_trips() {
        let mut spec = GeneratorSpec::noiseless(3, "ru", &[("арбуз", 5.0), ("киви", 1.0)], 15, 2);
        spec.pipeline.k_min = 2;
        spec.misspellings.push(PlantedMisspelling {
            target: "арбуз".into(),
            misspelling: Some("арбус".into()),
            ratio: 0.01,
        });
        let m = generate(&spec).unwrap().manifest;
        assert!(!m.expected.is_empty());
        assert_eq!(Manifest::parse(&m.to_text()).unwrap(), m);
        assert_eq!(Manifest::parse("nope"), Err(ManifestError::Header));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let base = GeneratorSpec::noiseless(1, "en", &[("love", 1.0)], 1, 1);
        let mut s = base.clone();
        s.typo.space = 1.5;
        assert!(matches!(s.validate(), Err(SpecError::Probability { .. })));
        let mut s = base.clone();
        s.vocabulary[0].weight = 0.0;
        assert!(matches!(s.validate(), Err(SpecError::Weight { .. })));
        let mut s = base.clone();
        s.vocabulary[0].phrase = "Love".into();
        assert!(matches!(s.validate(), Err(SpecError::Phrase(_))));
        let mut s = base.clone();
        s.user_count = 0;
        assert_eq!(s.validate(), Err(SpecError::Volume));
        let mut s = base.clone();
        s.misspellings.push(PlantedMisspelling {
            target: "love".into(),
            misspelling: Some("lvoe x".into()),
            ratio: 0.01,
        });
        assert!(matches!(s.validate(), Err(SpecError::Misspelling { .. })));
        let mut s = base;
        s.pipeline.tau = 0.0;
        assert!(matches!(s.validate(), Err(SpecError::Pipeline(_))));
    }

    #[test]
    fn pipeline_reproduces_manifest() {
        use crate::emoji::EmojiTable;
        use crate::localize::NoTranslation;
        use crate::session::ParsedLog;

        for seed in 0..8 {
            let mut spec = GeneratorSpec::noiseless(
                seed,
                "en",
                &[("good morning", 40.0), ("good night", 25.0), ("heart", 20.0), ("love", 10.0), ("bitmoji", 5.0)],
                40,
                4,
            );
            spec.typo = TypoModel {
                substitution: 0.05,
                space: 0.03,
                retype: 0.05,
            };
            spec.abandonment = 0.15;
            spec.intents_per_session = 2;
            spec.pipeline.k_min = 3;
            spec.misspellings.push(PlantedMisspelling {
                target: "good morning".into(),
                misspelling: Some("good norning".into()),
                ratio: 0.01,
            });
            let g = generate(&spec).unwrap();
            let log = ParsedLog {
                sessions: g.sessions.clone(),
                skipped: 0,
            };
            let out = crate::pipeline::run(&log, &spec.pipeline, &NoTranslation, &EmojiTable::default(), |_| {}).unwrap();
            assert_eq!(out.entries, g.manifest.expected, "seed {seed}");
            assert_eq!(out.dictionaries["en"].correction_map, g.manifest.corrections, "seed {seed}");
            let t = &out.totals;
            let actual = [
                t.sessions,
                t.episodes,
                t.pairs,
                t.distinct_pairs,
                t.promoted,
                t.corrected,
                t.merged,
                t.identity_dropped,
                t.final_entries,
            ];
            let expected: Vec<u64> = COUNT_NAMES.iter().map(|n| g.manifest.counts[*n]).collect();
            assert_eq!(actual.as_slice(), expected.as_slice(), "seed {seed}");
        }
    }

    #[test]
    fn edit_distance_basics() {
        assert_eq!(edit_distance("", ""), 0);
        assert_eq!(edit_distance("", "abc"), 3);
        assert_eq!(edit_distance("ab", "ba"), 1);
        assert_eq!(edit_distance("good norning", "good morning"), 1);
        assert_eq!(edit_distance("арбуз", "арбус"), 1);
        assert_eq!(edit_distance("kitten", "sitting"), 3);
    }

    #[test]
    fn spell_corpus_shape() {
        let c = spell_corpus(9, 50, 0.01);
        assert_eq!(c.vocabulary.len(), 50);
        assert_eq!(c.planted.len(), 50);
        for (wrong, truth) in &c.planted {
            assert_eq!(edit_distance(wrong, truth), 1);
        }
        assert_eq!(spell_corpus(9, 50, 0.01), c);
    }
}
