//! Per-locale pair statistics, conditional probabilities and promotion of
//! candidate mappings behind a distinct-user support gate.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entry::EntryKind;
use crate::session::SubqueryPair;

/// What the conditional-probability denominator counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Denominator {
    /// Individual search events.
    #[default]
    Events,
    /// Distinct users per (subquery, target); kept for comparison only.
    Users,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("tau must be in (0, 1], got {0}")]
    Tau(f64),
    #[error("k_min must be at least 1")]
    KMin,
    #[error("rho must be in (0, 1), got {0}")]
    Rho(f64),
    #[error("translation_warn_rate must be in [0, 1], got {0}")]
    WarnRate(f64),
}

/// Thresholds for the offline build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Minimum P(target | subquery) for promotion, inclusive.
    pub tau: f64,
    /// Minimum number of distinct users behind a promoted mapping.
    pub k_min: u64,
    /// A candidate is a misspelling of a dictionary word at distance 1 when
    /// its frequency is at most `rho` times the word's frequency.
    pub rho: f64,
    pub denominator: Denominator,
    /// Run the translation pass for English locales too.
    pub translate_english: bool,
    /// Translation failure rate above which the build reports a warning.
    pub translation_warn_rate: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            k_min: 10,
            rho: 0.01,
            denominator: Denominator::Events,
            translate_english: false,
            translation_warn_rate: 0.5,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(ConfigError::Tau(self.tau));
        }
        if self.k_min == 0 {
            return Err(ConfigError::KMin);
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(ConfigError::Rho(self.rho));
        }
        if !(0.0..=1.0).contains(&self.translation_warn_rate) {
            return Err(ConfigError::WarnRate(self.translation_warn_rate));
        }
        Ok(())
    }
}

/// Support for one (locale, subquery, target) triple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubqueryPairStats {
    pub locale: String,
    pub subquery: String,
    pub target: String,
    pub event_count: u64,
    pub distinct_users: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct PairCounter {
    events: u64,
    users: BTreeSet<String>,
}

type TargetCounts = BTreeMap<String, PairCounter>;

/// Returned when a (locale, subquery) was never observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no observations for this subquery")]
pub struct NoData;

/// Accumulated pair statistics, keyed locale -> subquery -> target.
///
/// [`merge`](Self::merge) is associative and commutative, so shards can be
/// accumulated independently.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairStatsTable {
    locales: BTreeMap<String, BTreeMap<String, TargetCounts>>,
}

/// Counts every pair into a fresh table.
pub fn accumulate<I>(pairs: I) -> PairStatsTable
where
    I: IntoIterator<Item = SubqueryPair>,
{
    let mut table = PairStatsTable::default();
    for pair in pairs {
        table.add(pair);
    }
    table
}

impl PairStatsTable {
    pub fn add(&mut self, pair: SubqueryPair) {
        let counter = self
            .locales
            .entry(pair.locale)
            .or_default()
            .entry(pair.subquery)
            .or_default()
            .entry(pair.target)
            .or_default();
        counter.events += 1;
        counter.users.insert(pair.user_id);
    }

    pub fn merge(&mut self, other: PairStatsTable) {
        for (locale, subqueries) in other.locales {
            let mine = self.locales.entry(locale).or_default();
            for (subquery, targets) in subqueries {
                let mine = mine.entry(subquery).or_default();
                for (target, counter) in targets {
                    let slot = mine.entry(target).or_default();
                    slot.events += counter.events;
                    slot.users.extend(counter.users);
                }
            }
        }
    }

    pub fn locales(&self) -> impl Iterator<Item = &str> {
        self.locales.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.locales.is_empty()
    }

    /// Number of distinct (locale, subquery, target) triples.
    pub fn len(&self) -> usize {
        self.locales.values().flat_map(|s| s.values()).map(BTreeMap::len).sum()
    }

    /// Total events across all triples.
    pub fn total_events(&self) -> u64 {
        self.iter().map(|s| s.event_count).sum()
    }

    /// All triples in (locale, subquery, target) order.
    pub fn iter(&self) -> impl Iterator<Item = SubqueryPairStats> + '_ {
        self.locales.iter().flat_map(|(locale, subqueries)| {
            subqueries.iter().flat_map(move |(subquery, targets)| {
                targets.iter().map(move |(target, c)| SubqueryPairStats {
                    locale: locale.clone(),
                    subquery: subquery.clone(),
                    target: target.clone(),
                    event_count: c.events,
                    distinct_users: c.users.len() as u64,
                })
            })
        })
    }

    pub fn get(&self, locale: &str, subquery: &str, target: &str) -> Option<SubqueryPairStats> {
        let c = self.locales.get(locale)?.get(subquery)?.get(target)?;
        Some(SubqueryPairStats {
            locale: locale.into(),
            subquery: subquery.into(),
            target: target.into(),
            event_count: c.events,
            distinct_users: c.users.len() as u64,
        })
    }

    /// Empirical P(target | subquery) over events.
    pub fn conditional_probability(
        &self,
        locale: &str,
        subquery: &str,
        target: &str,
    ) -> Result<f64, NoData> {
        self.conditional_probability_by(locale, subquery, target, Denominator::Events)
    }

    pub fn conditional_probability_by(
        &self,
        locale: &str,
        subquery: &str,
        target: &str,
        denominator: Denominator,
    ) -> Result<f64, NoData> {
        let targets = self.locales.get(locale).and_then(|s| s.get(subquery)).ok_or(NoData)?;
        let total: u64 = targets.values().map(|c| weight(c, denominator)).sum();
        let hits = targets.get(target).map_or(0, |c| weight(c, denominator));
        Ok(hits as f64 / total as f64)
    }

    /// Per-target episode counts for one locale.
    ///
    /// Every episode emits exactly one identity pair, so the event count of
    /// (t -> t) is the number of episodes whose inferred intent was `t`.
    pub fn target_frequencies(&self, locale: &str) -> BTreeMap<String, u64> {
        let Some(subqueries) = self.locales.get(locale) else {
            return BTreeMap::new();
        };
        subqueries
            .iter()
            .filter_map(|(s, targets)| targets.get(s).map(|c| (s.clone(), c.events)))
            .collect()
    }
}

fn weight(c: &PairCounter, denominator: Denominator) -> u64 {
    match denominator {
        Denominator::Events => c.events,
        Denominator::Users => c.users.len() as u64,
    }
}

/// One promoted mapping. The subquery is the key in [`CandidateMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateEntry {
    pub target: String,
    pub confidence: f64,
    pub event_count: u64,
    pub distinct_users: u64,
    /// Denominator used for `confidence`; needed to recompute it after merges.
    pub subquery_total: u64,
    pub kind: EntryKind,
}

/// Promoted mappings for one locale, one target per subquery.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidateMap {
    pub locale: String,
    pub entries: BTreeMap<String, CandidateEntry>,
}

impl CandidateMap {
    pub fn new(locale: impl Into<String>) -> Self {
        Self {
            locale: locale.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, subquery: &str) -> Option<&CandidateEntry> {
        self.entries.get(subquery)
    }

    /// Distinct targets in sorted order.
    pub fn targets(&self) -> BTreeSet<&str> {
        self.entries.values().map(|e| e.target.as_str()).collect()
    }
}

/// Keeps (subquery -> target) when P(target | subquery) >= tau and at least
/// `k_min` distinct users produced it. If several targets pass (only
/// possible for tau <= 0.5) the one with more events wins, then the
/// lexicographically smaller target.
pub fn promote(stats: &PairStatsTable, config: &PipelineConfig) -> BTreeMap<String, CandidateMap> {
    let mut out = BTreeMap::new();
    for (locale, subqueries) in &stats.locales {
        let mut map = CandidateMap::new(locale.clone());
        for (subquery, targets) in subqueries {
            let total: u64 = targets.values().map(|c| weight(c, config.denominator)).sum();
            let mut best: Option<(&String, &PairCounter, f64)> = None;
            for (target, counter) in targets {
                let p = weight(counter, config.denominator) as f64 / total as f64;
                if p < config.tau || (counter.users.len() as u64) < config.k_min {
                    continue;
                }
                // Targets iterate in ascending order, so strict > keeps the
                // smaller target on equal counts.
                if best.is_none_or(|(_, b, _)| counter.events > b.events) {
                    best = Some((target, counter, p));
                }
            }
            if let Some((target, counter, p)) = best {
                let kind = if target == subquery {
                    EntryKind::Identity
                } else {
                    EntryKind::Completion
                };
                map.entries.insert(
                    subquery.clone(),
                    CandidateEntry {
                        target: target.clone(),
                        confidence: p,
                        event_count: counter.events,
                        distinct_users: counter.users.len() as u64,
                        subquery_total: total,
                        kind,
                    },
                );
            }
        }
        if !map.is_empty() {
            out.insert(locale.clone(), map);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;
    use alloc::vec::Vec;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn pair(locale: &str, sub: &str, target: &str, user: &str) -> SubqueryPair {
        SubqueryPair {
            locale: locale.into(),
            subquery: sub.into(),
            target: target.into(),
            user_id: user.into(),
        }
    }

    fn repeated(sub: &str, target: &str, users: usize, per_user: usize) -> Vec<SubqueryPair> {
        (0..users)
            .flat_map(|u| (0..per_user).map(move |_| pair("en", sub, target, &format!("u{u}"))))
            .collect()
    }

    fn config(tau: f64, k_min: u64) -> PipelineConfig {
        PipelineConfig {
            tau,
            k_min,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn three_users_once_each() {
        let table = accumulate(repeated("hea", "heart", 3, 1));
        let s = table.get("en", "hea", "heart").unwrap();
        assert_eq!((s.event_count, s.distinct_users), (3, 3));
    }

    #[test]
    fn one_user_five_times() {
        let table = accumulate(repeated("hea", "heart", 1, 5));
        let s = table.get("en", "hea", "heart").unwrap();
        assert_eq!((s.event_count, s.distinct_users), (5, 1));
    }

    #[test]
    fn counts_match_hash_and_count_oracle() {
        // 200 pairs from a small deterministic generator.
        let subs = ["a", "ab", "abc", "b", "ba"];
        let targets = ["abc", "abd", "bar"];
        let mut pairs = Vec::new();
        let mut x: u64 = 0x9E37_79B9;
        for _ in 0..200 {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let locale = if (x >> 60) & 1 == 0 { "en" } else { "ru" };
            let s = subs[((x >> 33) % 5) as usize];
            let t = targets[((x >> 40) % 3) as usize];
            let u = format!("u{}", (x >> 50) % 7);
            pairs.push(pair(locale, s, t, &u));
        }
        let mut oracle: HashMap<(String, String, String), (u64, std::collections::HashSet<String>)> =
            HashMap::new();
        for p in &pairs {
            let slot = oracle
                .entry((p.locale.clone(), p.subquery.clone(), p.target.clone()))
                .or_default();
            slot.0 += 1;
            slot.1.insert(p.user_id.clone());
        }
        let table = accumulate(pairs);
        assert_eq!(table.len(), oracle.len());
        assert_eq!(table.total_events(), 200);
        for s in table.iter() {
            let o = &oracle[&(s.locale.clone(), s.subquery.clone(), s.target.clone())];
            assert_eq!(s.event_count, o.0);
            assert_eq!(s.distinct_users, o.1.len() as u64);
            assert!(s.distinct_users <= s.event_count);
        }
    }

    #[test]
    fn probability_is_event_share() {
        let mut pairs = repeated("hea", "heart", 3, 1);
        pairs.extend(repeated("hea", "health", 1, 1));
        let table = accumulate(pairs);
        assert_eq!(table.conditional_probability("en", "hea", "heart"), Ok(0.75));
        assert_eq!(table.conditional_probability("en", "hea", "health"), Ok(0.25));
        assert_eq!(table.conditional_probability("en", "hea", "hearth"), Ok(0.0));
    }

    #[test]
    fn single_target_is_certain_and_unknown_is_no_data() {
        let table = accumulate(repeated("lo", "love", 2, 2));
        assert_eq!(table.conditional_probability("en", "lo", "love"), Ok(1.0));
        assert_eq!(table.conditional_probability("en", "zz", "love"), Err(NoData));
        assert_eq!(table.conditional_probability("fr", "lo", "love"), Err(NoData));
    }

    #[test]
    fn user_denominator_differs_from_events() {
        let mut pairs = repeated("hea", "heart", 1, 3);
        pairs.extend(repeated("hea", "health", 1, 1));
        let table = accumulate(pairs);
        let by_users = table
            .conditional_probability_by("en", "hea", "heart", Denominator::Users)
            .unwrap();
        assert_eq!(by_users, 0.5);
    }

    #[test]
    fn promoted_above_threshold() {
        // p = 0.75, 12 users.
        let mut pairs = repeated("hea", "heart", 12, 1);
        pairs.extend(repeated("hea", "health", 4, 1));
        let maps = promote(&accumulate(pairs), &config(0.5, 10));
        let e = maps["en"].get("hea").unwrap();
        assert_eq!(e.target, "heart");
        assert_eq!(e.confidence, 0.75);
        assert_eq!(e.kind, EntryKind::Completion);
    }

    #[test]
    fn privacy_gate_excludes_rare_users() {
        // p = 0.6, 3 users.
        let mut pairs = repeated("hes", "heart", 3, 2);
        pairs.extend(repeated("hes", "hesitate", 4, 1));
        let maps = promote(&accumulate(pairs), &config(0.5, 10));
        assert!(maps.get("en").is_none_or(|m| m.get("hes").is_none()));
    }

    #[test]
    fn identity_mapping_is_promoted() {
        let maps = promote(&accumulate(repeated("love", "love", 50, 1)), &config(0.5, 10));
        let e = maps["en"].get("love").unwrap();
        assert_eq!(e.target, "love");
        assert_eq!(e.confidence, 1.0);
        assert_eq!(e.kind, EntryKind::Identity);
    }

    #[test]
    fn fifty_fifty_tie_breaks_on_events_then_name() {
        let mut pairs = repeated("ab", "abe", 2, 1);
        pairs.extend(repeated("ab", "abd", 2, 1));
        let maps = promote(&accumulate(pairs), &config(0.5, 1));
        assert_eq!(maps["en"].get("ab").unwrap().target, "abd");

        // Under the users denominator, equal user shares can hide unequal
        // event counts.
        let mut pairs = repeated("ab", "abe", 2, 3);
        pairs.extend(repeated("ab", "abd", 2, 1));
        let cfg = PipelineConfig {
            denominator: Denominator::Users,
            ..config(0.5, 1)
        };
        assert_eq!(promote(&accumulate(pairs), &cfg)["en"].get("ab").unwrap().target, "abe");
    }

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        assert_eq!(config(0.0, 1).validate(), Err(ConfigError::Tau(0.0)));
        assert_eq!(config(0.5, 0).validate(), Err(ConfigError::KMin));
        let bad_rho = PipelineConfig {
            rho: 1.0,
            ..PipelineConfig::default()
        };
        assert_eq!(bad_rho.validate(), Err(ConfigError::Rho(1.0)));
    }

    #[test]
    fn merge_matches_single_pass() {
        let a = vec![pair("en", "a", "ab", "u1"), pair("en", "a", "ab", "u2")];
        let b = vec![pair("en", "a", "ab", "u1"), pair("ru", "б", "бв", "u3")];
        let mut merged = accumulate(a.clone());
        merged.merge(accumulate(b.clone()));
        let whole = accumulate(a.into_iter().chain(b));
        assert_eq!(merged, whole);
    }

    fn arb_pairs() -> impl Strategy<Value = Vec<SubqueryPair>> {
        prop::collection::vec(
            ("(en|ru)", "[ab]{1,2}", "[ab]{1,3}", "u[0-4]")
                .prop_map(|(l, s, t, u)| pair(&l, &s, &t, &u)),
            0..60,
        )
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one(pairs in arb_pairs()) {
            let table = accumulate(pairs);
            let mut sums: BTreeMap<(String, String), f64> = BTreeMap::new();
            for s in table.iter() {
                let p = table.conditional_probability(&s.locale, &s.subquery, &s.target).unwrap();
                *sums.entry((s.locale, s.subquery)).or_default() += p;
            }
            for total in sums.values() {
                prop_assert!((total - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn merge_is_commutative_and_associative(a in arb_pairs(), b in arb_pairs(), c in arb_pairs()) {
            let (ta, tb, tc) = (accumulate(a), accumulate(b), accumulate(c));
            let mut ab = ta.clone();
            ab.merge(tb.clone());
            let mut ba = tb.clone();
            ba.merge(ta.clone());
            prop_assert_eq!(&ab, &ba);
            let mut ab_c = ab;
            ab_c.merge(tc.clone());
            let mut bc = tb;
            bc.merge(tc);
            let mut a_bc = ta;
            a_bc.merge(bc);
            prop_assert_eq!(ab_c, a_bc);
        }

        #[test]
        fn raising_tau_never_adds(pairs in arb_pairs(), lo in 0.05f64..1.0, hi in 0.05f64..1.0, k in 1u64..3) {
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            let table = accumulate(pairs);
            let low = promote(&table, &config(lo, k));
            let high = promote(&table, &config(hi, k));
            for (locale, map) in &high {
                for (sub, e) in &map.entries {
                    let l = low.get(locale).and_then(|m| m.get(sub));
                    prop_assert!(l.is_some());
                    prop_assert!(e.confidence >= hi);
                }
            }
        }

        #[test]
        fn privacy_floor_holds(pairs in arb_pairs(), k in 1u64..4) {
            let maps = promote(&accumulate(pairs), &config(0.3, k));
            for map in maps.values() {
                for e in map.entries.values() {
                    prop_assert!(e.distinct_users >= k);
                    prop_assert!(e.confidence >= 0.3);
                }
            }
        }

        #[test]
        fn unique_targets_promote_everything(
            raw in prop::collection::btree_map("[a-d]{1,3}", ("[a-d]{1,4}", 1usize..4), 0..20)
        ) {
            // One target per subquery: smallest positive tau and k_min = 1
            // must reproduce the observed pairs exactly.
            let mut pairs = Vec::new();
            for (sub, (target, n)) in &raw {
                pairs.extend((0..*n).map(|i| pair("en", sub, target, &format!("u{i}"))));
            }
            let maps = promote(&accumulate(pairs), &config(f64::MIN_POSITIVE, 1));
            let got: BTreeMap<String, String> = maps
                .get("en")
                .map(|m| m.entries.iter().map(|(s, e)| (s.clone(), e.target.clone())).collect())
                .unwrap_or_default();
            let want: BTreeMap<String, String> =
                raw.iter().map(|(s, (t, _))| (s.clone(), t.clone())).collect();
            prop_assert_eq!(got, want);
        }
    }
}
