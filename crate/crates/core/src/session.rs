//! Keystroke-level log ingestion, episode segmentation and
//! subquery -> target extraction.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use hashbrown::HashSet;
use serde::{Deserialize, Serialize};

use crate::normalize::{char_len, normalize_locale, normalize_query};

/// One snapshot of the search box.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryStateEvent {
    pub session_id: String,
    pub user_id: String,
    pub locale: String,
    pub seq: u64,
    pub query_text: String,
}

impl QueryStateEvent {
    /// Builds an event with `locale` and `query_text` normalized.
    ///
    /// Returns `None` when the locale is unusable as a key prefix.
    pub fn normalized(
        session_id: &str,
        user_id: &str,
        locale: &str,
        seq: u64,
        query_text: &str,
    ) -> Option<Self> {
        Some(Self {
            session_id: session_id.into(),
            user_id: user_id.into(),
            locale: normalize_locale(locale)?,
            seq,
            query_text: normalize_query(query_text),
        })
    }

    /// Serializes the event as one line of the ingestion log format
    /// (without the trailing newline).
    pub fn to_log_line(&self) -> String {
        // Serializing plain strings and integers cannot fail.
        serde_json::to_string(self).unwrap_or_default()
    }
}

/// All events of one session, sorted by `seq`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub session_id: String,
    pub events: Vec<QueryStateEvent>,
}

/// Result of [`parse_event_log`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedLog {
    /// Sessions ordered by `session_id`.
    pub sessions: Vec<Session>,
    /// Lines that were malformed, or that repeated a `seq` already seen in
    /// their session.
    pub skipped: usize,
}

impl ParsedLog {
    pub fn event_count(&self) -> usize {
        self.sessions.iter().map(|s| s.events.len()).sum()
    }

    /// Folds another parsed log into this one. Sessions split across inputs
    /// are joined and re-sorted by `seq`.
    pub fn merge(&mut self, other: ParsedLog) {
        let mut by_id: BTreeMap<String, Vec<QueryStateEvent>> = core::mem::take(&mut self.sessions)
            .into_iter()
            .map(|s| (s.session_id, s.events))
            .collect();
        self.skipped += other.skipped;
        for session in other.sessions {
            by_id.entry(session.session_id).or_default().extend(session.events);
        }
        self.sessions = by_id
            .into_iter()
            .map(|(session_id, events)| {
                let (events, dups) = sort_and_dedup(events);
                self.skipped += dups;
                Session { session_id, events }
            })
            .collect();
    }
}

#[derive(Deserialize)]
struct RawEvent<'a> {
    #[serde(borrow)]
    session_id: alloc::borrow::Cow<'a, str>,
    #[serde(borrow)]
    user_id: alloc::borrow::Cow<'a, str>,
    #[serde(borrow)]
    locale: alloc::borrow::Cow<'a, str>,
    seq: u64,
    #[serde(borrow)]
    query_text: alloc::borrow::Cow<'a, str>,
}

/// Parses one log line. `None` means malformed.
pub fn parse_event_line(line: &str) -> Option<QueryStateEvent> {
    let raw: RawEvent<'_> = serde_json::from_str(line).ok()?;
    if raw.session_id.is_empty() || raw.user_id.is_empty() {
        return None;
    }
    QueryStateEvent::normalized(&raw.session_id, &raw.user_id, &raw.locale, raw.seq, &raw.query_text)
}

/// Parses a line-delimited log into sessions.
///
/// Blank lines are ignored. Malformed lines (invalid UTF-8, invalid JSON,
/// missing fields, unusable locale) and duplicate `seq` values within a
/// session are counted in [`ParsedLog::skipped`] and never abort the parse.
pub fn parse_event_log(bytes: &[u8]) -> ParsedLog {
    let mut skipped = 0;
    let mut by_id: BTreeMap<String, Vec<QueryStateEvent>> = BTreeMap::new();
    for raw_line in bytes.split(|&b| b == b'\n') {
        let raw_line = raw_line.strip_suffix(b"\r").unwrap_or(raw_line);
        if raw_line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let parsed = core::str::from_utf8(raw_line).ok().and_then(parse_event_line);
        match parsed {
            Some(event) => by_id.entry(event.session_id.clone()).or_default().push(event),
            None => skipped += 1,
        }
    }
    let sessions = by_id
        .into_iter()
        .map(|(session_id, events)| {
            let (events, dups) = sort_and_dedup(events);
            skipped += dups;
            Session { session_id, events }
        })
        .collect();
    ParsedLog { sessions, skipped }
}

// Stable sort keeps the first line for a repeated seq.
fn sort_and_dedup(mut events: Vec<QueryStateEvent>) -> (Vec<QueryStateEvent>, usize) {
    events.sort_by_key(|e| e.seq);
    let before = events.len();
    events.dedup_by_key(|e| e.seq);
    let dups = before - events.len();
    (events, dups)
}

/// A maximal run of non-empty search-box states between empty-query
/// boundaries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryEpisode {
    pub session_id: String,
    pub user_id: String,
    pub locale: String,
    pub states: Vec<String>,
}

/// Splits a session at empty queries. Episodes take user and locale from
/// their first event; runs with no states are dropped.
pub fn segment_episodes(session: &Session) -> Vec<QueryEpisode> {
    let mut episodes = Vec::new();
    let mut current: Option<QueryEpisode> = None;
    for event in &session.events {
        if event.query_text.is_empty() {
            episodes.extend(current.take());
            continue;
        }
        current
            .get_or_insert_with(|| QueryEpisode {
                session_id: session.session_id.clone(),
                user_id: event.user_id.clone(),
                locale: event.locale.clone(),
                states: Vec::new(),
            })
            .states
            .push(event.query_text.clone());
    }
    episodes.extend(current);
    episodes
}

/// A single observation that a user passed through `subquery` on the way to
/// `target`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubqueryPair {
    pub locale: String,
    pub subquery: String,
    pub target: String,
    pub user_id: String,
}

/// The inferred intent of an episode: its longest state, ties going to the
/// state typed last.
pub fn episode_target(states: &[String]) -> Option<&str> {
    let mut best: Option<(usize, &str)> = None;
    for state in states {
        let len = char_len(state);
        if best.is_none_or(|(best_len, _)| len >= best_len) {
            best = Some((len, state));
        }
    }
    best.map(|(_, s)| s)
}

/// One pair per distinct state of the episode (first occurrence order), all
/// pointing at the episode target. The identity pair is always included.
pub fn extract_pairs(episode: &QueryEpisode) -> Vec<SubqueryPair> {
    let Some(target) = episode_target(&episode.states) else {
        return Vec::new();
    };
    let mut seen: HashSet<&str> = HashSet::with_capacity(episode.states.len());
    episode
        .states
        .iter()
        .filter(|s| seen.insert(s.as_str()))
        .map(|subquery| SubqueryPair {
            locale: episode.locale.clone(),
            subquery: subquery.clone(),
            target: target.into(),
            user_id: episode.user_id.clone(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;
    use proptest::prelude::*;

    pub(crate) const HEART_SESSION: [&str; 16] = [
        "h", "he", "hes", "he", "hea", "hear", "heart", "hear", "hea", "he", "h", "", "l", "lo",
        "lov", "love",
    ];

    fn heart_session_log() -> String {
        let mut out = String::new();
        for (i, q) in HEART_SESSION.iter().enumerate() {
            out.push_str(&format!(
                r#"{{"session_id":"s1","user_id":"u1","locale":"en","seq":{i},"query_text":"{q}"}}"#
            ));
            out.push('\n');
        }
        out
    }

    fn episode(states: &[&str]) -> QueryEpisode {
        QueryEpisode {
            session_id: "s".into(),
            user_id: "u".into(),
            locale: "en".into(),
            states: states.iter().map(|s| String::from(*s)).collect(),
        }
    }

    fn pair_set(pairs: &[SubqueryPair]) -> Vec<(String, String)> {
        pairs.iter().map(|p| (p.subquery.clone(), p.target.clone())).collect()
    }

    #[test]
    fn heart_session_parses_into_one_session() {
        let log = parse_event_log(heart_session_log().as_bytes());
        assert_eq!(log.skipped, 0);
        assert_eq!(log.sessions.len(), 1);
        let events = &log.sessions[0].events;
        assert_eq!(events.len(), 16);
        assert_eq!(events[11].query_text, "");
    }

    #[test]
    fn empty_stream() {
        let log = parse_event_log(b"");
        assert!(log.sessions.is_empty());
        assert_eq!(log.skipped, 0);
    }

    #[test]
    fn one_malformed_line_among_ten() {
        let mut text = String::new();
        for i in 0..10 {
            text.push_str(&format!(
                r#"{{"session_id":"s{}","user_id":"u","locale":"en","seq":{i},"query_text":"q{i}"}}"#,
                i % 3
            ));
            text.push('\n');
            if i == 4 {
                text.push_str("{\"session_id\": \"broken\"\n");
            }
        }
        let log = parse_event_log(text.as_bytes());
        assert_eq!(log.event_count(), 10);
        assert_eq!(log.skipped, 1);
    }

    #[test]
    fn bad_records_are_skipped() {
        let text = concat!(
            "not json\n",
            "{\"session_id\":\"s\",\"user_id\":\"u\",\"locale\":\"e:n\",\"seq\":1,\"query_text\":\"a\"}\n",
            "{\"session_id\":\"s\",\"user_id\":\"u\",\"locale\":\"en\",\"seq\":-1,\"query_text\":\"a\"}\n",
            "{\"session_id\":\"s\",\"user_id\":\"u\",\"locale\":\"en\",\"seq\":2,\"query_text\":\"A \"}\r\n",
            "{\"session_id\":\"s\",\"user_id\":\"u\",\"locale\":\"en\",\"seq\":2,\"query_text\":\"dup\"}\n",
            "\n",
        );
        let mut bytes = text.as_bytes().to_vec();
        bytes.extend_from_slice(b"\xff\xfe\n");
        let log = parse_event_log(&bytes);
        assert_eq!(log.skipped, 5);
        assert_eq!(log.sessions[0].events.len(), 1);
        assert_eq!(log.sessions[0].events[0].query_text, "a");
    }

    #[test]
    fn events_are_sorted_by_seq() {
        let text = concat!(
            "{\"session_id\":\"s\",\"user_id\":\"u\",\"locale\":\"en\",\"seq\":9,\"query_text\":\"ab\"}\n",
            "{\"session_id\":\"s\",\"user_id\":\"u\",\"locale\":\"en\",\"seq\":3,\"query_text\":\"a\"}\n",
        );
        let log = parse_event_log(text.as_bytes());
        let seqs: Vec<u64> = log.sessions[0].events.iter().map(|e| e.seq).collect();
        assert_eq!(seqs, vec![3, 9]);
    }

    #[test]
    fn heart_session_segments_into_two_episodes() {
        let log = parse_event_log(heart_session_log().as_bytes());
        let episodes = segment_episodes(&log.sessions[0]);
        assert_eq!(episodes.len(), 2);
        assert_eq!(episodes[0].states, HEART_SESSION[..11]);
        assert_eq!(episodes[1].states, HEART_SESSION[12..]);
    }

    #[test]
    fn segmentation_edge_cases() {
        let session = |texts: &[&str]| Session {
            session_id: "s".into(),
            events: texts
                .iter()
                .enumerate()
                .map(|(i, t)| QueryStateEvent::normalized("s", "u", "en", i as u64, t).unwrap())
                .collect(),
        };
        assert!(segment_episodes(&session(&["", " ", ""])).is_empty());
        let one = segment_episodes(&session(&["a", "ab", "abc"]));
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].states.len(), 3);
    }

    #[test]
    fn heart_session_first_episode_pairs() {
        let pairs = extract_pairs(&episode(&HEART_SESSION[..11]));
        let expected: Vec<(String, String)> = ["h", "he", "hes", "hea", "hear", "heart"]
            .iter()
            .map(|s| (String::from(*s), String::from("heart")))
            .collect();
        assert_eq!(pair_set(&pairs), expected);
    }

    #[test]
    fn single_state_identity() {
        let pairs = extract_pairs(&episode(&["love"]));
        assert_eq!(pair_set(&pairs), vec![("love".into(), "love".into())]);
    }

    #[test]
    fn longest_tie_goes_to_last_typed() {
        let pairs = extract_pairs(&episode(&["ab", "abc", "ab", "abd"]));
        assert_eq!(
            pair_set(&pairs),
            vec![
                ("ab".into(), "abd".into()),
                ("abc".into(), "abd".into()),
                ("abd".into(), "abd".into())
            ]
        );
    }

    #[test]
    fn length_counts_scalars_not_bytes() {
        // "арбуз" is 10 bytes but 5 scalars; "abcdef" wins on length.
        let pairs = extract_pairs(&episode(&["арбуз", "abcdef"]));
        assert_eq!(pairs[0].target, "abcdef");
    }

    fn arb_session() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop_oneof![Just(String::new()), "[a-c]{1,4}"], 0..30)
    }

    proptest! {
        #[test]
        fn segmentation_partitions_non_empty_states(texts in arb_session()) {
            let session = Session {
                session_id: "s".into(),
                events: texts
                    .iter()
                    .enumerate()
                    .map(|(i, t)| QueryStateEvent::normalized("s", "u", "en", i as u64, t).unwrap())
                    .collect(),
            };
            let episodes = segment_episodes(&session);
            prop_assert!(episodes.iter().all(|e| !e.states.is_empty()));
            let flattened: Vec<String> = episodes.into_iter().flat_map(|e| e.states).collect();
            let non_empty: Vec<String> = texts.into_iter().filter(|t| !t.is_empty()).collect();
            prop_assert_eq!(flattened, non_empty);
        }

        #[test]
        fn pair_invariants(states in prop::collection::vec("[a-c]{1,5}", 1..20)) {
            let ep = QueryEpisode {
                session_id: "s".into(),
                user_id: "u".into(),
                locale: "en".into(),
                states,
            };
            let pairs = extract_pairs(&ep);
            let max_len = ep.states.iter().map(|s| char_len(s)).max().unwrap();
            let target = &pairs[0].target;
            prop_assert_eq!(char_len(target), max_len);
            prop_assert!(pairs.iter().all(|p| &p.target == target));
            prop_assert!(pairs.iter().any(|p| &p.subquery == target));
            let distinct: HashSet<&str> = pairs.iter().map(|p| p.subquery.as_str()).collect();
            prop_assert_eq!(distinct.len(), pairs.len());
        }
    }
}
