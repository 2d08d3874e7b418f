//! Emoji to text expansion.

use alloc::string::String;
use alloc::vec::Vec;

use hashbrown::HashMap;
use thiserror::Error;
use unicode_properties::UnicodeEmoji;

use crate::normalize::{char_len, normalize_query};

/// CLDR short names for every emoji sequence, one `emoji<TAB>name` per line.
pub const BUNDLED_TABLE: &str = include_str!("../data/emoji-en.tsv");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmojiTableError {
    #[error("emoji table line {line}: expected `emoji<TAB>name`")]
    Malformed { line: usize },
    #[error("emoji table line {line}: key {key:?} is not an emoji sequence")]
    NotEmoji { line: usize, key: String },
}

/// Emoji sequence -> lowercase textual name.
#[derive(Debug, Clone, Default)]
pub struct EmojiTable {
    names: HashMap<String, String>,
    longest_key: usize,
    duplicates: usize,
}

/// Outcome of [`EmojiTable::expand`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expansion {
    Unchanged,
    Expanded(String),
}

impl Expansion {
    pub fn into_option(self) -> Option<String> {
        match self {
            Expansion::Unchanged => None,
            Expansion::Expanded(s) => Some(s),
        }
    }
}

impl EmojiTable {
    /// Parses `emoji<TAB>name` lines. Blank lines are skipped; a repeated
    /// key keeps its last name and is counted in [`duplicates`](Self::duplicates).
    pub fn parse(text: &str) -> Result<Self, EmojiTableError> {
        let mut table = EmojiTable::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let line_no = i + 1;
            let (key, name) = line
                .split_once('\t')
                .ok_or(EmojiTableError::Malformed { line: line_no })?;
            let raw_key = key.trim();
            let name = normalize_query(name);
            if raw_key.is_empty() || name.is_empty() || name.contains('\t') {
                return Err(EmojiTableError::Malformed { line: line_no });
            }
            // Checked before folding: folding maps some emoji (Ⓜ) to
            // letters that are not emoji themselves.
            if !is_emoji_sequence(raw_key) {
                return Err(EmojiTableError::NotEmoji { line: line_no, key: raw_key.into() });
            }
            let key = normalize_query(raw_key);
            table.insert(key, name);
        }
        Ok(table)
    }

    /// The table generated from CLDR names and compiled into the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_TABLE).expect("bundled emoji table is well-formed")
    }

    fn insert(&mut self, key: String, name: String) {
        self.longest_key = self.longest_key.max(char_len(&key));
        if self.names.insert(key, name).is_some() {
            self.duplicates += 1;
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Number of keys that were overwritten while parsing.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn name(&self, emoji: &str) -> Option<&str> {
        self.names.get(emoji).map(String::as_str)
    }

    /// Replaces every known emoji sequence in `query` by its name, preferring
    /// the longest sequence at each position (so a ZWJ sequence beats its
    /// parts). Whitespace runs in the result are collapsed to single spaces
    /// and trimmed. Returns [`Expansion::Unchanged`] when nothing matched.
    pub fn expand(&self, query: &str) -> Expansion {
        if self.names.is_empty() || query.is_ascii() {
            return Expansion::Unchanged;
        }
        let bounds: Vec<usize> = query
            .char_indices()
            .map(|(i, _)| i)
            .chain(core::iter::once(query.len()))
            .collect();
        let chars = bounds.len() - 1;
        let mut spliced = String::with_capacity(query.len() * 2);
        let mut replaced = false;
        let mut i = 0;
        while i < chars {
            let longest = self.longest_key.min(chars - i);
            let hit = (1..=longest).rev().find_map(|len| {
                self.names.get(&query[bounds[i]..bounds[i + len]]).map(|name| (len, name))
            });
            match hit {
                Some((len, name)) => {
                    spliced.push(' ');
                    spliced.push_str(name);
                    spliced.push(' ');
                    replaced = true;
                    i += len;
                }
                None => {
                    spliced.push_str(&query[bounds[i]..bounds[i + 1]]);
                    i += 1;
                }
            }
        }
        if !replaced {
            return Expansion::Unchanged;
        }
        let mut out = String::with_capacity(spliced.len());
        for word in spliced.split_whitespace() {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(word);
        }
        Expansion::Expanded(out)
    }
}

fn is_emoji_sequence(s: &str) -> bool {
    !s.chars().any(char::is_whitespace)
        && s.chars().any(|c| !c.is_ascii() && c.is_emoji_char_or_emoji_component())
}
