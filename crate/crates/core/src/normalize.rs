//! The single normalization point shared by ingestion and the online path.
//!
//! Every string equality in the pipeline (episode boundaries, pair keys,
//! dictionary words, snapshot keys) is defined over the output of
//! [`normalize_query`], so the rewrite service must call the same function.

use alloc::string::String;

use icu_casemap::CaseMapper;
use unicode_normalization::UnicodeNormalization;
use unicode_properties::UnicodeEmoji;

/// NFC, Unicode default (full) case folding, NFC again, then trim surrounding
/// whitespace. Interior whitespace is kept as typed.
pub fn normalize_query(raw: &str) -> String {
    if raw.is_ascii() {
        // ASCII is already NFC and folds to its lowercase.
        let mut out = String::from(raw.trim());
        out.make_ascii_lowercase();
        return out;
    }
    let composed: String = raw.nfc().collect();
    let folded = CaseMapper::new().fold_string(&composed);
    let recomposed: String = folded.nfc().collect();
    String::from(recomposed.trim())
}

/// Canonical locale tag: trimmed, ASCII-lowercased, `_` replaced by `-`.
///
/// Returns `None` for tags that cannot be used as a key prefix (empty, or
/// containing `:` or whitespace).
pub fn normalize_locale(raw: &str) -> Option<String> {
    let trimmed = raw.trim();
    if trimmed.is_empty() || trimmed.chars().any(|c| c == ':' || c.is_whitespace()) {
        return None;
    }
    let mut out: String = trimmed.chars().map(|c| if c == '_' { '-' } else { c }).collect();
    out.make_ascii_lowercase();
    Some(out)
}

/// Length in Unicode scalar values.
pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// True if any non-ASCII character has `Emoji=Yes`.
///
/// ASCII digits, `#` and `*` carry the emoji property for keycap sequences
/// and are ignored here.
pub fn contains_emoji(s: &str) -> bool {
    s.chars().any(|c| !c.is_ascii() && c.is_emoji_char())
}

/// True if `locale` is English or an English regional variant.
pub fn is_english(locale: &str) -> bool {
    let lower = locale.trim();
    lower.eq_ignore_ascii_case("en")
        || lower
            .get(..3)
            .is_some_and(|p| p.eq_ignore_ascii_case("en-") || p.eq_ignore_ascii_case("en_"))
}
