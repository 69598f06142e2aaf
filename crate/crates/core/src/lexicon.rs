//! Words reserved by the concrete syntax and the identifier rule shared by
//! catalog, registry and program names.

/// Every word that appears inside a keyword of the concrete syntax, plus the
/// boolean literals. None of these may be used as an identifier.
pub const RESERVED_WORDS: &[&str] = &[
    "program", "each", "time", "if", "do", "start", "stop", "wait", "all", "any", "the", "located",
    "in", "whose", "is", "isn't", "below", "above", "at", "most", "least", "to", "and", "or", "not",
    "true", "false", "unknown", "Unknown",
];

pub fn is_reserved(word: &str) -> bool {
    RESERVED_WORDS.contains(&word)
}

/// `[A-Za-z_][A-Za-z0-9_-]*` and not reserved.
pub fn is_identifier(word: &str) -> bool {
    let mut chars = word.chars();
    let Some(first) = chars.next() else {
        return false;
    };
    (first.is_ascii_alphabetic() || first == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        && !is_reserved(word)
}
