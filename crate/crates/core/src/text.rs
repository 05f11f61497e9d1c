//! Text normalization shared by identity hashing, embedding and entity linking.

use std::ops::Range;

/// Trim and collapse internal whitespace runs to a single space.
pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Identity key for entity names: lowercased, whitespace-collapsed.
pub fn entity_key(name: &str) -> String {
    collapse_whitespace(&name.to_lowercase())
}

/// Byte ranges of the maximal alphanumeric runs in `s`.
pub fn token_spans(s: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in s.char_indices() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(st)) => {
                spans.push(st..i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(st) = start {
        spans.push(st..s.len());
    }
    spans
}

/// Lowercased alphanumeric tokens.
pub fn tokens(s: &str) -> Vec<String> {
    token_spans(s)
        .into_iter()
        .map(|r| s[r].to_lowercase())
        .collect()
}

/// Matching form used by the entity linker: lowercase tokens joined by one space,
/// so punctuation and spacing differences do not matter.
pub fn match_form(s: &str) -> String {
    tokens(s).join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spans_skip_punctuation() {
        let s = "Spike-wave, 3 Hz!";
        let toks: Vec<&str> = token_spans(s).into_iter().map(|r| &s[r]).collect();
        assert_eq!(toks, ["Spike", "wave", "3", "Hz"]);
    }

    #[test]
    fn unicode_boundaries() {
        let s = "émission α-rhythm";
        let toks: Vec<&str> = token_spans(s).into_iter().map(|r| &s[r]).collect();
        assert_eq!(toks, ["émission", "α", "rhythm"]);
    }

    #[test]
    fn keys() {
        assert_eq!(entity_key("  Spike   Wave "), "spike wave");
        assert_eq!(match_form("Spike-Wave"), "spike wave");
    }
}
