//! Small text utilities shared by the classifier, the transcript validator
//! and the docent guards.
//!
//! Sentence handling is a terminal-punctuation heuristic: a segment ends at a
//! maximal run of `.`, `!` or `?`. Abbreviations such as "Mr." are not
//! special-cased.

/// Lowercases, drops apostrophes and maps every other non-alphanumeric
/// character to a single space.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for ch in text.chars() {
        if ch == '\'' || ch == '\u{2019}' || ch == '\u{2018}' {
            continue;
        }
        if ch.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.extend(ch.to_lowercase());
        } else {
            pending_space = true;
        }
    }
    out
}

/// Normalized word tokens.
pub fn tokens(text: &str) -> Vec<String> {
    normalize(text).split(' ').filter(|t| !t.is_empty()).map(str::to_owned).collect()
}

/// Number of (possibly overlapping) occurrences of `needle` as a contiguous
/// token run inside `haystack`.
pub fn count_phrase(haystack: &[String], needle: &[String]) -> usize {
    if needle.is_empty() || needle.len() > haystack.len() {
        return 0;
    }
    haystack.windows(needle.len()).filter(|w| *w == needle).count()
}

/// Whitespace-delimited word count.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn is_terminator(ch: char) -> bool {
    matches!(ch, '.' | '!' | '?')
}

/// A contiguous slice of the source text: leading whitespace, body, and the
/// terminator run (empty for a trailing fragment).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment<'a> {
    pub raw: &'a str,
    pub terminator: &'a str,
}

impl Segment<'_> {
    /// Only segments carrying at least one alphanumeric character count as
    /// sentences.
    pub fn is_sentence(&self) -> bool {
        self.raw.chars().any(char::is_alphanumeric)
    }

    pub fn is_question(&self) -> bool {
        self.is_sentence() && self.terminator.contains('?')
    }
}

/// Splits `text` into segments whose concatenation is exactly `text`.
pub fn segments(text: &str) -> Vec<Segment<'_>> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, ch)) = chars.next() {
        if !is_terminator(ch) {
            continue;
        }
        let run_start = i;
        let mut end = i + ch.len_utf8();
        while let Some(&(j, next)) = chars.peek() {
            if is_terminator(next) {
                end = j + next.len_utf8();
                chars.next();
            } else {
                break;
            }
        }
        out.push(Segment { raw: &text[start..end], terminator: &text[run_start..end] });
        start = end;
    }
    if start < text.len() {
        out.push(Segment { raw: &text[start..], terminator: "" });
    }
    out
}

pub fn sentence_count(text: &str) -> usize {
    segments(text).iter().filter(|s| s.is_sentence()).count()
}

pub fn question_count(text: &str) -> usize {
    segments(text).iter().filter(|s| s.is_question()).count()
}

/// Lowercases the first character, used when a question is spliced after a
/// connective such as "Then, ".
pub fn lower_first(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(first) => first.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_strips_punctuation_and_apostrophes() {
        assert_eq!(normalize("What's the Artist’s life?!"), "whats the artists life");
        assert_eq!(normalize("  "), "");
    }

    #[test]
    fn phrase_counting_is_token_bounded() {
        let hay = tokens("asymmetrical or symmetrical, symmetrical");
        assert_eq!(count_phrase(&hay, &tokens("symmetrical")), 2);
        assert_eq!(count_phrase(&hay, &tokens("or symmetrical")), 1);
    }

    #[test]
    fn segments_cover_input() {
        let text = "Look closely. What do you see? And the colors?";
        let segs = segments(text);
        assert_eq!(segs.iter().map(|s| s.raw).collect::<String>(), text);
        assert_eq!(sentence_count(text), 3);
        assert_eq!(question_count(text), 2);
    }

    #[test]
    fn trailing_fragment_is_a_sentence_but_not_a_question() {
        assert_eq!(sentence_count("Nice. and then"), 2);
        assert_eq!(question_count("Nice. and then"), 0);
        assert_eq!(sentence_count("Really?! ... ok"), 2);
        assert_eq!(sentence_count(" . ?"), 0);
    }
}
