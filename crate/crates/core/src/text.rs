//! Code-point offset helpers.
//!
//! Every offset in this crate counts Unicode scalar values, the unit SQuAD
//! files use for `answer_start`. Rust strings index by byte, so these
//! helpers do the translation in one place.

/// Number of code points in `s`.
pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Byte offset of the code point at `char_idx`, or `s.len()` when
/// `char_idx == char_len(s)`. Returns `None` past the end.
pub fn byte_offset(s: &str, char_idx: usize) -> Option<usize> {
    if char_idx == 0 {
        return Some(0);
    }
    let mut seen = 0;
    for (b, _) in s.char_indices() {
        if seen == char_idx {
            return Some(b);
        }
        seen += 1;
    }
    (seen == char_idx).then_some(s.len())
}

/// Substring by code-point range `[start, end)`.
pub fn char_slice(s: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let b0 = byte_offset(s, start)?;
    let rest = &s[b0..];
    let b1 = byte_offset(rest, end - start)?;
    Some(&rest[..b1])
}

/// Code-point offset of the first occurrence of `needle` in `haystack`.
pub fn find_char(haystack: &str, needle: &str) -> Option<usize> {
    haystack.find(needle).map(|b| char_len(&haystack[..b]))
}

/// Code-point offsets of every (possibly overlapping) occurrence of `needle`.
pub fn find_all_char(haystack: &str, needle: &str) -> Vec<usize> {
    if needle.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(rel) = haystack[from..].find(needle) {
        let b = from + rel;
        out.push(char_len(&haystack[..b]));
        // advance by one code point so overlapping matches are kept
        from = b + haystack[b..].chars().next().map_or(1, char::len_utf8);
    }
    out
}

/// Precomputed code-point → byte table for repeated slicing of one string.
#[derive(Debug, Clone)]
pub struct CharIndex<'a> {
    text: &'a str,
    bytes: Vec<usize>,
}

impl<'a> CharIndex<'a> {
    pub fn new(text: &'a str) -> Self {
        let mut bytes: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        bytes.push(text.len());
        Self { text, bytes }
    }

    pub fn len(&self) -> usize {
        self.bytes.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slice(&self, start: usize, end: usize) -> Option<&'a str> {
        if start > end || end > self.len() {
            return None;
        }
        Some(&self.text[self.bytes[start]..self.bytes[end]])
    }

    /// Code-point index of a byte offset that lies on a char boundary.
    pub fn char_at_byte(&self, byte: usize) -> Option<usize> {
        self.bytes.binary_search(&byte).ok()
    }
}
