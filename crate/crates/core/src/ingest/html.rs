//! Plain-text extraction from fetched page bodies.
//!
//! Deliberately rule-based rather than readability-grade: markup,
//! comments and the content of `script`, `style` and `nav` elements are
//! removed by tag, a handful of common entities are decoded to a fixed
//! point, and whitespace is collapsed, so extraction is deterministic and
//! idempotent on its own output.

/// Readable text pulled from one page.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedPage {
    pub final_url: String,
    pub text: String,
    pub parsable: bool,
    pub token_estimate: usize,
}

// Elements whose entire content is dropped.
const SKIP_ELEMENTS: [&str; 3] = ["script", "style", "nav"];

/// Extracts visible text from `body`.
///
/// `unparsable_threshold` is the minimum whitespace-token count for a page
/// to count as parsable (must be at least 1). Binary payloads (embedded
/// NULs or heavy UTF-8 damage) yield an empty, unparsable page.
pub fn extract_text(final_url: &str, body: &[u8], unparsable_threshold: usize) -> ExtractedPage {
    debug_assert!(unparsable_threshold >= 1);
    if looks_binary(body) {
        return ExtractedPage {
            final_url: final_url.to_string(),
            text: String::new(),
            parsable: false,
            token_estimate: 0,
        };
    }
    let source = String::from_utf8_lossy(body);
    let stripped = strip_markup(&source);
    let decoded = decode_entities(&stripped);
    let text = decoded.split_whitespace().collect::<Vec<_>>().join(" ");
    let token_estimate = text.split_whitespace().count();
    ExtractedPage {
        final_url: final_url.to_string(),
        text,
        parsable: token_estimate >= unparsable_threshold,
        token_estimate,
    }
}

fn looks_binary(body: &[u8]) -> bool {
    if body.contains(&0) {
        return true;
    }
    let decoded = String::from_utf8_lossy(body);
    let total = decoded.chars().count();
    if total == 0 {
        return false;
    }
    let damaged = decoded.chars().filter(|&c| c == '\u{FFFD}').count();
    damaged * 20 > total
}

// Case-insensitive ASCII search; multibyte UTF-8 never matches ASCII
// needles byte-for-byte, so byte-level scanning is safe.
fn find_ci(haystack: &str, needle_lower: &str, from: usize) -> Option<usize> {
    let h = haystack.as_bytes();
    let n = needle_lower.as_bytes();
    if n.is_empty() || from >= h.len() || h.len() - from < n.len() {
        return None;
    }
    (from..=h.len() - n.len()).find(|&i| {
        h[i..i + n.len()]
            .iter()
            .zip(n)
            .all(|(a, b)| a.to_ascii_lowercase() == *b)
    })
}

fn skip_element_at(src: &str, open_start: usize) -> Option<usize> {
    let rest = &src[open_start + 1..];
    for name in SKIP_ELEMENTS {
        let matches = rest.len() >= name.len()
            && rest
                .as_bytes()
                .iter()
                .zip(name.as_bytes())
                .all(|(a, b)| a.to_ascii_lowercase() == *b)
            && rest[name.len()..]
                .chars()
                .next()
                .map(|c| c == '>' || c == '/' || c.is_ascii_whitespace())
                .unwrap_or(true);
        if matches {
            let close = format!("</{name}");
            let end = match find_ci(src, &close, open_start + 1) {
                Some(pos) => match src[pos..].find('>') {
                    Some(gt) => pos + gt + 1,
                    None => src.len(),
                },
                None => src.len(),
            };
            return Some(end);
        }
    }
    None
}

fn strip_markup(src: &str) -> String {
    let mut out = String::with_capacity(src.len());
    let mut i = 0;
    let bytes = src.as_bytes();
    while i < bytes.len() {
        if bytes[i] == b'<' {
            if src[i..].starts_with("<!--") {
                i = match src[i + 4..].find("-->") {
                    Some(pos) => i + 4 + pos + 3,
                    None => bytes.len(),
                };
                out.push(' ');
                continue;
            }
            if let Some(end) = skip_element_at(src, i) {
                i = end;
                out.push(' ');
                continue;
            }
            let starts_tag = src[i + 1..]
                .chars()
                .next()
                .map(|c| c.is_ascii_alphabetic() || c == '/' || c == '!' || c == '?')
                .unwrap_or(false);
            if starts_tag {
                i = match src[i..].find('>') {
                    Some(pos) => i + pos + 1,
                    None => bytes.len(),
                };
                out.push(' ');
                continue;
            }
            // A bare '<' in prose stays literal.
            out.push('<');
            i += 1;
        } else {
            let ch = src[i..].chars().next().expect("in-bounds char");
            out.push(ch);
            i += ch.len_utf8();
        }
    }
    out
}

// Decoded repeatedly until stable so extraction is idempotent even on
// double-encoded input. `&lt;`/`&gt;` are intentionally left encoded: a
// decoded angle bracket would look like markup on a second pass.
fn decode_entities(src: &str) -> String {
    const TABLE: [(&str, &str); 4] = [
        ("&amp;", "&"),
        ("&quot;", "\""),
        ("&#39;", "'"),
        ("&apos;", "'"),
    ];
    let mut current = src.replace("&nbsp;", " ");
    loop {
        let mut next = current.clone();
        for (from, to) in TABLE {
            next = next.replace(from, to);
        }
        if next == current {
            return current;
        }
        current = next;
    }
}
