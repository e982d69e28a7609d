//! Archive parsing, link resolution and page-text extraction.

mod fetch;
mod html;

use std::io::BufRead;
use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use fetch::{
    content_hash, fetch_batch, resolve_and_fetch, FetchResult, FetchStatus, FetchStep, Fetcher,
    PageCache, ReplayFetcher,
};
pub use html::{extract_text, ExtractedPage};

/// Party behind an account. The labels generalize to any two-party
/// setting; the archives use the strings `DEM` and `REP`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Party {
    #[serde(rename = "DEM")]
    Dem,
    #[serde(rename = "REP")]
    Rep,
}

impl Party {
    pub fn as_str(self) -> &'static str {
        match self {
            Party::Dem => "DEM",
            Party::Rep => "REP",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "DEM" => Ok(Party::Dem),
            "REP" => Ok(Party::Rep),
            other => Err(Error::Archive(format!("unknown party {other:?}"))),
        }
    }
}

/// One archived social-media message.
///
/// `urls` is derived from `text` at parse time and is not part of the
/// JSON wire format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub account: String,
    pub party: Party,
    pub text: String,
    #[serde(rename = "retweet_count")]
    pub reshare_count: u64,
    #[serde(rename = "is_retweet")]
    pub is_reshare: bool,
    #[serde(skip)]
    pub urls: Vec<String>,
}

/// Follower count of an account at harvest time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccountInfo {
    pub account: String,
    pub party: Party,
    pub followers: u64,
    pub harvest_date: DateTime<Utc>,
}

impl AccountInfo {
    pub fn new(
        account: impl Into<String>,
        party: Party,
        followers: u64,
        harvest_date: DateTime<Utc>,
    ) -> Result<Self> {
        if followers < 1 {
            return Err(Error::Archive("follower count must be at least 1".into()));
        }
        Ok(AccountInfo {
            account: account.into(),
            party,
            followers,
            harvest_date,
        })
    }
}

/// A line that failed to parse, with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseLineError {
    pub line: usize,
    pub reason: String,
}

/// Result of parsing one archive stream.
#[derive(Debug, Default)]
pub struct ArchiveParse {
    pub posts: Vec<Post>,
    pub errors: Vec<ParseLineError>,
}

/// Parses a JSON Lines archive: one post object per line.
///
/// Malformed lines become error records and parsing continues; an empty
/// stream yields an empty post list. URLs are extracted from each post's
/// text in document order.
pub fn parse_archive(reader: impl BufRead) -> Result<ArchiveParse> {
    let mut out = ArchiveParse::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Archive(format!("read failed: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Post>(&line) {
            Ok(mut post) => {
                post.urls = extract_urls(&post.text);
                out.posts.push(post);
            }
            Err(e) => out.errors.push(ParseLineError {
                line: idx + 1,
                reason: e.to_string(),
            }),
        }
    }
    Ok(out)
}

/// Serializes posts back to the JSON Lines archive format.
pub fn serialize_archive(posts: &[Post]) -> String {
    let mut out = String::new();
    for post in posts {
        out.push_str(&serde_json::to_string(post).expect("posts serialize cleanly"));
        out.push('\n');
    }
    out
}

// Candidate URLs: scheme up to whitespace or markup delimiters; trailing
// punctuation is trimmed afterwards.
fn url_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"https?://[^\s<>"]+"#).expect("static regex compiles"))
}

/// Extracts every http(s) URL from `text`, in order of appearance.
///
/// Shortener links are kept verbatim. Trailing sentence punctuation is
/// stripped; a trailing closing bracket is kept only when it is balanced
/// within the URL (wiki-style paths).
pub fn extract_urls(text: &str) -> Vec<String> {
    url_regex()
        .find_iter(text)
        .filter_map(|m| {
            let trimmed = trim_url_punctuation(m.as_str());
            if trimmed.is_empty() {
                return None;
            }
            match url::Url::parse(trimmed) {
                Ok(parsed) if parsed.has_host() => Some(trimmed.to_string()),
                _ => None,
            }
        })
        .collect()
}

fn trim_url_punctuation(candidate: &str) -> &str {
    let mut s = candidate;
    loop {
        let Some(last) = s.chars().last() else { break };
        let trim = match last {
            '.' | ',' | ';' | ':' | '!' | '?' | '\'' | '"' | '`' | '*' => true,
            ')' | ']' | '}' => {
                let (open, close) = match last {
                    ')' => ('(', ')'),
                    ']' => ('[', ']'),
                    _ => ('{', '}'),
                };
                s.matches(close).count() > s.matches(open).count()
            }
            _ => false,
        };
        if !trim {
            break;
        }
        s = &s[..s.len() - last.len_utf8()];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn parses_well_formed_line() {
        let line = r#"{"id":"1","created_at":"2014-05-25T00:00:00Z","account":"GOP","party":"REP","text":"see http://a.example/x","retweet_count":3,"is_retweet":false}"#;
        let parsed = parse_archive(Cursor::new(line)).unwrap();
        assert!(parsed.errors.is_empty());
        assert_eq!(parsed.posts.len(), 1);
        let post = &parsed.posts[0];
        assert_eq!(post.id, "1");
        assert_eq!(post.party, Party::Rep);
        assert_eq!(post.reshare_count, 3);
        assert!(!post.is_reshare);
        assert_eq!(post.urls, vec!["http://a.example/x"]);
    }

    #[test]
    fn missing_field_becomes_error_record() {
        let lines = concat!(
            r#"{"id":"1","created_at":"2014-05-25T00:00:00Z","account":"GOP","party":"REP","text":"a","retweet_count":3,"is_retweet":false}"#,
            "\n",
            r#"{"id":"2","created_at":"2014-05-25T00:00:00Z","account":"GOP","party":"REP","text":"b","is_retweet":false}"#,
            "\n",
            "not json\n",
        );
        let parsed = parse_archive(Cursor::new(lines)).unwrap();
        assert_eq!(parsed.posts.len(), 1);
        assert_eq!(parsed.errors.len(), 2);
        assert_eq!(parsed.errors[0].line, 2);
        assert!(parsed.errors[0].reason.contains("retweet_count"));
        assert_eq!(parsed.errors[1].line, 3);
    }

    #[test]
    fn empty_stream_gives_empty_list() {
        let parsed = parse_archive(Cursor::new("")).unwrap();
        assert!(parsed.posts.is_empty());
        assert!(parsed.errors.is_empty());
    }

    #[test]
    fn two_urls_keep_document_order() {
        let line = r#"{"id":"1","created_at":"2014-05-25T00:00:00Z","account":"DNC","party":"DEM","text":"a http://x.example b https://y.example/p?q=1","retweet_count":0,"is_retweet":true}"#;
        let parsed = parse_archive(Cursor::new(line)).unwrap();
        assert_eq!(
            parsed.posts[0].urls,
            vec!["http://x.example", "https://y.example/p?q=1"]
        );
    }

    #[test]
    fn archive_round_trips() {
        let lines = concat!(
            r#"{"id":"1","created_at":"2014-05-25T12:34:56Z","account":"GOP","party":"REP","text":"see http://a.example/x","retweet_count":3,"is_retweet":false}"#,
            "\n",
            r#"{"id":"2","created_at":"2013-02-13T08:00:00Z","account":"DNC","party":"DEM","text":"plain","retweet_count":120,"is_retweet":true}"#,
            "\n",
        );
        let parsed = parse_archive(Cursor::new(lines)).unwrap();
        let serialized = serialize_archive(&parsed.posts);
        let reparsed = parse_archive(Cursor::new(serialized.as_bytes())).unwrap();
        assert_eq!(parsed.posts, reparsed.posts);
    }

    #[test]
    fn extract_urls_basic() {
        assert!(extract_urls("no links here").is_empty());
        assert_eq!(
            extract_urls("a http://x.example b https://y.example/p?q=1"),
            vec!["http://x.example", "https://y.example/p?q=1"]
        );
    }

    #[test]
    fn extract_urls_punctuation_adjacent_cases() {
        // Hand-built list of punctuation-adjacent extractions.
        let cases: Vec<(&str, Vec<&str>)> = vec![
            ("see http://x.example.", vec!["http://x.example"]),
            ("see http://x.example, now", vec!["http://x.example"]),
            ("really? http://x.example!", vec!["http://x.example"]),
            ("link: http://x.example;", vec!["http://x.example"]),
            ("ask http://x.example?", vec!["http://x.example"]),
            ("quote \"http://x.example\"", vec!["http://x.example"]),
            ("quote 'http://x.example'", vec!["http://x.example"]),
            ("(see http://x.example)", vec!["http://x.example"]),
            ("[ref http://x.example]", vec!["http://x.example"]),
            ("{http://x.example}", vec!["http://x.example"]),
            (
                "wiki http://x.example/a_(b) stays",
                vec!["http://x.example/a_(b)"],
            ),
            (
                "wiki period http://x.example/a_(b).",
                vec!["http://x.example/a_(b)"],
            ),
            ("ellipsis http://x.example...", vec!["http://x.example"]),
            ("bang chain http://x.example!?", vec!["http://x.example"]),
            (
                "query keeps punct http://x.example/p?q=1,2",
                vec!["http://x.example/p?q=1,2"],
            ),
            // ',' inside the path is fine; only the trailing one goes.
            (
                "trailing comma http://x.example/p?q=1,",
                vec!["http://x.example/p?q=1"],
            ),
            ("star http://x.example*", vec!["http://x.example"]),
            ("backtick `http://x.example`", vec!["http://x.example"]),
            (
                "two http://a.example. and http://b.example,",
                vec!["http://a.example", "http://b.example"],
            ),
            ("colon end http://x.example/path:", vec!["http://x.example/path"]),
        ];
        for (text, expected) in cases {
            assert_eq!(extract_urls(text), expected, "text: {text}");
        }
    }

    #[test]
    fn extract_urls_rejects_schemeless_and_hostless() {
        assert!(extract_urls("www.example.com without scheme").is_empty());
        assert!(extract_urls("broken http://").is_empty());
    }

    #[test]
    fn shorteners_kept_verbatim() {
        assert_eq!(extract_urls("via http://t.example/AbC123"), vec![
            "http://t.example/AbC123"
        ]);
    }

    #[test]
    fn account_info_requires_followers() {
        use chrono::TimeZone;
        let harvest = chrono::Utc.with_ymd_and_hms(2014, 5, 25, 0, 0, 0).unwrap();
        assert!(AccountInfo::new("gopparty", Party::Rep, 510_000, harvest).is_ok());
        assert!(AccountInfo::new("ghost", Party::Dem, 0, harvest).is_err());
    }
}
