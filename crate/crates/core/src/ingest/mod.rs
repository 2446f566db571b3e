//! Input normalization: plain text, web pages and video transcripts all
//! become a [`SourceDocument`] ready for claim detection.

mod fetch;
mod html;
mod speech;

pub use fetch::{FetchConfig, Fetcher};
pub use html::extract_web_text;
pub use speech::{
    CommandDecoder, HttpSpeech, MockSpeech, SpeechBackend, DEFAULT_LANG_HINT,
};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::BackendError;
use crate::util::sha256_hex;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("document has no visible text")]
    EmptyDocument,
    #[error("invalid url {0:?}")]
    InvalidUrl(String),
    #[error("fetch timed out after {0} ms")]
    FetchTimeout(u64),
    #[error("response body exceeds {limit} bytes")]
    TooLarge { limit: usize },
    #[error("HTTP error {0}")]
    HttpError(u16),
    #[error("too many redirects (limit {0})")]
    TooManyRedirects(usize),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("media could not be decoded: {0}")]
    MediaDecode(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("invalid transcript: {0}")]
    InvalidTranscript(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Text,
    WebPage,
    Video,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptSegment {
    #[serde(alias = "start")]
    pub start_sec: f64,
    #[serde(alias = "end")]
    pub end_sec: f64,
    pub text: String,
}

/// Checks that segments are well-formed, sorted and non-overlapping.
pub fn validate_segments(segments: &[TranscriptSegment]) -> Result<(), IngestError> {
    for (i, s) in segments.iter().enumerate() {
        if !(s.start_sec.is_finite() && s.end_sec.is_finite()) || s.start_sec < 0.0 || s.end_sec <= s.start_sec {
            return Err(IngestError::InvalidTranscript(format!(
                "segment {i} has bounds {}..{}",
                s.start_sec, s.end_sec
            )));
        }
        if i > 0 && segments[i - 1].end_sec > s.start_sec {
            return Err(IngestError::InvalidTranscript(format!("segment {i} overlaps its predecessor")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub id: String,
    pub kind: SourceKind,
    pub uri: Option<String>,
    pub raw_text: String,
    pub segments: Option<Vec<TranscriptSegment>>,
    pub fetched_at: DateTime<Utc>,
}

impl SourceDocument {
    fn new(kind: SourceKind, uri: Option<String>, raw_text: String, segments: Option<Vec<TranscriptSegment>>) -> Self {
        let tag = format!("{kind:?}\u{1f}{}\u{1f}{raw_text}", uri.as_deref().unwrap_or(""));
        SourceDocument {
            id: format!("doc-{}", &sha256_hex(tag.as_bytes())[..16]),
            kind,
            uri,
            raw_text,
            segments,
            fetched_at: Utc::now(),
        }
    }

    pub fn from_text(text: impl Into<String>) -> Self {
        Self::new(SourceKind::Text, None, text.into(), None)
    }

    pub fn from_web_page(uri: impl Into<String>, visible_text: impl Into<String>) -> Self {
        Self::new(SourceKind::WebPage, Some(uri.into()), visible_text.into(), None)
    }

    /// Builds a video document whose text is the segment texts joined by single spaces.
    pub fn from_transcript(uri: Option<String>, segments: Vec<TranscriptSegment>) -> Result<Self, IngestError> {
        validate_segments(&segments)?;
        let raw = segments.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join(" ");
        Ok(Self::new(SourceKind::Video, uri, raw, Some(segments)))
    }

    /// Character ranges of each segment within `raw_text`.
    pub fn segment_char_ranges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut pos = 0;
        for seg in self.segments.iter().flatten() {
            let len = seg.text.chars().count();
            out.push((pos, pos + len));
            pos += len + 1;
        }
        out
    }

    /// `(start_sec, end_sec)` covering the character span, for video documents.
    pub fn timestamp_for_span(&self, start: usize, end: usize) -> Option<(f64, f64)> {
        let segments = self.segments.as_ref()?;
        let ranges = self.segment_char_ranges();
        let hits: Vec<usize> = ranges
            .iter()
            .enumerate()
            .filter(|(_, (s, e))| *s < end.max(start + 1) && start < *e)
            .map(|(i, _)| i)
            .collect();
        let (first, last) = (*hits.first()?, *hits.last()?);
        Some((segments[first].start_sec, segments[last].end_sec))
    }
}
