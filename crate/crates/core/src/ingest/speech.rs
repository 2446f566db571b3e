//! Speech-to-text adapters. The engine never embeds a speech model.
//!
//! Wire contract: request `{"audio": <base64 PCM>, "lang_hint": "en"}`,
//! response `{"segments": [{"start", "end", "text"}]}`.

use std::collections::HashMap;
use std::path::Path;
use std::process::Stdio;

use async_trait::async_trait;
use base64::Engine as _;
use serde::Deserialize;
use serde_json::json;
use tokio::io::AsyncWriteExt;

use super::{validate_segments, IngestError, TranscriptSegment};
use crate::llm::{post_json_with_retry, HttpOptions};
use crate::util::sha256_hex;

pub const DEFAULT_LANG_HINT: &str = "en";

#[async_trait]
pub trait SpeechBackend: Send + Sync {
    async fn transcribe(&self, media: &[u8], lang_hint: &str) -> Result<Vec<TranscriptSegment>, IngestError>;
}

/// Fixture-table backend: media SHA-256 → segments.
#[derive(Debug, Clone, Default)]
pub struct MockSpeech {
    table: HashMap<String, Vec<TranscriptSegment>>,
}

impl MockSpeech {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(mut self, media: &[u8], segments: Vec<TranscriptSegment>) -> Self {
        self.table.insert(sha256_hex(media), segments);
        self
    }

    /// Reads a JSON object mapping hex SHA-256 digests to segment lists.
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| IngestError::MediaDecode(format!("fixture table {}: {e}", path.display())))?;
        let table: HashMap<String, Vec<TranscriptSegment>> = serde_json::from_str(&raw)
            .map_err(|e| IngestError::InvalidTranscript(format!("fixture table: {e}")))?;
        for segs in table.values() {
            validate_segments(segs)?;
        }
        Ok(MockSpeech { table })
    }
}

#[async_trait]
impl SpeechBackend for MockSpeech {
    async fn transcribe(&self, media: &[u8], _lang_hint: &str) -> Result<Vec<TranscriptSegment>, IngestError> {
        if media.is_empty() {
            return Ok(Vec::new());
        }
        let digest = sha256_hex(media);
        self.table
            .get(&digest)
            .cloned()
            .ok_or_else(|| IngestError::MediaDecode(format!("no fixture registered for media {digest}")))
    }
}

/// Extracts mono 16 kHz PCM from a container by running an external decoder.
///
/// The command reads the container on stdin and writes raw PCM to stdout,
/// e.g. `ffmpeg -i pipe:0 -f s16le -ac 1 -ar 16000 pipe:1`.
#[derive(Debug, Clone)]
pub struct CommandDecoder {
    pub program: String,
    pub args: Vec<String>,
}

impl CommandDecoder {
    pub fn ffmpeg() -> Self {
        CommandDecoder {
            program: "ffmpeg".into(),
            args: ["-loglevel", "error", "-i", "pipe:0", "-f", "s16le", "-ac", "1", "-ar", "16000", "pipe:1"]
                .map(String::from)
                .to_vec(),
        }
    }

    pub async fn decode(&self, media: &[u8]) -> Result<Vec<u8>, IngestError> {
        let mut child = tokio::process::Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| IngestError::MediaDecode(format!("spawn {}: {e}", self.program)))?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let input = media.to_vec();
        let writer = tokio::spawn(async move {
            let _ = stdin.write_all(&input).await;
        });
        let out = child
            .wait_with_output()
            .await
            .map_err(|e| IngestError::MediaDecode(e.to_string()))?;
        let _ = writer.await;
        if !out.status.success() {
            return Err(IngestError::MediaDecode(String::from_utf8_lossy(&out.stderr).trim().to_string()));
        }
        Ok(out.stdout)
    }
}

pub struct HttpSpeech {
    client: reqwest::Client,
    endpoint: String,
    decoder: Option<CommandDecoder>,
    opts: HttpOptions,
}

impl HttpSpeech {
    pub fn new(endpoint: impl Into<String>, decoder: Option<CommandDecoder>, opts: HttpOptions) -> Self {
        HttpSpeech { client: reqwest::Client::new(), endpoint: endpoint.into(), decoder, opts }
    }
}

#[derive(Deserialize)]
struct SpeechResponse {
    segments: Vec<TranscriptSegment>,
}

#[async_trait]
impl SpeechBackend for HttpSpeech {
    async fn transcribe(&self, media: &[u8], lang_hint: &str) -> Result<Vec<TranscriptSegment>, IngestError> {
        if media.is_empty() {
            return Ok(Vec::new());
        }
        let pcm = match &self.decoder {
            Some(d) => d.decode(media).await?,
            None => media.to_vec(),
        };
        let body = json!({
            "audio": base64::engine::general_purpose::STANDARD.encode(&pcm),
            "lang_hint": lang_hint,
        });
        let v = post_json_with_retry(&self.client, "speech", &self.endpoint, None, &body, &self.opts).await?;
        let resp: SpeechResponse =
            serde_json::from_value(v).map_err(|e| IngestError::InvalidTranscript(e.to_string()))?;
        validate_segments(&resp.segments)?;
        Ok(resp.segments)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn mock_returns_registered_fixture() {
        let seg = TranscriptSegment { start_sec: 0.0, end_sec: 2.0, text: "COVID-19 is deadly.".into() };
        let m = MockSpeech::new().register(b"media-H", vec![seg.clone()]);
        assert_eq!(m.transcribe(b"media-H", "en").await.unwrap(), vec![seg]);
    }

    #[tokio::test]
    async fn silence_is_empty() {
        assert!(MockSpeech::new().transcribe(b"", "en").await.unwrap().is_empty());
    }

    #[tokio::test]
    async fn unknown_media_fails_to_decode() {
        let r = MockSpeech::new().transcribe(b"???", "en").await;
        assert!(matches!(r, Err(IngestError::MediaDecode(_))));
    }

    #[tokio::test]
    async fn two_sentence_fixture_is_ordered() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.json");
        let media = b"two-sentence-audio";
        std::fs::write(
            &p,
            format!(
                r#"{{"{}": [{{"start": 0.0, "end": 1.8, "text": "Sugar causes diabetes."}},
                           {{"start": 1.8, "end": 4.0, "text": "Water cures cancer."}}]}}"#,
                sha256_hex(media)
            ),
        )
        .unwrap();
        let segs = MockSpeech::load(&p).unwrap().transcribe(media, "en").await.unwrap();
        assert_eq!(segs.len(), 2);
        assert!(segs[0].end_sec <= segs[1].start_sec);
    }

    #[tokio::test]
    async fn command_decoder_pipes_media_through() {
        let d = CommandDecoder { program: "cat".into(), args: vec![] };
        assert_eq!(d.decode(b"pcm").await.unwrap(), b"pcm");
        let bad = CommandDecoder { program: "false".into(), args: vec![] };
        assert!(bad.decode(b"x").await.is_err());
    }
}
