//! Chunk-synchronous two-speaker token format.
//!
//! A dialogue is two full-rate unit streams (one token per frame) cut into
//! fixed-duration chunks. The model-facing form keeps only *novel* tokens
//! (tokens that differ from the previous frame of the same channel) and
//! marks every chunk with a channel-0 tag. The channel-1 tag is emitted only
//! when that channel has novel tokens in the chunk.
//!
//! ```text
//! full rate   s0: 75 75 75 75 | 17 17 338 338 | 338 338 338 338
//!             s1: 89 89 89 89 | 89 89  89  89 |  89  89  89  89
//! wire form   [S0] 75 [S1] 89   [S0] 17 338     [S0]
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A speech unit or tag id in the extended vocabulary.
pub type Token = u32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),
    #[error("token {token} at position {position} is outside the unit range [0, {size})")]
    TokenOutOfRange { token: Token, position: usize, size: u32 },
    #[error("channel lengths differ: {s0} vs {s1} frames")]
    LengthMismatch { s0: usize, s1: usize },
    #[error("stream for speaker {found} passed where speaker {expected} was expected")]
    WrongSpeaker { expected: u8, found: u8 },
    #[error("chunk of {chunk_ms} ms is not a positive multiple of the {frame_ms} ms frame")]
    BadChunkSize { chunk_ms: u32, frame_ms: u32 },
    #[error("{frames} frames do not fill whole chunks of {frames_per_chunk} frames")]
    RaggedLength { frames: usize, frames_per_chunk: usize },
    #[error("chunk {chunk} channel {channel} holds {count} novel tokens, capacity is {capacity}")]
    ChunkOverflow {
        chunk: usize,
        channel: u8,
        count: usize,
        capacity: usize,
    },
    #[error("malformed sequence at position {position}: {reason}")]
    MalformedSequence { position: usize, reason: String },
}

pub type Result<T, E = CodecError> = std::result::Result<T, E>;

/// Which side of the dialogue a stream belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Speaker {
    S0,
    S1,
}

impl Speaker {
    pub fn index(self) -> usize {
        match self {
            Speaker::S0 => 0,
            Speaker::S1 => 1,
        }
    }

    pub fn other(self) -> Speaker {
        match self {
            Speaker::S0 => Speaker::S1,
            Speaker::S1 => Speaker::S0,
        }
    }
}

impl From<Speaker> for u8 {
    fn from(s: Speaker) -> u8 {
        s.index() as u8
    }
}

impl TryFrom<u8> for Speaker {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Speaker::S0),
            1 => Ok(Speaker::S1),
            _ => Err(format!("speaker must be 0 or 1, got {v}")),
        }
    }
}

/// Unit alphabet plus the two speaker tags, which occupy ids `size` and
/// `size + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    size: u32,
    frame_ms: u32,
    silence: Vec<Token>,
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab {
            size: 501,
            frame_ms: 40,
            silence: vec![0],
        }
    }
}

impl Vocab {
    pub fn new(size: u32, frame_ms: u32, silence: Vec<Token>) -> Result<Self> {
        if size == 0 {
            return Err(CodecError::InvalidVocab("unit count must be positive".into()));
        }
        if size > u32::MAX - 3 {
            return Err(CodecError::InvalidVocab("unit count leaves no room for tags".into()));
        }
        if frame_ms == 0 {
            return Err(CodecError::InvalidVocab("frame duration must be positive".into()));
        }
        if silence.is_empty() {
            return Err(CodecError::InvalidVocab("at least one silence unit is required".into()));
        }
        if let Some(&bad) = silence.iter().find(|&&t| t >= size) {
            return Err(CodecError::InvalidVocab(format!(
                "silence unit {bad} is outside [0, {size})"
            )));
        }
        Ok(Vocab {
            size,
            frame_ms,
            silence,
        })
    }

    /// Number of speech units.
    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn frame_ms(&self) -> u32 {
        self.frame_ms
    }

    pub fn silence_tokens(&self) -> &[Token] {
        &self.silence
    }

    /// The silence unit used for padding and for reconstructing a channel
    /// that has no history.
    pub fn primary_silence(&self) -> Token {
        self.silence[0]
    }

    pub fn is_silence(&self, t: Token) -> bool {
        self.silence.contains(&t)
    }

    pub fn is_unit(&self, t: Token) -> bool {
        t < self.size
    }

    pub fn tag_s0(&self) -> Token {
        self.size
    }

    pub fn tag_s1(&self) -> Token {
        self.size + 1
    }

    /// Units plus both tags.
    pub fn extended_size(&self) -> usize {
        self.size as usize + 2
    }

    pub fn frames_per_chunk(&self, chunk_ms: u32) -> Result<usize> {
        if chunk_ms == 0 || !chunk_ms.is_multiple_of(self.frame_ms) {
            return Err(CodecError::BadChunkSize {
                chunk_ms,
                frame_ms: self.frame_ms,
            });
        }
        Ok((chunk_ms / self.frame_ms) as usize)
    }

    fn check_units(&self, tokens: &[Token]) -> Result<()> {
        match tokens.iter().position(|&t| t >= self.size) {
            Some(position) => Err(CodecError::TokenOutOfRange {
                token: tokens[position],
                position,
                size: self.size,
            }),
            None => Ok(()),
        }
    }
}

/// One speaker's full-rate unit sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    pub speaker: Speaker,
    pub tokens: Vec<Token>,
}

impl TokenStream {
    pub fn new(speaker: Speaker, tokens: Vec<Token>, vocab: &Vocab) -> Result<Self> {
        vocab.check_units(&tokens)?;
        Ok(TokenStream { speaker, tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn duration_ms(&self, vocab: &Vocab) -> u64 {
        self.tokens.len() as u64 * vocab.frame_ms as u64
    }
}

/// What to do with streams whose length is not a whole number of chunks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Right-pad both channels with the primary silence unit.
    #[default]
    Pad,
    Reject,
}

/// Two aligned full-rate channels viewed as a sequence of chunks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkedDialogue {
    vocab: Vocab,
    chunk_ms: u32,
    frames_per_chunk: usize,
    channels: [Vec<Token>; 2],
}

impl ChunkedDialogue {
    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn chunk_ms(&self) -> u32 {
        self.chunk_ms
    }

    pub fn frames_per_chunk(&self) -> usize {
        self.frames_per_chunk
    }

    pub fn num_chunks(&self) -> usize {
        self.channels[0].len() / self.frames_per_chunk
    }

    pub fn num_frames(&self) -> usize {
        self.channels[0].len()
    }

    pub fn channel(&self, speaker: Speaker) -> &[Token] {
        &self.channels[speaker.index()]
    }

    /// Frames of chunk `i` for (channel 0, channel 1).
    pub fn chunk(&self, i: usize) -> (&[Token], &[Token]) {
        let range = i * self.frames_per_chunk..(i + 1) * self.frames_per_chunk;
        (&self.channels[0][range.clone()], &self.channels[1][range])
    }

    pub fn chunks(&self) -> impl Iterator<Item = (&[Token], &[Token])> + '_ {
        (0..self.num_chunks()).map(move |i| self.chunk(i))
    }

    pub fn into_streams(self) -> (TokenStream, TokenStream) {
        let [s0, s1] = self.channels;
        (
            TokenStream {
                speaker: Speaker::S0,
                tokens: s0,
            },
            TokenStream {
                speaker: Speaker::S1,
                tokens: s1,
            },
        )
    }
}

/// Cut two equal-length streams into chunks of `chunk_ms`.
pub fn chunk_streams(
    s0: &TokenStream,
    s1: &TokenStream,
    vocab: &Vocab,
    chunk_ms: u32,
    padding: Padding,
) -> Result<ChunkedDialogue> {
    if s0.speaker != Speaker::S0 {
        return Err(CodecError::WrongSpeaker {
            expected: 0,
            found: s0.speaker.into(),
        });
    }
    if s1.speaker != Speaker::S1 {
        return Err(CodecError::WrongSpeaker {
            expected: 1,
            found: s1.speaker.into(),
        });
    }
    if s0.len() != s1.len() {
        return Err(CodecError::LengthMismatch {
            s0: s0.len(),
            s1: s1.len(),
        });
    }
    let frames_per_chunk = vocab.frames_per_chunk(chunk_ms)?;
    vocab.check_units(&s0.tokens)?;
    vocab.check_units(&s1.tokens)?;

    let mut channels = [s0.tokens.clone(), s1.tokens.clone()];
    let rem = s0.len() % frames_per_chunk;
    if rem != 0 {
        match padding {
            Padding::Reject => {
                return Err(CodecError::RaggedLength {
                    frames: s0.len(),
                    frames_per_chunk,
                })
            }
            Padding::Pad => {
                let fill = frames_per_chunk - rem;
                for ch in &mut channels {
                    ch.extend(std::iter::repeat_n(vocab.primary_silence(), fill));
                }
            }
        }
    }
    Ok(ChunkedDialogue {
        vocab: vocab.clone(),
        chunk_ms,
        frames_per_chunk,
        channels,
    })
}

/// Novel tokens of both channels within one chunk.
///
/// The channel-1 tag is present on the wire exactly when `s1` is non-empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DedupChunk {
    pub s0: Vec<Token>,
    pub s1: Vec<Token>,
}

impl DedupChunk {
    pub fn new(s0: Vec<Token>, s1: Vec<Token>) -> Self {
        DedupChunk { s0, s1 }
    }

    pub fn s1_tag_present(&self) -> bool {
        !self.s1.is_empty()
    }

    pub fn side(&self, speaker: Speaker) -> &[Token] {
        match speaker {
            Speaker::S0 => &self.s0,
            Speaker::S1 => &self.s1,
        }
    }

    pub fn side_mut(&mut self, speaker: Speaker) -> &mut Vec<Token> {
        match speaker {
            Speaker::S0 => &mut self.s0,
            Speaker::S1 => &mut self.s1,
        }
    }

    /// Number of wire tokens this chunk occupies.
    pub fn wire_len(&self) -> usize {
        1 + self.s0.len() + if self.s1.is_empty() { 0 } else { 1 + self.s1.len() }
    }
}

/// The model-facing dialogue: one [`DedupChunk`] per chunk of wall-clock time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupDialogue {
    pub vocab: Vocab,
    pub chunk_ms: u32,
    pub chunks: Vec<DedupChunk>,
}

impl DedupDialogue {
    pub fn empty(vocab: Vocab, chunk_ms: u32) -> Result<Self> {
        vocab.frames_per_chunk(chunk_ms)?;
        Ok(DedupDialogue {
            vocab,
            chunk_ms,
            chunks: Vec::new(),
        })
    }

    pub fn frames_per_chunk(&self) -> usize {
        (self.chunk_ms / self.vocab.frame_ms()) as usize
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    /// The first `n` chunks. Since novelty is decided over the whole stream,
    /// this is the deduplicated form of the first `n` chunks of the source.
    pub fn prefix(&self, n: usize) -> DedupDialogue {
        DedupDialogue {
            vocab: self.vocab.clone(),
            chunk_ms: self.chunk_ms,
            chunks: self.chunks[..n.min(self.chunks.len())].to_vec(),
        }
    }

    pub fn wire_len(&self) -> usize {
        self.chunks.iter().map(DedupChunk::wire_len).sum()
    }
}

/// Global run-length reduction of both channels. A frame is novel when it
/// differs from the previous frame of its channel; frame 0 is always novel.
/// Each novel token lands in the chunk holding its onset frame.
pub fn deduplicate(d: &ChunkedDialogue) -> DedupDialogue {
    let m = d.frames_per_chunk;
    let mut chunks = vec![DedupChunk::default(); d.num_chunks()];
    for speaker in [Speaker::S0, Speaker::S1] {
        let mut prev: Option<Token> = None;
        for (i, &t) in d.channel(speaker).iter().enumerate() {
            if prev != Some(t) {
                chunks[i / m].side_mut(speaker).push(t);
                prev = Some(t);
            }
        }
    }
    DedupDialogue {
        vocab: d.vocab.clone(),
        chunk_ms: d.chunk_ms,
        chunks,
    }
}

/// A channel had nothing to carry over into its first chunk, so the chunk
/// was filled with the primary silence unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmptyCarryOver {
    pub chunk: usize,
    pub channel: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interpolated {
    pub dialogue: ChunkedDialogue,
    pub warnings: Vec<EmptyCarryOver>,
}

/// Rebuild full-rate chunks by equal repetition of each chunk's novel tokens.
///
/// With `k` novel tokens in an `m`-frame chunk, each token gets `m / k`
/// frames and the first `m % k` tokens get one more. A chunk with no novel
/// tokens repeats the channel's last reconstructed token.
pub fn interpolate(d: &DedupDialogue) -> Result<Interpolated> {
    let m = d.vocab.frames_per_chunk(d.chunk_ms)?;
    let mut channels = [
        Vec::with_capacity(d.chunks.len() * m),
        Vec::with_capacity(d.chunks.len() * m),
    ];
    let mut warnings = Vec::new();
    for speaker in [Speaker::S0, Speaker::S1] {
        let out = &mut channels[speaker.index()];
        let mut last: Option<Token> = None;
        for (ci, chunk) in d.chunks.iter().enumerate() {
            let novel = chunk.side(speaker);
            let k = novel.len();
            if k > m {
                return Err(CodecError::ChunkOverflow {
                    chunk: ci,
                    channel: speaker.into(),
                    count: k,
                    capacity: m,
                });
            }
            d.vocab.check_units(novel)?;
            if k == 0 {
                let fill = match last {
                    Some(t) => t,
                    None => {
                        warnings.push(EmptyCarryOver {
                            chunk: ci,
                            channel: speaker.into(),
                        });
                        d.vocab.primary_silence()
                    }
                };
                out.extend(std::iter::repeat_n(fill, m));
                last = Some(fill);
                continue;
            }
            let (base, extra) = (m / k, m % k);
            for (i, &t) in novel.iter().enumerate() {
                let reps = base + usize::from(i < extra);
                out.extend(std::iter::repeat_n(t, reps));
            }
            last = novel.last().copied();
        }
    }
    Ok(Interpolated {
        dialogue: ChunkedDialogue {
            vocab: d.vocab.clone(),
            chunk_ms: d.chunk_ms,
            frames_per_chunk: m,
            channels,
        },
        warnings,
    })
}

/// Wire form: per chunk `[S0] s0.. ([S1] s1..)?`.
pub fn flatten(d: &DedupDialogue) -> Vec<Token> {
    let mut out = Vec::with_capacity(d.wire_len());
    for chunk in &d.chunks {
        push_chunk(&mut out, chunk, &d.vocab);
    }
    out
}

/// Append one chunk's wire tokens.
pub fn push_chunk(out: &mut Vec<Token>, chunk: &DedupChunk, vocab: &Vocab) {
    out.push(vocab.tag_s0());
    out.extend_from_slice(&chunk.s0);
    if !chunk.s1.is_empty() {
        out.push(vocab.tag_s1());
        out.extend_from_slice(&chunk.s1);
    }
}

/// Inverse of [`flatten`].
pub fn parse(tokens: &[Token], vocab: &Vocab, chunk_ms: u32) -> Result<DedupDialogue> {
    let m = vocab.frames_per_chunk(chunk_ms)?;
    let malformed = |position: usize, reason: &str| CodecError::MalformedSequence {
        position,
        reason: reason.to_string(),
    };
    let (s0_tag, s1_tag) = (vocab.tag_s0(), vocab.tag_s1());
    let mut chunks: Vec<DedupChunk> = Vec::new();
    // Side currently being filled in the open chunk.
    let mut side = Speaker::S0;

    for (pos, &t) in tokens.iter().enumerate() {
        if t == s0_tag {
            if let Some(open) = chunks.last() {
                if side == Speaker::S1 && open.s1.is_empty() {
                    return Err(malformed(pos, "speaker-1 tag without tokens"));
                }
            }
            chunks.push(DedupChunk::default());
            side = Speaker::S0;
        } else if t == s1_tag {
            if chunks.is_empty() {
                return Err(malformed(pos, "sequence must start with the speaker-0 tag"));
            }
            if side == Speaker::S1 {
                return Err(malformed(pos, "second speaker-1 tag in one chunk"));
            }
            side = Speaker::S1;
        } else if t < vocab.size() {
            let Some(open) = chunks.last_mut() else {
                return Err(malformed(pos, "sequence must start with the speaker-0 tag"));
            };
            let list = open.side_mut(side);
            if list.last() == Some(&t) {
                return Err(malformed(pos, "repeated token inside a chunk"));
            }
            if list.len() == m {
                return Err(malformed(pos, "more novel tokens than frames in the chunk"));
            }
            list.push(t);
        } else {
            return Err(malformed(pos, "token outside the extended vocabulary"));
        }
    }
    if side == Speaker::S1 && chunks.last().is_some_and(|c| c.s1.is_empty()) {
        return Err(malformed(tokens.len(), "speaker-1 tag without tokens"));
    }
    Ok(DedupDialogue {
        vocab: vocab.clone(),
        chunk_ms,
        chunks,
    })
}

/// Re-encode a dialogue at a different chunk duration by way of its
/// full-rate reconstruction. The total duration must be a whole number of
/// target chunks.
pub fn rechunk(d: &DedupDialogue, chunk_ms: u32) -> Result<DedupDialogue> {
    if chunk_ms == d.chunk_ms {
        return Ok(d.clone());
    }
    let full = interpolate(d)?.dialogue;
    let (s0, s1) = full.into_streams();
    let chunked = chunk_streams(&s0, &s1, &d.vocab, chunk_ms, Padding::Reject)?;
    Ok(deduplicate(&chunked))
}

/// Last unit of each channel in a wire sequence, if any.
pub fn last_units(tokens: &[Token], vocab: &Vocab) -> [Option<Token>; 2] {
    let mut last = [None, None];
    let mut side = 0usize;
    for &t in tokens {
        if t == vocab.tag_s0() {
            side = 0;
        } else if t == vocab.tag_s1() {
            side = 1;
        } else if t < vocab.size() {
            last[side] = Some(t);
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocab {
        Vocab::default()
    }

    fn streams(a: &[Token], b: &[Token]) -> (TokenStream, TokenStream) {
        let v = vocab();
        (
            TokenStream::new(Speaker::S0, a.to_vec(), &v).unwrap(),
            TokenStream::new(Speaker::S1, b.to_vec(), &v).unwrap(),
        )
    }

    #[test]
    fn frames_per_chunk_matches_chunk_durations() {
        let v = vocab();
        assert_eq!(v.frames_per_chunk(240).unwrap(), 6);
        assert_eq!(v.frames_per_chunk(160).unwrap(), 4);
        assert_eq!(v.frames_per_chunk(200).unwrap(), 5);
        assert!(matches!(
            v.frames_per_chunk(100),
            Err(CodecError::BadChunkSize { .. })
        ));
        assert!(v.frames_per_chunk(0).is_err());
    }

    #[test]
    fn vocab_rejects_bad_silence() {
        assert!(Vocab::new(10, 40, vec![]).is_err());
        assert!(Vocab::new(10, 40, vec![10]).is_err());
        assert!(Vocab::new(10, 0, vec![0]).is_err());
        let v = Vocab::new(10, 40, vec![3]).unwrap();
        assert_eq!((v.tag_s0(), v.tag_s1(), v.extended_size()), (10, 11, 12));
    }

    #[test]
    fn single_chunk() {
        let (a, b) = streams(&[1, 2, 3, 4], &[5, 5, 5, 5]);
        let d = chunk_streams(&a, &b, &vocab(), 160, Padding::Reject).unwrap();
        assert_eq!(d.num_chunks(), 1);
        assert_eq!(d.chunk(0), (&[1, 2, 3, 4][..], &[5, 5, 5, 5][..]));
    }

    #[test]
    fn chunking_errors() {
        let (a, b) = streams(&[1, 2, 3], &[1, 2]);
        assert!(matches!(
            chunk_streams(&a, &b, &vocab(), 160, Padding::Pad),
            Err(CodecError::LengthMismatch { s0: 3, s1: 2 })
        ));
        let (a, b) = streams(&[1, 2, 3], &[1, 2, 3]);
        assert!(matches!(
            chunk_streams(&a, &b, &vocab(), 150, Padding::Pad),
            Err(CodecError::BadChunkSize { .. })
        ));
        assert!(matches!(
            chunk_streams(&a, &b, &vocab(), 160, Padding::Reject),
            Err(CodecError::RaggedLength { .. })
        ));
        let padded = chunk_streams(&a, &b, &vocab(), 160, Padding::Pad).unwrap();
        assert_eq!(padded.channel(Speaker::S0), &[1, 2, 3, 0]);
        assert!(matches!(
            chunk_streams(&b, &a, &vocab(), 160, Padding::Pad),
            Err(CodecError::WrongSpeaker { .. })
        ));
    }

    #[test]
    fn out_of_range_unit_rejected() {
        assert!(matches!(
            TokenStream::new(Speaker::S0, vec![1, 501], &vocab()),
            Err(CodecError::TokenOutOfRange { token: 501, position: 1, .. })
        ));
    }

    #[test]
    fn interpolation_remainder_goes_to_earliest() {
        let v = vocab();
        let d = DedupDialogue {
            vocab: v.clone(),
            chunk_ms: 160,
            chunks: vec![
                DedupChunk::new(vec![75], vec![9]),
                DedupChunk::new(vec![17, 338], vec![]),
                DedupChunk::new(vec![1, 2, 3], vec![]),
            ],
        };
        let out = interpolate(&d).unwrap();
        assert!(out.warnings.is_empty());
        let full = out.dialogue;
        assert_eq!(full.chunk(0).0, &[75, 75, 75, 75]);
        assert_eq!(full.chunk(1).0, &[17, 17, 338, 338]);
        assert_eq!(full.chunk(2).0, &[1, 1, 2, 3]);
        assert_eq!(full.channel(Speaker::S1), &[9; 12]);
    }

    #[test]
    fn interpolation_overflow_and_empty_start() {
        let v = vocab();
        let over = DedupDialogue {
            vocab: v.clone(),
            chunk_ms: 160,
            chunks: vec![DedupChunk::new(vec![1, 2, 3, 4, 5], vec![])],
        };
        assert!(matches!(
            interpolate(&over),
            Err(CodecError::ChunkOverflow { count: 5, capacity: 4, .. })
        ));
        let empty_start = DedupDialogue {
            vocab: v,
            chunk_ms: 160,
            chunks: vec![DedupChunk::new(vec![], vec![7]), DedupChunk::new(vec![], vec![])],
        };
        let out = interpolate(&empty_start).unwrap();
        assert_eq!(out.warnings, vec![EmptyCarryOver { chunk: 0, channel: 0 }]);
        assert_eq!(out.dialogue.channel(Speaker::S0), &[0; 8]);
        assert_eq!(out.dialogue.channel(Speaker::S1), &[7; 8]);
    }

    #[test]
    fn parse_rejects_malformed() {
        let v = vocab();
        let (s0, s1) = (v.tag_s0(), v.tag_s1());
        let bad: Vec<Vec<Token>> = vec![
            vec![s1, 89],
            vec![75, s0],
            vec![s0, s1, 1, s1, 2],
            vec![s0, s1],
            vec![s0, s1, s0],
            vec![s0, 1, 2, 3, 4, 5],
            vec![s0, 1, 1],
            vec![s0, 600],
        ];
        for seq in bad {
            assert!(
                matches!(parse(&seq, &v, 160), Err(CodecError::MalformedSequence { .. })),
                "{seq:?}"
            );
        }
        assert!(parse(&[], &v, 160).unwrap().is_empty());
    }

    #[test]
    fn all_silent_dialogue_wire_form() {
        let v = vocab();
        let (a, b) = streams(&[0; 8], &[0; 8]);
        let d = deduplicate(&chunk_streams(&a, &b, &v, 160, Padding::Reject).unwrap());
        assert_eq!(flatten(&d), vec![v.tag_s0(), 0, v.tag_s1(), 0, v.tag_s0()]);
    }

    #[test]
    fn rechunk_preserves_full_rate_streams() {
        let v = vocab();
        let (a, b) = streams(
            &[1, 1, 2, 3, 3, 3, 4, 4, 5, 6, 6, 6],
            &[0, 0, 0, 0, 9, 9, 9, 9, 9, 0, 0, 0],
        );
        let d160 = deduplicate(&chunk_streams(&a, &b, &v, 160, Padding::Reject).unwrap());
        let d80 = rechunk(&d160, 80).unwrap();
        assert_eq!(d80.len(), 6);
        let back = interpolate(&d80).unwrap().dialogue;
        let direct = interpolate(&d160).unwrap().dialogue;
        assert_eq!(back.channel(Speaker::S0), direct.channel(Speaker::S0));
        assert_eq!(back.channel(Speaker::S1), direct.channel(Speaker::S1));
    }

    #[test]
    fn last_units_tracks_sides() {
        let v = vocab();
        let seq = [v.tag_s0(), 3, 4, v.tag_s1(), 8, v.tag_s0(), 5];
        assert_eq!(last_units(&seq, &v), [Some(5), Some(8)]);
        assert_eq!(last_units(&[v.tag_s0()], &v), [None, None]);
    }
}
