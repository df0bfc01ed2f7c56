//! Synthetic two-channel dialogues with controllable turn-taking.
//!
//! A dialogue alternates turns. Each turn is one or more IPUs separated by
//! pauses; the floor passes to the other speaker after a signed floor-transfer
//! offset (negative offsets overlap). Backchannels are short bursts placed
//! inside the floor holder's IPUs. Voiced frames come from a per-speaker
//! Markov chain over non-silence units with self-loops, so runs of repeated
//! units occur inside speech as well as in silence.
//!
//! Durations are Gaussian, rounded to whole frames and truncated at one
//! frame. The default constants are synthetic and not fitted to any
//! recorded corpus.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::DialogueRecord;
use crate::metrics::{record_events, summarize, EventKind, Summary, VadConfig};
use crate::tokens::{
    chunk_streams, deduplicate, flatten, CodecError, Padding, Speaker, Token, TokenStream, Vocab,
};

/// Minimum silence kept between two IPUs of the same speaker when the floor
/// comes back to them; matches the default IPU merge threshold.
pub const OWN_GAP_MS: u32 = 200;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid style: {0}")]
    InvalidStyle(String),
    #[error("duration {duration_ms} ms is not a multiple of the {frame_ms} ms frame")]
    BadDuration { duration_ms: u64, frame_ms: u32 },
    #[error("turn {0} has an empty utterance")]
    EmptyUtterance(usize),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("cannot read style file {path}: {message}")]
    StyleFile { path: String, message: String },
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gaussian {
    pub mean: f64,
    pub std: f64,
}

impl Gaussian {
    pub const fn new(mean: f64, std: f64) -> Self {
        Gaussian { mean, std }
    }

    fn check(&self, name: &str, positive_mean: bool) -> Result<(), SynthError> {
        if !self.mean.is_finite() || !self.std.is_finite() || self.std < 0.0 {
            return Err(SynthError::InvalidStyle(format!(
                "{name}: mean and std must be finite with std >= 0"
            )));
        }
        if positive_mean && self.mean <= 0.0 {
            return Err(SynthError::InvalidStyle(format!("{name}: mean must be positive")));
        }
        Ok(())
    }

    fn normal(&self) -> Normal<f64> {
        Normal::new(self.mean, self.std).expect("validated parameters")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContentConfig {
    /// Distinct non-silence units each speaker draws from.
    pub units: u32,
    /// Non-self successors per unit.
    pub branching: u32,
    /// Probability of repeating the current unit on the next frame.
    pub p_self: f64,
    /// Seed for the chains' structure (not for the dialogues).
    pub seed: u64,
}

impl Default for ContentConfig {
    fn default() -> Self {
        ContentConfig {
            units: 100,
            branching: 3,
            p_self: 0.5,
            seed: 7,
        }
    }
}

/// Turn-taking and content parameters. Loaded from TOML; every key is
/// optional and falls back to [`DialogueStyle::default`].
///
/// ```toml
/// frame_ms = 40
/// vocab = 501
/// silence_token = 0
/// hold_prob = 0.4          # after an IPU: pause and keep the floor
/// backchannel_prob = 0.15  # per floor-holder IPU
/// ipu_ms = { mean = 1200.0, std = 400.0 }
/// pause_ms = { mean = 600.0, std = 120.0 }
/// fto_ms = { mean = 200.0, std = 200.0 }
/// backchannel_ms = { mean = 240.0, std = 80.0 }
/// [content]
/// units = 100
/// branching = 3
/// p_self = 0.5
/// seed = 7
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DialogueStyle {
    pub frame_ms: u32,
    pub vocab: u32,
    pub silence_token: Token,
    pub ipu_ms: Gaussian,
    pub pause_ms: Gaussian,
    pub fto_ms: Gaussian,
    pub hold_prob: f64,
    pub backchannel_prob: f64,
    pub backchannel_ms: Gaussian,
    pub content: ContentConfig,
}

impl Default for DialogueStyle {
    fn default() -> Self {
        DialogueStyle {
            frame_ms: 40,
            vocab: 501,
            silence_token: 0,
            ipu_ms: Gaussian::new(1200.0, 400.0),
            pause_ms: Gaussian::new(600.0, 120.0),
            fto_ms: Gaussian::new(200.0, 200.0),
            hold_prob: 0.4,
            backchannel_prob: 0.15,
            backchannel_ms: Gaussian::new(240.0, 80.0),
            content: ContentConfig::default(),
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<(), SynthError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(SynthError::InvalidStyle(format!("{name} must be in [0, 1], got {p}")))
    }
}

impl DialogueStyle {
    pub fn from_toml_str(s: &str) -> Result<Self, SynthError> {
        let style: DialogueStyle =
            toml::from_str(s).map_err(|e| SynthError::InvalidStyle(e.to_string()))?;
        style.validate()?;
        Ok(style)
    }

    pub fn from_file(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|e| SynthError::StyleFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("style serializes")
    }

    pub fn vocab(&self) -> Result<Vocab, SynthError> {
        Ok(Vocab::new(self.vocab, self.frame_ms, vec![self.silence_token])?)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        self.vocab()?;
        self.ipu_ms.check("ipu_ms", true)?;
        self.pause_ms.check("pause_ms", true)?;
        self.fto_ms.check("fto_ms", false)?;
        self.backchannel_ms.check("backchannel_ms", true)?;
        check_prob("hold_prob", self.hold_prob)?;
        check_prob("backchannel_prob", self.backchannel_prob)?;
        let c = &self.content;
        if !(0.0..1.0).contains(&c.p_self) {
            return Err(SynthError::InvalidStyle(format!(
                "content.p_self must be in [0, 1), got {}",
                c.p_self
            )));
        }
        if c.units == 0 || c.units > self.vocab - 1 {
            return Err(SynthError::InvalidStyle(format!(
                "content.units must be in [1, {}]",
                self.vocab - 1
            )));
        }
        if c.branching == 0 {
            return Err(SynthError::InvalidStyle("content.branching must be positive".into()));
        }
        Ok(())
    }

    pub fn content_model(&self) -> ContentModel {
        ContentModel::new(self)
    }
}

/// Markov chain over a speaker's units: stay with probability `p_self`,
/// otherwise move to one of the unit's successors uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    units: Vec<Token>,
    successors: Vec<Vec<usize>>,
    p_self: f64,
}

impl MarkovChain {
    fn build(units: Vec<Token>, branching: usize, p_self: f64, rng: &mut ChaCha8Rng) -> Self {
        let n = units.len();
        let b = branching.min(n.saturating_sub(1));
        let successors = (0..n)
            .map(|i| {
                let mut picked: Vec<usize> = Vec::with_capacity(b);
                while picked.len() < b {
                    let j = rng.random_range(0..n);
                    if j != i && !picked.contains(&j) {
                        picked.push(j);
                    }
                }
                picked
            })
            .collect();
        MarkovChain {
            units,
            successors,
            p_self,
        }
    }

    pub fn units(&self) -> &[Token] {
        &self.units
    }

    /// Transition probability between unit indices.
    pub fn transition_prob(&self, from: usize, to: usize) -> f64 {
        let succ = &self.successors[from];
        if succ.is_empty() {
            return if from == to { 1.0 } else { 0.0 };
        }
        if from == to {
            self.p_self
        } else if succ.contains(&to) {
            (1.0 - self.p_self) / succ.len() as f64
        } else {
            0.0
        }
    }

    fn step(&self, state: usize, rng: &mut ChaCha8Rng) -> usize {
        let succ = &self.successors[state];
        if succ.is_empty() || rng.random::<f64>() < self.p_self {
            state
        } else {
            succ[rng.random_range(0..succ.len())]
        }
    }
}

/// One chain per speaker over the same unit pool.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentModel {
    chains: [MarkovChain; 2],
}

impl ContentModel {
    fn new(style: &DialogueStyle) -> Self {
        let c = &style.content;
        let pool: Vec<Token> = (0..style.vocab)
            .filter(|&t| t != style.silence_token)
            .take(c.units as usize)
            .collect();
        let chain = |speaker: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
            rng.set_stream(speaker + 1);
            MarkovChain::build(pool.clone(), c.branching as usize, c.p_self, &mut rng)
        };
        ContentModel {
            chains: [chain(0), chain(1)],
        }
    }

    pub fn chain(&self, speaker: Speaker) -> &MarkovChain {
        &self.chains[speaker.index()]
    }
}

/// Per-speaker unit emitter that keeps its chain state across IPUs.
struct Voice<'a> {
    chain: &'a MarkovChain,
    state: Option<usize>,
}

impl Voice<'_> {
    fn emit(&mut self, rng: &mut ChaCha8Rng) -> Token {
        let next = match self.state {
            None => rng.random_range(0..self.chain.units.len()),
            Some(s) => self.chain.step(s, rng),
        };
        self.state = Some(next);
        self.chain.units[next]
    }
}

fn frames(g: &Gaussian, frame_ms: u32, rng: &mut ChaCha8Rng) -> i64 {
    (g.normal().sample(rng) / frame_ms as f64).round() as i64
}

fn positive_frames(g: &Gaussian, frame_ms: u32, rng: &mut ChaCha8Rng) -> i64 {
    frames(g, frame_ms, rng).max(1)
}

/// RNG for dialogue `index` of a corpus generated with `seed`.
pub fn dialogue_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Span {
    speaker: usize,
    start: i64,
    end: i64,
}

fn check_duration(style: &DialogueStyle, duration_ms: u64) -> Result<usize, SynthError> {
    style.validate()?;
    if !duration_ms.is_multiple_of(style.frame_ms as u64) {
        return Err(SynthError::BadDuration {
            duration_ms,
            frame_ms: style.frame_ms,
        });
    }
    Ok((duration_ms / style.frame_ms as u64) as usize)
}

pub fn generate_dialogue(
    style: &DialogueStyle,
    duration_ms: u64,
    seed: u64,
) -> Result<(TokenStream, TokenStream), SynthError> {
    let total = check_duration(style, duration_ms)?;
    let content = style.content_model();
    Ok(generate_with(style, &content, total, &mut dialogue_rng(seed, 0)))
}

fn generate_with(
    style: &DialogueStyle,
    content: &ContentModel,
    total: usize,
    rng: &mut ChaCha8Rng,
) -> (TokenStream, TokenStream) {
    let f = style.frame_ms;
    let total_i = total as i64;
    let guard = (OWN_GAP_MS as i64 + f as i64 - 1) / f as i64;

    let mut spans: Vec<Span> = Vec::new();
    if total > 0 {
        let mut speaker = usize::from(rng.random::<bool>());
        let mut start = 0i64;
        let mut last_end: [Option<i64>; 2] = [None, None];
        while start < total_i {
            let end = start + positive_frames(&style.ipu_ms, f, rng);
            spans.push(Span {
                speaker,
                start,
                end,
            });
            last_end[speaker] = Some(end);
            if end >= total_i {
                break;
            }
            if rng.random::<f64>() < style.hold_prob {
                start = end + positive_frames(&style.pause_ms, f, rng);
            } else {
                let next = 1 - speaker;
                let mut s = (end + frames(&style.fto_ms, f, rng)).max(start + 1);
                if let Some(e) = last_end[next] {
                    s = s.max(e + guard);
                }
                speaker = next;
                start = s;
            }
        }
    }

    let mut backchannels: Vec<Span> = Vec::new();
    for y in spans.clone() {
        if rng.random::<f64>() >= style.backchannel_prob {
            continue;
        }
        let len = positive_frames(&style.backchannel_ms, f, rng);
        let room = y.end - y.start - len - 1;
        if room < 1 {
            continue;
        }
        let start = y.start + rng.random_range(1..=room);
        let x = Span {
            speaker: 1 - y.speaker,
            start,
            end: start + len,
        };
        if x.start >= total_i {
            continue;
        }
        let clear = spans
            .iter()
            .chain(&backchannels)
            .filter(|s| s.speaker == x.speaker)
            .all(|s| s.end + guard <= x.start || x.end + guard <= s.start);
        if clear {
            backchannels.push(x);
        }
    }
    spans.extend(backchannels);
    spans.sort_by_key(|s| (s.start, s.speaker));

    let mut channels = [vec![style.silence_token; total], vec![style.silence_token; total]];
    let mut voices = [
        Voice {
            chain: content.chain(Speaker::S0),
            state: None,
        },
        Voice {
            chain: content.chain(Speaker::S1),
            state: None,
        },
    ];
    for s in &spans {
        for t in s.start..s.end.min(total_i) {
            channels[s.speaker][t as usize] = voices[s.speaker].emit(rng);
        }
    }
    let [c0, c1] = channels;
    (
        TokenStream {
            speaker: Speaker::S0,
            tokens: c0,
        },
        TokenStream {
            speaker: Speaker::S1,
            tokens: c1,
        },
    )
}

/// Dialogues with their generating style and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub records: Vec<DialogueRecord>,
    pub style: DialogueStyle,
    pub seed: u64,
}

pub fn dialogue_id(index: usize) -> String {
    format!("dlg-{index:05}")
}

/// `count` dialogues; dialogue `i` uses RNG stream `i`, so the result does
/// not depend on how generation is scheduled across threads.
pub fn generate_corpus(
    style: &DialogueStyle,
    count: usize,
    duration_ms: u64,
    seed: u64,
) -> Result<Corpus, SynthError> {
    let total = check_duration(style, duration_ms)?;
    let vocab = style.vocab()?;
    let content = style.content_model();
    let records = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = dialogue_rng(seed, i as u64);
            let (s0, s1) = generate_with(style, &content, total, &mut rng);
            DialogueRecord::from_streams(dialogue_id(i), &vocab, &s0, &s1)
        })
        .collect();
    Ok(Corpus {
        records,
        style: style.clone(),
        seed,
    })
}

/// Lay out turn-based utterances on two channels: while one speaker talks,
/// the other channel holds silence of the same duration.
pub fn build_stage2_corpus(
    turns: &[(Speaker, Vec<Token>)],
    style: &DialogueStyle,
) -> Result<(TokenStream, TokenStream), SynthError> {
    let vocab = style.vocab()?;
    let mut channels: [Vec<Token>; 2] = [Vec::new(), Vec::new()];
    for (i, (speaker, utt)) in turns.iter().enumerate() {
        if utt.is_empty() {
            return Err(SynthError::EmptyUtterance(i));
        }
        channels[speaker.index()].extend_from_slice(utt);
        channels[speaker.other().index()]
            .extend(std::iter::repeat_n(style.silence_token, utt.len()));
    }
    let [c0, c1] = channels;
    Ok((
        TokenStream::new(Speaker::S0, c0, &vocab)?,
        TokenStream::new(Speaker::S1, c1, &vocab)?,
    ))
}

/// Turn-based dialogue: alternating utterances with IPU-distributed lengths,
/// back to back, with no overlaps or backchannels.
pub fn generate_stage2_dialogue(
    style: &DialogueStyle,
    content: &ContentModel,
    duration_ms: u64,
    rng: &mut ChaCha8Rng,
) -> Result<(TokenStream, TokenStream), SynthError> {
    let total = check_duration(style, duration_ms)?;
    let mut voices = [
        Voice {
            chain: content.chain(Speaker::S0),
            state: None,
        },
        Voice {
            chain: content.chain(Speaker::S1),
            state: None,
        },
    ];
    let mut speaker = if rng.random::<bool>() { Speaker::S1 } else { Speaker::S0 };
    let mut turns = Vec::new();
    let mut used = 0usize;
    while used < total {
        let len = (positive_frames(&style.ipu_ms, style.frame_ms, rng) as usize).min(total - used);
        let utt: Vec<Token> = (0..len).map(|_| voices[speaker.index()].emit(rng)).collect();
        turns.push((speaker, utt));
        used += len;
        speaker = speaker.other();
    }
    build_stage2_corpus(&turns, style)
}

pub fn generate_stage2_corpus(
    style: &DialogueStyle,
    count: usize,
    duration_ms: u64,
    seed: u64,
) -> Result<Corpus, SynthError> {
    check_duration(style, duration_ms)?;
    let vocab = style.vocab()?;
    let content = style.content_model();
    let records = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = dialogue_rng(seed, i as u64);
            let (s0, s1) = generate_stage2_dialogue(style, &content, duration_ms, &mut rng)?;
            Ok(DialogueRecord::from_streams(dialogue_id(i), &vocab, &s0, &s1))
        })
        .collect::<Result<Vec<_>, SynthError>>()?;
    Ok(Corpus {
        records,
        style: style.clone(),
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsConfig {
    pub vad: VadConfig,
    pub ipu_gap_ms: u64,
    /// Chunk size used for the wire-length ratio.
    pub chunk_ms: u32,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            vad: VadConfig::default(),
            ipu_gap_ms: 200,
            chunk_ms: 160,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub dialogues: usize,
    pub ipu: Option<Summary>,
    pub pause: Option<Summary>,
    pub fto: Option<Summary>,
    pub total_frames: usize,
    /// Summed over both channels.
    pub voiced_frames: usize,
    /// Frames where both channels are voiced.
    pub overlap_frames: usize,
    /// Novel units at voiced frames per voiced frame: the per-second-of-speech
    /// token rate after deduplication relative to the raw rate.
    pub speech_dedup_ratio: f64,
    /// Wire length after deduplication over the raw interleaved length (both
    /// tags in every chunk), at `chunk_ms`.
    pub wire_ratio: f64,
    /// Novel units per second per channel, averaged over channels.
    pub dedup_tokens_per_second: f64,
    pub raw_tokens_per_second: f64,
}

impl CorpusStats {
    pub fn summary(&self, kind: EventKind) -> Option<&Summary> {
        match kind {
            EventKind::Ipu => self.ipu.as_ref(),
            EventKind::Pause => self.pause.as_ref(),
            EventKind::Fto => self.fto.as_ref(),
        }
    }
}

pub fn corpus_stats(records: &[DialogueRecord], cfg: &StatsConfig) -> Result<CorpusStats, SynthError> {
    if records.is_empty() {
        return Err(SynthError::EmptyCorpus);
    }
    struct Partial {
        events: Vec<(EventKind, f64)>,
        frames: usize,
        voiced: usize,
        overlap: usize,
        novel_voiced: usize,
        novel_all: usize,
        wire: usize,
        raw_wire: usize,
        frame_ms: u32,
    }
    let parts = records
        .par_iter()
        .map(|rec| -> Result<Partial, SynthError> {
            let (vocab, s0, s1) = rec.streams()?;
            let ev = record_events(rec, &cfg.vad, cfg.ipu_gap_ms);
            let mut p = Partial {
                events: ev.events.iter().map(|e| (e.kind, e.duration_ms as f64)).collect(),
                frames: rec.num_frames(),
                voiced: 0,
                overlap: 0,
                novel_voiced: 0,
                novel_all: 0,
                wire: 0,
                raw_wire: 0,
                frame_ms: vocab.frame_ms(),
            };
            for ch in [&s0.tokens, &s1.tokens] {
                let mut prev = None;
                for &t in ch {
                    let voiced = !vocab.is_silence(t);
                    p.voiced += usize::from(voiced);
                    if prev != Some(t) {
                        p.novel_all += 1;
                        p.novel_voiced += usize::from(voiced);
                    }
                    prev = Some(t);
                }
            }
            p.overlap = s0
                .tokens
                .iter()
                .zip(&s1.tokens)
                .filter(|(a, b)| !vocab.is_silence(**a) && !vocab.is_silence(**b))
                .count();
            let chunked = chunk_streams(&s0, &s1, &vocab, cfg.chunk_ms, Padding::Pad)?;
            p.wire = flatten(&deduplicate(&chunked)).len();
            p.raw_wire = 2 * chunked.num_frames() + 2 * chunked.num_chunks();
            Ok(p)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let pick = |kind: EventKind| -> Option<Summary> {
        let xs: Vec<f64> = parts
            .iter()
            .flat_map(|p| p.events.iter().filter(|e| e.0 == kind).map(|e| e.1))
            .collect();
        summarize(&xs)
    };
    let sum = |f: fn(&Partial) -> usize| parts.iter().map(f).sum::<usize>();
    let total_frames = sum(|p| p.frames);
    let voiced = sum(|p| p.voiced);
    let seconds: f64 = parts.iter().map(|p| p.frames as f64 * p.frame_ms as f64 / 1000.0).sum();
    let frame_ms = parts[0].frame_ms as f64;
    Ok(CorpusStats {
        dialogues: records.len(),
        ipu: pick(EventKind::Ipu),
        pause: pick(EventKind::Pause),
        fto: pick(EventKind::Fto),
        total_frames,
        voiced_frames: voiced,
        overlap_frames: sum(|p| p.overlap),
        speech_dedup_ratio: if voiced > 0 {
            sum(|p| p.novel_voiced) as f64 / voiced as f64
        } else {
            0.0
        },
        wire_ratio: sum(|p| p.wire) as f64 / sum(|p| p.raw_wire).max(1) as f64,
        dedup_tokens_per_second: if seconds > 0.0 {
            sum(|p| p.novel_all) as f64 / 2.0 / seconds
        } else {
            0.0
        },
        raw_tokens_per_second: 1000.0 / frame_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_duration_gives_empty_streams() {
        let (a, b) = generate_dialogue(&DialogueStyle::default(), 0, 1).unwrap();
        assert!(a.is_empty() && b.is_empty());
    }

    #[test]
    fn bad_duration_rejected() {
        assert!(matches!(
            generate_dialogue(&DialogueStyle::default(), 1010, 1),
            Err(SynthError::BadDuration { .. })
        ));
    }

    #[test]
    fn channels_have_requested_length() {
        let (a, b) = generate_dialogue(&DialogueStyle::default(), 20_000, 5).unwrap();
        assert_eq!(a.len(), 500);
        assert_eq!(b.len(), 500);
        assert!(a.tokens.iter().chain(&b.tokens).all(|&t| t < 501));
    }

    #[test]
    fn positive_fto_without_backchannels_never_overlaps() {
        let style = DialogueStyle {
            backchannel_prob: 0.0,
            fto_ms: Gaussian::new(800.0, 100.0),
            ..Default::default()
        };
        for seed in 0..20 {
            let (a, b) = generate_dialogue(&style, 30_000, seed).unwrap();
            let overlap = a.tokens.iter().zip(&b.tokens).filter(|(x, y)| **x != 0 && **y != 0).count();
            assert_eq!(overlap, 0, "seed {seed}");
        }
    }

    #[test]
    fn stage2_layout() {
        let style = DialogueStyle::default();
        let (a, b) = build_stage2_corpus(&[(Speaker::S0, (1..=10).collect())], &style).unwrap();
        assert_eq!(a.tokens, (1..=10).collect::<Vec<_>>());
        assert_eq!(b.tokens, vec![0; 10]);

        let (a, b) = build_stage2_corpus(&[], &style).unwrap();
        assert!(a.is_empty() && b.is_empty());

        let turns = vec![
            (Speaker::S0, vec![1, 2, 3, 4, 5]),
            (Speaker::S1, vec![6, 7, 8, 9, 10]),
            (Speaker::S0, vec![11, 12, 13, 14, 15]),
        ];
        let (a, b) = build_stage2_corpus(&turns, &style).unwrap();
        assert_eq!((a.len(), b.len()), (15, 15));
        assert!(a.tokens.iter().zip(&b.tokens).all(|(x, y)| *x == 0 || *y == 0));

        assert!(matches!(
            build_stage2_corpus(&[(Speaker::S1, vec![])], &style),
            Err(SynthError::EmptyUtterance(0))
        ));
    }

    #[test]
    fn style_toml_round_trip_and_validation() {
        let style = DialogueStyle::default();
        let back = DialogueStyle::from_toml_str(&style.to_toml_string()).unwrap();
        assert_eq!(back, style);
        let partial = DialogueStyle::from_toml_str("hold_prob = 0.1\n[fto_ms]\nmean = -100.0\nstd = 50.0\n").unwrap();
        assert_eq!(partial.hold_prob, 0.1);
        assert_eq!(partial.fto_ms.mean, -100.0);
        assert_eq!(partial.ipu_ms, style.ipu_ms);
        assert!(DialogueStyle::from_toml_str("bogus = 1").is_err());
        assert!(DialogueStyle::from_toml_str("hold_prob = 1.5").is_err());
        assert!(DialogueStyle::from_toml_str("[ipu_ms]\nmean = -1.0\nstd = 1.0").is_err());
        assert!(DialogueStyle::from_toml_str("[content]\np_self = 1.0").is_err());
    }

    #[test]
    fn chain_rows_sum_to_one() {
        let model = DialogueStyle::default().content_model();
        let chain = model.chain(Speaker::S1);
        let n = chain.units().len();
        for from in 0..n {
            let total: f64 = (0..n).map(|to| chain.transition_prob(from, to)).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        assert!(!chain.units().contains(&0));
    }

    #[test]
    fn corpus_generation_is_schedule_independent() {
        let style = DialogueStyle::default();
        let corpus = generate_corpus(&style, 4, 10_000, 42).unwrap();
        for (i, rec) in corpus.records.iter().enumerate() {
            let content = style.content_model();
            let (a, b) = generate_with(&style, &content, 250, &mut dialogue_rng(42, i as u64));
            assert_eq!(rec.channels, [a.tokens, b.tokens]);
        }
    }

    #[test]
    fn stats_on_empty_corpus_fail() {
        assert!(matches!(
            corpus_stats(&[], &StatsConfig::default()),
            Err(SynthError::EmptyCorpus)
        ));
    }

    #[test]
    fn stage2_corpus_has_no_overlap() {
        let corpus = generate_stage2_corpus(&DialogueStyle::default(), 5, 20_000, 3).unwrap();
        let stats = corpus_stats(&corpus.records, &StatsConfig::default()).unwrap();
        assert_eq!(stats.overlap_frames, 0);
        assert!(stats.voiced_frames > 0);
    }
}
