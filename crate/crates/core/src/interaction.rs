//! Generation over the chunked wire format, and the latency-tolerant
//! two-agent interaction loop.
//!
//! Decoding is constrained to the wire grammar: a chunk opens with `[S0]`,
//! channel-0 units follow, then optionally `[S1]` with at least one
//! channel-1 unit. A unit equal to the channel's previous unit is never
//! allowed (it would not be novel). When a side reaches chunk capacity the
//! overflow policy decides between forcing the next tag and failing.
//!
//! In the interaction loop the model speaks on channel 0 and the user on
//! channel 1. With a latency of `L` chunks, the model generating its chunk
//! `k` has seen the user's real chunks only up to `k - L - 1`. It fills the
//! gap `[k - L, k)` with its own estimates of the user's side, generates
//! chunk `k`, then drops the estimates. Real user chunks replace them as
//! they arrive.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predictor::{ModelError, Predictor, Sampler, SamplerConfig};
use crate::tokens::{
    flatten, last_units, parse, CodecError, DedupChunk, DedupDialogue, Speaker, Token, Vocab,
};

#[derive(Debug, Error)]
pub enum InteractionError {
    #[error("chunk {chunk} channel {channel} exceeded its capacity of {capacity} units")]
    ChunkOverflow {
        chunk: usize,
        channel: u8,
        capacity: usize,
    },
    #[error("model produced no grammatical continuation: {0}")]
    MalformedGeneration(String),
    #[error("scripted user provides {available} chunks, {needed} are required")]
    SourceExhausted { needed: usize, available: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T, E = InteractionError> = std::result::Result<T, E>;

/// What to do when a side produces more units than its chunk has frames.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverflowPolicy {
    /// Discard the extra unit and force the next tag.
    #[default]
    Truncate,
    Error,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub sampler: SamplerConfig,
    pub overflow_policy: OverflowPolicy,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Units discarded by [`OverflowPolicy::Truncate`].
    pub overflow_truncations: usize,
    pub draws: u64,
}

struct Decoder<'a> {
    model: &'a dyn Predictor,
    vocab: &'a Vocab,
    capacity: usize,
    policy: OverflowPolicy,
    truncations: usize,
}

impl<'a> Decoder<'a> {
    fn new(model: &'a dyn Predictor, vocab: &'a Vocab, chunk_ms: u32, policy: OverflowPolicy) -> Result<Self> {
        if model.vocab_ext() != vocab.extended_size() {
            return Err(InteractionError::InvalidConfig(format!(
                "model covers {} ids, vocabulary needs {}",
                model.vocab_ext(),
                vocab.extended_size()
            )));
        }
        Ok(Decoder {
            model,
            vocab,
            capacity: vocab.frames_per_chunk(chunk_ms)?,
            policy,
            truncations: 0,
        })
    }

    fn draw(&self, sampler: &mut Sampler, ctx: &[Token], allowed: &dyn Fn(Token) -> bool) -> Result<Token> {
        let dist = self.model.next_dist(ctx);
        sampler.sample(&dist, allowed).ok_or_else(|| {
            InteractionError::MalformedGeneration("no grammatical token has probability mass".into())
        })
    }

    /// `ctx` ends with the chunk's `[S0]`. Appends channel-0 units to `ctx`
    /// and returns them with the tag that closed the side.
    fn side0(
        &mut self,
        ctx: &mut Vec<Token>,
        last: &mut Option<Token>,
        sampler: &mut Sampler,
        chunk: usize,
    ) -> Result<(Vec<Token>, Token)> {
        let (s0, s1) = (self.vocab.tag_s0(), self.vocab.tag_s1());
        let size = self.vocab.size();
        let mut out = Vec::new();
        loop {
            let prev = *last;
            let t = self.draw(sampler, ctx, &|t| t == s0 || t == s1 || (t < size && Some(t) != prev))?;
            if t >= size {
                return Ok((out, t));
            }
            if out.len() == self.capacity {
                self.overflow(chunk, 0)?;
                let tag = self.draw(sampler, ctx, &|t| t == s0 || t == s1)?;
                return Ok((out, tag));
            }
            ctx.push(t);
            out.push(t);
            *last = Some(t);
        }
    }

    /// `ctx` ends with `[S1]`. Appends at least one channel-1 unit.
    fn side1(
        &mut self,
        ctx: &mut Vec<Token>,
        last: &mut Option<Token>,
        sampler: &mut Sampler,
        chunk: usize,
    ) -> Result<Vec<Token>> {
        let s0 = self.vocab.tag_s0();
        let size = self.vocab.size();
        let mut out = Vec::new();
        loop {
            let prev = *last;
            let may_close = !out.is_empty();
            let t = self.draw(sampler, ctx, &|t| (may_close && t == s0) || (t < size && Some(t) != prev))?;
            if t == s0 {
                return Ok(out);
            }
            if out.len() == self.capacity {
                self.overflow(chunk, 1)?;
                return Ok(out);
            }
            ctx.push(t);
            out.push(t);
            *last = Some(t);
        }
    }

    /// `ctx` ends after the chunk's channel-0 units. Chooses between closing
    /// the chunk and opening channel 1; appends `[S1]` and the units if any.
    fn user_side(
        &mut self,
        ctx: &mut Vec<Token>,
        last: &mut Option<Token>,
        sampler: &mut Sampler,
        chunk: usize,
    ) -> Result<Vec<Token>> {
        let (s0, s1) = (self.vocab.tag_s0(), self.vocab.tag_s1());
        let tag = self.draw(sampler, ctx, &|t| t == s0 || t == s1)?;
        if tag == s0 {
            return Ok(Vec::new());
        }
        ctx.push(s1);
        self.side1(ctx, last, sampler, chunk)
    }

    fn overflow(&mut self, chunk: usize, channel: u8) -> Result<()> {
        match self.policy {
            OverflowPolicy::Error => Err(InteractionError::ChunkOverflow {
                chunk,
                channel,
                capacity: self.capacity,
            }),
            OverflowPolicy::Truncate => {
                self.truncations += 1;
                Ok(())
            }
        }
    }
}

/// A generated dialogue (prompt chunks included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generated {
    pub dialogue: DedupDialogue,
    pub prompt_chunks: usize,
    pub diagnostics: Diagnostics,
}

fn check_prompt(model: &dyn Predictor, prompt: &DedupDialogue, cfg: &GenerationConfig) -> Result<Vec<Token>> {
    cfg.sampler.validate(model.vocab_ext())?;
    let wire = flatten(prompt);
    parse(&wire, &prompt.vocab, prompt.chunk_ms)?;
    Ok(wire)
}

/// Extend `prompt` by `n_chunks` chunks, generating both channels.
pub fn continue_dialogue(
    model: &dyn Predictor,
    prompt: &DedupDialogue,
    n_chunks: usize,
    cfg: &GenerationConfig,
) -> Result<Generated> {
    if n_chunks == 0 {
        return Err(InteractionError::InvalidConfig("n_chunks must be at least 1".into()));
    }
    let mut ctx = check_prompt(model, prompt, cfg)?;
    let vocab = &prompt.vocab;
    let mut dec = Decoder::new(model, vocab, prompt.chunk_ms, cfg.overflow_policy)?;
    let mut sampler = Sampler::new(cfg.sampler);
    let [mut last0, mut last1] = last_units(&ctx, vocab);
    let mut dialogue = prompt.clone();
    for k in prompt.len()..prompt.len() + n_chunks {
        ctx.push(vocab.tag_s0());
        let (s0, tag) = dec.side0(&mut ctx, &mut last0, &mut sampler, k)?;
        let s1 = if tag == vocab.tag_s1() {
            ctx.push(tag);
            dec.side1(&mut ctx, &mut last1, &mut sampler, k)?
        } else {
            Vec::new()
        };
        dialogue.chunks.push(DedupChunk::new(s0, s1));
    }
    Ok(Generated {
        dialogue,
        prompt_chunks: prompt.len(),
        diagnostics: Diagnostics {
            overflow_truncations: dec.truncations,
            draws: sampler.draws(),
        },
    })
}

fn check_user_chunk(chunk: &[Token], vocab: &Vocab, capacity: usize, index: usize) -> Result<()> {
    if chunk.len() > capacity {
        return Err(CodecError::ChunkOverflow {
            chunk: index,
            channel: 1,
            count: chunk.len(),
            capacity,
        }
        .into());
    }
    if let Some(&t) = chunk.iter().find(|&&t| !vocab.is_unit(t)) {
        return Err(CodecError::TokenOutOfRange {
            token: t,
            position: index,
            size: vocab.size(),
        }
        .into());
    }
    Ok(())
}

/// Continuation where channel 1 is supplied (one entry per new chunk) and
/// only channel 0 is generated.
pub fn continue_teacher_forced(
    model: &dyn Predictor,
    prompt: &DedupDialogue,
    user_chunks: &[Vec<Token>],
    cfg: &GenerationConfig,
) -> Result<Generated> {
    let mut ctx = check_prompt(model, prompt, cfg)?;
    let vocab = &prompt.vocab;
    let mut dec = Decoder::new(model, vocab, prompt.chunk_ms, cfg.overflow_policy)?;
    let mut sampler = Sampler::new(cfg.sampler);
    let [mut last0, _] = last_units(&ctx, vocab);
    let mut dialogue = prompt.clone();
    for (i, user) in user_chunks.iter().enumerate() {
        let k = prompt.len() + i;
        check_user_chunk(user, vocab, dec.capacity, k)?;
        ctx.push(vocab.tag_s0());
        let (s0, _) = dec.side0(&mut ctx, &mut last0, &mut sampler, k)?;
        if !user.is_empty() {
            ctx.push(vocab.tag_s1());
            ctx.extend_from_slice(user);
        }
        dialogue.chunks.push(DedupChunk::new(s0, user.clone()));
    }
    Ok(Generated {
        dialogue,
        prompt_chunks: prompt.len(),
        diagnostics: Diagnostics {
            overflow_truncations: dec.truncations,
            draws: sampler.draws(),
        },
    })
}

/// Predict channel 1 of the current chunk. `context` must end inside a
/// channel-0 section (after the chunk's `[S0]` and its units).
pub fn estimate_user_chunk(
    model: &dyn Predictor,
    context: &[Token],
    vocab: &Vocab,
    chunk_ms: u32,
    sampler: &mut Sampler,
    policy: OverflowPolicy,
) -> Result<Vec<Token>> {
    let last_tag = context.iter().rev().find(|&&t| !vocab.is_unit(t));
    if last_tag != Some(&vocab.tag_s0()) {
        return Err(InteractionError::InvalidConfig(
            "context must end inside a speaker-0 section".into(),
        ));
    }
    let mut dec = Decoder::new(model, vocab, chunk_ms, policy)?;
    let [_, mut last1] = last_units(context, vocab);
    let mut ctx = context.to_vec();
    dec.user_side(&mut ctx, &mut last1, sampler, 0)
}

/// Where the user's side comes from.
pub enum UserSource<'a> {
    /// Channel-1 chunks indexed from the start of the dialogue.
    Scripted(Vec<Vec<Token>>),
    /// A second model, which sees the dialogue with the channels swapped and
    /// runs under the same latency.
    Model(&'a dyn Predictor),
}

impl UserSource<'_> {
    pub fn scripted_from(d: &DedupDialogue) -> UserSource<'static> {
        UserSource::Scripted(d.chunks.iter().map(|c| c.s1.clone()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionConfig {
    pub chunk_ms: u32,
    pub latency_chunks: usize,
    /// Chunks generated after the prompt.
    pub max_chunks: usize,
    pub sampler: SamplerConfig,
    pub overflow_policy: OverflowPolicy,
    /// Keep a copy of every context the model generated from.
    #[serde(default)]
    pub record_contexts: bool,
}

impl Default for InteractionConfig {
    fn default() -> Self {
        InteractionConfig {
            chunk_ms: 160,
            latency_chunks: 1,
            max_chunks: 188,
            sampler: SamplerConfig::default(),
            overflow_policy: OverflowPolicy::Truncate,
            record_contexts: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatedChunk {
    pub chunk: usize,
    pub tokens: Vec<Token>,
}

/// One generated chunk of the model's channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkRecord {
    pub index: usize,
    pub llm_chunk: Vec<Token>,
    pub user_actual: Vec<Token>,
    /// The estimate of this chunk's user side that the model used for its
    /// next chunk, if there was one.
    pub user_estimated: Option<Vec<Token>>,
    /// Real user chunks present in the context for this chunk (`0..n`).
    pub user_actual_in_context: usize,
    /// Estimated user chunks present in the context for this chunk.
    pub estimates: Vec<EstimatedChunk>,
    pub context_snapshot_len: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<Vec<Token>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionTranscript {
    pub config: InteractionConfig,
    pub seed: u64,
    pub prompt_chunks: usize,
    pub records: Vec<ChunkRecord>,
    pub dialogue: DedupDialogue,
    pub llm_diagnostics: Diagnostics,
    pub user_diagnostics: Option<Diagnostics>,
}

struct StepOutput {
    chunk: Vec<Token>,
    user_known: usize,
    estimates: Vec<EstimatedChunk>,
    context_len: usize,
    context: Option<Vec<Token>>,
}

/// One side of the interaction. Its context is the dialogue from its own
/// point of view: its own chunks on channel 0.
struct Agent<'a> {
    decoder: Decoder<'a>,
    sampler: Sampler,
    vocab: &'a Vocab,
    /// Wire tokens of chunks `0..committed` with real partner input.
    ctx: Vec<Token>,
    committed: usize,
    last: [Option<Token>; 2],
}

impl<'a> Agent<'a> {
    fn new(decoder: Decoder<'a>, sampler: Sampler, vocab: &'a Vocab) -> Self {
        Agent {
            decoder,
            sampler,
            vocab,
            ctx: Vec::new(),
            committed: 0,
            last: [None, None],
        }
    }

    fn push_own(&mut self, own: &[Token]) {
        self.ctx.push(self.vocab.tag_s0());
        self.ctx.extend_from_slice(own);
        if let Some(&t) = own.last() {
            self.last[0] = Some(t);
        }
    }

    fn commit(&mut self, own: &[Vec<Token>], partner: &[Vec<Token>], upto: usize) {
        for j in self.committed..upto {
            self.push_own(&own[j]);
            if !partner[j].is_empty() {
                self.ctx.push(self.vocab.tag_s1());
                self.ctx.extend_from_slice(&partner[j]);
                self.last[1] = partner[j].last().copied();
            }
        }
        self.committed = self.committed.max(upto);
    }

    /// Generate own chunk `k` knowing the partner's real chunks below
    /// `k - latency`.
    fn step(
        &mut self,
        own: &[Vec<Token>],
        partner: &[Vec<Token>],
        k: usize,
        latency: usize,
        record: bool,
    ) -> Result<StepOutput> {
        let user_known = k.saturating_sub(latency);
        self.commit(own, partner, user_known);
        let mark = self.ctx.len();
        let saved = self.last;

        let mut estimates = Vec::with_capacity(k - user_known);
        for (j, chunk) in own.iter().enumerate().take(k).skip(user_known) {
            self.push_own(chunk);
            let tokens = self
                .decoder
                .user_side(&mut self.ctx, &mut self.last[1], &mut self.sampler, j)?;
            estimates.push(EstimatedChunk { chunk: j, tokens });
        }
        self.ctx.push(self.vocab.tag_s0());
        let context_len = self.ctx.len();
        let context = record.then(|| self.ctx.clone());
        let (chunk, _) = self
            .decoder
            .side0(&mut self.ctx, &mut self.last[0], &mut self.sampler, k)?;

        self.ctx.truncate(mark);
        self.last = saved;
        Ok(StepOutput {
            chunk,
            user_known,
            estimates,
            context_len,
            context,
        })
    }

    fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            overflow_truncations: self.decoder.truncations,
            draws: self.sampler.draws(),
        }
    }
}

/// Run the model against a user source for `cfg.max_chunks` chunks after
/// `prompt`. The model's RNG is stream 0 of the sampler seed; a model user
/// draws from stream 1.
pub fn simulate_interaction(
    llm: &dyn Predictor,
    user: UserSource<'_>,
    prompt: &DedupDialogue,
    cfg: &InteractionConfig,
) -> Result<InteractionTranscript> {
    if cfg.chunk_ms != prompt.chunk_ms {
        return Err(InteractionError::InvalidConfig(format!(
            "configured chunk of {} ms differs from the prompt's {} ms",
            cfg.chunk_ms, prompt.chunk_ms
        )));
    }
    let vocab = &prompt.vocab;
    let gen_cfg = GenerationConfig {
        sampler: cfg.sampler,
        overflow_policy: cfg.overflow_policy,
    };
    check_prompt(llm, prompt, &gen_cfg)?;
    let p = prompt.len();
    let end = p + cfg.max_chunks;
    let capacity = vocab.frames_per_chunk(cfg.chunk_ms)?;

    let mut llm_agent = Agent::new(
        Decoder::new(llm, vocab, cfg.chunk_ms, cfg.overflow_policy)?,
        Sampler::with_stream(cfg.sampler, 0),
        vocab,
    );
    let mut user_agent = match &user {
        UserSource::Scripted(script) => {
            if script.len() < end {
                return Err(InteractionError::SourceExhausted {
                    needed: end,
                    available: script.len(),
                });
            }
            for (i, c) in script[p..end].iter().enumerate() {
                check_user_chunk(c, vocab, capacity, p + i)?;
            }
            None
        }
        UserSource::Model(m) => {
            cfg.sampler.validate(m.vocab_ext())?;
            Some(Agent::new(
                Decoder::new(*m, vocab, cfg.chunk_ms, cfg.overflow_policy)?,
                Sampler::with_stream(cfg.sampler, 1),
                vocab,
            ))
        }
    };

    let mut llm_side: Vec<Vec<Token>> = prompt.chunks.iter().map(|c| c.s0.clone()).collect();
    let mut user_side: Vec<Vec<Token>> = prompt.chunks.iter().map(|c| c.s1.clone()).collect();
    let mut records: Vec<ChunkRecord> = Vec::with_capacity(cfg.max_chunks);

    for k in p..end {
        let out = llm_agent.step(&llm_side, &user_side, k, cfg.latency_chunks, cfg.record_contexts)?;
        let actual = match (&user, user_agent.as_mut()) {
            (UserSource::Scripted(script), _) => script[k].clone(),
            (UserSource::Model(_), Some(agent)) => {
                agent.step(&user_side, &llm_side, k, cfg.latency_chunks, false)?.chunk
            }
            (UserSource::Model(_), None) => unreachable!("model user always has an agent"),
        };
        llm_side.push(out.chunk.clone());
        user_side.push(actual.clone());
        records.push(ChunkRecord {
            index: k,
            llm_chunk: out.chunk,
            user_actual: actual,
            user_estimated: None,
            user_actual_in_context: out.user_known,
            estimates: out.estimates,
            context_snapshot_len: out.context_len,
            context: out.context,
        });
    }

    // The estimate of chunk j first used is the one made when generating j + 1.
    for i in 0..records.len() {
        let index = records[i].index;
        let est = records
            .get(i + 1)
            .and_then(|next| next.estimates.iter().find(|e| e.chunk == index))
            .map(|e| e.tokens.clone());
        records[i].user_estimated = est;
    }

    let dialogue = DedupDialogue {
        vocab: vocab.clone(),
        chunk_ms: prompt.chunk_ms,
        chunks: llm_side
            .into_iter()
            .zip(user_side)
            .map(|(s0, s1)| DedupChunk::new(s0, s1))
            .collect(),
    };
    Ok(InteractionTranscript {
        config: cfg.clone(),
        seed: cfg.sampler.seed,
        prompt_chunks: p,
        records,
        dialogue,
        llm_diagnostics: llm_agent.diagnostics(),
        user_diagnostics: user_agent.as_ref().map(Agent::diagnostics),
    })
}

/// Which speaker a transcript's model played. Always channel 0.
pub const MODEL_SPEAKER: Speaker = Speaker::S0;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::NgramModel;
    use crate::tokens::interpolate;

    fn tiny_vocab() -> Vocab {
        Vocab::new(6, 40, vec![0]).unwrap()
    }

    fn prompt(v: &Vocab) -> DedupDialogue {
        DedupDialogue {
            vocab: v.clone(),
            chunk_ms: 160,
            chunks: vec![DedupChunk::new(vec![1, 2], vec![0]), DedupChunk::new(vec![3], vec![])],
        }
    }

    fn random_model(v: &Vocab) -> NgramModel {
        NgramModel::new(2, 1.0, v.extended_size()).unwrap()
    }

    #[test]
    fn continuation_has_exact_chunk_count_and_parses() {
        let v = tiny_vocab();
        let m = random_model(&v);
        for seed in 0..20 {
            let cfg = GenerationConfig {
                sampler: SamplerConfig::with_seed(seed),
                ..Default::default()
            };
            let g = continue_dialogue(&m, &prompt(&v), 7, &cfg).unwrap();
            assert_eq!(g.dialogue.len(), 9);
            let wire = flatten(&g.dialogue);
            assert_eq!(parse(&wire, &v, 160).unwrap(), g.dialogue);
            interpolate(&g.dialogue).unwrap();
        }
    }

    #[test]
    fn uniform_model_overflows_under_error_policy() {
        let v = tiny_vocab();
        let m = random_model(&v);
        let mut saw_overflow = false;
        for seed in 0..50 {
            let cfg = GenerationConfig {
                sampler: SamplerConfig::with_seed(seed),
                overflow_policy: OverflowPolicy::Error,
            };
            if let Err(InteractionError::ChunkOverflow { capacity, .. }) =
                continue_dialogue(&m, &prompt(&v), 20, &cfg)
            {
                assert_eq!(capacity, 4);
                saw_overflow = true;
            }
        }
        assert!(saw_overflow);
    }

    #[test]
    fn zero_chunks_rejected() {
        let v = tiny_vocab();
        assert!(matches!(
            continue_dialogue(&random_model(&v), &prompt(&v), 0, &GenerationConfig::default()),
            Err(InteractionError::InvalidConfig(_))
        ));
    }

    #[test]
    fn estimate_requires_channel0_position() {
        let v = tiny_vocab();
        let m = random_model(&v);
        let mut s = Sampler::new(SamplerConfig::default());
        let bad = [v.tag_s0(), 1, v.tag_s1(), 2];
        assert!(estimate_user_chunk(&m, &bad, &v, 160, &mut s, OverflowPolicy::Truncate).is_err());
        let good = [v.tag_s0(), 1, v.tag_s1(), 2, v.tag_s0(), 3];
        for _ in 0..100 {
            let est = estimate_user_chunk(&m, &good, &v, 160, &mut s, OverflowPolicy::Truncate).unwrap();
            assert!(est.len() <= 4);
            assert_ne!(est.first(), Some(&2));
            assert!(est.windows(2).all(|w| w[0] != w[1]));
        }
    }

    #[test]
    fn scripted_user_must_cover_the_run() {
        let v = tiny_vocab();
        let m = random_model(&v);
        let cfg = InteractionConfig {
            max_chunks: 5,
            ..Default::default()
        };
        let short = UserSource::Scripted(vec![vec![]; 4]);
        assert!(matches!(
            simulate_interaction(&m, short, &prompt(&v), &cfg),
            Err(InteractionError::SourceExhausted { needed: 7, available: 4 })
        ));
    }

    #[test]
    fn chunk_size_mismatch_rejected() {
        let v = tiny_vocab();
        let cfg = InteractionConfig {
            chunk_ms: 240,
            ..Default::default()
        };
        let m = random_model(&v);
        assert!(matches!(
            simulate_interaction(&m, UserSource::Model(&m), &prompt(&v), &cfg),
            Err(InteractionError::InvalidConfig(_))
        ));
    }
}
