//! Chunk-synchronous two-speaker token dialogues.
//!
//! Two full-rate token streams are cut into fixed-duration chunks, run-length
//! reduced, and interleaved behind speaker tags into one sequence a next-token
//! model can learn. The crate also has a smoothed n-gram model over that
//! sequence, a latency-tolerant interaction loop, a synthetic dialogue
//! generator and turn-taking/perplexity evaluation.

pub mod cli;
pub mod corpus;
pub mod interaction;
pub mod metrics;
pub mod predictor;
pub mod synth;
pub mod tokens;

pub use corpus::{read_corpus, write_corpus, DialogueRecord};
pub use interaction::{
    continue_dialogue, continue_teacher_forced, estimate_user_chunk, simulate_interaction,
    GenerationConfig, InteractionConfig, InteractionTranscript, OverflowPolicy, UserSource,
};
pub use metrics::{correlation_report, median_perplexity, pearson, turn_events, vad};
pub use predictor::{NgramModel, Predictor, Sampler, SamplerConfig};
pub use synth::{generate_corpus, generate_dialogue, DialogueStyle};
pub use tokens::{
    chunk_streams, deduplicate, flatten, interpolate, parse, ChunkedDialogue, CodecError,
    DedupChunk, DedupDialogue, Padding, Speaker, Token, TokenStream, Vocab,
};
