//! JSON Lines dialogue corpora and flattened-sequence dumps.
//!
//! One dialogue per line:
//!
//! ```json
//! {"id":"dlg-00000","frame_ms":40,"vocab":501,"silence":[0],"channels":[[...],[...]]}
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokens::{
    chunk_streams, deduplicate, interpolate, CodecError, DedupDialogue, Padding, Speaker, Token, TokenStream,
    Vocab,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dialogue {id}: {source}")]
    Invalid {
        id: String,
        #[source]
        source: CodecError,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One corpus line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialogueRecord {
    pub id: String,
    pub frame_ms: u32,
    pub vocab: u32,
    pub silence: Vec<Token>,
    pub channels: [Vec<Token>; 2],
}

impl DialogueRecord {
    pub fn from_streams(id: impl Into<String>, vocab: &Vocab, s0: &TokenStream, s1: &TokenStream) -> Self {
        DialogueRecord {
            id: id.into(),
            frame_ms: vocab.frame_ms(),
            vocab: vocab.size(),
            silence: vocab.silence_tokens().to_vec(),
            channels: [s0.tokens.clone(), s1.tokens.clone()],
        }
    }

    pub fn vocab(&self) -> Result<Vocab, CodecError> {
        Vocab::new(self.vocab, self.frame_ms, self.silence.clone())
    }

    /// Checked streams for both channels.
    pub fn streams(&self) -> Result<(Vocab, TokenStream, TokenStream), CodecError> {
        let vocab = self.vocab()?;
        if self.channels[0].len() != self.channels[1].len() {
            return Err(CodecError::LengthMismatch {
                s0: self.channels[0].len(),
                s1: self.channels[1].len(),
            });
        }
        let s0 = TokenStream::new(Speaker::S0, self.channels[0].clone(), &vocab)?;
        let s1 = TokenStream::new(Speaker::S1, self.channels[1].clone(), &vocab)?;
        Ok((vocab, s0, s1))
    }

    pub fn num_frames(&self) -> usize {
        self.channels[0].len()
    }

    /// Chunk and deduplicate, padding ragged ends with silence.
    pub fn dedup(&self, chunk_ms: u32) -> Result<DedupDialogue, CodecError> {
        let (vocab, s0, s1) = self.streams()?;
        Ok(deduplicate(&chunk_streams(&s0, &s1, &vocab, chunk_ms, Padding::Pad)?))
    }

    /// Full-rate record of a deduplicated dialogue, rebuilt by interpolation.
    pub fn from_dedup(id: impl Into<String>, d: &DedupDialogue) -> Result<Self, CodecError> {
        let (s0, s1) = interpolate(d)?.dialogue.into_streams();
        Ok(DialogueRecord::from_streams(id, &d.vocab, &s0, &s1))
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        self.streams().map(|_| ()).map_err(|source| CorpusError::Invalid {
            id: self.id.clone(),
            source,
        })
    }
}

pub fn read_records<R: Read>(reader: R) -> Result<Vec<DialogueRecord>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DialogueRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_corpus(path: &Path) -> Result<Vec<DialogueRecord>, CorpusError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_records(file)
}

pub fn write_records<W: Write>(mut w: W, records: &[DialogueRecord]) -> std::io::Result<()> {
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_corpus(path: &Path, records: &[DialogueRecord]) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(io_err(path))?;
    write_records(BufWriter::new(file), records).map_err(io_err(path))
}

/// Space-separated ids, one sequence per line.
pub fn write_sequences<W: Write>(mut w: W, seqs: &[Vec<Token>]) -> std::io::Result<()> {
    for seq in seqs {
        let mut first = true;
        for t in seq {
            if !first {
                w.write_all(b" ")?;
            }
            write!(w, "{t}")?;
            first = false;
        }
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_sequences<R: Read>(reader: R) -> Result<Vec<Vec<Token>>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let seq = line
            .split_whitespace()
            .map(|s| s.parse::<Token>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CorpusError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        out.push(seq);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_line_format() {
        let line = r#"{"id":"a","frame_ms":40,"vocab":10,"silence":[0],"channels":[[1,2],[0,0]]}"#;
        let recs = read_records(line.as_bytes()).unwrap();
        assert_eq!(recs[0].channels, [vec![1, 2], vec![0, 0]]);
        let mut buf = Vec::new();
        write_records(&mut buf, &recs).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{line}\n"));
    }

    #[test]
    fn rejects_unequal_channels_and_bad_units() {
        let unequal = r#"{"id":"a","frame_ms":40,"vocab":10,"silence":[0],"channels":[[1,2],[0]]}"#;
        assert!(matches!(read_records(unequal.as_bytes()), Err(CorpusError::Invalid { .. })));
        let range = r#"{"id":"a","frame_ms":40,"vocab":10,"silence":[0],"channels":[[11],[0]]}"#;
        assert!(read_records(range.as_bytes()).is_err());
        let three = r#"{"id":"a","frame_ms":40,"vocab":10,"silence":[0],"channels":[[1],[0],[0]]}"#;
        assert!(matches!(read_records(three.as_bytes()), Err(CorpusError::Parse { line: 1, .. })));
    }

    #[test]
    fn sequence_dump() {
        let seqs = vec![vec![501, 75, 502, 89], vec![], vec![501]];
        let mut buf = Vec::new();
        write_sequences(&mut buf, &seqs).unwrap();
        assert_eq!(std::str::from_utf8(&buf).unwrap(), "501 75 502 89\n\n501\n");
        assert_eq!(read_sequences(&buf[..]).unwrap(), seqs);
    }
}
