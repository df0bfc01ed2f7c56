#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use syncdialog::metrics::{EventConfig, EventKind, EventRecord, VadSegment};
use syncdialog::predictor::NgramModel;
use syncdialog::tokens::{flatten, Speaker, Token, TokenStream, Vocab};
use syncdialog::DialogueRecord;

/// Random streams with runs of repeated units, so dedup has work to do.
pub fn random_streams(rng: &mut ChaCha8Rng, vocab: &Vocab, frames: usize) -> (TokenStream, TokenStream) {
    let mut chan = || {
        let mut out = Vec::with_capacity(frames);
        while out.len() < frames {
            let t = rng.random_range(0..vocab.size());
            let run = rng.random_range(1..=7usize);
            for _ in 0..run.min(frames - out.len()) {
                out.push(t);
            }
        }
        out
    };
    let c0 = chan();
    let c1 = chan();
    (
        TokenStream::new(Speaker::S0, c0, vocab).unwrap(),
        TokenStream::new(Speaker::S1, c1, vocab).unwrap(),
    )
}

/// (onset frame, unit) of every run.
pub fn run_onsets(tokens: &[Token]) -> Vec<(usize, Token)> {
    let mut out = Vec::new();
    for (i, &t) in tokens.iter().enumerate() {
        if i == 0 || tokens[i - 1] != t {
            out.push((i, t));
        }
    }
    out
}

/// Voiced mask at `unit_ms` resolution.
fn mask(segs: &[VadSegment], total_ms: u64, unit_ms: u64) -> Vec<bool> {
    let mut m = vec![false; (total_ms / unit_ms) as usize];
    for s in segs {
        for u in s.start_ms / unit_ms..s.end_ms / unit_ms {
            m[u as usize] = true;
        }
    }
    m
}

/// Fill internal silent runs shorter than `gap` units.
fn bridge(m: &[bool], gap: usize) -> Vec<bool> {
    let mut out = m.to_vec();
    let mut i = 0;
    while i < m.len() {
        if m[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < m.len() && !m[i] {
            i += 1;
        }
        let internal = start > 0 && i < m.len();
        if internal && i - start < gap {
            out[start..i].iter_mut().for_each(|x| *x = true);
        }
    }
    out
}

fn run_end(m: &[bool], from: usize) -> usize {
    let mut e = from;
    while e < m.len() && m[e] {
        e += 1;
    }
    e
}

/// Frame-by-frame event extraction: bridge each channel's voiced mask into
/// IPUs, then walk time keeping track of who holds the floor.
pub fn event_oracle(
    seg0: &[VadSegment],
    seg1: &[VadSegment],
    cfg: &EventConfig,
    total_ms: u64,
    unit_ms: u64,
) -> Vec<EventRecord> {
    let raw = [mask(seg0, total_ms, unit_ms), mask(seg1, total_ms, unit_ms)];
    let gap = cfg.ipu_gap_ms.div_ceil(unit_ms) as usize;
    let ipu = [bridge(&raw[0], gap), bridge(&raw[1], gap)];
    let n = raw[0].len();
    let horizon = cfg.horizon_ms.map(|h| (h / unit_ms) as usize);
    let ms = |u: usize| (u as u64 * unit_ms) as i64;
    let mut events = Vec::new();

    for c in 0..2 {
        let m = &ipu[c];
        let mut t = 0;
        let mut prev_end: Option<usize> = None;
        while t < n {
            if !m[t] {
                t += 1;
                continue;
            }
            let e = run_end(m, t);
            if horizon != Some(e) {
                events.push(EventRecord {
                    kind: EventKind::Ipu,
                    channel: c as u8,
                    start_ms: ms(t) as u64,
                    duration_ms: ms(e - t),
                });
            }
            if let Some(p) = prev_end {
                if !raw[1 - c][p..t].iter().any(|&v| v) {
                    events.push(EventRecord {
                        kind: EventKind::Pause,
                        channel: c as u8,
                        start_ms: ms(p) as u64,
                        duration_ms: ms(t - p),
                    });
                }
            }
            prev_end = Some(e);
            t = e;
        }
    }

    let mut holder: Option<(usize, usize)> = None;
    for t in 0..n {
        for c in 0..2 {
            let onset = ipu[c][t] && (t == 0 || !ipu[c][t - 1]);
            if !onset {
                continue;
            }
            let e = run_end(&ipu[c], t);
            match holder {
                Some((h, h_end)) if h != c => {
                    if ipu[h][t..e].iter().all(|&v| v) {
                        continue;
                    }
                    events.push(EventRecord {
                        kind: EventKind::Fto,
                        channel: c as u8,
                        start_ms: ms(t) as u64,
                        duration_ms: ms(t) - ms(h_end),
                    });
                    holder = Some((c, e));
                }
                _ => holder = Some((c, e)),
            }
        }
    }
    events
}

pub fn canonical(mut events: Vec<EventRecord>) -> Vec<EventRecord> {
    events.sort_by_key(|e| (e.kind, e.channel, e.start_ms, e.duration_ms));
    events
}

/// Up to `max_segs` sorted, disjoint, non-touching segments on a grid.
pub fn random_segments(rng: &mut ChaCha8Rng, channel: u8, max_segs: usize, unit_ms: u64) -> Vec<VadSegment> {
    let count = rng.random_range(0..=max_segs);
    let mut t = rng.random_range(0..10u64);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = rng.random_range(1..=30u64);
        out.push(VadSegment {
            channel,
            start_ms: t * unit_ms,
            end_ms: (t + len) * unit_ms,
        });
        t += len + rng.random_range(1..=25u64);
    }
    out
}

pub fn end_of(segs: &[VadSegment]) -> u64 {
    segs.last().map_or(0, |s| s.end_ms)
}

/// Flattened training sequences at `chunk_ms`.
pub fn sequences(records: &[DialogueRecord], chunk_ms: u32) -> Vec<Vec<Token>> {
    records.iter().map(|r| flatten(&r.dedup(chunk_ms).unwrap())).collect()
}

/// The model setup used for generation experiments.
pub fn train_generator(records: &[DialogueRecord], chunk_ms: u32) -> NgramModel {
    let vocab = records[0].vocab().unwrap();
    NgramModel::train_backoff(&sequences(records, chunk_ms), vocab.extended_size(), 5, 0.001).unwrap()
}

pub fn overlap_frames(rec: &DialogueRecord) -> usize {
    rec.channels[0]
        .iter()
        .zip(&rec.channels[1])
        .filter(|(a, b)| !rec.silence.contains(a) && !rec.silence.contains(b))
        .count()
}
