//! Turn-taking analysis and perplexity evaluation.
//!
//! Voice activity is read straight off the unit streams (a frame is voiced
//! when its unit is not a silence unit). Events follow the usual
//! IPU / pause / floor-transfer-offset taxonomy:
//!
//! * **IPU**: voiced stretch of one channel after merging segments separated
//!   by less than `ipu_gap_ms`.
//! * **pause**: silence between two IPUs of the same channel with no speech
//!   from the other channel inside it.
//! * **FTO**: at each floor transfer, start of the incoming IPU minus end of
//!   the outgoing speaker's latest IPU. Negative values are overlaps, positive
//!   values are gaps. An IPU lying entirely inside an IPU of the floor holder
//!   is a backchannel and does not transfer the floor.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::DialogueRecord;
use crate::predictor::{score, ModelError, Predictor};
use crate::tokens::{flatten, DedupDialogue, Token};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("no dialogue ids are shared between the two corpora")]
    NoPairs,
    #[error("dialogue id {0} appears more than once")]
    DuplicateId(String),
    #[error("nothing to evaluate")]
    EmptySet,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VadSegment {
    pub channel: u8,
    pub start_ms: u64,
    /// Exclusive.
    pub end_ms: u64,
}

impl VadSegment {
    pub fn duration_ms(&self) -> u64 {
        self.end_ms - self.start_ms
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VadConfig {
    /// Voiced runs shorter than this are dropped (after bridging).
    pub min_voiced_ms: u64,
    /// Silences shorter than this between voiced runs are bridged.
    pub bridge_ms: u64,
}

/// Voiced segments of one channel. Thresholds are expected to be multiples
/// of `frame_ms`.
pub fn vad(
    tokens: &[Token],
    channel: u8,
    frame_ms: u32,
    silence: &[Token],
    cfg: &VadConfig,
) -> Vec<VadSegment> {
    let f = frame_ms as u64;
    let mut runs: Vec<(u64, u64)> = Vec::new();
    let mut open: Option<u64> = None;
    for (i, t) in tokens.iter().enumerate() {
        let voiced = !silence.contains(t);
        match (voiced, open) {
            (true, None) => open = Some(i as u64),
            (false, Some(s)) => {
                runs.push((s, i as u64));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        runs.push((s, tokens.len() as u64));
    }

    let mut bridged: Vec<(u64, u64)> = Vec::with_capacity(runs.len());
    for (s, e) in runs {
        match bridged.last_mut() {
            Some(last) if (s - last.1) * f < cfg.bridge_ms => last.1 = e,
            _ => bridged.push((s, e)),
        }
    }
    bridged
        .into_iter()
        .filter(|&(s, e)| (e - s) * f >= cfg.min_voiced_ms)
        .map(|(s, e)| VadSegment {
            channel,
            start_ms: s * f,
            end_ms: e * f,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Ipu,
    Pause,
    Fto,
}

impl EventKind {
    pub const ALL: [EventKind; 3] = [EventKind::Ipu, EventKind::Pause, EventKind::Fto];

    pub fn name(self) -> &'static str {
        match self {
            EventKind::Ipu => "ipu",
            EventKind::Pause => "pause",
            EventKind::Fto => "fto",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub kind: EventKind,
    /// Speaker of the IPU or pause; for an FTO, the speaker taking the floor.
    pub channel: u8,
    pub start_ms: u64,
    /// Signed for FTOs.
    pub duration_ms: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventConfig {
    pub ipu_gap_ms: u64,
    /// End of the observed timeline. IPUs ending exactly here are cut off by
    /// the recording and are not reported as IPU events.
    pub horizon_ms: Option<u64>,
}

impl Default for EventConfig {
    fn default() -> Self {
        EventConfig {
            ipu_gap_ms: 200,
            horizon_ms: None,
        }
    }
}

fn merge_ipus(segs: &[VadSegment], gap_ms: u64) -> Vec<VadSegment> {
    let mut sorted = segs.to_vec();
    sorted.sort_by_key(|s| s.start_ms);
    let mut out: Vec<VadSegment> = Vec::with_capacity(sorted.len());
    for s in sorted {
        match out.last_mut() {
            Some(last) if s.start_ms < last.end_ms + gap_ms => {
                last.end_ms = last.end_ms.max(s.end_ms)
            }
            _ => out.push(s),
        }
    }
    out
}

/// Extract IPU, pause and FTO events from the voiced segments of both
/// channels. Output is ordered by kind, then time.
pub fn turn_events(seg0: &[VadSegment], seg1: &[VadSegment], cfg: &EventConfig) -> Vec<EventRecord> {
    let raw = [seg0, seg1];
    let ipus = [merge_ipus(seg0, cfg.ipu_gap_ms), merge_ipus(seg1, cfg.ipu_gap_ms)];
    let mut events = Vec::new();

    for (c, list) in ipus.iter().enumerate() {
        for ipu in list {
            if cfg.horizon_ms == Some(ipu.end_ms) {
                continue;
            }
            events.push(EventRecord {
                kind: EventKind::Ipu,
                channel: c as u8,
                start_ms: ipu.start_ms,
                duration_ms: ipu.duration_ms() as i64,
            });
        }
    }

    for (c, list) in ipus.iter().enumerate() {
        let other = raw[1 - c];
        for pair in list.windows(2) {
            let (from, to) = (pair[0].end_ms, pair[1].start_ms);
            let interrupted = other.iter().any(|s| s.start_ms < to && s.end_ms > from);
            if !interrupted {
                events.push(EventRecord {
                    kind: EventKind::Pause,
                    channel: c as u8,
                    start_ms: from,
                    duration_ms: (to - from) as i64,
                });
            }
        }
    }

    let mut order: Vec<(u64, usize, usize)> = ipus
        .iter()
        .enumerate()
        .flat_map(|(c, list)| list.iter().enumerate().map(move |(i, s)| (s.start_ms, c, i)))
        .collect();
    order.sort_unstable();
    // (floor holder, end of its latest IPU)
    let mut holder: Option<(usize, u64)> = None;
    for (_, c, i) in order {
        let x = ipus[c][i];
        match holder {
            None => holder = Some((c, x.end_ms)),
            Some((h, _)) if h == c => holder = Some((c, x.end_ms)),
            Some((h, h_end)) => {
                let backchannel = ipus[h]
                    .iter()
                    .any(|y| y.start_ms <= x.start_ms && y.end_ms >= x.end_ms);
                if backchannel {
                    continue;
                }
                events.push(EventRecord {
                    kind: EventKind::Fto,
                    channel: c as u8,
                    start_ms: x.start_ms,
                    duration_ms: x.start_ms as i64 - h_end as i64,
                });
                holder = Some((c, x.end_ms));
            }
        }
    }
    events
}

/// Events of one dialogue, keyed by its corpus id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueEvents {
    pub id: String,
    pub events: Vec<EventRecord>,
}

impl DialogueEvents {
    pub fn durations(&self, kind: EventKind) -> impl Iterator<Item = f64> + '_ {
        self.events
            .iter()
            .filter(move |e| e.kind == kind)
            .map(|e| e.duration_ms as f64)
    }

    pub fn average(&self, kind: EventKind) -> Option<f64> {
        mean(self.durations(kind))
    }
}

/// VAD both channels of a corpus record and extract its events, treating the
/// end of the record as the observation horizon.
pub fn record_events(rec: &DialogueRecord, vad_cfg: &VadConfig, ipu_gap_ms: u64) -> DialogueEvents {
    let seg0 = vad(&rec.channels[0], 0, rec.frame_ms, &rec.silence, vad_cfg);
    let seg1 = vad(&rec.channels[1], 1, rec.frame_ms, &rec.silence, vad_cfg);
    let cfg = EventConfig {
        ipu_gap_ms,
        horizon_ms: Some(rec.num_frames() as u64 * rec.frame_ms as u64),
    };
    DialogueEvents {
        id: rec.id.clone(),
        events: turn_events(&seg0, &seg1, &cfg),
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Sample mean, standard deviation and standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub stderr: f64,
}

pub fn summarize(xs: &[f64]) -> Option<Summary> {
    let n = xs.len();
    let mean = mean(xs.iter().copied())?;
    let var = if n > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let std = var.sqrt();
    Some(Summary {
        count: n,
        mean,
        std,
        stderr: std / (n as f64).sqrt(),
    })
}

/// Pearson product-moment correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, MetricsError> {
    if xs.len() != ys.len() {
        return Err(MetricsError::DegenerateInput(format!(
            "length mismatch: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(MetricsError::DegenerateInput("need at least two pairs".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::DegenerateInput("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindCorrelation {
    pub kind: EventKind,
    /// Missing when fewer than two pairs remain or a side has no variance.
    pub r: Option<f64>,
    pub pairs: usize,
    /// Paired dialogues lacking this event kind on either side.
    pub excluded: usize,
    pub generated_mean: Option<f64>,
    pub reference_mean: Option<f64>,
}

/// Mean gap (positive FTO) and overlap (negative FTO) durations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FtoSplit {
    pub gap_mean: Option<f64>,
    pub gap_count: usize,
    pub overlap_mean: Option<f64>,
    pub overlap_count: usize,
}

impl FtoSplit {
    fn of(corpus: &[&DialogueEvents]) -> Self {
        let ftos: Vec<f64> = corpus.iter().flat_map(|d| d.durations(EventKind::Fto)).collect();
        let gaps: Vec<f64> = ftos.iter().copied().filter(|&x| x > 0.0).collect();
        let overlaps: Vec<f64> = ftos.iter().copied().filter(|&x| x < 0.0).collect();
        FtoSplit {
            gap_mean: mean(gaps.iter().copied()),
            gap_count: gaps.len(),
            overlap_mean: mean(overlaps.iter().copied()),
            overlap_count: overlaps.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub paired_dialogues: usize,
    pub kinds: Vec<KindCorrelation>,
    /// Mean of the per-kind correlations that are defined.
    pub average_r: Option<f64>,
    pub generated_fto: FtoSplit,
    pub reference_fto: FtoSplit,
}

impl CorrelationReport {
    pub fn r(&self, kind: EventKind) -> Option<f64> {
        self.kinds.iter().find(|k| k.kind == kind).and_then(|k| k.r)
    }
}

fn index_by_id(corpus: &[DialogueEvents]) -> Result<BTreeMap<&str, &DialogueEvents>, MetricsError> {
    let mut map = BTreeMap::new();
    for d in corpus {
        if map.insert(d.id.as_str(), d).is_some() {
            return Err(MetricsError::DuplicateId(d.id.clone()));
        }
    }
    Ok(map)
}

/// Correlate per-dialogue average event durations of two corpora paired by
/// dialogue id.
pub fn correlation_report(
    generated: &[DialogueEvents],
    reference: &[DialogueEvents],
) -> Result<CorrelationReport, MetricsError> {
    let gen = index_by_id(generated)?;
    let refs = index_by_id(reference)?;
    let pairs: Vec<(&DialogueEvents, &DialogueEvents)> = gen
        .iter()
        .filter_map(|(id, g)| refs.get(id).map(|r| (*g, *r)))
        .collect();
    if pairs.is_empty() {
        return Err(MetricsError::NoPairs);
    }

    let mut kinds = Vec::new();
    for kind in EventKind::ALL {
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (g, r) in &pairs {
            if let (Some(x), Some(y)) = (g.average(kind), r.average(kind)) {
                xs.push(x);
                ys.push(y);
            }
        }
        kinds.push(KindCorrelation {
            kind,
            r: pearson(&xs, &ys).ok(),
            pairs: xs.len(),
            excluded: pairs.len() - xs.len(),
            generated_mean: mean(xs.iter().copied()),
            reference_mean: mean(ys.iter().copied()),
        });
    }
    let average_r = mean(kinds.iter().filter_map(|k| k.r));
    let gen_side: Vec<&DialogueEvents> = pairs.iter().map(|p| p.0).collect();
    let ref_side: Vec<&DialogueEvents> = pairs.iter().map(|p| p.1).collect();
    Ok(CorrelationReport {
        paired_dialogues: pairs.len(),
        kinds,
        average_r,
        generated_fto: FtoSplit::of(&gen_side),
        reference_fto: FtoSplit::of(&ref_side),
    })
}

pub const REPORT_CSV_HEADER: &str = "model,dataset,ipu_r,pause_r,fto_r,average_r";

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.4}")).unwrap_or_default()
}

pub fn report_csv_row(model: &str, dataset: &str, report: &CorrelationReport) -> String {
    format!(
        "{model},{dataset},{},{},{},{}",
        fmt_opt(report.r(EventKind::Ipu)),
        fmt_opt(report.r(EventKind::Pause)),
        fmt_opt(report.r(EventKind::Fto)),
        fmt_opt(report.average_r)
    )
}

/// A dialogue whose first `prompt_chunks` chunks were given, not generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDialogue {
    pub dialogue: DedupDialogue,
    pub prompt_chunks: usize,
}

/// Perplexity of the continuation's wire tokens, conditioned on the prompt.
pub fn dialogue_perplexity<P: Predictor + ?Sized>(
    model: &P,
    item: &ScoredDialogue,
) -> Result<f64, MetricsError> {
    let wire = flatten(&item.dialogue);
    let split = item.dialogue.prefix(item.prompt_chunks).wire_len();
    score(model, &wire[..split], &wire[split..])
        .perplexity()
        .ok_or(MetricsError::Model(ModelError::EmptySequence))
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

pub fn median_perplexity<P: Predictor + ?Sized>(
    model: &P,
    items: &[ScoredDialogue],
) -> Result<f64, MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    let ppl = items
        .par_iter()
        .map(|item| dialogue_perplexity(model, item))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(median(&ppl).expect("non-empty"))
}
