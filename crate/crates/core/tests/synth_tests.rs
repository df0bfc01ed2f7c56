mod common;

use proptest::prelude::*;
use syncdialog::corpus::{read_records, write_records};
use syncdialog::metrics::EventKind;
use syncdialog::synth::{
    build_stage2_corpus, corpus_stats, generate_corpus, generate_dialogue, generate_stage2_corpus,
    DialogueStyle, Gaussian, StatsConfig,
};
use syncdialog::tokens::{chunk_streams, deduplicate, flatten, interpolate, parse, Padding, Speaker};

fn quiet_style(fto: Gaussian) -> DialogueStyle {
    DialogueStyle {
        fto_ms: fto,
        backchannel_prob: 0.0,
        ..Default::default()
    }
}

#[test]
fn same_seed_same_bytes() {
    let style = DialogueStyle::default();
    let bytes = |seed| {
        let c = generate_corpus(&style, 12, 20_000, seed).unwrap();
        let mut out = Vec::new();
        write_records(&mut out, &c.records).unwrap();
        out
    };
    let a = bytes(5);
    assert_eq!(a, bytes(5));
    assert_ne!(a, bytes(6));
    let back = read_records(a.as_slice()).unwrap();
    assert_eq!(back, generate_corpus(&style, 12, 20_000, 5).unwrap().records);
}

#[test]
fn fto_mean_is_recovered() {
    let c = generate_corpus(&quiet_style(Gaussian::new(200.0, 50.0)), 200, 60_000, 17).unwrap();
    let stats = corpus_stats(&c.records, &StatsConfig::default()).unwrap();
    let fto = stats.fto.unwrap();
    assert!((fto.mean - 200.0).abs() <= 15.0, "{fto:?}");
    assert_eq!(stats.overlap_frames, 0);
}

#[test]
fn stats_tighten_as_the_corpus_grows() {
    let style = quiet_style(Gaussian::new(200.0, 200.0));
    let err = |n| {
        let c = generate_corpus(&style, n, 60_000, 31).unwrap();
        let s = corpus_stats(&c.records, &StatsConfig::default()).unwrap();
        let ipu = s.summary(EventKind::Ipu).unwrap();
        ((ipu.mean - 1200.0) / 1200.0).abs() + ((s.pause.unwrap().mean - 600.0) / 600.0).abs()
    };
    let small = err(5);
    let large = err(200);
    assert!(large < 0.03, "{large}");
    assert!(large <= small + 0.01, "{small} vs {large}");
}

#[test]
fn dedup_rate_follows_self_loop_rate() {
    let style = DialogueStyle::default();
    let c = generate_corpus(&style, 50, 60_000, 3).unwrap();
    let s = corpus_stats(&c.records, &StatsConfig::default()).unwrap();
    let voiced_fraction = s.voiced_frames as f64 / (2 * s.total_frames) as f64;
    let approx = voiced_fraction * (1.0 - style.content.p_self) * s.raw_tokens_per_second;
    let rel = (s.dedup_tokens_per_second - approx).abs() / approx;
    assert!(rel < 0.15, "{} vs {approx}", s.dedup_tokens_per_second);
    assert!((0.3..=0.7).contains(&s.speech_dedup_ratio));
    assert!(s.wire_ratio < 1.0);
}

#[test]
fn stage2_examples() {
    let style = DialogueStyle::default();
    let (a, b) = build_stage2_corpus(&[(Speaker::S1, vec![9; 10])], &style).unwrap();
    assert_eq!(a.tokens, vec![0; 10]);
    assert_eq!(b.tokens, vec![9; 10]);
    let c = generate_stage2_corpus(&style, 30, 30_000, 8).unwrap();
    let s = corpus_stats(&c.records, &StatsConfig::default()).unwrap();
    assert_eq!(s.overlap_frames, 0);
    assert!(s.voiced_frames > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn dialogues_survive_the_codec(
        seed in any::<u64>(),
        frames in 0u64..500,
        fto_mean in -400f64..600.0,
        bc in 0f64..1.0,
        chunk_ms in prop::sample::select(vec![160u32, 200, 240]),
    ) {
        let style = DialogueStyle { fto_ms: Gaussian::new(fto_mean, 150.0), backchannel_prob: bc, ..Default::default() };
        let vocab = style.vocab().unwrap();
        let (a, b) = generate_dialogue(&style, frames * 40, seed).unwrap();
        prop_assert_eq!(a.len(), frames as usize);
        prop_assert_eq!(b.len(), frames as usize);
        let c = chunk_streams(&a, &b, &vocab, chunk_ms, Padding::Pad).unwrap();
        let d = deduplicate(&c);
        prop_assert_eq!(parse(&flatten(&d), &vocab, chunk_ms).unwrap(), d.clone());
        let back = interpolate(&d).unwrap();
        prop_assert!(back.warnings.is_empty());
        prop_assert_eq!(back.dialogue.num_frames(), c.num_frames());
        prop_assert_eq!(deduplicate(&back.dialogue), d);
    }

    #[test]
    fn stage2_never_overlaps(seed in any::<u64>(), ipu_mean in 80f64..3000.0) {
        let style = DialogueStyle { ipu_ms: Gaussian::new(ipu_mean, ipu_mean / 2.0), ..Default::default() };
        let c = generate_stage2_corpus(&style, 3, 20_000, seed).unwrap();
        for r in &c.records {
            prop_assert_eq!(common::overlap_frames(r), 0);
            prop_assert_eq!(r.channels[0].len(), 500);
        }
    }

    #[test]
    fn no_backchannels_and_positive_fto_never_overlap(seed in any::<u64>(), fto_mean in 200f64..1000.0) {
        let style = quiet_style(Gaussian::new(fto_mean, 40.0));
        let c = generate_corpus(&style, 3, 30_000, seed).unwrap();
        for r in &c.records {
            prop_assert_eq!(common::overlap_frames(r), 0);
        }
    }
}
