use criterion::{black_box, criterion_group, criterion_main, Criterion};

use traitsim_core::persist::{parse_transcript, to_jsonl, NullSink};
use traitsim_core::stance::{classify_rule_based, parse_channels, StancePair};
use traitsim_core::{
    default_roster, run_trial, tally, Classroom, MockBackend, Stance, StanceLexicon, TrialConfig,
};

fn pairs(trials: u32) -> Vec<StancePair> {
    let ids: Vec<u32> = default_roster().iter().map(|a| a.agent_id).collect();
    let stances = [Stance::Accept, Stance::Reject, Stance::Silent];
    let mut out = Vec::new();
    for trial_id in 0..trials {
        for (round, &presenter_id) in ids.iter().enumerate() {
            for &evaluator_id in ids.iter().filter(|&&e| e != presenter_id) {
                let k = (trial_id + presenter_id * 7 + evaluator_id * 3) as usize;
                out.push(StancePair {
                    evaluator_id,
                    presenter_id,
                    claim_id: presenter_id,
                    round_no: round as u32 + 1,
                    trial_id,
                    speak: stances[k % 3],
                    think: stances[(k / 3) % 3],
                });
            }
        }
    }
    out
}

fn bench_tally(c: &mut Criterion) {
    let roster = default_roster();
    let pairs = pairs(50);
    c.bench_function("tally 4500 pairs", |b| {
        b.iter(|| tally(black_box(&pairs), &roster).unwrap())
    });
}

fn bench_classify(c: &mut Criterion) {
    let lexicon = StanceLexicon::default();
    let texts = [
        "[Speak]: That sounds right to me, thanks for sharing. [Think]: I am not convinced at all.",
        "[Speak]: I don't think that's true. [Think]: This is false.",
        "I'm not sure what to say about it.",
    ];
    c.bench_function("parse + classify", |b| {
        b.iter(|| {
            for text in texts {
                let ch = parse_channels(black_box(text));
                black_box(classify_rule_based(
                    ch.speak_text.as_deref(),
                    None,
                    &lexicon,
                ));
                black_box(classify_rule_based(
                    ch.think_text.as_deref(),
                    None,
                    &lexicon,
                ));
            }
        })
    });
}

fn bench_trial(c: &mut Criterion) {
    let classroom = Classroom::default();
    let backend = MockBackend::calibrated();
    let config = TrialConfig::new(0, 42, &classroom.roster);
    c.bench_function("mock trial", |b| {
        b.iter(|| run_trial(black_box(&config), &classroom, &backend, &NullSink).unwrap())
    });
    let text = to_jsonl(&run_trial(&config, &classroom, &backend, &NullSink).unwrap()).unwrap();
    c.bench_function("parse transcript", |b| {
        b.iter(|| parse_transcript(black_box(&text)).unwrap())
    });
}

criterion_group!(benches, bench_tally, bench_classify, bench_trial);
criterion_main!(benches);
