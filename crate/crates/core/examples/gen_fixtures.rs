//! Regenerates the files under `fixtures/`: stance pairs whose tally matches
//! the published per-trait table, and pre/post score sheets for two traits.
//!
//!     cargo run -p traitsim-core --example gen_fixtures

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use traitsim_core::consistency::write_score_sheets;
use traitsim_core::domain::default_roster;
use traitsim_core::reference::{table4, TRIALS};
use traitsim_core::{Phase, ScoreSheet, Stance, StancePair};

fn stance_pairs() -> Vec<StancePair> {
    let roster = default_roster();
    let mut out = Vec::new();
    for (agent, table) in roster.iter().zip(table4()) {
        // Cell counts from the marginals: AR = (diff + sy - ty) / 2 and so on.
        let ar = (table.diff + table.speak_yes - table.think_yes) / 2;
        let ra = table.diff - ar;
        let aa = table.speak_yes - ar;
        let rr = table.total - aa - ar - ra;
        let mut cells: Vec<(Stance, Stance)> = [
            (aa, (Stance::Accept, Stance::Accept)),
            (ar, (Stance::Accept, Stance::Reject)),
            (ra, (Stance::Reject, Stance::Accept)),
            (rr, (Stance::Reject, Stance::Reject)),
        ]
        .into_iter()
        .flat_map(|(n, cell)| std::iter::repeat_n(cell, n as usize))
        .collect();

        let mut slots: Vec<(u32, u32)> = (0..TRIALS as u32)
            .flat_map(|trial| {
                roster
                    .iter()
                    .filter(|p| p.agent_id != agent.agent_id)
                    .map(move |p| (trial, p.agent_id))
            })
            .collect();
        cells.resize(slots.len(), (Stance::Silent, Stance::Silent));
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from(agent.agent_id));
        cells.shuffle(&mut rng);
        slots.sort_unstable();
        for ((trial_id, presenter_id), (speak, think)) in slots.into_iter().zip(cells) {
            out.push(StancePair {
                evaluator_id: agent.agent_id,
                presenter_id,
                claim_id: presenter_id,
                round_no: presenter_id,
                trial_id,
                speak,
                think,
            });
        }
    }
    out.sort_by_key(|p| (p.trial_id, p.round_no, p.evaluator_id));
    out
}

type Edit = (u32, &'static str, u8, u8);

/// Every item scores 5 in both phases except the listed (trial, item, pre, post).
fn sheets(
    agent_id: u32,
    label: &str,
    items: [&str; 4],
    edits: &[Edit],
) -> (Vec<ScoreSheet>, Vec<ScoreSheet>) {
    let build = |phase: Phase, trial_id: u32| {
        let scores: BTreeMap<String, u8> = items
            .iter()
            .map(|item| {
                let edit = edits
                    .iter()
                    .find(|(t, i, _, _)| *t == trial_id && i == item);
                let score = match (edit, phase) {
                    (Some(&(_, _, pre, _)), Phase::Pre) => pre,
                    (Some(&(_, _, _, post)), Phase::Post) => post,
                    (None, _) => 5,
                };
                (item.to_string(), score)
            })
            .collect();
        ScoreSheet {
            agent_id,
            trait_label: label.to_string(),
            phase,
            trial_id,
            scores,
            missing: Vec::new(),
        }
    };
    let trials = 0..TRIALS as u32;
    (
        trials.clone().map(|t| build(Phase::Pre, t)).collect(),
        trials.map(|t| build(Phase::Post, t)).collect(),
    )
}

fn curious_edits() -> Vec<Edit> {
    let mut edits = Vec::new();
    // Six trials drop two items by one point: per-trial difference 0.5.
    for t in 0..6 {
        edits.push((t, "O1", 5, 4));
        edits.push((t, "O2", 5, 4));
    }
    // Five drop one item, twelve gain one item.
    for t in 6..11 {
        edits.push((t, "O3", 5, 4));
    }
    for t in 11..23 {
        edits.push((t, "O4", 4, 5));
    }
    // Seven stable items one below the ceiling.
    for t in 23..30 {
        edits.push((t, "O1", 4, 4));
    }
    edits
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    println!("wrote {}", path.display());
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    fs::create_dir_all(&dir).expect("fixtures dir");

    let pairs: String = stance_pairs()
        .iter()
        .map(|p| serde_json::to_string(p).expect("pair serializes") + "\n")
        .collect();
    write(&dir.join("table4_pairs.jsonl"), &pairs);

    let (pre, post) = sheets(
        10,
        "confident",
        ["N1", "N2", "N3", "N4"],
        &[(17, "N2", 5, 4), (17, "N4", 5, 4)],
    );
    write(&dir.join("confident_pre.jsonl"), &write_score_sheets(&pre));
    write(
        &dir.join("confident_post.jsonl"),
        &write_score_sheets(&post),
    );

    let (pre, post) = sheets(1, "curious", ["O1", "O2", "O3", "O4"], &curious_edits());
    write(&dir.join("curious_pre.jsonl"), &write_score_sheets(&pre));
    write(&dir.join("curious_post.jsonl"), &write_score_sheets(&post));
}
