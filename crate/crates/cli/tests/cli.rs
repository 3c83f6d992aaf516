//! The `traitsim` binary end to end: exit codes, run layout, analysis output.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use traitsim_cli::commands::{Manifest, MANIFEST_FILE, POST_SCORES_FILE, PRE_SCORES_FILE};
use traitsim_cli::config::ExperimentConfig;
use traitsim_core::analytics::{parse_table4_tsv, table4_tsv};
use traitsim_core::ResponseTable;

fn traitsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_traitsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn run_small(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--trials", "2", "--seed", "7", "--out", s(out)];
    args.extend_from_slice(extra);
    traitsim(&args)
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&traitsim(&["--help"])), 0);
    assert_eq!(code(&traitsim(&["--version"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&traitsim(&["frobnicate"])), 1);
    assert_eq!(code(&traitsim(&["run", "--trials", "many"])), 1);
    assert_eq!(code(&traitsim(&[])), 1);
}

#[test]
fn missing_template_path_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    fs::write(&config, "templates = \"no/such/templates\"\n").unwrap();
    let out = traitsim(&["run", "--config", s(&config), "--trials", "1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("templates"), "{}", stderr(&out));
}

#[test]
fn unknown_config_key_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    fs::write(&config, "trails = 3\n").unwrap();
    assert_eq!(code(&traitsim(&["validate", "--config", s(&config)])), 2);
}

#[test]
fn run_writes_layout_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run_small(&a, &[])), 0);
    assert_eq!(code(&run_small(&b, &["--jobs", "2"])), 0);
    for name in [
        MANIFEST_FILE.to_string(),
        PRE_SCORES_FILE.to_string(),
        POST_SCORES_FILE.to_string(),
        "transcripts/trial_0000.jsonl".to_string(),
        "transcripts/trial_0001.jsonl".to_string(),
    ] {
        let x = fs::read(a.join(&name)).unwrap();
        let y = fs::read(b.join(&name)).unwrap();
        assert!(x == y, "{name} differs between runs");
    }
    let manifest: Manifest =
        serde_json::from_slice(&fs::read(a.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest.trials.len(), 2);
    assert_eq!(manifest.base_seed, 7);
    assert_eq!(manifest.trials[1].seed, 8);
    assert!(manifest.trials.iter().all(|t| t.complete));
}

#[test]
fn config_hash_ignores_output_dir_only() {
    let base = ExperimentConfig::default();
    let resources = base.resources().unwrap();
    let hash = base.semantic_hash(&resources);

    let mut moved = base.clone();
    moved.output_dir = PathBuf::from("elsewhere");
    assert_eq!(moved.semantic_hash(&resources), hash);

    let mut reseeded = base.clone();
    reseeded.base_seed += 1;
    assert_ne!(reseeded.semantic_hash(&resources), hash);

    let mut private = base;
    private.context_sharing = false;
    assert_ne!(private.semantic_hash(&resources), hash);
}

#[test]
fn analyze_run_prints_ten_tables() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert_eq!(code(&run_small(&run, &[])), 0);
    let out = traitsim(&["analyze", s(&run), "--out", s(&dir.path().join("analysis"))]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let tables = parse_table4_tsv(&String::from_utf8(out.stdout.clone()).unwrap()).unwrap();
    assert_eq!(tables.len(), 10);
    assert!(tables.iter().all(|t| t.total <= 2 * 9));
    for file in ["table4.tsv", "rates.tsv", "figure_series.json"] {
        assert!(dir.path().join("analysis").join(file).exists(), "{file}");
    }
}

#[test]
fn truncated_transcript_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert_eq!(
        code(&traitsim(&["run", "--trials", "1", "--out", s(&run)])),
        0
    );
    let path = run.join("transcripts/trial_0000.jsonl");
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let cut = format!(
        "{}\n{}",
        lines[..5].join("\n"),
        &lines[5][..lines[5].len() / 2]
    );
    fs::write(&path, cut).unwrap();
    let out = traitsim(&["analyze", s(&path)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 6"), "{}", stderr(&out));
}

#[test]
fn empty_input_gives_no_tables_and_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let out = traitsim(&["analyze", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(
        parse_table4_tsv(&String::from_utf8(out.stdout.clone()).unwrap())
            .unwrap()
            .is_empty()
    );
    assert!(
        stderr(&out).contains("no complete transcripts"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn pairs_fixture_reproduces_reference_rows() {
    let out = traitsim(&[
        "analyze",
        "--pairs",
        s(&fixtures().join("table4_pairs.jsonl")),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let tables = parse_table4_tsv(&String::from_utf8(out.stdout.clone()).unwrap()).unwrap();
    let curious = tables.iter().find(|t| t.trait_label == "curious").unwrap();
    assert_eq!(
        *curious,
        ResponseTable::new("curious", 100, 8, 79, 29, 35, 108)
    );
    let cautious = tables.iter().find(|t| t.trait_label == "cautious").unwrap();
    assert_eq!(
        *cautious,
        ResponseTable::new("cautious", 4, 223, 2, 225, 6, 227)
    );
}

#[test]
fn validate_table_file_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.tsv");
    fs::write(
        &good,
        table4_tsv(&[ResponseTable::new("friendly", 106, 152, 108, 150, 158, 258)]),
    )
    .unwrap();
    assert_eq!(code(&traitsim(&["validate", s(&good)])), 0);

    // Diff and the speak/think gap disagree in parity.
    let bad = dir.path().join("bad.tsv");
    fs::write(
        &bad,
        table4_tsv(&[ResponseTable::new("odd", 10, 0, 9, 1, 2, 10)]),
    )
    .unwrap();
    let out = traitsim(&["validate", s(&bad)]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stdout).contains("odd\tinvalid"));

    let capped = traitsim(&["validate", s(&good), "--opportunities", "200"]);
    assert_eq!(code(&capped), 4);
}

#[test]
fn consistency_from_fixtures_and_unpaired_trial() {
    let pre = fixtures().join("confident_pre.jsonl");
    let post = fixtures().join("confident_post.jsonl");
    let out = traitsim(&["consistency", "--pre", s(&pre), "--post", s(&post)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let stdout = String::from_utf8(out.stdout.clone()).unwrap();
    assert!(
        stdout.lines().any(|l| l.starts_with("confident\t")),
        "{stdout}"
    );

    let dir = tempfile::tempdir().unwrap();
    let short = dir.path().join("post.jsonl");
    let text = fs::read_to_string(&post).unwrap();
    fs::write(
        &short,
        text.lines().skip(1).collect::<Vec<_>>().join("\n") + "\n",
    )
    .unwrap();
    let out = traitsim(&["consistency", "--pre", s(&pre), "--post", s(&short)]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn report_bundles_tables_and_stability() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert_eq!(code(&run_small(&run, &[])), 0);
    let out = traitsim(&["report", s(&run)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for file in [
        "table4.tsv",
        "rates.tsv",
        "figure_series.json",
        "table3.tsv",
    ] {
        assert!(run.join("report").join(file).exists(), "{file}");
    }
}
