#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use brushgan::CharacterCode;

const DICTIONARY: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/toy_dictionary.tsv");
const SPLIT: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/toy_split.tsv");

/// The ten corpus characters; 河 and 湖 are only in the dictionary.
fn corpus_chars() -> Vec<CharacterCode> {
    "永和林森明好字書法江".chars().map(CharacterCode::new).collect()
}

fn toy_corpus(dir: &Path) -> PathBuf {
    let root = dir.join("corpus");
    common::write_toy_corpus(&root, 3, &corpus_chars());
    root
}

fn brushgan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brushgan"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn prepare(corpus: &Path, out: &Path) -> Output {
    brushgan(&[
        "prepare", "--corpus", p(corpus), "--dictionary", DICTIONARY, "--out", p(out),
        "--test-count", "2", "--seed", "0", "--vocab-size", "40",
    ])
}

/// Narrow networks so a toy epoch takes seconds.
const TOY_SETTINGS: [&str; 14] = [
    "--set", "batch_size=4",
    "--set", "vocab_size=40",
    "--set", "base_channels=4",
    "--set", "max_channels=32",
    "--set", "disc_base_channels=2",
    "--set", "style_embedding_dim=16",
    "--set", "epochs=1",
];

#[test]
fn prepare_reproduces_the_documented_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = toy_corpus(dir.path());
    let out = dir.path().join("prep");
    let stdout = ok(&prepare(&corpus, &out));
    assert!(stdout.contains("8 training and 2 test characters"), "{stdout}");

    let written = std::fs::read(out.join("split.tsv")).unwrap();
    assert!(written == std::fs::read(SPLIT).unwrap(), "manifest differs:\n{}", String::from_utf8_lossy(&written));
    let stats = std::fs::read_to_string(out.join("statistics.txt")).unwrap();
    assert_eq!(stats.lines().count(), 4, "{stats}");
    // three style directories plus the source glyphs, 40 images in all
    assert_eq!(std::fs::read_dir(out.join("cache")).unwrap().count(), 4);
    for sub in ["1", "2", "3", "source"] {
        assert_eq!(std::fs::read_dir(out.join("cache").join(sub)).unwrap().count(), 10, "{sub}");
    }

    // a second run into a fresh directory is byte-identical
    let again = dir.path().join("prep2");
    ok(&prepare(&corpus, &again));
    assert_eq!(std::fs::read(again.join("split.tsv")).unwrap(), written);
}

#[test]
fn prepare_reports_characters_without_a_decomposition() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("corpus");
    let mut chars = corpus_chars();
    chars.push(CharacterCode::new('山'));
    common::write_toy_corpus(&root, 2, &chars);

    let out = prepare(&root, &dir.path().join("a"));
    assert_eq!(code(&out), 3);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains('山') && err.contains("U+5C71"), "{err}");

    let out = brushgan(&[
        "prepare", "--corpus", p(&root), "--dictionary", DICTIONARY, "--out", p(&dir.path().join("b")),
        "--test-count", "2", "--vocab-size", "40", "--skip-missing", "--no-cache",
    ]);
    ok(&out);
    let manifest = std::fs::read_to_string(dir.path().join("b/split.tsv")).unwrap();
    assert!(!manifest.contains("5C71"));
    assert_eq!(manifest.lines().filter(|l| !l.starts_with('#')).count(), 10);
    assert!(!dir.path().join("b/cache").exists());
}

#[test]
fn usage_and_data_errors_have_distinct_exit_codes() {
    assert_eq!(code(&brushgan(&["frobnicate"])), 2);
    assert_eq!(code(&brushgan(&["prepare", "--corpus", "x"])), 2);

    let dir = tempfile::tempdir().unwrap();
    let nowhere = dir.path().join("missing");
    let out = brushgan(&[
        "prepare", "--corpus", p(&nowhere), "--dictionary", DICTIONARY, "--out", p(&dir.path().join("o")),
    ]);
    assert_eq!(code(&out), 3);

    let corpus = toy_corpus(dir.path());
    let run = dir.path().join("run");
    let train = |extra: &[&str]| {
        let mut args = vec![
            "train", "--corpus", p(&corpus), "--dictionary", DICTIONARY, "--split", SPLIT,
            "--out", p(&run),
        ];
        args.extend_from_slice(extra);
        brushgan(&args)
    };
    assert_eq!(code(&train(&["--set", "no_such_key=1"])), 2);
    assert_eq!(code(&train(&["--set", "batch_size"])), 2);
    assert_eq!(code(&train(&["--mode", "sideways"])), 2);
    // three styles in the corpus, two in the model
    let mut two = TOY_SETTINGS.to_vec();
    two.extend(["--styles-count", "2"]);
    assert_eq!(code(&train(&two)), 2);
}

#[test]
fn train_generate_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = toy_corpus(dir.path());
    let prep = dir.path().join("prep");
    ok(&prepare(&corpus, &prep));
    let cache = prep.join("cache");
    let run = dir.path().join("run");

    // stop after two of six steps, then resume to the end of the epoch
    let mut args = vec![
        "train", "--corpus", p(&corpus), "--dictionary", DICTIONARY, "--split", SPLIT,
        "--cache", p(&cache), "--out", p(&run), "--styles-count", "3", "--max-steps", "2",
    ];
    args.extend_from_slice(&TOY_SETTINGS);
    let stdout = ok(&brushgan(&args));
    assert!(stdout.contains("stopped at step 2"), "{stdout}");
    let last = run.join("last.ckpt");
    let mut resume = args.clone();
    resume.truncate(resume.len() - TOY_SETTINGS.len() - 2);
    resume.extend(["--checkpoint", p(&last)]);
    resume.extend_from_slice(&TOY_SETTINGS);
    let stdout = ok(&brushgan(&resume));
    assert!(stdout.contains("finished 1 epochs (6 steps)"), "{stdout}");
    let log = std::fs::read_to_string(run.join("metrics.log")).unwrap();
    assert_eq!(log.lines().count(), 6);
    assert!(run.join("config.toml").is_file());

    let generate = |out: &Path, chars: &str, style: &str| {
        brushgan(&[
            "generate", "--checkpoint", p(&last), "--dictionary", DICTIONARY, "--corpus", p(&corpus),
            "--chars", chars, "--style", style, "--out", p(out),
        ])
    };
    let gen_a = dir.path().join("gen_a");
    let stdout = ok(&generate(&gen_a, "永和", "2"));
    assert_eq!(stdout.lines().count(), 2);
    let a = std::fs::read(gen_a.join("6C38_2.png")).unwrap();
    assert!(gen_a.join("548C_2.png").is_file());
    let img = image::open(gen_a.join("6C38_2.png")).unwrap();
    assert_eq!((img.width(), img.height()), (256, 256));
    let gen_b = dir.path().join("gen_b");
    ok(&generate(&gen_b, "永和", "2"));
    assert!(std::fs::read(gen_b.join("6C38_2.png")).unwrap() == a, "generation is not deterministic");
    // alone, the component batch is padded differently; only rounding may change
    let gen_c = dir.path().join("gen_c");
    ok(&generate(&gen_c, "永", "2"));
    let alone = image::open(gen_c.join("6C38_2.png")).unwrap().to_luma8();
    let paired = img.to_luma8();
    assert!(alone.pixels().zip(paired.pixels()).all(|(x, y)| x[0].abs_diff(y[0]) <= 1));

    assert_eq!(code(&generate(&dir.path().join("x"), "永", "9")), 2);
    assert_eq!(code(&generate(&dir.path().join("x"), "永", "0")), 2);
    // in the dictionary but without a source glyph, then not in the dictionary
    assert_eq!(code(&generate(&dir.path().join("x"), "河", "1")), 3);
    let out = generate(&dir.path().join("x"), "山", "1");
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("5C71"));

    let tsv = dir.path().join("eval.tsv");
    let stdout = ok(&brushgan(&[
        "evaluate", "--checkpoint", p(&last), "--test-manifest", SPLIT, "--corpus", p(&corpus),
        "--dictionary", DICTIONARY, "--cache", p(&cache), "--out", p(&tsv),
    ]));
    assert!(stdout.contains("excluded 0"), "{stdout}");
    let report = std::fs::read_to_string(&tsv).unwrap();
    // two test characters in each of three styles
    assert!(report.lines().last().unwrap().starts_with("all\t6\t"), "{report}");
}

#[test]
fn evaluate_excludes_missing_test_images() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = toy_corpus(dir.path());
    let run = dir.path().join("run");
    let mut args = vec![
        "train", "--corpus", p(&corpus), "--dictionary", DICTIONARY, "--split", SPLIT,
        "--out", p(&run), "--styles-count", "3", "--max-steps", "1",
    ];
    args.extend_from_slice(&TOY_SETTINGS);
    ok(&brushgan(&args));

    let split = std::fs::read_to_string(SPLIT).unwrap();
    let test_hex = split.lines().find(|l| l.ends_with("\ttest")).unwrap().split('\t').next().unwrap();
    std::fs::remove_file(corpus.join("2").join(format!("{test_hex}.png"))).unwrap();
    let stdout = ok(&brushgan(&[
        "evaluate", "--checkpoint", p(&run.join("last.ckpt")), "--split", SPLIT,
        "--corpus", p(&corpus), "--dictionary", DICTIONARY,
    ]));
    assert!(stdout.contains("excluded 1"), "{stdout}");
}

#[test]
fn ablation_writes_a_four_row_table() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = toy_corpus(dir.path());
    let table = dir.path().join("ablation.tsv");
    let mut args = vec![
        "ablate", "--corpus", p(&corpus), "--dictionary", DICTIONARY, "--split", SPLIT,
        "--out", p(&table), "--styles-count", "3",
    ];
    args.extend_from_slice(&TOY_SETTINGS);
    let stdout = ok(&brushgan(&args));
    assert!(stdout.contains("onehot+components"), "{stdout}");
    let tsv = std::fs::read_to_string(&table).unwrap();
    let rows: Vec<&str> = tsv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4, "{tsv}");

    let matrix = dir.path().join("matrix.txt");
    let mut custom = args.clone();
    custom.extend(["--matrix", p(&matrix)]);
    std::fs::write(&matrix, "only onehot maybe\n").unwrap();
    assert_eq!(code(&brushgan(&custom)), 2);
    std::fs::write(&matrix, "# one row\nonly onehot on\n").unwrap();
    ok(&brushgan(&custom));
    let tsv = std::fs::read_to_string(&table).unwrap();
    assert_eq!(tsv.lines().count(), 2, "{tsv}");
    assert!(tsv.lines().nth(1).unwrap().starts_with("only\tonehot\ttrue\t"), "{tsv}");
}
