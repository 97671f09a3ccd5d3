use std::fs;
use std::path::{Path, PathBuf};

use proptest::prelude::*;

use lexevo_core::metrics::{analyze_run, distinct_n, entropy, tokenize, MetricsError};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn golden_tables() {
    let a = analyze_run(&fixture("metrics_run"), Some(2), Some("golden".into())).unwrap();
    let read = |name| fs::read_to_string(fixture(name)).unwrap();
    assert_eq!(a.metrics_csv(), read("metrics_golden.csv"));
    assert_eq!(a.rounds_csv(), read("rounds_golden.csv"));
    assert_eq!(a.summary_csv(), read("summary_golden.csv"));
}

#[test]
fn write_puts_three_tables_in_the_directory() {
    let tmp = tempfile::tempdir().unwrap();
    for f in ["trial-001.jsonl", "trial-002.jsonl"] {
        fs::copy(fixture("metrics_run").join(f), tmp.path().join(f)).unwrap();
    }
    let a = analyze_run(tmp.path(), None, None).unwrap();
    let written = a.write(tmp.path()).unwrap();
    assert_eq!(written.len(), 3);
    let summary = fs::read_to_string(tmp.path().join("summary.csv")).unwrap();
    assert!(summary.starts_with("label,total_turns,avg_entropy,avg_distinct1\n"));
}

#[test]
fn empty_directory_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(analyze_run(tmp.path(), None, None), Err(MetricsError::Empty(_))));
}

#[test]
fn malformed_line_names_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("trial-001.jsonl"), "{\"v\":1,\n").unwrap();
    match analyze_run(tmp.path(), None, None) {
        Err(MetricsError::Read { file, .. }) => assert!(file.ends_with("trial-001.jsonl")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn distinct_n_is_not_symmetric_in_order() {
    // same multiset, different bigram diversity
    let a = ["a", "b", "a", "b"];
    let b = ["a", "a", "b", "b"];
    assert_eq!(distinct_n(&a, 1), distinct_n(&b, 1));
    assert_eq!(distinct_n(&a, 2), Some(2.0 / 3.0));
    assert_eq!(distinct_n(&b, 2), Some(1.0));
}

#[test]
fn tokenizer_folds_case_and_keeps_cjk_runs_together() {
    assert_eq!(tokenize("Straße STRASSE"), ["strasse", "strasse"]);
    assert_eq!(tokenize("Hello, 世界!"), ["hello", "世界"]);
    assert_eq!(tokenize("... -- !!"), Vec::<String>::new());
}

proptest! {
    #[test]
    fn entropy_ignores_order(mut tokens in prop::collection::vec(0u8..12, 1..80), seed in any::<u64>()) {
        let before = entropy(&tokens).unwrap();
        let n = tokens.len();
        tokens.rotate_left((seed as usize) % n);
        tokens.reverse();
        prop_assert!((entropy(&tokens).unwrap() - before).abs() < 1e-12);
    }

    #[test]
    fn entropy_is_bounded_by_log_of_types(tokens in prop::collection::vec(0u8..12, 1..80)) {
        let h = entropy(&tokens).unwrap();
        let types = tokens.iter().collect::<std::collections::BTreeSet<_>>().len();
        prop_assert!(h >= 0.0);
        prop_assert!(h <= (types as f64).log2() + 1e-12);
    }

    #[test]
    fn distinct_n_is_a_fraction(tokens in prop::collection::vec(0u8..6, 0..60), n in 1usize..4) {
        match distinct_n(&tokens, n) {
            None => prop_assert!(tokens.len() < n),
            Some(d) => {
                prop_assert!(d > 0.0 && d <= 1.0);
                prop_assert!(tokens.len() >= n);
            }
        }
    }
}
