//! Compares fresh runs against the checked-in golden files in `tests/golden/`.
//! Regenerate a file by rerunning its command with `--bless`.

use std::path::PathBuf;

const CASES: &[(&str, &[&str])] = &[
    ("rank_1_2_3.jsonl", &["rank", "--d", "3", "--n", "2", "--r", "1", "--p", "3,5,7,11"]),
    ("prim_3_2.jsonl", &["prim", "--d", "3", "--n", "2", "--q", "1..8", "--check", "count,gl"]),
    ("kloos_weil.jsonl", &["kloos", "--n", "1", "--q", "1..50", "--check", "weil"]),
    ("gon_minkowski.jsonl", &["gon", "--check", "minkowski", "--seed", "0"]),
    ("small_hist.jsonl", &["small", "--check", "hist", "--q", "25,50"]),
    ("equi_weyl.jsonl", &["equi", "--check", "decay", "--mode", "weyl", "--q", "3..200"]),
];

#[test]
fn golden_files_match() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let tmp = tempfile::tempdir().unwrap();
    for (file, args) in CASES {
        let golden = dir.join(file);
        let out = tmp.path().join(file);
        let extra = ["--golden", golden.to_str().unwrap(), "--out", out.to_str().unwrap()];
        let code = horo_cli::run(std::iter::once("horo").chain(args.iter().copied()).chain(extra));
        assert_eq!(code, 0, "{file} differs from its golden file or failed a check");
    }
}
