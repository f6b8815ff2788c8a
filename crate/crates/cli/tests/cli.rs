use horo_cli::config::{parse_boxes, parse_config, parse_range};
use horo_cli::record::{parse_jsonl, parse_record, to_jsonl, ResultRecord};
use horo_cli::run;
use proptest::prelude::*;
use std::fs;

fn horo(args: &[&str]) -> i32 {
    run(std::iter::once("horo").chain(args.iter().copied()))
}

fn records(path: &std::path::Path) -> Vec<ResultRecord> {
    parse_jsonl(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn passing_run_exits_zero_and_writes_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("weil.jsonl");
    assert_eq!(horo(&["kloos", "--n", "1", "--q", "1..30", "--check", "weil", "--out", out.to_str().unwrap()]), 0);
    let recs = records(&out);
    assert_eq!(recs.len(), 29);
    assert!(recs.iter().all(|r| r.op == "kloos.bound" && r.pass == Some(true)));
}

#[test]
fn empty_range_gives_no_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("empty.jsonl");
    assert_eq!(horo(&["prim", "--q", "5..1", "--out", out.to_str().unwrap()]), 0);
    assert!(fs::read_to_string(&out).unwrap().is_empty());
}

#[test]
fn infeasible_and_invalid_requests_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("err.jsonl");
    let o = out.to_str().unwrap();
    assert_eq!(horo(&["prim", "--d", "3", "--n", "2", "--q", "12", "--cap", "1000", "--out", o]), 2);
    let diag = records(&out);
    assert_eq!(diag[0].op, "error");
    assert_eq!(diag[0].values["kind"], "infeasible");
    assert_eq!(horo(&["kloos", "--check", "crt", "--q", "6", "--out", o]), 2);
    assert_eq!(records(&out)[0].values["kind"], "invalid");
    assert_eq!(horo(&["kloos", "--check", "nonsense", "--out", o]), 2);
    assert_eq!(horo(&["rank", "--p", "4", "--out", o]), 2);
    assert_eq!(horo(&["kloos", "--q", "1..x", "--out", o]), 2);
    assert_eq!(horo(&["kloos", "--bogus-flag"]), 2);
}

#[test]
fn failing_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fail.jsonl");
    let code = horo(&[
        "equi", "--check", "hecke_ratio", "--set", "small=200..500", "--set", "large=2..20", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    assert_eq!(records(&out)[0].pass, Some(false));
}

#[test]
fn config_file_and_flags_merge() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, "# counting run\nd = 3\nn = 2\nq = 1..4\ncheck = count\n").unwrap();
    let out = dir.path().join("out.jsonl");
    let args = ["prim", "--config", cfg.to_str().unwrap(), "--q", "5", "--out", out.to_str().unwrap()];
    assert_eq!(horo(&args), 0);
    let recs = records(&out);
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].params["q"], 5);
    assert_eq!(recs[0].params["d"], 3);
}

#[test]
fn golden_bless_then_compare() {
    let dir = tempfile::tempdir().unwrap();
    let golden = dir.path().join("golden.jsonl");
    let out = dir.path().join("out.jsonl");
    let (g, o) = (golden.to_str().unwrap(), out.to_str().unwrap());
    let base = ["rank", "--p", "3,5", "--out", o, "--golden", g];
    assert_eq!(horo(&[&base[..], &["--bless"]].concat()), 0);
    assert_eq!(horo(&base), 0);
    let mut recs = records(&golden);
    recs[0].values.insert("count".into(), 1.into());
    fs::write(&golden, to_jsonl(&recs).unwrap()).unwrap();
    assert_eq!(horo(&base), 1);
}

#[test]
fn seeded_runs_repeat_and_csv_has_a_header() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        let args = ["small", "--check", "grid", "--set", "cases=5", "--seed", "9", "--format", "csv", "--out", p.to_str().unwrap()];
        assert_eq!(horo(&args), 0);
    }
    let (ta, tb) = (fs::read_to_string(&a).unwrap(), fs::read_to_string(&b).unwrap());
    assert_eq!(ta, tb);
    assert!(ta.starts_with("op,"));
    assert_eq!(ta.lines().count(), 6);
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("self.jsonl");
    assert_eq!(horo(&["selftest", "--seed", "4", "--out", out.to_str().unwrap()]), 0);
    assert!(records(&out).len() > 20);
}

fn json_value() -> impl Strategy<Value = serde_json::Value> {
    let leaf = prop_oneof![
        any::<bool>().prop_map(serde_json::Value::from),
        any::<i64>().prop_map(serde_json::Value::from),
        any::<u64>().prop_map(serde_json::Value::from),
        (-1e300f64..1e300).prop_map(serde_json::Value::from),
        "[a-z0-9 ,\"]{0,12}".prop_map(serde_json::Value::from),
    ];
    leaf.prop_recursive(2, 8, 4, |inner| prop::collection::vec(inner, 0..4).prop_map(serde_json::Value::from))
}

proptest! {
    #[test]
    fn records_round_trip(
        op in "[a-z.]{1,10}",
        params in prop::collection::btree_map("[a-z]{1,5}", json_value(), 0..4),
        values in prop::collection::btree_map("[a-z_]{1,6}", json_value(), 0..5),
        pass in prop::option::of(any::<bool>()),
        big in any::<u128>(),
    ) {
        let mut r = ResultRecord::new(&op).count("big", big);
        r.params.extend(params);
        r.values.extend(values);
        r.pass = pass;
        let line = to_jsonl(std::slice::from_ref(&r)).unwrap();
        prop_assert_eq!(parse_record(line.trim_end()).unwrap(), r);
    }

    #[test]
    fn ranges_expand_inclusively(a in 0u64..1000, len in 0u64..200, step in 1u64..7) {
        let b = a + len;
        let v = parse_range(&format!("{a}..{b}:{step}")).unwrap();
        prop_assert_eq!(v.len() as u64, len / step + 1);
        prop_assert!(v.iter().all(|&x| x >= a && x <= b && (x - a) % step == 0));
        let reversed = format!("{}..{}", b + 1, a);
        prop_assert!(parse_range(&reversed).unwrap().is_empty());
    }

    #[test]
    fn config_round_trips(entries in prop::collection::btree_map("[a-z][a-z0-9_.]{0,8}", "[a-z0-9.,:]{1,10}", 0..6)) {
        let text: String = entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        prop_assert_eq!(parse_config(&text).unwrap(), entries);
    }

    #[test]
    fn box_volumes_add_up(lo in prop::collection::vec(-5.0f64..5.0, 1..4), ext in prop::collection::vec(0.01f64..3.0, 3)) {
        let hi: Vec<f64> = lo.iter().zip(&ext).map(|(l, e)| l + e).collect();
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let region = parse_boxes(&format!("{}:{}", fmt(&lo), fmt(&hi))).unwrap();
        let vol: f64 = ext[..lo.len()].iter().product();
        prop_assert!((region.volume() - vol).abs() <= 1e-12 * vol.max(1.0));
    }
}
