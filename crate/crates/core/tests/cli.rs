use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use tempfile::TempDir;

const C5: &str = "# five-node ring\n5\n1 2\n2 3\n3 4\n4 5\n5 1\n";
const RING_CONFIG: &str = "security_degrees = 2,3,4,2,3\ndefault_key = 4,7,15,3\nkappa = 20\n";

struct Run {
    code: i32,
    stdout: String,
}

fn run(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_shamir-consensus"))
        .args(args)
        .output()
        .unwrap();
    Run {
        code: out.status.code().unwrap(),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
    }
}

fn workspace(graph: &str, config: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("g.txt"), graph).unwrap();
    fs::write(dir.path().join("run.cfg"), config).unwrap();
    dir
}

fn arg(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn spectral_reports_norm_bound_and_rounds() {
    let ws = workspace(C5, "");
    let r = run(&["spectral", "--graph", &arg(&ws, "g.txt")]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert!(r.stdout.contains("spectral norm: 0.654508497187"), "{}", r.stdout);
    assert!(r.stdout.contains("N = 5"));
    assert!(r.stdout.contains("kappa 20): 15"), "{}", r.stdout);
}

#[test]
fn consensus_writes_traces_and_reruns_identically() {
    let ws = workspace(C5, RING_CONFIG);
    let out = arg(&ws, "out");
    let args = ["consensus", "--graph", &arg(&ws, "g.txt"), "--config", &arg(&ws, "run.cfg"), "--seed", "7", "--out", &out];
    let first = run(&args);
    assert_eq!(first.code, 0, "{}", first.stdout);
    assert!(first.stdout.contains("convergence round:"));
    let files = snapshot(Path::new(&out));
    for name in ["states.csv", "channel_sums.csv", "buffers_channel_4.csv", "buffers_channel_15.csv"] {
        assert!(files.contains_key(name), "missing {name}");
    }
    let states = String::from_utf8(files["states.csv"].clone()).unwrap();
    assert!(states.starts_with("round,node,x\n"));
    assert!(String::from_utf8_lossy(&files["channel_sums.csv"]).starts_with("round,channel,sum,lyapunov\n"));

    let refused = run(&args);
    assert_eq!(refused.code, 2);

    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(run(&forced).code, 0);
    assert_eq!(snapshot(Path::new(&out)), files);
}

#[test]
fn consensus_nonaverage_is_flagged() {
    let ws = workspace(C5, "");
    let r = run(&["consensus", "--graph", &arg(&ws, "g.txt"), "--update", "nonaverage", "--out", &arg(&ws, "o")]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert!(r.stdout.contains("NON-AVERAGE"));
}

#[test]
fn consensus_batch_writes_one_directory_per_seed() {
    let ws = workspace(C5, "");
    let out = arg(&ws, "batch");
    let r = run(&["consensus", "--graph", &arg(&ws, "g.txt"), "--seed", "3", "--batch", "3", "--jobs", "2", "--out", &out]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    let mut dirs: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    dirs.sort();
    assert!(Path::new(&out).join("seed_4").join("states.csv").exists());
    assert_eq!(dirs, ["seed_3", "seed_4", "seed_5"]);
    assert_eq!(r.stdout.matches("convergence round:").count(), 3);
}

#[test]
fn consensus_round_cap_exits_four() {
    let ws = workspace(C5, "round_cap = 3\n");
    let r = run(&["consensus", "--graph", &arg(&ws, "g.txt"), "--config", &arg(&ws, "run.cfg"), "--out", &arg(&ws, "o")]);
    assert_eq!(r.code, 4, "{}", r.stdout);
}

#[test]
fn validation_failures_exit_two() {
    let ws = workspace("4\n1 2\n3 4\n", "bogus = 1\n");
    let disconnected = run(&["consensus", "--graph", &arg(&ws, "g.txt"), "--out", &arg(&ws, "o")]);
    assert_eq!(disconnected.code, 2);
    let bad_config = run(&["spectral", "--graph", &arg(&ws, "g.txt"), "--config", &arg(&ws, "run.cfg")]);
    assert_eq!(bad_config.code, 2);
    assert_eq!(run(&["spectral"]).code, 2);
    assert_eq!(run(&["frobnicate"]).code, 2);

    let ws = workspace(C5, "security_degrees = 2,2\n");
    let mismatch = run(&["consensus", "--graph", &arg(&ws, "g.txt"), "--config", &arg(&ws, "run.cfg"), "--out", &arg(&ws, "o")]);
    assert_eq!(mismatch.code, 2);
}

#[test]
fn keydist_writes_block_history() {
    let ws = workspace(C5, "");
    let out = arg(&ws, "kd");
    let r = run(&["keydist", "--graph", &arg(&ws, "g.txt"), "--seed", "11", "--bar-p", "4", "--out", &out]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    let key_line = r.stdout.lines().find(|l| l.starts_with("key: ")).unwrap();
    let key: Vec<i64> = key_line[5..].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(key.len(), 4);
    assert!(key.iter().all(|k| (1..=20).contains(k)));
    let csv = fs::read_to_string(Path::new(&out).join("keydist.csv")).unwrap();
    assert!(csv.starts_with("block,rounds,deviation,flagged,disagreement\n"));
    assert!(csv.lines().count() >= 2);
}

#[test]
fn keydist_rejects_small_kappa() {
    let ws = workspace(C5, "");
    let r = run(&["keydist", "--graph", &arg(&ws, "g.txt"), "--kappa", "6", "--bar-p", "4", "--out", &arg(&ws, "kd")]);
    assert_eq!(r.code, 2, "{}", r.stdout);
}

#[test]
fn keydist_lone_node_can_fail_to_terminate() {
    let ws = workspace("1\n", "");
    let codes: Vec<i32> = (0..40)
        .map(|seed| {
            let out = arg(&ws, &format!("kd{seed}"));
            run(&["keydist", "--graph", &arg(&ws, "g.txt"), "--bar-p", "4", "--seed", &seed.to_string(), "--out", &out]).code
        })
        .collect();
    assert!(codes.contains(&3), "{codes:?}");
    assert!(codes.contains(&0), "{codes:?}");
    assert!(codes.iter().all(|c| *c == 0 || *c == 3));
}

#[test]
fn attack_below_threshold_learns_nothing() {
    let ws = workspace(C5, RING_CONFIG);
    let out = arg(&ws, "atk");
    let r = run(&["attack", "--graph", &arg(&ws, "g.txt"), "--config", &arg(&ws, "run.cfg"), "--collude", "2", "--target", "3", "--out", &out]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert!(r.stdout.contains("first determined round: none"), "{}", r.stdout);
    let csv = fs::read_to_string(Path::new(&out).join("adversary.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("round,mode,target,verdict,free_dim"));
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[2], "3");
        assert_ne!(fields[3], "determined", "{line}");
    }
}

#[test]
fn attack_at_threshold_with_constructed_seed() {
    let ws = workspace(C5, RING_CONFIG);
    // Node 1 has p = 2 and neighbours 2 and 5.
    let r = run(&["attack", "--graph", &arg(&ws, "g.txt"), "--config", &arg(&ws, "run.cfg"), "--collude", "2,5", "--target", "1", "--construct", "--out", &arg(&ws, "atk")]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert!(r.stdout.contains("constructed seed:"));
    assert!(r.stdout.contains("first determined round: 0"), "{}", r.stdout);

    let r = run(&["attack", "--graph", &arg(&ws, "g.txt"), "--config", &arg(&ws, "run.cfg"), "--eavesdrop-edges", "(1,2),(1,5)", "--target", "1", "--knows-key", "--construct", "--out", &arg(&ws, "eve")]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert!(r.stdout.contains("first determined round: 0"), "{}", r.stdout);
}

#[test]
fn attack_needs_exactly_one_adversary() {
    let ws = workspace(C5, "");
    let g = arg(&ws, "g.txt");
    assert_eq!(run(&["attack", "--graph", &g, "--target", "1", "--out", &arg(&ws, "a")]).code, 2);
    assert_eq!(run(&["attack", "--graph", &g, "--collude", "2", "--eavesdrop-edges", "(1,2)", "--target", "1", "--out", &arg(&ws, "b")]).code, 2);
    assert_eq!(run(&["attack", "--graph", &g, "--collude", "1", "--target", "1", "--out", &arg(&ws, "c")]).code, 2);
    assert_eq!(run(&["attack", "--graph", &g, "--eavesdrop-edges", "(1,3)", "--target", "1", "--out", &arg(&ws, "d")]).code, 2);
}
