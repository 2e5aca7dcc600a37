use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn ttc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ttc")).args(args).current_dir(dir).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn triangle() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/triangle.txt")
}

fn built(engine: &str) -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let store = dir.path().join("s.store");
    let o = ttc(
        dir.path(),
        &["build", "--engine", engine, "--contacts", triangle().to_str().unwrap(), "--store", store.to_str().unwrap()],
    );
    assert!(o.status.success(), "{o:?}");
    (dir, store)
}

#[test]
fn can_reach_on_triangle() {
    for engine in ["array", "tree"] {
        let (dir, store) = built(engine);
        let o = ttc(dir.path(), &["query", "--store", store.to_str().unwrap(), "can-reach", "0", "1", "3", "5"]);
        assert_eq!(o.status.code(), Some(0));
        assert_eq!(stdout(&o), "true\n");
        let o = ttc(dir.path(), &["query", "--store", store.to_str().unwrap(), "can-reach", "0", "1", "3", "4"]);
        assert_eq!(stdout(&o), "false\n");
    }
}

#[test]
fn journey_on_triangle() {
    let (dir, store) = built("array");
    let o = ttc(dir.path(), &["query", "--store", store.to_str().unwrap(), "journey", "0", "1", "3", "5"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "0 2 3\n2 1 4\n");
    let o = ttc(dir.path(), &["query", "--store", store.to_str().unwrap(), "journey", "1", "2", "1", "5"]);
    assert_eq!(stdout(&o), "NONE\n");
}

#[test]
fn verify_fifty_random_instances() {
    let dir = TempDir::new().unwrap();
    let o = ttc(dir.path(), &["verify", "--random", "50", "--max-n", "12", "--against-oracle", "--seed", "5"]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    assert!(stdout(&o).starts_with("ok: 50 instances"));
}

#[test]
fn exit_codes() {
    let (dir, store) = built("tree");
    let s = store.to_str().unwrap();
    let code = |args: &[&str]| ttc(dir.path(), args).status.code();
    assert_eq!(code(&["query", "--store", s, "--bogus", "can-reach", "0", "1", "1", "2"]), Some(2));
    assert_eq!(code(&["--page-size", "1000", "query", "--store", s, "is-connected", "1", "2"]), Some(2));
    assert_eq!(code(&["query", "--store", "missing.store", "is-connected", "1", "2"]), Some(3));
    assert_eq!(code(&["build", "--engine", "array", "--contacts", "missing.txt", "--store", "x"]), Some(3));
    assert_eq!(code(&["query", "--store", s, "can-reach", "0", "3", "1", "2"]), Some(4));
    assert_eq!(code(&["query", "--store", s, "can-reach", "0", "1", "5", "6"]), Some(4));
    assert_eq!(code(&["query", "--store", s, "journey", "0", "1", "3", "5"]), Some(6));
    assert_eq!(code(&["build", "--engine", "array", "--contacts", triangle().to_str().unwrap(), "--store", s, "--delta", "2"]), Some(4));

    std::fs::write(dir.path().join("bad.txt"), "0 1 x\n").unwrap();
    assert_eq!(code(&["build", "--engine", "array", "--contacts", "bad.txt", "--store", "y"]), Some(1));
    std::fs::write(dir.path().join("raw.txt"), "5 5 1\n").unwrap();
    assert_eq!(code(&["ingest", "--in", "raw.txt", "--out", "o.txt", "--keep-self-loops"]), Some(6));

    let help = stdout(&ttc(dir.path(), &["--help"]));
    for n in 0..=6 {
        assert!(help.contains(&format!("  {n}  ")), "exit code {n} missing from --help");
    }
}

#[test]
fn generate_ingest_build_round_trip() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    let o = ttc(p, &["--seed", "3", "generate", "--model", "emeg", "--n", "6", "--tau", "8", "--undirected", "--out", "g.txt"]);
    assert!(o.status.success(), "{o:?}");
    let o = ttc(p, &["generate", "--model", "complete", "--n", "4", "--tau", "3", "--out", "c.txt"]);
    assert_eq!(stdout(&o), "wrote 36 contacts to c.txt (n=4, tau=3, delta=1)\n");
    let o = ttc(p, &["build", "--engine", "tree", "--contacts", "c.txt", "--store", "c.ttct", "--shuffle-seed", "9"]);
    assert!(o.status.success());
    assert_eq!(stdout(&ttc(p, &["query", "--store", "c.ttct", "is-connected", "1", "2"])), "true\n");
    assert_eq!(stdout(&ttc(p, &["query", "--store", "c.ttct", "is-connected", "3", "3"])), "false\n");

    std::fs::write(p.join("raw.txt"), "7 9 100\n9 7 100\n7 9 100\n7 7 101\n9 4 0.5 102\n").unwrap();
    let o = ttc(p, &["--delta", "0", "ingest", "--in", "raw.txt", "--out", "r.txt"]);
    assert_eq!(stdout(&o), "wrote 3 contacts to r.txt (n=3, tau=3, delta=0)\n");
    assert_eq!(std::fs::read_to_string(p.join("r.labels.csv")).unwrap(), "id,label\n0,7\n1,9\n2,4\n");
    let o = ttc(p, &["build", "--engine", "array", "--contacts", "r.txt", "--store", "r.ttca"]);
    assert!(o.status.success(), "{o:?}");
    let o = ttc(p, &["query", "--store", "r.ttca", "--labels", "r.labels.csv", "journey", "0", "2", "1", "3"]);
    assert_eq!(stdout(&o), "7 9 1\n9 4 3\n");
}

#[test]
fn bench_writes_csv_and_summary() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    assert!(ttc(p, &["generate", "--model", "complete", "--n", "5", "--tau", "4", "--out", "c.txt"]).status.success());
    let o = ttc(
        p,
        &[
            "--cache-pages", "0", "--page-size", "512", "bench", "--contacts", "c.txt", "--checkpoints", "40,80", "--reps", "2",
            "--csv", "b.csv", "--summary", "s.csv", "--queries", "10",
        ],
    );
    assert!(o.status.success(), "{o:?}");
    let csv = std::fs::read_to_string(p.join("b.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "engine,n,tau,delta,inserted,repetition,elapsed_ns,device_reads,device_writes");
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2);
    let summary = std::fs::read_to_string(p.join("s.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 2);
    assert!(summary.lines().nth(1).unwrap().starts_with("ttc-array,5,4,1,40,2,"));
    let text = stdout(&o);
    assert!(text.contains("ttc-tree: 10 can-reach queries"), "{text}");
    // temporary stores are cleaned up
    let left: Vec<_> = std::fs::read_dir(p).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(left.len(), 4, "{left:?}");
}
