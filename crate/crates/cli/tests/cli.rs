use std::path::Path;
use std::process::{Command, Output};

fn adaptidx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adaptidx")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = adaptidx(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Generates and uploads a 20-block synthetic dataset.
fn uploaded(dir: &Path) -> std::path::PathBuf {
    let data = dir.join("data.csv");
    let config = dir.join("cluster.toml");
    std::fs::write(
        &config,
        "nodes = 3\nslots_per_node = 1\nreplication = 2\nblock_records = 500\npage_size_records = 64\n\
         [indexer]\nbuild_queue_capacity = 64\n",
    )
    .unwrap();
    ok(&["gen-synthetic", "--rows", "10000", "--seed", "3", "--out", s(&data)]);
    let root = dir.join("root");
    let out = ok(&["upload", "--config", s(&config), "--root", s(&root), "--data", s(&data)]);
    assert!(out.contains("20 blocks"), "{out}");
    root
}

fn report_rows(path: &Path) -> Vec<serde_json::Value> {
    serde_json::from_slice::<Vec<serde_json::Value>>(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn generation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a.csv"), dir.path().join("b.csv"), dir.path().join("c.csv"));
    ok(&["gen-uservisits", "--rows", "300", "--seed", "9", "--out", s(&a)]);
    ok(&["gen-uservisits", "--rows", "300", "--seed", "9", "--out", s(&b)]);
    ok(&["gen-uservisits", "--rows", "300", "--seed", "10", "--out", s(&c)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
    assert!(!adaptidx(&["gen-synthetic", "--rows", "0", "--out", s(&a)]).status.success());
}

#[test]
fn constant_rate_workload_converges() {
    let dir = tempfile::tempdir().unwrap();
    let root = uploaded(dir.path());
    let jobs = dir.path().join("jobs.json");
    let job = r#"{"predicate": {"attr": "b", "low": 0, "high": 200000}, "projection": ["a", "b"], "offer_rate": 0.25}"#;
    std::fs::write(&jobs, vec![job; 6].join("\n")).unwrap();
    let (csv, json, tasks, plans) =
        (dir.path().join("r.csv"), dir.path().join("r.json"), dir.path().join("t.jsonl"), dir.path().join("plan.txt"));
    ok(&[
        "run", "--root", s(&root), "--jobs", s(&jobs), "--csv", s(&csv), "--json", s(&json), "--tasks", s(&tasks),
        "--plan-dump", s(&plans),
    ]);
    let rows = report_rows(&json);
    let fractions: Vec<f64> = rows.iter().map(|r| r["indexed_fraction"].as_f64().unwrap()).collect();
    assert_eq!(fractions, [0.25, 0.5, 0.75, 1.0, 1.0, 1.0]);
    let outs: Vec<u64> = rows.iter().map(|r| r["records_out"].as_u64().unwrap()).collect();
    assert!(outs.iter().all(|&o| o == outs[0] && o > 0));
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 7);
    let task_lines = std::fs::read_to_string(&tasks).unwrap();
    assert!(task_lines.lines().all(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["task"].is_object()));
    let dump = std::fs::read_to_string(&plans).unwrap();
    assert_eq!(dump.lines().filter(|l| l.starts_with("block=")).count(), 6 * 20);

    let table = ok(&["report", "--input", s(&json)]);
    assert_eq!(table.lines().count(), 7);
    assert!(table.lines().next().unwrap().contains("indexed_fraction"));
    let as_csv = ok(&["report", "--input", s(&json), "--format", "csv"]);
    assert_eq!(as_csv, std::fs::read_to_string(&csv).unwrap());
}

#[test]
fn reruns_are_deterministic() {
    let reports: Vec<Vec<serde_json::Value>> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let root = uploaded(dir.path());
            let jobs = dir.path().join("jobs.json");
            let config = dir.path().join("eager.toml");
            // Scan cost dominated by bytes read, as with full-size blocks.
            std::fs::write(
                &config,
                "[policy]\nmode = \"eager\"\n[timing]\ntask_overhead = 0.05\nper_block = 0.0\nper_byte = 1e-5\n\
                 [indexer]\nbuild_queue_capacity = 64\n",
            )
            .unwrap();
            let job = r#"{"predicate": {"attr": "c", "low": 5000, "high": 90000}}"#;
            std::fs::write(&jobs, vec![job; 4].join("\n")).unwrap();
            let json = dir.path().join("r.json");
            ok(&["run", "--root", s(&root), "--jobs", s(&jobs), "--config", s(&config), "--json", s(&json)]);
            report_rows(&json)
        })
        .collect();
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0][0]["mode"], "eager-fallback");
    let rhos: Vec<f64> = reports[0].iter().map(|r| r["rho"].as_f64().unwrap()).collect();
    assert!(rhos.windows(2).all(|w| w[0] <= w[1]), "{rhos:?}");
}

#[test]
fn empty_jobs_file_gives_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let root = uploaded(dir.path());
    let jobs = dir.path().join("jobs.json");
    std::fs::write(&jobs, "").unwrap();
    let (csv, json) = (dir.path().join("r.csv"), dir.path().join("r.json"));
    ok(&["run", "--root", s(&root), "--jobs", s(&jobs), "--csv", s(&csv), "--json", s(&json)]);
    assert!(report_rows(&json).is_empty());
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 1);
}

#[test]
fn failing_job_exits_nonzero_with_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let root = uploaded(dir.path());
    // Index every block on b, then lose the normal replicas: jobs on b still
    // run from the pseudo replicas, a job on c cannot.
    let warm = dir.path().join("warm.json");
    std::fs::write(&warm, r#"{"predicate": {"attr": "b", "low": 0, "high": 100}, "offer_rate": 1.0}"#).unwrap();
    ok(&["run", "--root", s(&root), "--jobs", s(&warm)]);
    for entry in walk(&root) {
        if entry.components().any(|c| c.as_os_str() == "blocks") && entry.is_file() {
            std::fs::remove_file(entry).unwrap();
        }
    }
    let jobs = dir.path().join("jobs.json");
    std::fs::write(
        &jobs,
        "{\"predicate\": {\"attr\": \"b\", \"low\": 0, \"high\": 100}}\n{\"predicate\": {\"attr\": \"c\", \"low\": 0, \"high\": 100}}\n",
    )
    .unwrap();
    let json = dir.path().join("r.json");
    let out = adaptidx(&["run", "--root", s(&root), "--jobs", s(&jobs), "--json", s(&json)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("job2"));
    let rows = report_rows(&json);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["job_id"], "job1");
}

#[test]
fn run_requires_an_uploaded_cluster() {
    let dir = tempfile::tempdir().unwrap();
    let jobs = dir.path().join("jobs.json");
    std::fs::write(&jobs, "").unwrap();
    let out = adaptidx(&["run", "--root", s(&dir.path().join("nope")), "--jobs", s(&jobs)]);
    assert!(!out.status.success());
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}
