use std::path::PathBuf;
use std::process::{Command, Output};

use tempfile::TempDir;
use xmlqui::fixtures;

struct Files {
    dir: TempDir,
}

impl Files {
    fn new() -> Files {
        Files { dir: tempfile::tempdir().unwrap() }
    }

    fn put(&self, name: &str, body: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn pair(&self, f: &fixtures::Fixture) -> [PathBuf; 3] {
        [self.put("s.dtd", f.dtd), self.put("q.xq", f.query), self.put("u.xq", f.update)]
    }
}

fn xmlqui(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xmlqui")).args(args).output().unwrap()
}

fn analyze(files: &[PathBuf; 3], extra: &[&str]) -> Output {
    let [s, q, u] = files;
    let mut args = vec!["analyze", "--schema", s.to_str().unwrap(), "--query", q.to_str().unwrap()];
    args.extend(["--update", u.to_str().unwrap()]);
    args.extend(extra);
    xmlqui(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn exit_codes_follow_verdicts() {
    let fs = Files::new();
    let o = analyze(&fs.pair(fixtures::get("fig1").unwrap()), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("independent"));
    let o = analyze(&fs.pair(fixtures::get("d1").unwrap()), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("maybe-dependent"));
}

#[test]
fn missing_or_bad_input_exits_2() {
    let fs = Files::new();
    let [s, q, _] = fs.pair(fixtures::get("fig1").unwrap());
    let missing = fs.dir.path().join("nope.xq");
    let o = analyze(&[s.clone(), q.clone(), missing], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.xq"));
    let bad = fs.put("bad.xq", "delete //b +");
    assert_eq!(analyze(&[s.clone(), q.clone(), bad], &[]).status.code(), Some(2));
    let u = fs.put("u2.xq", "delete //b//c");
    assert_eq!(analyze(&[s, q, u], &["--k", "0"]).status.code(), Some(2));
}

#[test]
fn json_report_shape() {
    let fs = Files::new();
    let o = analyze(&fs.pair(fixtures::get("d1").unwrap()), &["--format", "json", "--k", "2"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["verdict"], "maybe_dependent");
    assert_eq!(v["k"], 2);
    for key in ["k_q", "k_u"] {
        assert!(v[key].is_u64());
    }
    for key in ["parse", "infer_q", "infer_u", "check"] {
        assert!(v["timings_ms"][key].is_f64(), "{key}");
    }
    assert!(v["cdag_stats"]["nodes"].as_u64().unwrap() > 0);
    let w = &v["witnesses"].as_array().unwrap();
    assert!(w.iter().any(|w| w["query_chain"] == "r.a.b" && w["update_chain"] == "r.a.b.f.a:c" && w["kind"] == "RinU"));
    // deterministic apart from timings
    let again: serde_json::Value = serde_json::from_str(&stdout(&analyze(
        &fs.pair(fixtures::get("d1").unwrap()),
        &["--format", "json", "--k", "2"],
    )))
    .unwrap();
    assert_eq!(again["witnesses"], v["witnesses"]);
}

#[test]
fn verbose_lists_frequencies() {
    let fs = Files::new();
    let o = analyze(&fs.pair(fixtures::get("fig1").unwrap()), &["--format", "json", "--verbose"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let tags: Vec<&str> = v["frequencies"].as_array().unwrap().iter().map(|f| f["tag"].as_str().unwrap()).collect();
    assert!(tags.contains(&"c") && tags.contains(&"(other)"));
}

#[test]
fn chains_dot_and_materialized_json() {
    let fs = Files::new();
    let f = fixtures::get("fig1").unwrap();
    let [s, q, u] = fs.pair(f);
    let (s, q, u) = (s.to_str().unwrap(), q.to_str().unwrap(), u.to_str().unwrap());
    let o = xmlqui(&["chains", "--schema", s, "--expr", q, "--role", "query", "--k", "2"]);
    let dot = stdout(&o);
    assert!(dot.starts_with("digraph cdag"));
    assert!(dot.contains("3:c\\nR"), "{dot}");
    let o = xmlqui(&[
        "chains",
        "--schema",
        s,
        "--expr",
        q,
        "--role",
        "query",
        "--k",
        "2",
        "--format",
        "json",
        "--materialize",
    ]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["chains"]["return"], serde_json::json!(["doc.a.c"]));
    let o = xmlqui(&[
        "chains",
        "--schema",
        s,
        "--expr",
        u,
        "--role",
        "update",
        "--k",
        "2",
        "--format",
        "json",
        "--materialize",
    ]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["chains"]["update"], serde_json::json!(["doc.b:c (open)"]));
}

#[test]
fn eval_query_and_update() {
    let fs = Files::new();
    let doc = fs.put("d.xml", "<doc><a><c/></a><b><c/></b></doc>");
    let q = fs.put("q.xq", "//a//c");
    let u = fs.put("u.xq", "delete //b//c");
    let d = doc.to_str().unwrap();
    let o = xmlqui(&["eval", "--doc", d, "--query", q.to_str().unwrap()]);
    assert_eq!(stdout(&o).trim(), "<c/>");
    let o = xmlqui(&["eval", "--doc", d, "--update", u.to_str().unwrap()]);
    assert_eq!(stdout(&o).trim(), "<doc><a><c/></a><b/></doc>");
    let o = xmlqui(&["eval", "--doc", d]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_reports() {
    let fs = Files::new();
    let [s, q, u] = fs.pair(fixtures::get("fig1").unwrap());
    let run = |s: &PathBuf, q: &PathBuf, u: &PathBuf| {
        let o = xmlqui(&[
            "verify",
            "--schema",
            s.to_str().unwrap(),
            "--query",
            q.to_str().unwrap(),
            "--update",
            u.to_str().unwrap(),
            "--max-depth",
            "4",
            "--max-repeat",
            "2",
            "--format",
            "json",
        ]);
        assert_eq!(o.status.code(), Some(0));
        serde_json::from_str::<serde_json::Value>(&stdout(&o)).unwrap()
    };
    let v = run(&s, &q, &u);
    assert_eq!(v["verdict"], "independent");
    assert_eq!(v["counterexamples"], 0);
    assert_eq!(v["sound"], true);

    let s2 = fs.put("c.dtd", fixtures::CONTROL_DTD);
    let q2 = fs.put("q2.xq", "//c");
    let u2 = fs.put("u2.xq", "delete //c");
    let v = run(&s2, &q2, &u2);
    assert_eq!(v["verdict"], "maybe_dependent");
    assert!(v["counterexamples"].as_u64().unwrap() >= 1);

    let u3 = fs.put("u3.xq", "rename //c as a");
    let v = run(&s2, &q2, &u3);
    assert_eq!(v["note"], "no applicable instance");
}

#[test]
fn bench_fixture_family_lists_every_pair() {
    let o = xmlqui(&["bench", "--family", "paper", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v.as_array().unwrap().len(), fixtures::ALL.len());
}
