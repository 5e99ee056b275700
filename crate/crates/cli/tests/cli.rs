use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bba(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bba"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

struct TempDir(PathBuf);

impl TempDir {
    fn new(tag: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("bba-cli-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        TempDir(dir)
    }

    fn file(&self, name: &str) -> String {
        self.0.join(name).to_str().unwrap().to_owned()
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn write(path: &str, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn styles_compare_equal_on_the_default_network() {
    let d = TempDir::new("styles");
    let (rec, lp) = (d.file("rec.aut"), d.file("loop.aut"));
    assert!(bba(&[
        "generate",
        "--nodes",
        "4",
        "--honest",
        "4",
        "--threshold",
        "3",
        "--style",
        "rec",
        "-o",
        &rec
    ])
    .status
    .success());
    assert!(
        bba(&["--jobs", "2", "generate", "--nodes", "4", "--style", "loop", "-o", &lp])
            .status
            .success()
    );
    let o = bba(&["compare", "--relation", "branching", &rec, &lp]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(bba(&["compare", "--relation", "strong", &rec, &lp])
        .status
        .success());
}

#[test]
fn sync_slice_of_the_default_network_has_two_states() {
    let d = TempDir::new("sync");
    let (full, hidden, min) = (d.file("a.aut"), d.file("h.aut"), d.file("m.aut"));
    assert!(bba(&["generate", "-o", &full]).status.success());
    let o = bba(&["deadlocks", &full]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "no deadlocks");
    assert!(
        bba(&["hide", "--pattern", "(?!SYNC).*", &full, "-o", &hidden])
            .status
            .success()
    );
    assert!(
        bba(&["minimize", "--relation", "branching", &hidden, "-o", &min])
            .status
            .success()
    );
    let o = bba(&["stats", &min]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("states: 2\n"), "{out}");
    assert!(out.contains("transitions: 2\n"), "{out}");
    // --keep is the complementary way to slice
    let kept = d.file("k.aut");
    assert!(bba(&["hide", "--keep", "SYNC .*", &full, "-o", &kept])
        .status
        .success());
    assert!(bba(&["compare", &hidden, &kept]).status.success());
}

#[test]
fn deadlocks_are_reported_with_traces() {
    let d = TempDir::new("dead");
    let f = d.file("chain.aut");
    write(&f, "des (0, 2, 3)\n(0, \"a\", 1)\n(1, \"b !1\", 2)\n");
    let o = bba(&["deadlocks", &f]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o).trim(), "state 2: a; b !1");
    let dot = d.file("chain.dot");
    assert!(bba(&["export-dot", "--deadlocks-red", &f, "-o", &dot])
        .status
        .success());
    let text = std::fs::read_to_string(&dot).unwrap();
    assert!(text.starts_with("digraph"));
    assert_eq!(text.matches("fillcolor=red").count(), 1);
}

#[test]
fn distinct_systems_exit_one_with_a_diagnostic() {
    let d = TempDir::new("distinct");
    let (a, b, json) = (d.file("a.aut"), d.file("b.aut"), d.file("v.json"));
    write(&a, "des (0, 2, 2)\n(0, \"a\", 1)\n(1, \"b\", 0)\n");
    write(&b, "des (0, 2, 2)\n(0, \"a\", 1)\n(1, \"c\", 0)\n");
    let o = bba(&["compare", "--relation", "strong", &a, &b, "--json", &json]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("distinct"));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["equal"], false);
    assert_eq!(v["relation"], "strong");
    assert_eq!(v["diagnostic_trace"], serde_json::json!(["a"]));
}

#[test]
fn rename_and_product() {
    let d = TempDir::new("rename");
    let (a, b, r, p) = (
        d.file("a.aut"),
        d.file("b.aut"),
        d.file("r.aut"),
        d.file("p.aut"),
    );
    write(
        &a,
        "des (0, 2, 2)\n(0, \"TALLY !1 !2 !0\", 1)\n(1, \"SYNC !END\", 0)\n",
    );
    write(&b, "des (0, 1, 1)\n(0, \"SYNC !END\", 0)\n");
    assert!(bba(&[
        "rename",
        "--rule",
        "TALLY !(\\d+) !\\d+ !\\d+=>TALLY !$1 !X !X",
        &a,
        "-o",
        &r
    ])
    .status
    .success());
    let text = std::fs::read_to_string(&r).unwrap();
    assert!(text.contains("\"TALLY !1 !X !X\""), "{text}");
    let o = bba(&["product", "--sync", "SYNC", &r, &b, "-o", &p]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "2 states, 2 transitions");
}

#[test]
fn check_writes_json_and_baselines() {
    let d = TempDir::new("check");
    let (json, base) = (d.file("report.json"), d.file("baselines"));
    std::fs::create_dir_all(&base).unwrap();
    let args = [
        "check",
        "--nodes",
        "2",
        "--honest",
        "1",
        "--threshold",
        "2",
        "--baselines",
        &base,
        "--json",
        &json,
    ];
    let mut frozen = args.to_vec();
    frozen.push("--freeze");
    assert_eq!(bba(&frozen).status.code(), Some(0));
    assert!(Path::new(&base).join("P6_n2_h1_t2.aut").exists());
    let o = bba(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let verdicts: Vec<&str> = report["properties"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["verdict"].as_str().unwrap())
        .collect();
    assert!(verdicts.iter().all(|v| *v == "pass"), "{verdicts:?}");
    // a tampered baseline fails the check
    write(
        &Path::new(&base).join("P7_n2_h1_t2.aut").to_string_lossy(),
        "des (0, 0, 1)\n",
    );
    assert_eq!(bba(&args).status.code(), Some(1));
}

#[test]
fn config_file_with_flag_override() {
    let d = TempDir::new("config");
    let (cfg, out) = (d.file("cfg.json"), d.file("a.aut"));
    write(&cfg, r#"{"n": 2, "h": 2, "t": 2}"#);
    let o = bba(&["generate", "--config", &cfg, "--honest", "1", "-o", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let direct = d.file("b.aut");
    assert!(bba(&[
        "generate",
        "--nodes",
        "2",
        "--honest",
        "1",
        "--threshold",
        "2",
        "-o",
        &direct
    ])
    .status
    .success());
    assert_eq!(
        std::fs::read(&out).unwrap(),
        std::fs::read(&direct).unwrap()
    );
}

#[test]
fn usage_and_io_errors_exit_two() {
    assert_eq!(bba(&["stats", "/nonexistent/x.aut"]).status.code(), Some(2));
    assert_eq!(
        bba(&[
            "generate",
            "--nodes",
            "4",
            "--honest",
            "5",
            "-o",
            "/dev/null"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        bba(&["minimize", "--relation", "weak", "x", "-o", "y"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(bba(&["frobnicate"]).status.code(), Some(2));
    let d = TempDir::new("bad");
    let f = d.file("bad.aut");
    write(&f, "des (0, 1, 1)\n(0, \"a\" 0)\n");
    let o = bba(&["stats", &f]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.aut"));
    let o = bba(&["hide", "--pattern", "(", &f, "-o", &f]);
    assert_eq!(o.status.code(), Some(2));
}
