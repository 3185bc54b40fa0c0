use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use iotweave::sim::trace::{parse_jsonl, without_source};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn iotweave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iotweave"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(name: &str) -> String {
    root().join("manifests").join(name).display().to_string()
}

fn demo_scenario() -> String {
    root().join("scenarios/demo.scn").display().to_string()
}

#[test]
fn demo_prints_the_comparison() {
    let o = iotweave(&["demo"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("iot-java: CoI(J)=0.19, CoI(AJ)=-, avg=0.19"));
    assert!(text.contains("iot-aspectj: CoI(J)=0.38, CoI(AJ)=1.00, avg=0.69"));
    assert_eq!(text, stdout(&iotweave(&["demo"])));
}

#[test]
fn demo_out_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = iotweave(&["demo", "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read_dir(&out).unwrap().count(), 5);
    assert_eq!(
        fs::read_to_string(out.join("iot-java.cm")).unwrap(),
        fs::read_to_string(manifest("iot-java.cm")).unwrap()
    );
}

#[test]
fn demo_with_corrupted_golden_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(manifest("iot-java.cm"), dir.path().join("iot-java.cm")).unwrap();
    let woven = fs::read_to_string(manifest("iot-aspectj.cm")).unwrap();
    fs::write(dir.path().join("iot-aspectj.cm"), woven.replace("caching", "cache")).unwrap();
    let o = iotweave(&["demo", "--golden", path_str(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("manifest") && err.contains("iot-aspectj"), "{err}");
}

#[test]
fn metrics_rows() {
    let o = iotweave(&["metrics", "--manifest", &manifest("iot-java.cm")]);
    assert_eq!(o.status.code(), Some(0));
    let row: Vec<String> = stdout(&o)
        .lines()
        .nth(1)
        .unwrap()
        .split_whitespace()
        .map(String::from)
        .collect();
    assert_eq!(row, ["iot-java", "0.19", "-", "0.19"]);

    let o = iotweave(&["metrics", "--manifest", &manifest("iot-aspectj.cm"), "--format", "csv"]);
    assert_eq!(stdout(&o).lines().nth(1), Some("iot-aspectj,0.38,1.00,0.69"));

    let dir = tempfile::tempdir().unwrap();
    let single = dir.path().join("single.cm");
    fs::write(&single, "class Sensor: read, write\n").unwrap();
    let o = iotweave(&["metrics", "--manifest", path_str(&single), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("\"coi_classes\": 0.5"), "{}", stdout(&o));
}

#[test]
fn compare_reports_the_delta() {
    let (java, aj) = (manifest("iot-java.cm"), manifest("iot-aspectj.cm"));
    let o = iotweave(&["compare", "--left", &java, "--right", &aj]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("delta CoI(J) +0.19"), "{}", stdout(&o));

    let o = iotweave(&["compare", "--left", &java, "--right", &java]);
    assert!(stdout(&o).contains("delta CoI(J) 0.00"), "{}", stdout(&o));

    let o = iotweave(&["compare", "--left", &aj, "--right", &java, "--format", "csv"]);
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[2], "iot-java,0.19,,0.19");
    assert!(stderr(&o).contains("delta CoI(J)"));
}

#[test]
fn simulate_is_deterministic_and_mode_independent() {
    let dir = tempfile::tempdir().unwrap();
    let mut traces = Vec::new();
    for (mode, name) in [("woven", "a"), ("woven", "b"), ("tangled", "c")] {
        let path = dir.path().join(format!("{name}.jsonl"));
        let o = iotweave(&[
            "simulate",
            "--mode",
            mode,
            "--scenario",
            &demo_scenario(),
            "--trace",
            path_str(&path),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stderr(&o).contains("sessions=2"));
        traces.push(fs::read_to_string(path).unwrap());
    }
    assert_eq!(traces[0], traces[1]);
    assert!(traces[0].contains("\"session_established\""));
    let strip = |t: &str| without_source(&parse_jsonl(t).unwrap());
    assert_eq!(strip(&traces[0]), strip(&traces[2]));
}

#[test]
fn simulate_seed_override_changes_nonces() {
    let run = |seed: &str| {
        stdout(&iotweave(&[
            "simulate",
            "--mode",
            "woven",
            "--scenario",
            &demo_scenario(),
            "--seed",
            seed,
        ]))
    };
    assert_eq!(run("5"), run("5"));
    assert_ne!(run("5"), run("6"));
}

#[test]
fn exit_codes() {
    assert_eq!(iotweave(&["--help"]).status.code(), Some(0));
    assert_eq!(iotweave(&["--version"]).status.code(), Some(0));
    assert_eq!(iotweave(&[]).status.code(), Some(1));
    assert_eq!(iotweave(&["demo", "--bogus"]).status.code(), Some(1));
    assert_eq!(iotweave(&["simulate", "--mode", "braided", "--scenario", "x"]).status.code(), Some(1));
    assert_eq!(iotweave(&["metrics", "--manifest", "m.cm", "--format", "xml"]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cm");
    fs::write(&bad, "class : nothing\n").unwrap();
    let missing = dir.path().join("missing.cm");
    assert_eq!(iotweave(&["metrics", "--manifest", path_str(&bad)]).status.code(), Some(2));
    assert_eq!(iotweave(&["metrics", "--manifest", path_str(&missing)]).status.code(), Some(2));
    let java = manifest("iot-java.cm");
    assert_eq!(
        iotweave(&["compare", "--left", &java, "--right", path_str(&bad)]).status.code(),
        Some(2)
    );

    let scn = dir.path().join("bad.scn");
    fs::write(&scn, "devices A B\nat 0 C handshake A\n").unwrap();
    let o = iotweave(&["simulate", "--mode", "woven", "--scenario", path_str(&scn)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(iotweave(&["demo", "--golden", path_str(&empty)]).status.code(), Some(3));
}
