use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_carleman"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn run(kind: &str, config: &Path, out: &Path, extra: &[&str]) -> (i32, String) {
    let o = bin().arg(kind).arg("--config").arg(config).arg("--out").arg(out).args(extra).output().unwrap();
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stderr).into_owned())
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("scenario.toml");
    std::fs::write(&p, text).unwrap();
    p
}

const SMALL_HYPERBOLOID: &str = r#"
kind = "check-surface"
expect = "pass"

[operator]
preset = "minkowski"
dim = 3

[surface]
psi = "x1^2 + x2^2 - 0.25*t^2 - 1"
base_point = [0.0, 1.0, 0.0]

[check]
samples = 1024
"#;

#[test]
fn bundled_pseudoconvex_hyperboloid_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = run("check-surface", &scenario("hyperboloid_gamma_0.5.toml"), dir.path(), &[]);
    assert_eq!(code, 0, "{err}");
    let r = report(dir.path());
    assert_eq!(r["verdict"], "pass");
    assert_eq!(r["matches_expectation"], true);
}

#[test]
fn bundled_steep_hyperboloid_fails_as_expected() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = run("check-surface", &scenario("hyperboloid_gamma_2.toml"), dir.path(), &[]);
    assert_eq!(code, 0, "{err}");
    let r = report(dir.path());
    assert_eq!(r["verdict"], "fail");
    assert!(r["details"]["witness"].is_object());
}

#[test]
fn verdict_mismatch_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL_HYPERBOLOID.replace("0.25*t^2", "4*t^2"));
    let (code, _) = run("check-surface", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(code, 1);
    assert_eq!(report(&dir.path().join("out"))["matches_expectation"], false);
}

#[test]
fn malformed_toml_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "kind = \"check-surface\"\n[operator\npreset = 1\n");
    let (code, err) = run("check-surface", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(code, 2);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn schema_violations_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        SMALL_HYPERBOLOID.replace("[check]", "[check]\nbogus = 1"),
        SMALL_HYPERBOLOID.replace("x1^2 + x2^2", "x1^^2"),
        SMALL_HYPERBOLOID.replace("[0.0, 1.0, 0.0]", "[0.0, 1.0]"),
        SMALL_HYPERBOLOID.replace("kind = \"check-surface\"", "kind = \"flow\""),
        SMALL_HYPERBOLOID.replace("[surface]", "[nothing]"),
    ];
    for (k, text) in cases.iter().enumerate() {
        let cfg = write_config(dir.path(), text);
        let out = dir.path().join(format!("out{k}"));
        let (code, err) = run("check-surface", &cfg, &out, &[]);
        assert_eq!(code, 2, "case {k}: {err}");
        assert!(report(&out)["error"].as_str().unwrap().starts_with("schema error"));
    }
    let (code, _) = run("check-surface", &dir.path().join("missing.toml"), &dir.path().join("m"), &[]);
    assert_eq!(code, 2);
}

#[test]
fn runtime_failure_exits_three() {
    // The sup-distance to an unreachable target is a runtime failure.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
kind = "distance"
[grid]
bounds = [[-1.0, 1.0], [-1.0, 1.0]]
n = [21, 21]
mask = "0.01 - x1^2"
[distance]
source = "x1 + 0.5"
target = "0.5 - x1"
"#,
    );
    let (code, err) = run("distance", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(code, 3, "{err}");
    assert!(err.starts_with("runtime error"));
}

#[test]
fn distance_writes_grid_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = run("distance", &scenario("distance_annulus.toml"), dir.path(), &[]);
    assert_eq!(code, 0, "{err}");
    let r = report(dir.path());
    assert!(r["verdict"].is_null());
    for a in r["artifacts"].as_array().unwrap() {
        assert!(dir.path().join(a.as_str().unwrap()).is_file());
    }
    let bytes = std::fs::read(dir.path().join("distance.bin")).unwrap();
    assert!(bytes.len() > 81 * 81 * 8);
    let l = r["details"]["sup_distance"].as_f64().unwrap();
    assert!((l - 1.4).abs() < 0.4, "{l}");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["carleman_convex.toml", "multiplier_gaussian.toml", "control_small.toml"] {
        let text = std::fs::read_to_string(scenario(name)).unwrap();
        let kind = text.lines().find_map(|l| l.strip_prefix("kind = ")).unwrap().trim_matches('"').to_string();
        let a = dir.path().join(format!("{name}.a"));
        let b = dir.path().join(format!("{name}.b"));
        assert_eq!(run(&kind, &scenario(name), &a, &["--threads", "2"]).0, 0);
        assert_eq!(run(&kind, &scenario(name), &b, &["--threads", "3"]).0, 0);
        for f in std::fs::read_dir(&a).unwrap() {
            let f = f.unwrap().file_name();
            assert_eq!(std::fs::read(a.join(&f)).unwrap(), std::fs::read(b.join(&f)).unwrap(), "{name}: {f:?}");
        }
    }
}

#[test]
fn seed_flag_overrides_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let (c1, _) = run("carleman-ratio", &scenario("carleman_convex.toml"), &dir.path().join("a"), &[]);
    let (c2, _) = run("carleman-ratio", &scenario("carleman_convex.toml"), &dir.path().join("b"), &["--seed", "7"]);
    assert_eq!((c1, c2), (0, 0));
    let (a, b) = (report(&dir.path().join("a")), report(&dir.path().join("b")));
    assert_eq!(a["seed"], 2024);
    assert_eq!(b["seed"], 7);
    assert_ne!(a["details"]["ratios"], b["details"]["ratios"]);
}

#[test]
fn concave_weight_is_unbounded() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run("carleman-ratio", &scenario("carleman_concave.toml"), dir.path(), &[]).0, 0);
    assert_eq!(report(dir.path())["details"]["bounded"], false);
}

#[test]
fn every_bundled_scenario_meets_its_expectation() {
    let dir = tempfile::tempdir().unwrap();
    let mut entries: Vec<_> = std::fs::read_dir(scenario("")).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for path in entries {
        let text = std::fs::read_to_string(&path).unwrap();
        let kind = text.lines().find_map(|l| l.strip_prefix("kind = ")).unwrap().trim_matches('"').to_string();
        let out = dir.path().join(path.file_stem().unwrap());
        let (code, err) = run(&kind, &path, &out, &[]);
        assert_eq!(code, 0, "{}: {err}", path.display());
        let r = report(&out);
        assert!(r["matches_expectation"] != false, "{}", path.display());
    }
}

#[test]
fn bad_thread_count_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = run("check-surface", &scenario("hyperboloid_gamma_0.5.toml"), dir.path(), &["--threads", "0"]);
    assert_eq!(code, 2);
}
