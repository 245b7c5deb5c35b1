use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_elastica-flow");

fn cli(args: &[&str], dir: &Path) -> Output {
    Command::new(BIN).args(args).current_dir(dir).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const SHORT_ARC: &str = r#"{
  "length": 1.0, "intervals": 64, "delta_p": [0.8, 0.0],
  "initial": {"preset": "perturbed-arc"},
  "flow": {"t_end": 0.002, "snapshot_stride": 50}
}"#;

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn run_writes_a_complete_directory_and_diag_reads_it() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "arc.json", SHORT_ARC);
    let o = cli(&["run", "arc.json"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = tmp.path().join("arc-out");
    for f in ["energy.csv", "meta.json", "snap_0.csv", "curves.svg", "energy.svg", "residual.svg"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let header = std::fs::read_to_string(out.join("energy.csv")).unwrap();
    let header = header.lines().next().unwrap();
    assert_eq!(header.split(',').count(), 12, "{header}");

    let o = cli(&["diag", "arc-out"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("diag.json")).unwrap()).unwrap();
    assert_eq!(diag["snapshot_mismatch"].as_f64(), Some(0.0));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "a.json", SHORT_ARC);
    write(tmp.path(), "b.json", SHORT_ARC);
    let o = cli(&["--quiet", "--jobs", "2", "run", "a.json", "b.json"], tmp.path());
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
    let (a, b) = (tmp.path().join("a-out"), tmp.path().join("b-out"));
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() > 5);
    for name in names {
        let (x, y) = (std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap());
        if name == "meta.json" {
            // identical apart from the output directory recorded in the manifest
            let strip = |v: &[u8]| String::from_utf8_lossy(v).replace("a-out", "X").replace("b-out", "X");
            assert_eq!(strip(&x), strip(&y));
        } else {
            assert!(x == y, "{name:?} differs");
        }
    }
}

#[test]
fn input_errors_exit_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "taut.json", &SHORT_ARC.replace("[0.8, 0.0]", "[1.0, 0.0]"));
    write(tmp.path(), "typo.json", &SHORT_ARC.replace("\"t_end\"", "\"tend\""));
    write(tmp.path(), "broken.json", "{ not json");
    for m in ["taut.json", "typo.json", "broken.json"] {
        let o = cli(&["run", m], tmp.path());
        assert_eq!(code(&o), 2, "{m}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = cli(&["run", "typo.json"], tmp.path());
    assert!(String::from_utf8_lossy(&o.stderr).contains("flow.tend"));
    assert_eq!(code(&cli(&["run"], tmp.path())), 2);
}

#[test]
fn missing_files_exit_with_code_four() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&cli(&["diag", "nowhere"], tmp.path())), 4);
    assert_eq!(code(&cli(&["run", "nowhere.json"], tmp.path())), 4);
}

#[test]
fn picard_and_compare_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "small.json",
        r#"{"length": 1.0, "intervals": 64, "delta_p": [0.8, 0.0],
            "initial": {"preset": "perturbed-arc"},
            "picard": {"t0": 0.005, "time_slices": 16}}"#,
    );
    let o = cli(&["picard", "small.json"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = tmp.path().join("small-out");
    assert!(out.join("picard_report.csv").is_file() && out.join("picard_slice_16.csv").is_file());
    let o = cli(&["compare", "small.json"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(out.join("compare.csv")).unwrap();
    assert_eq!(table.lines().count(), 18);
    let last: f64 = table.lines().last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!(last < 1e-3, "{last}");
}
