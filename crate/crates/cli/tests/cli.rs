//! End-to-end checks of the binary: exit codes, report determinism, the
//! committed golden report, and CSV trajectory output.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nlgauge"))
}

/// Report JSON with the timing field removed and keys sorted, for byte
/// comparisons.
fn canonical(report_text: &str) -> String {
    let mut value: serde_json::Value = serde_json::from_str(report_text).expect("report parses");
    value
        .as_object_mut()
        .expect("report is an object")
        .remove("wall_ms");
    // serde_json maps are ordered by key, so one round trip canonicalizes
    serde_json::to_string_pretty(&value).expect("canonical form") + "\n"
}

#[test]
fn exit_code_contract() {
    let ok = bin()
        .args(["validate-algebroid", "--builtin", "su2_cotangent"])
        .output()
        .expect("binary runs");
    assert_eq!(ok.status.code(), Some(0), "passing model must exit 0");

    let fail = bin()
        .args(["validate-algebroid", "--builtin", "nonpoisson"])
        .output()
        .expect("binary runs");
    assert_eq!(fail.status.code(), Some(1), "failing model must exit 1");
    let report: serde_json::Value =
        serde_json::from_slice(&fail.stdout).expect("report is JSON");
    let failing: Vec<&str> = report["suites"][0]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| !c["pass"].as_bool().unwrap())
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(
        failing.contains(&"jacobi_residual"),
        "report must name jacobi_residual as failing, got {failing:?}"
    );

    let config_error = bin()
        .args(["all", "--builtin", "no-such-model"])
        .output()
        .expect("binary runs");
    assert_eq!(
        config_error.status.code(),
        Some(2),
        "configuration errors must exit 2"
    );
}

#[test]
fn syntax_errors_in_model_files_carry_location() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.toml");
    std::fs::write(
        &path,
        "name = \"broken\"\n[algebroid]\nkind = \"cotangent\"\npoisson = [[\"x1 + \", \"0\"], [\"0\", \"0\"]]\n[base]\nlabels = [\"x1\", \"x2\"]\nbox = [[-1.0, 1.0], [-1.0, 1.0]]\n",
    )
    .unwrap();
    let out = bin()
        .args(["validate-algebroid", "--model"])
        .arg(&path)
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("byte 5"),
        "parse error should carry the byte offset, got: {stderr}"
    );
}

#[test]
fn report_is_deterministic_and_matches_golden() {
    let run = |dir: &Path| -> String {
        let status = bin()
            .args(["all", "--builtin", "default", "--out"])
            .arg(dir)
            .status()
            .expect("binary runs");
        assert!(status.success());
        std::fs::read_to_string(dir.join("report.json")).expect("report written")
    };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let first = canonical(&run(d1.path()));
    let second = canonical(&run(d2.path()));
    assert_eq!(first, second, "identical config + seed must be byte-identical");

    let golden_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/default_report.json");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&golden_path, &first).expect("bless golden");
    }
    let golden = std::fs::read_to_string(&golden_path).expect("golden file present");
    assert_eq!(
        first, golden,
        "report deviates from the committed golden file (set UPDATE_GOLDEN=1 to bless)"
    );
}

#[test]
fn seed_changes_the_report() {
    let out1 = bin()
        .args(["validate-algebroid", "--builtin", "su2_cotangent", "--seed", "1"])
        .output()
        .expect("binary runs");
    let out2 = bin()
        .args(["validate-algebroid", "--builtin", "su2_cotangent", "--seed", "2"])
        .output()
        .expect("binary runs");
    assert_ne!(
        canonical(&String::from_utf8_lossy(&out1.stdout)),
        canonical(&String::from_utf8_lossy(&out2.stdout)),
        "different seeds should sample different points"
    );
}

#[test]
fn weinstein_csv_output_schema() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args([
            "weinstein",
            "--builtin",
            "action_so3",
            "--format",
            "csv",
            "--out",
        ])
        .arg(dir.path())
        .status()
        .expect("binary runs");
    assert!(status.success());
    let csv_path = dir.path().join("apath_seed.csv");
    let text = std::fs::read_to_string(&csv_path).expect("trajectory written");
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,x1,x2,x3,a1,a2,a3");
    // N + 1 rows follow the header
    assert!(lines.count() >= 9);
    // deterministic bytes across runs
    let dir2 = tempfile::tempdir().unwrap();
    let status = bin()
        .args([
            "weinstein",
            "--builtin",
            "action_so3",
            "--format",
            "csv",
            "--out",
        ])
        .arg(dir2.path())
        .status()
        .expect("binary runs");
    assert!(status.success());
    assert_eq!(
        std::fs::read(&csv_path).unwrap(),
        std::fs::read(dir2.path().join("apath_seed.csv")).unwrap()
    );
}
