use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dads(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dads"))
        .args(args)
        .current_dir(cwd)
        .env_remove("DADS_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

const SCENARIO: &str = r#"
[plant]
preset = "double-integrator"

[clf]
preset = "double-integrator"
c = 0.5

[controller]
kind = "dads"
variant = "simplified"
epsilon = 0.005
gamma = 20.0
damping = 1.0
kappa = 0.1

[initial]
y = [1.0, 0.0]
rho = 0.11

[disturbance]
d = [{ kind = "sinusoid", amplitude = 2.0, omega = 1.0 }]
theta = [{ kind = "constant", value = 1.0 }, { kind = "constant", value = 1.0 }]
b = [{ kind = "constant", value = 0.01 }]

[sim]
horizon = 2.0
dt = 0.001

[output]
directory = "from-file"
stride = 10
"#;

#[test]
fn lists_presets() {
    let dir = tempfile::tempdir().unwrap();
    let out = dads(&["presets"], dir.path());
    assert!(out.status.success());
    let names: Vec<String> = text(&out.stdout).lines().map(str::to_owned).collect();
    assert_eq!(
        names,
        [
            "c1-noleak-0",
            "c1-leak-0",
            "dads-0",
            "c1-noleak-sin",
            "c1-leak-sin",
            "dads-sin"
        ]
    );
}

#[test]
fn unknown_preset_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dads(&["run", "nosuch"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("dads-sin"));
}

#[test]
fn run_file_uses_its_output_section() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bench.toml"), SCENARIO).unwrap();
    let out = dads(&["run", "bench.toml"], dir.path());
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("from-file/trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("t,y1,y2,rho,z,u1,V,rho_dot,d1,theta1,theta2,b1")
    );
    assert_eq!(lines.count(), 2000 / 10 + 1);
    let summary = fs::read_to_string(dir.path().join("from-file/summary.txt")).unwrap();
    assert!(summary.contains("kappa: 0.1"));
    assert!(summary.contains("dads certificate"));
}

#[test]
fn flags_and_env_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bench.toml"), SCENARIO).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_dads"))
        .args(["run", "bench.toml", "--horizon", "0.5", "--stride", "1"])
        .current_dir(dir.path())
        .env("DADS_OUT_DIR", "env-dir")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("env-dir/trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 501);

    let out = Command::new(env!("CARGO_BIN_EXE_dads"))
        .args(["run", "bench.toml", "--horizon", "0.1", "--out", "flag-dir"])
        .current_dir(dir.path())
        .env("DADS_OUT_DIR", "env-dir-2")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("flag-dir/trajectory.csv").exists());
    assert!(!dir.path().join("env-dir-2").exists());
}

#[test]
fn invalid_files_name_the_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            "floor.toml",
            SCENARIO.replace("rho = 0.11", "rho = 0.1"),
            "ρ₀ > κ",
        ),
        (
            "full.toml",
            SCENARIO.replace("\"simplified\"", "\"full\""),
            "2Cκ ≥ 1",
        ),
        (
            "kind.toml",
            SCENARIO.replace("kind = \"dads\"", "kind = \"pid\""),
            "pid",
        ),
        (
            "missing.toml",
            SCENARIO.replace("epsilon = 0.005\n", ""),
            "epsilon",
        ),
    ];
    for (name, body, needle) in cases {
        fs::write(dir.path().join(name), body).unwrap();
        let out = dads(&["run", name], dir.path());
        assert_eq!(out.status.code(), Some(2), "{name}");
        assert!(
            text(&out.stderr).contains(needle),
            "{name}: {}",
            text(&out.stderr)
        );
    }
}

#[test]
fn open_loop_blows_up() {
    let dir = tempfile::tempdir().unwrap();
    let body = SCENARIO
        .replace("kind = \"dads\"\nvariant = \"simplified\"\nepsilon = 0.005\ngamma = 20.0\ndamping = 1.0\nkappa = 0.1", "kind = \"open-loop\"")
        .replace("horizon = 2.0", "horizon = 100.0");
    fs::write(dir.path().join("open.toml"), body).unwrap();
    let out = dads(&["run", "open.toml"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", text(&out.stderr));
    assert!(text(&out.stderr).contains("1e8") || text(&out.stderr).contains("100000000"));
}

#[test]
fn certify_and_refine_presets() {
    let dir = tempfile::tempdir().unwrap();
    let out = dads(
        &["certify", "c1-leak-sin", "--horizon", "2", "--dt", "0.001"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("PASS"));

    let out = dads(
        &[
            "refine",
            "dads-0",
            "--horizon",
            "1",
            "--dt",
            "0.001",
            "--order",
            "--tol",
            "1e-3",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("observed order"));

    let out = dads(
        &[
            "refine",
            "dads-0",
            "--horizon",
            "1",
            "--dt",
            "0.001",
            "--tol",
            "0",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn check_assumptions_on_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bench.toml"), SCENARIO).unwrap();
    let out = dads(
        &[
            "check-assumptions",
            "bench.toml",
            "--grid",
            "21",
            "--random",
            "500",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert_eq!(text(&out.stdout).matches("PASS").count(), 4);
}

#[test]
fn parallel_batch_writes_one_directory_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dads(
        &[
            "run",
            "dads-0",
            "c1-leak-0",
            "--horizon",
            "0.5",
            "--dt",
            "0.001",
            "--jobs",
            "2",
            "--out",
            "batch",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", text(&out.stderr));
    for name in ["dads-0", "c1-leak-0"] {
        assert!(dir
            .path()
            .join("batch")
            .join(name)
            .join("trajectory.csv")
            .exists());
    }
    let again = tempfile::tempdir().unwrap();
    let out = dads(
        &[
            "run",
            "dads-0",
            "--horizon",
            "0.5",
            "--dt",
            "0.001",
            "--out",
            "single",
        ],
        again.path(),
    );
    assert!(out.status.success());
    assert_eq!(
        fs::read(dir.path().join("batch/dads-0/trajectory.csv")).unwrap(),
        fs::read(again.path().join("single/trajectory.csv")).unwrap()
    );
}
