use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mzres(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mzres")).args(args).output().expect("spawn mzres")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small laminar plate case on a pre-generated grid file.
fn small_case(dir: &Path) -> PathBuf {
    let grid = dir.join("plate.grid");
    let out = mzres(&["gridgen", "flat-plate", "--nx", "21", "--ny", "15", "--stretching", "1.15", "-o", s(&grid)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let case = dir.join("small.toml");
    let text = format!(
        r#"name = "small"
physics = "navier_stokes"
output_dir = "{}"

[grid]
file = "{}"

[freestream]
mach = 0.15
reynolds = 1e3

[solver]
max_iterations = 25

[estimator]
seed = 7
"#,
        s(&dir.join("out")),
        s(&grid)
    );
    std::fs::write(&case, text).unwrap();
    case
}

/// History rows with the wall-time column removed.
fn without_wtime(csv: &str) -> Vec<String> {
    csv.lines().map(|l| if l.starts_with('#') { l.to_string() } else { l.rsplit_once(',').unwrap().0.to_string() }).collect()
}

#[test]
fn run_writes_outputs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let case = small_case(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = mzres(&["run", s(&case), "--output-dir", s(d)]);
        assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let ha = std::fs::read_to_string(a.join("history.csv")).unwrap();
    let hb = std::fs::read_to_string(b.join("history.csv")).unwrap();
    assert_eq!(without_wtime(&ha), without_wtime(&hb));
    assert!(ha.lines().any(|l| l == "iter,res1,res2,res3,res4,dw1,dw2,dw3,dw4,rm1,rm2,rm3,rm4,cfl,wtime"));

    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["termination"], "max_iterations");
    assert_eq!(summary["exit_code"], 3);
    assert_eq!(summary["iterations"], 25);
    assert_eq!(summary["ratios"].as_array().unwrap().len(), 4);
    assert!(a.join("solution.dat").exists());

    let out = mzres(&["plot", s(&a.join("history.csv"))]);
    assert_eq!(code(&out), 0);
    assert!(std::fs::read_to_string(a.join("residual.svg")).unwrap().starts_with("<svg"));
    assert!(a.join("dw.svg").exists());

    let out = mzres(&["profile", s(&a.join("solution.dat")), "--x", "0.9"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("eta,y,u_ratio,v_scaled,T"));
    assert_eq!(text.lines().count(), 16);

    let out = mzres(&["profile", s(&a.join("solution.dat")), "--x", "5"]);
    assert_eq!(code(&out), 4);
}

#[test]
fn estimate_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let case = small_case(dir.path());
    let out = mzres(&["estimate", s(&case), "--json", "--eps", "1e-15"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["eps"], 1e-15);
    assert_eq!(report["seed"], 7);
    let rc = report["rc"].as_array().unwrap();
    assert_eq!(rc.len(), 4);
    assert!(rc.iter().all(|x| x.as_f64().unwrap() > 0.0));
}

#[test]
fn bundled_cases_parse() {
    let cases = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../cases");
    for name in ["airfoil-transonic.toml", "flat-plate.toml", "flat-plate-partial-eps.toml"] {
        let out = mzres(&["estimate", s(&cases.join(name)), "--json"]);
        assert_eq!(code(&out), 0, "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn bad_input_exits_with_code_4() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&mzres(&["run", s(&dir.path().join("missing.toml"))])), 4);
    let case = small_case(dir.path());
    assert_eq!(code(&mzres(&["run", s(&case), "--eps", "0"])), 4);
    assert_eq!(code(&mzres(&["estimate", s(&case), "--eps", "0.5"])), 4);
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "iter,res\n1,2\n").unwrap();
    assert_eq!(code(&mzres(&["plot", s(&bad)])), 4);
    assert_eq!(code(&mzres(&["gridgen", "flat-plate", "--nx", "2", "-o", s(&dir.path().join("g"))])), 4);
}
