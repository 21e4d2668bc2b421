use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hypoquad"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn run(args: &[&str]) -> (i32, String) {
    let out = bin().args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn ou_symbol_feeds_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let sym = dir.path().join("kramers-ou.json");
    let json = dir.path().join("analyze.json");
    let model = data("kramers-model.json");
    let (code, out) = run(&["ou", "--input", model.to_str().unwrap(), "--out-symbol", sym.to_str().unwrap()]);
    assert_eq!(code, 0, "{out}");
    let (code, out) = run(&["analyze", "--input", sym.to_str().unwrap(), "--out-json", json.to_str().unwrap()]);
    assert_eq!(code, 0, "{out}");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["results"]["chain"]["k0"], 1, "{report}");
}

#[test]
fn propagate_outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let input = data("kramers.json");
    let once = |tag: &str| {
        let csv = dir.path().join(format!("{tag}.csv"));
        let json = dir.path().join(format!("{tag}.json"));
        let (code, _) = run(&[
            "propagate", "--input", input.to_str().unwrap(), "--N", "16", "--t-lo", "0.01", "--t-hi", "0.1",
            "--t-count", "6", "--log-grid", "--seed", "7", "--directions", "x1,xi2",
            "--out-csv", csv.to_str().unwrap(), "--out-json", json.to_str().unwrap(),
        ]);
        assert!(code == 0 || code == 1);
        (std::fs::read(csv).unwrap(), std::fs::read(json).unwrap())
    };
    let (a, b) = (once("a"), once("b"));
    assert_eq!(a, b);
    let header = String::from_utf8_lossy(&a.0);
    assert!(header.starts_with("t,norm,direction_label,N,seed"), "{header}");
}

#[test]
fn exit_codes() {
    let (code, _) = run(&["analyze", "--input", "/nonexistent/symbol.json"]);
    assert_eq!(code, 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"n\": 1, \"M\": [[1, 0]]}").unwrap();
    let (code, _) = run(&["analyze", "--input", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
    let (code, _) = run(&["propagate", "--input", data("kramers.json").to_str().unwrap(), "--t-lo", "1", "--t-hi", "0.5"]);
    assert_eq!(code, 2);
    let (code, out) = run(&["analyze", "--input", data("harmonic-oscillator.json").to_str().unwrap()]);
    assert_eq!(code, 0, "{out}");
    // non-hypoelliptic models are reported, not failed
    let (code, out) = run(&["ou", "--input", data("zero-diffusion-model.json").to_str().unwrap()]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("FLAG"), "{out}");
}
