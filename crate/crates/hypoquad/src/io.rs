//! Symbol and model files (JSON), plot-ready CSV, and input digests.

use std::fmt::Write as _;
use std::path::Path;

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::RMat;
use crate::ou::Variant;
use crate::symplectic::{make_symbol, QuadraticSymbol};

/// `{"n": 2, "M": [[re, im], ...], "label": "..."}` with M row-major, (2n)² entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolFile {
    pub n: usize,
    #[serde(rename = "M")]
    pub m: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// `{"n": 2, "Q": [...], "B": [...], "variant": "ou" | "fokker_planck"}`, row-major n².
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub n: usize,
    #[serde(rename = "Q")]
    pub q: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    #[serde(default = "default_variant")]
    pub variant: Variant,
}

fn default_variant() -> Variant {
    Variant::Ou
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("{what}: line {}, column {}: {e}", e.line(), e.column())))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn check_len(field: &str, got: usize, want: usize, n: usize) -> Result<()> {
    if got != want {
        return Err(Error::Parse(format!("field `{field}`: {got} entries, expected {want} for n = {n}")));
    }
    Ok(())
}

pub fn parse_symbol(text: &str) -> Result<QuadraticSymbol> {
    let f: SymbolFile = parse_json(text, "symbol file")?;
    if f.n == 0 {
        return Err(Error::Parse("field `n`: must be ≥ 1".into()));
    }
    let d = 2 * f.n;
    check_len("M", f.m.len(), d * d, f.n)?;
    if let Some(k) = f.m.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::Parse(format!("field `M`: entry {k} (row {}, column {}) is not finite", k / d, k % d)));
    }
    let m = Mat::from_fn(d, d, |i, j| {
        let p = f.m[i * d + j];
        c64::new(p[0], p[1])
    });
    let mut q = make_symbol(f.n, &m)?;
    q.label = f.label;
    Ok(q)
}

pub fn symbol_file(q: &QuadraticSymbol) -> SymbolFile {
    let d = 2 * q.n;
    SymbolFile {
        n: q.n,
        m: (0..d * d).map(|k| [q.m[(k / d, k % d)].re, q.m[(k / d, k % d)].im]).collect(),
        label: q.label.clone(),
    }
}

pub fn symbol_json(q: &QuadraticSymbol) -> String {
    serde_json::to_string_pretty(&symbol_file(q)).expect("symbol files serialize") + "\n"
}

pub fn parse_model(text: &str) -> Result<(RMat, RMat, Variant)> {
    let f: ModelFile = parse_json(text, "model file")?;
    if f.n == 0 {
        return Err(Error::Parse("field `n`: must be ≥ 1".into()));
    }
    let n = f.n;
    check_len("Q", f.q.len(), n * n, n)?;
    check_len("B", f.b.len(), n * n, n)?;
    for (name, v) in [("Q", &f.q), ("B", &f.b)] {
        if let Some(k) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::Parse(format!("field `{name}`: entry {k} is not finite")));
        }
    }
    let q = Mat::from_fn(n, n, |i, j| f.q[i * n + j]);
    let b = Mat::from_fn(n, n, |i, j| f.b[i * n + j]);
    Ok((q, b, f.variant))
}

pub fn model_json(q: &RMat, b: &RMat, variant: Variant) -> String {
    let n = q.nrows();
    let flat = |m: &RMat| (0..n * n).map(|k| m[(k / n, k % n)]).collect();
    let f = ModelFile { n, q: flat(q), b: flat(b), variant };
    serde_json::to_string_pretty(&f).expect("model files serialize") + "\n"
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        write!(s, "{b:02x}").unwrap();
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct NormRow {
    pub t: f64,
    pub norm: f64,
    pub direction_label: String,
    #[serde(rename = "N")]
    pub nmax: usize,
    pub seed: u64,
}

pub fn write_csv(path: &Path, rows: &[NormRow]) -> Result<()> {
    let io = |e: csv::Error| Error::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symplectic::kramers;

    #[test]
    fn symbol_round_trip() {
        let q = kramers();
        let back = parse_symbol(&symbol_json(&q)).unwrap();
        assert_eq!(back.n, 2);
        assert_eq!(back.label.as_deref(), Some("kramers"));
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(back.m[(i, j)], q.m[(i, j)]);
            }
        }
    }

    #[test]
    fn parse_errors_name_the_place() {
        let e = parse_symbol("{\"n\": 1,\n \"M\": [[1,0],[0,0],[0,0]]}").unwrap_err();
        assert!(e.to_string().contains("`M`") && e.to_string().contains("expected 4"), "{e}");
        let e = parse_symbol("{\"n\": 1,\n \"M\": [[1,0], oops]}").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        let e = parse_model("{\"n\": 1, \"Q\": [1], \"B\": [-1], \"variant\": \"xx\"}").unwrap_err();
        assert!(e.to_string().contains("variant"), "{e}");
    }

    #[test]
    fn model_round_trip() {
        let q = Mat::from_fn(2, 2, |i, j| if i == 1 && j == 1 { 2.0 } else { 0.0 });
        let b = Mat::from_fn(2, 2, |i, j| [[0.0, 1.0], [-1.0, -1.0]][i][j]);
        let (q2, b2, v) = parse_model(&model_json(&q, &b, Variant::FokkerPlanck)).unwrap();
        assert_eq!(v, Variant::FokkerPlanck);
        assert_eq!(q2, q);
        assert_eq!(b2, b);
    }

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
