//! Symbol and model files as used by the `hypoquad` binary.
//!
//! cargo run --release --example files
//!
//! The same pipeline from the shell:
//!   hypoquad ou --input data/kramers-model.json --out-symbol /tmp/q.json
//!   hypoquad analyze --input /tmp/q.json --out-json /tmp/report.json
//!   hypoquad propagate --input /tmp/q.json --N 64 --log-grid --out-csv /tmp/norms.csv

use std::path::Path;

use hypoquad::io::{model_json, parse_model, parse_symbol, read_text, sha256_hex, symbol_json};
use hypoquad::ou;
use hypoquad::singular::{kernel_chain, RankTol};

fn main() -> hypoquad::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/kramers-model.json");
    let text = read_text(Path::new(path))?;
    println!("{path}\nsha256 {}", sha256_hex(text.as_bytes()));
    let (q, b, variant) = parse_model(&text)?;
    let m = ou::ou_build(&q, &b, variant)?;

    let sym = ou::conjugated_symbol(&m)?;
    let json = symbol_json(&sym);
    println!("conjugated symbol file: {} bytes, {} lines", json.len(), json.lines().count());
    let back = parse_symbol(&json)?;
    println!("round trip k0 = {:?}", kernel_chain(&back, RankTol::default())?.k0);
    let (q2, b2, _) = parse_model(&model_json(&m.qdiff, &m.b, m.variant))?;
    println!("model file round trip exact: {}", q2 == q && b2 == b);

    match parse_symbol("{\"n\": 1, \"M\": [[1, 0], [0, 0]]}") {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
