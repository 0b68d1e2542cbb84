//! Regenerates the bundled crypto fixture and its SHA-256 manifest.
//!
//! cargo run --release -p sigad --example gen_fixture [-- OUT_DIR]

use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};
use sigad::pipeline::fixture::{generate_fixture, write_fixture, FixtureConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/crypto"));
    let fixture = generate_fixture(&FixtureConfig::default());
    write_fixture(&out, &fixture)?;

    let mut files = vec![PathBuf::from("labels.csv")];
    files.extend(fixture.coins.iter().map(|(c, _)| PathBuf::from(format!("trades/{c}.csv"))));
    let mut manifest = String::new();
    for f in &files {
        let digest = Sha256::digest(std::fs::read(out.join(f))?);
        let hex = digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        });
        writeln!(manifest, "{hex}  {}", f.display())?;
    }
    std::fs::write(out.join("MANIFEST.sha256"), manifest)?;
    let trades: usize = fixture.coins.iter().map(|(_, t)| t.len()).sum();
    println!("{} coins, {trades} trades -> {}", fixture.coins.len(), out.display());
    Ok(())
}
