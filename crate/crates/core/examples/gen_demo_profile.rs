//! Regenerates `data/demo_profile.csv` from the synthetic generator.
//!
//!     cargo run -p fsqkd --example gen_demo_profile

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

fn main() -> std::io::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo_profile.csv");
    let profile = fsqkd::spectral::synthetic::demo_profile();
    profile.write_csv(BufWriter::new(File::create(&path)?))?;
    println!("wrote {} samples to {}", profile.len(), path.display());
    Ok(())
}
