//! Regenerates the bundled synthetic study: `cargo run -p chimeric-cli --example generate_synthetic [dir]`.

use std::path::PathBuf;

use chimeric_cli::synthetic::{generate, BUNDLED_SEED};

fn main() -> anyhow::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/synthetic"));
    generate(&dir, BUNDLED_SEED)?;
    println!("wrote {}", dir.display());
    Ok(())
}
