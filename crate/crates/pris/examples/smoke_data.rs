//! Write the procedural images used by `configs/smoke.toml`.
//!
//! cargo run --example smoke_data -- configs/smoke

use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "configs/smoke".into()));
    for (split, seed, count) in [("train", 100, 8), ("test", 300, 4)] {
        let dir = root.join(split);
        std::fs::create_dir_all(&dir)?;
        for (i, img) in pris::synth::images(seed, count, 64, 64).iter().enumerate() {
            pris::imageio::save_png(&dir.join(format!("{i:02}.png")), img)?;
        }
    }
    Ok(())
}
