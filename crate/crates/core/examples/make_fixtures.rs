//! Regenerates the frozen NIQE test corpus under `tests/fixtures/niqe`.
//!
//! ```text
//! cargo run -p nightsynth-core --example make_fixtures
//! ```

use std::path::Path;

use nightsynth_core::fixtures::{add_gaussian_noise, textured_image};
use nightsynth_core::imaging::io::save_rgb;

const SIZE: usize = 128;

fn main() -> nightsynth_core::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/niqe");
    std::fs::create_dir_all(&dir).map_err(|e| nightsynth_core::Error::InvalidInput(e.to_string()))?;
    for i in 0..10u64 {
        save_rgb(&textured_image(SIZE, SIZE, i), &dir.join(format!("corpus_{i:02}.png")))?;
    }
    let pristine = textured_image(SIZE, SIZE, 1000);
    save_rgb(&pristine, &dir.join("pristine.png"))?;
    save_rgb(&add_gaussian_noise(&pristine, 0.15, 1000), &dir.join("noisy.png"))?;
    println!("wrote fixtures to {}", dir.display());
    Ok(())
}
