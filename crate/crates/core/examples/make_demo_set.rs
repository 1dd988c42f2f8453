//! Writes a synthetic registered set (10 images, 141x141, 4 binary labels)
//! under the given directory and prints the manifest path, for trying out
//! the CLI without real data.
//!
//! Usage: cargo run -p regeval-core --example make_demo_set -- [DIR] [SEED]

use std::env;
use std::path::Path;

use regeval_core::dataset::save_set;
use regeval_core::raster::GridDims;
use regeval_core::synth::synthetic_set;

fn main() {
    let dir = env::args().nth(1).unwrap_or_else(|| "demo_set".into());
    let seed: u64 = env::args()
        .nth(2)
        .map(|s| s.parse().expect("seed must be an integer"))
        .unwrap_or(7);
    let set = synthetic_set(10, GridDims::d2(141, 141), 4, seed);
    let manifest = save_set(Path::new(&dir), &set).expect("failed to write demo set");
    println!("{}", manifest.display());
}
