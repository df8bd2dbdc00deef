//! Writes a random VGG-16 container to disk, loads it back and summarises it.
//!
//!     cargo run --example model_container -- [out_dir]

use std::env;
use std::path::PathBuf;

use hp_prune::model::presets;
use hp_prune::{load_model, Model};

fn main() -> hp_prune::Result<()> {
    let dir = env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| env::temp_dir().join("hp-prune-vgg16"));
    let model = Model::random(presets::vgg16_cifar(), 7)?;
    model.save(&dir)?;
    let loaded = load_model(&dir)?;
    assert_eq!(loaded.filters, model.filters);

    println!("{} written to {}", loaded.manifest.name, dir.display());
    for layer in &loaded.manifest.layers {
        println!(
            "  layer {:>2}: {:>3} filters of {}x{}x{:<3} -> {} ({} bytes)",
            layer.id,
            layer.num_filters,
            layer.k,
            layer.k,
            layer.in_channels,
            layer.blob_name(),
            layer.blob_bytes()
        );
    }
    Ok(())
}
