//! Builds the pyramids of two random layer-13 filters and prints the lower
//! bound each level gives on their squared distance.
//!
//!     cargo run --example hybrid_pyramid

use hp_prune::model::presets;
use hp_prune::pyramid::{level_distance_sq, PyramidShape};
use hp_prune::{HybridPyramid, Model};

fn main() -> hp_prune::Result<()> {
    let model = Model::random(presets::vgg16_cifar(), 1)?;
    let layer = model.manifest.layer(13)?;
    let filters = model.layer_filters(13)?;
    let a = HybridPyramid::build(&filters[0], layer)?;
    let b = HybridPyramid::build(&filters[1], layer)?;

    let shape = PyramidShape::for_layer(layer);
    println!(
        "layer 13: C = {} = {}*4^{}, k = {}, {} levels",
        shape.channels(),
        shape.s,
        shape.m,
        shape.k,
        shape.level_count()
    );
    println!("roots {:.6} / {:.6}", a.root(), b.root());
    for level in shape.levels() {
        let factor = shape.factor(level)?;
        let d2 = level_distance_sq(&a, &b, level)?;
        println!(
            "  {:<6} cells {:>5}  factor {:>5}  bound {:>12.6}",
            level.to_string(),
            a.level_values(level)?.len(),
            factor,
            factor as f64 * d2
        );
    }
    Ok(())
}
