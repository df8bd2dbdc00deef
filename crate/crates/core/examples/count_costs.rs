//! Parameter and FLOP reductions of published pruning-rate settings for
//! VGG-16 and AlexNet on CIFAR-10.
//!
//!     cargo run --example count_costs

use hp_prune::cost::{count, report_text, retained_from_pruning_rates};
use hp_prune::model::presets;

fn main() -> hp_prune::Result<()> {
    let vgg = presets::vgg16_cifar();
    // Pruning rates, layer 1 first.
    let vgg_rates = [
        0.0, 0.0, 0.0, 0.0, 0.3125, 0.3125, 0.505625, 0.625, 0.625, 0.875, 0.875, 0.875, 0.875,
    ];
    let retained = retained_from_pruning_rates(&vgg, &vgg_rates)?;
    println!("VGG-16, retained {retained:?}");
    print!("{}", report_text(&count(&vgg, &retained)?));

    let alexnet = presets::alexnet_cifar();
    let alexnet_rates = [0.243, 0.2991, 0.3418, 0.3418, 0.7813];
    let retained = retained_from_pruning_rates(&alexnet, &alexnet_rates)?;
    println!("\nAlexNet, retained {retained:?}");
    print!("{}", report_text(&count(&alexnet, &retained)?));
    Ok(())
}
