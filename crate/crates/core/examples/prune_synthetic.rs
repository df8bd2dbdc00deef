//! Runs the backward pruning driver on a random VGG-16 against a synthetic
//! accuracy model in which every layer tolerates pruning down to a fixed
//! retention before accuracy drops. Filters get a per-filter magnitude so
//! that, as in trained networks, their weight scales differ.
//!
//!     cargo run --release --example prune_synthetic

use hp_prune::cost::{count, report_text};
use hp_prune::driver::{run, DriverConfig};
use hp_prune::evaluator::Penalty;
use hp_prune::model::presets;
use hp_prune::{Model, SyntheticEvaluator, SyntheticSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> hp_prune::Result<()> {
    let manifest = presets::vgg16_cifar();
    let mut model = Model::random(manifest.clone(), 5)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for filter in model.filters.iter_mut().flatten() {
        let scale = 4f32.powf(rng.gen_range(-1.0..1.0));
        filter.weights.iter_mut().for_each(|w| *w *= scale);
    }

    let tolerated = [
        1.0, 1.0, 1.0, 1.0, 0.6875, 0.6875, 0.5, 0.375, 0.375, 0.125, 0.125, 0.125, 0.125,
    ];
    let mut spec = SyntheticSpec::zero_penalty(0.916);
    for (layer, &threshold) in manifest.layers.iter().zip(&tolerated) {
        spec.penalties.insert(
            layer.id,
            Penalty {
                weight: 10.0,
                threshold,
            },
        );
    }
    let mut evaluator = SyntheticEvaluator::new(spec, &manifest);
    let config = DriverConfig {
        recluster_from_original: true,
        ..DriverConfig::default()
    };
    let outcome = run(&model, &mut evaluator, &config)?;

    println!("layer  kept/filters  accepted       calls");
    for t in &outcome.layers {
        println!(
            "{:>5}  {:>5}/{:<6}  {:<13}  {}",
            t.layer,
            t.retained,
            t.original,
            format!("{:?}", t.accepted),
            t.evaluator_calls()
        );
    }
    println!(
        "accuracy {:.4} -> {:.4} after {} evaluations\n",
        outcome.report.baseline_accuracy,
        outcome.report.accuracy,
        evaluator.calls()
    );
    let costs = count(&manifest, &outcome.report.retained_counts(&manifest))?;
    print!("{}", report_text(&costs));
    Ok(())
}
