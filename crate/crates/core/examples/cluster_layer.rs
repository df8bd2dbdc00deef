//! Clusters a random layer's filters and keeps one median-root
//! representative per cluster. Filter magnitudes vary per filter.
//!
//!     cargo run --example cluster_layer -- [clusters]

use hp_prune::cluster::DEFAULT_MAX_ITER;
use hp_prune::model::presets;
use hp_prune::pyramid::build_layer;
use hp_prune::{cluster, InitStrategy, Model};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> hp_prune::Result<()> {
    let c: usize = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(8);
    let mut model = Model::random(presets::alexnet_cifar(), 3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for filter in model.filters.iter_mut().flatten() {
        let scale = 4f32.powf(rng.gen_range(-1.0..1.0));
        filter.weights.iter_mut().for_each(|w| *w *= scale);
    }
    let layer = model.manifest.layer(1)?;
    let pyramids = build_layer(model.layer_filters(1)?, layer)?;
    let refs: Vec<_> = pyramids.iter().collect();

    for strategy in [InitStrategy::EvenSpaced, InitStrategy::SeededRandom(11)] {
        let set = cluster(&refs, c, strategy, DEFAULT_MAX_ITER)?;
        println!(
            "{strategy:?}: {} iterations, converged = {}",
            set.iteration_count, set.converged
        );
        for cl in &set.clusters {
            println!(
                "  keep {:>2} (root {:.5}) for {} filters",
                cl.representative,
                pyramids[cl.representative as usize - 1].root(),
                cl.members.len()
            );
        }
    }
    Ok(())
}
