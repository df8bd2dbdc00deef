//! Exact closest-filter search over 200 random 3x3x64 filters of varying
//! magnitude, compared with a brute-force scan.
//!
//!     cargo run --release --example closest_filter

use hp_prune::model::{FilterTensor, LayerSpec};
use hp_prune::pyramid::build_layer;
use hp_prune::search::base_distance_sq;
use hp_prune::CandidateSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> hp_prune::Result<()> {
    let layer = LayerSpec {
        id: 1,
        k: 3,
        in_channels: 64,
        num_filters: 201,
        out_h: 8,
        out_w: 8,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let filters: Vec<FilterTensor> = (1..=201)
        .map(|i| {
            let scale = 4f32.powf(rng.gen_range(-1.0..1.0));
            FilterTensor {
                layer_id: 1,
                filter_index: i,
                weights: (0..layer.filter_len())
                    .map(|_| scale * rng.gen_range(-1.0f32..1.0))
                    .collect(),
            }
        })
        .collect();
    let pyramids = build_layer(&filters, &layer)?;
    let (key, rest) = pyramids.split_last().expect("non-empty");
    let candidates = CandidateSet::new(rest);
    let result = candidates.find_closest(key)?;

    let mut brute = (0, f64::INFINITY);
    for p in rest {
        let d = base_distance_sq(key, p)?;
        if d < brute.1 {
            brute = (p.filter_index, d);
        }
    }
    println!(
        "closest to filter {}: {} (d^2 = {:.6})",
        key.filter_index, result.best_index, result.distance_sq
    );
    println!("brute force:          {} (d^2 = {:.6})", brute.0, brute.1);
    println!(
        "{}",
        serde_json::to_string_pretty(&result.stats).expect("stats serialize")
    );
    Ok(())
}
