//! A stand-alone evaluator process speaking the JSON-lines protocol, backed
//! by the synthetic accuracy model. Useful for driving `hp-prune prune`
//! without a training setup:
//!
//!     hp-prune prune --model models/vgg16-cifar \
//!         --evaluator "target/debug/examples/synthetic_evaluator --penalty 13:10:0.125"

use std::io::{self, BufWriter};

use clap::Parser;
use hp_prune::evaluator::{serve, Penalty};
use hp_prune::{Evaluator, EvaluatorError, ModelManifest, SyntheticEvaluator, SyntheticSpec};

#[derive(Parser)]
struct Args {
    /// Accuracy of the unpruned model.
    #[arg(long, default_value_t = 0.916)]
    baseline: f64,
    /// `layer:weight:threshold`; repeatable.
    #[arg(long, value_parser = parse_penalty)]
    penalty: Vec<(u32, Penalty)>,
}

fn parse_penalty(s: &str) -> Result<(u32, Penalty), String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [layer, weight, threshold] = parts[..] else {
        return Err(format!("expected layer:weight:threshold, got {s:?}"));
    };
    let num = |x: &str| x.parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    Ok((
        layer.parse().map_err(|e| format!("{layer:?}: {e}"))?,
        Penalty {
            weight: num(weight)?,
            threshold: num(threshold)?,
        },
    ))
}

fn main() {
    let args = Args::parse();
    let spec = SyntheticSpec {
        baseline: args.baseline,
        penalties: args.penalty.into_iter().collect(),
    };
    let stdin = io::stdin().lock();
    let stdout = BufWriter::new(io::stdout().lock());
    let result = serve(stdin, stdout, |model| {
        let manifest =
            ModelManifest::load(model).map_err(|e| EvaluatorError::Remote(e.to_string()))?;
        Ok(Box::new(SyntheticEvaluator::new(spec.clone(), &manifest)) as Box<dyn Evaluator>)
    });
    if let Err(e) = result {
        eprintln!("synthetic_evaluator: {e}");
        std::process::exit(1);
    }
}
