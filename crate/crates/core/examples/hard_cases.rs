//! Which test nodes does a private model get wrong?
//!
//! The nodes a majority-class baseline misclassifies are the "hard cases".
//! Their overlap with a trained model's errors shows whether the model fails
//! on the same nodes as the trivial baseline.

use dpgcn::dataset::{generate_synthetic, SynthSpec};
use dpgcn::harness::{self, ExperimentConfig, ExperimentKind, OptimizerKind};
use dpgcn::model;

fn main() -> dpgcn::Result<()> {
    // Unbalanced blocks give the majority baseline something to get right.
    let mut spec = SynthSpec::balanced("sbm", 3, 60, 0.08, 0.005, 16, 1.0, 21);
    spec.blocks = vec![120, 50, 30];
    let data = generate_synthetic(&spec)?;

    let baseline = model::majority_baseline(&data.labels, &data.train, &data.test, data.num_classes)?;
    println!(
        "majority baseline: micro-F1 {:.3}, macro-F1 {:.3}, {} hard cases",
        baseline.micro_f1,
        baseline.macro_f1,
        baseline.errors.len()
    );

    let mut runs = Vec::new();
    let mut clean = ExperimentConfig::new("", ExperimentKind::A, OptimizerKind::Adam);
    clean.seeds = vec![0];
    runs.push(("adam", clean));
    let mut private = ExperimentConfig::new("", ExperimentKind::B, OptimizerKind::SgdDp);
    private.target_epsilon = Some(2.0);
    private.max_epochs = 200;
    private.seeds = vec![0];
    runs.push(("sgd-dp eps 2", private));

    for (label, cfg) in runs {
        let record = harness::run_on_dataset(&cfg, &data)?;
        let seed = &record.seeds[0];
        let overlap = harness::hard_case_overlap(&seed.errors, &baseline.errors)?;
        println!(
            "{label}: micro-F1 {:.3}, {} errors, {:.0}% of hard cases also missed",
            seed.f1_micro.unwrap_or(f64::NAN),
            seed.errors.len(),
            100.0 * overlap
        );
    }
    Ok(())
}
