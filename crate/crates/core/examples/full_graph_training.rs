//! Non-private training on the whole graph (experiment A), plus a sweep over
//! the fraction of training labels that are kept.

use dpgcn::dataset::{generate_synthetic, SynthSpec};
use dpgcn::harness::{self, ExperimentConfig, ExperimentKind, OptimizerKind, SweepAxis};

fn main() -> dpgcn::Result<()> {
    let data = generate_synthetic(&SynthSpec::balanced("sbm", 4, 60, 0.08, 0.005, 24, 1.0, 11))?;
    println!(
        "{}: {} nodes, {} edges, {} train / {} val / {} test",
        data.name,
        data.num_nodes(),
        data.graph.num_edges(),
        data.train.len(),
        data.val.len(),
        data.test.len()
    );

    for optimizer in [OptimizerKind::Adam, OptimizerKind::Sgd] {
        let mut cfg = ExperimentConfig::new("", ExperimentKind::A, optimizer);
        cfg.seeds = vec![0, 1, 2];
        let record = harness::run_on_dataset(&cfg, &data)?;
        let stopped: Vec<usize> = record.seeds.iter().map(|s| s.epochs).collect();
        println!(
            "{optimizer:?}: micro-F1 {:.3} ± {:.3}, stopped after {stopped:?} epochs",
            record.aggregate.f1_micro_mean.unwrap_or(f64::NAN),
            record.aggregate.f1_micro_std.unwrap_or(f64::NAN)
        );
    }

    let mut cfg = ExperimentConfig::new("", ExperimentKind::A, OptimizerKind::Adam);
    cfg.seeds = vec![0, 1];
    let rows = harness::run_sweep(&cfg, &data, SweepAxis::TrainFraction, &[0.1, 0.3, 1.0])?;
    let out = std::env::temp_dir().join("dpgcn-train-fraction.csv");
    harness::write_sweep_csv(&rows, &out)?;
    for row in &rows {
        println!("  train fraction {:.1}: micro-F1 {:.3}", row.value, row.f1_micro_mean.unwrap_or(f64::NAN));
    }
    println!("sweep written to {}", out.display());
    Ok(())
}
