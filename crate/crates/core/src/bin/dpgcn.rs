use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dpgcn::accountant::{self, AccountantLedger};
use dpgcn::dataset::{generate_synthetic, load_dataset, save_dataset, SynthSpec};
use dpgcn::harness::{self, ExperimentConfig};
use dpgcn::Error;

#[derive(Parser)]
#[command(name = "dpgcn", version, about = "Differentially private GCN training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed instead of the config's list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Privacy spent by repeated subsampled Gaussian steps.
    Account {
        #[arg(long)]
        q: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        steps: u64,
        #[arg(long, default_value_t = accountant::DEFAULT_DELTA)]
        delta: f64,
    },
    /// Partition a dataset's training nodes into disjoint subgraphs.
    Split {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        s: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a block-model dataset from a key=value spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> dpgcn::Result<()> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| Error::Config(format!("{}: {e}", config.display())))?;
            let mut cfg = ExperimentConfig::parse(&text)?;
            if cfg.dataset.is_relative() {
                if let Some(dir) = config.parent() {
                    cfg.dataset = dir.join(&cfg.dataset);
                }
            }
            if let Some(seed) = seed {
                cfg.seeds = vec![seed];
            }
            let record = harness::run_experiment(&cfg)?;
            harness::emit_results(&record, &out)?;
            for s in &record.seeds {
                match (s.f1_micro, s.epsilon) {
                    (Some(f1), Some(eps)) => println!("seed {}: micro-F1 {f1:.4}, epsilon {eps:.4}", s.seed),
                    (Some(f1), None) => println!("seed {}: micro-F1 {f1:.4}", s.seed),
                    _ => println!("seed {}: failed ({:?})", s.seed, s.status),
                }
            }
            if let (Some(mean), Some(std)) = (record.aggregate.f1_micro_mean, record.aggregate.f1_micro_std) {
                println!("mean micro-F1 {mean:.4} ± {std:.4}");
            }
            println!("wrote {}", out.display());
        }
        Command::Account { q, sigma, steps, delta } => {
            let mut ledger = AccountantLedger::new();
            ledger.record(q, sigma, steps)?;
            let spent = accountant::eps_from_delta(&ledger, delta)?;
            match spent.order {
                Some(order) => println!("epsilon {:.6} (delta {delta}, order {order})", spent.epsilon),
                None => println!("epsilon {:.6} (delta {delta})", spent.epsilon),
            }
        }
        Command::Split { dataset, s, seed, out } => {
            let data = load_dataset(&dataset)?;
            let partition = harness::write_split(&data, s, seed, &out)?;
            println!("{} subgraphs, sizes {:?}", partition.num_subgraphs(), partition.sizes());
        }
        Command::Synth { spec, out } => {
            let text = std::fs::read_to_string(&spec)
                .map_err(|e| Error::Config(format!("{}: {e}", spec.display())))?;
            let spec = SynthSpec::parse(&text)?;
            let data = generate_synthetic(&spec)?;
            save_dataset(&data, &out)?;
            println!(
                "{}: {} nodes, {} edges, {} classes",
                data.name,
                data.num_nodes(),
                data.graph.num_edges(),
                data.num_classes
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(match err {
                Error::Config(_) => 2,
                Error::Dataset { .. } => 3,
                _ => 1,
            })
        }
    }
}
