//! Generating, saving and reloading a dataset in the on-disk format read by
//! `dpgcn run`, then writing a config that points at it.

use dpgcn::dataset::{generate_synthetic, load_dataset, save_dataset, SynthSpec};
use dpgcn::harness::{ExperimentConfig, ExperimentKind, OptimizerKind};

fn main() -> dpgcn::Result<()> {
    let spec = SynthSpec::parse(
        "name = blocks\n\
         blocks = 50,50\n\
         p_intra = 0.2\n\
         p_inter = 0.01\n\
         feature_dim = 8\n\
         mean_shift = 1.0\n\
         seed = 3\n",
    )?;
    let data = generate_synthetic(&spec)?;
    println!(
        "{} nodes, {} edges ({} expected within blocks)",
        data.num_nodes(),
        data.graph.num_edges(),
        2.0 * 1225.0 * spec.p_intra
    );

    let dir = std::env::temp_dir().join("dpgcn-synthetic");
    save_dataset(&data, &dir)?;
    let reloaded = load_dataset(&dir)?;
    assert_eq!(reloaded, data);
    println!("saved and reloaded {}", dir.display());

    let mut cfg = ExperimentConfig::new(&dir, ExperimentKind::C, OptimizerKind::SgdDp);
    cfg.num_subgraphs = 5;
    cfg.target_epsilon = Some(1.0);
    let config_path = std::env::temp_dir().join("dpgcn-synthetic.cfg");
    std::fs::write(&config_path, cfg.to_config_string())?;
    println!("config for `dpgcn run --config {}`:", config_path.display());
    print!("{}", cfg.to_config_string());
    Ok(())
}
