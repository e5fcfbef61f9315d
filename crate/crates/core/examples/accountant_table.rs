//! Privacy accounting for the subsampled Gaussian mechanism.
//!
//! Prints the noise → ε mapping for full-graph training (every step sees the
//! whole graph, so q = 1), then shows how sampling lots of subgraphs lowers
//! the noise needed for the same budget.

use dpgcn::accountant::{self, AccountantLedger, DEFAULT_DELTA};

fn main() -> dpgcn::Result<()> {
    println!("full graph, delta = {DEFAULT_DELTA}");
    println!("{:>10} {:>8} {:>8} {:>12} {:>6}", "optimizer", "sigma", "steps", "epsilon", "order");
    for (optimizer, steps, sigmas) in [("sgd", 2000, [4.0, 26.0, 48.0, 112.0]), ("adam", 500, [2.0, 13.0, 24.0, 56.0])] {
        for sigma in sigmas {
            let spent = accountant::epsilon_for(1.0, sigma, steps, DEFAULT_DELTA)?;
            println!(
                "{optimizer:>10} {sigma:>8} {steps:>8} {:>12.4} {:>6}",
                spent.epsilon,
                spent.order.unwrap_or(0)
            );
        }
    }

    println!("\nnoise needed for a target epsilon (2000 steps)");
    for target in [2.0, 1.0] {
        let full = accountant::calibrate_noise(target, DEFAULT_DELTA, 1.0, 2000)?;
        // Lots of 1 out of 10 subgraphs: ten noisy steps per epoch.
        let split = accountant::calibrate_noise(target, DEFAULT_DELTA, 0.1, 20_000)?;
        println!("  eps {target}: full graph sigma {full:.2}, 10 subgraphs with lot 1 sigma {split:.2}");
    }

    // Ledgers compose step by step; mixing mechanisms is allowed.
    let mut ledger = AccountantLedger::new();
    ledger.record(0.01, 4.0, 10_000)?;
    ledger.record_step(1.0, 50.0)?;
    let spent = accountant::eps_from_delta(&ledger, DEFAULT_DELTA)?;
    println!(
        "\nmixed ledger of {} steps: epsilon {:.4} at order {:?}; delta at that epsilon {:.2e}",
        ledger.total_steps(),
        spent.epsilon,
        spent.order,
        accountant::delta_from_eps(&ledger, spent.epsilon)?
    );
    Ok(())
}
