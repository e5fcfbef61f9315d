//! A private training loop written against the low-level API: per-example
//! gradients, clipping, one Gaussian draw per lot, Adam on the noisy mean,
//! and a ledger entry per step.

use dpgcn::accountant::{self, AccountantLedger};
use dpgcn::dataset::{generate_synthetic, SynthSpec};
use dpgcn::dp_optim::{self, AdamState, DpNoiseSpec};
use dpgcn::model;
use dpgcn::partition::{mask_subgraph, random_partition};
use dpgcn::rng::{SeededRng, Stream};

fn main() -> dpgcn::Result<()> {
    let data = generate_synthetic(&SynthSpec::balanced("sbm", 3, 40, 0.15, 0.01, 12, 2.0, 1))?;
    let seed = 7;
    let mut init = SeededRng::stream(seed, Stream::Init);
    let mut dropout = SeededRng::stream(seed, Stream::Dropout);
    let mut noise = SeededRng::stream(seed, Stream::Noise);
    let mut sampling = SeededRng::stream(seed, Stream::Sampling);
    let mut split = SeededRng::stream(seed, Stream::Partition);

    let partition = random_partition(&data.train, 6, &mut split)?;
    let examples = (0..6)
        .map(|k| {
            let sub = mask_subgraph(&data.graph, &data.features, &data.labels, &partition, k)?;
            Ok((sub.graph.normalize(), sub))
        })
        .collect::<dpgcn::Result<Vec<_>>>()?;

    let mut params = model::init_params(data.feature_dim(), 16, data.num_classes, &mut init)?;
    let mut adam = AdamState::new(params.len());
    let spec = DpNoiseSpec::new(1.0, 3.0)?;
    let mut ledger = AccountantLedger::new();

    for step in 1..=150 {
        let lot = dp_optim::sample_lot(examples.len(), 3, &mut sampling)?;
        let mut grads = Vec::new();
        for &k in &lot.examples {
            let (adj, sub) = &examples[k];
            let mask: Vec<usize> = (0..sub.global_ids.len()).collect();
            let (_, g) = model::loss_and_gradient(&params, adj, &sub.features, &sub.labels, &mask, 0.5, &mut dropout)?;
            grads.push(g);
        }
        let largest = grads.iter().map(|g| g.l2_norm()).fold(0.0, f64::max);
        let noisy = dp_optim::noisy_lot_gradient(&grads, &spec, &mut noise)?;
        dp_optim::adam_step(&mut adam, params.as_mut_slice(), &noisy, 0.1)?;
        ledger.record_step(lot.sampling_ratio(), spec.noise_multiplier)?;
        if step % 50 == 0 {
            let val = model::evaluate(&params, &data.graph.normalize(), &data.features, &data.labels, &data.val)?;
            println!("step {step}: largest raw gradient norm {largest:.3}, val micro-F1 {:.3}", val.micro_f1);
        }
    }
    let spent = accountant::eps_from_delta(&ledger, 1e-5)?;
    let test = model::evaluate(&params, &data.graph.normalize(), &data.features, &data.labels, &data.test)?;
    println!(
        "after {} noisy steps: epsilon {:.3}, test micro-F1 {:.3}, macro-F1 {:.3}",
        ledger.total_steps(),
        spent.epsilon,
        test.micro_f1,
        test.macro_f1
    );
    Ok(())
}
