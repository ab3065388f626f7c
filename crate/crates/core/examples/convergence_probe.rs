//! Fixed-step multi-batch L-BFGS on a quadratic: exact gradients decay
//! geometrically, sampled batches stall in a neighborhood of the optimum.

use qnopt::bench::{probe_bound, ProbeConfig};

fn main() -> qnopt::Result<()> {
    for batch in [None, Some(64), Some(16)] {
        let r = probe_bound(&ProbeConfig { batch, ..ProbeConfig::default() })?;
        let label = batch.map_or("full".to_string(), |b| b.to_string());
        println!(
            "batch {label:>4}: λ′ = {:.3}, Λ′ = {:.3}, η² = {:.2e}, rate {:.3} (bound {:.3}), plateau {:.2e} (bound {:.2e}), bound holds {}",
            r.lambda_prime, r.big_lambda_prime, r.eta_sq, r.fitted_rate, r.contraction, r.plateau, r.residual_term, r.bound_holds
        );
        for k in [0, 10, 50, 100, 300] {
            println!("    k = {k:3}: offset {:.3e}  bound {:.3e}", r.offsets[k], r.bound[k]);
        }
    }
    match probe_bound(&ProbeConfig { alpha: 10.0, ..ProbeConfig::default() }) {
        Err(e) => println!("α = 10: {e}"),
        Ok(_) => println!("α = 10 unexpectedly admissible"),
    }
    Ok(())
}
