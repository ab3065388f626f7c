//! Line-search and trust-region L-BFGS on the Rosenbrock function from the
//! classic start (−1.2, 1).

use qnopt::linesearch::{ls_minimize, DriverConfig, WolfeParams};
use qnopt::problems::Rosenbrock;
use qnopt::trustregion::{tr_minimize, TrConfig};

fn main() -> qnopt::Result<()> {
    let f = Rosenbrock::new(2);
    let w0 = f.standard_start();

    let ls = ls_minimize(&f, &w0, &DriverConfig::default(), &WolfeParams::default())?;
    let tr = tr_minimize(&f, &w0, &TrConfig::default())?;

    for (name, out) in [("line search", &ls), ("trust region", &tr)] {
        println!(
            "{name:>12}: {:3} iterations, {:3} evaluations, f = {:.3e}, ‖g‖ = {:.2e}, w = ({:.8}, {:.8})",
            out.iterations(),
            out.counters.fevals,
            out.loss,
            out.grad_norm,
            out.w[0],
            out.w[1]
        );
    }

    println!("\ntrust-region radius trace (first 10 iterations):");
    for r in tr.records.iter().take(10) {
        let rho = r.rho.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!("  iter {:2}  δ = {:8.4}  ρ = {rho:>7}  accepted {}", r.iter, r.step_param, r.accepted);
    }
    Ok(())
}
