//! One backtracking Wolfe search along the normalized steepest-descent
//! direction, then the first iterations of the line-search driver.

use qnopt::linesearch::{ls_minimize, wolfe_search, DriverConfig, WolfeParams};
use qnopt::problems::{Objective, Rosenbrock};

fn main() -> qnopt::Result<()> {
    let f = Rosenbrock::new(2);
    let w = f.standard_start();
    let e = f.eval(&w)?;
    let gn = qnopt::linalg::norm(&e.grad);
    let p: Vec<f64> = e.grad.iter().map(|g| -g / gn).collect();
    let params = WolfeParams::default();

    let out = wolfe_search(&f, &w, &p, e.loss, &e.grad, &params)?;
    println!(
        "unit steepest descent: α = {:.4}, trials = {}, both conditions = {}, f: {:.3} → {:.3}",
        out.alpha, out.trials, out.satisfied, e.loss, out.f_new
    );

    let run = ls_minimize(&f, &w, &DriverConfig { max_iters: 8, ..DriverConfig::default() }, &params)?;
    println!("\nfirst iterations of the driver (unit steps dominate once curvature is learned):");
    for r in &run.records {
        println!("  iter {}  α = {:.4}  f = {:.4e}  fevals = {}", r.iter, r.step_param, r.loss, r.fevals);
    }
    Ok(())
}
