//! Solve the trust-region subproblem over a compact L-BFGS matrix for a
//! shrinking radius and print the optimality certificate at each size.

use qnopt::linalg::norm;
use qnopt::memory::DEFAULT_EPS_CURV;
use qnopt::trustregion::{certificate_holds, solve_subproblem};
use qnopt::CurvatureMemory;

fn main() -> qnopt::Result<()> {
    let n = 200;
    let mut mem = CurvatureMemory::new(n, 6);
    for k in 0..6 {
        let s: Vec<f64> = (0..n).map(|i| ((i + 1) as f64 * (k + 1) as f64).cos()).collect();
        // Curvature along s grows with k, so the pairs are far from γI.
        let y: Vec<f64> = s.iter().enumerate().map(|(i, v)| v * (1.0 + (i % 10) as f64 + k as f64)).collect();
        mem.try_accept_pair(&s, &y, DEFAULT_EPS_CURV)?;
    }
    let factors = mem.factors();
    let g: Vec<f64> = (0..n).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();

    println!("{:>8} {:>10} {:>10} {:>9} {:>10} {:>10} {:>5}", "δ", "‖p‖", "σ", "boundary", "Q(p)", "residual", "ok");
    for delta in [100.0, 10.0, 3.0, 1.0, 0.1, 0.01] {
        let sol = solve_subproblem(&factors, &g, delta)?;
        println!(
            "{delta:>8} {:>10.4} {:>10.4} {:>9} {:>10.4} {:>10.1e} {:>5}",
            norm(&sol.p),
            sol.sigma,
            sol.on_boundary,
            sol.model,
            sol.opt_residual,
            certificate_holds(&sol, &g, delta)
        );
    }
    Ok(())
}
