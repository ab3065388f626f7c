//! Fill a curvature memory from a quadratic, then compare the two-loop
//! direction with the compact representation it implicitly inverts.

use qnopt::direction::two_loop;
use qnopt::linalg::{norm, sub};
use qnopt::memory::DEFAULT_EPS_CURV;
use qnopt::problems::Quadratic;
use qnopt::CurvatureMemory;

fn main() -> qnopt::Result<()> {
    let n = 12;
    let quad = Quadratic::with_spectrum(n, 1.0, 100.0, 7);
    let mut mem = CurvatureMemory::new(n, 5);

    // Pairs from the exact Hessian: y = A s always has positive curvature.
    for k in 0..8 {
        let s: Vec<f64> = (0..n).map(|i| ((i * 7 + k * 3) % 5) as f64 - 2.0).collect();
        let y = quad.hessian().matvec(&s);
        let kept = mem.try_accept_pair(&s, &y, DEFAULT_EPS_CURV)?;
        println!("pair {k}: accepted {kept}, memory holds {}", mem.len());
    }
    // A pair with negative curvature is refused and leaves the memory alone.
    let s = vec![1.0; n];
    let y: Vec<f64> = s.iter().map(|v| -v).collect();
    println!("negative-curvature pair accepted: {}", mem.try_accept_pair(&s, &y, DEFAULT_EPS_CURV)?);
    println!("gamma = yᵀy/yᵀs of the newest pair = {:.4}", mem.gamma());

    let g: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
    let p = two_loop(&mem, &g)?;
    let bp = mem.compact_rep()?.apply(&p)?;
    let residual = norm(&sub(&bp, &g.iter().map(|v| -v).collect::<Vec<_>>()));
    println!("‖B p + g‖ = {residual:.2e}  (p = −H g, B = H⁻¹)");
    println!("descent: gᵀp = {:.4}", qnopt::linalg::dot(&g, &p));
    Ok(())
}
