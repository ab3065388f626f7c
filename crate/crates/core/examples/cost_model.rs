//! Per-sample cost of multi-batch L-BFGS relative to SGD.

use qnopt::multibatch::{cost_ratio, CostParams};

fn main() {
    let base = CostParams { b: 2048.0, b_s: 32.0, f: 4.0, z: 5.0, m: 20.0 };
    println!("b = 2048, b_s = 32, f = 4, z = 5, m = 20: ratio {:.4}", cost_ratio(&base));
    for b in [256.0, 1024.0, 4096.0, 16384.0] {
        println!("  b = {b:6}: {:.4}", cost_ratio(&CostParams { b, ..base }));
    }
    for z in [1.0, 2.0, 5.0, 10.0] {
        println!("  z = {z:3}: {:.4}", cost_ratio(&CostParams { z, ..base }));
    }
}
