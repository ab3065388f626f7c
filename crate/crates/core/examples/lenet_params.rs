//! Layer-by-layer parameter count of LeNet-5.

use qnopt::problems::{lenet5, param_count};

fn main() {
    let layers = lenet5();
    for l in &layers {
        println!("{l:?}: {}", l.param_count());
    }
    println!("total trainable parameters: {}", param_count(&layers));
}
