//! Train the 784–64–10 classifier with both L-BFGS drivers and SGD.
//!
//! Usage: `cargo run --release --example mnist_classification [MNIST_DIR]`.
//! Without a directory the seeded synthetic digits are used.

use qnopt::bench::{run, Method, RunConfig, Task};

fn main() -> qnopt::Result<()> {
    let data_dir = std::env::args().nth(1);
    let mut runs = vec![
        ("ls-lbfgs m=20", Method::LsLbfgs, None, None),
        ("tr-lbfgs m=20", Method::TrLbfgs, None, None),
        ("sgd lr=1.0", Method::Sgd, Some(1.0), Some(32)),
        ("sgd lr=0.1", Method::Sgd, Some(0.1), Some(32)),
    ];
    if data_dir.is_none() {
        println!("no data directory given; using synthetic digits");
    }
    for (name, method, lr, b) in runs.drain(..) {
        let mut cfg = RunConfig::new(Task::Mnist, method);
        cfg.lr = lr;
        cfg.b = b;
        cfg.data_dir = data_dir.clone().map(Into::into);
        cfg.wall_clock = true;
        let r = run(&cfg)?;
        let s = &r.summary;
        println!(
            "{name:>14}: train acc {:5.1}%  test acc {:5.1}%  train loss {:.4}  test loss {:.4}  {:.1} s",
            100.0 * s.train_accuracy.unwrap_or(0.0),
            100.0 * s.test_accuracy.unwrap_or(0.0),
            s.final_loss.unwrap_or(f64::NAN),
            s.test_loss.unwrap_or(f64::NAN),
            s.wall_ms / 1e3
        );
    }
    Ok(())
}
