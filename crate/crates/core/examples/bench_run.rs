//! Drive the benchmark harness from code: configure a run from TOML, execute
//! it and write the same artifacts as `qnbench run`.

use qnopt::bench::{run, write_artifacts, RunConfig};

fn main() -> qnopt::Result<()> {
    let cfg = RunConfig::from_toml(
        r#"
        task = "quadratic"
        method = "ls-lbfgs"
        b = 64
        max-iters = 40
        seed = 3
        "#,
    )?;
    let report = run(&cfg)?;
    let dir = std::env::temp_dir().join("qnopt-bench-run");
    write_artifacts(&dir, &report)?;
    println!("{}", report.summary.to_json());
    println!("artifacts in {}", dir.display());
    Ok(())
}
