//! Multi-batch L-BFGS with overlapping batches against plain SGD on
//! synthetic logistic regression, at a few batch sizes.

use qnopt::linesearch::WolfeParams;
use qnopt::multibatch::{multibatch_lbfgs, sgd_minimize, MultiBatchConfig, OverlapSampler, StepRule};
use qnopt::problems::{Logistic, Objective};

fn main() -> qnopt::Result<()> {
    let data = Logistic::synthetic(2000, 20, 1);
    let w0 = vec![0.0; data.dim()];

    let mut sampler = OverlapSampler::new(data.num_samples(), 8, 0.5, 0)?;
    for _ in 0..3 {
        let plan = sampler.next_plan();
        println!("carried {:?}  next overlap {:?}  rest {:?}", plan.carried, plan.next_overlap, plan.rest);
    }

    for b in [50, 200, 800] {
        let lbfgs = multibatch_lbfgs(
            &data,
            &w0,
            &MultiBatchConfig {
                batch: b,
                iters: 100,
                step: StepRule::Wolfe(WolfeParams::default()),
                ..MultiBatchConfig::default()
            },
        )?;
        let sgd = sgd_minimize(&data, &w0, 0.5, b, 100, 0)?;
        println!(
            "b = {b:4}: L-BFGS loss {:.4} acc {:.3} ({} fevals) | SGD loss {:.4} acc {:.3}",
            lbfgs.loss,
            data.accuracy(&lbfgs.w),
            lbfgs.counters.fevals,
            sgd.loss,
            data.accuracy(&sgd.w)
        );
    }
    Ok(())
}
