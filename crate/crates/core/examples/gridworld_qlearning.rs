//! Q-learning on the 5×5 gridworld with multi-batch L-BFGS steps, checked
//! against value iteration.

use qnopt::rl::{optimal_actions, policy_matches, train_qlearning, Action, Gridworld, QConfig};

fn main() -> qnopt::Result<()> {
    let env = Gridworld::default();
    println!("{}\n", Gridworld::DEFAULT_MAP);
    let oracle = env.value_iteration(1e-12);
    let run = train_qlearning(&env, &QConfig::default())?;

    for p in run.evals.iter().step_by(4) {
        println!("after {:4} optimization steps: score {:5.2}  value gap {:.3}", p.step, p.score, p.value_gap);
    }
    let matched = policy_matches(&env, &run.q, &oracle, 1e-9);
    println!("\ngreedy policy optimal on {matched}/{} floor cells", env.states().len());
    println!("optimization steps {}, gradient evaluations {}", run.records.len(), run.counters.gevals);

    let arrows = ['↑', '↓', '←', '→'];
    for row in 0..env.height() {
        let line: String = (0..env.width())
            .map(|col| {
                let cell = row * env.width() + col;
                if env.is_wall(cell) {
                    '#'
                } else if env.is_terminal(cell) {
                    'T'
                } else {
                    let a = run.q.greedy(cell);
                    let ok = optimal_actions(&oracle[cell], 1e-9).contains(&a);
                    if ok { arrows[Action::from_index(a).index()] } else { '?' }
                }
            })
            .collect();
        println!("  {line}");
    }
    Ok(())
}
