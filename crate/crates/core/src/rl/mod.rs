//! Deep Q-learning on gridworld MDPs, optimized by multi-batch line-search
//! L-BFGS, with a value-iteration oracle for checking the learned values.

mod agent;
mod gridworld;
mod qfunction;

pub use agent::{
    eps_greedy, epsilon_schedule, policy_matches, train_qlearning, EvalPoint, Experience, ExperienceMemory,
    Exploration, QConfig, QRun,
};
pub use gridworld::{optimal_actions, Action, Gridworld, QTable, Step};
pub use qfunction::{bellman_risk_grad, td_targets, value_gap, ActionValue, BellmanBatch, QFunction, QNetwork};
