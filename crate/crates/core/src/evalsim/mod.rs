//! Metrics, paired-split experiments, and the synthetic oracle/adversarial
//! prior simulations.

pub mod experiment;
pub mod metrics;
pub mod split;
pub mod synth;

pub use experiment::{
    run_adversarial_experiment, run_adversarial_oracle, run_oracle_experiment, run_sweep,
    write_records_csv, write_summary_csv, Method,
};
pub use metrics::{accuracy, auroc, auroc_pair_counting, mse, summarize, ExperimentRecord, SummaryRow};
pub use split::{train_test_split, SplitSpec};
pub use synth::{generate_oracle_problem, OracleProblem, SyntheticSpec};
