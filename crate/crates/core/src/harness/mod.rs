//! Reproduction drivers: the ablation table and numerical gradient checks.

mod ablation;
mod gradcheck;

pub use ablation::{
    run_ablation, AblationConfig, AblationReport, AblationRow, PaperRow, ABSTRACT_REDUCTION_CLAIM, PAPER_ROWS,
};
pub use gradcheck::{run_gradcheck, GradcheckSummary, GradTrial, GRAD_REL_FLOOR, GRAD_TOLERANCE, ROW_SUM_TOLERANCE};
