//! Gradient-based optimization over robustness.

mod descent;
mod loss;
mod plan;
mod pstl;
mod regfit;

pub use descent::{gradient_descent, AnnealSchedule, GdOptions, GdResult, Method, Updater};
pub use loss::{MarginLoss, Reduction};
pub use plan::{expand_regions, plan, project, smoothness, PlanOptions, PlanProblem, PlanResult, Region};
pub use pstl::{
    fit_pstl, fit_pstl_bisect, infer_monotonicity, step_response, step_responses, BisectOptions, Monotonicity, PstlFit,
    PstlOptions, PstlProblem,
};
pub use regfit::{least_squares, regularized_fit, synthetic_data, Model, RegFit, RegfitOptions};
