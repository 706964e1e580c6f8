//! Coal blend planning engine.
//!
//! Scenarios describe ROM parcels, products, logistics and market terms.
//! A [`BlendPlan`] assigns 1000 t lots (by default) of ROM to products per
//! period and picks a wash cut-point per ROM and period. [`evaluate_plan`]
//! turns a plan into tonnes, quality, revenue, costs and NPV. The rest of the
//! crate counts and enumerates the plan space, searches it, and lets a
//! planner steer the search with directives.

pub mod analytics;
pub mod error;
pub mod eval;
pub mod finance;
pub mod guided;
pub mod io;
pub mod model;
pub mod optimizer;
pub mod plan;
pub mod pricing;
pub mod quality;
pub mod space;
pub mod validate;

pub use error::{ModelError, PlanError};
pub use eval::{compute_costs, evaluate_plan, EvaluationReport, PeriodCosts, Violation, ViolationCode};
pub use finance::npv;
pub use model::*;
pub use plan::{Allotment, BlendPlan, CutAssignment, CutPoint, PlanGrid, Rehandle};
pub use pricing::{check_spec, price_blend};
pub use quality::{blend_quality, degrade_quality, wash_parcel};
pub use validate::ValidationIssue;
