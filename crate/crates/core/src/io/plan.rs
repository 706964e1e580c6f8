//! `.plan` documents.

use serde::{Deserialize, Serialize};

use crate::plan::{Allotment, BlendPlan, CutAssignment, Rehandle};

use super::{parse_document, DocumentError, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDocument {
    pub schema_version: u32,
    #[serde(default)]
    pub allotments: Vec<Allotment>,
    #[serde(default)]
    pub cut_points: Vec<CutAssignment>,
    #[serde(default)]
    pub rehandles: Vec<Rehandle>,
}

impl From<&BlendPlan> for PlanDocument {
    fn from(p: &BlendPlan) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            allotments: p.allotments.clone(),
            cut_points: p.cut_points.clone(),
            rehandles: p.rehandles.clone(),
        }
    }
}

impl From<PlanDocument> for BlendPlan {
    fn from(d: PlanDocument) -> Self {
        BlendPlan { allotments: d.allotments, cut_points: d.cut_points, rehandles: d.rehandles }
    }
}

/// Writes `plan` as is; entry order is preserved, so loading the output
/// gives back an equal plan.
pub fn save_plan(plan: &BlendPlan) -> String {
    toml::to_string(&PlanDocument::from(plan)).expect("plan documents always serialize")
}

/// Parses a plan document. Ids are not checked here; binding the plan to a
/// scenario does that.
pub fn load_plan(bytes: &[u8]) -> Result<BlendPlan, DocumentError> {
    parse_document::<PlanDocument>(bytes).map(BlendPlan::from)
}
