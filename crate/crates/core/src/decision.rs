//! Decision metrics and the MNAR rescaling scenarios.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{CeaError, Result};
use crate::missing::{CellStatus, ImputedSets, COL_UTILITY};
use crate::trial::Arm;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Icer {
    Ratio(f64),
    /// Cheaper and more effective.
    Dominant,
    /// Costlier and less effective.
    Dominated,
    /// No difference in effect.
    Undefined,
}

impl Icer {
    pub fn label(&self) -> String {
        match self {
            Icer::Ratio(r) => format!("{r:.2}"),
            Icer::Dominant => "Dominant".into(),
            Icer::Dominated => "Dominated".into(),
            Icer::Undefined => "Undefined (ΔE=0)".into(),
        }
    }

    pub fn ratio(&self) -> Option<f64> {
        match self {
            Icer::Ratio(r) => Some(*r),
            _ => None,
        }
    }
}

impl fmt::Display for Icer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

pub fn icer(delta_c: f64, delta_e: f64) -> Icer {
    if delta_e == 0.0 {
        Icer::Undefined
    } else if delta_c < 0.0 && delta_e > 0.0 {
        Icer::Dominant
    } else if delta_c > 0.0 && delta_e < 0.0 {
        Icer::Dominated
    } else {
        Icer::Ratio(delta_c / delta_e)
    }
}

fn check_threshold(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(CeaError::Domain(format!("threshold must be positive and finite, got {lambda}")))
    }
}

/// Net health benefit `ΔE − ΔC/λ`, in QALYs.
pub fn nhb(delta_c: f64, delta_e: f64, lambda: f64) -> Result<f64> {
    check_threshold(lambda)?;
    Ok(delta_e - delta_c / lambda)
}

/// Net monetary benefit `λΔE − ΔC`.
pub fn nmb(delta_c: f64, delta_e: f64, lambda: f64) -> Result<f64> {
    check_threshold(lambda)?;
    Ok(lambda * delta_e - delta_c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionSummary {
    pub delta_c: f64,
    pub delta_e: f64,
    pub icer: Icer,
    pub threshold: f64,
    pub nhb: f64,
    pub nmb: f64,
    pub prob_cost_effective: f64,
}

impl DecisionSummary {
    pub fn new(delta_c: f64, delta_e: f64, threshold: f64, prob_cost_effective: f64) -> Result<Self> {
        Ok(DecisionSummary {
            delta_c,
            delta_e,
            icer: icer(delta_c, delta_e),
            threshold,
            nhb: nhb(delta_c, delta_e, threshold)?,
            nmb: nmb(delta_c, delta_e, threshold)?,
            prob_cost_effective,
        })
    }
}

/// Arm-specific multiplicative factors applied to imputed utilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MnarScenario {
    pub id: u8,
    pub c_control: f64,
    pub c_intervention: f64,
}

impl MnarScenario {
    pub fn factor(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Control => self.c_control,
            Arm::Intervention => self.c_intervention,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.c_control == 1.0 && self.c_intervention == 1.0
    }
}

/// The seven scenarios; the first is the MAR base case.
pub fn scenario_table() -> Vec<MnarScenario> {
    [(1.0, 1.0), (1.0, 0.95), (0.95, 1.0), (0.95, 0.95), (0.95, 0.90), (0.90, 0.95), (0.90, 0.90)]
        .into_iter()
        .enumerate()
        .map(|(k, (c, i))| MnarScenario { id: k as u8 + 1, c_control: c, c_intervention: i })
        .collect()
}

/// Multiplies every chained-equation-imputed utility cell by its arm's
/// factor. Observed, baseline-imputed and structural cells and all cost
/// columns are left as they are.
pub fn apply_mnar_rescale(sets: &ImputedSets, scenario: &MnarScenario) -> Result<ImputedSets> {
    let mask = sets.mask.as_ref().ok_or(CeaError::MissingMask)?;
    let mut out = sets.clone();
    if scenario.is_identity() {
        return Ok(out);
    }
    for name in COL_UTILITY {
        let Some(status) = mask.column(name) else { continue };
        for table in &mut out.datasets {
            let j = table.column_index(name).ok_or_else(|| CeaError::Config(format!("imputed set lacks {name}")))?;
            if status.len() != table.n_rows() {
                return Err(CeaError::validation(format!("mask for {name} does not match the dataset rows")));
            }
            for (i, s) in status.iter().enumerate() {
                if *s == CellStatus::Imputed {
                    let f = scenario.factor(table.rows[i].arm);
                    if let Some(v) = table.columns[j].values[i].as_mut() {
                        *v *= f;
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_cover_each_sign_pattern() {
        assert_eq!(icer(-1.0, 1.0), Icer::Dominant);
        assert_eq!(icer(1.0, -1.0), Icer::Dominated);
        assert_eq!(icer(5.0, 0.0), Icer::Undefined);
        assert_eq!(icer(-1.0, -0.5), Icer::Ratio(2.0));
    }

    #[test]
    fn nonpositive_threshold_is_a_domain_error() {
        assert!(matches!(nhb(1.0, 1.0, 0.0), Err(CeaError::Domain(_))));
        assert!(matches!(nmb(1.0, 1.0, -5.0), Err(CeaError::Domain(_))));
    }
}
