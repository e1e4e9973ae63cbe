//! Two-sided evaluation records for the quantitative estimates.

use alloc::string::String;
use alloc::vec::Vec;

/// Which estimate a report refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EstimateId {
    Thm1Lorentz,
    CorLlogL,
    Thm2Morrey,
    CorBorderlineMorrey,
    Thm3LorentzMorrey,
    Prop42Comparison,
    Prop52SuperLevel,
    Prop53MaximalLorentz,
    Prop54PrelimMorrey,
    P41iRevHolder,
    P41iiHigherInt,
    P41iiiCaccioppoli,
    P41ivMorreyDecay,
    A3Riesz,
    /// The Lebesgue/Lorentz inclusion chain with explicit constants.
    EmbeddingChain,
}

impl EstimateId {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimateId::Thm1Lorentz => "Thm1-Lorentz",
            EstimateId::CorLlogL => "Cor-LlogL",
            EstimateId::Thm2Morrey => "Thm2-Morrey",
            EstimateId::CorBorderlineMorrey => "Cor-BorderlineMorrey",
            EstimateId::Thm3LorentzMorrey => "Thm3-LorentzMorrey",
            EstimateId::Prop42Comparison => "Prop42-Comparison",
            EstimateId::Prop52SuperLevel => "Prop52-SuperLevel",
            EstimateId::Prop53MaximalLorentz => "Prop53-MaximalLorentz",
            EstimateId::Prop54PrelimMorrey => "Prop54-PrelimMorrey",
            EstimateId::P41iRevHolder => "P41i-RevHolder",
            EstimateId::P41iiHigherInt => "P41ii-HigherInt",
            EstimateId::P41iiiCaccioppoli => "P41iii-Caccioppoli",
            EstimateId::P41ivMorreyDecay => "P41iv-MorreyDecay",
            EstimateId::A3Riesz => "A3-Riesz",
            EstimateId::EmbeddingChain => "A1-EmbeddingChain",
        }
    }
}

impl core::fmt::Display for EstimateId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Both sides of an inequality, the measured constant, and pass/fail against
/// the declared stability threshold.
#[derive(Clone, Debug)]
pub struct EstimateReport {
    pub id: EstimateId,
    pub lhs: f64,
    pub rhs_terms: Vec<(String, f64)>,
    /// `lhs / sum(rhs_terms)` on the coarse level, or the check-specific
    /// ratio documented by the producing operation.
    pub empirical_constant: f64,
    /// Free-form parameter record, rendered into reports.
    pub params: Vec<(String, String)>,
    /// `|c_fine - c_coarse| / c_coarse`; zero when only one level ran.
    pub refinement_stability: f64,
    pub pass: bool,
    pub notes: Vec<String>,
}

impl EstimateReport {
    pub fn rhs_total(&self) -> f64 {
        self.rhs_terms.iter().map(|(_, v)| v).sum()
    }

    /// The pass criterion every report uses: a finite constant that moves at
    /// most `threshold` under refinement.
    pub fn evaluate(constant: f64, stability: f64, threshold: f64) -> bool {
        constant.is_finite() && constant >= 0.0 && stability.is_finite() && stability <= threshold
    }
}

/// Default refinement-stability threshold used by the harness.
pub const DEFAULT_STABILITY_THRESHOLD: f64 = 0.25;
