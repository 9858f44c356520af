//! Agreement between the adaptive check and the Hamiltonian oracle, with a
//! dense sweep as tiebreaker when the two disagree.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hamiltonian::{oracle_verdict, OracleOptions};
use crate::model::PoleResidueModel;
use crate::verifier::{
    check_passivity_with, dense_reference_check, CheckOptions, DenseCheck, ModePreset, ViolationBand,
    REPORT_SCHEMA_VERSION,
};
use crate::warp::WarpMap;

pub const DENSE_TIEBREAK_POINTS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    /// Both methods give the same verdict.
    #[serde(rename = "TP")]
    TruePositive,
    /// Adaptive check passive, oracle not.
    #[serde(rename = "FP")]
    FalsePositive,
    /// Oracle passive, adaptive check not.
    #[serde(rename = "FN")]
    FalseNegative,
}

impl Classification {
    pub fn of(adaptive_passive: bool, oracle_passive: bool) -> Self {
        match (adaptive_passive, oracle_passive) {
            (a, o) if a == o => Self::TruePositive,
            (true, false) => Self::FalsePositive,
            _ => Self::FalseNegative,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::TruePositive => "TP",
            Self::FalsePositive => "FP",
            Self::FalseNegative => "FN",
        }
    }
}

/// Outcome of the dense tiebreak on a disagreement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjudication {
    /// FN where the dense sweep finds a violation: the model is really not
    /// passive and the oracle missed it.
    PassiveButFn,
    /// FN where the dense sweep finds nothing.
    FnUnconfirmed,
    /// FP where the dense sweep finds a violation the adaptive check missed.
    FpMissedViolation,
    /// FP where the dense sweep finds nothing.
    FpUnconfirmed,
}

impl Adjudication {
    pub fn label(self) -> &'static str {
        match self {
            Self::PassiveButFn => "passive_but_fn",
            Self::FnUnconfirmed => "fn_unconfirmed",
            Self::FpMissedViolation => "fp_missed_violation",
            Self::FpUnconfirmed => "fp_unconfirmed",
        }
    }

    pub fn of(class: Classification, dense_violation: bool) -> Option<Self> {
        match (class, dense_violation) {
            (Classification::TruePositive, _) => None,
            (Classification::FalseNegative, true) => Some(Self::PassiveButFn),
            (Classification::FalseNegative, false) => Some(Self::FnUnconfirmed),
            (Classification::FalsePositive, true) => Some(Self::FpMissedViolation),
            (Classification::FalsePositive, false) => Some(Self::FpUnconfirmed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub mode: String,
    pub classification: Classification,
    pub adaptive_passive: bool,
    pub oracle_passive: bool,
    pub adjudication: Option<Adjudication>,
    pub dense: Option<DenseCheck>,
    pub crossings: Vec<f64>,
    pub used_pencil: bool,
    pub adaptive_bands: Vec<ViolationBand>,
    pub oracle_bands: Vec<ViolationBand>,
    pub subband_count: usize,
    pub total_evaluations: usize,
    pub adaptive_time_s: f64,
    pub oracle_time_s: f64,
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareOptions {
    pub oracle: OracleOptions,
    pub check: CheckOptions,
    pub dense_points: usize,
    /// Run the dense sweep even when both methods agree.
    pub always_dense: bool,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            oracle: OracleOptions::default(),
            check: CheckOptions::default(),
            dense_points: DENSE_TIEBREAK_POINTS,
            always_dense: false,
        }
    }
}

/// Runs both checks and adjudicates any disagreement with a dense sweep over
/// the warped axis of the hard preset.
pub fn compare_model(
    model: &PoleResidueModel,
    preset: &ModePreset,
    options: &CompareOptions,
) -> Result<ComparisonReport> {
    let adaptive = check_passivity_with(model, preset, &options.check)?;

    let started = Instant::now();
    let ss = model.realize()?;
    let oracle = oracle_verdict(&ss, model, &options.oracle)?;
    let oracle_time = started.elapsed().as_secs_f64();

    let classification = Classification::of(adaptive.passive, oracle.passive);
    let dense = (classification != Classification::TruePositive || options.always_dense).then(|| {
        let map = WarpMap::for_model(model, &ModePreset::hard().warp);
        dense_reference_check(model, &map, options.dense_points)
    });
    Ok(ComparisonReport {
        schema_version: REPORT_SCHEMA_VERSION,
        mode: preset.name.clone(),
        classification,
        adaptive_passive: adaptive.passive,
        oracle_passive: oracle.passive,
        adjudication: dense.and_then(|d| Adjudication::of(classification, d.violation)),
        dense,
        crossings: oracle.crossings.frequencies.clone(),
        used_pencil: oracle.used_pencil,
        adaptive_bands: adaptive.bands,
        oracle_bands: oracle.bands,
        subband_count: adaptive.subband_count,
        total_evaluations: adaptive.total_evaluations,
        adaptive_time_s: adaptive.wall_time_s,
        oracle_time_s: oracle_time,
    })
}
