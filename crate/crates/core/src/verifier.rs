//! Two-step passivity check: warp the frequency axis into subbands from the
//! model poles, run the tree search on every subband, then merge the samples
//! and turn threshold violations into bands.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mnmso::{self, SearchConfig, SubbandResult};
use crate::model::{Frequency, PoleResidueModel, GAMMA};
use crate::warp::{WarpMap, WarpParams};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Soft,
    Hard,
    Final,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Soft, Mode::Hard, Mode::Final];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Soft => "soft",
            Mode::Hard => "hard",
            Mode::Final => "final",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft" => Ok(Mode::Soft),
            "hard" => Ok(Mode::Hard),
            "final" => Ok(Mode::Final),
            other => Err(Error::InvalidConfig(format!("unknown mode `{other}`"))),
        }
    }
}

/// Step-1 and Step-2 settings under one name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModePreset {
    pub name: String,
    pub warp: WarpParams,
    pub search: SearchConfig,
}

impl ModePreset {
    /// Speed-oriented settings for early enforcement iterations.
    pub fn soft() -> Self {
        let mut budgets = vec![7];
        budgets.extend((1..=10).map(|k| 10 * k));
        Self {
            name: "soft".into(),
            warp: WarpParams {
                rho: 1e3,
                r_cp: 1,
                r_rp: 2,
                r_hf: 5,
                c: 50.0,
                q_max: 500.0,
                kappa: 3,
                decades: 0.5,
            },
            search: SearchConfig {
                partition: 5,
                initial_level: 1,
                delta_zeta: 1e-8,
                delta_theta: 1e-8,
                delta_eta: 1e-3,
                epsilon: 1e-3,
                epsilon_decay: 0.1,
                budget_schedule: budgets,
                basket_reuse: false,
                gamma: GAMMA,
            },
        }
    }

    /// Accuracy-oriented settings for small violations.
    pub fn hard() -> Self {
        Self {
            name: "hard".into(),
            warp: WarpParams {
                rho: f64::INFINITY,
                r_cp: 3,
                r_rp: 3,
                r_hf: 6,
                c: 50.0,
                q_max: 500.0,
                kappa: 3,
                decades: 0.5,
            },
            search: SearchConfig {
                partition: 5,
                initial_level: 1,
                delta_zeta: 1e-8,
                delta_theta: 1e-8,
                delta_eta: 1e-2,
                epsilon: 1e-3,
                epsilon_decay: 0.1,
                budget_schedule: (1..=10).map(|k| 10 * k).collect(),
                basket_reuse: false,
                gamma: GAMMA,
            },
        }
    }

    /// Model qualification: hard warping, ternary tree with basket reuse.
    pub fn qualification() -> Self {
        let hard = Self::hard();
        Self {
            name: "final".into(),
            warp: hard.warp,
            search: SearchConfig {
                partition: 3,
                delta_eta: 1e-3,
                epsilon: 1e-4,
                budget_schedule: (1..=5).map(|k| 50 * k).collect(),
                basket_reuse: true,
                ..hard.search
            },
        }
    }

    pub fn for_mode(mode: Mode) -> Self {
        match mode {
            Mode::Soft => Self::soft(),
            Mode::Hard => Self::hard(),
            Mode::Final => Self::qualification(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.warp.validate()?;
        self.search.validate()
    }
}

/// A frequency interval where `phi > gamma`.
///
/// `omega_lo < omega_peak < omega_hi`, except that the peak may sit on the
/// band edge at `omega = 0` or at infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViolationBand {
    pub omega_lo: f64,
    pub omega_hi: Frequency,
    pub omega_peak: Frequency,
    pub phi_peak: f64,
}

impl ViolationBand {
    pub fn contains(&self, omega: f64) -> bool {
        omega >= self.omega_lo && Frequency::Finite(omega) <= self.omega_hi
    }
}

/// One evaluated point in global order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergedSample {
    pub omega: Frequency,
    /// Global warped coordinate in `[0, L]`.
    pub zeta: f64,
    pub phi: f64,
    pub subband: usize,
    /// True for control-point evaluations.
    pub anchor: bool,
}

impl MergedSample {
    pub fn is_violation(&self) -> bool {
        self.phi > GAMMA
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalMaximum {
    pub omega: Frequency,
    pub zeta: f64,
    pub phi: f64,
    pub subband: usize,
    /// On a control point or next to a sample from another subband.
    pub at_edge: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassivityReport {
    pub schema_version: u32,
    pub mode: String,
    pub passive: bool,
    pub subband_count: usize,
    /// Evaluator calls of the sampling stage (control points and searches).
    pub total_evaluations: usize,
    /// Share of `total_evaluations` spent on control points.
    pub anchor_evaluations: usize,
    /// Extra evaluator calls spent refining band edges.
    pub refine_evaluations: usize,
    /// Samples above the threshold before postprocessing.
    pub violation_samples: usize,
    pub phi_max: f64,
    pub omega_at_max: Frequency,
    pub bands: Vec<ViolationBand>,
    pub local_maxima: Vec<LocalMaximum>,
    pub wall_time_s: f64,
    #[serde(skip)]
    pub per_subband_evaluations: Vec<usize>,
    #[serde(skip)]
    pub samples: Vec<MergedSample>,
    #[serde(skip)]
    pub subband_results: Vec<SubbandResult>,
}

impl PassivityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOptions {
    /// Relative tolerance of the band-edge bisection.
    pub refine_tol: f64,
    /// Search subbands on the rayon pool.
    pub parallel: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            refine_tol: 1e-9,
            parallel: true,
        }
    }
}

/// A metric function with a call counter; non-finite values are errors.
pub struct CountingMetric<F> {
    f: F,
    calls: AtomicUsize,
}

impl<F: Fn(Frequency) -> f64 + Sync> CountingMetric<F> {
    pub fn new(f: F) -> Self {
        Self {
            f,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn eval(&self, omega: Frequency) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let v = (self.f)(omega);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteMetric { omega: omega.as_f64() })
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl<'a> CountingMetric<Box<dyn Fn(Frequency) -> f64 + Sync + 'a>> {
    pub fn for_model(model: &'a PoleResidueModel) -> Self {
        Self::new(Box::new(move |w| model.passivity_metric(w)))
    }
}

fn search_subband<F: Fn(Frequency) -> f64 + Sync>(
    metric: &CountingMetric<F>,
    map: &WarpMap,
    config: &SearchConfig,
    subband: usize,
) -> Result<SubbandResult> {
    mnmso::try_run(config, |t| metric.eval(map.unwarp_local(subband, t))).map_err(|failure| {
        let omega = map.unwarp_local(subband, failure.zeta.clamp(0.0, 1.0));
        Error::Numerical(format!(
            "subband {subband} search failed at omega = {omega}: {}",
            failure.message
        ))
    })
}

/// Runs the full check with default options.
pub fn check_passivity(model: &PoleResidueModel, preset: &ModePreset) -> Result<PassivityReport> {
    check_passivity_with(model, preset, &CheckOptions::default())
}

pub fn check_passivity_with(
    model: &PoleResidueModel,
    preset: &ModePreset,
    options: &CheckOptions,
) -> Result<PassivityReport> {
    check_passivity_with_metric(model, preset, options, |w| model.passivity_metric(w))
}

/// Same as [`check_passivity_with`] but samples `metric` in place of the
/// model's own `phi`; the model still supplies the poles for warping.
pub fn check_passivity_with_metric<F>(
    model: &PoleResidueModel,
    preset: &ModePreset,
    options: &CheckOptions,
    metric: F,
) -> Result<PassivityReport>
where
    F: Fn(Frequency) -> f64 + Sync,
{
    let started = Instant::now();
    model.ensure_valid()?;
    preset.validate()?;
    let map = WarpMap::for_model(model, &preset.warp);
    let subbands = map.subband_count();
    let metric = CountingMetric::new(metric);

    let anchors: Vec<f64> = map
        .control_points()
        .points()
        .into_iter()
        .map(|w| metric.eval(w))
        .collect::<Result<_>>()?;

    let results: Vec<SubbandResult> = if options.parallel {
        (0..subbands)
            .into_par_iter()
            .map(|l| search_subband(&metric, &map, &preset.search, l))
            .collect::<Result<_>>()?
    } else {
        (0..subbands)
            .map(|l| search_subband(&metric, &map, &preset.search, l))
            .collect::<Result<_>>()?
    };
    let sampling_calls = metric.calls();

    // subband l owns its left control point; the last one also owns infinity
    let per_subband: Vec<usize> = results
        .iter()
        .enumerate()
        .map(|(l, r)| r.eval_count + if l + 1 == subbands { 2 } else { 1 })
        .collect();
    debug_assert_eq!(per_subband.iter().sum::<usize>(), sampling_calls);

    let merged = merge_subband_samples(&map, &anchors, &results);
    let maxima = postprocess_edge_maxima(&merged);
    let bands = extract_bands(&merged, &metric, options.refine_tol)?;
    let refine_calls = metric.calls() - sampling_calls;

    let (omega_at_max, phi_max) = merged
        .iter()
        .fold((Frequency::Finite(0.0), f64::NEG_INFINITY), |best, s| {
            if s.phi > best.1 {
                (s.omega, s.phi)
            } else {
                best
            }
        });

    Ok(PassivityReport {
        schema_version: REPORT_SCHEMA_VERSION,
        mode: preset.name.clone(),
        passive: bands.is_empty(),
        subband_count: subbands,
        total_evaluations: sampling_calls,
        anchor_evaluations: anchors.len(),
        refine_evaluations: refine_calls,
        violation_samples: merged.iter().filter(|s| s.is_violation()).count(),
        phi_max,
        omega_at_max,
        bands,
        local_maxima: maxima,
        wall_time_s: started.elapsed().as_secs_f64(),
        per_subband_evaluations: per_subband,
        samples: merged,
        subband_results: results,
    })
}

/// Places every subband sample and control-point value on the global axis,
/// sorted by frequency. Samples landing on the same frequency are kept once.
pub fn merge_subband_samples(map: &WarpMap, anchors: &[f64], results: &[SubbandResult]) -> Vec<MergedSample> {
    let subbands = map.subband_count();
    let mut merged: Vec<MergedSample> = anchors
        .iter()
        .enumerate()
        .map(|(l, &phi)| MergedSample {
            omega: map.control_points().point(l),
            zeta: l as f64,
            phi,
            subband: l.min(subbands - 1),
            anchor: true,
        })
        .collect();
    for (l, result) in results.iter().enumerate() {
        merged.extend(result.samples.iter().map(|s| MergedSample {
            omega: map.unwarp_local(l, s.zeta),
            zeta: l as f64 + s.zeta,
            phi: s.theta,
            subband: l,
            anchor: false,
        }));
    }
    merged.sort_by(|a, b| a.omega.as_f64().total_cmp(&b.omega.as_f64()).then(b.anchor.cmp(&a.anchor)));
    merged.dedup_by(|later, earlier| later.omega == earlier.omega);
    merged
}

/// Local maxima above the threshold over the merged global ordering.
///
/// A sample counts only if it beats its nearest neighbours on both sides,
/// wherever those come from, so a violation sitting at a subband edge
/// with a larger value just across the edge is dropped. The first and last
/// samples (`omega = 0` and infinity) need only beat their single neighbour.
/// Of a plateau of equal values the leftmost sample is kept.
pub fn postprocess_edge_maxima(merged: &[MergedSample]) -> Vec<LocalMaximum> {
    let mut out = Vec::new();
    let n = merged.len();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && merged[j + 1].phi == merged[i].phi {
            j += 1;
        }
        let value = merged[i].phi;
        let left_ok = i == 0 || merged[i - 1].phi < value;
        let right_ok = j + 1 == n || merged[j + 1].phi < value;
        if value > GAMMA && left_ok && right_ok {
            let s = merged[i];
            let crosses = |k: Option<usize>| k.is_some_and(|k| merged[k].subband != s.subband);
            out.push(LocalMaximum {
                omega: s.omega,
                zeta: s.zeta,
                phi: s.phi,
                subband: s.subband,
                at_edge: s.anchor || crosses(i.checked_sub(1)) || crosses(Some(i + 1).filter(|&k| k < n)),
            });
        }
        i = j + 1;
    }
    out
}

/// Bisection for the threshold crossing between `inside` (violating) and
/// `outside` (not violating). Either end may be infinite.
fn bisect_edge<F: Fn(Frequency) -> f64 + Sync>(
    metric: &CountingMetric<F>,
    inside: Frequency,
    outside: Frequency,
    tol: f64,
) -> Result<Frequency> {
    // work in u = 1/omega when the bracket reaches infinity
    let reciprocal = inside.is_infinite() || outside.is_infinite();
    let to_coord = |w: Frequency| if reciprocal { 1.0 / w.as_f64() } else { w.as_f64() };
    let from_coord = |x: f64| {
        if reciprocal {
            if x == 0.0 {
                Frequency::Infinite
            } else {
                Frequency::Finite(1.0 / x)
            }
        } else {
            Frequency::Finite(x)
        }
    };
    let mut a = to_coord(inside);
    let mut b = to_coord(outside);
    for _ in 0..400 {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        let phi = metric.eval(from_coord(mid))?;
        let width_ok = (a - b).abs() <= 2.0 * tol * a.abs().max(b.abs());
        if width_ok && (phi - GAMMA).abs() <= tol {
            return Ok(from_coord(mid));
        }
        if phi > GAMMA {
            a = mid;
        } else {
            b = mid;
        }
    }
    // bracket exhausted at f64 resolution
    Ok(from_coord(a))
}

/// Turns each run of consecutive violating samples into a band whose edges
/// are refined by bisection on `phi - gamma` to relative tolerance
/// `refine_tol`; the peak is the largest sample of the run.
pub fn extract_bands<F: Fn(Frequency) -> f64 + Sync>(
    merged: &[MergedSample],
    metric: &CountingMetric<F>,
    refine_tol: f64,
) -> Result<Vec<ViolationBand>> {
    let mut bands: Vec<ViolationBand> = Vec::new();
    let n = merged.len();
    let mut i = 0;
    while i < n {
        if !merged[i].is_violation() {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < n && merged[i + 1].is_violation() {
            i += 1;
        }
        let end = i;
        i += 1;

        let peak = merged[start..=end]
            .iter()
            .fold(merged[start], |best, s| if s.phi > best.phi { *s } else { best });
        let lo = if start == 0 {
            0.0
        } else {
            bisect_edge(metric, merged[start].omega, merged[start - 1].omega, refine_tol)?.as_f64()
        };
        let hi = if end + 1 == n {
            merged[end].omega
        } else {
            bisect_edge(metric, merged[end].omega, merged[end + 1].omega, refine_tol)?
        };
        let band = ViolationBand {
            omega_lo: lo,
            omega_hi: hi,
            omega_peak: peak.omega,
            phi_peak: peak.phi,
        };
        match bands.last_mut() {
            Some(prev) if prev.omega_hi >= Frequency::Finite(band.omega_lo) => {
                prev.omega_hi = band.omega_hi;
                if band.phi_peak > prev.phi_peak {
                    prev.omega_peak = band.omega_peak;
                    prev.phi_peak = band.phi_peak;
                }
            }
            _ => bands.push(band),
        }
    }
    Ok(bands)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseCheck {
    pub count: usize,
    pub violation: bool,
    pub worst_omega: Frequency,
    pub worst_phi: f64,
}

fn worst_of(model: &PoleResidueModel, count: usize, point: impl Fn(usize) -> Frequency + Sync) -> DenseCheck {
    let (worst_index, worst_phi) = (0..count)
        .into_par_iter()
        .map(|k| (k, model.passivity_metric(point(k))))
        .reduce(
            || (usize::MAX, f64::NEG_INFINITY),
            |a, b| {
                if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                    b
                } else {
                    a
                }
            },
        );
    DenseCheck {
        count,
        violation: worst_phi > GAMMA,
        worst_omega: point(worst_index.min(count.saturating_sub(1))),
        worst_phi,
    }
}

/// `count` samples at the cell midpoints of a uniform grid over the warped
/// coordinate `[0, L]`.
pub fn dense_reference_check(model: &PoleResidueModel, map: &WarpMap, count: usize) -> DenseCheck {
    let count = count.max(1);
    let total = map.subband_count() as f64;
    worst_of(model, count, |k| map.unwarp((k as f64 + 0.5) * total / count as f64))
}

/// `count` equally spaced samples over `[0, omega_hi]`, both ends included.
pub fn uniform_sweep(model: &PoleResidueModel, omega_hi: f64, count: usize) -> DenseCheck {
    let count = count.max(2);
    let step = omega_hi / (count - 1) as f64;
    worst_of(model, count, |k| Frequency::Finite(k as f64 * step))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PoleTerm;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn siso(residue: f64, d: f64) -> PoleResidueModel {
        PoleResidueModel::new(
            1,
            10.0,
            DMatrix::from_element(1, 1, d),
            vec![PoleTerm::real(-1.0, DMatrix::from_element(1, 1, residue))],
        )
        .unwrap()
    }

    fn sample(omega: f64, phi: f64, subband: usize) -> MergedSample {
        MergedSample {
            omega: Frequency::Finite(omega),
            zeta: omega,
            phi,
            subband,
            anchor: false,
        }
    }

    #[test]
    fn preset_values() {
        let soft = ModePreset::soft();
        assert_eq!(soft.search.budget_schedule, vec![7, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100]);
        assert_eq!(soft.warp.rho, 1e3);
        let hard = ModePreset::hard();
        assert!(hard.warp.rho.is_infinite());
        assert_eq!((hard.warp.r_cp, hard.warp.r_rp, hard.warp.r_hf), (3, 3, 6));
        assert_eq!(hard.search.delta_eta, 1e-2);
        let fin = ModePreset::for_mode(Mode::Final);
        assert_eq!(fin.name, "final");
        assert_eq!(fin.search.partition, 3);
        assert_eq!(fin.search.budget_schedule, vec![50, 100, 150, 200, 250]);
        assert!(fin.search.basket_reuse);
        assert_eq!(fin.search.epsilon, 1e-4);
        for mode in Mode::ALL {
            ModePreset::for_mode(mode).validate().unwrap();
            assert_eq!(mode.name().parse::<Mode>().unwrap(), mode);
        }
    }

    #[test]
    fn passive_siso_passes() {
        let r = check_passivity(&siso(0.5, 0.0), &ModePreset::soft()).unwrap();
        assert!(r.passive);
        assert!(r.bands.is_empty());
        assert!(r.local_maxima.is_empty());
    }

    #[test]
    fn non_passive_siso_band_from_dc() {
        let r = check_passivity(&siso(2.0, 0.0), &ModePreset::hard()).unwrap();
        assert!(!r.passive);
        assert_eq!(r.bands.len(), 1);
        let band = r.bands[0];
        assert_eq!(band.omega_lo, 0.0);
        assert_eq!(band.omega_peak, Frequency::Finite(0.0));
        assert_eq!(band.phi_peak, 2.0);
        assert_relative_eq!(band.omega_hi.as_f64(), 3f64.sqrt(), max_relative = 1e-9);
    }

    #[test]
    fn direct_term_violation_extends_to_infinity() {
        let r = check_passivity(&siso(0.01, 1.1), &ModePreset::soft()).unwrap();
        assert!(!r.passive);
        let band = r.bands.last().unwrap();
        assert_eq!(band.omega_hi, Frequency::Infinite);
        assert!(band.phi_peak >= 1.1);
    }

    #[test]
    fn evaluation_accounting() {
        let model = siso(2.0, 0.0);
        let r = check_passivity_with(&model, &ModePreset::hard(), &CheckOptions { parallel: false, ..Default::default() })
            .unwrap();
        assert_eq!(r.per_subband_evaluations.iter().sum::<usize>(), r.total_evaluations);
        assert_eq!(r.anchor_evaluations, r.subband_count + 1);
        assert_eq!(r.samples.len(), r.total_evaluations);
    }

    #[test]
    fn edge_point_dominated_across_boundary_is_dropped() {
        let merged = vec![sample(1.0, 0.9, 0), sample(2.0, 1.02, 0), sample(2.1, 1.05, 1), sample(3.0, 0.8, 1)];
        let maxima = postprocess_edge_maxima(&merged);
        assert_eq!(maxima.len(), 1);
        assert_eq!(maxima[0].phi, 1.05);
        assert!(maxima[0].at_edge);
    }

    #[test]
    fn interior_peak_retained() {
        let merged = vec![sample(1.0, 0.9, 0), sample(2.0, 1.3, 0), sample(3.0, 0.95, 0)];
        let maxima = postprocess_edge_maxima(&merged);
        assert_eq!(maxima.len(), 1);
        assert_eq!(maxima[0].phi, 1.3);
        assert!(!maxima[0].at_edge);
    }

    #[test]
    fn plateau_keeps_leftmost() {
        let v = 1.0 + 1e-9;
        let merged = vec![sample(1.0, 0.5, 0), sample(2.0, v, 0), sample(3.0, v, 0), sample(4.0, v, 0), sample(5.0, 0.5, 0)];
        let maxima = postprocess_edge_maxima(&merged);
        assert_eq!(maxima.len(), 1);
        assert_eq!(maxima[0].omega, Frequency::Finite(2.0));
    }

    #[test]
    fn band_edges_by_bisection() {
        // |H| = 2 / sqrt(1 + w^2) crosses 1 at sqrt(3)
        let model = siso(2.0, 0.0);
        let metric = CountingMetric::for_model(&model);
        let merged = vec![
            sample(0.5, model.passivity_metric(Frequency::Finite(0.5)), 0),
            sample(1.0, model.passivity_metric(Frequency::Finite(1.0)), 0),
            sample(3.0, model.passivity_metric(Frequency::Finite(3.0)), 0),
        ];
        let bands = extract_bands(&merged, &metric, 1e-9).unwrap();
        assert_eq!(bands.len(), 1);
        assert_eq!(bands[0].omega_lo, 0.0);
        assert_relative_eq!(bands[0].omega_hi.as_f64(), 3f64.sqrt(), max_relative = 1e-9);
        assert!(metric.calls() > 0);

        let no_violation = vec![sample(1.0, 0.5, 0), sample(2.0, 0.7, 0)];
        assert!(extract_bands(&no_violation, &metric, 1e-9).unwrap().is_empty());
    }

    #[test]
    fn interior_band_has_two_refined_edges() {
        // narrow resonance: pair at -0.1 +- 2j with peak above one
        let model = PoleResidueModel::new(
            1,
            10.0,
            DMatrix::zeros(1, 1),
            vec![PoleTerm::pair(
                num_complex::Complex64::new(-0.1, 2.0),
                DMatrix::from_element(1, 1, num_complex::Complex64::new(0.15, 0.0)),
            )],
        )
        .unwrap();
        let metric = CountingMetric::for_model(&model);
        let at = |w: f64| sample(w, model.passivity_metric(Frequency::Finite(w)), 0);
        let merged = vec![at(1.0), at(2.0), at(3.0)];
        assert!(!merged[0].is_violation() && merged[1].is_violation() && !merged[2].is_violation());
        let bands = extract_bands(&merged, &metric, 1e-9).unwrap();
        assert_eq!(bands.len(), 1);
        let b = bands[0];
        assert!(b.omega_lo > 1.0 && b.omega_lo < 2.0);
        assert!(b.omega_hi.as_f64() > 2.0 && b.omega_hi.as_f64() < 3.0);
        for edge in [b.omega_lo, b.omega_hi.as_f64()] {
            assert!((model.passivity_metric(Frequency::Finite(edge)) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn dense_checks() {
        let passive = siso(0.5, 0.0);
        let map = WarpMap::for_model(&passive, &ModePreset::hard().warp);
        assert!(!dense_reference_check(&passive, &map, 100_000).violation);

        let active = siso(2.0, 0.0);
        let map = WarpMap::for_model(&active, &ModePreset::hard().warp);
        let d = dense_reference_check(&active, &map, 100_000);
        assert!(d.violation);
        assert!(d.worst_omega.as_f64() < 1e-3);

        let single = dense_reference_check(&active, &map, 1);
        assert_eq!(single.count, 1);
        assert_eq!(single.worst_omega, map.unwarp(map.subband_count() as f64 / 2.0));
    }

    #[test]
    fn report_json_round_trips() {
        let r = check_passivity(&siso(2.0, 0.0), &ModePreset::soft()).unwrap();
        let json = r.to_json();
        let back: PassivityReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_json(), json);
        assert!(json.contains("\"schema_version\": 1"));
    }
}
