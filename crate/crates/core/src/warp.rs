//! Pole-based control points and the piecewise-linear frequency warping
//! that maps `[0, inf]` onto `[0, L]`.
//!
//! Each pole term contributes candidates `beta + alpha * tan(r pi / (2(R+1)))`
//! for `r = -R..=R`, with the per-class count `R` chosen from the pole type.
//! Highly resonant poles have their damping inflated before sampling so that
//! the resulting subbands do not collapse. Log-spaced tail samples above the
//! model band and the point at infinity close the set.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Frequency, PoleResidueModel};

/// Poles whose real or imaginary magnitude exceeds this fraction of
/// `omega_max` are sampled as high-frequency poles.
pub const HF_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpParams {
    /// Density parameter; `f64::INFINITY` disables the resolution scan.
    #[serde(with = "infinite_f64")]
    pub rho: f64,
    pub r_cp: usize,
    pub r_rp: usize,
    pub r_hf: usize,
    /// Damping inflation for resonant poles.
    pub c: f64,
    pub q_max: f64,
    /// Number of tail intervals.
    pub kappa: usize,
    /// Tail extent in decades above `omega_max`.
    pub decades: f64,
}

impl WarpParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.rho.is_nan() || self.rho <= 0.0 {
            return bad("rho must be positive");
        }
        if !(self.c > 1.0) {
            return bad("c must exceed 1");
        }
        if !(self.q_max > 1.0) {
            return bad("q_max must exceed 1");
        }
        if self.kappa < 1 {
            return bad("kappa must be at least 1");
        }
        if !(self.decades > 0.0) || !self.decades.is_finite() {
            return bad("tail extent d must be positive");
        }
        Ok(())
    }

    /// Settings outside the recommended ranges. Not errors.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.r_cp < 1 {
            w.push(format!("r_cp = {} below recommended minimum 1", self.r_cp));
        }
        if self.r_rp < 2 {
            w.push(format!("r_rp = {} below recommended minimum 2", self.r_rp));
        }
        if self.r_hf < 3 {
            w.push(format!("r_hf = {} below recommended minimum 3", self.r_hf));
        }
        w
    }
}

/// Serializes `f64::INFINITY` as the string `"inf"`.
pub(crate) mod infinite_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::model::Frequency;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Frequency::deserialize(d)?.as_f64())
    }
}

/// Candidate frequencies contributed by the model poles.
///
/// `poles` holds one entry per stored term: real poles with zero imaginary
/// part, conjugate pairs through their positive-imaginary member.
pub fn pole_samples(poles: &[Complex64], params: &WarpParams, omega_max: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for pole in poles {
        let is_real = pole.im == 0.0;
        let mut alpha = pole.re;
        let beta = pole.im.abs();
        let count = if alpha.abs().max(beta) > HF_FRACTION * omega_max {
            params.r_hf
        } else if is_real {
            params.r_rp
        } else {
            params.r_cp
        };
        if !is_real && beta / (2.0 * alpha.abs()) > params.q_max {
            alpha *= params.c;
        }
        let r = count as i64;
        for k in -r..=r {
            let w = beta + alpha * (k as f64 * PI / (2.0 * (count as f64 + 1.0))).tan();
            if w >= 0.0 {
                // normalizes -0.0
                out.push(w + 0.0);
            }
        }
    }
    out
}

/// `omega_max * 10^(d nu / kappa)` for `nu = 0..=kappa`. The point at
/// infinity is implicit in every [`ControlPointSet`].
pub fn tail_samples(omega_max: f64, params: &WarpParams) -> Vec<f64> {
    let kappa = params.kappa as f64;
    (0..=params.kappa)
        .map(|nu| omega_max * 10f64.powf(params.decades * (nu as f64 / kappa)))
        .collect()
}

/// Minimum spacing `p_max / (N rho)`, or `None` when the scan is disabled.
pub fn resolution(p_max: f64, state_order: usize, rho: f64) -> Option<f64> {
    if rho.is_infinite() || state_order == 0 {
        None
    } else {
        Some(p_max / (state_order as f64 * rho))
    }
}

/// Sorted control points `0 = w_0 < ... < w_{L-1} < w_L = inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPointSet {
    finite: Vec<f64>,
}

impl ControlPointSet {
    /// From finite points; must start at 0, be strictly increasing, and
    /// hold at least two entries.
    pub fn from_finite(finite: Vec<f64>) -> Result<Self> {
        if finite.len() < 2 {
            return Err(Error::InvalidConfig("need at least two finite control points".into()));
        }
        if finite[0] != 0.0 {
            return Err(Error::InvalidConfig("first control point must be 0".into()));
        }
        if finite.iter().any(|w| !w.is_finite()) || finite.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "control points must be finite and strictly increasing".into(),
            ));
        }
        Ok(Self { finite })
    }

    /// Number of subbands `L`.
    pub fn subband_count(&self) -> usize {
        self.finite.len()
    }

    /// The finite points `w_0..w_{L-1}`.
    pub fn finite_points(&self) -> &[f64] {
        &self.finite
    }

    /// Control point `w_l` for `l` in `0..=L`.
    pub fn point(&self, l: usize) -> Frequency {
        self.finite
            .get(l)
            .map_or(Frequency::Infinite, |&w| Frequency::Finite(w))
    }

    /// All `L + 1` points, infinity last.
    pub fn points(&self) -> Vec<Frequency> {
        self.finite
            .iter()
            .map(|&w| Frequency::Finite(w))
            .chain(std::iter::once(Frequency::Infinite))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.points()).expect("control points serialize")
    }
}

/// Sorts candidates, merges exact duplicates and drops points closer than
/// `delta_omega` to an already kept point.
///
/// Zero and every `protected` point (the tail samples) survive the scan; an
/// unprotected candidate too close to a protected point is dropped, and in a
/// cluster of unprotected candidates the smallest is kept. Negative
/// candidates are discarded.
pub fn assemble_control_points(
    candidates: &[f64],
    protected: &[f64],
    delta_omega: Option<f64>,
) -> ControlPointSet {
    let mut tagged: Vec<(f64, bool)> = candidates
        .iter()
        .filter(|w| w.is_finite() && **w >= 0.0)
        .map(|&w| (w + 0.0, false))
        .chain(protected.iter().map(|&w| (w + 0.0, true)))
        .chain(std::iter::once((0.0, true)))
        .collect();
    tagged.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    // exact duplicates: keep one copy, protected if any copy was
    tagged.dedup_by(|later, earlier| {
        if later.0 == earlier.0 {
            earlier.1 |= later.1;
            true
        } else {
            false
        }
    });

    let min_gap = delta_omega.unwrap_or(0.0);
    // first protected point at or after each index
    let mut protected_after: Vec<Option<f64>> = vec![None; tagged.len()];
    let mut upcoming = None;
    for (slot, &(w, is_protected)) in protected_after.iter_mut().zip(&tagged).rev() {
        if is_protected {
            upcoming = Some(w);
        }
        *slot = upcoming;
    }
    let mut kept: Vec<f64> = Vec::with_capacity(tagged.len());
    for (i, &(w, is_protected)) in tagged.iter().enumerate() {
        if is_protected {
            kept.push(w);
            continue;
        }
        let far_from_prev = kept.last().is_none_or(|&prev| w - prev >= min_gap);
        let far_from_next = protected_after[i].is_none_or(|next| next - w >= min_gap);
        if far_from_prev && far_from_next {
            kept.push(w);
        }
    }
    ControlPointSet { finite: kept }
}

/// Full Step-1 construction for a model.
pub fn build_control_points(model: &PoleResidueModel, params: &WarpParams) -> ControlPointSet {
    let poles: Vec<Complex64> = model.terms.iter().map(|t| t.pole).collect();
    let candidates = pole_samples(&poles, params, model.omega_max);
    let tail = tail_samples(model.omega_max, params);
    let delta = resolution(model.p_max(), model.state_order(), params.rho);
    assemble_control_points(&candidates, &tail, delta)
}

/// Piecewise-linear bijection between `omega in [0, inf]` and `zeta in [0, L]`.
///
/// Inner subbands map linearly; the last one uses
/// `zeta = l + (omega - w_l) / omega` so that infinity lands on `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpMap {
    points: ControlPointSet,
}

impl WarpMap {
    pub fn new(points: ControlPointSet) -> Self {
        Self { points }
    }

    pub fn for_model(model: &PoleResidueModel, params: &WarpParams) -> Self {
        Self::new(build_control_points(model, params))
    }

    pub fn control_points(&self) -> &ControlPointSet {
        &self.points
    }

    pub fn subband_count(&self) -> usize {
        self.points.subband_count()
    }

    pub fn warp(&self, omega: Frequency) -> f64 {
        let finite = &self.points.finite;
        let last = finite.len() - 1;
        let w = match omega {
            Frequency::Infinite => return finite.len() as f64,
            Frequency::Finite(w) => w.max(0.0),
        };
        let l = finite.partition_point(|&p| p <= w) - 1;
        let lo = finite[l];
        if l == last {
            l as f64 + (w - lo) / w
        } else {
            l as f64 + (w - lo) / (finite[l + 1] - lo)
        }
    }

    pub fn unwarp(&self, zeta: f64) -> Frequency {
        let total = self.subband_count();
        let zeta = zeta.clamp(0.0, total as f64);
        if zeta == total as f64 {
            return Frequency::Infinite;
        }
        let l = (zeta.floor() as usize).min(total - 1);
        self.unwarp_local(l, zeta - l as f64)
    }

    /// Frequency at local coordinate `t in [0, 1]` of subband `l`.
    pub fn unwarp_local(&self, l: usize, t: f64) -> Frequency {
        let finite = &self.points.finite;
        let lo = finite[l];
        if l + 1 < finite.len() {
            if t == 1.0 {
                return Frequency::Finite(finite[l + 1]);
            }
            Frequency::Finite(lo + t * (finite[l + 1] - lo))
        } else if t >= 1.0 {
            Frequency::Infinite
        } else {
            Frequency::Finite(lo / (1.0 - t))
        }
    }
}
