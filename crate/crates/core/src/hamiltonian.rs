//! Dense Hamiltonian oracle.
//!
//! Purely imaginary eigenvalues `j w` of the Hamiltonian matrix (or of the
//! extended Hamiltonian pencil when `I - D^T D` is close to singular) mark
//! the frequencies where some singular value of `H(j w)` crosses the
//! threshold. Intended for desk-scale models only.

use std::f64::consts::{E, FRAC_1_PI, SQRT_2};

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sigma_max, Frequency, PoleResidueModel, StateSpaceModel, GAMMA};
use crate::verifier::ViolationBand;

/// The pencil replaces the Hamiltonian matrix when `|sigma_max(D) - 1|`
/// falls below this.
pub const PENCIL_SWITCH: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    /// Relative tolerance on `|Re(lambda)|` for the imaginary-axis test.
    pub imag_tol: f64,
    /// Largest admissible eigenproblem size.
    pub max_dim: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            imag_tol: 1e-8,
            max_dim: 4000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HamiltonianProblem {
    /// The `2N x 2N` Hamiltonian matrix.
    Full { matrix: DMatrix<f64> },
    /// The `(2N + 2P)` extended pencil `(M_e, K)`.
    Pencil {
        m_e: DMatrix<f64>,
        k: DMatrix<f64>,
        states: usize,
    },
}

impl HamiltonianProblem {
    pub fn dimension(&self) -> usize {
        match self {
            HamiltonianProblem::Full { matrix } => matrix.nrows(),
            HamiltonianProblem::Pencil { m_e, .. } => m_e.nrows(),
        }
    }

    pub fn is_pencil(&self) -> bool {
        matches!(self, HamiltonianProblem::Pencil { .. })
    }
}

fn real_sigma_max(d: &DMatrix<f64>) -> f64 {
    if d.is_empty() {
        return 0.0;
    }
    d.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Chooses the matrix or pencil form by the distance of `sigma_max(D)`
/// from one.
pub fn build_problem(ss: &StateSpaceModel) -> HamiltonianProblem {
    if (real_sigma_max(&ss.d) - GAMMA).abs() < PENCIL_SWITCH {
        return build_pencil(ss);
    }
    build_full(ss).unwrap_or_else(|| build_pencil(ss))
}

/// The Hamiltonian matrix with `R = I - D^T D` and `S = I - D D^T`; `None`
/// when either is singular.
pub fn build_full(ss: &StateSpaceModel) -> Option<HamiltonianProblem> {
    let (a, b, c, d) = (&ss.a, &ss.b, &ss.c, &ss.d);
    let n = ss.state_order();
    let p = ss.port_count();
    let eye = DMatrix::<f64>::identity(p, p);
    let r_inv = (&eye - d.transpose() * d).try_inverse()?;
    let s_inv = (&eye - d * d.transpose()).try_inverse()?;
    let br = b * &r_inv;
    let m11 = a + &br * d.transpose() * c;
    let m12 = &br * b.transpose();
    let m21 = -(c.transpose() * s_inv * c);
    let m22 = -a.transpose() - c.transpose() * d * &r_inv * b.transpose();
    let mut matrix = DMatrix::zeros(2 * n, 2 * n);
    matrix.view_mut((0, 0), (n, n)).copy_from(&m11);
    matrix.view_mut((0, n), (n, n)).copy_from(&m12);
    matrix.view_mut((n, 0), (n, n)).copy_from(&m21);
    matrix.view_mut((n, n), (n, n)).copy_from(&m22);
    Some(HamiltonianProblem::Full { matrix })
}

/// The extended pencil
///
/// ```text
/// M_e = [ A    0    B    0  ]     K = diag(I, I, 0, 0)
///       [ 0   -A^T  0   -C^T]
///       [ 0    B^T -I    D^T]
///       [ C    0    D   -I  ]
/// ```
pub fn build_pencil(ss: &StateSpaceModel) -> HamiltonianProblem {
    let (a, b, c, d) = (&ss.a, &ss.b, &ss.c, &ss.d);
    let n = ss.state_order();
    let p = ss.port_count();
    let dim = 2 * n + 2 * p;
    let eye = DMatrix::<f64>::identity(p, p);
    let mut m_e = DMatrix::zeros(dim, dim);
    m_e.view_mut((0, 0), (n, n)).copy_from(a);
    m_e.view_mut((0, 2 * n), (n, p)).copy_from(b);
    m_e.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    m_e.view_mut((n, 2 * n + p), (n, p)).copy_from(&(-c.transpose()));
    m_e.view_mut((2 * n, n), (p, n)).copy_from(&b.transpose());
    m_e.view_mut((2 * n, 2 * n), (p, p)).copy_from(&(-&eye));
    m_e.view_mut((2 * n, 2 * n + p), (p, p)).copy_from(&d.transpose());
    m_e.view_mut((2 * n + p, 0), (p, n)).copy_from(c);
    m_e.view_mut((2 * n + p, 2 * n), (p, p)).copy_from(d);
    m_e.view_mut((2 * n + p, 2 * n + p), (p, p)).copy_from(&(-&eye));
    let mut k = DMatrix::zeros(dim, dim);
    for i in 0..2 * n {
        k[(i, i)] = 1.0;
    }
    HamiltonianProblem::Pencil { m_e, k, states: n }
}

/// Diagonal similarity scaling (Parlett-Reinsch) in place.
fn balance(a: &mut DMatrix<f64>) {
    const RADIX: f64 = 2.0;
    let n = a.nrows();
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let total = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= RADIX * RADIX;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= RADIX * RADIX;
            }
            if (c + r) / f < 0.95 * total {
                converged = false;
                a.row_mut(i).scale_mut(1.0 / f);
                a.column_mut(i).scale_mut(f);
            }
        }
    }
}

fn dense_eigenvalues(mut m: DMatrix<f64>) -> Result<Vec<Complex64>> {
    if m.is_empty() {
        return Ok(Vec::new());
    }
    balance(&mut m);
    let n = m.nrows();
    let schur = Schur::try_new(m, f64::EPSILON, 200 * n.max(10))
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// All finite (generalized) eigenvalues.
pub fn eigenvalues(problem: &HamiltonianProblem) -> Result<Vec<Complex64>> {
    match problem {
        HamiltonianProblem::Full { matrix } => dense_eigenvalues(matrix.clone()),
        HamiltonianProblem::Pencil { m_e, k, states } => {
            let two_n = 2 * states;
            if two_n == 0 {
                return Ok(Vec::new());
            }
            // Shift-and-invert: eigenvalues nu of (M_e - s K)^{-1} K satisfy
            // lambda = s + 1/nu. K vanishes outside the leading 2N columns, so
            // the finite spectrum lives in the leading 2N x 2N block.
            let scale = inf_norm(&m_e.view((0, 0), (two_n, two_n)).into_owned()).max(f64::MIN_POSITIVE);
            let mut last_err = None;
            // shifts unlikely to sit on an eigenvalue
            for factor in [0.618_033_988_749_895, SQRT_2, FRAC_1_PI, E] {
                let shift = factor * scale;
                let shifted = m_e - k * shift;
                let lu = shifted.lu();
                let u = lu.u();
                let pivots: Vec<f64> = u.diagonal().iter().map(|v| v.abs()).collect();
                let (lo, hi) = pivots
                    .iter()
                    .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                if !(lo > 1e-13 * hi) {
                    last_err = Some(Error::Numerical(format!("shifted pencil singular at shift {shift}")));
                    continue;
                }
                let rhs = k.columns(0, two_n).into_owned();
                let Some(x) = lu.solve(&rhs) else {
                    last_err = Some(Error::Numerical("pencil solve failed".into()));
                    continue;
                };
                let block = x.view((0, 0), (two_n, two_n)).into_owned();
                let nus = dense_eigenvalues(block)?;
                let largest = nus.iter().map(|v| v.norm()).fold(0.0, f64::max);
                return Ok(nus
                    .into_iter()
                    .filter(|nu| nu.norm() > 1e-13 * largest)
                    .map(|nu| Complex64::new(shift, 0.0) + nu.inv())
                    .collect());
            }
            Err(last_err.unwrap_or_else(|| Error::Numerical("pencil reduction failed".into())))
        }
    }
}

/// Sorted crossing frequencies `w >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingSet {
    pub frequencies: Vec<f64>,
    pub tolerance: f64,
}

impl CrossingSet {
    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("crossings serialize")
    }
}

/// Scale used for the deduplication window.
fn frequency_scale(problem: &HamiltonianProblem) -> f64 {
    match problem {
        HamiltonianProblem::Full { matrix } => inf_norm(matrix),
        HamiltonianProblem::Pencil { m_e, states, .. } => {
            inf_norm(&m_e.view((0, 0), (*states, *states)).into_owned())
        }
    }
    .max(f64::MIN_POSITIVE)
}

pub fn imaginary_crossings(problem: &HamiltonianProblem, options: &OracleOptions) -> Result<CrossingSet> {
    let dim = problem.dimension();
    if dim > options.max_dim {
        return Err(Error::OracleTooLarge {
            dim,
            limit: options.max_dim,
        });
    }
    let tol = options.imag_tol;
    let mut freqs: Vec<f64> = eigenvalues(problem)?
        .into_iter()
        .filter(|l| l.re.abs() <= tol * l.norm().max(1.0) && l.im >= 0.0)
        .map(|l| l.im)
        .collect();
    freqs.sort_by(f64::total_cmp);
    let window = 1e-9 * frequency_scale(problem);
    freqs.dedup_by(|later, earlier| *later - *earlier <= window);
    Ok(CrossingSet {
        frequencies: freqs,
        tolerance: tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleVerdict {
    pub passive: bool,
    pub crossings: CrossingSet,
    pub bands: Vec<ViolationBand>,
    pub used_pencil: bool,
}

/// Grid estimate of the peak of `phi` over one interval.
fn interval_peak(model: &PoleResidueModel, lo: f64, hi: Frequency, probe: Frequency) -> (Frequency, f64) {
    const POINTS: usize = 64;
    let mut best = (probe, model.passivity_metric(probe));
    let mut consider = |w: Frequency| {
        let v = model.passivity_metric(w);
        if v > best.1 {
            best = (w, v);
        }
    };
    match hi {
        Frequency::Finite(hi) => {
            for k in 0..=POINTS {
                let t = k as f64 / POINTS as f64;
                let w = if lo > 0.0 { lo * (hi / lo).powf(t) } else { hi * t };
                consider(Frequency::Finite(w));
            }
        }
        Frequency::Infinite => {
            let base = lo.max(f64::MIN_POSITIVE);
            for k in 0..=POINTS {
                consider(Frequency::Finite(base * 1e3f64.powf(k as f64 / POINTS as f64)));
            }
            consider(Frequency::Infinite);
        }
    }
    best
}

/// Passive / non-passive classification from the crossings, with the
/// violating intervals located by probing each interval between them.
pub fn oracle_verdict(
    ss: &StateSpaceModel,
    model: &PoleResidueModel,
    options: &OracleOptions,
) -> Result<OracleVerdict> {
    let problem = build_problem(ss);
    let crossings = imaginary_crossings(&problem, options)?;
    let gamma = GAMMA;
    let w = &crossings.frequencies;
    let at_infinity = sigma_max(&model.evaluate_transfer(Frequency::Infinite));

    // intervals [edges[k], edges[k+1]] with their probe frequencies
    let mut edges: Vec<Frequency> = vec![Frequency::Finite(0.0)];
    edges.extend(w.iter().filter(|&&x| x > 0.0).map(|&x| Frequency::Finite(x)));
    edges.push(Frequency::Infinite);
    let count = edges.len() - 1;
    let mut flagged: Vec<(f64, Frequency, Frequency, f64)> = Vec::new();
    for k in 0..count {
        let lo = edges[k].as_f64();
        let hi = edges[k + 1];
        let probe = match hi {
            Frequency::Infinite if count == 1 => Frequency::Finite(model.omega_max),
            Frequency::Infinite => Frequency::Finite(2.0 * lo),
            Frequency::Finite(h) if lo == 0.0 => Frequency::Finite(0.5 * h),
            Frequency::Finite(h) => Frequency::Finite((lo * h).sqrt()),
        };
        let value = model.passivity_metric(probe);
        let tail_violation = hi.is_infinite() && at_infinity > gamma;
        if value > gamma || tail_violation {
            let (peak_at, peak) = interval_peak(model, lo, hi, probe);
            // merge with the previous flagged interval across a crossing that
            // does not involve the largest singular value
            if let Some(last) = flagged.last_mut() {
                if last.1 == Frequency::Finite(lo) {
                    last.1 = hi;
                    if peak > last.3 {
                        last.2 = peak_at;
                        last.3 = peak;
                    }
                    continue;
                }
            }
            flagged.push((lo, hi, peak_at, peak));
        }
    }
    let bands: Vec<ViolationBand> = flagged
        .into_iter()
        .map(|(lo, hi, peak_at, peak)| ViolationBand {
            omega_lo: lo,
            omega_hi: hi,
            omega_peak: peak_at,
            phi_peak: peak,
        })
        .collect();
    Ok(OracleVerdict {
        passive: bands.is_empty() && crossings.is_empty(),
        used_pencil: problem.is_pencil(),
        crossings,
        bands,
    })
}
