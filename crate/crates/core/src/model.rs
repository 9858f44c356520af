//! Pole-residue and state-space forms of a scattering macromodel, transfer
//! evaluation along the imaginary axis and the passivity metric.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Passivity threshold for scattering representations.
pub const GAMMA: f64 = 1.0;

/// A point on the non-negative frequency axis, with infinity as a
/// distinguished value rather than a large float.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Frequency {
    Finite(f64),
    Infinite,
}

impl Frequency {
    pub fn is_infinite(self) -> bool {
        matches!(self, Frequency::Infinite)
    }

    /// Finite value, or `f64::INFINITY` for the point at infinity.
    pub fn as_f64(self) -> f64 {
        match self {
            Frequency::Finite(w) => w,
            Frequency::Infinite => f64::INFINITY,
        }
    }

    pub fn from_f64(w: f64) -> Self {
        if w.is_infinite() && w > 0.0 {
            Frequency::Infinite
        } else {
            Frequency::Finite(w)
        }
    }
}

impl From<f64> for Frequency {
    fn from(w: f64) -> Self {
        Frequency::from_f64(w)
    }
}

impl PartialOrd for Frequency {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.as_f64().partial_cmp(&other.as_f64())
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Frequency::Finite(w) => write!(f, "{w}"),
            Frequency::Infinite => f.write_str("inf"),
        }
    }
}

// Finite values serialize as JSON numbers, infinity as the string "inf".
impl Serialize for Frequency {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Frequency::Finite(w) => serializer.serialize_f64(*w),
            Frequency::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Frequency {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct FrequencyVisitor;

        impl Visitor<'_> for FrequencyVisitor {
            type Value = Frequency;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a finite number or the string \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Frequency, E> {
                if v.is_finite() {
                    Ok(Frequency::Finite(v))
                } else {
                    Err(E::custom("non-finite frequency"))
                }
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Frequency, E> {
                Ok(Frequency::Finite(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Frequency, E> {
                Ok(Frequency::Finite(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Frequency, E> {
                match v {
                    "inf" | "infinity" | "Infinity" => Ok(Frequency::Infinite),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }

        deserializer.deserialize_any(FrequencyVisitor)
    }
}

/// One term of the partial fraction expansion.
///
/// A conjugate pair is stored once, through the pole with positive imaginary
/// part, and `is_pair` set; evaluation adds the conjugate term.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleTerm {
    pub pole: Complex64,
    pub residue: DMatrix<Complex64>,
    pub is_pair: bool,
}

impl PoleTerm {
    pub fn real(pole: f64, residue: DMatrix<f64>) -> Self {
        Self {
            pole: Complex64::new(pole, 0.0),
            residue: residue.map(|r| Complex64::new(r, 0.0)),
            is_pair: false,
        }
    }

    /// Conjugate pair `pole`, `conj(pole)`; `pole` must have positive
    /// imaginary part.
    pub fn pair(pole: Complex64, residue: DMatrix<Complex64>) -> Self {
        Self {
            pole,
            residue,
            is_pair: true,
        }
    }

    /// Number of pole terms this entry stands for (2 for a conjugate pair).
    pub fn multiplicity(&self) -> usize {
        if self.is_pair {
            2
        } else {
            1
        }
    }
}

/// A working-assumption violation found by [`PoleResidueModel::validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ModelViolation {
    NoPorts,
    NonPositiveBandwidth { omega_max: f64 },
    NonFinite { field: String },
    DirectTermShape { rows: usize, cols: usize },
    ResidueShape { index: usize, rows: usize, cols: usize },
    UnstablePole { index: usize, re: f64 },
    UnpairedConjugate { index: usize },
    PairWithoutPositiveImag { index: usize },
    ComplexResidueOnRealPole { index: usize },
}

impl fmt::Display for ModelViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelViolation::NoPorts => f.write_str("port_count must be positive"),
            ModelViolation::NonPositiveBandwidth { omega_max } => {
                write!(f, "omega_max must be positive, got {omega_max}")
            }
            ModelViolation::NonFinite { field } => write!(f, "non-finite value in {field}"),
            ModelViolation::DirectTermShape { rows, cols } => {
                write!(f, "direct_term has shape {rows}x{cols}")
            }
            ModelViolation::ResidueShape { index, rows, cols } => {
                write!(f, "residues[{index}] has shape {rows}x{cols}")
            }
            ModelViolation::UnstablePole { index, re } => {
                write!(f, "poles[{index}] is not strictly stable (re = {re})")
            }
            ModelViolation::UnpairedConjugate { index } => {
                write!(f, "poles[{index}] is complex but has no conjugate partner (unpaired conjugate)")
            }
            ModelViolation::PairWithoutPositiveImag { index } => {
                write!(f, "poles[{index}] is flagged as a pair but its imaginary part is not positive")
            }
            ModelViolation::ComplexResidueOnRealPole { index } => {
                write!(f, "residues[{index}] is complex but poles[{index}] is real")
            }
        }
    }
}

/// `H(s) = sum_n R_n / (s - p_n) + R_0`, the object under test.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleResidueModel {
    pub port_count: usize,
    pub omega_max: f64,
    pub direct_term: DMatrix<f64>,
    pub terms: Vec<PoleTerm>,
}

impl PoleResidueModel {
    /// Builds a model and rejects it unless it satisfies every working
    /// assumption.
    pub fn new(
        port_count: usize,
        omega_max: f64,
        direct_term: DMatrix<f64>,
        terms: Vec<PoleTerm>,
    ) -> Result<Self> {
        let model = Self {
            port_count,
            omega_max,
            direct_term,
            terms,
        };
        model.ensure_valid()?;
        Ok(model)
    }

    /// Every violated invariant, in field order. Empty means valid.
    pub fn validate(&self) -> Vec<ModelViolation> {
        let p = self.port_count;
        let mut out = Vec::new();
        if p == 0 {
            out.push(ModelViolation::NoPorts);
        }
        if !self.omega_max.is_finite() {
            out.push(ModelViolation::NonFinite {
                field: "omega_max".into(),
            });
        } else if self.omega_max <= 0.0 {
            out.push(ModelViolation::NonPositiveBandwidth {
                omega_max: self.omega_max,
            });
        }
        if self.direct_term.shape() != (p, p) {
            out.push(ModelViolation::DirectTermShape {
                rows: self.direct_term.nrows(),
                cols: self.direct_term.ncols(),
            });
        }
        if self.direct_term.iter().any(|v| !v.is_finite()) {
            out.push(ModelViolation::NonFinite {
                field: "direct_term".into(),
            });
        }
        for (index, term) in self.terms.iter().enumerate() {
            let pole = term.pole;
            if !pole.re.is_finite() || !pole.im.is_finite() {
                out.push(ModelViolation::NonFinite {
                    field: format!("poles[{index}]"),
                });
                continue;
            }
            if term.residue.iter().any(|r| !r.re.is_finite() || !r.im.is_finite()) {
                out.push(ModelViolation::NonFinite {
                    field: format!("residues[{index}]"),
                });
            }
            if term.residue.shape() != (p, p) {
                out.push(ModelViolation::ResidueShape {
                    index,
                    rows: term.residue.nrows(),
                    cols: term.residue.ncols(),
                });
            }
            if pole.re >= 0.0 {
                out.push(ModelViolation::UnstablePole { index, re: pole.re });
            }
            if term.is_pair {
                if pole.im <= 0.0 {
                    out.push(ModelViolation::PairWithoutPositiveImag { index });
                }
            } else if pole.im != 0.0 {
                out.push(ModelViolation::UnpairedConjugate { index });
            } else if term.residue.iter().any(|r| r.im != 0.0) {
                out.push(ModelViolation::ComplexResidueOnRealPole { index });
            }
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(violations))
        }
    }

    /// Number of pole terms, conjugate pairs counted twice.
    pub fn term_count(&self) -> usize {
        self.terms.iter().map(PoleTerm::multiplicity).sum()
    }

    /// State order of the full-rank realization, `N = n * P`.
    pub fn state_order(&self) -> usize {
        self.term_count() * self.port_count
    }

    /// `max(omega_max, max |p_n|)`.
    pub fn p_max(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.pole.norm())
            .fold(self.omega_max, f64::max)
    }

    /// Same model with all residues and the direct term multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            port_count: self.port_count,
            omega_max: self.omega_max,
            direct_term: &self.direct_term * factor,
            terms: self
                .terms
                .iter()
                .map(|t| PoleTerm {
                    pole: t.pole,
                    residue: t.residue.map(|r| r * factor),
                    is_pair: t.is_pair,
                })
                .collect(),
        }
    }

    /// `H(j omega)` by direct summation of the pole-residue terms.
    pub fn evaluate_transfer(&self, omega: Frequency) -> DMatrix<Complex64> {
        let mut h = self.direct_term.map(|d| Complex64::new(d, 0.0));
        let w = match omega {
            Frequency::Infinite => return h,
            Frequency::Finite(w) => w,
        };
        let s = Complex64::new(0.0, w);
        for term in &self.terms {
            let k = (s - term.pole).inv();
            if term.is_pair {
                let kc = (s - term.pole.conj()).inv();
                h.zip_apply(&term.residue, |hv, r| *hv += r * k + r.conj() * kc);
            } else {
                h.zip_apply(&term.residue, |hv, r| *hv += r * k);
            }
        }
        h
    }

    /// `phi(omega) = sigma_max(H(j omega))`.
    pub fn passivity_metric(&self, omega: Frequency) -> f64 {
        sigma_max(&self.evaluate_transfer(omega))
    }

    /// All singular values of `H(j omega)`, descending.
    pub fn singular_values(&self, omega: Frequency) -> Vec<f64> {
        let h = self.evaluate_transfer(omega);
        let mut sv: Vec<f64> = h.singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }

    /// Gilbert-style real block realization with one block per pole term.
    ///
    /// A real pole `p` with residue `R` gives `(p I, I, R)`; a pair
    /// `a +- j b` with residue `Rr + j Ri` gives
    /// `([[a I, b I], [-b I, a I]], [2 I; 0], [Rr, Ri])`.
    pub fn realize(&self) -> Result<StateSpaceModel> {
        self.ensure_valid()?;
        let p = self.port_count;
        let n = self.state_order();
        let mut a = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, p);
        let mut c = DMatrix::zeros(p, n);
        let mut offset = 0;
        for term in &self.terms {
            if term.is_pair {
                let (re, im) = (term.pole.re, term.pole.im);
                for k in 0..p {
                    let (i, j) = (offset + k, offset + p + k);
                    a[(i, i)] = re;
                    a[(i, j)] = im;
                    a[(j, i)] = -im;
                    a[(j, j)] = re;
                    b[(i, k)] = 2.0;
                }
                for row in 0..p {
                    for k in 0..p {
                        let r = term.residue[(row, k)];
                        c[(row, offset + k)] = r.re;
                        c[(row, offset + p + k)] = r.im;
                    }
                }
                offset += 2 * p;
            } else {
                for k in 0..p {
                    a[(offset + k, offset + k)] = term.pole.re;
                    b[(offset + k, k)] = 1.0;
                }
                for row in 0..p {
                    for k in 0..p {
                        c[(row, offset + k)] = term.residue[(row, k)].re;
                    }
                }
                offset += p;
            }
        }
        StateSpaceModel::new(a, b, c, self.direct_term.clone())
    }
}

/// Largest singular value of a complex matrix.
pub fn sigma_max(h: &DMatrix<Complex64>) -> f64 {
    if h.nrows() == 1 && h.ncols() == 1 {
        return h[(0, 0)].norm();
    }
    if h.is_empty() {
        return 0.0;
    }
    h.singular_values().iter().copied().fold(0.0, f64::max)
}

/// `H(s) = C (sI - A)^{-1} B + D` with real matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl StateSpaceModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let p = d.nrows();
        if a.ncols() != n || b.shape() != (n, p) || c.shape() != (p, n) || d.ncols() != p {
            return Err(Error::Dimension(format!(
                "inconsistent state-space shapes: A {:?}, B {:?}, C {:?}, D {:?}",
                a.shape(),
                b.shape(),
                c.shape(),
                d.shape()
            )));
        }
        Ok(Self { a, b, c, d })
    }

    pub fn state_order(&self) -> usize {
        self.a.nrows()
    }

    pub fn port_count(&self) -> usize {
        self.d.nrows()
    }

    /// True when every eigenvalue of `A` has strictly negative real part.
    pub fn is_stable(&self) -> bool {
        if self.state_order() == 0 {
            return true;
        }
        self.a
            .clone()
            .complex_eigenvalues()
            .iter()
            .all(|l| l.re < 0.0)
    }

    /// `H(j omega)` through the resolvent. Costs `O(N^3)`; used for checks.
    pub fn evaluate_transfer(&self, omega: Frequency) -> Result<DMatrix<Complex64>> {
        let d = self.d.map(|v| Complex64::new(v, 0.0));
        let w = match omega {
            Frequency::Infinite => return Ok(d),
            Frequency::Finite(w) => w,
        };
        let n = self.state_order();
        if n == 0 {
            return Ok(d);
        }
        let s = Complex64::new(0.0, w);
        let mut m = self.a.map(|v| Complex64::new(-v, 0.0));
        for i in 0..n {
            m[(i, i)] += s;
        }
        let b = self.b.map(|v| Complex64::new(v, 0.0));
        let x = m
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Numerical(format!("singular resolvent at omega = {w}")))?;
        Ok(self.c.map(|v| Complex64::new(v, 0.0)) * x + d)
    }
}
