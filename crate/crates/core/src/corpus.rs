//! Synthetic model corpus: random stable pole-residue models rescaled so
//! that their peak metric lands on a chosen target.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::model_to_json;
use crate::model::{Frequency, PoleResidueModel, PoleTerm, GAMMA};
use crate::verifier::ModePreset;
use crate::warp::WarpMap;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub seed: u64,
    pub count: usize,
    pub port_counts: Vec<usize>,
    /// Inclusive range of the pole count, conjugate pairs counting twice.
    pub min_order: usize,
    pub max_order: usize,
    /// Cycled through in order.
    pub targets: Vec<f64>,
    /// Decades spanned by the resonance frequencies, starting at 1 rad/s.
    pub decades: f64,
    pub min_damping: f64,
    pub pair_probability: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            seed: 42,
            count: 200,
            port_counts: vec![1, 2, 4],
            min_order: 2,
            max_order: 10,
            targets: vec![0.8, 0.99, 1.001, 1.2],
            decades: 3.0,
            min_damping: 1e-4,
            pair_probability: 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub file: String,
    pub seed: u64,
    pub port_count: usize,
    pub order: usize,
    pub state_order: usize,
    pub target: f64,
    pub scale: f64,
    /// Peak metric of the written model as found by the generator sweep.
    pub phi_max: f64,
    pub omega_at_max: Frequency,
    pub intended_passive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: CorpusSpec,
    pub entries: Vec<CorpusEntry>,
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// A random stable model with `order` poles and residues sized so that
/// every term peaks at order one.
pub fn random_model(rng: &mut impl Rng, port_count: usize, order: usize, spec: &CorpusSpec) -> PoleResidueModel {
    let p = port_count;
    let top = 10f64.powf(spec.decades);
    let mut terms = Vec::new();
    let mut remaining = order;
    while remaining > 0 {
        let pair = remaining >= 2 && rng.random::<f64>() < spec.pair_probability;
        if pair {
            let beta = log_uniform(rng, 1.0, top);
            let zeta = log_uniform(rng, spec.min_damping, 1.0);
            let alpha = -zeta * beta;
            let residue = DMatrix::from_fn(p, p, |_, _| Complex64::new(normal(rng), normal(rng)) * alpha.abs());
            terms.push(PoleTerm::pair(Complex64::new(alpha, beta), residue));
            remaining -= 2;
        } else {
            let pole = -log_uniform(rng, 1.0, top);
            let residue = DMatrix::from_fn(p, p, |_, _| normal(rng) * pole.abs());
            terms.push(PoleTerm::real(pole, residue));
            remaining -= 1;
        }
    }
    let direct = DMatrix::from_fn(p, p, |_, _| 0.1 * normal(rng));
    let p_max = terms.iter().map(|t| t.pole.norm()).fold(0.0, f64::max);
    PoleResidueModel::new(p, 1.1 * p_max, direct, terms).expect("generated model is valid")
}

fn golden_max(model: &PoleResidueModel, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let f = |w: f64| model.passivity_metric(Frequency::Finite(w));
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if (b - a) <= 1e-13 * b.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Peak of `phi` over `[0, inf]`: a sweep of `count` points uniform in the
/// warped coordinate of `map`, control points included, followed by
/// golden-section refinement around the largest local maxima.
pub fn peak_metric(model: &PoleResidueModel, map: &WarpMap, count: usize) -> (Frequency, f64) {
    const REFINED: usize = 8;
    let total = map.subband_count() as f64;
    let mut grid: Vec<Frequency> = (0..count)
        .map(|k| map.unwarp((k as f64 + 0.5) * total / count as f64))
        .chain(map.control_points().points())
        .collect();
    grid.sort_by(|a, b| a.as_f64().total_cmp(&b.as_f64()));
    grid.dedup();
    let values: Vec<f64> = grid.par_iter().map(|&w| model.passivity_metric(w)).collect();

    let mut best = (grid[0], values[0]);
    for (&w, &v) in grid.iter().zip(&values) {
        if v > best.1 {
            best = (w, v);
        }
    }
    let mut peaks: Vec<usize> = (1..grid.len() - 1)
        .filter(|&k| values[k] >= values[k - 1] && values[k] >= values[k + 1])
        .collect();
    peaks.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    peaks.truncate(REFINED);
    let refined: Vec<(f64, f64)> = peaks
        .par_iter()
        .map(|&k| {
            let hi = grid[k + 1];
            let hi = if hi.is_infinite() { 4.0 * grid[k].as_f64() } else { hi.as_f64() };
            golden_max(model, grid[k - 1].as_f64(), hi)
        })
        .collect();
    for (w, v) in refined {
        if v > best.1 {
            best = (Frequency::Finite(w), v);
        }
    }
    best
}

fn sweep_map(model: &PoleResidueModel) -> WarpMap {
    WarpMap::for_model(model, &ModePreset::hard().warp)
}

/// Rescales residues and direct term so that the peak metric equals
/// `target`. The metric is homogeneous in the scale, so the factor is
/// `target / peak`.
pub fn scale_to_target(model: &PoleResidueModel, target: f64, sweep: usize) -> (PoleResidueModel, f64) {
    let (_, peak) = peak_metric(model, &sweep_map(model), sweep);
    let factor = if peak > 0.0 { target / peak } else { 0.0 };
    (model.scaled(factor), factor)
}

pub const SWEEP_POINTS: usize = 20_000;

/// Generates all entries in order. Each entry draws from its own stream
/// seeded from the master seed, so entries are independent of scheduling.
pub fn generate(spec: &CorpusSpec) -> Vec<(CorpusEntry, PoleResidueModel)> {
    let mut master = ChaCha8Rng::seed_from_u64(spec.seed);
    let seeds: Vec<u64> = (0..spec.count).map(|_| master.random()).collect();
    seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let port_count = spec.port_counts[rng.random_range(0..spec.port_counts.len())];
            let order = rng.random_range(spec.min_order..=spec.max_order);
            let target = spec.targets[i % spec.targets.len()];
            let raw = random_model(&mut rng, port_count, order, spec);
            let (model, scale) = scale_to_target(&raw, target, SWEEP_POINTS);
            let (omega_at_max, phi_max) = peak_metric(&model, &sweep_map(&model), SWEEP_POINTS);
            let id = format!("m{i:04}");
            let entry = CorpusEntry {
                file: format!("{id}.json"),
                id,
                seed,
                port_count,
                order,
                state_order: model.state_order(),
                target,
                scale,
                phi_max,
                omega_at_max,
                intended_passive: target <= GAMMA,
            };
            (entry, model)
        })
        .collect()
}

/// Writes every model plus `manifest.json` into `dir`.
pub fn write_corpus(dir: impl AsRef<Path>, spec: &CorpusSpec) -> Result<Manifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let generated = generate(spec);
    for (entry, model) in &generated {
        std::fs::write(dir.join(&entry.file), model_to_json(model))?;
    }
    let manifest = Manifest {
        spec: spec.clone(),
        entries: generated.into_iter().map(|(e, _)| e).collect(),
    };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let text = std::fs::read_to_string(dir.as_ref().join(MANIFEST_FILE))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(count: usize) -> CorpusSpec {
        CorpusSpec {
            count,
            ..CorpusSpec::default()
        }
    }

    #[test]
    fn generated_models_are_stable_with_requested_order() {
        let spec = small(1);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for order in 2..=10 {
            let m = random_model(&mut rng, 2, order, &spec);
            assert_eq!(m.term_count(), order);
            assert!(m.terms.iter().all(|t| t.pole.re < 0.0));
            assert!(m.terms.iter().all(|t| t.pole.norm() < m.omega_max));
        }
    }

    #[test]
    fn peak_lands_on_target() {
        for (entry, model) in generate(&small(8)) {
            assert!((entry.phi_max - entry.target).abs() < 1e-9 * entry.target, "{entry:?}");
            assert_eq!(entry.intended_passive, entry.target <= 1.0);
            assert_eq!(model.state_order(), entry.state_order);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a: Vec<_> = generate(&small(4)).into_iter().map(|(e, m)| (e, model_to_json(&m))).collect();
        let b: Vec<_> = generate(&small(4)).into_iter().map(|(e, m)| (e, model_to_json(&m))).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_scale_gives_zero_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_model(&mut rng, 2, 4, &CorpusSpec::default()).scaled(0.0);
        let (_, peak) = peak_metric(&m, &sweep_map(&m), 1000);
        assert_eq!(peak, 0.0);
    }
}
