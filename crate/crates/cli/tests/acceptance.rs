//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each; exits non-zero if any fails.

use std::cell::Cell;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use passcheck::compare::{Classification, ComparisonReport};
use passcheck::corpus::{generate, peak_metric, random_model, CorpusEntry, CorpusSpec};
use passcheck::hamiltonian::{build_problem, eigenvalues, imaginary_crossings, OracleOptions};
use passcheck::mnmso::{run, SearchConfig, SearchState, StepOutcome};
use passcheck::model::{Frequency, PoleResidueModel, PoleTerm};
use passcheck::verifier::{check_passivity, uniform_sweep, DenseCheck, Mode, ModePreset};
use passcheck::warp::WarpMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = fn() -> Outcome;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_passcheck"))
}

fn corpus() -> &'static [(CorpusEntry, PoleResidueModel)] {
    static CORPUS: OnceLock<Vec<(CorpusEntry, PoleResidueModel)>> = OnceLock::new();
    CORPUS.get_or_init(|| generate(&CorpusSpec::default()))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn siso(residue: f64) -> PoleResidueModel {
    PoleResidueModel::new(
        1,
        10.0,
        DMatrix::zeros(1, 1),
        vec![PoleTerm::real(-1.0, DMatrix::from_element(1, 1, residue))],
    )
    .unwrap()
}

/// 200 corpus models through `compare` in hard mode, plus a 10^6-point
/// dense sweep on every model the adaptive check calls passive.
fn oracle_agreement() -> Outcome {
    let started = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = bin()
        .args(["gen-corpus", "--seed", "42", "--count", "200", "--out"])
        .arg(dir.path())
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
    let manifest = passcheck::corpus::read_manifest(dir.path()).map_err(|e| e.to_string())?;
    ensure(manifest.entries.len() == 200, || "corpus size".into())?;

    let (mut tp, mut disagreements, mut dense_checked) = (0, Vec::new(), 0);
    for entry in &manifest.entries {
        let model = dir.path().join(&entry.file);
        let report = dir.path().join("cmp.json");
        let status = bin()
            .args(["compare", "--mode", "hard", "--model"])
            .arg(&model)
            .arg("--report")
            .arg(&report)
            .output()
            .map_err(|e| e.to_string())?;
        let code = status.status.code().unwrap_or(-1);
        ensure(code == 0 || code == 1, || {
            format!("{}: compare failed: {}", entry.id, String::from_utf8_lossy(&status.stderr))
        })?;
        let cmp: ComparisonReport =
            serde_json::from_str(&std::fs::read_to_string(&report).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
        if cmp.classification == Classification::TruePositive {
            tp += 1;
        } else {
            let dense = cmp.dense.ok_or_else(|| format!("{}: disagreement without dense check", entry.id))?;
            ensure(dense.count == 1_000_000 && cmp.adjudication.is_some(), || {
                format!("{}: disagreement not adjudicated", entry.id)
            })?;
            disagreements.push(format!(
                "{} {} {}",
                entry.id,
                cmp.classification.label(),
                cmp.adjudication.map(|a| a.label()).unwrap_or("")
            ));
        }
        if cmp.adaptive_passive {
            dense_checked += 1;
            let out = bin()
                .args(["dense-check", "--count", "1000000", "--model"])
                .arg(&model)
                .output()
                .map_err(|e| e.to_string())?;
            let dense: DenseCheck = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
            ensure(!dense.violation, || {
                format!(
                    "{}: adaptive passive but dense sweep finds phi = {} at {}",
                    entry.id, dense.worst_phi, dense.worst_omega
                )
            })?;
        }
    }
    let rate = tp as f64 / 200.0;
    ensure(rate >= 0.99, || format!("TP rate {rate}; disagreements {disagreements:?}"))?;
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 600.0, || format!("corpus run took {secs:.0} s"))?;
    Ok(format!(
        "TP {tp}/200 ({:.1}%), disagreements {:?}, adaptive-passive models dense-checked {dense_checked}, undetected violations 0",
        100.0 * rate,
        disagreements
    ))
}

/// Hamiltonian crossings against the refined band edges on 50 models with
/// genuine violations.
fn crossing_accuracy() -> Outcome {
    const TOL: f64 = 1e-6;
    let started = Instant::now();
    let (mut models, mut crossings, mut edges) = (0, 0, 0);
    let mut worst: f64 = 0.0;
    for (entry, m) in corpus().iter().filter(|(e, m)| !e.intended_passive && m.state_order() <= 40) {
        if models == 50 {
            break;
        }
        let cs = imaginary_crossings(&build_problem(&m.realize().unwrap()), &OracleOptions::default())
            .map_err(|e| e.to_string())?;
        if cs.frequencies.is_empty() {
            continue;
        }
        models += 1;
        let r = check_passivity(m, &ModePreset::hard()).map_err(|e| e.to_string())?;
        for &w in &cs.frequencies {
            crossings += 1;
            let inside = r.bands.iter().any(|b| {
                w >= b.omega_lo * (1.0 - TOL) && (b.omega_hi.is_infinite() || w <= b.omega_hi.as_f64() * (1.0 + TOL))
            });
            ensure(inside, || format!("{}: crossing {w} outside bands {:?}", entry.id, r.bands))?;
        }
        for b in &r.bands {
            for x in [b.omega_lo, b.omega_hi.as_f64()] {
                if x == 0.0 || x.is_infinite() {
                    continue;
                }
                edges += 1;
                let rel = cs.frequencies.iter().map(|c| (c - x).abs() / x).fold(f64::INFINITY, f64::min);
                worst = worst.max(rel);
                ensure(rel <= TOL, || format!("{}: band edge {x} is {rel:e} from nearest crossing", entry.id))?;
            }
        }
    }
    ensure(models == 50, || format!("only {models} models with crossings"))?;
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 120.0, || format!("took {secs:.0} s"))?;
    Ok(format!(
        "{models} models, {crossings} crossings inside bands, {edges} edges, worst edge error {worst:.1e} relative"
    ))
}

fn analytic_siso() -> Outcome {
    let active = siso(2.0);
    let ss = active.realize().unwrap();
    let lambda = eigenvalues(&build_problem(&ss)).map_err(|e| e.to_string())?;
    let root3 = 3f64.sqrt();
    for target in [Complex64::new(0.0, root3), Complex64::new(0.0, -root3)] {
        ensure(lambda.iter().any(|l| (l - target).norm() <= 1e-9), || format!("eigenvalues {lambda:?}"))?;
    }
    let mut lines = Vec::new();
    for mode in Mode::ALL {
        let r = check_passivity(&active, &ModePreset::for_mode(mode)).map_err(|e| e.to_string())?;
        ensure(!r.passive && r.bands.len() == 1, || format!("{mode}: bands {:?}", r.bands))?;
        let b = r.bands[0];
        ensure(b.omega_lo == 0.0 && b.omega_peak == Frequency::Finite(0.0), || format!("{mode}: {b:?}"))?;
        ensure((b.phi_peak - 2.0).abs() <= 1e-9, || format!("{mode}: peak {}", b.phi_peak))?;
        ensure((b.omega_hi.as_f64() - root3).abs() <= 1e-6, || format!("{mode}: edge {}", b.omega_hi))?;
        lines.push(format!("{mode} edge err {:.1e}", (b.omega_hi.as_f64() - root3).abs()));

        let p = check_passivity(&siso(0.5), &ModePreset::for_mode(mode)).map_err(|e| e.to_string())?;
        ensure(p.passive, || format!("0.5/(s+1) not passive in {mode}"))?;
    }
    Ok(format!(
        "2/(s+1): peak 2 at omega = 0, eigenvalues +-j sqrt(3); {}; 0.5/(s+1) passive in all modes",
        lines.join(", ")
    ))
}

fn warp_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let maps: Vec<WarpMap> = (0..60)
        .map(|k| {
            let order = rng.random_range(2..=10);
            let m = random_model(&mut rng, [1, 2, 4][k % 3], order, &CorpusSpec::default());
            WarpMap::for_model(&m, &ModePreset::for_mode(Mode::ALL[k % 3]).warp)
        })
        .collect();
    let omega = |rng: &mut ChaCha8Rng, map: &WarpMap| {
        let top = 3.0 * map.control_points().finite_points().last().copied().unwrap();
        if rng.random_range(0..20) == 0 {
            0.0
        } else {
            top * 10f64.powf(rng.random_range(-8.0..0.0))
        }
    };
    let mut worst: f64 = 0.0;
    for k in 0..10_000 {
        let map = &maps[k % maps.len()];
        let w = omega(&mut rng, map);
        let back = map.unwarp(map.warp(Frequency::Finite(w))).as_f64();
        let rel = if w == 0.0 { back.abs() } else { (back - w).abs() / w };
        worst = worst.max(rel);
        ensure(rel <= 1e-12, || format!("round trip {w} -> {back}"))?;
    }
    for k in 0..10_000 {
        let map = &maps[k % maps.len()];
        let (a, b) = (omega(&mut rng, map), omega(&mut rng, map));
        let (za, zb) = (map.warp(Frequency::Finite(a)), map.warp(Frequency::Finite(b)));
        ensure(a.partial_cmp(&b) == za.partial_cmp(&zb), || format!("order of {a}, {b} not kept"))?;
    }
    let mut points = 0;
    for map in &maps {
        for (l, w) in map.control_points().points().into_iter().enumerate() {
            points += 1;
            ensure(map.warp(w) == l as f64, || format!("control point {w} maps to {}", map.warp(w)))?;
        }
    }
    Ok(format!(
        "10000 round trips (worst {worst:.1e} relative), 10000 monotone pairs, {points} control points on integers"
    ))
}

fn random_config(rng: &mut ChaCha8Rng) -> SearchConfig {
    let mut schedule = vec![rng.random_range(5..60)];
    for _ in 0..rng.random_range(0..8) {
        let next = schedule.last().unwrap() + rng.random_range(1..50);
        schedule.push(next);
    }
    SearchConfig {
        partition: [3, 5, 7, 9][rng.random_range(0..4)],
        initial_level: rng.random_range(0..=2),
        delta_zeta: 10f64.powf(rng.random_range(-10.0..-3.0)),
        delta_theta: 10f64.powf(rng.random_range(-10.0..-3.0)),
        delta_eta: 10f64.powf(rng.random_range(-4.0..-1.0)),
        epsilon: 10f64.powf(rng.random_range(-5.0..-1.0)),
        epsilon_decay: rng.random_range(0.05..0.9),
        budget_schedule: schedule,
        basket_reuse: rng.random(),
        gamma: 1.0,
    }
}

fn mnmso_bookkeeping() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut iterations, mut total_k) = (0usize, 0usize);
    for case in 0..1000 {
        let config = random_config(&mut rng);
        let bumps: Vec<(f64, f64, f64)> = (0..rng.random_range(1..5))
            .map(|_| (rng.random(), 10f64.powf(rng.random_range(-4.0..-0.5)), rng.random_range(0.5..1.2)))
            .collect();
        let f = |z: f64| {
            bumps
                .iter()
                .map(|&(c, w, h)| h / (1.0 + ((z - c) / w).powi(2)))
                .fold(0.0, f64::max)
        };
        let calls = Cell::new(0usize);
        let r = run(&config, |z| {
            calls.set(calls.get() + 1);
            f(z)
        })
        .map_err(|e| e.to_string())?;
        ensure(calls.get() == r.eval_count, || {
            format!("case {case}: {} calls, K = {}", calls.get(), r.eval_count)
        })?;
        total_k += r.eval_count;

        let traced = Cell::new(0usize);
        let mut g = |z: f64| {
            traced.set(traced.get() + 1);
            Ok::<f64, std::convert::Infallible>(f(z))
        };
        let mut state = SearchState::initialize(&config, &mut g).map_err(|e| e.to_string())?;
        let mut previous = state.theta_max();
        loop {
            let outcome = state.step(&mut g).map_err(|e| e.to_string())?;
            iterations += 1;
            ensure(state.partition_is_exact(), || format!("case {case}: partition broken"))?;
            ensure(state.theta_max() >= previous, || format!("case {case}: theta_max decreased"))?;
            ensure(traced.get() == state.eval_count(), || format!("case {case}: traced count mismatch"))?;
            previous = state.theta_max();
            if let StepOutcome::Finished(_) = outcome {
                break;
            }
        }
    }
    Ok(format!(
        "1000 configs, calls == K in every run (sum K = {total_k}); partition and theta_max invariants held over {iterations} traced iterations"
    ))
}

fn median(v: &mut [usize]) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2]) as f64
    }
}

fn effort_ordering() -> Outcome {
    let mut k: [Vec<usize>; 3] = Default::default();
    for (_, m) in corpus() {
        for (i, mode) in Mode::ALL.into_iter().enumerate() {
            let r = check_passivity(m, &ModePreset::for_mode(mode)).map_err(|e| e.to_string())?;
            k[i].push(r.total_evaluations);
        }
    }
    let [soft, hard, fin] = [median(&mut k[0]), median(&mut k[1]), median(&mut k[2])];
    ensure(soft <= hard && hard <= fin, || format!("medians soft {soft}, hard {hard}, final {fin}"))?;
    Ok(format!("median K over 200 models: soft {soft} <= hard {hard} <= final {fin}"))
}

/// One pole pair with Q = 1e4 whose peak exceeds the threshold by 1e-3,
/// over a mild real-pole background.
fn narrow_peak_model() -> PoleResidueModel {
    let beta = 100.37;
    let alpha = -beta / (2.0 * 1e4);
    let raw = PoleResidueModel::new(
        1,
        150.0,
        DMatrix::zeros(1, 1),
        vec![
            PoleTerm::real(-50.0, DMatrix::from_element(1, 1, 10.0)),
            PoleTerm::pair(Complex64::new(alpha, beta), DMatrix::from_element(1, 1, Complex64::new(-alpha, 0.0))),
        ],
    )
    .unwrap();
    let map = WarpMap::for_model(&raw, &ModePreset::hard().warp);
    let (_, peak) = peak_metric(&raw, &map, 200_000);
    raw.scaled(1.001 / peak)
}

fn narrow_peak() -> Outcome {
    let m = narrow_peak_model();
    let map = WarpMap::for_model(&m, &ModePreset::hard().warp);
    let (w_peak, peak) = peak_metric(&m, &map, 200_000);
    ensure((peak - 1.001).abs() < 1e-9, || format!("fixture peak {peak}"))?;
    let q = m.terms[1].pole.im / (2.0 * -m.terms[1].pole.re);
    let r = check_passivity(&m, &ModePreset::hard()).map_err(|e| e.to_string())?;
    ensure(!r.passive, || "hard mode missed the narrow peak".into())?;
    let band = r
        .bands
        .iter()
        .find(|b| b.contains(w_peak.as_f64()))
        .ok_or_else(|| format!("no band around {w_peak}: {:?}", r.bands))?;
    let width = band.omega_hi.as_f64() - band.omega_lo;
    let uniform = uniform_sweep(&m, m.omega_max, r.total_evaluations);
    ensure(!uniform.violation, || format!("uniform sweep with K = {} hit the peak", r.total_evaluations))?;
    Ok(format!(
        "Q = {q:.0}, peak {peak:.6} at {:.4} rad/s, violation width {:.1e} relative; hard mode detects it with K = {}, uniform sweep with the same K peaks at {:.4}",
        w_peak.as_f64(),
        width / w_peak.as_f64(),
        r.total_evaluations,
        uniform.worst_phi
    ))
}

fn strip_timing(text: &str) -> String {
    text.lines().filter(|l| !l.contains("wall_time_s")).collect::<Vec<_>>().join("\n")
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let model = dir.path().join("m.json");
    let (_, m) = corpus().iter().find(|(e, _)| e.port_count == 4 && !e.intended_passive).unwrap();
    std::fs::write(&model, passcheck::io::model_to_json(m)).map_err(|e| e.to_string())?;
    let mut artifacts = Vec::new();
    for (k, threads) in ["1", "4"].into_iter().enumerate() {
        let file = |name: &str| dir.path().join(format!("{name}{k}"));
        let out = bin()
            .env("PASSCHECK_THREADS", threads)
            .args(["check", "--mode", "final", "--model"])
            .arg(&model)
            .arg("--report")
            .arg(file("report"))
            .arg("--samples")
            .arg(file("samples"))
            .arg("--trace")
            .arg(file("trace"))
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.code() == Some(1), || String::from_utf8_lossy(&out.stderr).into_owned())?;
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| e.to_string());
        artifacts.push((read(&file("report"))?, read(&file("samples"))?, read(&file("trace"))?));
    }
    let (a, b) = (&artifacts[0], &artifacts[1]);
    ensure(strip_timing(&a.0) == strip_timing(&b.0), || "reports differ".into())?;
    ensure(a.1 == b.1, || "sample CSVs differ".into())?;
    ensure(a.2 == b.2, || "traces differ".into())?;
    Ok(format!(
        "two runs (1 and 4 threads): reports identical apart from wall_time_s, samples ({} rows) and trace identical",
        a.1.lines().count() - 1
    ))
}

fn main() {
    let criteria: [(&str, Criterion); 8] = [
        ("1 oracle agreement", oracle_agreement),
        ("2 crossing accuracy", crossing_accuracy),
        ("3 analytic SISO", analytic_siso),
        ("4 warp properties", warp_properties),
        ("5 mNMSO bookkeeping", mnmso_bookkeeping),
        ("6 effort ordering", effort_ordering),
        ("7 narrow-peak detection", narrow_peak),
        ("8 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, criterion) in criteria {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(criterion).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] criterion {name}: {detail} ({secs:.1} s)"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] criterion {name}: {detail} ({secs:.1} s)");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
