use std::fs;

use anyhow::Context;
use passcheck::compare::{compare_model, Classification, CompareOptions};
use passcheck::corpus::{write_corpus, CorpusSpec};
use passcheck::hamiltonian::{oracle_verdict, OracleOptions};
use passcheck::io::load_model;
use passcheck::verifier::{check_passivity_with, dense_reference_check, CheckOptions, Mode, ModePreset};
use passcheck::warp::WarpMap;
use passcheck::PoleResidueModel;

use crate::output::{summary_line, write_samples_csv, write_trace};
use crate::{CheckArgs, CompareArgs, CorpusArgs, DenseArgs, ModelArgs};

fn load(args: &ModelArgs) -> anyhow::Result<PoleResidueModel> {
    load_model(&args.model, args.hz).with_context(|| format!("loading {}", args.model.display()))
}

pub fn check(args: CheckArgs) -> anyhow::Result<u8> {
    let model = load(&args.model)?;
    let preset = args.preset.resolve()?;
    let options = CheckOptions {
        refine_tol: args.refine_tol,
        ..CheckOptions::default()
    };
    let report = check_passivity_with(&model, &preset, &options)?;
    if let Some(path) = &args.report {
        fs::write(path, report.to_json() + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &args.samples {
        write_samples_csv(path, &report.samples)?;
    }
    if let Some(path) = &args.trace {
        write_trace(path, &report.subband_results)?;
    }
    println!("{}", summary_line(&report));

    if args.oracle {
        let verdict = oracle_verdict(&model.realize()?, &model, &OracleOptions::default())?;
        println!(
            "oracle: {} ({} crossings{})",
            if verdict.passive { "passive" } else { "non-passive" },
            verdict.crossings.frequencies.len(),
            if verdict.used_pencil { ", pencil" } else { "" }
        );
    }
    if let Some(count) = args.dense {
        let map = WarpMap::for_model(&model, &preset.warp);
        let dense = dense_reference_check(&model, &map, count);
        println!(
            "dense: {} over {} points, worst phi = {} at omega = {}",
            if dense.violation { "violation" } else { "no violation" },
            dense.count,
            dense.worst_phi,
            dense.worst_omega
        );
    }
    Ok(if report.passive { 0 } else { 1 })
}

pub fn compare(args: CompareArgs) -> anyhow::Result<u8> {
    let model = load(&args.model)?;
    let preset = args.preset.resolve()?;
    let options = CompareOptions {
        oracle: OracleOptions {
            imag_tol: args.imag_tol,
            max_dim: args.max_dim,
        },
        dense_points: args.dense_points,
        always_dense: args.always_dense,
        ..CompareOptions::default()
    };
    let report = compare_model(&model, &preset, &options)?;
    let json = report.to_json() + "\n";
    match &args.report {
        Some(path) => fs::write(path, &json).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{json}"),
    }
    let adjudication = report
        .adjudication
        .map(|a| format!(", {}", a.label()))
        .unwrap_or_default();
    eprintln!(
        "{}: adaptive {}, oracle {}{adjudication}",
        report.classification.label(),
        if report.adaptive_passive { "passive" } else { "non-passive" },
        if report.oracle_passive { "passive" } else { "non-passive" },
    );
    Ok(if report.classification == Classification::TruePositive { 0 } else { 1 })
}

pub fn gen_corpus(args: CorpusArgs) -> anyhow::Result<u8> {
    let spec = CorpusSpec {
        seed: args.seed,
        count: args.count,
        port_counts: args.ports,
        min_order: args.min_order,
        max_order: args.max_order,
        targets: args.targets,
        ..CorpusSpec::default()
    };
    anyhow::ensure!(!spec.port_counts.is_empty() && spec.port_counts.iter().all(|&p| p > 0), "port counts must be positive");
    anyhow::ensure!(spec.min_order >= 1 && spec.min_order <= spec.max_order, "need 1 <= min-order <= max-order");
    anyhow::ensure!(!spec.targets.is_empty() && spec.targets.iter().all(|t| t.is_finite() && *t >= 0.0), "targets must be finite and non-negative");
    let manifest = write_corpus(&args.out, &spec)?;
    let passive = manifest.entries.iter().filter(|e| e.intended_passive).count();
    println!(
        "wrote {} models ({} intended passive) to {}",
        manifest.entries.len(),
        passive,
        args.out.display()
    );
    Ok(0)
}

pub fn dense_check(args: DenseArgs) -> anyhow::Result<u8> {
    let model = load(&args.model)?;
    anyhow::ensure!(args.count >= 1, "count must be at least 1");
    let preset = ModePreset::for_mode(args.mode.parse::<Mode>()?);
    let map = WarpMap::for_model(&model, &preset.warp);
    let dense = dense_reference_check(&model, &map, args.count);
    println!("{}", serde_json::to_string_pretty(&dense)?);
    Ok(if dense.violation { 1 } else { 0 })
}
