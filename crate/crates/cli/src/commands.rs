//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde_json::json;
use weakhom::analysis::{comparison_table, convergence_from_values, write_comparison_csv, write_convergence_csv, ConvergenceStudy};
use weakhom::defects::{
    expansion, write_contributions, DefectSetup, ExpansionCoefficients, Progress, SecondOrderOptions,
};
use weakhom::oned::{report, OnedReport, PiecewiseConstant1D, DEFAULT_REMAINDER_ETAS};
use weakhom::stochastic::{aggregate, mc_realizations, write_mc_csv, McEstimate, McProtocol, RealizationResult};
use weakhom::{homogenized_tensor, Bc, HomTensor, Mat2, MaterialSpec, PerturbedMaterial};

use crate::config::RunConfig;
use crate::output::{out_path, read_config_hash, write_csv, write_json, Header};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Cell,
    Correct,
    Mc,
    Convergence,
    Oned,
    Expand,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Cell => "cell",
            Command::Correct => "correct",
            Command::Mc => "mc",
            Command::Convergence => "convergence",
            Command::Oned => "oned",
            Command::Expand => "expand",
        }
    }

    pub fn run(self, config: &RunConfig) -> Result<(), CliError> {
        match self {
            Command::Cell => cmd_cell(config).map(drop),
            Command::Correct => cmd_correct(config).map(drop),
            Command::Mc => cmd_mc(config).map(drop),
            Command::Convergence => cmd_convergence(config).map(drop),
            Command::Oned => {
                let r = cmd_oned(config)?;
                println!("{}", serde_json::to_string_pretty(&r)?);
                Ok(())
            }
            Command::Expand => cmd_expand(config).map(drop),
        }
    }
}

fn material(config: &RunConfig) -> Result<PerturbedMaterial, CliError> {
    config.validate()?;
    Ok(config.material.build()?)
}

/// Writes `A_per*` to `cell.json`.
pub fn cmd_cell(config: &RunConfig) -> Result<HomTensor, CliError> {
    let mat = material(config)?;
    let t = homogenized_tensor(mat.base(), &config.disc())?;
    write_json(&out_path(config, "cell.json")?, &Header::new("cell", config), json!({ "a_per_star": t }))?;
    Ok(t)
}

fn progress_logger(p: Progress) {
    let step = (p.total / 20).max(1);
    if p.done % step == 0 || p.done == p.total {
        log::info!("two-defect solves {}/{}", p.done, p.total);
    }
}

/// Coefficients at width `config.n` plus the dual-formula first-order value
/// (periodic only).
fn coefficients(config: &RunConfig, mat: &PerturbedMaterial) -> Result<(ExpansionCoefficients, Option<HomTensor>), CliError> {
    if config.bc == Bc::Dirichlet && config.order == 2 {
        return Err(CliError::Config(
            "the second-order coefficient is only available with periodic boundary conditions".into(),
        ));
    }
    let opts = SecondOrderOptions {
        budget: config.budget,
        allow_over_budget: config.budget_override,
    };
    let required = config.n.pow(mat.dim() as u32) - 1;
    if config.order == 2 && required > opts.budget && !opts.allow_over_budget {
        return Err(weakhom::Error::BudgetExceeded { required, budget: opts.budget }.into());
    }
    let setup = DefectSetup::new(mat, config.n, &config.disc())?;
    let (order1, dual) = match config.bc {
        Bc::Periodic => {
            let (vol, dual) = setup.first_order_both()?;
            (vol, Some(dual))
        }
        Bc::Dirichlet => (setup.first_order_dirichlet()?, None),
    };
    let (order2, diagnostics) = if config.order == 2 {
        let s = setup.second_order(&opts, &progress_logger)?;
        (Some(s.tensor), s.contributions)
    } else {
        (None, Vec::new())
    };
    let coeffs = ExpansionCoefficients {
        order0: setup.a_per_star(),
        order1,
        order2,
        n: config.n,
        diagnostics,
    };
    Ok((coeffs, dual))
}

/// Writes `A₁*,N` (and `A₂*,N` at order 2) to `correct.json`, the tensors
/// by formula to `correct_diagnostics.csv` and, at order 2, the per-`k`
/// contributions to `correct_pairs.csv`.
pub fn cmd_correct(config: &RunConfig) -> Result<ExpansionCoefficients, CliError> {
    let mat = material(config)?;
    let (coeffs, dual) = coefficients(config, &mat)?;
    let header = Header::new("correct", config);
    write_json(
        &out_path(config, "correct.json")?,
        &header,
        json!({ "a_per_star": coeffs.order0, "a1": coeffs.order1, "a2": coeffs.order2 }),
    )?;
    let dim = coeffs.dim();
    let tensors: Vec<&HomTensor> = [Some(&coeffs.order0), Some(&coeffs.order1), dual.as_ref(), coeffs.order2.as_ref()]
        .into_iter()
        .flatten()
        .collect();
    write_csv(&out_path(config, "correct_diagnostics.csv")?, &header, |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(HomTensor::csv_header(dim))?;
        for t in tensors {
            w.write_record(t.csv_record())?;
        }
        w.flush()?;
        Ok(())
    })?;
    if coeffs.order2.is_some() {
        write_csv(&out_path(config, "correct_pairs.csv")?, &header, |w| {
            write_contributions(dim, &coeffs.diagnostics, w)
        })?;
    }
    Ok(coeffs)
}

const REALIZATIONS_FILE: &str = "mc_realizations.csv";

fn realization_header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = ["N", "eta", "stream", "pattern_hash", "defects"].map(String::from).to_vec();
    for i in 1..=dim {
        for j in 1..=dim {
            h.push(format!("entry_{i}{j}"));
        }
    }
    h
}

fn realization_record(n: usize, eta: f64, dim: usize, r: &RealizationResult) -> Vec<String> {
    let mut rec = vec![
        n.to_string(),
        eta.to_string(),
        r.stream.to_string(),
        format!("{:016x}", r.pattern_hash),
        r.defects.to_string(),
    ];
    for i in 0..dim {
        for j in 0..dim {
            // shortest round-trip form, so resumed aggregates are bitwise equal
            rec.push(format!("{:e}", r.tensor.get(i, j)));
        }
    }
    rec
}

fn parse_realization(rec: &csv::StringRecord, dim: usize) -> Option<(usize, RealizationResult)> {
    let n = rec.get(0)?.parse().ok()?;
    let stream = rec.get(2)?.parse().ok()?;
    let pattern_hash = u64::from_str_radix(rec.get(3)?, 16).ok()?;
    let defects = rec.get(4)?.parse().ok()?;
    let mut tensor = Mat2::ZERO;
    for i in 0..dim {
        for j in 0..dim {
            tensor.0[i][j] = rec.get(5 + i * dim + j)?.parse().ok()?;
        }
    }
    if rec.len() != 5 + dim * dim {
        return None;
    }
    Some((n, RealizationResult { stream, pattern_hash, defects, tensor }))
}

/// Realizations already on disk for this config, keyed by `(N, stream)`.
/// A trailing partial record from an interrupted run is dropped.
fn load_realizations(
    path: &Path,
    hash: &str,
    dim: usize,
) -> Result<BTreeMap<(usize, u64), RealizationResult>, CliError> {
    let mut done = BTreeMap::new();
    if !path.exists() {
        return Ok(done);
    }
    let text = std::fs::read_to_string(path)?;
    match read_config_hash(&text) {
        Some(h) if h == hash => {}
        other => {
            return Err(CliError::Config(format!(
                "{} was written by config {} but the current config is {hash}; choose another --out or remove the file",
                path.display(),
                other.unwrap_or("<none>")
            )))
        }
    }
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(complete.as_bytes());
    for rec in rdr.records() {
        match rec.ok().and_then(|r| parse_realization(&r, dim)) {
            Some((n, r)) => {
                done.insert((n, r.stream), r);
            }
            None => {
                log::warn!("ignoring unreadable record in {}", path.display());
                break;
            }
        }
    }
    Ok(done)
}

fn mc_run(config: &RunConfig, mat: &PerturbedMaterial) -> Result<(Vec<McEstimate>, usize), CliError> {
    let dim = mat.dim();
    let header = Header::new("mc", config);
    let path = out_path(config, REALIZATIONS_FILE)?;
    let mut done = load_realizations(&path, &header.config_hash, dim)?;
    if !done.is_empty() {
        log::info!("resuming from {} stored realizations", done.len());
    }

    // rewrite the valid prefix, then append as chunks complete
    let mut w = BufWriter::new(File::create(&path)?);
    w.write_all(header.comment_block().as_bytes())?;
    {
        let mut c = csv::Writer::from_writer(&mut w);
        c.write_record(realization_header(dim))?;
        for (&(n, _), r) in &done {
            c.write_record(realization_record(n, config.eta, dim, r))?;
        }
        c.flush()?;
    }
    drop(w);
    let mut file = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(OpenOptions::new().append(true).open(&path)?);

    let widths = config.widths();
    let chunk = rayon::current_num_threads().max(1);
    let mut estimates = Vec::new();
    let mut failed = 0;
    for &n in &widths {
        let start = Instant::now();
        let protocol = McProtocol { bc: config.bc, ..McProtocol::new(config.eta, n, config.seed, config.disc()) };
        let missing: Vec<u64> = (1..=config.realizations as u64).filter(|s| !done.contains_key(&(n, *s))).collect();
        let mut ok = true;
        for streams in missing.chunks(chunk) {
            match mc_realizations(mat, &protocol, streams) {
                Ok(results) => {
                    for r in results {
                        file.write_record(realization_record(n, config.eta, dim, &r))?;
                        done.insert((n, r.stream), r);
                    }
                    file.flush()?;
                }
                Err(e) => {
                    log::error!("Monte-Carlo estimate for N = {n} failed: {e}");
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            failed += 1;
            continue;
        }
        let results: Vec<RealizationResult> = (1..=config.realizations as u64).map(|s| done[&(n, s)]).collect();
        let wall = if config.record_time { start.elapsed().as_secs_f64() } else { 0.0 };
        estimates.push(aggregate(dim, &protocol, &results, wall)?);
    }

    write_csv(&out_path(config, "mc.csv")?, &header, |w| write_mc_csv(&estimates, w, config.record_time))?;
    Ok((estimates, failed))
}

/// Monte-Carlo estimates over the configured widths, written to `mc.csv`.
/// Individual realizations go to `mc_realizations.csv`, from which an
/// interrupted run resumes.
pub fn cmd_mc(config: &RunConfig) -> Result<Vec<McEstimate>, CliError> {
    let mat = material(config)?;
    let total = config.widths().len();
    let (estimates, failed) = mc_run(config, &mat)?;
    if failed > 0 {
        return Err(CliError::Partial { failed, total });
    }
    Ok(estimates)
}

/// Rate study with the default evaluator `N ↦ A₁*,N(1,1)`.
pub fn cmd_convergence(config: &RunConfig) -> Result<ConvergenceStudy, CliError> {
    let mat = material(config)?;
    let disc = config.disc();
    cmd_convergence_with(config, &|n| {
        let t = DefectSetup::new(&mat, n, &disc)?.first_order()?;
        log::info!("A1 at N = {n}: {:.10}", t.get(0, 0));
        Ok(t.get(0, 0))
    })
}

/// Rate study over the N-list against its largest entry, with values from
/// `value`. Writes `convergence.json` and `convergence.csv`.
pub fn cmd_convergence_with(
    config: &RunConfig,
    value: &dyn Fn(usize) -> weakhom::Result<f64>,
) -> Result<ConvergenceStudy, CliError> {
    config.validate()?;
    let mut ns = config.n_list.clone();
    ns.sort_unstable();
    ns.dedup();
    let reference_n = ns.pop().ok_or_else(|| CliError::Config("convergence needs an N-list".into()))?;
    let reference = value(reference_n)?;
    let values: Vec<(usize, f64)> = ns.iter().map(|&n| Ok((n, value(n)?))).collect::<weakhom::Result<_>>()?;
    let study = convergence_from_values(&values, reference_n, reference, (0, 0))?;
    let header = Header::new("convergence", config);
    write_json(&out_path(config, "convergence.json")?, &header, json!({ "study": study }))?;
    write_csv(&out_path(config, "convergence.csv")?, &header, |w| write_convergence_csv(&study, w))?;
    Ok(study)
}

/// Exact one-dimensional oracle, written to `oned.json`.
pub fn cmd_oned(config: &RunConfig) -> Result<OnedReport, CliError> {
    config.validate()?;
    let MaterialSpec::Piecewise1d { breakpoints, a, c } = &config.material else {
        return Err(CliError::Config("the oned command needs a piecewise-1d material".into()));
    };
    let a = PiecewiseConstant1D::new(breakpoints.clone(), a.clone())?;
    let c = PiecewiseConstant1D::new(breakpoints.clone(), c.clone())?;
    let r = report(&a, &c, config.eta, &DEFAULT_REMAINDER_ETAS)?;
    write_json(&out_path(config, "oned.json")?, &Header::new("oned", config), serde_json::to_value(&r)?)?;
    Ok(r)
}

/// Expansion tensor at `eta` from coefficients at width `config.n`, written
/// to `expand.json`. With an N-list, also runs the Monte-Carlo sweep and
/// writes the side-by-side `comparison.csv`.
pub fn cmd_expand(config: &RunConfig) -> Result<HomTensor, CliError> {
    let mat = material(config)?;
    let (coeffs, _) = coefficients(config, &mat)?;
    let t = expansion(&coeffs, config.eta, config.order)?;
    let header = Header::new("expand", config);
    write_json(
        &out_path(config, "expand.json")?,
        &header,
        json!({ "expansion": t, "a_per_star": coeffs.order0, "a1": coeffs.order1, "a2": coeffs.order2 }),
    )?;
    if !config.n_list.is_empty() {
        let total = config.n_list.len();
        let (estimates, failed) = mc_run(config, &mat)?;
        let rows = comparison_table(&estimates, std::slice::from_ref(&coeffs), config.eta, (0, 0))?;
        write_csv(&out_path(config, "comparison.csv")?, &header, |w| write_comparison_csv(&rows, w))?;
        if failed > 0 {
            return Err(CliError::Partial { failed, total });
        }
    }
    Ok(t)
}
