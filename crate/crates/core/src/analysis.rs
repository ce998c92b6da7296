//! Convergence-rate regression, expansion-vs-Monte-Carlo tables and
//! plot-ready output.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::defects::{DefectSetup, ExpansionCoefficients};
use crate::error::{invalid, Result};
use crate::homogenize::Discretization;
use crate::material::PerturbedMaterial;
use crate::stochastic::McEstimate;

/// Least-squares line through `(log N, log error)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Pearson coefficient of the log-log points.
    pub correlation: f64,
    pub points: Vec<(f64, f64)>,
}

pub fn fit_rate(errors: &[(f64, f64)]) -> Result<RateFit> {
    let points: Vec<(f64, f64)> = errors
        .iter()
        .filter(|&&(n, e)| {
            let ok = n > 0.0 && e > 0.0 && e.is_finite();
            if !ok {
                log::warn!("dropping point (N = {n}, error = {e}) from the rate fit");
            }
            ok
        })
        .map(|&(n, e)| (n.ln(), e.ln()))
        .collect();
    if points.len() < 3 {
        return Err(invalid(format!(
            "a rate fit needs at least 3 positive errors, {} usable",
            points.len()
        )));
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in &points {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(invalid("a rate fit needs at least two distinct N"));
    }
    let slope = sxy / sxx;
    let correlation = if syy == 0.0 { 0.0 } else { (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0) };
    Ok(RateFit {
        slope,
        intercept: my - slope * mx,
        correlation,
        points,
    })
}

/// `A₁*,N` entries over a range of `N` against a reference width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub entry: (usize, usize),
    pub reference_n: usize,
    pub reference: f64,
    /// `(N, A₁*,N entry, |entry − reference|)`.
    pub rows: Vec<(usize, f64, f64)>,
    pub fit: RateFit,
}

/// Fits the decay of `|A₁*,N(entry) − A₁*,N_ref(entry)|` over `ns`.
pub fn first_order_convergence(
    mat: &PerturbedMaterial,
    ns: &[usize],
    reference_n: usize,
    disc: &Discretization,
    entry: (usize, usize),
) -> Result<ConvergenceStudy> {
    check_entry(mat.dim(), entry)?;
    let value = |n: usize| -> Result<f64> {
        let t = DefectSetup::new(mat, n, disc)?.first_order()?;
        log::info!("A1 at N = {n}: {:.10}", t.get(entry.0, entry.1));
        Ok(t.get(entry.0, entry.1))
    };
    let reference = value(reference_n)?;
    let values: Vec<(usize, f64)> = ns.iter().map(|&n| Ok((n, value(n)?))).collect::<Result<_>>()?;
    convergence_from_values(&values, reference_n, reference, entry)
}

pub fn convergence_from_values(
    values: &[(usize, f64)],
    reference_n: usize,
    reference: f64,
    entry: (usize, usize),
) -> Result<ConvergenceStudy> {
    let rows: Vec<(usize, f64, f64)> = values.iter().map(|&(n, v)| (n, v, (v - reference).abs())).collect();
    let fit = fit_rate(&rows.iter().map(|&(n, _, e)| (n as f64, e)).collect::<Vec<_>>())?;
    Ok(ConvergenceStudy {
        entry,
        reference_n,
        reference,
        rows,
        fit,
    })
}

fn check_entry(dim: usize, entry: (usize, usize)) -> Result<()> {
    if entry.0 >= dim || entry.1 >= dim {
        return Err(invalid(format!(
            "entry ({}, {}) out of range for d = {dim}",
            entry.0 + 1,
            entry.1 + 1
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub n: usize,
    pub mc_mean: f64,
    pub mc_min: f64,
    pub mc_max: f64,
    pub a_per: f64,
    pub order1: f64,
    pub order2: Option<f64>,
    /// Supercell width of the expansion coefficients used for this row.
    pub coeff_n: usize,
}

/// Per-`N` rows of Monte-Carlo statistics next to the expansion predictions
/// for one entry (zero-based). Each row uses the coefficients with the
/// largest width not exceeding its `N`, or the smallest available.
pub fn comparison_table(
    mc: &[McEstimate],
    coeffs: &[ExpansionCoefficients],
    eta: f64,
    entry: (usize, usize),
) -> Result<Vec<ComparisonRow>> {
    let first = coeffs.first().ok_or_else(|| invalid("no expansion coefficients given"))?;
    check_entry(first.dim(), entry)?;
    let (i, j) = entry;
    let mut rows: Vec<ComparisonRow> = mc
        .iter()
        .map(|e| {
            check_entry(e.dim, entry)?;
            let c = coeffs
                .iter()
                .filter(|c| c.n <= e.n)
                .max_by_key(|c| c.n)
                .or_else(|| coeffs.iter().min_by_key(|c| c.n))
                .expect("non-empty");
            let a_per = c.order0.get(i, j);
            let order1 = a_per + eta * c.order1.get(i, j);
            let order2 = c.order2.as_ref().map(|a2| order1 + eta * eta * a2.get(i, j));
            Ok(ComparisonRow {
                n: e.n,
                mc_mean: e.mean.get(i, j),
                mc_min: e.min_entry.get(i, j),
                mc_max: e.max_entry.get(i, j),
                a_per,
                order1,
                order2,
                coeff_n: c.n,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.n.cmp(&b.n).then(a.mc_mean.total_cmp(&b.mc_mean)));
    Ok(rows)
}

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["N", "mc_mean", "mc_min", "mc_max", "a_per", "order1", "order2", "coeff_N"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            sig(r.mc_mean),
            sig(r.mc_min),
            sig(r.mc_max),
            sig(r.a_per),
            sig(r.order1),
            r.order2.map(sig).unwrap_or_default(),
            r.coeff_n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plot data for a log-log rate figure.
pub fn write_convergence_csv<W: Write>(study: &ConvergenceStudy, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["N", "value", "error", "log_N", "log_error"])?;
    for &(n, v, e) in &study.rows {
        let (ln, le) = if e > 0.0 {
            (sig((n as f64).ln()), sig(e.ln()))
        } else {
            (sig((n as f64).ln()), String::new())
        };
        w.write_record([n.to_string(), sig(v), sig(e), ln, le])?;
    }
    w.flush()?;
    Ok(())
}

/// 12 significant digits.
pub fn sig(x: f64) -> String {
    format!("{x:.11e}")
}

/// Outcome of one acceptance rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleOutcome {
    pub rule: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub slope: f64,
    #[serde(rename = "R")]
    pub correlation: f64,
    pub rules: Vec<RuleOutcome>,
}

/// Checks a fit against a slope window and a minimum `|R|`.
pub fn judge_fit(fit: &RateFit, slope_range: (f64, f64), min_abs_r: f64) -> FitSummary {
    let slope_ok = fit.slope >= slope_range.0 && fit.slope <= slope_range.1;
    let r_ok = fit.correlation.abs() >= min_abs_r;
    FitSummary {
        slope: fit.slope,
        correlation: fit.correlation,
        rules: vec![
            RuleOutcome {
                rule: format!("slope in [{}, {}]", slope_range.0, slope_range.1),
                passed: slope_ok,
                detail: format!("{:.4}", fit.slope),
            },
            RuleOutcome {
                rule: format!("|R| >= {min_abs_r}"),
                passed: r_ok,
                detail: format!("{:.4}", fit.correlation.abs()),
            },
        ],
    }
}
