//! Monte-Carlo estimation of the homogenized tensor on random supercells.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fem::mesh::Bc;
use crate::homogenize::{apparent_tensor, Discretization, Formula, HomTensor, Provenance};
use crate::material::{realize, sample_bernoulli_pattern, PerturbedMaterial};
use crate::tensor::Mat2;

pub const DEFAULT_REALIZATIONS: usize = 40;

/// Protocol parameters shared by all realizations of one estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McProtocol {
    pub eta: f64,
    pub n: usize,
    pub seed: u64,
    pub bc: Bc,
    pub disc: Discretization,
}

impl McProtocol {
    pub fn new(eta: f64, n: usize, seed: u64, disc: Discretization) -> Self {
        McProtocol {
            eta,
            n,
            seed,
            bc: Bc::Periodic,
            disc,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(invalid(format!("eta must lie in [0, 1], got {}", self.eta)));
        }
        if self.n % 2 == 0 {
            return Err(invalid(format!("supercell width N must be odd, got {}", self.n)));
        }
        Ok(())
    }
}

/// Apparent tensor of the realization drawn on `stream`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealizationResult {
    pub stream: u64,
    pub pattern_hash: u64,
    pub defects: usize,
    pub tensor: Mat2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub dim: usize,
    pub mean: Mat2,
    pub min_entry: Mat2,
    pub max_entry: Mat2,
    pub count: usize,
    pub seed: u64,
    pub eta: f64,
    pub n: usize,
    pub bc: Bc,
    pub density: usize,
    pub wall_time_s: f64,
}

impl McEstimate {
    pub fn spread(&self, i: usize, j: usize) -> f64 {
        self.max_entry.get(i, j) - self.min_entry.get(i, j)
    }

    pub fn mean_tensor(&self) -> HomTensor {
        let mut p = Provenance::new(Formula::MonteCarloMean, self.n, self.bc, self.density);
        p.seed = Some(self.seed);
        p.eta = Some(self.eta);
        HomTensor::new(self.dim, self.mean, p)
    }
}

/// Computes the realizations on the given streams, in stream order.
pub fn mc_realizations(
    mat: &PerturbedMaterial,
    protocol: &McProtocol,
    streams: &[u64],
) -> Result<Vec<RealizationResult>> {
    protocol.validate()?;
    let dim = mat.dim();
    streams
        .par_iter()
        .map(|&stream| {
            let pattern = sample_bernoulli_pattern(dim, protocol.n, protocol.eta, protocol.seed, stream)?;
            let hash = pattern.digest();
            let wrap = |source: Error| Error::Realization {
                stream,
                pattern_hash: hash,
                source: Box::new(source),
            };
            let field = realize(mat, &pattern).map_err(wrap)?;
            let t = apparent_tensor(&field, protocol.bc, &protocol.disc).map_err(wrap)?;
            log::info!(
                "N = {} eta = {} stream {stream}: {} defects, a11 = {:.6}",
                protocol.n,
                protocol.eta,
                pattern.count(),
                t.get(0, 0)
            );
            Ok(RealizationResult {
                stream,
                pattern_hash: hash,
                defects: pattern.count(),
                tensor: t.matrix,
            })
        })
        .collect()
}

/// Ordered fold of realization results into mean, min and max.
pub fn aggregate(dim: usize, protocol: &McProtocol, results: &[RealizationResult], wall_time_s: f64) -> Result<McEstimate> {
    let first = results.first().ok_or_else(|| invalid("at least one realization is required"))?;
    let mut sum = Mat2::ZERO;
    let mut lo = first.tensor;
    let mut hi = first.tensor;
    for r in results {
        sum = sum + r.tensor;
        for i in 0..dim {
            for j in 0..dim {
                let v = r.tensor.get(i, j);
                lo.0[i][j] = lo.0[i][j].min(v);
                hi.0[i][j] = hi.0[i][j].max(v);
            }
        }
    }
    let mut mean = sum.scale(1.0 / results.len() as f64);
    // keep min ≤ mean ≤ max exact when all realizations coincide
    for i in 0..dim {
        for j in 0..dim {
            mean.0[i][j] = mean.0[i][j].clamp(lo.0[i][j], hi.0[i][j]);
        }
    }
    Ok(McEstimate {
        dim,
        mean,
        min_entry: lo,
        max_entry: hi,
        count: results.len(),
        seed: protocol.seed,
        eta: protocol.eta,
        n: protocol.n,
        bc: protocol.bc,
        density: protocol.disc.density,
        wall_time_s,
    })
}

/// Mean, min and max of the apparent tensor over streams `1..=count`.
pub fn mc_estimate(mat: &PerturbedMaterial, protocol: &McProtocol, count: usize) -> Result<McEstimate> {
    if count == 0 {
        return Err(invalid("realization count must be at least 1"));
    }
    let start = Instant::now();
    let streams: Vec<u64> = (1..=count as u64).collect();
    let results = mc_realizations(mat, protocol, &streams)?;
    aggregate(mat.dim(), protocol, &results, start.elapsed().as_secs_f64())
}

/// One estimate per supercell width; failures are reported per entry and do
/// not stop the sweep.
pub fn mc_sweep(
    mat: &PerturbedMaterial,
    protocol: &McProtocol,
    n_list: &[usize],
    count: usize,
) -> Vec<(usize, Result<McEstimate>)> {
    n_list
        .iter()
        .map(|&n| {
            let p = McProtocol { n, ..*protocol };
            let r = mc_estimate(mat, &p, count);
            if let Err(e) = &r {
                log::error!("Monte-Carlo estimate for N = {n} failed: {e}");
            }
            (n, r)
        })
        .collect()
}

pub fn mc_csv_header(dim: usize) -> Vec<String> {
    let mut h = vec!["N".to_string(), "eta".into(), "count".into()];
    for i in 1..=dim {
        for j in 1..=dim {
            for s in ["mean", "min", "max"] {
                h.push(format!("entry_{i}{j}_{s}"));
            }
        }
    }
    h.push("seed".into());
    h.push("wall_time_s".into());
    h
}

/// CSV row; the wall time is written as `0` unless `record_time`, so that
/// reruns with the same seed produce identical files.
pub fn mc_csv_record(e: &McEstimate, record_time: bool) -> Vec<String> {
    let mut r = vec![e.n.to_string(), e.eta.to_string(), e.count.to_string()];
    for i in 0..e.dim {
        for j in 0..e.dim {
            for m in [&e.mean, &e.min_entry, &e.max_entry] {
                r.push(format!("{:.12e}", m.get(i, j)));
            }
        }
    }
    r.push(e.seed.to_string());
    r.push(if record_time { format!("{:.3}", e.wall_time_s) } else { "0".into() });
    r
}

pub fn write_mc_csv<W: Write>(estimates: &[McEstimate], out: W, record_time: bool) -> Result<()> {
    let dim = estimates.first().map_or(2, |e| e.dim);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(mc_csv_header(dim))?;
    for e in estimates {
        w.write_record(mc_csv_record(e, record_time))?;
    }
    w.flush()?;
    Ok(())
}
