//! Periodic coefficient fields, their Bernoulli perturbation and the
//! reference materials.
//!
//! A [`TensorField`] is a `ℤᵈ`-periodic map from the unit cell
//! `Q = [-1/2, 1/2)ᵈ` to `d × d` matrices, written as a constant plus a sum
//! of indicator (or raster) layers. A [`PerturbedMaterial`] pairs the
//! reference field `A_per` with the perturbation `C_per` that is switched on
//! cell by cell by a [`DefectPattern`].

use std::io::Read;
use std::path::Path;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tensor::{Mat2, Vec2};

/// Lattice index of a unit cell. One-dimensional cells use `[k, 0]`.
pub type Cell = [i64; 2];

/// Reduced coordinate in `[-1/2, 1/2)`.
#[inline]
pub fn reduce(x: f64) -> f64 {
    x - (x + 0.5).floor()
}

/// Subsets of the unit cell used by indicator layers, in reduced coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum Region {
    /// Closed ball `|y| ≤ radius` centred in the cell.
    Ball { radius: f64 },
    /// `lo ≤ y[axis] < hi`.
    Slab { axis: usize, lo: f64, hi: f64 },
    /// `y₁ y₂ ≥ 0`: two opposite quadrants, i.e. a checkerboard phase.
    Quadrants,
}

impl Region {
    pub fn contains(&self, y: Vec2, dim: usize) -> bool {
        match *self {
            Region::Ball { radius } => {
                let r2: f64 = y[..dim].iter().map(|v| v * v).sum();
                r2 <= radius * radius
            }
            Region::Slab { axis, lo, hi } => axis < dim && y[axis] >= lo && y[axis] < hi,
            Region::Quadrants => dim == 2 && (y[0] >= 0.0) == (y[1] >= 0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "kebab-case")]
pub enum Layer {
    Indicator { region: Region, value: Mat2 },
    /// Piecewise-constant pixels on an `n × n` (or `n` in 1D) raster of the
    /// unit cell, row-major with the first coordinate fastest.
    Raster { n: usize, values: Vec<Mat2> },
}

impl Layer {
    fn eval(&self, y: Vec2, dim: usize) -> Mat2 {
        match self {
            Layer::Indicator { region, value } => {
                if region.contains(y, dim) {
                    *value
                } else {
                    Mat2::ZERO
                }
            }
            Layer::Raster { n, values } => {
                let pix = |t: f64| (((t + 0.5) * *n as f64).floor() as usize).min(n - 1);
                let idx = if dim == 1 { pix(y[0]) } else { pix(y[0]) + n * pix(y[1]) };
                values[idx]
            }
        }
    }

    fn transpose(&self) -> Layer {
        match self {
            Layer::Indicator { region, value } => Layer::Indicator {
                region: *region,
                value: value.transpose(),
            },
            Layer::Raster { n, values } => Layer::Raster {
                n: *n,
                values: values.iter().map(Mat2::transpose).collect(),
            },
        }
    }
}

/// A `ℤᵈ`-periodic coefficient field. Periodicity holds by construction
/// because evaluation goes through reduced coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorField {
    dim: usize,
    constant: Mat2,
    layers: Vec<Layer>,
    lambda: f64,
    upper: f64,
}

const BOUND_SAMPLES_PER_AXIS: usize = 200;

impl TensorField {
    pub fn new(dim: usize, constant: Mat2, layers: Vec<Layer>) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(invalid(format!("dimension must be 1 or 2, got {dim}")));
        }
        for layer in &layers {
            if let Layer::Raster { n, values } = layer {
                let expected = n.pow(dim as u32);
                if *n == 0 || values.len() != expected {
                    return Err(invalid(format!(
                        "raster layer needs {expected} pixels, got {}",
                        values.len()
                    )));
                }
            }
        }
        let mut field = TensorField {
            dim,
            constant,
            layers,
            lambda: 0.0,
            upper: 0.0,
        };
        field.compute_bounds();
        Ok(field)
    }

    pub fn constant(dim: usize, c: f64) -> Result<Self> {
        Self::new(dim, Mat2::scalar(dim, c), Vec::new())
    }

    pub fn zero(dim: usize) -> Result<Self> {
        Self::new(dim, Mat2::ZERO, Vec::new())
    }

    /// Sampled coercivity and boundedness constants over a cell-centred grid
    /// (plus every raster pixel).
    fn compute_bounds(&mut self) {
        let s = BOUND_SAMPLES_PER_AXIS;
        let coord = |i: usize| -0.5 + (i as f64 + 0.5) / s as f64;
        let mut lo = f64::INFINITY;
        let mut hi = 0.0_f64;
        let mut visit = |m: Mat2| {
            lo = lo.min(m.sym_eigenvalues(self.dim)[0]);
            hi = hi.max(m.operator_norm(self.dim));
        };
        if self.dim == 1 {
            for i in 0..s {
                visit(self.eval([coord(i), 0.0]));
            }
        } else {
            for j in 0..s {
                for i in 0..s {
                    visit(self.eval([coord(i), coord(j)]));
                }
            }
        }
        visit(self.eval([0.0, 0.0]));
        for layer in &self.layers {
            if let Layer::Raster { values, .. } = layer {
                for v in values {
                    visit(self.constant + *v);
                }
            }
        }
        self.lambda = lo;
        self.upper = hi;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Coercivity constant λ: `λ|ξ|² ≤ A(x)ξ·ξ`.
    pub fn coercivity(&self) -> f64 {
        self.lambda
    }

    /// Boundedness constant Λ: `|A(x)ξ| ≤ Λ|ξ|`.
    pub fn bound(&self) -> f64 {
        self.upper
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn eval(&self, x: Vec2) -> Mat2 {
        let y = [reduce(x[0]), if self.dim == 2 { reduce(x[1]) } else { 0.0 }];
        self.layers
            .iter()
            .fold(self.constant, |acc, l| acc + l.eval(y, self.dim))
    }

    pub fn transpose(&self) -> TensorField {
        TensorField {
            dim: self.dim,
            constant: self.constant.transpose(),
            layers: self.layers.iter().map(Layer::transpose).collect(),
            lambda: self.lambda,
            upper: self.upper,
        }
    }

    /// Pointwise sum of two fields of the same dimension.
    pub fn plus(&self, other: &TensorField) -> Result<TensorField> {
        if self.dim != other.dim {
            return Err(invalid("cannot add fields of different dimensions"));
        }
        let mut layers = self.layers.clone();
        layers.extend(other.layers.iter().cloned());
        TensorField::new(self.dim, self.constant + other.constant, layers)
    }

    pub fn is_zero(&self) -> bool {
        self.constant == Mat2::ZERO
            && self.layers.iter().all(|l| match l {
                Layer::Indicator { value, .. } => *value == Mat2::ZERO,
                Layer::Raster { values, .. } => values.iter().all(|v| *v == Mat2::ZERO),
            })
    }

    pub fn is_symmetric(&self) -> bool {
        self.constant.is_symmetric(0.0)
            && self.layers.iter().all(|l| match l {
                Layer::Indicator { value, .. } => value.is_symmetric(0.0),
                Layer::Raster { values, .. } => values.iter().all(|v| v.is_symmetric(0.0)),
            })
    }

    /// Reads a raster field from CSV with header `i,j,a11,a12,a21,a22`
    /// (or `i,a11` in one dimension), one row per pixel.
    pub fn from_raster_csv<R: Read>(dim: usize, reader: R) -> Result<TensorField> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let nums: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("raster entry: {e}")))?;
            rows.push(nums);
        }
        let width = if dim == 1 { 2 } else { 6 };
        if let Some(r) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::Parse(format!(
                "raster row has {} columns, expected {width}",
                r.len()
            )));
        }
        let n = match dim {
            1 => rows.len(),
            _ => (rows.len() as f64).sqrt().round() as usize,
        };
        if n == 0 || n.pow(dim as u32) != rows.len() {
            return Err(Error::Parse(format!(
                "{} raster rows do not form a square grid",
                rows.len()
            )));
        }
        let mut values = vec![None; rows.len()];
        for r in &rows {
            let (i, j) = (r[0] as usize, if dim == 2 { r[1] as usize } else { 0 });
            if i >= n || j >= n.max(1) || (dim == 1 && j != 0) {
                return Err(Error::Parse(format!("pixel ({i}, {j}) outside {n}-raster")));
            }
            let m = if dim == 1 {
                Mat2::scalar(1, r[1])
            } else {
                Mat2::new(r[2], r[3], r[4], r[5])
            };
            values[i + n * j] = Some(m);
        }
        let values = values
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::Parse("raster has duplicate or missing pixels".into()))?;
        TensorField::new(dim, Mat2::ZERO, vec![Layer::Raster { n, values }])
    }

    pub fn from_raster_file(dim: usize, path: &Path) -> Result<TensorField> {
        Self::from_raster_csv(dim, std::fs::File::open(path)?)
    }
}

/// `A_η = A_per + b_η C_per`: a reference field and the perturbation switched
/// on in defect cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbedMaterial {
    base: TensorField,
    perturbation: TensorField,
    alpha: f64,
    beta: f64,
}

impl PerturbedMaterial {
    pub fn new(base: TensorField, perturbation: TensorField) -> Result<Self> {
        if base.dim() != perturbation.dim() {
            return Err(invalid("base and perturbation dimensions differ"));
        }
        let perturbed = base.plus(&perturbation)?;
        let alpha = base.coercivity().min(perturbed.coercivity());
        let beta = base.bound().max(perturbed.bound());
        if alpha <= 0.0 {
            return Err(invalid(format!(
                "material is not coercive (alpha = {alpha}); both A_per and A_per + C_per must be"
            )));
        }
        Ok(PerturbedMaterial {
            base,
            perturbation,
            alpha,
            beta,
        })
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn base(&self) -> &TensorField {
        &self.base
    }

    pub fn perturbation(&self) -> &TensorField {
        &self.perturbation
    }

    /// `A_per + C_per`.
    pub fn perturbed(&self) -> TensorField {
        self.base
            .plus(&self.perturbation)
            .expect("dimensions checked at construction")
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn transpose(&self) -> PerturbedMaterial {
        PerturbedMaterial {
            base: self.base.transpose(),
            perturbation: self.perturbation.transpose(),
            alpha: self.alpha,
            beta: self.beta,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.base.is_symmetric() && self.perturbation.is_symmetric()
    }
}

/// Lattice of inclusions, `A_per = bg·Id + inc·𝟙_{B(0,r)}·Id`, whose defects
/// erase the inclusion. In one dimension the ball is the interval `[-r, r]`.
pub fn material_one_dim(dim: usize, contrast_bg: f64, contrast_inc: f64, radius: f64) -> Result<PerturbedMaterial> {
    if !(radius > 0.0 && radius < 0.5) {
        return Err(invalid(format!(
            "inclusion radius must lie in (0, 1/2), got {radius}"
        )));
    }
    if !(contrast_bg > 0.0) || contrast_inc < 0.0 {
        return Err(invalid("contrasts must be positive"));
    }
    let region = Region::Ball { radius };
    let base = TensorField::new(
        dim,
        Mat2::scalar(dim, contrast_bg),
        vec![Layer::Indicator { region, value: Mat2::scalar(dim, contrast_inc) }],
    )?;
    let perturbation = TensorField::new(
        dim,
        Mat2::ZERO,
        vec![Layer::Indicator { region, value: Mat2::scalar(dim, -contrast_inc) }],
    )?;
    PerturbedMaterial::new(base, perturbation)
}

/// Material 1 in two dimensions.
pub fn material_one(contrast_bg: f64, contrast_inc: f64, radius: f64) -> Result<PerturbedMaterial> {
    material_one_dim(2, contrast_bg, contrast_inc, radius)
}

/// The 20/120 half-period laminate with stripes normal to `x₁`.
pub fn laminate(contrast_bg: f64, contrast_str: f64) -> Result<TensorField> {
    TensorField::new(
        2,
        Mat2::scalar(2, contrast_bg),
        vec![Layer::Indicator {
            region: Region::Slab { axis: 0, lo: 0.0, hi: 0.5 },
            value: Mat2::scalar(2, contrast_str),
        }],
    )
}

/// Material 2: a laminate whose defects rotate the lamination direction by 90°.
pub fn material_two(contrast_bg: f64, contrast_str: f64) -> Result<PerturbedMaterial> {
    if !(contrast_bg > 0.0 && contrast_str > 0.0) {
        return Err(invalid("contrasts must be positive"));
    }
    let stripe = |axis| Region::Slab { axis, lo: 0.0, hi: 0.5 };
    let base = laminate(contrast_bg, contrast_str)?;
    let perturbation = TensorField::new(
        2,
        Mat2::ZERO,
        vec![
            Layer::Indicator { region: stripe(0), value: Mat2::scalar(2, -contrast_str) },
            Layer::Indicator { region: stripe(1), value: Mat2::scalar(2, contrast_str) },
        ],
    )?;
    PerturbedMaterial::new(base, perturbation)
}

/// Two-phase checkerboard with `a` on the quadrants `y₁y₂ ≥ 0` and `b` elsewhere.
pub fn checkerboard(a: f64, b: f64) -> Result<TensorField> {
    TensorField::new(
        2,
        Mat2::scalar(2, b),
        vec![Layer::Indicator { region: Region::Quadrants, value: Mat2::scalar(2, a - b) }],
    )
}

/// The set of unit cells of the supercell `I_N` in which the perturbation is on.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DefectPattern {
    dim: usize,
    n: usize,
    mask: Vec<bool>,
}

impl DefectPattern {
    pub fn empty(dim: usize, n: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(invalid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if n % 2 == 0 {
            return Err(invalid(format!("supercell width N must be odd, got {n}")));
        }
        Ok(DefectPattern {
            dim,
            n,
            mask: vec![false; n.pow(dim as u32)],
        })
    }

    pub fn full(dim: usize, n: usize) -> Result<Self> {
        let mut p = Self::empty(dim, n)?;
        p.mask.iter_mut().for_each(|m| *m = true);
        Ok(p)
    }

    pub fn from_cells(dim: usize, n: usize, cells: &[Cell]) -> Result<Self> {
        let mut p = Self::empty(dim, n)?;
        for &k in cells {
            let idx = p
                .flat_index(k)
                .ok_or_else(|| invalid(format!("cell {k:?} lies outside T_{n}")))?;
            p.mask[idx] = true;
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half(&self) -> i64 {
        (self.n as i64 - 1) / 2
    }

    /// Index of `k ∈ 𝒯_N` in `0..Nᵈ`, first coordinate fastest.
    pub fn flat_index(&self, k: Cell) -> Option<usize> {
        let h = self.half();
        let ok = |c: i64| (-h..=h).contains(&c);
        if !ok(k[0]) || (self.dim == 1 && k[1] != 0) || (self.dim == 2 && !ok(k[1])) {
            return None;
        }
        let a = (k[0] + h) as usize;
        let b = if self.dim == 2 { (k[1] + h) as usize } else { 0 };
        Some(a + self.n * b)
    }

    pub fn cell_of_index(&self, idx: usize) -> Cell {
        let h = self.half();
        let a = (idx % self.n) as i64 - h;
        let b = if self.dim == 2 { (idx / self.n) as i64 - h } else { 0 };
        [a, b]
    }

    pub fn contains(&self, k: Cell) -> bool {
        self.flat_index(k).is_some_and(|i| self.mask[i])
    }

    #[inline]
    pub fn contains_index(&self, idx: usize) -> bool {
        self.mask[idx]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    pub fn cells(&self) -> Vec<Cell> {
        (0..self.mask.len())
            .filter(|&i| self.mask[i])
            .map(|i| self.cell_of_index(i))
            .collect()
    }

    /// Stable 64-bit FNV-1a digest of the pattern, used in diagnostics.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |b: u8| {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        };
        feed(self.dim as u8);
        for b in (self.n as u64).to_le_bytes() {
            feed(b);
        }
        for &m in &self.mask {
            feed(m as u8);
        }
        h
    }
}

fn pattern_rng(dim: usize, n: usize, seed: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(n as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(dim as u64).to_le_bytes());
    key[24..32].copy_from_slice(b"bernoull");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

#[inline]
fn to_unit_interval(u: u64) -> f64 {
    (u >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in `[0, 1)` attached to the flattened cell `flat` of a
/// `dim`-dimensional width-`n` supercell. A pure function of its arguments:
/// the generator is positioned at word `2·flat` of stream `stream`.
pub fn cell_uniform(dim: usize, n: usize, seed: u64, stream: u64, flat: usize) -> f64 {
    let mut rng = pattern_rng(dim, n, seed, stream);
    rng.set_word_pos(2 * flat as u128);
    to_unit_interval(rng.next_u64())
}

/// Independent Bernoulli(η) draw in every cell of `𝒯_N`.
pub fn sample_bernoulli_pattern(dim: usize, n: usize, eta: f64, seed: u64, stream: u64) -> Result<DefectPattern> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(invalid(format!("eta must lie in [0, 1], got {eta}")));
    }
    let mut pattern = DefectPattern::empty(dim, n)?;
    // Sequential reads visit words 2·flat, 2·flat+1 in order, matching `cell_uniform`.
    let mut rng = pattern_rng(dim, n, seed, stream);
    for m in pattern.mask.iter_mut() {
        *m = to_unit_interval(rng.next_u64()) < eta;
    }
    Ok(pattern)
}

/// The realized field `A_per + 𝟙[cell ∈ pattern]·C_per` on the supercell
/// `I_N = [-N/2, N/2]ᵈ`, extended `(Nℤ)ᵈ`-periodically.
#[derive(Clone, Debug)]
pub struct SupercellField {
    base: TensorField,
    perturbation: TensorField,
    pattern: DefectPattern,
}

pub fn realize(mat: &PerturbedMaterial, pattern: &DefectPattern) -> Result<SupercellField> {
    if mat.dim() != pattern.dim() {
        return Err(invalid("pattern and material dimensions differ"));
    }
    Ok(SupercellField {
        base: mat.base.clone(),
        perturbation: mat.perturbation.clone(),
        pattern: pattern.clone(),
    })
}

impl SupercellField {
    /// A purely periodic field replicated over `I_N`.
    pub fn periodic(field: &TensorField, n: usize) -> Result<SupercellField> {
        Ok(SupercellField {
            base: field.clone(),
            perturbation: TensorField::zero(field.dim())?,
            pattern: DefectPattern::empty(field.dim(), n)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn n(&self) -> usize {
        self.pattern.n()
    }

    pub fn base(&self) -> &TensorField {
        &self.base
    }

    pub fn perturbation(&self) -> &TensorField {
        &self.perturbation
    }

    pub fn pattern(&self) -> &DefectPattern {
        &self.pattern
    }

    /// Unit cell containing `x`, after folding into `I_N`.
    pub fn cell_of(&self, x: Vec2) -> Cell {
        let n = self.n() as i64;
        let h = self.pattern.half();
        let fold = |t: f64| {
            let k = (t + 0.5).floor() as i64;
            (k + h).rem_euclid(n) - h
        };
        [fold(x[0]), if self.dim() == 2 { fold(x[1]) } else { 0 }]
    }

    pub fn eval(&self, x: Vec2) -> Mat2 {
        let a = self.base.eval(x);
        if self.pattern.contains(self.cell_of(x)) {
            a + self.perturbation.eval(x)
        } else {
            a
        }
    }

    pub fn transpose(&self) -> SupercellField {
        SupercellField {
            base: self.base.transpose(),
            perturbation: self.perturbation.transpose(),
            pattern: self.pattern.clone(),
        }
    }
}

/// Structured-text material description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MaterialSpec {
    Lattice {
        bg: f64,
        inc: f64,
        radius: f64,
        #[serde(default = "default_dim")]
        dim: usize,
    },
    Laminate { bg: f64, inc: f64 },
    Checkerboard { a: f64, b: f64 },
    CustomGrid {
        #[serde(default = "default_dim")]
        dim: usize,
        base: std::path::PathBuf,
        #[serde(default)]
        perturbation: Option<std::path::PathBuf>,
    },
    /// One-dimensional piecewise-constant `a_per` and `c_per` on shared
    /// breakpoints from `-1/2` to `1/2`.
    Piecewise1d {
        breakpoints: Vec<f64>,
        a: Vec<f64>,
        c: Vec<f64>,
    },
}

fn default_dim() -> usize {
    2
}

impl MaterialSpec {
    pub fn build(&self) -> Result<PerturbedMaterial> {
        match self {
            MaterialSpec::Lattice { bg, inc, radius, dim } => material_one_dim(*dim, *bg, *inc, *radius),
            MaterialSpec::Laminate { bg, inc } => material_two(*bg, *inc),
            MaterialSpec::Checkerboard { a, b } => {
                PerturbedMaterial::new(checkerboard(*a, *b)?, TensorField::zero(2)?)
            }
            MaterialSpec::CustomGrid { dim, base, perturbation } => {
                let base = TensorField::from_raster_file(*dim, base)?;
                let pert = match perturbation {
                    Some(p) => TensorField::from_raster_file(*dim, p)?,
                    None => TensorField::zero(*dim)?,
                };
                PerturbedMaterial::new(base, pert)
            }
            MaterialSpec::Piecewise1d { breakpoints, a, c } => {
                let base = piecewise_1d_field(breakpoints, a)?;
                let pert = piecewise_1d_field(breakpoints, c)?;
                PerturbedMaterial::new(base, pert)
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            MaterialSpec::Lattice { dim, .. } | MaterialSpec::CustomGrid { dim, .. } => *dim,
            MaterialSpec::Laminate { .. } | MaterialSpec::Checkerboard { .. } => 2,
            MaterialSpec::Piecewise1d { .. } => 1,
        }
    }
}

/// A one-dimensional field taking `values[i]` on `[breakpoints[i], breakpoints[i+1])`.
pub fn piecewise_1d_field(breakpoints: &[f64], values: &[f64]) -> Result<TensorField> {
    validate_breakpoints(breakpoints, values.len())?;
    let layers = breakpoints
        .windows(2)
        .zip(values)
        .filter(|(_, &v)| v != 0.0)
        .map(|(w, &v)| Layer::Indicator {
            region: Region::Slab { axis: 0, lo: w[0], hi: w[1] },
            value: Mat2::scalar(1, v),
        })
        .collect();
    TensorField::new(1, Mat2::ZERO, layers)
}

pub(crate) fn validate_breakpoints(breakpoints: &[f64], intervals: usize) -> Result<()> {
    if breakpoints.len() != intervals + 1 || intervals == 0 {
        return Err(invalid(format!(
            "{} breakpoints cannot bound {intervals} intervals",
            breakpoints.len()
        )));
    }
    if breakpoints[0] != -0.5 || *breakpoints.last().unwrap() != 0.5 {
        return Err(invalid("breakpoints must run from -1/2 to 1/2"));
    }
    if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("breakpoints must be strictly increasing"));
    }
    Ok(())
}
