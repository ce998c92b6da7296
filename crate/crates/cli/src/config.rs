//! Run configuration: a TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use weakhom::defects::DEFAULT_TWO_DEFECT_BUDGET;
use weakhom::homogenize::DEFAULT_DENSITY;
use weakhom::stochastic::DEFAULT_REALIZATIONS;
use weakhom::{Bc, Discretization, MaterialSpec};

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub material: MaterialSpec,
    pub eta: f64,
    pub n: usize,
    pub n_list: Vec<usize>,
    pub density: usize,
    pub bc: Bc,
    pub realizations: usize,
    pub seed: u64,
    pub order: u8,
    pub out: PathBuf,
    pub budget: usize,
    pub budget_override: bool,
    pub threads: Option<usize>,
    /// Record wall times in outputs; off by default so reruns are identical.
    pub record_time: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            material: builtin_material("material1").expect("builtin"),
            eta: 0.1,
            n: 21,
            n_list: Vec::new(),
            density: DEFAULT_DENSITY,
            bc: Bc::Periodic,
            realizations: DEFAULT_REALIZATIONS,
            seed: 2024,
            order: 1,
            out: PathBuf::from("out"),
            budget: DEFAULT_TWO_DEFECT_BUDGET,
            budget_override: false,
            threads: None,
            record_time: false,
        }
    }
}

/// Flag values that replace the corresponding config entries when present.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub material: Option<String>,
    pub eta: Option<f64>,
    pub n: Option<usize>,
    pub n_list: Option<Vec<usize>>,
    pub density: Option<usize>,
    pub bc: Option<Bc>,
    pub realizations: Option<usize>,
    pub seed: Option<u64>,
    pub order: Option<u8>,
    pub out: Option<PathBuf>,
    pub budget: Option<usize>,
    pub budget_override: bool,
    pub threads: Option<usize>,
    pub record_time: bool,
}

/// Builtin materials: `material1` (alias `lattice`), `material2` (alias
/// `laminate`), `checkerboard` and `oned`.
pub fn builtin_material(name: &str) -> Option<MaterialSpec> {
    Some(match name {
        "material1" | "lattice" => MaterialSpec::Lattice { bg: 20.0, inc: 100.0, radius: 0.3, dim: 2 },
        "material2" | "laminate" => MaterialSpec::Laminate { bg: 20.0, inc: 100.0 },
        "checkerboard" => MaterialSpec::Checkerboard { a: 20.0, b: 120.0 },
        "oned" => MaterialSpec::Piecewise1d {
            breakpoints: vec![-0.5, 0.0, 0.5],
            a: vec![20.0, 120.0],
            c: vec![0.0, -100.0],
        },
        _ => return None,
    })
}

/// A builtin name or the path of a TOML file holding a material table.
pub fn resolve_material(arg: &str) -> Result<MaterialSpec, CliError> {
    if let Some(m) = builtin_material(arg) {
        return Ok(m);
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(CliError::Config(format!(
            "unknown material '{arg}': expected material1, material2, checkerboard, oned or a TOML file"
        )));
    }
    let text = std::fs::read_to_string(path)?;
    let mut spec: MaterialSpec = toml::from_str(&text).map_err(|e| CliError::Config(format!("{arg}: {e}")))?;
    if let MaterialSpec::CustomGrid { base, perturbation, .. } = &mut spec {
        let dir = path.parent().unwrap_or(Path::new("."));
        *base = dir.join(&*base);
        if let Some(p) = perturbation {
            *p = dir.join(&*p);
        }
    }
    Ok(spec)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(m) = &o.material {
            self.material = resolve_material(m)?;
        }
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = o.$f.clone() { self.$f = v; } )* };
        }
        set!(eta, n, n_list, density, bc, realizations, seed, order, out, budget);
        if o.threads.is_some() {
            self.threads = o.threads;
        }
        self.budget_override |= o.budget_override;
        self.record_time |= o.record_time;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        for &n in std::iter::once(&self.n).chain(&self.n_list) {
            if n % 2 == 0 {
                return bad(format!("N must be odd, got {n}"));
            }
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad(format!("eta must lie in [0, 1], got {}", self.eta));
        }
        if self.density < 2 {
            return bad(format!("density must be at least 2, got {}", self.density));
        }
        if !(1..=2).contains(&self.order) {
            return bad(format!("order must be 1 or 2, got {}", self.order));
        }
        if self.realizations == 0 {
            return bad("realizations must be at least 1".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        Ok(())
    }

    pub fn disc(&self) -> Discretization {
        Discretization::with_density(self.density)
    }

    /// Widths to sweep: the N-list when given, otherwise the single N.
    pub fn widths(&self) -> Vec<usize> {
        if self.n_list.is_empty() {
            vec![self.n]
        } else {
            self.n_list.clone()
        }
    }

    /// SHA-256 over the canonical JSON of every field that affects results
    /// (output directory and pool size excluded).
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("out");
            m.remove("threads");
            m.remove("record_time");
        }
        let digest = Sha256::digest(v.to_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
