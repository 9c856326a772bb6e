//! Benchmark driver: method × size sweeps on the di-vacancy and micro-crack
//! problems, error tables, slope fits and plot data.

mod output;
mod run;

pub use output::{emit_plotdata, fit_slope, read_plotdata, PlotData, ResultRow, ResultTable, COLUMNS};
pub use run::{
    patch_strains, reference_solution, run_experiment, run_k, solve_coefficients, Coefficients, Setup, THREADS_VAR,
};

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::CouplingMethod;
use crate::lattice::Mat2;
use crate::potential::EamParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Problem {
    /// Two adjacent vacancies under isotropic stretch and shear.
    Divacancy,
    /// A row of eleven vacancies under tension and shear.
    Microcrack11,
}

impl Problem {
    pub fn name(self) -> &'static str {
        match self {
            Problem::Divacancy => "divacancy",
            Problem::Microcrack11 => "microcrack11",
        }
    }

    pub fn defect_size(self) -> usize {
        match self {
            Problem::Divacancy => 2,
            Problem::Microcrack11 => 11,
        }
    }

    /// Far-field deformation `B` for the given loading parameters.
    pub fn loading(self, f0: &Mat2, load: &Loading) -> Mat2 {
        match self {
            Problem::Divacancy => Mat2::new(1.0 + load.s, load.gamma_ii, 0.0, 1.0 + load.s) * f0,
            Problem::Microcrack11 => Mat2::new(1.0, load.gamma_ii, 0.0, 1.0 + load.gamma_i) * f0,
        }
    }
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "divacancy" => Ok(Problem::Divacancy),
            "microcrack11" | "microcrack" => Ok(Problem::Microcrack11),
            other => Err(Error::Config(format!("unknown problem `{other}`"))),
        }
    }
}

/// Strain parameters of the two loadings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Loading {
    /// Isotropic stretch (di-vacancy).
    pub s: f64,
    /// Tensile stretch (micro-crack).
    pub gamma_i: f64,
    /// Shear (both problems).
    pub gamma_ii: f64,
}

impl Default for Loading {
    fn default() -> Self {
        Self { s: 0.03, gamma_i: 0.03, gamma_ii: 0.03 }
    }
}

/// How the interface coefficients are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fit {
    /// Identity coefficients on full Voronoi cells: the original energy-based
    /// quasicontinuum method, which has ghost forces.
    Qce,
    /// ℓ¹-minimal solution of the consistency equations.
    L1,
    /// Minimum-norm solution of the consistency equations.
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Atomistic model on the same domain.
    Atm,
    Coupled {
        coupling: CouplingMethod,
        fit: Fit,
        stabilised: bool,
    },
}

impl Method {
    pub const QCE: Method = Method::Coupled { coupling: CouplingMethod::M1, fit: Fit::Qce, stabilised: false };

    pub fn all() -> Vec<Method> {
        let mut out = vec![Method::Atm, Method::QCE];
        for coupling in [CouplingMethod::M1, CouplingMethod::M2] {
            for fit in [Fit::L2, Fit::L1] {
                for stabilised in [false, true] {
                    out.push(Method::Coupled { coupling, fit, stabilised });
                }
            }
        }
        out
    }

    /// Whether the method solves the consistency equations.
    pub fn is_grac(self) -> bool {
        matches!(self, Method::Coupled { fit: Fit::L1 | Fit::L2, .. })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Method::Atm => f.write_str("ATM"),
            Method::Coupled { fit: Fit::Qce, .. } => f.write_str("QCE"),
            Method::Coupled { coupling, fit, stabilised } => {
                let m = if coupling == CouplingMethod::M1 { 1 } else { 2 };
                let p = if fit == Fit::L1 { 1 } else { 2 };
                write!(f, "M{m}-L{p}-S{}", u8::from(stabilised))
            }
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown method `{s}`; expected ATM, QCE or M{{1,2}}-L{{1,2}}-S{{0,1}}"));
        match s {
            "ATM" => return Ok(Method::Atm),
            "QCE" => return Ok(Method::QCE),
            _ => {}
        }
        let parts: Vec<&str> = s.split('-').collect();
        let [m, l, k] = parts[..] else { return Err(bad()) };
        let coupling = match m {
            "M1" => CouplingMethod::M1,
            "M2" => CouplingMethod::M2,
            _ => return Err(bad()),
        };
        let fit = match l {
            "L1" => Fit::L1,
            "L2" => Fit::L2,
            _ => return Err(bad()),
        };
        let stabilised = match k {
            "S0" => false,
            "S1" => true,
            _ => return Err(bad()),
        };
        Ok(Method::Coupled { coupling, fit, stabilised })
    }
}

/// One experiment: a problem, the methods to compare and the sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub problem: Problem,
    pub methods: Vec<Method>,
    /// Atomistic radii `K`; the domain has `K²` layers.
    pub k_list: Vec<u32>,
    /// Seeds the random deformations of the patch test.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub hop_radius: u32,
    /// Stabilisation weight of the `S1` methods.
    pub kappa: f64,
    /// The reference domain has `n_ref_factor · max(K)²` layers.
    pub n_ref_factor: u32,
    pub grad_tol: f64,
    pub ref_grad_tol: f64,
    pub loading: Loading,
    pub params: EamParams,
    /// Record wall times (which makes the CSV non-reproducible).
    pub timing: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            problem: Problem::Divacancy,
            methods: Method::all(),
            k_list: vec![3, 4, 5, 6, 8],
            seed: 1,
            output_dir: PathBuf::from("results"),
            hop_radius: 2,
            kappa: 1.0,
            n_ref_factor: 4,
            grad_tol: 1e-8,
            ref_grad_tol: 1e-10,
            loading: Loading::default(),
            params: EamParams::default(),
            timing: false,
        }
    }
}

/// Keys accepted in a configuration file, with their meaning.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("problem", "divacancy | microcrack11"),
    ("methods", "comma-separated ids: ATM, QCE, M{1,2}-L{1,2}-S{0,1} (default: all)"),
    ("K_list", "comma-separated atomistic radii (default 3,4,5,6,8)"),
    ("seed", "integer seed for the random patch-test deformations (default 1)"),
    ("output_dir", "directory for CSV and plot files (default results)"),
    ("hop_radius", "interaction range in nearest-neighbour hops, 1 or 2 (default 2)"),
    ("kappa", "stabilisation weight of the S1 methods (default 1)"),
    ("n_ref_factor", "reference domain size as a multiple of max(K)^2 (default 4)"),
    ("grad_tol", "gradient tolerance of the coupled solves (default 1e-8)"),
    ("ref_grad_tol", "gradient tolerance of the reference solve (default 1e-10)"),
    ("s", "isotropic stretch of the di-vacancy loading (default 0.03)"),
    ("gamma_i", "tensile stretch of the micro-crack loading (default 0.03)"),
    ("gamma_ii", "shear of both loadings (default 0.03)"),
    ("eam_a", "pair potential stiffness a (default 4.4)"),
    ("eam_b", "electron density decay b (default 3)"),
    ("eam_c", "embedding strength c (default 5)"),
    ("eam_rho0", "embedding reference density (default 6 exp(-b))"),
    ("timing", "true to record wall times (default false)"),
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse_value(key, s)).collect()
}

impl ExperimentSpec {
    /// Parses `key = value` lines; `#` starts a comment. Relative output
    /// directories are kept as given.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = Self::default();
        let mut rho0 = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "problem" => spec.problem = value.parse()?,
                "methods" => spec.methods = parse_list(key, value)?,
                "K_list" => spec.k_list = parse_list(key, value)?,
                "seed" => spec.seed = parse_value(key, value)?,
                "output_dir" => spec.output_dir = PathBuf::from(value),
                "hop_radius" => spec.hop_radius = parse_value(key, value)?,
                "kappa" => spec.kappa = parse_value(key, value)?,
                "n_ref_factor" => spec.n_ref_factor = parse_value(key, value)?,
                "grad_tol" => spec.grad_tol = parse_value(key, value)?,
                "ref_grad_tol" => spec.ref_grad_tol = parse_value(key, value)?,
                "s" => spec.loading.s = parse_value(key, value)?,
                "gamma_i" => spec.loading.gamma_i = parse_value(key, value)?,
                "gamma_ii" => spec.loading.gamma_ii = parse_value(key, value)?,
                "eam_a" => spec.params.a = parse_value(key, value)?,
                "eam_b" => spec.params.b = parse_value(key, value)?,
                "eam_c" => spec.params.c = parse_value(key, value)?,
                "eam_rho0" => rho0 = Some(parse_value(key, value)?),
                "timing" => spec.timing = parse_value(key, value)?,
                other => return Err(Error::Config(format!("line {}: unknown key `{other}`", lineno + 1))),
            }
        }
        spec.params.rho0 = rho0.unwrap_or(6.0 * (-spec.params.b).exp());
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("no methods given".into()));
        }
        if self.k_list.is_empty() {
            return Err(Error::Config("K_list is empty".into()));
        }
        let mut sorted = self.k_list.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("K_list has duplicates".into()));
        }
        let r = self.hop_radius;
        if !matches!(r, 1 | 2) {
            return Err(Error::Config(format!("hop_radius = {r} must be 1 or 2")));
        }
        for &k in &self.k_list {
            if k < r + 1 || k * k < k + 3 * r {
                return Err(Error::Config(format!("K = {k} is too small for hop radius {r}")));
            }
        }
        if self.n_ref_factor < 1 {
            return Err(Error::Config("n_ref_factor must be at least 1".into()));
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::Config(format!("kappa = {} must be non-negative", self.kappa)));
        }
        let p = &self.params;
        if ![p.a, p.b, p.c, p.rho0].iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::Config("EAM parameters must be positive".into()));
        }
        if !(self.grad_tol > 0.0 && self.ref_grad_tol > 0.0) {
            return Err(Error::Config("gradient tolerances must be positive".into()));
        }
        Ok(())
    }

    /// Layers of the reference domain.
    pub fn reference_layers(&self) -> u32 {
        let kmax = self.k_list.iter().copied().max().unwrap_or(0);
        self.n_ref_factor * kmax * kmax
    }
}
