use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use super::{Method, Problem};
use crate::error::{Error, Result};

/// CSV header, in order.
pub const COLUMNS: [&str; 11] =
    ["problem", "method", "K", "DOF", "H1", "W1inf", "Eerr", "ghost_force_max", "min_eig", "wall_time", "status"];

/// One method at one size. Quantities that were not computed are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub problem: Problem,
    pub method: Method,
    pub k: u32,
    pub dof: Option<usize>,
    pub h1: f64,
    pub w1inf: f64,
    pub eerr: f64,
    /// Largest ghost force at the far-field deformation, absolute.
    pub ghost_force_max: f64,
    /// Smallest Hessian eigenvalue at the computed equilibrium.
    pub min_eig: f64,
    pub wall_time: Option<f64>,
    /// `ok` or `error:<kind>`.
    pub status: String,
}

impl ResultRow {
    pub fn new(problem: Problem, method: Method, k: u32) -> Self {
        Self {
            problem,
            method,
            k,
            dof: None,
            h1: f64::NAN,
            w1inf: f64::NAN,
            eerr: f64::NAN,
            ghost_force_max: f64::NAN,
            min_eig: f64::NAN,
            wall_time: None,
            status: "ok".into(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    /// Numeric value of a column by its CSV name.
    pub fn value(&self, column: &str) -> Result<f64> {
        Ok(match column {
            "K" => f64::from(self.k),
            "DOF" => self.dof.map_or(f64::NAN, |d| d as f64),
            "H1" => self.h1,
            "W1inf" => self.w1inf,
            "Eerr" => self.eerr,
            "ghost_force_max" => self.ghost_force_max,
            "min_eig" => self.min_eig,
            "wall_time" => self.wall_time.unwrap_or(f64::NAN),
            other => return Err(Error::Config(format!("`{other}` is not a numeric column"))),
        })
    }
}

fn float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.12e}")
    }
}

fn parse_float(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Config(format!("`{s}` is not a number")))
}

/// Rows of one experiment, method-major.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(ResultRow::is_ok)
    }

    /// Methods in order of first appearance.
    pub fn methods(&self) -> Vec<Method> {
        let mut out: Vec<Method> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.method) {
                out.push(r.method);
            }
        }
        out
    }

    /// Sorted distinct sizes.
    pub fn sizes(&self) -> Vec<u32> {
        let mut k: Vec<u32> = self.rows.iter().map(|r| r.k).collect();
        k.sort_unstable();
        k.dedup();
        k
    }

    pub fn row(&self, method: Method, k: u32) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.method == method && r.k == k)
    }

    /// `(DOF, value)` pairs of `column` for `method`, ordered by `K`.
    pub fn series(&self, method: Method, column: &str) -> Result<Vec<(f64, f64)>> {
        let mut rows: Vec<&ResultRow> = self.rows.iter().filter(|r| r.method == method).collect();
        rows.sort_by_key(|r| r.k);
        rows.iter().map(|r| Ok((r.value("DOF")?, r.value(column)?))).collect()
    }

    /// Log-log slope of `column` against DOF for `method`.
    pub fn fit_slope(&self, method: Method, column: &str) -> Result<f64> {
        fit_slope(&self.series(method, column)?)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Internal(format!("csv: {e}"));
        w.write_record(COLUMNS).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.problem.name().to_string(),
                r.method.to_string(),
                r.k.to_string(),
                r.dof.map_or_else(|| "nan".into(), |d| d.to_string()),
                float(r.h1),
                float(r.w1inf),
                float(r.eerr),
                float(r.ghost_force_max),
                float(r.min_eig),
                r.wall_time.map_or_else(|| "nan".into(), float),
                r.status.clone(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Internal(format!("csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let header = rd.headers().map_err(|e| Error::Config(format!("csv: {e}")))?;
        if header.iter().ne(COLUMNS) {
            return Err(Error::Config(format!(
                "unexpected CSV header `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| Error::Config(format!("csv: {e}")))?;
            let f = |i: usize| rec.get(i).unwrap_or("");
            let opt = |s: &str| -> Result<Option<f64>> {
                if s == "nan" {
                    Ok(None)
                } else {
                    parse_float(s).map(Some)
                }
            };
            rows.push(ResultRow {
                problem: f(0).parse()?,
                method: f(1).parse()?,
                k: f(2).parse().map_err(|_| Error::Config(format!("bad K `{}`", f(2))))?,
                dof: match f(3) {
                    "nan" => None,
                    s => Some(s.parse().map_err(|_| Error::Config(format!("bad DOF `{s}`")))?),
                },
                h1: parse_float(f(4))?,
                w1inf: parse_float(f(5))?,
                eerr: parse_float(f(6))?,
                ghost_force_max: parse_float(f(7))?,
                min_eig: parse_float(f(8))?,
                wall_time: opt(f(9))?,
                status: f(10).to_string(),
            });
        }
        Ok(Self { rows })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

/// Least-squares slope of `log y` against `log x`. Points with non-positive
/// or non-finite coordinates are skipped.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| x.is_finite() && y.is_finite() && *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 3 {
        return Err(Error::InsufficientData(format!("{} usable points, need at least 3", logs.len())));
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 1e-24) {
        return Err(Error::InsufficientData("all DOF values coincide".into()));
    }
    Ok(sxy / sxx)
}

/// Contents of one plot-data file.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub methods: Vec<String>,
    pub dof: Vec<f64>,
    /// One row per size, one entry per method.
    pub values: Vec<Vec<f64>>,
}

/// Norm columns that get a plot file each.
const PLOT_COLUMNS: [&str; 3] = ["H1", "W1inf", "Eerr"];

/// Writes `{problem}_{norm}.dat` into `dir` for each error norm: a `#`
/// header naming the methods, then one row per `K` holding the DOF count
/// and each method's error (`nan` where missing). The DOF column is that of
/// the coupled discretisation, or of the atomistic one if no coupled
/// method was run.
pub fn emit_plotdata(table: &ResultTable, dir: &Path) -> Result<Vec<PathBuf>> {
    let Some(first) = table.rows.first() else {
        return Err(Error::InsufficientData("empty result table".into()));
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let methods = table.methods();
    let mut paths = Vec::new();
    for column in PLOT_COLUMNS {
        let path = dir.join(format!("{}_{column}.dat", first.problem.name()));
        let mut text = String::from("# DOF");
        for m in &methods {
            text.push(' ');
            text.push_str(&m.to_string());
        }
        text.push('\n');
        for k in table.sizes() {
            let dof = methods
                .iter()
                .filter(|m| **m != Method::Atm)
                .chain(std::iter::once(&Method::Atm))
                .find_map(|&m| table.row(m, k).and_then(|r| r.dof))
                .map_or(f64::NAN, |d| d as f64);
            text.push_str(&format!("{dof:e}"));
            for &m in &methods {
                let v = table.row(m, k).map_or(Ok(f64::NAN), |r| r.value(column))?;
                text.push_str(&format!(" {v:e}"));
            }
            text.push('\n');
        }
        let mut file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        file.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn read_plotdata(path: &Path) -> Result<PlotData> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Config(format!("{} is empty", path.display())))?;
    let mut names = header.trim_start_matches('#').split_whitespace();
    if names.next() != Some("DOF") {
        return Err(Error::Config(format!("{}: header must start with DOF", path.display())));
    }
    let methods: Vec<String> = names.map(str::to_string).collect();
    let mut dof = Vec::new();
    let mut values = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let nums = line.split_whitespace().map(parse_float).collect::<Result<Vec<f64>>>()?;
        if nums.len() != methods.len() + 1 {
            return Err(Error::Config(format!("{}: row has {} fields", path.display(), nums.len())));
        }
        dof.push(nums[0]);
        values.push(nums[1..].to_vec());
    }
    Ok(PlotData { methods, dof, values })
}
