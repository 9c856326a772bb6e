use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use grac::bench::{
    emit_plotdata, patch_strains, run_experiment, solve_coefficients, ExperimentSpec, Fit, Method, ResultTable, Setup,
    CONFIG_KEYS, THREADS_VAR,
};
use grac::consistency::{verify_patch_tests, write_coefficients};
use grac::geometry::AcGeometry;
use grac::lattice::ReferenceConfig;

/// Ghost-force-free atomistic-to-continuum coupling benchmarks.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the method x size sweep; writes `<problem>.csv` and plot data.
    Run {
        /// Experiment config (key = value lines).
        config: PathBuf,
    },
    /// Check the force and energy patch tests of every fitted method.
    Patchtest { config: PathBuf },
    /// Solve the consistency equations and dump the coefficients.
    Coeffs { config: PathBuf },
    /// Fit the log-log slope of a column against DOF for each method.
    Slope {
        csv: PathBuf,
        /// One of H1, W1inf, Eerr, ghost_force_max, min_eig, wall_time.
        column: String,
    },
}

fn config_help() -> String {
    let mut s = String::from("Config keys (one `key = value` per line, `#` starts a comment):\n");
    for (k, v) in CONFIG_KEYS {
        s.push_str(&format!("  {k:<14} {v}\n"));
    }
    s.push_str(&format!("\nWorker threads: set {THREADS_VAR} (default: all cores)."));
    s
}

fn create_dir(dir: &Path) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))
}

fn run(config: &Path) -> Result<bool, String> {
    let spec = ExperimentSpec::from_file(config).map_err(|e| e.to_string())?;
    let table = run_experiment(&spec).map_err(|e| e.to_string())?;
    create_dir(&spec.output_dir)?;
    let csv = spec.output_dir.join(format!("{}.csv", spec.problem.name()));
    table.write_csv(&csv).map_err(|e| e.to_string())?;
    let plots = emit_plotdata(&table, &spec.output_dir).map_err(|e| e.to_string())?;
    println!(
        "{:<10} {:>3} {:>7} {:>12} {:>12} {:>12} {:>12}  status",
        "method", "K", "DOF", "H1", "W1inf", "Eerr", "min_eig"
    );
    for r in &table.rows {
        println!(
            "{:<10} {:>3} {:>7} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}  {}",
            r.method.to_string(),
            r.k,
            r.dof.map_or_else(|| "-".into(), |d| d.to_string()),
            r.h1,
            r.w1inf,
            r.eerr,
            r.min_eig,
            r.status
        );
    }
    println!("wrote {}", csv.display());
    for p in plots {
        println!("wrote {}", p.display());
    }
    Ok(table.all_ok())
}

/// Geometries for each size of the spec, with the shared setup.
fn geometries(spec: &ExperimentSpec) -> Result<(Setup, Vec<(u32, AcGeometry)>), String> {
    let setup = Setup::new(spec).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for &k in &spec.k_list {
        let config = ReferenceConfig::build(spec.problem.defect_size(), k * k).map_err(|e| e.to_string())?;
        out.push((k, AcGeometry::build(config, k, setup.stencil.clone()).map_err(|e| e.to_string())?));
    }
    Ok((setup, out))
}

fn fitted_methods(spec: &ExperimentSpec) -> Vec<Method> {
    spec.methods.iter().copied().filter(|m| *m != Method::Atm).collect()
}

fn patchtest(config: &Path) -> Result<bool, String> {
    let spec = ExperimentSpec::from_file(config).map_err(|e| e.to_string())?;
    let (setup, geoms) = geometries(&spec)?;
    let strains = patch_strains(&setup.f0, spec.seed);
    let mut all = true;
    println!("{:<10} {:>3} {:>14} {:>14}  result", "method", "K", "ghost/scale", "energy");
    for (k, geom) in &geoms {
        for m in fitted_methods(&spec) {
            let Method::Coupled { coupling, fit, stabilised } = m else { continue };
            let kappa = if stabilised { spec.kappa } else { 0.0 };
            let outcome = solve_coefficients(geom, coupling, fit)
                .and_then(|c| verify_patch_tests(&c.coeffs, geom, &c.volumes, setup.params, kappa, &strains));
            match outcome {
                Ok(rep) => {
                    let ghost = rep.samples.iter().map(|s| s.ghost_force / s.force_scale).fold(0.0, f64::max);
                    let energy = rep.samples.iter().map(|s| s.energy_mismatch).fold(0.0, f64::max);
                    let expect = fit != Fit::Qce;
                    all &= rep.pass == expect;
                    let verdict = match (rep.pass, expect) {
                        (true, true) => "pass",
                        (false, false) => "fails (expected)",
                        _ => "FAIL",
                    };
                    println!("{:<10} {k:>3} {ghost:>14.3e} {energy:>14.3e}  {verdict}", m.to_string());
                }
                Err(e) => {
                    all = false;
                    println!("{:<10} {k:>3}  error: {e}", m.to_string());
                }
            }
        }
    }
    Ok(all)
}

fn coeffs(config: &Path) -> Result<bool, String> {
    let spec = ExperimentSpec::from_file(config).map_err(|e| e.to_string())?;
    let (_, geoms) = geometries(&spec)?;
    create_dir(&spec.output_dir)?;
    let mut seen = Vec::new();
    for (k, geom) in &geoms {
        for m in fitted_methods(&spec) {
            let Method::Coupled { coupling, fit, .. } = m else { continue };
            if fit == Fit::Qce || seen.contains(&(*k, coupling, fit)) {
                continue;
            }
            seen.push((*k, coupling, fit));
            let c = solve_coefficients(geom, coupling, fit).map_err(|e| e.to_string())?;
            let tag = m.to_string();
            let tag = tag.rsplit_once('-').map_or(tag.as_str(), |(head, _)| head);
            let path = spec.output_dir.join(format!("coeffs_{}_K{k}_{tag}.txt", spec.problem.name()));
            write_coefficients(&c.coeffs, &path).map_err(|e| e.to_string())?;
            match &c.lp {
                Some(lp) => println!(
                    "wrote {} ({:.2}s, objective {:.6e}, gap {:.1e})",
                    path.display(),
                    c.seconds,
                    lp.objective,
                    lp.duality_gap
                ),
                None => println!("wrote {} ({:.2}s)", path.display(), c.seconds),
            }
        }
    }
    Ok(true)
}

fn slope(csv: &Path, column: &str) -> Result<bool, String> {
    let table = ResultTable::read_csv(csv).map_err(|e| e.to_string())?;
    let mut all = true;
    for m in table.methods() {
        match table.fit_slope(m, column) {
            Ok(s) => println!("{:<10} {s:.4}", m.to_string()),
            Err(e) => {
                all = false;
                println!("{:<10} {e}", m.to_string());
            }
        }
    }
    Ok(all)
}

fn main() -> ExitCode {
    let matches = Cli::command().after_long_help(config_help()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let outcome = match &cli.command {
        Command::Run { config } => run(config),
        Command::Patchtest { config } => patchtest(config),
        Command::Coeffs { config } => coeffs(config),
        Command::Slope { csv, column } => slope(csv, column),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
