//! Command-line interface: growth indices, norms of stored fields, solves
//! from problem manifests, suite verification, and the sharpness probe.
//!
//! Exit codes: 0 all good, 1 check failure, 2 configuration error.

use clap::{Parser, Subcommand};
use orlicz_lab::{descriptor, fieldfile, manifest, render, runner};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "orlicz-lab", about = "numerical laboratory for measure-data Orlicz problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Growth indices and doubling constant of a modular function.
    Indices {
        /// e.g. `power:p=2`, `zygmund:p=2,alpha=1`, `table:<path>`
        descriptor: String,
    },
    /// Evaluate a norm of a stored field.
    Norm {
        /// e.g. `lorentz:q=1.2,s=2`, `morrey:q=1.5,theta=2.5,averaged`
        spec: String,
        /// binary field file
        field: PathBuf,
        /// `all`, `ball:...`, `box:lo/hi`, `annulus:...`
        #[arg(long, default_value = "all")]
        region: String,
    },
    /// Solve a problem manifest and write the result fields.
    Solve { manifest: PathBuf },
    /// Run a verification suite manifest.
    Verify {
        manifest: PathBuf,
        /// write the machine-readable report here
        #[arg(long)]
        csv: Option<PathBuf>,
        /// print per-check details
        #[arg(long)]
        details: bool,
    },
    /// Run the measure-data sharpness probe from a manifest with a
    /// `[probe]` section.
    ProbeSharpness { manifest: PathBuf },
}

fn main() -> ExitCode {
    match run() {
        Ok(all_pass) => {
            if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run() -> orlicz_lab::Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Indices { descriptor: text } => {
            let f = descriptor::parse_modular(&text, Path::new("."))?;
            let small = f.estimate_indices(orlicz_core::young::IndexLevel::SmallG)?;
            let big = f.estimate_indices(orlicz_core::young::IndexLevel::BigG)?;
            println!("modular      {}", f.describe());
            println!("i_g, s_g     {:.9}, {:.9}", small.i_lower, small.s_upper);
            println!("i_G, s_G     {:.9}, {:.9}", big.i_lower, big.s_upper);
            println!("delta2       {:.9e}", f.delta2_constant());
            println!(
                "sample       t in [{:.1e}, {:.1e}], {} points",
                big.sample_range.0, big.sample_range.1, big.sample_count
            );
            Ok(true)
        }
        Command::Norm { spec, field, region } => {
            let spec_parsed = descriptor::parse_norm_spec(&spec)?;
            let f = fieldfile::read_field(&field)?;
            let f = if f.ncomp() == 1 { f } else { f.magnitude() };
            let region_parsed = descriptor::parse_region(&region, f.grid().dim())?;
            let cfg = orlicz_core::norms::BallFamilyConfig::default();
            let v = orlicz_core::norms::norm(&f, &spec_parsed, &region_parsed, &cfg)?;
            // layer-cake integration is exact for nodal fields; the error
            // column reports the ladder-truncation flag for ball suprema
            let err = if v.ladder_truncated { f.grid().h() } else { 0.0 };
            let quote = |s: &str| {
                if s.contains(',') {
                    format!("\"{s}\"")
                } else {
                    s.to_string()
                }
            };
            println!("spec,region,value,quadrature_error");
            println!("{},{},{:.12e},{:.3e}", quote(&spec), quote(&region), v.value, err);
            if v.zero_field {
                eprintln!("note: field vanishes on the region");
            }
            Ok(true)
        }
        Command::Solve { manifest: path } => {
            let problem = manifest::read_problem(&path)?;
            let data = orlicz_core::grid::discretize_measure(
                &problem.measure,
                &problem.grid,
                orlicz_core::grid::DiracLoading::NearestNode,
            )?;
            let spec = orlicz_core::solver::OperatorSpec::new(
                problem.modular,
                problem.omega,
                1.0,
                1.0,
                0.0,
            )?;
            let started = std::time::Instant::now();
            let sol =
                orlicz_core::solver::solve_dirichlet(&spec, &data, &problem.boundary, &problem.opts)?;
            let elapsed = started.elapsed();
            println!(
                "converged = {}  residual = {:.3e}  tolerance = {:.3e}",
                sol.converged, sol.residual_norm, sol.tolerance
            );
            println!(
                "outer iterations = {}  cg iterations = {}  wall = {:.3}s",
                sol.iterations,
                sol.cg_iterations,
                elapsed.as_secs_f64()
            );
            if let Some(prefix) = &problem.output {
                let upath = prefix.with_extension("u.bin");
                let dpath = prefix.with_extension("du.bin");
                fieldfile::write_field(&upath, &sol.u)?;
                fieldfile::write_field(&dpath, &sol.du)?;
                let meta = prefix.with_extension("meta.txt");
                std::fs::write(
                    &meta,
                    format!(
                        "converged = {}\nresidual = {:.6e}\ntolerance = {:.6e}\nouter = {}\ncg = {}\nwall_seconds = {:.6}\n",
                        sol.converged,
                        sol.residual_norm,
                        sol.tolerance,
                        sol.iterations,
                        sol.cg_iterations,
                        elapsed.as_secs_f64()
                    ),
                )?;
                println!("wrote {} / {} / {}", upath.display(), dpath.display(), meta.display());
            }
            Ok(sol.converged)
        }
        Command::Verify { manifest: path, csv, details } => {
            let text = std::fs::read_to_string(&path)?;
            let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
            let outcome = runner::run_suite(&text, &base)?;
            print!("{}", render::render_text(&outcome));
            if details {
                for row in &outcome.rows {
                    print!("{}", render::render_report_details(row));
                }
            }
            if let Some(csv_path) = csv {
                std::fs::write(&csv_path, render::render_csv(&outcome))?;
                println!("wrote {}", csv_path.display());
            }
            Ok(outcome.all_pass())
        }
        Command::ProbeSharpness { manifest: path } => {
            let text = std::fs::read_to_string(&path)?;
            let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
            let (probe, label) = runner::run_probe(&text, &base)?;
            println!("sharpness probe on instance `{label}`");
            println!(
                "weak norm: level drift {:.4}, refinement drift {:.4} -> {}",
                probe.weak_level_drift,
                probe.weak_refine_drift,
                if probe.pass_weak { "stable" } else { "NOT STABLE" }
            );
            println!("strong norm values: {:?}", probe.strong_values);
            println!(
                "strong norm growth per inner-radius halving: {:?} -> {}",
                probe.strong_growth,
                if probe.pass_strong { "log-divergence signature" } else { "NO divergence signature" }
            );
            Ok(probe.pass_weak && probe.pass_strong)
        }
    }
}
