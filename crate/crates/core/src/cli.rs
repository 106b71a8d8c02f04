//! Command-line front end: configuration, run orchestration and the output
//! directory layout.
//!
//! ```text
//! <out>/cell/coeffs.txt              homogenized coefficients
//! <out>/cell/m.csv, m.vtk, mesh.txt  invariant density on the reference cell
//! <out>/fine_eps_<ε>/                one stored trajectory per scale
//! <out>/homog/                       homogenized trajectory
//! <out>/report/                      error tables, report, runtime comparison
//! <out>/manifest_<run>.txt           config echo, versions, timings, hashes
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::info;
use sha2::{Digest, Sha256};

use crate::cell_problem::{solve_cell_problem, HomCoeffs};
use crate::config::{parse_config, RunConfig};
use crate::error::{Error, Result};
use crate::fem::Assembler;
use crate::fine_solver::{run_fine, Trajectory};
use crate::homog_solver::run_homog;
use crate::io;
use crate::mesh::quad_mesh_rect;
use crate::report::{convergence_table, ConvergenceTable, Quantity, RuntimeComparison, TABLE_NORMS};

/// Environment variable holding the worker thread count for assembly.
pub const THREADS_ENV: &str = "CRYPT_HOMOG_THREADS";

#[derive(Debug, Parser)]
#[command(name = "crypt-homog", version, about = "Fine-scale and homogenized crypt density solvers")]
pub struct Cli {
    /// Run configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `experiment.output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Solve the cell problem and write the homogenized coefficients.
    Cell,
    /// Run the fine-scale model at one scale.
    Fine {
        #[arg(long)]
        eps: f64,
    },
    /// Run the homogenized model from the stored coefficients.
    Homog,
    /// Compare stored fine-scale runs with the homogenized run.
    Compare {
        /// Exit with status 1 unless every C error row decreases with eps.
        #[arg(long)]
        assert_monotone: bool,
    },
    /// cell, homog, fine for every eps in the list, then compare.
    Full {
        #[arg(long)]
        assert_monotone: bool,
    },
}

impl Command {
    fn run_name(&self) -> String {
        match self {
            Command::Cell => "cell".into(),
            Command::Fine { eps } => format!("fine_eps_{eps}"),
            Command::Homog => "homog".into(),
            Command::Compare { .. } => "compare".into(),
            Command::Full { .. } => "full".into(),
        }
    }
}

/// Loads the configuration named on the command line and applies overrides.
pub fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => parse_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Record of one invocation, written as `manifest_<run>.txt`.
#[derive(Debug)]
struct Manifest {
    run: String,
    phases: Vec<(String, f64)>,
    files: Vec<PathBuf>,
}

impl Manifest {
    fn phase<T>(&mut self, name: &str, f: impl FnOnce(&mut Vec<PathBuf>) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        info!("phase {name}");
        let out = f(&mut self.files)?;
        let secs = start.elapsed().as_secs_f64();
        info!("phase {name} done in {secs:.3} s");
        self.phases.push((name.to_string(), secs));
        Ok(out)
    }

    fn write(&self, cfg: &RunConfig) -> Result<PathBuf> {
        let root = &cfg.output_dir;
        let mut s = String::from("# crypt-homog run manifest\n");
        let _ = writeln!(s, "run = {}", self.run);
        let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "sparse_lu = faer 0.24");
        let _ = writeln!(s, "\n[config]");
        s.push_str(&cfg.to_text());
        let _ = writeln!(s, "\n[phases]");
        for (name, secs) in &self.phases {
            let _ = writeln!(s, "{name} = {secs:.6} s");
        }
        let _ = writeln!(s, "\n[files]");
        let mut files = self.files.clone();
        files.sort();
        files.dedup();
        for f in &files {
            let rel = f.strip_prefix(root).unwrap_or(f);
            let _ = writeln!(s, "{}  {}", sha256_hex(f)?, rel.display());
        }
        let path = root.join(format!("manifest_{}.txt", self.run));
        fs::write(&path, s)?;
        Ok(path)
    }
}

fn ensure_writable(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Config(format!("output directory {}: {e}", dir.display())))?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"")
        .and_then(|_| fs::remove_file(&probe))
        .map_err(|e| Error::Config(format!("output directory {} is not writable: {e}", dir.display())))
}

pub fn coeffs_path(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("cell").join("coeffs.txt")
}

pub fn fine_dir(cfg: &RunConfig, eps: f64) -> PathBuf {
    cfg.output_dir.join(format!("fine_eps_{eps}"))
}

pub fn homog_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("homog")
}

pub fn report_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("report")
}

fn require(path: &Path, producer: String) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Dependency {
            path: path.to_path_buf(),
            producer,
        })
    }
}

fn write_file(files: &mut Vec<PathBuf>, path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text)?;
    files.push(path);
    Ok(())
}

fn cell_phase(cfg: &RunConfig, files: &mut Vec<PathBuf>) -> Result<HomCoeffs> {
    let field = cfg.coefficient_field()?;
    let sol = solve_cell_problem(cfg.geometry.a, cfg.n_ref, &field)?;
    info!(
        "cell: Am = [{:.6}, {:.3e}; {:.6}], beta_m = {:.6}, gamma_m = {:.6}, residual {:.2e}",
        sol.coeffs.am.xx, sol.coeffs.am.xy, sol.coeffs.am.yy, sol.coeffs.beta_m, sol.coeffs.gamma_m, sol.null_residual
    );
    let dir = cfg.output_dir.join("cell");
    fs::create_dir_all(&dir)?;
    let mesh = &sol.density.mesh;
    let m = sol.density.nodal();
    write_file(files, dir.join("coeffs.txt"), &sol.coeffs.to_text())?;
    let csv = io::field_csv(&mesh.nodes, &[("m", &m)]).replacen("node,X1,X2", "node,Y1,Y2", 1);
    write_file(files, dir.join("m.csv"), &csv)?;
    write_file(files, dir.join("m.vtk"), &io::tri_vtk(mesh, "invariant density m", &[("m", &m)]))?;
    write_file(files, dir.join("mesh.txt"), &io::tri_mesh_text(mesh))?;
    Ok(sol.coeffs)
}

fn fine_phase(cfg: &RunConfig, eps: f64, files: &mut Vec<PathBuf>) -> Result<Trajectory> {
    let sim = cfg.sim_config(eps);
    sim.validate_fine(cfg.geometry.a)?;
    let field = cfg.coefficient_field()?;
    let traj = run_fine(&field, cfg.geometry.a, sim)?;
    let mesh = quad_mesh_rect(cfg.h)?;
    files.extend(io::write_trajectory(&fine_dir(cfg, eps), &traj, &mesh, true)?);
    Ok(traj)
}

fn homog_phase(cfg: &RunConfig, files: &mut Vec<PathBuf>) -> Result<Trajectory> {
    let path = coeffs_path(cfg);
    require(&path, "cell".into())?;
    let hc = HomCoeffs::read(&path)?;
    let traj = run_homog(hc, cfg.sim_config(cfg.eps[0]))?;
    let mesh = quad_mesh_rect(cfg.h)?;
    files.extend(io::write_trajectory(&homog_dir(cfg), &traj, &mesh, true)?);
    Ok(traj)
}

/// Builds the error tables from stored trajectories and writes the report.
fn compare_phase(cfg: &RunConfig, files: &mut Vec<PathBuf>) -> Result<ConvergenceTable> {
    let hdir = homog_dir(cfg);
    require(&hdir.join(io::TRAJECTORY_INDEX), "homog".into())?;
    let reference = io::read_trajectory(&hdir)?;
    let mut fines = Vec::new();
    for &eps in &cfg.eps {
        let dir = fine_dir(cfg, eps);
        require(&dir.join(io::TRAJECTORY_INDEX), format!("fine --eps {eps}"))?;
        fines.push((eps, io::read_trajectory(&dir)?));
    }
    let asm = Assembler::new(quad_mesh_rect(reference.h)?);
    let local = asm.mass_local();
    let mass = asm.matrix_full(|_| local);
    let runs: Vec<(f64, &Trajectory)> = fines.iter().map(|(e, t)| (*e, t)).collect();
    let table = convergence_table(&runs, &reference, &cfg.output_times, &mass)?;

    let dir = report_dir(cfg);
    fs::create_dir_all(&dir)?;
    for q in [Quantity::P, Quantity::C] {
        for norm in TABLE_NORMS {
            let stem = format!("{}_{}", q.label(), norm.label());
            write_file(files, dir.join(format!("{stem}.csv")), &table.to_csv(q, norm))?;
            write_file(files, dir.join(format!("{stem}.dat")), &table.gnuplot_data(q, norm))?;
        }
    }
    let mut runtime = String::new();
    for (eps, fine) in &fines {
        let _ = write!(runtime, "eps = {eps}: {}", RuntimeComparison::from_trajectories(fine, &reference).to_text());
    }
    write_file(files, dir.join("runtime.txt"), &runtime)?;
    let report = table.report();
    write_file(files, dir.join("report.txt"), &report)?;
    print!("{report}");
    Ok(table)
}

/// Runs one subcommand; returns the process exit status.
pub fn dispatch(command: &Command, cfg: &RunConfig) -> Result<i32> {
    ensure_writable(&cfg.output_dir)?;
    let mut manifest = Manifest {
        run: command.run_name(),
        phases: Vec::new(),
        files: Vec::new(),
    };
    let mut status = 0;
    let check = |table: &ConvergenceTable, assert_monotone: bool| {
        let ok = table.c_monotone();
        if !ok {
            log::warn!("C errors are not monotone in eps");
        }
        if assert_monotone && !ok {
            1
        } else {
            0
        }
    };
    match command {
        Command::Cell => {
            manifest.phase("cell", |f| cell_phase(cfg, f))?;
        }
        Command::Fine { eps } => {
            manifest.phase(&command.run_name(), |f| fine_phase(cfg, *eps, f))?;
        }
        Command::Homog => {
            manifest.phase("homog", |f| homog_phase(cfg, f))?;
        }
        Command::Compare { assert_monotone } => {
            let table = manifest.phase("compare", |f| compare_phase(cfg, f))?;
            status = check(&table, *assert_monotone);
        }
        Command::Full { assert_monotone } => {
            manifest.phase("cell", |f| cell_phase(cfg, f))?;
            manifest.phase("homog", |f| homog_phase(cfg, f))?;
            for &eps in &cfg.eps {
                manifest.phase(&format!("fine_eps_{eps}"), |f| fine_phase(cfg, eps, f))?;
            }
            let table = manifest.phase("compare", |f| compare_phase(cfg, f))?;
            status = check(&table, *assert_monotone);
        }
    }
    let path = manifest.write(cfg)?;
    info!("wrote {}", path.display());
    Ok(status)
}

/// Parses arguments, runs and maps errors to exit status 2.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match load_config(&cli).and_then(|cfg| dispatch(&cli.command, &cfg)) {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
