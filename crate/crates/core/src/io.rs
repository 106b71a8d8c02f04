//! Field and mesh files: CSV, legacy VTK, a plain node/element text format,
//! and stored trajectories.
//!
//! Floating-point values are written in shortest round-trip form, so a
//! trajectory read back from disk is bit-identical to the one written.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fine_solver::{StepRecord, Trajectory};
use crate::geometry::Point;
use crate::mesh::{QuadMesh, TriMesh};

/// Index file of a stored trajectory.
pub const TRAJECTORY_INDEX: &str = "trajectory.txt";

/// `node,X1,X2,<name>…` rows.
pub fn field_csv(nodes: &[Point], columns: &[(&str, &[f64])]) -> String {
    let mut s = String::from("node,X1,X2");
    for (name, _) in columns {
        let _ = write!(s, ",{name}");
    }
    s.push('\n');
    for (k, x) in nodes.iter().enumerate() {
        let _ = write!(s, "{k},{:e},{:e}", x[0], x[1]);
        for (_, v) in columns {
            let _ = write!(s, ",{:e}", v[k]);
        }
        s.push('\n');
    }
    s
}

/// Legacy VTK structured-points file for nodal fields on the square mesh.
pub fn quad_vtk(mesh: &QuadMesh, title: &str, columns: &[(&str, &[f64])]) -> String {
    let side = mesh.n + 1;
    let mut s = format!(
        "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET STRUCTURED_POINTS\nDIMENSIONS {side} {side} 1\nORIGIN -1 -1 0\nSPACING {h:e} {h:e} 1\nPOINT_DATA {}\n",
        mesh.n_nodes(),
        h = mesh.h
    );
    for (name, v) in columns {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for x in v.iter() {
            let _ = writeln!(s, "{x:e}");
        }
    }
    s
}

/// Legacy VTK unstructured grid of the hexagon triangulation.
pub fn tri_vtk(mesh: &TriMesh, title: &str, columns: &[(&str, &[f64])]) -> String {
    let mut s = format!("# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\nPOINTS {} double\n", mesh.n_nodes());
    for p in &mesh.nodes {
        let _ = writeln!(s, "{:e} {:e} 0", p[0], p[1]);
    }
    let nt = mesh.n_triangles();
    let _ = writeln!(s, "CELLS {nt} {}", 4 * nt);
    for t in &mesh.triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        s.push_str("5\n");
    }
    let _ = writeln!(s, "POINT_DATA {}", mesh.n_nodes());
    for (name, v) in columns {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for x in v.iter() {
            let _ = writeln!(s, "{x:e}");
        }
    }
    s
}

/// Plain text: `nodes N`, one `x y` per line, `triangles T`, one `i j k` per line.
pub fn tri_mesh_text(mesh: &TriMesh) -> String {
    let mut s = format!("nodes {}\n", mesh.n_nodes());
    for p in &mesh.nodes {
        let _ = writeln!(s, "{:e} {:e}", p[0], p[1]);
    }
    let _ = writeln!(s, "triangles {}", mesh.n_triangles());
    for t in &mesh.triangles {
        let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
    }
    s
}

fn field_file(i: usize) -> String {
    format!("fields_{i:03}.csv")
}

/// Writes `trajectory.txt`, one CSV (and optionally one VTK) per recorded
/// time, `steps.csv` with diagnostics and `timing.csv` with wall-clock
/// seconds per step. Timings are kept apart so that every other file is
/// reproducible bit for bit. Returns the paths written.
pub fn write_trajectory(dir: &Path, traj: &Trajectory, mesh: &QuadMesh, vtk: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let nodes = mesh.nodes();
    let mut written = Vec::new();
    let mut index = format!("h = {:e}\nrecords = {}\n", traj.h, traj.len());
    for (i, t) in traj.times.iter().enumerate() {
        let name = field_file(i);
        let _ = writeln!(index, "{t:e} {name}");
        let path = dir.join(&name);
        fs::write(&path, field_csv(&nodes, &[("C", &traj.c[i]), ("p", &traj.p[i])]))?;
        written.push(path);
        if vtk {
            let path = dir.join(format!("fields_{i:03}.vtk"));
            fs::write(&path, quad_vtk(mesh, &format!("t = {t:e}"), &[("C", &traj.c[i]), ("p", &traj.p[i])]))?;
            written.push(path);
        }
    }
    let mut steps = String::from("step,time,c_min,c_max,mass,p_max_abs\n");
    let mut timing = String::from("step,seconds\n");
    for r in &traj.steps {
        let _ = writeln!(
            steps,
            "{},{:e},{:e},{:e},{:e},{:e}",
            r.step, r.time, r.c_min, r.c_max, r.mass, r.p_max_abs
        );
        let _ = writeln!(timing, "{},{:e}", r.step, r.seconds);
    }
    for (name, text) in [("steps.csv", steps), ("timing.csv", timing)] {
        let path = dir.join(name);
        fs::write(&path, text)?;
        written.push(path);
    }
    let path = dir.join(TRAJECTORY_INDEX);
    fs::write(&path, index)?;
    written.push(path);
    Ok(written)
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse(format!("{what}: `{s}` is not a number")))
}

/// Reads a trajectory stored by [`write_trajectory`].
pub fn read_trajectory(dir: &Path) -> Result<Trajectory> {
    let index_path = dir.join(TRAJECTORY_INDEX);
    let index = fs::read_to_string(&index_path)
        .map_err(|e| Error::Parse(format!("{}: {e}", index_path.display())))?;
    let mut lines = index.lines();
    let mut header = |key: &str| -> Result<String> {
        let line = lines.next().ok_or_else(|| Error::Parse(format!("{}: missing `{key}`", index_path.display())))?;
        match line.split_once('=') {
            Some((k, v)) if k.trim() == key => Ok(v.trim().to_string()),
            _ => Err(Error::Parse(format!("{}: expected `{key} = …`", index_path.display()))),
        }
    };
    let h = parse_f64(&header("h")?, "h")?;
    let n: usize = header("records")?
        .parse()
        .map_err(|_| Error::Parse("records: not an integer".into()))?;
    let mut traj = Trajectory::new(h);
    for line in lines.take(n) {
        let (t, name) = line
            .split_once(' ')
            .ok_or_else(|| Error::Parse(format!("bad index line `{line}`")))?;
        let text = fs::read_to_string(dir.join(name.trim()))?;
        let (mut c, mut p) = (Vec::new(), Vec::new());
        for row in text.lines().skip(1) {
            let cols: Vec<&str> = row.split(',').collect();
            if cols.len() != 5 {
                return Err(Error::Parse(format!("{name}: expected 5 columns, got {}", cols.len())));
            }
            c.push(parse_f64(cols[3], name)?);
            p.push(parse_f64(cols[4], name)?);
        }
        traj.push(parse_f64(t, "time")?, c, p);
    }
    if traj.len() != n {
        return Err(Error::Parse(format!("{}: expected {n} records", index_path.display())));
    }
    let timing = fs::read_to_string(dir.join("timing.csv")).unwrap_or_default();
    let mut seconds = timing.lines().skip(1).map(|row| match row.split_once(',') {
        Some((_, s)) => parse_f64(s, "timing.csv"),
        None => Err(Error::Parse("timing.csv: expected 2 columns".into())),
    });
    if let Ok(text) = fs::read_to_string(dir.join("steps.csv")) {
        for row in text.lines().skip(1) {
            let v: Vec<&str> = row.split(',').collect();
            if v.len() != 6 {
                return Err(Error::Parse("steps.csv: expected 6 columns".into()));
            }
            traj.steps.push(StepRecord {
                step: v[0].parse().map_err(|_| Error::Parse("steps.csv: bad step".into()))?,
                time: parse_f64(v[1], "steps.csv")?,
                c_min: parse_f64(v[2], "steps.csv")?,
                c_max: parse_f64(v[3], "steps.csv")?,
                mass: parse_f64(v[4], "steps.csv")?,
                p_max_abs: parse_f64(v[5], "steps.csv")?,
                seconds: seconds.next().transpose()?.unwrap_or(0.0),
            });
        }
    }
    Ok(traj)
}
