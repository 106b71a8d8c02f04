//! Relative errors between fine-scale and homogenized trajectories, the
//! error tables and the runtime comparison.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::fine_solver::Trajectory;
use crate::linalg::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Norm {
    /// Mass-matrix weighted, `(uᵀMu)^½`.
    L2,
    /// Plain nodal Euclidean norm.
    Euclidean,
    Linf,
}

impl Norm {
    pub fn label(self) -> &'static str {
        match self {
            Norm::L2 => "L2",
            Norm::Euclidean => "euclid",
            Norm::Linf => "Linf",
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Norm::L2 => "2",
            Norm::Euclidean => "e",
            Norm::Linf => "inf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantity {
    C,
    P,
}

impl Quantity {
    pub fn label(self) -> &'static str {
        match self {
            Quantity::C => "C",
            Quantity::P => "p",
        }
    }
}

/// `‖u‖` in the given norm; `mass` is used only for [`Norm::L2`].
pub fn field_norm(u: &[f64], norm: Norm, mass: &SparseMatrix) -> f64 {
    match norm {
        Norm::L2 => mass.bilinear(u, u).max(0.0).sqrt(),
        Norm::Euclidean => u.iter().map(|x| x * x).sum::<f64>().sqrt(),
        Norm::Linf => u.iter().fold(0.0, |m, x| f64::max(m, x.abs())),
    }
}

/// `‖u − v‖ / ‖v‖`. A zero reference norm is reported as an error.
pub fn relative_error(u: &[f64], v: &[f64], norm: Norm, mass: &SparseMatrix) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Protocol(format!("fields differ in length ({} vs {})", u.len(), v.len())));
    }
    let den = field_norm(v, norm, mass);
    if den == 0.0 {
        return Err(Error::UndefinedRelativeError);
    }
    let d: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
    Ok(field_norm(&d, norm, mass) / den)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRecord {
    pub eps: f64,
    pub time: f64,
    pub quantity: Quantity,
    pub norm: Norm,
    pub value: f64,
    pub reference_norm: f64,
}

/// Relative errors for each `(quantity, norm, time, ε)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    /// Column order as given, normally descending.
    pub eps: Vec<f64>,
    pub times: Vec<f64>,
    pub records: Vec<ErrorRecord>,
}

/// Monotonicity of one table row across the ε columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub quantity: Quantity,
    pub norm: Norm,
    pub time: f64,
    /// `pairs[i]` is true iff the error drops from column `i` to `i + 1`.
    pub pairs: Vec<bool>,
}

impl Verdict {
    pub fn monotone(&self) -> bool {
        self.pairs.iter().all(|&b| b)
    }
}

pub const TABLE_NORMS: [Norm; 3] = [Norm::L2, Norm::Linf, Norm::Euclidean];

/// Compares every run against the reference at the listed times.
pub fn convergence_table(
    runs: &[(f64, &Trajectory)],
    reference: &Trajectory,
    times: &[f64],
    mass: &SparseMatrix,
) -> Result<ConvergenceTable> {
    let mut records = Vec::new();
    for &(eps, run) in runs {
        if (run.h - reference.h).abs() > 1e-12 {
            return Err(Error::Protocol(format!(
                "run with eps = {eps} uses h = {} but the reference uses h = {}",
                run.h, reference.h
            )));
        }
        for &t in times {
            let (Some(i), Some(j)) = (run.index_of(t), reference.index_of(t)) else {
                return Err(Error::Protocol(format!("time {t} missing from the run with eps = {eps} or the reference")));
            };
            for (q, u, v) in [(Quantity::P, &run.p[i], &reference.p[j]), (Quantity::C, &run.c[i], &reference.c[j])] {
                if u.len() != mass.nrows() || v.len() != mass.nrows() {
                    return Err(Error::Protocol("fields do not live on the comparison mesh".into()));
                }
                for norm in TABLE_NORMS {
                    records.push(ErrorRecord {
                        eps,
                        time: t,
                        quantity: q,
                        norm,
                        value: relative_error(u, v, norm, mass)?,
                        reference_norm: field_norm(v, norm, mass),
                    });
                }
            }
        }
    }
    Ok(ConvergenceTable {
        eps: runs.iter().map(|r| r.0).collect(),
        times: times.to_vec(),
        records,
    })
}

/// Scientific notation with a two-digit exponent, e.g. `5.4946e-02`.
pub fn sci(v: f64, digits: usize) -> String {
    let s = format!("{v:.digits$e}");
    match s.split_once('e') {
        Some((m, e)) => {
            let exp: i32 = e.parse().unwrap_or(0);
            format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
        }
        None => s,
    }
}

/// Short form for parameter headers: `8e-01`, `3.2e-02`.
pub fn short_sci(v: f64) -> String {
    let s = sci(v, 6);
    let (m, e) = s.split_once('e').unwrap_or((&s, ""));
    let m = m.trim_end_matches('0').trim_end_matches('.');
    format!("{m}e{e}")
}

/// Table cell: four decimals for values in `[1, 10)`, scientific otherwise.
pub fn table_cell(v: f64) -> String {
    if (1.0..10.0).contains(&v) {
        format!("{v:.4}")
    } else {
        sci(v, 4)
    }
}

impl ConvergenceTable {
    pub fn value(&self, q: Quantity, norm: Norm, eps: f64, time: f64) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.quantity == q && r.norm == norm && r.eps == eps && (r.time - time).abs() < 1e-12)
            .map(|r| r.value)
    }

    /// Row of values at `time`, in column order.
    pub fn row(&self, q: Quantity, norm: Norm, time: f64) -> Vec<f64> {
        self.eps
            .iter()
            .map(|&e| self.value(q, norm, e, time).unwrap_or(f64::NAN))
            .collect()
    }

    pub fn verdicts(&self) -> Vec<Verdict> {
        let mut out = Vec::new();
        for q in [Quantity::P, Quantity::C] {
            for norm in TABLE_NORMS {
                for &t in &self.times {
                    let row = self.row(q, norm, t);
                    out.push(Verdict {
                        quantity: q,
                        norm,
                        time: t,
                        pairs: row.windows(2).map(|w| w[1] < w[0]).collect(),
                    });
                }
            }
        }
        out
    }

    /// True iff every C row (L2 and Linf) decreases strictly along the columns.
    pub fn c_monotone(&self) -> bool {
        self.verdicts()
            .iter()
            .filter(|v| v.quantity == Quantity::C && v.norm != Norm::Euclidean)
            .all(Verdict::monotone)
    }

    pub fn title(q: Quantity, norm: Norm) -> String {
        let (a, b) = match q {
            Quantity::C => ("C^eps", "C^0"),
            Quantity::P => ("p^eps", "p^0"),
        };
        let s = norm.symbol();
        format!("|{a} - {b}|_{s}/|{b}|_{s}")
    }

    pub fn to_csv(&self, q: Quantity, norm: Norm) -> String {
        let mut s = String::from("time");
        for e in &self.eps {
            let _ = write!(s, ",eps={}", short_sci(*e));
        }
        s.push('\n');
        for &t in &self.times {
            let _ = write!(s, "{}", short_sci(t));
            for v in self.row(q, norm, t) {
                let _ = write!(s, ",{v:e}");
            }
            s.push('\n');
        }
        s
    }

    /// One aligned text table.
    pub fn to_text(&self, q: Quantity, norm: Norm) -> String {
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut head = vec![Self::title(q, norm)];
        head.extend(self.eps.iter().map(|e| format!("eps={}", short_sci(*e))));
        rows.push(head);
        for &t in &self.times {
            let mut r = vec![format!("t={}", short_sci(t))];
            r.extend(self.row(q, norm, t).into_iter().map(table_cell));
            rows.push(r);
        }
        let ncol = rows[0].len();
        let width: Vec<usize> = (0..ncol)
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut s = String::new();
        for r in rows {
            let cells: Vec<String> = r
                .iter()
                .enumerate()
                .map(|(c, x)| format!("{x:<w$}", w = width[c]))
                .collect();
            let _ = writeln!(s, "{}", cells.join(" | ").trim_end());
        }
        s
    }

    /// The four canonical tables followed by the monotonicity verdicts.
    pub fn report(&self) -> String {
        let mut s = String::new();
        for (q, norm) in [(Quantity::P, Norm::L2), (Quantity::P, Norm::Linf), (Quantity::C, Norm::L2), (Quantity::C, Norm::Linf)] {
            s.push_str(&self.to_text(q, norm));
            s.push('\n');
        }
        s.push_str("monotone in eps (error drops as eps decreases):\n");
        for v in self.verdicts().iter().filter(|v| v.norm != Norm::Euclidean) {
            let _ = writeln!(
                s,
                "  {} {} t={}: {}",
                v.quantity.label(),
                v.norm.label(),
                short_sci(v.time),
                if v.monotone() { "yes" } else { "NO" }
            );
        }
        s
    }

    /// Whitespace-separated columns `eps err(t1) err(t2) …` for gnuplot.
    pub fn gnuplot_data(&self, q: Quantity, norm: Norm) -> String {
        let mut s = String::from("# eps");
        for t in &self.times {
            let _ = write!(s, " t={}", short_sci(*t));
        }
        s.push('\n');
        for &e in &self.eps {
            let _ = write!(s, "{e:e}");
            for &t in &self.times {
                let _ = write!(s, " {:e}", self.value(q, norm, e, t).unwrap_or(f64::NAN));
            }
            s.push('\n');
        }
        s
    }
}

/// Mean wall-clock cost of one time step for each solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuntimeComparison {
    pub h: f64,
    pub fine_step_seconds: f64,
    pub homog_step_seconds: f64,
}

impl RuntimeComparison {
    pub fn from_trajectories(fine: &Trajectory, homog: &Trajectory) -> Self {
        Self {
            h: fine.h,
            fine_step_seconds: fine.mean_step_seconds(),
            homog_step_seconds: homog.mean_step_seconds(),
        }
    }

    /// `fine / homogenized`.
    pub fn ratio(&self) -> f64 {
        self.fine_step_seconds / self.homog_step_seconds
    }

    pub fn to_text(&self) -> String {
        format!(
            "h = {}: fine step {:.4e} s, homogenized step {:.4e} s, ratio {:.2}\n",
            short_sci(self.h),
            self.fine_step_seconds,
            self.homog_step_seconds,
            self.ratio()
        )
    }
}
