//! Named linear programs solved with `microlp`, with CPLEX-LP text export.

use std::fmt::Write;

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("solver failure: {0}")]
    Solver(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Row {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearProgram {
    pub sense: Sense,
    pub names: Vec<String>,
    pub objective: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpSolution {
    pub objective: f64,
    pub values: Vec<f64>,
}

impl LinearProgram {
    pub fn new(sense: Sense) -> Self {
        LinearProgram {
            sense,
            names: Vec::new(),
            objective: Vec::new(),
            bounds: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, obj: f64, lo: f64, hi: f64) -> usize {
        self.names.push(name.into());
        self.objective.push(obj);
        self.bounds.push((lo, hi));
        self.names.len() - 1
    }

    /// Adds a row after merging repeated variables and dropping zeros.
    pub fn add_row(&mut self, name: impl Into<String>, terms: &[(usize, f64)], cmp: Cmp, rhs: f64) {
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        let mut sorted = terms.to_vec();
        sorted.sort_by_key(|t| t.0);
        for (v, c) in sorted {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += c,
                _ => merged.push((v, c)),
            }
        }
        merged.retain(|t| t.1 != 0.0);
        self.rows.push(Row { name: name.into(), terms: merged, cmp, rhs });
    }

    pub fn set_bounds(&mut self, v: usize, lo: f64, hi: f64) {
        self.bounds[v] = (lo, hi);
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        let dir = match self.sense {
            Sense::Minimize => OptimizationDirection::Minimize,
            Sense::Maximize => OptimizationDirection::Maximize,
        };
        let mut p = Problem::new(dir);
        // Columns unbounded below are rewritten as `-n` or `p - n` with
        // nonnegative parts; microlp mishandles them directly.
        let cols: Vec<Vec<(microlp::Variable, f64)>> = self
            .objective
            .iter()
            .zip(&self.bounds)
            .map(|(&c, &(lo, hi))| {
                if lo.is_finite() {
                    vec![(p.add_var(c, (lo, hi)), 1.0)]
                } else if hi.is_finite() {
                    vec![(p.add_var(-c, (-hi, f64::INFINITY)), -1.0)]
                } else {
                    vec![(p.add_var(c, (0.0, f64::INFINITY)), 1.0), (p.add_var(-c, (0.0, f64::INFINITY)), -1.0)]
                }
            })
            .collect();
        for row in &self.rows {
            if row.terms.is_empty() {
                let ok = match row.cmp {
                    Cmp::Le => 0.0 <= row.rhs + 1e-12,
                    Cmp::Ge => 0.0 >= row.rhs - 1e-12,
                    Cmp::Eq => row.rhs.abs() <= 1e-12,
                };
                if !ok {
                    return Err(LpError::Infeasible);
                }
                continue;
            }
            let expr: Vec<_> =
                row.terms.iter().flat_map(|&(v, c)| cols[v].iter().map(move |&(u, f)| (u, f * c))).collect();
            let op = match row.cmp {
                Cmp::Le => ComparisonOp::Le,
                Cmp::Ge => ComparisonOp::Ge,
                Cmp::Eq => ComparisonOp::Eq,
            };
            p.add_constraint(expr.as_slice(), op, row.rhs);
        }
        let outcome = p.solve().map_err(|e| match e {
            microlp::Error::Infeasible => LpError::Infeasible,
            microlp::Error::Unbounded => LpError::Unbounded,
            other => LpError::Solver(other.to_string()),
        })?;
        let sol = outcome.into_solution().map_err(|_| LpError::Solver("interrupted".into()))?;
        Ok(LpSolution {
            objective: sol.objective(),
            values: cols.iter().map(|parts| parts.iter().map(|&(u, f)| f * sol.var_value(u)).sum()).collect(),
        })
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &(lo, hi)) in x.iter().zip(&self.bounds) {
            worst = worst.max(lo - v).max(v - hi);
        }
        for row in &self.rows {
            let lhs: f64 = row.terms.iter().map(|&(v, c)| c * x[v]).sum();
            let viol = match row.cmp {
                Cmp::Le => lhs - row.rhs,
                Cmp::Ge => row.rhs - lhs,
                Cmp::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    /// Optimal value of the LP dual, built from the rows and bounds. Every
    /// variable needs a finite lower bound.
    pub fn dual_objective(&self) -> Result<f64, LpError> {
        if self.bounds.iter().any(|b| !b.0.is_finite()) {
            return Err(LpError::Solver("dual needs finite lower bounds".into()));
        }
        let sign = match self.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        // Shift x = lo + x' with x' >= 0; finite upper bounds become rows.
        let shift: f64 = self.objective.iter().zip(&self.bounds).map(|(c, b)| c * b.0).sum();
        let mut rows: Vec<(Vec<(usize, f64)>, Cmp, f64)> = self
            .rows
            .iter()
            .map(|r| {
                let adj: f64 = r.terms.iter().map(|&(v, c)| c * self.bounds[v].0).sum();
                (r.terms.clone(), r.cmp, r.rhs - adj)
            })
            .collect();
        for (v, &(lo, hi)) in self.bounds.iter().enumerate() {
            if hi.is_finite() {
                rows.push((vec![(v, 1.0)], Cmp::Le, hi - lo));
            }
        }
        let mut d = LinearProgram::new(Sense::Maximize);
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.num_vars()];
        // Every dual variable is kept nonnegative: Le rows are negated and
        // free ones split in two, since microlp mishandles free columns.
        for (i, (terms, cmp, rhs)) in rows.iter().enumerate() {
            let parts: &[f64] = match cmp {
                Cmp::Le => &[-1.0],
                Cmp::Ge => &[1.0],
                Cmp::Eq => &[1.0, -1.0],
            };
            for (k, &flip) in parts.iter().enumerate() {
                let y = d.add_var(format!("y{i}_{k}"), flip * rhs, 0.0, f64::INFINITY);
                for &(v, c) in terms {
                    cols[v].push((y, flip * c));
                }
            }
        }
        for (v, col) in cols.iter().enumerate() {
            d.add_row(format!("c{v}"), col, Cmp::Le, sign * self.objective[v]);
        }
        let sol = d.solve()?;
        Ok(sign * sol.objective + shift)
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// CPLEX LP text. Names containing characters the format rejects are
    /// written verbatim; most readers accept `[]->:,` in names.
    pub fn to_lp_text(&self) -> String {
        let mut s = String::new();
        let term = |s: &mut String, c: f64, name: &str, first: bool| {
            if c < 0.0 {
                let _ = write!(s, " - {} {}", -c, name);
            } else if first {
                let _ = write!(s, " {c} {name}");
            } else {
                let _ = write!(s, " + {c} {name}");
            }
        };
        s.push_str(match self.sense {
            Sense::Minimize => "Minimize\n obj:",
            Sense::Maximize => "Maximize\n obj:",
        });
        let mut first = true;
        for (i, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                term(&mut s, c, &self.names[i], first);
                first = false;
            }
        }
        if first {
            s.push_str(" 0");
        }
        s.push_str("\nSubject To\n");
        for row in &self.rows {
            let _ = write!(s, " {}:", row.name);
            for (k, &(v, c)) in row.terms.iter().enumerate() {
                term(&mut s, c, &self.names[v], k == 0);
            }
            if row.terms.is_empty() {
                s.push_str(" 0");
            }
            let op = match row.cmp {
                Cmp::Le => "<=",
                Cmp::Ge => ">=",
                Cmp::Eq => "=",
            };
            let _ = writeln!(s, " {op} {}", row.rhs);
        }
        s.push_str("Bounds\n");
        for (i, &(lo, hi)) in self.bounds.iter().enumerate() {
            let hi_s = if hi.is_infinite() { "+inf".to_string() } else { hi.to_string() };
            let lo_s = if lo.is_infinite() { "-inf".to_string() } else { lo.to_string() };
            let _ = writeln!(s, " {lo_s} <= {} <= {hi_s}", self.names[i]);
        }
        s.push_str("End\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_lp() {
        // max x + y s.t. x + 2y <= 4, 3x + y <= 6 -> (1.6, 1.2), 2.8
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_var("x", 1.0, 0.0, f64::INFINITY);
        let y = lp.add_var("y", 1.0, 0.0, f64::INFINITY);
        lp.add_row("a", &[(x, 1.0), (y, 2.0)], Cmp::Le, 4.0);
        lp.add_row("b", &[(x, 3.0), (y, 1.0)], Cmp::Le, 6.0);
        let sol = lp.solve().unwrap();
        assert!((sol.objective - 2.8).abs() < 1e-9);
        assert!((sol.values[0] - 1.6).abs() < 1e-9);
        assert!(lp.max_violation(&sol.values) < 1e-9);
        assert!((lp.dual_objective().unwrap() - 2.8).abs() < 1e-9);
        let text = lp.to_lp_text();
        assert!(text.contains("a: 1 x + 2 y <= 4"));
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var("x", 1.0, 0.0, f64::INFINITY);
        lp.add_row("r", &[(x, 1.0)], Cmp::Le, -1.0);
        assert_eq!(lp.solve().unwrap_err(), LpError::Infeasible);
        let mut lp = LinearProgram::new(Sense::Maximize);
        lp.add_var("x", 1.0, 0.0, f64::INFINITY);
        assert_eq!(lp.solve().unwrap_err(), LpError::Unbounded);
    }

    #[test]
    fn dual_with_bounds_and_equalities() {
        // min 2x + 3y s.t. x + y = 4, x <= 3, 1 <= y -> x = 3, y = 1, 9
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var("x", 2.0, 0.0, 3.0);
        let y = lp.add_var("y", 3.0, 1.0, f64::INFINITY);
        lp.add_row("r", &[(x, 1.0), (y, 1.0)], Cmp::Eq, 4.0);
        assert!((lp.solve().unwrap().objective - 9.0).abs() < 1e-9);
        assert!((lp.dual_objective().unwrap() - 9.0).abs() < 1e-9);
    }

    #[test]
    fn columns_unbounded_below() {
        let mut d = LinearProgram::new(Sense::Maximize);
        let y0 = d.add_var("y0", 0.5, f64::NEG_INFINITY, f64::INFINITY);
        let y1 = d.add_var("y1", -0.5, f64::NEG_INFINITY, f64::INFINITY);
        let y2 = d.add_var("y2", 0.0, f64::NEG_INFINITY, 0.0);
        d.add_row("c0", &[(y2, -1.0)], Cmp::Le, 1.0);
        d.add_row("c1", &[(y0, 1.0), (y1, -1.0), (y2, 1.0)], Cmp::Le, 0.0);
        let s = d.solve().unwrap();
        assert!((s.objective - 0.5).abs() < 1e-9);
        assert!(s.values[2] <= 1e-12);
    }

    #[test]
    fn merges_repeated_terms() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_var("x", 1.0, 0.0, f64::INFINITY);
        lp.add_row("r", &[(x, 1.0), (x, 1.0)], Cmp::Le, 2.0);
        assert!((lp.solve().unwrap().objective - 1.0).abs() < 1e-9);
    }
}
