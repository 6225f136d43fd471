//! Small dense linear-program container and solver.
//!
//! Instances here have a handful of constraint rows and up to a few thousand
//! columns, so a dense two-phase simplex is plenty. Bland's rule everywhere
//! keeps the pivot sequence deterministic and cycle-free. An optimal claim is
//! certified against the original rows before being reported; anything that
//! cannot be certified comes back as [`LpStatus::Failed`], never as a wrong
//! optimum.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpRel {
    Eq,
    Le,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpRow {
    pub coeffs: Vec<f64>,
    pub rel: LpRel,
    pub rhs: f64,
}

/// A maximization LP over nonnegative variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpInstance {
    /// Objective coefficients, one per variable; the objective is maximized.
    pub objective: Vec<f64>,
    pub rows: Vec<LpRow>,
    /// Variable labels for diagnostics; empty means `x0..xN`.
    pub var_names: Vec<String>,
}

impl LpInstance {
    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    fn name(&self, j: usize) -> String {
        self.var_names
            .get(j)
            .cloned()
            .unwrap_or_else(|| format!("x{j}"))
    }

    /// Plain-text tableau dump, one constraint per line, for cross-checking
    /// with external solvers.
    pub fn to_tableau_text(&self) -> String {
        let mut out = String::new();
        let term = |j: usize, c: f64| format!("{c}*{}", self.name(j));
        let join = |coeffs: &[f64]| {
            let terms: Vec<String> = coeffs
                .iter()
                .enumerate()
                .filter(|(_, &c)| c != 0.0)
                .map(|(j, &c)| term(j, c))
                .collect();
            if terms.is_empty() {
                "0".to_string()
            } else {
                terms.join(" + ")
            }
        };
        out.push_str(&format!("max: {}\n", join(&self.objective)));
        for row in &self.rows {
            let rel = match row.rel {
                LpRel::Eq => "=",
                LpRel::Le => "<=",
            };
            out.push_str(&format!("{} {} {}\n", join(&row.coeffs), rel, row.rhs));
        }
        out
    }

    fn well_formed(&self) -> Result<(), String> {
        let n = self.n_vars();
        if !self.objective.iter().all(|c| c.is_finite()) {
            return Err("non-finite objective coefficient".into());
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.coeffs.len() != n {
                return Err(format!(
                    "row {i} has {} coefficients, expected {n}",
                    row.coeffs.len()
                ));
            }
            if !row.coeffs.iter().all(|c| c.is_finite()) || !row.rhs.is_finite() {
                return Err(format!("row {i} has a non-finite value"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: Option<f64>,
    pub primal: Option<Vec<f64>>,
    pub message: Option<String>,
}

impl LpSolution {
    fn failed(message: impl Into<String>) -> Self {
        LpSolution {
            status: LpStatus::Failed,
            objective: None,
            primal: None,
            message: Some(message.into()),
        }
    }

    fn status_only(status: LpStatus) -> Self {
        LpSolution {
            status,
            objective: None,
            primal: None,
            message: None,
        }
    }
}

const PIVOT_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-9;
const RESIDUAL_TOL: f64 = 1e-8;
const MAX_ITERS: usize = 200_000;

struct Tableau {
    m: usize,
    n_total: usize,
    /// m rows of n_total coefficients plus the rhs in the last slot.
    rows: Vec<Vec<f64>>,
    /// Reduced costs plus the negated objective value in the last slot.
    cost: Vec<f64>,
    basis: Vec<usize>,
    /// Columns barred from entering (artificials in phase 2).
    barred: Vec<bool>,
}

enum IterOutcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let scale = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= scale;
        }
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let factor = self.rows[i][c];
            if factor != 0.0 {
                for j in 0..=self.n_total {
                    self.rows[i][j] -= factor * self.rows[r][j];
                }
            }
        }
        let factor = self.cost[c];
        if factor != 0.0 {
            for j in 0..=self.n_total {
                self.cost[j] -= factor * self.rows[r][j];
            }
        }
        self.basis[r] = c;
    }

    /// Minimize the current cost row with Bland's rule.
    fn iterate(&mut self) -> IterOutcome {
        for _ in 0..MAX_ITERS {
            // entering: lowest-index column with negative reduced cost
            let entering = (0..self.n_total)
                .find(|&j| !self.barred[j] && self.cost[j] < -PIVOT_TOL);
            let Some(c) = entering else {
                return IterOutcome::Optimal;
            };
            // leaving: minimum ratio, ties broken by smallest basis variable
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.rows[i][c];
                if a > PIVOT_TOL {
                    let ratio = self.rows[i][self.n_total] / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - PIVOT_TOL
                                || ((ratio - br).abs() <= PIVOT_TOL
                                    && self.basis[i] < self.basis[bi])
                            {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            match best {
                Some((r, _)) => self.pivot(r, c),
                None => return IterOutcome::Unbounded,
            }
        }
        IterOutcome::IterationLimit
    }
}

/// Solve a maximization LP over nonnegative variables.
///
/// Deterministic: identical instances produce identical pivot sequences and
/// bit-identical results.
pub fn solve_lp(instance: &LpInstance) -> LpSolution {
    if let Err(msg) = instance.well_formed() {
        return LpSolution::failed(format!("malformed instance: {msg}"));
    }
    let n = instance.n_vars();
    let m = instance.rows.len();
    if m == 0 {
        // only the nonnegativity cone; bounded iff no positive objective
        return if instance.objective.iter().any(|&c| c > 0.0) {
            LpSolution::status_only(LpStatus::Unbounded)
        } else {
            LpSolution {
                status: LpStatus::Optimal,
                objective: Some(0.0),
                primal: Some(vec![0.0; n]),
                message: None,
            }
        };
    }

    // standard form: flip rows to nonnegative rhs, add slack/surplus and
    // artificial columns
    #[derive(Clone, Copy)]
    enum RowKind {
        Le,
        Ge,
        Eq,
    }
    let mut kinds = Vec::with_capacity(m);
    let mut coeffs: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    for row in &instance.rows {
        let flip = row.rhs < 0.0;
        let sign = if flip { -1.0 } else { 1.0 };
        kinds.push(match (row.rel, flip) {
            (LpRel::Eq, _) => RowKind::Eq,
            (LpRel::Le, false) => RowKind::Le,
            (LpRel::Le, true) => RowKind::Ge,
        });
        coeffs.push(row.coeffs.iter().map(|&c| sign * c).collect());
        rhs.push(sign * row.rhs);
    }

    let n_slack = kinds
        .iter()
        .filter(|k| matches!(k, RowKind::Le | RowKind::Ge))
        .count();
    let n_art = kinds
        .iter()
        .filter(|k| matches!(k, RowKind::Ge | RowKind::Eq))
        .count();
    let n_total = n + n_slack + n_art;

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut slack_at = n;
    let mut art_at = n + n_slack;
    let art_start = n + n_slack;
    for i in 0..m {
        let mut row = vec![0.0; n_total + 1];
        row[..n].copy_from_slice(&coeffs[i]);
        row[n_total] = rhs[i];
        match kinds[i] {
            RowKind::Le => {
                row[slack_at] = 1.0;
                basis.push(slack_at);
                slack_at += 1;
            }
            RowKind::Ge => {
                row[slack_at] = -1.0;
                slack_at += 1;
                row[art_at] = 1.0;
                basis.push(art_at);
                art_at += 1;
            }
            RowKind::Eq => {
                row[art_at] = 1.0;
                basis.push(art_at);
                art_at += 1;
            }
        }
        rows.push(row);
    }

    let mut t = Tableau {
        m,
        n_total,
        rows,
        cost: vec![0.0; n_total + 1],
        basis,
        barred: vec![false; n_total],
    };

    // phase 1: minimize the artificial mass
    if n_art > 0 {
        for j in art_start..n_total {
            t.cost[j] = 1.0;
        }
        for i in 0..m {
            if t.basis[i] >= art_start {
                for j in 0..=n_total {
                    t.cost[j] -= t.rows[i][j];
                }
            }
        }
        match t.iterate() {
            IterOutcome::Optimal => {}
            IterOutcome::Unbounded => {
                return LpSolution::failed("phase 1 reported unbounded");
            }
            IterOutcome::IterationLimit => {
                return LpSolution::failed("phase 1 iteration limit");
            }
        }
        let infeasibility = -t.cost[n_total];
        if infeasibility > FEAS_TOL {
            return LpSolution::status_only(LpStatus::Infeasible);
        }
        // pivot basic artificials out where a structural column allows it
        for i in 0..m {
            if t.basis[i] >= art_start {
                if let Some(c) = (0..art_start).find(|&j| t.rows[i][j].abs() > PIVOT_TOL) {
                    t.pivot(i, c);
                }
            }
        }
        for j in art_start..n_total {
            t.barred[j] = true;
        }
    }

    // phase 2: minimize the negated objective
    let mut cost = vec![0.0; n_total + 1];
    cost[..n]
        .iter_mut()
        .zip(&instance.objective)
        .for_each(|(slot, &c)| *slot = -c);
    t.cost = cost;
    for i in 0..m {
        let b = t.basis[i];
        let factor = t.cost[b];
        if factor != 0.0 {
            for j in 0..=n_total {
                t.cost[j] -= factor * t.rows[i][j];
            }
        }
    }
    match t.iterate() {
        IterOutcome::Optimal => {}
        IterOutcome::Unbounded => return LpSolution::status_only(LpStatus::Unbounded),
        IterOutcome::IterationLimit => return LpSolution::failed("phase 2 iteration limit"),
    }

    let mut x = vec![0.0; n];
    for i in 0..m {
        if t.basis[i] < n {
            x[t.basis[i]] = t.rows[i][n_total];
        }
    }

    // certify against the original rows
    for (i, row) in instance.rows.iter().enumerate() {
        let lhs: f64 = row.coeffs.iter().zip(&x).map(|(c, v)| c * v).sum();
        let violation = match row.rel {
            LpRel::Eq => (lhs - row.rhs).abs(),
            LpRel::Le => (lhs - row.rhs).max(0.0),
        };
        if violation > RESIDUAL_TOL {
            return LpSolution::failed(format!(
                "certification failed: row {i} residual {violation:e}"
            ));
        }
    }
    if let Some(&bad) = x.iter().find(|&&v| v < -FEAS_TOL) {
        return LpSolution::failed(format!("certification failed: negative variable {bad:e}"));
    }

    let objective = instance
        .objective
        .iter()
        .zip(&x)
        .map(|(c, v)| c * v)
        .sum();
    LpSolution {
        status: LpStatus::Optimal,
        objective: Some(objective),
        primal: Some(x),
        message: None,
    }
}
