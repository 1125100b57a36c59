//! Bounded-variable primal simplex with an explicit basis inverse.
//!
//! Two phases: phase 1 drives artificial variables out of the basis, phase 2
//! optimizes the real objective. Columns are stored sparse; the basis inverse
//! is dense and refactorized periodically. Pivoting is deterministic
//! (Dantzig's rule with a Bland fallback after degenerate stalls), so
//! identical inputs produce identical solutions.

/// Row sense. `LessEq` rows receive a slack column internally.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    Equal,
    LessEq,
}

/// One structural column: cost, bounds and sparse constraint coefficients.
#[derive(Clone, Debug)]
pub struct Column {
    pub cost: f64,
    pub lower: f64,
    pub upper: f64,
    /// (row, coefficient) pairs, one per row at most.
    pub entries: Vec<(u32, f64)>,
}

/// `minimize c.x  s.t.  A x (=|<=) b,  lower <= x <= upper`.
#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub row_kinds: Vec<RowKind>,
    pub rhs: Vec<f64>,
    pub columns: Vec<Column>,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub objective: f64,
    /// Values of the structural columns only.
    pub values: Vec<f64>,
    pub iterations: u64,
}

#[derive(Clone, Debug)]
pub enum LpResult {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
}

const FEAS_TOL: f64 = 1e-7;
const PIVOT_TOL: f64 = 1e-9;
const RATIO_TOL: f64 = 1e-9;
const DEGEN_TOL: f64 = 1e-10;
const BLAND_TRIGGER: u64 = 400;
const REFACTOR_EVERY: u64 = 128;

#[derive(Clone, Copy, Debug)]
pub struct SimplexSolver {
    pub max_iterations: u64,
    /// Reduced-cost optimality tolerance, relative to the largest |cost|.
    pub optimality_tol: f64,
}

impl Default for SimplexSolver {
    fn default() -> Self {
        SimplexSolver {
            max_iterations: 200_000,
            optimality_tol: 1e-10,
        }
    }
}

struct Tableau {
    m: usize,
    /// All internal columns: structural, then slacks, then artificials.
    cols: Vec<Column>,
    costs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    status: Vec<VarStatus>,
    basic: Vec<usize>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    rhs: Vec<f64>,
    n_struct: usize,
    iterations: u64,
}

impl Tableau {
    fn value_of(&self, j: usize) -> f64 {
        match self.status[j] {
            VarStatus::Basic => {
                let row = self.basic.iter().position(|&b| b == j).expect("basic var");
                self.xb[row]
            }
            VarStatus::AtLower => self.lower[j],
            VarStatus::AtUpper => self.upper[j],
        }
    }

    /// Recomputes the basic values from the nonbasic bound values.
    fn recompute_xb(&mut self) {
        let mut residual = self.rhs.clone();
        for (j, col) in self.cols.iter().enumerate() {
            let value = match self.status[j] {
                VarStatus::Basic => continue,
                VarStatus::AtLower => self.lower[j],
                VarStatus::AtUpper => self.upper[j],
            };
            if value != 0.0 {
                for &(row, coef) in &col.entries {
                    residual[row as usize] -= coef * value;
                }
            }
        }
        for i in 0..self.m {
            let mut v = 0.0;
            for k in 0..self.m {
                v += self.binv[i * self.m + k] * residual[k];
            }
            self.xb[i] = v;
        }
    }

    /// Rebuilds the dense basis inverse by Gauss-Jordan elimination with
    /// partial pivoting. Returns false on a singular basis.
    fn refactorize(&mut self) -> bool {
        let m = self.m;
        let mut mat = vec![0.0; m * m];
        for (i, &j) in self.basic.iter().enumerate() {
            for &(row, coef) in &self.cols[j].entries {
                mat[row as usize * m + i] = coef;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let mut piv_row = col;
            let mut piv_val = mat[col * m + col].abs();
            for r in col + 1..m {
                let v = mat[r * m + col].abs();
                if v > piv_val {
                    piv_val = v;
                    piv_row = r;
                }
            }
            if piv_val < 1e-12 {
                return false;
            }
            if piv_row != col {
                for k in 0..m {
                    mat.swap(col * m + k, piv_row * m + k);
                    inv.swap(col * m + k, piv_row * m + k);
                }
                self.basic.swap(col, piv_row);
                self.xb.swap(col, piv_row);
            }
            let piv = mat[col * m + col];
            for k in 0..m {
                mat[col * m + k] /= piv;
                inv[col * m + k] /= piv;
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let factor = mat[r * m + col];
                if factor != 0.0 {
                    for k in 0..m {
                        mat[r * m + k] -= factor * mat[col * m + k];
                        inv[r * m + k] -= factor * inv[col * m + k];
                    }
                }
            }
        }
        self.binv = inv;
        self.recompute_xb();
        true
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    One,
    Two,
}

impl SimplexSolver {
    /// Solves the program with the structural bounds replaced by
    /// `lower`/`upper` (branch-and-bound tightens bounds this way).
    pub fn solve_with_bounds(
        &self,
        lp: &LinearProgram,
        lower: &[f64],
        upper: &[f64],
    ) -> Result<LpResult, String> {
        debug_assert_eq!(lower.len(), lp.columns.len());
        debug_assert_eq!(upper.len(), lp.columns.len());
        for j in 0..lower.len() {
            if lower[j] > upper[j] + 1e-12 {
                return Ok(LpResult::Infeasible);
            }
        }

        let m = lp.rhs.len();
        let n_struct = lp.columns.len();
        let mut cols: Vec<Column> = Vec::with_capacity(n_struct + m * 2);
        for (j, col) in lp.columns.iter().enumerate() {
            cols.push(Column {
                cost: col.cost,
                lower: lower[j],
                upper: upper[j],
                entries: col.entries.clone(),
            });
        }
        // Slacks for inequality rows.
        let mut slack_of_row = vec![usize::MAX; m];
        for (i, kind) in lp.row_kinds.iter().enumerate() {
            if *kind == RowKind::LessEq {
                slack_of_row[i] = cols.len();
                cols.push(Column {
                    cost: 0.0,
                    lower: 0.0,
                    upper: f64::INFINITY,
                    entries: vec![(i as u32, 1.0)],
                });
            }
        }

        let mut tab = Tableau {
            m,
            costs: cols.iter().map(|c| c.cost).collect(),
            lower: cols.iter().map(|c| c.lower).collect(),
            upper: cols.iter().map(|c| c.upper).collect(),
            status: vec![VarStatus::AtLower; cols.len()],
            basic: Vec::with_capacity(m),
            binv: Vec::new(),
            xb: vec![0.0; m],
            rhs: lp.rhs.clone(),
            cols,
            n_struct,
            iterations: 0,
        };

        // Nonbasic variables start at the bound closer to zero cost impact:
        // finite lower, else upper. All our structural bounds have finite
        // lowers; guard anyway.
        for j in 0..tab.cols.len() {
            if tab.lower[j].is_finite() {
                tab.status[j] = VarStatus::AtLower;
            } else {
                tab.status[j] = VarStatus::AtUpper;
            }
        }

        // Residual with all structural nonbasic at bounds decides the
        // starting basis per row: the slack where it fits, else an
        // artificial.
        let mut residual = lp.rhs.clone();
        for (j, col) in tab.cols.iter().enumerate().take(n_struct) {
            let v = match tab.status[j] {
                VarStatus::AtLower => tab.lower[j],
                VarStatus::AtUpper => tab.upper[j],
                VarStatus::Basic => unreachable!(),
            };
            if v != 0.0 {
                for &(row, coef) in &col.entries {
                    residual[row as usize] -= coef * v;
                }
            }
        }

        let mut artificial_cols = Vec::new();
        for i in 0..m {
            let r = residual[i];
            if slack_of_row[i] != usize::MAX && r >= 0.0 {
                tab.basic.push(slack_of_row[i]);
                tab.status[slack_of_row[i]] = VarStatus::Basic;
                tab.xb[i] = r;
            } else {
                let sign = if r >= 0.0 { 1.0 } else { -1.0 };
                let j = tab.cols.len();
                tab.cols.push(Column {
                    cost: 0.0,
                    lower: 0.0,
                    upper: f64::INFINITY,
                    entries: vec![(i as u32, sign)],
                });
                tab.costs.push(0.0);
                tab.lower.push(0.0);
                tab.upper.push(f64::INFINITY);
                tab.status.push(VarStatus::Basic);
                tab.basic.push(j);
                tab.xb[i] = r.abs();
                artificial_cols.push(j);
            }
        }
        tab.binv = identity(m);

        // Phase 1: minimize the artificial sum.
        if !artificial_cols.is_empty() {
            let mut phase1_costs = vec![0.0; tab.cols.len()];
            for &j in &artificial_cols {
                phase1_costs[j] = 1.0;
            }
            std::mem::swap(&mut tab.costs, &mut phase1_costs);
            match self.iterate(&mut tab, Phase::One)? {
                LpStatus::Optimal => {}
                LpStatus::Unbounded => {
                    return Err("phase 1 unbounded".to_string());
                }
            }
            let infeasibility: f64 = artificial_cols.iter().map(|&j| tab.value_of(j)).sum();
            if infeasibility > FEAS_TOL {
                return Ok(LpResult::Infeasible);
            }
            // Restore real costs and pin the artificials at zero.
            std::mem::swap(&mut tab.costs, &mut phase1_costs);
            for &j in &artificial_cols {
                tab.lower[j] = 0.0;
                tab.upper[j] = 0.0;
                if tab.status[j] != VarStatus::Basic {
                    tab.status[j] = VarStatus::AtLower;
                }
            }
            if !tab.refactorize() {
                return Err("singular basis after phase 1".to_string());
            }
        }

        match self.iterate(&mut tab, Phase::Two)? {
            LpStatus::Optimal => {}
            LpStatus::Unbounded => return Ok(LpResult::Unbounded),
        }

        if !tab.refactorize() {
            return Err("singular basis at optimum".to_string());
        }
        let mut values = vec![0.0; n_struct];
        for (j, value) in values.iter_mut().enumerate() {
            *value = tab.value_of(j);
        }
        let objective = values
            .iter()
            .zip(lp.columns.iter())
            .map(|(v, c)| v * c.cost)
            .sum();
        Ok(LpResult::Optimal(LpSolution {
            objective,
            values,
            iterations: tab.iterations,
        }))
    }

    pub fn solve(&self, lp: &LinearProgram) -> Result<LpResult, String> {
        let lower: Vec<f64> = lp.columns.iter().map(|c| c.lower).collect();
        let upper: Vec<f64> = lp.columns.iter().map(|c| c.upper).collect();
        self.solve_with_bounds(lp, &lower, &upper)
    }

    fn iterate(&self, tab: &mut Tableau, phase: Phase) -> Result<LpStatus, String> {
        let m = tab.m;
        let cost_scale = tab
            .costs
            .iter()
            .fold(1.0_f64, |acc, c| acc.max(c.abs()));
        let opt_tol = self.optimality_tol * cost_scale + 1e-12;
        let mut degenerate_streak: u64 = 0;
        let mut since_refactor: u64 = 0;

        loop {
            if tab.iterations >= self.max_iterations {
                return Err(format!(
                    "iteration limit {} exceeded",
                    self.max_iterations
                ));
            }
            tab.iterations += 1;
            since_refactor += 1;

            // Duals y = c_B B^-1.
            let mut duals = vec![0.0; m];
            for i in 0..m {
                let cb = tab.costs[tab.basic[i]];
                if cb != 0.0 {
                    let row = &tab.binv[i * m..(i + 1) * m];
                    for (k, dual) in duals.iter_mut().enumerate() {
                        *dual += cb * row[k];
                    }
                }
            }

            // Pricing.
            let bland = degenerate_streak > BLAND_TRIGGER;
            let mut entering: Option<(usize, f64, bool)> = None; // (col, score, from_lower)
            for j in 0..tab.cols.len() {
                let status = tab.status[j];
                if status == VarStatus::Basic {
                    continue;
                }
                if tab.upper[j] - tab.lower[j] <= 1e-14 {
                    continue; // fixed (includes pinned artificials)
                }
                // In phase 2, artificials are pinned; in phase 1 everything
                // participates.
                let mut reduced = tab.costs[j];
                for &(row, coef) in &tab.cols[j].entries {
                    reduced -= duals[row as usize] * coef;
                }
                let (eligible, score, from_lower) = match status {
                    VarStatus::AtLower => (reduced < -opt_tol, -reduced, true),
                    VarStatus::AtUpper => (reduced > opt_tol, reduced, false),
                    VarStatus::Basic => unreachable!(),
                };
                if !eligible {
                    continue;
                }
                if bland {
                    entering = Some((j, score, from_lower));
                    break;
                }
                match entering {
                    Some((_, best, _)) if score <= best => {}
                    _ => entering = Some((j, score, from_lower)),
                }
            }

            let (enter, _, from_lower) = match entering {
                Some(e) => e,
                None => return Ok(LpStatus::Optimal),
            };

            // Direction through the basis.
            let mut direction = vec![0.0; m];
            for &(row, coef) in &tab.cols[enter].entries {
                if coef != 0.0 {
                    for i in 0..m {
                        direction[i] += tab.binv[i * m + row as usize] * coef;
                    }
                }
            }
            // Entering from its upper bound moves in the negated direction.
            let dir_sign = if from_lower { 1.0 } else { -1.0 };

            // Bounded ratio test: the entering variable's own span competes
            // with the basic variables' remaining slack.
            let own_span = tab.upper[enter] - tab.lower[enter];
            let mut t_max = own_span;
            let mut blocking: Option<usize> = None;
            for i in 0..m {
                let w = direction[i] * dir_sign;
                let basic_var = tab.basic[i];
                let limit = if w > PIVOT_TOL {
                    (tab.xb[i] - tab.lower[basic_var]) / w
                } else if w < -PIVOT_TOL {
                    (tab.upper[basic_var] - tab.xb[i]) / -w
                } else {
                    continue;
                };
                let limit = limit.max(0.0);
                if limit < t_max - RATIO_TOL {
                    t_max = limit;
                    blocking = Some(i);
                } else if limit < t_max + RATIO_TOL {
                    // Near-tie: prefer the larger pivot for stability,
                    // lowest row on equal magnitude.
                    if let Some(b) = blocking {
                        if direction[i].abs() > direction[b].abs() + 1e-12 {
                            blocking = Some(i);
                            t_max = t_max.min(limit);
                        }
                    } else if limit <= t_max {
                        t_max = limit;
                        blocking = Some(i);
                    }
                }
            }

            if t_max.is_infinite() {
                return Ok(LpStatus::Unbounded);
            }
            if t_max <= DEGEN_TOL {
                degenerate_streak += 1;
            } else {
                degenerate_streak = 0;
            }

            match blocking {
                None => {
                    // Bound flip: the entering variable crosses its box.
                    for i in 0..m {
                        tab.xb[i] -= t_max * direction[i] * dir_sign;
                    }
                    tab.status[enter] = if from_lower {
                        VarStatus::AtUpper
                    } else {
                        VarStatus::AtLower
                    };
                }
                Some(r) => {
                    let leaving = tab.basic[r];
                    let w_r = direction[r];
                    if w_r.abs() < PIVOT_TOL {
                        // Numerically unusable pivot; refactorize and retry.
                        if !tab.refactorize() {
                            return Err("singular basis during pivot recovery".to_string());
                        }
                        since_refactor = 0;
                        continue;
                    }
                    for i in 0..m {
                        tab.xb[i] -= t_max * direction[i] * dir_sign;
                    }
                    let enter_value = if from_lower {
                        tab.lower[enter] + t_max
                    } else {
                        tab.upper[enter] - t_max
                    };
                    // Leaving variable lands on the bound it ran into.
                    let leaving_to_lower = direction[r] * dir_sign > 0.0;
                    tab.status[leaving] = if leaving_to_lower {
                        VarStatus::AtLower
                    } else {
                        VarStatus::AtUpper
                    };
                    tab.status[enter] = VarStatus::Basic;
                    tab.basic[r] = enter;
                    tab.xb[r] = enter_value;

                    // Elementary update of the inverse.
                    let piv = w_r;
                    for k in 0..m {
                        tab.binv[r * m + k] /= piv;
                    }
                    for i in 0..m {
                        if i == r {
                            continue;
                        }
                        let factor = direction[i];
                        if factor != 0.0 {
                            for k in 0..m {
                                tab.binv[i * m + k] -= factor * tab.binv[r * m + k];
                            }
                        }
                    }

                    if since_refactor >= REFACTOR_EVERY {
                        if !tab.refactorize() {
                            return Err("singular basis at refactorization".to_string());
                        }
                        since_refactor = 0;
                    }
                }
            }
            let _ = phase;
        }
    }
}

enum LpStatus {
    Optimal,
    Unbounded,
}

fn identity(m: usize) -> Vec<f64> {
    let mut v = vec![0.0; m * m];
    for i in 0..m {
        v[i * m + i] = 1.0;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(rows: Vec<(RowKind, f64)>, cols: Vec<Column>) -> LinearProgram {
        LinearProgram {
            row_kinds: rows.iter().map(|r| r.0).collect(),
            rhs: rows.iter().map(|r| r.1).collect(),
            columns: cols,
        }
    }

    fn col(cost: f64, lower: f64, upper: f64, entries: &[(u32, f64)]) -> Column {
        Column {
            cost,
            lower,
            upper,
            entries: entries.to_vec(),
        }
    }

    fn solve(prog: &LinearProgram) -> LpResult {
        SimplexSolver::default().solve(prog).unwrap()
    }

    #[test]
    fn textbook_maximization_as_min() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36.
        let prog = lp(
            vec![
                (RowKind::LessEq, 4.0),
                (RowKind::LessEq, 12.0),
                (RowKind::LessEq, 18.0),
            ],
            vec![
                col(-3.0, 0.0, f64::INFINITY, &[(0, 1.0), (2, 3.0)]),
                col(-5.0, 0.0, f64::INFINITY, &[(1, 2.0), (2, 2.0)]),
            ],
        );
        match solve(&prog) {
            LpResult::Optimal(sol) => {
                assert!((sol.objective + 36.0).abs() < 1e-9);
                assert!((sol.values[0] - 2.0).abs() < 1e-9);
                assert!((sol.values[1] - 6.0).abs() < 1e-9);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn equality_row_with_bounds() {
        // min x + 2y s.t. x + y = 10, 0 <= x <= 4, 0 <= y.
        let prog = lp(
            vec![(RowKind::Equal, 10.0)],
            vec![
                col(1.0, 0.0, 4.0, &[(0, 1.0)]),
                col(2.0, 0.0, f64::INFINITY, &[(0, 1.0)]),
            ],
        );
        match solve(&prog) {
            LpResult::Optimal(sol) => {
                assert!((sol.objective - 16.0).abs() < 1e-9);
                assert!((sol.values[0] - 4.0).abs() < 1e-9);
                assert!((sol.values[1] - 6.0).abs() < 1e-9);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn detects_infeasible() {
        // x <= 1 and x = 5.
        let prog = lp(
            vec![(RowKind::Equal, 5.0)],
            vec![col(1.0, 0.0, 1.0, &[(0, 1.0)])],
        );
        assert!(matches!(solve(&prog), LpResult::Infeasible));
    }

    #[test]
    fn detects_unbounded() {
        // min -x, x >= 0 free above.
        let prog = lp(
            vec![(RowKind::LessEq, 10.0)],
            vec![col(-1.0, 0.0, f64::INFINITY, &[])],
        );
        assert!(matches!(solve(&prog), LpResult::Unbounded));
    }

    #[test]
    fn respects_upper_bounds_via_flips() {
        // min -x - y s.t. x + y <= 10, x <= 3, y <= 4 (bounds, not rows).
        let prog = lp(
            vec![(RowKind::LessEq, 10.0)],
            vec![
                col(-1.0, 0.0, 3.0, &[(0, 1.0)]),
                col(-1.0, 0.0, 4.0, &[(0, 1.0)]),
            ],
        );
        match solve(&prog) {
            LpResult::Optimal(sol) => {
                assert!((sol.objective + 7.0).abs() < 1e-9);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn honors_bound_overrides() {
        let prog = lp(
            vec![(RowKind::Equal, 6.0)],
            vec![
                col(1.0, 0.0, 10.0, &[(0, 1.0)]),
                col(3.0, 0.0, 10.0, &[(0, 1.0)]),
            ],
        );
        // Tighten x0 <= 2: forces 4 units onto the expensive column.
        let result = SimplexSolver::default()
            .solve_with_bounds(&prog, &[0.0, 0.0], &[2.0, 10.0])
            .unwrap();
        match result {
            LpResult::Optimal(sol) => {
                assert!((sol.objective - 14.0).abs() < 1e-9);
                assert!((sol.values[0] - 2.0).abs() < 1e-9);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn crossed_bounds_are_infeasible() {
        let prog = lp(
            vec![(RowKind::Equal, 1.0)],
            vec![col(1.0, 0.0, 5.0, &[(0, 1.0)])],
        );
        let result = SimplexSolver::default()
            .solve_with_bounds(&prog, &[3.0], &[2.0])
            .unwrap();
        assert!(matches!(result, LpResult::Infeasible));
    }

    #[test]
    fn degenerate_transport_problem() {
        // Assignment-like LP with heavy degeneracy.
        // min sum c_ij x_ij, rows: supply = 1 per source, demand = 1 per sink.
        let costs = [[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]];
        let mut columns = Vec::new();
        for (i, row) in costs.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                columns.push(col(
                    c,
                    0.0,
                    f64::INFINITY,
                    &[(i as u32, 1.0), (3 + j as u32, 1.0)],
                ));
            }
        }
        let rows = vec![
            (RowKind::Equal, 1.0),
            (RowKind::Equal, 1.0),
            (RowKind::Equal, 1.0),
            (RowKind::Equal, 1.0),
            (RowKind::Equal, 1.0),
            (RowKind::Equal, 1.0),
        ];
        match solve(&lp(rows, columns)) {
            LpResult::Optimal(sol) => {
                // Optimal assignment: (0,1), (1,0), (2,2) -> 1 + 2 + 2 = 5.
                assert!((sol.objective - 5.0).abs() < 1e-9);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn negative_rhs_equality() {
        // min x - y s.t. x - y = -3, 0 <= x, y <= 10.
        let prog = lp(
            vec![(RowKind::Equal, -3.0)],
            vec![
                col(1.0, 0.0, 10.0, &[(0, 1.0)]),
                col(-1.0, 0.0, 10.0, &[(0, -1.0)]),
            ],
        );
        match solve(&prog) {
            LpResult::Optimal(sol) => {
                assert!((sol.objective + 3.0).abs() < 1e-9);
                assert!((sol.values[1] - sol.values[0] - 3.0).abs() < 1e-9);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }
}
