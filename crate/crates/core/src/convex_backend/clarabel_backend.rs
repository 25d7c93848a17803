//! Translation of a [`ConicProgram`] into Clarabel's standard form `Ax + s = b, s ∈ K`.

use std::collections::BTreeMap;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;

use super::embed::{embed_hermitian, extract_hermitian};
use super::{
    AffExpr, Backend, ConicError, ConicProgram, ConicSolution, Constraint, SolutionValues,
    SolveStatus,
};

/// Upper-triangle, column-major position of `(r, c)` with `r ≤ c`.
fn tri_index(r: usize, c: usize) -> usize {
    c * (c + 1) / 2 + r
}

struct Layout {
    scalar_count: usize,
    /// Offset of the first svec entry of every embedded block and its real size `2n`.
    blocks: Vec<(usize, usize)>,
    total: usize,
}

impl Layout {
    fn new(prog: &ConicProgram) -> Self {
        let mut off = prog.scalar_count();
        let mut blocks = Vec::new();
        for &n in prog.herm_dims() {
            let m = 2 * n;
            blocks.push((off, m));
            off += m * (m + 1) / 2;
        }
        Self {
            scalar_count: prog.scalar_count(),
            blocks,
            total: off,
        }
    }

    /// Linear coefficients over the solver variables (unscaled entries `W_ij`, `i ≤ j`).
    fn row(&self, e: &AffExpr) -> BTreeMap<usize, f64> {
        let mut row = BTreeMap::new();
        for (v, a) in &e.scalars {
            *row.entry(v.0).or_insert(0.0) += a;
        }
        for (v, c) in &e.herm {
            let (off, m) = self.blocks[v.index];
            let emb = embed_hermitian(&c.hermitian_dense(v.dim));
            for j in 0..m {
                for i in 0..=j {
                    let w = if i == j { 0.5 * emb[(i, j)] } else { emb[(i, j)] };
                    if w != 0.0 {
                        *row.entry(off + tri_index(i, j)).or_insert(0.0) += w;
                    }
                }
            }
        }
        debug_assert!(row.keys().all(|&k| k < self.total));
        row
    }
}

#[derive(Default)]
struct Rows {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
}

impl Rows {
    /// Appends the slack row `s = scale · e(x)`.
    fn push(&mut self, layout: &Layout, e: &AffExpr, scale: f64) {
        let r = self.b.len();
        for (col, a) in layout.row(e) {
            if a != 0.0 {
                self.i.push(r);
                self.j.push(col);
                self.v.push(-scale * a);
            }
        }
        self.b.push(scale * e.constant);
    }

    fn push_raw(&mut self, col: usize, a: f64) {
        let r = self.b.len();
        self.i.push(r);
        self.j.push(col);
        self.v.push(a);
        self.b.push(0.0);
    }
}

pub(super) fn solve(prog: &ConicProgram, tol: f64) -> Result<ConicSolution, ConicError> {
    let layout = Layout::new(prog);
    let mut rows = Rows::default();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    let s2 = std::f64::consts::SQRT_2;

    for c in prog.constraints() {
        match c {
            Constraint::Zero(es) => {
                es.iter().for_each(|e| rows.push(&layout, e, 1.0));
                cones.push(SupportedConeT::ZeroConeT(es.len()));
            }
            Constraint::NonNeg(es) => {
                es.iter().for_each(|e| rows.push(&layout, e, 1.0));
                cones.push(SupportedConeT::NonnegativeConeT(es.len()));
            }
            Constraint::SecondOrder(es) => {
                es.iter().for_each(|e| rows.push(&layout, e, 1.0));
                cones.push(SupportedConeT::SecondOrderConeT(es.len()));
            }
            Constraint::Exponential(es) => {
                es.iter().for_each(|e| rows.push(&layout, e, 1.0));
                cones.push(SupportedConeT::ExponentialConeT());
            }
            Constraint::Psd { dim, upper } => {
                let mut k = 0;
                for c in 0..*dim {
                    for r in 0..=c {
                        rows.push(&layout, &upper[k], if r == c { 1.0 } else { s2 });
                        k += 1;
                    }
                }
                cones.push(SupportedConeT::PSDTriangleConeT(*dim));
            }
        }
    }
    for &(off, m) in &layout.blocks {
        for j in 0..m {
            for i in 0..=j {
                rows.push_raw(off + tri_index(i, j), if i == j { -1.0 } else { -s2 });
            }
        }
        cones.push(SupportedConeT::PSDTriangleConeT(m));
    }
    // Clarabel rejects zero-size cones.
    cones.retain(|c| !matches!(c, SupportedConeT::ZeroConeT(0) | SupportedConeT::NonnegativeConeT(0)));

    let mut q = vec![0.0; layout.total];
    for (col, a) in layout.row(prog.objective()) {
        q[col] = a;
    }
    let m = rows.b.len();
    let a = CscMatrix::new_from_triplets(m, layout.total, rows.i, rows.j, rows.v);
    let p = CscMatrix::zeros((layout.total, layout.total));

    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(tol)
        .tol_gap_rel(tol)
        .tol_feas(tol)
        .reduced_tol_gap_abs((tol * 1e3).min(5e-5))
        .reduced_tol_gap_rel((tol * 1e3).min(5e-5))
        .reduced_tol_feas((tol * 1e3).min(1e-4))
        .max_iter(200)
        .build()
        .map_err(|e| ConicError::Backend(e.to_string()))?;
    let mut solver = DefaultSolver::new(&p, &q, &a, &rows.b, &cones, settings)
        .map_err(|e| ConicError::Backend(e.to_string()))?;
    solver.solve();
    let sol = &solver.solution;
    let iterations = sol.iterations as usize;

    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        other => {
            log::debug!("Clarabel finished with {other:?}");
            SolveStatus::NumericalFailure
        }
    };
    if status != SolveStatus::Optimal {
        return Ok(ConicSolution::failed(status, iterations, Backend::Clarabel));
    }

    let x = &sol.x;
    let scalars = x[..layout.scalar_count].to_vec();
    let hermitian = layout
        .blocks
        .iter()
        .map(|&(off, m)| {
            let w = DMatrix::from_fn(m, m, |r, c| {
                let (i, j) = if r <= c { (r, c) } else { (c, r) };
                x[off + tri_index(i, j)]
            });
            extract_hermitian(&w)
        })
        .collect();

    let constant = prog.objective().constant;
    let objective = sol.obj_val + constant;
    let dual_objective = sol.obj_val_dual + constant;
    let gap = (sol.obj_val - sol.obj_val_dual).abs() / 1f64.max(sol.obj_val.abs().min(sol.obj_val_dual.abs()));
    Ok(ConicSolution {
        status,
        values: Some(SolutionValues { scalars, hermitian }),
        objective,
        dual_objective,
        achieved_tol: gap.max(sol.r_prim).max(sol.r_dual),
        iterations,
        backend: Backend::Clarabel,
    })
}
