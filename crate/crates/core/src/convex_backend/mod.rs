//! Solver-agnostic conic programs with real scalar variables and complex Hermitian PSD blocks.
//!
//! A [`ConicProgram`] minimizes an affine objective subject to affine expressions lying in
//! zero, nonnegative, second-order, exponential or real PSD cones. Every Hermitian block
//! variable is implicitly constrained to be positive semidefinite.
//!
//! Two backends are available. [`Backend::Clarabel`] handles every cone through the real
//! embedding of the Hermitian blocks. [`Backend::HermitianIpm`] is a structured primal-dual
//! interior-point method working directly on the complex blocks; it supports only equality
//! and nonnegativity constraints over nonnegative scalars, which covers the per-slot
//! beamforming relaxation. [`Backend::Auto`] picks the structured method when it applies and
//! falls back to Clarabel whenever it does not certify an optimum.

mod clarabel_backend;
pub mod embed;
mod hermitian_ipm;

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

pub use embed::{embed_hermitian, extract_hermitian};

/// Environment variable overriding the default solver tolerance.
pub const TOL_ENV: &str = "IRS_ANTIJAM_TOL";

pub const DEFAULT_TOL: f64 = 1e-8;

/// Tolerance from [`TOL_ENV`] when set to a positive number, otherwise [`DEFAULT_TOL`].
pub fn default_tolerance() -> f64 {
    std::env::var(TOL_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<f64>().ok())
        .filter(|t| *t > 0.0 && t.is_finite())
        .unwrap_or(DEFAULT_TOL)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("malformed conic program: {0}")]
    Malformed(String),
    #[error("backend rejected the program: {0}")]
    Backend(String),
    #[error("program not supported by the {0:?} backend")]
    Unsupported(Backend),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ScalarVar(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct HermVar {
    pub index: usize,
    pub dim: usize,
}

/// Coefficient `C` of a term `Re tr(C X)`; only the Hermitian part of `C` matters.
#[derive(Clone, Debug, PartialEq)]
pub enum HermCoeff {
    /// Triplets `(row, col, value)` meaning `Σ value · E_{row,col}`.
    Sparse(Vec<(usize, usize, Complex64)>),
    Dense(DMatrix<Complex64>),
}

impl HermCoeff {
    /// `Re tr(E_{ll} X) = X_{ll}`.
    pub fn diagonal_entry(l: usize) -> Self {
        HermCoeff::Sparse(vec![(l, l, Complex64::new(1.0, 0.0))])
    }

    pub fn identity(dim: usize) -> Self {
        HermCoeff::Sparse((0..dim).map(|l| (l, l, Complex64::new(1.0, 0.0))).collect())
    }

    /// Evaluates `Re tr(C X)`.
    pub fn apply(&self, x: &DMatrix<Complex64>) -> f64 {
        match self {
            HermCoeff::Sparse(t) => t.iter().map(|&(r, c, v)| (v * x[(c, r)]).re).sum(),
            HermCoeff::Dense(c) => c
                .iter()
                .zip(x.transpose().iter())
                .map(|(a, b)| (a * b).re)
                .sum(),
        }
    }

    /// Hermitian part `(C + Cᴴ)/2` as a dense matrix.
    pub fn hermitian_dense(&self, dim: usize) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(dim, dim);
        match self {
            HermCoeff::Sparse(t) => {
                for &(r, c, v) in t {
                    m[(r, c)] += v * 0.5;
                    m[(c, r)] += v.conj() * 0.5;
                }
            }
            HermCoeff::Dense(c) => {
                m = (c + c.adjoint()) * Complex64::new(0.5, 0.0);
            }
        }
        m
    }

    fn scaled(&self, s: f64) -> Self {
        match self {
            HermCoeff::Sparse(t) => HermCoeff::Sparse(t.iter().map(|&(r, c, v)| (r, c, v * s)).collect()),
            HermCoeff::Dense(c) => HermCoeff::Dense(c * Complex64::new(s, 0.0)),
        }
    }

    fn max_index(&self) -> Option<usize> {
        match self {
            HermCoeff::Sparse(t) => t.iter().map(|&(r, c, _)| r.max(c)).max(),
            HermCoeff::Dense(c) => {
                if c.nrows() != c.ncols() {
                    Some(usize::MAX)
                } else {
                    c.nrows().checked_sub(1)
                }
            }
        }
    }
}

/// Affine expression `Σ a_k x_k + Σ Re tr(C_b X_b) + constant`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AffExpr {
    pub scalars: Vec<(ScalarVar, f64)>,
    pub herm: Vec<(HermVar, HermCoeff)>,
    pub constant: f64,
}

impl AffExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            ..Self::default()
        }
    }

    pub fn term(v: ScalarVar, a: f64) -> Self {
        Self {
            scalars: vec![(v, a)],
            ..Self::default()
        }
    }

    pub fn herm_term(v: HermVar, c: HermCoeff) -> Self {
        Self {
            herm: vec![(v, c)],
            ..Self::default()
        }
    }

    pub fn with(mut self, v: ScalarVar, a: f64) -> Self {
        self.scalars.push((v, a));
        self
    }

    pub fn with_herm(mut self, v: HermVar, c: HermCoeff) -> Self {
        self.herm.push((v, c));
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    /// Evaluates the expression at the given variable values.
    pub fn eval(&self, scalars: &[f64], herm: &[DMatrix<Complex64>]) -> f64 {
        self.constant
            + self.scalars.iter().map(|(v, a)| a * scalars[v.0]).sum::<f64>()
            + self.herm.iter().map(|(v, c)| c.apply(&herm[v.index])).sum::<f64>()
    }

    /// Single scalar variable with positive coefficient and no constant, i.e. a plain bound.
    fn as_simple_bound(&self) -> Option<(ScalarVar, f64)> {
        match (self.scalars.as_slice(), self.herm.is_empty(), self.constant == 0.0) {
            ([(v, a)], true, true) if *a > 0.0 => Some((*v, *a)),
            _ => None,
        }
    }
}

impl From<ScalarVar> for AffExpr {
    fn from(v: ScalarVar) -> Self {
        AffExpr::term(v, 1.0)
    }
}

impl From<f64> for AffExpr {
    fn from(c: f64) -> Self {
        AffExpr::constant(c)
    }
}

impl AddAssign for AffExpr {
    fn add_assign(&mut self, o: AffExpr) {
        self.scalars.extend(o.scalars);
        self.herm.extend(o.herm);
        self.constant += o.constant;
    }
}

impl Add for AffExpr {
    type Output = AffExpr;
    fn add(mut self, o: AffExpr) -> AffExpr {
        self += o;
        self
    }
}

impl Mul<f64> for AffExpr {
    type Output = AffExpr;
    fn mul(self, s: f64) -> AffExpr {
        AffExpr {
            scalars: self.scalars.into_iter().map(|(v, a)| (v, a * s)).collect(),
            herm: self.herm.into_iter().map(|(v, c)| (v, c.scaled(s))).collect(),
            constant: self.constant * s,
        }
    }
}

impl Neg for AffExpr {
    type Output = AffExpr;
    fn neg(self) -> AffExpr {
        self * -1.0
    }
}

impl Sub for AffExpr {
    type Output = AffExpr;
    fn sub(self, o: AffExpr) -> AffExpr {
        self + (-o)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Constraint {
    /// Every expression equals zero.
    Zero(Vec<AffExpr>),
    /// Every expression is nonnegative.
    NonNeg(Vec<AffExpr>),
    /// `e[0] ≥ ‖(e[1], …, e[k])‖₂`.
    SecondOrder(Vec<AffExpr>),
    /// `(x, y, z)` with `y > 0`, `y · exp(x / y) ≤ z` (closure).
    Exponential([AffExpr; 3]),
    /// Real symmetric `dim × dim` matrix PSD; `upper` lists the upper triangle column by
    /// column: `(0,0), (0,1), (1,1), (0,2), …`.
    Psd { dim: usize, upper: Vec<AffExpr> },
}

impl Constraint {
    /// `lhs ≥ rhs`.
    pub fn geq(lhs: AffExpr, rhs: AffExpr) -> Self {
        Constraint::NonNeg(vec![lhs - rhs])
    }

    pub fn eq(lhs: AffExpr, rhs: AffExpr) -> Self {
        Constraint::Zero(vec![lhs - rhs])
    }

    /// Rotated cone `2 u v ≥ ‖w‖²`, `u, v ≥ 0`, written as a standard second-order cone.
    pub fn rotated(u: AffExpr, v: AffExpr, w: Vec<AffExpr>) -> Self {
        // 2uv ≥ ‖w‖² ⟺ (u + v) ≥ ‖(u − v, √2 w)‖
        let mut e = vec![u.clone() + v.clone(), u - v];
        e.extend(w.into_iter().map(|x| x * std::f64::consts::SQRT_2));
        Constraint::SecondOrder(e)
    }

    fn exprs(&self) -> &[AffExpr] {
        match self {
            Constraint::Zero(e) | Constraint::NonNeg(e) | Constraint::SecondOrder(e) => e,
            Constraint::Exponential(e) => e,
            Constraint::Psd { upper, .. } => upper,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConicProgram {
    scalar_count: usize,
    herm_dims: Vec<usize>,
    objective: AffExpr,
    constraints: Vec<Constraint>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_scalar(&mut self) -> ScalarVar {
        self.scalar_count += 1;
        ScalarVar(self.scalar_count - 1)
    }

    pub fn add_scalars(&mut self, n: usize) -> Vec<ScalarVar> {
        (0..n).map(|_| self.add_scalar()).collect()
    }

    /// Scalar with the bound `x ≥ 0` attached.
    pub fn add_nonneg_scalar(&mut self) -> ScalarVar {
        let v = self.add_scalar();
        self.constraints.push(Constraint::NonNeg(vec![v.into()]));
        v
    }

    /// Hermitian `dim × dim` block, constrained PSD.
    pub fn add_hermitian(&mut self, dim: usize) -> HermVar {
        self.herm_dims.push(dim);
        HermVar {
            index: self.herm_dims.len() - 1,
            dim,
        }
    }

    pub fn minimize(&mut self, e: AffExpr) {
        self.objective = e;
    }

    /// Maximization is stored as minimization of the negated objective; the reported
    /// objective of the solution is then the negated maximum.
    pub fn maximize(&mut self, e: AffExpr) {
        self.objective = -e;
    }

    pub fn add(&mut self, c: Constraint) {
        self.constraints.push(c);
    }

    pub fn scalar_count(&self) -> usize {
        self.scalar_count
    }

    pub fn herm_dims(&self) -> &[usize] {
        &self.herm_dims
    }

    pub fn objective(&self) -> &AffExpr {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Checks that every reference points to a declared variable and cone sizes make sense.
    pub fn validate(&self) -> Result<(), ConicError> {
        let check = |e: &AffExpr| -> Result<(), ConicError> {
            for (v, a) in &e.scalars {
                if v.0 >= self.scalar_count {
                    return Err(ConicError::Malformed(format!("unknown scalar variable {}", v.0)));
                }
                if !a.is_finite() {
                    return Err(ConicError::Malformed("non-finite coefficient".into()));
                }
            }
            for (v, c) in &e.herm {
                let Some(&dim) = self.herm_dims.get(v.index) else {
                    return Err(ConicError::Malformed(format!("unknown Hermitian block {}", v.index)));
                };
                if dim != v.dim || c.max_index().is_some_and(|m| m >= dim) {
                    return Err(ConicError::Malformed(format!(
                        "coefficient does not fit Hermitian block {} of size {dim}",
                        v.index
                    )));
                }
                if let HermCoeff::Dense(m) = c {
                    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                        return Err(ConicError::Malformed("non-finite coefficient".into()));
                    }
                }
            }
            if !e.constant.is_finite() {
                return Err(ConicError::Malformed("non-finite constant".into()));
            }
            Ok(())
        };
        check(&self.objective)?;
        for c in &self.constraints {
            match c {
                Constraint::SecondOrder(e) if e.is_empty() => {
                    return Err(ConicError::Malformed("empty second-order cone".into()))
                }
                Constraint::Psd { dim, upper } if upper.len() != dim * (dim + 1) / 2 || *dim == 0 => {
                    return Err(ConicError::Malformed(format!(
                        "PSD constraint of size {dim} needs {} entries, got {}",
                        dim * (dim + 1) / 2,
                        upper.len()
                    )))
                }
                _ => {}
            }
            for e in c.exprs() {
                check(e)?;
            }
        }
        if self.herm_dims.contains(&0) {
            return Err(ConicError::Malformed("empty Hermitian block".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Backend {
    #[default]
    Auto,
    Clarabel,
    HermitianIpm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolutionValues {
    pub scalars: Vec<f64>,
    pub hermitian: Vec<DMatrix<Complex64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    /// Present exactly when `status` is [`SolveStatus::Optimal`].
    pub values: Option<SolutionValues>,
    /// Primal objective of the minimization form.
    pub objective: f64,
    /// Dual objective of the minimization form.
    pub dual_objective: f64,
    /// Largest of the relative duality gap and the primal and dual residuals.
    pub achieved_tol: f64,
    pub iterations: usize,
    pub backend: Backend,
}

impl ConicSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Value of a scalar variable; `None` unless optimal.
    pub fn scalar(&self, v: ScalarVar) -> Option<f64> {
        self.values.as_ref().map(|s| s.scalars[v.0])
    }

    pub fn hermitian(&self, v: HermVar) -> Option<&DMatrix<Complex64>> {
        self.values.as_ref().map(|s| &s.hermitian[v.index])
    }

    pub(crate) fn failed(status: SolveStatus, iterations: usize, backend: Backend) -> Self {
        Self {
            status,
            values: None,
            objective: f64::NAN,
            dual_objective: f64::NAN,
            achieved_tol: f64::INFINITY,
            iterations,
            backend,
        }
    }
}

/// Solves with [`Backend::Auto`].
pub fn solve(prog: &ConicProgram, tol: f64) -> Result<ConicSolution, ConicError> {
    solve_with(prog, tol, Backend::Auto)
}

pub fn solve_with(prog: &ConicProgram, tol: f64, backend: Backend) -> Result<ConicSolution, ConicError> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(ConicError::Malformed(format!("tolerance must be positive, got {tol}")));
    }
    prog.validate()?;
    match backend {
        Backend::Clarabel => clarabel_backend::solve(prog, tol),
        Backend::HermitianIpm => match hermitian_ipm::StandardForm::from_program(prog) {
            Some(sf) => Ok(hermitian_ipm::solve(prog, &sf, tol)),
            None => Err(ConicError::Unsupported(Backend::HermitianIpm)),
        },
        Backend::Auto => {
            if let Some(sf) = hermitian_ipm::StandardForm::from_program(prog) {
                let sol = hermitian_ipm::solve(prog, &sf, tol);
                if sol.is_optimal() {
                    return Ok(sol);
                }
                log::debug!("structured IPM ended with {:?}, retrying with Clarabel", sol.status);
            }
            clarabel_backend::solve(prog, tol)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_lp() {
        let mut p = ConicProgram::new();
        let x = p.add_scalar();
        p.add(Constraint::geq(x.into(), 3.0.into()));
        p.minimize(x.into());
        for b in [Backend::Auto, Backend::Clarabel] {
            let s = solve_with(&p, 1e-8, b).unwrap();
            assert!(s.is_optimal());
            assert!((s.scalar(x).unwrap() - 3.0).abs() < 1e-6);
        }
        // free scalar: not in the structured form
        assert_eq!(
            solve_with(&p, 1e-8, Backend::HermitianIpm).unwrap_err(),
            ConicError::Unsupported(Backend::HermitianIpm)
        );
    }

    #[test]
    fn unit_diagonal_trace() {
        let mut p = ConicProgram::new();
        let v = p.add_hermitian(2);
        for l in 0..2 {
            p.add(Constraint::eq(AffExpr::herm_term(v, HermCoeff::diagonal_entry(l)), 1.0.into()));
        }
        p.maximize(AffExpr::herm_term(v, HermCoeff::identity(2)));
        for b in [Backend::HermitianIpm, Backend::Clarabel] {
            let s = solve_with(&p, 1e-8, b).unwrap();
            assert!(s.is_optimal(), "{b:?}");
            assert!((-s.objective - 2.0).abs() < 1e-6, "{b:?} {}", s.objective);
        }
    }

    #[test]
    fn infeasible_lp_is_reported() {
        let mut p = ConicProgram::new();
        let x = p.add_nonneg_scalar();
        p.add(Constraint::geq(AffExpr::constant(-1.0), x.into()));
        p.minimize(x.into());
        let s = solve(&p, 1e-8).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
        assert!(s.values.is_none());
    }

    #[test]
    fn malformed_references_are_rejected() {
        let mut p = ConicProgram::new();
        p.minimize(AffExpr::term(ScalarVar(3), 1.0));
        assert!(matches!(solve(&p, 1e-8), Err(ConicError::Malformed(_))));
        let mut p = ConicProgram::new();
        let v = p.add_hermitian(2);
        p.minimize(AffExpr::herm_term(v, HermCoeff::diagonal_entry(2)));
        assert!(matches!(solve(&p, 1e-8), Err(ConicError::Malformed(_))));
    }

    #[test]
    fn exponential_and_second_order_cones() {
        // max log(1 + 2p) s.t. 0 ≤ p ≤ 1  →  t = ln 3
        let mut prog = ConicProgram::new();
        let p = prog.add_nonneg_scalar();
        let t = prog.add_scalar();
        prog.add(Constraint::geq(1.0.into(), p.into()));
        prog.add(Constraint::Exponential([t.into(), 1.0.into(), AffExpr::term(p, 2.0).plus(1.0)]));
        prog.maximize(t.into());
        let s = solve(&prog, 1e-9).unwrap();
        assert!((s.scalar(t).unwrap() - 3f64.ln()).abs() < 1e-6);

        // min t s.t. t ≥ ‖(3, 4)‖
        let mut prog = ConicProgram::new();
        let t = prog.add_scalar();
        prog.add(Constraint::SecondOrder(vec![t.into(), 3.0.into(), 4.0.into()]));
        prog.minimize(t.into());
        let s = solve(&prog, 1e-9).unwrap();
        assert!((s.scalar(t).unwrap() - 5.0).abs() < 1e-6);
    }

    #[test]
    fn real_lmi() {
        // min t s.t. [[t, 1], [1, t]] ⪰ 0  →  t = 1
        let mut prog = ConicProgram::new();
        let t = prog.add_scalar();
        prog.add(Constraint::Psd {
            dim: 2,
            upper: vec![t.into(), 1.0.into(), t.into()],
        });
        prog.minimize(t.into());
        let s = solve(&prog, 1e-9).unwrap();
        assert!((s.scalar(t).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rotated_cone() {
        // min u s.t. 2·u·1 ≥ 3²  →  u = 4.5
        let mut prog = ConicProgram::new();
        let u = prog.add_scalar();
        prog.add(Constraint::rotated(u.into(), 1.0.into(), vec![3.0.into()]));
        prog.minimize(u.into());
        let s = solve(&prog, 1e-9).unwrap();
        assert!((s.scalar(u).unwrap() - 4.5).abs() < 1e-6);
    }

    #[test]
    fn tolerance_from_environment_is_validated() {
        assert!(default_tolerance() > 0.0);
    }
}
