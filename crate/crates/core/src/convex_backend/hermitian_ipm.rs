//! Primal-dual path-following method for complex Hermitian programs in standard form
//!
//! ```text
//! min  Σ_b ⟨C_b, X_b⟩ + cᵀs
//! s.t. Σ_b ⟨A_ib, X_b⟩ + (M s)_i = b_i,   X_b ⪰ 0,  s ≥ 0
//! ```
//!
//! with `⟨C, X⟩ = Re tr(C X)`. Search directions use the HKM scaling with a Mehrotra
//! predictor-corrector; the Schur complement exploits sparse coefficient matrices.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{cmul, min_eigenvalue};
use num_complex::Complex64;

use super::{
    AffExpr, Backend, ConicProgram, ConicSolution, Constraint, HermCoeff, SolutionValues,
    SolveStatus,
};

type CMat = DMatrix<Complex64>;

const MAX_ITER: usize = 120;
const STEP_FRACTION: f64 = 0.98;

#[derive(Clone, Debug)]
enum Coef {
    /// Hermitized triplets: every input triplet contributes `(r, c, v/2)` and `(c, r, v̄/2)`.
    Sparse(Vec<(usize, usize, Complex64)>),
    Dense(CMat),
}

impl Coef {
    fn from_terms(terms: &[&HermCoeff], dim: usize) -> Self {
        if terms.iter().all(|t| matches!(t, HermCoeff::Sparse(_))) {
            let mut out = Vec::new();
            for t in terms {
                if let HermCoeff::Sparse(tr) = t {
                    for &(r, c, v) in tr {
                        out.push((r, c, v * 0.5));
                        out.push((c, r, v.conj() * 0.5));
                    }
                }
            }
            Coef::Sparse(out)
        } else {
            let mut m = CMat::zeros(dim, dim);
            for t in terms {
                m += t.hermitian_dense(dim);
            }
            Coef::Dense(m)
        }
    }

    /// `Re tr(A X)`.
    fn apply(&self, x: &CMat) -> f64 {
        match self {
            Coef::Sparse(t) => t.iter().map(|&(r, c, v)| (v * x[(c, r)]).re).sum(),
            Coef::Dense(a) => a.iter().zip(x.transpose().iter()).map(|(p, q)| (p * q).re).sum(),
        }
    }

    fn add_scaled_to(&self, out: &mut CMat, y: f64) {
        match self {
            Coef::Sparse(t) => {
                for &(r, c, v) in t {
                    out[(r, c)] += v * y;
                }
            }
            Coef::Dense(a) => *out += a * Complex64::new(y, 0.0),
        }
    }

    /// `X A Z⁻¹`.
    fn sandwich(&self, x: &CMat, zinv: &CMat) -> CMat {
        match self {
            Coef::Sparse(t) => {
                let n = x.nrows();
                let mut out = CMat::zeros(n, n);
                for &(r, c, v) in t {
                    let col = x.column(r) * v;
                    out.ger(Complex64::new(1.0, 0.0), &col, &zinv.row(c).transpose(), Complex64::new(1.0, 0.0));
                }
                out
            }
            Coef::Dense(a) => cmul(&cmul(x, a), zinv),
        }
    }

    fn frobenius(&self, dim: usize) -> f64 {
        match self {
            Coef::Sparse(_) => {
                let mut m = CMat::zeros(dim, dim);
                self.add_scaled_to(&mut m, 1.0);
                m.norm()
            }
            Coef::Dense(a) => a.norm(),
        }
    }
}

/// Block coefficients and sparse scalar coefficients of one equality row.
type Row = (Vec<(usize, Coef)>, Vec<(usize, f64)>);

/// Program rewritten in the standard form above.
pub(super) struct StandardForm {
    dims: Vec<usize>,
    ns: usize,
    rows: Vec<Row>,
    b: DVector<f64>,
    c_blocks: Vec<CMat>,
    c_s: DVector<f64>,
    /// Position in `s` of every original scalar variable.
    scalar_slot: Vec<usize>,
}

impl StandardForm {
    /// `None` when the program contains cones other than equalities and nonnegativity, or a
    /// scalar variable without a plain `x ≥ 0` bound.
    pub(super) fn from_program(prog: &ConicProgram) -> Option<Self> {
        let mut slot: Vec<Option<usize>> = vec![None; prog.scalar_count()];
        let mut ns = 0;
        let mut general_nonneg: Vec<&AffExpr> = Vec::new();
        let mut zero: Vec<&AffExpr> = Vec::new();
        for c in prog.constraints() {
            match c {
                Constraint::Zero(es) => zero.extend(es.iter()),
                Constraint::NonNeg(es) => {
                    for e in es {
                        match e.as_simple_bound() {
                            Some((v, _)) if slot[v.0].is_none() => {
                                slot[v.0] = Some(ns);
                                ns += 1;
                            }
                            _ => general_nonneg.push(e),
                        }
                    }
                }
                _ => return None,
            }
        }
        let scalar_slot: Vec<usize> = slot.into_iter().collect::<Option<_>>()?;
        let dims = prog.herm_dims().to_vec();

        let mut rows = Vec::new();
        let mut b = Vec::new();
        let mut push = |e: &AffExpr, extra: Option<usize>| {
            let (blocks, mut scal) = split(e, &dims, &scalar_slot);
            if let Some(k) = extra {
                scal.push((k, -1.0));
            }
            rows.push((blocks, scal));
            b.push(-e.constant);
        };
        for e in zero {
            push(e, None);
        }
        for e in general_nonneg {
            push(e, Some(ns));
            ns += 1;
        }
        if rows.is_empty() {
            return None;
        }

        let obj = prog.objective();
        let mut c_blocks: Vec<CMat> = dims.iter().map(|&n| CMat::zeros(n, n)).collect();
        for (v, c) in &obj.herm {
            c_blocks[v.index] += c.hermitian_dense(v.dim);
        }
        let mut c_s = DVector::zeros(ns);
        for (v, a) in &obj.scalars {
            c_s[scalar_slot[v.0]] += a;
        }
        Some(Self {
            dims,
            ns,
            rows,
            b: DVector::from_vec(b),
            c_blocks,
            c_s,
            scalar_slot,
        })
    }

    fn m(&self) -> usize {
        self.rows.len()
    }

    fn op(&self, x: &[CMat], s: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.m(),
            self.rows.iter().map(|(bl, sc)| {
                bl.iter().map(|(k, a)| a.apply(&x[*k])).sum::<f64>()
                    + sc.iter().map(|&(k, a)| a * s[k]).sum::<f64>()
            }),
        )
    }

    fn adjoint(&self, y: &DVector<f64>) -> (Vec<CMat>, DVector<f64>) {
        let mut mats: Vec<CMat> = self.dims.iter().map(|&n| CMat::zeros(n, n)).collect();
        let mut v = DVector::zeros(self.ns);
        for (i, (bl, sc)) in self.rows.iter().enumerate() {
            for (k, a) in bl {
                a.add_scaled_to(&mut mats[*k], y[i]);
            }
            for &(k, a) in sc {
                v[k] += a * y[i];
            }
        }
        (mats, v)
    }
}

fn split(e: &AffExpr, dims: &[usize], scalar_slot: &[usize]) -> Row {
    let mut by_block: Vec<Vec<&HermCoeff>> = vec![Vec::new(); dims.len()];
    for (v, c) in &e.herm {
        by_block[v.index].push(c);
    }
    let blocks = by_block
        .iter()
        .enumerate()
        .filter(|(_, t)| !t.is_empty())
        .map(|(k, t)| (k, Coef::from_terms(t, dims[k])))
        .collect();
    let scal = e.scalars.iter().map(|(v, a)| (scalar_slot[v.0], *a)).collect();
    (blocks, scal)
}

fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

fn inner(a: &CMat, b: &CMat) -> f64 {
    a.dotc(b).re
}

/// Largest step `α ≤ 1/γ`-scaled so that `X + α ΔX ⪰ 0`; `None` when `X` is not PD.
fn max_step_psd(x: &CMat, dx: &CMat) -> Option<f64> {
    let l = x.clone().cholesky()?.l();
    let y = l.solve_lower_triangular(dx)?;
    let m = l.solve_lower_triangular(&y.adjoint())?.adjoint();
    let lmin = min_eigenvalue(&hermitian_part(&m));
    Some(if lmin >= 0.0 { f64::INFINITY } else { -1.0 / lmin })
}

fn max_step_vec(s: &DVector<f64>, ds: &DVector<f64>) -> f64 {
    s.iter()
        .zip(ds.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&a, &d)| -a / d)
        .fold(f64::INFINITY, f64::min)
}

struct Direction {
    dx: Vec<CMat>,
    dz: Vec<CMat>,
    ds: DVector<f64>,
    dzs: DVector<f64>,
    dy: DVector<f64>,
}

pub(super) fn solve(prog: &ConicProgram, sf: &StandardForm, tol: f64) -> ConicSolution {
    let fail = |status, it| ConicSolution::failed(status, it, Backend::HermitianIpm);
    let m = sf.m();
    let nb = sf.dims.len();

    // Starting point scaled to the data.
    let b_norm = sf.b.norm();
    let c_norm = sf.c_blocks.iter().map(|c| c.norm_squared()).sum::<f64>().sqrt() + sf.c_s.norm();
    let mut x: Vec<CMat> = Vec::with_capacity(nb);
    let mut z: Vec<CMat> = Vec::with_capacity(nb);
    for (k, &n) in sf.dims.iter().enumerate() {
        let nf = n as f64;
        let mut xi: f64 = 10f64.max(nf.sqrt());
        let mut eta: f64 = 10f64.max(nf.sqrt()).max(sf.c_blocks[k].norm());
        for (i, (bl, _)) in sf.rows.iter().enumerate() {
            for (kk, a) in bl {
                if *kk == k {
                    let fa = a.frobenius(n);
                    xi = xi.max(nf * (1.0 + sf.b[i].abs()) / (1.0 + fa));
                    eta = eta.max(fa);
                }
            }
        }
        x.push(CMat::identity(n, n) * Complex64::new(xi, 0.0));
        z.push(CMat::identity(n, n) * Complex64::new(eta, 0.0));
    }
    let mut s = DVector::from_element(sf.ns, 10f64.max(1.0 + b_norm));
    let mut zs = DVector::from_element(sf.ns, 10f64.max(1.0 + sf.c_s.amax()));
    let mut y = DVector::zeros(m);
    let nu = sf.dims.iter().sum::<usize>() as f64 + sf.ns as f64;

    for iter in 0..MAX_ITER {
        let rp = &sf.b - sf.op(&x, &s);
        let (aty, mty) = sf.adjoint(&y);
        let rd: Vec<CMat> = (0..nb).map(|k| &sf.c_blocks[k] - &aty[k] - &z[k]).collect();
        let rds = &sf.c_s - &mty - &zs;

        let pobj: f64 = (0..nb).map(|k| inner(&sf.c_blocks[k], &x[k])).sum::<f64>() + sf.c_s.dot(&s);
        let dobj = sf.b.dot(&y);
        let comp: f64 = (0..nb).map(|k| inner(&x[k], &z[k])).sum::<f64>() + s.dot(&zs);
        let mu = comp / nu;
        let relp = rp.norm() / (1.0 + b_norm);
        let reld = (rd.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt() + rds.norm()) / (1.0 + c_norm);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let achieved = relp.max(reld).max(gap);
        if !achieved.is_finite() || !mu.is_finite() {
            return fail(SolveStatus::NumericalFailure, iter);
        }
        if achieved <= tol {
            let scalars = sf.scalar_slot.iter().map(|&k| s[k]).collect();
            let constant = prog.objective().constant;
            return ConicSolution {
                status: SolveStatus::Optimal,
                values: Some(SolutionValues {
                    scalars,
                    hermitian: x,
                }),
                objective: pobj + constant,
                dual_objective: dobj + constant,
                achieved_tol: achieved,
                iterations: iter,
                backend: Backend::HermitianIpm,
            };
        }
        if x.iter().chain(&z).any(|w| w.norm() > 1e14) || y.amax() > 1e14 {
            return fail(SolveStatus::NumericalFailure, iter);
        }

        let mut zinv = Vec::with_capacity(nb);
        for zk in &z {
            match zk.clone().cholesky() {
                Some(ch) => zinv.push(ch.inverse()),
                None => return fail(SolveStatus::NumericalFailure, iter),
            }
        }
        let dvec = s.component_div(&zs);

        // Schur complement H_ij = Σ_b Re tr(A_ib X_b A_jb Z_b⁻¹) + Σ_k M_ik M_jk s_k / z_k.
        let mut h = DMatrix::<f64>::zeros(m, m);
        for j in 0..m {
            let (blj, scj) = &sf.rows[j];
            for (k, aj) in blj {
                let t = aj.sandwich(&x[*k], &zinv[*k]);
                for i in 0..m {
                    for (kk, ai) in &sf.rows[i].0 {
                        if kk == k {
                            h[(i, j)] += ai.apply(&t);
                        }
                    }
                }
            }
            for i in 0..m {
                let sci = &sf.rows[i].1;
                for &(ki, ai) in sci {
                    for &(kj, aj) in scj {
                        if ki == kj {
                            h[(i, j)] += ai * aj * dvec[ki];
                        }
                    }
                }
            }
        }
        let h = (&h + h.transpose()) * 0.5;
        let trace = h.trace().abs().max(1e-300);
        let chol = h
            .clone()
            .cholesky()
            .or_else(|| (h.clone() + DMatrix::identity(m, m) * (1e-13 * trace / m as f64)).cholesky());
        let Some(chol) = chol else {
            return fail(SolveStatus::NumericalFailure, iter);
        };

        // Direction for given right-hand sides G (blocks) and g (scalars).
        let direction = |g: Vec<CMat>, gs: DVector<f64>| -> Direction {
            let rhs = &rp - sf.op(&g, &gs);
            let dy = chol.solve(&rhs);
            let (ady, mdy) = sf.adjoint(&dy);
            let dx: Vec<CMat> = (0..nb)
                .map(|k| hermitian_part(&(&g[k] + cmul(&cmul(&x[k], &ady[k]), &zinv[k]))))
                .collect();
            let dz: Vec<CMat> = (0..nb).map(|k| &rd[k] - &ady[k]).collect();
            let ds = &gs + dvec.component_mul(&mdy);
            let dzs = &rds - &mdy;
            Direction { dx, dz, ds, dzs, dy }
        };
        let steps = |d: &Direction| -> Option<(f64, f64)> {
            let mut ap = max_step_vec(&s, &d.ds);
            let mut ad = max_step_vec(&zs, &d.dzs);
            for k in 0..nb {
                ap = ap.min(max_step_psd(&x[k], &d.dx[k])?);
                ad = ad.min(max_step_psd(&z[k], &d.dz[k])?);
            }
            Some(((STEP_FRACTION * ap).min(1.0), (STEP_FRACTION * ad).min(1.0)))
        };

        // Predictor.
        let base: Vec<CMat> = (0..nb).map(|k| -&x[k] - cmul(&cmul(&x[k], &rd[k]), &zinv[k])).collect();
        let base_s = -&s - s.component_mul(&rds).component_div(&zs);
        let pred = direction(base.clone(), base_s.clone());
        let Some((ap, ad)) = steps(&pred) else {
            return fail(SolveStatus::NumericalFailure, iter);
        };
        let comp_aff: f64 = (0..nb)
            .map(|k| inner(&(&x[k] + &pred.dx[k] * Complex64::new(ap, 0.0)), &(&z[k] + &pred.dz[k] * Complex64::new(ad, 0.0))))
            .sum::<f64>()
            + (&s + &pred.ds * ap).dot(&(&zs + &pred.dzs * ad));
        let sigma = ((comp_aff / nu) / mu).clamp(0.0, 1.0).powi(3);

        // Corrector.
        let smu = Complex64::new(sigma * mu, 0.0);
        let g: Vec<CMat> = (0..nb)
            .map(|k| &base[k] + &zinv[k] * smu - cmul(&cmul(&pred.dx[k], &pred.dz[k]), &zinv[k]))
            .collect();
        let gs = &base_s + zs.map(|v| sigma * mu / v) - pred.ds.component_mul(&pred.dzs).component_div(&zs);
        let corr = direction(g, gs);
        let Some((ap, ad)) = steps(&corr) else {
            return fail(SolveStatus::NumericalFailure, iter);
        };
        let (cp, cd) = (Complex64::new(ap, 0.0), Complex64::new(ad, 0.0));
        for k in 0..nb {
            x[k] = hermitian_part(&(&x[k] + &corr.dx[k] * cp));
            z[k] = hermitian_part(&(&z[k] + &corr.dz[k] * cd));
        }
        s += &corr.ds * ap;
        zs += &corr.dzs * ad;
        y += &corr.dy * ad;
    }
    fail(SolveStatus::NumericalFailure, MAX_ITER)
}
