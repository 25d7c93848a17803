//! Robust per-slot passive beamforming.
//!
//! The reflection vector is `v = [e^{jθ₁}, …, e^{jθ_L}, 1]ᵀ`. With the stacked signal channel
//! `h_g` (conjugated cascade, see [`ChannelSet::signal_cascade`]) the received signal gain is
//! `|vᴴ h_g|²`, and every sampled jammer position contributes a channel `h_t` of the same
//! shape. The jammer is modelled by the convex hull `Σ α_t h_t h_tᴴ` of the samples; the
//! weights follow the proportional rule `α_t ∝ |vᴴ h_t|²`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::channels::{cascade, upa_array_factor, propagation_phase, ChannelSet};
use crate::convex_backend::{self, AffExpr, Constraint, ConicProgram, HermCoeff, HermVar, ScalarVar};
use crate::error::{Error, Result};
use crate::scenario::{wrap_phase, BetaPolicy, Position3, SystemConfig, UncertaintyRegion};
use crate::seeds;

type CMat = DMatrix<Complex64>;
type CVec = DVector<Complex64>;
type Position = Position3<f64>;

const RANK_ONE_RATIO: f64 = 1e-6;

/// Path-loss amplitude bounds `(β^min, β^max)` from `point` to the region.
pub fn beta_bounds(region: &UncertaintyRegion<f64>, point: Position, rho: f64) -> (f64, f64) {
    let d_max = point.distance(region.farthest_point(point));
    let d_min = point.distance(region.closest_point(point));
    (rho.sqrt() / d_max, rho.sqrt() / d_min.max(1.0))
}

/// Discrete jammer channels spanning the uncertainty hull of one slot.
#[derive(Clone, Debug, PartialEq)]
pub struct JammerSampleSet {
    /// Stacked conjugated cascades `h_t` of length `L + 1`.
    pub samples: Vec<CVec>,
    pub alpha: Vec<f64>,
    /// Offsets from the region center that generated each sample.
    pub offsets: Vec<Position>,
}

/// Samples `t` jammer positions on the Fibonacci lattice of the hemisphere and builds their
/// cascaded channels toward the UAV at `uav`. Amplitudes are the bounds selected by
/// `cfg.beta_policy`; phases and angles come from the sampled geometry.
pub fn sample_jammer_channels(cfg: &SystemConfig, ch: &ChannelSet, uav: Position, t: usize) -> Result<JammerSampleSet> {
    if t == 0 {
        return Err(Error::Domain("at least one hull sample is required".into()));
    }
    let region = &cfg.jammer;
    let (mu_min, mu_max) = beta_bounds(region, uav, cfg.rho);
    let (mr_min, mr_max) = beta_bounds(region, cfg.irs_pos, cfg.rho);
    let (beta_mu, beta_mr) = match cfg.beta_policy {
        BetaPolicy::Min => (mu_min, mr_min),
        BetaPolicy::Max => (mu_max, mr_max),
    };
    let use_irs = ch.elements() > 0;
    let mut samples = Vec::with_capacity(t);
    let mut offsets = Vec::with_capacity(t);
    for k in 0..t {
        let off = region.fibonacci_offset(k, t);
        let pos = region.center + off;
        let d_mu = pos.distance(uav);
        let h_mu = propagation_phase(d_mu, cfg.wavelength) * beta_mu;
        let h_mr: Vec<Complex64> = if use_irs {
            let d_mr = pos.distance(cfg.irs_pos);
            let lead = propagation_phase(d_mr, cfg.wavelength) * beta_mr;
            upa_array_factor(cfg.irs_pos, pos, cfg.lx, cfg.lz, cfg.elem_spacing, cfg.wavelength)?
                .into_iter()
                .map(|e| e * lead)
                .collect()
        } else {
            Vec::new()
        };
        let c = cascade(h_mu, &h_mr, &ch.h_ru);
        samples.push(CVec::from_iterator(c.len(), c.into_iter().map(|z| z.conj())));
        offsets.push(off);
    }
    Ok(JammerSampleSet {
        samples,
        alpha: vec![1.0 / t as f64; t],
        offsets,
    })
}

/// Hull weights `α_t = g_t / Σ g_s`; uniform (with a warning flag) when every gain vanishes.
pub fn cauchy_weights(gains: &[f64]) -> Result<(Vec<f64>, bool)> {
    if gains.is_empty() {
        return Err(Error::Domain("no sample gains".into()));
    }
    if gains.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
        return Err(Error::Domain("sample gains must be finite and non-negative".into()));
    }
    let total: f64 = gains.iter().sum();
    if total == 0.0 {
        log::warn!("all hull sample gains vanish; using uniform weights");
        return Ok((vec![1.0 / gains.len() as f64; gains.len()], true));
    }
    Ok((gains.iter().map(|g| g / total).collect(), false))
}

/// Data of the per-slot fractional program `max vᴴAv / (vᴴBv + σ²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotSdpData {
    pub a: CMat,
    pub b: CMat,
    pub sigma2: f64,
}

impl SlotSdpData {
    /// `A = w_g w_gᴴ`, `B = p_m Σ α_t h_t h_tᴴ`.
    pub fn new(w_g: &CVec, set: &JammerSampleSet, p_jam: f64, sigma2: f64) -> Self {
        let n = w_g.len();
        let a = w_g * w_g.adjoint();
        let active: Vec<(&CVec, f64)> = set
            .samples
            .iter()
            .zip(&set.alpha)
            .filter(|(_, &al)| al > 0.0)
            .map(|(h, &al)| (h, (p_jam * al).sqrt()))
            .collect();
        let stacked = CMat::from_fn(n, active.len(), |r, c| active[c].0[r] * active[c].1);
        let b = crate::linalg::gram(&stacked);
        Self { a, b, sigma2 }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// `vᴴAv / (vᴴBv + σ²)`.
    pub fn ratio(&self, v: &CVec) -> f64 {
        let num = v.dotc(&(&self.a * v)).re;
        let den = v.dotc(&(&self.b * v)).re + self.sigma2;
        num / den
    }
}

/// Relaxed program over `Ṽ = kV` and `k`, with the data scaling kept to undo it.
#[derive(Clone, Debug)]
pub struct SlotSdp {
    pub program: ConicProgram,
    pub v: HermVar,
    pub k: ScalarVar,
    /// Objective of the program times `objective_scale` is the relaxed SINR bound.
    pub objective_scale: f64,
}

/// Charnes–Cooper form
/// `max tr(AṼ)` s.t. `Ṽ_ll = k`, `tr(BṼ) + kσ² = 1`, `Ṽ ⪰ 0`, `k ≥ 0`.
pub fn build_slot_sdp(data: &SlotSdpData) -> SlotSdp {
    let n = data.dim();
    // Common rescaling of (B, σ²) and separate rescaling of A keep entries of order one.
    let den_scale = data.sigma2 + (0..n).map(|l| data.b[(l, l)].re).fold(0.0, f64::max);
    let num_scale = (0..n).map(|l| data.a[(l, l)].re).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let a = &data.a * Complex64::new(1.0 / num_scale, 0.0);
    let b = &data.b * Complex64::new(1.0 / den_scale, 0.0);
    let s2 = data.sigma2 / den_scale;

    let mut prog = ConicProgram::new();
    let v = prog.add_hermitian(n);
    let k = prog.add_nonneg_scalar();
    for l in 0..n {
        prog.add(Constraint::Zero(vec![AffExpr::herm_term(v, HermCoeff::diagonal_entry(l)).with(k, -1.0)]));
    }
    let b_term = if n > 0 && b.iter().any(|z| z.norm() > 0.0) {
        AffExpr::herm_term(v, HermCoeff::Dense(b))
    } else {
        AffExpr::zero()
    };
    prog.add(Constraint::Zero(vec![b_term.with(k, s2).plus(-1.0)]));
    prog.maximize(AffExpr::herm_term(v, HermCoeff::Dense(a)));
    SlotSdp {
        program: prog,
        v,
        k,
        objective_scale: num_scale / den_scale,
    }
}

/// Solved relaxation: `V = Ṽ / k` with unit diagonal, and the SINR upper bound.
#[derive(Clone, Debug)]
pub struct RelaxedSolution {
    pub v: CMat,
    pub bound: f64,
}

pub fn solve_slot_sdp(data: &SlotSdpData, tol: f64) -> Result<RelaxedSolution> {
    let sdp = build_slot_sdp(data);
    let sol = convex_backend::solve(&sdp.program, tol)?;
    let (Some(vt), Some(k)) = (sol.hermitian(sdp.v), sol.scalar(sdp.k)) else {
        return Err(Error::Domain(format!("beamforming relaxation ended with {:?}", sol.status)));
    };
    if !(k > 0.0) {
        return Err(Error::Domain("beamforming relaxation returned k = 0".into()));
    }
    Ok(RelaxedSolution {
        v: vt * Complex64::new(1.0 / k, 0.0),
        bound: -sol.objective * sdp.objective_scale,
    })
}

/// Projects `x` onto unit modulus relative to its last entry: `v_i = e^{j∠(x_i / x_last)}`.
fn unit_modulus(x: &CVec) -> CVec {
    let last = x[x.len() - 1];
    let reference = if last.norm() > 0.0 { last / last.norm() } else { Complex64::new(1.0, 0.0) };
    x.map(|z| {
        let r = z / reference;
        if r.norm() > 0.0 { r / r.norm() } else { Complex64::new(1.0, 0.0) }
    })
}

/// Phases `θ_i = ∠(v_i / v_{L+1})` in `[0, 2π)`.
pub fn phases_of(v: &CVec) -> Vec<f64> {
    let n = v.len();
    let last = v[n - 1];
    (0..n - 1).map(|i| wrap_phase((v[i] / last).arg())).collect()
}

pub fn reflection_vector(theta: &[f64]) -> CVec {
    CVec::from_iterator(
        theta.len() + 1,
        theta.iter().map(|&t| Complex64::from_polar(1.0, t)).chain(std::iter::once(Complex64::new(1.0, 0.0))),
    )
}

/// Rank-one recovery from a relaxed solution. Returns phases and the achieved ratio
/// `vᴴAv / (vᴴBv + σ²)` of the best unit-modulus candidate.
pub fn recover_phases<R: Rng>(v: &CMat, data: &SlotSdpData, randomizations: usize, rng: &mut R) -> Result<(Vec<f64>, f64)> {
    let n = v.nrows();
    if n == 0 || v.ncols() != n {
        return Err(Error::Dimension("relaxed matrix must be square and non-empty".into()));
    }
    let herm = (v + v.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = nalgebra::SymmetricEigen::new(herm);
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    if eig.eigenvalues.iter().any(|&e| e < -1e-6 * scale.max(1.0)) {
        return Err(Error::Domain("relaxed matrix is not positive semidefinite".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let l1 = eig.eigenvalues[order[0]].max(0.0);
    let l2 = if n > 1 { eig.eigenvalues[order[1]].max(0.0) } else { 0.0 };
    let principal: CVec = eig.eigenvectors.column(order[0]).into_owned();
    let mut best = unit_modulus(&principal);
    let mut best_val = data.ratio(&best);
    if l1 > 0.0 && l2 / l1 > RANK_ONE_RATIO {
        // Gaussian randomization with covariance V.
        let sqrt_l: Vec<f64> = eig.eigenvalues.iter().map(|e| e.max(0.0).sqrt()).collect();
        let half = std::f64::consts::FRAC_1_SQRT_2;
        for _ in 0..randomizations {
            let r = CVec::from_fn(n, |i, _| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re * half * sqrt_l[i], im * half * sqrt_l[i])
            });
            let cand = unit_modulus(&(&eig.eigenvectors * r));
            let val = data.ratio(&cand);
            if val > best_val {
                best_val = val;
                best = cand;
            }
        }
    }
    Ok((phases_of(&best), best_val))
}

/// Worst SINR over the discrete samples, `vᴴAv / (p_m max_t |vᴴh_t|² + σ²)`.
pub fn hull_worst_sinr(w_g: &CVec, set: &JammerSampleSet, p_jam: f64, sigma2: f64, v: &CVec) -> f64 {
    let num = v.dotc(w_g).norm_sqr();
    let worst = set.samples.iter().map(|h| v.dotc(h).norm_sqr()).fold(0.0, f64::max);
    num / (p_jam * worst + sigma2)
}

/// Everything needed to run the per-slot loop.
#[derive(Clone, Debug)]
pub struct SlotProblem {
    pub w_g: CVec,
    pub samples: JammerSampleSet,
    pub p_jam: f64,
    pub sigma2: f64,
}

impl SlotProblem {
    pub fn new(cfg: &SystemConfig, ch: &ChannelSet, uav: Position, p: f64) -> Result<Self> {
        let c = ch.signal_cascade();
        let w_g = CVec::from_iterator(c.len(), c.into_iter().map(|z| z.conj() * p.sqrt()));
        let samples = sample_jammer_channels(cfg, ch, uav, cfg.hull_samples)?;
        Ok(Self {
            w_g,
            samples,
            p_jam: cfg.p_jam,
            sigma2: cfg.sigma2,
        })
    }

    pub fn worst_sinr(&self, theta: &[f64]) -> f64 {
        hull_worst_sinr(&self.w_g, &self.samples, self.p_jam, self.sigma2, &reflection_vector(theta))
    }

    pub fn sdp_data(&self) -> SlotSdpData {
        SlotSdpData::new(&self.w_g, &self.samples, self.p_jam, self.sigma2)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlotPhaseResult {
    pub theta: Vec<f64>,
    /// Hull worst-case SINR of `theta`.
    pub worst_sinr: f64,
    /// Relaxation bound of the last solved program.
    pub sdp_bound: f64,
    pub iterations: usize,
    /// `log₂(1 + worst SINR)` after every inner iteration.
    pub trace: Vec<f64>,
}

/// Inner loop for one slot: hull weights, relaxation, rank-one recovery, repeated until the
/// worst-case rate changes by at most `mu1`. Returns the best iterate.
pub fn optimize_slot_phases(problem: &mut SlotProblem, cfg: &SystemConfig, seed: u64) -> Result<SlotPhaseResult> {
    let l = problem.w_g.len() - 1;
    let tol = cfg.solver_tol;
    if l == 0 || problem.w_g.iter().all(|z| z.norm() == 0.0) {
        let theta = vec![0.0; l];
        let s = problem.worst_sinr(&theta);
        return Ok(SlotPhaseResult {
            theta,
            worst_sinr: s,
            sdp_bound: s,
            iterations: 0,
            trace: vec![s.ln_1p() * std::f64::consts::LOG2_E],
        });
    }
    let mut v = reflection_vector(&vec![0.0; l]);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut trace = Vec::new();
    let mut bound = f64::NAN;
    let mut iterations = 0;
    for it in 0..cfg.inner_max_iters.max(1) {
        iterations = it + 1;
        let gains: Vec<f64> = problem.samples.samples.iter().map(|h| v.dotc(h).norm_sqr()).collect();
        problem.samples.alpha = cauchy_weights(&gains)?.0;
        let data = problem.sdp_data();
        let relaxed = solve_slot_sdp(&data, tol)?;
        bound = relaxed.bound;
        let mut rng = seeds::stream(seed, &[seeds::label::PHASE_RANDOMIZATION, it as u64]);
        let (theta, _) = recover_phases(&relaxed.v, &data, cfg.randomizations, &mut rng)?;
        v = reflection_vector(&theta);
        let s = problem.worst_sinr(&theta);
        let rate = s.ln_1p() * std::f64::consts::LOG2_E;
        let converged = trace.last().is_some_and(|&r: &f64| (rate - r).abs() <= cfg.mu1);
        trace.push(rate);
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((theta, s));
        }
        if converged {
            break;
        }
    }
    let (theta, worst_sinr) = best.expect("at least one inner iteration");
    Ok(SlotPhaseResult {
        theta,
        worst_sinr,
        sdp_bound: bound,
        iterations,
        trace,
    })
}
