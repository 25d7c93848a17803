//! Trajectory design by successive convex approximation.
//!
//! Every slot carries slacks `S`, `G` with `SINR = 1/(S·G)`, inverse-distance slacks
//! `ξ₁ ≤ 1/d_gu`, `ξ₂ ≤ 1/d_ru`, `ξ₃ ≥ 1/√d`, `ξ₄ ≥ 1/d_ru` and a squared jammer
//! distance `d` certified against the whole uncertainty ball by a 4×4 LMI. Channel phases
//! are frozen at the incumbent; distances enter through the slacks. Internally all lengths
//! are measured in units of the flight altitude so that the conic data stay well scaled.

use std::f64::consts::SQRT_2;

use nalgebra::{Matrix2, Matrix4, SymmetricEigen};
use num_complex::Complex64;

use crate::channels::{channel_set, closest_jammer_rate, los_scalar, upa_steering};
use crate::convex_backend::{self, AffExpr, ConicProgram, Constraint, ScalarVar};
use crate::error::{Error, Result};
use crate::scenario::{PhaseSchedule, Position3, PowerSchedule, SystemConfig, Trajectory, UncertaintyRegion};

type Position = Position3<f64>;

/// `log₂(1 + 1/(S·G))`.
pub fn slack_rate(s: f64, g: f64) -> f64 {
    (1.0 / (s * g)).ln_1p() * std::f64::consts::LOG2_E
}

/// Partial derivatives `(∂f/∂S, ∂f/∂G)` of [`slack_rate`] at `(s0, g0)`.
pub fn zeta_coefficients(s0: f64, g0: f64) -> Result<(f64, f64)> {
    if !(s0 > 0.0 && g0 > 0.0) || !s0.is_finite() || !g0.is_finite() {
        return Err(Error::Domain(format!("expansion point must be positive (S0 = {s0}, G0 = {g0})")));
    }
    let l = std::f64::consts::LOG2_E;
    Ok((-l / (s0 + s0 * s0 * g0), -l / (g0 + g0 * g0 * s0)))
}

/// Tangent plane of [`slack_rate`] at `(s0, g0)`, a global minorant.
pub fn rate_surrogate(s: f64, g: f64, s0: f64, g0: f64) -> Result<f64> {
    let (z1, z2) = zeta_coefficients(s0, g0)?;
    Ok(slack_rate(s0, g0) + z1 * (s - s0) + z2 * (g - g0))
}

/// Tangent of `ξ⁻²` at `ξ0`: `ξ0⁻² − 2ξ0⁻³(ξ − ξ0)`.
pub fn xi_tangent(xi: f64, xi0: f64) -> f64 {
    xi0.powi(-2) - 2.0 * xi0.powi(-3) * (xi - xi0)
}

/// Squared UAV–IRS distance at horizontal position `(x, y)` and altitude `h`.
pub fn f2(x: f64, y: f64, irs: Position, h: f64) -> f64 {
    (x - irs.x).powi(2) + (y - irs.y).powi(2) + (h - irs.z).powi(2)
}

/// Tangent-plane minorant of [`f2`] in `(x, y)` at `(x0, y0)`.
pub fn f2_tangent(x: f64, y: f64, x0: f64, y0: f64, irs: Position, h: f64) -> f64 {
    -x0 * x0 + 2.0 * x0 * x - 2.0 * irs.x * x + irs.x * irs.x - y0 * y0 + 2.0 * y0 * y - 2.0 * irs.y * y
        + irs.y * irs.y
        + (h - irs.z).powi(2)
}

/// Bottom-right entry of the S-procedure matrix; with `tangent` the convex terms `x²`, `y²`
/// are replaced by their tangent lines at `(x0, y0)`.
#[allow(clippy::too_many_arguments)]
pub fn theta_corner(x: f64, y: f64, d: f64, delta: f64, x0: f64, y0: f64, region: &UncertaintyRegion<f64>, h: f64, tangent: bool) -> f64 {
    let c = region.center;
    let (xx, yy) = if tangent {
        (2.0 * x0 * x - x0 * x0, 2.0 * y0 * y - y0 * y0)
    } else {
        (x * x, y * y)
    };
    -region.radius.powi(2) * delta + xx - 2.0 * c.x * x + c.x * c.x + yy - 2.0 * c.y * y + c.y * c.y + (h - c.z).powi(2) - d
}

/// Numeric S-procedure matrix at a candidate point.
#[allow(clippy::too_many_arguments)]
pub fn theta_matrix(x: f64, y: f64, d: f64, delta: f64, x0: f64, y0: f64, region: &UncertaintyRegion<f64>, h: f64, tangent: bool) -> Matrix4<f64> {
    let c = region.center;
    let mut m = Matrix4::zeros();
    for i in 0..3 {
        m[(i, i)] = delta + 1.0;
    }
    let off = [c.x - x, c.y - y, c.z - h];
    for i in 0..3 {
        m[(i, 3)] = off[i];
        m[(3, i)] = off[i];
    }
    m[(3, 3)] = theta_corner(x, y, d, delta, x0, y0, region, h, tangent);
    m
}

/// LMI `Θ̃(x, y, d, δ) ⪰ 0`, which implies `d ≤ ‖(x, y, h) − q_m‖²` for every `q_m` in the
/// ball of `region`. All quantities share one length unit.
#[allow(clippy::too_many_arguments)]
pub fn build_theta_lmi(x: &AffExpr, y: &AffExpr, d: &AffExpr, delta: &AffExpr, x0: f64, y0: f64, region: &UncertaintyRegion<f64>, h: f64) -> Constraint {
    let c = region.center;
    let diag = delta.clone().plus(1.0);
    let zero = AffExpr::zero();
    let corner = (delta.clone() * -(region.radius * region.radius))
        + x.clone() * (2.0 * x0 - 2.0 * c.x)
        + y.clone() * (2.0 * y0 - 2.0 * c.y)
        - d.clone();
    let corner = corner.plus(-x0 * x0 + c.x * c.x - y0 * y0 + c.y * c.y + (h - c.z).powi(2));
    let upper = vec![
        diag.clone(),
        zero.clone(),
        diag.clone(),
        zero.clone(),
        zero,
        diag,
        AffExpr::constant(c.x) - x.clone(),
        AffExpr::constant(c.y) - y.clone(),
        AffExpr::constant(c.z - h),
        corner,
    ];
    Constraint::Psd { dim: 4, upper }
}

/// Phase-frozen channel factors of one slot: `g = |H₀ a + H₁ b|²` with `a` the inverse direct
/// distance and `b = 1/d_ru`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlotChannelMatrices {
    pub signal: [Complex64; 2],
    pub jammer: [Complex64; 2],
}

fn real_gram(h: &[Complex64; 2]) -> Matrix2<f64> {
    Matrix2::from_fn(|i, j| (h[i].conj() * h[j]).re)
}

impl SlotChannelMatrices {
    /// `Re(H_gᴴ H_g)`.
    pub fn signal_form(&self) -> Matrix2<f64> {
        real_gram(&self.signal)
    }

    /// `Re(H_mᴴ H_m)`.
    pub fn jammer_form(&self) -> Matrix2<f64> {
        real_gram(&self.jammer)
    }
}

fn reflect_sum(cin: &[Complex64], theta: &[f64], cout: &[Complex64]) -> Complex64 {
    cin.iter()
        .zip(theta)
        .zip(cout)
        .map(|((a, &t), b)| a.conj() * Complex64::from_polar(1.0, t) * b)
        .sum()
}

/// Factors the gains at UAV position `uav` with phases `theta`. The direct jammer path uses
/// the region point closest to the UAV; the jammer–IRS path uses the point farthest from
/// the IRS.
pub fn build_slot_channel_matrices(cfg: &SystemConfig, uav: Position, theta: &[f64]) -> Result<SlotChannelMatrices> {
    let d_gu = uav.distance(cfg.gn_pos);
    let jam = cfg.jammer.closest_point(uav);
    let d_mu = uav.distance(jam);
    let h_gu = los_scalar(cfg.gn_pos, uav, cfg.rho, cfg.wavelength)?;
    let h_mu = los_scalar(jam, uav, cfg.rho, cfg.wavelength)?;
    let (s1, j1) = if cfg.elements() == 0 {
        (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
    } else {
        if theta.len() != cfg.elements() {
            return Err(Error::Dimension(format!("expected {} phases, got {}", cfg.elements(), theta.len())));
        }
        let st = |t| upa_steering(cfg.irs_pos, t, cfg.lx, cfg.lz, cfg.elem_spacing, cfg.wavelength, cfg.rho);
        let h_ru = st(uav)?;
        let h_gr = st(cfg.gn_pos)?;
        let h_mr = st(cfg.jammer.farthest_point(cfg.irs_pos))?;
        let d_ru = uav.distance(cfg.irs_pos);
        (reflect_sum(&h_gr, theta, &h_ru) * d_ru, reflect_sum(&h_mr, theta, &h_ru) * d_ru)
    };
    Ok(SlotChannelMatrices {
        signal: [h_gu * d_gu, s1],
        jammer: [h_mu * d_mu, j1],
    })
}

/// Shifts every IRS phase so that the reflected paths keep their alignment with the direct
/// path when the UAV moves from `from` to `to`.
pub fn track_phases(cfg: &SystemConfig, from: &Trajectory, to: &Trajectory, g: &PhaseSchedule) -> Result<PhaseSchedule> {
    if cfg.elements() == 0 {
        return Ok(g.clone());
    }
    let mut theta = g.theta.clone();
    for (n, row) in theta.iter_mut().enumerate() {
        let (a, b) = (from.slot_position(n), to.slot_position(n));
        if a == b {
            continue;
        }
        let ca = channel_set(cfg, n, a, cfg.jammer.center)?.signal_cascade();
        let cb = channel_set(cfg, n, b, cfg.jammer.center)?.signal_cascade();
        let (da, db) = (ca[ca.len() - 1].arg(), cb[cb.len() - 1].arg());
        for (l, t) in row.iter_mut().enumerate() {
            *t = crate::scenario::wrap_phase(*t + ca[l].arg() - cb[l].arg() + db - da);
        }
    }
    Ok(PhaseSchedule { theta })
}

fn vertex_max(j: &Matrix2<f64>, a: f64, b: f64) -> f64 {
    let full = j[(0, 0)] * a * a + 2.0 * j[(0, 1)] * a * b + j[(1, 1)] * b * b;
    full.max(j[(0, 0)] * a * a).max(j[(1, 1)] * b * b)
}

/// Expansion point of one SCA step (physical units).
#[derive(Clone, Debug, PartialEq)]
pub struct LinearizationPoint {
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub s0: Vec<f64>,
    pub g0: Vec<f64>,
    /// `(ξ₁, ξ₂, ξ₃, ξ₄)` per slot, in 1/m.
    pub xi0: Vec<[f64; 4]>,
    /// Squared distance to the uncertainty ball, m².
    pub d0: Vec<f64>,
    pub channels: Vec<SlotChannelMatrices>,
}

impl LinearizationPoint {
    /// Expansion at the incumbent design with every slack constraint active.
    pub fn at(cfg: &SystemConfig, q: &Trajectory, p: &PowerSchedule, g: &PhaseSchedule) -> Result<Self> {
        let n = cfg.slots;
        let mut lin = LinearizationPoint {
            x0: Vec::with_capacity(n),
            y0: Vec::with_capacity(n),
            s0: Vec::with_capacity(n),
            g0: Vec::with_capacity(n),
            xi0: Vec::with_capacity(n),
            d0: Vec::with_capacity(n),
            channels: Vec::with_capacity(n),
        };
        for k in 0..n {
            let uav = q.slot_position(k);
            let m = build_slot_channel_matrices(cfg, uav, &g.theta[k]).map_err(|e| e.in_slot(k))?;
            let d_gu = uav.distance(cfg.gn_pos);
            let d_ru = uav.distance(cfg.irs_pos);
            let d0 = cfg.jammer.ball_min_distance_squared(uav);
            if cfg.p_jam > 0.0 && !(d0 > 0.0) {
                return Err(Error::Domain("UAV inside the jammer uncertainty ball".into()).in_slot(k));
            }
            let xi = [1.0 / d_gu, 1.0 / d_ru, 1.0 / d0.sqrt(), 1.0 / d_ru];
            let gs = xi[0].powi(2) * m.signal_form()[(0, 0)]
                + 2.0 * xi[0] * xi[1] * m.signal_form()[(0, 1)]
                + xi[1].powi(2) * m.signal_form()[(1, 1)];
            let s0 = if p.p[k] > 0.0 && gs > 0.0 { 1.0 / (p.p[k] * gs) } else { f64::INFINITY };
            let g0 = if cfg.p_jam > 0.0 {
                cfg.p_jam * vertex_max(&m.jammer_form(), xi[2], xi[3]) + cfg.sigma2
            } else {
                cfg.sigma2
            };
            lin.x0.push(uav.x);
            lin.y0.push(uav.y);
            lin.s0.push(s0);
            lin.g0.push(g0);
            lin.xi0.push(xi);
            lin.d0.push(d0);
            lin.channels.push(m);
        }
        Ok(lin)
    }

    fn active(&self, k: usize) -> bool {
        self.s0[k].is_finite()
    }

    /// `(1/N) Σ f(S0, G0)` over the active slots.
    pub fn objective(&self) -> f64 {
        let n = self.s0.len().max(1) as f64;
        (0..self.s0.len())
            .filter(|&k| self.active(k))
            .map(|k| slack_rate(self.s0[k], self.g0[k]))
            .sum::<f64>()
            / n
    }
}

/// Result of one convex surrogate solve.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaState {
    pub trajectory: Trajectory,
    /// Certified squared jammer distances `d[n]` (m²), one per slot.
    pub d: Vec<f64>,
    pub delta: Vec<f64>,
    pub s: Vec<f64>,
    pub g: Vec<f64>,
    pub xi: Vec<[f64; 4]>,
    /// Surrogate objective `(1/N) Σ R̃` at the solution.
    pub surrogate: f64,
    /// Largest relative residual of the signal and jammer slack constraints.
    pub slack_residual: f64,
    /// Set when the surrogate could not be solved and the input trajectory was returned.
    pub stalled: bool,
}

struct SlotVars {
    s: Option<ScalarVar>,
    g: Option<ScalarVar>,
    xi: [Option<ScalarVar>; 4],
    d: Option<ScalarVar>,
    delta: Option<ScalarVar>,
}

/// Two-by-two PSD factor `L` with `LᵀL = J`.
fn psd_factor(j: &Matrix2<f64>) -> Matrix2<f64> {
    let e = SymmetricEigen::new(*j);
    let mut l = e.eigenvectors.transpose();
    for i in 0..2 {
        let s = e.eigenvalues[i].max(0.0).sqrt();
        for c in 0..2 {
            l[(i, c)] *= s;
        }
    }
    l
}

fn scaled(p: Position, u: f64) -> Position {
    p * (1.0 / u)
}

/// Solves the convex surrogate around `lin` and returns the new trajectory with its slacks.
pub fn sca_step(cfg: &SystemConfig, p: &PowerSchedule, lin: &LinearizationPoint, current: &Trajectory, tol: f64) -> Result<ScaState> {
    let n = cfg.slots;
    let u = cfg.altitude.max(1.0);
    let h = cfg.altitude / u;
    let irs_on = cfg.elements() > 0;
    let jam_on = cfg.p_jam > 0.0;
    let region = UncertaintyRegion {
        center: scaled(cfg.jammer.center, u),
        radius: cfg.jammer.radius / u,
        hemisphere_up: false,
    };
    let gn = scaled(cfg.gn_pos, u);
    let irs = scaled(cfg.irs_pos, u);

    let mut prog = ConicProgram::new();
    // Free waypoints 1..N-1; the endpoints are fixed.
    let mut wx = vec![AffExpr::constant(cfg.q0.x / u)];
    let mut wy = vec![AffExpr::constant(cfg.q0.y / u)];
    for _ in 1..n {
        wx.push(prog.add_scalar().into());
        wy.push(prog.add_scalar().into());
    }
    wx.push(AffExpr::constant(cfg.q_n.x / u));
    wy.push(AffExpr::constant(cfg.q_n.y / u));
    let dmax = cfg.max_step() / u * (1.0 - 1e-9);
    for k in 0..n {
        prog.add(Constraint::SecondOrder(vec![
            AffExpr::constant(dmax),
            wx[k + 1].clone() - wx[k].clone(),
            wy[k + 1].clone() - wy[k].clone(),
        ]));
    }

    let mut objective = AffExpr::zero();
    let mut slots = Vec::with_capacity(n);
    for k in 0..n {
        let (x, y) = (wx[k + 1].clone(), wy[k + 1].clone());
        let (x0, y0) = (lin.x0[k] / u, lin.y0[k] / u);
        let mut sv = SlotVars { s: None, g: None, xi: [None; 4], d: None, delta: None };
        if !lin.active(k) {
            slots.push(sv);
            continue;
        }
        let (s0, g0) = (lin.s0[k], lin.g0[k]);
        let (z1, z2) = zeta_coefficients(s0, g0)?;
        let xi0: Vec<f64> = lin.xi0[k].iter().map(|v| v * u).collect();
        let s = prog.add_scalar();
        sv.s = Some(s);
        objective = objective.with(s, z1 * s0);

        // Signal: S'·(2ξ0ᵀKξ − 1) ≥ 1 with K scaled so that ξ0ᵀKξ0 = 1.
        let kf = lin.channels[k].signal_form() * (s0 * p.p[k] / (u * u));
        let x1 = prog.add_scalar();
        sv.xi[0] = Some(x1);
        let mut lin_gain = AffExpr::term(x1, 2.0 * (kf[(0, 0)] * xi0[0] + kf[(0, 1)] * xi0[1])).plus(-1.0);
        let r1 = (cfg.altitude - cfg.gn_pos.z) / u;
        let rhs1 = AffExpr::term(x1, -2.0 * xi0[0].powi(-3)).plus(3.0 * xi0[0].powi(-2) - r1 * r1);
        prog.add(Constraint::rotated(rhs1, 0.5.into(), vec![x.clone().plus(-gn.x), y.clone().plus(-gn.y)]));
        if irs_on {
            let x2 = prog.add_scalar();
            sv.xi[1] = Some(x2);
            lin_gain = lin_gain.with(x2, 2.0 * (kf[(0, 1)] * xi0[0] + kf[(1, 1)] * xi0[1]));
            let r2 = h - irs.z;
            let rhs2 = AffExpr::term(x2, -2.0 * xi0[1].powi(-3)).plus(3.0 * xi0[1].powi(-2) - r2 * r2);
            prog.add(Constraint::rotated(rhs2, 0.5.into(), vec![x.clone().plus(-irs.x), y.clone().plus(-irs.y)]));
        }
        prog.add(Constraint::rotated(s.into(), lin_gain, vec![AffExpr::constant(SQRT_2)]));

        if jam_on {
            let g = prog.add_scalar();
            sv.g = Some(g);
            objective = objective.with(g, z2 * g0);
            let jf = lin.channels[k].jammer_form() * (cfg.p_jam / (g0 * u * u));
            let floor = cfg.sigma2 / g0;
            let room = AffExpr::from(g).plus(-floor);

            let x3 = prog.add_scalar();
            let d = prog.add_nonneg_scalar();
            let delta = prog.add_nonneg_scalar();
            let t3 = prog.add_scalar();
            sv.xi[2] = Some(x3);
            sv.d = Some(d);
            sv.delta = Some(delta);
            // ξ3⁻² ≤ d via t3·ξ3 ≥ 1 and d ≥ t3².
            prog.add(Constraint::rotated(t3.into(), x3.into(), vec![AffExpr::constant(SQRT_2)]));
            prog.add(Constraint::rotated(d.into(), 0.5.into(), vec![t3.into()]));
            if region.radius > 1e-9 {
                prog.add(build_theta_lmi(&x, &y, &d.into(), &delta.into(), x0, y0, &region, h));
            } else {
                // Point jammer: the certificate reduces to the tangent of ‖q − c‖².
                let c = region.center;
                let t = x.clone() * (2.0 * (x0 - c.x)) + y.clone() * (2.0 * (y0 - c.y));
                let t = t.plus(-x0 * x0 + c.x * c.x - y0 * y0 + c.y * c.y + (h - c.z).powi(2));
                prog.add(Constraint::geq(t, d.into()));
            }
            prog.add(Constraint::rotated(room.clone(), 0.5.into(), vec![AffExpr::term(x3, jf[(0, 0)].max(0.0).sqrt())]));

            if irs_on {
                let x4 = prog.add_scalar();
                let t4 = prog.add_scalar();
                sv.xi[3] = Some(x4);
                // ξ4⁻² ≤ F̃2 via t4·ξ4 ≥ 1 and F̃2 ≥ t4².
                let f2t = x.clone() * (2.0 * x0 - 2.0 * irs.x) + y.clone() * (2.0 * y0 - 2.0 * irs.y);
                let f2t = f2t.plus(-x0 * x0 + irs.x * irs.x - y0 * y0 + irs.y * irs.y + (h - irs.z).powi(2));
                prog.add(Constraint::rotated(t4.into(), x4.into(), vec![AffExpr::constant(SQRT_2)]));
                prog.add(Constraint::rotated(f2t, 0.5.into(), vec![t4.into()]));
                let l = psd_factor(&jf);
                let w = (0..2).map(|i| AffExpr::term(x3, l[(i, 0)]).with(x4, l[(i, 1)])).collect();
                prog.add(Constraint::rotated(room.clone(), 0.5.into(), w));
                prog.add(Constraint::rotated(room, 0.5.into(), vec![AffExpr::term(x4, jf[(1, 1)].max(0.0).sqrt())]));
            }
        }
        slots.push(sv);
    }
    prog.maximize(objective * (1.0 / n as f64));

    let stalled = |why: String| {
        log::debug!("trajectory surrogate not solved: {why}");
        ScaState {
            trajectory: current.clone(),
            d: lin.d0.clone(),
            delta: vec![0.0; n],
            s: lin.s0.clone(),
            g: lin.g0.clone(),
            xi: lin.xi0.clone(),
            surrogate: lin.objective(),
            slack_residual: f64::NAN,
            stalled: true,
        }
    };
    let sol = match convex_backend::solve(&prog, tol) {
        Ok(s) if s.is_optimal() => s,
        Ok(s) => return Ok(stalled(format!("{:?}", s.status))),
        Err(e) => return Err(e.into()),
    };
    let values = sol.values.as_ref().map(|v| v.scalars.clone()).unwrap_or_default();
    let val = |e: &AffExpr| e.eval(&values, &[]);
    let get = |v: Option<ScalarVar>| v.and_then(|v| sol.scalar(v));

    let mut points = current.points.clone();
    for k in 1..n {
        points[k] = Position3::new(val(&wx[k]) * u, val(&wy[k]) * u, cfg.altitude);
    }
    let mut traj = Trajectory { points };
    traj.project_feasible(cfg);

    let mut out = ScaState {
        trajectory: traj,
        d: vec![0.0; n],
        delta: vec![0.0; n],
        s: vec![f64::INFINITY; n],
        g: vec![cfg.sigma2; n],
        xi: vec![[0.0; 4]; n],
        surrogate: 0.0,
        slack_residual: 0.0,
        stalled: false,
    };
    let mut surrogate = 0.0;
    for (k, sv) in slots.iter().enumerate() {
        let Some(s) = get(sv.s) else { continue };
        let (s0, g0) = (lin.s0[k], lin.g0[k]);
        let gp = get(sv.g).unwrap_or(1.0);
        out.s[k] = s * s0;
        out.g[k] = gp * g0;
        for i in 0..4 {
            out.xi[k][i] = get(sv.xi[i]).unwrap_or(0.0) / u;
        }
        out.d[k] = get(sv.d).map_or(lin.d0[k], |d| d * u * u);
        out.delta[k] = get(sv.delta).unwrap_or(0.0);
        surrogate += rate_surrogate(out.s[k], out.g[k], s0, g0)?;

        // Relative tightness of the signal and jammer slack constraints.
        let kf = lin.channels[k].signal_form() * (s0 * p.p[k] / (u * u));
        let xi0: Vec<f64> = lin.xi0[k].iter().map(|v| v * u).collect();
        let xs: Vec<f64> = (0..2).map(|i| out.xi[k][i] * u).collect();
        let lin_gain = 2.0 * (xi0[0] * (kf[(0, 0)] * xs[0] + kf[(0, 1)] * xs[1]) + xi0[1] * (kf[(0, 1)] * xs[0] + kf[(1, 1)] * xs[1])) - 1.0;
        let mut res = (s * lin_gain - 1.0).abs();
        if jam_on {
            let jf = lin.channels[k].jammer_form() * (cfg.p_jam / (g0 * u * u));
            let bound = vertex_max(&jf, out.xi[k][2] * u, out.xi[k][3] * u) + cfg.sigma2 / g0;
            res = res.max((gp - bound).abs() / gp);
        }
        out.slack_residual = out.slack_residual.max(res);
    }
    out.surrogate = surrogate / n as f64;
    Ok(out)
}

/// One recorded SCA iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaRecord {
    pub surrogate: f64,
    pub objective: f64,
    pub accepted: bool,
    /// Certified squared jammer distances of the iterate (m²).
    pub d: Vec<f64>,
    pub trajectory: Trajectory,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryOutcome {
    pub trajectory: Trajectory,
    /// Phases carried along with the waypoints.
    pub phases: PhaseSchedule,
    /// Worst-case (closest-point jammer) average rate of the returned design.
    pub objective: f64,
    pub initial_objective: f64,
    pub iterations: usize,
    pub slack_residual: f64,
    pub trace: Vec<ScaRecord>,
}

/// Iterates [`sca_step`] until the worst-case rate improves by at most `μ₂` or the iteration
/// cap is hit. Steps that lower the true objective are backtracked toward the incumbent.
pub fn optimize_trajectory(cfg: &SystemConfig, p: &PowerSchedule, g: &PhaseSchedule, initial: &Trajectory) -> Result<TrajectoryOutcome> {
    let viol = initial.violations(cfg, 1e-6);
    if !viol.is_empty() {
        return Err(Error::InvalidConfig(format!("initial trajectory infeasible: {}", viol.join("; "))));
    }
    let tol = cfg.solver_tol;
    let mut q = initial.clone();
    let mut phases = g.clone();
    let initial_objective = closest_jammer_rate(cfg, &q, p, &phases)?;
    let mut best = initial_objective;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut slack_residual = f64::NAN;
    for it in 0..cfg.sca_max_iters {
        iterations = it + 1;
        let lin = LinearizationPoint::at(cfg, &q, p, &phases).map_err(|e| e.at_iteration(it))?;
        let state = sca_step(cfg, p, &lin, &q, tol).map_err(|e| e.at_iteration(it))?;
        if state.stalled {
            break;
        }
        let mut accepted = None;
        for t in [1.0, 0.5, 0.25] {
            let mut cand = Trajectory {
                points: q.points.iter().zip(&state.trajectory.points).map(|(a, b)| a.lerp(*b, t)).collect(),
            };
            cand.project_feasible(cfg);
            let cand_phases = track_phases(cfg, &q, &cand, &phases).map_err(|e| e.at_iteration(it))?;
            let obj = closest_jammer_rate(cfg, &cand, p, &cand_phases).map_err(|e| e.at_iteration(it))?;
            if obj > best {
                accepted = Some((cand, cand_phases, obj));
                break;
            }
        }
        let Some((cand, cand_phases, obj)) = accepted else {
            trace.push(ScaRecord {
                surrogate: state.surrogate,
                objective: best,
                accepted: false,
                d: state.d,
                trajectory: state.trajectory,
            });
            break;
        };
        let gain = obj - best;
        slack_residual = state.slack_residual;
        trace.push(ScaRecord {
            surrogate: state.surrogate,
            objective: obj,
            accepted: true,
            d: state.d,
            trajectory: state.trajectory,
        });
        q = cand;
        phases = cand_phases;
        best = obj;
        if gain <= cfg.mu2 {
            break;
        }
    }
    Ok(TrajectoryOutcome {
        trajectory: q,
        phases,
        objective: best,
        initial_objective,
        iterations,
        slack_residual,
        trace,
    })
}
