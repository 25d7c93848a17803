//! System configuration, geometry and the containers for the three design variables.
//!
//! Slots are indexed from 0 in code. Slot `n` is served from waypoint `points[n + 1]`, so a
//! trajectory over `N` slots carries `N + 1` waypoints with `points[0] = q0` and
//! `points[N] = qN`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Point or displacement in 3-D Cartesian coordinates (meters).
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[T; 3]", into = "[T; 3]")]
pub struct Position3<T: Real> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> From<[T; 3]> for Position3<T> {
    fn from(v: [T; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

impl<T: Real> From<Position3<T>> for [T; 3] {
    fn from(p: Position3<T>) -> Self {
        [p.x, p.y, p.z]
    }
}

impl<T: Real> Position3<T> {
    pub const fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm_squared(self) -> T {
        self.dot(self)
    }

    pub fn norm(self) -> T {
        self.norm_squared().sqrt()
    }

    pub fn distance(self, other: Self) -> T {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Linear interpolation `self + t (other - self)`.
    pub fn lerp(self, other: Self, t: T) -> Self {
        self + (other - self) * t
    }
}

impl<T: Real> Add for Position3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> Sub for Position3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Mul<T> for Position3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Neg for Position3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> fmt::Display for Position3<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// Set of possible jammer positions: `{center + Δ : ‖Δ‖ ≤ radius, Δz ≥ 0}`.
///
/// With `hemisphere_up = false` the sign restriction on `Δz` is dropped and the set is the
/// full ball, which is what the trajectory LMI certifies against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyRegion<T: Real> {
    pub center: Position3<T>,
    pub radius: T,
    #[serde(default = "default_true")]
    pub hemisphere_up: bool,
}

fn default_true() -> bool {
    true
}

impl<T: Real> UncertaintyRegion<T> {
    pub fn new(center: Position3<T>, radius: T) -> Self {
        Self {
            center,
            radius,
            hemisphere_up: true,
        }
    }

    pub fn known(center: Position3<T>) -> Self {
        Self::new(center, T::zero())
    }

    pub fn as_ball(&self) -> Self {
        Self {
            hemisphere_up: false,
            ..*self
        }
    }

    /// Membership test with an absolute slack `tol`.
    pub fn contains(&self, p: Position3<T>, tol: T) -> bool {
        let d = p - self.center;
        let in_ball = d.norm() <= self.radius + tol;
        in_ball && (!self.hemisphere_up || d.z >= -tol)
    }

    /// Point of the region nearest to `p` (Euclidean projection onto the region).
    pub fn closest_point(&self, p: Position3<T>) -> Position3<T> {
        let r = self.radius;
        if r <= T::zero() {
            return self.center;
        }
        let mut u = p - self.center;
        if self.hemisphere_up && u.z < T::zero() {
            // Below the flat face: the nearest point lies on the base disk.
            u.z = T::zero();
        }
        let n = u.norm();
        if n <= r {
            self.center + u
        } else {
            self.center + u * (r / n)
        }
    }

    /// Point of the region farthest from `p`.
    pub fn farthest_point(&self, p: Position3<T>) -> Position3<T> {
        let r = self.radius;
        if r <= T::zero() {
            return self.center;
        }
        let u = p - self.center;
        if !self.hemisphere_up || u.z <= T::zero() {
            let n = u.norm();
            if n == T::zero() {
                return self.center + Position3::new(r, T::zero(), T::zero());
            }
            return self.center - u * (r / n);
        }
        // p strictly above the base plane: the maximizer sits on the equatorial rim,
        // opposite to the horizontal offset of p.
        let h = Position3::new(u.x, u.y, T::zero());
        let hn = h.norm();
        if hn == T::zero() {
            self.center + Position3::new(r, T::zero(), T::zero())
        } else {
            self.center - h * (r / hn)
        }
    }

    /// Squared distance from `p` to the nearest point of the full ball around the center.
    pub fn ball_min_distance_squared(&self, p: Position3<T>) -> T {
        let gap = (p.distance(self.center) - self.radius).max(T::zero());
        gap * gap
    }

    /// Deterministic low-discrepancy offset number `t` of `total`: Fibonacci directions on the
    /// upper unit hemisphere, scaled by `radius · ((t + 1) / total)^(1/3)`.
    pub fn fibonacci_offset(&self, t: usize, total: usize) -> Position3<T> {
        let total_f = T::from_usize(total.max(1)).unwrap();
        let tf = T::from_usize(t).unwrap();
        let half = T::lit(0.5);
        let golden = T::PI() * (T::lit(3.0) - T::lit(5.0).sqrt());
        let r = self.radius * ((tf + T::one()) / total_f).cbrt();
        // cos of the polar angle uniformly covers (0, 1]
        let cz = T::one() - (tf + half) / total_f;
        let cz = if self.hemisphere_up { cz } else { T::lit(2.0) * cz - T::one() };
        let sz = (T::one() - cz * cz).max(T::zero()).sqrt();
        let az = golden * tf;
        Position3::new(r * sz * az.cos(), r * sz * az.sin(), r * cz)
    }

    /// Offset from three uniform variates in `[0, 1)`, uniform in volume over the region.
    pub fn offset_from_uniforms(&self, u_r: T, u_z: T, u_az: T) -> Position3<T> {
        let r = self.radius * u_r.cbrt();
        let cz = if self.hemisphere_up {
            u_z
        } else {
            T::lit(2.0) * u_z - T::one()
        };
        let sz = (T::one() - cz * cz).max(T::zero()).sqrt();
        let az = T::lit(2.0) * T::PI() * u_az;
        Position3::new(r * sz * az.cos(), r * sz * az.sin(), r * cz)
    }
}

/// Amplitude used for the sampled jammer channels inside the beamforming hull.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BetaPolicy {
    /// Path-loss amplitude at the farthest point of the region.
    #[default]
    Min,
    /// Path-loss amplitude at the nearest point of the region (clamped at 1 m).
    Max,
}

type Position = Position3<f64>;
type Region = UncertaintyRegion<f64>;

/// Every physical and algorithmic parameter of one scenario. Powers are linear watts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub q0: Position,
    pub q_n: Position,
    pub gn_pos: Position,
    pub irs_pos: Position,
    pub jammer: Region,
    /// UAV flight altitude `H_u`.
    pub altitude: f64,
    pub slots: usize,
    pub slot_duration: f64,
    pub v_max: f64,
    pub p_bar: f64,
    pub p_max: f64,
    pub p_jam: f64,
    pub rho: f64,
    pub sigma2: f64,
    pub wavelength: f64,
    pub elem_spacing: f64,
    pub lx: usize,
    pub lz: usize,
    /// `false` models the benchmark without a reflecting surface (zero elements).
    pub irs_enabled: bool,
    pub hull_samples: usize,
    pub mu1: f64,
    pub mu2: f64,
    pub j_max: usize,
    pub seed: u64,
    pub beta_policy: BetaPolicy,
    pub randomizations: usize,
    pub solver_tol: f64,
    pub mc_draws: usize,
    pub inner_max_iters: usize,
    pub sca_max_iters: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        ConfigFile::default().into_config()
    }
}

impl SystemConfig {
    /// Per-slot maximum flying distance `D_max = v_max · Δt`.
    pub fn max_step(&self) -> f64 {
        self.v_max * self.slot_duration
    }

    /// Number of active reflecting elements (0 without an IRS).
    pub fn elements(&self) -> usize {
        if self.irs_enabled {
            self.lx * self.lz
        } else {
            0
        }
    }

    pub fn to_file(&self) -> ConfigFile {
        ConfigFile::from_config(self)
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// On-disk configuration. Field names follow [`SystemConfig`]; powers are in dBm and the noise
/// power is given as a density plus a bandwidth. Every field is optional and defaults to the
/// reference scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub q0: Position,
    pub q_n: Position,
    pub gn_pos: Position,
    pub irs_pos: Position,
    pub jammer_center: Position,
    pub jammer_radius: f64,
    pub hemisphere_up: bool,
    pub altitude: f64,
    pub slots: usize,
    pub slot_duration: f64,
    pub v_max: f64,
    pub p_bar_dbm: f64,
    pub p_max_dbm: f64,
    pub p_jam_dbm: Option<f64>,
    pub rho: f64,
    pub noise_psd_dbm_hz: f64,
    pub bandwidth_hz: f64,
    pub wavelength: f64,
    /// Defaults to half a wavelength.
    pub elem_spacing: Option<f64>,
    pub lx: usize,
    pub lz: usize,
    pub irs_enabled: bool,
    pub hull_samples: usize,
    pub mu1: f64,
    pub mu2: f64,
    pub j_max: usize,
    pub seed: u64,
    pub beta_policy: BetaPolicy,
    pub randomizations: usize,
    pub solver_tol: f64,
    pub mc_draws: usize,
    pub inner_max_iters: usize,
    pub sca_max_iters: usize,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            q0: Position::new(0.0, 0.0, 100.0),
            q_n: Position::new(400.0, 200.0, 100.0),
            gn_pos: Position::new(200.0, 100.0, 0.0),
            irs_pos: Position::new(201.0, 100.0, 5.0),
            jammer_center: Position::new(250.0, 50.0, 0.0),
            jammer_radius: 0.0,
            hemisphere_up: true,
            altitude: 100.0,
            slots: 50,
            slot_duration: 0.5,
            v_max: 60.0,
            p_bar_dbm: 30.0,
            p_max_dbm: 31.76,
            p_jam_dbm: Some(30.0),
            rho: 1e-3,
            noise_psd_dbm_hz: -169.0,
            bandwidth_hz: 1e6,
            wavelength: 0.1,
            elem_spacing: None,
            lx: 10,
            lz: 10,
            irs_enabled: true,
            hull_samples: 1000,
            mu1: 1e-3,
            mu2: 1e-3,
            j_max: 30,
            seed: 7,
            beta_policy: BetaPolicy::Min,
            randomizations: 200,
            solver_tol: 1e-8,
            mc_draws: 10_000,
            inner_max_iters: 30,
            sca_max_iters: 30,
        }
    }
}

impl ConfigFile {
    pub fn into_config(self) -> SystemConfig {
        let sigma2 = dbm_to_watts(self.noise_psd_dbm_hz + 10.0 * self.bandwidth_hz.log10());
        SystemConfig {
            q0: self.q0,
            q_n: self.q_n,
            gn_pos: self.gn_pos,
            irs_pos: self.irs_pos,
            jammer: Region {
                center: self.jammer_center,
                radius: self.jammer_radius,
                hemisphere_up: self.hemisphere_up,
            },
            altitude: self.altitude,
            slots: self.slots,
            slot_duration: self.slot_duration,
            v_max: self.v_max,
            p_bar: dbm_to_watts(self.p_bar_dbm),
            p_max: dbm_to_watts(self.p_max_dbm),
            // `null` switches the jammer off entirely
            p_jam: self.p_jam_dbm.map_or(0.0, dbm_to_watts),
            rho: self.rho,
            sigma2,
            wavelength: self.wavelength,
            elem_spacing: self.elem_spacing.unwrap_or(self.wavelength / 2.0),
            lx: self.lx,
            lz: self.lz,
            irs_enabled: self.irs_enabled,
            hull_samples: self.hull_samples,
            mu1: self.mu1,
            mu2: self.mu2,
            j_max: self.j_max,
            seed: self.seed,
            beta_policy: self.beta_policy,
            randomizations: self.randomizations,
            solver_tol: self.solver_tol,
            mc_draws: self.mc_draws,
            inner_max_iters: self.inner_max_iters,
            sca_max_iters: self.sca_max_iters,
        }
    }

    pub fn from_config(cfg: &SystemConfig) -> Self {
        // The noise figure is stored back as a 1 Hz density so the round trip is exact.
        Self {
            q0: cfg.q0,
            q_n: cfg.q_n,
            gn_pos: cfg.gn_pos,
            irs_pos: cfg.irs_pos,
            jammer_center: cfg.jammer.center,
            jammer_radius: cfg.jammer.radius,
            hemisphere_up: cfg.jammer.hemisphere_up,
            altitude: cfg.altitude,
            slots: cfg.slots,
            slot_duration: cfg.slot_duration,
            v_max: cfg.v_max,
            p_bar_dbm: watts_to_dbm(cfg.p_bar),
            p_max_dbm: watts_to_dbm(cfg.p_max),
            p_jam_dbm: (cfg.p_jam > 0.0).then(|| watts_to_dbm(cfg.p_jam)),
            rho: cfg.rho,
            noise_psd_dbm_hz: watts_to_dbm(cfg.sigma2),
            bandwidth_hz: 1.0,
            wavelength: cfg.wavelength,
            elem_spacing: Some(cfg.elem_spacing),
            lx: cfg.lx,
            lz: cfg.lz,
            irs_enabled: cfg.irs_enabled,
            hull_samples: cfg.hull_samples,
            mu1: cfg.mu1,
            mu2: cfg.mu2,
            j_max: cfg.j_max,
            seed: cfg.seed,
            beta_policy: cfg.beta_policy,
            randomizations: cfg.randomizations,
            solver_tol: cfg.solver_tol,
            mc_draws: cfg.mc_draws,
            inner_max_iters: cfg.inner_max_iters,
            sca_max_iters: cfg.sca_max_iters,
        }
    }

    pub fn from_json(text: &str) -> crate::Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// One violated invariant of a [`SystemConfig`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigViolation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Lists every violated configuration invariant; an empty list means the config is usable.
pub fn validate_config(cfg: &SystemConfig) -> Vec<ConfigViolation> {
    let mut out = Vec::new();
    let mut bad = |field: &'static str, message: String| out.push(ConfigViolation { field, message });

    for (name, p) in [
        ("q0", cfg.q0),
        ("q_n", cfg.q_n),
        ("gn_pos", cfg.gn_pos),
        ("irs_pos", cfg.irs_pos),
        ("jammer", cfg.jammer.center),
    ] {
        if !p.is_finite() {
            bad(name, format!("{name} has non-finite coordinates"));
        }
    }
    for (name, v) in [
        ("p_bar", cfg.p_bar),
        ("p_max", cfg.p_max),
        ("sigma2", cfg.sigma2),
        ("rho", cfg.rho),
        ("wavelength", cfg.wavelength),
        ("elem_spacing", cfg.elem_spacing),
        ("slot_duration", cfg.slot_duration),
        ("v_max", cfg.v_max),
        ("mu1", cfg.mu1),
        ("mu2", cfg.mu2),
        ("solver_tol", cfg.solver_tol),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            bad(name, format!("{name} must be positive and finite (got {v})"));
        }
    }
    if !(cfg.p_jam >= 0.0 && cfg.p_jam.is_finite()) {
        bad("p_jam", format!("p_jam must be non-negative (got {})", cfg.p_jam));
    }
    if cfg.p_bar > cfg.p_max {
        bad("p_bar", "p_bar exceeds p_max".to_string());
    }
    if cfg.slots == 0 {
        bad("slots", "slots must be at least 1".to_string());
    }
    if cfg.irs_enabled && (cfg.lx == 0 || cfg.lz == 0) {
        bad("lx", "lx and lz must be at least 1".to_string());
    }
    if !(cfg.jammer.radius >= 0.0) {
        bad("jammer", "jammer radius must be non-negative".to_string());
    }
    if cfg.jammer.center.z < 0.0 {
        bad("jammer", "jammer center must not be below ground".to_string());
    }
    for (name, p) in [("q0", cfg.q0), ("q_n", cfg.q_n)] {
        if (p.z - cfg.altitude).abs() > 1e-9 {
            bad(name, format!("{name} must lie at the flight altitude {}", cfg.altitude));
        }
    }
    let span = cfg.q0.distance(cfg.q_n);
    let reach = cfg.slots as f64 * cfg.max_step();
    if span > reach {
        bad(
            "q_n",
            format!("endpoints unreachable: distance {span:.3} m exceeds N·D_max = {reach:.3} m"),
        );
    }
    if cfg.hull_samples == 0 {
        bad("hull_samples", "hull_samples must be at least 1".to_string());
    }
    if cfg.j_max == 0 {
        bad("j_max", "j_max must be at least 1".to_string());
    }
    if cfg.randomizations == 0 {
        bad("randomizations", "randomizations must be at least 1".to_string());
    }
    if cfg.mc_draws == 0 {
        bad("mc_draws", "mc_draws must be at least 1".to_string());
    }
    out
}

/// UAV waypoints `q[0..=N]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<Position>,
}

impl Trajectory {
    pub fn slots(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    /// Position used during slot `n` (0-based).
    pub fn slot_position(&self, n: usize) -> Position {
        self.points[n + 1]
    }

    pub fn steps(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.windows(2).map(|w| w[0].distance(w[1]))
    }

    pub fn longest_step(&self) -> f64 {
        self.steps().fold(0.0, f64::max)
    }

    pub fn path_length(&self) -> f64 {
        self.steps().sum()
    }

    /// Violations of the endpoint, altitude and per-slot distance constraints beyond `tol`.
    pub fn violations(&self, cfg: &SystemConfig, tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        if self.points.len() != cfg.slots + 1 {
            out.push(format!(
                "expected {} waypoints, found {}",
                cfg.slots + 1,
                self.points.len()
            ));
            return out;
        }
        if self.points[0].distance(cfg.q0) > tol {
            out.push("first waypoint differs from q0".into());
        }
        if self.points[cfg.slots].distance(cfg.q_n) > tol {
            out.push("last waypoint differs from q_n".into());
        }
        for (n, p) in self.points.iter().enumerate() {
            if (p.z - cfg.altitude).abs() > tol {
                out.push(format!("waypoint {n} leaves the flight altitude"));
            }
        }
        let dmax = cfg.max_step();
        for (n, s) in self.steps().enumerate() {
            if s > dmax + tol {
                out.push(format!("step {} is {s:.9} m, above D_max = {dmax} m", n + 1));
            }
        }
        out
    }

    /// Removes residual numerical slack so the mobility constraints hold exactly: endpoints
    /// and altitude are reset, then the path is blended towards the straight line just enough
    /// to bring every step under `D_max`.
    pub fn project_feasible(&mut self, cfg: &SystemConfig) {
        let n = cfg.slots;
        if self.points.len() != n + 1 {
            return;
        }
        self.points[0] = cfg.q0;
        self.points[n] = cfg.q_n;
        for p in &mut self.points {
            p.z = cfg.altitude;
        }
        let dmax = cfg.max_step();
        let worst = self.longest_step();
        if worst <= dmax {
            return;
        }
        let line = initial_trajectory(cfg);
        let line_step = line.longest_step();
        if line_step >= dmax {
            return;
        }
        // Each blended step is at most (1 - w)·worst + w·line_step.
        let w = ((worst - dmax) / (worst - line_step)).min(1.0);
        let w = (w * (1.0 + 1e-12) + 1e-15).min(1.0);
        for (p, l) in self.points.iter_mut().zip(&line.points) {
            *p = p.lerp(*l, w);
        }
    }
}

/// Straight-line flight from `q0` to `qN` in `N` equal steps.
pub fn initial_trajectory(cfg: &SystemConfig) -> Trajectory {
    let n = cfg.slots.max(1);
    let points = (0..=n)
        .map(|i| {
            if i == n {
                cfg.q_n
            } else {
                cfg.q0.lerp(cfg.q_n, i as f64 / n as f64)
            }
        })
        .collect();
    Trajectory { points }
}

/// Transmit power of the ground node per slot (watts).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSchedule {
    pub p: Vec<f64>,
}

impl PowerSchedule {
    pub fn uniform(cfg: &SystemConfig) -> Self {
        Self {
            p: vec![cfg.p_bar.min(cfg.p_max); cfg.slots],
        }
    }

    pub fn mean(&self) -> f64 {
        if self.p.is_empty() {
            0.0
        } else {
            self.p.iter().sum::<f64>() / self.p.len() as f64
        }
    }

    pub fn violations(&self, cfg: &SystemConfig, tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        if self.p.len() != cfg.slots {
            out.push(format!("expected {} slots, found {}", cfg.slots, self.p.len()));
        }
        for (n, &p) in self.p.iter().enumerate() {
            if !(p >= -tol && p <= cfg.p_max + tol) {
                out.push(format!("slot {n}: power {p} outside [0, p_max]"));
            }
        }
        if self.mean() > cfg.p_bar + tol {
            out.push(format!("mean power {} exceeds p_bar {}", self.mean(), cfg.p_bar));
        }
        out
    }
}

/// IRS phase shifts per slot, `theta[n][i] ∈ [0, 2π)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSchedule {
    pub theta: Vec<Vec<f64>>,
}

pub fn wrap_phase(theta: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let w = theta.rem_euclid(tau);
    // rem_euclid can return exactly TAU for tiny negative inputs
    if w >= tau {
        0.0
    } else {
        w
    }
}

impl PhaseSchedule {
    pub fn zeros(slots: usize, elements: usize) -> Self {
        Self {
            theta: vec![vec![0.0; elements]; slots],
        }
    }

    pub fn for_config(cfg: &SystemConfig) -> Self {
        Self::zeros(cfg.slots, cfg.elements())
    }

    pub fn elements(&self) -> usize {
        self.theta.first().map_or(0, Vec::len)
    }

    pub fn violations(&self, cfg: &SystemConfig) -> Vec<String> {
        let mut out = Vec::new();
        if self.theta.len() != cfg.slots {
            out.push(format!("expected {} slots, found {}", cfg.slots, self.theta.len()));
        }
        for (n, row) in self.theta.iter().enumerate() {
            if row.len() != cfg.elements() {
                out.push(format!("slot {n}: expected {} phases", cfg.elements()));
            }
            if row.iter().any(|&t| !(0.0..std::f64::consts::TAU).contains(&t)) {
                out.push(format!("slot {n}: phase outside [0, 2π)"));
            }
        }
        out
    }
}
