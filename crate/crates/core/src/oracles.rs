//! Brute-force references for the optimization blocks at desk scale.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ao::{alternating_optimize, evaluate_design, EvalMode};
use crate::beamforming::{optimize_slot_phases, reflection_vector, solve_slot_sdp, SlotProblem, SlotSdpData};
use crate::channels::{channel_set, closest_jammer_rate};
use crate::error::{Error, Result};
use crate::power_alloc::{waterfill, worst_case_coeffs};
use crate::scenario::{initial_trajectory, PhaseSchedule, Position3, PowerSchedule, SystemConfig, Trajectory};
use crate::seeds::{self, label};

/// Largest number of states an oracle enumerates.
pub const STATE_BUDGET: u64 = 10_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub value: f64,
    pub method: String,
    /// Grid points, quantization levels or Monte-Carlo draws used.
    pub resolution: usize,
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseOracle {
    /// Best `vᴴAv / (vᴴBv + σ²)` on the grid.
    pub ratio: f64,
    pub theta: Vec<f64>,
    pub report: OracleReport,
}

/// Exact maximum of the slot SINR ratio over phases restricted to `levels` equally spaced
/// values per element.
pub fn exhaustive_phase_oracle(data: &SlotSdpData, levels: usize) -> Result<PhaseOracle> {
    let start = Instant::now();
    let l = data.dim() - 1;
    if levels == 0 {
        return Err(Error::Domain("at least one phase level is required".into()));
    }
    let states = (levels as u64).checked_pow(l as u32).filter(|&s| s <= STATE_BUDGET);
    let Some(states) = states else {
        return Err(Error::Budget(format!("{levels}^{l} phase states exceed {STATE_BUDGET}")));
    };
    let step = std::f64::consts::TAU / levels as f64;
    let decode = |mut idx: u64| -> Vec<f64> {
        (0..l)
            .map(|_| {
                let k = idx % levels as u64;
                idx /= levels as u64;
                k as f64 * step
            })
            .collect()
    };
    let (best_idx, ratio) = (0..states)
        .into_par_iter()
        .map(|i| (i, data.ratio(&reflection_vector(&decode(i)))))
        .reduce(|| (0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a });
    Ok(PhaseOracle {
        ratio,
        theta: decode(best_idx),
        report: OracleReport {
            value: ratio,
            method: "exhaustive-phase-grid".into(),
            resolution: levels,
            wall_time: start.elapsed().as_secs_f64(),
        },
    })
}

/// Minimum average rate over `draws` seeded jammer positions in the region.
pub fn monte_carlo_worst_jammer(cfg: &SystemConfig, q: &Trajectory, p: &PowerSchedule, g: &PhaseSchedule, draws: usize) -> Result<OracleReport> {
    let start = Instant::now();
    if draws == 0 {
        return Err(Error::Domain("at least one draw is required".into()));
    }
    let r = evaluate_design(cfg, q, p, g, EvalMode::WorstCaseMc { draws })?;
    Ok(OracleReport {
        value: r.rate,
        method: "monte-carlo-jammer".into(),
        resolution: draws,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridTrajectoryOracle {
    pub waypoint: Position3<f64>,
    pub trajectory: Trajectory,
    pub power: PowerSchedule,
    pub report: OracleReport,
    /// Spacing of the grid along each axis (m).
    pub cell: (f64, f64),
}

/// Exhaustive search of the single free waypoint of a two-slot flight over a
/// `resolution × resolution` grid covering the reachable lens. Every candidate gets its
/// optimal power schedule; the score is the worst-case (closest-point jammer) rate.
pub fn grid_trajectory_oracle(cfg: &SystemConfig, g: &PhaseSchedule, resolution: usize) -> Result<GridTrajectoryOracle> {
    let start = Instant::now();
    if cfg.slots != 2 {
        return Err(Error::InvalidConfig(format!("grid oracle needs exactly 2 slots, got {}", cfg.slots)));
    }
    if resolution == 0 || (resolution as u64).pow(2) > STATE_BUDGET {
        return Err(Error::Budget(format!("{resolution}² grid points exceed {STATE_BUDGET}")));
    }
    let (a, b) = (cfg.q0, cfg.q_n);
    let r = cfg.max_step();
    let span = b - a;
    let dist = span.norm();
    if dist > 2.0 * r {
        return Err(Error::InvalidConfig("no feasible waypoint: endpoints too far apart".into()));
    }
    let mid = a.lerp(b, 0.5);
    let axis = if dist > 0.0 { span * (1.0 / dist) } else { Position3::new(1.0, 0.0, 0.0) };
    let perp = Position3::new(-axis.y, axis.x, 0.0);
    let half_len = r - dist / 2.0;
    let half_wid = (r * r - dist * dist / 4.0).max(0.0).sqrt();
    let coord = |i: usize, half: f64| {
        if resolution == 1 {
            0.0
        } else {
            -half + 2.0 * half * i as f64 / (resolution - 1) as f64
        }
    };
    let cell = if resolution == 1 {
        (0.0, 0.0)
    } else {
        (2.0 * half_len / (resolution - 1) as f64, 2.0 * half_wid / (resolution - 1) as f64)
    };
    let slack = 1e-9 * r.max(1.0);
    let best = (0..resolution * resolution)
        .into_par_iter()
        .filter_map(|k| {
            let (i, j) = (k / resolution, k % resolution);
            let mut w = mid + axis * coord(i, half_len) + perp * coord(j, half_wid);
            w.z = cfg.altitude;
            if w.distance(a) > r + slack || w.distance(b) > r + slack {
                return None;
            }
            let q = Trajectory { points: vec![a, w, b] };
            let run = || -> Result<(f64, PowerSchedule)> {
                let coeff = worst_case_coeffs(cfg, &q, g)?;
                let p = waterfill(&coeff, cfg.p_bar, cfg.p_max)?.schedule;
                Ok((closest_jammer_rate(cfg, &q, &p, g)?, p))
            };
            Some(run().map(|(v, p)| (k, v, w, p)))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(None::<(usize, f64, Position3<f64>, PowerSchedule)>, |acc, c| match acc {
            Some(b) if b.1 > c.1 || (b.1 == c.1 && b.0 < c.0) => Some(b),
            _ => Some(c),
        });
    let Some((_, value, waypoint, power)) = best else {
        return Err(Error::InvalidConfig("grid contains no feasible waypoint".into()));
    };
    Ok(GridTrajectoryOracle {
        waypoint,
        trajectory: Trajectory { points: vec![a, waypoint, b] },
        power,
        report: OracleReport {
            value,
            method: "waypoint-grid".into(),
            resolution,
            wall_time: start.elapsed().as_secs_f64(),
        },
        cell,
    })
}

/// Relaxation chain of one slot: `recovered ≤ bound` and `oracle ≤ bound`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseCheck {
    pub slot: usize,
    pub oracle_ratio: f64,
    pub sdp_bound: f64,
    pub recovered_ratio: f64,
    pub passed: bool,
}

/// Runs the slot phase loop on the straight-line, uniform-power design and compares the final
/// relaxation against the exhaustive phase grid in every slot.
pub fn verify_phase(cfg: &SystemConfig, levels: usize) -> Result<Vec<PhaseCheck>> {
    if cfg.elements() == 0 {
        return Err(Error::InvalidConfig("phase verification needs an IRS".into()));
    }
    let q = initial_trajectory(cfg);
    let p = PowerSchedule::uniform(cfg);
    (0..cfg.slots)
        .map(|n| {
            let uav = q.slot_position(n);
            let ch = channel_set(cfg, n, uav, cfg.jammer.closest_point(uav))?;
            let mut prob = SlotProblem::new(cfg, &ch, uav, p.p[n])?;
            let seed = seeds::derive_seed(cfg.seed, &[label::PHASE_RANDOMIZATION, 0, n as u64]);
            let res = optimize_slot_phases(&mut prob, cfg, seed)?;
            let data = prob.sdp_data();
            let bound = solve_slot_sdp(&data, cfg.solver_tol)?.bound;
            let oracle = exhaustive_phase_oracle(&data, levels)?;
            let recovered = data.ratio(&reflection_vector(&res.theta));
            let slack = 1e-6 * bound.abs().max(1.0);
            Ok(PhaseCheck {
                slot: n,
                oracle_ratio: oracle.ratio,
                sdp_bound: bound,
                recovered_ratio: recovered,
                passed: oracle.ratio <= bound + slack && recovered <= bound + slack,
            })
            .map_err(|e: Error| e.in_slot(n))
        })
        .collect()
}

/// Optimized design scored against seeded jammer draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JammerCheck {
    pub objective: f64,
    pub monte_carlo: OracleReport,
    /// `monte_carlo − objective`; non-negative when the optimizer is conservative.
    pub margin: f64,
    pub passed: bool,
}

/// Allowed shortfall of the Monte-Carlo worst case below the optimizer objective (bit/s/Hz).
pub const JAMMER_CHECK_TOL: f64 = 1e-3;

pub fn verify_jammer(cfg: &SystemConfig) -> Result<JammerCheck> {
    let out = alternating_optimize(cfg)?;
    let mc = monte_carlo_worst_jammer(cfg, &out.trajectory, &out.power, &out.phases, cfg.mc_draws)?;
    let margin = mc.value - out.objective;
    Ok(JammerCheck {
        objective: out.objective,
        margin,
        passed: margin >= -JAMMER_CHECK_TOL,
        monte_carlo: mc,
    })
}

/// Optimized two-slot design compared with the waypoint grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryCheck {
    pub objective: f64,
    pub waypoint: Position3<f64>,
    pub grid: OracleReport,
    pub grid_waypoint: Position3<f64>,
    /// `(grid − objective) / grid`.
    pub relative_gap: f64,
    pub passed: bool,
}

/// Largest accepted relative shortfall of the optimizer against the grid.
pub const TRAJECTORY_CHECK_TOL: f64 = 0.02;

pub fn verify_trajectory(cfg: &SystemConfig, resolution: usize) -> Result<TrajectoryCheck> {
    if cfg.slots != 2 {
        return Err(Error::InvalidConfig(format!("trajectory verification needs exactly 2 slots, got {}", cfg.slots)));
    }
    let out = alternating_optimize(cfg)?;
    let grid = grid_trajectory_oracle(cfg, &out.phases, resolution)?;
    let gap = (grid.report.value - out.objective) / grid.report.value.abs().max(f64::MIN_POSITIVE);
    Ok(TrajectoryCheck {
        objective: out.objective,
        waypoint: out.trajectory.points[1],
        grid_waypoint: grid.waypoint,
        relative_gap: gap,
        passed: gap <= TRAJECTORY_CHECK_TOL,
        grid: grid.report,
    })
}
