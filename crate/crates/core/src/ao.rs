//! Alternating optimization over power, IRS phases and trajectory, plus design evaluation.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamforming::{optimize_slot_phases, SlotProblem};
use crate::channels::{average_rate, channel_set, closest_jammer_rate};
use crate::error::Result;
use crate::power_alloc::{waterfill, worst_case_coeffs};
use crate::scenario::{initial_trajectory, PhaseSchedule, Position3, PowerSchedule, SystemConfig, Trajectory};
use crate::seeds::{self, label};
use crate::trajectory::optimize_trajectory;

/// Which blocks an outer iteration updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AoOptions {
    pub power: bool,
    pub phases: bool,
    pub trajectory: bool,
}

impl Default for AoOptions {
    fn default() -> Self {
        Self {
            power: true,
            phases: true,
            trajectory: true,
        }
    }
}

impl AoOptions {
    /// No block is updated: one pass only evaluates the initialization.
    pub fn evaluate_only() -> Self {
        Self {
            power: false,
            phases: false,
            trajectory: false,
        }
    }

    fn any(&self) -> bool {
        self.power || self.phases || self.trajectory
    }
}

/// Wall-clock seconds spent in each block of one outer iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockTimings {
    pub power: f64,
    pub phases: f64,
    pub trajectory: f64,
}

/// One outer iteration. Iteration 0 records the initialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AoIteration {
    pub iteration: usize,
    /// Worst-case average rate after the iteration.
    pub objective: f64,
    pub after_power: f64,
    pub after_phases: f64,
    pub after_trajectory: f64,
    /// Inner phase iterations per slot.
    pub inner_iterations: Vec<usize>,
    pub sca_iterations: usize,
    pub phase_slots_accepted: usize,
    pub trajectory_accepted: bool,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub timings: BlockTimings,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AoTrace {
    pub records: Vec<AoIteration>,
    pub converged: bool,
    /// Set when a subproblem failed; the returned design is the last consistent iterate.
    pub failure: Option<String>,
}

impl AoTrace {
    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    pub fn outer_iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AoOutcome {
    pub trajectory: Trajectory,
    pub power: PowerSchedule,
    pub phases: PhaseSchedule,
    pub objective: f64,
    pub trace: AoTrace,
}

fn blank(iteration: usize, objective: f64) -> AoIteration {
    AoIteration {
        iteration,
        objective,
        after_power: objective,
        after_phases: objective,
        after_trajectory: objective,
        inner_iterations: Vec::new(),
        sca_iterations: 0,
        phase_slots_accepted: 0,
        trajectory_accepted: false,
        notes: Vec::new(),
        timings: BlockTimings::default(),
    }
}

/// Optimizes every block from the straight-line, uniform-power, zero-phase start.
pub fn alternating_optimize(cfg: &SystemConfig) -> Result<AoOutcome> {
    alternating_optimize_with(cfg, AoOptions::default())
}

struct Design {
    q: Trajectory,
    p: PowerSchedule,
    g: PhaseSchedule,
    r: f64,
}

pub fn alternating_optimize_with(cfg: &SystemConfig, opts: AoOptions) -> Result<AoOutcome> {
    let q = initial_trajectory(cfg);
    let p = PowerSchedule::uniform(cfg);
    let g = PhaseSchedule::for_config(cfg);
    let r = closest_jammer_rate(cfg, &q, &p, &g)?;
    let mut d = Design { q, p, g, r };
    let mut trace = AoTrace {
        records: vec![blank(0, r)],
        ..AoTrace::default()
    };
    if opts.any() {
        for i in 1..=cfg.j_max {
            let mut rec = blank(i, d.r);
            let prev = d.r;
            if let Err(e) = outer_iteration(cfg, opts, i, &mut d, &mut rec) {
                log::warn!("outer iteration {i} failed: {e}");
                trace.failure = Some(format!("iteration {i}: {e}"));
                rec.notes.push(format!("failed: {e}"));
                rec.objective = d.r;
                trace.records.push(rec);
                break;
            }
            rec.objective = d.r;
            trace.records.push(rec);
            if (d.r - prev).abs() <= cfg.mu2 {
                trace.converged = true;
                break;
            }
        }
    }
    Ok(AoOutcome {
        trajectory: d.q,
        power: d.p,
        phases: d.g,
        objective: d.r,
        trace,
    })
}

fn outer_iteration(cfg: &SystemConfig, opts: AoOptions, i: usize, d: &mut Design, rec: &mut AoIteration) -> Result<()> {
    if opts.power {
        let t = Instant::now();
        let coeff = worst_case_coeffs(cfg, &d.q, &d.g)?;
        let wf = waterfill(&coeff, cfg.p_bar, cfg.p_max)?;
        if wf.degenerate {
            rec.notes.push("power: all slopes vanish".into());
        }
        let r = closest_jammer_rate(cfg, &d.q, &wf.schedule, &d.g)?;
        if r >= d.r {
            d.p = wf.schedule;
            d.r = r;
        } else {
            rec.notes.push(format!("power: rejected ({r:.9} < {:.9})", d.r));
        }
        rec.timings.power = t.elapsed().as_secs_f64();
    }

    rec.after_power = d.r;

    if opts.phases && cfg.elements() > 0 {
        let t = Instant::now();
        let results: Vec<Result<(Option<Vec<f64>>, usize)>> = (0..cfg.slots)
            .into_par_iter()
            .map(|n| {
                let uav = d.q.slot_position(n);
                let ch = channel_set(cfg, n, uav, cfg.jammer.closest_point(uav)).map_err(|e| e.in_slot(n))?;
                let mut prob = SlotProblem::new(cfg, &ch, uav, d.p.p[n]).map_err(|e| e.in_slot(n))?;
                let seed = seeds::derive_seed(cfg.seed, &[label::PHASE_RANDOMIZATION, i as u64, n as u64]);
                let res = optimize_slot_phases(&mut prob, cfg, seed).map_err(|e| e.in_slot(n))?;
                let old = ch.sinr(cfg, d.p.p[n], &d.g.theta[n])?;
                let new = ch.sinr(cfg, d.p.p[n], &res.theta)?;
                Ok(((new > old).then_some(res.theta), res.iterations))
            })
            .collect();
        let mut g = d.g.clone();
        for (n, r) in results.into_iter().enumerate() {
            let (theta, its) = r?;
            rec.inner_iterations.push(its);
            if let Some(theta) = theta {
                g.theta[n] = theta;
                rec.phase_slots_accepted += 1;
            }
        }
        d.r = closest_jammer_rate(cfg, &d.q, &d.p, &g)?;
        d.g = g;
        rec.timings.phases = t.elapsed().as_secs_f64();
    }

    rec.after_phases = d.r;

    if opts.trajectory {
        let t = Instant::now();
        let out = optimize_trajectory(cfg, &d.p, &d.g, &d.q)?;
        rec.sca_iterations = out.iterations;
        if out.objective > d.r {
            d.q = out.trajectory;
            d.g = out.phases;
            d.r = out.objective;
            rec.trajectory_accepted = true;
        }
        rec.timings.trajectory = t.elapsed().as_secs_f64();
    }
    rec.after_trajectory = d.r;
    Ok(())
}

/// How a design is scored against the jammer uncertainty.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Jammer at the region center.
    Nominal,
    /// Minimum over seeded uniform draws from the region.
    WorstCaseMc { draws: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub mode: EvalMode,
    /// Average rate in bit/s/Hz.
    pub rate: f64,
    /// Jammer position that attains `rate`.
    pub jammer: Position3<f64>,
}

/// Jammer position of draw `m`; draws with the same seed are nested across sample sizes.
pub fn jammer_draw(cfg: &SystemConfig, m: usize) -> Position3<f64> {
    let mut rng = seeds::stream(cfg.seed, &[label::JAMMER_DRAWS, m as u64]);
    let (a, b, c) = (rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
    cfg.jammer.center + cfg.jammer.offset_from_uniforms(a, b, c)
}

pub fn evaluate_design(cfg: &SystemConfig, q: &Trajectory, p: &PowerSchedule, g: &PhaseSchedule, mode: EvalMode) -> Result<RateReport> {
    match mode {
        EvalMode::Nominal => Ok(RateReport {
            mode,
            rate: average_rate(cfg, q, p, g, cfg.jammer.center)?,
            jammer: cfg.jammer.center,
        }),
        EvalMode::WorstCaseMc { draws } => {
            let draws = draws.max(1);
            if cfg.jammer.radius == 0.0 {
                return Ok(RateReport {
                    mode,
                    rate: average_rate(cfg, q, p, g, cfg.jammer.center)?,
                    jammer: cfg.jammer.center,
                });
            }
            let rates: Vec<(f64, Position3<f64>)> = (0..draws)
                .into_par_iter()
                .map(|m| {
                    let pos = jammer_draw(cfg, m);
                    Ok((average_rate(cfg, q, p, g, pos)?, pos))
                })
                .collect::<Result<_>>()?;
            let (rate, jammer) = rates
                .into_iter()
                .fold((f64::INFINITY, cfg.jammer.center), |a, b| if b.0 < a.0 { b } else { a });
            Ok(RateReport { mode, rate, jammer })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SystemConfig {
        let mut cfg = SystemConfig::default();
        cfg.slots = 6;
        cfg.lx = 2;
        cfg.lz = 2;
        cfg.v_max = 2.0 * cfg.q0.distance(cfg.q_n) / (6.0 * cfg.slot_duration);
        cfg.hull_samples = 20;
        cfg.randomizations = 20;
        cfg
    }

    #[test]
    fn evaluate_only_is_identity() {
        let cfg = small();
        let out = alternating_optimize_with(&cfg, AoOptions::evaluate_only()).unwrap();
        let q = initial_trajectory(&cfg);
        let r = closest_jammer_rate(&cfg, &q, &PowerSchedule::uniform(&cfg), &PhaseSchedule::for_config(&cfg)).unwrap();
        assert_eq!(out.objective, r);
        assert_eq!(out.trace.records.len(), 1);
    }

    #[test]
    fn objective_never_decreases() {
        let cfg = small();
        let out = alternating_optimize(&cfg).unwrap();
        let r = out.trace.objectives();
        assert!(r.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{r:?}");
        assert!(out.trace.records.len() <= cfg.j_max + 1);
        assert!(out.trajectory.violations(&cfg, 1e-7).is_empty());
        assert!(out.power.violations(&cfg, 1e-9).is_empty());
        assert!(out.phases.violations(&cfg).is_empty());
    }

    #[test]
    fn modes_agree_without_uncertainty() {
        let cfg = small();
        let q = initial_trajectory(&cfg);
        let (p, g) = (PowerSchedule::uniform(&cfg), PhaseSchedule::for_config(&cfg));
        let a = evaluate_design(&cfg, &q, &p, &g, EvalMode::Nominal).unwrap();
        let b = evaluate_design(&cfg, &q, &p, &g, EvalMode::WorstCaseMc { draws: 50 }).unwrap();
        assert_eq!(a.rate, b.rate);
    }

    #[test]
    fn single_draw_is_reproducible() {
        let mut cfg = small();
        cfg.jammer.radius = 20.0;
        let q = initial_trajectory(&cfg);
        let (p, g) = (PowerSchedule::uniform(&cfg), PhaseSchedule::for_config(&cfg));
        let a = evaluate_design(&cfg, &q, &p, &g, EvalMode::WorstCaseMc { draws: 1 }).unwrap();
        let b = evaluate_design(&cfg, &q, &p, &g, EvalMode::WorstCaseMc { draws: 1 }).unwrap();
        assert_eq!(a, b);
        assert!(cfg.jammer.contains(a.jammer, 1e-9));
    }
}
