//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use irs_antijam::ao::alternating_optimize;
use irs_antijam::beamforming::{optimize_slot_phases, recover_phases, solve_slot_sdp, SlotProblem};
use irs_antijam::channels::channel_set;
use irs_antijam::experiments::{self, ExperimentSpec, Scheme, SweepVariable};
use irs_antijam::oracles::{exhaustive_phase_oracle, verify_trajectory};
use irs_antijam::power_alloc::{conic_power_allocation, waterfill, SlotSnrCoeff};
use irs_antijam::scenario::{initial_trajectory, ConfigFile, PhaseSchedule, Position3, PowerSchedule, SystemConfig};
use irs_antijam::trajectory::{f2, f2_tangent, optimize_trajectory, rate_surrogate, slack_rate, xi_tangent, zeta_coefficients};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WATERFILL_TOL: f64 = 1e-6;
const WATERFILL_SECS: f64 = 5.0;
const SDR_RECOVERY_FRACTION: f64 = 0.95;
const SDR_BOUND_SLACK: f64 = 1e-6;
const SDR_SECS: f64 = 60.0;
const COPHASE_TOL: f64 = 1e-3;
const SPROC_TOL: f64 = 1e-6;
const SPROC_SAMPLES: usize = 10_000;
const SURROGATE_SAMPLES: usize = 100_000;
const TANGENCY_TOL: f64 = 1e-12;
const ZETA_REL_TOL: f64 = 1e-6;
const GRID_GAP: f64 = 0.02;
const GRID_SECS: f64 = 120.0;
const AO_MONOTONE_TOL: f64 = 1e-5;
const AO_MAX_OUTER: usize = 30;
const TREND_SECS: f64 = 1800.0;

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

fn waterfill_exactness() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=50);
        let a: Vec<f64> = (0..n).map(|_| log_uniform(&mut rng, 1e-2, 1e3)).collect();
        let p_bar = rng.random_range(0.1..2.0);
        let p_max = p_bar * rng.random_range(1.0..4.0);
        let coeff = SlotSnrCoeff { a };
        let wf = waterfill(&coeff, p_bar, p_max).expect("waterfill");
        let conic = conic_power_allocation(&coeff, p_bar, p_max, 1e-10).expect("conic power program");
        let dp = wf.schedule.p.iter().zip(&conic.p).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        worst = worst.max(dp / p_max);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= WATERFILL_TOL && secs < WATERFILL_SECS,
        format!("max |dp|/p_max = {worst:.2e} (tol {WATERFILL_TOL:.0e}), {secs:.2} s (limit {WATERFILL_SECS} s)"),
    )
}

fn random_slot(rng: &mut ChaCha8Rng, lx: usize, jammer: bool) -> (SystemConfig, SlotProblem, irs_antijam::channels::ChannelSet) {
    let mut f = ConfigFile {
        slots: 1,
        lx,
        lz: 1,
        jammer_radius: if jammer { rng.random_range(0.0..30.0) } else { 0.0 },
        jammer_center: Position3::new(rng.random_range(150.0..350.0), rng.random_range(0.0..150.0), 0.0),
        p_jam_dbm: if jammer { Some(rng.random_range(10.0..35.0)) } else { None },
        randomizations: 200,
        ..ConfigFile::default()
    };
    f.irs_pos = Position3::new(rng.random_range(150.0..250.0), rng.random_range(50.0..150.0), 5.0);
    let cfg = f.into_config();
    let uav = Position3::new(rng.random_range(0.0..400.0), rng.random_range(0.0..200.0), cfg.altitude);
    let ch = channel_set(&cfg, 0, uav, cfg.jammer.closest_point(uav)).expect("channels");
    let prob = SlotProblem::new(&cfg, &ch, uav, cfg.p_bar).expect("slot problem");
    (cfg, prob, ch)
}

fn sdr_chain() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut bound_violations = 0;
    let mut worst_fraction = f64::INFINITY;
    for _ in 0..20 {
        let (cfg, prob, _) = random_slot(&mut rng, 3, true);
        let data = prob.sdp_data();
        let relaxed = solve_slot_sdp(&data, cfg.solver_tol).expect("relaxation");
        let oracle = exhaustive_phase_oracle(&data, 16).expect("phase oracle");
        if oracle.ratio > relaxed.bound * (1.0 + SDR_BOUND_SLACK) {
            bound_violations += 1;
        }
        let (_, achieved) = recover_phases(&relaxed.v, &data, 200, &mut rng).expect("recovery");
        worst_fraction = worst_fraction.min(achieved / relaxed.bound);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        bound_violations == 0 && worst_fraction >= SDR_RECOVERY_FRACTION && secs < SDR_SECS,
        format!(
            "{bound_violations} bound violations, worst recovered/bound = {worst_fraction:.4} (min {SDR_RECOVERY_FRACTION}), {secs:.1} s (limit {SDR_SECS} s)"
        ),
    )
}

fn cophasing() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for k in 0..50 {
        let (cfg, mut prob, ch) = random_slot(&mut rng, 1, false);
        let analytic = ch.h_gu.arg() + ch.h_gr[0].arg() - ch.h_ru[0].arg();
        let res = optimize_slot_phases(&mut prob, &cfg, k).expect("slot phases");
        worst = worst.max(angle_diff(res.theta[0], analytic));
    }
    verdict(worst <= COPHASE_TOL, format!("max angle error = {worst:.2e} rad (tol {COPHASE_TOL:.0e})"))
}

fn sprocedure_soundness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut iterates, mut violations, mut worst) = (0usize, 0usize, f64::NEG_INFINITY);
    for run in 0..50 {
        let l = if run % 2 == 0 { 0 } else { 2 };
        let mut f = ConfigFile {
            slots: 6,
            lx: l,
            lz: l,
            irs_enabled: l > 0,
            jammer_radius: rng.random_range(2.0..30.0),
            jammer_center: Position3::new(rng.random_range(200.0..300.0), rng.random_range(0.0..100.0), 0.0),
            hemisphere_up: run % 3 != 0,
            seed: run,
            ..ConfigFile::default()
        };
        f.v_max = 2.0 * f.q0.distance(f.q_n) / (f.slots as f64 * f.slot_duration);
        let cfg = f.into_config();
        let out = optimize_trajectory(&cfg, &PowerSchedule::uniform(&cfg), &PhaseSchedule::for_config(&cfg), &initial_trajectory(&cfg))
            .expect("trajectory optimization");
        let samples: Vec<Position3<f64>> = (0..SPROC_SAMPLES)
            .map(|_| cfg.jammer.center + cfg.jammer.offset_from_uniforms(rng.random(), rng.random(), rng.random()))
            .collect();
        for rec in out.trace.iter().filter(|r| r.accepted) {
            iterates += 1;
            for n in 0..cfg.slots {
                let uav = rec.trajectory.slot_position(n);
                for &m in &samples {
                    let dist2 = uav.distance(m).powi(2);
                    let excess = (rec.d[n] - dist2) / dist2.max(1.0);
                    worst = worst.max(excess);
                    if excess > SPROC_TOL {
                        violations += 1;
                    }
                }
            }
        }
    }
    verdict(
        violations == 0 && iterates > 0,
        format!("{iterates} accepted iterates, {violations} violations, worst relative excess {worst:.2e} (tol {SPROC_TOL:.0e})"),
    )
}

fn surrogate_suite() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut minorant, mut tangency, mut zeta_err, mut xi_bad, mut f2_bad) = (0usize, 0.0f64, 0.0f64, 0usize, 0usize);
    let irs = Position3::new(1.0, 0.5, 0.05);
    for _ in 0..SURROGATE_SAMPLES {
        let (s0, g0) = (log_uniform(&mut rng, 1e-3, 1e3), log_uniform(&mut rng, 1e-3, 1e3));
        let (s, g) = (log_uniform(&mut rng, 1e-3, 1e3), log_uniform(&mut rng, 1e-3, 1e3));
        let f = slack_rate(s, g);
        if rate_surrogate(s, g, s0, g0).unwrap() > f + TANGENCY_TOL * f.max(1.0) {
            minorant += 1;
        }
        tangency = tangency.max((rate_surrogate(s0, g0, s0, g0).unwrap() - slack_rate(s0, g0)).abs());
        let (z1, z2) = zeta_coefficients(s0, g0).unwrap();
        let (hs, hg) = (1e-4 * s0, 1e-4 * g0);
        let d1 = (slack_rate(s0 + hs, g0) - slack_rate(s0 - hs, g0)) / (2.0 * hs);
        let d2 = (slack_rate(s0, g0 + hg) - slack_rate(s0, g0 - hg)) / (2.0 * hg);
        zeta_err = zeta_err.max(((z1 - d1) / z1).abs()).max(((z2 - d2) / z2).abs());

        let (xi0, xi) = (log_uniform(&mut rng, 1e-2, 1e2), log_uniform(&mut rng, 1e-2, 1e2));
        if xi_tangent(xi, xi0) > xi.powi(-2) * (1.0 + TANGENCY_TOL) {
            xi_bad += 1;
        }
        let (x0, y0, x, y) = (rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
        let exact = f2(x, y, irs, 1.0);
        if f2_tangent(x, y, x0, y0, irs, 1.0) > exact + TANGENCY_TOL * exact.max(1.0) {
            f2_bad += 1;
        }
    }
    verdict(
        minorant == 0 && tangency <= TANGENCY_TOL && zeta_err <= ZETA_REL_TOL && xi_bad == 0 && f2_bad == 0,
        format!(
            "{SURROGATE_SAMPLES} samples: {minorant} minorant failures, tangency gap {tangency:.1e}, zeta rel err {zeta_err:.1e}, {xi_bad} xi and {f2_bad} F2 bound failures"
        ),
    )
}

fn two_slot_config(radius: f64) -> SystemConfig {
    ConfigFile {
        q0: Position3::new(0.0, 0.0, 13.0),
        q_n: Position3::new(52.0, 26.0, 13.0),
        gn_pos: Position3::new(26.0, 13.0, 0.0),
        jammer_center: Position3::new(32.5, 6.5, 0.0),
        jammer_radius: radius,
        altitude: 13.0,
        slots: 2,
        slot_duration: 0.5,
        v_max: 80.0,
        irs_enabled: false,
        lx: 0,
        lz: 0,
        seed: 1,
        ..ConfigFile::default()
    }
    .into_config()
}

fn sca_vs_grid() -> Verdict {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut passed = true;
    for radius in [0.0, 5.0] {
        let check = verify_trajectory(&two_slot_config(radius), 25).expect("trajectory check");
        passed &= check.relative_gap <= GRID_GAP;
        parts.push(format!("D_m={radius}: gap {:.3}%", 100.0 * check.relative_gap));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(passed && secs < GRID_SECS, format!("{} (limit {}%), {secs:.2} s", parts.join(", "), 100.0 * GRID_GAP))
}

fn ao_convergence() -> Verdict {
    let cfg = ConfigFile {
        slots: 20,
        lx: 4,
        lz: 4,
        jammer_radius: 0.0,
        j_max: AO_MAX_OUTER,
        mu2: 1e-3,
        ..ConfigFile::default()
    }
    .into_config();
    let out = alternating_optimize(&cfg).expect("alternating optimization");
    let r = out.trace.objectives();
    let worst_drop = r.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
    let last_step = r.windows(2).last().map_or(0.0, |w| (w[1] - w[0]).abs());
    let outer = out.trace.outer_iterations();
    verdict(
        worst_drop <= AO_MONOTONE_TOL && out.trace.converged && outer <= AO_MAX_OUTER && out.trace.failure.is_none(),
        format!(
            "R: {:.4} -> {:.4} in {outer} outer iterations, largest decrease {worst_drop:.1e} (tol {AO_MONOTONE_TOL:.0e}), final |dR| {last_step:.1e}",
            r[0],
            r[r.len() - 1]
        ),
    )
}

fn trends(dir: &Path) -> Verdict {
    let start = Instant::now();
    let mut spec = experiments::preset("fig2").expect("preset");
    spec.output_dir = dir.join("trend");
    let table = experiments::run_sweep(&spec, 1).expect("sweep");
    let get = |s: Scheme, d: f64, f: fn(&experiments::ResultRow) -> f64| {
        let row = table.rows.iter().find(|r| r.scheme == s.name() && r.value == d).expect("cell");
        assert_eq!(row.status, "ok", "{}: {}", s.name(), row.status);
        f(row)
    };
    let mut lines = Vec::new();
    let mut passed = true;
    for (metric, f) in [
        ("worst-case", (|r: &experiments::ResultRow| r.worst_case_rate) as fn(&experiments::ResultRow) -> f64),
        ("objective", |r: &experiments::ResultRow| r.objective),
    ] {
        let (g0, g20) = (get(Scheme::ProposedIrsG, 0.0, f), get(Scheme::ProposedIrsG, 20.0, f));
        let (m0, m20) = (get(Scheme::ProposedIrsM, 0.0, f), get(Scheme::ProposedIrsM, 20.0, f));
        let none = get(Scheme::NoIrs, 0.0, f);
        let (a, b, c) = (g0 > none, m20 < m0, g0 - g20 < m0 - m20);
        passed &= a && b && c;
        lines.push(format!(
            "{metric}: (a) {g0:.3} > {none:.3} {a}, (b) {m20:.3} < {m0:.3} {b}, (c) {:.3} < {:.3} {c}",
            g0 - g20,
            m0 - m20
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(passed && secs < TREND_SECS, format!("{}; {secs:.0} s", lines.join("; ")))
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "timings.csv" {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism(dir: &Path) -> Verdict {
    let base = ConfigFile {
        slots: 6,
        v_max: 180.0,
        lx: 2,
        lz: 2,
        jammer_radius: 10.0,
        mc_draws: 200,
        j_max: 4,
        seed: 9,
        ..ConfigFile::default()
    };
    let cfg = base.clone().into_config();
    let mut solves = Vec::new();
    for name in ["solve_a", "solve_b"] {
        let (out, summary) = experiments::solve(&cfg).expect("solve");
        experiments::write_solution(&dir.join(name), &out, &summary, 0.0).expect("write");
        solves.push(tree(&dir.join(name)));
    }
    let mut sweeps = Vec::new();
    for (name, jobs) in [("sweep_a", 1), ("sweep_b", 2)] {
        let spec = ExperimentSpec {
            base_config: None,
            base: Some(base.clone()),
            sweep: SweepVariable::PJamDbm,
            values: vec![15.0, 30.0],
            d_m_values: vec![],
            schemes: vec![Scheme::ProposedIrsG, Scheme::NoIrs],
            output_dir: dir.join(name),
        };
        experiments::run_sweep(&spec, jobs).expect("sweep");
        sweeps.push(tree(&dir.join(name)));
    }
    let files = solves[0].len() + sweeps[0].len();
    verdict(
        solves[0] == solves[1] && sweeps[0] == sweeps[1] && files > 0,
        format!("{files} output files compared byte for byte across reruns"),
    )
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let criteria: Vec<Criterion> = vec![
        ("water-filling exactness", Box::new(waterfill_exactness)),
        ("relaxation validity chain", Box::new(sdr_chain)),
        ("co-phasing closed form", Box::new(cophasing)),
        ("S-procedure soundness", Box::new(sprocedure_soundness)),
        ("surrogate tangency and bounds", Box::new(surrogate_suite)),
        ("SCA versus grid oracle", Box::new(sca_vs_grid)),
        ("AO monotonicity and convergence", Box::new(ao_convergence)),
        ("trend reproduction", Box::new(|| trends(tmp.path()))),
        ("determinism", Box::new(|| determinism(tmp.path()))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            verdict(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        if !v.passed {
            failed += 1;
        }
        println!(
            "criterion {} [{name}]: {} ({}; {:.1} s)",
            i + 1,
            if v.passed { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
