//! Worst-case power allocation by capped water-filling.

use crate::channels::channel_set;
use crate::convex_backend::{self, AffExpr, Constraint, ConicProgram};
use crate::error::{Error, Result};
use crate::scenario::{PhaseSchedule, PowerSchedule, SystemConfig, Trajectory};

/// Per-watt SINR slope of every slot, `a[n] = g₀[n] / (p_m·g̃_m[n] + σ²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotSnrCoeff {
    pub a: Vec<f64>,
}

/// Slopes with the jammer placed, slot by slot, at the point of its region closest to the UAV.
pub fn worst_case_coeffs(cfg: &SystemConfig, q: &Trajectory, g: &PhaseSchedule) -> Result<SlotSnrCoeff> {
    if q.points.len() != cfg.slots + 1 || g.theta.len() != cfg.slots {
        return Err(Error::Dimension("trajectory or phases do not match the slot count".into()));
    }
    let a = (0..cfg.slots)
        .map(|n| {
            let uav = q.slot_position(n);
            let ch = channel_set(cfg, n, uav, cfg.jammer.closest_point(uav)).map_err(|e| e.in_slot(n))?;
            let g0 = ch.signal_gain(&g.theta[n])?;
            let gm = ch.jammer_gain(&g.theta[n])?;
            Ok(g0 / (cfg.p_jam * gm + cfg.sigma2))
        })
        .collect::<Result<_>>()?;
    Ok(SlotSnrCoeff { a })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Waterfill {
    pub schedule: PowerSchedule,
    /// Water level `ν`; infinite when every useful slot is capped at `p_max`.
    pub level: f64,
    /// Set when every slope is zero and the uniform schedule was returned.
    pub degenerate: bool,
}

/// `(1/N) Σ log₂(1 + p[n] a[n])`.
pub fn rate_objective(a: &[f64], p: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(p).map(|(a, p)| (a * p).ln_1p()).sum::<f64>() * std::f64::consts::LOG2_E / a.len() as f64
}

fn fill(a: &[f64], nu: f64, p_max: f64) -> impl Iterator<Item = f64> + '_ {
    a.iter().map(move |&a| if a > 0.0 { (nu - 1.0 / a).clamp(0.0, p_max) } else { 0.0 })
}

/// Maximizes `(1/N) Σ log₂(1 + p[n] a[n])` subject to `0 ≤ p[n] ≤ p_max` and
/// `mean(p) ≤ p_bar`.
pub fn waterfill(coeff: &SlotSnrCoeff, p_bar: f64, p_max: f64) -> Result<Waterfill> {
    let a = &coeff.a;
    let n = a.len();
    if n == 0 {
        return Err(Error::Dimension("water-filling needs at least one slot".into()));
    }
    if a.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::Domain("SINR slopes must be finite and non-negative".into()));
    }
    if !(p_bar > 0.0 && p_max >= p_bar) {
        return Err(Error::Domain(format!("need 0 < p_bar ≤ p_max (got {p_bar}, {p_max})")));
    }
    if a.iter().all(|&x| x == 0.0) {
        log::warn!("all SINR slopes vanish; falling back to uniform power");
        return Ok(Waterfill {
            schedule: PowerSchedule { p: vec![p_bar; n] },
            level: f64::NAN,
            degenerate: true,
        });
    }
    let budget = n as f64 * p_bar;
    let max_inv = a.iter().filter(|&&x| x > 0.0).map(|x| 1.0 / x).fold(0.0, f64::max);
    let mut hi = p_max + max_inv;
    let total = |nu: f64| fill(a, nu, p_max).sum::<f64>();

    if total(hi) <= budget {
        // Average constraint inactive: every useful slot at peak power.
        let p = fill(a, hi, p_max).collect();
        return Ok(Waterfill {
            schedule: PowerSchedule { p },
            level: f64::INFINITY,
            degenerate: false,
        });
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let r = total(mid) - budget;
        if r.abs() <= 1e-12 * budget {
            lo = mid;
            hi = mid;
            break;
        }
        if r > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut nu = 0.5 * (lo + hi);

    // Closed-form level on the final active set removes the bisection residual.
    let mut capped = 0usize;
    let mut free_inv = 0.0;
    let mut free = 0usize;
    for &x in a.iter().filter(|&&x| x > 0.0) {
        let p = nu - 1.0 / x;
        if p >= p_max {
            capped += 1;
        } else if p > 0.0 {
            free += 1;
            free_inv += 1.0 / x;
        }
    }
    if free > 0 {
        let exact = (budget - capped as f64 * p_max + free_inv) / free as f64;
        let same_set = a.iter().filter(|&&x| x > 0.0).all(|&x| {
            let (old, new) = (nu - 1.0 / x, exact - 1.0 / x);
            (old >= p_max) == (new >= p_max) && (old > 0.0) == (new > 0.0)
        });
        if same_set {
            nu = exact;
        }
    }

    let mut p: Vec<f64> = fill(a, nu, p_max).collect();
    let sum: f64 = p.iter().sum();
    if sum > budget {
        let s = budget / sum;
        p.iter_mut().for_each(|x| *x *= s);
    }
    Ok(Waterfill {
        schedule: PowerSchedule { p },
        level: nu,
        degenerate: false,
    })
}

/// Independent solution of the same allocation as an exponential-cone program.
pub fn conic_power_allocation(coeff: &SlotSnrCoeff, p_bar: f64, p_max: f64, tol: f64) -> Result<PowerSchedule> {
    let n = coeff.a.len();
    let mut prog = ConicProgram::new();
    // Normalized powers u = p / p_max.
    let u: Vec<_> = (0..n).map(|_| prog.add_nonneg_scalar()).collect();
    let t = prog.add_scalars(n);
    let mut budget = AffExpr::constant(n as f64 * p_bar / p_max);
    for k in 0..n {
        prog.add(Constraint::geq(1.0.into(), u[k].into()));
        budget = budget - u[k].into();
        let arg = AffExpr::term(u[k], coeff.a[k] * p_max).plus(1.0);
        prog.add(Constraint::Exponential([t[k].into(), 1.0.into(), arg]));
    }
    prog.add(Constraint::NonNeg(vec![budget]));
    let obj = t.iter().fold(AffExpr::zero(), |e, &v| e.with(v, 1.0 / n as f64));
    prog.maximize(obj);
    let sol = convex_backend::solve(&prog, tol)?;
    if !sol.is_optimal() {
        return Err(Error::Domain(format!("power program ended with {:?}", sol.status)));
    }
    let p: Vec<f64> = u.iter().map(|&v| sol.scalar(v).unwrap_or(0.0).clamp(0.0, 1.0) * p_max).collect();
    let p = polish(&coeff.a, &p, n as f64 * p_bar, p_max).unwrap_or(p);
    Ok(PowerSchedule { p })
}

/// Newton refinement of an interior-point allocation on the active set it identifies.
/// Returns `None` when the refined point fails the optimality conditions.
fn polish(a: &[f64], p: &[f64], budget: f64, p_max: f64) -> Option<Vec<f64>> {
    let eps = 1e-3 * p_max;
    if p.iter().sum::<f64>() < budget - eps {
        return None;
    }
    let free: Vec<usize> = (0..p.len()).filter(|&k| a[k] > 0.0 && p[k] > eps && p[k] < p_max - eps).collect();
    if free.is_empty() {
        return None;
    }
    let mut q: Vec<f64> = p.iter().map(|&x| if x <= eps { 0.0 } else if x >= p_max - eps { p_max } else { x }).collect();
    let fixed: f64 = (0..p.len()).filter(|k| !free.contains(k)).map(|k| q[k]).sum();
    let slope = |k: usize, x: f64| a[k] / (1.0 + a[k] * x);
    let mut lambda = free.iter().map(|&k| slope(k, q[k])).sum::<f64>() / free.len() as f64;
    let mut converged = false;
    for _ in 0..50 {
        let r_b = free.iter().map(|&k| q[k]).sum::<f64>() + fixed - budget;
        let (mut num, mut den) = (-r_b, 0.0);
        let mut steps = Vec::with_capacity(free.len());
        for &k in &free {
            let r = slope(k, q[k]) - lambda;
            let h = -slope(k, q[k]).powi(2);
            num += r / h;
            den += 1.0 / h;
            steps.push((r, h));
        }
        let d_lambda = num / den;
        let mut largest = 0.0f64;
        for (&k, (r, h)) in free.iter().zip(steps) {
            let dp = (d_lambda - r) / h;
            q[k] += dp;
            largest = largest.max(dp.abs());
        }
        lambda += d_lambda;
        if largest <= 1e-13 * p_max && d_lambda.abs() <= 1e-13 * lambda.abs() {
            converged = true;
            break;
        }
    }
    let tol = 1e-9 * lambda;
    let kkt = free.iter().all(|&k| q[k] >= 0.0 && q[k] <= p_max)
        && (0..p.len()).filter(|k| !free.contains(k)).all(|k| {
            if q[k] == 0.0 {
                a[k] <= lambda + tol
            } else {
                slope(k, p_max) >= lambda - tol
            }
        });
    (converged && kkt).then_some(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wf(a: &[f64], pb: f64, pm: f64) -> Waterfill {
        waterfill(&SlotSnrCoeff { a: a.to_vec() }, pb, pm).unwrap()
    }

    #[test]
    fn single_slot_and_symmetry() {
        assert_eq!(wf(&[3.0], 1.0, 1.5).schedule.p, vec![1.0]);
        assert_eq!(wf(&[3.0], 1.5, 1.5).schedule.p, vec![1.5]);
        let w = wf(&[2.0; 5], 1.0, 1.5);
        assert!(w.schedule.p.iter().all(|&p| (p - 1.0).abs() < 1e-12));
    }

    #[test]
    fn kkt_levels_agree() {
        let a = [0.5, 3.0, 10.0, 0.05, 1.2];
        let w = wf(&a, 1.0, 2.0);
        let p = &w.schedule.p;
        assert!((p.iter().sum::<f64>() - 5.0).abs() < 1e-12);
        for (x, pi) in a.iter().zip(p) {
            if *pi > 0.0 && *pi < 2.0 {
                assert!((w.level - 1.0 / x - pi).abs() <= 1e-8);
            }
        }
        assert_eq!(p[3], 0.0);
        let uniform = rate_objective(&a, &[1.0; 5]);
        assert!(rate_objective(&a, p) >= uniform);
    }

    #[test]
    fn zero_slopes_are_degenerate() {
        let w = wf(&[0.0, 0.0], 1.0, 2.0);
        assert!(w.degenerate);
        assert_eq!(w.schedule.p, vec![1.0, 1.0]);
    }

    #[test]
    fn matches_conic_solution() {
        let c = SlotSnrCoeff { a: vec![0.7, 4.0, 0.2] };
        let w = waterfill(&c, 1.0, 1.5).unwrap();
        let k = conic_power_allocation(&c, 1.0, 1.5, 1e-10).unwrap();
        for (x, y) in w.schedule.p.iter().zip(&k.p) {
            assert!((x - y).abs() <= 1e-6 * 1.5, "{x} vs {y}");
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(waterfill(&SlotSnrCoeff { a: vec![-1.0] }, 1.0, 2.0).is_err());
        assert!(waterfill(&SlotSnrCoeff { a: vec![1.0] }, 3.0, 2.0).is_err());
    }
}
