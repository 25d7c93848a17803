//! Line-of-sight channel models, composite gains and the achievable average rate.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::scenario::{PhaseSchedule, PowerSchedule, Position3, SystemConfig, Trajectory};

pub type ComplexVector<T> = Vec<Complex<T>>;

pub fn distance<T: Real>(a: Position3<T>, b: Position3<T>) -> T {
    a.distance(b)
}

fn checked_distance<T: Real>(tx: Position3<T>, rx: Position3<T>) -> Result<T> {
    let d = tx.distance(rx);
    if !(d > T::zero()) || !d.is_finite() {
        return Err(Error::Domain(format!(
            "channel endpoints must be distinct and finite (distance {d})"
        )));
    }
    Ok(d)
}

/// Free-space phase factor `exp(-j 2π d / λ)`.
#[inline]
pub fn propagation_phase<T: Real>(d: T, wavelength: T) -> Complex<T> {
    // Reduce the phase in cycles before scaling by 2π to keep precision for d ≫ λ.
    let cycles = d / wavelength;
    let frac = cycles - cycles.floor();
    Complex::from_polar(T::one(), -T::TAU() * frac)
}

/// Scalar LoS channel `√ρ / d · exp(-j 2π d / λ)`.
pub fn los_scalar<T: Real>(tx: Position3<T>, rx: Position3<T>, rho: T, wavelength: T) -> Result<Complex<T>> {
    let d = checked_distance(tx, rx)?;
    Ok(propagation_phase(d, wavelength) * (rho.sqrt() / d))
}

/// Unit-modulus UPA response toward `target`, ordered x-major (`index = ix · lz + iz`).
pub fn upa_array_factor<T: Real>(
    irs: Position3<T>,
    target: Position3<T>,
    lx: usize,
    lz: usize,
    spacing: T,
    wavelength: T,
) -> Result<ComplexVector<T>> {
    let d = checked_distance(irs, target)?;
    let phi_x = (target.x - irs.x) / d;
    let phi_z = (target.z - irs.z) / d;
    let kx = T::TAU() * spacing * phi_x / wavelength;
    let kz = T::TAU() * spacing * phi_z / wavelength;
    let ux: Vec<Complex<T>> = (0..lx)
        .map(|i| Complex::from_polar(T::one(), -kx * T::from_usize(i).unwrap()))
        .collect();
    let uz: Vec<Complex<T>> = (0..lz)
        .map(|i| Complex::from_polar(T::one(), -kz * T::from_usize(i).unwrap()))
        .collect();
    Ok(ux.iter().flat_map(|a| uz.iter().map(move |b| a * b)).collect())
}

/// IRS steering vector with path loss, `√ρ/d · exp(-j2πd/λ) · (u_x ⊗ u_z)`.
#[allow(clippy::too_many_arguments)]
pub fn upa_steering<T: Real>(
    irs: Position3<T>,
    target: Position3<T>,
    lx: usize,
    lz: usize,
    spacing: T,
    wavelength: T,
    rho: T,
) -> Result<ComplexVector<T>> {
    let lead = los_scalar(irs, target, rho, wavelength)?;
    let mut v = upa_array_factor(irs, target, lx, lz, spacing, wavelength)?;
    for e in &mut v {
        *e *= lead;
    }
    Ok(v)
}

/// `|direct + Σ conj(in_i) e^{jθ_i} out_i|²`.
pub fn composite_gain<T: Real>(
    direct: Complex<T>,
    cascade_in: &[Complex<T>],
    phases: &[T],
    cascade_out: &[Complex<T>],
) -> Result<T> {
    if cascade_in.len() != phases.len() || cascade_out.len() != phases.len() {
        return Err(Error::Dimension(format!(
            "composite gain needs equal lengths, got {}/{}/{}",
            cascade_in.len(),
            phases.len(),
            cascade_out.len()
        )));
    }
    let total = cascade_in
        .iter()
        .zip(phases)
        .zip(cascade_out)
        .fold(direct, |acc, ((a, &t), b)| {
            acc + a.conj() * Complex::from_polar(T::one(), t) * b
        });
    Ok(total.norm_sqr())
}

/// All channels seen in one slot.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    pub h_gu: Complex<f64>,
    pub h_mu: Complex<f64>,
    pub h_ru: ComplexVector<f64>,
    pub h_gr: ComplexVector<f64>,
    pub h_mr: ComplexVector<f64>,
    pub slot: usize,
}

impl ChannelSet {
    pub fn elements(&self) -> usize {
        self.h_ru.len()
    }

    pub fn signal_gain(&self, theta: &[f64]) -> Result<f64> {
        composite_gain(self.h_gu, &self.h_gr, theta, &self.h_ru)
    }

    pub fn jammer_gain(&self, theta: &[f64]) -> Result<f64> {
        composite_gain(self.h_mu, &self.h_mr, theta, &self.h_ru)
    }

    /// Signal cascade `c = [conj(h_gr) ⊙ h_ru ; h_gu]`, so that `g₀ = |Σ c_i v_i|²` with
    /// `v = [e^{jθ}; 1]`.
    pub fn signal_cascade(&self) -> ComplexVector<f64> {
        cascade(self.h_gu, &self.h_gr, &self.h_ru)
    }

    pub fn jammer_cascade(&self) -> ComplexVector<f64> {
        cascade(self.h_mu, &self.h_mr, &self.h_ru)
    }

    pub fn sinr(&self, cfg: &SystemConfig, p: f64, theta: &[f64]) -> Result<f64> {
        let g0 = self.signal_gain(theta)?;
        let gm = self.jammer_gain(theta)?;
        Ok(p * g0 / (cfg.p_jam * gm + cfg.sigma2))
    }
}

pub fn cascade(direct: Complex<f64>, cin: &[Complex<f64>], cout: &[Complex<f64>]) -> ComplexVector<f64> {
    cin.iter()
        .zip(cout)
        .map(|(a, b)| a.conj() * b)
        .chain(std::iter::once(direct))
        .collect()
}

/// Builds every channel of the slot with the UAV at `uav` and the jammer at `jammer`.
pub fn channel_set(cfg: &SystemConfig, slot: usize, uav: Position3<f64>, jammer: Position3<f64>) -> Result<ChannelSet> {
    let rho = cfg.rho;
    let wl = cfg.wavelength;
    let h_gu = los_scalar(cfg.gn_pos, uav, rho, wl)?;
    let h_mu = los_scalar(jammer, uav, rho, wl)?;
    let (h_ru, h_gr, h_mr) = if cfg.elements() == 0 {
        (Vec::new(), Vec::new(), Vec::new())
    } else {
        let st = |target| upa_steering(cfg.irs_pos, target, cfg.lx, cfg.lz, cfg.elem_spacing, wl, rho);
        (st(uav)?, st(cfg.gn_pos)?, st(jammer)?)
    };
    Ok(ChannelSet {
        h_gu,
        h_mu,
        h_ru,
        h_gr,
        h_mr,
        slot,
    })
}

fn check_dims(cfg: &SystemConfig, q: &Trajectory, p: &PowerSchedule, g: &PhaseSchedule) -> Result<()> {
    let n = cfg.slots;
    if q.points.len() != n + 1 || p.p.len() != n || g.theta.len() != n {
        return Err(Error::Dimension(format!(
            "schedules do not match {n} slots ({} waypoints, {} powers, {} phase rows)",
            q.points.len(),
            p.p.len(),
            g.theta.len()
        )));
    }
    if g.theta.iter().any(|r| r.len() != cfg.elements()) {
        return Err(Error::Dimension(format!(
            "phase rows must have {} entries",
            cfg.elements()
        )));
    }
    Ok(())
}

/// Average rate with a slot-dependent jammer placement `jammer(n, q[n])`.
pub fn average_rate_with<F>(
    cfg: &SystemConfig,
    q: &Trajectory,
    p: &PowerSchedule,
    g: &PhaseSchedule,
    mut jammer: F,
) -> Result<f64>
where
    F: FnMut(usize, Position3<f64>) -> Position3<f64>,
{
    check_dims(cfg, q, p, g)?;
    let mut sum = 0.0;
    for n in 0..cfg.slots {
        if p.p[n] == 0.0 {
            continue;
        }
        let uav = q.slot_position(n);
        let ch = channel_set(cfg, n, uav, jammer(n, uav))?;
        sum += ch.sinr(cfg, p.p[n], &g.theta[n])?.ln_1p();
    }
    Ok(sum * std::f64::consts::LOG2_E / cfg.slots as f64)
}

/// Achievable average rate (bits/s/Hz) with the jammer fixed at `jammer_pos`.
pub fn average_rate(
    cfg: &SystemConfig,
    q: &Trajectory,
    p: &PowerSchedule,
    g: &PhaseSchedule,
    jammer_pos: Position3<f64>,
) -> Result<f64> {
    average_rate_with(cfg, q, p, g, |_, _| jammer_pos)
}

/// Average rate with the jammer at the point of the uncertainty region closest to the UAV
/// in every slot.
pub fn closest_jammer_rate(cfg: &SystemConfig, q: &Trajectory, p: &PowerSchedule, g: &PhaseSchedule) -> Result<f64> {
    average_rate_with(cfg, q, p, g, |_, uav| cfg.jammer.closest_point(uav))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::initial_trajectory;

    type P = Position3<f64>;

    #[test]
    fn distances() {
        assert_eq!(distance(P::new(0.0, 0.0, 0.0), P::new(3.0, 4.0, 0.0)), 5.0);
        let d = distance(P::new(200.0, 100.0, 0.0), P::new(201.0, 100.0, 5.0));
        assert!((d - 26f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn scalar_los() {
        let o = P::zero();
        let h = los_scalar(o, P::new(100.0, 0.0, 0.0), 1e-3, 0.1).unwrap();
        assert!((h.norm() - 3.16228e-4).abs() < 1e-9);
        let h = los_scalar(o, P::new(0.1, 0.0, 0.0), 1.0, 0.1).unwrap();
        assert!((h.re - 10.0).abs() < 1e-9 && h.im.abs() < 1e-9);
        assert!(los_scalar(o, o, 1.0, 0.1).is_err());
    }

    #[test]
    fn steering_second_entry_phase() {
        let irs = P::zero();
        // φ_x = 0.5 with target in the x-y plane
        let target = P::new(0.5, 0.75f64.sqrt(), 0.0);
        let v = upa_steering(irs, target, 2, 1, 0.05, 0.1, 1.0).unwrap();
        let ratio = v[1] / v[0];
        let expect = Complex::from_polar(1.0, -std::f64::consts::PI * 0.5);
        assert!((ratio - expect).norm() < 1e-12);
    }

    #[test]
    fn single_element_and_broadside() {
        let irs = P::new(1.0, 2.0, 3.0);
        let t = P::new(4.0, 6.0, 3.0);
        let v = upa_steering(irs, t, 1, 1, 0.05, 0.1, 1e-3).unwrap();
        assert_eq!(v[0], los_scalar(irs, t, 1e-3, 0.1).unwrap());
        let flat = upa_steering(irs, P::new(1.0, 50.0, 3.0), 3, 4, 0.05, 0.1, 1e-3).unwrap();
        assert!(flat.iter().all(|e| (e - flat[0]).norm() < 1e-15));
    }

    #[test]
    fn gain_extremes() {
        let direct = Complex::new(0.3, -0.1);
        assert!((composite_gain::<f64>(direct, &[], &[], &[]).unwrap() - direct.norm_sqr()).abs() < 1e-15);
        let cin = [Complex::new(1.0, 2.0), Complex::new(-0.5, 0.2)];
        let cout = [Complex::new(0.1, 0.7), Complex::new(0.4, -0.3)];
        let phases: Vec<f64> = cin
            .iter()
            .zip(&cout)
            .map(|(a, b)| direct.arg() - (a.conj() * b).arg())
            .collect();
        let g = composite_gain(direct, &cin, &phases, &cout).unwrap();
        let coherent = direct.norm() + cin.iter().zip(&cout).map(|(a, b)| a.norm() * b.norm()).sum::<f64>();
        assert!((g - coherent * coherent).abs() < 1e-12);
        assert!(composite_gain(direct, &cin, &phases[..1], &cout).is_err());
    }

    #[test]
    fn rate_vanishes_without_power() {
        let cfg = SystemConfig::default();
        let q = initial_trajectory(&cfg);
        let p = PowerSchedule { p: vec![0.0; cfg.slots] };
        let g = PhaseSchedule::for_config(&cfg);
        assert_eq!(average_rate(&cfg, &q, &p, &g, cfg.jammer.center).unwrap(), 0.0);
    }
}
