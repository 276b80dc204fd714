//! Semi-discrete Follow-the-Leader dynamics.
//!
//! The state is kept in Lagrangian form: the rear vehicle position `z1` and
//! the dimensionless gaps `y_i = (z_{i+1} - z_i) / ell`. Gap rates are
//! `dy_i/dt = (V(y_{i+1}) - V(y_i)) / ell` with the front closure supplied by
//! [`LagrangianState::leader_gap`]. On a ring the wrap-around gap `y_N` is
//! stored and evolved like every other gap.

use serde::{Deserialize, Serialize};

use crate::error::{FtlError, Result};
use crate::scalar::Real;
use crate::velocity::{VelocityModel, OVERLAP_TOLERANCE};

/// Closure for the gap in front of the lead vehicle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BoundaryMode<T> {
    /// Ring road `[a, b)`; the lead vehicle follows the rear one across `b`.
    Periodic { a: T, b: T },
    /// Infinitely many vehicles ahead at constant gap `m` (so `y_N = m`).
    Leader { m: T },
}

impl<T: Real> BoundaryMode<T> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BoundaryMode::Periodic { a, b } => {
                if !(a < b) || !a.is_finite() || !b.is_finite() {
                    return Err(FtlError::InvalidState(format!("periodic road needs a < b, got [{a}, {b}]")));
                }
            }
            BoundaryMode::Leader { m } => {
                if !(m > T::one()) || !m.is_finite() {
                    return Err(FtlError::InvalidState(format!("leader gap M must exceed 1, got {m}")));
                }
            }
        }
        Ok(())
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, BoundaryMode::Periodic { .. })
    }
}

/// Full particle-system state at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct LagrangianState<T> {
    t: T,
    ell: T,
    z1: T,
    /// Dynamic gaps: `y_1 .. y_{N-1}` in leader mode, `y_1 .. y_N` on a ring.
    y: Vec<T>,
    boundary: BoundaryMode<T>,
}

impl<T: Real> LagrangianState<T> {
    /// Builds a state from user data. Gaps below 1 are rejected outright.
    pub fn new(t: T, ell: T, z1: T, y: Vec<T>, boundary: BoundaryMode<T>) -> Result<Self> {
        Self::checked(t, ell, z1, y, boundary, T::one())
    }

    fn checked(t: T, ell: T, z1: T, y: Vec<T>, boundary: BoundaryMode<T>, floor: T) -> Result<Self> {
        if !(ell > T::zero()) || !ell.is_finite() {
            return Err(FtlError::InvalidState(format!("vehicle length must be positive, got {ell}")));
        }
        if y.is_empty() {
            return Err(FtlError::InvalidState("at least two vehicles are required".into()));
        }
        if let Some((i, &g)) = y.iter().enumerate().find(|(_, &g)| !(g >= floor) || !g.is_finite()) {
            return Err(FtlError::InvalidState(format!("gap y_{} = {g} is below 1", i + 1)));
        }
        boundary.validate()?;
        let mut y = y;
        if let BoundaryMode::Periodic { a, b } = boundary {
            let inner: T = y.iter().copied().sum();
            let gap = (b - a) / ell - inner;
            if !(gap >= T::one() - T::lit(OVERLAP_TOLERANCE)) {
                return Err(FtlError::InvalidState(format!(
                    "wrap-around gap {gap} is below 1: vehicles overlap across the period"
                )));
            }
            y.push(gap.max(T::one()));
        }
        Ok(LagrangianState { t, ell, z1, y, boundary })
    }

    /// Internal constructor for states produced by time stepping; `cycle` is
    /// laid out like [`Self::cycle_gaps`]. Gaps may sit up to
    /// [`OVERLAP_TOLERANCE`] below 1 from rounding.
    pub(crate) fn advanced(&self, t: T, z1: T, cycle: Vec<T>) -> Result<Self> {
        debug_assert_eq!(cycle.len(), self.y.len());
        let floor = T::one() - T::lit(OVERLAP_TOLERANCE);
        if let Some((index, &g)) = cycle.iter().enumerate().find(|(_, &g)| !(g >= floor)) {
            return Err(FtlError::GapCollapse { t: t.to_f64_lossy(), index: index + 1, gap: g.to_f64_lossy() });
        }
        Ok(LagrangianState { t, ell: self.ell, z1, y: cycle, boundary: self.boundary })
    }

    pub fn t(&self) -> T {
        self.t
    }

    pub fn ell(&self) -> T {
        self.ell
    }

    pub fn z1(&self) -> T {
        self.z1
    }

    /// Gaps `y_1 .. y_{N-1}`.
    pub fn gaps(&self) -> &[T] {
        match self.boundary {
            BoundaryMode::Leader { .. } => &self.y,
            BoundaryMode::Periodic { .. } => &self.y[..self.y.len() - 1],
        }
    }

    pub fn boundary(&self) -> &BoundaryMode<T> {
        &self.boundary
    }

    /// Number of vehicles `N`.
    pub fn vehicle_count(&self) -> usize {
        self.gaps().len() + 1
    }

    /// `y_N`: `M` in leader mode, the stored wrap-around gap on a ring.
    pub fn leader_gap(&self) -> Result<T> {
        Ok(match self.boundary {
            BoundaryMode::Leader { m } => m,
            BoundaryMode::Periodic { .. } => self.y[self.y.len() - 1],
        })
    }

    /// Gaps seen by the dynamics. On a ring this is the whole cycle
    /// `y_1 .. y_N`; in leader mode it is `y_1 .. y_{N-1}` (the closure `M`
    /// is a boundary value, not a cell).
    pub fn cycle_gaps(&self) -> Vec<T> {
        self.y.clone()
    }

    /// Positions `z_1 .. z_N` with `z_{i+1} = z_i + ell * y_i`.
    pub fn positions(&self) -> Vec<T> {
        let mut z = Vec::with_capacity(self.vehicle_count());
        let mut cur = self.z1;
        z.push(cur);
        for &g in self.gaps() {
            cur = cur + self.ell * g;
            z.push(cur);
        }
        z
    }

    /// Rebuilds a state from vehicle positions; gaps may sit up to
    /// [`OVERLAP_TOLERANCE`] below 1 from the subtraction.
    pub fn from_positions(t: T, ell: T, z: &[T], boundary: BoundaryMode<T>) -> Result<Self> {
        if z.len() < 2 {
            return Err(FtlError::InvalidState("at least two vehicles are required".into()));
        }
        let y = z.windows(2).map(|w| (w[1] - w[0]) / ell).collect();
        Self::checked(t, ell, z[0], y, boundary, T::one() - T::lit(OVERLAP_TOLERANCE))
    }
}

/// Positions `z_1 .. z_N` of a state.
pub fn positions_from_state<T: Real>(state: &LagrangianState<T>) -> Vec<T> {
    state.positions()
}

/// Time derivatives of the Lagrangian state.
#[derive(Clone, Debug, PartialEq)]
pub struct Rates<T> {
    pub dy: Vec<T>,
    pub dz1: T,
}

/// `dy_i/dt = (V(y_{i+1}) - V(y_i)) / ell` over [`LagrangianState::cycle_gaps`]
/// and `dz_1/dt = V(y_1)`.
pub fn rhs<T: Real>(state: &LagrangianState<T>, model: &VelocityModel<T>) -> Result<Rates<T>> {
    gap_rates(&state.y, state.ell, &state.boundary, model)
}

fn gap_rates<T: Real>(y: &[T], ell: T, boundary: &BoundaryMode<T>, model: &VelocityModel<T>) -> Result<Rates<T>> {
    let speeds = y.iter().map(|&g| model.lagrangian_v(g)).collect::<Result<Vec<T>>>()?;
    let front = match *boundary {
        BoundaryMode::Leader { m } => model.lagrangian_v(m)?,
        BoundaryMode::Periodic { .. } => speeds[0],
    };
    let n = y.len();
    let dy = (0..n)
        .map(|i| {
            let ahead = if i + 1 < n { speeds[i + 1] } else { front };
            (ahead - speeds[i]) / ell
        })
        .collect();
    Ok(Rates { dy, dz1: speeds[0] })
}

/// How often a time-stepping driver keeps a snapshot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Stride {
    /// Every step for at most 1000 vehicles, otherwise about 100 snapshots.
    #[default]
    Auto,
    Every(usize),
}

impl Stride {
    pub fn resolve(self, vehicles: usize, steps: usize) -> usize {
        match self {
            Stride::Every(k) => k.max(1),
            Stride::Auto if vehicles <= 1000 => 1,
            Stride::Auto => (steps / 100).max(1),
        }
    }
}

/// Number of fixed steps of size at most `dt` covering `span`.
pub(crate) fn step_count<T: Real>(span: T, dt: T) -> usize {
    if span <= T::zero() {
        return 0;
    }
    let ratio = (span / dt).to_f64_lossy();
    (ratio - 1e-9).ceil().max(1.0) as usize
}

/// Integrates the gap system with the classical fourth-order Runge-Kutta
/// method on a fixed step no larger than `dt`, landing exactly on `t_end`.
///
/// Every stage is checked for overlap; nothing is clipped.
pub fn integrate<T: Real>(
    state: &LagrangianState<T>,
    model: &VelocityModel<T>,
    t_end: T,
    dt: T,
    stride: Stride,
) -> Result<Vec<LagrangianState<T>>> {
    integrate_recorded(state, model, t_end, dt, stride).map(|(_, states)| states)
}

/// [`integrate`], also returning the step index of every recorded state.
pub fn integrate_recorded<T: Real>(
    state: &LagrangianState<T>,
    model: &VelocityModel<T>,
    t_end: T,
    dt: T,
    stride: Stride,
) -> Result<(Vec<usize>, Vec<LagrangianState<T>>)> {
    if !(dt > T::zero()) {
        return Err(FtlError::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let lv = model.lipschitz_constant();
    if dt * lv > state.ell * (T::one() + T::lit(crate::euler::CFL_ROUNDING)) {
        return Err(FtlError::Cfl((dt * lv / state.ell).to_f64_lossy()));
    }
    if t_end < state.t {
        return Err(FtlError::InvalidArgument(format!("t_end {t_end} precedes the state time {}", state.t)));
    }
    let span = t_end - state.t;
    let steps = step_count(span, dt);
    let h = if steps == 0 { T::zero() } else { span / T::from_count(steps) };
    let keep = stride.resolve(state.vehicle_count(), steps);

    let ell = state.ell;
    let boundary = state.boundary;
    let floor = T::one() - T::lit(OVERLAP_TOLERANCE);
    let t0 = state.t;
    let half = T::lit(0.5);
    let sixth = T::one() / T::lit(6.0);
    let two = T::lit(2.0);

    let stage = |y: &[T], t: T| -> Result<Rates<T>> {
        if let Some((index, &g)) = y.iter().enumerate().find(|(_, &g)| !(g >= floor)) {
            return Err(FtlError::GapCollapse { t: t.to_f64_lossy(), index: index + 1, gap: g.to_f64_lossy() });
        }
        gap_rates(y, ell, &boundary, model).map_err(|e| match e {
            FtlError::Overlap(g) => FtlError::GapCollapse { t: t.to_f64_lossy(), index: y.len() + 1, gap: g },
            other => other,
        })
    };
    let axpy = |y: &[T], k: &[T], s: T| -> Vec<T> { y.iter().zip(k).map(|(&a, &b)| a + s * b).collect() };

    let mut steps_kept = vec![0];
    let mut out = vec![state.clone()];
    let mut cur = state.clone();
    for n in 1..=steps {
        let tn = cur.t;
        let k1 = stage(&cur.y, tn)?;
        let k2 = stage(&axpy(&cur.y, &k1.dy, half * h), tn + half * h)?;
        let k3 = stage(&axpy(&cur.y, &k2.dy, half * h), tn + half * h)?;
        let k4 = stage(&axpy(&cur.y, &k3.dy, h), tn + h)?;
        let y: Vec<T> = (0..cur.y.len())
            .map(|i| cur.y[i] + h * sixth * (k1.dy[i] + two * k2.dy[i] + two * k3.dy[i] + k4.dy[i]))
            .collect();
        let z1 = cur.z1 + h * sixth * (k1.dz1 + two * k2.dz1 + two * k3.dz1 + k4.dz1);
        let t = if n == steps { t_end } else { t0 + h * T::from_count(n) };
        cur = cur.advanced(t, z1, y)?;
        if n % keep == 0 || n == steps {
            steps_kept.push(n);
            out.push(cur.clone());
        }
    }
    Ok((steps_kept, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear() -> VelocityModel<f64> {
        VelocityModel::linear(1.0).unwrap()
    }

    #[test]
    fn leader_gap_in_both_modes() {
        let s = LagrangianState::new(0.0, 0.5, 0.0, vec![2.0], BoundaryMode::Leader { m: 4.0 }).unwrap();
        assert_eq!(s.leader_gap().unwrap(), 4.0);

        // z_1 = 0.05, z_N = 0.85 on [0, 1] with ell = 0.1
        let s = LagrangianState::from_positions(0.0, 0.1, &[0.05_f64, 0.45, 0.85], BoundaryMode::Periodic { a: 0.0, b: 1.0 })
            .unwrap();
        assert!((s.leader_gap().unwrap() - 2.0).abs() < 1e-12);

        // N equally spaced vehicles: all gaps (b - a) / (N ell)
        let (n, ell) = (5usize, 0.1);
        let g = 2.0 / (n as f64 * ell);
        let s = LagrangianState::new(0.0, ell, -1.0, vec![g; n - 1], BoundaryMode::Periodic { a: -1.0, b: 1.0 }).unwrap();
        assert!((s.leader_gap().unwrap() - g).abs() < 1e-12);
    }

    #[test]
    fn overlapping_wraparound_is_rejected() {
        let r = LagrangianState::new(0.0, 0.1, 0.0, vec![5.0, 4.5], BoundaryMode::Periodic { a: 0.0, b: 1.0 });
        assert!(matches!(r, Err(FtlError::InvalidState(_))));
    }

    #[test]
    fn construction_rejects_bad_input() {
        let lead = BoundaryMode::Leader { m: 2.0 };
        assert!(LagrangianState::new(0.0, 0.1, 0.0, vec![0.99], lead).is_err());
        assert!(LagrangianState::new(0.0, 0.0, 0.0, vec![1.0], lead).is_err());
        assert!(LagrangianState::new(0.0, 0.1, 0.0, vec![], lead).is_err());
        assert!(LagrangianState::new(0.0, 0.1, 0.0, vec![2.0], BoundaryMode::Leader { m: 1.0 }).is_err());
        assert!(LagrangianState::new(0.0, 0.1, 0.0, vec![2.0], BoundaryMode::Periodic { a: 1.0, b: 0.0 }).is_err());
    }

    #[test]
    fn rhs_examples() {
        let m = linear();
        let s = LagrangianState::new(0.0, 0.5, 0.0, vec![3.0; 4], BoundaryMode::Leader { m: 3.0 }).unwrap();
        assert!(rhs(&s, &m).unwrap().dy.iter().all(|&r| r == 0.0));

        let s = LagrangianState::new(0.0, 0.5, 0.0, vec![2.0, 4.0], BoundaryMode::Leader { m: 4.0 }).unwrap();
        let r = rhs(&s, &m).unwrap();
        assert_eq!(r.dy, vec![0.5, 0.0]);
        assert_eq!(r.dz1, 0.5);

        let s = LagrangianState::new(0.0, 0.1, 0.0, vec![1.5, 3.0, 2.0], BoundaryMode::Periodic { a: 0.0, b: 1.0 }).unwrap();
        let r = rhs(&s, &m).unwrap();
        // the wrap gap changes at rate (V(y_1) - V(y_N)) / ell
        assert_eq!(r.dy.len(), 4);
        let wrap_rate = (m.lagrangian_v(1.5).unwrap() - m.lagrangian_v(s.leader_gap().unwrap()).unwrap()) / 0.1;
        assert!((r.dy[3] - wrap_rate).abs() < 1e-12);
        let total: f64 = r.dy.iter().map(|d| 0.1 * d).sum::<f64>();
        assert!(total.abs() < 1e-14);
    }

    #[test]
    fn positions_roundtrip() {
        let s = LagrangianState::new(0.0, 0.5, 0.0, vec![2.0, 2.0], BoundaryMode::Leader { m: 2.0 }).unwrap();
        assert_eq!(positions_from_state(&s), vec![0.0, 1.0, 2.0]);
        let s = LagrangianState::new(0.0, 0.1, -1.0, vec![1.0_f64], BoundaryMode::Leader { m: 2.0 }).unwrap();
        let z = s.positions();
        assert_eq!(z, vec![-1.0, -0.9]);
        let back = LagrangianState::from_positions(0.0, 0.1, &z, *s.boundary()).unwrap();
        assert!((back.gaps()[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn equilibrium_stays_put() {
        let m = linear();
        let s = LagrangianState::new(0.0, 0.5, 0.0, vec![2.0], BoundaryMode::Leader { m: 2.0 }).unwrap();
        let traj = integrate(&s, &m, 1.0, 0.1, Stride::Every(1)).unwrap();
        assert_eq!(traj.len(), 11);
        for st in &traj {
            assert_eq!(st.gaps(), &[2.0]);
        }
        let last = traj.last().unwrap();
        assert_eq!(last.t(), 1.0);
        assert!((last.z1() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn rk4_matches_fine_euler_reference() {
        let m = linear();
        let s = LagrangianState::new(0.0, 0.5, 0.0, vec![2.0, 4.0], BoundaryMode::Leader { m: 4.0 }).unwrap();
        let traj = integrate(&s, &m, 0.1, 0.01, Stride::Every(1)).unwrap();
        let got = traj.last().unwrap().gaps().to_vec();

        // first-order reference with a tiny step, written out independently
        let v = |y: f64| 1.0 - 1.0 / y;
        let (mut y1, mut y2) = (2.0f64, 4.0f64);
        let h = 1e-6;
        for _ in 0..100_000 {
            let d1 = (v(y2) - v(y1)) / 0.5;
            let d2 = (v(4.0) - v(y2)) / 0.5;
            y1 += h * d1;
            y2 += h * d2;
        }
        assert!((got[0] - y1).abs() < 1e-6, "{} vs {}", got[0], y1);
        assert!((got[1] - y2).abs() < 1e-6);
        assert!((got[0] - (2.0 + 0.1 * 0.5)).abs() < 5e-3);
    }

    #[test]
    fn integrate_rejects_large_steps() {
        let m = linear();
        let s = LagrangianState::new(0.0, 0.5, 0.0, vec![2.0], BoundaryMode::Leader { m: 2.0 }).unwrap();
        assert!(matches!(integrate(&s, &m, 1.0, 0.6, Stride::Auto), Err(FtlError::Cfl(_))));
        assert!(integrate(&s, &m, 1.0, 0.0, Stride::Auto).is_err());
    }

    #[test]
    fn periodic_ring_conserves_length() {
        let m = linear();
        let s = LagrangianState::new(0.0, 0.1, 0.0, vec![1.0, 3.0, 1.5, 2.0], BoundaryMode::Periodic { a: 0.0, b: 1.0 }).unwrap();
        for st in integrate(&s, &m, 2.0, 0.05, Stride::Every(1)).unwrap() {
            let total: f64 = st.cycle_gaps().iter().map(|g| 0.1 * g).sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(st.cycle_gaps().iter().all(|&g| (1.0 - 1e-8..=3.0 + 1e-8).contains(&g)));
        }
    }
}
