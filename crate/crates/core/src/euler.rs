//! Forward Euler discretisation of the Follow-the-Leader model.
//!
//! In gap variables the update reads
//! `y_i <- y_i + lambda (V(y_{i+1}) - V(y_i))` with `lambda = dt / ell`,
//! which is the upwind scheme for `y_t - V(y)_x = 0`. Under
//! `lambda * L_v <= 1` each new gap is a convex combination of `y_i` and
//! `y_{i+1}`, so the scheme is monotone.

use crate::error::{FtlError, Result};
use crate::ode::{step_count, BoundaryMode, LagrangianState, Stride};
use crate::scalar::Real;
use crate::velocity::{VelocityModel, OVERLAP_TOLERANCE};

/// Whether a step refuses `lambda * L_v > 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CflGuard {
    #[default]
    Enforce,
    /// Diagnostic only: lets negative-control runs break monotonicity.
    Disabled,
}

/// Relative slack in the `lambda * L_v <= 1` guard.
pub const CFL_ROUNDING: f64 = 1e-12;

/// Largest time step with `(dt / ell) * L_v <= 1`.
pub fn cfl_max_dt<T: Real>(ell: T, lipschitz: T) -> T {
    ell / lipschitz
}

fn check_cfl<T: Real>(lambda: T, model: &VelocityModel<T>, guard: CflGuard) -> Result<()> {
    if !(lambda > T::zero()) {
        return Err(FtlError::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    let margin = lambda * model.lipschitz_constant();
    // lambda recovered as dt / ell may sit a few ulps above an exact 1
    if guard == CflGuard::Enforce && margin > T::one() + T::lit(CFL_ROUNDING) {
        return Err(FtlError::Cfl(margin.to_f64_lossy()));
    }
    Ok(())
}

/// One forward Euler step in gap variables.
pub fn euler_step_y<T: Real>(state: &LagrangianState<T>, model: &VelocityModel<T>, lambda: T) -> Result<LagrangianState<T>> {
    euler_step_y_guarded(state, model, lambda, CflGuard::Enforce)
}

pub fn euler_step_y_guarded<T: Real>(
    state: &LagrangianState<T>,
    model: &VelocityModel<T>,
    lambda: T,
    guard: CflGuard,
) -> Result<LagrangianState<T>> {
    check_cfl(lambda, model, guard)?;
    let dt = lambda * state.ell();
    advance(state, model, lambda, state.t() + dt)
}

fn advance<T: Real>(state: &LagrangianState<T>, model: &VelocityModel<T>, lambda: T, t_next: T) -> Result<LagrangianState<T>> {
    let ring = state.cycle_gaps();
    let speeds = ring.iter().map(|&g| model.lagrangian_v(g)).collect::<Result<Vec<T>>>()?;
    let closure = match *state.boundary() {
        BoundaryMode::Leader { m } => model.lagrangian_v(m)?,
        BoundaryMode::Periodic { .. } => speeds[0],
    };
    let y = &ring;
    let next: Vec<T> = (0..y.len())
        .map(|i| {
            let ahead = speeds.get(i + 1).copied().unwrap_or(closure);
            y[i] + lambda * (ahead - speeds[i])
        })
        .collect();
    let z1 = state.z1() + lambda * state.ell() * speeds[0];
    state.advanced(t_next, z1, next)
}

/// One forward Euler step on vehicle positions:
/// `z_i <- z_i + dt * v(ell / (z_{i+1} - z_i))`, the lead vehicle moving at
/// `v(1 / y_N)`.
pub fn euler_step_z<T: Real>(
    positions: &[T],
    ell: T,
    boundary: &BoundaryMode<T>,
    model: &VelocityModel<T>,
    dt: T,
) -> Result<Vec<T>> {
    euler_step_z_guarded(positions, ell, boundary, model, dt, CflGuard::Enforce)
}

pub fn euler_step_z_guarded<T: Real>(
    positions: &[T],
    ell: T,
    boundary: &BoundaryMode<T>,
    model: &VelocityModel<T>,
    dt: T,
    guard: CflGuard,
) -> Result<Vec<T>> {
    let n = positions.len();
    if n < 2 {
        return Err(FtlError::InvalidState("at least two vehicles are required".into()));
    }
    check_cfl(dt / ell, model, guard)?;
    let floor = ell * (T::one() - T::lit(OVERLAP_TOLERANCE));
    if let Some(i) = (0..n - 1).find(|&i| !(positions[i + 1] - positions[i] >= floor)) {
        return Err(FtlError::InvalidState(format!("vehicles {} and {} overlap", i + 1, i + 2)));
    }
    let lead_gap = match *boundary {
        BoundaryMode::Leader { m } => m,
        BoundaryMode::Periodic { a, b } => (b - positions[n - 1] + positions[0] - a) / ell,
    };
    let mut out = Vec::with_capacity(n);
    for i in 0..n - 1 {
        let rho = ell / (positions[i + 1] - positions[i]);
        out.push(positions[i] + dt * model.v(rho)?);
    }
    if lead_gap < T::one() - T::lit(OVERLAP_TOLERANCE) {
        return Err(FtlError::InvalidState(format!("lead gap {lead_gap} is below 1")));
    }
    out.push(positions[n - 1] + dt * model.v(lead_gap.recip())?);
    Ok(out)
}

/// Sequence of recorded states from [`run_discrete`].
#[derive(Clone, Debug)]
pub struct DiscreteRun<T> {
    pub lambda: T,
    pub dt: T,
    /// `lambda * L_v`.
    pub cfl_margin: T,
    /// Step index of every recorded state.
    pub steps: Vec<usize>,
    pub states: Vec<LagrangianState<T>>,
}

impl<T: Real> DiscreteRun<T> {
    pub fn last(&self) -> &LagrangianState<T> {
        self.states.last().expect("runs hold at least the initial state")
    }

    /// True when consecutive recorded states are consecutive steps.
    pub fn is_dense(&self) -> bool {
        self.steps.windows(2).all(|w| w[1] == w[0] + 1)
    }
}

/// Largest ratio not above `lambda` whose steps tile `span` exactly.
pub fn landing_lambda<T: Real>(span: T, ell: T, lambda: T) -> T {
    let n = step_count(span, lambda * ell).max(1);
    (span / (T::from_count(n) * ell)).min(lambda)
}

/// Iterates [`euler_step_y`] until `t >= t_end`.
pub fn run_discrete<T: Real>(
    initial: &LagrangianState<T>,
    model: &VelocityModel<T>,
    t_end: T,
    lambda: T,
    stride: Stride,
) -> Result<DiscreteRun<T>> {
    run_discrete_guarded(initial, model, t_end, lambda, stride, CflGuard::Enforce)
}

pub fn run_discrete_guarded<T: Real>(
    initial: &LagrangianState<T>,
    model: &VelocityModel<T>,
    t_end: T,
    lambda: T,
    stride: Stride,
    guard: CflGuard,
) -> Result<DiscreteRun<T>> {
    check_cfl(lambda, model, guard)?;
    let dt = lambda * initial.ell();
    let steps = step_count(t_end - initial.t(), dt);
    let keep = stride.resolve(initial.vehicle_count(), steps);
    let t0 = initial.t();

    let mut run = DiscreteRun {
        lambda,
        dt,
        cfl_margin: lambda * model.lipschitz_constant(),
        steps: vec![0],
        states: vec![initial.clone()],
    };
    let mut cur = initial.clone();
    for n in 1..=steps {
        let mut t = t0 + dt * T::from_count(n);
        // absorb rounding in n * dt so the final label reads t_end
        if n == steps && (t - t_end).abs() <= T::lit(1e-9) * dt {
            t = t_end;
        }
        cur = advance(&cur, model, lambda, t)?;
        if n % keep == 0 || n == steps {
            run.steps.push(n);
            run.states.push(cur.clone());
        }
    }
    Ok(run)
}

/// `theta_{i+1/2} = (V_{i+1} - V_i) / (y_{i+1} - y_i)`, with `theta = 0`
/// where neighbouring gaps coincide. The step then reads
/// `y_i <- (1 - lambda theta) y_i + lambda theta y_{i+1}`.
pub fn monotonicity_weights<T: Real>(state: &LagrangianState<T>, model: &VelocityModel<T>) -> Result<Vec<T>> {
    let ring = state.cycle_gaps();
    let closure = match *state.boundary() {
        BoundaryMode::Leader { m } => m,
        BoundaryMode::Periodic { .. } => ring[0],
    };
    let y = &ring;
    (0..y.len())
        .map(|i| {
            let ahead = ring.get(i + 1).copied().unwrap_or(closure);
            if ahead == y[i] {
                Ok(T::zero())
            } else {
                Ok((model.lagrangian_v(ahead)? - model.lagrangian_v(y[i])?) / (ahead - y[i]))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear() -> VelocityModel<f64> {
        VelocityModel::linear(1.0).unwrap()
    }

    fn lead(y: Vec<f64>, ell: f64, m: f64) -> LagrangianState<f64> {
        LagrangianState::new(0.0, ell, 0.0, y, BoundaryMode::Leader { m }).unwrap()
    }

    #[test]
    fn landing_lambda_tiles_the_span() {
        assert_eq!(landing_lambda(2.0, 0.05, 1.0), 1.0);
        let lam = landing_lambda(2.0_f64, 0.05, 0.9);
        assert!(lam <= 0.9);
        assert!((lam * 0.05 * 45.0 - 2.0).abs() < 1e-14);
    }

    #[test]
    fn cfl_dt() {
        assert_eq!(cfl_max_dt(0.01, 1.0), 0.01);
        assert_eq!(cfl_max_dt(0.5, 2.0), 0.25);
        let dt = cfl_max_dt(0.3_f64, 3.0);
        assert!(((dt / 0.3) * 3.0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn step_y_examples() {
        let m = linear();
        let s = lead(vec![3.0; 3], 0.5, 3.0);
        assert_eq!(euler_step_y(&s, &m, 0.9).unwrap().gaps(), &[3.0; 3]);

        let s = lead(vec![2.0, 4.0], 0.5, 4.0);
        let next = euler_step_y(&s, &m, 0.5).unwrap();
        assert_eq!(next.gaps(), &[2.125, 4.0]);
        assert_eq!(next.t(), 0.25);
        assert_eq!(next.z1(), 0.25 * 0.5);

        // ring whose wrap gap equals y_1, so the closure speed is V(y_1)
        let ell = 0.5;
        let s = LagrangianState::new(0.0, ell, 0.0, vec![2.0, 4.0], BoundaryMode::Periodic { a: 0.0, b: 8.0 * ell })
            .unwrap();
        assert_eq!(s.leader_gap().unwrap(), 2.0);
        let next = euler_step_y(&s, &m, 0.5).unwrap();
        assert_eq!(next.gaps(), &[2.125, 3.875]);
        assert_eq!(next.gaps().iter().sum::<f64>(), 6.0);
        assert_eq!(next.leader_gap().unwrap(), 2.0);
    }

    #[test]
    fn step_refuses_cfl_violation() {
        let m = linear();
        let s = lead(vec![2.0, 4.0], 0.5, 4.0);
        assert!(matches!(euler_step_y(&s, &m, 1.01), Err(FtlError::Cfl(_))));
        assert!(euler_step_y(&s, &m, 1.0).is_ok());
        assert!(euler_step_y_guarded(&s, &m, 1.5, CflGuard::Disabled).is_ok());
    }

    #[test]
    fn step_z_examples() {
        let m = linear();
        let lead = BoundaryMode::Leader { m: 4.0 };
        let z = euler_step_z(&[0.0, 1.0, 2.0], 0.5, &lead, &m, 0.25).unwrap();
        // lead vehicle moves at v(1/M) = v(0.25) = 0.75
        assert_eq!(z, vec![0.125, 1.125, 2.1875]);

        let z = euler_step_z(&[0.0, 0.3, 0.6, 0.9], 0.1, &BoundaryMode::Leader { m: 3.0 }, &m, 0.05).unwrap();
        let shift = 0.05 * (1.0 - 1.0 / 3.0);
        for (a, b) in z.iter().zip([0.0, 0.3, 0.6, 0.9]) {
            assert!((a - b - shift).abs() < 1e-15);
        }
        assert!(euler_step_z(&[0.0, 0.3], 0.1, &lead, &m, 0.2).is_err());
    }

    #[test]
    fn step_z_commutes_with_step_y() {
        let m = VelocityModel::quadratic(1.5_f64).unwrap();
        let lv = m.lipschitz_constant();
        for boundary in [BoundaryMode::Leader { m: 2.5 }, BoundaryMode::Periodic { a: -1.0, b: 1.5 }] {
            let s = LagrangianState::new(0.0, 0.1, -1.0, vec![1.0, 3.0, 2.2, 1.4, 5.0, 1.1], boundary).unwrap();
            let lambda = 0.8 / lv;
            let via_y = euler_step_y(&s, &m, lambda).unwrap();
            let z = euler_step_z(&s.positions(), 0.1, &boundary, &m, lambda * 0.1).unwrap();
            for (a, b) in via_y.positions().iter().zip(&z) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn run_examples() {
        let m = linear();
        let s = lead(vec![2.0, 4.0], 0.5, 4.0);
        let run = run_discrete(&s, &m, 0.0, 0.5, Stride::Auto).unwrap();
        assert_eq!(run.states.len(), 1);

        let run = run_discrete(&s, &m, 0.5, 0.5, Stride::Every(1)).unwrap();
        assert_eq!(run.states.len(), 3);
        // hand-iterated: V(2.125) = 1 - 1/2.125
        let v = |y: f64| 1.0 - 1.0 / y;
        let y1 = [2.0 + 0.5 * (v(4.0) - v(2.0)), 4.0];
        let y2 = [y1[0] + 0.5 * (v(y1[1]) - v(y1[0])), y1[1] + 0.5 * (v(4.0) - v(y1[1]))];
        assert_eq!(run.last().gaps(), &y2);
        assert_eq!(run.last().t(), 0.5);
        assert!(run.is_dense());

        let c = lead(vec![1.7; 5], 0.2, 1.7);
        let run = run_discrete(&c, &m, 3.0, 0.9, Stride::Auto).unwrap();
        assert!(run.states.iter().all(|st| st.gaps() == c.gaps()));
    }

    #[test]
    fn stride_thins_recording() {
        let m = linear();
        let s = lead(vec![2.0; 10], 0.1, 2.0);
        let run = run_discrete(&s, &m, 1.0, 0.5, Stride::Every(3)).unwrap();
        assert_eq!(run.steps, vec![0, 3, 6, 9, 12, 15, 18, 20]);
        assert!(!run.is_dense());
    }

    #[test]
    fn theta_examples() {
        let m = linear();
        let s = lead(vec![2.0, 2.0], 0.5, 2.0);
        assert_eq!(monotonicity_weights(&s, &m).unwrap(), vec![0.0, 0.0]);
        let s = lead(vec![2.0, 4.0], 0.5, 4.0);
        assert_eq!(monotonicity_weights(&s, &m).unwrap()[0], 0.125);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn gaps() -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(1.0f64..6.0, 2..40)
        }

        proptest! {
            #[test]
            fn step_is_a_convex_combination(y in gaps(), m in 1.01f64..6.0, frac in 0.05f64..1.0) {
                let model = linear();
                let s = lead(y.clone(), 0.1, m);
                let lambda = frac / model.lipschitz_constant();
                let theta = monotonicity_weights(&s, &model).unwrap();
                let next = euler_step_y(&s, &model, lambda).unwrap();
                for i in 0..y.len() {
                    let ahead = if i + 1 < y.len() { y[i + 1] } else { m };
                    prop_assert!(theta[i] >= 0.0 && theta[i] <= model.lipschitz_constant() + 1e-15);
                    let convex = (1.0 - lambda * theta[i]) * y[i] + lambda * theta[i] * ahead;
                    prop_assert!((next.gaps()[i] - convex).abs() < 1e-12);
                    prop_assert!(next.gaps()[i] >= y[i].min(ahead) - 1e-12);
                    prop_assert!(next.gaps()[i] <= y[i].max(ahead) + 1e-12);
                }
            }

            #[test]
            fn positions_keep_safe_spacing(y in gaps(), frac in 0.05f64..1.0) {
                let model = VelocityModel::quadratic(1.0).unwrap();
                let b = 0.1 * (y.iter().sum::<f64>() + 1.5);
                let boundary = BoundaryMode::Periodic { a: 0.0, b };
                let s = LagrangianState::new(0.0, 0.1, 0.0, y, boundary).unwrap();
                let dt = frac * cfl_max_dt(0.1, model.lipschitz_constant());
                let z = euler_step_z(&s.positions(), 0.1, &boundary, &model, dt).unwrap();
                for w in z.windows(2) {
                    prop_assert!(w[1] - w[0] >= 0.1 * (1.0 - 1e-12));
                }
            }
        }
    }
}
