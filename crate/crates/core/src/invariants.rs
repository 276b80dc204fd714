//! Executable forms of the monotone-scheme properties: bounds, L1
//! contraction, TV decay, the discrete entropy inequality, ring mass, time
//! Lipschitz continuity, the position/gap commutation and the coordinate
//! map roundtrip.
//!
//! Sums over gaps use [`LagrangianState::cycle_gaps`]. In leader mode the
//! closure `M` enters variations as a fixed right neighbour.

use serde::Serialize;

use crate::error::{FtlError, Result};
use crate::euler::{euler_step_z_guarded, CflGuard, DiscreteRun};
use crate::ode::{BoundaryMode, LagrangianState};
use crate::scalar::{sgn, Real};
use crate::transform::CoordinateMap;
use crate::velocity::VelocityModel;

/// Absolute tolerances per property.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub bounds: f64,
    pub contraction: f64,
    pub tv: f64,
    pub entropy: f64,
    pub mass: f64,
    pub lipschitz: f64,
    pub commutation: f64,
    pub roundtrip: f64,
}

impl Tolerances {
    /// Properties that hold exactly for the forward Euler scheme.
    pub const DISCRETE: Tolerances = Tolerances {
        bounds: 1e-12,
        contraction: 1e-12,
        tv: 1e-12,
        entropy: 1e-12,
        mass: 1e-12,
        lipschitz: 1e-12,
        commutation: 1e-12,
        roundtrip: 1e-12,
    };

    /// Integrator error budget for the Runge-Kutta flow.
    pub const ODE: Tolerances = Tolerances {
        bounds: 1e-8,
        contraction: 1e-8,
        tv: 1e-8,
        entropy: 1e-8,
        mass: 1e-12,
        lipschitz: 1e-8,
        commutation: 1e-12,
        roundtrip: 1e-12,
    };
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvariantViolation {
    pub step: usize,
    pub invariant: String,
    pub magnitude: f64,
}

/// Multiple of `f64::EPSILON * scale` treated as rounding noise.
pub const ROUNDING_ULPS: f64 = 4.0;

/// Largest amount by which a property is exceeded at each recorded step.
#[derive(Clone, Debug, PartialEq)]
pub struct Excess {
    pub invariant: &'static str,
    /// `(step, excess)`; excess `<= 0` means satisfied.
    pub per_step: Vec<(usize, f64)>,
    /// Magnitude of the quantities entering the check, so that
    /// `EPSILON * scale` bounds what rounding alone can produce.
    pub scale: f64,
}

impl Excess {
    /// `tol`, raised to the rounding floor of this check when that is larger.
    pub fn threshold(&self, tol: f64) -> f64 {
        tol.max(ROUNDING_ULPS * f64::EPSILON * self.scale)
    }

    pub fn max(&self) -> f64 {
        self.per_step.iter().map(|&(_, e)| e).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn violations(&self, tol: f64) -> Vec<InvariantViolation> {
        self.per_step
            .iter()
            .filter(|&&(_, e)| e > self.threshold(tol))
            .map(|&(step, e)| InvariantViolation { step, invariant: self.invariant.to_string(), magnitude: e })
            .collect()
    }
}

/// Gaps followed by the fixed closure value (leader mode) or the ring.
fn with_closure<T: Real>(state: &LagrangianState<T>) -> Vec<T> {
    let mut g = state.cycle_gaps();
    if let BoundaryMode::Leader { m } = *state.boundary() {
        g.push(m);
    }
    g
}

/// Total variation of the gaps, including the closure `M` or the ring wrap.
pub fn gap_total_variation<T: Real>(state: &LagrangianState<T>) -> T {
    let g = with_closure(state);
    crate::analysis::total_variation(&g, state.boundary().is_periodic())
}

/// `[min, max]` of the initial gaps together with the closure.
pub fn initial_bounds<T: Real>(state: &LagrangianState<T>) -> (T, T) {
    with_closure(state).iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &g| (lo.min(g), hi.max(g)))
}

fn abs_sum<T: Real>(v: &[T]) -> f64 {
    v.iter().map(|g| g.abs()).sum::<T>().to_f64_lossy()
}

fn abs_max<T: Real>(v: &[T]) -> f64 {
    v.iter().map(|g| g.abs()).fold(T::zero(), T::max).to_f64_lossy()
}

pub fn bounds_excess<T: Real>(steps: &[usize], states: &[LagrangianState<T>]) -> Excess {
    let (lo, hi) = initial_bounds(&states[0]);
    let per_step = steps
        .iter()
        .zip(states)
        .map(|(&n, s)| {
            let e = s.cycle_gaps().iter().map(|&g| (lo - g).max(g - hi)).fold(T::neg_infinity(), T::max);
            (n, e.to_f64_lossy())
        })
        .collect();
    Excess { invariant: "bounds", per_step, scale: hi.abs().max(lo.abs()).to_f64_lossy() }
}

pub fn tv_increase<T: Real>(steps: &[usize], states: &[LagrangianState<T>]) -> Excess {
    let per_step = steps
        .windows(2)
        .zip(states.windows(2))
        .map(|(n, w)| (n[1], (gap_total_variation(&w[1]) - gap_total_variation(&w[0])).to_f64_lossy()))
        .collect();
    Excess { invariant: "tv_diminishing", per_step, scale: 2.0 * abs_sum(&with_closure(&states[0])) }
}

/// Growth of `sum |y_i - ytilde_i|` between consecutive recorded states of
/// two runs sharing step indices.
pub fn l1_contraction<T: Real>(steps: &[usize], a: &[LagrangianState<T>], b: &[LagrangianState<T>]) -> Result<Excess> {
    if a.len() != b.len() || a.len() != steps.len() {
        return Err(FtlError::InvalidArgument("runs must be recorded at the same steps".into()));
    }
    let dist = |x: &LagrangianState<T>, y: &LagrangianState<T>| -> T {
        x.cycle_gaps().iter().zip(y.cycle_gaps()).map(|(&p, q)| (p - q).abs()).sum()
    };
    let d: Vec<T> = a.iter().zip(b).map(|(x, y)| dist(x, y)).collect();
    let per_step = (1..d.len()).map(|k| (steps[k], (d[k] - d[k - 1]).to_f64_lossy())).collect();
    let scale = 2.0 * (abs_sum(&a[0].cycle_gaps()) + abs_sum(&b[0].cycle_gaps()));
    Ok(Excess { invariant: "l1_contraction", per_step, scale })
}

/// Ring only: `|ell * sum y - (b - a)|` and drift of `ell * sum y` between records.
pub fn mass_defect<T: Real>(steps: &[usize], states: &[LagrangianState<T>]) -> Excess {
    let total = |s: &LagrangianState<T>| s.cycle_gaps().iter().copied().sum::<T>();
    let per_step = match *states[0].boundary() {
        BoundaryMode::Leader { .. } => Vec::new(),
        BoundaryMode::Periodic { a, b } => {
            let s0 = total(&states[0]);
            steps
                .iter()
                .zip(states)
                .map(|(&n, s)| {
                    let closure = (s.ell() * total(s) - (b - a)).abs();
                    let drift = s.ell() * (total(s) - s0).abs();
                    (n, closure.max(drift).to_f64_lossy())
                })
                .collect()
        }
    };
    let s0 = &states[0];
    let scale = (s0.vehicle_count() as f64) * (s0.ell() * s0.cycle_gaps().iter().copied().sum::<T>()).to_f64_lossy();
    Excess { invariant: "periodic_mass", per_step, scale }
}

/// `ell * sum |y(t_k) - y(t_0)| - L_v (t_k - t_0) TV(y(t_0))` for every record.
pub fn time_lipschitz_excess<T: Real>(steps: &[usize], states: &[LagrangianState<T>], model: &VelocityModel<T>) -> Excess {
    let first = &states[0];
    let g0 = first.cycle_gaps();
    let tv0 = gap_total_variation(first);
    let lv = model.lipschitz_constant();
    let per_step = steps
        .iter()
        .zip(states)
        .map(|(&n, s)| {
            let moved: T = s.cycle_gaps().iter().zip(&g0).map(|(&p, &q)| (p - q).abs()).sum();
            (n, (s.ell() * moved - lv * (s.t() - first.t()) * tv0).to_f64_lossy())
        })
        .collect();
    let span = (states[states.len() - 1].t() - first.t()).to_f64_lossy();
    let scale = 2.0 * first.ell().to_f64_lossy() * abs_sum(&g0) + lv.to_f64_lossy() * span * tv0.to_f64_lossy();
    Excess { invariant: "time_lipschitz", per_step, scale }
}

/// Uniform constants `k` from `lo` to `hi`, `count` of them.
pub fn k_grid<T: Real>(lo: T, hi: T, count: usize) -> Vec<T> {
    if count <= 1 || hi <= lo {
        return vec![lo];
    }
    (0..count).map(|j| lo + (hi - lo) * T::from_count(j) / T::from_count(count - 1)).collect()
}

/// Per-step maximum excess in the discrete entropy inequality
/// `(|y'_i - k| - |y_i - k|) / dt <= (q_{i+1} - q_i) / ell`,
/// `q_i = sgn(y_i - k) (V(y_i) - V(k))`, over all cells and all `k`.
///
/// Reported as a positive violation (0 when satisfied). The run must record
/// every step.
pub fn entropy_residual<T: Real>(run: &DiscreteRun<T>, model: &VelocityModel<T>, k_values: &[T]) -> Result<Vec<T>> {
    if !run.is_dense() {
        return Err(FtlError::InvalidArgument("entropy residual needs every step recorded".into()));
    }
    let mut out = Vec::with_capacity(run.states.len().saturating_sub(1));
    for w in run.states.windows(2) {
        let (cur, next) = (&w[0], &w[1]);
        let (lambda, dt) = (run.lambda, run.dt);
        let y = cur.cycle_gaps();
        let y1 = next.cycle_gaps();
        let speeds = y.iter().map(|&g| model.lagrangian_v(g)).collect::<Result<Vec<T>>>()?;
        let closure = match *cur.boundary() {
            BoundaryMode::Leader { m } => Some((m, model.lagrangian_v(m)?)),
            BoundaryMode::Periodic { .. } => None,
        };
        let mut worst = T::zero();
        for &k in k_values {
            let vk = model.lagrangian_v(k)?;
            let q = |g: T, v: T| sgn(g - k) * (v - vk);
            for i in 0..y.len() {
                let qi = q(y[i], speeds[i]);
                let q_ahead = match (y.get(i + 1), closure) {
                    (Some(&g), _) => q(g, speeds[i + 1]),
                    (None, Some((m, vm))) => q(m, vm),
                    (None, None) => q(y[0], speeds[0]),
                };
                // same inequality multiplied through by dt, then divided back
                let r = ((y1[i] - k).abs() - (y[i] - k).abs() - lambda * (q_ahead - qi)) / dt;
                worst = worst.max(r);
            }
        }
        out.push(worst);
    }
    Ok(out)
}

pub fn entropy_excess<T: Real>(run: &DiscreteRun<T>, model: &VelocityModel<T>, k_values: &[T]) -> Result<Excess> {
    let r = entropy_residual(run, model, k_values)?;
    let top = run.states.iter().map(|s| abs_max(&with_closure(s))).fold(abs_max(k_values), f64::max);
    let scale = 4.0 * top / run.dt.to_f64_lossy();
    Ok(Excess { invariant: "entropy", per_step: r.iter().enumerate().map(|(k, e)| (run.steps[k + 1], e.to_f64_lossy())).collect(), scale })
}

/// `max |euler_step_z(z^n) - z^{n+1}|` per step.
pub fn commutation_defect<T: Real>(run: &DiscreteRun<T>, model: &VelocityModel<T>) -> Result<Excess> {
    if !run.is_dense() {
        return Err(FtlError::InvalidArgument("commutation check needs every step recorded".into()));
    }
    let mut per_step = Vec::new();
    let mut scale = 0.0f64;
    for (k, w) in run.states.windows(2).enumerate() {
        scale = scale.max(w[1].vehicle_count() as f64 * abs_max(&w[1].positions()));
        // replays a run that already happened, so the guard is not re-applied
        let z = euler_step_z_guarded(&w[0].positions(), w[0].ell(), w[0].boundary(), model, run.dt, CflGuard::Disabled)?;
        let e = z.iter().zip(w[1].positions()).map(|(&a, b)| (a - b).abs()).fold(T::zero(), T::max);
        per_step.push((run.steps[k + 1], e.to_f64_lossy()));
    }
    Ok(Excess { invariant: "commutation", per_step, scale })
}

/// `max |x_inverse(z_map(x)) - x|` over `samples` low-discrepancy points per state.
pub fn roundtrip_error<T: Real>(steps: &[usize], states: &[LagrangianState<T>], samples: usize) -> Result<Excess> {
    const GOLDEN: f64 = 0.618_033_988_749_894_9;
    let mut per_step = Vec::with_capacity(states.len());
    let mut scale = 0.0f64;
    for (&n, s) in steps.iter().zip(states) {
        let map = CoordinateMap::new(s);
        let (lo, hi) = map.x_domain();
        scale = scale.max(s.vehicle_count() as f64 * (abs_max(map.nodes()) + abs_max(&[lo, hi])));
        let mut worst = T::zero();
        for j in 0..samples {
            let u = T::lit(((j as f64 + 0.5) * GOLDEN).fract());
            let x = lo + (hi - lo) * u;
            let back = map.x_of(map.z_of(x)?)?;
            worst = worst.max((back - x).abs());
        }
        per_step.push((n, worst.to_f64_lossy()));
    }
    Ok(Excess { invariant: "roundtrip", per_step, scale })
}

/// Which suites apply to a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunKind {
    Discrete,
    Ode,
}

/// Runs every applicable suite over recorded states and lists violations.
///
/// The entropy and commutation suites are step-exact statements about the
/// forward Euler scheme and only apply to dense discrete runs.
pub fn check_states<T: Real>(
    kind: RunKind,
    steps: &[usize],
    states: &[LagrangianState<T>],
    model: &VelocityModel<T>,
    discrete: Option<&DiscreteRun<T>>,
) -> Result<Vec<Excess>> {
    let mut suites = vec![
        bounds_excess(steps, states),
        tv_increase(steps, states),
        time_lipschitz_excess(steps, states, model),
        roundtrip_error(steps, states, 1000)?,
    ];
    if states[0].boundary().is_periodic() {
        suites.push(mass_defect(steps, states));
    }
    if let (RunKind::Discrete, Some(run)) = (kind, discrete) {
        if run.is_dense() {
            // constants spanning the gaps the run visits
            let (lo, hi) = run
                .states
                .iter()
                .flat_map(|s| s.cycle_gaps())
                .fold((T::infinity(), T::neg_infinity()), |(a, b), g| (a.min(g), b.max(g)));
            let ks = k_grid(lo.max(T::one()), hi, 11);
            suites.push(entropy_excess(run, model, &ks)?);
            suites.push(commutation_defect(run, model)?);
        }
    }
    Ok(suites)
}

pub fn tolerance_for(tol: &Tolerances, invariant: &str) -> f64 {
    match invariant {
        "bounds" => tol.bounds,
        "tv_diminishing" => tol.tv,
        "l1_contraction" => tol.contraction,
        "entropy" => tol.entropy,
        "periodic_mass" => tol.mass,
        "time_lipschitz" => tol.lipschitz,
        "commutation" => tol.commutation,
        "roundtrip" => tol.roundtrip,
        _ => 0.0,
    }
}

pub fn collect_violations(suites: &[Excess], tol: &Tolerances) -> Vec<InvariantViolation> {
    suites.iter().flat_map(|s| s.violations(tolerance_for(tol, s.invariant))).collect()
}

/// Whether a suite stays within `tol` up to its rounding floor.
pub fn passes(suite: &Excess, tol: &Tolerances) -> bool {
    suite.max() <= suite.threshold(tolerance_for(tol, suite.invariant))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::euler::{run_discrete, run_discrete_guarded, CflGuard};
    use crate::ode::Stride;

    fn linear() -> VelocityModel<f64> {
        VelocityModel::linear(1.0).unwrap()
    }

    #[test]
    fn constant_run_has_zero_entropy_residual() {
        let m = linear();
        let s = LagrangianState::new(0.0, 0.1, 0.0, vec![2.0; 10], BoundaryMode::Leader { m: 2.0 }).unwrap();
        let run = run_discrete(&s, &m, 1.0, 0.9, Stride::Every(1)).unwrap();
        let r = entropy_residual(&run, &m, &k_grid(1.0, 3.0, 11)).unwrap();
        assert!(r.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn k_outside_data_range_gives_exact_zero() {
        let m = linear();
        let s = LagrangianState::new(0.0, 0.1, 0.0, vec![1.5, 3.0, 2.0, 2.5], BoundaryMode::Leader { m: 2.0 }).unwrap();
        let run = run_discrete(&s, &m, 0.5, 0.9, Stride::Every(1)).unwrap();
        let r = entropy_residual(&run, &m, &[1.0, 10.0]).unwrap();
        assert!(r.iter().all(|&x| x <= 1e-13), "{r:?}");
    }

    #[test]
    fn broken_cfl_violates_entropy_inequality() {
        let m = linear();
        // increasing Riemann data: y = 1 behind, 1.2 ahead
        let mut y = vec![1.0; 10];
        y.extend(vec![1.2; 10]);
        let s = LagrangianState::new(0.0, 0.1, 0.0, y, BoundaryMode::Leader { m: 1.2 }).unwrap();
        let run = run_discrete_guarded(&s, &m, 0.15, 1.5, Stride::Every(1), CflGuard::Disabled).unwrap();
        let r = entropy_residual(&run, &m, &k_grid(1.0, 1.3, 31)).unwrap();
        assert!(r[0] > 1e-6, "{r:?}");
    }

    #[test]
    fn gap_tv_includes_closure() {
        let s = LagrangianState::new(0.0, 0.1, 0.0, vec![1.0, 3.0, 2.0], BoundaryMode::Leader { m: 4.0 }).unwrap();
        assert_eq!(gap_total_variation(&s), 2.0 + 1.0 + 2.0);
        assert_eq!(initial_bounds(&s), (1.0, 4.0));
    }

    #[test]
    fn suites_pass_on_compliant_runs() {
        let m = VelocityModel::quadratic(1.0).unwrap();
        for boundary in [BoundaryMode::Leader { m: 2.5 }, BoundaryMode::Periodic { a: 0.0, b: 3.0 }] {
            let s = LagrangianState::new(0.0, 0.1, 0.0, vec![1.0, 3.0, 2.2, 1.4, 5.0, 1.1, 2.0], boundary).unwrap();
            let run = run_discrete(&s, &m, 2.0, 0.9 / m.lipschitz_constant(), Stride::Every(1)).unwrap();
            let suites = check_states(RunKind::Discrete, &run.steps, &run.states, &m, Some(&run)).unwrap();
            let v = collect_violations(&suites, &Tolerances::DISCRETE);
            assert!(v.is_empty(), "{v:?}");
            assert!(suites.iter().any(|s| s.invariant == "entropy"));
        }
    }
}
