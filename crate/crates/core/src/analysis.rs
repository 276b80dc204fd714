//! Distances, variation and refinement studies.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{FtlError, Result};
use crate::euler::{landing_lambda, run_discrete};
use crate::invariants::{check_states, passes, RunKind, Tolerances};
use crate::ode::{integrate_recorded, BoundaryMode, LagrangianState, Stride};
use crate::reference::{godunov_solve, EulerianGrid, FluxLaw, GridBoundary, PiecewiseLinear, RiemannSolution};
use crate::scalar::Real;
use crate::transform::{eulerian_density, place_vehicles, Extension, PiecewiseConstantDensity};
use crate::velocity::VelocityModel;

/// `sum |v_{j+1} - v_j|`, plus the wrap term `|v_1 - v_last|` on a ring.
pub fn total_variation<T: Real>(values: &[T], periodic: bool) -> T {
    let mut tv: T = values.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    if periodic && values.len() > 1 {
        tv = tv + (values[0] - values[values.len() - 1]).abs();
    }
    tv
}

/// Breakpoints of `f` (and its periodic images) strictly inside `(lo, hi)`.
fn breakpoints_in<T: Real>(f: &PiecewiseConstantDensity<T>, lo: T, hi: T, out: &mut Vec<T>) {
    match *f.extension() {
        Extension::Open { .. } => out.extend(f.breakpoints().iter().copied().filter(|&p| p > lo && p < hi)),
        Extension::Periodic { a, b } => {
            let p = b - a;
            let first = ((lo - b) / p).floor().to_i64().unwrap_or(0);
            let last = ((hi - a) / p).ceil().to_i64().unwrap_or(0);
            for k in first..=last {
                let shift = p * T::lit(k as f64);
                out.extend(f.breakpoints().iter().map(|&q| q + shift).filter(|&q| q > lo && q < hi));
            }
        }
    }
}

fn merged<T: Real>(lo: T, hi: T, extra: impl FnOnce(&mut Vec<T>)) -> Vec<T> {
    let mut pts = vec![lo, hi];
    extra(&mut pts);
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    pts.dedup();
    pts
}

fn check_window<T: Real>(lo: T, hi: T) -> Result<()> {
    if !(hi > lo) {
        return Err(FtlError::InvalidArgument(format!("empty window [{lo}, {hi}]")));
    }
    Ok(())
}

/// Exact `integral_{lo}^{hi} |f - g|` on the merged breakpoint set.
pub fn l1_distance<T: Real>(f: &PiecewiseConstantDensity<T>, g: &PiecewiseConstantDensity<T>, window: (T, T)) -> Result<T> {
    let (lo, hi) = window;
    check_window(lo, hi)?;
    let pts = merged(lo, hi, |v| {
        breakpoints_in(f, lo, hi, v);
        breakpoints_in(g, lo, hi, v);
    });
    let half = T::lit(0.5);
    Ok(pts
        .windows(2)
        .map(|w| {
            let mid = (w[0] + w[1]) * half;
            (f.eval(mid) - g.eval(mid)).abs() * (w[1] - w[0])
        })
        .sum())
}

/// `integral |h|` over `[u, w]` for `h` linear with end values `hu`, `hw`.
fn abs_linear_integral<T: Real>(hu: T, hw: T, width: T) -> T {
    if hu * hw >= T::zero() {
        (hu + hw).abs() * T::lit(0.5) * width
    } else {
        width * (hu * hu + hw * hw) / (T::lit(2.0) * (hu.abs() + hw.abs()))
    }
}

/// Exact `integral |f - g|` for piecewise-constant `f` and piecewise-linear `g`.
pub fn l1_distance_linear<T: Real>(f: &PiecewiseConstantDensity<T>, g: &PiecewiseLinear<T>, window: (T, T)) -> Result<T> {
    let (lo, hi) = window;
    check_window(lo, hi)?;
    let pts = merged(lo, hi, |v| {
        breakpoints_in(f, lo, hi, v);
        v.extend(g.breakpoints.iter().copied().filter(|&p| p > lo && p < hi));
    });
    let half = T::lit(0.5);
    Ok(pts
        .windows(2)
        .map(|w| {
            let (u, x) = (w[0], w[1]);
            let mid = (u + x) * half;
            let c = f.eval(mid);
            let (s, o) = piece_at(g, mid);
            abs_linear_integral(c - (s * u + o), c - (s * x + o), x - u)
        })
        .sum())
}

fn piece_at<T: Real>(g: &PiecewiseLinear<T>, z: T) -> (T, T) {
    if z < g.breakpoints[0] {
        return (T::zero(), g.left);
    }
    if z > *g.breakpoints.last().unwrap() {
        return (T::zero(), g.right);
    }
    let k = g.breakpoints.partition_point(|&p| p < z).clamp(1, g.pieces.len()) - 1;
    g.pieces[k]
}

pub type Profile<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Time discretisation for a study; `lambda = dt / ell` in both cases.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scheme<T> {
    /// Forward Euler. The step is shrunk so that an integer number of steps
    /// lands on the final time; the ratio never exceeds `lambda`.
    Euler { lambda: T },
    /// Runge-Kutta on the semi-discrete system with `dt = lambda * ell`.
    Ode { lambda: T },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Oracle<T> {
    /// Godunov reference on `cells` uniform cells.
    Godunov { cells: usize, cfl: T },
    /// Closed-form Riemann solution (linear law only).
    Riemann { rho_l: T, rho_r: T, z0: T },
}

/// Everything a refinement study needs.
#[derive(Clone)]
pub struct StudySetup<T> {
    pub model: VelocityModel<T>,
    pub rho0: Profile<T>,
    /// Placement interval `[a, b]`; also the ring in periodic mode.
    pub domain: (T, T),
    pub boundary: BoundaryMode<T>,
    pub t_end: T,
    pub ladder: Vec<usize>,
    pub scheme: Scheme<T>,
    pub oracle: Oracle<T>,
    pub panels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Rung {
    pub n: usize,
    pub ell: f64,
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub ladder: Vec<Rung>,
    pub errors: Vec<f64>,
    /// `log2(e_k / e_{k+1})` for consecutive rungs.
    pub orders: Vec<f64>,
    /// Largest excess per invariant, one entry per rung.
    pub invariants: BTreeMap<String, Vec<f64>>,
    /// `(N, invariant)` for every rung that broke a property.
    pub flagged: Vec<(usize, String)>,
}

impl ConvergenceReport {
    pub fn errors_strictly_decreasing(&self) -> bool {
        self.errors.windows(2).all(|w| w[1] < w[0])
    }

    pub fn min_order(&self) -> Option<f64> {
        self.orders.iter().copied().reduce(f64::min)
    }

    /// CSV table `N,ell,dt,L1_error,order`; the first rung has no order.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("N,ell,dt,L1_error,order\n");
        for (k, r) in self.ladder.iter().enumerate() {
            let order = if k == 0 { String::new() } else { format!("{}", self.orders[k - 1]) };
            s.push_str(&format!("{},{},{},{},{}\n", r.n, r.ell, r.dt, self.errors[k], order));
        }
        s
    }
}

/// Number of mass intervals for `n` vehicles.
fn intervals<T: Real>(boundary: &BoundaryMode<T>, n: usize) -> usize {
    if boundary.is_periodic() { n } else { n.saturating_sub(1) }
}

/// Checks that consecutive rungs halve `ell`.
pub fn validate_ladder<T: Real>(boundary: &BoundaryMode<T>, ladder: &[usize]) -> Result<()> {
    if ladder.is_empty() {
        return Err(FtlError::InvalidLadder("empty ladder".into()));
    }
    if let Some(&n) = ladder.iter().find(|&&n| n < 2) {
        return Err(FtlError::InvalidLadder(format!("rung with {n} vehicles")));
    }
    for w in ladder.windows(2) {
        if intervals(boundary, w[1]) != 2 * intervals(boundary, w[0]) {
            return Err(FtlError::InvalidLadder(format!("N = {} -> {} does not halve the vehicle length", w[0], w[1])));
        }
    }
    Ok(())
}

enum Reference<T> {
    Grid(PiecewiseConstantDensity<T>),
    Exact(PiecewiseLinear<T>),
}

fn build_reference<T: Real>(setup: &StudySetup<T>) -> Result<Reference<T>> {
    match setup.oracle {
        Oracle::Riemann { rho_l, rho_r, z0 } => {
            Ok(Reference::Exact(RiemannSolution::new(&setup.model, rho_l, rho_r, z0)?.at(setup.t_end)))
        }
        Oracle::Godunov { cells, cfl } => {
            let (a, b) = setup.domain;
            let rho0 = setup.rho0.clone();
            let grid = match setup.boundary {
                BoundaryMode::Periodic { .. } => EulerianGrid::from_profile(move |z| rho0(z), a, b, cells, 8, GridBoundary::Periodic)?,
                BoundaryMode::Leader { m } => {
                    // wide enough that no wave reaches the ghost cells
                    let reach = setup.model.v_max() * setup.t_end + (b - a) * T::lit(0.25);
                    let right = m.recip();
                    let ext = move |z: T| if z < a { T::zero() } else if z > b { right } else { rho0(z) };
                    EulerianGrid::from_profile(ext, a - reach, b + reach, cells, 8, GridBoundary::Open { left: T::zero(), right })?
                }
            };
            let law = FluxLaw::new(setup.model.clone());
            Ok(Reference::Grid(godunov_solve(&law, &grid, setup.t_end, cfl)?.to_density()))
        }
    }
}

/// Final state and invariant summary for one rung.
pub struct RungOutcome<T> {
    pub initial: LagrangianState<T>,
    pub last: LagrangianState<T>,
    pub dt: T,
    pub invariants: BTreeMap<String, f64>,
    /// Suites exceeding their tolerance beyond rounding.
    pub flagged: Vec<String>,
}

/// Places vehicles and runs one rung to `t_end`.
pub fn run_rung<T: Real>(setup: &StudySetup<T>, n: usize) -> Result<RungOutcome<T>> {
    let (a, b) = setup.domain;
    let rho0 = setup.rho0.clone();
    let initial = place_vehicles(move |z| rho0(z), a, b, n, setup.boundary, setup.panels)?;
    let ell = initial.ell();
    let t_end = setup.t_end;
    let (kind, dt, steps, states, run) = match setup.scheme {
        Scheme::Euler { lambda } => {
            let run = run_discrete(&initial, &setup.model, t_end, landing_lambda(t_end, ell, lambda), Stride::Auto)?;
            (RunKind::Discrete, run.dt, run.steps.clone(), run.states.clone(), Some(run))
        }
        Scheme::Ode { lambda } => {
            let (steps, traj) = integrate_recorded(&initial, &setup.model, t_end, lambda * ell, Stride::Auto)?;
            (RunKind::Ode, lambda * ell, steps, traj, None)
        }
    };
    let suites = check_states(kind, &steps, &states, &setup.model, run.as_ref())?;
    let tol = match kind {
        RunKind::Discrete => Tolerances::DISCRETE,
        RunKind::Ode => Tolerances::ODE,
    };
    let invariants = suites.iter().map(|s| (s.invariant.to_string(), s.max().max(0.0))).collect();
    let flagged = suites.iter().filter(|s| !passes(s, &tol)).map(|s| s.invariant.to_string()).collect();
    Ok(RungOutcome { initial, last: states.last().expect("non-empty").clone(), dt, invariants, flagged })
}

/// Window on which the approximate density is defined at the final time.
pub fn comparison_window<T: Real>(state: &LagrangianState<T>) -> (T, T) {
    match *state.boundary() {
        BoundaryMode::Periodic { a, b } => (a, b),
        BoundaryMode::Leader { .. } => {
            let z = state.positions();
            (z[0], z[z.len() - 1])
        }
    }
}

/// Runs the ladder (rungs in parallel), measures the L1 error of the
/// reconstructed density against the oracle, and assembles the report.
pub fn convergence_study<T: Real>(setup: &StudySetup<T>) -> Result<ConvergenceReport> {
    validate_ladder(&setup.boundary, &setup.ladder)?;
    let reference = build_reference(setup)?;
    let rungs: Vec<Result<(Rung, f64, RungOutcome<T>)>> = setup
        .ladder
        .par_iter()
        .map(|&n| {
            let out = run_rung(setup, n)?;
            let density = eulerian_density(&out.last);
            let window = comparison_window(&out.last);
            let err = match &reference {
                Reference::Grid(g) => l1_distance(&density, g, window)?,
                Reference::Exact(e) => l1_distance_linear(&density, e, window)?,
            };
            let rung = Rung { n, ell: out.initial.ell().to_f64_lossy(), dt: out.dt.to_f64_lossy() };
            Ok((rung, err.to_f64_lossy(), out))
        })
        .collect();

    let mut report = ConvergenceReport { ladder: vec![], errors: vec![], orders: vec![], invariants: BTreeMap::new(), flagged: vec![] };
    for r in rungs {
        let (rung, err, out) = r?;
        for (name, excess) in out.invariants {
            report.invariants.entry(name).or_default().push(excess);
        }
        report.flagged.extend(out.flagged.into_iter().map(|name| (rung.n, name)));
        report.ladder.push(rung);
        report.errors.push(err);
    }
    report.orders = report.errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    Ok(report)
}
