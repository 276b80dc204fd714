//! Discrete Lagrange-to-Euler map.
//!
//! The Lagrangian coordinate `x` counts mass: vehicle `i` sits at
//! `x_{i-1/2} = (i - 1) ell`. The map `z_ell(x)` interpolates vehicle
//! positions linearly between these nodes, with slope `y_i` on cell `i`.
//! Pushing the Lagrangian profile `1 / y` forward through it gives the
//! Eulerian density, piecewise constant between consecutive vehicles.

use crate::error::{FtlError, Result};
use crate::ode::{BoundaryMode, LagrangianState};
use crate::scalar::Real;
use crate::velocity::OVERLAP_TOLERANCE;

/// Default number of midpoint panels for the cumulative mass in placement.
pub const PLACEMENT_PANELS: usize = 1 << 18;
/// Bisection stops once the bracket is this narrow.
pub const PLACEMENT_TOLERANCE: f64 = 1e-12;
/// Placement gaps this close below 1 are quadrature noise and snap to 1.
const PLACEMENT_SNAP: f64 = 1e-6;

/// `y_ell(x) = y_j` on `((j-1) ell, j ell]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LagrangianProfile<T> {
    pub ell: T,
    pub values: Vec<T>,
}

impl<T: Real> LagrangianProfile<T> {
    pub fn domain(&self) -> (T, T) {
        (T::zero(), self.ell * T::from_count(self.values.len()))
    }

    /// Evaluates with the left-open, right-closed cell convention; `x = 0`
    /// belongs to the first cell.
    pub fn eval(&self, x: T) -> Result<T> {
        let (lo, hi) = self.domain();
        if x < lo || x > hi {
            return Err(FtlError::OutOfDomain(x.to_f64_lossy(), lo.to_f64_lossy(), hi.to_f64_lossy()));
        }
        let j = (x / self.ell).ceil().to_usize().unwrap_or(0);
        Ok(self.values[j.clamp(1, self.values.len()) - 1])
    }

    pub fn total_variation(&self) -> T {
        self.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }
}

/// Piecewise-constant Lagrangian profile of a state. On a ring the
/// wrap-around gap `y_N` is the last cell.
pub fn lagrangian_profile<T: Real>(state: &LagrangianState<T>) -> LagrangianProfile<T> {
    LagrangianProfile { ell: state.ell(), values: state.cycle_gaps() }
}

/// The piecewise-linear map `x -> z` and its inverse for one state.
#[derive(Clone, Debug)]
pub struct CoordinateMap<T> {
    ell: T,
    /// `z` at the Lagrangian nodes `0, ell, 2 ell, ...`.
    nodes: Vec<T>,
}

impl<T: Real> CoordinateMap<T> {
    pub fn new(state: &LagrangianState<T>) -> Self {
        let mut nodes = state.positions();
        if let BoundaryMode::Periodic { a, b } = *state.boundary() {
            nodes.push(state.z1() + (b - a));
        }
        CoordinateMap { ell: state.ell(), nodes }
    }

    pub fn x_domain(&self) -> (T, T) {
        (T::zero(), self.ell * T::from_count(self.nodes.len() - 1))
    }

    pub fn z_domain(&self) -> (T, T) {
        (self.nodes[0], *self.nodes.last().expect("at least two nodes"))
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn z_of(&self, x: T) -> Result<T> {
        let (lo, hi) = self.x_domain();
        if !(x >= lo && x <= hi) {
            return Err(FtlError::OutOfDomain(x.to_f64_lossy(), lo.to_f64_lossy(), hi.to_f64_lossy()));
        }
        let cells = self.nodes.len() - 1;
        let j = (x / self.ell).floor().to_usize().unwrap_or(0).min(cells - 1);
        let left = self.ell * T::from_count(j);
        let right = self.ell * T::from_count(j + 1);
        Ok(((right - x) * self.nodes[j] + (x - left) * self.nodes[j + 1]) / self.ell)
    }

    pub fn x_of(&self, z: T) -> Result<T> {
        let (lo, hi) = self.z_domain();
        if !(z >= lo && z <= hi) {
            return Err(FtlError::OutOfDomain(z.to_f64_lossy(), lo.to_f64_lossy(), hi.to_f64_lossy()));
        }
        let cells = self.nodes.len() - 1;
        // first node strictly above z, minus one, is the containing segment
        let j = self.nodes.partition_point(|&n| n <= z).saturating_sub(1).min(cells - 1);
        let width = self.nodes[j + 1] - self.nodes[j];
        Ok(self.ell * T::from_count(j) + self.ell * (z - self.nodes[j]) / width)
    }
}

pub fn z_map<T: Real>(state: &LagrangianState<T>, x: T) -> Result<T> {
    CoordinateMap::new(state).z_of(x)
}

pub fn x_inverse<T: Real>(state: &LagrangianState<T>, z: T) -> Result<T> {
    CoordinateMap::new(state).x_of(z)
}

/// Value of a density outside its breakpoint range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Extension<T> {
    /// Periodic continuation with period `b - a`; breakpoints tile `[a, b]`.
    Periodic { a: T, b: T },
    /// Constant states to the left and right.
    Open { left: T, right: T },
}

/// Density that is constant on `(breakpoints[i], breakpoints[i + 1]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseConstantDensity<T> {
    breakpoints: Vec<T>,
    values: Vec<T>,
    extension: Extension<T>,
}

impl<T: Real> PiecewiseConstantDensity<T> {
    pub fn new(breakpoints: Vec<T>, values: Vec<T>, extension: Extension<T>) -> Result<Self> {
        if values.is_empty() || breakpoints.len() != values.len() + 1 {
            return Err(FtlError::InvalidArgument(format!(
                "{} breakpoints cannot bound {} cells",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(FtlError::InvalidArgument("breakpoints must be strictly increasing".into()));
        }
        if let Extension::Periodic { a, b } = extension {
            if breakpoints[0] != a || *breakpoints.last().unwrap() != b {
                return Err(FtlError::InvalidArgument("periodic breakpoints must span [a, b]".into()));
            }
        }
        Ok(PiecewiseConstantDensity { breakpoints, values, extension })
    }

    pub fn breakpoints(&self) -> &[T] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn extension(&self) -> &Extension<T> {
        &self.extension
    }

    pub fn domain(&self) -> (T, T) {
        (self.breakpoints[0], *self.breakpoints.last().unwrap())
    }

    /// Cells as `(left, right, value)`.
    pub fn cells(&self) -> impl Iterator<Item = (T, T, T)> + '_ {
        self.breakpoints.windows(2).zip(&self.values).map(|(w, &v)| (w[0], w[1], v))
    }

    pub fn eval(&self, z: T) -> T {
        let (lo, hi) = self.domain();
        let z = match self.extension {
            Extension::Periodic { a, b } => {
                let p = b - a;
                let r = a + (z - a) - ((z - a) / p).floor() * p;
                // r == a is the right end of the last cell
                if r <= a { b } else { r.min(b) }
            }
            Extension::Open { left, right } => {
                if z < lo {
                    return left;
                }
                if z > hi {
                    return right;
                }
                z
            }
        };
        let k = self.breakpoints.partition_point(|&p| p < z);
        self.values[k.clamp(1, self.values.len()) - 1]
    }

    /// `integral of rho` over the breakpoint range.
    pub fn mass(&self) -> T {
        self.cells().map(|(l, r, v)| (r - l) * v).sum()
    }

    /// Variation across adjacent cells, including the wrap on a ring.
    pub fn total_variation(&self) -> T {
        let mut tv: T = self.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        if matches!(self.extension, Extension::Periodic { .. }) {
            tv = tv + (self.values[0] - *self.values.last().unwrap()).abs();
        }
        tv
    }
}

/// Eulerian density `rho_ell = 1 / y_ell(x_ell(z))`.
///
/// Leader mode: breakpoints are the vehicle positions, so the domain is
/// `[z_1, z_N]`, extended by 0 behind the platoon and `1/M` ahead of it.
/// Ring: the vehicle cells are wrapped into `[a, b]`, the one straddling
/// the period boundary being split in two.
pub fn eulerian_density<T: Real>(state: &LagrangianState<T>) -> PiecewiseConstantDensity<T> {
    let z = state.positions();
    let gaps = state.cycle_gaps();
    match *state.boundary() {
        BoundaryMode::Leader { m } => {
            let values = gaps.iter().map(|g| g.recip()).collect();
            PiecewiseConstantDensity { breakpoints: z, values, extension: Extension::Open { left: T::zero(), right: m.recip() } }
        }
        BoundaryMode::Periodic { a, b } => {
            let p = b - a;
            let shift = ((z[0] - a) / p).floor() * p;
            let mut edges: Vec<T> = z.iter().map(|&zi| zi - shift).collect();
            edges.push(edges[0] + p);
            let mut pieces: Vec<(T, T, T)> = Vec::with_capacity(gaps.len() + 1);
            for (i, g) in gaps.iter().enumerate() {
                let (l, r, v) = (edges[i], edges[i + 1], g.recip());
                if r <= b {
                    pieces.push((l, r, v));
                } else if l >= b {
                    pieces.push((l - p, r - p, v));
                } else {
                    pieces.push((l, b, v));
                    pieces.push((a, r - p, v));
                }
            }
            pieces.sort_by(|u, w| u.0.partial_cmp(&w.0).expect("finite positions"));
            let mut breakpoints = vec![a];
            let mut values = Vec::with_capacity(pieces.len());
            for (_, r, v) in pieces {
                let r = r.min(b);
                if r > *breakpoints.last().unwrap() {
                    breakpoints.push(r);
                    values.push(v);
                }
            }
            *breakpoints.last_mut().unwrap() = b;
            PiecewiseConstantDensity { breakpoints, values, extension: Extension::Periodic { a, b } }
        }
    }
}

/// Cumulative mass `F(z) = integral_a^z rho0` by the composite midpoint rule.
#[derive(Clone, Debug)]
pub struct CumulativeMass<T> {
    a: T,
    h: T,
    edges: Vec<T>,
    density: Vec<T>,
}

impl<T: Real> CumulativeMass<T> {
    pub fn new<F: Fn(T) -> T>(rho0: F, a: T, b: T, panels: usize) -> Result<Self> {
        if !(a < b) || panels == 0 {
            return Err(FtlError::Placement(format!("empty interval [{a}, {b}]")));
        }
        let h = (b - a) / T::from_count(panels);
        let half = T::lit(0.5);
        let mut density = Vec::with_capacity(panels);
        for k in 0..panels {
            let z = a + h * (T::from_count(k) + half);
            let r = rho0(z);
            if !(r >= T::zero() && r <= T::one()) {
                return Err(FtlError::Placement(format!("rho0({z}) = {r} lies outside [0, 1]")));
            }
            density.push(r);
        }
        let mut edges = Vec::with_capacity(panels + 1);
        let mut acc = T::zero();
        edges.push(acc);
        for &r in &density {
            acc = acc + h * r;
            edges.push(acc);
        }
        Ok(CumulativeMass { a, h, edges, density })
    }

    pub fn total(&self) -> T {
        *self.edges.last().unwrap()
    }

    pub fn eval(&self, z: T) -> T {
        let panels = self.density.len();
        let s = ((z - self.a) / self.h).max(T::zero());
        let k = s.floor().to_usize().unwrap_or(0).min(panels - 1);
        let local = (z - self.a - self.h * T::from_count(k)).max(T::zero()).min(self.h);
        self.edges[k] + self.density[k] * local
    }

    /// Smallest `z` with `F(z) >= target`, by bisection.
    pub fn inverse(&self, target: T) -> T {
        let mut lo = self.a;
        let mut hi = self.a + self.h * T::from_count(self.density.len());
        if self.eval(lo) >= target {
            return lo;
        }
        let tol = T::lit(PLACEMENT_TOLERANCE);
        while hi - lo > tol {
            let mid = lo + (hi - lo) * T::lit(0.5);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.eval(mid) >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// Panel midpoints where the density vanishes.
    fn zero_panels(&self) -> impl Iterator<Item = T> + '_ {
        let half = T::lit(0.5);
        self.density
            .iter()
            .enumerate()
            .filter(|(_, &r)| r == T::zero())
            .map(move |(k, _)| self.a + self.h * (T::from_count(k) + half))
    }
}

/// Places `n` vehicles on `[a, b]` so that each inter-vehicle interval
/// carries mass exactly `ell`: `z_i = F^{-1}((i - 1) ell)`.
///
/// Ring: `ell = m / n`, `z_1 = a`. Leader mode: `ell = m / (n - 1)`, so the
/// platoon spans the support of `rho0`.
pub fn place_vehicles<T: Real, F: Fn(T) -> T>(
    rho0: F,
    a: T,
    b: T,
    n: usize,
    mode: BoundaryMode<T>,
    panels: usize,
) -> Result<LagrangianState<T>> {
    if n < 2 {
        return Err(FtlError::Placement("at least two vehicles are required".into()));
    }
    mode.validate()?;
    if let BoundaryMode::Periodic { a: pa, b: pb } = mode {
        if pa != a || pb != b {
            return Err(FtlError::Placement("periodic road must coincide with the placement interval".into()));
        }
    }
    let mass = CumulativeMass::new(rho0, a, b, panels)?;
    let m = mass.total();
    if !(m > T::zero()) {
        return Err(FtlError::Placement("initial density has zero mass".into()));
    }
    let intervals = if mode.is_periodic() { n } else { n - 1 };
    let ell = m / T::from_count(intervals);
    let z: Vec<T> = (0..n).map(|i| mass.inverse(ell * T::from_count(i))).collect();

    let first = z[0];
    let last = z[n - 1];
    let vacuum = mass.zero_panels().find(|&c| if mode.is_periodic() { true } else { c > first && c < last });
    if let Some(c) = vacuum {
        return Err(FtlError::Placement(format!(
            "rho0 vanishes on a subinterval near z = {c} between vehicles; cumulative mass is not strictly increasing"
        )));
    }

    let snap = T::one() - T::lit(PLACEMENT_SNAP);
    let mut y = Vec::with_capacity(n - 1);
    for (i, w) in z.windows(2).enumerate() {
        let g = (w[1] - w[0]) / ell;
        if g < snap {
            return Err(FtlError::Placement(format!("gap y_{} = {g} below 1: rho0 exceeds 1", i + 1)));
        }
        y.push(g.max(T::one()));
    }
    let state = LagrangianState::new(T::zero(), ell, first, y, mode)?;
    if state.leader_gap()? < T::one() - T::lit(OVERLAP_TOLERANCE) {
        return Err(FtlError::Placement("wrap-around gap below 1".into()));
    }
    Ok(state)
}
