//! Independent reference solvers.
//!
//! * a first-order Godunov finite-volume solver for the Eulerian LWR law
//!   `rho_t + f(rho)_z = 0`, `f(rho) = rho v(rho)`;
//! * a standalone upwind solver for the Lagrangian law `y_t - V(y)_x = 0`;
//! * closed-form Riemann solutions for the linear velocity law.

use crate::error::{FtlError, Result};
use crate::scalar::Real;
use crate::transform::{Extension, PiecewiseConstantDensity};
use crate::velocity::{VelocityLaw, VelocityModel};

/// Points used to scan `f` for unimodality and for the wave-speed bound.
pub const FLUX_SAMPLES: usize = 10_000;

/// Flux `f(rho) = rho v(rho)` on `[0, 1]`.
#[derive(Clone, Debug)]
pub struct FluxLaw<T> {
    model: VelocityModel<T>,
    rho_star: T,
    f_max: T,
    unimodal: bool,
    max_speed: T,
}

impl<T: Real> FluxLaw<T> {
    pub fn new(model: VelocityModel<T>) -> Self {
        let n = FLUX_SAMPLES;
        let grid: Vec<T> = (0..n).map(|k| T::from_count(k) / T::from_count(n - 1)).collect();
        let f = |r: T| r * model.v(r).unwrap_or(T::zero());
        let vals: Vec<T> = grid.iter().map(|&r| f(r)).collect();

        let peak = (0..n).fold(0, |best, k| if vals[k] > vals[best] { k } else { best });
        let unimodal = vals[..=peak].windows(2).all(|w| w[1] >= w[0]) && vals[peak..].windows(2).all(|w| w[1] <= w[0]);
        let rho_star = if unimodal {
            // ternary search on [0, 1]
            let (mut lo, mut hi) = (T::zero(), T::one());
            let third = T::one() / T::lit(3.0);
            while hi - lo > T::lit(1e-12) {
                let m1 = lo + (hi - lo) * third;
                let m2 = hi - (hi - lo) * third;
                if f(m1) < f(m2) {
                    lo = m1;
                } else {
                    hi = m2;
                }
            }
            (lo + hi) * T::lit(0.5)
        } else {
            grid[peak]
        };
        let f_max = f(rho_star).max(vals[peak]);
        let h = grid[1] - grid[0];
        let max_speed = vals.windows(2).map(|w| (w[1] - w[0]).abs() / h).fold(T::zero(), T::max);
        FluxLaw { model, rho_star, f_max, unimodal, max_speed }
    }

    pub fn flux(&self, rho: T) -> T {
        if rho <= T::zero() {
            return T::zero();
        }
        rho * self.model.v(rho).unwrap_or(T::zero())
    }

    pub fn rho_star(&self) -> T {
        self.rho_star
    }

    pub fn f_max(&self) -> T {
        self.f_max
    }

    pub fn is_unimodal(&self) -> bool {
        self.unimodal
    }

    /// Sampled bound on `|f'|`.
    pub fn max_speed(&self) -> T {
        self.max_speed
    }

    pub fn model(&self) -> &VelocityModel<T> {
        &self.model
    }

    /// Godunov flux: `min f` over `[rho_l, rho_r]` when `rho_l <= rho_r`,
    /// `max f` over `[rho_r, rho_l]` otherwise.
    pub fn godunov_flux(&self, rho_l: T, rho_r: T) -> T {
        let (fl, fr) = (self.flux(rho_l), self.flux(rho_r));
        if self.unimodal {
            if rho_l <= rho_r {
                fl.min(fr)
            } else if rho_r <= self.rho_star && self.rho_star <= rho_l {
                self.f_max
            } else {
                fl.max(fr)
            }
        } else {
            let n = FLUX_SAMPLES;
            let (lo, hi) = if rho_l <= rho_r { (rho_l, rho_r) } else { (rho_r, rho_l) };
            let scan = (0..n).map(|k| self.flux(lo + (hi - lo) * T::from_count(k) / T::from_count(n - 1)));
            if rho_l <= rho_r {
                scan.fold(fl.min(fr), T::min)
            } else {
                scan.fold(fl.max(fr), T::max)
            }
        }
    }
}

pub fn godunov_flux<T: Real>(law: &FluxLaw<T>, rho_l: T, rho_r: T) -> T {
    law.godunov_flux(rho_l, rho_r)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GridBoundary<T> {
    Periodic,
    /// Ghost cells holding `left` and `right`.
    Open { left: T, right: T },
}

/// Uniform finite-volume grid of cell averages.
#[derive(Clone, Debug, PartialEq)]
pub struct EulerianGrid<T> {
    pub z_left: T,
    pub z_right: T,
    pub cells: Vec<T>,
    pub boundary: GridBoundary<T>,
}

impl<T: Real> EulerianGrid<T> {
    /// Cell averages of `rho0` using `sub` midpoint samples per cell.
    pub fn from_profile<F: Fn(T) -> T>(rho0: F, z_left: T, z_right: T, cells: usize, sub: usize, boundary: GridBoundary<T>) -> Result<Self> {
        if cells == 0 || !(z_left < z_right) {
            return Err(FtlError::InvalidArgument("grid needs cells and a positive width".into()));
        }
        let dz = (z_right - z_left) / T::from_count(cells);
        let sub = sub.max(1);
        let hs = dz / T::from_count(sub);
        let avg = (0..cells)
            .map(|j| {
                let left = z_left + dz * T::from_count(j);
                (0..sub).map(|s| rho0(left + hs * (T::from_count(s) + T::lit(0.5)))).sum::<T>() / T::from_count(sub)
            })
            .collect();
        let grid = EulerianGrid { z_left, z_right, cells: avg, boundary };
        grid.check_range()?;
        Ok(grid)
    }

    fn check_range(&self) -> Result<()> {
        if let Some(r) = self.cells.iter().find(|&&r| !(r >= T::zero() && r <= T::one())) {
            return Err(FtlError::InvalidArgument(format!("cell average {r} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn dz(&self) -> T {
        (self.z_right - self.z_left) / T::from_count(self.cells.len())
    }

    pub fn mass(&self) -> T {
        self.cells.iter().copied().sum::<T>() * self.dz()
    }

    pub fn to_density(&self) -> PiecewiseConstantDensity<T> {
        let dz = self.dz();
        let n = self.cells.len();
        let mut bp: Vec<T> = (0..=n).map(|j| self.z_left + dz * T::from_count(j)).collect();
        bp[n] = self.z_right;
        let extension = match self.boundary {
            GridBoundary::Periodic => Extension::Periodic { a: self.z_left, b: self.z_right },
            GridBoundary::Open { left, right } => Extension::Open { left, right },
        };
        PiecewiseConstantDensity::new(bp, self.cells.clone(), extension).expect("uniform grid is well formed")
    }
}

/// Advances the grid to `t_end` with the explicit Godunov scheme. The step
/// obeys `dt * max|f'| <= cfl * dz` and lands exactly on `t_end`.
pub fn godunov_solve<T: Real>(law: &FluxLaw<T>, grid: &EulerianGrid<T>, t_end: T, cfl: T) -> Result<EulerianGrid<T>> {
    if !(cfl > T::zero() && cfl <= T::one()) {
        return Err(FtlError::Cfl(cfl.to_f64_lossy()));
    }
    grid.check_range()?;
    let dz = grid.dz();
    let speed = law.max_speed().max(T::lit(1e-300));
    let dt_max = cfl * dz / speed;
    let steps = crate::ode::step_count(t_end, dt_max);
    if steps == 0 {
        return Ok(grid.clone());
    }
    let dt = t_end / T::from_count(steps);
    let ratio = dt / dz;
    let n = grid.cells.len();
    let mut rho = grid.cells.clone();
    let mut flux = vec![T::zero(); n + 1];
    for _ in 0..steps {
        let (gl, gr) = match grid.boundary {
            GridBoundary::Periodic => (rho[n - 1], rho[0]),
            GridBoundary::Open { left, right } => (left, right),
        };
        flux[0] = law.godunov_flux(gl, rho[0]);
        for j in 1..n {
            flux[j] = law.godunov_flux(rho[j - 1], rho[j]);
        }
        flux[n] = match grid.boundary {
            GridBoundary::Periodic => flux[0],
            GridBoundary::Open { .. } => law.godunov_flux(rho[n - 1], gr),
        };
        for j in 0..n {
            rho[j] = rho[j] - ratio * (flux[j + 1] - flux[j]);
        }
    }
    Ok(EulerianGrid { cells: rho, ..grid.clone() })
}

/// Right closure for [`lagrangian_upwind_solve`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UpwindBoundary<T> {
    /// Grid function is one period of a periodic profile.
    Periodic,
    /// Fixed state to the right of the last cell.
    Fixed(T),
}

/// Upwind scheme `y_j <- y_j + lambda (V(y_{j+1}) - V(y_j))` for
/// `y_t - V(y)_x = 0`, run for `steps` steps.
pub fn lagrangian_upwind_solve<T: Real>(
    model: &VelocityModel<T>,
    y0: &[T],
    boundary: UpwindBoundary<T>,
    lambda: T,
    steps: usize,
) -> Result<Vec<T>> {
    if lambda * model.lipschitz_constant() > T::one() {
        return Err(FtlError::Cfl((lambda * model.lipschitz_constant()).to_f64_lossy()));
    }
    if y0.is_empty() {
        return Err(FtlError::InvalidArgument("empty profile".into()));
    }
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut flux = vec![T::zero(); n + 1];
    for _ in 0..steps {
        for j in 0..n {
            flux[j] = model.lagrangian_v(y[j])?;
        }
        flux[n] = match boundary {
            UpwindBoundary::Periodic => flux[0],
            UpwindBoundary::Fixed(m) => model.lagrangian_v(m)?,
        };
        for j in 0..n {
            y[j] = y[j] + lambda * (flux[j + 1] - flux[j]);
        }
    }
    Ok(y)
}

/// Piecewise-linear function, `slope * z + offset` on each piece, with
/// constant extensions outside the breakpoint range.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseLinear<T> {
    pub breakpoints: Vec<T>,
    /// `(slope, offset)` per piece.
    pub pieces: Vec<(T, T)>,
    pub left: T,
    pub right: T,
}

impl<T: Real> PiecewiseLinear<T> {
    pub fn eval(&self, z: T) -> T {
        if z < self.breakpoints[0] {
            return self.left;
        }
        if z > *self.breakpoints.last().unwrap() {
            return self.right;
        }
        let k = self.breakpoints.partition_point(|&p| p < z).clamp(1, self.pieces.len()) - 1;
        let (s, o) = self.pieces[k];
        s * z + o
    }
}

/// Exact entropy solution of a Riemann problem for the linear law
/// `f(rho) = v_max rho (1 - rho)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiemannSolution<T> {
    pub rho_l: T,
    pub rho_r: T,
    pub z0: T,
    pub v_max: T,
}

impl<T: Real> RiemannSolution<T> {
    pub fn new(model: &VelocityModel<T>, rho_l: T, rho_r: T, z0: T) -> Result<Self> {
        if !matches!(model.law(), VelocityLaw::Linear) {
            return Err(FtlError::InvalidArgument("closed-form Riemann solutions need the linear law".into()));
        }
        Ok(RiemannSolution { rho_l, rho_r, z0, v_max: model.v_max() })
    }

    /// Characteristic speed `f'(rho)`.
    fn speed(&self, rho: T) -> T {
        self.v_max * (T::one() - T::lit(2.0) * rho)
    }

    /// True for a rarefaction fan (`rho_l > rho_r`).
    pub fn is_rarefaction(&self) -> bool {
        self.rho_l > self.rho_r
    }

    /// Shock speed `(f(rho_r) - f(rho_l)) / (rho_r - rho_l)`.
    pub fn shock_speed(&self) -> T {
        self.v_max * (T::one() - self.rho_l - self.rho_r)
    }

    /// Solution profile at `t > 0`.
    pub fn at(&self, t: T) -> PiecewiseLinear<T> {
        if self.rho_l == self.rho_r {
            return PiecewiseLinear { breakpoints: vec![self.z0, self.z0 + T::one()], pieces: vec![(T::zero(), self.rho_l)], left: self.rho_l, right: self.rho_r };
        }
        if self.is_rarefaction() {
            // rho = (1 - (z - z0) / (v_max t)) / 2 inside the fan
            let zl = self.z0 + self.speed(self.rho_l) * t;
            let zr = self.z0 + self.speed(self.rho_r) * t;
            let half = T::lit(0.5);
            let slope = -half / (self.v_max * t);
            let offset = half - slope * self.z0;
            PiecewiseLinear { breakpoints: vec![zl, zr], pieces: vec![(slope, offset)], left: self.rho_l, right: self.rho_r }
        } else {
            let zs = self.z0 + self.shock_speed() * t;
            let eps = T::lit(1e-9).max(zs.abs() * T::lit(1e-12));
            PiecewiseLinear {
                breakpoints: vec![zs - eps, zs, zs + eps],
                pieces: vec![(T::zero(), self.rho_l), (T::zero(), self.rho_r)],
                left: self.rho_l,
                right: self.rho_r,
            }
        }
    }
}
