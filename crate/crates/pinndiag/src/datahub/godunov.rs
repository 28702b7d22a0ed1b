//! First-order Godunov finite-volume solver for the scalar conservation law
//! with the Greenshields flux. Serves as the ground-truth oracle for
//! synthetic detector data.

use super::{FieldSolution, Grid2};
use crate::error::{Error, Result};
use crate::physics::PhysicsSpec;

/// Initial density profile on [x_lo, x_hi].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum InitialDensity {
    Constant { rho: f64 },
    /// Left/right states split at x0 (Riemann problem).
    Step { left: f64, right: f64, x0: f64 },
    /// rho0 + amp * exp(-((x - center)/width)^2).
    GaussianBump { rho0: f64, amp: f64, center: f64, width: f64 },
    /// rho0 + amp * sin(2 pi k (x - x_lo)/L).
    SinePerturbation { rho0: f64, amp: f64, k: u32 },
}

impl InitialDensity {
    fn eval(&self, x: f64, x_lo: f64, span: f64) -> f64 {
        match *self {
            InitialDensity::Constant { rho } => rho,
            InitialDensity::Step { left, right, x0 } => {
                if x < x0 {
                    left
                } else {
                    right
                }
            }
            InitialDensity::GaussianBump { rho0, amp, center, width } => {
                rho0 + amp * (-((x - center) / width).powi(2)).exp()
            }
            InitialDensity::SinePerturbation { rho0, amp, k } => {
                rho0 + amp * (2.0 * std::f64::consts::PI * k as f64 * (x - x_lo) / span).sin()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Boundary {
    Periodic,
    /// Zero-gradient outflow on both ends.
    Outflow,
}

/// Uniform space-time lattice for the solver.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GodunovGrid {
    pub nx: usize,
    pub nt: usize,
    pub dx: f64,
    pub dt: f64,
    pub x_lo: f64,
    pub t_lo: f64,
    pub boundary: Boundary,
}

/// Godunov numerical flux for a concave flux with critical density
/// rho_max/2 (Greenshields): the min/max over the interval between the two
/// states, depending on their order.
fn godunov_flux(spec: &PhysicsSpec, rho_l: f64, rho_r: f64) -> f64 {
    let rho_c = spec.rho_max / 2.0;
    if rho_l <= rho_r {
        // Minimum of q over [rho_l, rho_r]; concave q attains it at an end.
        spec.flux(rho_l).min(spec.flux(rho_r))
    } else if rho_r <= rho_c && rho_c <= rho_l {
        // Maximum over [rho_r, rho_l] hits the critical point.
        spec.flux(rho_c)
    } else {
        spec.flux(rho_l).max(spec.flux(rho_r))
    }
}

/// March the conservation law forward; the speed field is the equilibrium
/// law u(rho) applied to the evolved density.
pub fn solve_lwr_godunov(
    ic: &InitialDensity,
    spec: &PhysicsSpec,
    grid: &GodunovGrid,
) -> Result<FieldSolution> {
    spec.validate()?;
    if grid.nx < 3 || grid.nt < 2 {
        return Err(Error::config("Godunov grid needs nx >= 3 and nt >= 2"));
    }
    if !(grid.dx > 0.0) || !(grid.dt > 0.0) {
        return Err(Error::config("Godunov grid spacing must be positive"));
    }
    let dt_max = grid.dx / spec.u_max;
    if grid.dt > dt_max {
        return Err(Error::config(format!(
            "time step {} violates the solver CFL limit; need dt <= dx/u_max = {}",
            grid.dt, dt_max
        )));
    }
    let span = grid.dx * (grid.nx - 1) as f64;
    let x: Vec<f64> = (0..grid.nx).map(|i| grid.x_lo + grid.dx * i as f64).collect();
    let t: Vec<f64> = (0..grid.nt).map(|k| grid.t_lo + grid.dt * k as f64).collect();

    let mut rho = Grid2::zeros(grid.nx, grid.nt);
    let mut u = Grid2::zeros(grid.nx, grid.nt);
    let mut cur: Vec<f64> = x
        .iter()
        .map(|&xi| ic.eval(xi, grid.x_lo, span).clamp(0.0, spec.rho_max))
        .collect();

    let nx = grid.nx;
    let lam = grid.dt / grid.dx;
    let mut flux = vec![0.0; nx + 1];
    for k in 0..grid.nt {
        for (i, &r) in cur.iter().enumerate() {
            rho.set(k, i, r);
            u.set(k, i, spec.u_eq(r));
        }
        if k + 1 == grid.nt {
            break;
        }
        // Interface fluxes; index i is the left edge of cell i.
        for i in 0..=nx {
            let (l, r) = match grid.boundary {
                Boundary::Periodic => {
                    (cur[(i + nx - 1) % nx], cur[i % nx])
                }
                Boundary::Outflow => {
                    let l = if i == 0 { cur[0] } else { cur[i - 1] };
                    let r = if i == nx { cur[nx - 1] } else { cur[i] };
                    (l, r)
                }
            };
            flux[i] = godunov_flux(spec, l, r);
        }
        for i in 0..nx {
            cur[i] -= lam * (flux[i + 1] - flux[i]);
        }
    }

    FieldSolution::new(x, t, rho, u, None, spec.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> PhysicsSpec {
        PhysicsSpec::lwr(0.12)
    }

    fn grid(nx: usize, nt: usize, boundary: Boundary) -> GodunovGrid {
        let dx = 680.0 / (nx - 1) as f64;
        GodunovGrid {
            nx,
            nt,
            dx,
            dt: 0.9 * dx / 30.0,
            x_lo: 0.0,
            t_lo: 0.0,
            boundary,
        }
    }

    #[test]
    fn constant_initial_condition_stays_constant() {
        let g = grid(101, 50, Boundary::Periodic);
        let sol = solve_lwr_godunov(&InitialDensity::Constant { rho: 0.05 }, &spec(), &g).unwrap();
        for k in 0..g.nt {
            for i in 0..g.nx {
                assert_eq!(sol.rho.get(k, i), 0.05);
            }
        }
    }

    #[test]
    fn cfl_violation_rejected_with_limit_in_message() {
        let mut g = grid(101, 50, Boundary::Periodic);
        g.dt = g.dx / 30.0 * 1.5;
        let err = solve_lwr_godunov(&InitialDensity::Constant { rho: 0.05 }, &spec(), &g)
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("dx/u_max"), "message was: {msg}");
    }

    #[test]
    fn periodic_mass_is_conserved_per_step() {
        let g = grid(128, 200, Boundary::Periodic);
        let ic = InitialDensity::SinePerturbation {
            rho0: 0.06,
            amp: 0.03,
            k: 2,
        };
        let sol = solve_lwr_godunov(&ic, &spec(), &g).unwrap();
        let mass = |k: usize| -> f64 {
            (0..g.nx).map(|i| sol.rho.get(k, i) * g.dx).sum()
        };
        let m0 = mass(0);
        for k in 1..g.nt {
            assert!(
                (mass(k) - m0).abs() < 1e-10 * m0.abs().max(1.0),
                "mass drift at step {k}"
            );
        }
    }

    #[test]
    fn riemann_rarefaction_matches_analytic_fan() {
        // rho_l = 0.8 rho_max > rho_r = 0.2 rho_max: characteristics spread,
        // and inside the fan q'(rho) = x/t, i.e. rho = rho_max (1 - xi/u_max)/2.
        let s = spec();
        let nx = 801;
        let dx = 800.0 / (nx - 1) as f64;
        let g = GodunovGrid {
            nx,
            nt: 400,
            dx,
            dt: 0.9 * dx / 30.0,
            x_lo: -400.0,
            t_lo: 0.0,
            boundary: Boundary::Outflow,
        };
        let ic = InitialDensity::Step {
            left: 0.8 * s.rho_max,
            right: 0.2 * s.rho_max,
            x0: 0.0,
        };
        let sol = solve_lwr_godunov(&ic, &s, &g).unwrap();
        let k = g.nt - 1;
        let t_final = sol.t[k];
        // Fan edges: q'(rho_l) .. q'(rho_r).
        let xi_lo = s.flux_deriv(0.8 * s.rho_max);
        let xi_hi = s.flux_deriv(0.2 * s.rho_max);
        let mut worst: f64 = 0.0;
        for i in 0..nx {
            let xi = sol.x[i] / t_final;
            if xi < xi_lo * 0.7 || xi > xi_hi * 0.7 {
                continue; // stay well inside the fan
            }
            let analytic = s.rho_max * (1.0 - xi / s.u_max) / 2.0;
            worst = worst.max((sol.rho.get(k, i) - analytic).abs());
        }
        assert!(
            worst < 0.01 * s.rho_max,
            "fan deviates from analytic rarefaction by {worst}"
        );
    }
}
