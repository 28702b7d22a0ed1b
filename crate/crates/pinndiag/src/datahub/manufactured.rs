//! Manufactured solutions: analytic fields whose partial derivatives up to
//! order 5 are available in closed form, as the error-bound evaluators
//! assume.

use super::jets::{sin_jet, Jet, JET_ORDER};
use super::Rect;
use crate::error::{Error, Result};
use crate::physics::PhysicsSpec;

/// Sparse bivariate polynomial: sum of c * x^px * t^pt terms.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PolyXY {
    pub terms: Vec<(u32, u32, f64)>,
}

impl PolyXY {
    pub fn new(terms: Vec<(u32, u32, f64)>) -> Self {
        PolyXY { terms }
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(px, pt, c)| c * x.powi(px as i32) * t.powi(pt as i32))
            .sum()
    }

    fn jet(&self, x: f64, t: f64) -> Jet {
        let mut out = Jet::zero();
        for i in 0..=JET_ORDER {
            for j in 0..=JET_ORDER - i {
                let mut acc = 0.0;
                for &(px, pt, c) in &self.terms {
                    let (px, pt) = (px as usize, pt as usize);
                    if px < i || pt < j {
                        continue;
                    }
                    acc += c
                        * falling(px, i)
                        * falling(pt, j)
                        * x.powi((px - i) as i32)
                        * t.powi((pt - j) as i32);
                }
                out.set_partial(i, j, acc);
            }
        }
        out
    }
}

fn falling(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n - i) as f64).product()
}

/// The supported analytic field families.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum ManufacturedKind {
    /// rho constant; u defaults to U_eq(rho) when not given.
    Constant { rho: f64, u: Option<f64> },
    /// rho = a + b sin(k_x x) sin(k_t t), u = U_eq(rho).
    SeparableSine { a: f64, b: f64, k_x: f64, k_t: f64 },
    /// Free polynomial density; u defaults to U_eq(rho) when not given.
    Polynomial { rho: PolyXY, u: Option<PolyXY> },
}

/// An analytic descriptor over a rectangular domain, exposing exact
/// partials of rho and u through truncated Taylor jets.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ManufacturedField {
    pub kind: ManufacturedKind,
    pub spec: PhysicsSpec,
    pub domain: Rect,
}

impl ManufacturedField {
    /// Validates that the density stays inside [0, rho_max] over the domain
    /// (analytically for the sine family, on a probe lattice otherwise).
    pub fn new(kind: ManufacturedKind, spec: PhysicsSpec, domain: Rect) -> Result<Self> {
        spec.validate()?;
        domain.validate()?;
        let field = ManufacturedField { kind, spec, domain };
        match &field.kind {
            ManufacturedKind::Constant { rho, .. } => {
                field.check_rho(*rho)?;
            }
            ManufacturedKind::SeparableSine { a, b, .. } => {
                field.check_rho(a - b.abs())?;
                field.check_rho(a + b.abs())?;
            }
            ManufacturedKind::Polynomial { .. } => {
                let n = 24;
                for i in 0..=n {
                    for j in 0..=n {
                        let x = field.domain.x_lo
                            + (field.domain.x_hi - field.domain.x_lo) * i as f64 / n as f64;
                        let t = field.domain.t_lo
                            + (field.domain.t_hi - field.domain.t_lo) * j as f64 / n as f64;
                        field.check_rho(field.rho(x, t))?;
                    }
                }
            }
        }
        Ok(field)
    }

    fn check_rho(&self, rho: f64) -> Result<()> {
        if !(0.0..=self.spec.rho_max).contains(&rho) {
            return Err(Error::domain(format!(
                "manufactured density {rho} leaves [0, {}]",
                self.spec.rho_max
            )));
        }
        Ok(())
    }

    pub fn rho(&self, x: f64, t: f64) -> f64 {
        match &self.kind {
            ManufacturedKind::Constant { rho, .. } => *rho,
            ManufacturedKind::SeparableSine { a, b, k_x, k_t } => {
                a + b * (k_x * x).sin() * (k_t * t).sin()
            }
            ManufacturedKind::Polynomial { rho, .. } => rho.eval(x, t),
        }
    }

    pub fn u(&self, x: f64, t: f64) -> f64 {
        match &self.kind {
            ManufacturedKind::Constant { rho, u } => {
                u.unwrap_or_else(|| self.spec.u_eq(*rho))
            }
            ManufacturedKind::SeparableSine { .. } => self.spec.u_eq(self.rho(x, t)),
            ManufacturedKind::Polynomial { u, .. } => match u {
                Some(poly) => poly.eval(x, t),
                None => self.spec.u_eq(self.rho(x, t)),
            },
        }
    }

    /// Exact jet of the density at (x, t).
    pub fn rho_jet(&self, x: f64, t: f64) -> Jet {
        match &self.kind {
            ManufacturedKind::Constant { rho, .. } => Jet::constant(*rho),
            ManufacturedKind::SeparableSine { a, b, k_x, k_t } => {
                let jx = sin_jet(0, *k_x, 0.0, x);
                let jt = sin_jet(1, *k_t, 0.0, t);
                jx.mul(&jt).scale(*b).add(&Jet::constant(*a))
            }
            ManufacturedKind::Polynomial { rho, .. } => rho.jet(x, t),
        }
    }

    /// Exact jet of the speed at (x, t).
    pub fn u_jet(&self, x: f64, t: f64) -> Jet {
        match &self.kind {
            ManufacturedKind::Constant { rho, u } => {
                Jet::constant(u.unwrap_or_else(|| self.spec.u_eq(*rho)))
            }
            ManufacturedKind::SeparableSine { .. } => {
                let r = self.rho_jet(x, t);
                r.compose(&self.spec.u_eq_taylor(r.value()))
            }
            ManufacturedKind::Polynomial { u, .. } => match u {
                Some(poly) => poly.jet(x, t),
                None => {
                    let r = self.rho_jet(x, t);
                    r.compose(&self.spec.u_eq_taylor(r.value()))
                }
            },
        }
    }
}
