//! Truncated bivariate Taylor jets: every partial derivative of a smooth
//! field up to total order 5 at a point, propagated exactly through sums,
//! products, and univariate compositions.
//!
//! `c[i][j]` stores the Taylor coefficient `∂_x^i ∂_t^j f / (i! j!)`;
//! entries with `i + j > 5` are unused. Keeping coefficients instead of raw
//! partials makes products a plain Cauchy convolution.

pub const JET_ORDER: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    c: [[f64; JET_ORDER + 1]; JET_ORDER + 1],
}

const FACT: [f64; JET_ORDER + 1] = [1.0, 1.0, 2.0, 6.0, 24.0, 120.0];

impl Jet {
    pub fn zero() -> Self {
        Jet {
            c: [[0.0; JET_ORDER + 1]; JET_ORDER + 1],
        }
    }

    pub fn constant(v: f64) -> Self {
        let mut j = Jet::zero();
        j.c[0][0] = v;
        j
    }

    pub fn value(&self) -> f64 {
        self.c[0][0]
    }

    /// Raw Taylor coefficient access.
    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        self.c[i][j]
    }

    pub fn set_coeff(&mut self, i: usize, j: usize, v: f64) {
        self.c[i][j] = v;
    }

    /// The partial derivative ∂_x^i ∂_t^j f.
    pub fn partial(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i + j <= JET_ORDER, "order {} beyond jet truncation", i + j);
        self.c[i][j] * FACT[i] * FACT[j]
    }

    pub fn set_partial(&mut self, i: usize, j: usize, v: f64) {
        self.c[i][j] = v / (FACT[i] * FACT[j]);
    }

    pub fn add(&self, other: &Jet) -> Jet {
        let mut out = Jet::zero();
        for i in 0..=JET_ORDER {
            for j in 0..=JET_ORDER - i {
                out.c[i][j] = self.c[i][j] + other.c[i][j];
            }
        }
        out
    }

    pub fn sub(&self, other: &Jet) -> Jet {
        let mut out = Jet::zero();
        for i in 0..=JET_ORDER {
            for j in 0..=JET_ORDER - i {
                out.c[i][j] = self.c[i][j] - other.c[i][j];
            }
        }
        out
    }

    pub fn scale(&self, k: f64) -> Jet {
        let mut out = *self;
        for i in 0..=JET_ORDER {
            for j in 0..=JET_ORDER - i {
                out.c[i][j] *= k;
            }
        }
        out
    }

    /// Truncated product (Cauchy convolution over both axes).
    pub fn mul(&self, other: &Jet) -> Jet {
        let mut out = Jet::zero();
        for i in 0..=JET_ORDER {
            for j in 0..=JET_ORDER - i {
                let mut acc = 0.0;
                for p in 0..=i {
                    for q in 0..=j {
                        acc += self.c[p][q] * other.c[i - p][j - q];
                    }
                }
                out.c[i][j] = acc;
            }
        }
        out
    }

    /// Compose a univariate function onto this jet. `series[k]` must hold
    /// `g^{(k)}(f0)/k!` where `f0` is this jet's value. Horner over the
    /// zero-constant part keeps the truncation exact.
    pub fn compose(&self, series: &[f64; JET_ORDER + 1]) -> Jet {
        let mut tilde = *self;
        tilde.c[0][0] = 0.0;
        let mut out = Jet::constant(series[JET_ORDER]);
        for k in (0..JET_ORDER).rev() {
            out = out.mul(&tilde);
            out.c[0][0] += series[k];
        }
        out
    }

    /// Jet of a univariate factor g(a + s·v) in a single axis: axis 0 for x,
    /// 1 for t. `derivs[k]` = g^{(k)} evaluated at the point (plain
    /// derivatives, not Taylor coefficients); `rate` is s's coefficient.
    pub fn univariate(axis: usize, derivs: &[f64; JET_ORDER + 1], rate: f64) -> Jet {
        let mut out = Jet::zero();
        let mut pow = 1.0;
        for k in 0..=JET_ORDER {
            let coeff = derivs[k] * pow / FACT[k];
            if axis == 0 {
                out.c[k][0] = coeff;
            } else {
                out.c[0][k] = coeff;
            }
            pow *= rate;
        }
        out
    }
}

/// Jet of sin(k s + phase) along one axis at s = s0.
pub fn sin_jet(axis: usize, k: f64, phase: f64, s0: f64) -> Jet {
    let theta = k * s0 + phase;
    let mut derivs = [0.0; JET_ORDER + 1];
    for (n, d) in derivs.iter_mut().enumerate() {
        // d^n/ds^n sin(ks + p) = k^n sin(ks + p + n pi/2)
        *d = (theta + n as f64 * std::f64::consts::FRAC_PI_2).sin();
    }
    Jet::univariate(axis, &derivs, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_reproduces_leibniz() {
        // f = x^2 t, g = x + t^3 at (x, t) = (2, 3); fg = x^3 t + x^2 t^4.
        let (x0, t0) = (2.0, 3.0);
        let mut f = Jet::zero();
        f.set_partial(0, 0, x0 * x0 * t0);
        f.set_partial(1, 0, 2.0 * x0 * t0);
        f.set_partial(2, 0, 2.0 * t0);
        f.set_partial(0, 1, x0 * x0);
        f.set_partial(1, 1, 2.0 * x0);
        f.set_partial(2, 1, 2.0);
        let mut g = Jet::zero();
        g.set_partial(0, 0, x0 + t0 * t0 * t0);
        g.set_partial(1, 0, 1.0);
        g.set_partial(0, 1, 3.0 * t0 * t0);
        g.set_partial(0, 2, 6.0 * t0);
        g.set_partial(0, 3, 6.0);

        let fg = f.mul(&g);
        // d/dx (fg) = 3x^2 t + 2x t^4
        assert!((fg.partial(1, 0) - (3.0 * x0 * x0 * t0 + 2.0 * x0 * t0.powi(4))).abs() < 1e-10);
        // d2/dx dt (fg) = 3x^2 + 8x t^3
        assert!((fg.partial(1, 1) - (3.0 * x0 * x0 + 8.0 * x0 * t0.powi(3))).abs() < 1e-10);
        // d3/dt3 (fg) = 24 x^2 t
        assert!((fg.partial(0, 3) - 24.0 * x0 * x0 * t0).abs() < 1e-10);
    }

    #[test]
    fn sin_jet_partials_cycle() {
        let k = 1.7;
        let s0 = 0.4;
        let j = sin_jet(1, k, 0.0, s0);
        assert!((j.partial(0, 0) - (k * s0).sin()).abs() < 1e-14);
        assert!((j.partial(0, 1) - k * (k * s0).cos()).abs() < 1e-14);
        assert!((j.partial(0, 2) + k * k * (k * s0).sin()).abs() < 1e-14);
        assert!((j.partial(0, 5) - k.powi(5) * (k * s0).cos()).abs() < 1e-12);
    }

    #[test]
    fn compose_matches_direct_expansion() {
        // g(f) = f^2 with f = 1 + sin jet: compare against mul.
        let f = sin_jet(0, 2.0, 0.3, 0.7).add(&Jet::constant(1.0));
        let f0 = f.value();
        let series = [f0 * f0, 2.0 * f0, 1.0, 0.0, 0.0, 0.0];
        let composed = f.compose(&series);
        let direct = f.mul(&f);
        for i in 0..=JET_ORDER {
            for j in 0..=JET_ORDER - i {
                assert!(
                    (composed.coeff(i, j) - direct.coeff(i, j)).abs() < 1e-12,
                    "coeff ({i},{j})"
                );
            }
        }
    }
}
