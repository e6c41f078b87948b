//! Complex scalar fields on a chart, either spectral grids (torus) or
//! closed-form expressions (half-plane and analytic torus data).
//!
//! Vertical Fourier coefficients of functions on the sphere bundle are
//! stored in this type, so it has to support exact chart derivatives,
//! products and pointwise evaluation in both representations.

use num_complex::Complex64;

use crate::expr::{Expr, Var};
use crate::grid::GridField;

#[derive(Debug, Clone)]
pub enum ScalarField {
    Grid(GridField),
    /// Real and imaginary parts as separate expressions.
    Expr(Expr, Expr),
}

impl ScalarField {
    pub fn zero_expr() -> ScalarField {
        ScalarField::Expr(Expr::zero(), Expr::zero())
    }

    pub fn from_real_expr(e: Expr) -> ScalarField {
        ScalarField::Expr(e, Expr::zero())
    }

    pub fn from_complex_expr(re: Expr, im: Expr) -> ScalarField {
        ScalarField::Expr(re, im)
    }

    pub fn is_grid(&self) -> bool {
        matches!(self, ScalarField::Grid(_))
    }

    /// Sample an expression field onto the lattice of `template`.
    fn sampled_like(&self, template: &GridField) -> GridField {
        match self {
            ScalarField::Grid(g) => g.clone(),
            ScalarField::Expr(re, im) => GridField::from_fn(
                template.nx,
                template.ny,
                template.lx,
                template.ly,
                |x, y| Complex64::new(re.eval(x, y), im.eval(x, y)),
            ),
        }
    }

    fn binary(
        &self,
        other: &ScalarField,
        grid_op: impl Fn(&GridField, &GridField) -> GridField,
        expr_op: impl Fn(&Expr, &Expr, &Expr, &Expr) -> (Expr, Expr),
    ) -> ScalarField {
        match (self, other) {
            (ScalarField::Expr(ar, ai), ScalarField::Expr(br, bi)) => {
                let (re, im) = expr_op(ar, ai, br, bi);
                ScalarField::Expr(re, im)
            }
            (ScalarField::Grid(a), b) => ScalarField::Grid(grid_op(a, &b.sampled_like(a))),
            (a, ScalarField::Grid(b)) => ScalarField::Grid(grid_op(&a.sampled_like(b), b)),
        }
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        self.binary(
            other,
            |a, b| a.add(b),
            |ar, ai, br, bi| (Expr::add(ar, br), Expr::add(ai, bi)),
        )
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        self.binary(
            other,
            |a, b| a.sub(b),
            |ar, ai, br, bi| (Expr::sub(ar, br), Expr::sub(ai, bi)),
        )
    }

    pub fn mul(&self, other: &ScalarField) -> ScalarField {
        self.binary(
            other,
            |a, b| a.mul(b),
            |ar, ai, br, bi| {
                (
                    Expr::sub(&Expr::mul(ar, br), &Expr::mul(ai, bi)),
                    Expr::add(&Expr::mul(ar, bi), &Expr::mul(ai, br)),
                )
            },
        )
    }

    pub fn scale(&self, s: Complex64) -> ScalarField {
        match self {
            ScalarField::Grid(g) => ScalarField::Grid(g.scale(s)),
            ScalarField::Expr(re, im) => ScalarField::Expr(
                Expr::sub(&Expr::scale(re, s.re), &Expr::scale(im, s.im)),
                Expr::add(&Expr::scale(re, s.im), &Expr::scale(im, s.re)),
            ),
        }
    }

    pub fn conj(&self) -> ScalarField {
        match self {
            ScalarField::Grid(g) => ScalarField::Grid(g.conj()),
            ScalarField::Expr(re, im) => ScalarField::Expr(re.clone(), Expr::neg(im)),
        }
    }

    pub fn dx(&self) -> ScalarField {
        match self {
            ScalarField::Grid(g) => ScalarField::Grid(g.dx()),
            ScalarField::Expr(re, im) => ScalarField::Expr(re.diff(Var::X), im.diff(Var::X)),
        }
    }

    pub fn dy(&self) -> ScalarField {
        match self {
            ScalarField::Grid(g) => ScalarField::Grid(g.dy()),
            ScalarField::Expr(re, im) => ScalarField::Expr(re.diff(Var::Y), im.diff(Var::Y)),
        }
    }

    /// Pointwise evaluation. On grids this hits the lattice directly when
    /// `(x, y)` is a node and otherwise falls back to trigonometric
    /// interpolation (exact for band-limited data, but slower).
    pub fn eval(&self, x: f64, y: f64) -> Complex64 {
        match self {
            ScalarField::Expr(re, im) => Complex64::new(re.eval(x, y), im.eval(x, y)),
            ScalarField::Grid(g) => {
                let fx = x / g.lx * g.nx as f64;
                let fy = y / g.ly * g.ny as f64;
                let ix = fx.round();
                let iy = fy.round();
                if (fx - ix).abs() < 1e-12 && (fy - iy).abs() < 1e-12 {
                    let ix = (ix as i64).rem_euclid(g.nx as i64) as usize;
                    let iy = (iy as i64).rem_euclid(g.ny as i64) as usize;
                    g.at(ix, iy)
                } else {
                    crate::grid::Interpolant::new(g).eval(x, y)
                }
            }
        }
    }

    pub fn max_abs_on_grid(&self) -> f64 {
        match self {
            ScalarField::Grid(g) => g.max_abs(),
            ScalarField::Expr(_, _) => panic!("max_abs_on_grid needs a grid-backed field"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn mixed_grid_expr_product() {
        let g = ScalarField::Grid(GridField::from_fn(16, 16, TAU, TAU, |x, _| {
            Complex64::new(x.cos(), 0.0)
        }));
        let e = ScalarField::from_real_expr(Expr::sin(&Expr::y()));
        let p = g.mul(&e);
        let v = p.eval(TAU / 16.0 * 3.0, TAU / 16.0 * 5.0);
        let (x, y) = (TAU / 16.0 * 3.0, TAU / 16.0 * 5.0);
        assert!((v.re - x.cos() * y.sin()).abs() < 1e-13);
    }

    #[test]
    fn complex_expr_arithmetic() {
        let a = ScalarField::from_complex_expr(Expr::x(), Expr::y());
        let sq = a.mul(&a); // (x + iy)^2 = x^2 - y^2 + 2ixy
        let v = sq.eval(2.0, 3.0);
        assert!((v.re - (4.0 - 9.0)).abs() < 1e-13);
        assert!((v.im - 12.0).abs() < 1e-13);
    }
}
