//! Small closed-form expression trees in two chart variables.
//!
//! Analytic surface data (conformal factors, stream functions, half-plane
//! test fields) is kept symbolic so that chart derivatives of any order are
//! exact. Only the operations the frame formulas actually need are provided.

use std::fmt;
use std::rc::Rc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
}

#[derive(Debug, Clone)]
pub enum Expr {
    Const(f64),
    Coord(Var),
    Add(Rc<Expr>, Rc<Expr>),
    Mul(Rc<Expr>, Rc<Expr>),
    Neg(Rc<Expr>),
    Sin(Rc<Expr>),
    Cos(Rc<Expr>),
    Exp(Rc<Expr>),
    Ln(Rc<Expr>),
    /// Integer power, negative exponents allowed (used for 1/y on the
    /// half-plane chart).
    PowI(Rc<Expr>, i32),
}

impl Expr {
    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn x() -> Expr {
        Expr::Coord(Var::X)
    }

    pub fn y() -> Expr {
        Expr::Coord(Var::Y)
    }

    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(v) if *v == 0.0)
    }

    fn is_one(&self) -> bool {
        matches!(self, Expr::Const(v) if *v == 1.0)
    }

    pub fn add(a: &Expr, b: &Expr) -> Expr {
        if a.is_zero() {
            return b.clone();
        }
        if b.is_zero() {
            return a.clone();
        }
        if let (Expr::Const(x), Expr::Const(y)) = (a, b) {
            return Expr::Const(x + y);
        }
        Expr::Add(Rc::new(a.clone()), Rc::new(b.clone()))
    }

    pub fn sub(a: &Expr, b: &Expr) -> Expr {
        Expr::add(a, &Expr::neg(b))
    }

    pub fn neg(a: &Expr) -> Expr {
        if a.is_zero() {
            return Expr::zero();
        }
        if let Expr::Const(x) = a {
            return Expr::Const(-x);
        }
        if let Expr::Neg(inner) = a {
            return (**inner).clone();
        }
        Expr::Neg(Rc::new(a.clone()))
    }

    pub fn mul(a: &Expr, b: &Expr) -> Expr {
        if a.is_zero() || b.is_zero() {
            return Expr::zero();
        }
        if a.is_one() {
            return b.clone();
        }
        if b.is_one() {
            return a.clone();
        }
        if let (Expr::Const(x), Expr::Const(y)) = (a, b) {
            return Expr::Const(x * y);
        }
        Expr::Mul(Rc::new(a.clone()), Rc::new(b.clone()))
    }

    pub fn scale(a: &Expr, s: f64) -> Expr {
        Expr::mul(&Expr::Const(s), a)
    }

    pub fn sin(a: &Expr) -> Expr {
        Expr::Sin(Rc::new(a.clone()))
    }

    pub fn cos(a: &Expr) -> Expr {
        Expr::Cos(Rc::new(a.clone()))
    }

    pub fn exp(a: &Expr) -> Expr {
        if a.is_zero() {
            return Expr::Const(1.0);
        }
        Expr::Exp(Rc::new(a.clone()))
    }

    pub fn ln(a: &Expr) -> Expr {
        Expr::Ln(Rc::new(a.clone()))
    }

    pub fn powi(a: &Expr, n: i32) -> Expr {
        match n {
            0 => Expr::Const(1.0),
            1 => a.clone(),
            _ => Expr::PowI(Rc::new(a.clone()), n),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Expr::Const(v) => *v,
            Expr::Coord(Var::X) => x,
            Expr::Coord(Var::Y) => y,
            Expr::Add(a, b) => a.eval(x, y) + b.eval(x, y),
            Expr::Mul(a, b) => a.eval(x, y) * b.eval(x, y),
            Expr::Neg(a) => -a.eval(x, y),
            Expr::Sin(a) => a.eval(x, y).sin(),
            Expr::Cos(a) => a.eval(x, y).cos(),
            Expr::Exp(a) => a.eval(x, y).exp(),
            Expr::Ln(a) => a.eval(x, y).ln(),
            Expr::PowI(a, n) => a.eval(x, y).powi(*n),
        }
    }

    /// Exact partial derivative with respect to `var`.
    pub fn diff(&self, var: Var) -> Expr {
        match self {
            Expr::Const(_) => Expr::zero(),
            Expr::Coord(v) => {
                if *v == var {
                    Expr::Const(1.0)
                } else {
                    Expr::zero()
                }
            }
            Expr::Add(a, b) => Expr::add(&a.diff(var), &b.diff(var)),
            Expr::Mul(a, b) => Expr::add(
                &Expr::mul(&a.diff(var), b),
                &Expr::mul(a, &b.diff(var)),
            ),
            Expr::Neg(a) => Expr::neg(&a.diff(var)),
            Expr::Sin(a) => Expr::mul(&Expr::cos(a), &a.diff(var)),
            Expr::Cos(a) => Expr::neg(&Expr::mul(&Expr::sin(a), &a.diff(var))),
            Expr::Exp(a) => Expr::mul(&Expr::exp(a), &a.diff(var)),
            Expr::Ln(a) => Expr::mul(&Expr::powi(a, -1), &a.diff(var)),
            Expr::PowI(a, n) => Expr::mul(
                &Expr::scale(&Expr::powi(a, n - 1), *n as f64),
                &a.diff(var),
            ),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(v) => write!(f, "{v}"),
            Expr::Coord(Var::X) => write!(f, "x"),
            Expr::Coord(Var::Y) => write!(f, "y"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Ln(a) => write!(f, "ln({a})"),
            Expr::PowI(a, n) => write!(f, "{a}^{n}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diff_of_product() {
        // d/dx [x sin(y) + cos(x)] = sin(y) - sin(x)
        let e = Expr::add(
            &Expr::mul(&Expr::x(), &Expr::sin(&Expr::y())),
            &Expr::cos(&Expr::x()),
        );
        let dx = e.diff(Var::X);
        let (x, y) = (0.7, -1.3);
        assert!((dx.eval(x, y) - (y.sin() - x.sin())).abs() < 1e-14);
    }

    #[test]
    fn diff_of_inverse_power() {
        // d/dy y^-1 = -y^-2
        let e = Expr::powi(&Expr::y(), -1);
        let dy = e.diff(Var::Y);
        let y = 0.37;
        assert!((dy.eval(0.0, y) + 1.0 / (y * y)).abs() < 1e-12);
    }

    #[test]
    fn ln_and_exp_invert() {
        let e = Expr::exp(&Expr::ln(&Expr::y()));
        assert!((e.eval(0.0, 2.5) - 2.5).abs() < 1e-14);
        // d/dy ln(y) = 1/y
        let d = Expr::ln(&Expr::y()).diff(Var::Y);
        assert!((d.eval(0.0, 4.0) - 0.25).abs() < 1e-14);
    }
}
