//! Scalar functions on the sphere bundle SM as truncated vertical Fourier
//! series with chart-spectral (or analytic) coefficients.
//!
//! `u(x, y, omega) = sum_k u_k(x, y) e^{i k omega}`, with `u_{-k} = conj(u_k)`
//! for real fields. `V` acts exactly as multiplication by `i k`; `X` and `H`
//! come from the isothermal-coordinate frame
//!
//! ```text
//! X = e^{-phi} ( cos w d_x + sin w d_y + (phi_y cos w - phi_x sin w) d_w )
//! H = e^{-phi} (-sin w d_x + cos w d_y - (phi_x cos w + phi_y sin w) d_w )
//! V = d_w
//! ```
//!
//! which in mode space shift `k` by one. The commutator suite is the
//! acceptance oracle for these formulas.

use std::rc::Rc;

use num_complex::Complex64;

use crate::error::{Result, ThermoError};
use crate::field::ScalarField;
use crate::geometry::{SmPoint, Surface, ThermostatParams};

/// Hard cap on vertical degree; operations that would exceed it error out.
pub const DEGREE_CAP: i32 = 32;

#[derive(Debug, Clone)]
pub struct SmField {
    pub surface: Rc<Surface>,
    kmax: i32,
    /// Modes `-kmax ..= kmax`, index `(k + kmax)`.
    modes: Vec<ScalarField>,
}

fn zero_like(surface: &Surface) -> ScalarField {
    match surface.grid_shape() {
        Some((n, lx, ly)) => ScalarField::Grid(crate::grid::GridField::zeros(n, n, lx, ly)),
        None => ScalarField::zero_expr(),
    }
}

impl SmField {
    pub fn zero(surface: &Rc<Surface>, kmax: i32) -> SmField {
        let modes = (0..2 * kmax + 1).map(|_| zero_like(surface)).collect();
        SmField {
            surface: Rc::clone(surface),
            kmax,
            modes,
        }
    }

    pub fn kmax(&self) -> i32 {
        self.kmax
    }

    pub fn mode(&self, k: i32) -> Option<&ScalarField> {
        if k.abs() > self.kmax {
            None
        } else {
            Some(&self.modes[(k + self.kmax) as usize])
        }
    }

    pub fn set_mode(&mut self, k: i32, f: ScalarField) {
        assert!(k.abs() <= self.kmax);
        self.modes[(k + self.kmax) as usize] = f;
    }

    /// Degree-zero field (a function of position only).
    pub fn scalar(surface: &Rc<Surface>, f: ScalarField) -> SmField {
        let mut u = SmField::zero(surface, 0);
        u.set_mode(0, f);
        u
    }

    pub fn constant(surface: &Rc<Surface>, v: f64) -> SmField {
        let c = zero_like(surface);
        let one = match c {
            ScalarField::Grid(g) => ScalarField::Grid(g.map(|_| Complex64::new(v, 0.0))),
            ScalarField::Expr(_, _) => {
                ScalarField::from_real_expr(crate::expr::Expr::constant(v))
            }
        };
        SmField::scalar(surface, one)
    }

    /// Real field `f e^{ikw} + conj(f) e^{-ikw}` (just `Re f` for k = 0).
    pub fn real_harmonic(surface: &Rc<Surface>, k: i32, f: ScalarField) -> SmField {
        let k = k.abs();
        let mut u = SmField::zero(surface, k);
        if k == 0 {
            let re = f.add(&f.conj()).scale(Complex64::new(0.5, 0.0));
            u.set_mode(0, re);
        } else {
            u.set_mode(k, f.clone());
            u.set_mode(-k, f.conj());
        }
        u
    }

    fn check_cap(kmax: i32) -> Result<()> {
        if kmax > DEGREE_CAP {
            Err(ThermoError::DegreeCap(kmax, DEGREE_CAP))
        } else {
            Ok(())
        }
    }

    pub fn add(&self, other: &SmField) -> SmField {
        let kmax = self.kmax.max(other.kmax);
        let mut out = SmField::zero(&self.surface, kmax);
        for k in -kmax..=kmax {
            let a = self.mode(k);
            let b = other.mode(k);
            let f = match (a, b) {
                (Some(a), Some(b)) => a.add(b),
                (Some(a), None) => a.clone(),
                (None, Some(b)) => b.clone(),
                (None, None) => unreachable!(),
            };
            out.set_mode(k, f);
        }
        out
    }

    pub fn sub(&self, other: &SmField) -> SmField {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: Complex64) -> SmField {
        let mut out = self.clone();
        for m in out.modes.iter_mut() {
            *m = m.scale(s);
        }
        out
    }

    pub fn conj(&self) -> SmField {
        let mut out = SmField::zero(&self.surface, self.kmax);
        for k in -self.kmax..=self.kmax {
            out.set_mode(k, self.mode(-k).unwrap().conj());
        }
        out
    }

    /// Pointwise product; vertical degrees add (convolution in k).
    pub fn mul(&self, other: &SmField) -> Result<SmField> {
        let kmax = self.kmax + other.kmax;
        SmField::check_cap(kmax)?;
        let mut out = SmField::zero(&self.surface, kmax);
        for ka in -self.kmax..=self.kmax {
            let a = self.mode(ka).unwrap();
            for kb in -other.kmax..=other.kmax {
                let b = other.mode(kb).unwrap();
                let prod = a.mul(b);
                let cur = out.mode(ka + kb).unwrap().add(&prod);
                out.set_mode(ka + kb, cur);
            }
        }
        Ok(out)
    }

    /// Vertical derivative, exact: multiplication by `i k` per mode.
    pub fn v_op(&self) -> SmField {
        let mut out = SmField::zero(&self.surface, self.kmax);
        for k in -self.kmax..=self.kmax {
            out.set_mode(
                k,
                self.mode(k).unwrap().scale(Complex64::new(0.0, k as f64)),
            );
        }
        out
    }

    /// Geodesic vector field X in mode space; raises the degree by one.
    pub fn x_op(&self) -> Result<SmField> {
        self.shift_op(false)
    }

    /// Horizontal field H; raises the degree by one.
    pub fn h_op(&self) -> Result<SmField> {
        self.shift_op(true)
    }

    fn shift_op(&self, horizontal: bool) -> Result<SmField> {
        let kmax = self.kmax + 1;
        SmField::check_cap(kmax)?;
        let s = &self.surface;
        let half = Complex64::new(0.5, 0.0);
        let i = Complex64::i();
        let mut out = SmField::zero(&self.surface, kmax);
        for k in -self.kmax..=self.kmax {
            let uk = self.mode(k).unwrap();
            let dxk = uk.dx();
            let dyk = uk.dy();
            let ik = Complex64::new(0.0, k as f64);
            // raising part: (d_x - i d_y) u_k + i k (phi_y + i phi_x) u_k
            let wp = s.phi_y().add(&s.phi_x().scale(i));
            let up = dxk
                .sub(&dyk.scale(i))
                .add(&wp.mul(uk).scale(ik));
            // lowering part: (d_x + i d_y) u_k + i k (phi_y - i phi_x) u_k
            let wm = s.phi_y().sub(&s.phi_x().scale(i));
            let um = dxk
                .add(&dyk.scale(i))
                .add(&wm.mul(uk).scale(ik));
            let (cp, cm) = if horizontal { (i, -i) } else {
                (Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0))
            };
            let up = s.e_neg_phi().mul(&up).scale(half * cp);
            let um = s.e_neg_phi().mul(&um).scale(half * cm);
            out.set_mode(k + 1, out.mode(k + 1).unwrap().add(&up));
            out.set_mode(k - 1, out.mode(k - 1).unwrap().add(&um));
        }
        Ok(out)
    }

    /// Thermostat generator `F = X + lambda V`.
    pub fn f_op(&self, lambda: &SmField) -> Result<SmField> {
        Ok(self.x_op()?.add(&lambda.mul(&self.v_op())?))
    }

    /// Modified horizontal field `H_c = H + c V`.
    pub fn hc_op(&self, c: &SmField) -> Result<SmField> {
        Ok(self.h_op()?.add(&c.mul(&self.v_op())?))
    }

    pub fn eval(&self, p: &SmPoint) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in -self.kmax..=self.kmax {
            let coeff = self.mode(k).unwrap().eval(p.x, p.y);
            acc += coeff * (Complex64::i() * (k as f64) * p.omega).exp();
        }
        acc
    }

    /// Evaluate at a torus lattice node (exact, no interpolation).
    pub fn eval_at_node(&self, ix: usize, iy: usize, omega: f64) -> Complex64 {
        let (n, lx, ly) = self.surface.grid_shape().expect("lattice eval needs a torus");
        let p = SmPoint::new(
            ix as f64 * lx / n as f64,
            iy as f64 * ly / n as f64,
            omega,
        );
        self.eval(&p)
    }

    /// Liouville integral over SM with `d mu = e^{2 phi} dx dy dw`: the
    /// fiber integral keeps only mode zero.
    pub fn liouville_integral(&self) -> Result<f64> {
        if !self.surface.chart.is_torus() {
            return Err(ThermoError::NonCompactChart);
        }
        let weighted = self.surface.e_2phi().mul(self.mode(0).unwrap());
        let integral = match weighted {
            ScalarField::Grid(g) => g.integral(),
            ScalarField::Expr(_, _) => unreachable!("torus fields are grid-backed"),
        };
        Ok(std::f64::consts::TAU * integral.re)
    }

    /// `integral |u|^2 d mu`, using mode orthogonality in the fiber.
    pub fn l2_norm_sq(&self) -> Result<f64> {
        if !self.surface.chart.is_torus() {
            return Err(ThermoError::NonCompactChart);
        }
        let mut acc = 0.0;
        for k in -self.kmax..=self.kmax {
            let m = self.mode(k).unwrap();
            let w = self.surface.e_2phi().mul(&m.mul(&m.conj()));
            if let ScalarField::Grid(g) = w {
                acc += g.integral().re;
            }
        }
        Ok(std::f64::consts::TAU * acc)
    }

    pub fn even_part(&self) -> SmField {
        self.parity_part(0)
    }

    pub fn odd_part(&self) -> SmField {
        self.parity_part(1)
    }

    fn parity_part(&self, parity: i32) -> SmField {
        let mut out = SmField::zero(&self.surface, self.kmax);
        for k in -self.kmax..=self.kmax {
            if k.rem_euclid(2) == parity {
                out.set_mode(k, self.mode(k).unwrap().clone());
            }
        }
        out
    }

    /// Precompute per-mode interpolants for repeated off-lattice evaluation
    /// (orbit integrals hit thousands of points).
    pub fn evaluator(&self) -> SmEvaluator {
        SmEvaluator {
            kmax: self.kmax,
            modes: self
                .modes
                .iter()
                .map(|m| match m {
                    ScalarField::Grid(g) => {
                        EvalMode::Interp(crate::grid::Interpolant::new(g))
                    }
                    e @ ScalarField::Expr(_, _) => EvalMode::Field(e.clone()),
                })
                .collect(),
        }
    }

    /// Max modulus over all modes on the lattice (torus charts).
    pub fn max_mode_abs(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| m.max_abs_on_grid())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
enum EvalMode {
    Interp(crate::grid::Interpolant),
    Field(ScalarField),
}

/// Cheap repeated evaluation of an `SmField` at arbitrary points.
#[derive(Debug, Clone)]
pub struct SmEvaluator {
    kmax: i32,
    modes: Vec<EvalMode>,
}

impl SmEvaluator {
    pub fn eval(&self, p: &SmPoint) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (idx, m) in self.modes.iter().enumerate() {
            let k = idx as i32 - self.kmax;
            let coeff = match m {
                EvalMode::Interp(it) => it.eval(p.x, p.y),
                EvalMode::Field(f) => f.eval(p.x, p.y),
            };
            acc += coeff * (Complex64::i() * (k as f64) * p.omega).exp();
        }
        acc
    }
}

/// `lambda = f + <e, iv>` as an SM field: mode 0 is `f`, modes +-1 carry the
/// thermostat part `e^{-phi} (g_x cos w + g_y sin w)`.
pub fn lambda_field(surface: &Rc<Surface>, params: &ThermostatParams) -> SmField {
    let gx = params.stream.dx();
    let gy = params.stream.dy();
    // lambda_1 = e^{-phi} (g_x - i g_y) / 2
    let l1 = surface
        .e_neg_phi()
        .mul(&gx.sub(&gy.scale(Complex64::i())))
        .scale(Complex64::new(0.5, 0.0));
    let mut out = SmField::zero(surface, 1);
    out.set_mode(0, params.f.clone());
    out.set_mode(1, l1.clone());
    out.set_mode(-1, l1.conj());
    out
}

/// `theta(x, v) = <e(x), v>`; satisfies `V(theta) = lambda - f`.
pub fn theta_field(surface: &Rc<Surface>, params: &ThermostatParams) -> SmField {
    let gx = params.stream.dx();
    let gy = params.stream.dy();
    // theta_1 = e^{-phi} (-g_y - i g_x) / 2
    let t1 = surface
        .e_neg_phi()
        .mul(&gy.scale(Complex64::new(-1.0, 0.0)).sub(&gx.scale(Complex64::i())))
        .scale(Complex64::new(0.5, 0.0));
    let mut out = SmField::zero(surface, 1);
    out.set_mode(1, t1.clone());
    out.set_mode(-1, t1.conj());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use std::f64::consts::TAU;

    fn torus() -> Rc<Surface> {
        Rc::new(Surface::flat_torus(TAU, TAU, 32))
    }

    #[test]
    fn v_of_sin_omega_is_cos_omega() {
        let s = torus();
        // sin w = Im e^{iw}: mode 1 coefficient -i/2
        let f = ScalarField::Grid(crate::grid::GridField::from_fn(32, 32, TAU, TAU, |_, _| {
            Complex64::new(0.0, -0.5)
        }));
        let u = SmField::real_harmonic(&s, 1, f);
        let vu = u.v_op();
        for &w in &[0.0, 0.4, 1.9, 5.0] {
            let p = SmPoint::new(0.0, 0.0, w);
            assert!((u.eval(&p).re - w.sin()).abs() < 1e-14);
            assert!((vu.eval(&p).re - w.cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn frame_kills_constants() {
        let s = torus();
        let u = SmField::constant(&s, 1.0);
        assert!(u.x_op().unwrap().max_mode_abs() < 1e-15);
        assert!(u.h_op().unwrap().max_mode_abs() < 1e-15);
        assert!(u.v_op().max_mode_abs() < 1e-15);
    }

    #[test]
    fn liouville_volume_of_flat_torus() {
        let s = torus();
        let u = SmField::constant(&s, 1.0);
        let vol = u.liouville_integral().unwrap();
        assert!((vol - TAU.powi(3)).abs() < 1e-9);
    }

    #[test]
    fn v_theta_equals_thermostat_lambda() {
        let s = Rc::new(Surface::torus(
            TAU,
            TAU,
            32,
            Expr::scale(&Expr::cos(&Expr::x()), 0.1),
        ));
        let params = ThermostatParams::pure(
            Expr::mul(&Expr::sin(&Expr::x()), &Expr::cos(&Expr::y())),
            Some(&s),
        );
        let lam = lambda_field(&s, &params);
        let vtheta = theta_field(&s, &params).v_op();
        let d = lam.sub(&vtheta);
        assert!(d.max_mode_abs() < 1e-12);
    }

    #[test]
    fn degree_cap_is_enforced() {
        let s = torus();
        let f = ScalarField::Grid(crate::grid::GridField::from_fn(32, 32, TAU, TAU, |_, _| {
            Complex64::new(1.0, 0.0)
        }));
        let u = SmField::real_harmonic(&s, 17, f);
        assert!(u.mul(&u).is_err());
    }
}
