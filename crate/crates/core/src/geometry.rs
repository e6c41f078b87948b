//! Surfaces in isothermal coordinates and thermostat data on them.
//!
//! Every metric is of the form `e^{2 phi} (dx^2 + dy^2)` on either a flat
//! periodic torus or a planar half-plane chart. The external field `e` is
//! always built as the rotated gradient of a stream function, which makes it
//! divergence free by construction.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ThermoError};
use crate::expr::{Expr, Var};
use crate::field::ScalarField;
use crate::grid::{GridField, Interpolant};

/// Point on the unit sphere bundle: chart position plus fiber angle.
/// The unit tangent vector is `v = e^{-phi} (cos omega, sin omega)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmPoint {
    pub x: f64,
    pub y: f64,
    pub omega: f64,
}

impl SmPoint {
    pub fn new(x: f64, y: f64, omega: f64) -> Self {
        SmPoint { x, y, omega }
    }

    /// Flip the fiber direction, v -> -v.
    pub fn reversed(&self) -> SmPoint {
        SmPoint {
            x: self.x,
            y: self.y,
            omega: self.omega + std::f64::consts::PI,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Chart {
    Torus {
        lx: f64,
        ly: f64,
        n: usize,
    },
    HalfPlane {
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
    },
}

impl Chart {
    pub fn is_torus(&self) -> bool {
        matches!(self, Chart::Torus { .. })
    }
}

#[derive(Debug, Clone)]
pub struct Surface {
    pub chart: Chart,
    /// Analytic conformal factor when one is available (always on the
    /// half-plane, optionally on the torus). Orbit integration prefers it.
    pub phi_expr: Option<Expr>,
    phi: ScalarField,
    phi_x: ScalarField,
    phi_y: ScalarField,
    e_phi: ScalarField,
    e_neg_phi: ScalarField,
    e_2phi: ScalarField,
    e_neg_2phi: ScalarField,
    curvature: ScalarField,
}

impl Surface {
    /// Torus with analytic conformal factor; the canonical field
    /// representation is the spectral grid sampled from it.
    pub fn torus(lx: f64, ly: f64, n: usize, phi: Expr) -> Surface {
        let chart = Chart::Torus { lx, ly, n };
        let sample = |e: &Expr| {
            ScalarField::Grid(GridField::from_fn(n, n, lx, ly, |x, y| {
                Complex64::new(e.eval(x, y), 0.0)
            }))
        };
        let phi_f = sample(&phi);
        Surface::build(chart, Some(phi.clone()), phi_f)
    }

    pub fn flat_torus(lx: f64, ly: f64, n: usize) -> Surface {
        Surface::torus(lx, ly, n, Expr::zero())
    }

    /// Torus with grid-sampled conformal factor (no closed form).
    pub fn torus_from_grid(lx: f64, ly: f64, n: usize, values: &[f64]) -> Result<Surface> {
        if values.len() != n * n {
            return Err(ThermoError::Config(format!(
                "phi grid has {} values, expected {}",
                values.len(),
                n * n
            )));
        }
        let chart = Chart::Torus { lx, ly, n };
        let mut g = GridField::zeros(n, n, lx, ly);
        for (dst, v) in g.data.iter_mut().zip(values) {
            *dst = Complex64::new(*v, 0.0);
        }
        Ok(Surface::build(chart, None, ScalarField::Grid(g)))
    }

    /// Upper half-plane chart with `phi = -ln y`, so `K = -1` identically.
    pub fn hyperbolic_halfplane() -> Surface {
        Surface::halfplane(Expr::neg(&Expr::ln(&Expr::y())), -1e6, 1e6, 1e-30, 1e30)
    }

    pub fn halfplane(phi: Expr, x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Surface {
        let chart = Chart::HalfPlane {
            x_min,
            x_max,
            y_min,
            y_max,
        };
        let phi_f = ScalarField::from_real_expr(phi.clone());
        Surface::build(chart, Some(phi), phi_f)
    }

    fn build(chart: Chart, phi_expr: Option<Expr>, phi: ScalarField) -> Surface {
        let phi_x = phi.dx();
        let phi_y = phi.dy();
        // exp of the canonical representation: grids map pointwise, analytic
        // charts stay symbolic.
        let exp_of = |f: &ScalarField, s: f64| match f {
            ScalarField::Grid(g) => {
                ScalarField::Grid(g.map(|c| Complex64::new((s * c.re).exp(), 0.0)))
            }
            ScalarField::Expr(re, _) => {
                ScalarField::from_real_expr(Expr::exp(&Expr::scale(re, s)))
            }
        };
        let e_phi = exp_of(&phi, 1.0);
        let e_neg_phi = exp_of(&phi, -1.0);
        let e_2phi = exp_of(&phi, 2.0);
        let e_neg_2phi = exp_of(&phi, -2.0);
        let lap = phi_x.dx().add(&phi_y.dy());
        let curvature = e_neg_2phi.mul(&lap).scale(Complex64::new(-1.0, 0.0));
        Surface {
            chart,
            phi_expr,
            phi,
            phi_x,
            phi_y,
            e_phi,
            e_neg_phi,
            e_2phi,
            e_neg_2phi,
            curvature,
        }
    }

    pub fn phi(&self) -> &ScalarField {
        &self.phi
    }
    pub fn phi_x(&self) -> &ScalarField {
        &self.phi_x
    }
    pub fn phi_y(&self) -> &ScalarField {
        &self.phi_y
    }
    pub fn e_phi(&self) -> &ScalarField {
        &self.e_phi
    }
    pub fn e_neg_phi(&self) -> &ScalarField {
        &self.e_neg_phi
    }
    pub fn e_2phi(&self) -> &ScalarField {
        &self.e_2phi
    }
    pub fn e_neg_2phi(&self) -> &ScalarField {
        &self.e_neg_2phi
    }
    pub fn curvature_field(&self) -> &ScalarField {
        &self.curvature
    }

    /// Gaussian curvature `K = -e^{-2 phi} (phi_xx + phi_yy)` at a point.
    pub fn gaussian_curvature(&self, x: f64, y: f64) -> f64 {
        self.curvature.eval(x, y).re
    }

    /// Metric norm of a coordinate tangent vector at (x, y).
    pub fn metric_norm(&self, x: f64, y: f64, v: [f64; 2]) -> f64 {
        let e2 = self.e_2phi.eval(x, y).re;
        (e2 * (v[0] * v[0] + v[1] * v[1])).sqrt()
    }

    /// The rotation by pi/2: {v, iv} is oriented orthonormal for unit v.
    /// In isothermal coordinates this is the coordinate rotation.
    pub fn rotate90(&self, _x: f64, _y: f64, v: [f64; 2]) -> [f64; 2] {
        [-v[1], v[0]]
    }

    /// Unit vector of fiber angle omega, in coordinate components.
    pub fn unit_vector(&self, x: f64, y: f64, omega: f64) -> [f64; 2] {
        let s = self.e_neg_phi.eval(x, y).re;
        [s * omega.cos(), s * omega.sin()]
    }

    /// Wrap chart coordinates back into the fundamental domain (torus only).
    pub fn wrap(&self, p: SmPoint) -> SmPoint {
        match self.chart {
            Chart::Torus { lx, ly, .. } => SmPoint {
                x: p.x.rem_euclid(lx),
                y: p.y.rem_euclid(ly),
                omega: p.omega.rem_euclid(std::f64::consts::TAU),
            },
            Chart::HalfPlane { .. } => p,
        }
    }

    pub fn in_chart(&self, p: &SmPoint) -> bool {
        match self.chart {
            Chart::Torus { .. } => true,
            Chart::HalfPlane {
                x_min,
                x_max,
                y_min,
                y_max,
            } => p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max,
        }
    }

    /// Chart distance on SM modulo the periods, used for closure defects.
    pub fn sm_distance(&self, a: &SmPoint, b: &SmPoint) -> f64 {
        let wrap_diff = |d: f64, l: f64| {
            let r = d.rem_euclid(l);
            r.min(l - r)
        };
        let (dx, dy) = match self.chart {
            Chart::Torus { lx, ly, .. } => (wrap_diff(a.x - b.x, lx), wrap_diff(a.y - b.y, ly)),
            Chart::HalfPlane { .. } => (a.x - b.x, a.y - b.y),
        };
        let dw = wrap_diff(a.omega - b.omega, std::f64::consts::TAU);
        (dx * dx + dy * dy + dw * dw).sqrt()
    }

    /// Lattice of the canonical grid (torus charts).
    pub fn grid_shape(&self) -> Option<(usize, f64, f64)> {
        match self.chart {
            Chart::Torus { lx, ly, n } => Some((n, lx, ly)),
            Chart::HalfPlane { .. } => None,
        }
    }
}

/// Thermostat data: magnetic part `f` and stream function `g` generating
/// `e = i grad g`, so that `lambda(x, v) = f(x) + <e(x), iv>`.
#[derive(Debug, Clone)]
pub struct ThermostatParams {
    pub f: ScalarField,
    pub stream: ScalarField,
    pub f_expr: Option<Expr>,
    pub stream_expr: Option<Expr>,
}

impl ThermostatParams {
    pub fn geodesic() -> ThermostatParams {
        ThermostatParams::from_exprs(Expr::zero(), Expr::zero(), None)
    }

    /// Pure Gaussian thermostat: `f = 0`.
    pub fn pure(stream: Expr, surface: Option<&Surface>) -> ThermostatParams {
        ThermostatParams::from_exprs(Expr::zero(), stream, surface)
    }

    /// Magnetic flow: `e = 0`.
    pub fn magnetic(f: Expr, surface: Option<&Surface>) -> ThermostatParams {
        ThermostatParams::from_exprs(f, Expr::zero(), surface)
    }

    /// Build from analytic data; when a torus surface is supplied the fields
    /// are also sampled onto its canonical grid.
    pub fn from_exprs(f: Expr, stream: Expr, surface: Option<&Surface>) -> ThermostatParams {
        let to_field = |e: &Expr| match surface.and_then(|s| s.grid_shape()) {
            Some((n, lx, ly)) => ScalarField::Grid(GridField::from_fn(n, n, lx, ly, |x, y| {
                Complex64::new(e.eval(x, y), 0.0)
            })),
            None => ScalarField::from_real_expr(e.clone()),
        };
        ThermostatParams {
            f: to_field(&f),
            stream: to_field(&stream),
            f_expr: Some(f),
            stream_expr: Some(stream),
        }
    }

    /// Build from already-sampled fields (no closed form available).
    pub fn from_fields(f: ScalarField, stream: ScalarField) -> ThermostatParams {
        ThermostatParams {
            f,
            stream,
            f_expr: None,
            stream_expr: None,
        }
    }

    pub fn is_pure(&self) -> bool {
        match &self.f_expr {
            Some(e) => e.is_zero(),
            None => self.f.max_abs_on_grid() == 0.0,
        }
    }

    /// Coordinate components of `e = i grad g = e^{-2 phi} (-g_y, g_x)`.
    pub fn e_field(&self, surface: &Surface) -> (ScalarField, ScalarField) {
        let gx = self.stream.dx();
        let gy = self.stream.dy();
        let m2 = surface.e_neg_2phi();
        let e1 = m2.mul(&gy).scale(Complex64::new(-1.0, 0.0));
        let e2 = m2.mul(&gx);
        (e1, e2)
    }
}

/// Metric divergence of a coordinate vector field `w = (w1, w2)`:
/// `e^{-2 phi} [ d_x (e^{2 phi} w1) + d_y (e^{2 phi} w2) ]`.
pub fn metric_divergence(surface: &Surface, w1: &ScalarField, w2: &ScalarField) -> ScalarField {
    let e2 = surface.e_2phi();
    let a = e2.mul(w1).dx();
    let b = e2.mul(w2).dy();
    surface.e_neg_2phi().mul(&a.add(&b))
}

/// Pointwise evaluator for a scalar on M with chart derivatives to second
/// order; precomputes interpolants so orbit integration stays cheap.
#[derive(Debug, Clone)]
pub struct PointEval {
    parts: [PointPart; 6],
}

#[derive(Debug, Clone)]
enum PointPart {
    Expr(Expr),
    Interp(Interpolant),
}

impl PointPart {
    fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            PointPart::Expr(e) => e.eval(x, y),
            PointPart::Interp(it) => it.eval(x, y).re,
        }
    }
}

impl PointEval {
    /// Build from an analytic expression (preferred) or a grid field.
    pub fn new(expr: Option<&Expr>, field: &ScalarField) -> PointEval {
        match (expr, field) {
            (Some(e), _) => {
                let ex = e.diff(Var::X);
                let ey = e.diff(Var::Y);
                PointEval {
                    parts: [
                        PointPart::Expr(e.clone()),
                        PointPart::Expr(ex.clone()),
                        PointPart::Expr(ey.clone()),
                        PointPart::Expr(ex.diff(Var::X)),
                        PointPart::Expr(ex.diff(Var::Y)),
                        PointPart::Expr(ey.diff(Var::Y)),
                    ],
                }
            }
            (None, ScalarField::Grid(g)) => {
                let gx = g.dx();
                let gy = g.dy();
                PointEval {
                    parts: [
                        PointPart::Interp(Interpolant::new(g)),
                        PointPart::Interp(Interpolant::new(&gx)),
                        PointPart::Interp(Interpolant::new(&gy)),
                        PointPart::Interp(Interpolant::new(&gx.dx())),
                        PointPart::Interp(Interpolant::new(&gx.dy())),
                        PointPart::Interp(Interpolant::new(&gy.dy())),
                    ],
                }
            }
            (None, ScalarField::Expr(re, _)) => PointEval::new(Some(&re.clone()), field),
        }
    }

    pub fn v(&self, x: f64, y: f64) -> f64 {
        self.parts[0].eval(x, y)
    }
    pub fn dx(&self, x: f64, y: f64) -> f64 {
        self.parts[1].eval(x, y)
    }
    pub fn dy(&self, x: f64, y: f64) -> f64 {
        self.parts[2].eval(x, y)
    }
    pub fn dxx(&self, x: f64, y: f64) -> f64 {
        self.parts[3].eval(x, y)
    }
    pub fn dxy(&self, x: f64, y: f64) -> f64 {
        self.parts[4].eval(x, y)
    }
    pub fn dyy(&self, x: f64, y: f64) -> f64 {
        self.parts[5].eval(x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn flat_torus_curvature_is_zero() {
        let s = Surface::flat_torus(TAU, TAU, 16);
        assert_eq!(s.gaussian_curvature(1.0, 2.0), 0.0);
    }

    #[test]
    fn halfplane_curvature_is_minus_one() {
        let s = Surface::hyperbolic_halfplane();
        for &(x, y) in &[(0.0, 1.0), (3.0, 0.2), (-2.0, 7.5)] {
            assert!((s.gaussian_curvature(x, y) + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rotate90_is_an_involution_up_to_sign() {
        let s = Surface::flat_torus(TAU, TAU, 8);
        let v = [0.3, -1.7];
        let iv = s.rotate90(0.0, 0.0, v);
        let iiv = s.rotate90(0.0, 0.0, iv);
        assert_eq!(iiv, [-v[0], -v[1]]);
    }

    #[test]
    fn unit_vector_has_metric_norm_one() {
        let s = Surface::torus(TAU, TAU, 32, Expr::constant(0.3));
        let v = s.unit_vector(1.0, 2.0, 0.9);
        assert!((s.metric_norm(1.0, 2.0, v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stream_cosx_gives_expected_field() {
        // g = cos x on the flat torus: e = (-g_y, g_x) = (0, -sin x).
        let s = Surface::flat_torus(TAU, TAU, 32);
        let p = ThermostatParams::pure(Expr::cos(&Expr::x()), Some(&s));
        let (e1, e2) = p.e_field(&s);
        for ix in 0..32 {
            let x = TAU * ix as f64 / 32.0;
            assert!(e1.eval(x, 0.0).norm() < 1e-12);
            assert!((e2.eval(x, 0.0).re + x.sin()).abs() < 1e-12);
        }
        let div = metric_divergence(&s, &e1, &e2);
        assert!(div.max_abs_on_grid() < 1e-12);
    }
}
