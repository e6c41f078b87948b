//! Frame operations on SM and the commutator residual suites.
//!
//! The basic relations `[V, X] = H`, `[H, V] = X`, `[X, H] = K V` and their
//! modified counterparts for `{F, H_c, V}` are turned into residual fields
//! and sampled over a test battery; they are the acceptance oracle for the
//! coordinate frame formulas in `smfield`.

use std::rc::Rc;

use num_complex::Complex64;

use crate::error::Result;
use crate::field::ScalarField;
use crate::geometry::{Chart, SmPoint, Surface, ThermostatParams};
use crate::smfield::{lambda_field, SmField};

/// Frame field selector for directional derivatives.
#[derive(Debug, Clone)]
pub enum FrameChoice<'a> {
    X,
    H,
    V,
    /// `F = X + lambda V` with `lambda` from the given thermostat.
    F(&'a SmField),
    /// `H_c = H + c V` for a chosen `c`.
    Hc(&'a SmField),
}

/// Directional derivative of `u` along the chosen frame field, at `p`.
pub fn apply_frame(field: &FrameChoice, u: &SmField, p: &SmPoint) -> Result<f64> {
    let w = match field {
        FrameChoice::X => u.x_op()?,
        FrameChoice::H => u.h_op()?,
        FrameChoice::V => u.v_op(),
        FrameChoice::F(lambda) => u.f_op(lambda)?,
        FrameChoice::Hc(c) => u.hc_op(c)?,
    };
    Ok(w.eval(p).re)
}

/// One named residual per identity, with the max taken over a sample set.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub entries: Vec<(String, f64)>,
}

impl ResidualReport {
    pub fn max(&self) -> f64 {
        self.entries.iter().map(|(_, r)| *r).fold(0.0, f64::max)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| *r)
    }
}

/// Sample points covering the chart and several fiber angles.
pub fn sample_points(surface: &Surface) -> Vec<SmPoint> {
    let omegas = [0.0, 0.7, 2.1, 4.4, 5.9];
    let mut pts = Vec::new();
    match surface.chart {
        Chart::Torus { lx, ly, n } => {
            let stride = (n / 8).max(1);
            for iy in (0..n).step_by(stride) {
                for ix in (0..n).step_by(stride) {
                    let x = ix as f64 * lx / n as f64;
                    let y = iy as f64 * ly / n as f64;
                    for &w in &omegas {
                        pts.push(SmPoint::new(x, y, w));
                    }
                }
            }
        }
        Chart::HalfPlane { .. } => {
            for &(x, y) in &[
                (0.0, 1.0),
                (0.5, 0.7),
                (-1.3, 2.2),
                (2.0, 0.4),
                (-0.2, 3.1),
                (1.1, 1.6),
            ] {
                for &w in &omegas {
                    pts.push(SmPoint::new(x, y, w));
                }
            }
        }
    }
    pts
}

fn max_at(field: &SmField, pts: &[SmPoint]) -> f64 {
    pts.iter()
        .map(|p| field.eval(p).norm())
        .fold(0.0, f64::max)
}

/// Test fields spanning vertical degrees 0..=3 with nonconstant horizontal
/// parts, matched to the chart type.
pub fn standard_battery(surface: &Rc<Surface>) -> Vec<SmField> {
    use crate::expr::Expr;
    let mut fields = Vec::new();
    match surface.chart {
        Chart::Torus { lx, ly, n } => {
            let coeffs = [
                |x: f64, y: f64| Complex64::new(x.cos(), 0.3 * y.sin()),
                |x: f64, y: f64| Complex64::new((x).sin() * (y).cos(), 0.2 * (2.0 * x).cos()),
                |x: f64, y: f64| Complex64::new(0.5 * (x + y).cos(), (y).sin()),
            ];
            for k in 0..=3 {
                let f = coeffs[k as usize % coeffs.len()];
                let g = ScalarField::Grid(crate::grid::GridField::from_fn(n, n, lx, ly, f));
                fields.push(SmField::real_harmonic(surface, k, g));
            }
        }
        Chart::HalfPlane { .. } => {
            let exprs = [
                (Expr::mul(&Expr::sin(&Expr::x()), &Expr::y()), Expr::zero()),
                (
                    Expr::cos(&Expr::x()),
                    Expr::mul(&Expr::y(), &Expr::y()),
                ),
                (Expr::add(&Expr::y(), &Expr::cos(&Expr::x())), Expr::sin(&Expr::x())),
            ];
            for k in 0..=3 {
                let (re, im) = exprs[k as usize % exprs.len()].clone();
                let g = ScalarField::from_complex_expr(re, im);
                fields.push(SmField::real_harmonic(surface, k, g));
            }
        }
    }
    fields
}

/// Residuals of the three structure relations of `{X, H, V}`.
pub fn verify_commutators(surface: &Rc<Surface>, battery: &[SmField]) -> Result<ResidualReport> {
    let pts = sample_points(surface);
    let kfield = SmField::scalar(surface, surface.curvature_field().clone());
    let mut r_vx: f64 = 0.0;
    let mut r_hv: f64 = 0.0;
    let mut r_xh: f64 = 0.0;
    for u in battery {
        // [V, X] u - H u
        let a = u.x_op()?.v_op().sub(&u.v_op().x_op()?).sub(&u.h_op()?);
        r_vx = r_vx.max(max_at(&a, &pts));
        // [H, V] u - X u
        let b = u.v_op().h_op()?.sub(&u.h_op()?.v_op()).sub(&u.x_op()?);
        r_hv = r_hv.max(max_at(&b, &pts));
        // [X, H] u - K V u
        let c = u
            .h_op()?
            .x_op()?
            .sub(&u.x_op()?.h_op()?)
            .sub(&kfield.mul(&u.v_op())?);
        r_xh = r_xh.max(max_at(&c, &pts));
    }
    Ok(ResidualReport {
        entries: vec![
            ("[V,X]-H".into(), r_vx),
            ("[H,V]-X".into(), r_hv),
            ("[X,H]-KV".into(), r_xh),
        ],
    })
}

/// Residuals of the modified relations for `{F, H_c, V}`:
///
/// ```text
/// [V, F]   = H_c + (V(lambda) - c) V
/// [V, H_c] = -F + (V(c) + lambda) V
/// [F, H_c] = -lambda F - c H_c + (F(c) + c^2 + Kcheck) V
/// ```
pub fn verify_modified_commutators(
    surface: &Rc<Surface>,
    params: &ThermostatParams,
    c: &SmField,
    battery: &[SmField],
) -> Result<ResidualReport> {
    let pts = sample_points(surface);
    let lambda = lambda_field(surface, params);
    let kcheck = kcheck_field(surface, &lambda, c)?;
    let mut r1: f64 = 0.0;
    let mut r2: f64 = 0.0;
    let mut r3: f64 = 0.0;
    for u in battery {
        let fu = u.f_op(&lambda)?;
        let hcu = u.hc_op(c)?;
        let vu = u.v_op();

        // [V, F] u - H_c u - (V(lambda) - c) V u
        let a = fu
            .v_op()
            .sub(&vu.f_op(&lambda)?)
            .sub(&hcu)
            .sub(&lambda.v_op().sub(c).mul(&vu)?);
        r1 = r1.max(max_at(&a, &pts));

        // [V, H_c] u + F u - (V(c) + lambda) V u
        let b = hcu
            .v_op()
            .sub(&vu.hc_op(c)?)
            .add(&fu)
            .sub(&c.v_op().add(&lambda).mul(&vu)?);
        r2 = r2.max(max_at(&b, &pts));

        // [F, H_c] u + lambda F u + c H_c u - (F(c) + c^2 + Kcheck) V u
        let fc = c.f_op(&lambda)?;
        let curv = fc.add(&c.mul(c)?).add(&kcheck);
        let d = hcu
            .f_op(&lambda)?
            .sub(&fu.hc_op(c)?)
            .add(&lambda.mul(&fu)?)
            .add(&c.mul(&hcu)?)
            .sub(&curv.mul(&vu)?);
        r3 = r3.max(max_at(&d, &pts));
    }
    Ok(ResidualReport {
        entries: vec![
            ("[V,F]".into(), r1),
            ("[V,Hc]".into(), r2),
            ("[F,Hc]".into(), r3),
        ],
    })
}

/// The curvature-type function `Kcheck = K - H_c(lambda) + lambda^2`.
pub fn kcheck_field(surface: &Rc<Surface>, lambda: &SmField, c: &SmField) -> Result<SmField> {
    let k = SmField::scalar(surface, surface.curvature_field().clone());
    Ok(k.sub(&lambda.hc_op(c)?).add(&lambda.mul(lambda)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use std::f64::consts::TAU;

    #[test]
    fn commutators_on_flat_torus() {
        let s = Rc::new(Surface::flat_torus(TAU, TAU, 32));
        let battery = standard_battery(&s);
        let rep = verify_commutators(&s, &battery).unwrap();
        assert!(rep.max() < 1e-10, "residuals: {:?}", rep.entries);
    }

    #[test]
    fn commutators_on_curved_torus() {
        let phi = Expr::scale(
            &Expr::mul(&Expr::cos(&Expr::x()), &Expr::cos(&Expr::y())),
            0.1,
        );
        let s = Rc::new(Surface::torus(TAU, TAU, 64, phi));
        let battery = standard_battery(&s);
        let rep = verify_commutators(&s, &battery).unwrap();
        assert!(rep.max() < 1e-10, "residuals: {:?}", rep.entries);
    }

    #[test]
    fn commutators_on_hyperbolic_halfplane() {
        let s = Rc::new(Surface::hyperbolic_halfplane());
        let battery = standard_battery(&s);
        let rep = verify_commutators(&s, &battery).unwrap();
        assert!(rep.max() < 1e-10, "residuals: {:?}", rep.entries);
    }

    #[test]
    fn modified_commutators_reduce_to_basic_for_zero_lambda_c() {
        let s = Rc::new(Surface::flat_torus(TAU, TAU, 32));
        let params = ThermostatParams::geodesic();
        let c = SmField::zero(&s, 0);
        let battery = standard_battery(&s);
        let rep = verify_modified_commutators(&s, &params, &c, &battery).unwrap();
        assert!(rep.max() < 1e-10, "residuals: {:?}", rep.entries);
    }
}
