//! Pestov-type energy identities: the pointwise identity, its integrated
//! form, the modified (Sharafutdinov–Uhlmann style) identity for the
//! vertically projected function `phi = V^2 u + u`, and the `c = -theta`
//! specialization.
//!
//! The pointwise identity verified here is
//!
//! ```text
//! 2 H_c u . VFu = (Fu)^2 + (H_c u)^2 - (F(c) + c^2 + Kcheck)(Vu)^2
//!                 + F(H_c u . Vu) + V(lambda) H_c u . Vu
//!                 - H_c(Fu . Vu)  - V(c) Fu . Vu
//!                 + V(H_c u . Fu)
//! ```
//!
//! with `Kcheck = K - H_c(lambda) + lambda^2`; the last five terms integrate
//! to zero against the Liouville measure, which gives the integrated form.

use std::rc::Rc;

use num_complex::Complex64;

use crate::error::{Result, ThermoError};
use crate::frame::kcheck_field;
use crate::geometry::{metric_divergence, SmPoint, Surface, ThermostatParams};
use crate::report::IdentityReport;
use crate::smfield::{lambda_field, theta_field, SmField};

/// Max modulus a premise residual may have before the guard trips.
pub const PREMISE_TOL: f64 = 1e-10;

fn two() -> Complex64 {
    Complex64::new(2.0, 0.0)
}

/// All fields entering the pointwise identity, built once per (u, lambda, c).
pub struct PestovTerms {
    pub left: SmField,
    /// The eight right-hand terms, in the order of the module doc.
    pub rhs: Vec<(String, SmField)>,
    /// `w1 = H_c u . Vu`, `w2 = Fu . Vu`, `w3 = H_c u . Fu`, reused by the
    /// integrated form's vanishing-term audit.
    pub w1: SmField,
    pub w2: SmField,
    pub w3: SmField,
    pub lambda: SmField,
    pub fu: SmField,
    pub hcu: SmField,
    pub vu: SmField,
    /// Curvature factor `F(c) + c^2 + Kcheck`.
    pub curv: SmField,
}

pub fn pestov_terms(
    surface: &Rc<Surface>,
    params: &ThermostatParams,
    u: &SmField,
    c: &SmField,
) -> Result<PestovTerms> {
    let lambda = lambda_field(surface, params);
    let fu = u.f_op(&lambda)?;
    let hcu = u.hc_op(c)?;
    let vu = u.v_op();
    let vfu = fu.v_op();
    let kcheck = kcheck_field(surface, &lambda, c)?;
    let curv = c.f_op(&lambda)?.add(&c.mul(c)?).add(&kcheck);

    let left = hcu.mul(&vfu)?.scale(two());
    let w1 = hcu.mul(&vu)?;
    let w2 = fu.mul(&vu)?;
    let w3 = hcu.mul(&fu)?;
    let minus = Complex64::new(-1.0, 0.0);
    let rhs = vec![
        ("(Fu)^2".to_string(), fu.mul(&fu)?),
        ("(Hcu)^2".to_string(), hcu.mul(&hcu)?),
        (
            "-curv (Vu)^2".to_string(),
            curv.mul(&vu.mul(&vu)?)?.scale(minus),
        ),
        ("F(Hcu.Vu)".to_string(), w1.f_op(&lambda)?),
        ("V(lam) Hcu.Vu".to_string(), lambda.v_op().mul(&w1)?),
        ("-Hc(Fu.Vu)".to_string(), w2.hc_op(c)?.scale(minus)),
        ("-V(c) Fu.Vu".to_string(), c.v_op().mul(&w2)?.scale(minus)),
        ("V(Hcu.Fu)".to_string(), w3.v_op()),
    ];
    Ok(PestovTerms {
        left,
        rhs,
        w1,
        w2,
        w3,
        lambda,
        fu,
        hcu,
        vu,
        curv,
    })
}

impl PestovTerms {
    /// `left - sum(rhs)` as a field; identically zero in exact arithmetic.
    pub fn residual_field(&self) -> SmField {
        let mut acc = self.left.clone();
        for (_, t) in &self.rhs {
            acc = acc.sub(t);
        }
        acc
    }
}

/// Evaluate the eight-term identity at a single point.
pub fn pointwise_pestov(
    surface: &Rc<Surface>,
    params: &ThermostatParams,
    u: &SmField,
    c: &SmField,
    p: &SmPoint,
) -> Result<IdentityReport> {
    let t = pestov_terms(surface, params, u, c)?;
    let left = t.left.eval(p).re;
    let values: Vec<(String, f64)> = t
        .rhs
        .iter()
        .map(|(name, field)| (name.clone(), field.eval(p).re))
        .collect();
    let right = values.iter().map(|(_, v)| v).sum();
    let mut report = IdentityReport::new("pestov-pointwise", left, right);
    for (name, v) in values {
        report = report.term(name, v);
    }
    Ok(report)
}

/// Max pointwise residual over the standard sample set; the batch form used
/// by the randomized battery.
pub fn pointwise_pestov_max(
    surface: &Rc<Surface>,
    params: &ThermostatParams,
    u: &SmField,
    c: &SmField,
) -> Result<f64> {
    let t = pestov_terms(surface, params, u, c)?;
    Ok(t.residual_field().max_mode_abs())
}

/// Integrated identity
/// `2 int Hcu.VFu dmu = |Fu|^2 + |Hcu|^2 - int (F(c)+c^2+Kcheck)(Vu)^2 dmu`,
/// with the five divergence terms audited individually.
pub fn integrated_pestov(
    surface: &Rc<Surface>,
    params: &ThermostatParams,
    u: &SmField,
    c: &SmField,
) -> Result<IdentityReport> {
    if !surface.chart.is_torus() {
        return Err(ThermoError::NonCompactChart);
    }
    let t = pestov_terms(surface, params, u, c)?;
    let left = t.left.liouville_integral()?;
    let fu2 = t.fu.mul(&t.fu)?.liouville_integral()?;
    let hcu2 = t.hcu.mul(&t.hcu)?.liouville_integral()?;
    let curv_term = t.curv.mul(&t.vu.mul(&t.vu)?)?.liouville_integral()?;
    let right = fu2 + hcu2 - curv_term;

    // The divergence terms, regrouped so each integrates to zero on its own:
    // F(w1) + V(lam) w1 = X(w1) + V(lam w1);  Hc(w2) + V(c) w2 = H(w2) + V(c w2).
    let vanish = [
        ("int X(w1)", t.w1.x_op()?.liouville_integral()?),
        (
            "int V(lam w1)",
            t.lambda.mul(&t.w1)?.v_op().liouville_integral()?,
        ),
        ("int H(w2)", t.w2.h_op()?.liouville_integral()?),
        ("int V(c w2)", c.mul(&t.w2)?.v_op().liouville_integral()?),
        ("int V(w3)", t.w3.v_op().liouville_integral()?),
    ];
    let mut report = IdentityReport::new("pestov-integrated", left, right)
        .term("|Fu|^2", fu2)
        .term("|Hcu|^2", hcu2)
        .term("int curv (Vu)^2", curv_term);
    for (name, v) in vanish {
        report = report.term(name, v);
    }
    Ok(report)
}

/// `V^3 p + 4 V p` — zero exactly when p carries vertical modes {0, +-2}.
pub fn vertical_ode_field(p: &SmField) -> SmField {
    p.v_op()
        .v_op()
        .v_op()
        .add(&p.v_op().scale(Complex64::new(4.0, 0.0)))
}

pub fn vertical_ode_residual(p: &SmField) -> f64 {
    vertical_ode_field(p).max_mode_abs()
}

pub fn vertical_ode_check(p: &SmField) -> bool {
    vertical_ode_residual(p) < PREMISE_TOL
}

/// The curvature function `R_c = F(theta + c) + (theta + 2c)(theta + c) + K`
/// as an SM field.
pub fn rc_field(
    surface: &Rc<Surface>,
    params: &ThermostatParams,
    c: &SmField,
) -> Result<SmField> {
    let lambda = lambda_field(surface, params);
    let theta = theta_field(surface, params);
    let tc = theta.add(c);
    let t2c = theta.add(&c.scale(two()));
    let k = SmField::scalar(surface, surface.curvature_field().clone());
    Ok(tc.f_op(&lambda)?.add(&t2c.mul(&tc)?).add(&k))
}

/// Modified integrated identity for `phi = V^2 u + u` on a pure thermostat:
///
/// ```text
/// |F phi|^2 + |Hc phi|^2 + |2 Hc phi - (theta + c) V phi|^2
///   = int R_c (V phi)^2 dmu + 2 int Hc phi . r dmu,
/// ```
///
/// where `r = V^3 p + 4 V p` with `p = Fu` is the premise defect: it vanishes
/// exactly when `Fu` is the restriction of an even 2-tensor, recovering the
/// clean identity. With `strict` the defect must vanish; otherwise the
/// correction term is carried along, which verifies the derivation for
/// arbitrary u. The intermediate pointwise relation
/// `V F phi = -2 Hc phi + 2 (theta + c) V phi + r` is always checked and its
/// max residual reported.
pub fn uhlmann_pestov(
    surface: &Rc<Surface>,
    params: &ThermostatParams,
    u: &SmField,
    c: &SmField,
    strict: bool,
) -> Result<IdentityReport> {
    if !surface.chart.is_torus() {
        return Err(ThermoError::NonCompactChart);
    }
    if !params.is_pure() {
        return Err(ThermoError::Incompatible(
            "modified identity needs a pure thermostat (f = 0)".into(),
        ));
    }
    let lambda = lambda_field(surface, params);
    let theta = theta_field(surface, params);

    let p = u.f_op(&lambda)?;
    let r = vertical_ode_field(&p);
    let premise = r.max_mode_abs();
    if strict && premise > PREMISE_TOL {
        return Err(ThermoError::PremiseViolation(premise));
    }

    let phi = u.v_op().v_op().add(u);
    let fphi = phi.f_op(&lambda)?;
    let hcphi = phi.hc_op(c)?;
    let vphi = phi.v_op();

    // Pointwise skeleton: V F phi + 2 Hc phi - 2 (theta + c) V phi - r = 0.
    let eq52 = fphi
        .v_op()
        .add(&hcphi.scale(two()))
        .sub(&theta.add(c).mul(&vphi)?.scale(two()))
        .sub(&r)
        .max_mode_abs();

    let a = fphi.mul(&fphi)?.liouville_integral()?;
    let b = hcphi.mul(&hcphi)?.liouville_integral()?;
    let combo = hcphi.scale(two()).sub(&theta.add(c).mul(&vphi)?);
    let d = combo.mul(&combo)?.liouville_integral()?;
    let rc = rc_field(surface, params, c)?;
    let curv_int = rc.mul(&vphi.mul(&vphi)?)?.liouville_integral()?;
    let corr = hcphi.mul(&r)?.scale(two()).liouville_integral()?;

    Ok(IdentityReport::new("uhlmann", a + b + d, curv_int + corr)
        .term("|Fphi|^2", a)
        .term("|Hcphi|^2", b)
        .term("|2Hcphi-(theta+c)Vphi|^2", d)
        .term("int Rc (Vphi)^2", curv_int)
        .term("2 int Hcphi.r", corr)
        .term("eq52-max-residual", eq52)
        .term("premise-residual", premise))
}

/// The `c = -theta` specialization:
/// `-5 |Hc phi|^2 = |F phi|^2 - int K (V phi)^2 dmu - 2 int Hc phi . r dmu`,
/// together with the pointwise reduction `F(c) + c^2 + Kcheck = K - div e`.
pub fn remark56_identity(
    surface: &Rc<Surface>,
    params: &ThermostatParams,
    u: &SmField,
    strict: bool,
) -> Result<IdentityReport> {
    if !surface.chart.is_torus() {
        return Err(ThermoError::NonCompactChart);
    }
    if !params.is_pure() {
        return Err(ThermoError::Incompatible(
            "the c = -theta identity needs a pure thermostat".into(),
        ));
    }
    let lambda = lambda_field(surface, params);
    let theta = theta_field(surface, params);
    let c = theta.scale(Complex64::new(-1.0, 0.0));

    // Curvature reduction: F(c) + c^2 + Kcheck = K - div e.
    let kcheck = kcheck_field(surface, &lambda, &c)?;
    let curv = c.f_op(&lambda)?.add(&c.mul(&c)?).add(&kcheck);
    let (e1, e2) = params.e_field(surface);
    let dive = metric_divergence(surface, &e1, &e2);
    let k_minus_div = SmField::scalar(
        surface,
        surface.curvature_field().sub(&dive),
    );
    let reduction = curv.sub(&k_minus_div).max_mode_abs();

    let p = u.f_op(&lambda)?;
    let r = vertical_ode_field(&p);
    let premise = r.max_mode_abs();
    if strict && premise > PREMISE_TOL {
        return Err(ThermoError::PremiseViolation(premise));
    }

    let phi = u.v_op().v_op().add(u);
    let fphi = phi.f_op(&lambda)?;
    let hcphi = phi.hc_op(&c)?;
    let vphi = phi.v_op();

    // With theta + c = 0 the pointwise skeleton is V F phi = -2 Hc phi + r.
    let eq52 = fphi
        .v_op()
        .add(&hcphi.scale(two()))
        .sub(&r)
        .max_mode_abs();

    let a = fphi.mul(&fphi)?.liouville_integral()?;
    let b = hcphi.mul(&hcphi)?.liouville_integral()?;
    let k = SmField::scalar(surface, surface.curvature_field().clone());
    let kint = k.mul(&vphi.mul(&vphi)?)?.liouville_integral()?;
    let corr = hcphi.mul(&r)?.scale(two()).liouville_integral()?;

    Ok(IdentityReport::new("remark56", -5.0 * b, a - kint - corr)
        .term("|Fphi|^2", a)
        .term("|Hcphi|^2", b)
        .term("int K (Vphi)^2", kint)
        .term("2 int Hcphi.r", corr)
        .term("eq52-max-residual", eq52)
        .term("curvature-reduction", reduction)
        .term("premise-residual", premise))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::field::ScalarField;
    use crate::grid::GridField;
    use crate::util::{random_smfield, random_thermostat, rng};
    use std::f64::consts::TAU;

    fn torus(n: usize) -> Rc<Surface> {
        Rc::new(Surface::flat_torus(TAU, TAU, n))
    }

    fn curved(n: usize) -> Rc<Surface> {
        Rc::new(Surface::torus(
            TAU,
            TAU,
            n,
            Expr::scale(&Expr::mul(&Expr::cos(&Expr::x()), &Expr::sin(&Expr::y())), 0.1),
        ))
    }

    fn harmonic(s: &Rc<Surface>, k: i32, f: impl Fn(f64, f64) -> Complex64) -> SmField {
        let (n, lx, ly) = s.grid_shape().unwrap();
        SmField::real_harmonic(s, k, ScalarField::Grid(GridField::from_fn(n, n, lx, ly, |x, y| f(x, y))))
    }

    #[test]
    fn constant_u_gives_all_zero_terms() {
        let s = torus(32);
        let params = ThermostatParams::geodesic();
        let u = SmField::constant(&s, 3.0);
        let c = SmField::zero(&s, 0);
        let rep = pointwise_pestov(&s, &params, &u, &c, &SmPoint::new(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(rep.left, 0.0);
        for t in &rep.terms {
            assert_eq!(t.value, 0.0, "{}", t.name);
        }
    }

    #[test]
    fn classical_pestov_on_flat_torus() {
        // u = cos x cos w, lambda = 0, c = 0.
        let s = torus(32);
        let params = ThermostatParams::geodesic();
        let u = harmonic(&s, 1, |x, _| Complex64::new(0.5 * x.cos(), 0.0));
        let c = SmField::zero(&s, 0);
        let r = pointwise_pestov_max(&s, &params, &u, &c).unwrap();
        assert!(r < 1e-10, "residual {r}");
    }

    #[test]
    fn randomized_pointwise_battery() {
        let s = curved(32);
        let mut rng = rng(42);
        for draw in 0..25 {
            let params = random_thermostat(&s, 2, 0.4, &mut rng);
            let u = random_smfield(&s, 3, 2, 1.0, &mut rng);
            let c = random_smfield(&s, 2, 2, 0.5, &mut rng);
            let r = pointwise_pestov_max(&s, &params, &u, &c).unwrap();
            assert!(r < 1e-8, "draw {draw}: residual {r}");
        }
    }

    #[test]
    fn integrated_pestov_simple_and_thermostat() {
        let s = torus(64);
        // lambda = 0, c = 0, u = sin y sin w.
        let u = harmonic(&s, 1, |_, y| Complex64::new(0.0, -0.5 * y.sin()));
        let c0 = SmField::zero(&s, 0);
        let rep = integrated_pestov(&s, &ThermostatParams::geodesic(), &u, &c0).unwrap();
        assert!(rep.relative_residual < 1e-9, "{rep:?}");

        // f = 0.3 cos x with stream 0.2 sin y, c = 0.1 cos w.
        let params = ThermostatParams::from_exprs(
            Expr::scale(&Expr::cos(&Expr::x()), 0.3),
            Expr::scale(&Expr::sin(&Expr::y()), 0.2),
            Some(&s),
        );
        let c = harmonic(&s, 1, |_, _| Complex64::new(0.05, 0.0));
        let rep = integrated_pestov(&s, &params, &u, &c).unwrap();
        assert!(rep.relative_residual < 1e-8, "{rep:?}");
        for name in [
            "int X(w1)",
            "int V(lam w1)",
            "int H(w2)",
            "int V(c w2)",
            "int V(w3)",
        ] {
            let v = rep.term_value(name).unwrap();
            assert!(v.abs() < 1e-9, "{name} = {v}");
        }
    }

    #[test]
    fn vertical_ode_mode_arithmetic() {
        let s = torus(32);
        let even = harmonic(&s, 2, |x, _| Complex64::new(x.cos(), 0.2));
        assert!(vertical_ode_check(&even));
        let odd = harmonic(&s, 1, |x, _| Complex64::new(x.sin(), 0.0));
        assert!(!vertical_ode_check(&odd));
        assert!(
            (vertical_ode_field(&odd).sub(&odd.v_op().scale(Complex64::new(3.0, 0.0))))
                .max_mode_abs()
                < 1e-12
        );
    }

    #[test]
    fn uhlmann_trivial_on_one_form_input() {
        let s = curved(32);
        let params = ThermostatParams::pure(
            Expr::scale(&Expr::mul(&Expr::sin(&Expr::x()), &Expr::cos(&Expr::y())), 0.3),
            Some(&s),
        );
        let u = harmonic(&s, 1, |x, y| Complex64::new(x.cos(), 0.4 * y.sin()));
        let c = SmField::zero(&s, 0);
        let rep = uhlmann_pestov(&s, &params, &u, &c, true).unwrap();
        assert!(rep.residual < 1e-12, "{rep:?}");
        assert!(rep.left.abs() < 1e-12);
        assert!(rep.term_value("premise-residual").unwrap() < PREMISE_TOL);
    }

    #[test]
    fn uhlmann_guard_trips_on_even_input() {
        let s = torus(32);
        let params = ThermostatParams::pure(
            Expr::scale(&Expr::sin(&Expr::x()), 0.2),
            Some(&s),
        );
        // u with vertical modes {0, 2}: p = Fu carries odd modes.
        let u = harmonic(&s, 2, |x, _| Complex64::new(x.cos(), 0.0));
        match uhlmann_pestov(&s, &params, &u, &SmField::zero(&s, 0), true) {
            Err(ThermoError::PremiseViolation(_)) => {}
            other => panic!("expected premise violation, got {other:?}"),
        }
    }

    #[test]
    fn uhlmann_corrected_holds_for_arbitrary_u() {
        let s = curved(32);
        let mut rng = rng(5);
        let params = ThermostatParams::pure(
            Expr::scale(&Expr::mul(&Expr::cos(&Expr::x()), &Expr::cos(&Expr::y())), 0.4),
            Some(&s),
        );
        for _ in 0..5 {
            let u = random_smfield(&s, 3, 2, 1.0, &mut rng);
            let c = random_smfield(&s, 1, 2, 0.3, &mut rng);
            let rep = uhlmann_pestov(&s, &params, &u, &c, false).unwrap();
            assert!(rep.relative_residual < 1e-8, "{rep:?}");
            assert!(rep.term_value("eq52-max-residual").unwrap() < 1e-8, "{rep:?}");
        }
    }

    #[test]
    fn remark56_reduction_and_identity() {
        let s = curved(32);
        let mut rng = rng(9);
        let params = ThermostatParams::pure(
            Expr::scale(&Expr::sin(&Expr::add(&Expr::x(), &Expr::y())), 0.3),
            Some(&s),
        );
        let u = random_smfield(&s, 3, 2, 1.0, &mut rng);
        let rep = remark56_identity(&s, &params, &u, false).unwrap();
        assert!(rep.term_value("curvature-reduction").unwrap() < 1e-9, "{rep:?}");
        assert!(rep.term_value("eq52-max-residual").unwrap() < 1e-8, "{rep:?}");
        assert!(rep.relative_residual < 1e-8, "{rep:?}");
    }
}
