//! Tensor pairs, the operators d and delta, the solenoidal-potential
//! decomposition, the X-ray transform over closed orbits, and the
//! unconditional mode bounds behind the key inequality.
//!
//! A pair `f = [q, sigma]` (symmetric 2-tensor plus 1-form) is identified
//! with its restriction `p(x, v) = q_x(v, v) + sigma_x(v)` on SM, which
//! occupies vertical modes {0, +-1, +-2}. The operator `d` is realized
//! through that identification: `d w` is the unique pair whose restriction
//! is `F(h + psi)`, so the dynamics and the matrix operator agree by
//! construction and `delta` is validated against the divergence identities.

use std::rc::Rc;

use num_complex::Complex64;

use crate::error::{Result, ThermoError};
use crate::field::ScalarField;
use crate::flow::{flow_endpoint, integrate_flow, FlowSystem, Trajectory};
use crate::geometry::{SmPoint, Surface, ThermostatParams};
use crate::report::IdentityReport;
use crate::smfield::{lambda_field, SmField};

/// Symmetric 2-tensor plus 1-form, in isothermal coordinate components.
#[derive(Debug, Clone)]
pub struct TensorPair {
    pub surface: Rc<Surface>,
    pub q11: ScalarField,
    pub q12: ScalarField,
    pub q22: ScalarField,
    pub s1: ScalarField,
    pub s2: ScalarField,
}

/// `w = [psi, h]`: 1-form plus function.
#[derive(Debug, Clone)]
pub struct PotentialPair {
    pub surface: Rc<Surface>,
    pub psi1: ScalarField,
    pub psi2: ScalarField,
    pub h: ScalarField,
}

impl TensorPair {
    pub fn zero(surface: &Rc<Surface>) -> TensorPair {
        let z = || match surface.grid_shape() {
            Some((n, lx, ly)) => ScalarField::Grid(crate::grid::GridField::zeros(n, n, lx, ly)),
            None => ScalarField::zero_expr(),
        };
        TensorPair {
            surface: Rc::clone(surface),
            q11: z(),
            q12: z(),
            q22: z(),
            s1: z(),
            s2: z(),
        }
    }

    /// `p(x, v) = q(v, v) + sigma(v)` with `v = e^{-phi}(cos w, sin w)`:
    /// modes 0, +-1, +-2 only.
    pub fn restriction(&self) -> SmField {
        let s = &self.surface;
        let em1 = s.e_neg_phi();
        let em2 = s.e_neg_2phi();
        let half = Complex64::new(0.5, 0.0);
        let quarter = Complex64::new(0.25, 0.0);
        let mi = Complex64::new(0.0, -1.0);
        // p0 = e^{-2phi}(q11+q22)/2
        let p0 = em2.mul(&self.q11.add(&self.q22)).scale(half);
        // p2 = e^{-2phi}[(q11-q22)/4 - i q12/2]
        let p2 = em2.mul(
            &self
                .q11
                .sub(&self.q22)
                .scale(quarter)
                .add(&self.q12.scale(mi * half)),
        );
        // p1 = e^{-phi}(s1 - i s2)/2
        let p1 = em1
            .mul(&self.s1.add(&self.s2.scale(mi)))
            .scale(half);
        let mut p = SmField::zero(s, 2);
        p.set_mode(0, p0);
        p.set_mode(1, p1.clone());
        p.set_mode(-1, p1.conj());
        p.set_mode(2, p2.clone());
        p.set_mode(-2, p2.conj());
        p
    }

    /// Invert `restriction`; the input must carry modes {0, +-1, +-2} only.
    pub fn from_restriction(p: &SmField) -> Result<TensorPair> {
        if p.kmax() > 2 {
            return Err(ThermoError::Incompatible(format!(
                "restriction has vertical degree {} > 2",
                p.kmax()
            )));
        }
        let s = &p.surface;
        let zero = || SmField::zero(s, 0).mode(0).unwrap().clone();
        let p0 = p.mode(0).cloned().unwrap_or_else(zero);
        let p1 = p.mode(1).cloned().unwrap_or_else(zero);
        let p2 = p.mode(2).cloned().unwrap_or_else(zero);
        let e1 = s.e_phi();
        let e2 = s.e_2phi();
        let two = Complex64::new(2.0, 0.0);
        // q11 + q22 = 2 e^{2phi} p0; q11 - q22 = 4 e^{2phi} Re p2;
        // q12 = -2 e^{2phi} Im p2; sigma = 2 e^{phi} (Re p1, -Im p1).
        let rep2 = p2.add(&p2.conj()).scale(Complex64::new(0.5, 0.0));
        let imp2 = p2.sub(&p2.conj()).scale(Complex64::new(0.0, -0.5));
        let q11 = e2.mul(&p0.add(&rep2.scale(two)));
        let q22 = e2.mul(&p0.sub(&rep2.scale(two)));
        let q12 = e2.mul(&imp2).scale(-two);
        let rep1 = p1.add(&p1.conj()).scale(Complex64::new(0.5, 0.0));
        let imp1 = p1.sub(&p1.conj()).scale(Complex64::new(0.0, -0.5));
        let s1 = e1.mul(&rep1).scale(two);
        let s2 = e1.mul(&imp1).scale(-two);
        Ok(TensorPair {
            surface: Rc::clone(s),
            q11,
            q12,
            q22,
            s1,
            s2,
        })
    }

    /// `int_M (|q|^2 + |sigma|^2) dvol` with the pointwise norms
    /// `|q|^2 = e^{-4phi}(q11^2 + 2 q12^2 + q22^2)`,
    /// `|sigma|^2 = e^{-2phi}(s1^2 + s2^2)`.
    pub fn norm_sq(&self) -> Result<f64> {
        self.inner(self)
    }

    pub fn inner(&self, other: &TensorPair) -> Result<f64> {
        let s = &self.surface;
        if !s.chart.is_torus() {
            return Err(ThermoError::NonCompactChart);
        }
        let em4 = s.e_neg_2phi().mul(s.e_neg_2phi());
        let qdot = self
            .q11
            .mul(&other.q11)
            .add(&self.q12.mul(&other.q12).scale(Complex64::new(2.0, 0.0)))
            .add(&self.q22.mul(&other.q22));
        let sdot = self.s1.mul(&other.s1).add(&self.s2.mul(&other.s2));
        let integrand = em4
            .mul(&qdot)
            .add(&s.e_neg_2phi().mul(&sdot))
            .mul(s.e_2phi());
        match integrand {
            ScalarField::Grid(g) => Ok(g.integral().re),
            ScalarField::Expr(_, _) => unreachable!("torus fields are grid-backed"),
        }
    }

    pub fn add(&self, other: &TensorPair) -> TensorPair {
        TensorPair {
            surface: Rc::clone(&self.surface),
            q11: self.q11.add(&other.q11),
            q12: self.q12.add(&other.q12),
            q22: self.q22.add(&other.q22),
            s1: self.s1.add(&other.s1),
            s2: self.s2.add(&other.s2),
        }
    }

    pub fn sub(&self, other: &TensorPair) -> TensorPair {
        TensorPair {
            surface: Rc::clone(&self.surface),
            q11: self.q11.sub(&other.q11),
            q12: self.q12.sub(&other.q12),
            q22: self.q22.sub(&other.q22),
            s1: self.s1.sub(&other.s1),
            s2: self.s2.sub(&other.s2),
        }
    }
}

impl PotentialPair {
    pub fn zero(surface: &Rc<Surface>) -> PotentialPair {
        let z = || match surface.grid_shape() {
            Some((n, lx, ly)) => ScalarField::Grid(crate::grid::GridField::zeros(n, n, lx, ly)),
            None => ScalarField::zero_expr(),
        };
        PotentialPair {
            surface: Rc::clone(surface),
            psi1: z(),
            psi2: z(),
            h: z(),
        }
    }

    /// `h + psi(v)` as a function on SM (modes 0, +-1).
    pub fn restriction(&self) -> SmField {
        let s = &self.surface;
        let half = Complex64::new(0.5, 0.0);
        let mi = Complex64::new(0.0, -1.0);
        let p1 = s
            .e_neg_phi()
            .mul(&self.psi1.add(&self.psi2.scale(mi)))
            .scale(half);
        let mut p = SmField::zero(s, 1);
        p.set_mode(0, self.h.clone());
        p.set_mode(1, p1.clone());
        p.set_mode(-1, p1.conj());
        p
    }

    /// `int_M (|psi|^2 + h^2) dvol`.
    pub fn norm_sq(&self) -> Result<f64> {
        self.inner(self)
    }

    pub fn inner(&self, other: &PotentialPair) -> Result<f64> {
        let s = &self.surface;
        if !s.chart.is_torus() {
            return Err(ThermoError::NonCompactChart);
        }
        let pdot = self.psi1.mul(&other.psi1).add(&self.psi2.mul(&other.psi2));
        let integrand = s
            .e_neg_2phi()
            .mul(&pdot)
            .add(&self.h.mul(&other.h))
            .mul(s.e_2phi());
        match integrand {
            ScalarField::Grid(g) => Ok(g.integral().re),
            ScalarField::Expr(_, _) => unreachable!("torus fields are grid-backed"),
        }
    }

    pub fn add(&self, other: &PotentialPair) -> PotentialPair {
        PotentialPair {
            surface: Rc::clone(&self.surface),
            psi1: self.psi1.add(&other.psi1),
            psi2: self.psi2.add(&other.psi2),
            h: self.h.add(&other.h),
        }
    }

    pub fn sub(&self, other: &PotentialPair) -> PotentialPair {
        PotentialPair {
            surface: Rc::clone(&self.surface),
            psi1: self.psi1.sub(&other.psi1),
            psi2: self.psi2.sub(&other.psi2),
            h: self.h.sub(&other.h),
        }
    }

    pub fn scale(&self, a: f64) -> PotentialPair {
        let c = Complex64::new(a, 0.0);
        PotentialPair {
            surface: Rc::clone(&self.surface),
            psi1: self.psi1.scale(c),
            psi2: self.psi2.scale(c),
            h: self.h.scale(c),
        }
    }

    /// Project out the kernel direction [0, const] of d (weighted mean of h).
    pub fn deflate(&self) -> PotentialPair {
        let s = &self.surface;
        let (mean, vol) = match (s.e_2phi().mul(&self.h), s.e_2phi()) {
            (ScalarField::Grid(num), ScalarField::Grid(den)) => {
                (num.integral().re, den.integral().re)
            }
            _ => return self.clone(),
        };
        let offset = Complex64::new(mean / vol, 0.0);
        let shifted = match &self.h {
            ScalarField::Grid(g) => ScalarField::Grid(g.map(|c| c - offset)),
            e => e.clone(),
        };
        PotentialPair {
            surface: Rc::clone(&self.surface),
            psi1: self.psi1.clone(),
            psi2: self.psi2.clone(),
            h: shifted,
        }
    }
}

/// Split into even and odd vertical parts: `2 p^e(x,v) = p(x,v) + p(x,-v)`.
pub fn even_odd_split(u: &SmField) -> (SmField, SmField) {
    (u.even_part(), u.odd_part())
}

/// The operator d: the pair whose restriction is `F(h + psi)`.
pub fn d_op(w: &PotentialPair, params: &ThermostatParams) -> Result<TensorPair> {
    let lambda = lambda_field(&w.surface, params);
    let fw = w.restriction().f_op(&lambda)?;
    TensorPair::from_restriction(&fw)
}

/// Metric divergence of a 1-form: `delta sigma = e^{-2phi}(d_x s1 + d_y s2)`.
fn delta_sigma(surface: &Surface, s1: &ScalarField, s2: &ScalarField) -> ScalarField {
    surface.e_neg_2phi().mul(&s1.dx().add(&s2.dy()))
}

/// Metric divergence of a symmetric 2-tensor, as a 1-form.
fn delta_q(surface: &Surface, q11: &ScalarField, q12: &ScalarField, q22: &ScalarField)
    -> (ScalarField, ScalarField) {
    let trace = q11.add(q22);
    let dx = q11.dx().add(&q12.dy()).sub(&surface.phi_x().mul(&trace));
    let dy = q12.dx().add(&q22.dy()).sub(&surface.phi_y().mul(&trace));
    (
        surface.e_neg_2phi().mul(&dx),
        surface.e_neg_2phi().mul(&dy),
    )
}

/// The operator delta: `(delta q + V(iota_{ie} q) + f V(sigma), delta sigma)`
/// as a (1-form, function) pair. `V` of a 1-form restriction rotates the
/// form: `(a1, a2) -> (a2, -a1)`.
pub fn delta_op(fpair: &TensorPair, params: &ThermostatParams) -> PotentialPair {
    let s = &fpair.surface;
    let (dq1, dq2) = delta_q(s, &fpair.q11, &fpair.q12, &fpair.q22);
    // iota_{ie} q with ie = (-e2, e1): a_j = q_{ij} (ie)^i.
    let (e1, e2) = params.e_field(s);
    let a1 = fpair.q12.mul(&e1).sub(&fpair.q11.mul(&e2));
    let a2 = fpair.q22.mul(&e1).sub(&fpair.q12.mul(&e2));
    // The vertical action rotates the 1-forms: (a1, a2) -> (-a2, a1) on the
    // tensor term and (s1, s2) -> (s2, -s1) on the f term; the opposite
    // senses come out of the adjointness computation because the mode-0 and
    // mode-2 parts of a product of degree-1 harmonics weigh differently in
    // the pair inner product.
    let minus = Complex64::new(-1.0, 0.0);
    let out1 = dq1.add(&a2.scale(minus)).add(&params.f.mul(&fpair.s2));
    let out2 = dq2
        .add(&a1)
        .add(&params.f.mul(&fpair.s1).scale(minus));
    PotentialPair {
        surface: Rc::clone(s),
        psi1: out1,
        psi2: out2,
        h: delta_sigma(s, &fpair.s1, &fpair.s2),
    }
}

/// Residuals of the divergence identities
/// `X(sigma) + H V(sigma) = delta sigma` and `X(q) + H V(q)/2 = delta q`,
/// where sigma, q stand for the restrictions of `[0, sigma]` and `[q, 0]`.
pub fn divergence_identities_check(pair: &TensorPair) -> Result<IdentityReport> {
    let s = &pair.surface;
    let sigma_only = TensorPair {
        surface: Rc::clone(s),
        q11: zero_like(s),
        q12: zero_like(s),
        q22: zero_like(s),
        s1: pair.s1.clone(),
        s2: pair.s2.clone(),
    };
    let q_only = TensorPair {
        surface: Rc::clone(s),
        s1: zero_like(s),
        s2: zero_like(s),
        ..pair.clone()
    };

    let rs = sigma_only.restriction();
    let lhs_s = rs.x_op()?.add(&rs.v_op().h_op()?);
    let rhs_s = SmField::scalar(s, delta_sigma(s, &pair.s1, &pair.s2));
    let r_sigma = lhs_s.sub(&rhs_s).max_mode_abs();

    let rq = q_only.restriction();
    let lhs_q = rq
        .x_op()?
        .add(&rq.v_op().h_op()?.scale(Complex64::new(0.5, 0.0)));
    let (dq1, dq2) = delta_q(s, &pair.q11, &pair.q12, &pair.q22);
    let dq_pair = PotentialPair {
        surface: Rc::clone(s),
        psi1: dq1,
        psi2: dq2,
        h: zero_like(s),
    };
    let mut rhs_q = dq_pair.restriction();
    rhs_q.set_mode(0, zero_like(s));
    let r_q = lhs_q.sub(&rhs_q).max_mode_abs();

    Ok(
        IdentityReport::new("divergence-identities", r_sigma.max(r_q), 0.0)
            .term("X(sigma)+HV(sigma)-delta(sigma)", r_sigma)
            .term("X(q)+HV(q)/2-delta(q)", r_q),
    )
}

fn zero_like(surface: &Surface) -> ScalarField {
    match surface.grid_shape() {
        Some((n, lx, ly)) => ScalarField::Grid(crate::grid::GridField::zeros(n, n, lx, ly)),
        None => ScalarField::zero_expr(),
    }
}

/// Output of `solenoidal_decompose`.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub w: PotentialPair,
    pub f_s: TensorPair,
    pub iterations: usize,
    /// Final relative CG residual on the normal equation.
    pub cg_residual: f64,
    /// `|delta f_s| / |f|`, the achieved solenoidality.
    pub divergence_ratio: f64,
}

/// Solve `f = d w + f^s` with `delta f^s = 0` by conjugate gradients on the
/// positive semidefinite normal operator `-delta d`, in the pair inner
/// product, with the `[0, const]` kernel projected out.
pub fn solenoidal_decompose(
    fpair: &TensorPair,
    params: &ThermostatParams,
    tol: f64,
    max_iter: usize,
) -> Result<Decomposition> {
    let apply = |w: &PotentialPair| -> Result<PotentialPair> {
        Ok(delta_op(&d_op(w, params)?, params).scale(-1.0).deflate())
    };
    let fnorm = fpair.norm_sq()?.sqrt();
    let b = delta_op(fpair, params).scale(-1.0).deflate();
    let bnorm = b.norm_sq()?.sqrt();
    let mut x = PotentialPair::zero(&fpair.surface);
    let mut iterations = 0;
    let mut relres = 0.0;
    // If the input is already solenoidal to within the tolerance there is
    // nothing to solve; running CG on roundoff noise diverges.
    if bnorm > tol * fnorm {
        let mut r = b.clone();
        let mut p = r.clone();
        let mut rs = r.inner(&r)?;
        loop {
            if rs.sqrt() / bnorm < tol {
                break;
            }
            if iterations >= max_iter {
                return Err(ThermoError::SolverDiverged(iterations, rs.sqrt() / bnorm));
            }
            let ap = apply(&p)?;
            let pap = p.inner(&ap)?;
            if pap <= 0.0 {
                // The operator is PSD, so a non-positive curvature means the
                // iteration has hit roundoff; accept the current iterate.
                break;
            }
            let alpha = rs / pap;
            x = x.add(&p.scale(alpha));
            r = r.sub(&ap.scale(alpha));
            let rs_new = r.inner(&r)?;
            p = r.add(&p.scale(rs_new / rs));
            rs = rs_new;
            iterations += 1;
        }
        relres = rs.sqrt() / bnorm;
    }
    let f_s = fpair.sub(&d_op(&x, params)?);
    let div = delta_op(&f_s, params).norm_sq()?.sqrt();
    Ok(Decomposition {
        w: x,
        f_s,
        iterations,
        cg_residual: relres,
        divergence_ratio: if fnorm > 0.0 { div / fnorm } else { div },
    })
}

/// Integral of a function on SM along an orbit, with the closure defect.
#[derive(Debug, Clone, Copy)]
pub struct XrayResult {
    pub integral: f64,
    pub closure_defect: f64,
    pub length: f64,
}

/// Composite 4th-order quadrature of `p` along the trajectory samples
/// (Simpson, with a 3/8 tail when the interval count is odd).
pub fn xray_transform(p: &SmField, traj: &Trajectory) -> XrayResult {
    let ev = p.evaluator();
    let vals: Vec<f64> = traj.samples.iter().map(|(_, q)| ev.eval(q).re).collect();
    let h = traj.dt.abs();
    let integral = simpson(&vals, h);
    let surface = &p.surface;
    XrayResult {
        integral,
        closure_defect: surface.sm_distance(&traj.start(), &traj.end()),
        length: traj.duration().abs(),
    }
}

fn simpson(vals: &[f64], h: f64) -> f64 {
    let n = vals.len() - 1; // number of intervals
    match n {
        0 => 0.0,
        1 => h * (vals[0] + vals[1]) / 2.0,
        2 => h / 3.0 * (vals[0] + 4.0 * vals[1] + vals[2]),
        _ => {
            let (even_part, tail) = if n % 2 == 0 {
                (n, 0.0)
            } else {
                // 3/8 rule on the last three intervals.
                let m = n - 3;
                let t = 3.0 * h / 8.0
                    * (vals[m] + 3.0 * vals[m + 1] + 3.0 * vals[m + 2] + vals[m + 3]);
                (m, t)
            };
            let mut acc = 0.0;
            if even_part > 0 {
                acc += vals[0] + vals[even_part];
                for (i, v) in vals.iter().enumerate().take(even_part).skip(1) {
                    acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
                }
                acc *= h / 3.0;
            }
            acc + tail
        }
    }
}

/// A closed orbit found by Gauss–Newton refinement.
#[derive(Debug, Clone)]
pub struct ClosedOrbit {
    pub trajectory: Trajectory,
    pub period: f64,
    pub defect: f64,
}

fn wrap_signed(d: f64, l: f64) -> f64 {
    d - l * (d / l).round()
}

fn closure_residual(system: &FlowSystem, x: &[f64; 4], dt: f64) -> Result<[f64; 3]> {
    let p = SmPoint::new(x[0], x[1], x[2]);
    let end = flow_endpoint(system, p, x[3], dt)?;
    let (dx, dy) = match system.surface.chart {
        crate::geometry::Chart::Torus { lx, ly, .. } => (
            wrap_signed(end.x - p.x, lx),
            wrap_signed(end.y - p.y, ly),
        ),
        crate::geometry::Chart::HalfPlane { .. } => (end.x - p.x, end.y - p.y),
    };
    Ok([
        dx,
        dy,
        wrap_signed(end.omega - p.omega, std::f64::consts::TAU),
    ])
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for i in 0..3 {
        let mut piv = i;
        for r in i + 1..3 {
            if a[r][i].abs() > a[piv][i].abs() {
                piv = r;
            }
        }
        a.swap(i, piv);
        b.swap(i, piv);
        for r in i + 1..3 {
            let f = a[r][i] / a[i][i];
            for c in i..3 {
                a[r][c] -= f * a[i][c];
            }
            b[r] -= f * b[i];
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let mut v = b[i];
        for c in i + 1..3 {
            v -= a[i][c] * x[c];
        }
        x[i] = v / a[i][i];
    }
    x
}

/// Refine a near-recurrent seed into a closed orbit by damped Gauss–Newton
/// on (point, period), taking the minimum-norm step of the underdetermined
/// 3x4 system.
pub fn find_closed_orbit(
    system: &FlowSystem,
    seed: SmPoint,
    t_guess: f64,
    dt: f64,
) -> Result<ClosedOrbit> {
    let target = 1e-9;
    let mut x = [seed.x, seed.y, seed.omega, t_guess];
    let norm = |r: &[f64; 3]| (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    let mut r = closure_residual(system, &x, dt)?;
    let mut best = (x, norm(&r));
    for _ in 0..40 {
        if norm(&r) < target {
            break;
        }
        // Finite-difference Jacobian, 3 residuals x 4 unknowns.
        let eps = 1e-6;
        let mut jac = [[0.0; 4]; 3];
        for j in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += eps;
            xm[j] -= eps;
            let rp = closure_residual(system, &xp, dt)?;
            let rm = closure_residual(system, &xm, dt)?;
            for i in 0..3 {
                jac[i][j] = (rp[i] - rm[i]) / (2.0 * eps);
            }
        }
        // Minimum-norm step: solve (J J^T + mu I) y = r, step = -J^T y.
        let mut jjt = [[0.0; 3]; 3];
        for i in 0..3 {
            for k in 0..3 {
                jjt[i][k] = (0..4).map(|j| jac[i][j] * jac[k][j]).sum();
            }
        }
        let mu = 1e-12 * (jjt[0][0] + jjt[1][1] + jjt[2][2]).max(1e-12);
        for (i, row) in jjt.iter_mut().enumerate() {
            row[i] += mu;
        }
        let y = solve3(jjt, r);
        let step: Vec<f64> = (0..4)
            .map(|j| -(0..3).map(|i| jac[i][j] * y[i]).sum::<f64>())
            .collect();
        // Backtracking line search on the defect.
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..8 {
            let mut xn = x;
            for j in 0..4 {
                xn[j] += scale * step[j];
            }
            if xn[3] > 10.0 * dt {
                if let Ok(rn) = closure_residual(system, &xn, dt) {
                    if norm(&rn) < norm(&r) {
                        x = xn;
                        r = rn;
                        improved = true;
                        break;
                    }
                }
            }
            scale *= 0.5;
        }
        if !improved {
            break;
        }
        if norm(&r) < best.1 {
            best = (x, norm(&r));
        }
    }
    let (x, defect) = if norm(&r) < best.1 { (x, norm(&r)) } else { best };
    if defect > target {
        return Err(ThermoError::OrbitNoConvergence(defect));
    }
    let traj = integrate_flow(system, SmPoint::new(x[0], x[1], x[2]), x[3], dt)?;
    Ok(ClosedOrbit {
        trajectory: traj,
        period: x[3],
        defect,
    })
}

/// Scan a long orbit for the best near-return to its start after `t_min`;
/// returns the recurrence time and SM distance.
pub fn scan_recurrence(
    system: &FlowSystem,
    p0: SmPoint,
    t_max: f64,
    t_min: f64,
    dt: f64,
) -> Result<(f64, f64)> {
    let traj = integrate_flow(system, p0, t_max, dt)?;
    let mut best = (t_max, f64::INFINITY);
    for (t, p) in &traj.samples {
        if *t < t_min {
            continue;
        }
        let d = system.surface.sm_distance(p, &p0);
        if d < best.1 {
            best = (*t, d);
        }
    }
    Ok(best)
}

/// Report of the unconditional steps in the key-inequality chain, plus the
/// H/V recovery from two modified horizontal operators with constant slopes.
pub fn key_inequality_probe(
    pair: &TensorPair,
    params: &ThermostatParams,
    c_s: f64,
    c_u: f64,
) -> Result<IdentityReport> {
    let p = pair.restriction();
    let np = p.l2_norm_sq()?.sqrt();
    let nvp = p.v_op().l2_norm_sq()?.sqrt();
    let nv2p = p.v_op().v_op().l2_norm_sq()?.sqrt();
    let (rv, rv2) = if np > 0.0 {
        (nvp / np, nv2p / np)
    } else {
        (0.0, 0.0)
    };
    let delta = delta_op(pair, params);
    let ndelta = delta.norm_sq()?.sqrt();

    // Recover Hu and Vu from H_{c^s} u and H_{c^u} u (unique when c^s != c^u).
    let hcs = p.hc_op(&SmField::constant(&p.surface, c_s))?;
    let hcu = p.hc_op(&SmField::constant(&p.surface, c_u))?;
    let denom = c_u - c_s;
    let v_rec = hcu.sub(&hcs).scale(Complex64::new(1.0 / denom, 0.0));
    let h_rec = hcs
        .scale(Complex64::new(c_u / denom, 0.0))
        .sub(&hcu.scale(Complex64::new(c_s / denom, 0.0)));
    let v_res = v_rec.sub(&p.v_op()).max_mode_abs();
    let h_res = h_rec.sub(&p.h_op()?).max_mode_abs();

    Ok(IdentityReport::new("key-inequality", rv.max(rv2 / 2.0), 2.0)
        .term("|p|", np)
        .term("|Vp|", nvp)
        .term("|V2p|", nv2p)
        .term("|Vp|/|p|", rv)
        .term("|V2p|/|p|", rv2)
        .term("|delta f|", ndelta)
        .term("conditioning", 1.0 / denom.abs())
        .term("V-recovery", v_res)
        .term("H-recovery", h_res))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::util::{random_band_limited, random_thermostat, rng};
    use rand::Rng;
    use std::f64::consts::TAU;

    fn torus(n: usize) -> Rc<Surface> {
        Rc::new(Surface::flat_torus(TAU, TAU, n))
    }

    fn curved(n: usize) -> Rc<Surface> {
        Rc::new(Surface::torus(
            TAU,
            TAU,
            n,
            Expr::scale(&Expr::mul(&Expr::cos(&Expr::x()), &Expr::sin(&Expr::y())), 0.15),
        ))
    }

    fn random_pair(s: &Rc<Surface>, rng: &mut impl Rng) -> TensorPair {
        TensorPair {
            surface: Rc::clone(s),
            q11: random_band_limited(s, 2, 1.0, rng),
            q12: random_band_limited(s, 2, 1.0, rng),
            q22: random_band_limited(s, 2, 1.0, rng),
            s1: random_band_limited(s, 2, 1.0, rng),
            s2: random_band_limited(s, 2, 1.0, rng),
        }
    }

    fn random_potential(s: &Rc<Surface>, rng: &mut impl Rng) -> PotentialPair {
        PotentialPair {
            surface: Rc::clone(s),
            psi1: random_band_limited(s, 2, 1.0, rng),
            psi2: random_band_limited(s, 2, 1.0, rng),
            h: random_band_limited(s, 2, 1.0, rng),
        }
    }

    #[test]
    fn restriction_round_trip() {
        let s = curved(32);
        let mut rng = rng(3);
        let pair = random_pair(&s, &mut rng);
        let back = TensorPair::from_restriction(&pair.restriction()).unwrap();
        let d = pair.sub(&back);
        assert!(d.norm_sq().unwrap().sqrt() < 1e-10);
        // Restriction occupies exactly modes {0, +-1, +-2}.
        assert_eq!(pair.restriction().kmax(), 2);
    }

    #[test]
    fn restriction_matches_pointwise_definition() {
        let s = curved(32);
        let mut rng = rng(4);
        let pair = random_pair(&s, &mut rng);
        let p = pair.restriction();
        let (n, lx, ly) = s.grid_shape().unwrap();
        for &(ix, iy, w) in &[(0usize, 0usize, 0.3), (5, 11, 2.1), (20, 7, 4.4)] {
            let (x, y) = (ix as f64 * lx / n as f64, iy as f64 * ly / n as f64);
            let v = s.unit_vector(x, y, w);
            let q = |f: &ScalarField| f.eval(x, y).re;
            let expected = q(&pair.q11) * v[0] * v[0]
                + 2.0 * q(&pair.q12) * v[0] * v[1]
                + q(&pair.q22) * v[1] * v[1]
                + q(&pair.s1) * v[0]
                + q(&pair.s2) * v[1];
            let got = p.eval(&SmPoint::new(x, y, w)).re;
            assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        }
    }

    #[test]
    fn norm_equivalence_constants() {
        // |p|^2_{L2(SM)} / |[q,sigma]|^2 lies in [pi/2, pi] exactly.
        let s = curved(32);
        let mut rng = rng(5);
        for _ in 0..5 {
            let pair = random_pair(&s, &mut rng);
            let ratio = pair.restriction().l2_norm_sq().unwrap() / pair.norm_sq().unwrap();
            assert!(
                ratio > std::f64::consts::FRAC_PI_2 - 1e-9
                    && ratio < std::f64::consts::PI + 1e-9,
                "ratio {ratio}"
            );
        }
    }

    #[test]
    fn even_odd_split_recombines() {
        let s = torus(32);
        let mut rng = rng(6);
        let u = crate::util::random_smfield(&s, 3, 2, 1.0, &mut rng);
        let (e, o) = even_odd_split(&u);
        assert!(e.add(&o).sub(&u).max_mode_abs() < 1e-12);
        for &(x, y, w) in &[(0.3, 1.0, 0.7), (2.0, 4.1, 3.3)] {
            let p = SmPoint::new(x, y, w);
            let pm = SmPoint::new(x, y, w + std::f64::consts::PI);
            let ev = (u.eval(&p) + u.eval(&pm)).re / 2.0;
            assert!((e.eval(&p).re - ev).abs() < 1e-11);
        }
    }

    #[test]
    fn d_op_of_constant_h_is_zero_and_matches_dynamics() {
        let s = curved(32);
        let mut rng = rng(7);
        let params = random_thermostat(&s, 2, 0.4, &mut rng);
        let mut w = PotentialPair::zero(&s);
        w.h = ScalarField::Grid(crate::grid::GridField::from_fn(32, 32, TAU, TAU, |_, _| {
            Complex64::new(2.5, 0.0)
        }));
        let d = d_op(&w, &params).unwrap();
        assert!(d.norm_sq().unwrap() < 1e-20);

        let w = random_potential(&s, &mut rng);
        let d = d_op(&w, &params).unwrap();
        let lambda = lambda_field(&s, &params);
        let fw = w.restriction().f_op(&lambda).unwrap();
        assert!(d.restriction().sub(&fw).max_mode_abs() < 1e-9);
        assert_eq!(d.restriction().kmax(), 2);
    }

    #[test]
    fn divergence_identities_on_curved_torus() {
        let s = curved(48);
        let mut rng = rng(8);
        let pair = random_pair(&s, &mut rng);
        let rep = divergence_identities_check(&pair).unwrap();
        assert!(rep.left < 1e-9, "{:?}", rep.terms);
    }

    #[test]
    fn adjointness_of_d_and_delta() {
        let s = curved(32);
        let mut rng = rng(9);
        for _ in 0..10 {
            let params = random_thermostat(&s, 2, 0.5, &mut rng);
            let w = random_potential(&s, &mut rng);
            let f = random_pair(&s, &mut rng);
            let lhs = d_op(&w, &params).unwrap().inner(&f).unwrap();
            let rhs = w.inner(&delta_op(&f, &params)).unwrap();
            assert!((lhs + rhs).abs() < 1e-8, "{lhs} vs {}", -rhs);
        }
    }

    #[test]
    fn decomposition_recovers_potential_and_is_projection() {
        let s = torus(32);
        let mut rng = rng(10);
        let params = random_thermostat(&s, 1, 0.3, &mut rng);
        let w0 = random_potential(&s, &mut rng);
        let f = d_op(&w0, &params).unwrap();
        let dec = solenoidal_decompose(&f, &params, 1e-10, 10_000).unwrap();
        let fnorm = f.norm_sq().unwrap().sqrt();
        assert!(dec.f_s.norm_sq().unwrap().sqrt() / fnorm < 1e-6, "{}", dec.iterations);
        // w - w0 is in the kernel: [0, const].
        let dw = dec.w.sub(&w0.deflate());
        assert!(dw.psi1.max_abs_on_grid() < 1e-6);
        assert!(dw.psi2.max_abs_on_grid() < 1e-6);
        assert!(dw.deflate().h.max_abs_on_grid() < 1e-6);

        // Random input: solenoidal residue, orthogonality, idempotence.
        let g = random_pair(&s, &mut rng);
        let dec = solenoidal_decompose(&g, &params, 1e-10, 10_000).unwrap();
        assert!(dec.divergence_ratio < 1e-6);
        let probe = random_potential(&s, &mut rng);
        let ortho = dec.f_s.inner(&d_op(&probe, &params).unwrap()).unwrap();
        assert!(ortho.abs() < 1e-7, "orthogonality {ortho}");
        let again = solenoidal_decompose(&dec.f_s, &params, 1e-10, 10_000).unwrap();
        let change = again.f_s.sub(&dec.f_s).norm_sq().unwrap().sqrt();
        assert!(change < 1e-8, "projection defect {change}");
    }

    #[test]
    fn xray_of_coboundary_is_endpoint_difference() {
        let s = torus(32);
        let mut rng = rng(11);
        let params = random_thermostat(&s, 1, 0.3, &mut rng);
        let u = crate::util::random_smfield(&s, 2, 2, 1.0, &mut rng);
        let lambda = lambda_field(&s, &params);
        let fu = u.f_op(&lambda).unwrap();
        let sys = FlowSystem::new(&s, &params);
        let traj = integrate_flow(&sys, SmPoint::new(0.7, 1.9, 0.4), 4.0, 1e-3).unwrap();
        let res = xray_transform(&fu, &traj);
        let ue = u.evaluator();
        let expected = ue.eval(&traj.end()).re - ue.eval(&traj.start()).re;
        assert!((res.integral - expected).abs() < 1e-7, "{} vs {expected}", res.integral);
    }

    #[test]
    fn closed_orbit_finder_on_magnetic_circle() {
        let kappa = 0.7;
        let s = torus(32);
        let params = ThermostatParams::magnetic(Expr::constant(kappa), Some(&s));
        let sys = FlowSystem::new(&s, &params);
        let orbit = find_closed_orbit(
            &sys,
            SmPoint::new(0.5, 0.5, 0.2),
            TAU / kappa + 0.05,
            1e-3,
        )
        .unwrap();
        assert!((orbit.period - TAU / kappa).abs() < 1e-8, "period {}", orbit.period);
        assert!(orbit.defect < 1e-9);
    }

    #[test]
    fn closed_orbit_finder_on_flat_geodesics() {
        let s = torus(32);
        let sys = FlowSystem::new(&s, &ThermostatParams::geodesic());
        // Slope (1, 1): period sqrt(2) * 2 pi.
        let orbit = find_closed_orbit(
            &sys,
            SmPoint::new(0.1, 0.2, std::f64::consts::FRAC_PI_4 + 1e-3),
            TAU * std::f64::consts::SQRT_2 + 0.02,
            1e-3,
        )
        .unwrap();
        assert!(
            (orbit.period - TAU * std::f64::consts::SQRT_2).abs() < 1e-7,
            "period {}",
            orbit.period
        );
    }

    #[test]
    fn xray_of_potential_pair_on_closed_orbit() {
        let kappa = 0.9;
        let s = torus(32);
        let params = ThermostatParams::magnetic(Expr::constant(kappa), Some(&s));
        let sys = FlowSystem::new(&s, &params);
        let orbit =
            find_closed_orbit(&sys, SmPoint::new(1.0, 2.0, 0.6), TAU / kappa, 1e-3).unwrap();
        let mut rng = rng(12);
        let w = random_potential(&s, &mut rng);
        let p = d_op(&w, &params).unwrap().restriction();
        let res = xray_transform(&p, &orbit.trajectory);
        assert!(res.closure_defect < 1e-9);
        assert!(res.integral.abs() < 1e-6, "I = {}", res.integral);
    }

    #[test]
    fn key_inequality_mode_bounds() {
        let s = curved(32);
        let mut rng = rng(13);
        let params = random_thermostat(&s, 2, 0.4, &mut rng);
        for _ in 0..10 {
            let pair = random_pair(&s, &mut rng);
            let rep = key_inequality_probe(&pair, &params, -1.0, 1.0).unwrap();
            assert!(rep.term_value("|Vp|/|p|").unwrap() <= 2.0 + 1e-12);
            assert!(rep.term_value("|V2p|/|p|").unwrap() <= 4.0 + 1e-12);
            assert!(rep.term_value("V-recovery").unwrap() < 1e-10);
            assert!(rep.term_value("H-recovery").unwrap() < 1e-10);
        }
    }
}

