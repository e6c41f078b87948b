//! Thermostat orbit integration and generalized Jacobi fields.
//!
//! The flow is the first-order system on SM generated by `F = X + lambda V`;
//! in the `(x, y, omega)` parametrization the sphere bundle constraint
//! `|v|_g = 1` holds exactly, so there is no renormalization drift. Jacobi
//! fields are integrated in the scalar reduction
//!
//! ```text
//! J = x gdot + y i gdot,   xdot = lambda y,
//! yddot - V(lambda) ydot + (K - H(lambda) + lambda^2) y = 0,
//! ```
//!
//! jointly with the base orbit (classical RK4 throughout).

use std::rc::Rc;

use crate::error::{Result, ThermoError};
use crate::frame::sample_points;
use crate::geometry::{PointEval, SmPoint, Surface, ThermostatParams};

/// Default integrator step.
pub const DEFAULT_DT: f64 = 1e-3;

/// Pointwise evaluator for everything the dynamics needs along orbits:
/// the conformal factor, the magnetic part and the stream function with
/// chart derivatives to second order.
#[derive(Debug, Clone)]
pub struct FlowSystem {
    pub surface: Rc<Surface>,
    pub params: ThermostatParams,
    phi: PointEval,
    f: PointEval,
    g: PointEval,
}

impl FlowSystem {
    pub fn new(surface: &Rc<Surface>, params: &ThermostatParams) -> FlowSystem {
        FlowSystem {
            surface: Rc::clone(surface),
            params: params.clone(),
            phi: PointEval::new(surface.phi_expr.as_ref(), surface.phi()),
            f: PointEval::new(params.f_expr.as_ref(), &params.f),
            g: PointEval::new(params.stream_expr.as_ref(), &params.stream),
        }
    }

    pub fn lambda(&self, p: &SmPoint) -> f64 {
        let (c, s) = (p.omega.cos(), p.omega.sin());
        let em = (-self.phi.v(p.x, p.y)).exp();
        self.f.v(p.x, p.y) + em * (self.g.dx(p.x, p.y) * c + self.g.dy(p.x, p.y) * s)
    }

    pub fn v_lambda(&self, p: &SmPoint) -> f64 {
        let (c, s) = (p.omega.cos(), p.omega.sin());
        let em = (-self.phi.v(p.x, p.y)).exp();
        em * (-self.g.dx(p.x, p.y) * s + self.g.dy(p.x, p.y) * c)
    }

    pub fn h_lambda(&self, p: &SmPoint) -> f64 {
        let (x, y) = (p.x, p.y);
        let (c, s) = (p.omega.cos(), p.omega.sin());
        let em = (-self.phi.v(x, y)).exp();
        let (px, py) = (self.phi.dx(x, y), self.phi.dy(x, y));
        let hf = em * (-s * self.f.dx(x, y) + c * self.f.dy(x, y));
        let (gx, gy) = (self.g.dx(x, y), self.g.dy(x, y));
        let (gxx, gxy, gyy) = (self.g.dxx(x, y), self.g.dxy(x, y), self.g.dyy(x, y));
        let a = gx * c + gy * s;
        let a_w = -gx * s + gy * c;
        let ht = em * em
            * (-s * (-px * a + gxx * c + gxy * s) + c * (-py * a + gxy * c + gyy * s)
                - (px * c + py * s) * a_w);
        hf + ht
    }

    /// `theta(x, v) = <e, v>` along the fiber angle.
    pub fn theta(&self, p: &SmPoint) -> f64 {
        let (c, s) = (p.omega.cos(), p.omega.sin());
        let em = (-self.phi.v(p.x, p.y)).exp();
        em * (-self.g.dy(p.x, p.y) * c + self.g.dx(p.x, p.y) * s)
    }

    /// `F(theta) = X(theta) + lambda V(theta)` pointwise.
    pub fn f_theta(&self, p: &SmPoint) -> f64 {
        let (x, y) = (p.x, p.y);
        let (c, s) = (p.omega.cos(), p.omega.sin());
        let em = (-self.phi.v(x, y)).exp();
        let (px, py) = (self.phi.dx(x, y), self.phi.dy(x, y));
        let (gx, gy) = (self.g.dx(x, y), self.g.dy(x, y));
        let (gxx, gxy, gyy) = (self.g.dxx(x, y), self.g.dxy(x, y), self.g.dyy(x, y));
        let b = -gy * c + gx * s;
        let a = gx * c + gy * s; // = V(theta) * e^{phi}
        let x_theta = em * em
            * (c * (-px * b - gxy * c + gxx * s) + s * (-py * b - gyy * c + gxy * s)
                + (py * c - px * s) * a);
        x_theta + self.lambda(p) * em * a
    }

    pub fn curvature(&self, x: f64, y: f64) -> f64 {
        let em2 = (-2.0 * self.phi.v(x, y)).exp();
        -em2 * (self.phi.dxx(x, y) + self.phi.dyy(x, y))
    }

    /// Coefficient `K - H(lambda) + lambda^2` of the scalar Jacobi equation.
    pub fn jacobi_coefficient(&self, p: &SmPoint) -> f64 {
        self.curvature(p.x, p.y) - self.h_lambda(p) + self.lambda(p).powi(2)
    }

    pub(crate) fn flow_rhs(&self, st: &[f64; 3]) -> [f64; 3] {
        let p = SmPoint::new(st[0], st[1], st[2]);
        let em = (-self.phi.v(p.x, p.y)).exp();
        let (c, s) = (p.omega.cos(), p.omega.sin());
        let (px, py) = (self.phi.dx(p.x, p.y), self.phi.dy(p.x, p.y));
        [
            em * c,
            em * s,
            em * (py * c - px * s) + self.lambda(&p),
        ]
    }

    /// Conservative step bound from the sampled size of `lambda`.
    pub fn dt_max(&self) -> f64 {
        let pts = sample_points(&self.surface);
        let lmax = pts
            .iter()
            .map(|p| self.lambda(p).abs())
            .fold(0.0, f64::max);
        0.2 / (1.0 + lmax)
    }
}

/// Time-sampled orbit of the thermostat flow. Chart coordinates are kept
/// unwrapped so nearby orbits subtract cleanly; wrap on export if needed.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<(f64, SmPoint)>,
    pub dt: f64,
}

impl Trajectory {
    pub fn start(&self) -> SmPoint {
        self.samples.first().unwrap().1
    }

    pub fn end(&self) -> SmPoint {
        self.samples.last().unwrap().1
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().unwrap().0 - self.samples.first().unwrap().0
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,y,omega\n");
        for (t, p) in &self.samples {
            out.push_str(&format!("{t},{},{},{}\n", p.x, p.y, p.omega));
        }
        out
    }
}

pub(crate) fn rk4_step<const N: usize>(
    y: &[f64; N],
    dt: f64,
    f: &impl Fn(&[f64; N]) -> [f64; N],
) -> [f64; N] {
    let add = |a: &[f64; N], b: &[f64; N], s: f64| {
        let mut out = *a;
        for i in 0..N {
            out[i] += s * b[i];
        }
        out
    };
    let k1 = f(y);
    let k2 = f(&add(y, &k1, dt / 2.0));
    let k3 = f(&add(y, &k2, dt / 2.0));
    let k4 = f(&add(y, &k3, dt));
    let mut out = *y;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn plan_steps(t_final: f64, dt: f64) -> (usize, f64) {
    if t_final == 0.0 {
        return (0, dt);
    }
    let n = (t_final.abs() / dt).ceil().max(1.0) as usize;
    (n, t_final / n as f64)
}

/// Integrate the thermostat flow for time `t_final` (negative runs backward).
pub fn integrate_flow(
    system: &FlowSystem,
    p0: SmPoint,
    t_final: f64,
    dt: f64,
) -> Result<Trajectory> {
    let dt_max = system.dt_max();
    if dt > dt_max {
        return Err(ThermoError::StepSize { dt, dt_max });
    }
    let (n, h) = plan_steps(t_final, dt);
    let mut st = [p0.x, p0.y, p0.omega];
    let mut samples = Vec::with_capacity(n + 1);
    samples.push((0.0, p0));
    let f = |s: &[f64; 3]| system.flow_rhs(s);
    for i in 0..n {
        st = rk4_step(&st, h, &f);
        let p = SmPoint::new(st[0], st[1], st[2]);
        if !system.surface.in_chart(&p) {
            return Err(ThermoError::ChartExit((i + 1) as f64 * h));
        }
        samples.push(((i + 1) as f64 * h, p));
    }
    Ok(Trajectory { samples, dt: h })
}

/// End point of the flow after time `t_final`, without storing the orbit.
pub fn flow_endpoint(system: &FlowSystem, p0: SmPoint, t_final: f64, dt: f64) -> Result<SmPoint> {
    Ok(integrate_flow(system, p0, t_final, dt)?.end())
}

/// Jacobi data along an orbit: `J = x gdot + y i gdot` with `ydot` tracked.
#[derive(Debug, Clone)]
pub struct JacobiData {
    /// `(t, x, y, ydot)` aligned with the base trajectory samples.
    pub samples: Vec<(f64, f64, f64, f64)>,
}

impl JacobiData {
    pub fn end(&self) -> (f64, f64, f64) {
        let (_, x, y, yd) = *self.samples.last().unwrap();
        (x, y, yd)
    }
}

/// Integrate the scalar Jacobi system along the orbit of `traj`, re-running
/// the base point jointly so RK4 midpoints are consistent.
pub fn integrate_jacobi(
    system: &FlowSystem,
    traj: &Trajectory,
    x0: f64,
    y0: f64,
    ydot0: f64,
) -> Result<JacobiData> {
    let p0 = traj.start();
    let n = traj.samples.len() - 1;
    let h = traj.dt;
    let mut st = [p0.x, p0.y, p0.omega, x0, y0, ydot0];
    let mut samples = Vec::with_capacity(n + 1);
    samples.push((0.0, x0, y0, ydot0));
    let f = |s: &[f64; 6]| {
        let p = SmPoint::new(s[0], s[1], s[2]);
        let base = system.flow_rhs(&[s[0], s[1], s[2]]);
        let lam = system.lambda(&p);
        let vl = system.v_lambda(&p);
        let coeff = system.jacobi_coefficient(&p);
        [
            base[0],
            base[1],
            base[2],
            lam * s[4],
            s[5],
            vl * s[5] - coeff * s[4],
        ]
    };
    for i in 0..n {
        st = rk4_step(&st, h, &f);
        samples.push(((i + 1) as f64 * h, st[3], st[4], st[5]));
    }
    Ok(JacobiData { samples })
}

/// Tangent data at a point of SM, split as `(d pi (xi), K(xi))` into
/// horizontal and vertical parts, both coordinate vectors on M.
#[derive(Debug, Clone, Copy)]
pub struct TangentData {
    pub horizontal: [f64; 2],
    pub vertical: [f64; 2],
}

/// Frame components `(a, b, c)` of a tangent vector: `xi = a X + b H + c V`,
/// i.e. `d pi (xi) = a v + b iv` and `K(xi) = c iv`.
pub fn frame_components(surface: &Surface, p: &SmPoint, xi: &TangentData) -> (f64, f64, f64) {
    let v = surface.unit_vector(p.x, p.y, p.omega);
    let iv = surface.rotate90(p.x, p.y, v);
    let e2 = {
        let n = surface.metric_norm(p.x, p.y, [1.0, 0.0]);
        n * n
    };
    let dot = |a: [f64; 2], b: [f64; 2]| e2 * (a[0] * b[0] + a[1] * b[1]);
    (dot(xi.horizontal, v), dot(xi.horizontal, iv), dot(xi.vertical, iv))
}

/// Coordinate components (dx, dy, domega) of `a X + b H + c V` at `p`.
pub fn frame_to_coords(system: &FlowSystem, p: &SmPoint, a: f64, b: f64, c: f64) -> [f64; 3] {
    let em = (-system.phi.v(p.x, p.y)).exp();
    let (px, py) = (system.phi.dx(p.x, p.y), system.phi.dy(p.x, p.y));
    let (co, si) = (p.omega.cos(), p.omega.sin());
    let xv = [em * co, em * si, em * (py * co - px * si)];
    let hv = [-em * si, em * co, -em * (px * co + py * si)];
    [
        a * xv[0] + b * hv[0],
        a * xv[1] + b * hv[1],
        a * xv[2] + b * hv[2] + c,
    ]
}

fn coords_to_frame(system: &FlowSystem, p: &SmPoint, d: [f64; 3]) -> (f64, f64, f64) {
    // Invert [X | H | V] column-wise; the spatial 2x2 block is conformal.
    let em = (-system.phi.v(p.x, p.y)).exp();
    let (px, py) = (system.phi.dx(p.x, p.y), system.phi.dy(p.x, p.y));
    let (co, si) = (p.omega.cos(), p.omega.sin());
    let a = (d[0] * co + d[1] * si) / em;
    let b = (-d[0] * si + d[1] * co) / em;
    let xw = em * (py * co - px * si);
    let hw = -em * (px * co + py * si);
    let c = d[2] - a * xw - b * hw;
    (a, b, c)
}

/// Residual between the finite-difference linearized flow and the Jacobi
/// pair with matched initial data (Richardson-extrapolated central FD).
pub fn check_linearized_flow(
    system: &FlowSystem,
    p0: SmPoint,
    xi: &TangentData,
    t_final: f64,
    dt: f64,
    fd_offset: f64,
) -> Result<f64> {
    let (a, b, c) = frame_components(&system.surface, &p0, xi);
    let traj = integrate_flow(system, p0, t_final, dt)?;
    let lam0 = system.lambda(&p0);
    // K(xi) = (lambda x + ydot) iv at t = 0.
    let jac = integrate_jacobi(system, &traj, a, b, c - lam0 * a)?;
    let (xt, yt, ydt) = jac.end();
    let pend = traj.end();
    let lam_t = system.lambda(&pend);

    let delta = frame_to_coords(system, &p0, a, b, c);
    let fd = |eps: f64| -> Result<[f64; 3]> {
        let shift = |s: f64| {
            SmPoint::new(
                p0.x + s * delta[0],
                p0.y + s * delta[1],
                p0.omega + s * delta[2],
            )
        };
        let plus = flow_endpoint(system, shift(eps), t_final, dt)?;
        let minus = flow_endpoint(system, shift(-eps), t_final, dt)?;
        Ok([
            (plus.x - minus.x) / (2.0 * eps),
            (plus.y - minus.y) / (2.0 * eps),
            (plus.omega - minus.omega) / (2.0 * eps),
        ])
    };
    let d1 = fd(fd_offset)?;
    let d2 = fd(fd_offset / 2.0)?;
    let rich = [
        (4.0 * d2[0] - d1[0]) / 3.0,
        (4.0 * d2[1] - d1[1]) / 3.0,
        (4.0 * d2[2] - d1[2]) / 3.0,
    ];
    let (af, bf, cf) = coords_to_frame(system, &pend, rich);
    let r1 = (af - xt).abs();
    let r2 = (bf - yt).abs();
    let r3 = (cf - (lam_t * xt + ydt)).abs();
    Ok(r1.max(r2).max(r3))
}

/// Forward-then-reversed return defect: zero for pure thermostats,
/// order one for genuinely magnetic flows.
pub fn reversibility_defect(
    system: &FlowSystem,
    p0: SmPoint,
    t_final: f64,
    dt: f64,
) -> Result<f64> {
    let fwd = flow_endpoint(system, p0, t_final, dt)?;
    let back = flow_endpoint(system, fwd.reversed(), t_final, dt)?;
    Ok(system.surface.sm_distance(&back, &p0.reversed()))
}
