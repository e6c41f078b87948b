//! Periodic spectral grids on the torus chart.
//!
//! Fields are stored as complex values on a uniform `nx x ny` lattice over
//! `[0, lx) x [0, ly)`. Derivatives go through the FFT, so band-limited data
//! is differentiated exactly (up to rounding).

use num_complex::Complex64;
use rustfft::FftPlanner;

#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    /// Row-major: `data[iy * nx + ix]`.
    pub data: Vec<Complex64>,
}

impl GridField {
    pub fn zeros(nx: usize, ny: usize, lx: f64, ly: f64) -> Self {
        GridField {
            nx,
            ny,
            lx,
            ly,
            data: vec![Complex64::new(0.0, 0.0); nx * ny],
        }
    }

    pub fn from_fn(
        nx: usize,
        ny: usize,
        lx: f64,
        ly: f64,
        mut f: impl FnMut(f64, f64) -> Complex64,
    ) -> Self {
        let mut g = GridField::zeros(nx, ny, lx, ly);
        for iy in 0..ny {
            let y = iy as f64 * ly / ny as f64;
            for ix in 0..nx {
                let x = ix as f64 * lx / nx as f64;
                g.data[iy * nx + ix] = f(x, y);
            }
        }
        g
    }

    pub fn at(&self, ix: usize, iy: usize) -> Complex64 {
        self.data[iy * self.nx + ix]
    }

    pub fn node(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            ix as f64 * self.lx / self.nx as f64,
            iy as f64 * self.ly / self.ny as f64,
        )
    }

    fn same_shape(&self, other: &GridField) {
        assert_eq!(self.nx, other.nx);
        assert_eq!(self.ny, other.ny);
    }

    pub fn add(&self, other: &GridField) -> GridField {
        self.same_shape(other);
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &GridField) -> GridField {
        self.same_shape(other);
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out
    }

    pub fn mul(&self, other: &GridField) -> GridField {
        self.same_shape(other);
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a *= b;
        }
        out
    }

    pub fn scale(&self, s: Complex64) -> GridField {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= s;
        }
        out
    }

    pub fn conj(&self) -> GridField {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a = a.conj();
        }
        out
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> GridField {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a = f(*a);
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Forward 2-D DFT coefficients, normalised by 1/(nx*ny).
    pub fn coefficients(&self) -> Vec<Complex64> {
        let mut buf = self.data.clone();
        fft2(&mut buf, self.nx, self.ny, false);
        let norm = 1.0 / (self.nx * self.ny) as f64;
        for c in buf.iter_mut() {
            *c *= norm;
        }
        buf
    }

    fn from_coefficients(&self, mut coeffs: Vec<Complex64>) -> GridField {
        fft2(&mut coeffs, self.nx, self.ny, true);
        GridField {
            nx: self.nx,
            ny: self.ny,
            lx: self.lx,
            ly: self.ly,
            data: coeffs,
        }
    }

    /// Spectral partial derivative along x.
    pub fn dx(&self) -> GridField {
        self.spectral_derivative(true)
    }

    /// Spectral partial derivative along y.
    pub fn dy(&self) -> GridField {
        self.spectral_derivative(false)
    }

    fn spectral_derivative(&self, along_x: bool) -> GridField {
        let mut coeffs = self.coefficients();
        for iy in 0..self.ny {
            let ky = wavenumber(iy, self.ny, self.ly);
            for ix in 0..self.nx {
                let kx = wavenumber(ix, self.nx, self.lx);
                let k = if along_x { kx } else { ky };
                coeffs[iy * self.nx + ix] *= Complex64::new(0.0, k);
            }
        }
        self.from_coefficients(coeffs)
    }

    /// Trapezoid quadrature over the full period cell; exact for trig
    /// polynomials below the Nyquist band.
    pub fn integral(&self) -> Complex64 {
        let sum: Complex64 = self.data.iter().sum();
        sum * (self.lx * self.ly / (self.nx * self.ny) as f64)
    }
}

/// Signed angular wavenumber for FFT bin `i` of `n` bins over period `l`.
pub fn wavenumber(i: usize, n: usize, l: f64) -> f64 {
    let k = if i <= n / 2 { i as isize } else { i as isize - n as isize };
    // Zero out the unmatched Nyquist mode for odd derivatives.
    if n % 2 == 0 && i == n / 2 {
        return 0.0;
    }
    2.0 * std::f64::consts::PI * k as f64 / l
}

/// In-place 2-D FFT, rows then columns.
pub fn fft2(data: &mut [Complex64], nx: usize, ny: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fx = if inverse {
        planner.plan_fft_inverse(nx)
    } else {
        planner.plan_fft_forward(nx)
    };
    for row in data.chunks_exact_mut(nx) {
        fx.process(row);
    }
    let fy = if inverse {
        planner.plan_fft_inverse(ny)
    } else {
        planner.plan_fft_forward(ny)
    };
    let mut col = vec![Complex64::new(0.0, 0.0); ny];
    for ix in 0..nx {
        for iy in 0..ny {
            col[iy] = data[iy * nx + ix];
        }
        fy.process(&mut col);
        for iy in 0..ny {
            data[iy * nx + ix] = col[iy];
        }
    }
}

/// Trigonometric interpolant of a grid field, for evaluation off the lattice.
///
/// Built once (one FFT), evaluated many times along orbits.
#[derive(Debug, Clone)]
pub struct Interpolant {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    coeffs: Vec<Complex64>,
}

impl Interpolant {
    pub fn new(field: &GridField) -> Self {
        Interpolant {
            nx: field.nx,
            ny: field.ny,
            lx: field.lx,
            ly: field.ly,
            coeffs: field.coefficients(),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> Complex64 {
        // Factorised mode sum: O(nx + ny) exponentials, O(nx*ny) muls.
        let ex: Vec<Complex64> = (0..self.nx)
            .map(|ix| (Complex64::i() * wavenumber(ix, self.nx, self.lx) * x).exp())
            .collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for iy in 0..self.ny {
            let ey = (Complex64::i() * wavenumber(iy, self.ny, self.ly) * y).exp();
            let mut row = Complex64::new(0.0, 0.0);
            for ix in 0..self.nx {
                row += self.coeffs[iy * self.nx + ix] * ex[ix];
            }
            acc += row * ey;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn cosfield(n: usize) -> GridField {
        GridField::from_fn(n, n, TAU, TAU, |x, y| {
            Complex64::new((x).cos() * (2.0 * y).sin(), 0.0)
        })
    }

    #[test]
    fn spectral_derivative_is_exact_for_band_limited_data() {
        let g = cosfield(32);
        let dx = g.dx();
        let dy = g.dy();
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                let (x, y) = g.node(ix, iy);
                let ex = -(x.sin()) * (2.0 * y).sin();
                let ey = (x.cos()) * 2.0 * (2.0 * y).cos();
                assert!((dx.at(ix, iy).re - ex).abs() < 1e-12);
                assert!((dy.at(ix, iy).re - ey).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quadrature_of_mean_free_field_vanishes() {
        let g = cosfield(32);
        assert!(g.integral().norm() < 1e-12);
        let one = GridField::from_fn(16, 16, TAU, TAU, |_, _| Complex64::new(1.0, 0.0));
        assert!((one.integral().re - TAU * TAU).abs() < 1e-10);
    }

    #[test]
    fn interpolant_matches_analytic_values_off_lattice() {
        let g = cosfield(32);
        let it = Interpolant::new(&g);
        let (x, y) = (0.123_f64, 4.56_f64);
        let exact = x.cos() * (2.0 * y).sin();
        assert!((it.eval(x, y).re - exact).abs() < 1e-12);
        assert!(it.eval(x, y).im.abs() < 1e-12);
    }
}
