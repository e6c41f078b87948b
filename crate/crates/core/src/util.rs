//! Seeded randomness, band-limited test-field generators, and environment
//! knobs shared by the test batteries and the CLI.

use std::rc::Rc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::field::ScalarField;
use crate::geometry::{Surface, ThermostatParams};
use crate::grid::GridField;
use crate::smfield::SmField;

/// Deterministic RNG for a given seed; every randomized battery goes
/// through this so runs are reproducible.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Worker cap from `THERMORAY_THREADS`, defaulting to the machine.
pub fn thread_limit() -> usize {
    std::env::var("THERMORAY_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Random real trigonometric polynomial on the torus chart with spatial
/// bandwidth at most `band` and coefficients of size `amp`.
pub fn random_band_limited(
    surface: &Surface,
    band: i32,
    amp: f64,
    rng: &mut impl Rng,
) -> ScalarField {
    let (n, lx, ly) = surface
        .grid_shape()
        .expect("random band-limited fields need a torus chart");
    let mut terms = Vec::new();
    for kx in 0..=band {
        for ky in -band..=band {
            if kx == 0 && ky <= 0 {
                continue;
            }
            terms.push((
                kx as f64 * std::f64::consts::TAU / lx,
                ky as f64 * std::f64::consts::TAU / ly,
                rng.gen_range(-amp..amp),
                rng.gen_range(0.0..std::f64::consts::TAU),
            ));
        }
    }
    // Mean-free by construction; add a constant offset separately if needed.
    ScalarField::Grid(GridField::from_fn(n, n, lx, ly, |x, y| {
        let mut v = 0.0;
        for &(wx, wy, a, ph) in &terms {
            v += a * (wx * x + wy * y + ph).cos();
        }
        Complex64::new(v, 0.0)
    }))
}

/// Random real SM field with vertical degree `kmax` and spatial bandwidth
/// `band` in every mode.
pub fn random_smfield(
    surface: &Rc<Surface>,
    kmax: i32,
    band: i32,
    amp: f64,
    rng: &mut impl Rng,
) -> SmField {
    let mut u = SmField::zero(surface, kmax);
    u.set_mode(0, random_band_limited(surface, band, amp, rng));
    for k in 1..=kmax {
        let re = random_band_limited(surface, band, amp, rng);
        let im = random_band_limited(surface, band, amp, rng);
        let m = re.add(&im.scale(Complex64::i()));
        u.set_mode(k, m.clone());
        u.set_mode(-k, m.conj());
    }
    u
}

/// Random thermostat with band-limited magnetic part and stream function.
pub fn random_thermostat(
    surface: &Surface,
    band: i32,
    amp: f64,
    rng: &mut impl Rng,
) -> ThermostatParams {
    ThermostatParams::from_fields(
        random_band_limited(surface, band, amp, rng),
        random_band_limited(surface, band, amp, rng),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SmPoint;
    use std::f64::consts::TAU;

    #[test]
    fn same_seed_same_field() {
        let s = Rc::new(Surface::flat_torus(TAU, TAU, 32));
        let a = random_smfield(&s, 2, 2, 1.0, &mut rng(7));
        let b = random_smfield(&s, 2, 2, 1.0, &mut rng(7));
        assert!(a.sub(&b).max_mode_abs() == 0.0);
    }

    #[test]
    fn random_smfield_is_real() {
        let s = Rc::new(Surface::flat_torus(TAU, TAU, 32));
        let u = random_smfield(&s, 3, 2, 1.0, &mut rng(11));
        for &(x, y, w) in &[(0.3, 1.1, 0.2), (4.0, 2.2, 3.9), (5.5, 0.1, 1.4)] {
            assert!(u.eval(&SmPoint::new(x, y, w)).im.abs() < 1e-13);
        }
    }
}
