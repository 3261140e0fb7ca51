//! `oracle-check`: runs the slow direct-summation references against the
//! fast transforms and reports the worst relative error of each pair.

use ionfringe_core::atom::{LineParams, ScatterResponse};
use ionfringe_core::fft::{dft2_direct, unitary_dft2, Direction};
use ionfringe_core::imaging::{
    scattered_image_direct, scattered_image_field_with_pupil, ImagingSystem,
};
use ionfringe_core::propagate::{fresnel_propagate, max_safe_dz, quadrature_propagate};
use ionfringe_core::{Complex64, Field, Grid};

use crate::error::Result;

pub struct OracleRow {
    pub name: String,
    pub max_rel_error: f64,
    pub threshold: f64,
}

impl OracleRow {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.threshold
    }
}

fn random_field(n: usize, pitch: f64, wavelength: f64, seed: u64) -> Field {
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    let mut next = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let grid = Grid::centered(n, pitch).expect("test grid");
    let amp = (0..n * n).map(|_| Complex64::new(next(), next())).collect();
    Field::new(grid, amp, wavelength, 0.0).expect("test field")
}

fn field_rel_err(fast: &Field, slow: &Field) -> f64 {
    let scale = slow
        .amplitude()
        .iter()
        .map(|a| a.norm())
        .fold(0.0, f64::max);
    fast.amplitude()
        .iter()
        .zip(slow.amplitude())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
        / scale
}

pub fn run() -> Result<Vec<OracleRow>> {
    let lambda = 369.5e-9;
    let mut rows = Vec::new();

    // Unitary transform vs the direct double sum.
    let mut worst = 0.0f64;
    for seed in [3u64, 17, 40] {
        let f = random_field(16, 1e-6, lambda, seed);
        let fast = unitary_dft2(&f, Direction::Forward);
        let slow = dft2_direct(&f, Direction::Forward);
        worst = worst.max(field_rel_err(&fast, &slow));
    }
    rows.push(OracleRow {
        name: "unitary_dft2 vs direct sum (16^2, 3 fields)".into(),
        max_rel_error: worst,
        threshold: 1e-12,
    });

    // Fresnel transfer-function propagation vs direct convolution sum.
    let mut worst = 0.0f64;
    for (n, seeds, dz_fracs) in [
        (32usize, vec![1u64, 2, 3], vec![0.3, -0.55, 0.8]),
        (64usize, vec![4u64, 5], vec![0.45, -0.7]),
    ] {
        for seed in seeds {
            let f = random_field(n, 1e-6, lambda, seed);
            let safe = max_safe_dz(&f);
            for frac in &dz_fracs {
                let dz = frac * safe;
                let fast = fresnel_propagate(&f, dz)?;
                let slow = quadrature_propagate(&f, dz)?;
                worst = worst.max(field_rel_err(&fast, &slow));
            }
        }
    }
    rows.push(OracleRow {
        name: "fresnel_propagate vs quadrature_propagate (32^2, 64^2)".into(),
        max_rel_error: worst,
        threshold: 1e-6,
    });

    // Image formation: fast transform vs direct Fourier sum, 32^2 pupil.
    let sys = ImagingSystem::new(3e-3, 585.0, 0.64, 1.5e-3, 0.0, lambda)?;
    let contain = sys.pupil_containment_radius();
    let dx = lambda * sys.f_fresnel() / (2.15 * contain);
    let grid = Grid::centered(32, dx * sys.magnification())?;
    let line = LineParams::new(34e6, 0.0, 0.1)?;
    let resp = ScatterResponse::at(-13e6, &line);
    let zeta = sys.defocus_image_from_object(1.2e-6);
    let a_value = 0.4 / sys.rho0().powi(4);
    let mut worst = 0.0f64;
    for (z, a) in [
        (0.0, 0.0),
        (zeta, 0.0),
        (-zeta, 0.0),
        (0.0, a_value),
        (zeta, a_value),
    ] {
        let sys_a = sys.with_aberration(a)?;
        let fast = scattered_image_field_with_pupil(&resp, &sys_a, z, &grid, 32)?;
        let slow = scattered_image_direct(&resp, &sys_a, z, &grid, 32)?;
        worst = worst.max(field_rel_err(&fast, &slow));
    }
    rows.push(OracleRow {
        name: "scattered_image_field vs direct sum (32^2 pupil)".into(),
        max_rel_error: worst,
        threshold: 1e-8,
    });

    Ok(rows)
}
