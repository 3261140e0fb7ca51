use std::f64::consts::PI;

use crate::error::{CoreError, Result};
use crate::fft::{fft2_unitary_inplace, Direction};
use crate::field::Field;
use crate::Complex64;

/// Largest |dz| for which the Fresnel transfer-function phase is Nyquist
/// sampled on this grid: the quadratic phase must change by less than pi
/// between adjacent frequency samples, giving `|dz| <= n * pitch^2 / lambda`.
pub fn max_safe_dz(field: &Field) -> f64 {
    let g = field.grid();
    g.n() as f64 * g.pitch() * g.pitch() / field.wavelength()
}

fn check_dz(field: &Field, dz: f64) -> Result<()> {
    if !dz.is_finite() {
        return Err(CoreError::Config("dz must be finite".into()));
    }
    let safe = max_safe_dz(field);
    if dz.abs() > safe {
        return Err(CoreError::Sampling(format!(
            "propagation by dz = {dz:.6e} m aliases the transfer-function phase; \
             maximum safe |dz| on this grid is {safe:.6e} m"
        )));
    }
    Ok(())
}

/// Sampled Fresnel transfer function at wrapped frequency index (kx, ky).
///
/// `H = exp(i 2 pi dz / lambda) * exp(-i pi lambda dz f^2)`; pure phase, so
/// propagation is exactly unitary and composes exactly over dz.
fn transfer_sample(kx: usize, ky: usize, n: usize, pitch: f64, lambda: f64, dz: f64) -> Complex64 {
    let wrap = |k: usize| -> f64 {
        if k <= n / 2 {
            k as f64
        } else {
            k as f64 - n as f64
        }
    };
    let df = 1.0 / (n as f64 * pitch);
    let fx = wrap(kx) * df;
    let fy = wrap(ky) * df;
    let phase = 2.0 * PI * dz / lambda - PI * lambda * dz * (fx * fx + fy * fy);
    Complex64::from_polar(1.0, phase)
}

/// Advances the field by `dz` along the optic axis with the Fresnel
/// transfer function applied in the frequency domain.
///
/// Energy is conserved exactly (the transfer function is pure phase) and
/// successive propagations compose: `propagate(propagate(f, a), b)` equals
/// `propagate(f, a + b)` up to rounding.
pub fn fresnel_propagate(field: &Field, dz: f64) -> Result<Field> {
    check_dz(field, dz)?;
    let n = field.grid().n();
    let pitch = field.grid().pitch();
    let lambda = field.wavelength();
    let mut data = field.amplitude().to_vec();
    fft2_unitary_inplace(&mut data, n, Direction::Forward);
    for ky in 0..n {
        for kx in 0..n {
            data[ky * n + kx] *= transfer_sample(kx, ky, n, pitch, lambda, dz);
        }
    }
    fft2_unitary_inplace(&mut data, n, Direction::Inverse);
    Ok(Field::from_parts(
        *field.grid(),
        data,
        lambda,
        field.z() + dz,
    ))
}

/// Maximum grid side accepted by [`quadrature_propagate`].
pub const MAX_QUADRATURE_N: usize = 64;

/// Same contract as [`fresnel_propagate`], evaluated as a direct circular
/// convolution sum: the discrete Fresnel kernel is obtained by a direct
/// inverse-DFT sum of the sampled transfer function and applied point by
/// point, `O(n^4)` in total. No transform code is shared with the fast
/// path, so the two routes cross-validate the frequency mapping, the
/// normalisation and the shift conventions.
pub fn quadrature_propagate(field: &Field, dz: f64) -> Result<Field> {
    let n = field.grid().n();
    if n > MAX_QUADRATURE_N {
        return Err(CoreError::Resource(format!(
            "direct quadrature propagation is O(n^4) and limited to n <= {MAX_QUADRATURE_N}, got {n}"
        )));
    }
    check_dz(field, dz)?;
    let pitch = field.grid().pitch();
    let lambda = field.wavelength();

    // Kernel h[d] = (1/n^2) sum_k H_k exp(+2 pi i k.d / n), evaluated by the
    // direct double sum over frequency indices.
    let mut kernel = vec![Complex64::new(0.0, 0.0); n * n];
    let step = 2.0 * PI / n as f64;
    for dy in 0..n {
        for dx in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for ky in 0..n {
                for kx in 0..n {
                    let h = transfer_sample(kx, ky, n, pitch, lambda, dz);
                    let angle = step * (kx * dx + ky * dy) as f64;
                    acc += h * Complex64::new(angle.cos(), angle.sin());
                }
            }
            kernel[dy * n + dx] = acc / (n * n) as f64;
        }
    }

    let input = field.amplitude();
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for oy in 0..n {
        for ox in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for sy in 0..n {
                let dy = (oy + n - sy) % n;
                for sx in 0..n {
                    let dx = (ox + n - sx) % n;
                    acc += input[sy * n + sx] * kernel[dy * n + dx];
                }
            }
            out[oy * n + ox] = acc;
        }
    }
    Ok(Field::from_parts(
        *field.grid(),
        out,
        lambda,
        field.z() + dz,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::gaussian_beam;
    use crate::grid::Grid;

    const LAMBDA: f64 = 369.5e-9;

    fn random_field(n: usize, pitch: f64, seed: u64) -> Field {
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let grid = Grid::centered(n, pitch).unwrap();
        let amp = (0..n * n)
            .map(|_| Complex64::new(next(), next()))
            .collect();
        Field::new(grid, amp, LAMBDA, 0.0).unwrap()
    }

    fn max_abs_diff(a: &Field, b: &Field) -> f64 {
        a.amplitude()
            .iter()
            .zip(b.amplitude())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn zero_distance_is_identity() {
        let f = random_field(32, 1e-6, 3);
        let p = fresnel_propagate(&f, 0.0).unwrap();
        assert!(max_abs_diff(&f, &p) < 1e-13);
        let q = quadrature_propagate(&f, 0.0).unwrap();
        assert!(max_abs_diff(&f, &q) < 1e-12);
    }

    #[test]
    fn energy_is_conserved() {
        let f = random_field(64, 0.8e-6, 11);
        let dz = 0.5 * max_safe_dz(&f);
        let p = fresnel_propagate(&f, dz).unwrap();
        assert!((p.power() - f.power()).abs() < 1e-10 * f.power());
    }

    #[test]
    fn semigroup_property() {
        let f = random_field(64, 0.8e-6, 5);
        let safe = max_safe_dz(&f);
        let (z1, z2) = (0.3 * safe, 0.45 * safe);
        let two_step = fresnel_propagate(&fresnel_propagate(&f, z1).unwrap(), z2).unwrap();
        let one_step = fresnel_propagate(&f, z1 + z2).unwrap();
        let scale = one_step
            .amplitude()
            .iter()
            .map(|a| a.norm())
            .fold(0.0, f64::max);
        assert!(max_abs_diff(&two_step, &one_step) / scale < 1e-10);
        assert_eq!(two_step.z(), one_step.z());
    }

    #[test]
    fn round_trip_restores_input() {
        let f = random_field(64, 0.8e-6, 9);
        let dz = 0.6 * max_safe_dz(&f);
        let back = fresnel_propagate(&fresnel_propagate(&f, dz).unwrap(), -dz).unwrap();
        assert!(max_abs_diff(&f, &back) < 1e-10);
    }

    #[test]
    fn rejects_aliased_dz_and_reports_safe_range() {
        let f = random_field(32, 1e-6, 1);
        let safe = max_safe_dz(&f);
        let err = fresnel_propagate(&f, 1.5 * safe).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("maximum safe"), "{msg}");
        assert!(fresnel_propagate(&f, 0.99 * safe).is_ok());
    }

    #[test]
    fn gaussian_beam_width_matches_analytic_propagation() {
        // Oracle: w(z) = w0 sqrt(1 + (z/zR)^2) with zR = pi w0^2 / lambda,
        // measured through the second moment of intensity.
        let pitch = 0.6e-6;
        let grid = Grid::centered(256, pitch).unwrap();
        let fwhm = 5e-6;
        let w0 = fwhm / (2.0 * std::f64::consts::LN_2).sqrt();
        let beam = gaussian_beam(grid, fwhm, LAMBDA, 1.0).unwrap();
        let z_r = PI * w0 * w0 / LAMBDA;
        let dz = 150e-6;
        assert!(dz < max_safe_dz(&beam));
        let out = fresnel_propagate(&beam, dz).unwrap();

        let mut norm = 0.0;
        let mut r2_sum = 0.0;
        for iy in 0..256 {
            for ix in 0..256 {
                let (x, y) = grid.xy(ix, iy);
                let w = out.sample(ix, iy).norm_sqr();
                norm += w;
                r2_sum += w * (x * x + y * y);
            }
        }
        let w_measured = (2.0 * r2_sum / norm).sqrt();
        let w_expected = w0 * (1.0 + (dz / z_r).powi(2)).sqrt();
        let rel = (w_measured - w_expected).abs() / w_expected;
        assert!(rel < 5e-3, "width error {rel:.2e}");
    }

    #[test]
    fn quadrature_matches_fast_path() {
        let f = random_field(32, 1e-6, 21);
        let dz = 0.7 * max_safe_dz(&f);
        let fast = fresnel_propagate(&f, dz).unwrap();
        let slow = quadrature_propagate(&f, dz).unwrap();
        let scale = fast
            .amplitude()
            .iter()
            .map(|a| a.norm())
            .fold(0.0, f64::max);
        let rel = max_abs_diff(&fast, &slow) / scale;
        assert!(rel < 1e-6, "relative error {rel:.2e}");
    }

    #[test]
    fn quadrature_rejects_large_grids() {
        let f = random_field(128, 1e-6, 2);
        assert!(matches!(
            quadrature_propagate(&f, 0.0),
            Err(CoreError::Resource(_))
        ));
    }

    #[test]
    fn point_source_kernel_is_isotropic() {
        let n = 32;
        let grid = Grid::centered(n, 1e-6).unwrap();
        let mut amp = vec![Complex64::new(0.0, 0.0); n * n];
        amp[(n / 2) * n + n / 2] = Complex64::new(1.0, 0.0);
        let f = Field::new(grid, amp, LAMBDA, 0.0).unwrap();
        let dz = 0.5 * max_safe_dz(&f);
        let out = quadrature_propagate(&f, dz).unwrap();
        let peak = out.amplitude().iter().map(|a| a.norm()).fold(0.0, f64::max);
        let mut worst = 0.0f64;
        // Compare dihedral-symmetric sample pairs; index 0 has no mirror
        // partner on an even grid and is excluded.
        for iy in 1..n {
            for ix in 1..n {
                let v = out.sample(ix, iy).norm();
                for (mx, my) in [
                    (n - ix, iy),
                    (ix, n - iy),
                    (n - ix, n - iy),
                    (iy, ix),
                ] {
                    let m = out.sample(mx % n, my % n).norm();
                    worst = worst.max((v - m).abs());
                }
            }
        }
        assert!(worst / peak < 1e-9, "anisotropy {:.2e}", worst / peak);
    }
}
