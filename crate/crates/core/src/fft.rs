use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustfft::{Fft, FftDirection, FftPlanner};

use crate::field::Field;
use crate::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

impl Direction {
    fn fft_direction(self) -> FftDirection {
        match self {
            Direction::Forward => FftDirection::Forward,
            Direction::Inverse => FftDirection::Inverse,
        }
    }
}

thread_local! {
    static PLANS: RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> =
        RefCell::new(HashMap::new());
}

fn plan(n: usize, direction: Direction) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cache| {
        cache
            .borrow_mut()
            .entry((n, direction == Direction::Forward))
            .or_insert_with(|| FftPlanner::new().plan_fft(n, direction.fft_direction()))
            .clone()
    })
}

fn transpose_square(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// In-place unnormalised forward 2-D transform of a row-major `n x n`
/// buffer: plain DFT sums, no scaling.
pub(crate) fn fft2_raw_forward_inplace(data: &mut [Complex64], n: usize) {
    debug_assert_eq!(data.len(), n * n);
    let fft = plan(n, Direction::Forward);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for row in data.chunks_exact_mut(n) {
        fft.process_with_scratch(row, &mut scratch);
    }
    transpose_square(data, n);
    for row in data.chunks_exact_mut(n) {
        fft.process_with_scratch(row, &mut scratch);
    }
    transpose_square(data, n);
}

/// In-place unitary 2-D transform of a row-major `n x n` buffer.
///
/// Both directions are scaled by `1/n`, so `inverse(forward(x)) = x` and
/// `sum |x|^2` is preserved exactly up to rounding.
pub(crate) fn fft2_unitary_inplace(data: &mut [Complex64], n: usize, direction: Direction) {
    debug_assert_eq!(data.len(), n * n);
    let fft = plan(n, direction);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for row in data.chunks_exact_mut(n) {
        fft.process_with_scratch(row, &mut scratch);
    }
    transpose_square(data, n);
    for row in data.chunks_exact_mut(n) {
        fft.process_with_scratch(row, &mut scratch);
    }
    transpose_square(data, n);
    let scale = 1.0 / n as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Unitary 2-D discrete Fourier transform of a sampled field.
///
/// Frequency index 0 is the DC term; frequencies above `n/2` alias to
/// negative frequencies in the usual DFT order. The grid and plane
/// metadata are carried through unchanged.
pub fn unitary_dft2(field: &Field, direction: Direction) -> Field {
    let n = field.grid().n();
    let mut data = field.amplitude().to_vec();
    fft2_unitary_inplace(&mut data, n, direction);
    Field::from_parts(*field.grid(), data, field.wavelength(), field.z())
}

/// Direct `O(n^4)` evaluation of the same unitary DFT sum. Slow reference
/// used to validate the fast transform's indexing and normalisation.
pub fn dft2_direct(field: &Field, direction: Direction) -> Field {
    let n = field.grid().n();
    let sign = match direction {
        Direction::Forward => -1.0,
        Direction::Inverse => 1.0,
    };
    let input = field.amplitude();
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    let step = 2.0 * std::f64::consts::PI / n as f64;
    for ky in 0..n {
        for kx in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for jy in 0..n {
                for jx in 0..n {
                    let angle = sign * step * (kx * jx + ky * jy) as f64;
                    acc += input[jy * n + jx] * Complex64::new(angle.cos(), angle.sin());
                }
            }
            out[ky * n + kx] = acc / n as f64;
        }
    }
    Field::from_parts(*field.grid(), out, field.wavelength(), field.z())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn random_field(n: usize, seed: u64) -> Field {
        // Small deterministic LCG; test data only.
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let grid = Grid::centered(n, 1e-6).unwrap();
        let amp = (0..n * n)
            .map(|_| Complex64::new(next(), next()))
            .collect();
        Field::new(grid, amp, 369.5e-9, 0.0).unwrap()
    }

    #[test]
    fn constant_field_transforms_to_dc_delta() {
        let grid = Grid::centered(16, 1e-6).unwrap();
        let amp = vec![Complex64::new(1.0, 0.0); 256];
        let f = Field::new(grid, amp, 369.5e-9, 0.0).unwrap();
        let t = unitary_dft2(&f, Direction::Forward);
        assert!((t.sample(0, 0) - Complex64::new(16.0, 0.0)).norm() < 1e-12);
        for iy in 0..16 {
            for ix in 0..16 {
                if ix != 0 || iy != 0 {
                    assert!(t.sample(ix, iy).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn parseval_and_round_trip() {
        let f = random_field(32, 7);
        let t = unitary_dft2(&f, Direction::Forward);
        let back = unitary_dft2(&t, Direction::Inverse);
        assert!((t.power() - f.power()).abs() < 1e-12 * f.power());
        let max_err = f
            .amplitude()
            .iter()
            .zip(back.amplitude())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-13);
    }

    #[test]
    fn matches_direct_sum_oracle() {
        for seed in [1u64, 2, 3] {
            let f = random_field(16, seed);
            let fast = unitary_dft2(&f, Direction::Forward);
            let slow = dft2_direct(&f, Direction::Forward);
            let norm = slow
                .amplitude()
                .iter()
                .map(|a| a.norm())
                .fold(0.0, f64::max);
            let max_rel = fast
                .amplitude()
                .iter()
                .zip(slow.amplitude())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max)
                / norm;
            assert!(max_rel < 1e-12, "seed {seed}: relative error {max_rel:.2e}");
        }
    }
}
