//! Planned 2D FFTs over [`Raster`] grids.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::raster::Raster;

/// Forward and inverse 2D transforms for one grid shape. Cheap to clone and
/// safe to share between threads.
#[derive(Clone)]
pub struct Fft2d {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2d {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2d")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish()
    }
}

impl Fft2d {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2d {
            width,
            height,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, field: &mut Raster<Complex64>) {
        self.run(field, &self.row_fwd, &self.col_fwd);
    }

    /// Inverse transform including the `1/N` factor, so `inverse(forward(u)) == u`.
    pub fn inverse(&self, field: &mut Raster<Complex64>) {
        self.run(field, &self.row_inv, &self.col_inv);
        let scale = 1.0 / field.len() as f64;
        for v in field.data_mut() {
            *v *= scale;
        }
    }

    pub fn forward_real(&self, u: &Raster<f64>) -> Raster<Complex64> {
        let mut spec = u.to_complex();
        self.forward(&mut spec);
        spec
    }

    fn run(&self, field: &mut Raster<Complex64>, row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        assert_eq!(field.width(), self.width, "fft width mismatch");
        assert_eq!(field.height(), self.height, "fft height mismatch");
        let (w, h) = (self.width, self.height);
        let scratch_len = row
            .get_inplace_scratch_len()
            .max(col.get_inplace_scratch_len());
        let mut scratch = vec![Complex64::default(); scratch_len];

        let data = field.data_mut();
        row.process_with_scratch(data, &mut scratch[..row.get_inplace_scratch_len()]);

        let mut columns = vec![Complex64::default(); w * h];
        for y in 0..h {
            for x in 0..w {
                columns[x * h + y] = data[y * w + x];
            }
        }
        col.process_with_scratch(&mut columns, &mut scratch[..col.get_inplace_scratch_len()]);
        for x in 0..w {
            for y in 0..h {
                data[y * w + x] = columns[x * h + y];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(u: &Raster<Complex64>) -> Raster<Complex64> {
        let (w, h) = (u.width(), u.height());
        Raster::from_fn(w, h, |kx, ky| {
            let mut acc = Complex64::default();
            for y in 0..h {
                for x in 0..w {
                    let phase = -2.0
                        * std::f64::consts::PI
                        * ((kx * x) as f64 / w as f64 + (ky * y) as f64 / h as f64);
                    acc += u.get(x, y) * Complex64::from_polar(1.0, phase);
                }
            }
            acc
        })
    }

    #[test]
    fn matches_naive_dft_on_rectangular_grid() {
        let u = Raster::from_fn(6, 4, |x, y| {
            Complex64::new((x as f64 * 0.7 + y as f64).sin(), (x * y) as f64 * 0.1)
        });
        let mut fast = u.clone();
        let plan = Fft2d::new(6, 4);
        plan.forward(&mut fast);
        let slow = naive_dft(&u);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).norm() < 1e-12);
        }
        plan.inverse(&mut fast);
        for (a, b) in fast.data().iter().zip(u.data()) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
