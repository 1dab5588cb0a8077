//! Cubic B-spline interpolation.
//!
//! Samples are converted to spline coefficients with the exact recursive
//! prefilter (single pole `z = sqrt(3) - 2`, whole-sample mirror boundaries),
//! so the interpolant passes through every sample and reproduces cubic
//! polynomials away from the borders. The boundary transient decays as
//! `|z|^k` with distance `k` in pixels from an edge.
//!
//! The interpolant is defined on the hull of pixel centres; outside it the
//! value and gradient are zero.

use crate::error::{Error, Result};
use crate::grid::{Geometry, Image2D, Vec2};

pub(crate) const POLE: f64 = -0.267_949_192_431_122_7; // sqrt(3) - 2

/// Cubic B-spline weights for the four taps around fractional offset `u`.
#[inline]
pub(crate) fn bspline_weights(u: f64) -> [f64; 4] {
    let v = 1.0 - u;
    let u2 = u * u;
    let u3 = u2 * u;
    [
        v * v * v / 6.0,
        (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0,
        (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0,
        u3 / 6.0,
    ]
}

/// Derivatives of [`bspline_weights`] with respect to `u`.
#[inline]
pub(crate) fn bspline_weight_derivs(u: f64) -> [f64; 4] {
    let v = 1.0 - u;
    [
        -0.5 * v * v,
        1.5 * u * u - 2.0 * u,
        -1.5 * u * u + u + 0.5,
        0.5 * u * u,
    ]
}

/// Prefilter for signals of one fixed length, with the boundary
/// initialisation weights precomputed.
pub(crate) struct LinePrefilter {
    n: usize,
    /// Weight of each sample in the causal initial value, exact for the
    /// mirror-symmetric extension and already divided by `1 - z^(2n-2)`.
    init: Vec<f64>,
}

impl LinePrefilter {
    pub(crate) fn new(n: usize) -> Self {
        let z = POLE;
        let denom = 1.0 - z.powi(2 * n as i32 - 2);
        let init = (0..n)
            .map(|k| match k {
                0 => 1.0,
                k if k == n - 1 => z.powi(k as i32),
                k => z.powi(k as i32) + z.powi((2 * n - 2 - k) as i32),
            } / denom)
            .collect();
        LinePrefilter { n, init }
    }

    /// Filters one contiguous signal in place.
    pub(crate) fn apply(&self, s: &mut [f64]) {
        debug_assert_eq!(s.len(), self.n);
        let n = self.n;
        if n < 2 {
            return;
        }
        let z = POLE;
        let lambda = (1.0 - z) * (1.0 - 1.0 / z);
        for v in s.iter_mut() {
            *v *= lambda;
        }
        s[0] = self.initial(|k| s[k]);
        for k in 1..n {
            s[k] += z * s[k - 1];
        }
        s[n - 1] = (z / (z * z - 1.0)) * (s[n - 1] + z * s[n - 2]);
        for k in (0..n - 1).rev() {
            s[k] = z * (s[k + 1] - s[k]);
        }
    }

    /// Filters `lanes` interleaved signals in place: element `k` of lane `c`
    /// is `data[k * lanes + c]`, so a row-major image is filtered along its
    /// columns with `lanes = width`.
    pub(crate) fn apply_lanes(&self, data: &mut [f64], lanes: usize) {
        let n = self.n;
        debug_assert_eq!(data.len(), n * lanes);
        if n < 2 {
            return;
        }
        let z = POLE;
        let lambda = (1.0 - z) * (1.0 - 1.0 / z);
        for v in data.iter_mut() {
            *v *= lambda;
        }
        let first: Vec<f64> = (0..lanes).map(|c| self.initial(|k| data[k * lanes + c])).collect();
        data[..lanes].copy_from_slice(&first);
        for k in 1..n {
            let (prev, cur) = data[(k - 1) * lanes..(k + 1) * lanes].split_at_mut(lanes);
            for (c, p) in cur.iter_mut().zip(prev.iter()) {
                *c += z * p;
            }
        }
        let tail = z / (z * z - 1.0);
        let (before, last) = data[(n - 2) * lanes..].split_at_mut(lanes);
        for (l, b) in last.iter_mut().zip(before.iter()) {
            *l = tail * (*l + z * b);
        }
        for k in (0..n - 1).rev() {
            let (cur, next) = data[k * lanes..(k + 2) * lanes].split_at_mut(lanes);
            for (c, nx) in cur.iter_mut().zip(next.iter()) {
                *c = z * (nx - *c);
            }
        }
    }

    #[inline]
    fn initial(&self, sample: impl Fn(usize) -> f64) -> f64 {
        self.init.iter().enumerate().map(|(k, &w)| w * sample(k)).sum()
    }
}

#[inline]
fn mirror(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as i64 {
        m = period - m;
    }
    m as usize
}

/// Prefiltered cubic B-spline representation of an [`Image2D`].
#[derive(Debug, Clone)]
pub struct CubicInterpolant {
    geometry: Geometry,
    coeffs: Vec<f64>,
}

impl CubicInterpolant {
    pub fn new(img: &Image2D) -> Self {
        let g = *img.geometry();
        let (w, h) = (g.width, g.height);
        let mut coeffs: Vec<f64> = img.values().iter().map(|&v| v as f64).collect();
        let rows = LinePrefilter::new(w);
        for row in coeffs.chunks_exact_mut(w) {
            rows.apply(row);
        }
        LinePrefilter::new(h).apply_lanes(&mut coeffs, w);
        CubicInterpolant { geometry: g, coeffs }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    fn check(p: Vec2) -> Result<()> {
        if p.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!("non-finite sample point ({}, {})", p.x, p.y)))
        }
    }

    pub fn sample(&self, p: Vec2) -> Result<f64> {
        Self::check(p)?;
        Ok(self.eval(p).map_or(0.0, |(v, _)| v))
    }

    /// Spatial gradient in intensity per mm.
    pub fn gradient(&self, p: Vec2) -> Result<Vec2> {
        Self::check(p)?;
        Ok(self.eval(p).map_or(Vec2::ZERO, |(_, g)| g))
    }

    /// Value and physical gradient, or `None` outside the pixel-centre hull.
    #[inline]
    pub fn eval(&self, p: Vec2) -> Option<(f64, Vec2)> {
        let g = &self.geometry;
        let (cx, cy) = g.continuous_index(p);
        let max_x = (g.width - 1) as f64;
        let max_y = (g.height - 1) as f64;
        // Negated comparisons also reject NaN.
        if !(cx >= 0.0 && cx <= max_x && cy >= 0.0 && cy <= max_y) {
            return None;
        }
        let ix = cx.floor();
        let iy = cy.floor();
        let (ux, uy) = (cx - ix, cy - iy);
        let (ix, iy) = (ix as i64, iy as i64);
        let wx = bspline_weights(ux);
        let wy = bspline_weights(uy);
        let dx = bspline_weight_derivs(ux);
        let dy = bspline_weight_derivs(uy);

        let mut cols = [0usize; 4];
        for (k, c) in cols.iter_mut().enumerate() {
            *c = mirror(ix - 1 + k as i64, g.width);
        }
        let mut value = 0.0;
        let mut gx = 0.0;
        let mut gy = 0.0;
        for (j, (&wyj, &dyj)) in wy.iter().zip(&dy).enumerate() {
            let row = mirror(iy - 1 + j as i64, g.height) * g.width;
            let mut along = 0.0;
            let mut along_d = 0.0;
            for k in 0..4 {
                let c = self.coeffs[row + cols[k]];
                along += wx[k] * c;
                along_d += dx[k] * c;
            }
            value += wyj * along;
            gx += wyj * along_d;
            gy += dyj * along;
        }
        Some((value, Vec2::new(gx / g.spacing.x, gy / g.spacing.y)))
    }
}
