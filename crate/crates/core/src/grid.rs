//! Physical-space 2D grids.
//!
//! Every public coordinate is in millimetres. A pixel `(col, row)` has its
//! centre at `origin + (col * spacing.x, row * spacing.y)`; `x` runs along
//! columns and `y` along rows. Pixel indices do not leak out of this module
//! and [`crate::interp`].

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Axis-aligned physical rectangle, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Rect { min, max }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn extent(&self) -> Vec2 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec2 {
        (self.min + self.max) * 0.5
    }

    pub fn approx_eq(&self, other: &Rect, tol: f64) -> bool {
        (self.min - other.min).norm() <= tol && (self.max - other.max).norm() <= tol
    }
}

/// Shape and physical placement shared by images and masks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub width: usize,
    pub height: usize,
    /// mm per pixel; `x` is the column step, `y` the row step.
    pub spacing: Vec2,
    /// Physical position of the centre of pixel (0, 0).
    pub origin: Vec2,
}

impl Geometry {
    pub fn new(width: usize, height: usize, spacing: Vec2, origin: Vec2) -> Result<Self> {
        let g = Geometry {
            width,
            height,
            spacing,
            origin,
        };
        g.validate()?;
        Ok(g)
    }

    /// Unit-spacing geometry at the origin; handy in tests and examples.
    pub fn unit(width: usize, height: usize) -> Self {
        Geometry {
            width,
            height,
            spacing: Vec2::new(1.0, 1.0),
            origin: Vec2::ZERO,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config(format!(
                "grid dimensions must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.spacing.x > 0.0 && self.spacing.y > 0.0) || !self.spacing.is_finite() {
            return Err(Error::Config(format!(
                "spacing must be strictly positive, got ({}, {})",
                self.spacing.x, self.spacing.y
            )));
        }
        if !self.origin.is_finite() {
            return Err(Error::Config("origin must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Physical centre of pixel `(col, row)`.
    pub fn point(&self, col: usize, row: usize) -> Vec2 {
        Vec2::new(
            self.origin.x + col as f64 * self.spacing.x,
            self.origin.y + row as f64 * self.spacing.y,
        )
    }

    /// Continuous (column, row) index of a physical point.
    pub(crate) fn continuous_index(&self, p: Vec2) -> (f64, f64) {
        (
            (p.x - self.origin.x) / self.spacing.x,
            (p.y - self.origin.y) / self.spacing.y,
        )
    }

    /// Hull of the pixel centres.
    pub fn domain(&self) -> Rect {
        Rect::new(self.origin, self.point(self.width - 1, self.height - 1))
    }

    /// Physical extent `dims × spacing` per axis.
    pub fn extent(&self) -> Vec2 {
        Vec2::new(
            self.width as f64 * self.spacing.x,
            self.height as f64 * self.spacing.y,
        )
    }

    pub(crate) fn ensure_same(&self, other: &Geometry, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::Input(format!(
                "{what}: geometry mismatch ({}x{} @ ({}, {}) vs {}x{} @ ({}, {}))",
                self.width,
                self.height,
                self.spacing.x,
                self.spacing.y,
                other.width,
                other.height,
                other.spacing.x,
                other.spacing.y
            )));
        }
        Ok(())
    }
}

fn ensure_finite_point(p: Vec2) -> Result<()> {
    if p.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("non-finite sample point ({}, {})", p.x, p.y)))
    }
}

/// Bilinear interpolation over a zero-padded grid.
fn bilinear(geom: &Geometry, p: Vec2, at: impl Fn(usize) -> f64) -> f64 {
    let (cx, cy) = geom.continuous_index(p);
    let x0 = cx.floor();
    let y0 = cy.floor();
    let fx = cx - x0;
    let fy = cy - y0;
    let (w, h) = (geom.width as i64, geom.height as i64);
    let pixel = |c: i64, r: i64| -> f64 {
        if c < 0 || r < 0 || c >= w || r >= h {
            0.0
        } else {
            at(r as usize * geom.width + c as usize)
        }
    };
    let (c0, r0) = (x0 as i64, y0 as i64);
    let top = pixel(c0, r0) * (1.0 - fx) + pixel(c0 + 1, r0) * fx;
    let bottom = pixel(c0, r0 + 1) * (1.0 - fx) + pixel(c0 + 1, r0 + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Scalar intensity image. Values are row-major and always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2D {
    geometry: Geometry,
    values: Vec<f32>,
}

impl Image2D {
    pub fn new(geometry: Geometry, values: Vec<f32>) -> Result<Self> {
        geometry.validate()?;
        if values.len() != geometry.len() {
            return Err(Error::Input(format!(
                "expected {} values for a {}x{} image, got {}",
                geometry.len(),
                geometry.width,
                geometry.height,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("intensity at index {i} is {}", values[i])));
        }
        Ok(Image2D { geometry, values })
    }

    pub fn filled(geometry: Geometry, value: f32) -> Result<Self> {
        Self::new(geometry, vec![value; geometry.len()])
    }

    /// Builds an image by evaluating `f` at every pixel centre.
    pub fn from_fn(geometry: Geometry, mut f: impl FnMut(Vec2) -> f64) -> Result<Self> {
        geometry.validate()?;
        let mut values = Vec::with_capacity(geometry.len());
        for row in 0..geometry.height {
            for col in 0..geometry.width {
                values.push(f(geometry.point(col, row)) as f32);
            }
        }
        Self::new(geometry, values)
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.values[row * self.geometry.width + col]
    }

    /// Bilinear sample at a physical point; outside the grid reads as zero.
    pub fn sample_linear(&self, p: Vec2) -> Result<f64> {
        ensure_finite_point(p)?;
        Ok(bilinear(&self.geometry, p, |i| self.values[i] as f64))
    }

    /// Cubic B-spline interpolant of this image (runs the prefilter).
    pub fn cubic(&self) -> crate::interp::CubicInterpolant {
        crate::interp::CubicInterpolant::new(self)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum::<f64>() / self.values.len() as f64
    }
}

/// Binary mask on a grid; every value is 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask2D {
    geometry: Geometry,
    values: Vec<u8>,
}

// Geometry holds f64s, so Eq/Hash are implemented by hand over bit patterns.
impl Eq for Geometry {}
impl std::hash::Hash for Geometry {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.width.hash(state);
        self.height.hash(state);
        for v in [self.spacing.x, self.spacing.y, self.origin.x, self.origin.y] {
            v.to_bits().hash(state);
        }
    }
}

impl Mask2D {
    pub fn new(geometry: Geometry, values: Vec<u8>) -> Result<Self> {
        geometry.validate()?;
        if values.len() != geometry.len() {
            return Err(Error::Input(format!(
                "expected {} mask values, got {}",
                geometry.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|&v| v > 1) {
            return Err(Error::Input(format!(
                "mask value at index {i} is {}, expected 0 or 1",
                values[i]
            )));
        }
        Ok(Mask2D { geometry, values })
    }

    pub fn empty(geometry: Geometry) -> Self {
        Mask2D {
            values: vec![0; geometry.len()],
            geometry,
        }
    }

    pub fn from_fn(geometry: Geometry, mut inside: impl FnMut(Vec2) -> bool) -> Result<Self> {
        geometry.validate()?;
        let mut values = Vec::with_capacity(geometry.len());
        for row in 0..geometry.height {
            for col in 0..geometry.width {
                values.push(inside(geometry.point(col, row)) as u8);
            }
        }
        Ok(Mask2D { geometry, values })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.values[row * self.geometry.width + col] != 0
    }

    pub fn set(&mut self, col: usize, row: usize, on: bool) {
        let w = self.geometry.width;
        self.values[row * w + col] = on as u8;
    }

    pub fn count(&self) -> usize {
        self.values.iter().map(|&v| v as usize).sum()
    }

    pub fn is_blank(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }

    /// Bilinear sample of the 0/1 field, zero outside the grid.
    pub fn sample_linear(&self, p: Vec2) -> Result<f64> {
        ensure_finite_point(p)?;
        Ok(bilinear(&self.geometry, p, |i| self.values[i] as f64))
    }

    /// Physical coordinates of every foreground pixel centre.
    pub fn foreground_points(&self) -> impl Iterator<Item = Vec2> + '_ {
        let g = self.geometry;
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(move |(i, _)| g.point(i % g.width, i / g.width))
    }

    /// Mean physical position of the foreground, `None` when empty.
    pub fn centroid(&self) -> Option<Vec2> {
        let mut sum = Vec2::ZERO;
        let mut n = 0usize;
        for p in self.foreground_points() {
            sum = sum + p;
            n += 1;
        }
        (n > 0).then(|| sum * (1.0 / n as f64))
    }
}
