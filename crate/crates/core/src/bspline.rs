//! Cubic B-spline free-form deformation.
//!
//! Control nodes are aligned to the minimum corner of the covered domain and
//! repeat every `control_spacing` mm. One extra node sits before the domain
//! and one after the last span, so each point of the domain has a full 4×4
//! support. Coefficients are displacements in mm stored channel-major: all
//! `x` displacements (row-major over nodes), then all `y` displacements.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Rect, Vec2};
use crate::interp::bspline_weights;

/// Relative slack when testing whether a point lies in the domain.
const DOMAIN_EPS: f64 = 1e-9;

/// Per-point derivative of the mapping with respect to the coefficients.
///
/// The same 16 weights apply to both channels: `nodes[k]` indexes the
/// `x` coefficient directly and the `y` coefficient at `nodes[k] + n_nodes`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub nodes: [usize; 16],
    pub weights: [f64; 16],
}

impl Stencil {
    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FfdRecord", into = "FfdRecord")]
pub struct BSplineFFD {
    domain: Rect,
    control_spacing: Vec2,
    rows: usize,
    cols: usize,
    coefficients: Vec<f64>,
}

/// On-disk form of a transform.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FfdRecord {
    control_spacing: Vec2,
    /// (rows, cols)
    control_dims: [usize; 2],
    domain: Rect,
    coefficients: Vec<f64>,
}

impl From<BSplineFFD> for FfdRecord {
    fn from(t: BSplineFFD) -> Self {
        FfdRecord {
            control_spacing: t.control_spacing,
            control_dims: [t.rows, t.cols],
            domain: t.domain,
            coefficients: t.coefficients,
        }
    }
}

impl TryFrom<FfdRecord> for BSplineFFD {
    type Error = Error;

    fn try_from(r: FfdRecord) -> Result<Self> {
        let t = BSplineFFD::identity(r.domain, r.control_spacing)?;
        if [t.rows, t.cols] != r.control_dims {
            return Err(Error::Input(format!(
                "control_dims {:?} inconsistent with domain and spacing (expected [{}, {}])",
                r.control_dims, t.rows, t.cols
            )));
        }
        t.with_coefficients(r.coefficients)
    }
}

fn spans(extent: f64, spacing: f64) -> usize {
    ((extent / spacing) - DOMAIN_EPS).ceil().max(1.0) as usize
}

impl BSplineFFD {
    /// Zero-displacement transform covering `domain`.
    pub fn identity(domain: Rect, control_spacing: Vec2) -> Result<Self> {
        let ext = domain.extent();
        if !(ext.x >= 0.0 && ext.y >= 0.0) || !domain.min.is_finite() || !domain.max.is_finite() {
            return Err(Error::Config(format!("invalid transform domain {domain:?}")));
        }
        if !(control_spacing.x > 0.0 && control_spacing.y > 0.0) || !control_spacing.is_finite() {
            return Err(Error::Config(format!(
                "control spacing must be positive, got ({}, {})",
                control_spacing.x, control_spacing.y
            )));
        }
        let cols = spans(ext.x, control_spacing.x) + 3;
        let rows = spans(ext.y, control_spacing.y) + 3;
        Ok(BSplineFFD {
            domain,
            control_spacing,
            rows,
            cols,
            coefficients: vec![0.0; 2 * rows * cols],
        })
    }

    /// Same grid with new coefficients.
    pub fn with_coefficients(&self, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != self.num_params() {
            return Err(Error::Input(format!(
                "expected {} coefficients, got {}",
                self.num_params(),
                coefficients.len()
            )));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("transform coefficient".into()));
        }
        Ok(BSplineFFD {
            coefficients,
            ..self.clone()
        })
    }

    /// Sets every node's displacement to `d`.
    pub fn uniform(domain: Rect, control_spacing: Vec2, d: Vec2) -> Result<Self> {
        let t = Self::identity(domain, control_spacing)?;
        let n = t.num_nodes();
        let mut c = vec![d.x; 2 * n];
        c[n..].fill(d.y);
        t.with_coefficients(c)
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn control_spacing(&self) -> Vec2 {
        self.control_spacing
    }

    /// (rows, cols), including the support border.
    pub fn control_dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn num_nodes(&self) -> usize {
        self.rows * self.cols
    }

    pub fn num_params(&self) -> usize {
        2 * self.num_nodes()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.coefficients
    }

    /// Physical position of node `(row, col)`.
    pub fn node_position(&self, row: usize, col: usize) -> Vec2 {
        Vec2::new(
            self.domain.min.x + (col as f64 - 1.0) * self.control_spacing.x,
            self.domain.min.y + (row as f64 - 1.0) * self.control_spacing.y,
        )
    }

    pub fn node_displacement(&self, row: usize, col: usize) -> Vec2 {
        let i = row * self.cols + col;
        Vec2::new(self.coefficients[i], self.coefficients[i + self.num_nodes()])
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let ext = self.domain.extent();
        let tol_x = DOMAIN_EPS * ext.x.max(1.0);
        let tol_y = DOMAIN_EPS * ext.y.max(1.0);
        p.x >= self.domain.min.x - tol_x
            && p.x <= self.domain.max.x + tol_x
            && p.y >= self.domain.min.y - tol_y
            && p.y <= self.domain.max.y + tol_y
    }

    /// Coefficient-space derivative of the mapping at `p`.
    pub fn point_jacobian(&self, p: Vec2) -> Result<Stencil> {
        self.stencil(p).ok_or_else(|| {
            Error::Domain(format!(
                "point ({}, {}) outside transform domain {:?}",
                p.x, p.y, self.domain
            ))
        })
    }

    pub(crate) fn stencil(&self, p: Vec2) -> Option<Stencil> {
        if !p.is_finite() || !self.contains(p) {
            return None;
        }
        let (bx, ux) = Self::cell(p.x - self.domain.min.x, self.control_spacing.x, self.cols - 3);
        let (by, uy) = Self::cell(p.y - self.domain.min.y, self.control_spacing.y, self.rows - 3);
        let wx = bspline_weights(ux);
        let wy = bspline_weights(uy);
        let mut nodes = [0usize; 16];
        let mut weights = [0.0; 16];
        for j in 0..4 {
            for i in 0..4 {
                nodes[j * 4 + i] = (by + j) * self.cols + bx + i;
                weights[j * 4 + i] = wy[j] * wx[i];
            }
        }
        Some(Stencil { nodes, weights })
    }

    /// First support node (grid index) and fractional position in the cell.
    #[inline]
    fn cell(offset: f64, spacing: f64, n_spans: usize) -> (usize, f64) {
        let t = (offset / spacing).max(0.0);
        let base = (t.floor() as usize).min(n_spans - 1);
        (base, (t - base as f64).min(1.0))
    }

    /// Displacement `T(p) - p` given a precomputed stencil.
    #[inline]
    pub fn displacement_with(&self, s: &Stencil) -> Vec2 {
        let n = self.num_nodes();
        let mut d = Vec2::ZERO;
        for (&node, &w) in s.nodes.iter().zip(&s.weights) {
            d.x += w * self.coefficients[node];
            d.y += w * self.coefficients[node + n];
        }
        d
    }

    pub fn transform_point(&self, p: Vec2) -> Result<Vec2> {
        let s = self.point_jacobian(p)?;
        Ok(p + self.displacement_with(&s))
    }

    /// Re-expresses this mapping on a grid with `spacing` over the same domain.
    ///
    /// Halving the spacing is exact: coarse knots are a subset of the fine
    /// knots, so the two-scale relation of the cubic B-spline gives the fine
    /// coefficients directly. Other ratios are refitted by least squares on a
    /// lattice of four samples per fine span, starting from the coarse
    /// displacement at each fine node (exact for uniform translations).
    pub fn upsample_to(&self, domain: Rect, spacing: Vec2) -> Result<Self> {
        let tol = 1e-6 * self.domain.extent().norm().max(1.0);
        if !self.domain.approx_eq(&domain, tol) {
            return Err(Error::Config(format!(
                "upsampling target domain {domain:?} differs from transform domain {:?}",
                self.domain
            )));
        }
        let fine = BSplineFFD::identity(self.domain, spacing)?;
        let halves = |c: f64, f: f64| (c - 2.0 * f).abs() <= 1e-12 * c;
        if halves(self.control_spacing.x, spacing.x) && halves(self.control_spacing.y, spacing.y) {
            let coeffs = self.refine_dyadic(fine.rows, fine.cols);
            return fine.with_coefficients(coeffs);
        }
        let n = fine.num_nodes();

        let lattice = |lo: f64, hi: f64, step: f64| -> Vec<f64> {
            let count = ((hi - lo) / step).ceil() as usize;
            let mut v: Vec<f64> = (0..count).map(|i| lo + i as f64 * step).collect();
            v.push(hi);
            v
        };
        let xs = lattice(self.domain.min.x, self.domain.max.x, spacing.x / 4.0);
        let ys = lattice(self.domain.min.y, self.domain.max.y, spacing.y / 4.0);
        let mut fine_stencils = Vec::with_capacity(xs.len() * ys.len());
        let mut targets = Vec::with_capacity(xs.len() * ys.len());
        for &y in &ys {
            for &x in &xs {
                let p = Vec2::new(x, y);
                let s = fine.stencil(p).expect("lattice inside domain");
                let cs = self.stencil(p).expect("lattice inside domain");
                fine_stencils.push(s);
                targets.push(self.displacement_with(&cs));
            }
        }

        let mut coeffs = vec![0.0; 2 * n];
        for row in 0..fine.rows {
            for col in 0..fine.cols {
                let q = fine.node_position(row, col);
                let q = Vec2::new(
                    q.x.clamp(self.domain.min.x, self.domain.max.x),
                    q.y.clamp(self.domain.min.y, self.domain.max.y),
                );
                let d = self.transform_point(q)? - q;
                coeffs[row * fine.cols + col] = d.x;
                coeffs[n + row * fine.cols + col] = d.y;
            }
        }

        for channel in 0..2 {
            let b: Vec<f64> = targets
                .iter()
                .map(|d| if channel == 0 { d.x } else { d.y })
                .collect();
            let x = &mut coeffs[channel * n..(channel + 1) * n];
            least_squares_cg(&fine_stencils, &b, x);
        }
        fine.with_coefficients(coeffs)
    }

    /// Fine coefficients for half the node spacing. Coarse node `j` sits on
    /// fine node `2j - 1`, and `β(x) = Σ_k h_k β(2x - k)` with
    /// `h = [1, 4, 6, 4, 1] / 8` for `k = -2..=2`.
    fn refine_dyadic(&self, rows_f: usize, cols_f: usize) -> Vec<f64> {
        const H: [f64; 5] = [0.125, 0.5, 0.75, 0.5, 0.125];
        let taps = |i: usize, len: usize| {
            // Coarse indices j with |i + 1 - 2j| <= 2.
            let lo = (i + 1).saturating_sub(2).div_ceil(2);
            let hi = ((i + 3) / 2).min(len.saturating_sub(1));
            (lo..=hi).map(move |j| (j, H[i + 3 - 2 * j]))
        };
        let n = self.num_nodes();
        let mut out = vec![0.0; 2 * rows_f * cols_f];
        for ch in 0..2 {
            let c = &self.coefficients[ch * n..(ch + 1) * n];
            let mut tmp = vec![0.0; self.rows * cols_f];
            for r in 0..self.rows {
                for i in 0..cols_f {
                    tmp[r * cols_f + i] = taps(i, self.cols).map(|(j, h)| h * c[r * self.cols + j]).sum();
                }
            }
            let dst = &mut out[ch * rows_f * cols_f..(ch + 1) * rows_f * cols_f];
            for i in 0..rows_f {
                for col in 0..cols_f {
                    dst[i * cols_f + col] = taps(i, self.rows).map(|(j, h)| h * tmp[j * cols_f + col]).sum();
                }
            }
        }
        out
    }

    /// Coefficient-space bending penalty and its gradient.
    ///
    /// Sums squared second differences of each displacement channel over the
    /// node grid (xx, yy and twice the mixed term), each divided by the
    /// squared node spacing, and normalises by the node count.
    pub fn bending_energy(&self) -> (f64, Vec<f64>) {
        let n = self.num_nodes();
        let (rows, cols) = (self.rows, self.cols);
        let (sx2, sy2) = (
            self.control_spacing.x * self.control_spacing.x,
            self.control_spacing.y * self.control_spacing.y,
        );
        let sxy = self.control_spacing.x * self.control_spacing.y;
        let mut value = 0.0;
        let mut grad = vec![0.0; 2 * n];
        let norm = 1.0 / n as f64;
        let mut term = |idx: &[(usize, f64)], weight: f64, base: usize| {
            let r: f64 = idx.iter().map(|&(i, a)| a * self.coefficients[base + i]).sum();
            value += weight * r * r * norm;
            for &(i, a) in idx {
                grad[base + i] += 2.0 * weight * r * a * norm;
            }
        };
        for base in [0, n] {
            for row in 0..rows {
                for col in 0..cols {
                    let at = |r: usize, c: usize| r * cols + c;
                    if col >= 1 && col + 1 < cols {
                        let k = [
                            (at(row, col - 1), 1.0 / sx2),
                            (at(row, col), -2.0 / sx2),
                            (at(row, col + 1), 1.0 / sx2),
                        ];
                        term(&k, 1.0, base);
                    }
                    if row >= 1 && row + 1 < rows {
                        let k = [
                            (at(row - 1, col), 1.0 / sy2),
                            (at(row, col), -2.0 / sy2),
                            (at(row + 1, col), 1.0 / sy2),
                        ];
                        term(&k, 1.0, base);
                    }
                    if row + 1 < rows && col + 1 < cols {
                        let k = [
                            (at(row, col), 1.0 / sxy),
                            (at(row, col + 1), -1.0 / sxy),
                            (at(row + 1, col), -1.0 / sxy),
                            (at(row + 1, col + 1), 1.0 / sxy),
                        ];
                        term(&k, 2.0, base);
                    }
                }
            }
        }
        (value, grad)
    }
}

/// Conjugate gradients on the normal equations of the sparse system
/// `Σ_k w_k x[node_k] = b` (one row per stencil), warm-started from `x`.
fn least_squares_cg(rows: &[Stencil], b: &[f64], x: &mut [f64]) {
    let apply = |x: &[f64], out: &mut [f64]| {
        for (s, o) in rows.iter().zip(out.iter_mut()) {
            *o = s.nodes.iter().zip(&s.weights).map(|(&i, &w)| w * x[i]).sum();
        }
    };
    let apply_t = |r: &[f64], out: &mut [f64]| {
        out.fill(0.0);
        for (s, &ri) in rows.iter().zip(r) {
            for (&i, &w) in s.nodes.iter().zip(&s.weights) {
                out[i] += w * ri;
            }
        }
    };
    let n = x.len();
    let m = rows.len();
    let mut ax = vec![0.0; m];
    apply(x, &mut ax);
    let resid: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut r = vec![0.0; n];
    apply_t(&resid, &mut r);
    let b_scale = {
        let mut atb = vec![0.0; n];
        apply_t(b, &mut atb);
        atb.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300)
    };
    let mut p = r.clone();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let mut ap = vec![0.0; m];
    let mut atap = vec![0.0; n];
    for _ in 0..n.clamp(50, 300) {
        if rr.sqrt() <= 1e-10 * b_scale {
            break;
        }
        apply(&p, &mut ap);
        apply_t(&ap, &mut atap);
        let pap: f64 = p.iter().zip(&atap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * atap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
}
