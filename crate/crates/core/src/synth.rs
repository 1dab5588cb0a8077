//! Synthetic cine sequences with analytically known motion.
//!
//! The reference frame is a closed-form intensity field:
//!
//! ```text
//! I0(p) = base + g·(p - c) + Σ_k A cos(2π w_k·p + φ_k) + contrast · edge(q(p))
//! q(p)  = sqrt(((p.x - c.x) / a)² + ((p.y - c.y) / b)²)
//! edge  = (1 - tanh((q - 1) · min(a, b) / edge_mm)) / 2
//! ```
//!
//! with tumour centre `c`, semi-axes `(a, b)` and wave vectors `w_k` drawn
//! from the seed. Frame `t` is `I_t(p) = I0(p - u_t(p)) + noise`, where
//! `u_t(p) = s(t) · (A_m · dir + field(p))` and `s(t) = sin(2π t / period)`.
//! Ground-truth masks use the inverse-mapped ellipse inequality
//! `q(p - u_t(p)) <= 1` directly, never resampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Geometry, Image2D, Mask2D, Vec2};
use crate::tracker::CineSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    /// Centre in mm; `None` places it at the image centre.
    pub center: Option<Vec2>,
    pub semi_axes: Vec2,
    /// Intensity added inside the tumour.
    pub contrast: f64,
    /// Width of the smooth intensity edge in mm.
    pub edge_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub base: f64,
    /// Linear intensity gradient per mm.
    pub gradient: Vec2,
    pub components: usize,
    pub amplitude: f64,
    pub min_wavelength_mm: f64,
    pub max_wavelength_mm: f64,
}

/// Smooth non-rigid component added on top of the translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deformation {
    pub seed: u64,
    /// Peak displacement of each Gaussian bump in mm.
    pub amplitude_mm: f64,
    /// Gaussian bump radius in mm.
    pub scale_mm: f64,
    pub bumps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Motion {
    pub amplitude_mm: f64,
    pub period_frames: f64,
    pub direction: Vec2,
    pub deformation: Option<Deformation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    /// (width, height) in pixels.
    pub image_size: (usize, usize),
    pub spacing_mm: f64,
    pub tumor: Ellipse,
    pub background: Background,
    pub motion: Motion,
    pub noise_sigma: f64,
    pub n_frames: usize,
    pub frame_rate_hz: f64,
    pub seed: u64,
    pub case_id: String,
}

impl Default for PhantomSpec {
    /// Superior-inferior sinusoid of 8 mm, 16-frame period (4 s at 4 Hz),
    /// noise at 2% of the tumour contrast.
    fn default() -> Self {
        let contrast = 80.0;
        PhantomSpec {
            image_size: (256, 256),
            spacing_mm: 1.0,
            tumor: Ellipse {
                center: None,
                semi_axes: Vec2::new(14.0, 11.0),
                contrast,
                edge_mm: 1.0,
            },
            background: Background {
                base: 100.0,
                gradient: Vec2::new(0.1, 0.05),
                components: 4,
                amplitude: 12.0,
                min_wavelength_mm: 40.0,
                max_wavelength_mm: 100.0,
            },
            motion: Motion {
                amplitude_mm: 8.0,
                period_frames: 16.0,
                direction: Vec2::new(0.0, 1.0),
                deformation: None,
            },
            noise_sigma: 0.02 * contrast,
            n_frames: 40,
            frame_rate_hz: 4.0,
            seed: 0,
            case_id: "synth".into(),
        }
    }
}

/// A generated case with its ground truth.
#[derive(Debug, Clone)]
pub struct SynthCase {
    pub sequence: CineSequence,
    pub gt_masks: Vec<Mask2D>,
    /// Global translation `d(t)` per frame (excludes the deformation field).
    pub gt_displacements: Vec<Vec2>,
}

struct Wave {
    k: Vec2,
    phase: f64,
}

struct Bump {
    center: Vec2,
    dir: Vec2,
}

/// Closed-form phantom, shared by frame and mask generation.
pub struct Phantom {
    spec: PhantomSpec,
    geometry: Geometry,
    center: Vec2,
    waves: Vec<Wave>,
    bumps: Vec<Bump>,
}

impl PhantomSpec {
    pub fn geometry(&self) -> Result<Geometry> {
        Geometry::new(
            self.image_size.0,
            self.image_size.1,
            Vec2::new(self.spacing_mm, self.spacing_mm),
            Vec2::ZERO,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.geometry()?;
        let cfg = |msg: String| Err(Error::Config(msg));
        if self.n_frames < 2 {
            return cfg(format!("n_frames must be at least 2, got {}", self.n_frames));
        }
        if !(self.motion.period_frames >= 4.0) {
            return cfg(format!(
                "period_frames must be at least 4, got {}",
                self.motion.period_frames
            ));
        }
        let a = self.tumor.semi_axes;
        if !(a.x > 0.0 && a.y > 0.0) || !(self.tumor.edge_mm > 0.0) {
            return cfg("tumour semi-axes and edge width must be positive".into());
        }
        if !(self.noise_sigma >= 0.0) || !(self.motion.amplitude_mm >= 0.0) {
            return cfg("noise sigma and motion amplitude must be non-negative".into());
        }
        if (self.motion.direction.norm() - 1.0).abs() > 1e-6 {
            return cfg("motion direction must be a unit vector".into());
        }
        if !(self.frame_rate_hz > 0.0) {
            return cfg("frame rate must be positive".into());
        }
        let b = &self.background;
        if !(b.min_wavelength_mm > 0.0 && b.max_wavelength_mm >= b.min_wavelength_mm) {
            return cfg("background wavelengths must satisfy 0 < min <= max".into());
        }
        let dom = g.domain();
        let c = self.tumor.center.unwrap_or_else(|| dom.center());
        let margin = (c.x - dom.min.x)
            .min(dom.max.x - c.x)
            .min(c.y - dom.min.y)
            .min(dom.max.y - c.y);
        let extra = self
            .motion
            .deformation
            .as_ref()
            .map_or(0.0, |d| d.amplitude_mm.abs() * d.bumps as f64);
        let reach = self.motion.amplitude_mm + extra + a.x.max(a.y);
        if reach >= margin {
            return cfg(format!(
                "tumour leaves the field of view: amplitude + semi-axis = {reach:.2} mm, \
                 distance from centre to border = {margin:.2} mm"
            ));
        }
        Ok(())
    }
}

impl Phantom {
    pub fn new(spec: &PhantomSpec) -> Result<Self> {
        spec.validate()?;
        let geometry = spec.geometry()?;
        let center = spec.tumor.center.unwrap_or_else(|| geometry.domain().center());
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_ba5e);
        let bg = &spec.background;
        let waves = (0..bg.components)
            .map(|_| {
                let angle = rng.gen_range(0.0..std::f64::consts::PI);
                let lambda = rng.gen_range(bg.min_wavelength_mm..=bg.max_wavelength_mm);
                Wave {
                    k: Vec2::new(angle.cos(), angle.sin()) * (1.0 / lambda),
                    phase: rng.gen_range(0.0..std::f64::consts::TAU),
                }
            })
            .collect();
        let bumps = match &spec.motion.deformation {
            None => Vec::new(),
            Some(d) => {
                let mut r = ChaCha8Rng::seed_from_u64(d.seed);
                let dom = geometry.domain();
                (0..d.bumps)
                    .map(|_| {
                        let angle = r.gen_range(0.0..std::f64::consts::TAU);
                        Bump {
                            center: Vec2::new(
                                r.gen_range(dom.min.x..=dom.max.x),
                                r.gen_range(dom.min.y..=dom.max.y),
                            ),
                            dir: Vec2::new(angle.cos(), angle.sin()),
                        }
                    })
                    .collect()
            }
        };
        Ok(Phantom {
            spec: spec.clone(),
            geometry,
            center,
            waves,
            bumps,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    /// Scalar motion phase `sin(2π t / period)`.
    fn phase(&self, frame: usize) -> f64 {
        (std::f64::consts::TAU * frame as f64 / self.spec.motion.period_frames).sin()
    }

    /// Global translation `d(t)`.
    pub fn translation(&self, frame: usize) -> Vec2 {
        self.spec.motion.direction * (self.spec.motion.amplitude_mm * self.phase(frame))
    }

    /// Full displacement `u_t(p)` of content at `p` in frame `t`.
    pub fn displacement(&self, frame: usize, p: Vec2) -> Vec2 {
        let mut u = self.translation(frame);
        if let Some(d) = &self.spec.motion.deformation {
            let s = self.phase(frame) * d.amplitude_mm;
            let inv = 1.0 / (2.0 * d.scale_mm * d.scale_mm);
            for b in &self.bumps {
                let r2 = {
                    let v = p - b.center;
                    v.dot(v)
                };
                u = u + b.dir * (s * (-r2 * inv).exp());
            }
        }
        u
    }

    fn ellipse_q(&self, p: Vec2) -> f64 {
        let a = self.spec.tumor.semi_axes;
        let v = p - self.center;
        ((v.x / a.x).powi(2) + (v.y / a.y).powi(2)).sqrt()
    }

    /// Noise-free reference intensity `I0(p)`.
    pub fn reference_intensity(&self, p: Vec2) -> f64 {
        let bg = &self.spec.background;
        let mut v = bg.base + bg.gradient.dot(p - self.center);
        for w in &self.waves {
            v += bg.amplitude * (std::f64::consts::TAU * w.k.dot(p) + w.phase).cos();
        }
        let t = &self.spec.tumor;
        let sharp = t.semi_axes.x.min(t.semi_axes.y) / t.edge_mm;
        let q = self.ellipse_q(p);
        v + t.contrast * 0.5 * (1.0 - ((q - 1.0) * sharp).tanh())
    }

    /// Noise-free intensity of frame `t` at `p`.
    pub fn frame_intensity(&self, frame: usize, p: Vec2) -> f64 {
        self.reference_intensity(p - self.displacement(frame, p))
    }

    /// Analytic inside-test of the tumour in frame `t`.
    pub fn inside(&self, frame: usize, p: Vec2) -> bool {
        self.ellipse_q(p - self.displacement(frame, p)) <= 1.0
    }

    pub fn generate(&self) -> Result<SynthCase> {
        let spec = &self.spec;
        let noise = Normal::new(0.0, spec.noise_sigma.max(0.0))
            .map_err(|e| Error::Config(format!("noise sigma: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut frames = Vec::with_capacity(spec.n_frames);
        let mut gt_masks = Vec::with_capacity(spec.n_frames);
        for t in 0..spec.n_frames {
            let img = Image2D::from_fn(self.geometry, |p| {
                let clean = self.frame_intensity(t, p);
                if spec.noise_sigma > 0.0 {
                    clean + noise.sample(&mut rng)
                } else {
                    clean
                }
            })?;
            frames.push(img);
            gt_masks.push(Mask2D::from_fn(self.geometry, |p| self.inside(t, p))?);
        }
        let sequence = CineSequence::new(
            frames,
            gt_masks[0].clone(),
            spec.frame_rate_hz,
            spec.case_id.clone(),
        )?;
        Ok(SynthCase {
            sequence,
            gt_masks,
            gt_displacements: (0..spec.n_frames).map(|t| self.translation(t)).collect(),
        })
    }
}

/// Generates a case from `spec`.
pub fn generate(spec: &PhantomSpec) -> Result<SynthCase> {
    Phantom::new(spec)?.generate()
}
