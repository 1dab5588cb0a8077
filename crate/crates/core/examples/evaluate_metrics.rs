//! Segmentation metrics on two hand-made masks.

use cinetrack::grid::{Geometry, Mask2D, Vec2};
use cinetrack::metrics::{centroid_distance, dsc, surface_distances};

fn disc(g: Geometry, c: Vec2, r: f64) -> cinetrack::Result<Mask2D> {
    Mask2D::from_fn(g, |p| (p - c).norm() <= r)
}

fn main() -> cinetrack::Result<()> {
    let g = Geometry::new(64, 64, Vec2::new(0.5, 0.5), Vec2::new(0.0, 0.0))?;
    let gt = disc(g, Vec2::new(16.0, 16.0), 6.0)?;
    for shift in [0.0, 0.5, 1.0, 2.0, 4.0] {
        let pred = disc(g, Vec2::new(16.0 + shift, 16.0), 6.0)?;
        let s = surface_distances(&pred, &gt)?;
        println!(
            "shift {shift:>3.1} mm: DSC {:.3}  HD {:.2}  HD95 {:.2}  ASD {:.2}  CD {:.2}",
            dsc(&pred, &gt)?,
            s.hd,
            s.hd95,
            s.asd,
            centroid_distance(&pred, &gt)?,
        );
    }
    Ok(())
}
