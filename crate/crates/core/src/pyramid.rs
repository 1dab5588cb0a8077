//! Multi-resolution Gaussian pyramids.

use crate::error::{Error, Result};
use crate::filter::gaussian_smooth_px;
use crate::grid::{Geometry, Image2D, Vec2};

/// Smallest side length allowed at the coarsest level.
pub const MIN_LEVEL_SIZE: usize = 8;

/// Builds `levels` resolutions, finest first.
///
/// Each coarser level smooths the previous one with a Gaussian of one pixel
/// (half the factor-2 shrink) and keeps every second pixel. Spacing doubles,
/// so `dims × spacing` is preserved up to one coarse pixel on odd sizes.
pub fn build_pyramid(img: &Image2D, levels: usize) -> Result<Vec<Image2D>> {
    if levels == 0 {
        return Err(Error::Config("pyramid needs at least one level".into()));
    }
    let shrink = 1usize << (levels - 1);
    let (cw, ch) = (img.width() / shrink, img.height() / shrink);
    if cw < MIN_LEVEL_SIZE || ch < MIN_LEVEL_SIZE {
        return Err(Error::Config(format!(
            "{}x{} image is too small for {levels} pyramid levels (coarsest would be {cw}x{ch}, minimum {MIN_LEVEL_SIZE})",
            img.width(),
            img.height()
        )));
    }

    let mut out = Vec::with_capacity(levels);
    out.push(img.clone());
    for _ in 1..levels {
        let prev = out.last().expect("non-empty");
        let smooth = gaussian_smooth_px(prev, Vec2::new(1.0, 1.0))?;
        let g = prev.geometry();
        let coarse = Geometry::new(
            g.width.div_ceil(2),
            g.height.div_ceil(2),
            g.spacing * 2.0,
            g.origin,
        )?;
        let values = (0..coarse.height)
            .flat_map(|r| (0..coarse.width).map(move |c| (c, r)))
            .map(|(c, r)| smooth.get(2 * c, 2 * r))
            .collect();
        out.push(Image2D::new(coarse, values)?);
    }
    Ok(out)
}
