//! Generates a small breathing phantom and prints its ground-truth motion.

use cinetrack::synth::{self, PhantomSpec};

fn main() -> cinetrack::Result<()> {
    let spec = PhantomSpec { image_size: (128, 128), n_frames: 12, seed: 3, ..Default::default() };
    let case = synth::generate(&spec)?;
    println!("frame  shift_x  shift_y  area_px  centroid");
    for (t, (d, m)) in case.gt_displacements.iter().zip(&case.gt_masks).enumerate() {
        let c = m.centroid().expect("tumour is always in view");
        println!("{t:>5}  {:>7.2}  {:>7.2}  {:>7}  ({:.1}, {:.1})", d.x, d.y, m.count(), c.x, c.y);
    }
    Ok(())
}
