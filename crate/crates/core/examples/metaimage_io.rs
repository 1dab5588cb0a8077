//! Writes a phantom case to disk as MetaImage files and reads it back.

use cinetrack::io::{self, read_metaimage};
use cinetrack::synth::{self, PhantomSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = PhantomSpec { image_size: (96, 96), n_frames: 4, case_id: "demo".into(), ..Default::default() };
    let case = synth::generate(&spec)?;
    let dir = std::env::temp_dir().join("cinetrack-metaimage-example");
    io::write_case(&dir, &case.sequence, Some(&case.gt_masks))?;

    for name in ["frames.mha", "first_mask.mha", "gt_masks.mha"] {
        let img = read_metaimage(dir.join(name))?;
        println!(
            "{name:<15} {}x{} x{} frames, {} spacing ({}, {})",
            img.geometry.width,
            img.geometry.height,
            img.frames,
            img.element_type.as_str(),
            img.geometry.spacing.x,
            img.geometry.spacing.y,
        );
    }
    let back = io::read_case(&dir)?;
    assert_eq!(back.sequence, case.sequence);
    println!("case `{}` round-tripped through {}", back.meta.case_id, dir.display());
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
