//! Registers one frame of a phantom to the first frame and reports how far
//! the warped mask's centroid lands from the true tumour position.

use cinetrack::registration::{register, warp_mask, RegistrationConfig};
use cinetrack::synth::{self, PhantomSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = PhantomSpec { image_size: (128, 128), n_frames: 5, seed: 11, ..Default::default() };
    let case = synth::generate(&spec)?;
    let seq = &case.sequence;
    let t = 4;

    for cfg in [RegistrationConfig::realtime(), RegistrationConfig::quality()] {
        let (transform, report) = register(&seq.frames[t], &seq.frames[0], &cfg)?;
        let mask = warp_mask(&seq.first_mask, &transform, seq.frames[t].geometry());
        let err = (mask.centroid().unwrap() - case.gt_masks[t].centroid().unwrap()).norm();
        println!(
            "{:<8} {} levels, {:>4} iterations, {:>6.1} ms, centroid error {err:.3} mm",
            cfg.profile.as_str(),
            report.levels.len(),
            report.iterations(),
            report.total_ms,
        );
        for l in &report.levels {
            let first = l.trace.values().next().unwrap_or(f64::NAN);
            let last = l.trace.values().last().unwrap_or(f64::NAN);
            println!("    level {} {:?}: metric {first:.4} -> {last:.4}", l.level, l.image_size);
        }
    }
    Ok(())
}
