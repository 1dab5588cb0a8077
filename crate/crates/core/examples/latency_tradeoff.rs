//! Compares accuracy and per-frame latency of the two registration profiles
//! against a frame budget.

use cinetrack::metrics::evaluate_sequence;
use cinetrack::registration::RegistrationConfig;
use cinetrack::synth::{self, PhantomSpec};
use cinetrack::tracker::{latency_report, track, Strategy};

fn main() -> cinetrack::Result<()> {
    let spec = PhantomSpec { n_frames: 9, seed: 7, ..Default::default() };
    let case = synth::generate(&spec)?;
    // One 4 Hz frame interval per frame.
    let budget = 250.0 * (spec.n_frames - 1) as f64;

    println!("{:<10} {:>6} {:>8} {:>9} {:>9} {:>8}", "profile", "DSC", "HD mm", "mean ms", "p95 ms", "in time");
    for cfg in [RegistrationConfig::realtime(), RegistrationConfig::quality()] {
        let r = track(&case.sequence, Strategy::RegisterToFirst, &cfg, Some(budget))?;
        let acc = evaluate_sequence(&r, &case.gt_masks, Some(budget))?;
        let lat = latency_report(&r, Some(budget));
        println!(
            "{:<10} {:>6.3} {:>8.2} {:>9.1} {:>9.1} {:>8}",
            cfg.profile.as_str(),
            acc.mean_dsc().unwrap(),
            acc.mean_hd().unwrap(),
            lat.mean_ms,
            lat.p95_ms,
            lat.within_budget.unwrap(),
        );
    }
    Ok(())
}
