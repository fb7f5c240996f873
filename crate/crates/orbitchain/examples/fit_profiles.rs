//! Fits a piecewise-linear CPU speed model to noisy benchmark samples and
//! compares the continuous and independent fitting modes.
//!
//! Run with: cargo run --example fit_profiles

use orbitchain::profile::{eval_speed, fit_piecewise_linear, FitMode};

fn main() {
    // Synthetic benchmark: tiles/second measured at CPU quotas 0.5..4.0,
    // generated from a two-regime curve with small deterministic jitter.
    let samples: Vec<(f64, f64)> = (0..15)
        .map(|k| {
            let quota = 0.5 + 0.25 * k as f64;
            let truth = if quota <= 2.0 {
                0.33 * quota - 0.02
            } else {
                0.17 * quota + 0.30
            };
            let jitter = 0.004 * ((k * 7 % 5) as f64 - 2.0);
            (quota, truth + jitter)
        })
        .collect();

    for mode in [FitMode::Continuous, FitMode::Independent] {
        let (model, r2) = fit_piecewise_linear(&samples, &[2.0], mode).unwrap();
        println!("{mode:?} fit:");
        for (seg, seg_r2) in model.segments().iter().zip(&r2) {
            println!(
                "  [{:.2}, {:.2}] speed = {:.4} * quota + {:.4}   (r2 = {seg_r2:.4})",
                seg.quota_lo, seg.quota_hi, seg.slope, seg.intercept
            );
        }
        println!(
            "  continuous at breakpoints: {}",
            model.is_continuous()
        );
        for quota in [1.0, 2.0, 3.0] {
            println!(
                "  eval({quota:.1}) = {:.4} tiles/s",
                eval_speed(&model, quota).unwrap()
            );
        }
    }
}
