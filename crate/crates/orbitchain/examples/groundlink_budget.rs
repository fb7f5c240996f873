//! Analyzes a ground-contact trace: empirical CDF of the gaps between
//! contact windows and the fraction of each interval's data that the next
//! window can downlink.
//!
//! Run with: cargo run --example groundlink_budget

use orbitchain::groundlink::{contact_interval_cdf, downlinkable_ratio, ContactTrace};

fn main() {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/assets/contacts_leo.csv"
    ))
    .unwrap();
    let trace = ContactTrace::parse_csv(&text).unwrap();
    println!("{} contact windows loaded", trace.contacts().len());

    println!("contact-interval CDF:");
    for (interval, fraction) in contact_interval_cdf(&trace).unwrap() {
        println!("  <= {interval:>7.0} s : {fraction:.3}");
    }

    // 2 MB/s of imagery with half the tiles filtered out on board.
    let gen_rate = 2e6;
    let filter = 0.5;
    println!("downlinkable ratio per contact (gen {gen_rate} B/s, filter {filter}):");
    for r in downlinkable_ratio(&trace, gen_rate, filter).unwrap() {
        println!(
            "  sat {} contact at {:>7.0} s : {:.3}",
            r.satellite, r.contact_start_s, r.ratio
        );
    }
}
