//! The boundary trap: with four agents on the corners of the unit square
//! and a complete graph, hull membership and contraction admit an update
//! that lands exactly on the hull's relative boundary, so those two
//! constraints alone cannot force strict interiority. The lexicographic
//! stage restores it.
//!
//! ```bash
//! cargo run -p hullsense --example boundary_counterexample
//! ```

fn main() {
    let (report, text) = hullsense::cli::cmd_verify_counterexample().unwrap();
    print!("{text}");
    std::process::exit(if report.pass { 0 } else { 1 });
}
