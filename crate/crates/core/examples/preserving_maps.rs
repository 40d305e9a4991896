//! Plegma-preserving maps exist from higher to lower order, and simple maps
//! in the other direction break plegma pairs.

use plegma::family::FamilySpec;
use plegma::plegma::{construct_preserving_map, map_report, shift_map, PreservingMapConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pm = construct_preserving_map(
        &FamilySpec::cube(3),
        &FamilySpec::cube(2),
        30,
        &PreservingMapConfig::default(),
    )?;
    let r = map_report(&pm.table, None);
    println!(
        "cube(3) -> cube(2): {} keys, {} pairs, {} preserved, {} violating, index failures {}",
        pm.table.len(),
        r.pairs_examined,
        r.preserving_pairs,
        r.violating_pairs,
        pm.index_guarantee.failures
    );
    if let Some((k, v)) = pm.table.entries().iter().next() {
        println!("first entry: {k} -> {v}");
    }

    for n in [5, 10] {
        let r = map_report(&shift_map(n, 3 * n)?, None);
        let w = r.violating_witness.expect("shift maps break some pair");
        println!(
            "{{n}} -> {{n, n+{n}}}: {} violating pairs, e.g. ({}, {}) -> ({}, {})",
            r.violating_pairs, w.keys.0, w.keys.1, w.images.0, w.images.1
        );
    }
    Ok(())
}
