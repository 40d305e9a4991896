//! The plegma norm over `max(hat(fmin(1,0)))`: its own basis gives an l1
//! spreading model, while a coding of singletons that breaks every plegma
//! pair gives a c0 one.

use plegma::family::FamilySpec;
use plegma::famset::SeqSet;
use plegma::plegma::{interval_coding, map_report};
use plegma::specnorm::{sm_estimate, EstimateConfig, FSeqSpec, NormSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = FamilySpec::parse("max(hat(fmin(1,0)))", 1000)?;
    let norm = NormSpec::plegma(g.clone(), NormSpec::Lp(1.0))?;
    let all = SeqSet::all(1000);
    let a = [1.0, -0.5, 0.25];

    let r = sm_estimate(
        &g,
        &FSeqSpec::BasisOfFamily(g.clone()),
        &norm,
        &a,
        &all,
        &EstimateConfig::new(3, 20),
    )?;
    println!(
        "basis of G: [{}, {}] over {} tuples",
        r.min, r.max, r.tuple_count
    );

    let coding = interval_coding(g, 20)?;
    let rep = map_report(&coding, None);
    println!(
        "coding: {} of {} pairs violating",
        rep.violating_pairs, rep.pairs_examined
    );
    let q = FSeqSpec::coded_table(&coding)?;
    let r = sm_estimate(
        &FamilySpec::cube(1),
        &q,
        &norm,
        &a,
        &all,
        &EstimateConfig::new(1, 20),
    )?;
    println!(
        "coded singletons: [{}, {}] over {} tuples",
        r.min, r.max, r.tuple_count
    );
    Ok(())
}
