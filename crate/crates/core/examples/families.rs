//! Building, querying and materializing families of finite sets.

use plegma::family::{complete, embed_shift, materialize, verify_embedding, FamilySpec};
use plegma::famset::{FinSet, SeqSet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let schreier = FamilySpec::fmin(1, 0)?;
    let s: FinSet = "{3,5,8}".parse()?;
    println!("{s} in {schreier}: {}", schreier.contains(&s)?);

    let evens = SeqSet::arithmetic(2, 2, 1000)?;
    let restricted = schreier.clone().restrict(evens.clone());
    println!(
        "complete along the evens: {}",
        complete(&restricted, &evens)?
    );

    let m = materialize(&FamilySpec::cube(2).hat(), 8)?;
    println!(
        "hat(cube(2)) in {{1..8}}: {} members, rank {:?}",
        m.len(),
        m.rank_finite()
    );
    let report = materialize(&schreier, 10)?.regularity_report();
    println!(
        "fmin(1,0) at 10: thin {}, hereditary {}, spreading {}",
        report.thin, report.hereditary, report.spreading_within
    );

    // Embed the closure of cube(2) into the closure of R_w.
    let (r, t) = (
        FamilySpec::cube(2).hat(),
        FamilySpec::parse("hat(rxi(w))", 1000)?,
    );
    let e = embed_shift(&r, &t, 12)?;
    let checked = verify_embedding(&r, &t, &e.seq, 12)?;
    println!("L = {:?}, {checked} members verified", e.seq.values(12)?);
    Ok(())
}
