//! Plegma tuples: the predicate, enumeration and the union codec.

use std::ops::ControlFlow;

use plegma::family::FamilySpec;
use plegma::famset::{FinSet, SeqSet};
use plegma::plegma::{
    enumerate_plm, is_plegma, union_decode, union_encode, EnumConfig, PlegmaTuple,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let parts: Vec<FinSet> = ["{1,4}", "{2,5}", "{3,6}"]
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_, _>>()?;
    println!("({{1,4}}, {{2,5}}, {{3,6}}) plegma: {}", is_plegma(&parts)?);

    let f = FamilySpec::fmin(1, 0)?;
    let mut shown = 0;
    let summary = enumerate_plm(&f, &SeqSet::all(1000), &EnumConfig::new(2, 9), |t| {
        if shown < 5 {
            println!("  {t:?}");
            shown += 1;
        }
        ControlFlow::Continue(())
    })?;
    println!(
        "{} plegma pairs of fmin(1,0) inside {{1..9}}",
        summary.yielded
    );

    let tuple = PlegmaTuple::new(vec!["{2,5}".parse()?, "{3,6,8}".parse()?])?;
    let (u, l) = union_encode(&tuple)?;
    println!(
        "{tuple} -> union {u}, decoded back as {}",
        union_decode(&f, &u, l)?
    );
    Ok(())
}
