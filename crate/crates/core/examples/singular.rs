//! Recovering the constant part of `x_s = x0 + e_{max s}`.

use plegma::family::FamilySpec;
use plegma::famset::SeqSet;
use plegma::specnorm::{singular_analysis, FSeqSpec, NormSpec, SingularConfig, SparseVec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x0: SparseVec = "1:0.6,5:-0.8".parse()?;
    let q = FSeqSpec::UnitAtMax.shifted(x0);
    let r = singular_analysis(
        &FamilySpec::cube(1),
        &q,
        &NormSpec::Lp(2.0),
        &SeqSet::all(10_000),
        &SingularConfig::default(),
    )?;
    for s in &r.steps {
        println!(
            "n = {:>3}: estimate {}, Cesàro mean norm {:.6}",
            s.n, s.x0_estimate, s.cesaro_norm
        );
    }
    println!(
        "|x0| = {}, mean norm at n = 256: {:.6} ({:.2}% apart)",
        r.norm_x0,
        r.mean_norm_largest_n,
        100.0 * r.norm_identity_relative_gap
    );
    Ok(())
}
