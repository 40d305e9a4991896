//! Spreading-model estimates: an l2 model, a conditional model and a
//! separation probe.

use plegma::family::FamilySpec;
use plegma::famset::SeqSet;
use plegma::specnorm::{
    basis_diagnostics, probe, sm_estimate, EstimateConfig, FSeqSpec, NormSpec, ProbeConfig,
    ProbeMode,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let f = FamilySpec::cube(2);
    let all = SeqSet::all(1000);

    let r = sm_estimate(
        &f,
        &FSeqSpec::UnitAtMax,
        &NormSpec::Lp(2.0),
        &[1.0, -1.0, 0.5],
        &all,
        &EstimateConfig::new(1, 14),
    )?;
    println!(
        "unit vectors in l2: mean {} over {} tuples, spread {}",
        r.mean, r.tuple_count, r.spread
    );

    let r = sm_estimate(
        &f,
        &FSeqSpec::IntervalSum,
        &NormSpec::Sup,
        &[1.0, -1.0, 1.0],
        &all,
        &EstimateConfig::new(1, 14),
    )?;
    println!("interval sums in sup, (1,-1,1): {}", r.mean);
    let d = basis_diagnostics(
        &f,
        &FSeqSpec::IntervalSum,
        &NormSpec::Sup,
        &all,
        3,
        &[-1.0, 1.0],
        &EstimateConfig::new(1, 14),
    )?;
    println!(
        "unconditionality {}, basis constant {}",
        d.unconditionality_c, d.basis_c
    );

    let cfg = ProbeConfig {
        first_min: 1,
        budget: None,
        horizon: 16,
    };
    let p = probe(
        &f,
        &FSeqSpec::UnitAtMax,
        &NormSpec::Lp(2.0),
        &all,
        ProbeMode::Separated(1.0),
        &cfg,
    )?;
    println!("{}", serde_json::to_string(&p)?);
    Ok(())
}
