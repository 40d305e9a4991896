//! Ordinals below ε₀ and the orders of symbolic families.

use plegma::family::FamilySpec;
use plegma::ordinal::Ordinal;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let xi: Ordinal = "w^2+w*3+1".parse()?;
    println!("xi = {xi}, successor: {}", xi.is_successor());

    let lim: Ordinal = "w^2".parse()?;
    let seq: Vec<String> = (1..=4)
        .map(|n| {
            lim.fundamental(n)
                .map(|o| o.to_string())
                .unwrap_or_default()
        })
        .collect();
    println!("w^2[n] for n = 1..4: {}", seq.join(", "));

    // Addition absorbs smaller leading terms on the left.
    let a: Ordinal = "w+5".parse()?;
    println!("(w+5) + w^2 = {}", a + lim.clone());

    for spec in [
        "cube(4)",
        "rxi(w*2+1)",
        "fmin(1,0)",
        "hat(max(hat(rxi(w^2))))",
    ] {
        let f = FamilySpec::parse(spec, 1000)?;
        println!("o({spec}) = {}", f.order()?);
    }
    Ok(())
}
