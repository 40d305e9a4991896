//! Shortest plegma paths between successive members of `[ℕ]^k`.

use plegma::family::FamilySpec;
use plegma::famset::{FinSet, SeqSet};
use plegma::plegma::PlegmaGraph;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let graph = PlegmaGraph::build(&FamilySpec::cube(3), &SeqSet::all(1000), 16)?;
    println!(
        "{} vertices, {} edges",
        graph.vertices().len(),
        graph.edge_count()
    );
    let s0: FinSet = "{1,3,5}".parse()?;
    let s: FinSet = "{7,9,11}".parse()?;
    let path = graph.path(&s0, &s, 32)?;
    let steps: Vec<String> = path.iter().map(ToString::to_string).collect();
    println!("{} steps: {}", path.len() - 1, steps.join(" -> "));
    Ok(())
}
