pub mod cli;
pub mod family;
pub mod famset;
pub mod ordinal;
pub mod plegma;
pub mod specnorm;
