pub mod eval;
pub mod filter;
pub mod info;
pub mod synth;
pub mod viz;
