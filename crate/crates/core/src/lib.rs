pub mod mathkit;
pub mod rng;
pub mod channel;
pub mod codebook;
pub mod patterns;
pub mod agb;
pub mod precoder;
pub mod analysis;
pub mod harness;
