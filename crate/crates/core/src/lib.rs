pub mod adapt;
pub mod chart;
pub mod encoder;
pub mod experiments;
pub mod metrics;
pub mod multilingual;
pub mod tensor;
pub mod treebank;

/// Independent seed for sub-stream `stream` of `seed` (splitmix64 mixing).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
