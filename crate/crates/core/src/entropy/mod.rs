//! Likelihood models, rate estimation, range coding and the bitstream.

mod bitstream;
mod cdf;
mod factorized;
mod gaussian;
mod range;
mod rate;

pub use bitstream::{
    compress_bundle, compress_image, decode_bundle, decompress_image, CompressedImage, BITSTREAM_MAGIC, BITSTREAM_VERSION,
};
pub use cdf::{CdfTable, PRECISION, TOTAL};
pub use factorized::{
    factorized_bits, init_prior_params, prior_param_shapes, FactorizedPrior, PriorVars, MAX_HALF_ALPHABET,
    PRIOR_DIMS, PRIOR_STAGES,
};
pub use gaussian::{
    default_scale_table, gaussian_bits, gaussian_cdf_table, gaussian_cdf_tables, gaussian_likelihood, scale_index,
    SCALE_TABLE_LEN, SIGMA_CEIL, SIGMA_FLOOR, TAIL_MASS,
};
pub use range::{range_decode, range_encode, RangeDecoder, RangeEncoder};
pub use rate::{estimate_rate_bits, EntropyTables, RateEstimate};
