//! Bit-level machinery: the prefix-free rank code, the keyed keystream
//! layer, and the beta-bit symbol transform.

mod beta;
mod bitstream;
mod huffman;
mod keystream;

pub use beta::{from_beta_symbols, to_beta_symbols, BetaSymbolSequence};
pub use bitstream::BitStream;
pub use huffman::{build_codebook, decode_ranks, encode_ranks, Codebook};
pub use keystream::{keystream_xor, SecretKey, KEY_LEN};
