use super::BitStream;
use crate::error::{Error, Result};

/// A sequence of beta-bit symbols: integers in `[0, 2^beta)`, each consumed
/// by one gated generation step as an index into the candidate list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BetaSymbolSequence {
    symbols: Vec<u16>,
    beta: u8,
}

impl BetaSymbolSequence {
    pub fn new(symbols: Vec<u16>, beta: u8) -> Result<BetaSymbolSequence> {
        check_beta(beta)?;
        if let Some(&bad) = symbols.iter().find(|&&s| (s as u32) >= (1u32 << beta)) {
            return Err(Error::Validation(format!(
                "symbol {bad} does not fit in {beta} bits"
            )));
        }
        Ok(BetaSymbolSequence { symbols, beta })
    }

    pub fn symbols(&self) -> &[u16] {
        &self.symbols
    }

    pub fn beta(&self) -> u8 {
        self.beta
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

fn check_beta(beta: u8) -> Result<()> {
    if (1..=16).contains(&beta) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("beta {beta} outside 1..=16")))
    }
}

/// Chunks a bitstream into big-endian beta-bit symbols. The final partial
/// chunk, if any, is zero-padded on the right; the rank-level EOS ensures
/// the padding is never interpreted as message content.
pub fn to_beta_symbols(bits: &BitStream, beta: u8) -> Result<BetaSymbolSequence> {
    check_beta(beta)?;
    let width = beta as usize;
    let mut symbols = Vec::with_capacity(bits.len().div_ceil(width));
    let mut i = 0;
    while i < bits.len() {
        let mut v: u16 = 0;
        for j in 0..width {
            v = (v << 1) | bits.get(i + j).unwrap_or(false) as u16;
        }
        symbols.push(v);
        i += width;
    }
    Ok(BetaSymbolSequence { symbols, beta })
}

/// Expands symbols back into bits, beta per symbol, most significant first.
/// Exact inverse of [`to_beta_symbols`] when the original length was a
/// multiple of beta; otherwise the output carries the right-zero padding.
pub fn from_beta_symbols(seq: &BetaSymbolSequence) -> Result<BitStream> {
    check_beta(seq.beta)?;
    let mut bits = BitStream::with_capacity(seq.symbols.len() * seq.beta as usize);
    for &s in &seq.symbols {
        bits.push_uint(s as u64, seq.beta as u32);
    }
    Ok(bits)
}
