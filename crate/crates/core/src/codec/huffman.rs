use super::BitStream;
use crate::error::{Error, Result};
use crate::ranking::Rank;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::cmp::Reverse;
use std::collections::{BinaryHeap, BTreeMap};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"RCB1";

/// Prefix-free rank code: a canonical Huffman table over the `K` most
/// frequent ranks plus an ESCAPE symbol. Ranks at or beyond `K` encode as
/// the escape codeword followed by the rank in `escape_width` fixed-width
/// bits, so every rank in `[0, |V|)` is encodable.
///
/// Canonical form makes the codebook a pure function of its code lengths:
/// sender and receiver rebuild identical codewords from the serialized
/// lengths alone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codebook {
    table_size: u32,
    escape_width: u32,
    // K+1 code lengths; index K is ESCAPE.
    lengths: Vec<u32>,
    codes: Vec<BitStream>,
    trie: Vec<TrieNode>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
struct TrieNode {
    children: [Option<u32>; 2],
    // Direct symbol < K, or == K for ESCAPE.
    symbol: Option<u32>,
}

/// Builds the codebook for a rank histogram.
///
/// ESCAPE's weight is the histogram mass at ranks >= K plus one, so the
/// escape path always has a codeword even for in-table histograms. Huffman
/// merge order is pinned by (weight, lowest contained symbol) and the
/// canonical reassignment erases any remaining tree-shape freedom.
pub fn build_codebook(
    histogram: &BTreeMap<Rank, u64>,
    table_size: u32,
    vocab_size: usize,
) -> Result<Codebook> {
    if histogram.is_empty() {
        return Err(Error::Parameter("empty rank histogram".into()));
    }
    if table_size < 2 || table_size as usize > vocab_size {
        return Err(Error::Parameter(format!(
            "table size {table_size} outside 2..=|V| ({vocab_size})"
        )));
    }
    let mut weights = vec![0u64; table_size as usize + 1];
    for (rank, count) in histogram {
        if (rank.0 as usize) >= vocab_size {
            return Err(Error::RankOutOfRange {
                rank: rank.0,
                vocab: vocab_size,
            });
        }
        if rank.0 < table_size {
            weights[rank.index()] += count;
        } else {
            weights[table_size as usize] += count;
        }
    }
    weights[table_size as usize] += 1;
    let lengths = huffman_lengths(&weights);
    Codebook::from_lengths(table_size, escape_width_for(vocab_size), lengths)
}

fn escape_width_for(vocab_size: usize) -> u32 {
    debug_assert!(vocab_size >= 2);
    usize::BITS - (vocab_size - 1).leading_zeros()
}

/// Code lengths of the Huffman tree over `weights`, merge order pinned by
/// (weight, lowest contained symbol).
fn huffman_lengths(weights: &[u64]) -> Vec<u32> {
    #[derive(Debug)]
    enum Node {
        Leaf(u32),
        Internal(usize, usize),
    }
    let mut nodes: Vec<Node> = (0..weights.len() as u32).map(Node::Leaf).collect();
    let mut heap: BinaryHeap<Reverse<(u64, u32, usize)>> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| Reverse((w, i as u32, i)))
        .collect();
    while heap.len() > 1 {
        let Reverse((wa, ma, a)) = heap.pop().unwrap();
        let Reverse((wb, mb, b)) = heap.pop().unwrap();
        let idx = nodes.len();
        nodes.push(Node::Internal(a, b));
        heap.push(Reverse((wa + wb, ma.min(mb), idx)));
    }
    let root = heap.pop().unwrap().0 .2;
    let mut lengths = vec![0u32; weights.len()];
    // Single-symbol alphabets would need a padded 1-bit code, but the
    // escape symbol guarantees at least two leaves here.
    let mut stack = vec![(root, 0u32)];
    while let Some((idx, depth)) = stack.pop() {
        match nodes[idx] {
            Node::Leaf(sym) => lengths[sym as usize] = depth.max(1),
            Node::Internal(a, b) => {
                stack.push((a, depth + 1));
                stack.push((b, depth + 1));
            }
        }
    }
    lengths
}

impl Codebook {
    /// Rebuilds canonical codewords from lengths: symbols sorted by
    /// (length, symbol) receive consecutive code values.
    fn from_lengths(table_size: u32, escape_width: u32, lengths: Vec<u32>) -> Result<Codebook> {
        if lengths.len() != table_size as usize + 1 {
            return Err(Error::Parameter(format!(
                "expected {} code lengths, got {}",
                table_size + 1,
                lengths.len()
            )));
        }
        if lengths.iter().any(|&l| l == 0 || l > 1 << 15) {
            return Err(Error::Parameter("code length outside 1..=32768".into()));
        }
        let mut by_length: Vec<(u32, u32)> = lengths
            .iter()
            .enumerate()
            .map(|(sym, &len)| (len, sym as u32))
            .collect();
        by_length.sort_unstable();
        let mut codes = vec![BitStream::new(); lengths.len()];
        // Canonical progression, kept as a bit vector because skewed
        // histograms can exceed 64-bit code lengths.
        let mut code: Vec<bool> = Vec::new();
        let mut first = true;
        for &(len, sym) in &by_length {
            if first {
                code = vec![false; len as usize];
                first = false;
            } else {
                if !increment(&mut code) {
                    return Err(Error::Parameter(
                        "code lengths violate the Kraft inequality".into(),
                    ));
                }
                code.resize(len as usize, false);
            }
            codes[sym as usize] = BitStream::from_bits(code.iter().copied());
        }
        let trie = build_trie(&codes)?;
        Ok(Codebook {
            table_size,
            escape_width,
            lengths,
            codes,
            trie,
        })
    }

    pub fn table_size(&self) -> u32 {
        self.table_size
    }

    pub fn escape_width(&self) -> u32 {
        self.escape_width
    }

    /// Code lengths for the K direct symbols followed by ESCAPE.
    pub fn code_lengths(&self) -> &[u32] {
        &self.lengths
    }

    /// Codeword for a direct rank symbol (< K); the last entry is ESCAPE.
    pub fn codeword(&self, symbol: u32) -> &BitStream {
        &self.codes[symbol as usize]
    }

    fn escape_code(&self) -> &BitStream {
        &self.codes[self.table_size as usize]
    }

    /// Pairwise prefix-freedom scan over all K+1 codewords.
    pub fn is_prefix_free(&self) -> bool {
        for (i, a) in self.codes.iter().enumerate() {
            for (j, b) in self.codes.iter().enumerate() {
                if i != j
                    && a.len() <= b.len()
                    && a.iter().zip(b.iter()).all(|(x, y)| x == y)
                {
                    return false;
                }
            }
        }
        true
    }

    /// Writes the versioned container: magic "RCB1", K, escape width, then
    /// K+1 (symbol, code length) pairs, all little-endian u32.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(self.table_size)?;
        w.write_u32::<LittleEndian>(self.escape_width)?;
        for (sym, &len) in self.lengths.iter().enumerate() {
            w.write_u32::<LittleEndian>(sym as u32)?;
            w.write_u32::<LittleEndian>(len)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Codebook> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|e| Error::format("codebook", format!("missing magic: {e}")))?;
        if &magic != MAGIC {
            return Err(Error::format("codebook", format!("bad magic {magic:?}")));
        }
        let read = |r: &mut R, what: &str| -> Result<u32> {
            r.read_u32::<LittleEndian>()
                .map_err(|e| Error::format("codebook", format!("truncated at {what}: {e}")))
        };
        let table_size = read(&mut r, "table size")?;
        if table_size < 2 {
            return Err(Error::format("codebook", "table size below 2"));
        }
        let escape_width = read(&mut r, "escape width")?;
        if escape_width == 0 || escape_width > 32 {
            return Err(Error::format("codebook", "escape width outside 1..=32"));
        }
        let mut lengths = Vec::with_capacity(table_size as usize + 1);
        for expected in 0..=table_size {
            let sym = read(&mut r, "symbol")?;
            if sym != expected {
                return Err(Error::format(
                    "codebook",
                    format!("symbol {sym} out of order, expected {expected}"),
                ));
            }
            lengths.push(read(&mut r, "code length")?);
        }
        Codebook::from_lengths(table_size, escape_width, lengths)
            .map_err(|e| Error::format("codebook", e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Codebook> {
        let bytes = std::fs::read(path)?;
        Codebook::read_from(&bytes[..])
    }
}

fn build_trie(codes: &[BitStream]) -> Result<Vec<TrieNode>> {
    let mut trie = vec![TrieNode::default()];
    for (sym, code) in codes.iter().enumerate() {
        let mut node = 0usize;
        for bit in code.iter() {
            if trie[node].symbol.is_some() {
                return Err(Error::Parameter("codeword extends past a leaf".into()));
            }
            let slot = bit as usize;
            node = match trie[node].children[slot] {
                Some(next) => next as usize,
                None => {
                    let next = trie.len();
                    trie.push(TrieNode::default());
                    trie[node].children[slot] = Some(next as u32);
                    next
                }
            };
        }
        if trie[node].symbol.is_some() || trie[node].children.iter().any(Option::is_some) {
            return Err(Error::Parameter("codewords are not prefix-free".into()));
        }
        trie[node].symbol = Some(sym as u32);
    }
    Ok(trie)
}

/// Adds one to a big-endian bit vector; false when it would overflow.
fn increment(code: &mut [bool]) -> bool {
    for bit in code.iter_mut().rev() {
        if *bit {
            *bit = false;
        } else {
            *bit = true;
            return true;
        }
    }
    false
}

/// Concatenated codewords of all ranks. Inverse of [`decode_ranks`].
pub fn encode_ranks(codebook: &Codebook, ranks: &[Rank]) -> Result<BitStream> {
    let mut out = BitStream::new();
    for &rank in ranks {
        if rank.0 < codebook.table_size {
            out.extend(codebook.codeword(rank.0));
        } else {
            if rank.0 as u64 >= 1u64 << codebook.escape_width {
                return Err(Error::RankOutOfRange {
                    rank: rank.0,
                    vocab: 1usize << codebook.escape_width,
                });
            }
            out.extend(codebook.escape_code());
            out.push_uint(rank.0 as u64, codebook.escape_width);
        }
    }
    Ok(out)
}

/// Greedy prefix-free decode, left to right. Trailing bits that do not
/// complete a codeword (or an escape payload) are padding and are dropped;
/// that is expected, not an error.
pub fn decode_ranks(codebook: &Codebook, bits: &BitStream) -> Vec<Rank> {
    let mut ranks = Vec::new();
    let mut pos = 0usize;
    'outer: while pos < bits.len() {
        let mut node = 0usize;
        let mut cursor = pos;
        let symbol = loop {
            if let Some(sym) = codebook.trie[node].symbol {
                break sym;
            }
            let Some(bit) = bits.get(cursor) else {
                break 'outer; // dangling partial codeword
            };
            let Some(next) = codebook.trie[node].children[bit as usize] else {
                break 'outer; // unreachable for complete canonical tries
            };
            node = next as usize;
            cursor += 1;
        };
        if symbol == codebook.table_size {
            let Some(value) = bits.read_uint(cursor, codebook.escape_width) else {
                break; // incomplete escape payload
            };
            ranks.push(Rank(value as u32));
            pos = cursor + codebook.escape_width as usize;
        } else {
            ranks.push(Rank(symbol));
            pos = cursor;
        }
    }
    ranks
}
