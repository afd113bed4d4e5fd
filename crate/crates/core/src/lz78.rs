//! LZ78 incremental parsing and a bit-exact code built on it.
//!
//! Phrase `i` (1-based) is coded as its pointer into the dictionary of prior
//! phrases in `ceil(log2 i)` bits (index 0 is the empty phrase), followed by
//! the innovation symbol in `ceil(log2 K)` bits. The final phrase of a block
//! may repeat an earlier phrase; it is coded as a pointer alone and the
//! decoder recognizes it because the pointed-to phrase exactly fills the
//! remaining output budget. With the block length known to the decoder the
//! code is prefix-free, so its length function satisfies Kraft's inequality.

use serde::{Deserialize, Serialize};

use crate::alphabet::Block;
use crate::bits::{ceil_log2, BitString};
use crate::error::{precondition, Error, Result};

/// Which code-length function defines the universal measure.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthMode {
    /// Plain LZ78 code length.
    #[default]
    Lz,
    /// `min{LZ, n·ceil(log2 K)} + 1`: LZ78 or raw, behind a flag bit.
    LzPrime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Phrase {
    /// Index of the prefix phrase; 0 is the empty phrase.
    pub pointer: u32,
    pub innovation: Option<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LzParse {
    pub phrases: Vec<Phrase>,
    /// Length of each phrase in symbols.
    pub lengths: Vec<u32>,
    pub alphabet_size: usize,
    pub bit_length: u64,
    pub final_is_duplicate: bool,
}

impl LzParse {
    /// Number of phrases, c(x̂).
    pub fn c(&self) -> usize {
        self.phrases.len()
    }

    /// Phrase strings, reconstructed from pointers and innovations.
    pub fn phrase_strings(&self) -> Vec<Vec<u8>> {
        let mut out: Vec<Vec<u8>> = Vec::with_capacity(self.phrases.len());
        for p in &self.phrases {
            let mut s = if p.pointer == 0 {
                Vec::new()
            } else {
                out[p.pointer as usize - 1].clone()
            };
            s.extend(p.innovation);
            out.push(s);
        }
        out
    }
}

/// Bits spent on the pointer of phrase `i` (1-based).
pub fn pointer_width(i: usize) -> u32 {
    ceil_log2(i as u64)
}

/// Bits spent on an innovation symbol.
pub fn symbol_width(alphabet_size: usize) -> u32 {
    ceil_log2(alphabet_size as u64)
}

const NO_CHILD: u32 = u32::MAX;

/// Greedy incremental parse using a K-ary trie keyed by symbol. Trie node
/// ids are phrase indices in insertion order.
pub fn lz_parse(b: &Block, alphabet_size: usize) -> Result<LzParse> {
    if b.is_empty() {
        return Err(precondition("cannot parse an empty block"));
    }
    check_alphabet(b, alphabet_size)?;
    let k = alphabet_size;
    let mut children: Vec<u32> = vec![NO_CHILD; k];
    let mut depth: Vec<u32> = vec![0];
    let mut phrases = Vec::new();
    let mut lengths = Vec::new();
    let mut node = 0u32;
    let mut final_is_duplicate = false;

    let symbols = b.symbols();
    for (pos, &s) in symbols.iter().enumerate() {
        let child = children[node as usize * k + s as usize];
        if child != NO_CHILD {
            node = child;
            if pos + 1 == symbols.len() {
                phrases.push(Phrase {
                    pointer: node,
                    innovation: None,
                });
                lengths.push(depth[node as usize]);
                final_is_duplicate = true;
            }
            continue;
        }
        let id = depth.len() as u32;
        children[node as usize * k + s as usize] = id;
        children.extend(std::iter::repeat(NO_CHILD).take(k));
        depth.push(depth[node as usize] + 1);
        phrases.push(Phrase {
            pointer: node,
            innovation: Some(s),
        });
        lengths.push(depth[node as usize] + 1);
        node = 0;
    }

    let bit_length = code_length(&phrases, k);
    Ok(LzParse {
        phrases,
        lengths,
        alphabet_size: k,
        bit_length,
        final_is_duplicate,
    })
}

fn code_length(phrases: &[Phrase], k: usize) -> u64 {
    let sym = symbol_width(k) as u64;
    phrases
        .iter()
        .enumerate()
        .map(|(i, p)| pointer_width(i + 1) as u64 + if p.innovation.is_some() { sym } else { 0 })
        .sum()
}

fn check_alphabet(b: &Block, alphabet_size: usize) -> Result<()> {
    if alphabet_size < 2 {
        return Err(precondition("alphabet size must be at least 2"));
    }
    match b.max_symbol() {
        Some(s) if s as usize >= alphabet_size => Err(Error::AlphabetMismatch(format!(
            "symbol {s} outside alphabet of size {alphabet_size}"
        ))),
        _ => Ok(()),
    }
}

/// LZ78 code length of `b` in bits.
pub fn lz_bits(b: &Block, alphabet_size: usize) -> Result<u64> {
    Ok(lz_parse(b, alphabet_size)?.bit_length)
}

pub fn lz_encode(b: &Block, alphabet_size: usize) -> Result<BitString> {
    let parse = lz_parse(b, alphabet_size)?;
    let sym = symbol_width(alphabet_size);
    let mut out = BitString::new();
    for (i, p) in parse.phrases.iter().enumerate() {
        out.push_bits(p.pointer as u64, pointer_width(i + 1));
        if let Some(s) = p.innovation {
            out.push_bits(s as u64, sym);
        }
    }
    debug_assert_eq!(out.len() as u64, parse.bit_length);
    Ok(out)
}

/// Output under construction by an LZ78 phrase decoder. Each dictionary
/// entry is a `(start, len)` slice of the output already produced.
pub(crate) struct PhraseBuilder {
    pub output: Vec<u8>,
    pub entries: Vec<(usize, usize)>,
    pub target: usize,
}

impl PhraseBuilder {
    pub fn new(target: usize) -> Self {
        Self {
            output: Vec::with_capacity(target),
            entries: vec![(0, 0)],
            target,
        }
    }

    /// 1-based index of the phrase about to be decoded.
    pub fn next_phrase(&self) -> usize {
        self.entries.len()
    }

    pub fn remaining(&self) -> usize {
        self.target - self.output.len()
    }

    pub fn is_done(&self) -> bool {
        self.output.len() >= self.target
    }

    pub fn entry_len(&self, pointer: usize) -> usize {
        self.entries[pointer].1
    }

    /// Emits up to `limit` symbols of entry `pointer`, without growing the
    /// dictionary.
    pub fn copy_prefix(&mut self, pointer: usize, limit: usize) {
        let (start, len) = self.entries[pointer];
        let take = len.min(limit);
        self.output.extend_from_within(start..start + take);
    }

    /// Emits entry `pointer` followed by `symbol` and records the new phrase.
    pub fn extend(&mut self, pointer: usize, symbol: u8) {
        let (start, len) = self.entries[pointer];
        let new_start = self.output.len();
        self.output.extend_from_within(start..start + len);
        self.output.push(symbol);
        self.entries.push((new_start, len + 1));
    }
}

pub fn lz_decode(bits: &BitString, n: usize, alphabet_size: usize) -> Result<Block> {
    if alphabet_size < 2 {
        return Err(precondition("alphabet size must be at least 2"));
    }
    let sym = symbol_width(alphabet_size);
    let mut reader = bits.reader();
    let mut out = PhraseBuilder::new(n);
    while !out.is_done() {
        let phrase = out.next_phrase();
        let pointer = reader.read_bits(pointer_width(phrase))?;
        if pointer >= phrase as u64 {
            return Err(Error::CorruptStream { phrase, pointer });
        }
        let pointer = pointer as usize;
        let len = out.entry_len(pointer);
        if len == out.remaining() {
            out.copy_prefix(pointer, len);
            break;
        }
        if len > out.remaining() {
            return Err(Error::CorruptStream {
                phrase,
                pointer: pointer as u64,
            });
        }
        let symbol = reader.read_bits(sym)?;
        if symbol >= alphabet_size as u64 {
            return Err(Error::Format(format!(
                "symbol {symbol} outside alphabet of size {alphabet_size}"
            )));
        }
        out.extend(pointer, symbol as u8);
    }
    Ok(Block::from_symbols(out.output))
}

/// The analytic bound `[c+1]·log2(2K(c+1))` and its `c·log2 c + n·ε(n)`
/// relaxation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LzLengthBound {
    pub bound_bits: f64,
    /// ε(n); infinite when n < 2.
    pub epsilon_n: f64,
    /// `c·log2 c + n·ε(n)`.
    pub relaxed_bits: f64,
}

/// `one_minus_eps` is the factor multiplying `log n` in the phrase-count
/// bound the relaxation relies on; 1.0 is the default convention.
pub fn lz_length_bound(c: usize, n: usize, alphabet_size: usize, one_minus_eps: f64) -> Result<LzLengthBound> {
    if c == 0 {
        return Err(precondition("phrase count must be at least 1"));
    }
    let k = alphabet_size as f64;
    let c1 = (c + 1) as f64;
    let bound_bits = c1 * (2.0 * k * c1).log2();
    let epsilon_n = epsilon_of_n(n, alphabet_size, one_minus_eps);
    let cf = c as f64;
    Ok(LzLengthBound {
        bound_bits,
        epsilon_n,
        relaxed_bits: cf * cf.log2() + n as f64 * epsilon_n,
    })
}

/// ε(n) = [log e + n·log K·log(2K)/((1−ε_n)·log n) + log(2K(n+1))] / n.
pub fn epsilon_of_n(n: usize, alphabet_size: usize, one_minus_eps: f64) -> f64 {
    if n < 2 {
        return f64::INFINITY;
    }
    let nf = n as f64;
    let k = alphabet_size as f64;
    let total = std::f64::consts::LOG2_E
        + nf * k.log2() * (2.0 * k).log2() / (one_minus_eps * nf.log2())
        + (2.0 * k * (nf + 1.0)).log2();
    total / nf
}

/// `min{LZ(b), n·ceil(log2 K)} + 1`.
pub fn lz_prime_length(b: &Block, alphabet_size: usize) -> Result<u64> {
    let lz = lz_bits(b, alphabet_size)?;
    let raw = b.len() as u64 * symbol_width(alphabet_size) as u64;
    Ok(lz.min(raw) + 1)
}

/// Code length of `b` under the chosen length function.
pub fn length_bits(b: &Block, alphabet_size: usize, mode: LengthMode) -> Result<u64> {
    match mode {
        LengthMode::Lz => lz_bits(b, alphabet_size),
        LengthMode::LzPrime => lz_prime_length(b, alphabet_size),
    }
}
