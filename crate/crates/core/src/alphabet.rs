//! Finite alphabets, fixed-length blocks, and the one-block-per-line text
//! format.

use std::fmt;
use std::sync::Arc;

use crate::error::{precondition, Error, Result};

/// Default upper bound on the number of states any exhaustive enumeration
/// may visit.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1 << 20;

/// Largest supported alphabet.
pub const MAX_ALPHABET: usize = 64;

/// An ordered set of distinct characters used for text I/O.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alphabet {
    symbols: Vec<char>,
}

impl Alphabet {
    pub fn new(symbols: &str) -> Result<Self> {
        let symbols: Vec<char> = symbols.chars().collect();
        if symbols.len() < 2 {
            return Err(precondition("alphabet needs at least 2 symbols"));
        }
        if symbols.len() > MAX_ALPHABET {
            return Err(precondition(format!(
                "alphabet of {} symbols exceeds the supported maximum {MAX_ALPHABET}",
                symbols.len()
            )));
        }
        for (i, c) in symbols.iter().enumerate() {
            if symbols[..i].contains(c) {
                return Err(precondition(format!("duplicate alphabet symbol {c:?}")));
            }
        }
        Ok(Self { symbols })
    }

    /// `0`, `1`, ... up to `size` symbols, then lowercase letters.
    pub fn numeric(size: usize) -> Result<Self> {
        const DIGITS: &str = "0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ+/";
        if size > DIGITS.len() {
            return Err(precondition(format!("no default alphabet of size {size}")));
        }
        Self::new(&DIGITS[..size])
    }

    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbol(&self, index: u8) -> char {
        self.symbols[index as usize]
    }

    pub fn index_of(&self, c: char) -> Option<u8> {
        self.symbols.iter().position(|&s| s == c).map(|i| i as u8)
    }

    pub fn as_string(&self) -> String {
        self.symbols.iter().collect()
    }

    /// Parses one line of text into a block over this alphabet.
    pub fn parse_block(&self, line: &str) -> Result<Block> {
        let symbols = line
            .chars()
            .map(|c| {
                self.index_of(c).ok_or_else(|| Error::ForeignSymbol {
                    symbol: c,
                    alphabet: self.as_string(),
                })
            })
            .collect::<Result<Vec<u8>>>()?;
        Block::new(symbols, self.size())
    }

    /// Parses a text document with one block per line. Blank lines are skipped.
    pub fn parse_blocks(&self, text: &str) -> Result<Vec<Block>> {
        text.lines()
            .map(|l| l.trim_end_matches('\r'))
            .filter(|l| !l.is_empty())
            .map(|l| self.parse_block(l))
            .collect()
    }

    pub fn render(&self, block: &Block) -> String {
        block.symbols().iter().map(|&s| self.symbol(s)).collect()
    }
}

/// An immutable length-n vector of alphabet indices.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Block {
    symbols: Arc<[u8]>,
}

impl Block {
    /// Builds a block, checking every symbol is below `alphabet_size`.
    pub fn new(symbols: Vec<u8>, alphabet_size: usize) -> Result<Self> {
        if let Some(&bad) = symbols.iter().find(|&&s| s as usize >= alphabet_size) {
            return Err(precondition(format!(
                "symbol index {bad} outside alphabet of size {alphabet_size}"
            )));
        }
        Ok(Self::from_symbols(symbols))
    }

    pub(crate) fn from_symbols(symbols: Vec<u8>) -> Self {
        Self {
            symbols: symbols.into(),
        }
    }

    /// The `index`-th block of `size^n` in lexicographic order (first symbol
    /// most significant).
    pub fn from_index(mut index: u64, n: usize, size: usize) -> Self {
        let mut symbols = vec![0u8; n];
        for slot in symbols.iter_mut().rev() {
            *slot = (index % size as u64) as u8;
            index /= size as u64;
        }
        Self::from_symbols(symbols)
    }

    /// Inverse of [`Block::from_index`].
    pub fn index(&self, size: usize) -> u64 {
        self.symbols
            .iter()
            .fold(0u64, |acc, &s| acc * size as u64 + s as u64)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    pub fn max_symbol(&self) -> Option<u8> {
        self.symbols.iter().copied().max()
    }

    /// Parses a block written with the digits `0`..`9` (and letters beyond).
    pub fn parse_digits(text: &str, alphabet_size: usize) -> Result<Self> {
        Alphabet::numeric(alphabet_size)?.parse_block(text)
    }
}

impl fmt::Debug for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Block(")?;
        for &s in self.symbols.iter() {
            if s < 10 {
                write!(f, "{s}")?;
            } else {
                write!(f, "[{s}]")?;
            }
        }
        write!(f, ")")
    }
}

/// Number of blocks of length `n` over `size` symbols, or `None` on overflow.
pub fn block_count(size: usize, n: usize) -> Option<u128> {
    (size as u128).checked_pow(n as u32)
}

/// Fails unless `size^n` fits under `cap`.
pub fn check_cap(size: usize, n: usize, cap: u64) -> Result<u64> {
    match block_count(size, n) {
        Some(states) if states <= cap as u128 => Ok(states as u64),
        Some(states) => Err(Error::EnumerationInfeasible { states, cap }),
        None => Err(Error::EnumerationInfeasible {
            states: u128::MAX,
            cap,
        }),
    }
}

/// Iterates all `size^n` blocks in lexicographic order, after a cap check.
pub fn all_blocks(size: usize, n: usize, cap: u64) -> Result<impl Iterator<Item = Block>> {
    let total = check_cap(size, n, cap)?;
    Ok((0..total).map(move |i| Block::from_index(i, n, size)))
}
