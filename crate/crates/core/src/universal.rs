//! The universal distribution `U(x̂) ∝ 2^{−LZ(x̂)}` over reproduction blocks
//! of a fixed length: exact tables, sphere masses, and samplers.
//!
//! Weights are dyadic. With `L_max` the longest code length in the table, a
//! block of length `L` has weight numerator `2^{L_max − L}` over the common
//! denominator `2^{L_max}`; sums over sets of blocks are then exact integers.

use std::io::Write;

use num::bigint::BigUint;
use num::rational::BigRational;
use num::{BigInt, One, ToPrimitive, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::alphabet::{check_cap, Alphabet, Block};
use crate::distortion::{radius, DistortionSpec, Rational};
use crate::error::{precondition, Error, Result};
use crate::lz78::{length_bits, pointer_width, symbol_width, LengthMode, PhraseBuilder};
use crate::stats::wilson_interval;

/// Seeded generator used by every sampler in the crate.
pub type SeedRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeedRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Debug)]
enum Cumulative {
    Small(Vec<u128>),
    Big(Vec<BigUint>),
}

/// Exact enumeration of `U` over all `K^n` reproduction blocks.
#[derive(Clone, Debug)]
pub struct UniversalTable {
    n: usize,
    k: usize,
    mode: LengthMode,
    symbols: Vec<u8>,
    bits: Vec<u32>,
    max_bits: u32,
    normalizer: BigUint,
    cumulative: Cumulative,
}

impl UniversalTable {
    pub fn build(n: usize, alphabet_size: usize, mode: LengthMode, cap: u64) -> Result<Self> {
        if n == 0 {
            return Err(precondition("block length must be positive"));
        }
        if alphabet_size < 2 {
            return Err(precondition("alphabet size must be at least 2"));
        }
        let total = check_cap(alphabet_size, n, cap)?;
        let mut symbols = Vec::with_capacity(total as usize * n);
        let mut bits = Vec::with_capacity(total as usize);
        for i in 0..total {
            let b = Block::from_index(i, n, alphabet_size);
            bits.push(length_bits(&b, alphabet_size, mode)? as u32);
            symbols.extend_from_slice(b.symbols());
        }
        let max_bits = *bits.iter().max().expect("table is non-empty");

        let mut histogram = vec![0u64; max_bits as usize + 1];
        for &l in &bits {
            histogram[l as usize] += 1;
        }
        let normalizer = numerator_from_histogram(&histogram, max_bits);

        let cumulative = if normalizer.bits() <= 127 {
            let mut acc = 0u128;
            Cumulative::Small(
                bits.iter()
                    .map(|&l| {
                        acc += 1u128 << (max_bits - l);
                        acc
                    })
                    .collect(),
            )
        } else {
            let mut acc = BigUint::zero();
            Cumulative::Big(
                bits.iter()
                    .map(|&l| {
                        acc += BigUint::one() << (max_bits - l);
                        acc.clone()
                    })
                    .collect(),
            )
        };

        Ok(Self {
            n,
            k: alphabet_size,
            mode,
            symbols,
            bits,
            max_bits,
            normalizer,
            cumulative,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alphabet_size(&self) -> usize {
        self.k
    }

    pub fn length_mode(&self) -> LengthMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn block(&self, index: usize) -> Block {
        Block::from_symbols(self.block_symbols(index).to_vec())
    }

    pub fn block_symbols(&self, index: usize) -> &[u8] {
        &self.symbols[index * self.n..(index + 1) * self.n]
    }

    /// Code length of the block at `index`.
    pub fn code_bits(&self, index: usize) -> u32 {
        self.bits[index]
    }

    pub fn max_bits(&self) -> u32 {
        self.max_bits
    }

    pub fn min_bits(&self) -> u32 {
        *self.bits.iter().min().expect("table is non-empty")
    }

    /// Normalizer `Z_n = Σ 2^{−L}` as an exact rational.
    pub fn normalizer(&self) -> BigRational {
        ratio(self.normalizer.clone(), BigUint::one() << self.max_bits)
    }

    /// Numerator of `Z_n` over the common denominator `2^{L_max}`.
    pub fn normalizer_numerator(&self) -> &BigUint {
        &self.normalizer
    }

    pub fn probability(&self, index: usize) -> BigRational {
        ratio(
            BigUint::one() << (self.max_bits - self.bits[index]),
            self.normalizer.clone(),
        )
    }

    pub fn probability_f64(&self, index: usize) -> f64 {
        self.probability(index).to_f64().unwrap_or(0.0)
    }

    pub fn probabilities_f64(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.probability_f64(i)).collect()
    }

    /// Exact sum of all probabilities, computed term by term.
    pub fn probability_sum(&self) -> BigRational {
        (0..self.len()).fold(BigRational::zero(), |acc, i| acc + self.probability(i))
    }

    fn check_source(&self, x: &Block, spec: &DistortionSpec) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: self.n,
            });
        }
        if spec.repro_size() != self.k {
            return Err(Error::AlphabetMismatch(format!(
                "distortion reproduction alphabet {} vs table alphabet {}",
                spec.repro_size(),
                self.k
            )));
        }
        spec.check_source(x)
    }

    /// Indices of all blocks in `S(x, D)`.
    pub fn sphere_indices(&self, x: &Block, level: Rational, spec: &DistortionSpec) -> Result<Vec<usize>> {
        self.check_source(x, spec)?;
        let r = radius(self.n, level);
        Ok((0..self.len())
            .filter(|&i| spec.within(x.symbols(), self.block_symbols(i), &r))
            .collect())
    }

    /// Writes `block,lz_bits,weight_numerator,weight_exponent` rows; each
    /// weight is `numerator / 2^exponent`.
    pub fn write_csv<W: Write>(&self, mut w: W, alphabet: &Alphabet) -> Result<()> {
        if alphabet.size() != self.k {
            return Err(Error::AlphabetMismatch(format!(
                "alphabet of size {} for table over {} symbols",
                alphabet.size(),
                self.k
            )));
        }
        writeln!(w, "block,lz_bits,weight_numerator,weight_exponent")?;
        for i in 0..self.len() {
            writeln!(w, "{},{},1,{}", alphabet.render(&self.block(i)), self.bits[i], self.bits[i])?;
        }
        Ok(())
    }

    pub(crate) fn draw_index(&self, rng: &mut SeedRng) -> usize {
        match &self.cumulative {
            Cumulative::Small(cum) => {
                let total = *cum.last().expect("non-empty");
                let u = uniform_below_u128(rng, total);
                cum.partition_point(|&c| c <= u)
            }
            Cumulative::Big(cum) => {
                let total = cum.last().expect("non-empty");
                let u = uniform_below_big(rng, total);
                cum.partition_point(|c| *c <= u)
            }
        }
    }
}

fn numerator_from_histogram(histogram: &[u64], max_bits: u32) -> BigUint {
    histogram
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .fold(BigUint::zero(), |acc, (l, &c)| {
            acc + (BigUint::from(c) << (max_bits as usize - l))
        })
}

fn ratio(num: BigUint, den: BigUint) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn uniform_below_u128(rng: &mut SeedRng, bound: u128) -> u128 {
    debug_assert!(bound > 0);
    let width = 128 - (bound - 1).leading_zeros();
    if width == 0 {
        return 0;
    }
    let mask = if width == 128 { u128::MAX } else { (1u128 << width) - 1 };
    loop {
        let v = (((rng.next_u64() as u128) << 64) | rng.next_u64() as u128) & mask;
        if v < bound {
            return v;
        }
    }
}

fn uniform_below_big(rng: &mut SeedRng, bound: &BigUint) -> BigUint {
    let width = bound.bits();
    let words = width.div_ceil(32) as usize;
    loop {
        let mut digits: Vec<u32> = (0..words).map(|_| rng.next_u32()).collect();
        let spare = words as u64 * 32 - width;
        if spare > 0 {
            let last = digits.last_mut().expect("width > 0");
            *last &= u32::MAX >> spare;
        }
        let v = BigUint::from_slice(&digits);
        if &v < bound {
            return v;
        }
    }
}

/// `log2` of a big integer, accurate to double precision.
pub fn log2_big(v: &BigUint) -> f64 {
    let bits = v.bits();
    if bits <= 64 {
        return v.to_u64().map_or(f64::NEG_INFINITY, |x| (x as f64).log2());
    }
    let shift = bits - 64;
    let top = (v >> shift).to_u64().expect("64 bits remain");
    (top as f64).log2() + shift as f64
}

/// `−log2` of a non-negative exact rational; infinite at zero.
pub fn neg_log2(r: &BigRational) -> f64 {
    if r.is_zero() {
        return f64::INFINITY;
    }
    let num = r.numer().magnitude();
    let den = r.denom().magnitude();
    log2_big(den) - log2_big(num)
}

#[derive(Clone, Debug)]
pub struct SphereMass {
    /// Exact `U[S(x, D)]`.
    pub mass: BigRational,
    pub sphere_size: u64,
    /// Shortest code length inside the sphere; `None` when it is empty.
    pub min_lz_in_sphere: Option<u32>,
    numerator: BigUint,
    normalizer: BigUint,
}

impl SphereMass {
    pub fn is_empty(&self) -> bool {
        self.sphere_size == 0
    }

    pub fn mass_f64(&self) -> f64 {
        self.mass.to_f64().unwrap_or(0.0)
    }

    /// `−log2 U[S(x, D)]`; infinite for an empty sphere.
    pub fn neg_log2(&self) -> f64 {
        if self.is_empty() {
            f64::INFINITY
        } else {
            log2_big(&self.normalizer) - log2_big(&self.numerator)
        }
    }

    /// Exact test of `bits ≥ −log2 U[S]`, i.e. `2^{−bits} ≤ U[S]`.
    pub fn is_dominated_by(&self, bits: u32) -> bool {
        !self.is_empty() && self.normalizer <= (&self.numerator << bits as usize)
    }
}

pub fn sphere_mass(x: &Block, level: Rational, spec: &DistortionSpec, table: &UniversalTable) -> Result<SphereMass> {
    let indices = table.sphere_indices(x, level, spec)?;
    Ok(sphere_mass_of(&indices, table))
}

/// Mass of an explicit set of table indices.
pub fn sphere_mass_of(indices: &[usize], table: &UniversalTable) -> SphereMass {
    let mut histogram = vec![0u64; table.max_bits as usize + 1];
    for &i in indices {
        histogram[table.bits[i] as usize] += 1;
    }
    let numerator = numerator_from_histogram(&histogram, table.max_bits);
    SphereMass {
        mass: ratio(numerator.clone(), table.normalizer.clone()),
        sphere_size: indices.len() as u64,
        min_lz_in_sphere: histogram.iter().position(|&c| c > 0).map(|l| l as u32),
        numerator,
        normalizer: table.normalizer.clone(),
    }
}

/// Exact sampler: cumulative inversion of the table on a seeded stream.
pub struct ExactSampler<'a> {
    table: &'a UniversalTable,
    rng: SeedRng,
}

impl<'a> ExactSampler<'a> {
    pub fn new(table: &'a UniversalTable, seed: u64) -> Self {
        Self {
            table,
            rng: seeded_rng(seed),
        }
    }

    pub fn next_index(&mut self) -> usize {
        self.table.draw_index(&mut self.rng)
    }
}

pub fn sample_exact(table: &UniversalTable, seed: u64, count: usize) -> Vec<Block> {
    let mut s = ExactSampler::new(table, seed);
    (0..count).map(|_| table.block(s.next_index())).collect()
}

/// Approximate sampler: fair coin flips fed into the LZ78 phrase decoder
/// until `n` symbols are out.
///
/// Pointer patterns naming a phrase that does not exist yet, and symbol
/// patterns outside the alphabet, are redrawn within the same phrase. A
/// phrase that would overrun the block is truncated at `n`.
pub struct BitFeedSampler {
    n: usize,
    k: usize,
    rng: SeedRng,
    buffer: u64,
    available: u32,
}

impl BitFeedSampler {
    pub fn new(n: usize, alphabet_size: usize, seed: u64) -> Self {
        Self {
            n,
            k: alphabet_size,
            rng: seeded_rng(seed),
            buffer: 0,
            available: 0,
        }
    }

    fn fair_bits(&mut self, width: u32) -> u64 {
        let mut v = 0u64;
        for _ in 0..width {
            if self.available == 0 {
                self.buffer = self.rng.next_u64();
                self.available = 64;
            }
            v = (v << 1) | (self.buffer >> 63);
            self.buffer <<= 1;
            self.available -= 1;
        }
        v
    }

    pub fn next_symbols(&mut self) -> Vec<u8> {
        let sym = symbol_width(self.k);
        let mut out = PhraseBuilder::new(self.n);
        while !out.is_done() {
            let phrase = out.next_phrase();
            let width = pointer_width(phrase);
            let pointer = loop {
                let p = self.fair_bits(width) as usize;
                if p < phrase {
                    break p;
                }
            };
            if out.entry_len(pointer) >= out.remaining() {
                let rem = out.remaining();
                out.copy_prefix(pointer, rem);
                break;
            }
            let symbol = loop {
                let s = self.fair_bits(sym) as usize;
                if s < self.k {
                    break s as u8;
                }
            };
            out.extend(pointer, symbol);
        }
        out.output
    }

    pub fn next_block(&mut self) -> Block {
        Block::from_symbols(self.next_symbols())
    }
}

pub fn sample_bitfeed(n: usize, alphabet_size: usize, seed: u64, count: usize) -> Vec<Block> {
    let mut s = BitFeedSampler::new(n, alphabet_size, seed);
    (0..count).map(|_| s.next_block()).collect()
}

/// Exact output law of [`BitFeedSampler`], indexed like a table, found by
/// walking every decoding path. Each pointer of phrase `i` has probability
/// `1/i` and each symbol `1/K` under the redraw rule.
pub fn bitfeed_distribution(n: usize, alphabet_size: usize, cap: u64) -> Result<Vec<f64>> {
    let total = check_cap(alphabet_size, n, cap)?;
    let mut probs = vec![0.0; total as usize];
    let mut out = PhraseBuilder::new(n);
    walk_bitfeed(&mut out, alphabet_size, 1.0, &mut probs);
    Ok(probs)
}

fn walk_bitfeed(out: &mut PhraseBuilder, k: usize, p: f64, probs: &mut [f64]) {
    if out.is_done() {
        let idx = out.output.iter().fold(0usize, |acc, &s| acc * k + s as usize);
        probs[idx] += p;
        return;
    }
    let phrase = out.next_phrase();
    let p_ptr = p / phrase as f64;
    for pointer in 0..phrase {
        let mark = out.output.len();
        if out.entry_len(pointer) >= out.remaining() {
            let rem = out.remaining();
            out.copy_prefix(pointer, rem);
            walk_bitfeed(out, k, p_ptr, probs);
            out.output.truncate(mark);
            continue;
        }
        for symbol in 0..k as u8 {
            out.extend(pointer, symbol);
            walk_bitfeed(out, k, p_ptr / k as f64, probs);
            out.entries.pop();
            out.output.truncate(mark);
        }
    }
}

/// Total-variation distance between two distributions on the same support.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Monte Carlo estimate of a sphere mass from the bit-feed sampler. The
/// sampler's deviation from `U` is not corrected.
#[derive(Clone, Debug, Serialize)]
pub struct MassEstimate {
    pub estimate: f64,
    pub std_error: f64,
    /// Wilson score interval at 99% confidence.
    pub ci_low: f64,
    pub ci_high: f64,
    pub hits: u64,
    pub trials: u64,
    pub note: &'static str,
}

pub const BITFEED_BIAS_NOTE: &str = "approximate-sampler bias not corrected";

pub fn estimate_sphere_mass(
    x: &Block,
    level: Rational,
    spec: &DistortionSpec,
    seed: u64,
    trials: u64,
) -> Result<MassEstimate> {
    if trials == 0 {
        return Err(precondition("trials must be at least 1"));
    }
    spec.check_source(x)?;
    let n = x.len();
    let r = radius(n, level);
    let hits = match spec.max_distortion(n) {
        Some(max) if max <= r => trials,
        _ => {
            let mut sampler = BitFeedSampler::new(n, spec.repro_size(), seed);
            (0..trials)
                .filter(|_| spec.within(x.symbols(), &sampler.next_symbols(), &r))
                .count() as u64
        }
    };
    let t = trials as f64;
    let p = hits as f64 / t;
    let (ci_low, ci_high) = wilson_interval(hits, trials, 0.99);
    Ok(MassEstimate {
        estimate: p,
        std_error: (p * (1.0 - p) / t).sqrt(),
        ci_low,
        ci_high,
        hits,
        trials,
        note: BITFEED_BIAS_NOTE,
    })
}
