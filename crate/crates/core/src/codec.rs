//! Random-codebook d-semifaithful codec.
//!
//! Encoder and decoder share a seed instead of a stored codebook. Codewords
//! are regenerated on demand from a seeded draw stream, the encoder sends the
//! 1-based index of the first codeword within distortion `nD` of the source,
//! and an escape bit switches to a raw in-sphere witness when the scan
//! exhausts its cap.
//!
//! Wire format per block: `[escape bit][payload]`. The payload is the
//! Elias-delta code of the index when the escape bit is 0, or exactly
//! `n·ceil(log2 K)` raw symbol bits when it is 1.

use std::io::{Read, Write};
use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::alphabet::{Block, DEFAULT_ENUMERATION_CAP};
use crate::bits::{floor_log2, BitReader, BitString};
use crate::distortion::{find_witness, radius, DistortionSpec, Rational};
use crate::error::{precondition, Error, Result};
use crate::lz78::{symbol_width, LengthMode};
use crate::universal::{seeded_rng, BitFeedSampler, SeedRng, UniversalTable};

/// Default cap on codewords scanned before escaping.
pub const DEFAULT_N_MAX: u64 = 1 << 20;

// ---------------------------------------------------------------- index code

/// Length of the Elias-delta code of `i`.
pub fn index_code_len(i: u64) -> u32 {
    assert!(i >= 1, "index must be positive");
    let l = floor_log2(i);
    l + 2 * floor_log2(l as u64 + 1) + 1
}

/// Elias-delta code of a positive integer.
pub fn index_code_encode(i: u64) -> Result<BitString> {
    if i == 0 {
        return Err(precondition("index must be positive"));
    }
    let mut out = BitString::new();
    write_index(&mut out, i);
    Ok(out)
}

fn write_index(out: &mut BitString, i: u64) {
    let len = floor_log2(i) + 1;
    let len_len = floor_log2(len as u64);
    out.push_bits(0, len_len);
    out.push_bits(len as u64, len_len + 1);
    out.push_bits(i & low_mask(len - 1), len - 1);
}

fn low_mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

pub fn index_code_decode(bits: &BitString) -> Result<u64> {
    let mut r = bits.reader();
    let i = read_index(&mut r)?;
    if r.remaining() != 0 {
        return Err(Error::MalformedIndex(format!("{} trailing bits", r.remaining())));
    }
    Ok(i)
}

pub(crate) fn read_index(r: &mut BitReader<'_>) -> Result<u64> {
    let truncated = |_| Error::MalformedIndex("code ends early".into());
    let mut zeros = 0u32;
    while !r.read_bit().map_err(truncated)? {
        zeros += 1;
        if zeros > 6 {
            return Err(Error::MalformedIndex("length prefix exceeds 64-bit range".into()));
        }
    }
    let len = (1u64 << zeros) | r.read_bits(zeros).map_err(truncated)?;
    if len > 64 {
        return Err(Error::MalformedIndex(format!("length {len} exceeds 64 bits")));
    }
    let low = r.read_bits(len as u32 - 1).map_err(truncated)?;
    Ok(if len == 64 { (1u64 << 63) | low } else { (1u64 << (len - 1)) | low })
}

// ------------------------------------------------------- theoretical length

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TheoreticalLength {
    /// `−log2 u[i]` using the normalizer bound `ln(Aⁿ) + 1`:
    /// `log2 i + log2(n·ln A + 1)`.
    pub bits: f64,
    /// `log2 i + log2 n + c`.
    pub bound_bits: f64,
    /// `c = log2(ln A + 1)`.
    pub c: f64,
}

/// Ideal length of the harmonic index code `u[i] ∝ 1/i` on `1..=Aⁿ`.
pub fn theoretical_length(i: u64, n: usize, a: f64) -> Result<TheoreticalLength> {
    if i == 0 {
        return Err(precondition("index must be positive"));
    }
    if a <= 1.0 {
        return Err(precondition("A must exceed 1"));
    }
    let log_i = (i as f64).log2();
    let c = codebook_constant(a);
    Ok(TheoreticalLength {
        bits: log_i + (n as f64 * a.ln() + 1.0).log2(),
        bound_bits: log_i + (n as f64).log2() + c,
        c,
    })
}

/// `c = log2(ln A + 1)`.
pub fn codebook_constant(a: f64) -> f64 {
    (a.ln() + 1.0).log2()
}

// ------------------------------------------------------------ the codebook

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    /// Exact draws from an enumerated table.
    #[default]
    ExactTable,
    /// Random bits through the LZ78 decoder (approximate `U`).
    Bitfeed,
}

/// Seed-deterministic lazy stream of i.i.d. codewords.
#[derive(Clone, Debug)]
pub struct CodebookStream {
    seed: u64,
    n: usize,
    k: usize,
    mode: SamplerMode,
    table: Option<Arc<UniversalTable>>,
    a: f64,
    n_max: u64,
    enumeration_cap: u64,
}

impl CodebookStream {
    /// Stream drawing exactly from `table`.
    pub fn exact(table: Arc<UniversalTable>, seed: u64, a: f64, n_max: u64) -> Result<Self> {
        check_stream_params(a, n_max)?;
        Ok(Self {
            seed,
            n: table.n(),
            k: table.alphabet_size(),
            mode: SamplerMode::ExactTable,
            table: Some(table),
            a,
            n_max,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        })
    }

    pub fn bitfeed(n: usize, alphabet_size: usize, seed: u64, a: f64, n_max: u64) -> Result<Self> {
        check_stream_params(a, n_max)?;
        if n == 0 || alphabet_size < 2 {
            return Err(precondition("need n ≥ 1 and K ≥ 2"));
        }
        Ok(Self {
            seed,
            n,
            k: alphabet_size,
            mode: SamplerMode::Bitfeed,
            table: None,
            a,
            n_max,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        })
    }

    /// Builds the table when needed and returns a stream for `mode`.
    pub fn new(
        mode: SamplerMode,
        n: usize,
        alphabet_size: usize,
        length_mode: LengthMode,
        seed: u64,
        a: f64,
        n_max: u64,
        cap: u64,
    ) -> Result<Self> {
        let stream = match mode {
            SamplerMode::ExactTable => {
                let table = UniversalTable::build(n, alphabet_size, length_mode, cap)?;
                Self::exact(Arc::new(table), seed, a, n_max)?
            }
            SamplerMode::Bitfeed => Self::bitfeed(n, alphabet_size, seed, a, n_max)?,
        };
        Ok(stream.with_enumeration_cap(cap))
    }

    /// Cap for the exhaustive witness search used by non-matrix distortions.
    pub fn with_enumeration_cap(mut self, cap: u64) -> Self {
        self.enumeration_cap = cap;
        self
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alphabet_size(&self) -> usize {
        self.k
    }

    pub fn mode(&self) -> SamplerMode {
        self.mode
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn table(&self) -> Option<&Arc<UniversalTable>> {
        self.table.as_ref()
    }

    /// `min(N_max, floor(Aⁿ))`, or `N_max` when `Aⁿ` is not representable.
    pub fn draw_cap(&self) -> u64 {
        let size = self.a.powi(self.n as i32);
        if size.is_finite() && size < u64::MAX as f64 {
            self.n_max.min((size.floor() as u64).max(1))
        } else {
            self.n_max
        }
    }

    pub fn cursor(&self) -> CodewordCursor {
        let inner = match (&self.mode, &self.table) {
            (SamplerMode::ExactTable, Some(table)) => CursorInner::Exact {
                table: Arc::clone(table),
                rng: seeded_rng(self.seed),
            },
            _ => CursorInner::Bitfeed(BitFeedSampler::new(self.n, self.k, self.seed)),
        };
        CodewordCursor { inner, drawn: 0 }
    }
}

fn check_stream_params(a: f64, n_max: u64) -> Result<()> {
    if !(a > 1.0) || !a.is_finite() {
        return Err(precondition(format!("codebook base A={a} must be a finite number above 1")));
    }
    if n_max == 0 {
        return Err(precondition("N_max must be positive"));
    }
    Ok(())
}

enum CursorInner {
    Exact { table: Arc<UniversalTable>, rng: SeedRng },
    Bitfeed(BitFeedSampler),
}

/// Position in a codeword stream. Not shareable mid-scan.
pub struct CodewordCursor {
    inner: CursorInner,
    drawn: u64,
}

impl CodewordCursor {
    /// Draws the next codeword into `buf`.
    pub fn next_into(&mut self, buf: &mut Vec<u8>) {
        buf.clear();
        match &mut self.inner {
            CursorInner::Exact { table, rng } => {
                let i = table.draw_index(rng);
                buf.extend_from_slice(table.block_symbols(i));
            }
            CursorInner::Bitfeed(s) => buf.extend(s.next_symbols()),
        }
        self.drawn += 1;
    }

    pub fn drawn(&self) -> u64 {
        self.drawn
    }
}

/// Codewords of one stream, generated once and kept for repeated scans.
pub struct LazyCodebook {
    cursor: CodewordCursor,
    n: usize,
    words: Vec<u8>,
    buf: Vec<u8>,
}

impl LazyCodebook {
    pub fn new(stream: &CodebookStream) -> Self {
        Self {
            cursor: stream.cursor(),
            n: stream.n(),
            words: Vec::new(),
            buf: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.words.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Codeword with 1-based index `i`, generating as needed.
    pub fn get(&mut self, i: u64) -> &[u8] {
        while (self.len() as u64) < i {
            self.cursor.next_into(&mut self.buf);
            self.words.extend_from_slice(&self.buf);
        }
        let at = (i as usize - 1) * self.n;
        &self.words[at..at + self.n]
    }

    /// 1-based index of the first codeword within `radius` of `x`, scanning
    /// at most `cap` codewords.
    pub fn first_hit(&mut self, x: &[u8], radius: &Rational, spec: &DistortionSpec, cap: u64) -> Option<u64> {
        (1..=cap).find(|&i| spec.within(x, self.get(i), radius))
    }
}

// --------------------------------------------------------------- messages

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedMessage {
    pub escape: bool,
    /// Index code, or the raw witness block under escape.
    pub payload: BitString,
    /// `I(x)` when not escaped.
    pub index: Option<u64>,
    pub theoretical_length_bits: f64,
}

impl EncodedMessage {
    pub fn to_bits(&self) -> BitString {
        let mut out = BitString::new();
        out.push(self.escape);
        out.extend(&self.payload);
        out
    }

    pub fn total_bits(&self) -> usize {
        1 + self.payload.len()
    }

    /// Reads one self-delimiting message.
    pub fn read(r: &mut BitReader<'_>, n: usize, alphabet_size: usize, a: f64) -> Result<Self> {
        let escape = r.read_bit()?;
        let start = r.position();
        if escape {
            let width = symbol_width(alphabet_size);
            let mut payload = BitString::new();
            for _ in 0..n {
                payload.push_bits(r.read_bits(width)?, width);
            }
            Ok(Self {
                escape,
                payload,
                index: None,
                theoretical_length_bits: escape_bits(n, alphabet_size) as f64,
            })
        } else {
            let i = read_index(r)?;
            let mut payload = BitString::new();
            write_index(&mut payload, i);
            debug_assert_eq!(payload.len(), r.position() - start);
            Ok(Self {
                escape,
                payload,
                index: Some(i),
                theoretical_length_bits: theoretical_length(i, n, a)?.bits,
            })
        }
    }

    pub fn from_bits(bits: &BitString, n: usize, alphabet_size: usize, a: f64) -> Result<Self> {
        let mut r = bits.reader();
        let msg = Self::read(&mut r, n, alphabet_size, a)?;
        if r.remaining() != 0 {
            return Err(Error::Format(format!("{} trailing bits after message", r.remaining())));
        }
        Ok(msg)
    }
}

fn escape_bits(n: usize, alphabet_size: usize) -> usize {
    1 + n * symbol_width(alphabet_size) as usize
}

pub fn encode(x: &Block, level: Rational, spec: &DistortionSpec, stream: &CodebookStream) -> Result<EncodedMessage> {
    encode_with(x, level, spec, stream, |r, cap| {
        let mut cursor = stream.cursor();
        let mut buf = Vec::with_capacity(stream.n());
        (1..=cap).find(|_| {
            cursor.next_into(&mut buf);
            spec.within(x.symbols(), &buf, r)
        })
    })
}

/// Same as [`encode`], scanning codewords already held in `book`. The book
/// must come from `stream`.
pub fn encode_cached(
    x: &Block,
    level: Rational,
    spec: &DistortionSpec,
    stream: &CodebookStream,
    book: &mut LazyCodebook,
) -> Result<EncodedMessage> {
    encode_with(x, level, spec, stream, |r, cap| book.first_hit(x.symbols(), r, spec, cap))
}

fn encode_with(
    x: &Block,
    level: Rational,
    spec: &DistortionSpec,
    stream: &CodebookStream,
    scan: impl FnOnce(&Rational, u64) -> Option<u64>,
) -> Result<EncodedMessage> {
    let n = stream.n();
    if x.len() != n {
        return Err(Error::LengthMismatch { left: x.len(), right: n });
    }
    if spec.repro_size() != stream.alphabet_size() {
        return Err(Error::AlphabetMismatch(format!(
            "distortion reproduction alphabet {} vs stream alphabet {}",
            spec.repro_size(),
            stream.alphabet_size()
        )));
    }
    spec.check_source(x)?;
    if stream.a() <= stream.alphabet_size() as f64 {
        warn!(
            "codebook base A={} does not exceed K={}; coverage guarantees do not apply",
            stream.a(),
            stream.alphabet_size()
        );
    }

    // matrix distortions give a cheap exact emptiness test up front
    let mut witness = None;
    if spec.matrix().is_some() {
        witness = Some(find_witness(x, level, spec, stream.enumeration_cap)?.ok_or(Error::UncodableInput)?);
    }

    let cap = stream.draw_cap();
    if let Some(i) = scan(&radius(n, level), cap) {
        let mut payload = BitString::new();
        write_index(&mut payload, i);
        return Ok(EncodedMessage {
            escape: false,
            payload,
            index: Some(i),
            theoretical_length_bits: theoretical_length(i, n, stream.a())?.bits,
        });
    }

    let witness = match witness {
        Some(w) => w,
        None => match find_witness(x, level, spec, stream.enumeration_cap) {
            Ok(Some(w)) => w,
            Ok(None) => return Err(Error::UncodableInput),
            Err(Error::EnumerationInfeasible { .. }) => return Err(Error::Capacity { draws: cap }),
            Err(e) => return Err(e),
        },
    };
    let width = symbol_width(stream.alphabet_size());
    let mut payload = BitString::new();
    for &s in witness.symbols() {
        payload.push_bits(s as u64, width);
    }
    Ok(EncodedMessage {
        escape: true,
        payload,
        index: None,
        theoretical_length_bits: escape_bits(n, stream.alphabet_size()) as f64,
    })
}

pub fn decode(msg: &EncodedMessage, stream: &CodebookStream) -> Result<Block> {
    let n = stream.n();
    let k = stream.alphabet_size();
    if msg.escape {
        let width = symbol_width(k);
        if msg.payload.len() != n * width as usize {
            return Err(Error::Format(format!(
                "escape payload has {} bits, expected {}",
                msg.payload.len(),
                n * width as usize
            )));
        }
        let mut r = msg.payload.reader();
        let symbols = (0..n)
            .map(|_| r.read_bits(width).map(|s| s as u8))
            .collect::<Result<Vec<u8>>>()?;
        return Block::new(symbols, k).map_err(|_| Error::Format("escape payload symbol outside alphabet".into()));
    }
    let index = index_code_decode(&msg.payload)?;
    let cap = stream.draw_cap();
    if index > cap {
        return Err(Error::IndexOutOfRange { index, cap });
    }
    let mut cursor = stream.cursor();
    let mut buf = Vec::with_capacity(n);
    for _ in 0..index {
        cursor.next_into(&mut buf);
    }
    Ok(Block::from_symbols(buf))
}

// -------------------------------------------------------------- container

const MAGIC: [u8; 2] = *b"UR";

/// 16-byte file header: magic `UR`, `n` (u16), `K` (u8), mode flags (u8),
/// seed (u64), and `D` as a reduced fraction of two u8 values. All integers
/// are big-endian. Mode bit 0 selects the bit-feed sampler, bit 1 the LZ′
/// length function.
#[derive(Clone, Debug, PartialEq)]
pub struct ContainerHeader {
    pub n: usize,
    pub alphabet_size: usize,
    pub sampler_mode: SamplerMode,
    pub length_mode: LengthMode,
    pub seed: u64,
    pub level: Rational,
}

impl ContainerHeader {
    pub fn to_bytes(&self) -> Result<[u8; 16]> {
        let n = u16::try_from(self.n).map_err(|_| precondition("n does not fit the container header"))?;
        let k = u8::try_from(self.alphabet_size).map_err(|_| precondition("K does not fit the container header"))?;
        let (p, q) = (*self.level.numer(), *self.level.denom());
        let (p, q) = match (u8::try_from(p), u8::try_from(q)) {
            (Ok(p), Ok(q)) => (p, q),
            _ => return Err(precondition(format!("D={} needs numerator and denominator below 256", self.level))),
        };
        let mut flags = 0u8;
        if self.sampler_mode == SamplerMode::Bitfeed {
            flags |= 1;
        }
        if self.length_mode == LengthMode::LzPrime {
            flags |= 2;
        }
        let mut out = [0u8; 16];
        out[..2].copy_from_slice(&MAGIC);
        out[2..4].copy_from_slice(&n.to_be_bytes());
        out[4] = k;
        out[5] = flags;
        out[6..14].copy_from_slice(&self.seed.to_be_bytes());
        out[14] = p;
        out[15] = q;
        Ok(out)
    }

    pub fn from_bytes(b: &[u8; 16]) -> Result<Self> {
        if b[..2] != MAGIC {
            return Err(Error::Format("bad container magic".into()));
        }
        if b[5] & !3 != 0 {
            return Err(Error::Format(format!("unknown mode flags {:#04x}", b[5])));
        }
        if b[15] == 0 {
            return Err(Error::Format("zero denominator for D".into()));
        }
        Ok(Self {
            n: u16::from_be_bytes([b[2], b[3]]) as usize,
            alphabet_size: b[4] as usize,
            sampler_mode: if b[5] & 1 == 1 { SamplerMode::Bitfeed } else { SamplerMode::ExactTable },
            length_mode: if b[5] & 2 == 2 { LengthMode::LzPrime } else { LengthMode::Lz },
            seed: u64::from_be_bytes(b[6..14].try_into().expect("8 bytes")),
            level: Rational::new(b[14] as i64, b[15] as i64),
        })
    }
}

/// Header, then a u32 message count, then the concatenated messages as a
/// bit string with a u64 bit-count prefix.
pub fn write_container<W: Write>(mut w: W, header: &ContainerHeader, messages: &[EncodedMessage]) -> Result<()> {
    w.write_all(&header.to_bytes()?)?;
    let count = u32::try_from(messages.len()).map_err(|_| precondition("too many messages"))?;
    w.write_all(&count.to_be_bytes())?;
    let mut body = BitString::new();
    for m in messages {
        body.extend(&m.to_bits());
    }
    body.write_to(&mut w)
}

pub fn read_container<R: Read>(mut r: R, a: f64) -> Result<(ContainerHeader, Vec<EncodedMessage>)> {
    let mut head = [0u8; 16];
    r.read_exact(&mut head)?;
    let header = ContainerHeader::from_bytes(&head)?;
    let mut count = [0u8; 4];
    r.read_exact(&mut count)?;
    let count = u32::from_be_bytes(count);
    let body = BitString::read_from(&mut r)?;
    let mut reader = body.reader();
    let messages = (0..count)
        .map(|_| EncodedMessage::read(&mut reader, header.n, header.alphabet_size, a))
        .collect::<Result<Vec<_>>>()?;
    if reader.remaining() != 0 {
        return Err(Error::Format(format!("{} trailing bits in container", reader.remaining())));
    }
    Ok((header, messages))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::all_blocks;
    use crate::universal::sphere_mass;

    const CAP: u64 = 1 << 20;

    fn r(p: i64, q: i64) -> Rational {
        Rational::new(p, q)
    }

    fn exact_stream(n: usize, seed: u64) -> CodebookStream {
        let t = Arc::new(UniversalTable::build(n, 2, LengthMode::Lz, CAP).unwrap());
        CodebookStream::exact(t, seed, 3.0, DEFAULT_N_MAX).unwrap()
    }

    #[test]
    fn index_code_examples() {
        assert_eq!(index_code_encode(1).unwrap().to_string(), "1");
        assert_eq!(index_code_encode(17).unwrap().len(), 9);
        assert_eq!(index_code_len(17), 9);
        // 17 = 10001b: N=5, L=2 → "00" "101" "0001"
        assert_eq!(index_code_encode(17).unwrap().to_string(), "001010001");
        assert!(index_code_encode(0).is_err());
        assert_eq!(index_code_decode(&index_code_encode(u64::MAX).unwrap()).unwrap(), u64::MAX);
    }

    #[test]
    fn index_code_roundtrip_to_2_pow_20() {
        for i in 1..=(1u64 << 20) {
            let code = index_code_encode(i).unwrap();
            assert_eq!(code.len() as u32, index_code_len(i));
            assert_eq!(index_code_decode(&code).unwrap(), i);
        }
    }

    #[test]
    fn index_code_rejects_malformed() {
        for bad in ["", "0", "00000001", "0000000", "011", "11"] {
            let bits = BitString::parse(bad).unwrap();
            assert!(index_code_decode(&bits).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn theoretical_length_examples() {
        let t = theoretical_length(1, 16, 2.0).unwrap();
        assert!((t.bits - (16.0 * 2f64.ln() + 1.0).log2()).abs() < 1e-12);
        assert!(t.bits <= t.bound_bits);
        let t = theoretical_length(4, 10, 2.0).unwrap();
        assert!((t.bits - (2.0 + (10.0 * 2f64.ln() + 1.0).log2())).abs() < 1e-12);
        assert!(theoretical_length(0, 10, 2.0).is_err());
        assert!(theoretical_length(1, 10, 1.0).is_err());
    }

    #[test]
    fn theoretical_length_bound_sweep() {
        for a in [2.0, 4.0] {
            for n in 1..=1024usize {
                for i in (1..=1u64 << 16).step_by(97).chain([1u64 << 16]) {
                    let t = theoretical_length(i, n, a).unwrap();
                    assert!(t.bits <= t.bound_bits + 1e-12);
                }
            }
        }
    }

    #[test]
    fn full_sphere_hits_first_codeword() {
        let h = DistortionSpec::hamming(2, 2).unwrap();
        let s = exact_stream(6, 1);
        for x in all_blocks(2, 6, CAP).unwrap() {
            let m = encode(&x, r(1, 1), &h, &s).unwrap();
            assert_eq!(m.index, Some(1));
            assert_eq!(m.to_bits().to_string(), "01");
        }
    }

    #[test]
    fn exhaustive_roundtrip_is_semifaithful_n8() {
        let h = DistortionSpec::hamming(2, 2).unwrap();
        let s = exact_stream(8, 42);
        let rad = radius(8, r(1, 4));
        for x in all_blocks(2, 8, CAP).unwrap() {
            let m = encode(&x, r(1, 4), &h, &s).unwrap();
            let y = decode(&m, &s).unwrap();
            assert!(h.distortion(&x, &y).unwrap() <= rad);
            assert_eq!(EncodedMessage::from_bits(&m.to_bits(), 8, 2, s.a()).unwrap(), m);
        }
    }

    #[test]
    fn escape_path_roundtrip() {
        let h = DistortionSpec::hamming(2, 2).unwrap();
        // a one-draw cap forces escapes for most sources at D=0
        let t = Arc::new(UniversalTable::build(8, 2, LengthMode::Lz, CAP).unwrap());
        let s = CodebookStream::exact(t, 5, 3.0, 1).unwrap();
        let mut escapes = 0;
        for x in all_blocks(2, 8, CAP).unwrap() {
            let m = encode(&x, r(0, 1), &h, &s).unwrap();
            let y = decode(&m, &s).unwrap();
            assert_eq!(y, x);
            if m.escape {
                escapes += 1;
                assert_eq!(m.total_bits(), 9);
            }
        }
        assert!(escapes > 200);
    }

    #[test]
    fn escape_with_joint_type_distortion_uses_exhaustive_witness() {
        let q = DistortionSpec::squared_disagreement(2, 2).unwrap();
        let t = Arc::new(UniversalTable::build(6, 2, LengthMode::Lz, CAP).unwrap());
        let s = CodebookStream::exact(t, 5, 3.0, 1).unwrap();
        for x in all_blocks(2, 6, CAP).unwrap() {
            let m = encode(&x, r(1, 6), &q, &s).unwrap();
            let y = decode(&m, &s).unwrap();
            assert!(q.distortion(&x, &y).unwrap() <= radius(6, r(1, 6)));
        }
        // infeasible witness search on exhaustion surfaces as a capacity error
        let s = s.with_enumeration_cap(8);
        let x = Block::parse_digits("010110", 2).unwrap();
        let results: Vec<_> = (0..20).map(|seed| encode(&x, r(0, 1), &q, &s.with_seed(seed))).collect();
        assert!(results.iter().any(|res| matches!(res, Err(Error::Capacity { draws: 1 }))));
    }

    #[test]
    fn uncodable_input() {
        // source symbol 2 has no zero-cost reproduction in {0,1}
        let h = DistortionSpec::hamming(3, 2).unwrap();
        let s = exact_stream(4, 1);
        let x = Block::parse_digits("0120", 3).unwrap();
        assert!(matches!(encode(&x, r(0, 1), &h, &s), Err(Error::UncodableInput)));
        assert!(encode(&x, r(1, 4), &h, &s).is_ok());
    }

    #[test]
    fn seed_mismatch_changes_reconstruction() {
        let h = DistortionSpec::hamming(2, 2).unwrap();
        let enc = exact_stream(8, 1);
        let dec = enc.with_seed(2);
        let rad = radius(8, r(1, 4));
        let mut violations = 0;
        for x in all_blocks(2, 8, CAP).unwrap() {
            let m = encode(&x, r(1, 4), &h, &enc).unwrap();
            if m.escape {
                continue;
            }
            let y = decode(&m, &dec).unwrap();
            if h.distortion(&x, &y).unwrap() > rad {
                violations += 1;
            }
        }
        assert!(violations > 0);
    }

    #[test]
    fn decode_rejects_index_beyond_cap() {
        let t = Arc::new(UniversalTable::build(4, 2, LengthMode::Lz, CAP).unwrap());
        let s = CodebookStream::exact(t, 1, 3.0, 10).unwrap();
        let msg = EncodedMessage {
            escape: false,
            payload: index_code_encode(11).unwrap(),
            index: Some(11),
            theoretical_length_bits: 0.0,
        };
        assert!(matches!(decode(&msg, &s), Err(Error::IndexOutOfRange { index: 11, cap: 10 })));
    }

    #[test]
    fn draw_cap_respects_codebook_size() {
        let t = Arc::new(UniversalTable::build(4, 2, LengthMode::Lz, CAP).unwrap());
        let s = CodebookStream::exact(t, 1, 3.0, DEFAULT_N_MAX).unwrap();
        assert_eq!(s.draw_cap(), 81);
        let s = CodebookStream::bitfeed(200, 2, 1, 3.0, 1000).unwrap();
        assert_eq!(s.draw_cap(), 1000);
        assert!(CodebookStream::bitfeed(4, 2, 1, 1.0, 10).is_err());
    }

    #[test]
    fn determinism() {
        let h = DistortionSpec::hamming(2, 2).unwrap();
        let x = Block::parse_digits("01101001", 2).unwrap();
        let a = encode(&x, r(1, 8), &h, &exact_stream(8, 9)).unwrap();
        let b = encode(&x, r(1, 8), &h, &exact_stream(8, 9)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        let s = CodebookStream::bitfeed(8, 2, 9, 3.0, DEFAULT_N_MAX).unwrap();
        assert_eq!(encode(&x, r(1, 8), &h, &s).unwrap(), encode(&x, r(1, 8), &h, &s).unwrap());
    }

    #[test]
    fn randomized_roundtrips_up_to_n64() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let specs = [DistortionSpec::hamming(2, 2).unwrap(), DistortionSpec::hamming(3, 3).unwrap()];
        for _ in 0..60 {
            let spec = &specs[rng.gen_range(0..2)];
            let k = spec.repro_size();
            let n = rng.gen_range(9..=64);
            let level = r(rng.gen_range(1..=4), 8);
            let x: Vec<u8> = (0..n).map(|_| rng.gen_range(0..k as u8)).collect();
            let x = Block::new(x, k).unwrap();
            let s = CodebookStream::bitfeed(n, k, rng.gen(), 3.0, 2000).unwrap();
            let m = encode(&x, level, spec, &s).unwrap();
            let y = decode(&m, &s).unwrap();
            assert!(spec.distortion(&x, &y).unwrap() <= radius(n, level));
        }
    }

    #[test]
    fn lazy_codebook_matches_encoder() {
        let h = DistortionSpec::hamming(2, 2).unwrap();
        let s = exact_stream(8, 3);
        let mut book = LazyCodebook::new(&s);
        let rad = radius(8, r(1, 4));
        for x in all_blocks(2, 8, CAP).unwrap().step_by(11) {
            let m = encode(&x, r(1, 4), &h, &s).unwrap();
            assert_eq!(book.first_hit(x.symbols(), &rad, &h, s.draw_cap()), m.index);
            assert_eq!(encode_cached(&x, r(1, 4), &h, &s, &mut book).unwrap(), m);
        }
    }

    #[test]
    fn geometric_first_hit_mean() {
        // E[I] = 1/U[S] for an uncapped exact stream
        let h = DistortionSpec::hamming(2, 2).unwrap();
        let t = Arc::new(UniversalTable::build(6, 2, LengthMode::Lz, CAP).unwrap());
        let x = Block::parse_digits("011010", 2).unwrap();
        let p = sphere_mass(&x, r(1, 6), &h, &t).unwrap().mass_f64();
        let trials = 4000;
        let mean: f64 = (0..trials)
            .map(|seed| {
                let s = CodebookStream::exact(Arc::clone(&t), seed, 1e6, DEFAULT_N_MAX).unwrap();
                encode(&x, r(1, 6), &h, &s).unwrap().index.unwrap() as f64
            })
            .sum::<f64>()
            / trials as f64;
        let sd = ((1.0 - p) / (p * p)).sqrt() / (trials as f64).sqrt();
        assert!((mean - 1.0 / p).abs() < 4.0 * sd, "mean {mean} vs {}", 1.0 / p);
    }

    #[test]
    fn first_hit_index_is_geometric() {
        let h = DistortionSpec::hamming(2, 2).unwrap();
        let t = Arc::new(UniversalTable::build(8, 2, LengthMode::Lz, CAP).unwrap());
        let trials = 10_000u64;
        for x in ["00000000", "01101001", "00010111"] {
            let x = Block::parse_digits(x, 2).unwrap();
            let p = sphere_mass(&x, r(1, 4), &h, &t).unwrap().mass_f64();
            let mut idx: Vec<u64> = (0..trials)
                .map(|s| {
                    let s = CodebookStream::exact(Arc::clone(&t), crate::stats::derive_seed(31, s), 3.0, DEFAULT_N_MAX);
                    encode(&x, r(1, 4), &h, &s.unwrap()).unwrap().index.unwrap()
                })
                .collect();
            idx.sort_unstable();
            let max = *idx.last().unwrap();
            let sup = (1..=max)
                .map(|n| {
                    let emp = idx.partition_point(|&i| i <= n) as f64 / trials as f64;
                    (emp - (1.0 - (1.0 - p).powi(n as i32))).abs()
                })
                .fold(0.0, f64::max);
            assert!(crate::stats::ks_p_value(sup, trials) > 0.01, "sup {sup}");
        }
    }

    #[test]
    fn container_roundtrip() {
        let h = DistortionSpec::hamming(2, 2).unwrap();
        let s = exact_stream(8, 11);
        let blocks: Vec<_> = all_blocks(2, 8, CAP).unwrap().step_by(17).collect();
        let msgs: Vec<_> = blocks.iter().map(|x| encode(x, r(1, 4), &h, &s).unwrap()).collect();
        let header = ContainerHeader {
            n: 8,
            alphabet_size: 2,
            sampler_mode: SamplerMode::ExactTable,
            length_mode: LengthMode::Lz,
            seed: 11,
            level: r(1, 4),
        };
        let mut buf = Vec::new();
        write_container(&mut buf, &header, &msgs).unwrap();
        assert_eq!(&buf[..2], b"UR");
        let (h2, m2) = read_container(&buf[..], s.a()).unwrap();
        assert_eq!(h2, header);
        assert_eq!(m2, msgs);

        let bad = ContainerHeader { level: r(1, 300), ..header };
        assert!(bad.to_bytes().is_err());
    }
}
