//! Distortion functions on pairs of blocks, sphere enumeration, and in-sphere
//! witnesses.
//!
//! Distortion values and thresholds are exact rationals. A reproduction
//! block lies in the sphere when `d(x, x̂) ≤ nD`, boundary included.

use std::fmt;
use std::sync::Arc;

use num::{One, ToPrimitive, Zero};
use serde::Deserialize;

use crate::alphabet::{all_blocks, check_cap, Alphabet, Block};
use crate::empirical::JointCounts;
use crate::error::{precondition, Error, Result};

pub type Rational = num::rational::Ratio<i64>;

/// Maps the first-order joint type of `(x, x̂)` to a per-letter value ρ.
pub type JointFunctional = Arc<dyn Fn(&JointCounts) -> Rational + Send + Sync>;
pub type BlockDistortion = Arc<dyn Fn(&[u8], &[u8]) -> Rational + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistortionKind {
    PerLetterMatrix,
    JointTypeFunctional,
    ArbitraryCallable,
}

impl DistortionKind {
    pub fn name(self) -> &'static str {
        match self {
            DistortionKind::PerLetterMatrix => "per_letter_matrix",
            DistortionKind::JointTypeFunctional => "joint_type_functional",
            DistortionKind::ArbitraryCallable => "arbitrary_callable",
        }
    }
}

#[derive(Clone)]
enum Measure {
    PerLetter {
        matrix: Vec<Vec<Rational>>,
        // matrix scaled to integers over a common denominator
        scaled: Vec<i64>,
        denom: i64,
    },
    JointType {
        name: String,
        rho: JointFunctional,
    },
    Arbitrary {
        name: String,
        d: BlockDistortion,
    },
}

/// A distortion function `d: 𝒳ⁿ × 𝒳̂ⁿ → ℝ⁺`.
#[derive(Clone)]
pub struct DistortionSpec {
    source_size: usize,
    repro_size: usize,
    measure: Measure,
}

impl fmt::Debug for DistortionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("DistortionSpec");
        s.field("kind", &self.kind())
            .field("J", &self.source_size)
            .field("K", &self.repro_size);
        match &self.measure {
            Measure::PerLetter { matrix, .. } => s.field("matrix", matrix),
            Measure::JointType { name, .. } | Measure::Arbitrary { name, .. } => {
                s.field("name", name)
            }
        };
        s.finish()
    }
}

impl DistortionSpec {
    pub fn per_letter(matrix: Vec<Vec<Rational>>) -> Result<Self> {
        let source_size = matrix.len();
        let repro_size = matrix.first().map_or(0, Vec::len);
        if source_size < 2 || repro_size < 2 {
            return Err(precondition("distortion matrix must be at least 2×2"));
        }
        if matrix.iter().any(|row| row.len() != repro_size) {
            return Err(precondition("distortion matrix rows differ in length"));
        }
        if matrix.iter().flatten().any(|v| *v < Rational::zero()) {
            return Err(precondition("distortion matrix entries must be non-negative"));
        }
        let denom = matrix
            .iter()
            .flatten()
            .fold(1i64, |acc, v| num::integer::lcm(acc, *v.denom()));
        let scaled = matrix
            .iter()
            .flatten()
            .map(|v| v.numer() * (denom / v.denom()))
            .collect();
        Ok(Self {
            source_size,
            repro_size,
            measure: Measure::PerLetter {
                matrix,
                scaled,
                denom,
            },
        })
    }

    /// Hamming distortion between index-aligned alphabets of sizes J and K.
    pub fn hamming(source_size: usize, repro_size: usize) -> Result<Self> {
        let matrix = (0..source_size)
            .map(|a| {
                (0..repro_size)
                    .map(|b| if a == b { Rational::zero() } else { Rational::one() })
                    .collect()
            })
            .collect();
        Self::per_letter(matrix)
    }

    pub fn joint_type(
        source_size: usize,
        repro_size: usize,
        name: impl Into<String>,
        rho: JointFunctional,
    ) -> Result<Self> {
        check_sizes(source_size, repro_size)?;
        Ok(Self {
            source_size,
            repro_size,
            measure: Measure::JointType {
                name: name.into(),
                rho,
            },
        })
    }

    /// ρ(P) = (1 − P(agree))², a non-additive joint-type functional; the
    /// block distortion is `(n − agreements)² / n`.
    pub fn squared_disagreement(source_size: usize, repro_size: usize) -> Result<Self> {
        Self::joint_type(
            source_size,
            repro_size,
            "squared_disagreement",
            Arc::new(|jc: &JointCounts| {
                let n = jc.n as i64;
                let miss = n - jc.agreements() as i64;
                Rational::new(miss * miss, n * n)
            }),
        )
    }

    pub fn arbitrary(
        source_size: usize,
        repro_size: usize,
        name: impl Into<String>,
        d: BlockDistortion,
    ) -> Result<Self> {
        check_sizes(source_size, repro_size)?;
        Ok(Self {
            source_size,
            repro_size,
            measure: Measure::Arbitrary {
                name: name.into(),
                d,
            },
        })
    }

    pub fn kind(&self) -> DistortionKind {
        match self.measure {
            Measure::PerLetter { .. } => DistortionKind::PerLetterMatrix,
            Measure::JointType { .. } => DistortionKind::JointTypeFunctional,
            Measure::Arbitrary { .. } => DistortionKind::ArbitraryCallable,
        }
    }

    pub fn depends_only_on_first_order_joint_type(&self) -> bool {
        self.kind() != DistortionKind::ArbitraryCallable
    }

    /// Fails for distortions that are not functions of the joint type.
    pub fn require_joint_type(&self) -> Result<()> {
        if self.depends_only_on_first_order_joint_type() {
            Ok(())
        } else {
            Err(Error::UnsupportedDistortion(self.kind().name()))
        }
    }

    /// Source alphabet size J.
    pub fn source_size(&self) -> usize {
        self.source_size
    }

    /// Reproduction alphabet size K.
    pub fn repro_size(&self) -> usize {
        self.repro_size
    }

    pub fn matrix(&self) -> Option<&[Vec<Rational>]> {
        match &self.measure {
            Measure::PerLetter { matrix, .. } => Some(matrix),
            _ => None,
        }
    }

    pub fn matrix_f64(&self) -> Option<Vec<Vec<f64>>> {
        self.matrix().map(|m| {
            m.iter()
                .map(|row| row.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect())
                .collect()
        })
    }

    /// Largest possible block distortion at length `n`, when known in closed
    /// form (per-letter kind only).
    pub fn max_distortion(&self, n: usize) -> Option<Rational> {
        self.matrix().map(|m| {
            let max = m.iter().flatten().max().copied().unwrap_or_default();
            max * n as i64
        })
    }

    pub fn distortion(&self, x: &Block, y: &Block) -> Result<Rational> {
        self.check_pair(x, y)?;
        Ok(self.distortion_unchecked(x.symbols(), y.symbols()))
    }

    fn distortion_unchecked(&self, x: &[u8], y: &[u8]) -> Rational {
        match &self.measure {
            Measure::PerLetter { scaled, denom, .. } => {
                let k = self.repro_size;
                let total: i64 = x
                    .iter()
                    .zip(y)
                    .map(|(&a, &b)| scaled[a as usize * k + b as usize])
                    .sum();
                Rational::new(total, *denom)
            }
            Measure::JointType { rho, .. } => {
                let jc = JointCounts::of(x, y, self.source_size, self.repro_size);
                rho(&jc) * x.len() as i64
            }
            Measure::Arbitrary { d, .. } => d(x, y),
        }
    }

    /// `d(x, y) ≤ radius`, where `radius` is the total budget `nD`. Inputs
    /// are assumed validated.
    pub fn within(&self, x: &[u8], y: &[u8], radius: &Rational) -> bool {
        match &self.measure {
            Measure::PerLetter { scaled, denom, .. } => {
                let k = self.repro_size;
                let total: i64 = x
                    .iter()
                    .zip(y)
                    .map(|(&a, &b)| scaled[a as usize * k + b as usize])
                    .sum();
                // total/denom ≤ p/q  ⟺  total·q ≤ p·denom
                (total as i128) * (*radius.denom() as i128)
                    <= (*radius.numer() as i128) * (*denom as i128)
            }
            _ => self.distortion_unchecked(x, y) <= *radius,
        }
    }

    pub fn check_pair(&self, x: &Block, y: &Block) -> Result<()> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: y.len(),
            });
        }
        self.check_source(x)?;
        self.check_repro(y)
    }

    pub fn check_source(&self, x: &Block) -> Result<()> {
        check_block(x, self.source_size, "source")
    }

    pub fn check_repro(&self, y: &Block) -> Result<()> {
        check_block(y, self.repro_size, "reproduction")
    }
}

fn check_sizes(source_size: usize, repro_size: usize) -> Result<()> {
    if source_size < 2 || repro_size < 2 {
        return Err(precondition("alphabet sizes must be at least 2"));
    }
    Ok(())
}

fn check_block(b: &Block, size: usize, role: &str) -> Result<()> {
    match b.max_symbol() {
        Some(s) if s as usize >= size => Err(Error::AlphabetMismatch(format!(
            "{role} symbol {s} outside alphabet of size {size}"
        ))),
        _ => Ok(()),
    }
}

/// Total distortion budget `nD`.
pub fn radius(n: usize, level: Rational) -> Rational {
    level * n as i64
}

/// All `x̂` with `d(x, x̂) ≤ nD`, in lexicographic order.
pub fn enumerate_sphere(x: &Block, level: Rational, spec: &DistortionSpec, cap: u64) -> Result<Vec<Block>> {
    spec.check_source(x)?;
    let r = radius(x.len(), level);
    Ok(all_blocks(spec.repro_size(), x.len(), cap)?
        .filter(|y| spec.within(x.symbols(), y.symbols(), &r))
        .collect())
}

/// All `x` with `d(x, x̂) ≤ nD`, in lexicographic order.
pub fn enumerate_reverse_sphere(
    y: &Block,
    level: Rational,
    spec: &DistortionSpec,
    cap: u64,
) -> Result<Vec<Block>> {
    spec.check_repro(y)?;
    let r = radius(y.len(), level);
    Ok(all_blocks(spec.source_size(), y.len(), cap)?
        .filter(|x| spec.within(x.symbols(), y.symbols(), &r))
        .collect())
}

/// A reproduction block inside `S(x, D)`, or `None` when the sphere is
/// empty.
///
/// For per-letter distortions the per-position argmin of the matrix row is
/// the global minimizer, so its failure proves the sphere empty. Other kinds
/// fall back to a capped exhaustive search.
pub fn find_witness(x: &Block, level: Rational, spec: &DistortionSpec, cap: u64) -> Result<Option<Block>> {
    spec.check_source(x)?;
    let r = radius(x.len(), level);
    if let Some(matrix) = spec.matrix() {
        let symbols: Vec<u8> = x
            .symbols()
            .iter()
            .map(|&a| {
                let row = &matrix[a as usize];
                (0..row.len())
                    .min_by(|&i, &j| row[i].cmp(&row[j]))
                    .expect("matrix rows are non-empty") as u8
            })
            .collect();
        return Ok(spec
            .within(x.symbols(), &symbols, &r)
            .then(|| Block::from_symbols(symbols)));
    }
    check_cap(spec.repro_size(), x.len(), cap)?;
    Ok(all_blocks(spec.repro_size(), x.len(), cap)?.find(|y| spec.within(x.symbols(), y.symbols(), &r)))
}

/// Parses a rational from `"p/q"`, an integer, or a decimal like `"0.25"`.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let text = text.trim();
    let bad = || Error::Format(format!("not a rational number: {text:?}"));
    if let Some((p, q)) = text.split_once('/') {
        let p: i64 = p.trim().parse().map_err(|_| bad())?;
        let q: i64 = q.trim().parse().map_err(|_| bad())?;
        if q == 0 {
            return Err(bad());
        }
        return Ok(Rational::new(p, q));
    }
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if frac_part.len() > 17 || !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: i64 = if digits.is_empty() { 0 } else { digits.parse().map_err(|_| bad())? };
    let denom = 10i64.checked_pow(frac_part.len() as u32).ok_or_else(bad)?;
    let value = Rational::new(numer, denom);
    Ok(if neg { -value } else { value })
}

#[derive(Deserialize)]
struct AlphabetsDoc {
    source: String,
    repro: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Entry {
    Number(serde_json::Number),
    Text(String),
}

#[derive(Deserialize)]
struct DistortionDoc {
    kind: String,
    #[serde(default)]
    matrix: Option<Vec<Vec<Entry>>>,
    #[serde(default)]
    functional: Option<String>,
    alphabets: AlphabetsDoc,
}

/// A distortion together with the alphabets used for text I/O.
#[derive(Clone, Debug)]
pub struct DistortionConfig {
    pub spec: DistortionSpec,
    pub source: Alphabet,
    pub repro: Alphabet,
}

impl DistortionConfig {
    /// Loads `{"kind": ..., "matrix": [[...]], "alphabets": {"source": ..., "repro": ...}}`.
    ///
    /// Kinds: `per_letter_matrix` (entries are numbers or `"p/q"` strings),
    /// `hamming`, and `joint_type_functional` with
    /// `"functional": "squared_disagreement"`.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: DistortionDoc = serde_json::from_str(text)?;
        let source = Alphabet::new(&doc.alphabets.source)?;
        let repro = Alphabet::new(&doc.alphabets.repro)?;
        let (j, k) = (source.size(), repro.size());
        let spec = match doc.kind.as_str() {
            "per_letter_matrix" => {
                let rows = doc
                    .matrix
                    .ok_or_else(|| Error::Format("per_letter_matrix needs a matrix".into()))?;
                let matrix = rows
                    .iter()
                    .map(|row| {
                        row.iter()
                            .map(|e| match e {
                                Entry::Number(n) => parse_rational(&n.to_string()),
                                Entry::Text(s) => parse_rational(s),
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                if matrix.len() != j || matrix.iter().any(|r| r.len() != k) {
                    return Err(Error::Format(format!("matrix must be {j}×{k} to match the alphabets")));
                }
                DistortionSpec::per_letter(matrix)?
            }
            "hamming" => DistortionSpec::hamming(j, k)?,
            "joint_type_functional" => match doc.functional.as_deref() {
                Some("squared_disagreement") => DistortionSpec::squared_disagreement(j, k)?,
                other => {
                    return Err(Error::Format(format!("unknown joint-type functional {other:?}")))
                }
            },
            other => return Err(Error::Format(format!("unknown distortion kind {other:?}"))),
        };
        Ok(Self { spec, source, repro })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(s: &str) -> Block {
        Block::parse_digits(s, 2).unwrap()
    }

    fn r(p: i64, q: i64) -> Rational {
        Rational::new(p, q)
    }

    const CAP: u64 = 1 << 20;

    #[test]
    fn hamming_values() {
        let h = DistortionSpec::hamming(2, 2).unwrap();
        assert_eq!(h.distortion(&bits("0101"), &bits("0101")).unwrap(), r(0, 1));
        assert_eq!(h.distortion(&bits("0000"), &bits("0101")).unwrap(), r(2, 1));
        assert!(h.distortion(&bits("000"), &bits("0101")).is_err());
        assert!(h.distortion(&Block::parse_digits("02", 3).unwrap(), &bits("01")).is_err());
    }

    #[test]
    fn quadratic_functional_values() {
        let q = DistortionSpec::squared_disagreement(2, 2).unwrap();
        assert_eq!(q.distortion(&bits("01"), &bits("01")).unwrap(), r(0, 1));
        // 2 disagreements of 4: n·(1/2)² = 1
        assert_eq!(q.distortion(&bits("0000"), &bits("0101")).unwrap(), r(1, 1));
        assert_eq!(q.distortion(&bits("000"), &bits("011")).unwrap(), r(4, 3));
        assert!(q.depends_only_on_first_order_joint_type());
    }

    #[test]
    fn arbitrary_kind_is_flagged() {
        let spec = DistortionSpec::arbitrary(2, 2, "first_symbol", Arc::new(|x: &[u8], y: &[u8]| {
            Rational::from_integer((x[0] != y[0]) as i64)
        }))
        .unwrap();
        assert!(!spec.depends_only_on_first_order_joint_type());
        assert!(matches!(spec.require_joint_type(), Err(Error::UnsupportedDistortion(_))));
    }

    #[test]
    fn sphere_examples() {
        let h = DistortionSpec::hamming(2, 2).unwrap();
        let x = bits("0110");
        assert_eq!(enumerate_sphere(&x, r(0, 1), &h, CAP).unwrap(), vec![x.clone()]);
        let s = enumerate_sphere(&bits("0000"), r(1, 4), &h, CAP).unwrap();
        assert_eq!(s.len(), 5);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(enumerate_sphere(&x, r(1, 1), &h, CAP).unwrap().len(), 16);
        assert_eq!(enumerate_reverse_sphere(&bits("0000"), r(1, 4), &h, CAP).unwrap().len(), 5);
        assert_eq!(enumerate_reverse_sphere(&x, r(0, 1), &h, CAP).unwrap(), vec![x]);
    }

    #[test]
    fn boundary_is_inside() {
        let m = DistortionSpec::per_letter(vec![vec![r(0, 1), r(1, 3)], vec![r(1, 3), r(0, 1)]]).unwrap();
        // three mismatches cost exactly 1 = n·D with n=3, D=1/3
        let x = bits("000");
        let y = bits("111");
        assert_eq!(m.distortion(&x, &y).unwrap(), r(1, 1));
        assert!(m.within(x.symbols(), y.symbols(), &radius(3, r(1, 3))));
        assert!(!m.within(x.symbols(), y.symbols(), &radius(3, r(1, 4))));
    }

    #[test]
    fn symmetric_matrix_sphere_sizes_agree() {
        let m = DistortionSpec::per_letter(vec![
            vec![r(0, 1), r(1, 2), r(2, 1)],
            vec![r(1, 2), r(0, 1), r(1, 1)],
            vec![r(2, 1), r(1, 1), r(0, 1)],
        ])
        .unwrap();
        for b in all_blocks(3, 4, CAP).unwrap() {
            let fwd = enumerate_sphere(&b, r(1, 2), &m, CAP).unwrap();
            let rev = enumerate_reverse_sphere(&b, r(1, 2), &m, CAP).unwrap();
            assert_eq!(fwd.len(), rev.len());
        }
    }

    #[test]
    fn sphere_reverse_sphere_consistency_exhaustive() {
        let specs = [
            DistortionSpec::hamming(2, 3).unwrap(),
            DistortionSpec::squared_disagreement(3, 2).unwrap(),
        ];
        for spec in &specs {
            let (j, k) = (spec.source_size(), spec.repro_size());
            for n in 1..=5 {
                for level in [r(0, 1), r(1, 5), r(1, 2)] {
                    let sources: Vec<_> = all_blocks(j, n, CAP).unwrap().collect();
                    let repros: Vec<_> = all_blocks(k, n, CAP).unwrap().collect();
                    for x in &sources {
                        let s = enumerate_sphere(x, level, spec, CAP).unwrap();
                        for y in &repros {
                            let rev = enumerate_reverse_sphere(y, level, spec, CAP).unwrap();
                            assert_eq!(s.contains(y), rev.contains(x));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn joint_type_distortion_is_permutation_invariant() {
        use rand::seq::SliceRandom;
        use rand::{Rng, SeedableRng};
        let spec = DistortionSpec::squared_disagreement(3, 3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let n = rng.gen_range(1..20);
            let x: Vec<u8> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let y: Vec<u8> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let px: Vec<u8> = perm.iter().map(|&i| x[i]).collect();
            let py: Vec<u8> = perm.iter().map(|&i| y[i]).collect();
            let d = spec.distortion(&Block::from_symbols(x), &Block::from_symbols(y)).unwrap();
            let dp = spec.distortion(&Block::from_symbols(px), &Block::from_symbols(py)).unwrap();
            assert_eq!(d, dp);
        }
    }

    #[test]
    fn witness_cases() {
        let h = DistortionSpec::hamming(2, 2).unwrap();
        let x = bits("0110");
        assert_eq!(find_witness(&x, r(0, 1), &h, CAP).unwrap(), Some(x.clone()));

        let m = DistortionSpec::per_letter(vec![vec![r(1, 1), r(2, 1)], vec![r(0, 1), r(1, 1)]]).unwrap();
        assert_eq!(find_witness(&bits("00"), r(1, 4), &m, CAP).unwrap(), None);
        assert_eq!(find_witness(&bits("00"), r(1, 1), &m, CAP).unwrap(), Some(bits("00")));

        let q = DistortionSpec::squared_disagreement(2, 2).unwrap();
        assert_eq!(find_witness(&x, r(0, 1), &q, CAP).unwrap(), Some(x));
    }

    #[test]
    fn witness_matches_exhaustive_search_n6() {
        let m = DistortionSpec::per_letter(vec![
            vec![r(3, 1), r(1, 2), r(2, 1)],
            vec![r(1, 1), r(5, 2), r(1, 3)],
        ])
        .unwrap();
        for x in all_blocks(2, 6, CAP).unwrap() {
            for level in [r(1, 3), r(1, 2), r(2, 3), r(1, 1)] {
                let exists = !enumerate_sphere(&x, level, &m, CAP).unwrap().is_empty();
                let w = find_witness(&x, level, &m, CAP).unwrap();
                assert_eq!(w.is_some(), exists);
                if let Some(w) = w {
                    assert!(m.distortion(&x, &w).unwrap() <= radius(6, level));
                }
            }
        }
    }

    #[test]
    fn witness_found_whenever_sphere_nonempty_n8() {
        let specs = [
            DistortionSpec::hamming(3, 2).unwrap(),
            DistortionSpec::squared_disagreement(2, 2).unwrap(),
        ];
        for spec in &specs {
            for x in all_blocks(spec.source_size(), 8, CAP).unwrap().step_by(7) {
                for level in [r(0, 1), r(1, 8), r(1, 4)] {
                    let exists = !enumerate_sphere(&x, level, spec, CAP).unwrap().is_empty();
                    let w = find_witness(&x, level, spec, CAP).unwrap();
                    assert_eq!(w.is_some(), exists);
                    if let Some(w) = w {
                        assert!(spec.distortion(&x, &w).unwrap() <= radius(8, level));
                    }
                }
            }
        }
    }

    #[test]
    fn rationals_parse() {
        assert_eq!(parse_rational("1/4").unwrap(), r(1, 4));
        assert_eq!(parse_rational("0.25").unwrap(), r(1, 4));
        assert_eq!(parse_rational("2").unwrap(), r(2, 1));
        assert_eq!(parse_rational("-0.5").unwrap(), r(-1, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("1e-3").is_err());
    }

    #[test]
    fn json_loading() {
        let cfg = DistortionConfig::from_json(
            r#"{"kind": "per_letter_matrix", "matrix": [[0, 1], ["1/2", 0.0]], "alphabets": {"source": "ab", "repro": "xy"}}"#,
        )
        .unwrap();
        assert_eq!(cfg.spec.matrix().unwrap()[1][0], r(1, 2));
        assert_eq!(cfg.repro.as_string(), "xy");

        let cfg = DistortionConfig::from_json(r#"{"kind": "hamming", "alphabets": {"source": "abc", "repro": "ab"}}"#).unwrap();
        assert_eq!((cfg.spec.source_size(), cfg.spec.repro_size()), (3, 2));

        let cfg = DistortionConfig::from_json(
            r#"{"kind": "joint_type_functional", "functional": "squared_disagreement", "alphabets": {"source": "ab", "repro": "ab"}}"#,
        )
        .unwrap();
        assert_eq!(cfg.spec.kind(), DistortionKind::JointTypeFunctional);

        assert!(DistortionConfig::from_json(
            r#"{"kind": "per_letter_matrix", "matrix": [[0, 1]], "alphabets": {"source": "ab", "repro": "ab"}}"#
        )
        .is_err());
        assert!(DistortionConfig::from_json(r#"{"kind": "bogus", "alphabets": {"source": "ab", "repro": "ab"}}"#).is_err());
    }
}
