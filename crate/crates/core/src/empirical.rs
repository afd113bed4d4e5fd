//! ℓ-th order empirical distributions over aligned, non-overlapping ℓ-blocks.
//!
//! Distributions are kept as integer counts together with `(n, ℓ)`, so two
//! blocks share a type class exactly when their count maps are equal.

use std::collections::BTreeMap;

use crate::alphabet::Block;
use crate::error::{precondition, Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EmpiricalDistribution {
    order: usize,
    n: usize,
    counts: BTreeMap<Vec<u8>, u64>,
}

impl EmpiricalDistribution {
    /// Builds a distribution from explicit counts, checking that they sum
    /// to `n / order` and that every key has length `order`.
    pub fn from_counts(order: usize, n: usize, counts: BTreeMap<Vec<u8>, u64>) -> Result<Self> {
        check_order(order, n)?;
        if counts.keys().any(|k| k.len() != order) {
            return Err(precondition(format!("count keys must have length {order}")));
        }
        let total: u64 = counts.values().sum();
        if total != (n / order) as u64 {
            return Err(precondition(format!(
                "counts sum to {total}, expected n/ℓ = {}",
                n / order
            )));
        }
        let counts = counts.into_iter().filter(|&(_, c)| c > 0).collect();
        Ok(Self { order, n, counts })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn counts(&self) -> &BTreeMap<Vec<u8>, u64> {
        &self.counts
    }

    pub fn count(&self, key: &[u8]) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    /// Number of aligned ℓ-blocks, `n / ℓ`.
    pub fn num_blocks(&self) -> u64 {
        (self.n / self.order) as u64
    }

    pub fn probability(&self, key: &[u8]) -> f64 {
        self.count(key) as f64 / self.num_blocks() as f64
    }

    /// Empirical entropy of the ℓ-block distribution, in bits.
    pub fn entropy_bits(&self) -> f64 {
        let total = self.num_blocks() as f64;
        self.counts
            .values()
            .map(|&c| {
                let p = c as f64 / total;
                -p * p.log2()
            })
            .sum()
    }

    /// First-order marginal as a probability vector over `size` symbols.
    pub fn symbol_probabilities(&self, size: usize) -> Vec<f64> {
        let mut p = vec![0.0; size];
        for (key, &c) in &self.counts {
            for &s in key {
                p[s as usize] += c as f64;
            }
        }
        p.iter_mut().for_each(|v| *v /= self.n as f64);
        p
    }
}

fn check_order(order: usize, n: usize) -> Result<()> {
    if order == 0 || n == 0 || n % order != 0 {
        return Err(precondition(format!(
            "order ℓ={order} must be positive and divide n={n}"
        )));
    }
    Ok(())
}

pub fn empirical_distribution(b: &Block, order: usize) -> Result<EmpiricalDistribution> {
    check_order(order, b.len())?;
    let mut counts = BTreeMap::new();
    for chunk in b.symbols().chunks_exact(order) {
        *counts.entry(chunk.to_vec()).or_insert(0) += 1;
    }
    Ok(EmpiricalDistribution {
        order,
        n: b.len(),
        counts,
    })
}

/// Joint ℓ-th order empirical distribution of a pair of equal-length blocks.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JointEmpiricalDistribution {
    order: usize,
    n: usize,
    counts: BTreeMap<(Vec<u8>, Vec<u8>), u64>,
}

impl JointEmpiricalDistribution {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn counts(&self) -> &BTreeMap<(Vec<u8>, Vec<u8>), u64> {
        &self.counts
    }

    pub fn count(&self, a: &[u8], b: &[u8]) -> u64 {
        self.counts
            .get(&(a.to_vec(), b.to_vec()))
            .copied()
            .unwrap_or(0)
    }

    pub fn marginal_first(&self) -> EmpiricalDistribution {
        self.marginal(|(a, _)| a.clone())
    }

    pub fn marginal_second(&self) -> EmpiricalDistribution {
        self.marginal(|(_, b)| b.clone())
    }

    fn marginal(&self, key: impl Fn(&(Vec<u8>, Vec<u8>)) -> Vec<u8>) -> EmpiricalDistribution {
        let mut counts = BTreeMap::new();
        for (pair, &c) in &self.counts {
            *counts.entry(key(pair)).or_insert(0) += c;
        }
        EmpiricalDistribution {
            order: self.order,
            n: self.n,
            counts,
        }
    }
}

pub fn joint_empirical_distribution(
    x: &Block,
    y: &Block,
    order: usize,
) -> Result<JointEmpiricalDistribution> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    check_order(order, x.len())?;
    let mut counts = BTreeMap::new();
    for (a, b) in x
        .symbols()
        .chunks_exact(order)
        .zip(y.symbols().chunks_exact(order))
    {
        *counts.entry((a.to_vec(), b.to_vec())).or_insert(0) += 1;
    }
    Ok(JointEmpiricalDistribution {
        order,
        n: x.len(),
        counts,
    })
}

/// First-order joint counts as a dense `J × K` table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointCounts {
    pub source_size: usize,
    pub repro_size: usize,
    pub n: usize,
    counts: Vec<u64>,
}

impl JointCounts {
    pub fn of(x: &[u8], y: &[u8], source_size: usize, repro_size: usize) -> Self {
        debug_assert_eq!(x.len(), y.len());
        let mut counts = vec![0u64; source_size * repro_size];
        for (&a, &b) in x.iter().zip(y) {
            counts[a as usize * repro_size + b as usize] += 1;
        }
        Self {
            source_size,
            repro_size,
            n: x.len(),
            counts,
        }
    }

    pub fn get(&self, a: usize, b: usize) -> u64 {
        self.counts[a * self.repro_size + b]
    }

    /// Number of positions where source and reproduction indices coincide.
    pub fn agreements(&self) -> u64 {
        (0..self.source_size.min(self.repro_size))
            .map(|a| self.get(a, a))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::{all_blocks, Alphabet};

    fn ab(s: &str) -> Block {
        Alphabet::new("ab").unwrap().parse_block(s).unwrap()
    }

    #[test]
    fn first_order_counts_of_parsing_example() {
        let d = empirical_distribution(&ab("abbabaabbaaabaa"), 1).unwrap();
        assert_eq!(d.count(&[0]), 9);
        assert_eq!(d.count(&[1]), 6);
    }

    #[test]
    fn constant_and_periodic_blocks() {
        let d = empirical_distribution(&ab("aaaa"), 2).unwrap();
        assert_eq!(d.counts().len(), 1);
        assert_eq!(d.count(&[0, 0]), 2);
        let d = empirical_distribution(&ab("abab"), 2).unwrap();
        assert_eq!(d.counts().len(), 1);
        assert_eq!(d.count(&[0, 1]), 2);
    }

    #[test]
    fn order_must_divide_n() {
        assert!(matches!(
            empirical_distribution(&ab("aaa"), 2),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn joint_examples() {
        let j = joint_empirical_distribution(&ab("ab"), &ab("ab"), 1).unwrap();
        assert_eq!(j.count(&[0], &[0]), 1);
        assert_eq!(j.count(&[1], &[1]), 1);
        assert_eq!(j.counts().len(), 2);

        let j = joint_empirical_distribution(&ab("ab"), &ab("ba"), 1).unwrap();
        assert_eq!(j.count(&[0], &[1]), 1);
        assert_eq!(j.count(&[1], &[0]), 1);

        let j = joint_empirical_distribution(&ab("aabb"), &ab("abab"), 2).unwrap();
        assert_eq!(j.count(&[0, 0], &[0, 1]), 1);
        assert_eq!(j.count(&[1, 1], &[0, 1]), 1);
        assert_eq!(j.counts().len(), 2);
    }

    #[test]
    fn joint_rejects_length_mismatch() {
        assert!(matches!(
            joint_empirical_distribution(&ab("ab"), &ab("abb"), 1),
            Err(Error::LengthMismatch { left: 2, right: 3 })
        ));
    }

    #[test]
    fn marginals_are_exact_exhaustively() {
        for n in [2usize, 4, 6] {
            let blocks: Vec<_> = all_blocks(2, n, 1 << 20).unwrap().collect();
            for order in [1, 2] {
                for x in &blocks {
                    for y in blocks.iter().step_by(3) {
                        let j = joint_empirical_distribution(x, y, order).unwrap();
                        assert_eq!(j.marginal_first(), empirical_distribution(x, order).unwrap());
                        assert_eq!(j.marginal_second(), empirical_distribution(y, order).unwrap());
                    }
                }
            }
        }
    }

    fn permutations(m: usize) -> Vec<Vec<usize>> {
        if m == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(m - 1) {
            for slot in 0..m {
                let mut q = p.clone();
                q.insert(slot, m - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn aligned_block_permutations_preserve_type() {
        for (n, order) in [(6usize, 1usize), (8, 2), (8, 1)] {
            let perms = permutations(n / order);
            let blocks: Vec<_> = all_blocks(2, n, 1 << 20).unwrap().collect();
            // n=8, ℓ=1 has 8! permutations; a stride keeps the sweep short
            let stride = if perms.len() > 1000 { 97 } else { 1 };
            for x in &blocks {
                let base = empirical_distribution(x, order).unwrap();
                let chunks: Vec<&[u8]> = x.symbols().chunks(order).collect();
                for p in perms.iter().step_by(stride) {
                    let sym: Vec<u8> = p.iter().flat_map(|&i| chunks[i].to_vec()).collect();
                    let y = Block::from_symbols(sym);
                    assert_eq!(empirical_distribution(&y, order).unwrap(), base);
                }
            }
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let d = empirical_distribution(&ab("abbabaabbaaabaa"), 1).unwrap();
        let total: f64 = d.counts().keys().map(|k| d.probability(k)).sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert_eq!(d.counts().values().sum::<u64>(), d.num_blocks());
    }
}
