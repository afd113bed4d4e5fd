//! Type classes, sphere covering of a type class, and the lower bound on the
//! length of any d-semifaithful code.

use std::collections::{BTreeSet, HashMap};

use num::rational::Ratio;
use num::{BigUint, One, ToPrimitive};
use serde_json::{json, Value};

use crate::alphabet::{all_blocks, Block};
use crate::distortion::{radius, DistortionSpec, Rational};
use crate::empirical::{empirical_distribution, EmpiricalDistribution};
use crate::error::{precondition, Error, Result};
use crate::lz78::epsilon_of_n;
use crate::universal::{log2_big, sphere_mass, UniversalTable};

/// All blocks sharing one ℓ-th order empirical distribution.
#[derive(Clone, Debug)]
pub struct TypeClass {
    distribution: EmpiricalDistribution,
    alphabet_size: usize,
    cardinality: BigUint,
    members: Vec<Block>,
}

impl TypeClass {
    pub fn distribution(&self) -> &EmpiricalDistribution {
        &self.distribution
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn n(&self) -> usize {
        self.distribution.n()
    }

    /// Multinomial coefficient `(n/ℓ)! / Π counts!`.
    pub fn cardinality(&self) -> &BigUint {
        &self.cardinality
    }

    /// Members in lexicographic order.
    pub fn members(&self) -> &[Block] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, b: &Block) -> bool {
        self.members.binary_search(b).is_ok()
    }
}

pub fn multinomial(counts: impl IntoIterator<Item = u64>) -> BigUint {
    let mut total = 0u64;
    let mut out = BigUint::one();
    for c in counts {
        for i in 1..=c {
            total += 1;
            out = out * BigUint::from(total) / BigUint::from(i);
        }
    }
    out
}

/// Lexicographic multiset permutations of aligned ℓ-blocks.
pub struct TypeClassMembers {
    keys: Vec<Vec<u8>>,
    seq: Option<Vec<usize>>,
}

impl TypeClassMembers {
    pub fn new(dist: &EmpiricalDistribution) -> Self {
        let keys: Vec<Vec<u8>> = dist.counts().keys().cloned().collect();
        let seq = dist
            .counts()
            .values()
            .enumerate()
            .flat_map(|(k, &c)| std::iter::repeat(k).take(c as usize))
            .collect();
        Self { keys, seq: Some(seq) }
    }
}

impl Iterator for TypeClassMembers {
    type Item = Block;

    fn next(&mut self) -> Option<Block> {
        let seq = self.seq.as_mut()?;
        let block = Block::from_symbols(seq.iter().flat_map(|&k| self.keys[k].iter().copied()).collect());
        // advance to the next permutation, or finish
        let advanced = match (0..seq.len().saturating_sub(1)).rev().find(|&i| seq[i] < seq[i + 1]) {
            Some(i) => {
                let j = (i + 1..seq.len()).rev().find(|&j| seq[j] > seq[i]).expect("successor exists");
                seq.swap(i, j);
                seq[i + 1..].reverse();
                true
            }
            None => false,
        };
        if !advanced {
            self.seq = None;
        }
        Some(block)
    }
}

/// Materializes the type class of `dist` over an alphabet of `size` symbols.
pub fn enumerate_type_class(dist: &EmpiricalDistribution, size: usize, cap: u64) -> Result<TypeClass> {
    if let Some(bad) = dist.counts().keys().flatten().find(|&&s| s as usize >= size) {
        return Err(precondition(format!("symbol index {bad} outside an alphabet of size {size}")));
    }
    let cardinality = multinomial(dist.counts().values().copied());
    match cardinality.to_u64() {
        Some(c) if c <= cap => {}
        _ => {
            return Err(Error::EnumerationInfeasible {
                states: cardinality.to_u128().unwrap_or(u128::MAX),
                cap,
            })
        }
    }
    let members: Vec<Block> = TypeClassMembers::new(dist).collect();
    assert_eq!(BigUint::from(members.len()), cardinality, "type class size must match the multinomial");
    debug_assert!(members
        .iter()
        .all(|m| &empirical_distribution(m, dist.order()).expect("valid order") == dist));
    Ok(TypeClass {
        distribution: dist.clone(),
        alphabet_size: size,
        cardinality,
        members,
    })
}

/// Type class of a given block.
pub fn type_class_of(b: &Block, order: usize, size: usize, cap: u64) -> Result<TypeClass> {
    enumerate_type_class(&empirical_distribution(b, order)?, size, cap)
}

/// Every ℓ-th order type realized by blocks of length `n`, in lexicographic
/// order of their first member.
pub fn all_types(size: usize, n: usize, order: usize, cap: u64) -> Result<Vec<EmpiricalDistribution>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for b in all_blocks(size, n, cap)? {
        let d = empirical_distribution(&b, order)?;
        if seen.insert(d.clone()) {
            out.push(d);
        }
    }
    Ok(out)
}

// ------------------------------------------------------- counting identity

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdentityCheck {
    /// `|𝒯(P)|·|𝒯(Q) ∩ S(x,D)|`.
    pub lhs: u64,
    /// `|𝒯(Q)|·|𝒯(P) ∩ Ŝ(x̂,D)|`.
    pub rhs: u64,
    /// `|𝒯(Q) ∩ S(x,D)|` is the same for every `x ∈ 𝒯(P)`.
    pub forward_constant: bool,
    /// `|𝒯(P) ∩ Ŝ(x̂,D)|` is the same for every `x̂ ∈ 𝒯(Q)`.
    pub reverse_constant: bool,
    /// Total number of pairs within distortion, counted directly.
    pub pair_count: u64,
}

impl IdentityCheck {
    pub fn holds(&self) -> bool {
        self.forward_constant && self.reverse_constant && self.lhs == self.rhs && self.lhs == self.pair_count
    }
}

/// Double-counts the pairs `(x, x̂) ∈ 𝒯(P) × 𝒯(Q)` within distortion `nD`.
pub fn counting_identity_check(
    p: &TypeClass,
    q: &TypeClass,
    level: Rational,
    spec: &DistortionSpec,
) -> Result<IdentityCheck> {
    spec.require_joint_type()?;
    check_classes(p, q, spec)?;
    let r = radius(p.n(), level);
    let mut forward = vec![0u64; p.len()];
    let mut reverse = vec![0u64; q.len()];
    for (i, x) in p.members().iter().enumerate() {
        for (j, y) in q.members().iter().enumerate() {
            if spec.within(x.symbols(), y.symbols(), &r) {
                forward[i] += 1;
                reverse[j] += 1;
            }
        }
    }
    let pair_count = forward.iter().sum();
    Ok(IdentityCheck {
        lhs: p.len() as u64 * forward[0],
        rhs: q.len() as u64 * reverse[0],
        forward_constant: forward.iter().all(|&c| c == forward[0]),
        reverse_constant: reverse.iter().all(|&c| c == reverse[0]),
        pair_count,
    })
}

fn check_classes(p: &TypeClass, q: &TypeClass, spec: &DistortionSpec) -> Result<()> {
    if p.n() != q.n() {
        return Err(Error::LengthMismatch { left: p.n(), right: q.n() });
    }
    if p.alphabet_size() != spec.source_size() || q.alphabet_size() != spec.repro_size() {
        return Err(Error::AlphabetMismatch(format!(
            "type classes over ({}, {}) but distortion over ({}, {})",
            p.alphabet_size(),
            q.alphabet_size(),
            spec.source_size(),
            spec.repro_size()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------- covering bound

#[derive(Clone, Debug)]
pub struct CoveringBound {
    pub class_size: u64,
    /// `max_x̂ |𝒯(P) ∩ Ŝ(x̂,D)|`; zero means no codeword covers any member.
    pub max_intersection: u64,
    /// `|𝒯(P)| / max_intersection`; `None` signals an infinite bound.
    pub m0: Option<Ratio<u64>>,
    /// Type of the first maximizing `x̂` in lexicographic order.
    pub q_star: Option<EmpiricalDistribution>,
    pub q_star_size: u64,
    /// `|𝒯(Q*) ∩ S(x,D)|`, constant over `x ∈ 𝒯(P)` when the identity holds.
    pub q_star_intersection: u64,
    /// `M₀ = |𝒯(Q*)| / |𝒯(Q*) ∩ S(x,D)|` for every member `x`.
    pub identity_ok: bool,
}

impl CoveringBound {
    pub fn m0_f64(&self) -> f64 {
        self.m0.map_or(f64::INFINITY, |m| *m.numer() as f64 / *m.denom() as f64)
    }

    /// Smallest integer codebook size permitted by the bound.
    pub fn m0_ceil(&self) -> Option<u64> {
        self.m0.map(|m| m.ceil().to_integer())
    }
}

/// `M₀`, the class size over the largest reverse-sphere intersection, with
/// the maximizing reproduction type and a check of the exchange identity.
pub fn covering_lower_bound(p: &TypeClass, level: Rational, spec: &DistortionSpec, cap: u64) -> Result<CoveringBound> {
    spec.require_joint_type()?;
    if p.alphabet_size() != spec.source_size() {
        return Err(Error::AlphabetMismatch("type class and distortion source alphabets differ".into()));
    }
    let n = p.n();
    let order = p.distribution().order();
    let k = spec.repro_size();
    let r = radius(n, level);

    // intersection counts depend on x̂ only through its ℓ-th order type
    let mut by_type: HashMap<EmpiricalDistribution, u64> = HashMap::new();
    let mut best: Option<(u64, EmpiricalDistribution)> = None;
    for y in all_blocks(k, n, cap)? {
        let t = empirical_distribution(&y, order)?;
        if by_type.contains_key(&t) {
            continue;
        }
        let hits = p.members().iter().filter(|x| spec.within(x.symbols(), y.symbols(), &r)).count() as u64;
        by_type.insert(t.clone(), hits);
        if best.as_ref().is_none_or(|(b, _)| hits > *b) {
            best = Some((hits, t));
        }
    }
    let (max_intersection, q_star) = best.expect("at least one reproduction block");
    let class_size = p.len() as u64;
    if max_intersection == 0 {
        return Ok(CoveringBound {
            class_size,
            max_intersection,
            m0: None,
            q_star: None,
            q_star_size: 0,
            q_star_intersection: 0,
            identity_ok: true,
        });
    }
    let m0 = Ratio::new(class_size, max_intersection);
    let q_class = enumerate_type_class(&q_star, k, cap)?;
    let counts: Vec<u64> = p
        .members()
        .iter()
        .map(|x| {
            q_class
                .members()
                .iter()
                .filter(|y| spec.within(x.symbols(), y.symbols(), &r))
                .count() as u64
        })
        .collect();
    let q_size = q_class.len() as u64;
    let identity_ok = counts.iter().all(|&c| c > 0 && Ratio::new(q_size, c) == m0);
    Ok(CoveringBound {
        class_size,
        max_intersection,
        m0: Some(m0),
        q_star: Some(q_star),
        q_star_size: q_size,
        q_star_intersection: counts[0],
        identity_ok,
    })
}

// ----------------------------------------------------------------- covers

/// Coverage sets of all reproduction blocks over the members of `p`, one
/// bitset per distinct set, keeping the lexicographically first block.
struct Coverage {
    words: usize,
    sets: Vec<Vec<u64>>,
    blocks: Vec<Block>,
}

fn coverage(p: &TypeClass, level: Rational, spec: &DistortionSpec, cap: u64) -> Result<Coverage> {
    if p.alphabet_size() != spec.source_size() {
        return Err(Error::AlphabetMismatch("type class and distortion source alphabets differ".into()));
    }
    let r = radius(p.n(), level);
    let words = p.len().div_ceil(64);
    let mut seen = BTreeSet::new();
    let mut sets = Vec::new();
    let mut blocks = Vec::new();
    let mut covered = vec![0u64; words];
    for y in all_blocks(spec.repro_size(), p.n(), cap)? {
        let mut set = vec![0u64; words];
        for (i, x) in p.members().iter().enumerate() {
            if spec.within(x.symbols(), y.symbols(), &r) {
                set[i / 64] |= 1 << (i % 64);
            }
        }
        if set.iter().all(|&w| w == 0) || !seen.insert(set.clone()) {
            continue;
        }
        covered.iter_mut().zip(&set).for_each(|(c, s)| *c |= s);
        sets.push(set);
        blocks.push(y);
    }
    if let Some(i) = (0..p.len()).find(|&i| covered[i / 64] >> (i % 64) & 1 == 0) {
        return Err(Error::Uncoverable {
            member: p.members()[i].symbols().iter().map(|s| s.to_string()).collect(),
        });
    }
    Ok(Coverage { words, sets, blocks })
}

#[derive(Clone, Debug)]
pub struct GreedyCover {
    /// Chosen codewords, in order of selection.
    pub codebook: Vec<Block>,
}

impl GreedyCover {
    pub fn size(&self) -> usize {
        self.codebook.len()
    }
}

/// Greedy set cover of `𝒯(P)` by reverse spheres. Ties go to the
/// lexicographically smallest candidate.
pub fn greedy_cover(p: &TypeClass, level: Rational, spec: &DistortionSpec, cap: u64) -> Result<GreedyCover> {
    let cov = coverage(p, level, spec, cap)?;
    let mut uncovered = vec![0u64; cov.words];
    for i in 0..p.len() {
        uncovered[i / 64] |= 1 << (i % 64);
    }
    let mut codebook = Vec::new();
    while uncovered.iter().any(|&w| w != 0) {
        let gain = |s: &Vec<u64>| -> u32 { s.iter().zip(&uncovered).map(|(a, b)| (a & b).count_ones()).sum() };
        let (best, _) = cov
            .sets
            .iter()
            .enumerate()
            .map(|(i, s)| (i, gain(s)))
            .fold((0, 0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        uncovered.iter_mut().zip(&cov.sets[best]).for_each(|(u, s)| *u &= !s);
        codebook.push(cov.blocks[best].clone());
    }
    Ok(GreedyCover { codebook })
}

/// Size of a smallest cover of `𝒯(P)` by at most `max_size` reverse
/// spheres, found by brute force; `None` when every cover is larger.
pub fn exhaustive_min_cover(
    p: &TypeClass,
    level: Rational,
    spec: &DistortionSpec,
    max_size: usize,
    cap: u64,
) -> Result<Option<usize>> {
    let cov = coverage(p, level, spec, cap)?;
    // sets contained in another set never appear in a minimal cover
    let sets: Vec<&Vec<u64>> = cov
        .sets
        .iter()
        .filter(|s| {
            !cov
                .sets
                .iter()
                .any(|t| t != *s && s.iter().zip(t).all(|(a, b)| a & !b == 0))
        })
        .collect();
    let mut full = vec![0u64; cov.words];
    for i in 0..p.len() {
        full[i / 64] |= 1 << (i % 64);
    }
    for size in 1..=max_size {
        if covers_with(&sets, &full, vec![0u64; cov.words], 0, size) {
            return Ok(Some(size));
        }
    }
    Ok(None)
}

fn covers_with(sets: &[&Vec<u64>], full: &[u64], acc: Vec<u64>, start: usize, left: usize) -> bool {
    if acc == full {
        return true;
    }
    if left == 0 {
        return false;
    }
    (start..sets.len()).any(|i| {
        let next: Vec<u64> = acc.iter().zip(sets[i]).map(|(a, s)| a | s).collect();
        covers_with(sets, full, next, i + 1, left - 1)
    })
}

// ------------------------------------------------------- short codewords

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShortCodewordBound {
    /// `log2 M − ε·log2 n`.
    pub threshold_bits: f64,
    /// `2^{threshold + 1} − 1`, clamped at zero where the sum is empty.
    pub bound: f64,
    /// Number of binary strings of length at most `floor(threshold)`.
    pub integer_bound: u64,
    /// `1 − 2n^{−ε}`, the guaranteed fraction of codewords not that short.
    pub fraction: f64,
}

/// Upper bound on the number of codewords of a one-to-one code of size `m`
/// whose length is at most `log2 m − ε·log2 n`.
pub fn short_codeword_count(m: u64, n: usize, epsilon: f64) -> Result<ShortCodewordBound> {
    if m == 0 || n == 0 || !(epsilon > 0.0) {
        return Err(precondition("need M ≥ 1, n ≥ 1 and ε > 0"));
    }
    let threshold_bits = (m as f64).log2() - epsilon * (n as f64).log2();
    let integer_bound = if threshold_bits < 0.0 {
        0
    } else {
        let t = threshold_bits.floor() as u32;
        if t >= 63 {
            u64::MAX
        } else {
            (1u64 << (t + 1)) - 1
        }
    };
    Ok(ShortCodewordBound {
        threshold_bits,
        bound: (2f64.powf(threshold_bits + 1.0) - 1.0).max(0.0),
        integer_bound,
        fraction: 1.0 - 2.0 * (n as f64).powf(-epsilon),
    })
}

/// Lengths of the `m` shortest binary strings, empty string first.
pub fn shortest_first_lengths(m: u64) -> Vec<u32> {
    (1..=m).map(|j| 63 - j.leading_zeros()).collect()
}

// ---------------------------------------------------- length-bound terms

/// `S(ℓ) = (J^{ℓ+1} − 1)/(J − 1)`.
pub fn s_ell(source_size: usize, order: usize) -> f64 {
    let j = source_size as u128;
    match j.checked_pow(order as u32 + 1) {
        Some(p) if j > 1 => ((p - 1) / (j - 1)) as f64,
        _ if j == 1 => (order + 1) as f64,
        _ => {
            let j = source_size as f64;
            (j.powi(order as i32 + 1) - 1.0) / (j - 1.0)
        }
    }
}

/// `(K^ℓ/n)·log2(n/ℓ + 1)`.
fn type_count_term(n: usize, order: usize, repro_size: usize) -> f64 {
    (repro_size as f64).powi(order as i32) / n as f64 * (n as f64 / order as f64 + 1.0).log2()
}

/// `δ_n(ℓ)`, with `one_minus_eps` standing for the `(1 − ε_n)` factor.
pub fn delta_n_ell(n: usize, order: usize, source_size: usize, repro_size: usize, one_minus_eps: f64) -> f64 {
    let s = s_ell(source_size, order);
    let log_4s2 = (4.0 * s * s).log2();
    log_4s2 * (repro_size as f64).log2() / (one_minus_eps * (n as f64).log2())
        + s * s * log_4s2 / n as f64
        + type_count_term(n, order, repro_size)
        + 1.0 / order as f64
}

/// `Δ_n(ℓ) = ε(n) + δ_n(ℓ) + (K^ℓ/n²)·log2(n/ℓ + 1)`.
pub fn big_delta(n: usize, order: usize, source_size: usize, repro_size: usize, one_minus_eps: f64) -> f64 {
    epsilon_of_n(n, repro_size, one_minus_eps)
        + delta_n_ell(n, order, source_size, repro_size, one_minus_eps)
        + type_count_term(n, order, repro_size) / n as f64
}

/// Worst `log2|𝒯(Q)| − (LZ(x̂) − nΔ)` over the members of `q`, using the
/// code lengths stored in `table`.
pub fn uq2lz_slack(q: &TypeClass, table: &UniversalTable, n_delta: f64) -> Result<f64> {
    if q.n() != table.n() || q.alphabet_size() != table.alphabet_size() {
        return Err(precondition("type class and table disagree on n or K"));
    }
    let log_size = log2_big(q.cardinality());
    let worst = q
        .members()
        .iter()
        .map(|y| table.code_bits(y.index(table.alphabet_size()) as usize))
        .max()
        .expect("type classes are non-empty");
    Ok(log_size - (worst as f64 - n_delta))
}

#[derive(Clone, Debug)]
pub struct ConverseBoundReport {
    pub n: usize,
    pub order: usize,
    pub epsilon: f64,
    pub one_minus_eps: f64,
    pub covering: CoveringBound,
    pub s_ell: f64,
    pub epsilon_of_n: f64,
    pub delta_n_ell: f64,
    pub big_delta: f64,
    /// The `(K^ℓ/n)·log2(n/ℓ+1)` term subtracted once more in `nΔ`.
    pub type_count_term: f64,
    /// `H_{Q*}(X̂^ℓ)` in bits.
    pub h_q_star: Option<f64>,
    /// `−log2 U[S(x,D)]`.
    pub neg_log2_mass: f64,
    /// `−log2 U[S(x,D)] − nΔ_n(ℓ) − ε·log2 n`.
    pub bound_bits: f64,
    /// Worst slack of `log2|𝒯(Q*)| ≥ LZ(x̂) − nΔ` over `x̂ ∈ 𝒯(Q*)`.
    pub uq2lz_worst_slack: Option<f64>,
}

impl ConverseBoundReport {
    pub fn to_json(&self) -> Value {
        let c = &self.covering;
        json!({
            "n": self.n,
            "ell": self.order,
            "epsilon": self.epsilon,
            "one_minus_eps_n": self.one_minus_eps,
            "M0": c.m0.map(|m| m.to_string()),
            "M0_value": finite_or_null(c.m0_f64()),
            "M0_ceil": c.m0_ceil(),
            "class_size": c.class_size,
            "max_intersection": c.max_intersection,
            "Q_star": c.q_star.as_ref().map(distribution_json),
            "identity_ok": c.identity_ok,
            "S_ell": self.s_ell,
            "epsilon_of_n": self.epsilon_of_n,
            "delta": self.delta_n_ell,
            "Delta": self.big_delta,
            "type_count_term": self.type_count_term,
            "H_Q_star": self.h_q_star,
            "minus_log2_U_mass": finite_or_null(self.neg_log2_mass),
            "bound_bits": finite_or_null(self.bound_bits),
            "uq2lz_worst_slack": self.uq2lz_worst_slack,
        })
    }
}

fn finite_or_null(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub fn distribution_json(d: &EmpiricalDistribution) -> Value {
    let counts: serde_json::Map<String, Value> = d
        .counts()
        .iter()
        .map(|(k, &c)| (k.iter().map(|s| s.to_string()).collect::<String>(), json!(c)))
        .collect();
    json!({ "order": d.order(), "n": d.n(), "counts": counts })
}

/// Assembles the lower bound `−log2 U[S(x,D)] − nΔ_n(ℓ) − ε·log2 n` on the
/// code length for `x`, together with the covering quantities behind it.
#[allow(clippy::too_many_arguments)]
pub fn theorem1_bound(
    x: &Block,
    level: Rational,
    spec: &DistortionSpec,
    order: usize,
    epsilon: f64,
    table: &UniversalTable,
    one_minus_eps: f64,
    cap: u64,
) -> Result<ConverseBoundReport> {
    spec.require_joint_type()?;
    spec.check_source(x)?;
    let n = x.len();
    if table.n() != n || table.alphabet_size() != spec.repro_size() {
        return Err(precondition("table must match the block length and reproduction alphabet"));
    }
    if !(epsilon > 0.0) || !(one_minus_eps > 0.0) {
        return Err(precondition("ε and (1 − ε_n) must be positive"));
    }
    let p = type_class_of(x, order, spec.source_size(), cap)?;
    let covering = covering_lower_bound(&p, level, spec, cap)?;

    let (j, k) = (spec.source_size(), spec.repro_size());
    let delta = delta_n_ell(n, order, j, k, one_minus_eps);
    let big = big_delta(n, order, j, k, one_minus_eps);
    let n_delta = n as f64 * big;
    let mass = sphere_mass(x, level, spec, table)?;
    let neg_log2_mass = mass.neg_log2();

    let (h_q_star, uq2lz_worst_slack) = match &covering.q_star {
        Some(q) => {
            let q_class = enumerate_type_class(q, k, cap)?;
            (Some(q.entropy_bits()), Some(uq2lz_slack(&q_class, table, n_delta)?))
        }
        None => (None, None),
    };

    Ok(ConverseBoundReport {
        n,
        order,
        epsilon,
        one_minus_eps,
        s_ell: s_ell(j, order),
        epsilon_of_n: epsilon_of_n(n, k, one_minus_eps),
        delta_n_ell: delta,
        big_delta: big,
        type_count_term: type_count_term(n, order, k),
        h_q_star,
        neg_log2_mass,
        bound_bits: neg_log2_mass - n_delta - epsilon * (n as f64).log2(),
        uq2lz_worst_slack,
        covering,
    })
}
