//! Single-letter reference quantities: the rate-distortion function, the
//! sphere-size exponent, and the smallest LZ length inside a sphere.

use rayon::prelude::*;
use serde::Serialize;

use crate::alphabet::Block;
use crate::distortion::{enumerate_sphere, DistortionSpec, Rational};
use crate::error::{precondition, Error, Result};
use crate::lz78::{length_bits, LengthMode};

const FEASIBILITY_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RdPoint {
    /// Target distortion level.
    pub level: f64,
    /// `R(D)` in bits per symbol.
    pub rate: f64,
    /// Slope parameter `s ≥ 0` of the test channel; `R′(D) = −s`.
    /// `None` at `D = D_min`, where the slope is unbounded.
    pub lagrange: Option<f64>,
    /// Expected distortion of the returned test channel.
    pub distortion: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SphereExponent {
    /// `max{H(X̂|X) : E d ≤ D}` in bits per symbol.
    pub exponent: f64,
    /// `q(x̂|x)`, one row per source letter.
    pub channel: Vec<Vec<f64>>,
    /// Shared multiplier; `None` at `D = D_min`.
    pub lambda: Option<f64>,
    pub distortion: f64,
}

pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

fn check_problem(p: &[f64], d: &[Vec<f64>]) -> Result<usize> {
    if p.is_empty() || d.len() != p.len() {
        return Err(precondition("distortion matrix needs one row per source letter"));
    }
    let k = d[0].len();
    if k == 0 || d.iter().any(|row| row.len() != k) {
        return Err(precondition("distortion matrix rows must share a positive length"));
    }
    if p.iter().any(|&v| !(v >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(precondition("source probabilities must be non-negative and sum to 1"));
    }
    if d.iter().flatten().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(precondition("distortion entries must be finite and non-negative"));
    }
    Ok(k)
}

/// `Σ_x P(x)·min_x̂ d(x,x̂)`, the least achievable expected distortion.
pub fn min_distortion(p: &[f64], d: &[Vec<f64>]) -> f64 {
    p.iter()
        .zip(d)
        .map(|(&px, row)| px * row.iter().cloned().fold(f64::INFINITY, f64::min))
        .sum()
}

/// `min_x̂ Σ_x P(x)·d(x,x̂)`, the distortion of the best constant output.
pub fn max_useful_distortion(p: &[f64], d: &[Vec<f64>]) -> f64 {
    (0..d[0].len())
        .map(|y| p.iter().zip(d).map(|(&px, row)| px * row[y]).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

fn check_level(p: &[f64], d: &[Vec<f64>], level: f64) -> Result<f64> {
    let d_min = min_distortion(p, d);
    if !(level >= d_min - FEASIBILITY_SLACK) {
        return Err(Error::Infeasible { level, min: d_min });
    }
    Ok(d_min)
}

/// Output of one Blahut–Arimoto run at a fixed slope.
struct BaRun {
    rate: f64,
    distortion: f64,
    iterations: usize,
    converged: bool,
}

/// Alternating minimization at slope `s`. `allowed(x, y)` restricts the
/// channel support; weights are `2^{−s·(d − min_y d)}` on that support.
fn ba_at_slope(
    p: &[f64],
    d: &[Vec<f64>],
    s: f64,
    allowed: &dyn Fn(usize, usize) -> bool,
    tol: f64,
    max_iter: usize,
) -> BaRun {
    let k = d[0].len();
    let weights: Vec<Vec<f64>> = d
        .iter()
        .enumerate()
        .map(|(x, row)| {
            let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
            (0..k)
                .map(|y| if allowed(x, y) { (-s * (row[y] - lo)).exp2() } else { 0.0 })
                .collect()
        })
        .collect();
    let mut q = vec![1.0 / k as f64; k];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        // c(y) = Σ_x P(x)·w(x,y) / Σ_y' q(y')·w(x,y')
        let mut c = vec![0.0; k];
        for (x, &px) in p.iter().enumerate() {
            if px == 0.0 {
                continue;
            }
            let z: f64 = (0..k).map(|y| q[y] * weights[x][y]).sum();
            for y in 0..k {
                c[y] += px * weights[x][y] / z;
            }
        }
        let upper = (0..k).filter(|&y| q[y] > 0.0).map(|y| c[y]).fold(0.0, f64::max).log2();
        let lower: f64 = (0..k).filter(|&y| q[y] > 0.0 && c[y] > 0.0).map(|y| q[y] * c[y] * c[y].log2()).sum();
        for y in 0..k {
            q[y] *= c[y];
        }
        if upper - lower < tol {
            converged = true;
            break;
        }
    }
    let mut rate = 0.0;
    let mut distortion = 0.0;
    for (x, &px) in p.iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        let z: f64 = (0..k).map(|y| q[y] * weights[x][y]).sum();
        for y in 0..k {
            let w = q[y] * weights[x][y] / z;
            if w > 0.0 {
                rate += px * w * (w / q[y]).log2();
                distortion += px * w * d[x][y];
            }
        }
    }
    BaRun {
        rate: rate.max(0.0),
        distortion,
        iterations,
        converged,
    }
}

/// `R(D)` for a memoryless source `p` under the per-letter matrix `d`.
pub fn blahut_arimoto(p: &[f64], d: &[Vec<f64>], level: f64, tol: f64, max_iter: usize) -> Result<RdPoint> {
    check_problem(p, d)?;
    let d_min = check_level(p, d, level)?;
    if level >= max_useful_distortion(p, d) {
        return Ok(RdPoint {
            level,
            rate: 0.0,
            lagrange: Some(0.0),
            distortion: max_useful_distortion(p, d),
            iterations: 0,
            converged: true,
        });
    }
    if level <= d_min + FEASIBILITY_SLACK {
        let minimal = |x: usize, y: usize| {
            let lo = d[x].iter().cloned().fold(f64::INFINITY, f64::min);
            d[x][y] <= lo
        };
        let run = ba_at_slope(p, d, 0.0, &minimal, tol, max_iter);
        return Ok(RdPoint {
            level,
            rate: run.rate,
            lagrange: None,
            distortion: run.distortion,
            iterations: run.iterations,
            converged: run.converged,
        });
    }

    // D(s) decreases in s; bracket the target, then bisect
    let everywhere = |_: usize, _: usize| true;
    let mut iterations = 0;
    let mut converged = true;
    let mut run_at = |s: f64| {
        let run = ba_at_slope(p, d, s, &everywhere, tol, max_iter);
        iterations += run.iterations;
        converged &= run.converged;
        run
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while run_at(hi).distortion > level {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if run_at(mid).distortion > level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * hi.max(1.0) {
            break;
        }
    }
    let run = run_at(hi);
    Ok(RdPoint {
        level,
        rate: run.rate,
        lagrange: Some(hi),
        distortion: run.distortion,
        iterations,
        converged,
    })
}

/// Per-letter Gibbs channel `q(x̂|x) ∝ 2^{−λ·d(x,x̂)}`.
fn gibbs_channel(d: &[Vec<f64>], lambda: f64) -> Vec<Vec<f64>> {
    d.iter()
        .map(|row| {
            let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
            let w: Vec<f64> = row.iter().map(|&v| (-lambda * (v - lo)).exp2()).collect();
            let z: f64 = w.iter().sum();
            w.into_iter().map(|v| v / z).collect()
        })
        .collect()
}

fn channel_stats(p: &[f64], d: &[Vec<f64>], channel: &[Vec<f64>]) -> (f64, f64) {
    let mut h = 0.0;
    let mut dist = 0.0;
    for ((&px, row), q) in p.iter().zip(d).zip(channel) {
        for (&v, &w) in row.iter().zip(q) {
            if w > 0.0 {
                h -= px * w * w.log2();
                dist += px * w * v;
            }
        }
    }
    (h, dist)
}

/// `E(D,P) = max{H(X̂|X) : E d(X,X̂) ≤ D}`, the exponential growth rate of
/// the number of reproduction blocks in a D-sphere.
pub fn sphere_exponent(p: &[f64], d: &[Vec<f64>], level: f64, tol: f64) -> Result<SphereExponent> {
    let k = check_problem(p, d)?;
    let d_min = check_level(p, d, level)?;

    let uniform = gibbs_channel(d, 0.0);
    let (h, dist) = channel_stats(p, d, &uniform);
    if dist <= level {
        return Ok(SphereExponent {
            exponent: h,
            channel: uniform,
            lambda: Some(0.0),
            distortion: dist,
        });
    }
    if level <= d_min + FEASIBILITY_SLACK {
        let channel: Vec<Vec<f64>> = d
            .iter()
            .map(|row| {
                let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
                let ties = row.iter().filter(|&&v| v <= lo).count() as f64;
                row.iter().map(|&v| if v <= lo { 1.0 / ties } else { 0.0 }).collect()
            })
            .collect();
        let (h, dist) = channel_stats(p, d, &channel);
        debug_assert_eq!(channel[0].len(), k);
        return Ok(SphereExponent {
            exponent: h,
            channel,
            lambda: None,
            distortion: dist,
        });
    }

    let dist_at = |lambda: f64| channel_stats(p, d, &gibbs_channel(d, lambda)).1;
    let (mut lo, mut hi) = (0.0, 1.0);
    while dist_at(hi) > level && hi < 1e9 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let dm = dist_at(mid);
        if dm > level {
            lo = mid;
        } else {
            hi = mid;
        }
        if (dm - level).abs() < tol * 1e-3 && hi - lo < 1e-12 * hi.max(1.0) {
            break;
        }
    }
    let channel = gibbs_channel(d, hi);
    let (h, dist) = channel_stats(p, d, &channel);
    Ok(SphereExponent {
        exponent: h,
        channel,
        lambda: Some(hi),
        distortion: dist,
    })
}

/// Smallest code length over `S(x,D)` and the lexicographically first block
/// attaining it.
pub fn min_lz_in_sphere(
    x: &Block,
    level: Rational,
    spec: &DistortionSpec,
    mode: LengthMode,
    cap: u64,
) -> Result<(u64, Block)> {
    let k = spec.repro_size();
    let mut best: Option<(u64, Block)> = None;
    for y in enumerate_sphere(x, level, spec, cap)? {
        let bits = length_bits(&y, k, mode)?;
        if best.as_ref().is_none_or(|(b, _)| bits < *b) {
            best = Some((bits, y));
        }
    }
    best.ok_or_else(|| precondition("the sphere is empty"))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossoverRow {
    pub level: f64,
    pub rate: f64,
    pub exponent: f64,
    /// `R < E`: the random-codebook scan needs fewer draws than the sphere
    /// has members.
    pub proposed_cheaper: bool,
}

/// `R(D)` and `E(D)` on a grid; levels below `D_min` are skipped.
pub fn complexity_crossover(p: &[f64], d: &[Vec<f64>], grid: &[f64]) -> Result<Vec<CrossoverRow>> {
    check_problem(p, d)?;
    let d_min = min_distortion(p, d);
    grid.par_iter()
        .filter(|&&level| level >= d_min - FEASIBILITY_SLACK)
        .map(|&level| {
            let rate = blahut_arimoto(p, d, level, 1e-12, 100_000)?.rate;
            let exponent = sphere_exponent(p, d, level, 1e-12)?.exponent;
            Ok(CrossoverRow {
                level,
                rate,
                exponent,
                proposed_cheaper: rate < exponent,
            })
        })
        .collect()
}

/// Level in `[lo, hi]` where `R(D) = E(D)`, found by bisection. `R − E`
/// must change sign on the interval.
pub fn crossover_root(p: &[f64], d: &[Vec<f64>], lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let gap = |level: f64| -> Result<f64> {
        Ok(blahut_arimoto(p, d, level, 1e-13, 100_000)?.rate - sphere_exponent(p, d, level, 1e-13)?.exponent)
    };
    let (mut lo, mut hi) = (lo, hi);
    let (g_lo, g_hi) = (gap(lo)?, gap(hi)?);
    if g_lo.signum() == g_hi.signum() {
        return Err(precondition("R − E does not change sign on the interval"));
    }
    let rising = g_lo < 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if (gap(mid)? < 0.0) == rising {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::all_blocks;
    use crate::universal::{sphere_mass, UniversalTable};

    fn hamming(k: usize) -> Vec<Vec<f64>> {
        (0..k).map(|a| (0..k).map(|b| (a != b) as u8 as f64).collect()).collect()
    }

    /// Closed-form root of `h2(D) = 1/2` on `(0, 1/2)`.
    fn half_entropy_root() -> f64 {
        let (mut lo, mut hi) = (1e-9, 0.5);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if binary_entropy(mid) < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    #[test]
    fn binary_hamming_rate_matches_closed_form() {
        let p = [0.5, 0.5];
        for i in 1..=9 {
            let level = 0.05 * i as f64;
            let pt = blahut_arimoto(&p, &hamming(2), level, 1e-12, 10_000).unwrap();
            assert!((pt.rate - (1.0 - binary_entropy(level))).abs() < 1e-6, "{level}: {pt:?}");
            assert!(pt.converged);
        }
    }

    #[test]
    fn biased_binary_rate_matches_closed_form() {
        // R(D) = h2(p) − h2(D) for D < min(p, 1−p)
        let p = [0.8, 0.2];
        for level in [0.02, 0.05, 0.1, 0.15] {
            let pt = blahut_arimoto(&p, &hamming(2), level, 1e-13, 100_000).unwrap();
            let expected = binary_entropy(0.2) - binary_entropy(level);
            assert!((pt.rate - expected).abs() < 1e-6, "{level}: {} vs {expected}", pt.rate);
        }
        assert_eq!(blahut_arimoto(&p, &hamming(2), 0.2, 1e-12, 100).unwrap().rate, 0.0);
    }

    #[test]
    fn rate_edge_cases() {
        let p = [0.25, 0.25, 0.5];
        let d = hamming(3);
        let lossless = blahut_arimoto(&p, &d, 0.0, 1e-12, 1000).unwrap();
        assert!((lossless.rate - 1.5).abs() < 1e-9);
        assert_eq!(blahut_arimoto(&p, &d, 0.9, 1e-12, 1000).unwrap().rate, 0.0);
        assert!(matches!(
            blahut_arimoto(&p, &d, -0.1, 1e-12, 1000),
            Err(Error::Infeasible { .. })
        ));
        // ternary Hamming: R(D) = H(P) − h2(D) − D·log2(K−1) for small D on a uniform source
        let u = [1.0 / 3.0; 3];
        let pt = blahut_arimoto(&u, &d, 0.1, 1e-13, 100_000).unwrap();
        assert!((pt.rate - (3f64.log2() - binary_entropy(0.1) - 0.1)).abs() < 1e-6);
    }

    #[test]
    fn rate_curve_is_convex_and_nonincreasing() {
        let p = [0.6, 0.3, 0.1];
        let d = vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]];
        let levels: Vec<f64> = (0..=40).map(|i| i as f64 * 0.02).collect();
        let r: Vec<f64> = levels
            .iter()
            .map(|&l| blahut_arimoto(&p, &d, l, 1e-12, 100_000).unwrap().rate)
            .collect();
        assert!(r.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        assert!(r.windows(3).all(|w| w[0] + w[2] - 2.0 * w[1] >= -1e-7));
    }

    #[test]
    fn sphere_exponent_matches_binary_entropy() {
        let p = [0.5, 0.5];
        for i in 1..=9 {
            let level = 0.05 * i as f64;
            let e = sphere_exponent(&p, &hamming(2), level, 1e-12).unwrap();
            assert!((e.exponent - binary_entropy(level)).abs() < 1e-6);
            assert!(e.distortion <= level + 1e-9);
        }
        let e = sphere_exponent(&p, &hamming(2), 1.0, 1e-12).unwrap();
        assert_eq!(e.exponent, 1.0);
        let e = sphere_exponent(&p, &hamming(2), 0.0, 1e-12).unwrap();
        assert_eq!(e.exponent, 0.0);
        assert!(sphere_exponent(&p, &hamming(2), -0.5, 1e-12).is_err());
    }

    #[test]
    fn sphere_exponent_complementary_slackness() {
        let p = [0.6, 0.3, 0.1];
        let d = vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]];
        for i in 0..=30 {
            let level = i as f64 * 0.05;
            let e = sphere_exponent(&p, &d, level, 1e-12).unwrap();
            assert!(e.distortion <= level + 1e-9);
            if let Some(lambda) = e.lambda {
                assert!(lambda * (level - e.distortion) < 1e-6);
            }
            let rows: f64 = e.channel.iter().zip(&p).map(|(q, &px)| {
                px * -q.iter().filter(|&&w| w > 0.0).map(|&w| w * w.log2()).sum::<f64>()
            }).sum();
            assert!((rows - e.exponent).abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_exponent_tracks_exact_sphere_sizes() {
        // (1/n)·log2 |S(x,D)| from binomial sums at n=16 sits within the
        // method-of-types window [E − log2(n+1)/n, E]
        let n = 16usize;
        let p = [0.5, 0.5];
        let binom = |k: usize| -> f64 { (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64) };
        let window = ((n + 1) as f64).log2() / n as f64;
        for r in 1..=7usize {
            let rate = (0..=r).map(binom).sum::<f64>().log2() / n as f64;
            let e = sphere_exponent(&p, &hamming(2), r as f64 / n as f64, 1e-12).unwrap().exponent;
            assert!(rate <= e + 1e-12 && rate >= e - window, "r={r}: {rate} vs {e}");
            // gaps measured: 0.082, 0.100, 0.106, 0.105, 0.099, 0.088, 0.071
            assert!(e - rate < 0.11);
        }
    }

    #[test]
    fn crossover_matches_half_entropy_root() {
        let root = crossover_root(&[0.5, 0.5], &hamming(2), 0.01, 0.49, 1e-10).unwrap();
        assert!((root - half_entropy_root()).abs() < 1e-6, "{root}");
        let rows = complexity_crossover(&[0.5, 0.5], &hamming(2), &[0.01, 0.05, 0.2, 0.45, 0.5]).unwrap();
        assert!(!rows[0].proposed_cheaper);
        assert!(!rows[1].proposed_cheaper);
        assert!(rows[2].proposed_cheaper);
        assert!(rows[4].proposed_cheaper);
        assert!((rows[3].rate - (1.0 - binary_entropy(0.45))).abs() < 1e-6);
    }

    #[test]
    fn min_lz_examples_and_dominance() {
        let h = DistortionSpec::hamming(2, 2).unwrap();
        let x = Block::parse_digits("0000000", 2).unwrap();
        let (bits, y) = min_lz_in_sphere(&x, Rational::from_integer(0), &h, LengthMode::Lz, 1 << 20).unwrap();
        assert_eq!(y, x);
        assert_eq!(bits, crate::lz78::lz_bits(&x, 2).unwrap());

        let t = UniversalTable::build(7, 2, LengthMode::Lz, 1 << 20).unwrap();
        let (bits, y) = min_lz_in_sphere(&x, Rational::from_integer(1), &h, LengthMode::Lz, 1 << 20).unwrap();
        assert_eq!(bits as u32, t.min_bits());
        assert_eq!(y.max_symbol(), Some(0));

        for n in [6usize, 8] {
            let t = UniversalTable::build(n, 2, LengthMode::Lz, 1 << 20).unwrap();
            for level in [Rational::new(0, 1), Rational::new(1, 8), Rational::new(1, 4), Rational::new(1, 2)] {
                for x in all_blocks(2, n, 1 << 20).unwrap() {
                    let (bits, _) = min_lz_in_sphere(&x, level, &h, LengthMode::Lz, 1 << 20).unwrap();
                    assert!(sphere_mass(&x, level, &h, &t).unwrap().is_dominated_by(bits as u32));
                }
            }
        }
        let empty = min_lz_in_sphere(&x, Rational::from_integer(-1), &h, LengthMode::Lz, 1 << 20);
        assert!(empty.is_err());
    }
}
