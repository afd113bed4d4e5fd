//! Seeded Monte Carlo and exhaustive experiments: codebook behaviour of the
//! random-coding scheme, the failure-probability decomposition, the covering
//! converse, and the LZ78 counting sequence.
//!
//! Every experiment is a pure function of its [`ExperimentConfig`]: trial
//! `t` uses codebook seed `seeds[t]`, or `derive_seed(master_seed, t)` when
//! no explicit list is given. Trials run in parallel on the ambient rayon
//! pool and are reduced in seed order.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{json, Value};

use crate::alphabet::{all_blocks, Alphabet, Block, DEFAULT_ENUMERATION_CAP};
use crate::codec::{
    codebook_constant, decode, encode_cached, CodebookStream, EncodedMessage, LazyCodebook, SamplerMode,
    DEFAULT_N_MAX,
};
use crate::converse::{
    covering_lower_bound, exhaustive_min_cover, greedy_cover, short_codeword_count, shortest_first_lengths,
    theorem1_bound, type_class_of,
};
use crate::distortion::{parse_rational, radius, DistortionConfig, DistortionSpec, Rational};
use crate::error::{precondition, Error, Result};
use crate::lz78::{lz_bits, lz_parse, LengthMode};
use crate::stats::{derive_seed, dkw_epsilon, wilson_interval, MeanVar};
use crate::universal::{sphere_mass, UniversalTable};

pub const SCHEMA_VERSION: u32 = 1;

/// Significance level for every statistical check.
pub const ALPHA: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Achievability,
    EnDecomposition,
    Converse,
    CountingSequence,
}

fn two() -> usize {
    2
}
fn one() -> usize {
    1
}
fn unit() -> f64 {
    1.0
}
fn default_a() -> f64 {
    3.0
}
fn default_n_max() -> u64 {
    DEFAULT_N_MAX
}

fn de_rational<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Rational, D::Error> {
    let v = Value::deserialize(d)?;
    let text = match &v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        _ => return Err(serde::de::Error::custom("D must be a number or a \"p/q\" string")),
    };
    parse_rational(&text).map_err(serde::de::Error::custom)
}

fn ser_rational<S: serde::Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

/// Experiment parameters as read from a JSON file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    #[serde(default)]
    pub n: Option<usize>,
    /// Block lengths for the decomposition experiment.
    #[serde(default)]
    pub n_grid: Vec<usize>,
    #[serde(rename = "J", default = "two")]
    pub source_size: usize,
    #[serde(rename = "K", default = "two")]
    pub repro_size: usize,
    #[serde(default = "one")]
    pub ell: usize,
    #[serde(rename = "D", deserialize_with = "de_rational", serialize_with = "ser_rational")]
    pub level: Rational,
    /// Distortion JSON; Hamming over `J × K` when absent. Relative paths
    /// resolve against the config file's directory.
    #[serde(default)]
    pub distortion_file: Option<PathBuf>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default = "unit")]
    pub epsilon: f64,
    #[serde(default = "unit")]
    pub one_minus_eps_n: f64,
    #[serde(rename = "A", default = "default_a")]
    pub a: f64,
    #[serde(rename = "N_max", default = "default_n_max")]
    pub n_max: u64,
    #[serde(default)]
    pub sampler: SamplerMode,
    #[serde(default)]
    pub length_mode: LengthMode,
    /// Source blocks to test; every block of `𝒳ⁿ` when absent.
    #[serde(default)]
    pub sources: Option<Vec<String>>,
    /// Block whose ℓ-th order type the converse experiment covers.
    #[serde(default)]
    pub type_of: Option<String>,
    /// Counting-sequence depth.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub enumeration_cap: Option<u64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_json(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(d) = cfg.distortion_file.as_mut() {
            if d.is_relative() {
                *d = base.join(&*d);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.trials == 0 && self.seeds.is_empty() {
            return Err(precondition("trials must be at least 1"));
        }
        if self.ell == 0 {
            return Err(precondition("ℓ must be positive"));
        }
        for n in self.n.iter().chain(&self.n_grid) {
            if n % self.ell != 0 {
                return Err(precondition(format!("ℓ={} must divide n={n}", self.ell)));
            }
        }
        if !(self.epsilon > 0.0) || !(self.one_minus_eps_n > 0.0) {
            return Err(precondition("ε and (1 − ε_n) must be positive"));
        }
        Ok(())
    }

    /// Codebook seeds, one per trial.
    pub fn seed_list(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.trials as u64).map(|t| derive_seed(self.master_seed, t)).collect()
        } else {
            self.seeds.clone()
        }
    }

    pub fn cap(&self) -> u64 {
        self.enumeration_cap.unwrap_or(DEFAULT_ENUMERATION_CAP)
    }

    fn block_length(&self) -> Result<usize> {
        self.n.ok_or_else(|| precondition("config needs n"))
    }

    /// The distortion and the alphabet used to render source blocks.
    pub fn distortion(&self) -> Result<(DistortionSpec, Alphabet)> {
        match &self.distortion_file {
            Some(path) => {
                let cfg = DistortionConfig::from_json(&std::fs::read_to_string(path)?)?;
                if cfg.spec.source_size() != self.source_size || cfg.spec.repro_size() != self.repro_size {
                    return Err(Error::AlphabetMismatch(format!(
                        "distortion file is {}×{}, config says J={} K={}",
                        cfg.spec.source_size(),
                        cfg.spec.repro_size(),
                        self.source_size,
                        self.repro_size
                    )));
                }
                Ok((cfg.spec, cfg.source))
            }
            None => Ok((
                DistortionSpec::hamming(self.source_size, self.repro_size)?,
                Alphabet::numeric(self.source_size)?,
            )),
        }
    }

    fn source_blocks(&self, n: usize, alphabet: &Alphabet) -> Result<Vec<Block>> {
        match &self.sources {
            Some(list) => list
                .iter()
                .map(|s| {
                    let b = alphabet.parse_block(s)?;
                    if b.len() != n {
                        return Err(Error::LengthMismatch { left: b.len(), right: n });
                    }
                    Ok(b)
                })
                .collect(),
            None => Ok(all_blocks(self.source_size, n, self.cap())?.collect()),
        }
    }

    fn stream(&self, n: usize, table: Option<&Arc<UniversalTable>>, seed: u64) -> Result<CodebookStream> {
        let stream = match (self.sampler, table) {
            (SamplerMode::ExactTable, Some(t)) => CodebookStream::exact(Arc::clone(t), seed, self.a, self.n_max)?,
            _ => CodebookStream::bitfeed(n, self.repro_size, seed, self.a, self.n_max)?,
        };
        Ok(stream.with_enumeration_cap(self.cap()))
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    Ok(match cfg.kind {
        ExperimentKind::Achievability => ExperimentReport::Achievability(achievability_experiment(cfg)?),
        ExperimentKind::EnDecomposition => ExperimentReport::EnDecomposition(en_decomposition_experiment(cfg)?),
        ExperimentKind::Converse => ExperimentReport::Converse(converse_experiment(cfg)?),
        ExperimentKind::CountingSequence => {
            let m = cfg.m.ok_or_else(|| precondition("counting_sequence config needs m"))?;
            ExperimentReport::CountingSequence(build_counting_sequence(m, cfg.repro_size, cfg.cap())?)
        }
    })
}

#[derive(Clone, Debug)]
pub enum ExperimentReport {
    Achievability(AchievabilityReport),
    EnDecomposition(EnDecompositionReport),
    Converse(ConverseExperimentReport),
    CountingSequence(CountingSequence),
}

impl ExperimentReport {
    pub fn to_json(&self) -> Value {
        let (kind, body) = match self {
            Self::Achievability(r) => ("achievability", serde_json::to_value(r)),
            Self::EnDecomposition(r) => ("en_decomposition", serde_json::to_value(r)),
            Self::Converse(r) => ("converse", Ok(r.to_json())),
            Self::CountingSequence(r) => ("counting_sequence", serde_json::to_value(r)),
        };
        json!({
            "schema_version": SCHEMA_VERSION,
            "kind": kind,
            "report": body.expect("reports serialize"),
        })
    }

    /// Tabular view with a leading `# schema_version=` comment line.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# schema_version={SCHEMA_VERSION}\n");
        match self {
            Self::Achievability(r) => {
                out.push_str(
                    "block,sphere_mass,minus_log2_mass,mean_log2_index,se_log2_index,mean_ok,\
                     dkw_distance,dkw_ok,mean_theoretical_bits,mean_actual_bits,length_bound_bits,\
                     length_violation_fraction,escapes\n",
                );
                for s in &r.sources {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                        s.block,
                        s.sphere_mass,
                        s.minus_log2_mass,
                        s.mean_log2_index,
                        s.se_log2_index,
                        s.mean_ok,
                        s.dkw_distance,
                        s.dkw_ok,
                        s.mean_theoretical_bits,
                        s.mean_actual_bits,
                        s.length_bound_bits,
                        s.length_violation_fraction,
                        s.escapes
                    );
                }
            }
            Self::EnDecomposition(r) => {
                out.push_str("n,draw_cap,term1,term1_ci_low,term1_ci_high,term2,term2_se\n");
                for p in &r.points {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{}",
                        p.n, p.draw_cap, p.term1, p.term1_ci_low, p.term1_ci_high, p.term2, p.term2_se
                    );
                }
            }
            Self::Converse(r) => {
                out.push_str("codeword,length_bits,meets_bound\n");
                for (i, (w, l)) in r.codebook.iter().zip(&r.lengths).enumerate() {
                    let _ = writeln!(out, "{w},{l},{}", r.meets_bound[i]);
                }
            }
            Self::CountingSequence(c) => {
                out.push_str("m,K,n,c,lz_bits,measured_epsilon\n");
                let _ = writeln!(out, "{},{},{},{},{},{}", c.m, c.k, c.n, c.c, c.lz_bits, c.measured_epsilon);
            }
        }
        out
    }
}

// ------------------------------------------------------------ achievability

#[derive(Clone, Debug, Serialize)]
pub struct SourceRow {
    pub block: String,
    pub sphere_mass: f64,
    pub minus_log2_mass: f64,
    pub mean_log2_index: f64,
    pub se_log2_index: f64,
    /// `mean log2 I ≤ −log2 U[S] + 3σ`.
    pub mean_ok: bool,
    /// Sup distance between the empirical `Pr{I > N}` and `(1 − U[S])^N`.
    pub dkw_distance: f64,
    pub dkw_ok: bool,
    pub mean_theoretical_bits: f64,
    pub mean_actual_bits: f64,
    /// `−log2 U[S] + (2+ε)·log2 n + c`.
    pub length_bound_bits: f64,
    /// Share of trials whose length exceeds the bound.
    pub length_violation_fraction: f64,
    pub escapes: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AchievabilityReport {
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "D")]
    pub level: String,
    #[serde(rename = "A")]
    pub a: f64,
    pub c: f64,
    pub epsilon: f64,
    pub trials: usize,
    pub dkw_epsilon: f64,
    pub sources: Vec<SourceRow>,
    pub fraction_mean_ok: f64,
    pub fraction_dkw_ok: f64,
    /// Sources whose mean length exceeds `−log2 U[S] + (2+ε)·log2 n + c`.
    pub fraction_sources_over_length_bound: f64,
    pub roundtrips: u64,
    pub roundtrip_failures: u64,
    pub escapes: u64,
}

/// Per-trial outcome for one source.
#[derive(Clone, Copy)]
struct Outcome {
    index: Option<u64>,
    theoretical_bits: f64,
    actual_bits: usize,
    faithful: bool,
}

pub fn achievability_experiment(cfg: &ExperimentConfig) -> Result<AchievabilityReport> {
    let n = cfg.block_length()?;
    let (spec, alphabet) = cfg.distortion()?;
    let k = cfg.repro_size;
    let table = Arc::new(UniversalTable::build(n, k, cfg.length_mode, cfg.cap())?);
    let sources = cfg.source_blocks(n, &alphabet)?;
    let seeds = cfg.seed_list();
    let r = radius(n, cfg.level);

    // trials[t][s]: outcome of source s under seed t
    let trials: Vec<Vec<Outcome>> = seeds
        .par_iter()
        .map(|&seed| {
            let stream = cfg.stream(n, Some(&table), seed)?;
            let mut book = LazyCodebook::new(&stream);
            sources
                .iter()
                .map(|x| {
                    let msg = encode_cached(x, cfg.level, &spec, &stream, &mut book)?;
                    let parsed = EncodedMessage::from_bits(&msg.to_bits(), n, k, cfg.a)?;
                    let y = decode(&parsed, &stream)?;
                    Ok(Outcome {
                        index: msg.index,
                        theoretical_bits: msg.theoretical_length_bits,
                        actual_bits: msg.total_bits(),
                        faithful: spec.within(x.symbols(), y.symbols(), &r),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let m = seeds.len() as u64;
    let band = dkw_epsilon(m, ALPHA);
    let c = codebook_constant(cfg.a);
    let log_n = (n as f64).log2();
    let rows: Vec<SourceRow> = sources
        .par_iter()
        .enumerate()
        .map(|(s, x)| {
            let mass = sphere_mass(x, cfg.level, &spec, &table)?;
            let p = mass.mass_f64();
            let minus_log2_mass = mass.neg_log2();
            let outcomes: Vec<Outcome> = trials.iter().map(|t| t[s]).collect();
            let log_i: MeanVar = outcomes.iter().filter_map(|o| o.index).map(|i| (i as f64).log2()).collect();
            let bound = minus_log2_mass + (2.0 + cfg.epsilon) * log_n + c;
            let lengths: MeanVar = outcomes.iter().map(|o| o.theoretical_bits).collect();
            let actual: MeanVar = outcomes.iter().map(|o| o.actual_bits as f64).collect();
            let over = outcomes.iter().filter(|o| o.theoretical_bits > bound).count();
            let dkw_distance = survival_distance(&outcomes, p);
            Ok(SourceRow {
                block: alphabet.render(x),
                sphere_mass: p,
                minus_log2_mass,
                mean_log2_index: log_i.mean,
                se_log2_index: log_i.std_error(),
                mean_ok: log_i.mean <= minus_log2_mass + 3.0 * log_i.std_error(),
                dkw_distance,
                dkw_ok: dkw_distance <= band,
                mean_theoretical_bits: lengths.mean,
                mean_actual_bits: actual.mean,
                length_bound_bits: bound,
                length_violation_fraction: over as f64 / m as f64,
                escapes: outcomes.iter().filter(|o| o.index.is_none()).count() as u64,
            })
        })
        .collect::<Result<_>>()?;

    let count = rows.len() as f64;
    let share = |f: &dyn Fn(&SourceRow) -> bool| rows.iter().filter(|r| f(r)).count() as f64 / count;
    let roundtrip_failures = trials.iter().flatten().filter(|o| !o.faithful).count() as u64;
    Ok(AchievabilityReport {
        n,
        k,
        level: cfg.level.to_string(),
        a: cfg.a,
        c,
        epsilon: cfg.epsilon,
        trials: seeds.len(),
        dkw_epsilon: band,
        fraction_mean_ok: share(&|r| r.mean_ok),
        fraction_dkw_ok: share(&|r| r.dkw_ok),
        fraction_sources_over_length_bound: share(&|r| r.mean_theoretical_bits > r.length_bound_bits),
        roundtrips: (rows.len() * seeds.len()) as u64,
        roundtrip_failures,
        escapes: rows.iter().map(|r| r.escapes).sum(),
        sources: rows,
    })
}

/// `sup_N |#{I > N}/m − (1 − p)^N|`; escapes count as indices beyond every
/// observed `N`.
fn survival_distance(outcomes: &[Outcome], p: f64) -> f64 {
    let m = outcomes.len() as f64;
    let mut idx: Vec<u64> = outcomes.iter().map(|o| o.index.unwrap_or(u64::MAX)).collect();
    idx.sort_unstable();
    let top = idx.iter().copied().filter(|&i| i != u64::MAX).max().unwrap_or(0);
    (0..=top)
        .map(|big_n| {
            let above = (idx.len() - idx.partition_point(|&i| i <= big_n)) as f64 / m;
            (above - (1.0 - p).powf(big_n as f64)).abs()
        })
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------- decomposition

#[derive(Clone, Debug, Serialize)]
pub struct EnPoint {
    pub n: usize,
    pub draw_cap: u64,
    /// Share of codebooks leaving some source uncovered within the cap.
    pub term1: f64,
    pub term1_ci_low: f64,
    pub term1_ci_high: f64,
    /// Mean over codebooks of `max_x [L(x) − L⁺(x) − (1+ε)·log2 n]₊`.
    pub term2: f64,
    pub term2_se: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnDecompositionReport {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "D")]
    pub level: String,
    pub epsilon: f64,
    pub trials: usize,
    pub points: Vec<EnPoint>,
}

pub fn en_decomposition_experiment(cfg: &ExperimentConfig) -> Result<EnDecompositionReport> {
    let grid = if cfg.n_grid.is_empty() {
        vec![cfg.block_length()?]
    } else {
        cfg.n_grid.clone()
    };
    let (spec, alphabet) = cfg.distortion()?;
    let seeds = cfg.seed_list();
    let c = codebook_constant(cfg.a);
    let mut points = Vec::new();
    for &n in &grid {
        let table = Arc::new(UniversalTable::build(n, cfg.repro_size, cfg.length_mode, cfg.cap())?);
        let sources = cfg.source_blocks(n, &alphabet)?;
        let r = radius(n, cfg.level);
        // L⁺(x) − (1+ε)·log2 n, fixed per source
        let offsets: Vec<f64> = sources
            .iter()
            .map(|x| {
                let lplus = sphere_mass(x, cfg.level, &spec, &table)?.neg_log2() + (n as f64).log2() + c;
                Ok(lplus + (1.0 + cfg.epsilon) * (n as f64).log2())
            })
            .collect::<Result<_>>()?;
        let log_norm = (n as f64 * cfg.a.ln() + 1.0).log2();
        let per_seed: Vec<(bool, f64)> = seeds
            .par_iter()
            .map(|&seed| {
                let stream = cfg.stream(n, Some(&table), seed)?;
                let cap = stream.draw_cap();
                let mut book = LazyCodebook::new(&stream);
                let mut uncovered = false;
                let mut worst = 0.0f64;
                for (x, off) in sources.iter().zip(&offsets) {
                    match book.first_hit(x.symbols(), &r, &spec, cap) {
                        Some(i) => worst = worst.max((i as f64).log2() + log_norm - off),
                        None => uncovered = true,
                    }
                }
                Ok((uncovered, worst))
            })
            .collect::<Result<_>>()?;
        let hits = per_seed.iter().filter(|(u, _)| *u).count() as u64;
        let (lo, hi) = wilson_interval(hits, seeds.len() as u64, 1.0 - ALPHA);
        let term2: MeanVar = per_seed.iter().map(|&(_, w)| w).collect();
        let draw_cap = cfg.stream(n, Some(&table), 0)?.draw_cap();
        points.push(EnPoint {
            n,
            draw_cap,
            term1: hits as f64 / seeds.len() as f64,
            term1_ci_low: lo,
            term1_ci_high: hi,
            term2: term2.mean,
            term2_se: term2.std_error(),
        });
    }
    Ok(EnDecompositionReport {
        a: cfg.a,
        level: cfg.level.to_string(),
        epsilon: cfg.epsilon,
        trials: seeds.len(),
        points,
    })
}

// ------------------------------------------------------------------ converse

#[derive(Clone, Debug)]
pub struct ConverseExperimentReport {
    pub bound: crate::converse::ConverseBoundReport,
    pub m_greedy: usize,
    pub codebook: Vec<String>,
    /// Shortest-first lengths assigned to the greedy codebook.
    pub lengths: Vec<u32>,
    /// `log2 M₀ − ε·log2 n`.
    pub threshold_bits: f64,
    pub meets_bound: Vec<bool>,
    pub fraction_meeting_bound: f64,
    /// `1 − 2n^{−ε}`.
    pub required_fraction: f64,
    /// Codewords no longer than `log2 M − ε·log2 n`, and the bound on them.
    pub short_codewords: u64,
    pub short_codeword_bound: u64,
    /// Exhaustive minimal cover size (n ≤ 5, up to 4 codewords).
    pub exhaustive_min_cover: Option<usize>,
    pub min_cover_respects_m0: bool,
}

impl ConverseExperimentReport {
    pub fn fraction_ok(&self) -> bool {
        self.fraction_meeting_bound >= self.required_fraction
    }

    pub fn to_json(&self) -> Value {
        let mut v = self.bound.to_json();
        let obj = v.as_object_mut().expect("object");
        obj.insert("M_greedy".into(), json!(self.m_greedy));
        obj.insert("codebook".into(), json!(self.codebook));
        obj.insert("lengths".into(), json!(self.lengths));
        obj.insert("threshold_bits".into(), json!(self.threshold_bits));
        obj.insert("fraction_meeting_bound".into(), json!(self.fraction_meeting_bound));
        obj.insert("required_fraction".into(), json!(self.required_fraction));
        obj.insert("fraction_ok".into(), json!(self.fraction_ok()));
        obj.insert("short_codewords".into(), json!(self.short_codewords));
        obj.insert("short_codeword_bound".into(), json!(self.short_codeword_bound));
        obj.insert("exhaustive_min_cover".into(), json!(self.exhaustive_min_cover));
        obj.insert("min_cover_respects_M0".into(), json!(self.min_cover_respects_m0));
        v
    }
}

pub fn converse_experiment(cfg: &ExperimentConfig) -> Result<ConverseExperimentReport> {
    let n = cfg.block_length()?;
    let (spec, alphabet) = cfg.distortion()?;
    spec.require_joint_type()?;
    let x = match &cfg.type_of {
        Some(s) => alphabet.parse_block(s)?,
        None => balanced_block(n, cfg.source_size),
    };
    if x.len() != n {
        return Err(Error::LengthMismatch { left: x.len(), right: n });
    }
    let cap = cfg.cap();
    let table = UniversalTable::build(n, cfg.repro_size, cfg.length_mode, cap)?;
    let bound = theorem1_bound(&x, cfg.level, &spec, cfg.ell, cfg.epsilon, &table, cfg.one_minus_eps_n, cap)?;
    let class = type_class_of(&x, cfg.ell, cfg.source_size, cap)?;
    let cover = greedy_cover(&class, cfg.level, &spec, cap)?;
    let m = cover.size() as u64;
    let lengths = shortest_first_lengths(m);
    let m0 = bound.covering.m0_f64();
    let threshold_bits = m0.log2() - cfg.epsilon * (n as f64).log2();
    let meets_bound: Vec<bool> = lengths.iter().map(|&l| l as f64 >= threshold_bits).collect();
    let fraction_meeting_bound = meets_bound.iter().filter(|&&b| b).count() as f64 / m as f64;
    let short = short_codeword_count(m, n, cfg.epsilon)?;
    let short_codewords = lengths.iter().filter(|&&l| l as f64 <= short.threshold_bits).count() as u64;
    let exhaustive = if n <= 5 {
        exhaustive_min_cover(&class, cfg.level, &spec, 4, cap)?
    } else {
        None
    };
    let m0_ceil = covering_lower_bound(&class, cfg.level, &spec, cap)?.m0_ceil();
    Ok(ConverseExperimentReport {
        m_greedy: cover.size(),
        codebook: cover.codebook.iter().map(|b| b.symbols().iter().map(|s| s.to_string()).collect()).collect(),
        lengths,
        threshold_bits,
        meets_bound,
        fraction_meeting_bound,
        required_fraction: short.fraction,
        short_codewords,
        short_codeword_bound: short.integer_bound,
        exhaustive_min_cover: exhaustive,
        min_cover_respects_m0: match (exhaustive, m0_ceil) {
            (Some(best), Some(m0)) => best as u64 >= m0,
            _ => true,
        } && m0_ceil.is_none_or(|m0| m >= m0),
        bound,
    })
}

/// Block with symbol counts as equal as possible, in sorted order.
fn balanced_block(n: usize, size: usize) -> Block {
    let symbols = (0..n).map(|i| (i * size / n) as u8).collect();
    Block::new(symbols, size).expect("symbols below size")
}

// ------------------------------------------------------- counting sequence

#[derive(Clone, Debug, Serialize)]
pub struct CountingSequence {
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    /// Digits of `u(1)u(2)…u(m)`.
    pub block: String,
    pub n: usize,
    pub c: usize,
    pub lz_bits: u64,
    /// `LZ_bits / (n·log2 K) − 1`.
    pub measured_epsilon: f64,
    pub closed_form_n: u128,
    pub closed_form_c: u128,
    pub phrases_match_words: bool,
}

/// `n = K/(K−1)²·[m·K^{m+1} − (m+1)·K^m + 1]`.
pub fn counting_sequence_length(m: usize, k: usize) -> u128 {
    let (m, k) = (m as u128, k as u128);
    k * (m * k.pow(m as u32 + 1) + 1 - (m + 1) * k.pow(m as u32)) / ((k - 1) * (k - 1))
}

/// `c = (K^{m+1} − K)/(K − 1)`.
pub fn counting_sequence_phrases(m: usize, k: usize) -> u128 {
    let k = k as u128;
    (k.pow(m as u32 + 1) - k) / (k - 1)
}

/// Concatenation of every K-ary word of length 1, 2, …, m in lexicographic
/// order, with its LZ78 parse checked against the word list.
pub fn build_counting_sequence(m: usize, k: usize, cap: u64) -> Result<CountingSequence> {
    if m == 0 || k < 2 {
        return Err(precondition("need m ≥ 1 and K ≥ 2"));
    }
    let n = (1..=m)
        .try_fold(0u128, |acc, i| (k as u128).checked_pow(i as u32).map(|w| acc + i as u128 * w))
        .filter(|&n| n <= cap as u128)
        .ok_or(Error::EnumerationInfeasible {
            states: counting_sequence_length(m.min(20), k),
            cap,
        })? as usize;
    let mut words: Vec<Vec<u8>> = Vec::new();
    for len in 1..=m {
        for w in all_blocks(k, len, cap)? {
            words.push(w.symbols().to_vec());
        }
    }
    let block = Block::new(words.concat(), k)?;
    let parse = lz_parse(&block, k)?;
    let bits = lz_bits(&block, k)?;
    Ok(CountingSequence {
        m,
        k,
        block: block.symbols().iter().map(|s| std::char::from_digit(*s as u32, 36).unwrap_or('?')).collect(),
        n,
        c: parse.c(),
        lz_bits: bits,
        measured_epsilon: bits as f64 / (n as f64 * (k as f64).log2()) - 1.0,
        closed_form_n: counting_sequence_length(m, k),
        closed_form_c: counting_sequence_phrases(m, k),
        phrases_match_words: parse.phrase_strings() == words,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(text).unwrap()
    }

    #[test]
    fn counting_sequence_examples() {
        let c = build_counting_sequence(2, 2, 1 << 20).unwrap();
        assert_eq!((c.n, c.c), (10, 6));
        assert_eq!(c.block, "0100011011");
        let c = build_counting_sequence(1, 2, 1 << 20).unwrap();
        assert_eq!((c.block.as_str(), c.n, c.c), ("01", 2, 2));
        for m in 1..=4 {
            let c = build_counting_sequence(m, 2, 1 << 20).unwrap();
            assert!(c.phrases_match_words);
            assert_eq!(c.n as u128, c.closed_form_n);
            assert_eq!(c.c as u128, c.closed_form_c);
        }
        for (m, k) in [(3usize, 3usize), (2, 4), (5, 2)] {
            let c = build_counting_sequence(m, k, 1 << 20).unwrap();
            assert!(c.phrases_match_words);
            assert_eq!((c.n as u128, c.c as u128), (c.closed_form_n, c.closed_form_c));
        }
        assert!(build_counting_sequence(30, 2, 1 << 20).is_err());
    }

    #[test]
    fn counting_sequence_lengths_sum_of_word_lengths() {
        for k in 2..=5usize {
            for m in 1..=6usize {
                let direct: u128 = (1..=m).map(|i| i as u128 * (k as u128).pow(i as u32)).sum();
                assert_eq!(counting_sequence_length(m, k), direct);
                let phrases: u128 = (1..=m).map(|i| (k as u128).pow(i as u32)).sum();
                assert_eq!(counting_sequence_phrases(m, k), phrases);
            }
        }
    }

    #[test]
    fn config_parsing() {
        let c = cfg(r#"{"schema_version":1,"kind":"achievability","n":4,"D":"1/4","trials":3,"master_seed":5}"#);
        assert_eq!(c.level, Rational::new(1, 4));
        assert_eq!(c.seed_list().len(), 3);
        assert_eq!(c.sampler, SamplerMode::ExactTable);
        let c = cfg(r#"{"schema_version":1,"kind":"converse","n":6,"D":0.25,"seeds":[1,2]}"#);
        assert_eq!(c.level, Rational::new(1, 4));
        assert_eq!(c.seed_list(), vec![1, 2]);
        assert!(ExperimentConfig::from_json(r#"{"schema_version":2,"kind":"converse","D":0}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"schema_version":1,"kind":"converse","D":0,"n":5,"ell":2}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"schema_version":1,"kind":"converse","D":0,"bogus":1}"#).is_err());
    }

    #[test]
    fn achievability_full_sphere_and_determinism() {
        let full = cfg(r#"{"schema_version":1,"kind":"achievability","n":4,"D":1,"trials":5}"#);
        let r = achievability_experiment(&full).unwrap();
        assert!(r.sources.iter().all(|s| s.mean_log2_index == 0.0 && s.mean_actual_bits == 2.0));
        assert_eq!(r.roundtrip_failures, 0);

        let c = cfg(r#"{"schema_version":1,"kind":"achievability","n":6,"D":"1/6","trials":1,"master_seed":9}"#);
        let a = run_experiment(&c).unwrap().to_json();
        let b = run_experiment(&c).unwrap().to_json();
        assert_eq!(a, b);
        assert_eq!(a["schema_version"], 1);
    }

    #[test]
    fn achievability_small_n_statistics() {
        let c = cfg(r#"{"schema_version":1,"kind":"achievability","n":6,"D":"1/6","trials":300,"master_seed":3}"#);
        let r = achievability_experiment(&c).unwrap();
        assert_eq!(r.sources.len(), 64);
        assert_eq!(r.roundtrip_failures, 0);
        assert!(r.fraction_mean_ok == 1.0);
        assert!(r.fraction_dkw_ok >= 0.95);
        assert!(serde_json::to_value(&r).unwrap().is_object());
        assert!(ExperimentReport::Achievability(r).to_csv().lines().count() == 66);
    }

    #[test]
    fn en_decomposition_full_sphere_has_no_failures() {
        let c = cfg(r#"{"schema_version":1,"kind":"en_decomposition","n_grid":[4,6],"D":1,"trials":20,"N_max":1000000000}"#);
        let r = en_decomposition_experiment(&c).unwrap();
        for p in &r.points {
            assert_eq!(p.term1, 0.0);
            assert!(p.term2 >= 0.0);
        }
    }

    #[test]
    fn converse_examples() {
        let c = cfg(r#"{"schema_version":1,"kind":"converse","n":6,"D":"1/6","type_of":"000111"}"#);
        let r = converse_experiment(&c).unwrap();
        assert!(r.fraction_ok());
        assert!(r.fraction_meeting_bound >= 1.0 - 2.0 / 6.0);
        assert!(r.m_greedy as f64 >= r.bound.covering.m0_f64());
        assert!(r.short_codewords <= r.short_codeword_bound);

        let full = cfg(r#"{"schema_version":1,"kind":"converse","n":4,"D":1}"#);
        let r = converse_experiment(&full).unwrap();
        assert_eq!(r.m_greedy, 1);
        assert_eq!(r.fraction_meeting_bound, 1.0);

        let zero = cfg(r#"{"schema_version":1,"kind":"converse","n":5,"D":0,"type_of":"00011"}"#);
        let r = converse_experiment(&zero).unwrap();
        assert_eq!(r.m_greedy, 10);
        assert_eq!(r.bound.covering.m0_ceil(), Some(10));
        assert!(r.min_cover_respects_m0);
        assert!(r.short_codewords <= r.short_codeword_bound);
        let v = ExperimentReport::Converse(r).to_json();
        assert_eq!(v["report"]["M_greedy"], 10);
    }
}
