use std::fs;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use unirdc::alphabet::{Alphabet, Block, DEFAULT_ENUMERATION_CAP};
use unirdc::codec::{
    decode, encode_cached, read_container, write_container, CodebookStream, ContainerHeader, LazyCodebook,
    SamplerMode, DEFAULT_N_MAX,
};
use unirdc::converse::{greedy_cover, theorem1_bound, type_class_of};
use unirdc::distortion::{parse_rational, DistortionConfig, DistortionSpec, Rational};
use unirdc::empirical::empirical_distribution;
use unirdc::experiments::{build_counting_sequence, run_experiment, ExperimentConfig};
use unirdc::lz78::{length_bits, lz_parse, LengthMode};
use unirdc::reference::{blahut_arimoto, sphere_exponent};
use unirdc::universal::{estimate_sphere_mass, sample_bitfeed, sample_exact, sphere_mass, UniversalTable};
use unirdc::{Error, Result};

const EXIT_DOMAIN: u8 = 1;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "unirdc", version, about = "Universal lossy coding with LZ78-weighted random codebooks")]
struct Cli {
    /// Worker threads for parallel sections (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Enumeration cap; overrides UNIRDC_CAP.
    #[arg(long, global = true)]
    cap: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// LZ78 phrase count and code length of each input line.
    LzLength {
        #[arg(long)]
        alphabet: String,
        #[arg(long = "in")]
        input: Option<PathBuf>,
    },
    /// Draw blocks from the universal measure.
    Sample {
        #[arg(long)]
        alphabet: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Sampler::Exact)]
        sampler: Sampler,
        #[arg(long, value_enum, default_value_t = Mode::Lz)]
        mode: Mode,
    },
    /// Encode one block per input line into a binary container.
    Encode {
        #[command(flatten)]
        dist: DistArgs,
        #[arg(long = "D")]
        level: String,
        #[command(flatten)]
        code: CodeArgs,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decode a container back to blocks, one per line.
    Decode {
        #[command(flatten)]
        dist: DistArgs,
        /// Overrides the seed stored in the container.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "A", default_value_t = 3.0)]
        a: f64,
        #[arg(long = "N-max", default_value_t = DEFAULT_N_MAX)]
        n_max: u64,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// Original blocks; prints a distortion report on stderr and fails on violation.
        #[arg(long)]
        check: Option<PathBuf>,
    },
    /// Exact universal mass of a D-sphere.
    SphereMass {
        #[command(flatten)]
        dist: DistArgs,
        #[arg(long = "D")]
        level: String,
        #[arg(long)]
        block: String,
        #[arg(long, value_enum, default_value_t = Mode::Lz)]
        mode: Mode,
        /// Also estimate the mass with this many bit-feed draws.
        #[arg(long)]
        estimate: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// R(D) and sphere exponent E(D) over a grid, as CSV.
    RdCurve {
        #[command(flatten)]
        dist: DistArgs,
        /// lo:hi:step, each a decimal or p/q.
        #[arg(long)]
        grid: String,
        /// Source distribution, comma separated; uniform by default.
        #[arg(long)]
        p: Option<String>,
        /// Take P from this block and fill the last column.
        #[arg(long)]
        block: Option<String>,
    },
    /// Covering bound, greedy cover and converse constants for a type class.
    ConverseCheck {
        #[command(flatten)]
        dist: DistArgs,
        #[arg(long = "D")]
        level: String,
        #[arg(long)]
        block: String,
        #[arg(long, default_value_t = 1)]
        ell: usize,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        #[arg(long = "one-minus-eps", default_value_t = 1.0)]
        one_minus_eps: f64,
        #[arg(long, value_enum, default_value_t = Mode::Lz)]
        mode: Mode,
    },
    /// Run an experiment described by a config JSON.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Output file; the config's `output` or stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the K-ary counting sequence of depth m.
    CountingSeq {
        #[arg(long)]
        m: usize,
        #[arg(long = "K", default_value_t = 2)]
        k: usize,
    },
}

#[derive(Args)]
struct DistArgs {
    /// Source alphabet characters; ignored when --dist is a file.
    #[arg(long, default_value = "01")]
    alphabet: String,
    /// Reproduction alphabet; the source alphabet by default.
    #[arg(long)]
    repro_alphabet: Option<String>,
    /// `hamming`, `squared_disagreement`, or a distortion JSON file.
    #[arg(long, default_value = "hamming")]
    dist: String,
}

#[derive(Args)]
struct CodeArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "A", default_value_t = 3.0)]
    a: f64,
    #[arg(long = "N-max", default_value_t = DEFAULT_N_MAX)]
    n_max: u64,
    #[arg(long, value_enum, default_value_t = Sampler::Exact)]
    sampler: Sampler,
    #[arg(long, value_enum, default_value_t = Mode::Lz)]
    mode: Mode,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sampler {
    Exact,
    Bitfeed,
}

impl From<Sampler> for SamplerMode {
    fn from(s: Sampler) -> Self {
        match s {
            Sampler::Exact => SamplerMode::ExactTable,
            Sampler::Bitfeed => SamplerMode::Bitfeed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Lz,
    LzPrime,
}

impl From<Mode> for LengthMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Lz => LengthMode::Lz,
            Mode::LzPrime => LengthMode::LzPrime,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()
        .map_err(|e| Error::Precondition(format!("cannot start worker pool: {e}")))
        .and_then(|_| run(&cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = json!({"error": {"kind": e.kind(), "message": e.to_string()}});
            eprintln!("{report}");
            ExitCode::from(if e.is_precondition() { EXIT_DOMAIN } else { EXIT_RUNTIME })
        }
    }
}

fn enumeration_cap(cli: &Cli) -> Result<u64> {
    if let Some(c) = cli.cap {
        return Ok(c);
    }
    match std::env::var("UNIRDC_CAP") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Precondition(format!("UNIRDC_CAP={v:?} is not a non-negative integer"))),
        Err(_) => Ok(DEFAULT_ENUMERATION_CAP),
    }
}

fn read_input(path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) => Ok(fs::read_to_string(p)?),
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s)?;
            Ok(s)
        }
    }
}

fn read_bytes(path: Option<&Path>) -> Result<Vec<u8>> {
    match path {
        Some(p) => Ok(fs::read(p)?),
        None => {
            let mut b = Vec::new();
            io::stdin().read_to_end(&mut b)?;
            Ok(b)
        }
    }
}

struct Problem {
    spec: DistortionSpec,
    source: Alphabet,
    repro: Alphabet,
}

impl DistArgs {
    fn load(&self) -> Result<Problem> {
        let named = |spec: fn(usize, usize) -> Result<DistortionSpec>| -> Result<Problem> {
            let source = Alphabet::new(&self.alphabet)?;
            let repro = Alphabet::new(self.repro_alphabet.as_deref().unwrap_or(&self.alphabet))?;
            Ok(Problem {
                spec: spec(source.size(), repro.size())?,
                source,
                repro,
            })
        };
        match self.dist.as_str() {
            "hamming" => named(DistortionSpec::hamming),
            "squared_disagreement" => named(DistortionSpec::squared_disagreement),
            path => {
                let cfg = DistortionConfig::from_json(&fs::read_to_string(path)?)?;
                Ok(Problem {
                    spec: cfg.spec,
                    source: cfg.source,
                    repro: cfg.repro,
                })
            }
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cap = enumeration_cap(cli)?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    match &cli.command {
        Command::LzLength { alphabet, input } => {
            let alphabet = Alphabet::new(alphabet)?;
            let k = alphabet.size();
            writeln!(out, "block,c,bits,lz_prime_bits")?;
            for b in alphabet.parse_blocks(&read_input(input.as_deref())?)? {
                let c = lz_parse(&b, k)?.c();
                let bits = length_bits(&b, k, LengthMode::Lz)?;
                let prime = length_bits(&b, k, LengthMode::LzPrime)?;
                writeln!(out, "{},{c},{bits},{prime}", alphabet.render(&b))?;
            }
        }
        Command::Sample {
            alphabet,
            n,
            count,
            seed,
            sampler,
            mode,
        } => {
            let alphabet = Alphabet::new(alphabet)?;
            let blocks = match sampler {
                Sampler::Exact => {
                    let table = UniversalTable::build(*n, alphabet.size(), (*mode).into(), cap)?;
                    sample_exact(&table, *seed, *count)
                }
                Sampler::Bitfeed => sample_bitfeed(*n, alphabet.size(), *seed, *count),
            };
            for b in &blocks {
                writeln!(out, "{}", alphabet.render(b))?;
            }
        }
        Command::Encode {
            dist,
            level,
            code,
            input,
            out: path,
        } => {
            let problem = dist.load()?;
            let level = parse_rational(level)?;
            let blocks = problem.source.parse_blocks(&read_input(input.as_deref())?)?;
            let n = match blocks.first() {
                Some(b) => b.len(),
                None => return Err(Error::Precondition("no input blocks".into())),
            };
            if let Some(b) = blocks.iter().find(|b| b.len() != n) {
                return Err(Error::LengthMismatch { left: b.len(), right: n });
            }
            let k = problem.spec.repro_size();
            let header = ContainerHeader {
                n,
                alphabet_size: k,
                sampler_mode: code.sampler.into(),
                length_mode: code.mode.into(),
                seed: code.seed,
                level,
            };
            header.to_bytes()?;
            let stream = CodebookStream::new(
                code.sampler.into(),
                n,
                k,
                code.mode.into(),
                code.seed,
                code.a,
                code.n_max,
                cap,
            )?;
            let mut book = LazyCodebook::new(&stream);
            let mut messages = Vec::with_capacity(blocks.len());
            for (i, x) in blocks.iter().enumerate() {
                let msg = encode_cached(x, level, &problem.spec, &stream, &mut book)?;
                log::info!("block {}: {} bits", i + 1, msg.total_bits());
                messages.push(msg);
            }
            let total: usize = messages.iter().map(|m| m.total_bits()).sum();
            let escapes = messages.iter().filter(|m| m.escape).count();
            eprintln!(
                "{}",
                json!({"blocks": blocks.len(), "n": n, "total_bits": total, "escapes": escapes})
            );
            match path {
                Some(p) => write_container(BufWriter::new(fs::File::create(p)?), &header, &messages)?,
                None => write_container(&mut out, &header, &messages)?,
            }
        }
        Command::Decode {
            dist,
            seed,
            a,
            n_max,
            input,
            check,
        } => {
            let problem = dist.load()?;
            let (header, messages) = read_container(&read_bytes(input.as_deref())?[..], *a)?;
            if header.alphabet_size != problem.repro.size() {
                return Err(Error::AlphabetMismatch(format!(
                    "container has K={}, reproduction alphabet has {} symbols",
                    header.alphabet_size,
                    problem.repro.size()
                )));
            }
            let seed = match seed {
                Some(s) if *s != header.seed => {
                    log::warn!("overriding container seed {} with {s}", header.seed);
                    *s
                }
                _ => header.seed,
            };
            let stream = CodebookStream::new(
                header.sampler_mode,
                header.n,
                header.alphabet_size,
                header.length_mode,
                seed,
                *a,
                *n_max,
                cap,
            )?;
            let decoded = messages.iter().map(|m| decode(m, &stream)).collect::<Result<Vec<Block>>>()?;
            for y in &decoded {
                writeln!(out, "{}", problem.repro.render(y))?;
            }
            out.flush()?;
            if let Some(path) = check {
                let originals = problem.source.parse_blocks(&fs::read_to_string(path)?)?;
                if originals.len() != decoded.len() {
                    return Err(Error::LengthMismatch {
                        left: originals.len(),
                        right: decoded.len(),
                    });
                }
                let bound = unirdc::distortion::radius(header.n, header.level);
                let mut worst = Rational::from_integer(0);
                for (x, y) in originals.iter().zip(&decoded) {
                    worst = worst.max(problem.spec.distortion(x, y)?);
                }
                let ok = worst <= bound;
                eprintln!(
                    "{}",
                    json!({"blocks": decoded.len(), "max_distortion": worst.to_string(),
                           "allowed": bound.to_string(), "within": ok})
                );
                if !ok {
                    return Err(Error::Precondition(format!(
                        "decoded block exceeds the allowed distortion {bound} (worst {worst})"
                    )));
                }
            }
        }
        Command::SphereMass {
            dist,
            level,
            block,
            mode,
            estimate,
            seed,
        } => {
            let problem = dist.load()?;
            let level = parse_rational(level)?;
            let x = problem.source.parse_block(block)?;
            let table = UniversalTable::build(x.len(), problem.spec.repro_size(), (*mode).into(), cap)?;
            let m = sphere_mass(&x, level, &problem.spec, &table)?;
            let mut v = json!({
                "block": block,
                "n": x.len(),
                "D": level.to_string(),
                "mass": m.mass.to_string(),
                "mass_value": m.mass_f64(),
                "minus_log2_mass": finite(m.neg_log2()),
                "sphere_size": m.sphere_size,
                "min_lz_in_sphere": m.min_lz_in_sphere,
            });
            if let Some(trials) = estimate {
                v["estimate"] = serde_json::to_value(estimate_sphere_mass(&x, level, &problem.spec, *seed, *trials)?)?;
            }
            writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
        }
        Command::RdCurve { dist, grid, p, block } => {
            let problem = dist.load()?;
            let d = problem
                .spec
                .matrix_f64()
                .ok_or_else(|| Error::UnsupportedDistortion("rd-curve needs a per-letter distortion".into()))?;
            let j = problem.spec.source_size();
            let x = block.as_deref().map(|b| problem.source.parse_block(b)).transpose()?;
            let probs = match (&x, p) {
                (Some(x), _) => empirical_distribution(x, 1)?.symbol_probabilities(j),
                (None, Some(text)) => text
                    .split(',')
                    .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Precondition(format!("bad probability {s:?}"))))
                    .collect::<Result<Vec<_>>>()?,
                (None, None) => vec![1.0 / j as f64; j],
            };
            let table = x
                .as_ref()
                .map(|x| UniversalTable::build(x.len(), problem.spec.repro_size(), LengthMode::Lz, cap))
                .transpose()?;
            writeln!(out, "D,R,E,minus_log_U_mass_over_n")?;
            for level in parse_grid(grid)? {
                let lf = rational_f64(level);
                let r = blahut_arimoto(&probs, &d, lf, 1e-12, 100_000)?.rate;
                let e = sphere_exponent(&probs, &d, lf, 1e-12)?.exponent;
                let last = match (&x, &table) {
                    (Some(x), Some(t)) => {
                        let v = sphere_mass(x, level, &problem.spec, t)?.neg_log2() / x.len() as f64;
                        format!("{v}")
                    }
                    _ => String::new(),
                };
                writeln!(out, "{lf},{r},{e},{last}")?;
            }
        }
        Command::ConverseCheck {
            dist,
            level,
            block,
            ell,
            epsilon,
            one_minus_eps,
            mode,
        } => {
            let problem = dist.load()?;
            let level = parse_rational(level)?;
            let x = problem.source.parse_block(block)?;
            let table = UniversalTable::build(x.len(), problem.spec.repro_size(), (*mode).into(), cap)?;
            let report = theorem1_bound(&x, level, &problem.spec, *ell, *epsilon, &table, *one_minus_eps, cap)?;
            let class = type_class_of(&x, *ell, problem.spec.source_size(), cap)?;
            let cover = greedy_cover(&class, level, &problem.spec, cap)?;
            let mut v = report.to_json();
            v["M_greedy"] = json!(cover.size());
            v["block"] = json!(block);
            v["D"] = json!(level.to_string());
            writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
        }
        Command::Experiment { config, format, out: path } => {
            let cfg = ExperimentConfig::load(config)?;
            let report = run_experiment(&cfg)?;
            let text = match format {
                Format::Json => serde_json::to_string_pretty(&report.to_json())? + "\n",
                Format::Csv => report.to_csv(),
            };
            let target = path.clone().or_else(|| {
                cfg.output.as_ref().map(|o| {
                    if o.is_relative() {
                        config.parent().unwrap_or(Path::new(".")).join(o)
                    } else {
                        o.clone()
                    }
                })
            });
            match target {
                Some(p) => {
                    fs::write(&p, text)?;
                    eprintln!("wrote {}", p.display());
                }
                None => out.write_all(text.as_bytes())?,
            }
        }
        Command::CountingSeq { m, k } => {
            let c = build_counting_sequence(*m, *k, cap)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&c)?)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn finite(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn rational_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// `lo:hi:step` with exact rational endpoints, `hi` included.
fn parse_grid(text: &str) -> Result<Vec<Rational>> {
    let parts: Vec<&str> = text.split(':').collect();
    let [lo, hi, step] = parts[..] else {
        return Err(Error::Precondition(format!("grid {text:?} is not lo:hi:step")));
    };
    let (lo, hi, step) = (parse_rational(lo)?, parse_rational(hi)?, parse_rational(step)?);
    if step <= Rational::from_integer(0) || hi < lo {
        return Err(Error::Precondition("grid needs lo ≤ hi and a positive step".into()));
    }
    let mut points = Vec::new();
    let mut d = lo;
    while d <= hi {
        points.push(d);
        d += step;
        if points.len() > 100_000 {
            return Err(Error::Precondition("grid has more than 100000 points".into()));
        }
    }
    Ok(points)
}
