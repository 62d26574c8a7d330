//! The `df11` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use regex::Regex;

use crate::bf16::{component_stats, exponent_histogram, words_from_le_bytes, words_to_le_bytes, Bf16Word};
use crate::container::{plan_groups, write_container, ContainerReader, ContainerSpec, NamedTensor, SourceKind};
use crate::decoder::{decompress_sequential, Decoder};
use crate::error::Error;
use crate::huffman::{ExponentCodebook, FIRST_RESERVED};
use crate::lut::{decodable_codebook, LutHierarchy};
use crate::packer::{compress, CompressionReport, DecodeGeometry, Df11Tensor, MIN_BYTES_PER_THREAD};
use crate::safetensors::{ingest_safetensors, write_safetensors, Bf16Tensor};
use crate::synth::WeightDistribution;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_FORMAT: i32 = 4;
pub const EXIT_VERIFY: i32 = 5;

#[derive(Parser, Debug)]
#[command(name = "df11", version, about = "Lossless BFloat16 tensor compression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compress a raw BF16 or safetensors file into a DF11 container.
    Compress(CompressArgs),
    /// Decode a container back to raw BF16 or safetensors.
    Decompress(DecompressArgs),
    /// Decode a container and compare it word by word with the original.
    Verify(VerifyArgs),
    /// Print container metadata.
    Inspect(InspectArgs),
    /// Entropy and exponent-frequency statistics of BF16 weights.
    Stats(StatsArgs),
    /// Measure decode latency and throughput per decode group.
    Bench(BenchArgs),
    /// Write synthetic BF16 weights.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Default)]
pub enum ReportFormat {
    #[default]
    Text,
    Kv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Default)]
pub enum InputFormat {
    /// `.safetensors` files by extension, raw otherwise.
    #[default]
    Auto,
    Raw,
    Safetensors,
}

#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    /// Input format.
    #[arg(long, value_enum, default_value_t)]
    pub input_format: InputFormat,
    /// Shape of a raw input, e.g. `4096,4096`.
    #[arg(long, value_delimiter = ',')]
    pub shape: Option<Vec<usize>>,
    /// Tensor name for a raw input (default: file stem).
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct WorkerArgs {
    /// Worker threads (default: available parallelism).
    #[arg(long, env = "DF11_WORKERS")]
    pub workers: Option<usize>,
}

impl WorkerArgs {
    fn resolve(&self) -> usize {
        self.workers
            .filter(|&w| w > 0)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

#[derive(Args, Debug)]
pub struct CompressArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub input_args: InputArgs,
    #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads_per_block: u32,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(MIN_BYTES_PER_THREAD as i64..))]
    pub bytes_per_thread: u32,
    /// Tensors whose names match share a decode group keyed by the first
    /// capture group, e.g. `layers\.(\d+)\.`.
    #[arg(long)]
    pub group_regex: Option<String>,
    /// Build one codebook per decode group instead of one per tensor.
    #[arg(long)]
    pub shared_codebook: bool,
    #[command(flatten)]
    pub workers: WorkerArgs,
    #[arg(long, value_enum, default_value_t)]
    pub format: ReportFormat,
}

#[derive(Args, Debug)]
pub struct DecompressArgs {
    pub container: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub workers: WorkerArgs,
    #[arg(long, value_enum, default_value_t)]
    pub format: ReportFormat,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    pub original: PathBuf,
    pub container: PathBuf,
    #[command(flatten)]
    pub input_args: InputArgs,
    #[command(flatten)]
    pub workers: WorkerArgs,
    #[arg(long, value_enum, default_value_t)]
    pub format: ReportFormat,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    pub container: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    pub format: ReportFormat,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub input_args: InputArgs,
    /// Rows of the exponent frequency-vs-rank table.
    #[arg(long, default_value_t = 16)]
    pub top: usize,
    #[arg(long, value_enum, default_value_t)]
    pub format: ReportFormat,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    pub container: PathBuf,
    /// Timed runs per measurement (after one warm-up run).
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(5..))]
    pub runs: u32,
    #[command(flatten)]
    pub workers: WorkerArgs,
    #[arg(long, value_enum, default_value_t)]
    pub format: ReportFormat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Default)]
pub enum SynthDistribution {
    #[default]
    Gaussian,
    HeavyTailed,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output path; `.safetensors` writes a safetensors file, anything else
    /// raw little-endian BF16 (single tensor only).
    #[arg(short, long)]
    pub output: PathBuf,
    /// Element count of each tensor; one tensor per entry.
    #[arg(long, value_delimiter = ',', default_value = "1048576")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 0.02)]
    pub sigma: f32,
    #[arg(long, value_enum, default_value_t)]
    pub distribution: SynthDistribution,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Name prefix; tensors are called `<prefix>.<i>`.
    #[arg(long, default_value = "synthetic")]
    pub prefix: String,
}

/// Failure of a command, tagged with its exit class.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn verify(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VERIFY,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::Io(_) => EXIT_IO,
            _ => EXIT_FORMAT,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Line-oriented report: `title` sections of `key: value` rows in text
/// mode, `section.key=value` lines in kv mode.
struct Report {
    format: ReportFormat,
    lines: Vec<String>,
}

impl Report {
    fn new(format: ReportFormat) -> Self {
        Self {
            format,
            lines: Vec::new(),
        }
    }

    fn section(&mut self, title: &str) {
        if self.format == ReportFormat::Text {
            self.lines.push(format!("{title}:"));
        }
    }

    fn field(&mut self, section: &str, key: &str, value: impl std::fmt::Display) {
        match self.format {
            ReportFormat::Text => self.lines.push(format!("  {key:<22} {value}")),
            ReportFormat::Kv => self.lines.push(format!("{section}.{key}={value}")),
        }
    }

    /// Free text shown only in text mode.
    fn text(&mut self, line: impl Into<String>) {
        if self.format == ReportFormat::Text {
            self.lines.push(line.into());
        }
    }

    fn emit(&self, out: &mut dyn Write) -> std::io::Result<()> {
        for l in &self.lines {
            writeln!(out, "{l}")?;
        }
        Ok(())
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    EXIT_OK
                }
                _ => EXIT_USAGE,
            };
        }
    };
    let result = match cli.command {
        Command::Compress(a) => cmd_compress(&a, stdout, stderr),
        Command::Decompress(a) => cmd_decompress(&a, stdout),
        Command::Verify(a) => cmd_verify(&a, stdout),
        Command::Inspect(a) => cmd_inspect(&a, stdout),
        Command::Stats(a) => cmd_stats(&a, stdout, stderr),
        Command::Bench(a) => cmd_bench(&a, stdout),
        Command::Synth(a) => cmd_synth(&a, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}

struct Input {
    source: SourceKind,
    tensors: Vec<Bf16Tensor>,
    skipped: Vec<(String, String)>,
}

fn read_input(path: &Path, args: &InputArgs) -> CliResult<Input> {
    let safetensors = match args.input_format {
        InputFormat::Safetensors => true,
        InputFormat::Raw => false,
        InputFormat::Auto => path.extension().is_some_and(|e| e == "safetensors"),
    };
    if safetensors {
        if args.shape.is_some() {
            return Err(CliError::usage("--shape only applies to raw input"));
        }
        let ingested = ingest_safetensors(path)?;
        if ingested.tensors.is_empty() {
            return Err(Error::EmptyInput("no BF16 tensors in safetensors file").into());
        }
        return Ok(Input {
            source: SourceKind::Safetensors,
            tensors: ingested.tensors,
            skipped: ingested.skipped,
        });
    }
    let bytes = std::fs::read(path)?;
    if bytes.is_empty() {
        return Err(Error::EmptyInput("input file is empty").into());
    }
    let words = words_from_le_bytes(&bytes)?;
    let shape = args.shape.clone().unwrap_or_else(|| vec![words.len()]);
    if shape.iter().product::<usize>() != words.len() {
        return Err(CliError::usage(format!(
            "--shape {shape:?} does not match {} elements",
            words.len()
        )));
    }
    let name = args.name.clone().unwrap_or_else(|| {
        path.file_stem()
            .map_or_else(|| "tensor".into(), |s| s.to_string_lossy().into_owned())
    });
    Ok(Input {
        source: SourceKind::Raw,
        tensors: vec![Bf16Tensor { name, shape, words }],
        skipped: Vec::new(),
    })
}

fn build_pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Io(std::io::Error::other(e)).into())
}

fn cmd_compress(a: &CompressArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult {
    let started = Instant::now();
    let geometry = DecodeGeometry::new(a.threads_per_block, a.bytes_per_thread)?;
    let pattern = a
        .group_regex
        .as_deref()
        .map(Regex::new)
        .transpose()
        .map_err(|e| CliError::usage(format!("bad --group-regex: {e}")))?;
    let input = read_input(&a.input, &a.input_args)?;
    for (name, dtype) in &input.skipped {
        writeln!(stderr, "warning: skipping {name:?} with dtype {dtype}")?;
    }

    let reserved: Vec<(String, u64)> = input
        .tensors
        .iter()
        .filter_map(|t| {
            let n = t
                .words
                .iter()
                .filter(|&&w| Bf16Word(w).exponent() as usize >= FIRST_RESERVED)
                .count() as u64;
            (n > 0).then(|| (t.name.clone(), n))
        })
        .collect();
    if !reserved.is_empty() {
        for (name, n) in &reserved {
            writeln!(
                stderr,
                "error: tensor {name:?} has {n} elements with exponents >= {FIRST_RESERVED} (reserved)"
            )?;
        }
        return Err(CliError {
            code: EXIT_FORMAT,
            message: format!("{} tensor(s) contain reserved exponents", reserved.len()),
        });
    }

    let names: Vec<&str> = input.tensors.iter().map(|t| t.name.as_str()).collect();
    let (labels, group_of) = plan_groups(&names, pattern.as_ref());
    let hists: Vec<[u64; 256]> = input.tensors.iter().map(|t| exponent_histogram(&t.words)).collect();
    let shared: Vec<Option<ExponentCodebook>> = if a.shared_codebook {
        (0..labels.len())
            .map(|g| {
                let mut merged = [0u64; 256];
                for (h, _) in hists.iter().zip(&group_of).filter(|(_, &id)| id as usize == g) {
                    for (m, c) in merged.iter_mut().zip(h) {
                        *m += c;
                    }
                }
                decodable_codebook(&merged).map(Some)
            })
            .collect::<Result<_, _>>()?
    } else {
        vec![None; labels.len()]
    };

    let pool = build_pool(a.workers.resolve())?;
    let compressed: Vec<Df11Tensor> = pool.install(|| {
        input
            .tensors
            .par_iter()
            .zip(&group_of)
            .map(|(t, &g)| {
                compress(&t.words, &t.shape, geometry, shared[g as usize].as_ref())
                    .map_err(|e| e.in_tensor(&t.name))
            })
            .collect::<Result<Vec<_>, Error>>()
    })?;

    let reports: Vec<CompressionReport> = compressed
        .iter()
        .zip(&hists)
        .map(|(t, h)| t.measure().with_histogram(t.codebook(), h))
        .collect();
    let spec = ContainerSpec {
        source: input.source,
        group_labels: labels.clone(),
        tensors: input
            .tensors
            .iter()
            .zip(compressed)
            .zip(&group_of)
            .map(|((t, c), &g)| NamedTensor {
                name: t.name.clone(),
                group: g,
                tensor: c,
            })
            .collect(),
    };
    write_container(&spec, &a.output)?;
    let file_bytes = std::fs::metadata(&a.output)?.len();

    let mut r = Report::new(a.format);
    for (t, rep) in spec.tensors.iter().zip(&reports) {
        let key = format!("tensor.{}", t.name);
        r.section(&format!("tensor {}", t.name));
        tensor_fields(&mut r, &key, rep);
        r.field(&key, "group", &labels[t.group as usize]);
    }
    let total = CompressionReport::total(&reports);
    r.section("total");
    r.field("total", "tensors", spec.tensors.len());
    r.field("total", "groups", labels.len());
    r.field("total", "elements", total.num_elements);
    r.field("total", "original_bytes", total.original_bytes);
    r.field("total", "compressed_bytes", total.compressed_bytes);
    r.field("total", "file_bytes", file_bytes);
    r.field("total", "ratio", format!("{:.4}", total.ratio()));
    r.field("total", "avg_bit_width", format!("{:.4}", total.avg_bit_width()));
    r.field("total", "metadata_fraction", format!("{:.5}", total.metadata_fraction()));
    r.field("total", "max_code_len", total.max_code_len);
    r.field("total", "max_lut_tables", total.lut_tables);
    r.field("total", "wall_seconds", format!("{:.3}", started.elapsed().as_secs_f64()));
    r.emit(stdout)?;
    Ok(())
}

fn tensor_fields(r: &mut Report, key: &str, rep: &CompressionReport) {
    r.field(key, "elements", rep.num_elements);
    r.field(key, "original_bytes", rep.original_bytes);
    r.field(key, "compressed_bytes", rep.compressed_bytes);
    r.field(key, "ratio", format!("{:.4}", rep.ratio()));
    r.field(key, "avg_bit_width", format!("{:.4}", rep.avg_bit_width()));
    r.field(key, "exponent_entropy", format!("{:.4}", rep.exponent_entropy));
    r.field(key, "mean_code_len", format!("{:.4}", rep.mean_code_len));
    r.field(key, "max_code_len", rep.max_code_len);
    r.field(key, "lut_tables", rep.lut_tables);
    r.field(key, "lut_bytes", rep.lut_bytes);
    r.field(key, "metadata_bytes", rep.metadata_bytes());
    r.field(key, "metadata_fraction", format!("{:.5}", rep.metadata_fraction()));
}

fn cmd_decompress(a: &DecompressArgs, stdout: &mut dyn Write) -> CliResult {
    let started = Instant::now();
    let mut reader = ContainerReader::open(&a.container)?;
    let decoder = Decoder::new(a.workers.resolve())?;
    let decoded = reader.decode_all(&decoder)?;
    let elements: usize = decoded.iter().map(|(_, w)| w.len()).sum();
    match reader.source() {
        SourceKind::Raw => {
            let words: Vec<u16> = decoded.into_iter().flat_map(|(_, w)| w).collect();
            std::fs::write(&a.output, words_to_le_bytes(&words))?;
        }
        SourceKind::Safetensors => {
            let tensors: Vec<Bf16Tensor> = decoded
                .into_iter()
                .zip(reader.tensors())
                .map(|((name, words), rec)| Bf16Tensor {
                    name,
                    shape: rec.shape.clone(),
                    words,
                })
                .collect();
            write_safetensors(&a.output, &tensors)?;
        }
    }
    let mut r = Report::new(a.format);
    r.section("decompress");
    r.field("decompress", "tensors", reader.tensors().len());
    r.field("decompress", "groups", reader.groups().len());
    r.field("decompress", "elements", elements);
    r.field("decompress", "workers", decoder.workers());
    r.field("decompress", "wall_seconds", format!("{:.3}", started.elapsed().as_secs_f64()));
    r.emit(stdout)?;
    Ok(())
}

fn cmd_verify(a: &VerifyArgs, stdout: &mut dyn Write) -> CliResult {
    let original = read_input(&a.original, &a.input_args)?;
    let mut reader = ContainerReader::open(&a.container)?;
    let decoder = Decoder::new(a.workers.resolve())?;
    let decoded = reader.decode_all(&decoder)?;
    let mut r = Report::new(a.format);
    r.section("verify");

    let pairs: Vec<(&Bf16Tensor, &str, &[u16], &[usize])> = if original.source == SourceKind::Raw {
        if decoded.len() != 1 {
            return Err(CliError::verify(format!(
                "name mismatch: raw original holds one tensor, container holds {}",
                decoded.len()
            )));
        }
        vec![(
            &original.tensors[0],
            decoded[0].0.as_str(),
            &decoded[0].1,
            &reader.tensors()[0].shape,
        )]
    } else {
        let only_original: Vec<&str> = original
            .tensors
            .iter()
            .map(|t| t.name.as_str())
            .filter(|n| reader.tensor_index(n).is_none())
            .collect();
        let only_container: Vec<&str> = decoded
            .iter()
            .map(|(n, _)| n.as_str())
            .filter(|n| !original.tensors.iter().any(|t| t.name == *n))
            .collect();
        if !only_original.is_empty() || !only_container.is_empty() {
            return Err(CliError::verify(format!(
                "name mismatch: only in original {only_original:?}, only in container {only_container:?}"
            )));
        }
        original
            .tensors
            .iter()
            .map(|t| {
                let i = reader.tensor_index(&t.name).unwrap();
                (t, decoded[i].0.as_str(), decoded[i].1.as_slice(), reader.tensors()[i].shape.as_slice())
            })
            .collect()
    };

    for (orig, name, words, shape) in &pairs {
        // A raw original without --shape is flat; compare element counts only.
        let raw_unshaped = original.source == SourceKind::Raw && a.input_args.shape.is_none();
        if (!raw_unshaped && orig.shape.as_slice() != *shape) || orig.words.len() != words.len() {
            return Err(CliError::verify(format!(
                "shape mismatch for {name:?}: original {:?}, container {shape:?}",
                orig.shape
            )));
        }
        if let Some(i) = orig.words.iter().zip(words.iter()).position(|(x, y)| x != y) {
            return Err(CliError::verify(format!(
                "value mismatch in {name:?} at element {i}: original {:#06x}, decoded {:#06x}",
                orig.words[i], words[i]
            )));
        }
    }
    let elements: usize = pairs.iter().map(|p| p.2.len()).sum();
    r.field("verify", "tensors", pairs.len());
    r.field("verify", "elements", elements);
    r.field("verify", "result", "identical");
    r.emit(stdout)?;
    Ok(())
}

fn cmd_inspect(a: &InspectArgs, stdout: &mut dyn Write) -> CliResult {
    let reader = ContainerReader::open(&a.container)?;
    let mut r = Report::new(a.format);
    r.section("container");
    r.field("container", "version", crate::container::VERSION);
    r.field("container", "bytes", reader.file_len());
    r.field("container", "source", format!("{:?}", reader.source()).to_lowercase());
    r.field("container", "tensors", reader.tensors().len());
    r.field("container", "groups", reader.groups().len());
    r.field("container", "codebooks", reader.codebooks().len());
    for (g, group) in reader.groups().iter().enumerate() {
        let key = format!("group.{g}");
        r.section(&format!("group {g}"));
        r.field(&key, "label", &group.label);
        let names: Vec<&str> = group
            .members
            .iter()
            .map(|&m| reader.tensors()[m as usize].name.as_str())
            .collect();
        r.field(&key, "members", names.join(","));
    }
    for rec in reader.tensors() {
        let key = format!("tensor.{}", rec.name);
        let cb = &reader.codebooks()[rec.codebook as usize];
        r.section(&format!("tensor {}", rec.name));
        r.field(&key, "shape", format!("{:?}", rec.shape));
        r.field(&key, "elements", rec.num_elements);
        r.field(&key, "threads_per_block", rec.geometry.threads_per_block);
        r.field(&key, "bytes_per_thread", rec.geometry.bytes_per_thread);
        r.field(&key, "blocks", rec.num_blocks);
        r.field(&key, "codebook", rec.codebook);
        r.field(&key, "symbols", cb.num_symbols());
        r.field(&key, "max_code_len", cb.max_len());
        match LutHierarchy::build(cb) {
            Ok(l) => {
                r.field(&key, "lut_tables", l.num_tables());
                r.field(&key, "lut_bytes", l.resident_bytes());
            }
            Err(e) => r.field(&key, "lut_error", e),
        }
        r.field(&key, "payload_bytes", rec.payload_bytes());
        for kind in crate::container::SectionKind::ALL {
            let s = rec.section(kind);
            r.field(&key, &format!("{}_bytes", kind.name()), s.len);
        }
    }
    r.emit(stdout)?;
    Ok(())
}

fn cmd_stats(a: &StatsArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult {
    let input = read_input(&a.input, &a.input_args)?;
    for (name, dtype) in &input.skipped {
        writeln!(stderr, "warning: skipping {name:?} with dtype {dtype}")?;
    }
    let words: Vec<u16> = input.tensors.iter().flat_map(|t| t.words.iter().copied()).collect();
    let s = component_stats(&words)?;
    let mut r = Report::new(a.format);
    r.section("stats");
    r.field("stats", "tensors", input.tensors.len());
    r.field("stats", "elements", s.total());
    r.field("stats", "sign_entropy", format!("{:.4}", s.sign_entropy));
    r.field("stats", "exponent_entropy", format!("{:.4}", s.exponent_entropy));
    r.field("stats", "mantissa_entropy", format!("{:.4}", s.mantissa_entropy));
    r.field("stats", "distinct_exponents", s.distinct_exponents());
    let reserved: u64 = s.hist.exponent[FIRST_RESERVED..].iter().sum();
    r.field("stats", "reserved_exponent_elements", reserved);
    r.section("exponent frequency by rank");
    r.text(format!("  {:>4} {:>8} {:>12} {:>10}", "rank", "exponent", "count", "frequency"));
    for (rank, (e, c)) in s.exponent_ranking().into_iter().take(a.top).enumerate() {
        let freq = c as f64 / s.total() as f64;
        match a.format {
            ReportFormat::Text => r.text(format!("  {:>4} {:>8} {:>12} {:>10.6}", rank + 1, e, c, freq)),
            ReportFormat::Kv => {
                let key = format!("rank.{}", rank + 1);
                r.field(&key, "exponent", e);
                r.field(&key, "count", c);
                r.field(&key, "frequency", format!("{freq:.6}"));
            }
        }
    }
    r.emit(stdout)?;
    Ok(())
}

fn median(mut samples: Vec<Duration>) -> Duration {
    samples.sort();
    samples[samples.len() / 2]
}

fn time_decode(decoder: &Decoder, tensors: &[&Df11Tensor], runs: u32) -> CliResult<(Duration, Vec<Vec<u16>>)> {
    let warm = decoder.decompress_group(tensors)?;
    let mut samples = Vec::with_capacity(runs as usize);
    for _ in 0..runs {
        let t0 = Instant::now();
        let out = decoder.decompress_group(tensors)?;
        samples.push(t0.elapsed());
        std::hint::black_box(out);
    }
    Ok((median(samples), warm))
}

struct BenchRow {
    label: String,
    tensors: usize,
    elements: usize,
    single: Duration,
    multi: Duration,
}

fn gbps(elements: usize, d: Duration) -> f64 {
    let secs = d.as_secs_f64().max(1e-9);
    2.0 * elements as f64 / secs / 1e9
}

fn cmd_bench(a: &BenchArgs, stdout: &mut dyn Write) -> CliResult {
    let mut reader = ContainerReader::open(&a.container)?;
    let workers = a.workers.resolve();
    let single = Decoder::new(1)?;
    let multi = Decoder::new(workers)?;
    let mut rows = Vec::new();
    for g in 0..reader.groups().len() {
        let loaded = reader.load_group(g)?;
        let refs: Vec<&Df11Tensor> = loaded.iter().map(|(_, t)| t).collect();
        let (t1, out1) = time_decode(&single, &refs, a.runs)?;
        let (tn, outn) = time_decode(&multi, &refs, a.runs)?;
        for ((name, t), (o1, on)) in loaded.iter().zip(out1.iter().zip(&outn)) {
            let oracle = decompress_sequential(t)?;
            if *o1 != oracle || *on != oracle {
                return Err(CliError::verify(format!(
                    "decoded bytes of {name:?} differ from the sequential decoder"
                )));
            }
        }
        rows.push(BenchRow {
            label: reader.groups()[g].label.clone(),
            tensors: loaded.len(),
            elements: refs.iter().map(|t| t.num_elements()).sum(),
            single: t1,
            multi: tn,
        });
    }
    rows.sort_by_key(|r| r.elements);

    let mut r = Report::new(a.format);
    r.section("bench");
    r.field("bench", "groups", rows.len());
    r.field("bench", "runs", a.runs);
    r.field("bench", "workers", workers);
    r.field("bench", "oracle_match", true);
    r.text(format!(
        "  {:<24} {:>7} {:>12} {:>12} {:>10} {:>12} {:>10} {:>8}",
        "group", "tensors", "elements", "t1_us", "t1_GB/s", format!("t{workers}_us"), format!("t{workers}_GB/s"), "speedup"
    ));
    for (i, row) in rows.iter().enumerate() {
        let speedup = row.single.as_secs_f64() / row.multi.as_secs_f64().max(1e-9);
        match a.format {
            ReportFormat::Text => r.text(format!(
                "  {:<24} {:>7} {:>12} {:>12.1} {:>10.3} {:>12.1} {:>10.3} {:>8.2}",
                row.label,
                row.tensors,
                row.elements,
                row.single.as_secs_f64() * 1e6,
                gbps(row.elements, row.single),
                row.multi.as_secs_f64() * 1e6,
                gbps(row.elements, row.multi),
                speedup
            )),
            ReportFormat::Kv => {
                let key = format!("row.{i}");
                r.field(&key, "group", &row.label);
                r.field(&key, "tensors", row.tensors);
                r.field(&key, "elements", row.elements);
                r.field(&key, "latency_us_1", format!("{:.1}", row.single.as_secs_f64() * 1e6));
                r.field(&key, "throughput_gbps_1", format!("{:.4}", gbps(row.elements, row.single)));
                r.field(&key, "latency_us_n", format!("{:.1}", row.multi.as_secs_f64() * 1e6));
                r.field(&key, "throughput_gbps_n", format!("{:.4}", gbps(row.elements, row.multi)));
                r.field(&key, "speedup", format!("{speedup:.3}"));
            }
        }
    }
    let monotonic = rows
        .windows(2)
        .all(|w| gbps(w[1].elements, w[1].multi) >= gbps(w[0].elements, w[0].multi));
    r.section("trend");
    r.field("trend", "throughput_non_decreasing_with_size", monotonic);
    r.emit(stdout)?;
    Ok(())
}

fn cmd_synth(a: &SynthArgs, stdout: &mut dyn Write) -> CliResult {
    if !(a.sigma.is_finite() && a.sigma > 0.0) {
        return Err(CliError::usage("--sigma must be positive"));
    }
    if a.sizes.contains(&0) {
        return Err(CliError::usage("--sizes entries must be positive"));
    }
    let dist = match a.distribution {
        SynthDistribution::Gaussian => WeightDistribution::Gaussian { sigma: a.sigma },
        SynthDistribution::HeavyTailed => WeightDistribution::HeavyTailed { sigma: a.sigma },
    };
    let tensors: Vec<Bf16Tensor> = a
        .sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| Bf16Tensor {
            name: format!("{}.{i}", a.prefix),
            shape: vec![n],
            words: dist.sample(n, a.seed.wrapping_add(i as u64)),
        })
        .collect();
    if a.output.extension().is_some_and(|e| e == "safetensors") {
        write_safetensors(&a.output, &tensors)?;
    } else {
        if tensors.len() != 1 {
            return Err(CliError::usage("raw output holds exactly one tensor"));
        }
        std::fs::write(&a.output, words_to_le_bytes(&tensors[0].words))?;
    }
    writeln!(stdout, "wrote {} tensor(s) to {}", tensors.len(), a.output.display())?;
    Ok(())
}
