use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use emerge_core::synth::{DEFAULT_SPAN_END, DEFAULT_SPAN_START};
use emerge_core::{BurstParams, MentionFormat, ParseMode, SimilarityKind, Span, ThresholdMode, VolumeMode};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Parser)]
#[command(name = "emerge", version, about = "Emerging-entity analysis pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub config: PipelineArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest mentions and metadata, apply the filtering cascade, build series.
    Build,
    /// Detect bursts in every emergence series.
    Bursts,
    /// Burst-similarity matrix, Ward dendrogram and flat cuts.
    Cluster,
    /// Per-cluster signatures as CSV and SVG.
    Signatures,
    /// Descriptive statistics and significance tests per cluster.
    Stats,
    /// Partition by first appearing stream and cross-stream lag.
    Streams,
    /// Per-type statistics and pageview ranking.
    Types,
    /// Every stage in order.
    All,
    /// Write a synthetic corpus with a ground-truth manifest.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FormatArg {
    Tsv,
    Jsonl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdArg {
    MeanCentered,
    BareSigma,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityArg {
    Jaccard,
    PeakWeighted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum VolumeArg {
    Documents,
    Occurrences,
}

/// Signature length: the longest member, or a fixed number of points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SigLength {
    Auto,
    Fixed(usize),
}

impl FromStr for SigLength {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(SigLength::Auto);
        }
        match s.parse::<usize>() {
            Ok(n) if n >= 2 => Ok(SigLength::Fixed(n)),
            _ => Err(format!("expected `auto` or an integer >= 2, got `{s}`")),
        }
    }
}

impl SigLength {
    pub fn get(self) -> Option<usize> {
        match self {
            SigLength::Auto => None,
            SigLength::Fixed(n) => Some(n),
        }
    }
}

/// Byte count with an optional K, M, G or T suffix (powers of 1024).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ByteSize(pub u64);

impl FromStr for ByteSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let t = s.trim();
        let t = t.strip_suffix(['b', 'B']).unwrap_or(t);
        let t = t.strip_suffix(['i']).unwrap_or(t);
        let (num, shift) = match t.chars().last() {
            Some('k' | 'K') => (&t[..t.len() - 1], 10),
            Some('m' | 'M') => (&t[..t.len() - 1], 20),
            Some('g' | 'G') => (&t[..t.len() - 1], 30),
            Some('t' | 'T') => (&t[..t.len() - 1], 40),
            _ => (t, 0),
        };
        let n: u64 = num.trim().parse().map_err(|_| format!("invalid size `{s}`"))?;
        n.checked_mul(1 << shift)
            .map(ByteSize)
            .filter(|b| b.0 > 0)
            .ok_or_else(|| format!("invalid size `{s}`"))
    }
}

impl fmt::Display for ByteSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn default_span() -> String {
    format!("{DEFAULT_SPAN_START}:{DEFAULT_SPAN_END}")
}

#[derive(Clone, Debug, Args)]
pub struct PipelineArgs {
    /// Mention file (TSV or JSON lines).
    #[arg(long, global = true, env = "EMERGE_MENTIONS")]
    pub mentions: Option<PathBuf>,

    /// Entity metadata TSV.
    #[arg(long, global = true, env = "EMERGE_METADATA")]
    pub metadata: Option<PathBuf>,

    /// Mention file format; inferred from the extension when omitted.
    #[arg(long, global = true, env = "EMERGE_FORMAT")]
    pub format: Option<FormatArg>,

    /// Output directory for every artifact.
    #[arg(long, global = true, env = "EMERGE_OUT", default_value = "emerge-out")]
    pub out: PathBuf,

    /// Corpus span as `START:END`, days since 1970-01-01 or ISO dates.
    #[arg(long, global = true, env = "EMERGE_SPAN", default_value_t = default_span())]
    pub span: String,

    #[arg(long, global = true, env = "EMERGE_MIN_DOCS", default_value_t = 5)]
    pub min_docs: u32,

    /// Moving-average window in days.
    #[arg(long, global = true, env = "EMERGE_WINDOW", default_value_t = 7)]
    pub window: usize,

    #[arg(long, global = true, env = "EMERGE_CUTOFF_SIGMA", default_value_t = 1.5)]
    pub cutoff_sigma: f64,

    #[arg(long, global = true, env = "EMERGE_THRESHOLD", value_enum, default_value_t = ThresholdArg::MeanCentered)]
    pub threshold: ThresholdArg,

    #[arg(long, global = true, env = "EMERGE_SIMILARITY", value_enum, default_value_t = SimilarityArg::Jaccard)]
    pub similarity: SimilarityArg,

    #[arg(long, global = true, env = "EMERGE_VOLUME", value_enum, default_value_t = VolumeArg::Documents)]
    pub volume: VolumeArg,

    /// Flat cuts to export, comma separated.
    #[arg(long, global = true, env = "EMERGE_K", value_delimiter = ',', default_value = "1,2")]
    pub k: Vec<usize>,

    /// Dendrogram levels kept in the truncated export.
    #[arg(long, global = true, env = "EMERGE_LEVELS", default_value_t = 7)]
    pub levels: usize,

    /// Signature length: `auto` (longest member) or a point count.
    #[arg(long, global = true, env = "EMERGE_SIG_LENGTH", default_value = "auto")]
    pub sig_length: SigLength,

    /// Cap on the distance matrix held in memory; larger populations are
    /// subsampled.
    #[arg(long, global = true, env = "EMERGE_MEM_BUDGET", default_value = "4G")]
    pub mem_budget: ByteSize,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "EMERGE_WORKERS")]
    pub workers: Option<usize>,

    /// Seed for subsampling.
    #[arg(long, global = true, env = "EMERGE_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Fail on the first malformed input line instead of counting it.
    #[arg(long, global = true, env = "EMERGE_STRICT")]
    pub strict: bool,

    /// Minimum entities per type row.
    #[arg(long, global = true, env = "EMERGE_MIN_TYPE_COUNT", default_value_t = 400)]
    pub min_type_count: usize,

    /// No progress messages on stderr.
    #[arg(long, short, global = true, env = "EMERGE_QUIET")]
    pub quiet: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Two populations with early and late bursts plus planted violations.
    Default,
    /// One 300-day entity with two distinct bursts.
    Curiosity,
}

#[derive(Clone, Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = Preset::Default)]
    pub preset: Preset,

    #[arg(long, default_value_t = 500)]
    pub n_early: usize,

    #[arg(long, default_value_t = 500)]
    pub n_late: usize,

    /// Entities per violation category.
    #[arg(long, default_value_t = 40)]
    pub violations: usize,

    /// Background documents per day.
    #[arg(long, default_value_t = 0.15)]
    pub noise: f64,
}

/// Validated pipeline settings.
#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub mentions: Option<PathBuf>,
    pub metadata: Option<PathBuf>,
    pub format: Option<MentionFormat>,
    pub out: PathBuf,
    pub span: Span,
    pub min_docs: u32,
    pub bursts: BurstParams,
    pub similarity: SimilarityKind,
    pub volume: VolumeMode,
    pub k: Vec<usize>,
    pub levels: usize,
    pub sig_length: SigLength,
    pub mem_budget: u64,
    pub workers: Option<usize>,
    pub seed: u64,
    pub parse_mode: ParseMode,
    pub min_type_count: usize,
    pub quiet: bool,
}

impl PipelineArgs {
    pub fn validate(&self) -> Result<PipelineConfig, String> {
        let span: Span = self.span.parse().map_err(|e| format!("--span: {e}"))?;
        if self.window == 0 {
            return Err("--window must be positive".into());
        }
        if !(self.cutoff_sigma.is_finite() && self.cutoff_sigma >= 0.0) {
            return Err("--cutoff-sigma must be a finite nonnegative number".into());
        }
        if self.k.is_empty() || self.k.contains(&0) {
            return Err("--k needs positive cluster counts".into());
        }
        if self.levels == 0 {
            return Err("--levels must be positive".into());
        }
        if self.workers == Some(0) {
            return Err("--workers must be positive".into());
        }
        let mut k = self.k.clone();
        k.sort_unstable();
        k.dedup();
        Ok(PipelineConfig {
            mentions: self.mentions.clone(),
            metadata: self.metadata.clone(),
            format: self.format.map(|f| match f {
                FormatArg::Tsv => MentionFormat::Tsv,
                FormatArg::Jsonl => MentionFormat::JsonLines,
            }),
            out: self.out.clone(),
            span,
            min_docs: self.min_docs,
            bursts: BurstParams {
                window: self.window,
                cutoff_sigma: self.cutoff_sigma,
                threshold: match self.threshold {
                    ThresholdArg::MeanCentered => ThresholdMode::MeanCentered,
                    ThresholdArg::BareSigma => ThresholdMode::BareSigma,
                },
            },
            similarity: match self.similarity {
                SimilarityArg::Jaccard => SimilarityKind::Jaccard,
                SimilarityArg::PeakWeighted => SimilarityKind::PeakWeighted,
            },
            volume: match self.volume {
                VolumeArg::Documents => VolumeMode::Documents,
                VolumeArg::Occurrences => VolumeMode::Occurrences,
            },
            k,
            levels: self.levels,
            sig_length: self.sig_length,
            mem_budget: self.mem_budget.0,
            workers: self.workers,
            seed: self.seed,
            parse_mode: if self.strict { ParseMode::Strict } else { ParseMode::Lenient },
            min_type_count: self.min_type_count,
            quiet: self.quiet,
        })
    }
}

/// Pipeline stages whose artifacts carry a configuration hash.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Build,
    Bursts,
    Distance,
    Cluster,
    Signatures,
    Stats,
    Streams,
    Types,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Build => "build",
            Stage::Bursts => "bursts",
            Stage::Distance => "distance",
            Stage::Cluster => "cluster",
            Stage::Signatures => "signatures",
            Stage::Stats => "stats",
            Stage::Streams => "streams",
            Stage::Types => "types",
        }
    }
}

#[derive(Serialize)]
struct BuildKey {
    span: Span,
    min_docs: u32,
    strict: bool,
    volume: VolumeMode,
}

#[derive(Serialize)]
struct BurstKey {
    window: usize,
    cutoff_sigma: f64,
    threshold: ThresholdMode,
}

#[derive(Serialize)]
struct DistanceKey {
    similarity: SimilarityKind,
    mem_budget: u64,
    seed: u64,
}

impl PipelineConfig {
    /// Settings that shape a stage's output, including upstream stages.
    /// Paths, worker count and verbosity are left out.
    pub fn stage_settings(&self, stage: Stage) -> serde_json::Value {
        use serde_json::{json, Map, Value};
        let mut m = Map::new();
        m.insert(
            "build".into(),
            json!(BuildKey {
                span: self.span,
                min_docs: self.min_docs,
                strict: self.parse_mode == ParseMode::Strict,
                volume: self.volume,
            }),
        );
        let bursts = json!(BurstKey {
            window: self.bursts.window,
            cutoff_sigma: self.bursts.cutoff_sigma,
            threshold: self.bursts.threshold,
        });
        let distance = json!(DistanceKey {
            similarity: self.similarity,
            mem_budget: self.mem_budget,
            seed: self.seed,
        });
        let cluster = json!({ "k": self.k, "levels": self.levels });
        let sig = json!(self.sig_length.get());
        match stage {
            Stage::Build => {}
            Stage::Bursts | Stage::Streams => {
                m.insert("bursts".into(), bursts);
            }
            Stage::Types => {
                m.insert("bursts".into(), bursts);
                m.insert("min_type_count".into(), json!(self.min_type_count));
            }
            Stage::Distance => {
                m.insert("bursts".into(), bursts);
                m.insert("distance".into(), distance);
            }
            Stage::Cluster | Stage::Signatures | Stage::Stats => {
                m.insert("bursts".into(), bursts);
                m.insert("distance".into(), distance);
                m.insert("cluster".into(), cluster);
                m.insert("sig_length".into(), sig);
            }
        }
        m.insert("stage".into(), Value::String(stage.as_str().into()));
        Value::Object(m)
    }

    pub fn stage_hash(&self, stage: Stage) -> String {
        let bytes = serde_json::to_vec(&self.stage_settings(stage)).expect("settings serialize");
        hex(&Sha256::digest(bytes))
    }

    pub fn mention_format(&self) -> MentionFormat {
        self.format.unwrap_or_else(|| match &self.mentions {
            Some(p) if matches!(p.extension().and_then(|e| e.to_str()), Some("jsonl" | "json" | "ndjson")) => {
                MentionFormat::JsonLines
            }
            _ => MentionFormat::Tsv,
        })
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
