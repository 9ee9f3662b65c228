use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use emerge_core::analysis::{
    compare_groups, cross_stream_lag, descriptive_stats, entity_features, group_signature, partition_by_stream,
    significance_csv, stats_table_csv, svg::signature_svg, type_report, CrossStreamLag, EntityFeatures, GroupStats,
    StreamClass, TypeReport,
};
use emerge_core::bursts::EntityBursts;
use emerge_core::similarity::tiles;
use emerge_core::synth::{self, series, SynthConfig, ViolationCounts};
use emerge_core::timeseries::{series_for, series_to_csv};
use emerge_core::{
    cut, detect_bursts, hac_ward, parse_mentions, parse_metadata, to_relative_profile, truncate, BurstParams,
    Dataset, DatasetBuilder, Dendrogram, EmergenceSeries, FilterReport, RelativeBurstProfile, TruncatedNode,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::artifacts::{
    csv_with_hash, digest_file, read_csv, read_json, Envelope, FileDigest, Manifest, StageOutputs,
};
use crate::config::{Command, PipelineConfig, Preset, Stage, SynthArgs};
use crate::error::CliError;

type Result<T, E = CliError> = std::result::Result<T, E>;

const TILE: usize = 256;

pub const DATASET: &str = "dataset.json";
pub const FILTER_REPORT: &str = "filter_report.json";
pub const BURSTS: &str = "bursts.json";
pub const DISTANCE_BIN: &str = "distance.bin";
pub const DISTANCE_META: &str = "distance.json";
pub const DENDROGRAM: &str = "dendrogram.json";

pub fn clusters_file(k: usize) -> String {
    format!("clusters_k{k}.csv")
}

struct Progress {
    quiet: bool,
    start: Instant,
}

impl Progress {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("[{:>7.2}s] {}", self.start.elapsed().as_secs_f64(), msg.as_ref());
        }
    }
}

pub fn run(command: &Command, cfg: &PipelineConfig) -> Result<()> {
    let p = Progress {
        quiet: cfg.quiet,
        start: Instant::now(),
    };
    std::fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", cfg.out.display())))?;
    match command {
        Command::Build => build(cfg, &p),
        Command::Bursts => bursts(cfg, &p),
        Command::Cluster => cluster(cfg, &p),
        Command::Signatures => signatures(cfg, &p),
        Command::Stats => stats(cfg, &p),
        Command::Streams => streams(cfg, &p),
        Command::Types => types(cfg, &p),
        Command::All => {
            build(cfg, &p)?;
            bursts(cfg, &p)?;
            cluster(cfg, &p)?;
            signatures(cfg, &p)?;
            stats(cfg, &p)?;
            streams(cfg, &p)?;
            types(cfg, &p)
        }
        Command::Synth(args) => synth(cfg, args, &p),
    }
}

fn manifest(cfg: &PipelineConfig, stage: Stage, inputs: Vec<FileDigest>, counts: Map<String, Value>) -> Manifest {
    Manifest {
        stage: stage.as_str().into(),
        config_hash: cfg.stage_hash(stage),
        version: env!("CARGO_PKG_VERSION").into(),
        settings: cfg.stage_settings(stage),
        inputs,
        outputs: Vec::new(),
        counts,
    }
}

fn input_digest(cfg: &PipelineConfig, name: &str) -> Result<FileDigest> {
    digest_file(&cfg.out.join(name)).map_err(|e| CliError::Input(format!("{name}: {e}")))
}

fn counts(pairs: &[(&str, Value)]) -> Map<String, Value> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn open_input(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(|f| BufReader::with_capacity(1 << 20, f))
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn required<'a>(path: &'a Option<std::path::PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| CliError::Usage(format!("{flag} is required (or set EMERGE_{})", flag[2..].to_uppercase())))
}

#[derive(Serialize, Deserialize)]
struct DatasetBody {
    dataset: Dataset,
}

#[derive(Serialize, Deserialize)]
struct ReportBody {
    report: FilterReport,
}

fn build(cfg: &PipelineConfig, p: &Progress) -> Result<()> {
    let mentions_path = required(&cfg.mentions, "--mentions")?;
    let metadata_path = required(&cfg.metadata, "--metadata")?;
    let hash = cfg.stage_hash(Stage::Build);

    p.say(format!("reading metadata {}", metadata_path.display()));
    let (metas, bad_meta) = parse_metadata(open_input(metadata_path)?, cfg.parse_mode)
        .map_err(|e| CliError::Input(format!("{}: {e}", metadata_path.display())))?;

    p.say(format!("reading mentions {}", mentions_path.display()));
    let mut reader = parse_mentions(open_input(mentions_path)?, cfg.mention_format(), cfg.parse_mode);
    let mut builder = DatasetBuilder::new(cfg.span);
    for rec in reader.by_ref() {
        let rec = rec.map_err(|e| CliError::Input(format!("{}: {e}", mentions_path.display())))?;
        builder.push(&rec);
    }
    builder.add_malformed(reader.malformed());
    let (dataset, report) = builder.finish(&metas, cfg.min_docs)?;
    p.say(format!("{} emerging entities retained", dataset.len()));

    let series: Vec<EmergenceSeries> = dataset.entities.par_iter().map(|e| series_for(e, cfg.volume)).collect();

    let mut out = StageOutputs::new(&cfg.out);
    out.add_json(
        FILTER_REPORT,
        &Envelope {
            config_hash: hash.clone(),
            body: ReportBody { report: report.clone() },
        },
    )?;
    out.add("filter_report.csv", csv_with_hash(&hash, &report.to_csv()));
    out.add("series.csv", csv_with_hash(&hash, &series_to_csv(&series)));
    let n = dataset.len();
    out.add_json(
        DATASET,
        &Envelope {
            config_hash: hash,
            body: DatasetBody { dataset },
        },
    )?;

    let inputs = vec![
        digest_file(mentions_path).map_err(|e| CliError::Input(e.to_string()))?,
        digest_file(metadata_path).map_err(|e| CliError::Input(e.to_string()))?,
    ];
    let c = counts(&[
        ("entities", json!(n)),
        ("mention_lines", json!(reader.lines_read())),
        ("malformed_mention_lines", json!(report.malformed_lines)),
        ("malformed_metadata_lines", json!(bad_meta)),
        ("metadata_rows", json!(metas.len())),
    ]);
    out.commit(manifest(cfg, Stage::Build, inputs, c))?;
    p.say("build done");
    Ok(())
}

fn load_dataset(cfg: &PipelineConfig) -> Result<Dataset> {
    let body: DatasetBody = read_json(&cfg.out, DATASET, &cfg.stage_hash(Stage::Build), "build")?;
    Ok(body.dataset)
}

#[derive(Serialize, Deserialize)]
struct BurstsBody {
    params: BurstParams,
    entities: Vec<EntityBursts>,
}

fn bursts(cfg: &PipelineConfig, p: &Progress) -> Result<()> {
    let dataset = load_dataset(cfg)?;
    let hash = cfg.stage_hash(Stage::Bursts);
    p.say(format!("detecting bursts for {} entities", dataset.len()));
    let entities = dataset
        .entities
        .par_iter()
        .map(|e| {
            let s = series_for(e, cfg.volume);
            detect_bursts(&s.as_f64(), &cfg.bursts).map(|bs| EntityBursts::new(e.id(), s.start_day, &bs))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut csv = String::from("entity_id,start,end,start_day,end_day,rel_start,rel_end,peak\n");
    for e in &entities {
        for b in &e.bursts {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                e.entity_id, b.start, b.end, b.start_day, b.end_day, b.rel_start, b.rel_end, b.peak
            ));
        }
    }
    let with = entities.iter().filter(|e| !e.bursts.is_empty()).count();
    let total: usize = entities.iter().map(|e| e.bursts.len()).sum();

    let mut out = StageOutputs::new(&cfg.out);
    out.add("bursts.csv", csv_with_hash(&hash, &csv));
    out.add_json(
        BURSTS,
        &Envelope {
            config_hash: hash,
            body: BurstsBody {
                params: cfg.bursts,
                entities,
            },
        },
    )?;
    let c = counts(&[
        ("entities", json!(dataset.len())),
        ("entities_with_bursts", json!(with)),
        ("bursts", json!(total)),
    ]);
    out.commit(manifest(cfg, Stage::Bursts, vec![input_digest(cfg, DATASET)?], c))?;
    p.say("bursts done");
    Ok(())
}

fn load_bursts(cfg: &PipelineConfig, dataset: &Dataset) -> Result<Vec<EntityBursts>> {
    let body: BurstsBody = read_json(&cfg.out, BURSTS, &cfg.stage_hash(Stage::Bursts), "bursts")?;
    let aligned = body.entities.len() == dataset.len()
        && body.entities.iter().zip(&dataset.entities).all(|(b, e)| b.entity_id == e.id());
    if !aligned {
        return Err(CliError::Input(format!("{BURSTS} does not match {DATASET}; rerun `emerge bursts`")));
    }
    Ok(body.entities)
}

/// Largest population whose condensed matrix, plus the working copy made by
/// the clustering step, fits in `budget` bytes.
pub fn max_entities(budget: u64) -> usize {
    let cells = budget / 16;
    // m (m - 1) / 2 <= cells
    let mut m = ((2.0 * cells as f64).sqrt() as u64).saturating_add(1);
    while m > 1 && m * (m - 1) / 2 > cells {
        m -= 1;
    }
    m as usize
}

#[derive(Serialize, Deserialize)]
struct DistanceMeta {
    n: usize,
    population: usize,
    subsampled: bool,
    tile: usize,
    sha256: String,
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct DendrogramBody {
    dendrogram: Dendrogram,
}

#[derive(Serialize, Deserialize)]
struct TruncatedBody {
    levels: usize,
    node_count: usize,
    tree: TruncatedNode,
}

fn cluster(cfg: &PipelineConfig, p: &Progress) -> Result<()> {
    let dataset = load_dataset(cfg)?;
    let bursts = load_bursts(cfg, &dataset)?;
    let profiles: Vec<RelativeBurstProfile> = bursts
        .iter()
        .map(|b| to_relative_profile(&b.entity_id, &b.to_burst_set(&cfg.bursts)))
        .collect();
    let population = profiles.len();
    if population < 2 {
        return Err(CliError::Input(format!("clustering needs at least two entities, dataset has {population}")));
    }
    let cap = max_entities(cfg.mem_budget).max(2);
    let profiles: Vec<RelativeBurstProfile> = if population > cap {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut idx = rand::seq::index::sample(&mut rng, population, cap).into_vec();
        idx.sort_unstable();
        p.say(format!("memory budget allows {cap} of {population} entities; subsampling with seed {}", cfg.seed));
        idx.into_iter().map(|i| profiles[i].clone()).collect()
    } else {
        profiles
    };
    let labels: Vec<String> = profiles.iter().map(|p| p.entity_id.clone()).collect();
    let n = labels.len();
    for &k in &cfg.k {
        if k > n {
            return Err(CliError::Input(format!("--k {k} exceeds the {n} clustered entities")));
        }
    }

    let dist_hash = cfg.stage_hash(Stage::Distance);
    let bin_path = cfg.out.join(DISTANCE_BIN);
    let reusable = read_json::<DistanceMeta>(&cfg.out, DISTANCE_META, &dist_hash, "cluster")
        .ok()
        .filter(|m| m.labels == labels && m.tile == TILE)
        .filter(|m| digest_file(&bin_path).map(|d| d.sha256 == m.sha256).unwrap_or(false));
    let mut out = StageOutputs::new(&cfg.out);
    if reusable.is_some() {
        p.say(format!("reusing {DISTANCE_BIN}"));
    } else {
        p.say(format!("computing {n} x {n} burst-similarity distances"));
        let tile_bytes = (TILE * TILE * 8) as u64;
        let max_resident = ((cfg.mem_budget / 4) / tile_bytes).clamp(1, 256) as usize;
        let mut tmp = crate::artifacts::temp_in(&cfg.out).map_err(|e| CliError::Internal(e.to_string()))?;
        {
            let mut w = BufWriter::with_capacity(1 << 20, tmp.as_file_mut());
            tiles::stream_matrix(&mut w, &profiles, cfg.similarity, TILE, max_resident)?;
            w.flush().map_err(|e| CliError::Internal(e.to_string()))?;
        }
        tmp.as_file().sync_all().map_err(|e| CliError::Internal(e.to_string()))?;
        tmp.persist(&bin_path).map_err(|e| CliError::Internal(e.error.to_string()))?;
        let digest = digest_file(&bin_path).map_err(|e| CliError::Internal(e.to_string()))?;
        let meta = Envelope {
            config_hash: dist_hash,
            body: DistanceMeta {
                n,
                population,
                subsampled: n < population,
                tile: TILE,
                sha256: digest.sha256,
                labels: labels.clone(),
            },
        };
        let mut data = serde_json::to_vec_pretty(&meta).map_err(|e| CliError::Internal(e.to_string()))?;
        data.push(b'\n');
        crate::artifacts::write_atomic(&cfg.out.join(DISTANCE_META), &data)
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    out.add_existing(digest_file(&bin_path).map_err(|e| CliError::Internal(e.to_string()))?);
    out.add_existing(digest_file(&cfg.out.join(DISTANCE_META)).map_err(|e| CliError::Internal(e.to_string()))?);

    let dm = tiles::read_matrix(&mut open_input(&bin_path)?, labels)?;
    p.say("ward clustering");
    let dendrogram = hac_ward(&dm)?;
    drop(dm);

    let hash = cfg.stage_hash(Stage::Cluster);
    let mut sizes = Map::new();
    for &k in &cfg.k {
        let flat = cut(&dendrogram, k)?;
        let mut csv = String::from("entity_id,cluster\n");
        for (id, c) in dendrogram.labels.iter().zip(&flat.labels) {
            csv.push_str(&format!("{id},{c}\n"));
        }
        out.add(clusters_file(k), csv_with_hash(&hash, &csv));
        sizes.insert(format!("k{k}"), json!(flat.sizes()));
    }
    let tree = truncate(&dendrogram, cfg.levels);
    out.add_json(
        "dendrogram_truncated.json",
        &Envelope {
            config_hash: hash.clone(),
            body: TruncatedBody {
                levels: cfg.levels,
                node_count: tree.node_count(),
                tree,
            },
        },
    )?;
    out.add_json(
        DENDROGRAM,
        &Envelope {
            config_hash: hash,
            body: DendrogramBody { dendrogram },
        },
    )?;
    let c = counts(&[
        ("population", json!(population)),
        ("clustered", json!(n)),
        ("cluster_sizes", Value::Object(sizes)),
    ]);
    let inputs = vec![input_digest(cfg, DATASET)?, input_digest(cfg, BURSTS)?];
    out.commit(manifest(cfg, Stage::Cluster, inputs, c))?;
    p.say("cluster done");
    Ok(())
}

/// Entity ids and cluster ids of one flat cut.
fn load_clusters(cfg: &PipelineConfig, k: usize) -> Result<Vec<(String, usize)>> {
    let name = clusters_file(k);
    read_csv(&cfg.out, &name, &cfg.stage_hash(Stage::Cluster), "cluster")?
        .into_iter()
        .map(|line| {
            let (id, c) = line
                .rsplit_once(',')
                .ok_or_else(|| CliError::Input(format!("{name}: bad line `{line}`")))?;
            let c = c.parse().map_err(|_| CliError::Input(format!("{name}: bad cluster id `{c}`")))?;
            Ok((id.to_owned(), c))
        })
        .collect()
}

struct Group {
    k: usize,
    cluster: usize,
    name: String,
    members: Vec<usize>,
}

/// Groups of every configured cut, as dataset indices. With k = 2 the
/// cluster whose signature peaks earlier is named EB and the other LB.
fn cluster_groups(cfg: &PipelineConfig, dataset: &Dataset, series: &[Vec<f64>]) -> Result<Vec<(Group, emerge_core::analysis::GroupSignature)>> {
    let mut out = Vec::new();
    for &k in &cfg.k {
        let assign = load_clusters(cfg, k)?;
        let mut members = vec![Vec::new(); k];
        for (id, c) in &assign {
            let idx = dataset
                .entities
                .binary_search_by(|e| e.id().cmp(id))
                .map_err(|_| CliError::Input(format!("{}: unknown entity `{id}`", clusters_file(k))))?;
            let slot = members
                .get_mut(*c)
                .ok_or_else(|| CliError::Input(format!("{}: cluster id {c} out of range", clusters_file(k))))?;
            slot.push(idx);
        }
        let sigs = members
            .par_iter()
            .map(|m| group_signature(m.iter().map(|&i| &series[i]), cfg.sig_length.get()))
            .collect::<Result<Vec<_>, _>>()?;
        let names: Vec<String> = match k {
            1 => vec!["all".into()],
            2 => {
                let early = if sigs[1].argmax_position() < sigs[0].argmax_position() { 1 } else { 0 };
                (0..2).map(|c| if c == early { "EB".into() } else { "LB".into() }).collect()
            }
            _ => (0..k).map(|c| format!("c{c}")).collect(),
        };
        for (c, (m, sig)) in members.into_iter().zip(sigs).enumerate() {
            out.push((
                Group {
                    k,
                    cluster: c,
                    name: names[c].clone(),
                    members: m,
                },
                sig,
            ));
        }
    }
    Ok(out)
}

fn dataset_series(cfg: &PipelineConfig, dataset: &Dataset) -> Vec<Vec<f64>> {
    dataset.entities.par_iter().map(|e| series_for(e, cfg.volume).as_f64()).collect()
}

fn signatures(cfg: &PipelineConfig, p: &Progress) -> Result<()> {
    let dataset = load_dataset(cfg)?;
    let series = dataset_series(cfg, &dataset);
    let groups = cluster_groups(cfg, &dataset, &series)?;
    let hash = cfg.stage_hash(Stage::Signatures);
    let mut out = StageOutputs::new(&cfg.out);
    let mut summary = Vec::new();
    for (g, sig) in &groups {
        let stem = format!("signatures/k{}_{}", g.k, g.name);
        out.add(format!("{stem}.csv"), csv_with_hash(&hash, &sig.to_csv()));
        let title = format!("k = {}, cluster {} ({})", g.k, g.cluster, g.name);
        out.add(format!("{stem}.svg"), signature_svg(&title, sig, Some(&format!("config_hash={hash}"))));
        summary.push(json!({
            "k": g.k,
            "cluster": g.cluster,
            "name": g.name,
            "n_members": sig.n_members,
            "length": sig.length,
            "argmax_position": sig.argmax_position(),
        }));
    }
    out.add_json(
        "signatures.json",
        &Envelope {
            config_hash: hash,
            body: json!({ "groups": summary }),
        },
    )?;
    let mut inputs = vec![input_digest(cfg, DATASET)?];
    for &k in &cfg.k {
        inputs.push(input_digest(cfg, &clusters_file(k))?);
    }
    let c = counts(&[("groups", json!(groups.len()))]);
    out.commit(manifest(cfg, Stage::Signatures, inputs, c))?;
    p.say("signatures done");
    Ok(())
}

fn features(cfg: &PipelineConfig, dataset: &Dataset, bursts: &[EntityBursts]) -> Vec<EntityFeatures> {
    dataset
        .entities
        .par_iter()
        .zip(bursts)
        .map(|(e, b)| entity_features(&series_for(e, cfg.volume), &b.to_burst_set(&cfg.bursts)))
        .collect()
}

fn stats(cfg: &PipelineConfig, p: &Progress) -> Result<()> {
    let dataset = load_dataset(cfg)?;
    let bursts = load_bursts(cfg, &dataset)?;
    let feats = features(cfg, &dataset, &bursts);
    let series = dataset_series(cfg, &dataset);
    let groups = cluster_groups(cfg, &dataset, &series)?;
    let hash = cfg.stage_hash(Stage::Stats);

    let mut rows = vec![descriptive_stats("all", &feats)?];
    let mut out = StageOutputs::new(&cfg.out);
    let mut tests = Vec::new();
    for &k in cfg.k.iter().filter(|&&k| k >= 2) {
        let members: Vec<(String, Vec<EntityFeatures>)> = groups
            .iter()
            .filter(|(g, _)| g.k == k)
            .map(|(g, _)| (format!("k{k}:{}", g.name), g.members.iter().map(|&i| feats[i]).collect()))
            .collect();
        for (name, m) in &members {
            rows.push(descriptive_stats(name, m)?);
        }
        let comparisons = compare_groups(&members);
        out.add(format!("significance_k{k}.csv"), csv_with_hash(&hash, &significance_csv(&comparisons)));
        tests.push(json!({ "k": k, "comparisons": comparisons }));
    }
    out.add("stats.csv", csv_with_hash(&hash, &stats_table_csv(&rows)));
    out.add_json(
        "stats.json",
        &Envelope {
            config_hash: hash,
            body: json!({ "groups": rows, "tests": tests }),
        },
    )?;
    let mut inputs = vec![input_digest(cfg, DATASET)?, input_digest(cfg, BURSTS)?];
    for &k in &cfg.k {
        inputs.push(input_digest(cfg, &clusters_file(k))?);
    }
    let c = counts(&[("rows", json!(rows.len()))]);
    out.commit(manifest(cfg, Stage::Stats, inputs, c))?;
    p.say("stats done");
    Ok(())
}

#[derive(Serialize)]
struct StreamsBody {
    counts: Map<String, Value>,
    lag: Option<CrossStreamLag>,
    groups: Vec<GroupStats>,
}

fn streams(cfg: &PipelineConfig, p: &Progress) -> Result<()> {
    let dataset = load_dataset(cfg)?;
    let bursts = load_bursts(cfg, &dataset)?;
    let feats = features(cfg, &dataset, &bursts);
    let hash = cfg.stage_hash(Stage::Streams);
    let partition = partition_by_stream(&dataset);
    let mut counts_by_class = Map::new();
    let mut groups = Vec::new();
    for class in StreamClass::ALL {
        let ids = partition.class(class);
        counts_by_class.insert(class.as_str().into(), json!(ids.len()));
        if ids.is_empty() {
            continue;
        }
        let members: Vec<EntityFeatures> = ids
            .iter()
            .map(|id| {
                let i = dataset.entities.binary_search_by(|e| e.id().cmp(id)).expect("partition ids come from dataset");
                feats[i]
            })
            .collect();
        groups.push(descriptive_stats(class.as_str(), &members)?);
    }
    let lag = cross_stream_lag(&dataset).ok();
    let mut out = StageOutputs::new(&cfg.out);
    out.add("streams.csv", csv_with_hash(&hash, &stats_table_csv(&groups)));
    out.add_json(
        "streams.json",
        &Envelope {
            config_hash: hash,
            body: StreamsBody {
                counts: counts_by_class.clone(),
                lag,
                groups,
            },
        },
    )?;
    let inputs = vec![input_digest(cfg, DATASET)?, input_digest(cfg, BURSTS)?];
    out.commit(manifest(cfg, Stage::Streams, inputs, counts_by_class))?;
    p.say("streams done");
    Ok(())
}

#[derive(Serialize)]
struct TypesBody {
    report: TypeReport,
}

fn types(cfg: &PipelineConfig, p: &Progress) -> Result<()> {
    let dataset = load_dataset(cfg)?;
    let bursts = load_bursts(cfg, &dataset)?;
    let feats = features(cfg, &dataset, &bursts);
    let hash = cfg.stage_hash(Stage::Types);
    let pairs: Vec<_> = dataset.entities.iter().map(|e| &e.meta).zip(feats).collect();
    let report = type_report(&pairs, cfg.min_type_count)?;
    let mut out = StageOutputs::new(&cfg.out);
    out.add("types.csv", csv_with_hash(&hash, &stats_table_csv(&report.stats_rows())));
    out.add("popularity.csv", csv_with_hash(&hash, &report.popularity_csv()));
    let n_rows = report.rows.len();
    out.add_json(
        "types.json",
        &Envelope {
            config_hash: hash,
            body: TypesBody { report },
        },
    )?;
    let inputs = vec![input_digest(cfg, DATASET)?, input_digest(cfg, BURSTS)?];
    out.commit(manifest(cfg, Stage::Types, inputs, counts(&[("rows", json!(n_rows))])))?;
    p.say("types done");
    Ok(())
}

fn synth(cfg: &PipelineConfig, args: &SynthArgs, p: &Progress) -> Result<()> {
    let (mentions, metadata, truth) = match args.preset {
        Preset::Default => {
            let config = SynthConfig {
                seed: cfg.seed,
                span: cfg.span,
                min_docs: cfg.min_docs,
                n_early: args.n_early,
                n_late: args.n_late,
                noise: args.noise,
                violations: ViolationCounts {
                    no_metadata: args.violations,
                    post_creation_only: args.violations,
                    created_after_span: args.violations,
                    too_few_docs: args.violations,
                },
                ..SynthConfig::default()
            };
            let (mut m, mut meta) = (Vec::new(), Vec::new());
            let manifest = synth::write_corpus(&config, &mut m, &mut meta)?;
            (m, meta, serde_json::to_vec_pretty(&manifest))
        }
        Preset::Curiosity => {
            let (values, planted) = series::curiosity(cfg.seed);
            let first = cfg.span.start + 30;
            let corpus = synth::corpus_from_series("Curiosity_(rover)", cfg.span, first, &values)?;
            let mut m = Vec::new();
            for r in &corpus.mentions {
                m.extend_from_slice(synth::mention_tsv_line(r).as_bytes());
                m.push(b'\n');
            }
            let mut meta = b"entity_id\tcreation_day\ttypes\tpageviews\n".to_vec();
            for e in &corpus.metas {
                meta.extend_from_slice(synth::meta_tsv_line(e).as_bytes());
                meta.push(b'\n');
            }
            let truth = json!({ "manifest": corpus.manifest, "planted_bursts": planted });
            (m, meta, serde_json::to_vec_pretty(&truth))
        }
    };
    let mut truth = truth.map_err(|e| CliError::Internal(e.to_string()))?;
    truth.push(b'\n');
    let mut out = StageOutputs::new(&cfg.out);
    out.add("mentions.tsv", mentions);
    out.add("metadata.tsv", metadata);
    out.add("truth.json", truth);
    let m = Manifest {
        stage: "synth".into(),
        config_hash: String::new(),
        version: env!("CARGO_PKG_VERSION").into(),
        settings: json!({ "seed": cfg.seed, "span": cfg.span, "preset": format!("{:?}", args.preset).to_lowercase() }),
        inputs: Vec::new(),
        outputs: Vec::new(),
        counts: Map::new(),
    };
    out.commit(m)?;
    p.say(format!("synthetic corpus written to {}", cfg.out.display()));
    Ok(())
}
