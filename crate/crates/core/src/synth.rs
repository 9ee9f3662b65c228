//! Synthetic mention corpora with planted emergence archetypes and planted
//! cascade violations.
//!
//! The generator records what it planted: every entity's category, its
//! archetype, and the filter-report counts implied by those labels. The
//! counts come from bookkeeping over planted labels only, never from
//! re-running the cascade predicates on the emitted records.

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Day, EntityMeta, FilterReport, MentionRecord, Span, Stage, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    /// Mention mass concentrated right after the first mention.
    EarlyBurst,
    /// Gradual build-up with a burst just before incorporation.
    LateBurst,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Valid,
    /// Mentioned but absent from the metadata table.
    NoMetadata,
    /// Only mentioned on or after its creation day.
    PostCreationOnly,
    /// Created after the corpus ends.
    CreatedAfterSpan,
    /// Fewer distinct pre-creation documents than `min_docs`.
    TooFewDocs,
}

impl Category {
    /// Last cascade stage the entity survives.
    fn reach(self) -> usize {
        match self {
            Category::NoMetadata => 0,
            Category::PostCreationOnly => 1,
            Category::CreatedAfterSpan => 2,
            Category::TooFewDocs => 3,
            Category::Valid => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamProfile {
    OnlyNews,
    OnlySocial,
    /// Both streams; the second one starts `lag` days after the first.
    NewsLeads,
    SocialLeads,
    Simultaneous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeSpec {
    pub name: String,
    /// Label also attached to every entity of this type.
    pub parent: Option<String>,
    /// Fraction of entities drawn into this type.
    pub share: f64,
    pub pageview_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationCounts {
    pub no_metadata: usize,
    pub post_creation_only: usize,
    pub created_after_span: usize,
    pub too_few_docs: usize,
}

impl ViolationCounts {
    pub fn none() -> Self {
        ViolationCounts {
            no_metadata: 0,
            post_creation_only: 0,
            created_after_span: 0,
            too_few_docs: 0,
        }
    }

    pub fn total(&self) -> usize {
        self.no_metadata + self.post_creation_only + self.created_after_span + self.too_few_docs
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub span: Span,
    pub min_docs: u32,
    pub n_early: usize,
    pub n_late: usize,
    pub violations: ViolationCounts,
    pub min_duration: u32,
    pub max_duration: u32,
    /// Background documents per day; scales the noise floor.
    pub noise: f64,
    /// Documents per day inside a planted burst.
    pub burst_rate: (f64, f64),
    /// Burst width as a fraction of the emergence duration.
    pub burst_width: (f64, f64),
    /// Chance that a mention lands in an existing same-day document.
    pub co_mention: f64,
    /// Chance that a mention record is repeated within its document.
    pub duplicate: f64,
    /// Post-creation mentions per entity.
    pub post_creation_mentions: u32,
    pub out_of_span_mentions: usize,
    pub malformed_lines: usize,
    /// Metadata rows for entities that are never mentioned.
    pub unmentioned_metadata: usize,
    pub stream_shares: [(StreamProfile, f64); 5],
    pub types: Vec<TypeSpec>,
    /// Fraction of entities with a pageview count.
    pub pageview_coverage: f64,
}

/// First day of the default corpus span (2011-10-07).
pub const DEFAULT_SPAN_START: Day = 15254;
/// Last day of the default corpus span (2013-05-01).
pub const DEFAULT_SPAN_END: Day = 15826;

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            span: Span {
                start: DEFAULT_SPAN_START,
                end: DEFAULT_SPAN_END,
            },
            min_docs: 5,
            n_early: 500,
            n_late: 500,
            violations: ViolationCounts {
                no_metadata: 40,
                post_creation_only: 40,
                created_after_span: 40,
                too_few_docs: 80,
            },
            min_duration: 120,
            max_duration: 500,
            noise: 0.15,
            burst_rate: (4.0, 10.0),
            burst_width: (0.03, 0.07),
            co_mention: 0.2,
            duplicate: 0.05,
            post_creation_mentions: 3,
            out_of_span_mentions: 25,
            malformed_lines: 10,
            unmentioned_metadata: 20,
            stream_shares: [
                (StreamProfile::OnlyNews, 0.30),
                (StreamProfile::OnlySocial, 0.15),
                (StreamProfile::NewsLeads, 0.30),
                (StreamProfile::SocialLeads, 0.20),
                (StreamProfile::Simultaneous, 0.05),
            ],
            types: default_types(),
            pageview_coverage: 0.9,
        }
    }
}

pub fn default_types() -> Vec<TypeSpec> {
    let t = |name: &str, parent: Option<&str>, share: f64, pageview_mean: f64| TypeSpec {
        name: name.into(),
        parent: parent.map(Into::into),
        share,
        pageview_mean,
    };
    vec![
        t("Person", None, 0.14, 21_000.0),
        t("Athlete", Some("Person"), 0.08, 14_000.0),
        t("Organisation", None, 0.10, 31_000.0),
        t("Place", None, 0.08, 8_000.0),
        t("Film", None, 0.05, 98_000.0),
        t("Band", None, 0.05, 42_000.0),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedEntity {
    pub entity_id: String,
    pub category: Category,
    pub archetype: Option<Archetype>,
    pub stream_profile: StreamProfile,
    /// Days between the first and second stream's first mention.
    pub stream_lag: Option<i64>,
    pub first_day: Day,
    pub creation_day: Day,
}

/// Ground truth written next to a generated corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub config: SynthConfig,
    pub entities: Vec<PlantedEntity>,
    pub expected_report: FilterReport,
    pub records: u64,
}

impl SynthManifest {
    pub fn valid(&self) -> impl Iterator<Item = &PlantedEntity> {
        self.entities.iter().filter(|e| e.category == Category::Valid)
    }
}

/// One emitted line of the mention file.
pub enum SynthLine<'a> {
    Record(&'a MentionRecord),
    Malformed(&'a str),
}

pub struct SynthCorpus {
    pub mentions: Vec<MentionRecord>,
    pub malformed: Vec<String>,
    pub metas: Vec<EntityMeta>,
    pub manifest: SynthManifest,
}

impl SynthCorpus {
    pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
        let mut mentions = Vec::new();
        let mut malformed = Vec::new();
        let (metas, manifest) = generate_with(config, |line| match line {
            SynthLine::Record(r) => mentions.push(r.clone()),
            SynthLine::Malformed(s) => malformed.push(s.to_owned()),
        })?;
        Ok(SynthCorpus {
            mentions,
            malformed,
            metas,
            manifest,
        })
    }
}

pub fn mention_tsv_line(r: &MentionRecord) -> String {
    format!("{}\t{}\t{}\t{}", r.doc_day, r.doc_id, r.stream, r.entity_id)
}

pub fn meta_tsv_line(m: &EntityMeta) -> String {
    let types: Vec<&str> = m.type_labels.iter().map(String::as_str).collect();
    format!(
        "{}\t{}\t{}\t{}",
        m.entity_id,
        m.creation_day,
        types.join(","),
        m.pageviews.map(|p| p.to_string()).unwrap_or_default()
    )
}

/// Writes `mentions` and `metadata` in the TSV formats and returns the
/// manifest.
pub fn write_corpus<W1: std::io::Write, W2: std::io::Write>(
    config: &SynthConfig,
    mentions: &mut W1,
    metadata: &mut W2,
) -> Result<SynthManifest> {
    let mut io_err = None;
    let (metas, manifest) = generate_with(config, |line| {
        if io_err.is_some() {
            return;
        }
        let res = match line {
            SynthLine::Record(r) => writeln!(mentions, "{}", mention_tsv_line(r)),
            SynthLine::Malformed(s) => writeln!(mentions, "{s}"),
        };
        if let Err(e) = res {
            io_err = Some(e);
        }
    })?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    writeln!(metadata, "entity_id\tcreation_day\ttypes\tpageviews")?;
    for m in &metas {
        writeln!(metadata, "{}", meta_tsv_line(m))?;
    }
    Ok(manifest)
}

struct DocPool {
    /// Day of every document, by index.
    days: Vec<Day>,
    /// Highest cascade stage reached by any record in the document.
    reach: Vec<i8>,
    by_day: HashMap<(Day, Stream), Vec<u32>>,
}

impl DocPool {
    fn fresh(&mut self, day: Day, stream: Stream, shareable: bool) -> u32 {
        let idx = self.days.len() as u32;
        self.days.push(day);
        self.reach.push(-1);
        if shareable {
            self.by_day.entry((day, stream)).or_default().push(idx);
        }
        idx
    }
}

struct Emitter<'s, F: FnMut(SynthLine<'_>)> {
    sink: &'s mut F,
    pool: DocPool,
    stage_entities: [u64; 5],
    stage_mentions: [u64; 5],
    records: u64,
    co_mention: f64,
    duplicate: f64,
}

impl<F: FnMut(SynthLine<'_>)> Emitter<'_, F> {
    fn emit(&mut self, entity_id: &str, day: Day, doc: u32, stream: Stream, reach: i8) {
        let rec = MentionRecord {
            doc_day: day,
            doc_id: format!("d{doc:08}"),
            stream,
            entity_id: entity_id.to_owned(),
        };
        (self.sink)(SynthLine::Record(&rec));
        self.records += 1;
        if reach >= 0 {
            for s in 0..=reach as usize {
                self.stage_mentions[s] += 1;
            }
        }
        let r = &mut self.pool.reach[doc as usize];
        *r = (*r).max(reach);
    }

    /// Emits one document mention for an entity on `day`. Joins an existing
    /// same-day document when possible, never one the entity is already in.
    /// Returns the document index.
    #[allow(clippy::too_many_arguments)]
    fn mention(
        &mut self,
        rng: &mut ChaCha8Rng,
        entity_id: &str,
        used: &mut HashSet<u32>,
        day: Day,
        stream: Stream,
        reach: i8,
        allow_dup: bool,
    ) -> u32 {
        let mut doc = None;
        if rng.gen_bool(self.co_mention) {
            if let Some(list) = self.pool.by_day.get(&(day, stream)) {
                let pick = list[rng.gen_range(0..list.len())];
                if !used.contains(&pick) {
                    doc = Some(pick);
                }
            }
        }
        let doc = doc.unwrap_or_else(|| self.pool.fresh(day, stream, true));
        used.insert(doc);
        self.emit(entity_id, day, doc, stream, reach);
        if allow_dup && rng.gen_bool(self.duplicate) {
            self.emit(entity_id, day, doc, stream, reach);
        }
        doc
    }
}

fn pick_weighted<T: Copy>(rng: &mut ChaCha8Rng, items: &[(T, f64)]) -> T {
    let total: f64 = items.iter().map(|(_, w)| w).sum();
    let mut x = rng.gen_range(0.0..total);
    for &(item, w) in items {
        if x < w {
            return item;
        }
        x -= w;
    }
    items[items.len() - 1].0
}

/// Expected documents per relative-day position for an archetype.
struct RateCurve {
    archetype: Archetype,
    background: f64,
    burst_rate: f64,
    burst_width: f64,
    ramp: f64,
}

impl RateCurve {
    fn rate(&self, u: f64) -> f64 {
        match self.archetype {
            Archetype::EarlyBurst => {
                let burst = if u < self.burst_width { self.burst_rate } else { 0.0 };
                self.background + burst
            }
            Archetype::LateBurst => {
                let burst = if u >= 1.0 - self.burst_width { self.burst_rate } else { 0.0 };
                self.background + self.ramp * u * u + burst
            }
        }
    }
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).map(|p| p.sample(rng) as u64).unwrap_or(0)
}

fn validate(config: &SynthConfig) -> Result<()> {
    let span_days = config.span.end - config.span.start;
    if config.min_docs < 1 {
        return Err(Error::param("min_docs must be at least 1"));
    }
    if config.min_duration < 2 || config.min_duration > config.max_duration {
        return Err(Error::param("need 2 <= min_duration <= max_duration"));
    }
    if i64::from(config.max_duration) + 1 > span_days {
        return Err(Error::param("max_duration does not fit in the span"));
    }
    if config.min_docs as u64 > u64::from(config.min_duration) {
        return Err(Error::param("min_duration must allow min_docs distinct days"));
    }
    for (lo, hi) in [config.burst_rate, config.burst_width] {
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::param("burst ranges must satisfy 0 < lo <= hi"));
        }
    }
    if !(0.0..=1.0).contains(&config.co_mention) || !(0.0..=1.0).contains(&config.duplicate) {
        return Err(Error::param("probabilities must be in [0, 1]"));
    }
    Ok(())
}

/// Streams the corpus through `sink` and returns the metadata table and
/// the manifest.
pub fn generate_with<F>(config: &SynthConfig, mut sink: F) -> Result<(Vec<EntityMeta>, SynthManifest)>
where
    F: FnMut(SynthLine<'_>),
{
    validate(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let span = config.span;

    let mut categories: Vec<(Category, Option<Archetype>)> = Vec::new();
    categories.extend(std::iter::repeat((Category::Valid, Some(Archetype::EarlyBurst))).take(config.n_early));
    categories.extend(std::iter::repeat((Category::Valid, Some(Archetype::LateBurst))).take(config.n_late));
    let v = &config.violations;
    for (cat, n) in [
        (Category::NoMetadata, v.no_metadata),
        (Category::PostCreationOnly, v.post_creation_only),
        (Category::CreatedAfterSpan, v.created_after_span),
        (Category::TooFewDocs, v.too_few_docs),
    ] {
        categories.extend(std::iter::repeat((cat, None)).take(n));
    }
    categories.shuffle(&mut rng);

    let mut emitter = Emitter {
        sink: &mut sink,
        pool: DocPool {
            days: Vec::new(),
            reach: Vec::new(),
            by_day: HashMap::new(),
        },
        stage_entities: [0; 5],
        stage_mentions: [0; 5],
        records: 0,
        co_mention: config.co_mention,
        duplicate: config.duplicate,
    };
    let mut metas = Vec::new();
    let mut planted = Vec::new();
    let junk_every = if config.malformed_lines > 0 {
        (categories.len() / config.malformed_lines).max(1)
    } else {
        usize::MAX
    };
    let mut junk_left = config.malformed_lines;
    let junk = ["garbage line", "15300\tdX\tblog\tE000000", "notaday\td1\tnews\tE1", "1\t2\t3"];

    for (idx, &(category, archetype)) in categories.iter().enumerate() {
        let entity_id = format!("E{idx:06}");
        let duration = i64::from(rng.gen_range(config.min_duration..=config.max_duration));
        let profile = pick_weighted(&mut rng, &config.stream_shares);
        let (first_day, creation_day) = match category {
            Category::CreatedAfterSpan => {
                let first = rng.gen_range(span.start..=span.end - 20);
                (first, span.end + rng.gen_range(1..=60))
            }
            Category::PostCreationOnly => {
                let creation = rng.gen_range(span.start + 1..=span.end - 10);
                (creation, creation)
            }
            _ => {
                let first = rng.gen_range(span.start..=span.end - duration);
                (first, first + duration)
            }
        };
        let reach = category.reach() as i8;
        for s in 0..=category.reach() {
            emitter.stage_entities[s] += 1;
        }
        let lag = match profile {
            StreamProfile::NewsLeads | StreamProfile::SocialLeads => {
                let room = (creation_day.min(span.end + 1) - first_day - 1).max(1);
                Some(rng.gen_range(1..=room.min(120)))
            }
            StreamProfile::Simultaneous => Some(0),
            _ => None,
        };
        let (lead, second) = match profile {
            StreamProfile::OnlyNews => (Stream::News, None),
            StreamProfile::OnlySocial => (Stream::Social, None),
            StreamProfile::NewsLeads => (Stream::News, Some(Stream::Social)),
            StreamProfile::SocialLeads => (Stream::Social, Some(Stream::News)),
            StreamProfile::Simultaneous => (Stream::News, Some(Stream::Social)),
        };
        let second_start = lag.map(|l| first_day + l);
        let stream_for = |rng: &mut ChaCha8Rng, day: Day| match (second, second_start) {
            (Some(s2), Some(start2)) if day >= start2 => {
                if rng.gen_bool(0.5) {
                    s2
                } else {
                    lead
                }
            }
            _ => lead,
        };

        let mut used = HashSet::new();
        match category {
            Category::Valid | Category::NoMetadata | Category::CreatedAfterSpan => {
                let pre_reach = reach;
                let last_pre = creation_day.min(span.end + 1) - 1;
                let len = (last_pre - first_day + 1) as f64;
                let curve = RateCurve {
                    archetype: archetype.unwrap_or(if rng.gen_bool(0.5) {
                        Archetype::EarlyBurst
                    } else {
                        Archetype::LateBurst
                    }),
                    background: config.noise,
                    burst_rate: rng.gen_range(config.burst_rate.0..=config.burst_rate.1),
                    burst_width: rng.gen_range(config.burst_width.0..=config.burst_width.1),
                    ramp: rng.gen_range(0.2..0.8),
                };
                let mut distinct = 0u32;
                for day in first_day..=last_pre {
                    let u = (day - first_day) as f64 / len;
                    let mut n = poisson(&mut rng, curve.rate(u));
                    if day == first_day {
                        n = n.max(1);
                    }
                    let forced_second = second_start == Some(day);
                    for k in 0..n {
                        let stream = if day == first_day && k == 0 {
                            lead
                        } else if forced_second && k == 0 {
                            second.expect("second stream set with lag")
                        } else {
                            stream_for(&mut rng, day)
                        };
                        emitter.mention(&mut rng, &entity_id, &mut used, day, stream, pre_reach, true);
                        distinct += 1;
                    }
                    if forced_second && n == 0 {
                        let s2 = second.expect("second stream set with lag");
                        emitter.mention(&mut rng, &entity_id, &mut used, day, s2, pre_reach, true);
                        distinct += 1;
                    }
                }
                while distinct < config.min_docs {
                    let day = rng.gen_range(first_day..=last_pre);
                    let stream = stream_for(&mut rng, day);
                    emitter.mention(&mut rng, &entity_id, &mut used, day, stream, pre_reach, false);
                    distinct += 1;
                }
                if creation_day <= span.end {
                    let post_reach = if category == Category::NoMetadata { 0 } else { 1 };
                    for _ in 0..config.post_creation_mentions {
                        let day = rng.gen_range(creation_day..=span.end);
                        let stream = stream_for(&mut rng, day);
                        emitter.mention(&mut rng, &entity_id, &mut used, day, stream, post_reach, true);
                    }
                }
            }
            Category::PostCreationOnly => {
                let n = rng.gen_range(config.min_docs..config.min_docs + 10);
                for k in 0..n {
                    let day = if k == 0 {
                        creation_day
                    } else {
                        rng.gen_range(creation_day..=span.end)
                    };
                    let stream = stream_for(&mut rng, day);
                    emitter.mention(&mut rng, &entity_id, &mut used, day, stream, reach, true);
                }
            }
            Category::TooFewDocs => {
                let k = rng.gen_range(1..config.min_docs.max(2)).min(config.min_docs - 1).max(1);
                let mut days: Vec<Day> = (0..k).map(|_| rng.gen_range(first_day..creation_day)).collect();
                days.sort_unstable();
                for (i, &day) in days.iter().enumerate() {
                    let stream = if i == 0 { lead } else { stream_for(&mut rng, day) };
                    emitter.mention(&mut rng, &entity_id, &mut used, day, stream, reach, true);
                }
                // Repeats inside known documents never add a distinct document.
                let doc = *used.iter().min().expect("at least one document");
                let day = emitter.pool.days[doc as usize];
                emitter.emit(&entity_id, day, doc, lead, reach);
                for _ in 0..config.post_creation_mentions {
                    let day = rng.gen_range(creation_day..=span.end);
                    let stream = stream_for(&mut rng, day);
                    emitter.mention(&mut rng, &entity_id, &mut used, day, stream, 1, true);
                }
            }
        }

        if idx % junk_every == junk_every - 1 && junk_left > 0 {
            (emitter.sink)(SynthLine::Malformed(junk[junk_left % junk.len()]));
            junk_left -= 1;
        }

        if category != Category::NoMetadata {
            metas.push(random_meta(&mut rng, config, &entity_id, creation_day));
        }
        planted.push(PlantedEntity {
            entity_id,
            category,
            archetype: if category == Category::Valid { archetype } else { None },
            stream_profile: profile,
            stream_lag: lag,
            first_day,
            creation_day,
        });
    }
    while junk_left > 0 {
        (emitter.sink)(SynthLine::Malformed(junk[junk_left % junk.len()]));
        junk_left -= 1;
    }

    // Out-of-span records reference otherwise valid entities and get their
    // own documents.
    let valid_ids: Vec<&str> = planted
        .iter()
        .filter(|p| p.category == Category::Valid)
        .map(|p| p.entity_id.as_str())
        .collect();
    for i in 0..config.out_of_span_mentions {
        let Some(&entity_id) = valid_ids.get(rng.gen_range(0..valid_ids.len().max(1))) else {
            break;
        };
        let day = if i % 2 == 0 {
            span.start - rng.gen_range(1..=30)
        } else {
            span.end + rng.gen_range(1..=30)
        };
        let doc = emitter.pool.fresh(day, Stream::News, false);
        emitter.emit(entity_id, day, doc, Stream::News, -1);
    }

    for i in 0..config.unmentioned_metadata {
        let id = format!("U{i:06}");
        let creation = rng.gen_range(span.start..=span.end);
        metas.push(random_meta(&mut rng, config, &id, creation));
    }

    let mut report = FilterReport::empty(span, config.min_docs);
    for (s, stage) in report.stages.iter_mut().enumerate() {
        debug_assert_eq!(stage.stage, Stage::CASCADE[s]);
        stage.entities = emitter.stage_entities[s];
        stage.mentions = emitter.stage_mentions[s];
        stage.documents = emitter.pool.reach.iter().filter(|&&r| r >= s as i8).count() as u64;
    }
    report.malformed_lines = config.malformed_lines as u64;
    report.out_of_span_mentions = valid_ids.len().min(1) as u64 * config.out_of_span_mentions as u64;
    report.unmatched_entities = planted.iter().filter(|p| p.category == Category::NoMetadata).count() as u64;
    report.unmatched_mentions = emitter.stage_mentions[0] - emitter.stage_mentions[1];

    let manifest = SynthManifest {
        config: config.clone(),
        entities: planted,
        expected_report: report,
        records: emitter.records,
    };
    Ok((metas, manifest))
}

fn random_meta(rng: &mut ChaCha8Rng, config: &SynthConfig, entity_id: &str, creation_day: Day) -> EntityMeta {
    let mut labels = BTreeSet::new();
    let mut pv_mean = None;
    let draw = rng.gen_range(0.0..1.0);
    let mut acc = 0.0;
    for t in &config.types {
        acc += t.share;
        if draw < acc {
            labels.insert(t.name.clone());
            if let Some(p) = &t.parent {
                labels.insert(p.clone());
            }
            pv_mean = Some(t.pageview_mean);
            break;
        }
    }
    let pv_mean = pv_mean.unwrap_or(5_000.0);
    let pageviews = rng
        .gen_bool(config.pageview_coverage)
        .then(|| rng.gen_range(0.5 * pv_mean..1.5 * pv_mean).round() as u64);
    EntityMeta {
        entity_id: entity_id.to_owned(),
        creation_day,
        type_labels: labels,
        pageviews,
    }
}

/// Corpus holding a single entity whose daily document counts are exactly
/// `values`, all in the news stream, created the day after the series ends.
pub fn corpus_from_series(entity_id: &str, span: Span, first_day: Day, values: &[u32]) -> Result<SynthCorpus> {
    let creation_day = first_day + values.len() as Day;
    if values.first().copied().unwrap_or(0) == 0 {
        return Err(Error::param("series must start with a mention"));
    }
    if first_day < span.start || creation_day > span.end {
        return Err(Error::param("series does not fit in the span"));
    }
    let mut mentions = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        for _ in 0..v {
            mentions.push(MentionRecord {
                doc_day: first_day + i as Day,
                doc_id: format!("d{:08}", mentions.len()),
                stream: Stream::News,
                entity_id: entity_id.to_owned(),
            });
        }
    }
    let n = mentions.len() as u64;
    let mut report = FilterReport::empty(span, 1);
    let retained = n >= 1;
    for stage in &mut report.stages {
        stage.entities = u64::from(retained);
        stage.mentions = n;
        stage.documents = n;
    }
    let meta = EntityMeta {
        entity_id: entity_id.to_owned(),
        creation_day,
        type_labels: BTreeSet::new(),
        pageviews: None,
    };
    let config = SynthConfig {
        span,
        min_docs: 1,
        n_early: 0,
        n_late: 0,
        violations: ViolationCounts::none(),
        out_of_span_mentions: 0,
        malformed_lines: 0,
        unmentioned_metadata: 0,
        ..SynthConfig::default()
    };
    let manifest = SynthManifest {
        config,
        entities: vec![PlantedEntity {
            entity_id: entity_id.to_owned(),
            category: Category::Valid,
            archetype: None,
            stream_profile: StreamProfile::OnlyNews,
            stream_lag: None,
            first_day,
            creation_day,
        }],
        expected_report: report,
        records: n,
    };
    Ok(SynthCorpus {
        mentions,
        malformed: Vec::new(),
        metas: vec![meta],
        manifest,
    })
}

/// Stand-alone series generators with known planted structure.
pub mod series {
    use super::*;

    /// A rectangular burst `[start, start + width)` of the given height.
    #[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
    pub struct PlantedBurst {
        pub start: usize,
        pub width: usize,
        pub height: f64,
    }

    impl PlantedBurst {
        pub fn center(&self) -> usize {
            self.start + (self.width - 1) / 2
        }
    }

    /// Zero series of length `len` plus the given rectangles.
    pub fn rectangles(len: usize, bursts: &[PlantedBurst]) -> Vec<f64> {
        let mut x = vec![0.0; len];
        for b in bursts {
            for v in &mut x[b.start..(b.start + b.width).min(len)] {
                *v += b.height;
            }
        }
        x
    }

    /// Gaussian background (mean `level`, std `sigma`, clipped at zero)
    /// with 1 to `max_bursts` well-separated rectangles of height
    /// `snr * sigma`.
    pub fn noisy_bursts(rng: &mut ChaCha8Rng, snr: f64, max_bursts: usize) -> (Vec<f64>, Vec<PlantedBurst>) {
        let len = rng.gen_range(200..=400);
        let sigma = 1.0;
        let level = 4.0;
        let n = rng.gen_range(1..=max_bursts.max(1));
        let height = snr * sigma;
        let gap = 40;
        let mut bursts = Vec::with_capacity(n);
        // Slots keep bursts apart by at least `gap` days.
        let slot = len / n;
        for i in 0..n {
            let width = rng.gen_range(10..=18).min(slot.saturating_sub(gap).max(4));
            let lo = i * slot + gap / 2;
            let hi = ((i + 1) * slot).saturating_sub(width + gap / 2).max(lo);
            let start = rng.gen_range(lo..=hi);
            bursts.push(PlantedBurst { start, width, height });
        }
        let noise = Normal::new(level, sigma).expect("valid normal");
        let mut x: Vec<f64> = (0..len).map(|_| noise.sample(rng).max(0.0)).collect();
        for b in &bursts {
            for v in &mut x[b.start..b.start + b.width] {
                *v += b.height;
            }
        }
        (x, bursts)
    }

    /// A 300-day emergence with two bursts, one shortly after the first
    /// mention and one just before incorporation.
    pub fn curiosity(seed: u64) -> (Vec<u32>, Vec<PlantedBurst>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bursts = vec![
            PlantedBurst {
                start: 28,
                width: 5,
                height: 50.0,
            },
            PlantedBurst {
                start: 283,
                width: 5,
                height: 80.0,
            },
        ];
        let mut values = vec![0u32; 300];
        values[0] = 1;
        for b in &bursts {
            for v in &mut values[b.start..b.start + b.width] {
                *v = poisson(&mut rng, b.height) as u32;
            }
        }
        (values, bursts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_early: 20,
            n_late: 20,
            violations: ViolationCounts {
                no_metadata: 3,
                post_creation_only: 3,
                created_after_span: 3,
                too_few_docs: 3,
            },
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let mut a = (Vec::new(), Vec::new());
        let mut b = (Vec::new(), Vec::new());
        write_corpus(&small(), &mut a.0, &mut a.1).unwrap();
        write_corpus(&small(), &mut b.0, &mut b.1).unwrap();
        assert_eq!(a, b);
        let mut c = (Vec::new(), Vec::new());
        write_corpus(&SynthConfig { seed: 9, ..small() }, &mut c.0, &mut c.1).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn manifest_counts_categories() {
        let corpus = SynthCorpus::generate(&small()).unwrap();
        let r = &corpus.manifest.expected_report;
        assert_eq!(r.stage(Stage::Input).entities, 52);
        assert_eq!(r.stage(Stage::Joined).entities, 49);
        assert_eq!(r.stage(Stage::PreCreation).entities, 46);
        assert_eq!(r.stage(Stage::CreatedInSpan).entities, 43);
        assert_eq!(r.stage(Stage::MinDocs).entities, 40);
        assert_eq!(corpus.malformed.len(), 10);
        assert_eq!(corpus.manifest.records as usize, corpus.mentions.len());
    }

    #[test]
    fn early_burst_mass_is_front_loaded() {
        let cfg = SynthConfig {
            n_early: 30,
            n_late: 0,
            violations: ViolationCounts::none(),
            post_creation_mentions: 0,
            out_of_span_mentions: 0,
            ..SynthConfig::default()
        };
        let corpus = SynthCorpus::generate(&cfg).unwrap();
        for p in corpus.manifest.valid() {
            let duration = (p.creation_day - p.first_day) as f64;
            let cutoff = p.first_day as f64 + 0.15 * duration;
            let days: Vec<Day> = corpus
                .mentions
                .iter()
                .filter(|m| m.entity_id == p.entity_id)
                .map(|m| m.doc_day)
                .collect();
            let early = days.iter().filter(|&&d| (d as f64) < cutoff).count();
            assert!(early * 2 > days.len(), "{}: {early}/{}", p.entity_id, days.len());
        }
    }

    #[test]
    fn curiosity_has_two_planted_neighborhoods() {
        let (values, bursts) = series::curiosity(3);
        assert_eq!(values.len(), 300);
        let rel: Vec<f64> = bursts.iter().map(|b| b.center() as f64 / 300.0).collect();
        assert!((rel[0] - 0.1).abs() < 0.02 && (rel[1] - 0.95).abs() < 0.02);
        for (i, &v) in values.iter().enumerate().skip(1) {
            let inside = bursts.iter().any(|b| (b.start..b.start + b.width).contains(&i));
            if !inside {
                assert_eq!(v, 0, "day {i}");
            }
        }
    }

    #[test]
    fn series_corpus_round_trips() {
        use crate::ingest::MetaTable;
        let (values, _) = series::curiosity(1);
        let span = Span { start: 0, end: 400 };
        let corpus = corpus_from_series("Curiosity", span, 10, &values).unwrap();
        let metas: MetaTable = corpus.metas.iter().cloned().collect::<Result<_>>().unwrap();
        let (ds, report) = crate::ingest::build_dataset(&corpus.mentions, &metas, span, 1).unwrap();
        assert_eq!(report, corpus.manifest.expected_report);
        let s = crate::timeseries::series_for(&ds.entities[0], crate::timeseries::VolumeMode::Documents);
        assert_eq!(s.values, values);
    }

    #[test]
    fn rejects_impossible_config() {
        let cfg = SynthConfig {
            max_duration: 10_000,
            ..SynthConfig::default()
        };
        assert!(SynthCorpus::generate(&cfg).is_err());
    }
}
