//! Mention-stream and metadata ingestion, the knowledge-base join, and the
//! filtering cascade that yields the emerging-entity dataset.
//!
//! Every predicate in the cascade is per-entity, so a [`DatasetBuilder`] can
//! be fed shards of the stream independently and merged afterwards.

use std::borrow::Borrow;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Day index: whole days since 1970-01-01 (UTC).
pub type Day = i64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    News,
    Social,
}

impl Stream {
    pub const ALL: [Stream; 2] = [Stream::News, Stream::Social];

    pub fn as_str(self) -> &'static str {
        match self {
            Stream::News => "news",
            Stream::Social => "social",
        }
    }
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stream {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "news" => Ok(Stream::News),
            "social" => Ok(Stream::Social),
            other => Err(Error::param(format!("unknown stream tag `{other}`"))),
        }
    }
}

/// Set of streams a document was tagged with.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StreamMask(u8);

impl StreamMask {
    pub const NEWS: StreamMask = StreamMask(1);
    pub const SOCIAL: StreamMask = StreamMask(2);

    pub fn of(stream: Stream) -> Self {
        match stream {
            Stream::News => Self::NEWS,
            Stream::Social => Self::SOCIAL,
        }
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn from_bits(bits: u8) -> Self {
        StreamMask(bits & 3)
    }

    pub fn contains(self, stream: Stream) -> bool {
        self.0 & Self::of(stream).0 != 0
    }

    pub fn insert(&mut self, stream: Stream) {
        self.0 |= Self::of(stream).0;
    }

    pub fn union(self, other: StreamMask) -> Self {
        StreamMask(self.0 | other.0)
    }

    /// Stream a document is counted under when a single attribution is
    /// needed. A document tagged with both streams goes to news.
    pub fn primary(self) -> Option<Stream> {
        if self.contains(Stream::News) {
            Some(Stream::News)
        } else if self.contains(Stream::Social) {
            Some(Stream::Social)
        } else {
            None
        }
    }
}

/// One (document, entity) co-occurrence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionRecord {
    pub doc_day: Day,
    pub doc_id: String,
    pub stream: Stream,
    pub entity_id: String,
}

/// Knowledge-base facts about one entity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMeta {
    pub entity_id: String,
    /// Day the encyclopedia page was created.
    pub creation_day: Day,
    /// Ontology classes; empty means the null class.
    pub type_labels: BTreeSet<String>,
    pub pageviews: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: Day,
    pub end: Day,
}

impl Span {
    pub fn new(start: Day, end: Day) -> Result<Self> {
        if start > end {
            return Err(Error::param(format!("span start {start} is after end {end}")));
        }
        Ok(Span { start, end })
    }

    pub fn contains(&self, day: Day) -> bool {
        self.start <= day && day <= self.end
    }

    pub fn days(&self) -> i64 {
        self.end - self.start + 1
    }
}

impl FromStr for Span {
    type Err = Error;

    /// `A:B` where each side is a day index or a date.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| Error::param(format!("span `{s}` is not of the form A:B")))?;
        let start = parse_day(a.trim()).ok_or_else(|| Error::param(format!("bad span start `{a}`")))?;
        let end = parse_day(b.trim()).ok_or_else(|| Error::param(format!("bad span end `{b}`")))?;
        Span::new(start, end)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start, self.end)
    }
}

/// Parses a day index, a calendar date (`2012-08-06`) or a timestamp
/// (`2012-08-06T05:17:57Z`, `2012-08-06 05:17:57`). Timestamps are truncated
/// to their UTC calendar day.
pub fn parse_day(s: &str) -> Option<Day> {
    if let Ok(day) = s.parse::<i64>() {
        return Some(day);
    }
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1)?;
    if let Ok(date) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some((date - epoch).num_days());
    }
    if let Ok(ts) = DateTime::parse_from_rfc3339(s) {
        return Some((ts.naive_utc().date() - epoch).num_days());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(ts) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some((ts.date() - epoch).num_days());
        }
    }
    None
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MentionFormat {
    #[default]
    Tsv,
    JsonLines,
}

impl FromStr for MentionFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(MentionFormat::Tsv),
            "jsonl" | "json-lines" | "jsonlines" => Ok(MentionFormat::JsonLines),
            other => Err(Error::param(format!("unknown mention format `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ParseMode {
    #[default]
    Lenient,
    Strict,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DayField {
    Index(i64),
    Text(String),
}

#[derive(Deserialize)]
struct JsonMention {
    doc_day: DayField,
    doc_id: String,
    stream: String,
    entity_id: String,
}

fn parse_tsv_mention(line: &str) -> std::result::Result<MentionRecord, String> {
    let mut fields = line.split('\t');
    let (Some(day), Some(doc), Some(stream), Some(entity), None) =
        (fields.next(), fields.next(), fields.next(), fields.next(), fields.next())
    else {
        return Err("expected 4 tab-separated fields".into());
    };
    let doc_day = parse_day(day).ok_or_else(|| format!("bad doc_day `{day}`"))?;
    let stream = stream.parse::<Stream>().map_err(|e| e.to_string())?;
    if doc.is_empty() || entity.is_empty() {
        return Err("empty doc_id or entity_id".into());
    }
    Ok(MentionRecord {
        doc_day,
        doc_id: doc.to_owned(),
        stream,
        entity_id: entity.to_owned(),
    })
}

fn parse_json_mention(line: &str) -> std::result::Result<MentionRecord, String> {
    let raw: JsonMention = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let doc_day = match raw.doc_day {
        DayField::Index(d) => d,
        DayField::Text(s) => parse_day(&s).ok_or_else(|| format!("bad doc_day `{s}`"))?,
    };
    let stream = raw.stream.parse::<Stream>().map_err(|e| e.to_string())?;
    if raw.doc_id.is_empty() || raw.entity_id.is_empty() {
        return Err("empty doc_id or entity_id".into());
    }
    Ok(MentionRecord {
        doc_day,
        doc_id: raw.doc_id,
        stream,
        entity_id: raw.entity_id,
    })
}

/// Streaming mention parser. Blank lines, `#` comments and a leading
/// `doc_day` header are skipped without being counted as malformed.
pub struct MentionReader<R> {
    source: R,
    format: MentionFormat,
    mode: ParseMode,
    line_no: usize,
    malformed: u64,
    buf: String,
    done: bool,
}

pub fn parse_mentions<R: BufRead>(source: R, format: MentionFormat, mode: ParseMode) -> MentionReader<R> {
    MentionReader {
        source,
        format,
        mode,
        line_no: 0,
        malformed: 0,
        buf: String::new(),
        done: false,
    }
}

impl<R> MentionReader<R> {
    /// Lines skipped as malformed so far (lenient mode).
    pub fn malformed(&self) -> u64 {
        self.malformed
    }

    pub fn lines_read(&self) -> usize {
        self.line_no
    }
}

impl<R: BufRead> Iterator for MentionReader<R> {
    type Item = Result<MentionRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            self.buf.clear();
            match self.source.read_line(&mut self.buf) {
                Ok(0) => self.done = true,
                Ok(_) => {
                    self.line_no += 1;
                    let line = self.buf.trim_end_matches(['\n', '\r']);
                    if line.trim().is_empty() || line.starts_with('#') {
                        continue;
                    }
                    if self.line_no == 1 && self.format == MentionFormat::Tsv && line.starts_with("doc_day\t") {
                        continue;
                    }
                    let parsed = match self.format {
                        MentionFormat::Tsv => parse_tsv_mention(line),
                        MentionFormat::JsonLines => parse_json_mention(line),
                    };
                    match parsed {
                        Ok(rec) => return Some(Ok(rec)),
                        Err(reason) => match self.mode {
                            ParseMode::Lenient => self.malformed += 1,
                            ParseMode::Strict => {
                                self.done = true;
                                return Some(Err(Error::Malformed {
                                    line: self.line_no,
                                    reason,
                                }));
                            }
                        },
                    }
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e.into()));
                }
            }
        }
        None
    }
}

/// Entity metadata keyed by entity id.
#[derive(Clone, Debug, Default)]
pub struct MetaTable {
    by_id: HashMap<String, EntityMeta>,
}

impl MetaTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, meta: EntityMeta) -> Result<()> {
        if self.by_id.contains_key(&meta.entity_id) {
            return Err(Error::DuplicateEntity(meta.entity_id));
        }
        self.by_id.insert(meta.entity_id.clone(), meta);
        Ok(())
    }

    pub fn get(&self, entity_id: &str) -> Option<&EntityMeta> {
        self.by_id.get(entity_id)
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &EntityMeta> {
        self.by_id.values()
    }
}

impl FromIterator<EntityMeta> for Result<MetaTable> {
    fn from_iter<I: IntoIterator<Item = EntityMeta>>(iter: I) -> Self {
        let mut table = MetaTable::new();
        for meta in iter {
            table.insert(meta)?;
        }
        Ok(table)
    }
}

fn parse_meta_line(line: &str) -> std::result::Result<EntityMeta, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if !(3..=4).contains(&fields.len()) {
        return Err(format!("expected 3 or 4 tab-separated fields, got {}", fields.len()));
    }
    let entity_id = fields[0];
    if entity_id.is_empty() {
        return Err("empty entity_id".into());
    }
    let creation_day = parse_day(fields[1]).ok_or_else(|| format!("bad creation_day `{}`", fields[1]))?;
    let type_labels = fields[2]
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect();
    let pageviews = match fields.get(3).map(|s| s.trim()) {
        None | Some("") => None,
        Some(pv) => Some(pv.parse::<u64>().map_err(|_| format!("bad pageviews `{pv}`"))?),
    };
    Ok(EntityMeta {
        entity_id: entity_id.to_owned(),
        creation_day,
        type_labels,
        pageviews,
    })
}

/// Parses a metadata table. Returns the table and the number of malformed
/// lines skipped. Duplicate entity ids are always an error.
pub fn parse_metadata<R: BufRead>(source: R, mode: ParseMode) -> Result<(MetaTable, u64)> {
    let mut table = MetaTable::new();
    let mut malformed = 0;
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') || (idx == 0 && line.starts_with("entity_id\t")) {
            continue;
        }
        match parse_meta_line(line) {
            Ok(meta) => table.insert(meta)?,
            Err(reason) => match mode {
                ParseMode::Lenient => malformed += 1,
                ParseMode::Strict => return Err(Error::Malformed { line: idx + 1, reason }),
            },
        }
    }
    Ok((table, malformed))
}

/// True iff the mention predates the entity's incorporation.
pub fn is_emerging_mention(record: &MentionRecord, meta: &EntityMeta) -> bool {
    record.doc_day < meta.creation_day
}

/// Days between a mention and the entity's incorporation; positive for
/// emerging mentions.
pub fn days_before_incorporation(record: &MentionRecord, meta: &EntityMeta) -> i64 {
    meta.creation_day - record.doc_day
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Every in-span mention.
    Input,
    /// Entities with a metadata row.
    Joined,
    /// Mentions dated before the entity's creation day.
    PreCreation,
    /// Entities created inside the corpus span.
    CreatedInSpan,
    /// Entities with at least `min_docs` distinct pre-creation documents.
    MinDocs,
}

impl Stage {
    pub const CASCADE: [Stage; 5] = [
        Stage::Input,
        Stage::Joined,
        Stage::PreCreation,
        Stage::CreatedInSpan,
        Stage::MinDocs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Input => "input",
            Stage::Joined => "joined",
            Stage::PreCreation => "pre_creation",
            Stage::CreatedInSpan => "created_in_span",
            Stage::MinDocs => "min_docs",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub stage: Stage,
    pub entities: u64,
    pub mentions: u64,
    pub documents: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub span: Span,
    pub min_docs: u32,
    pub stages: Vec<StageCounts>,
    pub malformed_lines: u64,
    pub out_of_span_mentions: u64,
    pub unmatched_entities: u64,
    pub unmatched_mentions: u64,
}

impl FilterReport {
    pub fn empty(span: Span, min_docs: u32) -> Self {
        FilterReport {
            span,
            min_docs,
            stages: Stage::CASCADE
                .iter()
                .map(|&stage| StageCounts {
                    stage,
                    entities: 0,
                    mentions: 0,
                    documents: 0,
                })
                .collect(),
            malformed_lines: 0,
            out_of_span_mentions: 0,
            unmatched_entities: 0,
            unmatched_mentions: 0,
        }
    }

    pub fn stage(&self, stage: Stage) -> &StageCounts {
        self.stages.iter().find(|s| s.stage == stage).expect("every stage is reported")
    }

    /// Table-shaped CSV; coverage columns are percentages of the preceding
    /// stage.
    pub fn to_csv(&self) -> String {
        fn pct(cur: u64, prev: Option<u64>) -> String {
            match prev {
                Some(p) if p > 0 => format!("{:.1}", 100.0 * cur as f64 / p as f64),
                _ => String::new(),
            }
        }
        let mut out = String::from("stage,entities,entities_pct,mentions,mentions_pct,documents,documents_pct\n");
        let mut prev: Option<&StageCounts> = None;
        for s in &self.stages {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                s.stage.as_str(),
                s.entities,
                pct(s.entities, prev.map(|p| p.entities)),
                s.mentions,
                pct(s.mentions, prev.map(|p| p.mentions)),
                s.documents,
                pct(s.documents, prev.map(|p| p.documents)),
            ));
            prev = Some(s);
        }
        out
    }
}

/// One distinct document mentioning an entity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(Day, u8, u32)", into = "(Day, u8, u32)")]
pub struct DocMention {
    pub day: Day,
    pub streams: StreamMask,
    /// Mention records of the entity in this document.
    pub occurrences: u32,
}

impl From<(Day, u8, u32)> for DocMention {
    fn from((day, bits, occurrences): (Day, u8, u32)) -> Self {
        DocMention {
            day,
            streams: StreamMask::from_bits(bits),
            occurrences,
        }
    }
}

impl From<DocMention> for (Day, u8, u32) {
    fn from(d: DocMention) -> Self {
        (d.day, d.streams.bits(), d.occurrences)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmergingEntity {
    pub meta: EntityMeta,
    /// Distinct pre-creation documents, sorted by day.
    pub docs: Vec<DocMention>,
}

impl EmergingEntity {
    pub fn id(&self) -> &str {
        &self.meta.entity_id
    }

    pub fn first_day(&self) -> Day {
        self.docs[0].day
    }

    pub fn first_day_in(&self, stream: Stream) -> Option<Day> {
        self.docs.iter().find(|d| d.streams.contains(stream)).map(|d| d.day)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub span: Span,
    pub min_docs: u32,
    /// Sorted by entity id.
    pub entities: Vec<EmergingEntity>,
}

impl Dataset {
    pub fn get(&self, entity_id: &str) -> Option<&EmergingEntity> {
        self.entities
            .binary_search_by(|e| e.id().cmp(entity_id))
            .ok()
            .map(|i| &self.entities[i])
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }
}

#[derive(Clone, Copy, Debug)]
struct RawMention {
    doc: u32,
    day: Day,
    stream: Stream,
}

/// Accumulates mentions per entity. Builders over disjoint shards of a
/// stream can be merged in any order.
#[derive(Debug)]
pub struct DatasetBuilder {
    span: Span,
    doc_ids: HashMap<Box<str>, u32>,
    entities: HashMap<Box<str>, Vec<RawMention>>,
    out_of_span: u64,
    malformed: u64,
}

impl DatasetBuilder {
    pub fn new(span: Span) -> Self {
        DatasetBuilder {
            span,
            doc_ids: HashMap::new(),
            entities: HashMap::new(),
            out_of_span: 0,
            malformed: 0,
        }
    }

    fn intern_doc(&mut self, doc_id: &str) -> u32 {
        if let Some(&idx) = self.doc_ids.get(doc_id) {
            return idx;
        }
        let idx = u32::try_from(self.doc_ids.len()).expect("more than u32::MAX documents");
        self.doc_ids.insert(doc_id.into(), idx);
        idx
    }

    pub fn push(&mut self, record: &MentionRecord) {
        if !self.span.contains(record.doc_day) {
            self.out_of_span += 1;
            return;
        }
        let doc = self.intern_doc(&record.doc_id);
        let raw = RawMention {
            doc,
            day: record.doc_day,
            stream: record.stream,
        };
        match self.entities.get_mut(record.entity_id.as_str()) {
            Some(list) => list.push(raw),
            None => {
                self.entities.insert(record.entity_id.as_str().into(), vec![raw]);
            }
        }
    }

    pub fn add_malformed(&mut self, n: u64) {
        self.malformed += n;
    }

    pub fn merge(mut self, other: DatasetBuilder) -> Result<Self> {
        if self.span != other.span {
            return Err(Error::param("cannot merge builders over different spans"));
        }
        let mut remap = vec![0u32; other.doc_ids.len()];
        for (doc_id, idx) in other.doc_ids {
            remap[idx as usize] = self.intern_doc(&doc_id);
        }
        for (entity, mentions) in other.entities {
            let list = self.entities.entry(entity).or_default();
            list.extend(mentions.into_iter().map(|m| RawMention {
                doc: remap[m.doc as usize],
                ..m
            }));
        }
        self.out_of_span += other.out_of_span;
        self.malformed += other.malformed;
        Ok(self)
    }

    /// Joins against metadata and applies the cascade.
    pub fn finish(self, metas: &MetaTable, min_docs: u32) -> Result<(Dataset, FilterReport)> {
        if min_docs < 1 {
            return Err(Error::param("min_docs must be at least 1"));
        }
        let span = self.span;
        let mut report = FilterReport::empty(span, min_docs);
        report.malformed_lines = self.malformed;
        report.out_of_span_mentions = self.out_of_span;

        let n_docs = self.doc_ids.len();
        let mut doc_seen = vec![vec![false; n_docs]; Stage::CASCADE.len()];
        let mut counts = [(0u64, 0u64); 5];
        let mut mark = |stage: usize, mentions: &[RawMention], counts: &mut [(u64, u64); 5]| {
            counts[stage].0 += 1;
            counts[stage].1 += mentions.len() as u64;
            for m in mentions {
                doc_seen[stage][m.doc as usize] = true;
            }
        };

        let mut entities: Vec<(Box<str>, Vec<RawMention>)> = self.entities.into_iter().collect();
        entities.sort_unstable_by(|a, b| a.0.cmp(&b.0));

        let mut retained = Vec::new();
        for (entity_id, mentions) in entities {
            mark(0, &mentions, &mut counts);
            let Some(meta) = metas.get(&entity_id) else {
                report.unmatched_entities += 1;
                report.unmatched_mentions += mentions.len() as u64;
                continue;
            };
            mark(1, &mentions, &mut counts);

            let mut pre: Vec<RawMention> = mentions.into_iter().filter(|m| m.day < meta.creation_day).collect();
            if pre.is_empty() {
                continue;
            }
            mark(2, &pre, &mut counts);

            if !(meta.creation_day > span.start && meta.creation_day <= span.end) {
                continue;
            }
            mark(3, &pre, &mut counts);

            pre.sort_unstable_by_key(|m| (m.doc, m.day));
            let mut docs: Vec<DocMention> = Vec::new();
            let mut last_doc = None;
            for m in &pre {
                if last_doc == Some(m.doc) {
                    let d = docs.last_mut().expect("doc group open");
                    d.streams.insert(m.stream);
                    d.occurrences += 1;
                } else {
                    // Earliest day wins when one document carries several dates.
                    docs.push(DocMention {
                        day: m.day,
                        streams: StreamMask::of(m.stream),
                        occurrences: 1,
                    });
                    last_doc = Some(m.doc);
                }
            }
            if docs.len() < min_docs as usize {
                continue;
            }
            mark(4, &pre, &mut counts);
            docs.sort_unstable();
            retained.push(EmergingEntity {
                meta: meta.clone(),
                docs,
            });
        }

        for (i, stage) in report.stages.iter_mut().enumerate() {
            stage.entities = counts[i].0;
            stage.mentions = counts[i].1;
            stage.documents = doc_seen[i].iter().filter(|&&b| b).count() as u64;
        }
        let dataset = Dataset {
            span,
            min_docs,
            entities: retained,
        };
        Ok((dataset, report))
    }
}

/// One-shot convenience over [`DatasetBuilder`].
pub fn build_dataset<I>(mentions: I, metas: &MetaTable, span: Span, min_docs: u32) -> Result<(Dataset, FilterReport)>
where
    I: IntoIterator,
    I::Item: Borrow<MentionRecord>,
{
    let mut builder = DatasetBuilder::new(span);
    for m in mentions {
        builder.push(m.borrow());
    }
    builder.finish(metas, min_docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(day: Day, doc: &str, stream: Stream, entity: &str) -> MentionRecord {
        MentionRecord {
            doc_day: day,
            doc_id: doc.into(),
            stream,
            entity_id: entity.into(),
        }
    }

    fn meta(id: &str, creation_day: Day) -> EntityMeta {
        EntityMeta {
            entity_id: id.into(),
            creation_day,
            type_labels: BTreeSet::new(),
            pageviews: None,
        }
    }

    #[test]
    fn parses_tsv_line() {
        let input = "15432\td001\tnews\tQ42\n";
        let recs: Vec<_> = parse_mentions(input.as_bytes(), MentionFormat::Tsv, ParseMode::Strict)
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(recs, vec![rec(15432, "d001", Stream::News, "Q42")]);
    }

    #[test]
    fn empty_input_is_empty_stream() {
        let mut reader = parse_mentions(&b""[..], MentionFormat::Tsv, ParseMode::Lenient);
        assert!(reader.next().is_none());
        assert_eq!(reader.malformed(), 0);
    }

    #[test]
    fn lenient_skips_unknown_stream() {
        let input = "1\td1\tblog\tQ1\n2\td2\tsocial\tQ1\n";
        let mut reader = parse_mentions(input.as_bytes(), MentionFormat::Tsv, ParseMode::Lenient);
        let recs: Vec<_> = reader.by_ref().collect::<Result<_>>().unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(reader.malformed(), 1);
    }

    #[test]
    fn strict_aborts_with_line_number() {
        let input = "1\td1\tnews\tQ1\n\n2\td2\tblog\tQ1\n3\td3\tnews\tQ1\n";
        let out: Vec<_> = parse_mentions(input.as_bytes(), MentionFormat::Tsv, ParseMode::Strict).collect();
        assert_eq!(out.len(), 2);
        match &out[1] {
            Err(Error::Malformed { line, .. }) => assert_eq!(*line, 3),
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn parses_json_lines_and_dates() {
        let input = r#"{"doc_day": 15432, "doc_id": "d001", "stream": "news", "entity_id": "Q42"}
{"doc_day": "2012-08-06T05:17:57Z", "doc_id": "d002", "stream": "social", "entity_id": "Q42"}
"#;
        let recs: Vec<_> = parse_mentions(input.as_bytes(), MentionFormat::JsonLines, ParseMode::Strict)
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(recs[0], rec(15432, "d001", Stream::News, "Q42"));
        assert_eq!(recs[1].doc_day, parse_day("2012-08-06").unwrap());
    }

    #[test]
    fn timestamps_truncate_to_utc_day() {
        let d = parse_day("2012-08-06").unwrap();
        assert_eq!(parse_day("2012-08-06T23:59:59Z"), Some(d));
        assert_eq!(parse_day("2012-08-06T23:30:00-02:00"), Some(d + 1));
        assert_eq!(parse_day("1970-01-02"), Some(1));
    }

    #[test]
    fn metadata_fields() {
        let input = "entity_id\tcreation_day\ttypes\tpageviews\nQ1\t100\tPerson,Athlete\t42\nQ2\t200\t\t\nQ3\t300\t\n";
        let (table, bad) = parse_metadata(input.as_bytes(), ParseMode::Strict).unwrap();
        assert_eq!(bad, 0);
        let q1 = table.get("Q1").unwrap();
        assert_eq!(q1.type_labels.len(), 2);
        assert_eq!(q1.pageviews, Some(42));
        assert!(table.get("Q2").unwrap().type_labels.is_empty());
        assert_eq!(table.get("Q2").unwrap().pageviews, None);
        assert_eq!(table.get("Q3").unwrap().creation_day, 300);
    }

    #[test]
    fn duplicate_metadata_rejected() {
        let input = "Q1\t100\t\t\nQ1\t101\t\t\n";
        assert!(matches!(
            parse_metadata(input.as_bytes(), ParseMode::Lenient),
            Err(Error::DuplicateEntity(_))
        ));
    }

    #[test]
    fn emerging_predicate() {
        let m = meta("Q", 100);
        assert!(is_emerging_mention(&rec(40, "d", Stream::News, "Q"), &m));
        assert!(!is_emerging_mention(&rec(100, "d", Stream::News, "Q"), &m));
        assert!(!is_emerging_mention(&rec(150, "d", Stream::News, "Q"), &m));
        assert_eq!(days_before_incorporation(&rec(40, "d", Stream::News, "Q"), &m), 60);
    }

    #[test]
    fn four_documents_pruned_at_five() {
        let metas: Result<MetaTable> = vec![meta("Q", 50)].into_iter().collect();
        let metas = metas.unwrap();
        let span = Span::new(0, 100).unwrap();
        let mentions: Vec<_> = (0..4).map(|i| rec(10 + i, &format!("d{i}"), Stream::News, "Q")).collect();
        let (ds, report) = build_dataset(&mentions, &metas, span, 5).unwrap();
        assert!(ds.is_empty());
        assert_eq!(report.stage(Stage::CreatedInSpan).entities, 1);
        assert_eq!(report.stage(Stage::MinDocs).entities, 0);
    }

    #[test]
    fn distinct_documents_count_once() {
        let metas: MetaTable = vec![meta("Q", 50)].into_iter().collect::<Result<_>>().unwrap();
        let span = Span::new(0, 100).unwrap();
        let mut mentions: Vec<_> = (0..4).map(|i| rec(10 + i, &format!("d{i}"), Stream::News, "Q")).collect();
        mentions.push(rec(10, "d0", Stream::News, "Q"));
        let (ds, report) = build_dataset(&mentions, &metas, span, 5).unwrap();
        assert!(ds.is_empty());
        assert_eq!(report.stage(Stage::PreCreation).mentions, 5);
        assert_eq!(report.stage(Stage::PreCreation).documents, 4);
    }

    #[test]
    fn created_after_span_pruned() {
        let metas: MetaTable = vec![meta("Q", 500)].into_iter().collect::<Result<_>>().unwrap();
        let span = Span::new(0, 100).unwrap();
        let mentions: Vec<_> = (0..50).map(|i| rec(i, &format!("d{i}"), Stream::News, "Q")).collect();
        let (ds, report) = build_dataset(&mentions, &metas, span, 5).unwrap();
        assert!(ds.is_empty());
        assert_eq!(report.stage(Stage::PreCreation).entities, 1);
        assert_eq!(report.stage(Stage::CreatedInSpan).entities, 0);
    }

    #[test]
    fn empty_stream_gives_zeroed_report() {
        let metas = MetaTable::new();
        let span = Span::new(0, 10).unwrap();
        let (ds, report) = build_dataset(Vec::<MentionRecord>::new(), &metas, span, 5).unwrap();
        assert!(ds.is_empty());
        assert_eq!(report, FilterReport::empty(span, 5));
    }

    #[test]
    fn unmatched_and_out_of_span_are_counted() {
        let metas: MetaTable = vec![meta("Q", 50)].into_iter().collect::<Result<_>>().unwrap();
        let span = Span::new(0, 100).unwrap();
        let mentions = vec![
            rec(10, "d1", Stream::News, "Q"),
            rec(10, "d1", Stream::News, "X"),
            rec(500, "d2", Stream::News, "Q"),
        ];
        let (_, report) = build_dataset(&mentions, &metas, span, 1).unwrap();
        assert_eq!(report.out_of_span_mentions, 1);
        assert_eq!(report.unmatched_entities, 1);
        assert_eq!(report.unmatched_mentions, 1);
        assert_eq!(report.stage(Stage::Input).entities, 2);
        assert_eq!(report.stage(Stage::Joined).entities, 1);
    }

    #[test]
    fn both_streams_in_one_document() {
        let metas: MetaTable = vec![meta("Q", 50)].into_iter().collect::<Result<_>>().unwrap();
        let span = Span::new(0, 100).unwrap();
        let mentions = vec![rec(10, "d1", Stream::News, "Q"), rec(10, "d1", Stream::Social, "Q")];
        let (ds, _) = build_dataset(&mentions, &metas, span, 1).unwrap();
        let e = ds.get("Q").unwrap();
        assert_eq!(e.docs.len(), 1);
        assert!(e.docs[0].streams.contains(Stream::News) && e.docs[0].streams.contains(Stream::Social));
        assert_eq!(e.first_day_in(Stream::Social), Some(10));
    }

    #[test]
    fn sharded_merge_matches_single_pass() {
        let metas: MetaTable = (0..6)
            .map(|i| meta(&format!("E{i}"), 40 + i))
            .collect::<Result<_>>()
            .unwrap();
        let span = Span::new(0, 100).unwrap();
        let mentions: Vec<_> = (0..300)
            .map(|i| {
                let stream = if i % 3 == 0 { Stream::Social } else { Stream::News };
                rec(i % 60, &format!("d{}", i % 97), stream, &format!("E{}", i % 7))
            })
            .collect();
        let single = build_dataset(&mentions, &metas, span, 3).unwrap();

        let mut shards: Vec<DatasetBuilder> = (0..3).map(|_| DatasetBuilder::new(span)).collect();
        for m in mentions.iter().rev() {
            let shard = m.entity_id.bytes().map(usize::from).sum::<usize>() % 3;
            shards[shard].push(m);
        }
        let mut it = shards.into_iter().rev();
        let first = it.next().unwrap();
        let merged = it.try_fold(first, |acc, b| acc.merge(b)).unwrap();
        assert_eq!(merged.finish(&metas, 3).unwrap(), single);
    }
}
