use std::io::Cursor;

use emerge_core::ingest::{parse_day, parse_mentions, parse_metadata, MentionFormat, ParseMode};
use emerge_core::synth::{self, SynthConfig, DEFAULT_SPAN_END, DEFAULT_SPAN_START};
use emerge_core::{build_dataset, Stage};

#[test]
fn default_span_matches_calendar() {
    assert_eq!(parse_day("2011-10-07"), Some(DEFAULT_SPAN_START));
    assert_eq!(parse_day("2013-05-01"), Some(DEFAULT_SPAN_END));
}

#[test]
fn report_matches_planted_labels() {
    for seed in 0..4 {
        let cfg = SynthConfig {
            seed,
            n_early: 60,
            n_late: 60,
            ..SynthConfig::default()
        };
        let (mut mentions, mut meta) = (Vec::new(), Vec::new());
        let manifest = synth::write_corpus(&cfg, &mut mentions, &mut meta).unwrap();
        let (metas, bad_meta) = parse_metadata(Cursor::new(meta), ParseMode::Strict).unwrap();
        assert_eq!(bad_meta, 0);
        let mut reader = parse_mentions(Cursor::new(mentions), MentionFormat::Tsv, ParseMode::Lenient);
        let records: Vec<_> = reader.by_ref().collect::<Result<_, _>>().unwrap();
        let mut builder = emerge_core::DatasetBuilder::new(cfg.span);
        for r in &records {
            builder.push(r);
        }
        builder.add_malformed(reader.malformed());
        let (dataset, report) = builder.finish(&metas, cfg.min_docs).unwrap();
        assert_eq!(report, manifest.expected_report, "seed {seed}");
        assert_eq!(dataset.len(), 120);
        assert_eq!(report.stage(Stage::MinDocs).entities, 120);
        let (_, one_shot) = build_dataset(&records, &metas, cfg.span, cfg.min_docs).unwrap();
        assert_eq!(one_shot.stages, report.stages);
    }
}
