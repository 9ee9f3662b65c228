use std::collections::HashSet;

use emerge_core::analysis::{partition_by_stream, StreamClass};
use emerge_core::{build_dataset, EntityMeta, MentionRecord, MetaTable, Span, Stream};
use proptest::prelude::*;

fn corpus() -> impl Strategy<Value = (Vec<MentionRecord>, MetaTable)> {
    let mention = (0usize..12, -3i64..60, 0u8..4, any::<bool>());
    let created = prop::collection::vec(1i64..70, 12);
    (prop::collection::vec(mention, 0..120), created).prop_map(|(mentions, created)| {
        let records = mentions
            .into_iter()
            .map(|(e, day, doc, news)| MentionRecord {
                doc_day: day,
                doc_id: format!("d{day}-{doc}"),
                stream: if news { Stream::News } else { Stream::Social },
                entity_id: format!("e{e}"),
            })
            .collect();
        let mut metas = MetaTable::new();
        for (i, c) in created.into_iter().enumerate().filter(|(i, _)| i % 5 != 4) {
            metas
                .insert(EntityMeta {
                    entity_id: format!("e{i}"),
                    creation_day: c,
                    type_labels: Default::default(),
                    pageviews: None,
                })
                .unwrap();
        }
        (records, metas)
    })
}

proptest! {
    #[test]
    fn partition_covers_every_entity_once((records, metas) in corpus(), min_docs in 1u32..4) {
        let (dataset, _) = build_dataset(&records, &metas, Span::new(0, 50).unwrap(), min_docs).unwrap();
        let p = partition_by_stream(&dataset);
        let mut seen = HashSet::new();
        for class in StreamClass::ALL {
            for id in p.class(class) {
                prop_assert!(seen.insert(id.clone()));
                prop_assert!(dataset.get(id).is_some());
            }
        }
        prop_assert_eq!(seen.len(), dataset.len());
        prop_assert_eq!(p.total(), dataset.len());
    }
}
