use criterion::{criterion_group, criterion_main, Criterion};

use sectsum_core::rouge::{oracle_labels, recall_triple, reward};
use sectsum_core::synthetic::{planted_corpus, PlantedConfig};

fn scoring(c: &mut Criterion) {
    let docs = planted_corpus(&PlantedConfig {
        docs: 8,
        sentences: 80,
        ..PlantedConfig::default()
    });
    let doc = &docs[0].document;
    let text: String = doc.sentences().map(|s| s.text.as_str()).collect::<Vec<_>>().join(" ");

    c.bench_function("recall_triple", |b| b.iter(|| recall_triple(&text, &doc.reference_summary)));
    c.bench_function("reward", |b| b.iter(|| reward(&text, &doc.reference_summary)));
    c.bench_function("oracle_labels_80x16", |b| b.iter(|| oracle_labels(doc, 16).unwrap()));
}

criterion_group!(benches, scoring);
criterion_main!(benches);
