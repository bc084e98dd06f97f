use std::collections::BTreeMap;

use ctxground::context::{serialize_triples, to_triples, ContextElement};
use ctxground::corpus::{
    bias_type_distribution, load, preprocess, save, split, synthetic_corpus, BiasTypeRegistry,
    Corpus, Record, SplitSpec, SyntheticSpec,
};
use ctxground::encoder::{
    build_vocab, derive_context, tokenize, ContextLabelVocab, Encoder, Vocabulary, CTX, PAD, SEP,
};
use ctxground::ontology::ContextKind;
use proptest::prelude::*;

fn key(r: &Record) -> (String, String) {
    (r.sentence.clone(), r.hypothesis.clone())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_partitions_and_stratifies(n in 10usize..300, seed in any::<u64>(), frac in 0.5f64..0.9) {
        let corpus = synthetic_corpus(&SyntheticSpec::new(n, seed % 1000));
        let rest = (1.0 - frac) / 2.0;
        let spec = SplitSpec::new(frac, rest, 1.0 - frac - rest, seed).unwrap();
        let (tr, va, te) = split(&corpus, &spec).unwrap();
        prop_assert_eq!([tr.len(), va.len(), te.len()], spec.sizes(n));

        let mut all: Vec<_> = tr.records.iter().chain(&va.records).chain(&te.records).map(key).collect();
        let mut orig: Vec<_> = corpus.records.iter().map(key).collect();
        all.sort();
        orig.sort();
        prop_assert_eq!(all, orig);

        let p = corpus.positives() as f64;
        for part in [&tr, &va, &te] {
            let expect = p * part.len() as f64 / n as f64;
            prop_assert!((part.positives() as f64 - expect).abs() < 1.0 + 1e-9);
        }
        let again = split(&corpus, &spec).unwrap();
        prop_assert_eq!(again.0, tr);
    }
}

#[test]
fn csv_roundtrip_and_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synthetic_corpus(&SyntheticSpec::new(150, 9));
    let path = dir.path().join("c.csv");
    save(&corpus, &path).unwrap();
    let back = load(&path).unwrap();
    assert_eq!(back.records, corpus.records);
    assert_eq!(preprocess(&back).records, corpus.records);
    let hist = bias_type_distribution(&corpus);
    assert_eq!(hist.values().sum::<usize>(), corpus.positives());
}

fn encoder_for(train: &Corpus, max_len: usize) -> Encoder {
    let contexts: Vec<ContextElement> = train.records.iter().map(derive_context).collect();
    Encoder::new(
        build_vocab(train, &contexts, 1),
        ContextLabelVocab::from_contexts(&contexts),
        BiasTypeRegistry::default(),
        max_len,
    )
    .unwrap()
}

#[test]
fn encode_invariants_over_500_records() {
    let corpus = synthetic_corpus(&SyntheticSpec::new(500, 11));
    let enc = encoder_for(&corpus, 48);
    for r in &corpus.records {
        let e = derive_context(r);
        let x = enc.encode(r, &e).unwrap();
        let a = enc.encode_ablation(r).unwrap();
        assert_eq!(x.ids.len(), 48);
        assert_eq!(a.ids.len(), 48);
        assert_eq!(x.ids[0], CTX);

        // context segment equals the serialized triples, token for token
        let ctx: Vec<u32> = if e.is_empty() {
            vec![]
        } else {
            tokenize(&serialize_triples(&to_triples(&e)))
                .iter()
                .map(|t| enc.vocab.id_or_unk(t))
                .collect()
        };
        assert_eq!(&x.ids[1..1 + ctx.len()], ctx.as_slice());
        assert_eq!(x.ids[1 + ctx.len()], SEP);
        assert_eq!(a.ids[..2], [CTX, SEP]);

        // the text segment is the same ordered token stream, cut to fit
        let text_x: Vec<u32> = x.ids[2 + ctx.len()..]
            .iter()
            .copied()
            .filter(|&i| i != PAD)
            .collect();
        let text_a: Vec<u32> = a.ids[2..].iter().copied().filter(|&i| i != PAD).collect();
        assert!(text_a.starts_with(&text_x[..text_x.iter().position(|&i| i == SEP).unwrap()]));
        assert_eq!(
            x.aux_target.iter().filter(|b| **b).count(),
            e.predicates().len()
        );
        assert!(a.aux_target.iter().all(|b| !b));
        assert_eq!(x.main_label, r.is_biased());
    }
}

#[test]
fn unseen_tokens_map_to_unknown_and_vocab_file_roundtrips() {
    let corpus = synthetic_corpus(&SyntheticSpec::new(50, 2));
    let enc = encoder_for(&corpus, 64);
    let r = Record::new("zebra quokka", "axolotl", None);
    let x = enc.encode_ablation(&r).unwrap();
    assert_eq!(&x.ids[2..4], [1, 1]);
    assert_eq!(
        Vocabulary::from_tsv(&enc.vocab.to_tsv()).unwrap(),
        enc.vocab
    );
    assert_eq!(
        ContextLabelVocab::from_tsv(&enc.labels.to_tsv()).unwrap(),
        enc.labels
    );
}

#[test]
fn derived_contexts_are_cultural_and_share_ids() {
    let corpus = synthetic_corpus(&SyntheticSpec::new(300, 5));
    let mut by_id: BTreeMap<String, ContextElement> = BTreeMap::new();
    for r in &corpus.records {
        let e = derive_context(r);
        assert_eq!(e.kind(), ContextKind::Cultural);
        if let Some(prev) = by_id.insert(e.id().to_string(), e.clone()) {
            assert_eq!(prev, e);
        }
    }
}
