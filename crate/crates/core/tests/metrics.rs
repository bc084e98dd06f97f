use std::collections::BTreeMap;

use ctxground::corpus::SensitiveAttribute;
use ctxground::metrics::{
    bda, btca, dis, eod, likert_mean, predictions_from_csv, predictions_to_csv,
    report_from_predictions, BtcaUniverse, ConfusionCounts, EvalOptions, GroupTally, MetricsReport,
    PerTypeCounts, Prediction,
};
use proptest::prelude::*;

const TYPES: [&str; 3] = ["toxicity", "stereotyping", "offensive_language"];
const GROUPS: [&str; 3] = ["a", "b", "c"];

fn arb_prediction() -> impl Strategy<Value = (bool, bool, usize, usize, usize)> {
    (
        any::<bool>(),
        any::<bool>(),
        0..3usize,
        0..3usize,
        0..3usize,
    )
}

fn build(raw: &[(bool, bool, usize, usize, usize)]) -> Vec<Prediction> {
    raw.iter()
        .enumerate()
        .map(|(index, &(label, predicted, t, pt, g))| Prediction {
            index,
            label,
            true_type: label.then(|| TYPES[t].to_string()),
            prob: if predicted { 0.75 } else { 0.25 },
            predicted,
            predicted_type: predicted.then(|| TYPES[pt].to_string()),
            attributes: SensitiveAttribute::ALL
                .iter()
                .map(|&a| {
                    let v = if a == SensitiveAttribute::Gender {
                        GROUPS[g]
                    } else {
                        "unknown"
                    };
                    (a, v.to_string())
                })
                .collect(),
        })
        .collect()
}

fn rate(preds: &[&Prediction]) -> f64 {
    preds.iter().filter(|p| p.predicted).count() as f64 / preds.len() as f64
}

fn tpr(preds: &[&Prediction]) -> f64 {
    let pos: Vec<_> = preds.iter().filter(|p| p.label).collect();
    pos.iter().filter(|p| p.predicted).count() as f64 / pos.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn report_matches_brute_force(raw in prop::collection::vec(arb_prediction(), 1..40)) {
        let preds = build(&raw);
        let opts = EvalOptions {
            attributes: vec![SensitiveAttribute::Gender],
            btca_universe: BtcaUniverse::All,
            ..EvalOptions::default()
        };
        let report = report_from_predictions("m", &preds, &opts).unwrap();

        let n = preds.len() as f64;
        let correct = preds.iter().filter(|p| p.label == p.predicted).count() as f64;
        prop_assert!((report.bda - correct / n).abs() < 1e-12);
        let typed = preds.iter().filter(|p| p.true_type == p.predicted_type).count() as f64;
        prop_assert!((report.btca - typed / n).abs() < 1e-12);

        let mut groups: BTreeMap<&str, Vec<&Prediction>> = BTreeMap::new();
        for p in &preds {
            groups.entry(p.attributes[&SensitiveAttribute::Gender].as_str()).or_default().push(p);
        }
        let largest = groups.values().map(Vec::len).max().unwrap();
        let reference = groups.iter().find(|(_, v)| v.len() == largest).unwrap().0;
        let b = &report.attributes["gender"];
        prop_assert_eq!(b.reference.as_deref(), Some(*reference));
        let r = &groups[reference];
        for (g, members) in &groups {
            let expect_dis = (rate(members) > 0.0).then(|| rate(r) / rate(members));
            match (b.dis[*g], expect_dis) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                (x, y) => prop_assert_eq!(x, y),
            }
            let defined = members.iter().any(|p| p.label) && r.iter().any(|p| p.label);
            let expect_eod = defined.then(|| (tpr(members) - tpr(r)).abs());
            match (b.eod[*g], expect_eod) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                (x, y) => prop_assert_eq!(x, y),
            }
        }
    }

    #[test]
    fn bda_and_btca_are_permutation_invariant(
        raw in prop::collection::vec(arb_prediction(), 1..30),
        rot in 0usize..30,
    ) {
        let opts = EvalOptions { attributes: vec![], ..EvalOptions::default() };
        let mut shuffled = raw.clone();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        let a = report_from_predictions("m", &build(&raw), &opts);
        let b = report_from_predictions("m", &build(&shuffled), &opts);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.bda, b.bda);
                prop_assert_eq!(a.btca, b.btca);
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false),
        }
    }

    #[test]
    fn self_comparison_is_exact(pp in 0u64..50, extra in 0u64..50, tp in 0u64..50, ap_extra in 0u64..50) {
        let g = GroupTally {
            predicted_positive: pp + 1,
            total: pp + 1 + extra,
            true_positive: tp,
            actual_positive: tp + ap_extra + 1,
        };
        prop_assert_eq!(dis(&g, &g).unwrap(), 1.0);
        prop_assert_eq!(eod(&g, &g).unwrap(), 0.0);
    }

    #[test]
    fn counting_functions_match_raw_pairs(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60)) {
        let mut c = ConfusionCounts::default();
        for &(y, p) in &pairs {
            c.record(y, p);
        }
        let direct = pairs.iter().filter(|(y, p)| y == p).count() as f64 / pairs.len() as f64;
        prop_assert!((bda(&c).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn likert_mean_matches_sum(ratings in prop::collection::vec(1u8..=5, 1..50)) {
        let sum: u32 = ratings.iter().map(|&r| r as u32).sum();
        prop_assert!((likert_mean(&ratings).unwrap() - sum as f64 / ratings.len() as f64).abs() < 1e-12);
    }
}

#[test]
fn per_type_counts_example() {
    let mut p = PerTypeCounts::default();
    for (t, g) in [
        ("toxicity", "toxicity"),
        ("toxicity", "stereotyping"),
        ("stereotyping", "stereotyping"),
    ] {
        p.record(Some(t), Some(g));
    }
    p.record(Some("toxicity"), None);
    assert_eq!(btca(&p).unwrap(), 0.5);
}

#[test]
fn report_json_and_sidecar_roundtrip() {
    let raw: Vec<_> = (0..30)
        .map(|i| (i % 2 == 0, i % 3 == 0, i % 3, (i / 2) % 3, i % 3))
        .collect();
    let preds = build(&raw);
    let report = report_from_predictions("m", &preds, &EvalOptions::default()).unwrap();
    assert_eq!(MetricsReport::from_json(&report.to_json()).unwrap(), report);
    assert_eq!(
        predictions_from_csv(&predictions_to_csv(&preds)).unwrap(),
        preds
    );
}
