use hmpnn::models::{count_parameters, ModelConfig, ModelKind};
use hmpnn::HeteroSchema;

#[test]
fn regular_network_counts_for_94_features() {
    let s = HeteroSchema::aml();
    let counts: Vec<usize> = (1..=3)
        .map(|k| count_parameters(&s, &ModelConfig::new(ModelKind::Mlp, k), 94).unwrap())
        .collect();
    assert_eq!(counts, [95, 9025, 17955]);
    assert_eq!(count_parameters(&s, &ModelConfig::new(ModelKind::Logreg, 1), 94).unwrap(), 95);
}

#[test]
fn graph_counts_grow_with_depth() {
    let s = HeteroSchema::aml();
    for kind in [ModelKind::Hgraphsage, ModelKind::HmpnnSum, ModelKind::HmpnnCt] {
        let c: Vec<usize> = (1..=3)
            .map(|k| count_parameters(&s, &ModelConfig::new(kind, k), 0).unwrap())
            .collect();
        assert!(c[0] < c[1] && c[1] < c[2], "{}: {c:?}", kind.as_str());
    }
}
