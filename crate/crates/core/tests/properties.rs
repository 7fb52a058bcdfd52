use std::collections::BTreeSet;

use mkg_core::ensemble::{score_g, ScorerParams};
use mkg_core::eval::compute_metrics;
use mkg_core::features::{build_vocabulary, encode, jaccard};
use mkg_core::graph::normalize_part_id;
use mkg_core::linalg::Matrix;
use mkg_core::split::{largest_remainder, split_similar_edges};
use mkg_core::{AttrValue, BomEdge, BomTree, ComponentNode, MachineKnowledgeGraph, PartIdentifier, RelationKind, Triple};
use proptest::prelude::*;

fn node_strategy() -> impl Strategy<Value = ComponentNode> {
    (
        "[a-z]{1,6}",
        prop::sample::select(vec!["SSD", "CPU", "RES"]),
        prop::collection::btree_map(
            prop::sample::select(vec!["cap", "iface", "speed", "unit"]),
            prop_oneof![
                (0u32..5).prop_map(|x| AttrValue::Number(x as f64)),
                prop::sample::select(vec!["GB", "TB", "SATA"]).prop_map(|s| AttrValue::Text(s.into())),
            ],
            0..4,
        ),
    )
        .prop_map(|(id, ty, meta)| {
            let mut n = ComponentNode::new(PartIdentifier::new(&id).unwrap(), ty).unwrap();
            for (k, v) in meta {
                n = n.with_attr(k, v);
            }
            n
        })
}

/// Random BOM collection over a fixed pool of typed parts; parents always
/// have a smaller index than their children.
fn bom_collection() -> impl Strategy<Value = Vec<BomTree>> {
    prop::collection::vec(prop::collection::vec((0usize..12, 1usize..12), 1..8), 1..5).prop_map(|boms| {
        boms.into_iter()
            .map(|edges| {
                let mut tree = BomTree {
                    root: PartIdentifier::new("R").unwrap(),
                    edges: Vec::new(),
                    parts: Default::default(),
                };
                let name = |i: usize| if i == 0 { "R".to_string() } else { format!("P{i}") };
                let mut seen = BTreeSet::from([0usize]);
                let mut used = BTreeSet::new();
                for (a, b) in edges {
                    let (p, c) = (a.min(b), a.max(b));
                    if p == c || !seen.contains(&p) || !used.insert((p, c)) {
                        continue;
                    }
                    seen.insert(c);
                    tree.edges.push(BomEdge {
                        parent: PartIdentifier::new(&name(p)).unwrap(),
                        child: PartIdentifier::new(&name(c)).unwrap(),
                        quantity: 1,
                    });
                }
                for i in seen {
                    let id = PartIdentifier::new(&name(i)).unwrap();
                    tree.parts.insert(id.clone(), ComponentNode::new(id, format!("T{i}")).unwrap());
                }
                tree
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn normalization_idempotent(raw in "\\PC{0,12}") {
        if let Ok(id) = normalize_part_id(&raw) {
            prop_assert_eq!(normalize_part_id(id.as_str()).unwrap(), id.clone());
            prop_assert!(!id.as_str().is_empty());
        } else {
            prop_assert!(raw.trim().is_empty());
        }
    }

    #[test]
    fn jaccard_symmetric_and_reflexive(a in node_strategy(), b in node_strategy()) {
        prop_assert_eq!(jaccard(&a, &b), jaccard(&b, &a));
        prop_assert_eq!(jaccard(&a, &a), 1.0);
        let j = jaccard(&a, &b);
        prop_assert!((0.0..=1.0).contains(&j));
    }

    #[test]
    fn encoding_is_a_function_of_metadata(nodes in prop::collection::vec(node_strategy(), 1..20), min_freq in 1usize..3) {
        let vocab = build_vocabulary(&nodes, min_freq);
        let a = encode(&nodes, &vocab);
        prop_assert_eq!(&a, &encode(&nodes, &build_vocabulary(&nodes, min_freq)));
        for i in 0..nodes.len() {
            for j in 0..nodes.len() {
                if nodes[i].metadata == nodes[j].metadata {
                    prop_assert_eq!(a.row(i), a.row(j));
                }
            }
            if nodes[i].metadata.is_empty() {
                prop_assert!(a.row(i).iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn split_partitions_triples(n_sim in 1usize..60, seed in any::<u64>()) {
        let mut g = MachineKnowledgeGraph::new();
        for i in 0..=n_sim {
            g.upsert_node(&ComponentNode::new(PartIdentifier::new(&format!("N{i}")).unwrap(), "T").unwrap());
        }
        let id = |i: usize| PartIdentifier::new(&format!("N{i}")).unwrap();
        g.ingest_connections(&[(id(0), id(1))]).unwrap();
        let pairs: Vec<_> = (1..=n_sim).map(|i| (id(i), id(i - 1))).collect();
        g.ingest_substitutes(&pairs, false).unwrap();
        let s = split_similar_edges(&g, [0.7, 0.15, 0.15], seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.valid).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..g.triples().len()).collect::<Vec<_>>());
        prop_assert!(s.valid.iter().chain(&s.test).all(|&i| g.triples()[i].relation == RelationKind::SimilarTo));
        let counts = largest_remainder(n_sim, &[0.7, 0.15, 0.15]);
        prop_assert_eq!((s.valid.len(), s.test.len()), (counts[1], counts[2]));
        prop_assert_eq!(&s, &split_similar_edges(&g, [0.7, 0.15, 0.15], seed).unwrap());
    }

    #[test]
    fn ingestion_order_does_not_change_sets(boms in bom_collection(), rot in 0usize..5) {
        let build = |order: &[BomTree]| {
            let mut g = MachineKnowledgeGraph::new();
            for b in order {
                g.ingest_bom(b).unwrap();
            }
            let nodes: BTreeSet<String> = g.nodes().iter().map(|n| n.id.to_string()).collect();
            let triples: BTreeSet<(String, String)> = g
                .triples()
                .iter()
                .map(|t| (g.node(t.head).id.to_string(), g.node(t.tail).id.to_string()))
                .collect();
            prop_assert!(g.topological_order().is_some());
            Ok((nodes, triples))
        };
        let mut rotated = boms.clone();
        rotated.rotate_left(rot % boms.len());
        prop_assert_eq!(build(&boms)?, build(&rotated)?);
    }

    #[test]
    fn scorer_swap_symmetry(seed in any::<u64>(), u in prop::collection::vec(-3.0f64..3.0, 4), v in prop::collection::vec(-3.0f64..3.0, 4), e in prop::collection::vec(-3.0f64..3.0, 2)) {
        let p = ScorerParams::init(6, 5, true, seed);
        prop_assert_eq!(score_g(&p, &u, &e, &v).unwrap(), score_g(&p, &v, &e, &u).unwrap());
    }

    #[test]
    fn metric_invariants(ranks in prop::collection::vec(1.0f64..500.0, 1..50)) {
        let m = compute_metrics(&ranks).unwrap();
        let max = ranks.iter().cloned().fold(1.0, f64::max);
        prop_assert!(m.mrr >= 1.0 / max - 1e-15 && m.mrr <= 1.0);
        prop_assert!(m.mr >= 1.0);
        prop_assert!(m.hits1 <= m.hits3 && m.hits3 <= m.hits10);
    }
}

#[test]
fn numeric_at_mean_encodes_to_zero() {
    let mk = |id: &str, x: f64| {
        ComponentNode::new(PartIdentifier::new(id).unwrap(), "SSD").unwrap().with_attr("capacity", AttrValue::Number(x))
    };
    let nodes = vec![mk("a", 960.0), mk("b", 480.0), mk("c", 720.0)];
    let m = encode(&nodes, &build_vocabulary(&nodes, 2));
    assert_eq!(m.cols(), 1);
    assert_eq!(m[(2, 0)], 0.0);
}

#[test]
fn unknown_pairs_are_ignored_by_encoding() {
    let mk = |id: &str, v: &str| {
        ComponentNode::new(PartIdentifier::new(id).unwrap(), "SSD").unwrap().with_attr("iface", AttrValue::Text(v.into()))
    };
    let vocab = build_vocabulary(&[mk("a", "SATA")], 1);
    assert_eq!(encode(&[mk("z", "NVMe")], &vocab), Matrix::zeros(1, 1));
    let _ = Triple::new(0, RelationKind::SimilarTo, 1);
}
