mod support;

use lcot_core::gateway::{mock_backend, MockFailure, MockRule, MockScript, RetryPolicy};
use lcot_core::gateway::Gateway;
use lcot_graph::synth::{erdos_renyi, planted_partition, super_pairs};
use lcot_graph::{build_hierarchy, summarize_communities, HierarchyParams, StructureParams, StructureTest};
use proptest::prelude::*;
use support::{check_tree, level_sets};

#[test]
fn super_pairs_give_two_by_two_tree() {
    let (g, pairs, leaves) = super_pairs(10, 4);
    let tree = build_hierarchy(&g, &HierarchyParams::default()).unwrap();
    check_tree(&tree, &g).unwrap();
    let group = |labels: &[usize], k: usize| -> Vec<usize> { (0..labels.len()).filter(|&i| labels[i] == k).collect() };
    let want1: std::collections::BTreeSet<_> = (0..2).map(|k| group(&pairs, k)).collect();
    let want2: std::collections::BTreeSet<_> = (0..4).map(|k| group(&leaves, k)).collect();
    assert_eq!(level_sets(&tree, 1), want1);
    assert_eq!(level_sets(&tree, 2), want2);
    assert_eq!(tree.depth(), 2);
    for n in tree.level(1) {
        assert_eq!(n.children.len(), 2);
        assert_eq!(n.q, Some(2));
    }
    for leaf in tree.leaves() {
        assert_eq!(leaf.structure_test, StructureTest::Structureless);
    }
}

#[test]
fn random_graph_is_root_only() {
    let g = erdos_renyi(300, 0.03, 11);
    let tree = build_hierarchy(&g, &HierarchyParams::default()).unwrap();
    assert!(tree.root.is_leaf());
    assert_eq!(tree.root.structure_test, StructureTest::Structureless);
    assert_eq!(tree.root.size, 300);
}

#[test]
fn small_and_disconnected_inputs() {
    let g = lcot_graph::KeywordGraph::from_undirected(3, &[(0, 1), (1, 2)]).unwrap();
    let tree = build_hierarchy(&g, &HierarchyParams::default()).unwrap();
    assert_eq!(tree.root.structure_test, StructureTest::TooSmall);
    let (a, _, _) = super_pairs(10, 4);
    let mut edges = a.undirected_edges();
    edges.retain(|&(x, y)| (x, y) != (0, 20));
    edges.extend([(40, 41), (41, 42)]);
    let g = lcot_graph::KeywordGraph::from_undirected(43, &edges).unwrap();
    let tree = build_hierarchy(&g, &HierarchyParams::default()).unwrap();
    check_tree(&tree, &g).unwrap();
    assert_eq!(tree.root.children.len(), 3);
    assert_eq!(tree.root.children[2].structure_test, StructureTest::TooSmall);
    assert_eq!(tree.leaves().len(), 5);
}

#[test]
fn depth_cap_is_respected() {
    let (g, _, _) = super_pairs(10, 4);
    let params = HierarchyParams {
        max_depth: 1,
        ..Default::default()
    };
    let tree = build_hierarchy(&g, &params).unwrap();
    check_tree(&tree, &g).unwrap();
    assert_eq!(tree.depth(), 1);
    assert!(tree.leaves().iter().all(|l| l.structure_test == StructureTest::DepthLimit));
}

fn titles_gateway() -> Gateway {
    let mut gw = Gateway::with_retry(RetryPolicy::no_backoff());
    let script = MockScript::constant("Title: Cluster {digest}").rule("Keywords:\n20\n", "## Second pair");
    gw.register_backend(mock_backend(script).with_id("titler")).unwrap();
    gw.register_backend(
        mock_backend(MockScript {
            rules: vec![MockRule::failing("", MockFailure::Transport)],
            ..MockScript::constant("")
        })
        .with_id("broken"),
    )
    .unwrap();
    gw
}

#[test]
fn titles_attach_deterministically() {
    let (g, _, _) = super_pairs(10, 4);
    let base = build_hierarchy(&g, &HierarchyParams::default()).unwrap();
    let gw = titles_gateway();
    let mut a = base.clone();
    let titled = summarize_communities(&mut a, &g, &gw, "titler", 20);
    assert_eq!(titled, 3);
    assert!(a.root.title.as_deref().unwrap().starts_with("Cluster "));
    let second = a.level(1).into_iter().find(|n| n.members.contains(&"20".to_string())).unwrap();
    assert_eq!(second.title.as_deref(), Some("Second pair"));
    assert!(a.leaves().iter().all(|l| l.title.is_none()));
    let mut b = base.clone();
    summarize_communities(&mut b, &g, &gw, "titler", 20);
    assert_eq!(a.to_json(), b.to_json());
    let mut c = base;
    assert_eq!(summarize_communities(&mut c, &g, &gw, "broken", 1), 0);
    assert!(c.nodes().iter().all(|n| n.title.is_none()));
}

#[test]
fn tree_json_round_trip_and_determinism() {
    let (g, _) = planted_partition(3, 20, 8.0, 1.0, 4);
    let p = HierarchyParams::default();
    let a = build_hierarchy(&g, &p).unwrap();
    let b = build_hierarchy(&g, &p).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(lcot_graph::CommunityTree::from_json(&a.to_json()).unwrap(), a);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]
    #[test]
    fn refinement_and_termination_on_random_graphs(
        blocks in 1usize..5,
        size in 4usize..25,
        c_in in 1.0f64..10.0,
        c_out in 0.0f64..3.0,
        seed in 0u64..1000,
    ) {
        let (g, _) = planted_partition(blocks, size, c_in, c_out, seed);
        let params = HierarchyParams {
            min_size: 6,
            max_depth: 4,
            structure: StructureParams { q_max: 3, restarts: 1, n_null: 5, seed, ..Default::default() },
        };
        let tree = build_hierarchy(&g, &params).unwrap();
        prop_assert!(check_tree(&tree, &g).is_ok(), "{:?}", check_tree(&tree, &g));
    }
}
