#![allow(dead_code)]

use rand::Rng;
use stablab::harness::{ExperimentConfig, SHIPPED_CONFIGS};
use stablab::market::{build_tree, NodeSpec, ScenarioTree, TreeSpec};

/// Random arbitrage-free single-asset tree: every non-terminal node gets
/// 2 or 3 children whose price moves straddle zero.
pub fn random_tree<R: Rng>(rng: &mut R, steps: usize) -> ScenarioTree {
    let mut nodes = vec![NodeSpec {
        parent: None,
        prob: None,
        price: vec![1.0],
    }];
    let mut frontier = vec![0usize];
    for _ in 0..steps {
        let mut next = Vec::new();
        for &parent in &frontier {
            let s = nodes[parent].price[0];
            let branches = rng.gen_range(2..=3);
            let mut moves = vec![rng.gen_range(0.05..0.8), -rng.gen_range(0.05..0.6)];
            if branches == 3 {
                moves.push(rng.gen_range(-0.6..0.8));
            }
            let raw: Vec<f64> = moves.iter().map(|_| rng.gen_range(0.2..1.0)).collect();
            let total: f64 = raw.iter().sum();
            for (m, w) in moves.iter().zip(&raw) {
                nodes.push(NodeSpec {
                    parent: Some(parent),
                    prob: Some(w / total),
                    price: vec![s * (1.0 + m)],
                });
                next.push(nodes.len() - 1);
            }
        }
        frontier = next;
    }
    build_tree(&TreeSpec::Nodes(nodes)).expect("generated tree is valid")
}

pub fn shipped(name: &str) -> ExperimentConfig {
    let text = SHIPPED_CONFIGS
        .iter()
        .find(|(n, _)| *n == name)
        .unwrap_or_else(|| panic!("no shipped config {name}"))
        .1;
    ExperimentConfig::from_json(text).expect("shipped configs are valid")
}

pub fn all_shipped() -> Vec<(String, ExperimentConfig)> {
    SHIPPED_CONFIGS
        .iter()
        .map(|(n, t)| {
            (
                n.to_string(),
                ExperimentConfig::from_json(t).expect("shipped configs are valid"),
            )
        })
        .collect()
}
