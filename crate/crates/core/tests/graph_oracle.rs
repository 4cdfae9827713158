//! Ownership-graph metrics checked against quadratic brute-force oracles,
//! plus frequency checks on the edge-perturbation draws.

use std::collections::{HashMap, HashSet};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use veblen::graph::{
    build_ownership_graph, compute_wallet_metrics, perturb_edges, GraphOverlay, PerturbMode,
    PerturbWeighting,
};
use veblen::model::{Address, Holding};
use veblen::money::Eth;

fn holding(wallet: &str, collection: &str, token: &str) -> Holding {
    Holding {
        wallet: Address::new(wallet),
        collection: collection.to_string(),
        token_id: token.to_string(),
    }
}

/// Random market with repeated holdings: the same wallet often holds many
/// tokens of one collection, which must still collapse to a single edge.
fn random_holdings(seed: u64, rows: usize, wallets: usize, collections: usize) -> Vec<Holding> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..rows)
        .map(|i| {
            let w = rng.gen_range(0..wallets);
            let c = rng.gen_range(0..collections);
            holding(&format!("0xW{w:04}"), &format!("col{c:03}"), &i.to_string())
        })
        .collect()
}

#[test]
fn edges_match_pair_set_oracle() {
    let holdings = random_holdings(3, 10_000, 400, 60);
    let graph = build_ownership_graph(&holdings);

    let mut pairs: HashSet<(String, String)> = HashSet::new();
    for h in &holdings {
        pairs.insert((h.wallet.as_str().to_string(), h.collection.clone()));
    }
    assert_eq!(graph.edge_count(), pairs.len());
    for (w, c) in &pairs {
        let wi = graph.wallet_ix(&Address::new(w)).unwrap();
        let ci = graph.collection_ix(c).unwrap();
        assert!(graph.has_edge(wi, ci));
    }
    // count both directions so the adjacency lists agree with each other
    let from_wallets: usize = (0..graph.wallet_count())
        .map(|w| graph.wallet_neighbors(w as u32).len())
        .sum();
    let from_collections: usize = (0..graph.collection_count())
        .map(|c| graph.collection_neighbors(c as u32).len())
        .sum();
    assert_eq!(from_wallets, pairs.len());
    assert_eq!(from_collections, pairs.len());
}

#[test]
fn metrics_match_quadratic_oracle() {
    let holdings = random_holdings(7, 12_000, 600, 200);
    let graph = build_ownership_graph(&holdings);
    let floor = |slug: &str| {
        // deterministic, distinct, positive floors from the slug digits
        let n: i128 = slug[3..].parse::<i128>().unwrap() + 1;
        Some(Eth::from_wei(n * 50_000_000_000_000_000))
    };
    let metrics = compute_wallet_metrics(&graph, floor).unwrap();

    // Oracle sets, keyed by names rather than graph indices.
    let mut of_collection: HashMap<String, HashSet<String>> = HashMap::new();
    let mut of_wallet: HashMap<String, HashSet<String>> = HashMap::new();
    for h in &holdings {
        of_collection
            .entry(h.collection.clone())
            .or_default()
            .insert(h.wallet.as_str().to_string());
        of_wallet
            .entry(h.wallet.as_str().to_string())
            .or_default()
            .insert(h.collection.clone());
    }

    // overlap via explicit pairwise intersections, O(C^2 * W)
    let mut overlap_oracle: HashMap<&String, u64> = HashMap::new();
    for (c, ws) in &of_collection {
        let mut total = 0u64;
        for (c2, ws2) in &of_collection {
            if c2 != c {
                total += ws.intersection(ws2).count() as u64;
            }
        }
        overlap_oracle.insert(c, total);
    }
    for (c, expect) in &overlap_oracle {
        let ci = graph.collection_ix(c).unwrap();
        assert_eq!(metrics.overlap[ci as usize], *expect, "overlap of {c}");
    }

    for (w, cs) in &of_wallet {
        let wi = graph.wallet_ix(&Address::new(w)).unwrap() as usize;
        let wealth: Eth = cs.iter().map(|c| floor(c).unwrap()).sum();
        let affinity: u64 = cs.iter().map(|c| overlap_oracle[c]).sum();
        assert_eq!(metrics.wealth[wi], wealth, "wealth of {w}");
        assert_eq!(metrics.affinity[wi], affinity, "affinity of {w}");
        assert_eq!(
            metrics.importance[wi],
            Eth::from_wei(wealth.wei() * affinity as i128),
            "importance of {w}"
        );
    }
}

/// Two-wallet candidate pool, no holdings outside the fixture: draw
/// frequencies over many seeds must match the intended weights.
fn draw_frequency(weighting: PerturbWeighting, draws: u64) -> f64 {
    // w0 holds the target; wa and wb are the add candidates. wa's only other
    // collection has floor 9 ETH, wb's has floor 1 ETH.
    let holdings = vec![
        holding("0xaaa", "target", "1"),
        holding("0xbbb", "rich", "1"),
        holding("0xccc", "poor", "1"),
    ];
    let graph = build_ownership_graph(&holdings);
    let floor = |slug: &str| {
        Some(match slug {
            "rich" => Eth::from_eth(9),
            _ => Eth::from_eth(1),
        })
    };
    let metrics = compute_wallet_metrics(&graph, floor).unwrap();
    let target = graph.collection_ix("target").unwrap();
    let rich = graph.wallet_ix(&Address::new("0xbbb")).unwrap();

    let mut hits = 0u64;
    for seed in 0..draws {
        let (sample, _) = perturb_edges(
            &graph,
            target,
            1,
            PerturbMode::Add,
            weighting,
            &metrics,
            seed,
        )
        .unwrap();
        assert_eq!(sample.wallets.len(), 1);
        assert!(!sample.short_sample);
        if sample.wallets[0] == rich {
            hits += 1;
        }
    }
    hits as f64 / draws as f64
}

#[test]
fn uniform_add_draws_are_fair() {
    let f = draw_frequency(PerturbWeighting::Uniform, 10_000);
    // 3 sigma around 1/2 over 10k draws
    assert!((f - 0.5).abs() < 0.015, "frequency {f}");
}

#[test]
fn wealth_weighted_draws_follow_the_weights() {
    let f = draw_frequency(PerturbWeighting::Wealth, 10_000);
    // P(rich) = 9/10; 3 sigma of a 0.9 Bernoulli over 10k draws
    assert!((f - 0.9).abs() < 0.009, "frequency {f}");
}

#[test]
fn importance_order_survives_floor_scaling() {
    let holdings = random_holdings(11, 8_000, 500, 150);
    let graph = build_ownership_graph(&holdings);
    let base_floor = |slug: &str| {
        let n: i128 = slug[3..].parse::<i128>().unwrap() + 1;
        Some(Eth::from_wei(n * 10_000_000_000_000_000))
    };
    let scaled_floor = |slug: &str| base_floor(slug).map(|e| Eth::from_wei(e.wei() * 7));
    let a = compute_wallet_metrics(&graph, base_floor).unwrap();
    let b = compute_wallet_metrics(&graph, scaled_floor).unwrap();

    // importance is linear in the floors, so scaling cannot reorder wallets
    let order = |m: &[Eth]| {
        let mut ix: Vec<usize> = (0..m.len()).collect();
        ix.sort_by_key(|&i| (m[i], i));
        ix
    };
    assert_eq!(order(&a.importance), order(&b.importance));
    for (x, y) in a.importance.iter().zip(&b.importance) {
        assert_eq!(y.wei(), x.wei() * 7);
    }
}

#[test]
fn overlays_never_touch_the_base() {
    let holdings = random_holdings(13, 2_000, 120, 40);
    let graph = build_ownership_graph(&holdings);
    let before = graph.content_hash();
    let metrics = compute_wallet_metrics(&graph, |_| Some(Eth::from_eth(1))).unwrap();

    for (mode, weighting) in [
        (PerturbMode::Add, PerturbWeighting::Uniform),
        (PerturbMode::Add, PerturbWeighting::Importance),
        (PerturbMode::Delete, PerturbWeighting::Wealth),
        (PerturbMode::Delete, PerturbWeighting::Affinity),
    ] {
        let (sample, overlay) =
            perturb_edges(&graph, 0, 25, mode, weighting, &metrics, 99).unwrap();
        assert!(!sample.wallets.is_empty());
        // exercise the overlay views
        let _ = overlay.collection_degree(0);
        let _ = overlay.collection_neighbors(0);
        for w in 0..graph.wallet_count() as u32 {
            let _ = overlay.wallet_degree(w);
        }
    }
    let identity = GraphOverlay::identity(&graph, 0);
    assert!(identity.is_identity());
    assert_eq!(graph.content_hash(), before);
}

#[test]
fn overlay_views_agree_with_naive_edge_set() {
    let holdings = random_holdings(17, 1_000, 80, 25);
    let graph = build_ownership_graph(&holdings);
    let metrics = compute_wallet_metrics(&graph, |_| Some(Eth::from_eth(1))).unwrap();
    let target = 3u32;
    let (sample, overlay) = perturb_edges(
        &graph,
        target,
        30,
        PerturbMode::Add,
        PerturbWeighting::Uniform,
        &metrics,
        5,
    )
    .unwrap();

    // naive edge set with the sample applied by hand
    let mut edges: HashSet<(u32, u32)> = HashSet::new();
    for w in 0..graph.wallet_count() as u32 {
        for &c in graph.wallet_neighbors(w) {
            edges.insert((w, c));
        }
    }
    for &w in &sample.wallets {
        edges.insert((w, target));
    }

    for w in 0..graph.wallet_count() as u32 {
        for c in 0..graph.collection_count() as u32 {
            assert_eq!(overlay.has_edge(w, c), edges.contains(&(w, c)));
        }
        assert_eq!(
            overlay.wallet_degree(w),
            edges.iter().filter(|&&(ew, _)| ew == w).count()
        );
    }
    for c in 0..graph.collection_count() as u32 {
        assert_eq!(
            overlay.collection_degree(c),
            edges.iter().filter(|&&(_, ec)| ec == c).count()
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Holding order is presentation, not structure.
    #[test]
    fn construction_is_order_independent(seed in 0u64..500, shuffle_seed in 0u64..500) {
        let mut holdings = random_holdings(seed, 300, 40, 12);
        let reference = build_ownership_graph(&holdings);
        holdings.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
        let shuffled = build_ownership_graph(&holdings);
        prop_assert_eq!(reference.content_hash(), shuffled.content_hash());
        prop_assert_eq!(reference.edge_count(), shuffled.edge_count());
    }
}
