mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sged::dsl::{Program, ProgramToken};
use sged::engine::execute;
use sged::ged::{
    ged, ged_astar, ged_astar_with, ged_bruteforce, ged_within, recompute_cost, AStarOptions, CostModel, Heuristic,
};
use sged::policy::Policy;
use sged::retrieval::{rank_by_ged, rank_top_k};
use sged::scene::{parse_scene, serialize_scene, SceneGraph, Variant};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_program(rng: &mut ChaCha8Rng, variant: Variant, max_len: usize) -> Option<Program> {
    let tokens = ProgramToken::all_for(variant);
    let len = rng.gen_range(1..=max_len);
    let body: Vec<ProgramToken> = (0..len).map(|_| tokens[rng.gen_range(0..tokens.len())].clone()).collect();
    Program::new(body, max_len).ok()
}

/// Random program whose first token is `edit`.
fn edit_program(rng: &mut ChaCha8Rng, variant: Variant, edit: ProgramToken) -> Program {
    loop {
        if let Some(p) = random_program(rng, variant, 5) {
            if p.edit().is_none() && p.body().len() < 5 {
                let mut body = vec![edit.clone()];
                body.extend(p.body().iter().cloned());
                if let Ok(p) = Program::new(body, 6) {
                    return p;
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn scene_files_round_trip(seed in any::<u64>(), n in 0usize..7, wildcard in any::<bool>()) {
        let mut r = rng(seed);
        let rel = common::relational(&mut r, n.max(usize::from(wildcard)), 3, wildcard);
        prop_assert_eq!(parse_scene(&serialize_scene(&rel)).unwrap(), rel);
        let grid = common::grid(&mut r, n, 3);
        prop_assert_eq!(parse_scene(&serialize_scene(&grid)).unwrap(), grid);
    }

    #[test]
    fn relational_edges_are_complete_and_inverse(seed in any::<u64>(), n in 0usize..7) {
        let g = common::relational(&mut rng(seed), n, 3, false);
        prop_assert_eq!(g.edges().len(), n * n.saturating_sub(1));
        for (&(a, b), &e) in g.edges() {
            prop_assert_eq!(g.edge(b, a), Some(e.inverse()));
            prop_assert_eq!(e.labels().len(), 2);
        }
    }

    #[test]
    fn program_listing_round_trip(seed in any::<u64>(), relational in any::<bool>()) {
        let variant = if relational { Variant::Relational } else { Variant::Grid };
        if let Some(p) = random_program(&mut rng(seed), variant, 6) {
            prop_assert_eq!(Program::parse(&p.to_string(), 6).unwrap(), p);
        }
    }

    #[test]
    fn grid_edits_keep_nine_nodes_and_no_edges(seed in any::<u64>(), n in 0usize..10) {
        let mut r = rng(seed);
        let g = common::grid(&mut r, n, 3);
        if let Some(p) = random_program(&mut r, Variant::Grid, 6) {
            if let Ok(run) = execute(&p, &g) {
                prop_assert_eq!(run.graph.len(), 9);
                prop_assert!(run.graph.edges().is_empty());
                prop_assert_eq!(run.graph.node_ids(), g.node_ids());
            }
        }
    }

    #[test]
    fn relational_remove_deletes_attended_nodes(seed in any::<u64>(), n in 1usize..7) {
        let mut r = rng(seed);
        let g = common::relational(&mut r, n, 3, false);
        let p = edit_program(&mut r, Variant::Relational, ProgramToken::Remove);
        if let Ok(run) = execute(&p, &g) {
            if run.fault.is_none() {
                let steps = &run.trace.steps;
                let gone = if steps.len() > 1 { steps[steps.len() - 2].attended.clone() } else { g.node_ids() };
                let kept: Vec<u32> = g.node_ids().into_iter().filter(|id| !gone.contains(id)).collect();
                prop_assert_eq!(run.graph.node_ids(), kept.clone());
                for &(a, b) in run.graph.edges().keys() {
                    prop_assert!(kept.contains(&a) && kept.contains(&b));
                    prop_assert_eq!(run.graph.edge(a, b), g.edge(a, b));
                }
                prop_assert_eq!(run.graph.edges().len(), kept.len() * kept.len().saturating_sub(1));
            } else {
                prop_assert_eq!(&run.graph, &g);
            }
        }
    }

    #[test]
    fn filters_never_grow_attention(seed in any::<u64>(), n in 1usize..7, relational in any::<bool>()) {
        let mut r = rng(seed);
        let (g, variant) = if relational {
            (common::relational(&mut r, n, 2, false), Variant::Relational)
        } else {
            (common::grid(&mut r, n, 2), Variant::Grid)
        };
        if let Some(p) = random_program(&mut r, variant, 6) {
            if let Ok(run) = execute(&p, &g) {
                for w in run.trace.steps.windows(2) {
                    if w[1].token.starts_with("filter") {
                        prop_assert!(w[1].attended.iter().all(|id| w[0].attended.contains(id)));
                    }
                }
            }
        }
    }

    #[test]
    fn astar_matches_brute_force(seed in any::<u64>(), n1 in 0usize..5, n2 in 0usize..5, wildcard in any::<bool>()) {
        let mut r = rng(seed);
        let crir = CostModel::crir();
        let g1 = common::relational(&mut r, n1, 2, false);
        let g2 = common::relational(&mut r, n2.max(usize::from(wildcard)), 2, wildcard);
        let (d, m) = ged_astar(&g1, &g2, &crir).unwrap();
        prop_assert_eq!(d, ged_bruteforce(&g1, &g2, &crir).unwrap());
        prop_assert_eq!(d, m.total_cost);
        prop_assert_eq!(recompute_cost(&g1, &g2, &m.pairs, &crir).unwrap(), d);
        let zero = AStarOptions { heuristic: Heuristic::Zero, bound: None };
        prop_assert_eq!(ged_astar_with(&g1, &g2, &crir, zero).unwrap().map(|x| x.0), Some(d));
    }

    #[test]
    fn distance_is_symmetric_with_zero_diagonal(seed in any::<u64>(), n1 in 0usize..6, n2 in 0usize..6) {
        let mut r = rng(seed);
        let crir = CostModel::crir();
        let a = common::relational(&mut r, n1, 2, false);
        let b = common::relational(&mut r, n2, 2, false);
        prop_assert_eq!(ged(&a, &a, &crir).unwrap(), 0.0);
        prop_assert_eq!(ged(&a, &b, &crir).unwrap(), ged(&b, &a, &crir).unwrap());
        let css = CostModel::css();
        let (x, y) = (common::grid(&mut r, n1, 2), common::grid(&mut r, n2, 2));
        prop_assert_eq!(ged(&x, &x, &css).unwrap(), 0.0);
        prop_assert_eq!(ged(&x, &y, &css).unwrap(), ged(&y, &x, &css).unwrap());
        prop_assert_eq!(ged_astar(&x, &y, &css).unwrap().0, ged(&x, &y, &css).unwrap());
    }

    #[test]
    fn bounded_search_agrees_with_exact(seed in any::<u64>(), n1 in 0usize..6, n2 in 0usize..6, bound in 0.0f64..3.0) {
        let mut r = rng(seed);
        let crir = CostModel::crir();
        let a = common::relational(&mut r, n1, 2, false);
        let b = common::relational(&mut r, n2, 2, false);
        let d = ged(&a, &b, &crir).unwrap();
        let within = ged_within(&a, &b, &crir, bound).unwrap();
        if d <= bound {
            prop_assert_eq!(within, Some(d));
        } else {
            prop_assert_eq!(within, None);
        }
    }

    #[test]
    fn top_k_is_a_prefix_of_the_full_ranking(seed in any::<u64>(), k in 1usize..6) {
        let mut r = rng(seed);
        let crir = CostModel::crir();
        let db: Vec<(String, SceneGraph)> = (0..8)
            .map(|i| {
                let n = r.gen_range(1..5);
                (format!("s{i}"), common::relational(&mut r, n, 2, false))
            })
            .collect();
        let q = common::relational(&mut r, 3, 2, false);
        let full = rank_by_ged("q", &q, &db, &crir, seed).unwrap();
        let top = rank_top_k("q", &q, &db, &crir, k, seed).unwrap();
        prop_assert_eq!(&top.ranked_ids[..], &full.ranked_ids[..k]);
        prop_assert_eq!(&top.distances[..], &full.distances[..k]);
        prop_assert!(full.distances.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn policy_distributions_normalize(seed in any::<u64>(), t in 0usize..4) {
        let mut r = rng(seed);
        let vocab: Vec<ProgramToken> = ProgramToken::all_for(Variant::Grid).into_iter().take(12).collect();
        let mut p = Policy::new(Variant::Grid, vocab, 4, &["remove the red cube", "make the small sphere blue"]).unwrap();
        for th in p.theta_mut() {
            *th = r.gen_range(-3.0..3.0);
        }
        let ctx = p.context("remove the small cube").unwrap();
        let prev = if t == 0 { None } else { Some(r.gen_range(0..p.n_actions())) };
        let probs = p.probs(&ctx, t, prev);
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(probs.iter().all(|&x| x > 0.0));
        prop_assert_eq!(Policy::from_json(&p.to_json()).unwrap(), p);
    }
}
