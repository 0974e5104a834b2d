use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use whin_pjf::rng::substream;
use whin_pjf::sampler::{sample_negatives, sample_skills, sample_subgraph, LinkTriple, SamplerConfig, SubgraphBatch};
use whin_pjf::{EntityKind, EntityRef, Error, RelationKind, RelationView, WhinStore};

fn texts(counts: [usize; 5]) -> [Vec<String>; 5] {
    std::array::from_fn(|k| vec![String::new(); counts[k]])
}

fn cfg(hops: usize, fanout: usize) -> SamplerConfig {
    SamplerConfig { hops, fanout, ..Default::default() }
}

fn star(leaves: u32) -> WhinStore {
    let edges: Vec<_> = (1..=leaves).map(|i| (RelationKind::Connect, 0, i)).collect();
    WhinStore::from_parts(texts([leaves as usize + 1, 0, 0, 0, 0]), &edges, vec![]).unwrap()
}

#[test]
fn small_neighborhoods_are_taken_whole() {
    let store = star(3);
    let b = sample_subgraph(&store, &[EntityRef::member(0)], &cfg(1, 5), &mut substream(0, "t", 0)).unwrap();
    let ids: BTreeSet<u32> = b.nodes().iter().map(|e| e.id).collect();
    assert_eq!(ids, (0..4).collect());
}

#[test]
fn large_neighborhoods_are_cut_to_the_fanout() {
    let store = star(20);
    for s in 0..10 {
        let b = sample_subgraph(&store, &[EntityRef::member(0)], &cfg(1, 5), &mut substream(s, "t", 0)).unwrap();
        assert_eq!(b.len(), 6);
        let distinct: BTreeSet<_> = b.nodes().iter().collect();
        assert_eq!(distinct.len(), 6);
    }
}

#[test]
fn unknown_or_missing_seeds_are_rejected() {
    let store = star(2);
    assert!(matches!(
        sample_subgraph(&store, &[EntityRef::member(9)], &cfg(1, 5), &mut substream(0, "t", 0)),
        Err(Error::Contract(_))
    ));
    assert!(sample_subgraph(&store, &[], &cfg(1, 5), &mut substream(0, "t", 0)).is_err());
    let bad = SamplerConfig { hops: 0, ..Default::default() };
    assert!(matches!(
        sample_subgraph(&store, &[EntityRef::member(0)], &bad, &mut substream(0, "t", 0)),
        Err(Error::Config(_))
    ));
}

fn random_store(rng: &mut ChaCha8Rng, counts: [usize; 5], p: f64) -> WhinStore {
    let mut edges = Vec::new();
    for r in RelationKind::NATURAL {
        let (ns, nd) = (counts[r.source().index()], counts[r.destination().index()]);
        for a in 0..ns as u32 {
            for b in 0..nd as u32 {
                if (!r.is_symmetric() || a < b) && rng.gen_bool(p) {
                    edges.push((r, a, b));
                }
            }
        }
    }
    WhinStore::from_parts(texts(counts), &edges, vec![])
        .unwrap()
        .materialize_metapaths(None, 0)
        .unwrap()
}

/// Every store entry whose endpoints both lie in `nodes`, per view.
fn brute_force_closure(store: &WhinStore, nodes: &[EntityRef]) -> Vec<BTreeSet<(EntityRef, EntityRef)>> {
    RelationView::all()
        .map(|view| {
            store
                .view_entries(view)
                .map(|(s, d)| (EntityRef::new(view.source(), s), EntityRef::new(view.destination(), d)))
                .filter(|(a, b)| nodes.contains(a) && nodes.contains(b))
                .collect()
        })
        .collect()
}

fn batch_edges(b: &SubgraphBatch) -> Vec<BTreeSet<(EntityRef, EntityRef)>> {
    RelationView::all()
        .map(|view| b.view_edges(view).iter().map(|&(s, d)| (b.nodes()[s], b.nodes()[d])).collect())
        .collect()
}

#[test]
fn closure_equals_brute_force_restriction() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let store = random_store(&mut rng, [3, 2, 1, 1, 1], 0.5);
        let b = sample_subgraph(&store, &[EntityRef::member(0)], &cfg(2, 1), &mut substream(seed, "t", 0)).unwrap();
        assert_eq!(batch_edges(&b), brute_force_closure(&store, b.nodes()), "seed {seed}");
        for view in RelationView::all() {
            for &(s, d) in b.view_edges(view) {
                assert!(s < b.len() && d < b.len());
            }
        }
    }
}

#[test]
fn induced_subgraph_and_extension_keep_the_closure_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let store = random_store(&mut rng, [6, 4, 3, 2, 2], 0.3);
    let mut b = SubgraphBatch::induced(&store, &[EntityRef::member(1), EntityRef::job(2)]).unwrap();
    assert_eq!(batch_edges(&b), brute_force_closure(&store, b.nodes()));
    b.extend(&store, [EntityRef::skill(0), EntityRef::member(3), EntityRef::member(1)]);
    assert_eq!(b.len(), 4);
    assert_eq!(batch_edges(&b), brute_force_closure(&store, b.nodes()));
}

#[test]
fn incident_edges_are_real_and_touch_the_endpoints() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let store = random_store(&mut rng, [8, 5, 4, 2, 2], 0.3);
    let seeds = [EntityRef::member(2), EntityRef::job(1)];
    let b = sample_subgraph(&store, &seeds, &SamplerConfig::default(), &mut substream(1, "t", 0)).unwrap();
    let pos = b.incident_edges(&seeds);
    assert!(!pos.is_empty());
    for t in &pos {
        assert!(store.has_edge(t.relation, t.source.id, t.target.id));
        assert!(seeds.contains(&t.source) || seeds.contains(&t.target));
        if t.relation.is_symmetric() {
            assert!(t.source.id < t.target.id);
        }
    }
}

fn apply(m: u32, j: u32) -> LinkTriple {
    LinkTriple { source: EntityRef::member(m), relation: RelationKind::Apply, target: EntityRef::job(j) }
}

#[test]
fn the_only_free_job_is_the_forced_negative() {
    let store = WhinStore::from_parts(texts([1, 2, 0, 0, 0]), &[(RelationKind::Apply, 0, 0)], vec![]).unwrap();
    for s in 0..20 {
        let neg = sample_negatives(&store, &[apply(0, 0)], 1, &mut substream(s, "neg", 0)).unwrap();
        assert_eq!(neg, vec![apply(0, 1)]);
    }
}

#[test]
fn ratio_one_gives_one_absent_negative_per_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let store = random_store(&mut rng, [10, 40, 6, 3, 3], 0.1);
    let positives: Vec<LinkTriple> = store
        .edges(RelationKind::Apply)
        .into_iter()
        .take(10)
        .map(|(m, j)| apply(m, j))
        .collect();
    assert_eq!(positives.len(), 10);
    for ratio in [1, 2] {
        let neg = sample_negatives(&store, &positives, ratio, &mut substream(0, "neg", 0)).unwrap();
        assert_eq!(neg.len(), ratio * positives.len());
        let distinct: BTreeSet<_> = neg.iter().collect();
        assert_eq!(distinct.len(), neg.len());
        for t in &neg {
            assert!(!store.has_edge(t.relation, t.source.id, t.target.id));
        }
    }
}

#[test]
fn corrupting_into_a_single_entity_kind_is_impossible() {
    let store = WhinStore::from_parts(texts([1, 1, 0, 0, 0]), &[(RelationKind::Apply, 0, 0)], vec![]).unwrap();
    assert!(matches!(
        sample_negatives(&store, &[apply(0, 0)], 1, &mut substream(0, "neg", 0)),
        Err(Error::SamplingImpossible(_))
    ));
    assert!(sample_negatives(&store, &[], 1, &mut substream(0, "neg", 0)).is_err());
}

#[test]
fn negatives_are_uniform_over_free_destinations() {
    let store = WhinStore::from_parts(texts([1, 5, 0, 0, 0]), &[(RelationKind::Apply, 0, 0)], vec![]).unwrap();
    let mut counts = [0f64; 5];
    let mut rng = substream(17, "chi2", 0);
    let draws = 10_000;
    for _ in 0..draws {
        let neg = sample_negatives(&store, &[apply(0, 0)], 1, &mut rng).unwrap();
        counts[neg[0].target.id as usize] += 1.0;
    }
    assert_eq!(counts[0], 0.0);
    let expected = draws as f64 / 4.0;
    let chi2: f64 = counts[1..].iter().map(|c| (c - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new(3.0).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2}, p {p}, counts {counts:?}");
}

#[test]
fn small_skill_lists_come_back_whole_and_in_order() {
    let skills = [7u32, 3, 9, 1];
    assert_eq!(sample_skills(&skills, 10, &mut substream(0, "s", 0)), skills.to_vec());
}

#[test]
fn large_skill_lists_are_cut_to_n_s_distinct() {
    let skills: Vec<u32> = (0..100).collect();
    let picked = sample_skills(&skills, 10, &mut substream(0, "s", 0));
    assert_eq!(picked.len(), 10);
    assert!(picked.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn skill_inclusion_frequency_is_n_s_over_total() {
    let skills: Vec<u32> = (0..25).collect();
    let (n_s, trials) = (10usize, 10_000usize);
    let mut hits = [0usize; 25];
    let mut rng = substream(5, "inclusion", 0);
    for _ in 0..trials {
        for s in sample_skills(&skills, n_s, &mut rng) {
            hits[s as usize] += 1;
        }
    }
    let p = n_s as f64 / skills.len() as f64;
    let mean = trials as f64 * p;
    let sd = (trials as f64 * p * (1.0 - p)).sqrt();
    for (s, &h) in hits.iter().enumerate() {
        assert!((h as f64 - mean).abs() <= 3.0 * sd, "skill {s}: {h} vs {mean} ± {}", 3.0 * sd);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sampling_is_reproducible_and_within_budget(
        seed in any::<u64>(), hops in 1usize..4, fanout in 1usize..4, n_seeds in 1usize..3,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let store = random_store(&mut rng, [7, 5, 4, 2, 2], 0.25);
        let seeds: Vec<EntityRef> = (0..n_seeds as u32).map(EntityRef::member).collect();
        let c = cfg(hops, fanout);
        let a = sample_subgraph(&store, &seeds, &c, &mut substream(seed, "p", 0)).unwrap();
        let b = sample_subgraph(&store, &seeds, &c, &mut substream(seed, "p", 0)).unwrap();
        prop_assert_eq!(&a, &b);

        let active = RelationView::all().count() as f64;
        let bound: f64 = (1..=hops).map(|h| (fanout as f64 * active).powi(h as i32)).sum();
        prop_assert!(a.len() as f64 <= seeds.len() as f64 * (1.0 + bound));
        for e in a.nodes() {
            prop_assert!(store.contains(*e));
        }
        prop_assert_eq!(batch_edges(&a), brute_force_closure(&store, a.nodes()));
    }

    #[test]
    fn negatives_are_never_store_edges(seed in any::<u64>(), ratio in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let store = random_store(&mut rng, [6, 8, 8, 4, 4], 0.2);
        let mut positives = Vec::new();
        for r in RelationKind::ALL {
            for (s, d) in store.edges(r).into_iter().take(3) {
                positives.push(LinkTriple {
                    source: EntityRef::new(r.source(), s),
                    relation: r,
                    target: EntityRef::new(r.destination(), d),
                });
            }
        }
        prop_assume!(!positives.is_empty());
        match sample_negatives(&store, &positives, ratio, &mut substream(seed, "neg", 0)) {
            Ok(neg) => {
                prop_assert_eq!(neg.len(), ratio * positives.len());
                for t in &neg {
                    prop_assert!(!store.has_edge(t.relation, t.source.id, t.target.id));
                    prop_assert!(!(t.relation.is_symmetric() && t.source == t.target));
                    prop_assert_eq!(t.target.kind, t.relation.destination());
                }
            }
            Err(e) => prop_assert!(matches!(e, Error::SamplingImpossible(_)), "{e}"),
        }
    }
}

#[test]
fn skill_kind_helper_matches_store_counts() {
    let store = random_store(&mut ChaCha8Rng::seed_from_u64(1), [2, 2, 3, 1, 1], 0.5);
    assert_eq!(store.count(EntityKind::Skill), 3);
}
