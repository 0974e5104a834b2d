use std::collections::HashSet;

use whin_pjf::eval::metrics::auc;
use whin_pjf::synth::{cosine, generate, preset, presets, GenConfig, SynthDataset, SynthManifest};
use whin_pjf::{EntityKind, Error, RelationKind};

fn count(ds: &SynthDataset, r: RelationKind) -> usize {
    ds.edges.iter().filter(|e| e.0 == r).count()
}

fn pair_cosines(ds: &SynthDataset) -> (Vec<f64>, Vec<u8>) {
    ds.pairs
        .iter()
        .map(|p| (cosine(&ds.member_latent[p.member as usize], &ds.job_latent[p.job as usize]), p.label))
        .unzip()
}

#[test]
fn presets_have_the_advertised_sizes() {
    let names: Vec<String> = presets().into_iter().map(|p| p.name).collect();
    assert_eq!(names, ["tech-100x", "finance-100x", "hybrid-100x"]);
    let tech = generate(&preset("tech-100x").unwrap()).unwrap();
    assert_eq!(tech.texts[EntityKind::Member.index()].len(), 330);
    assert_eq!(tech.pairs.len(), 1360);
    let finance = generate(&preset("finance-100x").unwrap()).unwrap();
    assert_eq!(count(&finance, RelationKind::Connect), 6150);
    let hybrid = generate(&preset("hybrid-100x").unwrap()).unwrap();
    assert_eq!(hybrid.pairs.len(), 2000);
    assert_eq!(hybrid.manifest.config.industries, 3);
    assert!(matches!(preset("nope"), Err(Error::Config(_))));
}

#[test]
fn every_generated_store_is_well_formed() {
    for cfg in presets() {
        let ds = generate(&cfg).unwrap();
        let store = ds.to_store().unwrap();
        assert_eq!(store.pairs().len(), cfg.pairs);
        let distinct: HashSet<(u32, u32)> = ds.pairs.iter().map(|p| (p.member, p.job)).collect();
        assert_eq!(distinct.len(), cfg.pairs);
        let positives = ds.pairs.iter().filter(|p| p.label == 1).count();
        assert_eq!(positives, (cfg.pairs as f64 * cfg.positive_rate).round() as usize);
        for p in &ds.pairs {
            assert!(!store.has_edge(RelationKind::Apply, p.member, p.job), "{}: candidate pair is in the apply history", cfg.name);
        }
        for m in 0..cfg.members as u32 {
            assert_eq!(store.neighbors(whin_pjf::EntityRef::member(m), whin_pjf::RelationView::forward(RelationKind::WorkAt)).unwrap().len(), 1);
        }
    }
}

#[test]
fn no_cross_industry_share_keeps_ties_inside_industries() {
    let cfg = GenConfig { cross_industry: 0.0, ..preset("hybrid-100x").unwrap() };
    let ds = generate(&cfg).unwrap();
    let ind = &ds.manifest.member_industry;
    assert_eq!(count(&ds, RelationKind::Connect), cfg.connections);
    for &(r, a, b) in &ds.edges {
        if r == RelationKind::Connect {
            assert_eq!(ind[a as usize], ind[b as usize]);
        }
    }

    let mixed = generate(&preset("hybrid-100x").unwrap()).unwrap();
    let ind = &mixed.manifest.member_industry;
    let cross = mixed
        .edges
        .iter()
        .filter(|e| e.0 == RelationKind::Connect && ind[e.1 as usize] != ind[e.2 as usize])
        .count() as f64;
    assert_eq!(cross, (0.3 * count(&mixed, RelationKind::Connect) as f64).round());
}

#[test]
fn labels_follow_latent_skill_overlap() {
    for cfg in presets() {
        let ds = generate(&cfg).unwrap();
        let (cos, labels) = pair_cosines(&ds);
        let mean = |l: u8| {
            let v: Vec<f64> = cos.iter().zip(&labels).filter(|x| *x.1 == l).map(|x| *x.0).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean(1) - mean(0) >= 0.2, "{}: gap {}", cfg.name, mean(1) - mean(0));
        let a = auc(&cos, &labels).unwrap();
        assert!(a >= 0.8, "{}: cosine AUC {a}", cfg.name);
    }
}

#[test]
fn weaker_overlap_gives_noisier_labels() {
    let aucs: Vec<f64> = [8.0, 3.0, 0.5]
        .into_iter()
        .map(|s| {
            let ds = generate(&GenConfig { overlap_strength: s, ..preset("tech-100x").unwrap() }).unwrap();
            let (cos, labels) = pair_cosines(&ds);
            auc(&cos, &labels).unwrap()
        })
        .collect();
    assert!(aucs[0] > aucs[1] && aucs[1] > aucs[2], "{aucs:?}");
}

#[test]
fn same_config_writes_identical_files() {
    let cfg = preset("finance-100x").unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate(&cfg).unwrap().write(a.path()).unwrap();
    generate(&cfg).unwrap().write(b.path()).unwrap();
    for f in ["entities.tsv", "relations.tsv", "pairs.tsv", "manifest.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let manifest = SynthManifest::read(&a.path().join("manifest.json")).unwrap();
    assert_eq!(manifest.config, cfg);
    assert_eq!(manifest.skill_labels.len(), cfg.skills);

    let other = generate(&GenConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(other.edges, generate(&preset("finance-100x").unwrap()).unwrap().edges);
}

#[test]
fn impossible_configs_are_rejected() {
    let base = preset("finance-100x").unwrap();
    for bad in [
        GenConfig { pairs: 0, ..base.clone() },
        GenConfig { cross_industry: 1.5, ..base.clone() },
        GenConfig { positive_rate: 1.0, ..base.clone() },
        GenConfig { connections: base.members * base.members, ..base.clone() },
        GenConfig { member_skills: (5, 2), ..base.clone() },
    ] {
        assert!(matches!(generate(&bad), Err(Error::Config(_))));
    }
}
