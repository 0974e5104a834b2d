use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use whin_autodiff::Tensor;
use whin_pjf::csagnn::{score_pairs, train_csagnn, CsagnnConfig, Features, Variant};
use whin_pjf::eval::ablation::run_ablation;
use whin_pjf::eval::metrics::auc_scored;
use whin_pjf::eval::split::{split, SplitSpec};
use whin_pjf::pretrain::{train_pretrain, EmbeddingTable, PretrainConfig};
use whin_pjf::synth::{generate, preset, GenConfig};
use whin_pjf::text::{EmbedderConfig, TextEmbedder};
use whin_pjf::{CandidatePair, Error, RelationKind, WhinStore};

const DIM: usize = 8;

fn embedder() -> TextEmbedder {
    TextEmbedder::new(EmbedderConfig { dim: DIM, ..Default::default() }).unwrap()
}

/// Two groups of members and jobs; a pair is positive exactly when the groups
/// agree. Text is noise, so only the structural vectors carry the label.
struct Separable {
    store: WhinStore,
    table: EmbeddingTable,
    member_group: Vec<f32>,
    job_group: Vec<f32>,
}

fn separable() -> Separable {
    let (n_m, n_j, n_s) = (40usize, 10usize, 6usize);
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let words = ["alpha", "beta", "gamma", "delta", "omega", "sigma"];
    let mut text = |n: usize| (0..n).map(|_| words[r.gen_range(0..words.len())]).collect::<Vec<_>>().join(" ");
    let texts = [
        (0..n_m).map(|_| text(5)).collect(),
        (0..n_j).map(|_| text(5)).collect(),
        (0..n_s).map(|i| format!("s{i}")).collect(),
        vec!["c".to_string()],
        vec!["u".to_string()],
    ];
    let member_group: Vec<f32> = (0..n_m).map(|m| if m % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let job_group: Vec<f32> = (0..n_j).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let mut edges = Vec::new();
    for m in 0..n_m as u32 {
        edges.push((RelationKind::Master, m, m % n_s as u32));
        let peer = (m + 2) % n_m as u32;
        edges.push((RelationKind::Connect, m.min(peer), m.max(peer)));
    }
    for j in 0..n_j as u32 {
        edges.push((RelationKind::Require, j, j % n_s as u32));
    }
    edges.sort_unstable_by_key(|e| (e.0.index(), e.1, e.2));
    edges.dedup();
    let mut pairs = Vec::new();
    for m in 0..n_m as u32 {
        for j in 0..n_j as u32 {
            let label = u8::from(member_group[m as usize] == job_group[j as usize]);
            pairs.push(CandidatePair { member: m, job: j, label });
        }
    }
    let store = WhinStore::from_parts(texts, &edges, pairs).unwrap();

    let mut r = ChaCha8Rng::seed_from_u64(2);
    let mut rows = |groups: &[f32]| {
        let data: Vec<f32> = groups
            .iter()
            .flat_map(|&g| {
                let noise: Vec<f32> = (0..DIM - 1).map(|_| r.gen_range(-0.3..0.3)).collect();
                std::iter::once(g).chain(noise)
            })
            .collect();
        Tensor::new(groups.len(), DIM, data).unwrap()
    };
    let table = EmbeddingTable::new([
        rows(&member_group),
        rows(&job_group),
        rows(&vec![0.0; n_s]),
        rows(&[0.0]),
        rows(&[0.0]),
    ])
    .unwrap();
    Separable { store, table, member_group, job_group }
}

/// Plain gradient-descent logistic regression on `F^s_m * F^s_j`, scored on
/// its own training pairs.
fn logistic_oracle_auc(s: &Separable, pairs: &[CandidatePair]) -> f64 {
    let feats: Vec<Vec<f64>> = pairs
        .iter()
        .map(|p| {
            let a = s.table.get(p.member_ref());
            let b = s.table.get(p.job_ref());
            a.iter().zip(b).map(|(x, y)| (x * y) as f64).collect()
        })
        .collect();
    let mut w = vec![0.0; DIM];
    let mut bias = 0.0;
    for _ in 0..300 {
        let mut gw = vec![0.0; DIM];
        let mut gb = 0.0;
        for (x, p) in feats.iter().zip(pairs) {
            let z: f64 = bias + x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            let err = 1.0 / (1.0 + (-z).exp()) - p.label as f64;
            for (g, xi) in gw.iter_mut().zip(x) {
                *g += err * xi;
            }
            gb += err;
        }
        let n = pairs.len() as f64;
        for (wi, g) in w.iter_mut().zip(gw) {
            *wi -= 0.5 * g / n;
        }
        bias -= 0.5 * gb / n;
    }
    let scored: Vec<whin_pjf::eval::metrics::ScoredPair> = feats
        .iter()
        .zip(pairs)
        .map(|(x, p)| whin_pjf::eval::metrics::ScoredPair {
            member: p.member,
            job: p.job,
            score: bias + x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>(),
            label: p.label,
        })
        .collect();
    auc_scored(&scored).unwrap()
}

#[test]
fn separable_pairs_are_learned() {
    let s = separable();
    assert_eq!(s.member_group.len() * s.job_group.len(), s.store.pairs().len());
    let parts = split(s.store.pairs(), &SplitSpec::new(0)).unwrap();
    let oracle = logistic_oracle_auc(&s, &parts.train);
    assert!(oracle > 0.9, "logistic oracle AUC {oracle}");

    let cfg = CsagnnConfig {
        dim: DIM,
        heads: 2,
        layers: 1,
        learning_rate: 1e-2,
        max_epochs: 30,
        patience: 30,
        batch_pairs: 16,
        ..Default::default()
    };
    let features = Features::build(&s.store, &embedder(), Some(s.table.clone()), cfg.skills_per_entity, 0).unwrap();
    let out = train_csagnn(&features, &cfg, &parts.train, &parts.valid, |_| {}).unwrap();
    let scored = score_pairs(&out.model, &features, &cfg, &parts.train).unwrap();
    let train_auc = auc_scored(&scored).unwrap();
    assert!(train_auc >= 0.95, "train AUC {train_auc} after {} epochs", out.history.len());
}

fn synth_setup() -> (WhinStore, EmbeddingTable) {
    let cfg = GenConfig {
        name: "small".into(),
        members: 60,
        jobs: 60,
        skills: 40,
        companies: 6,
        schools: 6,
        pairs: 150,
        connections: 240,
        ..preset("finance-100x").unwrap()
    };
    let store = generate(&cfg).unwrap().to_store().unwrap().materialize_metapaths(Some(50), 0).unwrap();
    let pre = PretrainConfig { dim: DIM, layers: 1, epochs: 1, ..Default::default() };
    let table = train_pretrain(&store, &embedder(), &pre, |_| {}).unwrap().table;
    (store, table)
}

#[test]
fn same_seed_gives_identical_validation_curves() {
    let (store, table) = synth_setup();
    for variant in [Variant::Full, Variant::WoA, Variant::WoCsaH] {
        let cfg = CsagnnConfig { dim: DIM, heads: 2, max_epochs: 4, variant, ..Default::default() };
        let structural = (variant != Variant::WoCsaH).then_some(&table);
        let a = run_ablation(&store, &embedder(), structural, &cfg, &SplitSpec::new(0)).unwrap();
        let b = run_ablation(&store, &embedder(), structural, &cfg, &SplitSpec::new(0)).unwrap();
        assert_eq!(a.outcome.history, b.outcome.history, "{variant}");
        assert_eq!(a.report, b.report);
        assert_eq!(a.report.test_pairs, 15);
    }
}

#[test]
fn structural_variants_refuse_to_run_without_a_table() {
    let (store, _) = synth_setup();
    let cfg = CsagnnConfig { dim: DIM, heads: 2, max_epochs: 1, ..Default::default() };
    assert!(matches!(
        run_ablation(&store, &embedder(), None, &cfg, &SplitSpec::new(0)),
        Err(Error::MissingDependency(_))
    ));
}

#[test]
fn early_stopping_keeps_the_best_epoch() {
    let (store, table) = synth_setup();
    let cfg = CsagnnConfig { dim: DIM, heads: 2, max_epochs: 40, patience: 2, learning_rate: 5e-2, ..Default::default() };
    let run = run_ablation(&store, &embedder(), Some(&table), &cfg, &SplitSpec::new(0)).unwrap();
    let h = &run.outcome.history;
    let best = h.iter().map(|e| e.valid_auc).fold(f64::MIN, f64::max);
    assert_eq!(h[run.outcome.best_epoch].valid_auc, best);
    if run.outcome.stopped_epoch + 1 < cfg.max_epochs {
        assert_eq!(run.outcome.stopped_epoch, run.outcome.best_epoch + cfg.patience);
    }
}
