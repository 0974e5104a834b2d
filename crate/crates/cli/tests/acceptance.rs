//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use whin_autodiff::check::gradcheck;
use whin_autodiff::{AutodiffError, Tape, Tensor};
use whin_pjf::csagnn::{aggregation_weights, plan_pair, CsagnnConfig, CsagnnModel, Features, PairPlan, Variant};
use whin_pjf::eval::ablation::run_ablation;
use whin_pjf::eval::metrics::{acc_f1_ap, auc};
use whin_pjf::eval::pca::{project_2d, silhouette};
use whin_pjf::eval::split::SplitSpec;
use whin_pjf::pretrain::{
    initial_states, train_pretrain, EmbeddingTable, EncoderMode, GlobalIndex, MessageGraph, PretrainConfig,
    PretrainModel, PretrainOutcome,
};
use whin_pjf::rng::substream;
use whin_pjf::sampler::{LinkTriple, SubgraphBatch};
use whin_pjf::store::VIEW_COUNT;
use whin_pjf::synth::{generate, preset, GenConfig, SynthDataset};
use whin_pjf::text::{EmbedderConfig, TextEmbedder};
use whin_pjf::{EntityKind, EntityRef, Error, RelationKind, RelationView, WhinStore};

type Outcome = (bool, String);

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn autodiff(e: Error) -> AutodiffError {
    match e {
        Error::Autodiff(a) => a,
        other => panic!("{other}"),
    }
}

fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|_| (0..cols).map(|_| r.gen_range(-1.0..1.0)).collect()).collect()
}

fn tensor(m: &[Vec<f64>], cols: usize) -> Tensor<f64> {
    Tensor::new(m.len(), cols, m.iter().flatten().copied().collect()).unwrap()
}

fn mm(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|row| (0..b[0].len()).map(|j| row.iter().zip(b).map(|(x, br)| x * br[j]).sum()).collect())
        .collect()
}

fn param_of(params: &whin_autodiff::ParamStore<f64>, name: &str) -> Vec<Vec<f64>> {
    let t = params.get(params.find(name).unwrap());
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn embedder(dim: usize) -> TextEmbedder {
    TextEmbedder::new(EmbedderConfig { dim, ..Default::default() }).unwrap()
}

/// Small hand-built network: members, two jobs, skills with given vectors.
struct World {
    store: WhinStore,
    features: Features,
}

fn world(
    d: usize,
    n_members: usize,
    connect: &[(u32, u32)],
    master: &[(u32, u32)],
    require: &[(u32, u32)],
    skill_vectors: Vec<Vec<f32>>,
    seed: u64,
) -> World {
    let words = ["rust", "ledger", "audit", "kernel", "python", "sales", "design"];
    let mut r = rng(seed);
    let mut text = |n: usize| (0..n).map(|_| words[r.gen_range(0..words.len())]).collect::<Vec<_>>().join(" ");
    let n_skills = skill_vectors.len();
    let texts = [
        (0..n_members).map(|_| text(4)).collect(),
        (0..2).map(|_| text(3)).collect(),
        (0..n_skills).map(|i| format!("skill{i}")).collect(),
        vec!["acme".to_string()],
        vec!["tech".to_string()],
    ];
    let mut edges = Vec::new();
    edges.extend(connect.iter().map(|&(a, b)| (RelationKind::Connect, a, b)));
    edges.extend(master.iter().map(|&(a, b)| (RelationKind::Master, a, b)));
    edges.extend(require.iter().map(|&(a, b)| (RelationKind::Require, a, b)));
    let store = WhinStore::from_parts(texts, &edges, vec![]).unwrap();
    let mut r = rng(seed + 1);
    let mut random = |rows: usize| Tensor::new(rows, d, (0..rows * d).map(|_| r.gen_range(-0.5f32..0.5)).collect()).unwrap();
    let skills = Tensor::new(n_skills, d, skill_vectors.into_iter().flatten().collect()).unwrap();
    let table = EmbeddingTable::new([random(n_members), random(2), skills, random(1), random(1)]).unwrap();
    let features = Features::build(&store, &embedder(d), Some(table), 10, 0).unwrap();
    World { store, features }
}

fn axis(d: usize, i: usize) -> Vec<f32> {
    let mut v = vec![0.0; d];
    v[i] = 1.0;
    v
}

// ---------------------------------------------------------------- criterion 1

fn rgcn_gradient() -> f64 {
    let texts: [Vec<String>; 5] = [
        vec!["ada".into(), "bob".into()],
        vec!["rust dev".into(), "sql analyst".into()],
        vec!["rust".into(), "sql".into()],
        vec![],
        vec![],
    ];
    let edges = [
        (RelationKind::Apply, 0, 0),
        (RelationKind::Apply, 1, 1),
        (RelationKind::Master, 0, 0),
        (RelationKind::Master, 1, 1),
        (RelationKind::Require, 0, 0),
        (RelationKind::Require, 1, 1),
        (RelationKind::Connect, 0, 1),
    ];
    let store = WhinStore::from_parts(texts, &edges, vec![]).unwrap();
    let nodes: Vec<EntityRef> = EntityKind::ALL
        .iter()
        .flat_map(|&k| (0..store.count(k) as u32).map(move |i| EntityRef::new(k, i)))
        .collect();
    assert_eq!(nodes.len(), 6);
    let mut batch = SubgraphBatch::induced(&store, &nodes).unwrap();
    let t = |r, s: EntityRef, d: EntityRef| LinkTriple { source: s, relation: r, target: d };
    batch.positives = vec![
        t(RelationKind::Apply, EntityRef::member(0), EntityRef::job(0)),
        t(RelationKind::Master, EntityRef::member(0), EntityRef::skill(0)),
        t(RelationKind::Require, EntityRef::job(1), EntityRef::skill(1)),
    ];
    batch.negatives = vec![
        t(RelationKind::Apply, EntityRef::member(0), EntityRef::job(1)),
        t(RelationKind::Master, EntityRef::member(0), EntityRef::skill(1)),
        t(RelationKind::Require, EntityRef::job(1), EntityRef::skill(0)),
    ];
    for n in &batch.negatives {
        assert!(!store.has_edge(n.relation, n.source.id, n.target.id));
    }
    let graph = MessageGraph::<f64>::from_batch(&batch).unwrap();
    let dim = 4;
    let mut r = rng(21);
    let z0 = tensor(&random_matrix(&mut r, nodes.len(), dim), dim);
    let model = PretrainModel::<f64>::new(dim, 2, &mut substream(0, "acceptance.rgcn", 0));
    let triples: Vec<(usize, RelationKind, usize)> = batch
        .positives
        .iter()
        .chain(&batch.negatives)
        .map(|t| (batch.local(t.source).unwrap(), t.relation, batch.local(t.target).unwrap()))
        .collect();
    let labels: Vec<f64> = (0..triples.len()).map(|i| if i < batch.positives.len() { 1.0 } else { 0.0 }).collect();
    let report = gradcheck(model.params.values(), 1e-3, |tape, vars| {
        let z = tape.constant(z0.clone());
        let z = model.encode(tape, vars, &graph, z).map_err(autodiff)?;
        let logits = model.decode_logits(tape, vars, z, &triples).map_err(autodiff)?;
        tape.bce_with_logits(logits, &labels)
    })
    .unwrap();
    assert!(report.checked > 0);
    report.max_rel_error
}

fn csagnn_gradient() -> f64 {
    let d = 4;
    let w = world(
        d,
        3,
        &[(0, 1), (0, 2)],
        &[(0, 0), (0, 1), (1, 0), (2, 2)],
        &[(0, 0), (0, 1), (1, 2)],
        vec![vec![0.9, 0.1, -0.3, 0.2], vec![0.2, 0.8, 0.1, -0.4], vec![-0.5, 0.3, 0.7, 0.1]],
        11,
    );
    let cfg = CsagnnConfig { dim: d, heads: 2, layers: 2, ..Default::default() };
    let model = CsagnnModel::<f64>::new(d, 2, 2, &mut rng(12)).unwrap();
    let pairs = [(0u32, 0u32, 1.0), (0, 1, 0.0), (1, 0, 0.0)];
    let plans: Vec<PairPlan> = pairs.iter().map(|&(m, j, _)| plan_pair(&w.features, &cfg, m, j)).collect();
    assert_eq!(plans[0].locals.len(), 3, "member 0 keeps both connections");
    let labels: Vec<f64> = pairs.iter().map(|p| p.2).collect();
    let report = gradcheck(model.params.values(), 1e-3, |tape, vars| {
        let refs: Vec<&PairPlan> = plans.iter().collect();
        let logits = model.batch_logits(tape, vars, &w.features, &refs, Variant::Full).map_err(autodiff)?;
        tape.bce_with_logits(logits, &labels)
    })
    .unwrap();
    assert!(report.checked > 0);
    report.max_rel_error
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let (a, b) = (rgcn_gradient(), csagnn_gradient());
    let secs = t.elapsed().as_secs_f64();
    (
        a < 1e-4 && b < 1e-4 && secs < 30.0,
        format!("gradient check: rgcn max rel err {a:.2e}, csagnn max rel err {b:.2e}, {secs:.1}s"),
    )
}

// ---------------------------------------------------------------- criterion 2

fn rgcn_oracle_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n, dim) = (r.gen_range(2..8), r.gen_range(1..6));
    let model = PretrainModel::<f64>::new(dim, 1, &mut substream(seed, "acceptance.rgcn", 1));
    let z = random_matrix(&mut r, n, dim);
    let edges: Vec<Vec<(usize, usize)>> = (0..VIEW_COUNT)
        .map(|_| {
            let mut l = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    if i != j && r.gen_bool(0.15) {
                        l.push((i, j));
                    }
                }
            }
            l
        })
        .collect();
    let graph = MessageGraph::<f64>::from_edges(n, &edges).unwrap();
    let mut tape = Tape::new();
    let vars = model.params.register(&mut tape);
    let zv = tape.constant(tensor(&z, dim));
    let out = model.rgcn_layer(&mut tape, &vars, &graph, zv, 0).unwrap();
    let got = tape.value(out).data().to_vec();

    let views: Vec<String> = RelationView::all().map(|v| v.name()).collect();
    let w_self = param_of(&model.params, "rgcn.l0.self");
    let mut want = Vec::new();
    for i in 0..n {
        let mut acc = mm(&[z[i].clone()], &w_self)[0].clone();
        for (v, list) in edges.iter().enumerate() {
            let nbrs: Vec<usize> = list.iter().filter(|e| e.0 == i).map(|e| e.1).collect();
            if nbrs.is_empty() {
                continue;
            }
            let w = param_of(&model.params, &format!("rgcn.l0.{}", views[v]));
            for &j in &nbrs {
                for (a, b) in acc.iter_mut().zip(&mm(&[z[j].clone()], &w)[0]) {
                    *a += b / nbrs.len() as f64;
                }
            }
        }
        want.extend(acc.into_iter().map(|x| x.max(0.0)));
    }
    max_abs_diff(&got, &want)
}

fn attention_oracle_error(seed: u64) -> f64 {
    let mut r = rng(1000 + seed);
    let heads = [1, 2, 4][seed as usize % 3];
    let d = heads * r.gen_range(1..4);
    let model = CsagnnModel::<f64>::new(d, heads, 1, &mut r).unwrap();
    let (nc, nq) = (r.gen_range(1..7), r.gen_range(1..5));
    let c = random_matrix(&mut r, nc, d);
    let q = random_matrix(&mut r, nq, d);

    let mut tape = Tape::new();
    let vars = model.params.register(&mut tape);
    let cv = tape.constant(tensor(&c, d));
    let qv = tape.constant(tensor(&q, d));
    let pq = model.project_queries(&mut tape, &vars, qv).unwrap();
    let out = model.job_contextual_feature(&mut tape, &vars, Some(cv), Some(&pq)).unwrap();
    let got = tape.value(out).data().to_vec();

    let hd = d / heads;
    let wo = param_of(&model.params, "mha.output");
    let mut want = vec![0.0; d];
    for qi in &q {
        let mut cat = Vec::new();
        for h in 0..heads {
            let wq = param_of(&model.params, &format!("mha.h{h}.query"));
            let wk = param_of(&model.params, &format!("mha.h{h}.key"));
            let wv = param_of(&model.params, &format!("mha.h{h}.value"));
            let qh = &mm(&[qi.clone()], &wq)[0];
            let k = mm(&c, &wk);
            let v = mm(&c, &wv);
            let s: Vec<f64> = k
                .iter()
                .map(|kr| kr.iter().zip(qh).map(|(a, b)| a * b).sum::<f64>() / (hd as f64).sqrt())
                .collect();
            let mx = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = s.iter().map(|x| (x - mx).exp()).collect();
            let zsum: f64 = e.iter().sum();
            for j in 0..hd {
                cat.push((0..c.len()).map(|i| e[i] / zsum * v[i][j]).sum());
            }
        }
        for (a, b) in want.iter_mut().zip(&mm(&[cat], &wo)[0]) {
            *a += b / q.len() as f64;
        }
    }
    max_abs_diff(&got, &want)
}

fn social_oracle_error(seed: u64) -> f64 {
    let mut r = rng(2000 + seed);
    let layers = r.gen_range(0..4);
    let model = CsagnnModel::<f64>::new(4, 2, layers, &mut r).unwrap();
    let n = r.gen_range(1..5);
    let h0 = random_matrix(&mut r, n, 8);
    let alpha: Vec<Vec<f64>> = (0..n)
        .map(|u| {
            let raw: Vec<f64> = (0..n).map(|w| if w == u { 0.0 } else { r.gen_range(0.0..1.0) }).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|x| if s > 0.0 { x / s } else { 0.0 }).collect()
        })
        .collect();

    let mut tape = Tape::new();
    let vars = model.params.register(&mut tape);
    let hv = tape.constant(tensor(&h0, 8));
    let out = model.social_forward(&mut tape, &vars, hv, &tensor(&alpha, n)).unwrap();
    let got = tape.value(out).data().to_vec();

    let mut h = h0.clone();
    let mut total = h0[0].clone();
    for l in 0..layers {
        let w1 = param_of(&model.params, &format!("social.l{l}.self"));
        let w2 = param_of(&model.params, &format!("social.l{l}.neighbors"));
        let next: Vec<Vec<f64>> = (0..n)
            .map(|u| {
                let agg: Vec<f64> = (0..8).map(|k| (0..n).map(|w| alpha[u][w] * h[w][k]).sum()).collect();
                let a = &mm(&[agg], &w2)[0];
                let b = &mm(&[h[u].clone()], &w1)[0];
                a.iter().zip(b).map(|(x, y)| (x + y).max(0.0)).collect()
            })
            .collect();
        h = next;
        for (t, x) in total.iter_mut().zip(&h[0]) {
            *t += x;
        }
    }
    let want: Vec<f64> = total.iter().map(|t| t / (layers + 1) as f64).collect();
    max_abs_diff(&got, &want)
}

fn shared_neighbor_pairs(edges: &[(u32, u32)], left: usize) -> BTreeSet<(u32, u32)> {
    let mut out = BTreeSet::new();
    for a in 0..left as u32 {
        let na: BTreeSet<u32> = edges.iter().filter(|e| e.0 == a).map(|e| e.1).collect();
        for b in a + 1..left as u32 {
            if edges.iter().any(|e| e.0 == b && na.contains(&e.1)) {
                out.insert((a, b));
            }
        }
    }
    out
}

fn metapath_oracle_matches(seed: u64) -> bool {
    let mut r = rng(3000 + seed);
    let (nm, nj) = (r.gen_range(5..30), r.gen_range(2..10));
    let mut edges = Vec::new();
    for m in 0..nm as u32 {
        for j in 0..nj as u32 {
            if r.gen_bool(0.15) {
                edges.push((RelationKind::Apply, m, j));
            }
        }
    }
    let texts: [Vec<String>; 5] = std::array::from_fn(|k| vec![String::new(); [nm, nj, 0, 0, 0][k]]);
    let store = WhinStore::from_parts(texts, &edges, vec![]).unwrap().materialize_metapaths(None, seed).unwrap();
    let mj: Vec<(u32, u32)> = edges.iter().map(|e| (e.1, e.2)).collect();
    let jm: Vec<(u32, u32)> = edges.iter().map(|e| (e.2, e.1)).collect();
    let got_m: BTreeSet<(u32, u32)> = store.edges(RelationKind::CoApply).into_iter().collect();
    let got_j: BTreeSet<(u32, u32)> = store.edges(RelationKind::CoApplied).into_iter().collect();
    got_m == shared_neighbor_pairs(&mj, nm) && got_j == shared_neighbor_pairs(&jm, nj)
}

fn ranking_oracle_errors(seed: u64) -> (bool, f64) {
    let mut r = rng(4000 + seed);
    let n = r.gen_range(4..40);
    let mut labels: Vec<u8> = (0..n).map(|_| u8::from(r.gen_bool(0.4))).collect();
    labels[0] = 1;
    labels[1] = 0;
    let scores: Vec<f64> = (0..n).map(|_| r.gen_range(0..10) as f64 / 10.0).collect();

    // AUC as a count of won positive/negative comparisons, ties worth one half.
    let (mut twice_wins, mut comparisons) = (0u64, 0u64);
    for i in 0..n {
        for j in 0..n {
            if labels[i] == 1 && labels[j] == 0 {
                comparisons += 1;
                twice_wins += if scores[i] > scores[j] { 2 } else if scores[i] == scores[j] { 1 } else { 0 };
            }
        }
    }
    let got_auc = auc(&scores, &labels).unwrap();
    let auc_exact = (got_auc * 2.0 * comparisons as f64).round() as u64 == twice_wins
        && (got_auc - twice_wins as f64 / (2 * comparisons) as f64).abs() < 1e-12;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let mut want_ap = 0.0;
    for k in 0..n {
        if labels[order[k]] == 1 {
            let hits = order[..=k].iter().filter(|&&i| labels[i] == 1).count();
            want_ap += hits as f64 / (k + 1) as f64;
        }
    }
    want_ap /= pos;
    let got_ap = acc_f1_ap(&scores, &labels, 0.5).unwrap().ap;
    (auc_exact, (got_ap - want_ap).abs())
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let n = 25u64;
    let rg = (0..n).map(rgcn_oracle_error).fold(0.0, f64::max);
    let at = (0..n).map(attention_oracle_error).fold(0.0, f64::max);
    let so = (0..n).map(social_oracle_error).fold(0.0, f64::max);
    let mp = (0..n).filter(|&s| metapath_oracle_matches(s)).count() as u64;
    let ranking: Vec<(bool, f64)> = (0..n).map(ranking_oracle_errors).collect();
    let auc_ok = ranking.iter().filter(|r| r.0).count() as u64;
    let ap = ranking.iter().map(|r| r.1).fold(0.0, f64::max);
    let secs = t.elapsed().as_secs_f64();
    let pass = rg < 1e-5 && at < 1e-5 && so < 1e-5 && mp == n && auc_ok == n && ap < 1e-5 && secs < 60.0;
    (
        pass,
        format!(
            "oracles over {n} instances each: rgcn {rg:.1e}, attention {at:.1e}, social {so:.1e}, \
             metapath exact {mp}/{n}, auc exact {auc_ok}/{n}, ap {ap:.1e}, {secs:.1}s"
        ),
    )
}

// ---------------------------------------------------------------- criterion 3

fn criterion_3() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut zero_fallbacks = 0;
    let mut attention_rows = 0;
    for case in 0..1000u64 {
        let mut r = rng(5000 + case);
        let heads = [1, 2, 4][case as usize % 3];
        let d = heads * r.gen_range(1..3);
        let model = CsagnnModel::<f64>::new(d, heads, 0, &mut r).unwrap();
        let mut tape = Tape::new();
        let vars = model.params.register(&mut tape);
        let (nc, nq) = (r.gen_range(1..8), r.gen_range(1..5));
        let c = tape.constant(tensor(&random_matrix(&mut r, nc, d), d));
        let q = tape.constant(tensor(&random_matrix(&mut r, nq, d), d));
        let pq = model.project_queries(&mut tape, &vars, q).unwrap();
        for a in model.attention_weights(&mut tape, &vars, c, &pq).unwrap() {
            let a = tape.value(a);
            for row in 0..a.rows() {
                worst = worst.max((a.row(row).iter().sum::<f64>() - 1.0).abs());
                attention_rows += 1;
            }
        }

        let k = r.gen_range(1..8);
        let relevance: Vec<f64> = if case % 4 == 0 {
            zero_fallbacks += 1;
            vec![0.0; k]
        } else {
            (0..k).map(|_| if r.gen_bool(0.3) { 0.0 } else { r.gen_range(0.0..1.0) }).collect()
        };
        let alpha = aggregation_weights(&relevance).unwrap();
        worst = worst.max((alpha.iter().sum::<f64>() - 1.0).abs());
        if relevance.iter().all(|&x| x == 0.0) {
            let u = 1.0 / k as f64;
            worst = worst.max(alpha.iter().map(|a| (a - u).abs()).fold(0.0, f64::max));
        }
    }

    // Whole plans built from a network, including members whose connections
    // share nothing with the job.
    let d = 4;
    let connect: Vec<(u32, u32)> = vec![(0, 1), (0, 2), (0, 3), (1, 2), (3, 4)];
    let w = world(d, 5, &connect, &[(1, 1), (2, 2), (3, 0), (4, 3)], &[(0, 0), (1, 1)], (0..4).map(|i| axis(d, i)).collect(), 8);
    let cfg = CsagnnConfig { dim: d, heads: 2, ..Default::default() };
    let mut plan_rows = 0;
    for m in 0..w.store.count(EntityKind::Member) as u32 {
        for j in 0..2 {
            let plan = plan_pair(&w.features, &cfg, m, j);
            for u in 0..plan.locals.len() {
                let row: f64 = plan.alpha.row(u).iter().map(|&x| x as f64).sum();
                if row != 0.0 {
                    worst = worst.max((row - 1.0).abs());
                    plan_rows += 1;
                }
            }
        }
    }
    (
        worst <= 1e-6 && plan_rows > 0,
        format!(
            "normalization: 1000 configurations ({attention_rows} attention rows, {zero_fallbacks} all-zero relevance), \
             {plan_rows} plan rows, max deviation {worst:.1e}"
        ),
    )
}

// ---------------------------------------------------------- criteria 4 and 7

struct TechPretraining {
    dataset: SynthDataset,
    store: WhinStore,
    rgcn: PretrainOutcome,
    rgcn_time: Duration,
    random: PretrainOutcome,
    random_time: Duration,
}

fn tech_pretraining() -> TechPretraining {
    let dataset = generate(&preset("tech-100x").unwrap()).unwrap();
    let store = dataset.to_store().unwrap().materialize_metapaths(Some(50), 0).unwrap();
    let emb = embedder(32);
    let t = Instant::now();
    let rgcn = train_pretrain(&store, &emb, &PretrainConfig::default(), |_| {}).unwrap();
    let rgcn_time = t.elapsed();
    let t = Instant::now();
    let random_cfg = PretrainConfig { encoder: EncoderMode::FrozenRandom, ..Default::default() };
    let random = train_pretrain(&store, &emb, &random_cfg, |_| {}).unwrap();
    let random_time = t.elapsed();
    TechPretraining { dataset, store, rgcn, rgcn_time, random, random_time }
}

fn criterion_4(p: &TechPretraining) -> Outcome {
    let best = p.rgcn.history.iter().filter_map(|h| h.heldout_auc).fold(0.0, f64::max);
    let random = p.random.history.last().and_then(|h| h.heldout_auc).unwrap_or(f64::NAN);
    let secs = (p.rgcn_time + p.random_time).as_secs_f64();
    (
        p.rgcn.history.len() <= 20 && best >= 0.85 && (random - 0.5).abs() <= 0.05 && secs < 300.0,
        format!("pre-training on tech-100x: held-out AUC {best:.3} (>= 0.85), frozen random {random:.3} (0.5 +/- 0.05), {secs:.0}s"),
    )
}

fn pool_silhouette(skills: &Tensor<f32>, pools: &[usize]) -> f64 {
    let rows: Vec<&[f32]> = (0..skills.rows()).map(|r| skills.row(r)).collect();
    let p = project_2d(&rows).unwrap();
    silhouette(&p.coords, pools).unwrap()
}

fn criterion_7(p: &TechPretraining) -> Outcome {
    let t = Instant::now();
    let pools: Vec<usize> = p.dataset.manifest.skill_labels.iter().map(|l| l.pool).collect();
    let trained = pool_silhouette(p.rgcn.table.kind(EntityKind::Skill), &pools);
    let init = initial_states(&p.store, &embedder(32));
    let span = GlobalIndex::new(p.store.counts()).span(EntityKind::Skill);
    let init_skills = Tensor::new(span.len(), 32, init.data()[span.start * 32..span.end * 32].to_vec()).unwrap();
    let untrained = pool_silhouette(&init_skills, &pools);
    let secs = t.elapsed().as_secs_f64();
    (
        trained > 0.2 && untrained <= 0.05 && secs < 60.0,
        format!("skill pool silhouette after pre-training {trained:.3} (> 0.2), untrained {untrained:.3} (<= 0.05), {secs:.1}s"),
    )
}

// ---------------------------------------------------------------- criterion 5

const ABLATION_PRETRAIN_LR: f32 = 1e-2;

fn variant_means(name: &str, variants: &[Variant]) -> Vec<f64> {
    let dataset = generate(&preset(name).unwrap()).unwrap();
    let store = dataset.to_store().unwrap().materialize_metapaths(Some(50), 0).unwrap();
    let emb = embedder(32);
    let pre = PretrainConfig { learning_rate: ABLATION_PRETRAIN_LR, ..Default::default() };
    let table = train_pretrain(&store, &emb, &pre, |_| {}).unwrap().table;
    variants
        .iter()
        .map(|&variant| {
            let aucs: Vec<f64> = (0..3u64)
                .map(|seed| {
                    let cfg = CsagnnConfig { variant, seed, ..Default::default() };
                    let run = run_ablation(&store, &emb, Some(&table), &cfg, &SplitSpec::new(seed)).unwrap();
                    run.report.auc / 100.0
                })
                .collect();
            aucs.iter().sum::<f64>() / aucs.len() as f64
        })
        .collect()
}

fn criterion_5() -> Outcome {
    let t = Instant::now();
    let h = variant_means("hybrid-100x", &[Variant::Full, Variant::WoA, Variant::WoCsa]);
    let s = variant_means("tech-100x", &[Variant::Full, Variant::WoA]);
    let secs = t.elapsed().as_secs_f64();
    let pass = h[0] >= h[1] + 0.01 && h[0] >= h[2] + 0.02 && s[0] - s[1] <= 0.02 && secs < 1200.0;
    (
        pass,
        format!(
            "ablation, mean test AUC over 3 seeds: hybrid full {:.4} vs wo_A {:.4} (need +0.01) vs wo_CSA {:.4} (need +0.02); \
             tech full {:.4} vs wo_A {:.4} (gap {:.4}, need <= 0.02); {secs:.0}s",
            h[0],
            h[1],
            h[2],
            s[0],
            s[1],
            s[0] - s[1]
        ),
    )
}

// ---------------------------------------------------------------- criterion 6

fn criterion_6() -> Outcome {
    // Member 0 has five connections; only member 3 masters the job's skill.
    let d = 8;
    let connect: Vec<(u32, u32)> = (1..=5).map(|m| (0, m)).collect();
    let master = vec![(0, 0), (1, 1), (2, 2), (3, 0), (4, 3), (5, 4)];
    let w = world(d, 6, &connect, &master, &[(0, 0), (1, 1)], (0..5).map(|i| axis(d, i)).collect(), 5);
    let cfg = CsagnnConfig { dim: d, heads: 2, ..Default::default() };
    let plan = plan_pair(&w.features, &cfg, 0, 0);
    let Some(pos) = plan.locals.iter().position(|&m| m == 3) else {
        return (false, "noise suppression: relevant connection was not selected".into());
    };
    let a = plan.alpha.get(0, pos);
    let rest: f32 = (1..plan.locals.len()).filter(|&i| i != pos).map(|i| plan.alpha.get(0, i)).sum();
    (
        plan.locals.len() == 6 && a >= 0.99,
        format!("noise suppression: relevant connection alpha {a:.4} (>= 0.99), four orthogonal share {rest:.4}"),
    )
}

// ---------------------------------------------------------------- criterion 8

fn whin(dir: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_whin-pjf"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn files(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Runs every command with the same relative arguments from inside `root`,
/// so recorded paths agree between repetitions.
fn pipeline(root: &Path, config: &Path) {
    std::fs::create_dir_all(root).unwrap();
    let config = config.to_str().unwrap();
    let run = |args: &[&str]| whin(root, args);
    run(&["synth", "--config", config, "--seed", "7", "--out", "data"]);
    run(&["pretrain", "--data", "data", "--dim", "8", "--layers", "2", "--epochs", "2", "--seed", "7", "--out", "pre"]);
    run(&["train", "--data", "data", "--pretrained", "pre", "--heads", "2", "--epochs", "3", "--seed", "7", "--out", "model"]);
    run(&["eval", "--model", "model", "--data", "data", "--split", "test"]);
    run(&[
        "ablate", "--data", "data", "--dim", "8", "--pretrain-epochs", "1", "--heads", "2", "--epochs", "2",
        "--seeds", "0,1", "--out", "ablate",
    ]);
    run(&["pca", "--ckpt", "pre", "--data", "data", "--out", "skills.csv", "--svg", "skills.svg"]);
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = GenConfig {
        name: "tiny".into(),
        members: 40,
        jobs: 40,
        skills: 40,
        companies: 5,
        schools: 5,
        pairs: 80,
        connections: 150,
        ..preset("finance-100x").unwrap()
    };
    let config = tmp.path().join("tiny.json");
    std::fs::write(&config, serde_json::to_string(&cfg).unwrap()).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    pipeline(&a, &config);
    pipeline(&b, &config);
    let (fa, fb) = (files(&a), files(&b));
    let differing: Vec<&str> = fa
        .iter()
        .zip(&fb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let names_match = fa.iter().map(|f| &f.0).eq(fb.iter().map(|f| &f.0));
    (
        names_match && differing.is_empty() && fa.len() > 20,
        format!(
            "determinism: synth, pretrain, train, eval, ablate, pca repeated; {} files compared, {} differ{}",
            fa.len(),
            differing.len(),
            if differing.is_empty() { String::new() } else { format!(" ({})", differing.join(", ")) }
        ),
    )
}

// ---------------------------------------------------------------------- main

fn report(n: usize, f: impl FnOnce() -> Outcome) -> bool {
    let (pass, detail) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn main() {
    // `cargo test -- --list` and similar probes expect no work.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut passed = Vec::new();
    passed.push(report(1, criterion_1));
    passed.push(report(2, criterion_2));
    passed.push(report(3, criterion_3));
    let tech = catch_unwind(tech_pretraining);
    match &tech {
        Ok(p) => {
            passed.push(report(4, || criterion_4(p)));
            passed.push(report(5, criterion_5));
            passed.push(report(6, criterion_6));
            passed.push(report(7, || criterion_7(p)));
        }
        Err(_) => {
            passed.push(report(4, || (false, "tech-100x pre-training failed".into())));
            passed.push(report(5, criterion_5));
            passed.push(report(6, criterion_6));
            passed.push(report(7, || (false, "tech-100x pre-training failed".into())));
        }
    }
    passed.push(report(8, criterion_8));
    let failed = passed.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", passed.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
