//! Seeded synthetic workplace graphs with planted skill structure.
//!
//! Every industry owns a ring of specialties. Skills, members, jobs and
//! companies get an angle on their industry's ring; skill choices, social ties,
//! applications and candidate-pair labels all favor small angular distance.
//! A skill's latent vector is `(cos a, sin a)` placed in its industry's block,
//! so the cosine between two skill-set means measures specialty overlap.

use std::collections::HashSet;
use std::f64::consts::TAU;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::store::{self, CandidatePair, EntityKind, RelationKind, WhinStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub name: String,
    pub industries: usize,
    /// Specialty pools per industry; skills are split evenly across them.
    pub pools_per_industry: usize,
    /// Entity totals, spread as evenly as possible over industries.
    pub members: usize,
    pub jobs: usize,
    pub skills: usize,
    pub companies: usize,
    pub schools: usize,
    pub pairs: usize,
    pub positive_rate: f64,
    pub connections: usize,
    /// Fraction of connections that cross industries (the noise knob).
    pub cross_industry: f64,
    /// Slope of the label logit in true skill cosine.
    pub overlap_strength: f64,
    pub member_skills: (usize, usize),
    pub job_skills: (usize, usize),
    pub out_of_industry_skill_rate: f64,
    /// Concentration of skill choice around an entity's angle.
    pub skill_focus: f64,
    /// Concentration of intra-industry connections around a member's angle.
    pub social_focus: f64,
    /// Share of a member's skills recorded as `master` edges.
    pub listed_skill_fraction: f64,
    /// Share of a member's skills named in the profile text.
    pub mentioned_skill_fraction: f64,
    pub filler_tokens: (usize, usize),
    pub applications_per_member: (usize, usize),
    /// Share of candidate pairs whose job lies outside the member's industry.
    pub cross_industry_pairs: f64,
    pub seed: u64,
}

impl GenConfig {
    fn base(name: &str) -> Self {
        Self {
            name: name.to_string(),
            industries: 1,
            pools_per_industry: 4,
            members: 100,
            jobs: 100,
            skills: 80,
            companies: 20,
            schools: 10,
            pairs: 400,
            positive_rate: 0.4,
            connections: 600,
            cross_industry: 0.0,
            overlap_strength: 6.0,
            member_skills: (3, 15),
            job_skills: (3, 10),
            out_of_industry_skill_rate: 0.05,
            skill_focus: 4.0,
            social_focus: 3.0,
            listed_skill_fraction: 0.7,
            mentioned_skill_fraction: 0.7,
            filler_tokens: (10, 30),
            applications_per_member: (1, 4),
            cross_industry_pairs: 0.1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [
            ("industries", self.industries),
            ("pools_per_industry", self.pools_per_industry),
            ("members", self.members),
            ("jobs", self.jobs),
            ("skills", self.skills),
            ("companies", self.companies),
            ("schools", self.schools),
            ("pairs", self.pairs),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        for (name, v) in [
            ("members", self.members),
            ("jobs", self.jobs),
            ("companies", self.companies),
            ("schools", self.schools),
        ] {
            if v < self.industries {
                return bad(format!("{name} ({v}) must cover all {} industries", self.industries));
            }
        }
        if !(0.0..=1.0).contains(&self.cross_industry) {
            return bad(format!("cross_industry {} outside [0, 1]", self.cross_industry));
        }
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return bad(format!("positive_rate {} outside (0, 1)", self.positive_rate));
        }
        for (name, (lo, hi)) in [
            ("member_skills", self.member_skills),
            ("job_skills", self.job_skills),
            ("filler_tokens", self.filler_tokens),
            ("applications_per_member", self.applications_per_member),
        ] {
            if lo > hi {
                return bad(format!("{name} range ({lo}, {hi}) is empty"));
            }
        }
        if self.member_skills.0 == 0 || self.job_skills.0 == 0 {
            return bad("members and jobs need at least one skill".into());
        }
        let per_industry = self.skills / self.industries;
        let need = self.member_skills.1.max(self.job_skills.1);
        if need > per_industry {
            return bad(format!(
                "entities may need {need} skills but an industry pool only has {per_industry}"
            ));
        }
        if self.skills < self.industries * self.pools_per_industry {
            return bad("fewer skills than specialty pools".into());
        }
        if self.pairs > self.members * self.jobs {
            return bad(format!(
                "{} candidate pairs requested from only {} member/job combinations",
                self.pairs,
                self.members * self.jobs
            ));
        }
        let possible = self.members * (self.members - 1) / 2;
        if self.connections > possible {
            return bad(format!(
                "{} connections requested but only {possible} member pairs exist",
                self.connections
            ));
        }
        for (name, v) in [
            ("out_of_industry_skill_rate", self.out_of_industry_skill_rate),
            ("listed_skill_fraction", self.listed_skill_fraction),
            ("mentioned_skill_fraction", self.mentioned_skill_fraction),
            ("cross_industry_pairs", self.cross_industry_pairs),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Named configurations at 1/100 of the production dataset sizes.
pub fn presets() -> Vec<GenConfig> {
    let tech = GenConfig {
        members: 330,
        jobs: 620,
        skills: 270,
        companies: 60,
        schools: 30,
        pairs: 1360,
        connections: 19220,
        ..GenConfig::base("tech-100x")
    };
    let finance = GenConfig {
        members: 200,
        jobs: 270,
        skills: 230,
        companies: 40,
        schools: 20,
        pairs: 360,
        connections: 6150,
        ..GenConfig::base("finance-100x")
    };
    let hybrid = GenConfig {
        industries: 3,
        members: 830,
        jobs: 1200,
        skills: 330,
        companies: 150,
        schools: 60,
        pairs: 2000,
        connections: 27680,
        cross_industry: 0.3,
        ..GenConfig::base("hybrid-100x")
    };
    vec![tech, finance, hybrid]
}

pub fn preset(name: &str) -> Result<GenConfig> {
    presets().into_iter().find(|p| p.name == name).ok_or_else(|| {
        let names: Vec<String> = presets().into_iter().map(|p| p.name).collect();
        Error::Config(format!("unknown preset {name:?}; available: {}", names.join(", ")))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkillLabel {
    pub id: u32,
    pub industry: usize,
    pub pool: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub format_version: u32,
    pub config: GenConfig,
    pub skill_labels: Vec<SkillLabel>,
    pub member_industry: Vec<usize>,
    pub job_industry: Vec<usize>,
}

impl SynthManifest {
    pub fn read(path: &Path) -> Result<Self> {
        binio::read_json(path)
    }
}

/// Generated files in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthDataset {
    pub texts: [Vec<String>; 5],
    pub edges: Vec<(RelationKind, u32, u32)>,
    pub pairs: Vec<CandidatePair>,
    pub manifest: SynthManifest,
    /// Latent skill-mean vectors behind the labels (for oracle checks).
    pub member_latent: Vec<Vec<f64>>,
    pub job_latent: Vec<Vec<f64>>,
    pub skill_latent: Vec<Vec<f64>>,
}

impl SynthDataset {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        store::write_entities(&dir.join("entities.tsv"), &self.texts)?;
        store::write_relations(&dir.join("relations.tsv"), &self.edges)?;
        store::write_pairs(&dir.join("pairs.tsv"), &self.pairs)?;
        binio::write_json(&dir.join("manifest.json"), &self.manifest)
    }

    pub fn to_store(&self) -> Result<WhinStore> {
        WhinStore::from_parts(self.texts.clone(), &self.edges, self.pairs.clone())
    }
}

struct Placed {
    industry: usize,
    angle: f64,
}

fn split_even(total: usize, parts: usize) -> Vec<usize> {
    (0..parts)
        .map(|i| total / parts + usize::from(i < total % parts))
        .collect()
}

/// Entities assigned to industries in contiguous blocks, uniform angles.
fn place(rng: &mut Rng, total: usize, industries: usize) -> Vec<Placed> {
    let mut out = Vec::with_capacity(total);
    for (ind, n) in split_even(total, industries).into_iter().enumerate() {
        for _ in 0..n {
            out.push(Placed {
                industry: ind,
                angle: rng.gen_range(0.0..TAU),
            });
        }
    }
    out
}

fn affinity(focus: f64, a: f64, b: f64) -> f64 {
    (focus * ((a - b).cos() - 1.0)).exp()
}

struct Words {
    used: HashSet<String>,
}

impl Words {
    fn fresh(&mut self, rng: &mut Rng) -> String {
        const C: &[u8] = b"bcdfghjklmnprstvz";
        const V: &[u8] = b"aeiou";
        loop {
            let syllables = rng.gen_range(2..=4);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push(C[rng.gen_range(0..C.len())] as char);
                w.push(V[rng.gen_range(0..V.len())] as char);
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

/// `k` distinct items drawn with probability proportional to `weights`.
fn weighted_distinct(rng: &mut Rng, items: &[u32], weights: &[f64], k: usize) -> Vec<u32> {
    let pool: Vec<(u32, f64)> = items.iter().copied().zip(weights.iter().copied()).collect();
    let mut picked: Vec<u32> = pool
        .choose_multiple_weighted(rng, k.min(pool.len()), |x| x.1.max(1e-300))
        .expect("weights are positive")
        .map(|x| x.0)
        .collect();
    picked.sort_unstable();
    picked
}

fn take_fraction(rng: &mut Rng, items: &[u32], fraction: f64) -> Vec<u32> {
    let k = ((items.len() as f64 * fraction).round() as usize).clamp(1, items.len());
    let mut v: Vec<u32> = items.choose_multiple(rng, k).copied().collect();
    v.sort_unstable();
    v
}

fn latent_mean(skills: &[u32], skill_vec: &[Vec<f64>]) -> Vec<f64> {
    let dim = skill_vec[0].len();
    let mut m = vec![0.0; dim];
    for &s in skills {
        for (o, v) in m.iter_mut().zip(&skill_vec[s as usize]) {
            *o += v;
        }
    }
    let n = skills.len().max(1) as f64;
    m.iter().map(|v| v / n).collect()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn generate(cfg: &GenConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let seed = cfg.seed;
    let n_ind = cfg.industries;
    let mut words = Words { used: HashSet::new() };
    let mut name_rng = rng::substream(seed, "synth.names", 0);

    // Skills: contiguous per industry, pools evenly spaced on the ring.
    let mut skill_labels = Vec::with_capacity(cfg.skills);
    let mut skill_angle = Vec::with_capacity(cfg.skills);
    let mut skill_rng = rng::substream(seed, "synth.skills", 0);
    let mut industry_skills: Vec<Vec<u32>> = vec![Vec::new(); n_ind];
    let mut next = 0u32;
    for (ind, n) in split_even(cfg.skills, n_ind).into_iter().enumerate() {
        let pools = cfg.pools_per_industry;
        for (pool, m) in split_even(n, pools).into_iter().enumerate() {
            let centre = TAU * pool as f64 / pools as f64;
            for _ in 0..m {
                let jitter = (skill_rng.gen::<f64>() - 0.5) * 0.5 * TAU / pools as f64;
                skill_labels.push(SkillLabel {
                    id: next,
                    industry: ind,
                    pool,
                });
                skill_angle.push(centre + jitter);
                industry_skills[ind].push(next);
                next += 1;
            }
        }
    }
    let latent_dim = 2 * n_ind;
    let skill_vec: Vec<Vec<f64>> = skill_labels
        .iter()
        .zip(&skill_angle)
        .map(|(l, &a)| {
            let mut v = vec![0.0; latent_dim];
            v[2 * l.industry] = a.cos();
            v[2 * l.industry + 1] = a.sin();
            v
        })
        .collect();
    // One unrelated word per skill, so text alone says nothing about pools.
    let skill_names: Vec<String> = skill_labels.iter().map(|_| words.fresh(&mut name_rng)).collect();
    let shared_filler: Vec<String> = (0..200).map(|_| words.fresh(&mut name_rng)).collect();
    let industry_filler: Vec<Vec<String>> = (0..n_ind)
        .map(|_| (0..60).map(|_| words.fresh(&mut name_rng)).collect())
        .collect();

    let mut place_rng = rng::substream(seed, "synth.place", 0);
    let members = place(&mut place_rng, cfg.members, n_ind);
    let jobs = place(&mut place_rng, cfg.jobs, n_ind);
    let companies = place(&mut place_rng, cfg.companies, n_ind);
    let schools = place(&mut place_rng, cfg.schools, n_ind);

    let choose_skills = |rng: &mut Rng, p: &Placed, range: (usize, usize)| -> Vec<u32> {
        let k = rng.gen_range(range.0..=range.1);
        let own = &industry_skills[p.industry];
        let w: Vec<f64> = own
            .iter()
            .map(|&s| affinity(cfg.skill_focus, skill_angle[s as usize], p.angle))
            .collect();
        let mut picked = weighted_distinct(rng, own, &w, k);
        if n_ind > 1 {
            for slot in picked.iter_mut() {
                if rng.gen_bool(cfg.out_of_industry_skill_rate) {
                    let other = (p.industry + rng.gen_range(1..n_ind)) % n_ind;
                    *slot = *industry_skills[other].choose(rng).expect("industry has skills");
                }
            }
            picked.sort_unstable();
            picked.dedup();
        }
        picked
    };

    let mut edges = Vec::new();
    let mut ent_rng = rng::substream(seed, "synth.entities", 0);

    let mut member_true = Vec::with_capacity(cfg.members);
    let mut member_text = Vec::with_capacity(cfg.members);
    for (m, p) in members.iter().enumerate() {
        let skills = choose_skills(&mut ent_rng, p, cfg.member_skills);
        for s in take_fraction(&mut ent_rng, &skills, cfg.listed_skill_fraction) {
            edges.push((RelationKind::Master, m as u32, s));
        }
        let mentioned = take_fraction(&mut ent_rng, &skills, cfg.mentioned_skill_fraction);
        member_text.push(compose_text(
            &mut ent_rng,
            &mentioned,
            &skill_names,
            &shared_filler,
            &industry_filler[p.industry],
            cfg.filler_tokens,
        ));
        member_true.push(skills);
    }

    let mut job_true = Vec::with_capacity(cfg.jobs);
    let mut job_text = Vec::with_capacity(cfg.jobs);
    for (j, p) in jobs.iter().enumerate() {
        let skills = choose_skills(&mut ent_rng, p, cfg.job_skills);
        for &s in &skills {
            edges.push((RelationKind::Require, j as u32, s));
        }
        job_text.push(compose_text(
            &mut ent_rng,
            &skills,
            &skill_names,
            &shared_filler,
            &industry_filler[p.industry],
            cfg.filler_tokens,
        ));
        job_true.push(skills);
    }

    // Employers and schools: nearest in angle within the industry, softly.
    let by_industry = |items: &[Placed], ind: usize| -> Vec<u32> {
        (0..items.len() as u32)
            .filter(|&i| items[i as usize].industry == ind)
            .collect()
    };
    let company_by_ind: Vec<Vec<u32>> = (0..n_ind).map(|i| by_industry(&companies, i)).collect();
    let school_by_ind: Vec<Vec<u32>> = (0..n_ind).map(|i| by_industry(&schools, i)).collect();
    let pick_near = |rng: &mut Rng, pool: &[u32], items: &[Placed], angle: f64, focus: f64| -> u32 {
        let w: Vec<f64> = pool
            .iter()
            .map(|&c| affinity(focus, items[c as usize].angle, angle))
            .collect();
        pool[WeightedIndex::new(&w).expect("positive weights").sample(rng)]
    };
    for (m, p) in members.iter().enumerate() {
        let c = pick_near(&mut ent_rng, &company_by_ind[p.industry], &companies, p.angle, cfg.skill_focus);
        edges.push((RelationKind::WorkAt, m as u32, c));
        let s = pick_near(&mut ent_rng, &school_by_ind[p.industry], &schools, p.angle, 1.0);
        edges.push((RelationKind::Attend, m as u32, s));
    }
    for (j, p) in jobs.iter().enumerate() {
        let c = pick_near(&mut ent_rng, &company_by_ind[p.industry], &companies, p.angle, cfg.skill_focus);
        edges.push((RelationKind::Post, j as u32, c));
    }

    let member_latent: Vec<Vec<f64>> = member_true.iter().map(|s| latent_mean(s, &skill_vec)).collect();
    let job_latent: Vec<Vec<f64>> = job_true.iter().map(|s| latent_mean(s, &skill_vec)).collect();

    let pairs = candidate_pairs(cfg, &members, &jobs, &member_latent, &job_latent)?;
    let pair_set: HashSet<(u32, u32)> = pairs.iter().map(|p| (p.member, p.job)).collect();

    // Application history, kept disjoint from the candidate pairs.
    let mut apply_rng = rng::substream(seed, "synth.apply", 0);
    let job_by_ind: Vec<Vec<u32>> = (0..n_ind).map(|i| by_industry(&jobs, i)).collect();
    for (m, p) in members.iter().enumerate() {
        let k = apply_rng.gen_range(cfg.applications_per_member.0..=cfg.applications_per_member.1);
        let pool: Vec<u32> = job_by_ind[p.industry]
            .iter()
            .copied()
            .filter(|&j| !pair_set.contains(&(m as u32, j)))
            .collect();
        let w: Vec<f64> = pool
            .iter()
            .map(|&j| affinity(cfg.skill_focus, jobs[j as usize].angle, p.angle))
            .collect();
        for j in weighted_distinct(&mut apply_rng, &pool, &w, k) {
            edges.push((RelationKind::Apply, m as u32, j));
        }
    }

    edges.extend(
        connections(cfg, &members)?
            .into_iter()
            .map(|(a, b)| (RelationKind::Connect, a, b)),
    );

    let mut texts: [Vec<String>; 5] = Default::default();
    texts[EntityKind::Member.index()] = member_text;
    texts[EntityKind::Job.index()] = job_text;
    texts[EntityKind::Skill.index()] = skill_names;
    texts[EntityKind::Company.index()] = (0..cfg.companies).map(|_| words.fresh(&mut name_rng)).collect();
    texts[EntityKind::School.index()] = (0..cfg.schools).map(|_| words.fresh(&mut name_rng)).collect();

    Ok(SynthDataset {
        texts,
        edges,
        pairs,
        manifest: SynthManifest {
            format_version: 1,
            config: cfg.clone(),
            skill_labels,
            member_industry: members.iter().map(|p| p.industry).collect(),
            job_industry: jobs.iter().map(|p| p.industry).collect(),
        },
        member_latent,
        job_latent,
        skill_latent: skill_vec,
    })
}

fn compose_text(
    rng: &mut Rng,
    skills: &[u32],
    skill_names: &[String],
    shared: &[String],
    local: &[String],
    filler: (usize, usize),
) -> String {
    let n = rng.gen_range(filler.0..=filler.1);
    let mut tokens: Vec<&str> = skills.iter().map(|&s| skill_names[s as usize].as_str()).collect();
    for _ in 0..n {
        let list = if rng.gen_bool(0.5) { shared } else { local };
        tokens.push(list.choose(rng).expect("filler vocabulary"));
    }
    tokens.shuffle(rng);
    tokens.join(" ")
}

/// Unique candidate pairs labeled by a noisy skill-overlap score: the top
/// `positive_rate` share of `strength * cos + logistic noise` is positive.
fn candidate_pairs(
    cfg: &GenConfig,
    members: &[Placed],
    jobs: &[Placed],
    member_latent: &[Vec<f64>],
    job_latent: &[Vec<f64>],
) -> Result<Vec<CandidatePair>> {
    let mut rng = rng::substream(cfg.seed, "synth.pairs", 0);
    let n_ind = cfg.industries;
    let jobs_by_ind: Vec<Vec<u32>> = (0..n_ind)
        .map(|i| (0..jobs.len() as u32).filter(|&j| jobs[j as usize].industry == i).collect())
        .collect();
    let mut seen = HashSet::new();
    let mut raw = Vec::with_capacity(cfg.pairs);
    let mut attempts = 0usize;
    while raw.len() < cfg.pairs {
        attempts += 1;
        if attempts > cfg.pairs * 1000 {
            return Err(Error::Config("could not draw enough distinct candidate pairs".into()));
        }
        let m = rng.gen_range(0..members.len() as u32);
        let ind = members[m as usize].industry;
        let j = if n_ind > 1 && rng.gen_bool(cfg.cross_industry_pairs) {
            let other = (ind + rng.gen_range(1..n_ind)) % n_ind;
            *jobs_by_ind[other].choose(&mut rng).expect("industry has jobs")
        } else {
            *jobs_by_ind[ind].choose(&mut rng).expect("industry has jobs")
        };
        if !seen.insert((m, j)) {
            continue;
        }
        let cos = cosine(&member_latent[m as usize], &job_latent[j as usize]);
        let u: f64 = rng.gen_range(1e-12..1.0 - 1e-12);
        let noise = (u / (1.0 - u)).ln();
        raw.push((m, j, cfg.overlap_strength * cos + noise));
    }
    let positives = ((cfg.pairs as f64 * cfg.positive_rate).round() as usize).clamp(1, cfg.pairs - 1);
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| raw[b].2.total_cmp(&raw[a].2));
    let mut label = vec![0u8; raw.len()];
    for &i in &order[..positives] {
        label[i] = 1;
    }
    Ok(raw
        .iter()
        .zip(label)
        .map(|(&(member, job, _), label)| CandidatePair { member, job, label })
        .collect())
}

/// Exactly `cfg.connections` distinct ties, of which `round(cross_industry *
/// connections)` join a uniformly drawn member of another industry; the rest favor members at a
/// nearby angle within the same industry. Degrees are capped just above the
/// mean so that popularity alone does not predict ties.
fn connections(cfg: &GenConfig, members: &[Placed]) -> Result<Vec<(u32, u32)>> {
    let mut rng = rng::substream(cfg.seed, "synth.connections", 0);
    let n = members.len();
    let n_ind = cfg.industries;
    let by_ind: Vec<Vec<u32>> = (0..n_ind)
        .map(|i| (0..n as u32).filter(|&m| members[m as usize].industry == i).collect())
        .collect();
    let samplers: Vec<Option<WeightedIndex<f64>>> = (0..n)
        .map(|a| {
            let pa = &members[a];
            let w: Vec<f64> = by_ind[pa.industry]
                .iter()
                .map(|&b| {
                    if b as usize == a {
                        0.0
                    } else {
                        affinity(cfg.social_focus, members[b as usize].angle, pa.angle)
                    }
                })
                .collect();
            WeightedIndex::new(&w).ok()
        })
        .collect();
    let mean_degree = 2.0 * cfg.connections as f64 / n as f64;
    let cap = ((mean_degree * 1.1).ceil() as usize + 1).min(n - 1);
    let cross_target = if n_ind > 1 {
        (cfg.connections as f64 * cfg.cross_industry).round() as usize
    } else {
        0
    };
    let mut cross_placed = 0usize;
    let mut degree = vec![0usize; n];
    let mut seen = HashSet::with_capacity(cfg.connections);
    let mut out = Vec::with_capacity(cfg.connections);
    let mut attempts = 0usize;
    while out.len() < cfg.connections {
        attempts += 1;
        if attempts > cfg.connections * 10_000 {
            return Err(Error::Config(format!(
                "could not place {} connections under the industry constraints",
                cfg.connections
            )));
        }
        let a = rng.gen_range(0..n);
        if degree[a] >= cap {
            continue;
        }
        let ind = members[a].industry;
        // Quotas rather than coin flips: rejected draws would otherwise skew the mix.
        let intra_left = cfg.connections - cross_target - (out.len() - cross_placed);
        let cross_left = cross_target - cross_placed;
        let cross = cross_left > 0 && (intra_left == 0 || rng.gen_bool(cfg.cross_industry));
        let b = if cross {
            let other = (ind + rng.gen_range(1..n_ind)) % n_ind;
            *by_ind[other].choose(&mut rng).expect("industry has members") as usize
        } else if attempts > cfg.connections * 50 {
            // Saturated neighborhoods: any remaining member of the industry.
            *by_ind[ind].choose(&mut rng).expect("industry has members") as usize
        } else {
            match &samplers[a] {
                Some(s) => by_ind[ind][s.sample(&mut rng)] as usize,
                None => continue,
            }
        };
        if a == b || degree[b] >= cap {
            continue;
        }
        let key = (a.min(b) as u32, a.max(b) as u32);
        if seen.insert(key) {
            degree[a] += 1;
            degree[b] += 1;
            cross_placed += usize::from(cross);
            out.push(key);
        }
    }
    Ok(out)
}
