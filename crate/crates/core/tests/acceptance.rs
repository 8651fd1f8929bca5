//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines always print; exits non-zero on failure.

mod common;

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use protattn_core::aminoacid::{aa_attention_correlation, aa_profiles, blosum_agreement, AaCorrelation};
use protattn_core::corpus::{load_corpus, AminoAcid, ProteinRecord};
use protattn_core::metrics::{accumulate_parallel, score_heads_sequential, HeadScoreTable, ScoreAccumulator};
use protattn_core::probes::{
    evaluate_probe, layer_sweep, macro_f1, precision_at_k, top_k_for_length, LinearModel, LinearProbe, ProbeInputs,
    ProbeResult, ProbeTask, ProteinExamples, Representation, SweepConfig,
};
use protattn_core::report::{emit_report, top_heads, Report, ReportConfig, DEFAULT_TOP_N};
use protattn_core::stats::{bonferroni_adjust, shuffle_null, two_proportion_ztest, ZTest};
use protattn_core::structure::{derive_contacts, ContactParams};
use protattn_core::synth::{
    golden_fixture, planted_embeddings, random_corpus, random_stochastic_attention, synth_attention_set, token_flags,
    AttentionSpec, CorpusSpec, GOLDEN_BINDING_HEAD, GOLDEN_CONTACT_HEAD,
};
use protattn_core::tensors::load_attention_dir;
use protattn_core::{
    load_blosum62, score_heads, AnalysisConfig, AttentionSet, AttentionTensor, Corpus, EmbeddingSet, Metric, Property,
    TokenFlag,
};

use common::{brute_force, brute_force_contacts, collinear_record, random_case, random_coords, table_source};

// Tolerances and sizes, pinned.
const C1_CASES: usize = 200;
const C1_WEIGHTED_TOL: f64 = 1e-12;
const C1_TIME_LIMIT: Duration = Duration::from_secs(10);
const C2_F32_STORAGE_TOL: f64 = 1e-7;
const C3_CASES: usize = 100;
const C4_TENSORS: usize = 50;
const C4_NULL_PROTEINS: usize = 1000;
const C4_SE_BAND: f64 = 5.0;
const C5_TUPLES: usize = 1000;
const C5_TOL: f64 = 1e-9;
const C6_GRAD_CASES: usize = 100;
const C6_GRAD_REL_TOL: f64 = 1e-5;
const C6_PEAK_MIN: f64 = 0.95;
const C6_OFF_PEAK_MAX: f64 = 0.6;
const C7_TOL: f64 = 1e-12;
const C8_PROTEINS: usize = 500;
const C8_TIME_LIMIT: Duration = Duration::from_secs(300);

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let exclude = AnalysisConfig::default().exclude_flags;
    for case_no in 0..C1_CASES {
        let (nl, nh) = (rng.gen_range(1..=2), rng.gen_range(1..=3));
        let case = random_case(&mut rng, 5, 8, nl, nh);
        let theta = [0.05, 0.1, 0.2, 0.3, 0.5][rng.gen_range(0..5)];
        let min_arcs = rng.gen_range(1..=4);
        let oracle = brute_force(&case, theta, &exclude);
        let source = table_source(case.indicators.clone());
        for metric in [Metric::HighConfidence, Metric::Weighted] {
            let config = AnalysisConfig { theta, min_arcs, metric, ..Default::default() };
            let table = score_heads(&case.corpus, &case.tensors, &source, &config).map_err(|e| e.to_string())?;
            for (h, &(hits, arcs, wh, mass)) in table.heads.iter().zip(&oracle) {
                check(h.hits == hits && h.arc_count == arcs, format!("case {case_no}: counts differ"))?;
                let expected = match metric {
                    Metric::HighConfidence => (arcs >= min_arcs).then(|| hits as f64 / arcs as f64),
                    Metric::Weighted => (mass > 0.0).then(|| wh / mass),
                };
                match (h.score, expected) {
                    (None, None) => {}
                    (Some(a), Some(b)) if metric == Metric::HighConfidence => {
                        check(a == b, format!("case {case_no}: high {a} vs {b}"))?
                    }
                    (Some(a), Some(b)) => {
                        check((a - b).abs() <= C1_WEIGHTED_TOL, format!("case {case_no}: weighted {a} vs {b}"))?
                    }
                    (a, b) => return Err(format!("case {case_no}: presence differs {a:?} vs {b:?}")),
                }
            }
        }
    }
    let elapsed = start.elapsed();
    check(elapsed < C1_TIME_LIMIT, format!("took {elapsed:?}"))?;
    Ok(format!("{C1_CASES} corpora, both modes, {elapsed:.2?}"))
}

/// Exact rational value of an f32.
fn exact(w: f32) -> Ratio<i64> {
    if w == 0.0 {
        return Ratio::from_integer(0);
    }
    let bits = w.to_bits();
    let exp = ((bits >> 23) & 0xff) as i32 - 127 - 23;
    let mant = ((bits & 0x7f_ffff) | 0x80_0000) as i64;
    if exp >= 0 {
        Ratio::from_integer(mant << exp)
    } else {
        Ratio::new(mant, 1i64 << (-exp))
    }
}

fn criterion_2() -> Outcome {
    let corpus = Corpus::from_records(vec![ProteinRecord::from_sequence("p", "MKV")]).unwrap();
    let weights: Vec<f32> = vec![0.0, 0.7, 0.3, 0.5, 0.4, 0.1, 0.2, 0.2, 0.6];
    let t = AttentionTensor::new("p", 1, 1, vec![TokenFlag::Residue; 3], weights.clone()).unwrap();
    let tensors = AttentionSet::from([("p".to_string(), t)]);
    let source = protattn_core::properties::FnSource::new(
        "pair",
        protattn_core::properties::IndicatorKind::Pairwise,
        |r: &ProteinRecord| {
            Some(protattn_core::properties::PropertyIndicator::pairwise_from_fn("pair", r.len(), |i, j| {
                (i, j) == (0, 1) || (i, j) == (1, 0)
            }))
        },
    );
    let high = AnalysisConfig { min_arcs: 1, ..Default::default() };
    let score = score_heads(&corpus, &tensors, &source, &high).unwrap().score(0, 0);
    check(score == Some(0.5), format!("high-confidence {score:?}"))?;

    let weighted = score_heads(&corpus, &tensors, &source, &high.clone().with_metric(Metric::Weighted))
        .unwrap()
        .score(0, 0)
        .unwrap();
    let total = weights.iter().fold(Ratio::from_integer(0), |acc, &w| acc + exact(w));
    let rational = (exact(0.7) + exact(0.5)) / total;
    let oracle = *rational.numer() as f64 / *rational.denom() as f64;
    check(weighted == oracle || (weighted - oracle).abs() <= f64::EPSILON, format!("weighted {weighted} vs exact {oracle}"))?;
    check((weighted - 0.4).abs() < C2_F32_STORAGE_TOL, format!("weighted {weighted} not 0.4"))?;
    Ok(format!("high = 0.5, weighted = {weighted} (exact rational of the stored f32 weights)"))
}

fn criterion_3() -> Outcome {
    let params = ContactParams::default();
    let line = collinear_record(10);
    let map = derive_contacts(&line, params).unwrap();
    check(map.contact(0, 6) && !map.contact(0, 7) && !map.contact(1, 6), "collinear fixture")?;
    check(map.pairs() == brute_force_contacts(line.coords.as_ref().unwrap(), 8.0, 6), "collinear vs oracle")?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut total = 0;
    for case in 0..C3_CASES {
        let len = rng.gen_range(1..=64);
        let mut r = ProteinRecord::from_sequence(format!("c{case}"), &"G".repeat(len));
        let box_size = rng.gen_range(5.0..25.0);
        let coords = random_coords(&mut rng, len, box_size, 0.1);
        r.coords = Some(coords.clone());
        let got = derive_contacts(&r, params).unwrap();
        let want = brute_force_contacts(&coords, 8.0, 6);
        total += want.len();
        check(got.pairs() == want, format!("case {case}: {} vs {} contacts", got.pairs().len(), want.len()))?;
        for i in 0..len {
            for j in 0..len {
                check(got.contact(i, j) == got.contact(j, i), "asymmetric map")?;
            }
        }
    }
    Ok(format!("collinear fixture + {C3_CASES} random sets ({total} contacts)"))
}

fn sorted_bits(row: &[f32]) -> Vec<u32> {
    let mut v: Vec<u32> = row.iter().map(|w| w.to_bits()).collect();
    v.sort_unstable();
    v
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..C4_TENSORS {
        let flags = common::random_flags(&mut rng, 24);
        let t = random_stochastic_attention(&format!("s{case}"), flags, 2, 3, &mut rng);
        let seed = rng.gen();
        let s = shuffle_null(&t, seed);
        check(s == shuffle_null(&t, seed), "not deterministic")?;
        check(s.flags() == t.flags() && s.n_layers() == t.n_layers() && s.n_heads() == t.n_heads(), "shape changed")?;
        for l in 0..2 {
            for h in 0..3 {
                for row in 0..t.n_tokens() {
                    let (a, b) = (t.row(l, h, row), s.row(l, h, row));
                    check(sorted_bits(a) == sorted_bits(b), "multiset changed")?;
                    let fold = |r: &[f32]| {
                        let mut v = r.to_vec();
                        v.sort_by(f32::total_cmp);
                        (v.iter().map(|&x| x as f64).sum::<f64>(), v[0], v[v.len() - 1])
                    };
                    check(fold(a) == fold(b), "sum/min/max changed")?;
                }
            }
        }
    }

    let corpus = random_corpus(&CorpusSpec {
        n_proteins: C4_NULL_PROTEINS,
        min_len: 24,
        max_len: 24,
        seed: 44,
        ..Default::default()
    });
    let tensors = synth_attention_set(&corpus, &AttentionSpec { seed: 45, ..Default::default() });
    let shuffled: AttentionSet = tensors.iter().map(|(id, t)| (id.clone(), shuffle_null(t, 7))).collect();
    let mut worst: f64 = 0.0;
    for property in [Property::Contact, Property::BindingSite] {
        let table = score_heads(&corpus, &shuffled, &property, &AnalysisConfig::default()).unwrap();
        let b = table.background.frequency().unwrap();
        for h in &table.heads {
            let score = h.score.ok_or("absent head on null corpus")?;
            let se = (b * (1.0 - b) / h.arc_count as f64).sqrt();
            let dev = (score - b).abs() / se;
            worst = worst.max(dev);
            check(dev <= C4_SE_BAND, format!("{property} head {}-{}: {dev:.2} SE from background", h.layer + 1, h.head + 1))?;
        }
    }
    Ok(format!("{C4_TENSORS} tensors; null scores within {worst:.2} SE of background"))
}

fn criterion_5() -> Outcome {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let oracle = |k1: u64, n1: u64, k2: u64, n2: u64| -> Option<(f64, f64)> {
        let (k, n) = ((k1 + k2) as i128, (n1 + n2) as i128);
        if k == 0 || k == n {
            return None;
        }
        let num = (k1 as i128 * n2 as i128 - k2 as i128 * n1 as i128) as f64;
        let var = (k * (n - k)) as f64 * n1 as f64 * n2 as f64 / n as f64;
        let z = num / var.sqrt();
        Some((z, 2.0 * normal.sf(z.abs())))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut tuples = vec![(40, 100, 100, 1000)];
    while tuples.len() < C5_TUPLES {
        let n1 = rng.gen_range(1..=5000);
        let n2 = rng.gen_range(1..=5000);
        tuples.push((rng.gen_range(0..=n1), n1, rng.gen_range(0..=n2), n2));
    }
    let mut max_dz: f64 = 0.0;
    for &(k1, n1, k2, n2) in &tuples {
        let got = two_proportion_ztest(k1, n1, k2, n2).map_err(|e| e.to_string())?;
        match (got, oracle(k1, n1, k2, n2)) {
            (ZTest::Defined { z, p }, Some((oz, op))) => {
                max_dz = max_dz.max((z - oz).abs());
                check((z - oz).abs() <= C5_TOL, format!("z {z} vs {oz} for {:?}", (k1, n1, k2, n2)))?;
                let op = if op < protattn_core::stats::P_VALUE_FLOOR { 0.0 } else { op };
                check((p - op).abs() <= C5_TOL, format!("p {p} vs {op} for {:?}", (k1, n1, k2, n2)))?;
            }
            (ZTest::DegeneratePooled, None) => {}
            (a, b) => return Err(format!("degeneracy differs: {a:?} vs {b:?}")),
        }
    }
    let z_ref = two_proportion_ztest(40, 100, 100, 1000).unwrap().z().unwrap();
    check((z_ref - 8.58).abs() < 0.005, format!("reference z {z_ref}"))?;

    for m in [1usize, 7, 144, 1000] {
        let threshold = 0.05 / m as f64;
        let below = f64::from_bits(threshold.to_bits() - 1);
        check(!bonferroni_adjust(threshold, m).unwrap(), format!("m={m}: p = 0.05/m flagged"))?;
        check(bonferroni_adjust(below, m).unwrap(), format!("m={m}: p just below 0.05/m not flagged"))?;
    }
    Ok(format!("{C5_TUPLES} tuples, max |dz| = {max_dz:.1e}, reference z = {z_ref:.4}; Bonferroni flips at 0.05/m"))
}

fn gradient_check(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let n_features = rng.gen_range(1..=6);
    let n_classes = [2, 3, 4, 5][rng.gen_range(0..4)];
    let mut model = LinearModel::<f64>::zeros(n_features, n_classes);
    model.weights.iter_mut().for_each(|w| *w = rng.gen_range(-1.0..1.0));
    model.bias.iter_mut().for_each(|b| *b = rng.gen_range(-1.0..1.0));
    let batch = rng.gen_range(1..=8);
    let xs: Vec<Vec<f64>> = (0..batch).map(|_| (0..n_features).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    let ys: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..n_classes)).collect();
    let l2 = rng.gen_range(0.0..0.1);
    let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let (_, grad) = model.loss_and_grad(&refs, &ys, l2);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let n_w = model.weights.len();
    for k in 0..n_w + model.bias.len() {
        let bump = |delta: f64| {
            let mut m = model.clone();
            if k < n_w {
                m.weights[k] += delta;
            } else {
                m.bias[k - n_w] += delta;
            }
            m.loss_and_grad(&refs, &ys, l2).0
        };
        let numeric = (bump(h) - bump(-h)) / (2.0 * h);
        let analytic = if k < n_w { grad.weights[k] } else { grad.bias[k - n_w] };
        let scale = analytic.abs().max(numeric.abs());
        let rel = if scale < 1e-7 { (analytic - numeric).abs() } else { (analytic - numeric).abs() / scale };
        worst = worst.max(rel);
    }
    Ok(worst)
}

fn planted_sweep(task: ProbeTask, signal_layer: usize, n_layers: usize) -> Result<Vec<ProbeResult>, String> {
    let corpus = random_corpus(&CorpusSpec {
        n_proteins: 40,
        min_len: 40,
        max_len: 60,
        binding_rate: 0.08,
        min_binding_sites: 3,
        seed: 66,
        ..Default::default()
    });
    let embeddings: EmbeddingSet = corpus
        .iter()
        .map(|r| {
            let labels: Vec<usize> = match task {
                ProbeTask::BindingSite => (0..r.len()).map(|i| r.binding_sites.contains(&i) as usize).collect(),
                _ => r.ss_labels.as_ref().unwrap().iter().map(|s| s.class_index()).collect(),
            };
            (r.id.clone(), planted_embeddings(r, n_layers, 8, signal_layer, &labels, 4.0, 67))
        })
        .collect();
    let config = SweepConfig::new(task, Representation::Embedding);
    layer_sweep(&config, &corpus, ProbeInputs::Embeddings(&embeddings)).map_err(|e| e.to_string())
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..C6_GRAD_CASES {
        worst = worst.max(gradient_check(&mut rng)?);
    }
    check(worst < C6_GRAD_REL_TOL, format!("gradient relative error {worst:e}"))?;

    let mut curves = Vec::new();
    for task in [ProbeTask::BindingSite, ProbeTask::SecondaryStructure] {
        let signal = 2;
        let results = planted_sweep(task, signal, 5)?;
        for r in &results {
            if r.layer == signal + 1 {
                check(r.metric >= C6_PEAK_MIN, format!("{}: planted layer metric {}", task.as_str(), r.metric))?;
            } else {
                check(r.metric <= C6_OFF_PEAK_MAX, format!("{}: layer {} metric {}", task.as_str(), r.layer, r.metric))?;
            }
        }
        let curve: Vec<String> = results.iter().map(|r| format!("{:.2}", r.metric)).collect();
        curves.push(format!("{} [{}]", task.as_str(), curve.join(" ")));
    }

    // L = 10 contact fixture: k = 2, top two pairs hold one contact.
    let p10 = precision_at_k(&[0.9, 0.1, 0.8, 0.3, 0.2], &[false, true, true, false, false], top_k_for_length(10, 5));
    check(p10 == Some(0.5), format!("L=10 precision {p10:?}"))?;
    // L = 15 binding fixture: k floors to 1.
    check(top_k_for_length(15, 20) == 1, "L=15 k")?;
    let p15 = precision_at_k(&[0.2, 0.7, 0.4], &[false, true, false], top_k_for_length(15, 20));
    check(p15 == Some(1.0), format!("L=15 precision {p15:?}"))?;
    let f1 = macro_f1(&[0, 1, 1, 1, 2, 2], &[0, 0, 1, 1, 2, 3], 4).unwrap();
    let hand = (2.0 / 3.0 + 0.8 + 2.0 / 3.0 + 0.0) / 4.0;
    check((f1 - hand).abs() < 1e-15, format!("macro F1 {f1} vs {hand}"))?;

    // A perfect scorer through the evaluate path.
    let probe = LinearProbe {
        model: LinearModel { n_features: 1, n_outputs: 1, weights: vec![1.0], bias: vec![0.0] },
        feature_mean: vec![0.0],
        feature_scale: vec![1.0],
        converged: true,
        final_loss: 0.0,
    };
    let eval = vec![ProteinExamples {
        protein_id: "x".into(),
        len: 10,
        features: vec![vec![1.0], vec![-1.0], vec![2.0], vec![-3.0]],
        labels: vec![1, 0, 1, 0],
    }];
    check(evaluate_probe(&probe, &eval, ProbeTask::Contact).unwrap() == 1.0, "perfect scorer")?;
    Ok(format!("max grad rel err {worst:.1e}; {}; hand fixtures match", curves.join("; ")))
}

fn criterion_7() -> Outcome {
    let records: Vec<ProteinRecord> = (0..6).map(|i| ProteinRecord::from_sequence(format!("polyA{i}"), &"A".repeat(20))).collect();
    let corpus = Corpus::from_records(records).unwrap();
    let tensors = synth_attention_set(&corpus, &AttentionSpec { seed: 77, ..Default::default() });
    let config = AnalysisConfig { min_arcs: 10, ..Default::default() };
    let profiles = aa_profiles(&corpus, &tensors, &config).map_err(|e| e.to_string())?;
    check(!profiles.retained.is_empty(), "no heads retained")?;
    for (l, h) in &profiles.retained {
        check(profiles.table(AminoAcid::Ala).unwrap().score(*l, *h) == Some(1.0), "profile(A) != 1")?;
        for aa in AminoAcid::STANDARD.iter().filter(|a| **a != AminoAcid::Ala) {
            check(profiles.table(*aa).unwrap().score(*l, *h) == Some(0.0), format!("profile({}) != 0", aa.code()))?;
        }
    }

    let blosum = load_blosum62();
    let affine = |scale: f64, shift: f64| AaCorrelation {
        values: AminoAcid::STANDARD
            .iter()
            .map(|a| AminoAcid::STANDARD.iter().map(|b| Some(scale * blosum.score(*a, *b).unwrap() as f64 + shift)).collect())
            .collect(),
    };
    let pos = blosum_agreement(&affine(0.37, -2.5), &blosum).map_err(|e| e.to_string())?;
    let neg = blosum_agreement(&affine(-1.3, 0.2), &blosum).map_err(|e| e.to_string())?;
    check((pos - 1.0).abs() < C7_TOL, format!("affine agreement {pos}"))?;
    check((neg + 1.0).abs() < C7_TOL, format!("negated agreement {neg}"))?;

    for a in AminoAcid::STANDARD {
        for b in AminoAcid::STANDARD {
            check(blosum.score(a, b) == blosum.score(b, a), "BLOSUM62 asymmetric")?;
        }
    }
    let spot = [
        (AminoAcid::Ala, AminoAcid::Ala, 4),
        (AminoAcid::Trp, AminoAcid::Trp, 11),
        (AminoAcid::Pro, AminoAcid::Phe, -4),
    ];
    for (a, b, v) in spot {
        check(blosum.score(a, b) == Some(v), format!("score({},{})", a.code(), b.code()))?;
    }
    let corr = aa_attention_correlation(&profiles);
    check(corr.get(AminoAcid::Ala, AminoAcid::Ala).is_none(), "poly-A profile has zero variance across heads")?;
    Ok(format!("{} heads retained on poly-A; affine agreement 1 - {:.1e}", profiles.retained.len(), 1.0 - pos))
}

fn all_tables(corpus: &Corpus, tensors: &AttentionSet, sharded: bool) -> Result<Vec<HeadScoreTable>, String> {
    let config = AnalysisConfig::default();
    let properties = [
        Property::Contact,
        Property::BindingSite,
        Property::Ptm,
        "ss_helix".parse().unwrap(),
        "ss_strand".parse().unwrap(),
        "ss_turnbend".parse().unwrap(),
    ];
    properties
        .iter()
        .map(|p| {
            if !sharded {
                return score_heads_sequential(corpus, tensors, p, &config).map_err(|e| e.to_string());
            }
            let records: Vec<&ProteinRecord> = corpus.iter().collect();
            let shards: Vec<ScoreAccumulator> = records
                .chunks(37)
                .map(|chunk| accumulate_parallel(chunk, tensors, p, &config))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            let mut merged = ScoreAccumulator::new();
            for shard in shards.into_iter().rev() {
                merged.merge(shard).map_err(|e| e.to_string())?;
            }
            Ok(merged.finish(&p.name(), p.kind(), &config))
        })
        .collect()
}

fn write_report(dir: &Path, corpus: &Corpus, tensors: &AttentionSet, sharded: bool, probes: &[ProbeResult]) -> Result<(), String> {
    let tables = all_tables(corpus, tensors, sharded)?;
    let config = AnalysisConfig::default();
    let profiles = aa_profiles(corpus, tensors, &config).map_err(|e| e.to_string())?;
    let corr = aa_attention_correlation(&profiles);
    let rc = ReportConfig { analysis: config, null_seed: None, top_n: DEFAULT_TOP_N };
    let mut report = Report::build(rc, &tables, probes, Some(&corr));
    report.blosum_agreement = blosum_agreement(&corr, &load_blosum62()).ok();
    emit_report(dir, &report, &tables).map_err(|e| e.to_string())?;
    Ok(())
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let corpus = random_corpus(&CorpusSpec {
        n_proteins: C8_PROTEINS,
        min_len: 30,
        max_len: 80,
        missing_coord_rate: 0.02,
        seed: 88,
        ..Default::default()
    });
    let spec = AttentionSpec {
        n_layers: 4,
        n_heads: 4,
        pad_tokens: 2,
        planted: vec![(3, 1, protattn_core::synth::PlantTarget::Contact)],
        seed: 89,
        ..Default::default()
    };
    let tensors = synth_attention_set(&corpus, &spec);
    let embeddings: EmbeddingSet = corpus
        .iter()
        .map(|r| {
            let labels: Vec<usize> = (0..r.len()).map(|i| r.binding_sites.contains(&i) as usize).collect();
            (r.id.clone(), planted_embeddings(r, 4, 16, 1, &labels, 3.0, 90))
        })
        .collect();
    let probes = layer_sweep(
        &SweepConfig::new(ProbeTask::BindingSite, Representation::Embedding),
        &corpus,
        ProbeInputs::Embeddings(&embeddings),
    )
    .map_err(|e| e.to_string())?;

    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_report(a.path(), &corpus, &tensors, true, &probes)?;
    let elapsed = start.elapsed();
    write_report(b.path(), &corpus, &tensors, false, &probes)?;
    let (fa, fb) = (dir_bytes(a.path()), dir_bytes(b.path()));
    check(fa.len() == fb.len() && fa.len() > 1, "file sets differ")?;
    for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
        check(na == nb && ba == bb, format!("{na} differs between sharded and single-threaded runs"))?;
    }
    check(elapsed < C8_TIME_LIMIT, format!("pipeline took {elapsed:?}"))?;
    Ok(format!("{} files byte-identical; analyze + probe + report in {elapsed:.1?}", fa.len()))
}

fn criterion_9() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden");
    let corpus = load_corpus(dir.join("corpus.jsonl"), 512).map_err(|e| e.to_string())?.corpus;
    let tensors = load_attention_dir(dir.join("attn")).map_err(|e| e.to_string())?;
    check(corpus.len() == 20, "fixture should hold 20 proteins")?;
    let (gen_corpus, gen_tensors) = golden_fixture();
    check(gen_corpus.records() == corpus.records() && gen_tensors == tensors, "committed fixture differs from generator")?;

    let mut lines = Vec::new();
    for (property, planted) in [(Property::Contact, GOLDEN_CONTACT_HEAD), (Property::BindingSite, GOLDEN_BINDING_HEAD)] {
        let table = score_heads(&corpus, &tensors, &property, &AnalysisConfig::default()).map_err(|e| e.to_string())?;
        let top = top_heads(&table, DEFAULT_TOP_N).map_err(|e| e.to_string())?;
        let first = &top[0];
        check((first.layer, first.head) == (planted.0 + 1, planted.1 + 1), format!("{property}: top head {}", first.label()))?;
        let sig = first.significance.ok_or("no significance")?;
        check(sig.significant_bonferroni, format!("{property}: planted head not significant"))?;
        lines.push(format!("{property} -> {} (z = {:.1})", first.label(), sig.z.unwrap()));
    }
    Ok(lines.join(", "))
}

fn main() {
    // Keep the fixture generator's token layout in sync with what the
    // service and viewer expect.
    assert_eq!(token_flags(2, true, 1), vec![TokenFlag::Cls, TokenFlag::Residue, TokenFlag::Residue, TokenFlag::Sep, TokenFlag::Pad]);

    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("metric oracle equivalence", criterion_1),
        ("worked examples", criterion_2),
        ("contact-map oracle", criterion_3),
        ("null-model invariants", criterion_4),
        ("statistics", criterion_5),
        ("probe correctness", criterion_6),
        ("amino-acid pipeline", criterion_7),
        ("determinism and merge", criterion_8),
        ("end-to-end golden run", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail} [{:.1?}]", i + 1, started.elapsed()),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
