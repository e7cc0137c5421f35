//! Acceptance checks, one PASS/FAIL line each.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use readcheck::alignment::tables::{ACCURACY_COLUMNS, ALIGNMENT_COLUMNS};
use readcheck::alignment::{alignment_record, alignment_score, calibration_rate, explanation_alignment, t_test_one_tailed};
use readcheck::corpus::unified::UnifiedRecord;
use readcheck::counterfactual::{perturb_comparison, validate_cf, AntonymTable, CFPair};
use readcheck::fixtures;
use readcheck::gateway::{mask_all, mask_words, ModelGateway, MostFrequentEntityModel, OracleModel, ToyModel};
use readcheck::heuristic::{heuristic_answer, select_sentence, HeuristicConfig, HeuristicPlugins, SelectionStrategy};
use readcheck::metrics::{exact_match, token_f1};
use readcheck::partition::{build_comparison_partition, build_coref_partition, SkillStep, TokenPartition};
use readcheck::saliency::{ig_saliency, integrated_gradients, occlusion_saliency, summarize, Method, SaliencyConfig, SaliencyMap, Summarizer};
use readcheck::{RCInstance, Scope, Skill};

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn occlusion_oracle() -> Check {
    let start = Instant::now();
    let instances = fixtures::synthetic_corpus(100, 11).map_err(e2s)?;
    let mut checked = 0;
    for (k, inst) in instances.iter().enumerate() {
        let model = ToyModel::new(k as u64);
        let map = occlusion_saliency(&model, inst).map_err(e2s)?;
        let original = model.scores(inst).map_err(e2s)?;
        let p0 = original.start_scores;
        let anchor = (0..p0.len()).fold(0, |best, i| if p0[i] > p0[best] { i } else { best });
        ensure(map.anchor_position == anchor, || format!("{}: anchor differs", inst.id))?;
        let n = inst.question.len() + inst.context_len();
        ensure(map.scores.len() == n, || format!("{}: {} scores for {n} words", inst.id, map.scores.len()))?;
        for w in 0..n {
            let masked = mask_words(inst, &BTreeSet::from([w]), "[MASK]");
            let direct = p0[anchor] - model.scores(&masked).map_err(e2s)?.start_scores[anchor];
            ensure(direct.to_bits() == map.scores[w].to_bits(), || {
                format!("{} word {w}: {} vs {direct}", inst.id, map.scores[w])
            })?;
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("100 instances, {checked} scores bit-identical, {elapsed:.2?}"))
}

fn ig_linear() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (rows, dim) = (7, 5);
    let rand_mat = |rng: &mut ChaCha8Rng| Array2::from_shape_fn((rows, dim), |_| rng.random_range(-2.0..2.0));
    let w = rand_mat(&mut rng);
    let input = rand_mat(&mut rng);
    let baseline = rand_mat(&mut rng);
    let mut worst: f64 = 0.0;
    for m in [1, 5, 50] {
        let attr = integrated_gradients(&input, &baseline, m, false, |_| Ok(w.clone())).map_err(e2s)?;
        for k in 0..rows {
            let got = summarize(attr.row(k), Summarizer::Dot).map_err(e2s)?;
            let expected: f64 = (0..dim).map(|d| w[[k, d]] * (input[[k, d]] - baseline[[k, d]])).sum();
            worst = worst.max((got - expected).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("max deviation {worst:e}"))?;
    Ok(format!("m in {{1, 5, 50}}, max deviation {worst:.1e}"))
}

fn completeness_gap(model: &ToyModel, inst: &RCInstance, steps: usize) -> std::result::Result<f64, String> {
    let cfg = SaliencyConfig::integrated_gradients(steps, Summarizer::Dot);
    let map = ig_saliency(model, inst, &cfg).map_err(e2s)?;
    let a = map.anchor_position;
    let f_in = model.scores(inst).map_err(e2s)?.start_scores[a];
    let f_base = model.scores(&mask_all(inst, "[MASK]")).map_err(e2s)?.start_scores[a];
    Ok((map.scores.iter().sum::<f64>() - (f_in - f_base)).abs())
}

fn ig_completeness() -> Check {
    let instances = fixtures::corpus().map_err(e2s)?;
    let model = ToyModel::new(2024);
    let mut worst: f64 = 0.0;
    let mut improved = 0;
    for inst in &instances {
        let fine = completeness_gap(&model, inst, 2048)?;
        let coarse = completeness_gap(&model, inst, 64)?;
        worst = worst.max(fine);
        if coarse > fine {
            improved += 1;
        }
    }
    ensure(worst <= 1e-3, || format!("max gap {worst:e} at m=2048"))?;
    ensure(improved >= 18, || format!("m=64 worse on only {improved}/20"))?;
    Ok(format!("max gap {worst:.2e} at m=2048; m=64 worse on {improved}/20"))
}

fn gradient_check() -> Check {
    let instances = fixtures::synthetic_corpus(100, 29).map_err(e2s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (k, inst) in instances.iter().enumerate() {
        let model = ToyModel::new(1000 + k as u64);
        let emb = model.embed(inst).map_err(e2s)?;
        let target = rng.random_range(0..inst.context_len());
        let grad = model.grad_start(inst, &emb, target).map_err(e2s)?;
        for ((i, j), g) in grad.indexed_iter() {
            let mut plus = emb.clone();
            plus[[i, j]] += h;
            let mut minus = emb.clone();
            minus[[i, j]] -= h;
            let fp = model.start_probs_at(inst, &plus).map_err(e2s)?[target];
            let fm = model.start_probs_at(inst, &minus).map_err(e2s)?[target];
            worst = worst.max(((fp - fm) / (2.0 * h) - g).abs());
        }
    }
    ensure(worst <= 1e-4, || format!("max deviation {worst:e}"))?;
    Ok(format!("100 instances, max deviation {worst:.1e}"))
}

/// Tanh-sinh rule for the integral of `f(delta)` over `delta` in `[0, width]`,
/// where `delta` is the distance from the upper end.
fn tanh_sinh(width: f64, f: impl Fn(f64) -> f64) -> f64 {
    let h = 1.0 / 128.0;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut sum = 0.0;
    for k in -600i32..=600 {
        let u = k as f64 * h;
        let s = half_pi * u.sinh();
        let delta = width / (1.0 + (2.0 * s).exp());
        let weight = width / 2.0 * half_pi * u.cosh() / s.cosh().powi(2);
        if delta > 0.0 && delta < width && weight > 0.0 {
            sum += weight * f(delta);
        }
    }
    sum * h
}

/// Upper tail of Student's t by quadrature of `cos^(df-1)` after the
/// substitution `x = sqrt(df) tan(theta)`.
fn t_upper_tail(t: f64, df: f64) -> f64 {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let g = |delta: f64| delta.sin().powf(df - 1.0);
    let theta = (t / df.sqrt()).atan();
    let tail = tanh_sinh(half_pi - theta, g);
    let half = tanh_sinh(half_pi, g);
    tail / (2.0 * half)
}

fn welch_oracle(a: &[f64], b: &[f64]) -> (f64, f64) {
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        (n, m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
    };
    let (n1, m1, v1) = stats(a);
    let (n2, m2, v2) = stats(b);
    let se2 = v1 / n1 + v2 / n2;
    let df = se2.powi(2) / ((v1 / n1).powi(2) / (n1 - 1.0) + (v2 / n2).powi(2) / (n2 - 1.0));
    ((m1 - m2) / se2.sqrt(), df)
}

fn t_test_oracle() -> Check {
    let r = t_test_one_tailed(&[5.0, 6.0, 7.0], &[1.0, 2.0, 3.0], 0.05).map_err(e2s)?;
    ensure((r.t_statistic - 4.899).abs() < 5e-4, || format!("worked t {}", r.t_statistic))?;
    ensure((r.degrees_of_freedom - 4.0).abs() < 1e-9, || format!("worked df {}", r.degrees_of_freedom))?;
    ensure((r.p_value - 0.0040).abs() < 5e-5, || format!("worked p {}", r.p_value))?;
    let worked_p = r.p_value;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n1 = rng.random_range(2..=30);
        let n2 = rng.random_range(2..=30);
        let shift = rng.random_range(-1.0..1.5);
        let spread = rng.random_range(0.2..3.0);
        let a: Vec<f64> = (0..n1).map(|_| shift + rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n2).map(|_| spread * rng.random_range(-1.0..1.0)).collect();
        let got = t_test_one_tailed(&a, &b, 0.05).map_err(e2s)?;
        let (t, df) = welch_oracle(&a, &b);
        let p = t_upper_tail(t, df);
        let dev = [
            (got.t_statistic - t).abs() / t.abs().max(1.0),
            (got.degrees_of_freedom - df).abs() / df.max(1.0),
            (got.p_value - p).abs(),
        ];
        worst = dev.into_iter().fold(worst, f64::max);
    }
    ensure(worst <= 1e-6, || format!("max deviation {worst:e}"))?;
    Ok(format!("worked example p={worked_p:.5}; 100 random pairs, max deviation {worst:.1e}"))
}

fn calibration() -> Check {
    let start = Instant::now();
    let instances = fixtures::synthetic_corpus(200, 0).map_err(e2s)?;
    let model = ToyModel::new(1);
    let report = calibration_rate(&instances, &model, &SaliencyConfig::occlusion(), 5, 7, 0.05).map_err(e2s)?;
    let elapsed = start.elapsed();
    ensure(report.rate <= 0.10, || format!("rate {}", report.rate))?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "rate {:.3} ({}/{} draws, 95% CI {:.3}-{:.3}), {elapsed:.2?}",
        report.rate, report.n_significant, report.n_draws, report.ci_low, report.ci_high
    ))
}

fn record_json(inst: &RCInstance) -> String {
    serde_json::to_string(&UnifiedRecord::from_instance(inst)).unwrap()
}

fn cf_round_trip() -> Check {
    let mut comparisons = fixtures::comparison_instances().map_err(e2s)?;
    comparisons.extend(
        fixtures::synthetic_corpus(200, 5)
            .map_err(e2s)?
            .into_iter()
            .filter(|i| i.skill == Skill::Comparison),
    );
    let mut generated = 0;
    let mut restored = 0;
    for table in [AntonymTable::in_distribution(), AntonymTable::out_of_distribution()] {
        for inst in &comparisons {
            let pair = perturb_comparison(inst, &table).map_err(e2s)?;
            let v = validate_cf(&pair);
            ensure(v.is_empty(), || format!("{}: {v:?}", inst.id))?;
            generated += 1;
            let (old, new) = pair.replaced_operator.clone().unwrap();
            let symmetric = table.entries.get(&new.to_lowercase()).is_some_and(|back| back[0] == old.to_lowercase())
                && table.entries[&old.to_lowercase()].len() == 1;
            if symmetric {
                let back = perturb_comparison(&pair.perturbed, &table).map_err(e2s)?;
                ensure(record_json(&back.perturbed) == record_json(inst), || format!("{}: double swap differs", inst.id))?;
                restored += 1;
            }
        }
    }
    let pairs: Vec<CFPair> = fixtures::coref_cf_pairs().map_err(e2s)?;
    let mut both = 0;
    for p in &pairs {
        ensure(validate_cf(p).is_empty(), || format!("{}: invalid bundled pair", p.id()))?;
        if readcheck::alignment::both_correct(&MostFrequentEntityModel, p).map_err(e2s)? {
            both += 1;
        }
    }
    ensure(restored > 0, || "no symmetric swap exercised".into())?;
    ensure(both == 0, || format!("frequency model both-correct on {both}/{}", pairs.len()))?;
    Ok(format!(
        "{generated} pairs valid, {restored} double swaps byte-identical, frequency model both-correct 0/{}",
        pairs.len()
    ))
}

fn engineered_map(inst: &RCInstance, question_scores: &[f64]) -> SaliencyMap {
    let mut scores = question_scores.to_vec();
    scores.extend(std::iter::repeat_n(0.0, inst.context_len()));
    SaliencyMap {
        instance_id: inst.id.clone(),
        scope: Scope::All,
        scores,
        question_len: inst.question.len(),
        method: Method::Occlusion,
        config: SaliencyConfig::occlusion(),
        model_id: "oracle".into(),
        anchor_position: 0,
    }
}

/// Question-token scores that put `high` on the operator and `low` plus a
/// small ramp on the rest.
fn operator_scores(p: &TokenPartition, len: usize, high: f64, low: f64) -> Vec<f64> {
    (0..len)
        .map(|i| if p.positive.contains(&i) { high } else { low + 0.01 * i as f64 })
        .collect()
}

fn def_arithmetic() -> Check {
    let originals: Vec<RCInstance> = fixtures::comparison_instances().map_err(e2s)?.into_iter().take(3).collect();
    let table = AntonymTable::in_distribution();
    let mut records = Vec::new();
    let levels = [(0.9, 0.05), (1.0, 0.1), (0.1, 0.1)];
    for (inst, (high, low)) in originals.iter().zip(levels) {
        let pair = perturb_comparison(inst, &table).map_err(e2s)?;
        let part = build_comparison_partition(inst).map_err(e2s)?;
        let map = engineered_map(inst, &operator_scores(&part, inst.question.len(), high, low));
        records.push(explanation_alignment(&pair, &map, &part, &OracleModel, 0.05).map_err(e2s)?);
    }
    let verdicts: Vec<bool> = records.iter().map(|r| r.aligned).collect();
    ensure(verdicts == [true, true, false], || format!("verdicts {verdicts:?}"))?;
    let score = alignment_score(&records).map_err(e2s)?;
    ensure(score == 2.0 / 3.0, || format!("score {score}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let partition = TokenPartition {
        instance_id: "r".into(),
        scope: Scope::Context,
        positive: (0..4).collect(),
        negative: (4..12).collect(),
        skill_step: SkillStep::Random,
    };
    for _ in 0..1000 {
        let correct = rng.random_bool(0.5);
        let lift = rng.random_range(-1.0..2.0);
        let scores: Vec<f64> = (0..12).map(|i| rng.random_range(0.0..1.0) + if i < 4 { lift } else { 0.0 }).collect();
        let r = alignment_record("r", correct, &scores, &partition, 0.05).map_err(e2s)?;
        ensure(!r.aligned || r.cf_both_correct, || "aligned without both-correct".into())?;
        ensure(r.aligned == (correct && r.significance.significant), || "verdict mismatch".into())?;
    }
    Ok(format!("engineered pairs align {verdicts:?}, score {score}; 1000 random records consistent"))
}

fn metrics() -> Check {
    let f1 = token_f1("in Germany", &["Germany"]).map_err(e2s)?;
    ensure(f1 == 2.0 / 3.0, || format!("f1 {f1}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let vocab = ["the", "a", "Germany", "germany", "in", "Berlin", "of", "Obama", ",", "."];
    let mut em_count = 0;
    for _ in 0..1000 {
        let phrase = |rng: &mut ChaCha8Rng| {
            let n = rng.random_range(1..4);
            (0..n).map(|_| vocab[rng.random_range(0..vocab.len())]).collect::<Vec<_>>().join(" ")
        };
        let p = phrase(&mut rng);
        let g = if rng.random_bool(0.5) { p.to_uppercase() } else { phrase(&mut rng) };
        if exact_match(&p, &[g.as_str()]).map_err(e2s)? {
            em_count += 1;
            let f = token_f1(&p, &[g.as_str()]).map_err(e2s)?;
            ensure(f == 1.0, || format!("EM but F1 {f} for {p:?} / {g:?}"))?;
        }
    }
    Ok(format!("token_f1 = 2/3 exactly; EM implies F1=1 on {em_count} matching pairs of 1000"))
}

fn heuristic_determinism() -> Check {
    let corpus = fixtures::corpus().map_err(e2s)?;
    let frozen: serde_json::Value = serde_json::from_str(fixtures::HEURISTIC_EXPECTED_JSON).map_err(e2s)?;
    let plugins = HeuristicPlugins::default();
    for strategy in SelectionStrategy::ALL {
        let cfg = HeuristicConfig::with_strategy(strategy);
        for inst in &corpus {
            let a = heuristic_answer(inst, &cfg, &plugins).map_err(e2s)?;
            let b = heuristic_answer(inst, &cfg, &plugins).map_err(e2s)?;
            let want = frozen[strategy.name()][&inst.id].as_str().unwrap_or("<missing>");
            ensure(a == b && a == want, || format!("{} {}: {a:?} vs frozen {want:?}", strategy.name(), inst.id))?;
        }
    }
    for inst in corpus.iter().chain(&fixtures::synthetic_corpus(50, 1).map_err(e2s)?) {
        let sents: Vec<Vec<&str>> = inst.context.iter().map(|s| s.words()).collect();
        let i = select_sentence(&inst.question_words(), &sents, SelectionStrategy::Position, None).map_err(e2s)?;
        ensure(i == 0, || format!("{}: position picked {i}", inst.id))?;
    }
    Ok("20 fixtures x 4 strategies match frozen answers; position always sentence 0".into())
}

fn words(inst: &RCInstance, scope: Scope, idx: &BTreeSet<usize>) -> Vec<String> {
    let w = if scope == Scope::Question { inst.question_words() } else { inst.context_words() };
    idx.iter().map(|&i| w[i].to_string()).collect()
}

fn partition_fidelity() -> Check {
    let corpus = fixtures::corpus().map_err(e2s)?;
    let find = |id: &str| corpus.iter().find(|i| i.id == id).cloned().ok_or(format!("missing {id}"));
    let cmp = find("cmp-01")?;
    let p = build_comparison_partition(&cmp).map_err(e2s)?;
    let pos = words(&cmp, p.scope, &p.positive);
    let neg = words(&cmp, p.scope, &p.negative);
    ensure(pos == ["more", "recently"], || format!("comparison positive {pos:?}"))?;
    ensure(neg == ["Which", "film", "or", "?"], || format!("comparison negative {neg:?}"))?;
    let cor = find("coref-01")?;
    let p = build_coref_partition(&cor, cor.relevant_cluster.unwrap_or(0)).map_err(e2s)?;
    let pos = words(&cor, p.scope, &p.positive);
    let neg: BTreeSet<String> = words(&cor, p.scope, &p.negative).into_iter().collect();
    ensure(pos == ["Barack", "Obama", "He"], || format!("coreference positive {pos:?}"))?;
    let want: BTreeSet<String> = ["the", "44th", "president", "of", "US", "."].iter().map(|s| s.to_string()).collect();
    ensure(neg == want, || format!("coreference negative {neg:?}"))?;
    Ok("comparison {more, recently} / coreference {Barack, Obama, He} positive".into())
}

fn csv_header(path: &Path) -> std::result::Result<Vec<String>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(text.lines().next().unwrap_or_default().split(',').map(str::to_string).collect())
}

fn full_scale_pathway() -> Check {
    let bin = env!("CARGO_BIN_EXE_readcheck");
    let dir = tempfile::tempdir().map_err(e2s)?;
    let data = dir.path().join("corpus.jsonl");
    std::fs::write(&data, fixtures::CORPUS_JSONL).map_err(e2s)?;
    let cf = dir.path().join("coref_cf.jsonl");
    std::fs::write(&cf, fixtures::COREF_CF_JSONL).map_err(e2s)?;
    let out = dir.path().join("out");
    let model = format!("remote:{bin} serve --model toy:4");
    for (cmd, extra) in [("evaluate", vec![]), ("align", vec!["--method", "ig"]), ("align", vec!["--method", "occlusion"])] {
        let status = Command::new(bin)
            .arg(cmd)
            .args(["--dataset", data.to_str().unwrap(), "--cf", cf.to_str().unwrap(), "--model", &model])
            .args(["--out", out.to_str().unwrap()])
            .args(extra)
            .output()
            .map_err(e2s)?;
        ensure(status.status.success(), || format!("{cmd} failed: {}", String::from_utf8_lossy(&status.stderr)))?;
    }
    let acc = csv_header(&out.join("accuracy.csv"))?;
    let ali = csv_header(&out.join("alignment.csv"))?;
    let want = |cols: &[&str]| std::iter::once("model").chain(cols.iter().copied()).map(str::to_string).collect::<Vec<_>>();
    ensure(acc == want(&ACCURACY_COLUMNS), || format!("accuracy header {acc:?}"))?;
    ensure(ali == want(&ALIGNMENT_COLUMNS), || format!("alignment header {ali:?}"))?;
    let rows = std::fs::read_to_string(out.join("alignment.csv")).map_err(e2s)?;
    ensure(rows.lines().nth(1).is_some_and(|l| l.starts_with("toy:4,") && !l.contains(",,")), || {
        format!("alignment rows {rows:?}")
    })?;
    Ok("subprocess gateway: evaluate/align wrote model-by-skill accuracy and alignment tables".into())
}

fn main() {
    let checks: [(&str, fn() -> Check); 12] = [
        ("occlusion oracle equivalence", occlusion_oracle),
        ("IG linear closed form", ig_linear),
        ("IG completeness", ig_completeness),
        ("gradient check", gradient_check),
        ("t-test oracle", t_test_oracle),
        ("calibration", calibration),
        ("CF round-trip", cf_round_trip),
        ("alignment arithmetic", def_arithmetic),
        ("metrics", metrics),
        ("heuristic determinism", heuristic_determinism),
        ("partition fidelity", partition_fidelity),
        ("full-scale pathway shape", full_scale_pathway),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
