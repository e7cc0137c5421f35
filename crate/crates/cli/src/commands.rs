use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use readcheck::alignment::tables::{upsert_accuracy, upsert_alignment, upsert_cf_accuracy, ModelTable};
use readcheck::alignment::{calibration_report, explanation_alignment, AlignmentReport};
use readcheck::corpus::{load_dataset, ContextMode, DatasetDescriptor, DatasetFormat, LoadReport};
use readcheck::counterfactual::{
    cf_accuracy, load_cf_pairs, perturb_comparison_with, save_cf_pairs, validate_cf, AntonymTable, CFPair,
    DistributionTag, ReplacementChoice,
};
use readcheck::gateway::{open_model, predict, ModelGateway};
use readcheck::heuristic::{
    heuristic_predictions, EntityTypeSource, HeuristicConfig, HeuristicPlugins, PluginRegistry, SelectionStrategy,
};
use readcheck::metrics::{evaluate_dataset, exact_match, token_f1};
use readcheck::partition::{skill_partition, SkillStep};
use readcheck::saliency::{saliency_maps, Method, SaliencyCache, SaliencyConfig, SaliencyMap, Summarizer};
use readcheck::{Error, EvalResult, RCInstance, Result, Skill};

use crate::{DataArgs, RunArgs, SaliencyArgs};

const CACHE_FILE: &str = "saliency_cache.jsonl";

fn invalid(what: &str, value: &str) -> Error {
    Error::InvalidInput(format!("unknown {what} {value:?}"))
}

fn output_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Internal(format!("{}: {e}", path.display()))
}

fn load(data: &DataArgs) -> Result<(Vec<RCInstance>, LoadReport, String)> {
    let format = DatasetFormat::parse(&data.format).ok_or_else(|| invalid("format", &data.format))?;
    let mode = ContextMode::parse(&data.context_mode).ok_or_else(|| invalid("context mode", &data.context_mode))?;
    let desc = DatasetDescriptor::new(&data.dataset, format, mode);
    let (instances, report) = load_dataset(&desc)?;
    if instances.is_empty() {
        return Err(Error::InvalidInput(format!("{}: no usable instances", data.dataset.display())));
    }
    Ok((instances, report, desc.name))
}

fn out_dir(run: &RunArgs) -> Result<&Path> {
    std::fs::create_dir_all(&run.out).map_err(|e| output_error(&run.out, e))?;
    Ok(&run.out)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| output_error(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| output_error(path, e))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| output_error(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in rows {
        serde_json::to_writer(&mut w, r).map_err(|e| output_error(path, e))?;
        w.write_all(b"\n").map_err(|e| output_error(path, e))?;
    }
    w.flush().map_err(|e| output_error(path, e))
}

fn saliency_config(args: &SaliencyArgs) -> Result<SaliencyConfig> {
    let method = Method::parse(&args.method).ok_or_else(|| invalid("method", &args.method))?;
    let summarizer = Summarizer::parse(&args.summarizer).ok_or_else(|| invalid("summarizer", &args.summarizer))?;
    let cfg = match method {
        Method::Occlusion => SaliencyConfig::occlusion(),
        Method::IntegratedGradients => SaliencyConfig::integrated_gradients(args.ig_steps, summarizer),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn cached_maps(
    gateway: &dyn ModelGateway,
    instances: &[RCInstance],
    config: &SaliencyConfig,
    dir: &Path,
) -> Result<Vec<SaliencyMap>> {
    let mut cache = SaliencyCache::open(dir.join(CACHE_FILE))?;
    let maps = saliency_maps(gateway, instances, config, Some(&mut cache))?;
    cache.flush()?;
    Ok(maps)
}

fn predictions(gateway: &dyn ModelGateway, instances: &[RCInstance]) -> Result<Vec<String>> {
    let one = |i: &RCInstance| predict(gateway, i).map(|o| o.predicted_span.text);
    if gateway.concurrent_safe() {
        instances.par_iter().map(one).collect()
    } else {
        instances.iter().map(one).collect()
    }
}

fn step_of(skill: Skill) -> Option<SkillStep> {
    match skill {
        Skill::Comparison => Some(SkillStep::ComparisonOperation),
        Skill::Coreference => Some(SkillStep::CoreferenceResolution),
        Skill::Other => None,
    }
}

fn step_name(step: SkillStep) -> &'static str {
    match step {
        SkillStep::ComparisonOperation => "comparison",
        SkillStep::CoreferenceResolution => "coreference",
        SkillStep::Random => "random",
    }
}

#[derive(Serialize)]
struct Skipped {
    id: String,
    reason: String,
}

/// Counterfactual pairs from `cf_file` plus generated antonym swaps for
/// comparison instances the file does not cover.
fn collect_pairs(
    instances: &[RCInstance],
    cf_file: Option<&Path>,
    antonyms: &str,
    choice: ReplacementChoice,
) -> Result<(Vec<CFPair>, Vec<Skipped>)> {
    let tag = DistributionTag::parse(antonyms).ok_or_else(|| invalid("antonym table", antonyms))?;
    let mut pairs = match cf_file {
        Some(p) => load_cf_pairs(p, instances)?,
        None => Vec::new(),
    };
    let covered: BTreeSet<String> = pairs.iter().map(|p| p.original.id.clone()).collect();
    let table = AntonymTable::for_tag(tag);
    let mut skipped = Vec::new();
    for inst in instances.iter().filter(|i| i.skill == Skill::Comparison && !covered.contains(&i.id)) {
        match perturb_comparison_with(inst, &table, choice) {
            Ok(pair) => {
                let violations = validate_cf(&pair);
                if violations.is_empty() {
                    pairs.push(pair);
                } else {
                    skipped.push(Skipped {
                        id: inst.id.clone(),
                        reason: format!("{violations:?}"),
                    });
                }
            }
            Err(e) => skipped.push(Skipped {
                id: inst.id.clone(),
                reason: e.to_string(),
            }),
        }
    }
    pairs.sort_by(|a, b| a.original.id.cmp(&b.original.id));
    Ok((pairs, skipped))
}

#[derive(Serialize)]
struct PredictionRow<'a> {
    id: &'a str,
    prediction: &'a str,
    f1: f64,
    em: bool,
}

#[derive(Serialize)]
struct Scores {
    f1: f64,
    em: f64,
    n_instances: usize,
}

impl From<EvalResult> for Scores {
    fn from(r: EvalResult) -> Self {
        Self {
            f1: r.f1,
            em: r.exact_match,
            n_instances: r.n_instances,
        }
    }
}

#[derive(Serialize)]
struct CfScores {
    original: Scores,
    counterfactual: Scores,
    both_correct: f64,
    pairs: usize,
}

#[derive(Serialize)]
struct EvalSummary {
    dataset: String,
    model_id: String,
    f1: f64,
    em: f64,
    n_instances: usize,
    skipped_records: usize,
    by_skill: BTreeMap<String, Scores>,
    counterfactual: BTreeMap<String, CfScores>,
}

pub fn evaluate(data: &DataArgs, run: &RunArgs, cf: Option<&Path>, antonyms: &str) -> Result<()> {
    let (instances, report, dataset) = load(data)?;
    let gateway = open_model(&run.model)?;
    let dir = out_dir(run)?;
    let preds = predictions(gateway.as_ref(), &instances)?;
    let by_id: std::collections::HashMap<String, String> =
        instances.iter().zip(&preds).map(|(i, p)| (i.id.clone(), p.clone())).collect();

    let mut rows = Vec::new();
    for (inst, p) in instances.iter().zip(&preds) {
        let golds = inst.gold_texts();
        rows.push(PredictionRow {
            id: &inst.id,
            prediction: p,
            f1: token_f1(p, &golds)?,
            em: exact_match(p, &golds)?,
        });
    }
    write_jsonl(&dir.join("predictions.jsonl"), &rows)?;

    let overall = evaluate_dataset(&by_id, &instances)?;
    let model_id = gateway.model_id().to_string();
    let table = dir.join("accuracy.csv");
    let mut by_skill = BTreeMap::new();
    for step in [SkillStep::ComparisonOperation, SkillStep::CoreferenceResolution] {
        let subset: Vec<RCInstance> = instances.iter().filter(|i| step_of(i.skill) == Some(step)).cloned().collect();
        if subset.is_empty() {
            continue;
        }
        let r = evaluate_dataset(&by_id, &subset)?;
        upsert_accuracy(&table, &model_id, step, r.f1, r.exact_match)?;
        by_skill.insert(step_name(step).to_string(), Scores::from(r));
    }
    if by_skill.is_empty() {
        let mut t = ModelTable::load_or_new(&table, &readcheck::alignment::tables::ACCURACY_COLUMNS)?;
        t.set(&model_id, &format!("{dataset}_f1"), readcheck::alignment::tables::percent(overall.f1, 2));
        t.set(&model_id, &format!("{dataset}_em"), readcheck::alignment::tables::percent(overall.exact_match, 2));
        t.save(&table)?;
    }

    let mut counterfactual = BTreeMap::new();
    let (pairs, _) = collect_pairs(&instances, cf, antonyms, ReplacementChoice::First)?;
    for step in [SkillStep::ComparisonOperation, SkillStep::CoreferenceResolution] {
        let group: Vec<CFPair> = pairs.iter().filter(|p| step_of(p.original.skill) == Some(step)).cloned().collect();
        if group.is_empty() {
            continue;
        }
        let acc = cf_accuracy(gateway.as_ref(), &group)?;
        upsert_cf_accuracy(
            &dir.join("cf_accuracy.csv"),
            &model_id,
            step,
            acc.original.exact_match,
            acc.perturbed.exact_match,
        )?;
        counterfactual.insert(
            step_name(step).to_string(),
            CfScores {
                original: acc.original.into(),
                counterfactual: acc.perturbed.into(),
                both_correct: acc.both_correct,
                pairs: group.len(),
            },
        );
    }

    let summary = EvalSummary {
        dataset,
        model_id,
        f1: overall.f1,
        em: overall.exact_match,
        n_instances: overall.n_instances,
        skipped_records: report.skipped.len(),
        by_skill,
        counterfactual,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    write_json(&dir.join("load_report.json"), &report)?;
    println!("f1 {:.4} em {:.4} over {} instances", summary.f1, summary.em, summary.n_instances);
    Ok(())
}

pub fn saliency(data: &DataArgs, run: &RunArgs, args: &SaliencyArgs) -> Result<()> {
    let (instances, _, _) = load(data)?;
    let config = saliency_config(args)?;
    let gateway = open_model(&run.model)?;
    let dir = out_dir(run)?;
    let maps = cached_maps(gateway.as_ref(), &instances, &config, dir)?;
    let path = dir.join(format!("saliency_{}.jsonl", config.method.short()));
    write_jsonl(&path, &maps)?;
    println!("wrote {} maps to {}", maps.len(), path.display());
    Ok(())
}

#[derive(Serialize)]
struct CfReport {
    dataset: String,
    distribution_tag: DistributionTag,
    generated: usize,
    skipped: Vec<Skipped>,
}

pub fn cf_generate(data: &DataArgs, run: &RunArgs, antonyms: &str, random: bool) -> Result<()> {
    let (instances, _, dataset) = load(data)?;
    let dir = out_dir(run)?;
    let choice = if random {
        ReplacementChoice::Seeded(run.seed)
    } else {
        ReplacementChoice::First
    };
    let (pairs, skipped) = collect_pairs(&instances, None, antonyms, choice)?;
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no comparison instance could be perturbed".into()));
    }
    save_cf_pairs(&dir.join("cf.jsonl"), &pairs)?;
    let report = CfReport {
        dataset,
        distribution_tag: DistributionTag::parse(antonyms).expect("checked"),
        generated: pairs.len(),
        skipped,
    };
    write_json(&dir.join("cf_report.json"), &report)?;
    println!("generated {} counterfactual pairs", report.generated);
    Ok(())
}

pub fn align(
    data: &DataArgs,
    run: &RunArgs,
    args: &SaliencyArgs,
    alpha: f64,
    cf: Option<&Path>,
    antonyms: &str,
) -> Result<()> {
    readcheck::alignment::check_alpha(alpha)?;
    let (instances, _, dataset) = load(data)?;
    let config = saliency_config(args)?;
    let gateway = open_model(&run.model)?;
    let dir = out_dir(run)?;
    let (pairs, _) = collect_pairs(&instances, cf, antonyms, ReplacementChoice::First)?;

    let mut excluded = Vec::new();
    let mut usable = Vec::new();
    for pair in pairs {
        match skill_partition(&pair.original) {
            Ok(partition) => usable.push((pair, partition)),
            Err(e) => excluded.push(Skipped {
                id: pair.original.id.clone(),
                reason: e.to_string(),
            }),
        }
    }
    if usable.is_empty() {
        return Err(Error::InvalidInput("no counterfactual pair has a usable token partition".into()));
    }
    let originals: Vec<RCInstance> = usable.iter().map(|(p, _)| p.original.clone()).collect();
    let maps = cached_maps(gateway.as_ref(), &originals, &config, dir)?;

    let model_id = gateway.model_id().to_string();
    let mut grouped: BTreeMap<&'static str, (SkillStep, Vec<_>)> = BTreeMap::new();
    for ((pair, partition), map) in usable.iter().zip(&maps) {
        let record = explanation_alignment(pair, map, partition, gateway.as_ref(), alpha)?;
        let step = partition.skill_step;
        grouped.entry(step_name(step)).or_insert((step, Vec::new())).1.push(record);
    }
    for (name, (step, records)) in grouped {
        let report = AlignmentReport::new(&dataset, &model_id, step, config.method, alpha, records)?;
        let stem = format!("alignment_{name}_{}", config.method.short());
        write_jsonl(&dir.join(format!("{stem}.jsonl")), &report.records)?;
        write_json(&dir.join(format!("{stem}.json")), &report)?;
        upsert_alignment(&dir.join("alignment.csv"), &model_id, step, config.method, report.alignment_score)?;
        println!("{name} {}: alignment score {:.4} over {} pairs", config.method, report.alignment_score, report.records.len());
    }
    write_json(&dir.join("alignment_excluded.json"), &excluded)?;
    Ok(())
}

pub fn calibrate(data: &DataArgs, run: &RunArgs, args: &SaliencyArgs, alpha: f64, n_partitions: usize) -> Result<()> {
    readcheck::alignment::check_alpha(alpha)?;
    if n_partitions == 0 {
        return Err(Error::InvalidInput("--n-partitions must be at least 1".into()));
    }
    let (instances, _, _) = load(data)?;
    let config = saliency_config(args)?;
    let gateway = open_model(&run.model)?;
    let dir = out_dir(run)?;
    let maps = cached_maps(gateway.as_ref(), &instances, &config, dir)?;
    let report = calibration_report(&instances, &maps, gateway.model_id(), config.method, n_partitions, run.seed, alpha)?;
    write_json(&dir.join(format!("calibration_{}.json", config.method.short())), &report)?;
    println!(
        "significant in {}/{} random partitions (rate {:.4}, 95% CI {:.4}-{:.4})",
        report.n_significant, report.n_draws, report.rate, report.ci_low, report.ci_high
    );
    Ok(())
}

#[derive(Serialize)]
struct HeuristicSummary {
    dataset: String,
    config: HeuristicConfig,
    ner: String,
    f1: f64,
    em: f64,
    n_instances: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn heuristic(
    data: &DataArgs,
    run: &RunArgs,
    strategy: &str,
    entity_types: &str,
    ner: &str,
    embedder: &str,
    classifier: Option<&str>,
) -> Result<()> {
    let selection_strategy = SelectionStrategy::parse(strategy).ok_or_else(|| invalid("strategy", strategy))?;
    let entity_type_source =
        EntityTypeSource::parse(entity_types).ok_or_else(|| invalid("entity type source", entity_types))?;
    let config = HeuristicConfig {
        selection_strategy,
        entity_type_source,
    };
    let plugins = HeuristicPlugins::from_registry(&PluginRegistry::builtin(), ner, Some(embedder), classifier)?;
    let (instances, _, dataset) = load(data)?;
    let dir = out_dir(run)?;
    let preds = heuristic_predictions(&instances, &config, &plugins)?;
    let mut rows = Vec::new();
    for inst in &instances {
        let p = &preds[&inst.id];
        let golds = inst.gold_texts();
        rows.push(PredictionRow {
            id: &inst.id,
            prediction: p,
            f1: token_f1(p, &golds)?,
            em: exact_match(p, &golds)?,
        });
    }
    let name = selection_strategy.name();
    write_jsonl(&dir.join(format!("heuristic_{name}.jsonl")), &rows)?;
    let r = evaluate_dataset(&preds, &instances)?;
    let table = dir.join("heuristic.csv");
    let mut t = ModelTable::load_or_new(&table, &[])?;
    t.set(name, &format!("{dataset}_f1"), readcheck::alignment::tables::percent(r.f1, 2));
    t.set(name, &format!("{dataset}_em"), readcheck::alignment::tables::percent(r.exact_match, 2));
    t.save(&table)?;
    let summary = HeuristicSummary {
        dataset,
        config,
        ner: plugins.ner.name().to_string(),
        f1: r.f1,
        em: r.exact_match,
        n_instances: r.n_instances,
    };
    write_json(&dir.join(format!("heuristic_{name}.json")), &summary)?;
    println!("{name}: f1 {:.4} em {:.4}", summary.f1, summary.em);
    Ok(())
}

pub fn serve(model: &str) -> Result<()> {
    let gateway = open_model(model)?;
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    readcheck::gateway::serve(gateway.as_ref(), stdin.lock(), stdout.lock())
        .map_err(|e| output_error(&PathBuf::from("<stdout>"), e))
}
