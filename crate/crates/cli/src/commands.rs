use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clinreason_core::cohort::{generate_cohort, load_cohort, save_cohort, split, Cohort, CohortFormat, CohortSource, SplitCounts, SynthSpec};
use clinreason_core::eval::{compute_metrics, format_table, sample_for_review, sample_misdiagnosed_rationales, subsample, ReviewBatch};
use clinreason_core::jsonl;
use clinreason_core::llm::{Backend, CachedBackend, LiveBackend, LiveConfig, LlmError, MockBackend};
use clinreason_core::prompts::{
    build_candidate_prompt, build_diagnosis_prompt, build_rationalization_prompt, builtin_exemplars, load_exemplars, DiagnoseMode,
    Exemplar,
};
use clinreason_core::review::{AssignmentMode, ReviewStore, SessionOptions};
use clinreason_core::runner::{
    diagnose_batch, export_distill, load_distill, rationalize_dataset, CampaignOptions, CaseInput, Modality, PredictionSet,
};
use clinreason_core::textualize::{compute_thresholds, describe, AtrophyLevel};
use clinreason_core::RegionName;
use serde::{Deserialize, Serialize};

use crate::config::{BackendKindArg, Config};
use crate::{CampaignArgs, Cli, Command, PromptKind};

/// An error carrying the short class printed on the error line.
#[derive(Debug)]
pub struct Classed {
    pub class: &'static str,
    pub message: String,
}

impl std::fmt::Display for Classed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Classed {}

fn classed(class: &'static str, message: impl std::fmt::Display) -> anyhow::Error {
    anyhow::Error::new(Classed { class, message: message.to_string() })
}

fn llm_err(e: LlmError) -> anyhow::Error {
    classed(e.class(), e)
}

/// One line of `descriptions.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct DescriptionLine {
    #[serde(flatten)]
    case: CaseInput,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<String>,
    labels: BTreeMap<RegionName, AtrophyLevel>,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = Config::load(cli.config.as_deref()).map_err(|e| classed("config", format!("{e:#}")))?;
    if let Some(d) = cli.output_dir {
        cfg.paths.output_dir = d;
    }
    match cli.command {
        Command::Synth(a) => synth(&cfg, a),
        Command::Textualize(a) => textualize(&cfg, a),
        Command::Prompt(a) => prompt(&cfg, a),
        Command::Rationalize(a) => rationalize(&cfg, a),
        Command::Diagnose(a) => diagnose(&cfg, a),
        Command::ExportDistill(a) => export(a),
        Command::Eval(a) => eval(&cfg, a),
        Command::SampleReview(a) => sample_review(&cfg, a),
        Command::ReviewServe(a) => review_serve(&cfg, a),
        Command::Subsample(a) => subsample_cmd(&cfg, a),
    }
}

fn required(flag: Option<PathBuf>, file: &Option<PathBuf>, name: &str) -> anyhow::Result<PathBuf> {
    flag.or_else(|| file.clone())
        .ok_or_else(|| classed("usage", format!("no {name} path given (flag or config paths.{name})")))
}

fn read_cohort(path: &Path) -> anyhow::Result<Cohort> {
    load_cohort(path, CohortFormat::from_path(path)).map_err(|e| classed("cohort", format!("{}: {e}", path.display())))
}

fn synth(cfg: &Config, a: crate::SynthArgs) -> anyhow::Result<()> {
    let seed = a.seed.unwrap_or(cfg.seeds.synth);
    let cohort = generate_cohort(&SynthSpec::default().with_total(a.n), seed).map_err(|e| classed("synth", e))?;
    save_cohort(&cohort, &a.out, CohortFormat::from_path(&a.out)).map_err(|e| classed("io", e))?;
    println!("wrote {} records to {}", cohort.len(), a.out.display());
    Ok(())
}

fn textualize(cfg: &Config, a: crate::TextualizeArgs) -> anyhow::Result<()> {
    let path = required(a.cohort, &cfg.paths.cohort, "cohort")?;
    let cohort = read_cohort(&path)?;
    let counts = (a.train.or(cfg.split.train), a.valid.or(cfg.split.valid), a.test.or(cfg.split.test));
    let assignment = match counts {
        (None, None, None) => None,
        (Some(tr), va, te) => {
            let counts = SplitCounts::new(tr, va.unwrap_or(0), te.unwrap_or(0));
            let seed = a.seed.unwrap_or(cfg.seeds.split);
            Some(split(&cohort, counts, seed, a.stratify || cfg.split.stratify).map_err(|e| classed("split", e))?)
        }
        _ => return Err(classed("usage", "split sizes need at least --train")),
    };
    let mut split_of: BTreeMap<&str, &str> = BTreeMap::new();
    if let Some(s) = &assignment {
        for (name, ids) in [("train", &s.train), ("valid", &s.valid), ("test", &s.test)] {
            for id in ids {
                split_of.insert(id.as_str(), name);
            }
        }
    }
    let fit_on = match &assignment {
        Some(s) => cohort.select(&s.train),
        None => cohort.records.clone(),
    };
    let table = compute_thresholds(&fit_on, cfg.textualize.grouping()).map_err(|e| classed("textualize", e))?;
    let lines: Vec<DescriptionLine> = cohort
        .records
        .iter()
        .map(|r| {
            let d = describe(r, &table, cfg.textualize.level_case);
            DescriptionLine {
                case: CaseInput { record_id: r.id.clone(), description: d.text, gold: r.gold, mri_ref: r.mri_ref.clone() },
                split: split_of.get(r.id.as_str()).map(|s| s.to_string()),
                labels: d.labels,
            }
        })
        .collect();
    let out = a.out.unwrap_or_else(|| cfg.paths.output_dir.clone());
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    table.save(&out.join("thresholds.jsonl")).map_err(|e| classed("io", e))?;
    jsonl::write(&out.join("descriptions.jsonl"), &lines).map_err(|e| classed("io", e))?;
    if let Some(s) = &assignment {
        std::fs::write(out.join("split.json"), serde_json::to_string_pretty(s)?)?;
    }
    let fallbacks = table.fallbacks().count();
    println!(
        "wrote {} descriptions to {} (thresholds fitted on {} records, {} fallback entries)",
        lines.len(),
        out.join("descriptions.jsonl").display(),
        fit_on.len(),
        fallbacks
    );
    Ok(())
}

fn descriptions_path(cfg: &Config, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| cfg.paths.descriptions.clone()).unwrap_or_else(|| cfg.paths.output_dir.join("descriptions.jsonl"))
}

fn read_cases(path: &Path, split: Option<&str>) -> anyhow::Result<Vec<CaseInput>> {
    let lines: Vec<DescriptionLine> = jsonl::read(path).map_err(|e| classed("descriptions", e))?;
    let cases: Vec<CaseInput> = match split {
        None => lines.into_iter().map(|l| l.case).collect(),
        Some(s) => {
            if !["train", "valid", "test"].contains(&s) {
                return Err(classed("usage", format!("unknown split {s:?} (expected train, valid or test)")));
            }
            lines.into_iter().filter(|l| l.split.as_deref() == Some(s)).map(|l| l.case).collect()
        }
    };
    if cases.is_empty() {
        return Err(classed("descriptions", format!("{}: no records selected", path.display())));
    }
    Ok(cases)
}

fn exemplars(cfg: &Config, flag: Option<PathBuf>) -> anyhow::Result<Vec<Exemplar>> {
    match flag.or_else(|| cfg.paths.exemplars.clone()) {
        Some(p) => load_exemplars(&p).map_err(|e| classed("exemplars", format!("{}: {e}", p.display()))),
        None => Ok(builtin_exemplars()),
    }
}

fn diagnose_mode(s: &str) -> anyhow::Result<DiagnoseMode> {
    s.parse().map_err(|e: String| classed("usage", e))
}

fn prompt(cfg: &Config, a: crate::PromptArgs) -> anyhow::Result<()> {
    let cases = read_cases(&descriptions_path(cfg, a.descriptions), None)?;
    let case = match &a.record {
        Some(id) => cases.iter().find(|c| &c.record_id == id).ok_or_else(|| classed("usage", format!("no record {id}")))?,
        None => &cases[0],
    };
    let ex = exemplars(cfg, a.exemplars)?;
    let bundle = match a.kind {
        PromptKind::Candidate => build_candidate_prompt(&case.description, case.gold),
        PromptKind::Rationalize => build_rationalization_prompt(&ex, &case.description, case.gold),
        PromptKind::Diagnose => build_diagnosis_prompt(&ex, &case.description, diagnose_mode(&a.mode)?, a.k),
    }
    .map_err(|e| classed("prompt", e))?
    .with_decode(cfg.decode);
    if a.json {
        let req = bundle.to_request(&cfg.backend.model_id);
        let value = serde_json::json!({ "digest": req.digest(), "request": req });
        println!("{}", serde_json::to_string_pretty(&value)?);
    } else {
        println!("{}", bundle.render());
    }
    Ok(())
}

fn backend(cfg: &Config, a: &CampaignArgs) -> anyhow::Result<(Arc<dyn Backend>, String)> {
    let kind = a.backend.unwrap_or(cfg.backend.kind);
    let cache = a.cache.clone().or_else(|| cfg.paths.cache.clone());
    let base: Arc<dyn Backend> = match kind {
        BackendKindArg::Mock => Arc::new(MockBackend::new(cfg.mock)),
        BackendKindArg::Live => {
            let live = LiveConfig {
                endpoint: cfg.backend.endpoint.clone(),
                api_key_env: cfg.backend.api_key_env.clone(),
                retry: cfg.backend.retry,
                max_in_flight: a.max_in_flight.unwrap_or(cfg.backend.max_in_flight),
                timeout_secs: cfg.backend.timeout_secs,
            };
            Arc::new(LiveBackend::from_env(live).map_err(llm_err)?)
        }
        BackendKindArg::Replay => {
            let path = cache.ok_or_else(|| classed("usage", "the replay backend needs --cache or paths.cache"))?;
            return Ok((Arc::new(CachedBackend::replay(&path).map_err(llm_err)?), "replay".into()));
        }
    };
    let label = format!("{kind:?}").to_lowercase();
    match cache {
        Some(path) => Ok((Arc::new(CachedBackend::record(base, &path).map_err(llm_err)?), format!("{label}+record"))),
        None => Ok((base, label)),
    }
}

fn campaign_options(cfg: &Config, a: &CampaignArgs, default_id: String, label: String) -> CampaignOptions {
    let model = a.model.clone().unwrap_or_else(|| cfg.backend.model_id.clone());
    let id = a.campaign.clone().unwrap_or(default_id);
    let mut opts = CampaignOptions::new(&id, &model).in_dir(&cfg.paths.output_dir.join(&id));
    opts.backend_label = label;
    opts.seed = a.seed.unwrap_or(cfg.seeds.campaign);
    opts.decode = cfg.decode;
    opts.max_in_flight = a.max_in_flight.or(Some(cfg.backend.max_in_flight));
    opts
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

fn first_failure<'a>(mut failures: impl Iterator<Item = (&'a str, &'a clinreason_core::runner::Failure)>, total: usize) -> anyhow::Result<()> {
    if let Some((id, f)) = failures.next() {
        let n = 1 + failures.count();
        let class = match f.class.as_str() {
            "cache-miss" => "cache-miss",
            "transport" => "transport",
            "http-status" => "http-status",
            "mock-input" => "mock-input",
            _ => "backend",
        };
        return Err(classed(class, format!("{n} of {total} records failed; first {id}: {}", f.message)));
    }
    Ok(())
}

fn rationalize(cfg: &Config, a: CampaignArgs) -> anyhow::Result<()> {
    let cases = read_cases(&descriptions_path(cfg, a.descriptions.clone()), a.split.as_deref())?;
    let ex = exemplars(cfg, a.exemplars.clone())?;
    let (backend, label) = backend(cfg, &a)?;
    let model = a.model.clone().unwrap_or_else(|| cfg.backend.model_id.clone());
    let opts = campaign_options(cfg, &a, format!("rationalize-{}", slug(&model)), label);
    let report = rationalize_dataset(&cases, backend.as_ref(), &ex, &opts).map_err(|e| classed("campaign", e))?;
    let dir = opts.dir.as_ref().expect("campaign dir");
    jsonl::write(&dir.join("triplets.jsonl"), &report.triplets).map_err(|e| classed("io", e))?;
    println!(
        "campaign {}: {} triplets accepted, {} flagged -> {}",
        opts.campaign_id,
        report.triplets.len(),
        report.flagged().count(),
        dir.display()
    );
    let failures = report.outcomes.iter().filter_map(|o| match &o.status {
        clinreason_core::runner::RationaleStatus::Failed { failure } => Some((o.record_id.as_str(), failure)),
        _ => None,
    });
    first_failure(failures, cases.len())
}

fn diagnose(cfg: &Config, a: crate::DiagnoseArgs) -> anyhow::Result<()> {
    let c = &a.common;
    let mode = diagnose_mode(&a.mode)?;
    let cases = read_cases(&descriptions_path(cfg, c.descriptions.clone()), c.split.as_deref())?;
    let ex = exemplars(cfg, c.exemplars.clone())?;
    let (backend, label) = backend(cfg, c)?;
    let model = c.model.clone().unwrap_or_else(|| cfg.backend.model_id.clone());
    let default_id = format!("diagnose-{}-{}-k{}", slug(&model), a.mode, a.k);
    let opts = campaign_options(cfg, c, default_id, label);
    let set = diagnose_batch(&cases, backend.as_ref(), &ex, mode, a.k, &opts).map_err(|e| classed("campaign", e))?;
    let dir = opts.dir.as_ref().expect("campaign dir");
    println!(
        "campaign {}: {} records, {} unparseable, {} network calls -> {}",
        set.campaign_id,
        set.entries.len(),
        set.unparseable,
        backend.network_calls(),
        dir.join("predictions.json").display()
    );
    first_failure(set.failures(), set.entries.len())
}

fn export(a: crate::ExportArgs) -> anyhow::Result<()> {
    let path = if a.triplets.is_dir() { a.triplets.join("triplets.jsonl") } else { a.triplets.clone() };
    let triplets = load_distill(&path).map_err(|e| classed("io", e))?;
    let modality: Modality = a.modality.parse().map_err(|e: String| classed("usage", e))?;
    let n = export_distill(&triplets, &a.out, modality).map_err(|e| classed("export", e))?;
    println!("wrote {n} lines to {}", a.out.display());
    Ok(())
}

fn prediction_files(cfg: &Config, paths: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    if !paths.is_empty() {
        return Ok(paths.iter().map(|p| if p.is_dir() { p.join("predictions.json") } else { p.clone() }).collect());
    }
    let root = &cfg.paths.output_dir;
    let mut found: Vec<PathBuf> = std::fs::read_dir(root)
        .with_context(|| format!("reading {}", root.display()))?
        .filter_map(|e| e.ok().map(|e| e.path().join("predictions.json")))
        .filter(|p| p.exists())
        .collect();
    found.sort();
    if found.is_empty() {
        bail!(classed("usage", format!("no campaigns with predictions under {}", root.display())));
    }
    Ok(found)
}

fn load_sets(files: &[PathBuf]) -> anyhow::Result<Vec<PredictionSet>> {
    files
        .iter()
        .map(|p| PredictionSet::load(p).map_err(|e| classed("io", format!("{}: {e}", p.display()))))
        .collect()
}

fn eval(cfg: &Config, a: crate::EvalArgs) -> anyhow::Result<()> {
    let sets = load_sets(&prediction_files(cfg, &a.paths)?)?;
    let reports = sets.iter().map(compute_metrics).collect::<Result<Vec<_>, _>>().map_err(|e| classed("eval", e))?;
    if a.json {
        for r in &reports {
            println!("{}", serde_json::to_string(r)?);
        }
    } else {
        print!("{}", format_table(&reports));
        for r in &reports {
            if r.unparseable > 0 {
                println!("{}: {} of {} outputs unparseable (counted as wrong)", r.campaign_id, r.unparseable, r.total);
            }
        }
    }
    Ok(())
}

fn sample_review(cfg: &Config, a: crate::SampleReviewArgs) -> anyhow::Result<()> {
    let sets = load_sets(&prediction_files(cfg, &a.paths)?)?;
    let seed = a.seed.unwrap_or(cfg.seeds.review);
    let mut batch = if a.misdiagnosed {
        sample_misdiagnosed_rationales(&sets, a.n, seed)
    } else {
        sample_for_review(&sets, a.n, seed)
    }
    .map_err(|e| classed("sample", e))?;
    if let Some(p) = a.reference {
        let triplets = load_distill(&p).map_err(|e| classed("io", e))?;
        let n = batch.add_reference(&triplets, "Ref");
        println!("attached {n} reference rationales");
    }
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&a.out, serde_json::to_string_pretty(&batch)?)?;
    println!("wrote {} records ({} rationales) to {}", batch.records.len(), batch.item_count(), a.out.display());
    Ok(())
}

fn review_serve(cfg: &Config, a: crate::ReviewServeArgs) -> anyhow::Result<()> {
    let root = a.store.unwrap_or_else(|| cfg.paths.output_dir.join("review"));
    let store = Arc::new(ReviewStore::open(&root).map_err(|e| classed("review", e))?);
    if let Some(p) = &a.batch {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let batch: ReviewBatch = serde_json::from_str(&text).map_err(|e| classed("review", format!("{}: {e}", p.display())))?;
        let assignment: AssignmentMode = a.assignment.parse().map_err(|e: String| classed("usage", e))?;
        let opts = SessionOptions { session_id: a.session_id.clone(), assignment };
        let id = store
            .create_session(&batch, &a.raters, a.seed.unwrap_or(cfg.seeds.review), &opts)
            .map_err(|e| classed("review", e))?;
        println!("created session {id}");
    }
    if a.no_serve {
        return Ok(());
    }
    if !a.addr.ip().is_loopback() {
        eprintln!("warning: binding to non-loopback address {}", a.addr);
    }
    let rt = tokio::runtime::Runtime::new()?;
    println!("serving {} sessions on http://{}", store.session_ids().len(), a.addr);
    rt.block_on(clinreason_core::review::serve(store, a.addr, a.ui_dir)).map_err(|e| anyhow!(classed("io", e)))
}

fn subsample_cmd(cfg: &Config, a: crate::SubsampleArgs) -> anyhow::Result<()> {
    let path = required(a.cohort, &cfg.paths.cohort, "cohort")?;
    let cohort = read_cohort(&path)?;
    let seed = a.seed.unwrap_or(cfg.seeds.subsample);
    let kept = subsample(&cohort.records, a.fraction, seed, a.stratified).map_err(|e| classed("subsample", e))?;
    let out = Cohort::new(kept, CohortSource::Ingested).map_err(|e| classed("cohort", e))?;
    save_cohort(&out, &a.out, CohortFormat::from_path(&a.out)).map_err(|e| classed("io", e))?;
    println!("kept {} of {} records -> {}", out.len(), cohort.len(), a.out.display());
    Ok(())
}
