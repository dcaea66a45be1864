use std::io::Read;
use std::path::Path;

use pace_core::gateway::BackendKind;
use pace_core::harness::artifact::BackendDescriptor;
use pace_core::harness::perturb::PerturbSpec;
use pace_core::{
    butter_fingers, emit_report, evaluate_final, make_split, run_experiment, score_prompt, Context, Error,
    ExperimentPlan, Gateway, InitialSetting, MetricId, Prompt, ReportFormat, Result, RunArtifact, Score,
    SplitKind, TaskSpec, TemplateSet,
};

use crate::config::FileConfig;
use crate::{BackendArgs, EvalArgs, OptimizeArgs, PerturbArgs, ReportArgs};

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

fn resolve(args: &BackendArgs) -> Result<FileConfig> {
    let mut config = FileConfig::load_or_default(args.config.as_deref())?;
    if let Some(kind) = &args.backend {
        config.backend.kind = kind.parse::<BackendKind>()?;
    }
    if let Some(p) = &args.mock_script {
        config.backend.mock_script = Some(p.clone());
    }
    if let Some(p) = &args.cache_dir {
        config.backend.cache_dir = Some(p.clone());
    }
    if let Some(seed) = args.seed {
        config.run.seed = seed;
    }
    Ok(config)
}

fn context(config: &FileConfig) -> Result<Context> {
    let templates = match &config.templates {
        Some(p) => TemplateSet::load_overrides(p)?,
        None => TemplateSet::default(),
    };
    let gateway = Gateway::from_config(&config.backend)?;
    Context::new(gateway, templates, config.run.request.clone(), config.run.parallelism)
}

fn metric(task: &TaskSpec) -> Result<MetricId> {
    task.metric_id()
        .ok_or_else(|| Error::InvalidTask(format!("unknown metric {:?}", task.metric)))
}

fn score(s: Option<Score>) -> String {
    s.map_or_else(|| "n/a".to_owned(), |s| format!("{:.2}", s.value()))
}

pub fn optimize(args: OptimizeArgs) -> Result<()> {
    let mut config = resolve(&args.backend)?;
    if let Some(mode) = &args.mode {
        config.run.mode = mode.parse()?;
    }
    let setting = match (&args.setting, &args.prompt) {
        (_, Some(text)) => InitialSetting::Literal(text.clone()),
        (Some(name), None) => name.parse()?,
        (None, None) => return Err(Error::Config("one of --setting or --prompt is required".into())),
    };
    let task = TaskSpec::load_valid(&args.task)?;
    let ctx = context(&config)?;
    let plan = ExperimentPlan {
        task,
        setting,
        config: config.run,
        backend: BackendDescriptor {
            kind: config.backend.kind,
            base_url: config.backend.base_url.clone(),
        },
        out_dir: args.out.clone(),
    };
    let artifact = run_experiment(&plan, &ctx)?;
    let footer = artifact.completed_footer()?;
    println!("final prompt: {}", footer.final_prompt.text());
    println!(
        "val: {} -> {}",
        score(footer.initial_val_score),
        score(footer.final_val_score)
    );
    println!(
        "test: {} -> {}",
        score(footer.initial_test_score()),
        score(footer.final_test_score())
    );
    println!("iterations: {}", footer.iterations);
    println!("run: {}", artifact.dir.display());
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let config = resolve(&args.backend)?;
    let task = TaskSpec::load_valid(&args.task)?;
    let text = match (&args.prompt, &args.prompt_file) {
        (Some(t), _) => t.clone(),
        (None, Some(p)) => read(p)?.trim_end_matches(['\n', '\r']).to_owned(),
        (None, None) => return Err(Error::Config("one of --prompt or --prompt-file is required".into())),
    };
    let prompt = if text.is_empty() { Prompt::empty() } else { Prompt::human(text)? };
    let split = make_split(&task, config.run.split, config.run.seed)?;
    let metric = metric(&task)?;
    let ctx = context(&config)?;
    let report = match args.split {
        SplitKind::Test => evaluate_final(&prompt, &split, metric, &ctx)?,
        kind => {
            let pairs = split.get(kind);
            if pairs.is_empty() {
                return Err(Error::SplitEmpty(kind.name()));
            }
            score_prompt(&prompt, pairs, metric, &ctx)?
        }
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(());
    }
    for p in &report.per_pair {
        println!("pair {}: {} {:?}", p.index, p.score.value(), p.prediction);
    }
    println!(
        "mean: {:.2} ({} pairs, {} on {})",
        report.mean.value(),
        report.n_pairs,
        report.metric,
        args.split.name()
    );
    Ok(())
}

pub fn perturb(args: PerturbArgs) -> Result<()> {
    let spec = PerturbSpec::new(args.rate, args.seed)?;
    match (&args.text, &args.file) {
        (Some(text), _) => println!("{}", butter_fingers(text, &spec)),
        (None, Some(p)) => print!("{}", butter_fingers(&read(p)?, &spec)),
        (None, None) => {
            let mut buf = String::new();
            std::io::stdin().read_to_string(&mut buf).map_err(|source| Error::Io {
                path: "<stdin>".into(),
                source,
            })?;
            print!("{}", butter_fingers(&buf, &spec));
        }
    }
    Ok(())
}

pub fn report(args: ReportArgs) -> Result<()> {
    let format: ReportFormat = args.format.parse()?;
    let artifacts = args
        .runs
        .iter()
        .map(|d| RunArtifact::load(d))
        .collect::<Result<Vec<_>>>()?;
    let rendered = emit_report(&artifacts, format)?;
    match &args.out {
        Some(p) => std::fs::write(p, &rendered).map_err(|source| Error::Io {
            path: p.clone(),
            source,
        })?,
        None => print!("{rendered}"),
    }
    Ok(())
}
