use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lga::abstraction::{abstract_features, refine_interactive, Abstractor, FeatureSet};
use lga::harness::{
    build_abstractor, evaluate, load_human_features, run, Backend, ExperimentConfig, Method, OraclePolicy, Policy,
    Protocol, RandomPolicy,
};
use lga::imitation::{dart_augment, train, DemoSet, TrainConfig, TrainedPolicy};
use lga::lm::{LiveClient, LiveConfig, RelevanceBackend, ResponseCache, RuleOracle};
use lga::nn::{load_checkpoint, save_checkpoint, Variant};
use lga::sim::SceneRecipe;
use lga::Registry;

type Res<T> = Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(name = "lga", version, about = "Language-guided state abstraction for imitation learning")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Lm,
    Oracle,
}

#[derive(Args, Clone)]
struct BackendArgs {
    /// Relevance backend. `lm` reads the key from LGA_LM_API_KEY.
    #[arg(long, value_enum, default_value = "oracle")]
    backend: BackendKind,
    /// Chat-completions base URL.
    #[arg(long, default_value = "https://api.openai.com")]
    endpoint: String,
    #[arg(long, default_value = "gpt-4-0613")]
    model: String,
    /// JSONL response cache.
    #[arg(long, default_value = "lm_cache.jsonl")]
    cache: PathBuf,
}

impl BackendArgs {
    fn backend(&self) -> Backend {
        match self.backend {
            BackendKind::Oracle => Backend::Oracle,
            BackendKind::Lm => Backend::Lm {
                live: LiveConfig { endpoint: self.endpoint.clone(), model: self.model.clone(), ..Default::default() },
                cache: Some(self.cache.clone()),
            },
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Propose task-relevant features for a scenario.
    Abstract {
        #[arg(long)]
        task: String,
        #[command(flatten)]
        backend: BackendArgs,
        /// Review and edit the proposal on the console.
        #[arg(long)]
        hill: bool,
        /// Merge the result into this feature file (utterance → features).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one policy and save its checkpoint.
    Train {
        /// LGA, LGA-S, LGA-L, GCBC, GCBC-SEG, HUMAN or GCBC-DART.
        #[arg(long)]
        variant: Method,
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 50)]
        demos: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Train on this demo file instead of generating demos.
        #[arg(long)]
        demo_file: Option<PathBuf>,
        #[arg(long, default_value_t = 750)]
        epochs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Feature file for HUMAN.
        #[arg(long)]
        human_features: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Run an experiment protocol and write report.json, report.csv and timings.json.
    Run {
        #[arg(value_enum)]
        protocol: ProtocolArg,
        #[command(flatten)]
        backend: BackendArgs,
        /// Number of seeds (0..k).
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Full configuration as JSON; flags given explicitly still apply.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated methods.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<Method>,
        /// Comma-separated scenario ids.
        #[arg(long, value_delimiter = ',')]
        scenarios: Vec<String>,
        /// Comma-separated demo counts.
        #[arg(long, value_delimiter = ',')]
        demos: Vec<usize>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Also save every checkpoint under <out>/checkpoints.
        #[arg(long)]
        checkpoints: bool,
    },
    /// Evaluate a checkpoint (or a baseline policy) on a scenario.
    Eval {
        #[arg(long)]
        task: String,
        #[arg(long, conflicts_with = "policy")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "oracle")]
        policy: BaselineArg,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "none")]
        shift: ShiftArg,
        #[arg(long)]
        human_features: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Generate oracle demonstrations into a file.
    GenDemos {
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Add DART copies (k per demo).
        #[arg(long)]
        dart: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Q1,
    Q2,
    Q3,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Oracle,
    Random,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ShiftArg {
    None,
    Texture,
    Distractor,
}

fn abstractor_for(
    reg: &Arc<Registry>,
    variant: Variant,
    backend: &BackendArgs,
    human: Option<&std::path::Path>,
) -> Res<Option<Arc<Abstractor>>> {
    Ok(match variant {
        Variant::Human => Some(Arc::new(load_human_features(reg.catalog().clone(), human)?)),
        v if v.uses_abstraction() => Some(Arc::new(build_abstractor(reg, &backend.backend())?)),
        _ => None,
    })
}

fn cmd_abstract(reg: Arc<Registry>, task: &str, args: &BackendArgs, hill: bool, out: Option<PathBuf>) -> Res<()> {
    let spec = reg.scenario(task).or_else(|| reg.by_utterance(task)).ok_or(format!("unknown task {task:?}"))?;
    let cat = reg.catalog().clone();
    let backend: Arc<dyn RelevanceBackend> = match args.backend {
        BackendKind::Oracle => Arc::new(RuleOracle::new(reg.clone())),
        BackendKind::Lm => {
            let live = LiveConfig { endpoint: args.endpoint.clone(), model: args.model.clone(), ..Default::default() };
            Arc::new(LiveClient::from_env(live, cat.clone(), Arc::new(ResponseCache::open(&args.cache)?))?)
        }
    };
    let (mut afs, transcript) = abstract_features(&cat, &FeatureSet::default(), &spec.utterance, backend.as_ref())?;
    eprintln!("{}: {} relevance queries via {}", spec.id, transcript.len(), backend.name());
    if hill {
        let stdin = std::io::stdin();
        let rec = refine_interactive(&cat, &afs, &mut stdin.lock(), &mut std::io::stderr())?;
        eprintln!("{} edits in {:.1}s", rec.edits.len(), rec.elapsed_secs);
        afs = rec.after;
    }
    println!("{}", afs.to_json());
    if let Some(path) = out {
        let mut sets: std::collections::BTreeMap<String, lga::AbstractFeatureSet> = match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text)?,
            Err(_) => Default::default(),
        };
        sets.insert(spec.utterance.clone(), afs);
        std::fs::write(&path, serde_json::to_string_pretty(&sets)? + "\n")?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    reg: Arc<Registry>,
    method: Method,
    task: &str,
    n: usize,
    seed: u64,
    demo_file: Option<PathBuf>,
    epochs: usize,
    out: Option<PathBuf>,
    human: Option<PathBuf>,
    backend: &BackendArgs,
) -> Res<()> {
    let cat = reg.catalog().clone();
    let mut demos = match demo_file {
        Some(p) => DemoSet::load(&p, &cat)?,
        None => match (reg.scenario(task), reg.multitask_spec(task)) {
            (Some(spec), _) => DemoSet::generate(&cat, spec, &spec.truth, n, seed)?,
            (None, Some(mt)) => DemoSet::generate_multitask(&cat, mt, n, seed)?,
            _ => return Err(format!("unknown task {task:?}").into()),
        },
    };
    if method.dart {
        demos = dart_augment(&demos, &Default::default(), seed)?;
    }
    let abs = abstractor_for(&reg, method.variant, backend, human.as_deref())?;
    let cfg = TrainConfig { max_epochs: epochs, seed, ..Default::default() };
    let mut outcome = train(method.variant, &demos, &cfg, &cat, abs.as_deref())?;
    let first = outcome.losses.first().copied().unwrap_or(f64::NAN);
    let last = outcome.losses.last().copied().unwrap_or(f64::NAN);
    eprintln!("{method} on {task}: {} epochs, loss {first:.5} -> {last:.5}", outcome.losses.len());
    let path = out.unwrap_or_else(|| PathBuf::from(format!("{method}_{task}_{n}_{seed}.ckpt")));
    save_checkpoint(&path, &mut outcome.net, seed, cat.hash())?;
    println!("{}", path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    reg: Arc<Registry>,
    protocol: ProtocolArg,
    backend: &BackendArgs,
    seeds: u64,
    out: PathBuf,
    config: Option<PathBuf>,
    methods: Vec<Method>,
    scenarios: Vec<String>,
    demos: Vec<usize>,
    episodes: Option<usize>,
    epochs: Option<usize>,
    workers: usize,
    checkpoints: bool,
) -> Res<()> {
    let protocol = match protocol {
        ProtocolArg::Q1 => Protocol::Q1,
        ProtocolArg::Q2 => Protocol::Q2,
        ProtocolArg::Q3 => Protocol::Q3,
    };
    let mut cfg = match config {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => ExperimentConfig { seeds: (0..seeds).collect(), ..ExperimentConfig::for_protocol(protocol) },
    };
    cfg.protocol = protocol;
    cfg.backend = backend.backend();
    if !methods.is_empty() {
        cfg.methods = methods;
    }
    if !scenarios.is_empty() {
        cfg.scenarios = scenarios;
    }
    if !demos.is_empty() {
        cfg.demo_counts = demos;
    }
    if let Some(e) = episodes {
        cfg.eval_episodes = e;
    }
    if let Some(e) = epochs {
        cfg.train.max_epochs = e;
    }
    cfg.workers = workers;
    if checkpoints {
        cfg.checkpoint_dir = Some(out.join("checkpoints"));
    }
    let report = run(reg, &cfg)?;
    report.emit(&out)?;
    for e in &report.errors {
        eprintln!("cell failed: {} {} {} seed {}: {}", e.method, e.scenario, e.demos, e.seed, e.message);
    }
    eprintln!("{} cells, {} errors -> {}", report.cells.len(), report.errors.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    reg: Arc<Registry>,
    task: &str,
    checkpoint: Option<PathBuf>,
    baseline: BaselineArg,
    episodes: usize,
    seed: u64,
    shift: ShiftArg,
    human: Option<PathBuf>,
    backend: &BackendArgs,
) -> Res<()> {
    let cat = reg.catalog().clone();
    let spec = reg.scenario(task).ok_or(format!("unknown task {task:?}"))?;
    let dist = match (shift, &spec.q2) {
        (ShiftArg::Texture, Some(s)) => spec.truth.with_target_textures(&s.shift_textures),
        (ShiftArg::Texture, None) => return Err(format!("{task} has no texture split").into()),
        (ShiftArg::Distractor, Some(s)) => spec.truth.with_target_textures(&s.train_textures),
        _ => spec.truth.clone(),
    };
    let mut recipe = SceneRecipe::standard(spec, &dist)?;
    if shift == ShiftArg::Distractor {
        recipe.distractors += 1;
    }
    let policy: Box<dyn Policy> = match checkpoint {
        Some(p) => {
            let (net, meta) = load_checkpoint::<f32>(&p, cat.hash())?;
            let abstractor = abstractor_for(&reg, meta.variant, backend, human.as_deref())?;
            Box::new(TrainedPolicy { variant: meta.variant, net, catalog: cat.clone(), abstractor })
        }
        None => match baseline {
            BaselineArg::Oracle => Box::new(OraclePolicy::new(reg.clone())),
            BaselineArg::Random => Box::new(RandomPolicy { seed }),
        },
    };
    let r = evaluate(policy.as_ref(), &cat, spec, &recipe, episodes, seed)?;
    println!("{}/{} = {:.3}", r.successes, r.n, r.rate());
    Ok(())
}

fn cmd_gen_demos(reg: Arc<Registry>, task: &str, n: usize, seed: u64, out: PathBuf, dart: bool) -> Res<()> {
    let cat = reg.catalog().clone();
    let mut demos = match (reg.scenario(task), reg.multitask_spec(task)) {
        (Some(spec), _) => DemoSet::generate(&cat, spec, &spec.truth, n, seed)?,
        (None, Some(mt)) => DemoSet::generate_multitask(&cat, mt, n, seed)?,
        _ => return Err(format!("unknown task {task:?}").into()),
    };
    if dart {
        demos = dart_augment(&demos, &Default::default(), seed)?;
    }
    demos.save(&out, &cat)?;
    eprintln!("{} demonstrations -> {}", demos.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let reg = Arc::new(Registry::builtin());
    let res = match cli.cmd {
        Cmd::Abstract { task, backend, hill, out } => cmd_abstract(reg, &task, &backend, hill, out),
        Cmd::Train { variant, task, demos, seed, demo_file, epochs, out, human_features, backend } => {
            cmd_train(reg, variant, &task, demos, seed, demo_file, epochs, out, human_features, &backend)
        }
        Cmd::Run {
            protocol,
            backend,
            seeds,
            out,
            config,
            methods,
            scenarios,
            demos,
            episodes,
            epochs,
            workers,
            checkpoints,
        } => cmd_run(reg, protocol, &backend, seeds, out, config, methods, scenarios, demos, episodes, epochs, workers, checkpoints),
        Cmd::Eval { task, checkpoint, policy, episodes, seed, shift, human_features, backend } => {
            cmd_eval(reg, &task, checkpoint, policy, episodes, seed, shift, human_features, &backend)
        }
        Cmd::GenDemos { task, n, seed, out, dart } => cmd_gen_demos(reg, &task, n, seed, out, dart),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
