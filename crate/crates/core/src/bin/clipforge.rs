use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use clipforge::config::RunConfig;
use clipforge::detection::{fbeta, map50, match_counts, merge_detections, read_detections, write_pr_csv, DetectionSet};
use clipforge::engine::{Engine, EpisodeMode};
use clipforge::selection::{score_video, select_frames, write_scores_csv, ScoreVariant, Scorer};
use clipforge::training::{evaluate, resume, train, write_history_csv};
use clipforge::video::io::{load_corpus, store_corpus, MANIFEST_FILE};
use clipforge::video::{generate_corpus, Corpus};
use clipforge::Error;

#[derive(Parser, Debug)]
#[command(name = "clipforge", version, about = "Adaptive clip compression, frame selection and detection metrics")]
struct Cli {
    /// Run configuration (flat key = value file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the train and test corpora under <out>/corpus.
    Gen,
    /// Train all phases; writes checkpoints and history.csv.
    Train(TrainArgs),
    /// Score videos and write distilled copies.
    Select(SelectArgs),
    /// Accuracy, FLOPs and action usage on a split.
    Eval(EvalArgs),
    /// AP, mAP@50, F1 and P-R curves from interchange CSVs.
    DetectEval(DetectArgs),
    /// Per-action and per-video FLOPs of the configured engine.
    FlopsReport,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training corpus manifest; defaults to <out>/corpus/train/manifest.csv.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Continue from this checkpoint instead of a fresh engine.
    #[arg(long, requires = "from_phase")]
    checkpoint: Option<PathBuf>,
    /// First phase to run when resuming.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    from_phase: Option<u8>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Split {
    Train,
    Test,
}

impl Split {
    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Frames kept per video.
    #[arg(long)]
    budget: usize,
    #[arg(long, default_value = "s1")]
    variant: ScoreVariant,
    #[arg(long, value_enum, default_value = "test")]
    split: Split,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    /// Trained policy, argmax actions.
    Policy,
    /// Every frame at full resolution, no policy.
    Baseline,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: Split,
    #[arg(long, value_enum, default_value = "policy")]
    mode: Mode,
}

#[derive(Args, Debug)]
struct DetectArgs {
    /// Ground-truth interchange CSV.
    #[arg(long)]
    gt: PathBuf,
    /// Prediction interchange CSV.
    #[arg(long)]
    pred: PathBuf,
    /// Confidence threshold for the F1 count.
    #[arg(long, default_value_t = 0.5)]
    confidence: f64,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Usage(m),
            other => Failure::Runtime(other),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(Error::Io(e))
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CLIPFORGE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> CmdResult {
    if cli.threads == 0 {
        return Err(Failure::Usage("--threads must be at least 1".into()));
    }
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Failure::Runtime(Error::InvalidArgument(e.to_string())))?;
    pool.install(|| match cli.command {
        Command::Gen => cmd_gen(&cfg),
        Command::Train(a) => cmd_train(&cfg, &a),
        Command::Select(a) => cmd_select(&cfg, &a),
        Command::Eval(a) => cmd_eval(&cfg, &a),
        Command::DetectEval(a) => cmd_detect_eval(&cfg, &a),
        Command::FlopsReport => cmd_flops_report(&cfg),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn split_manifest(cfg: &RunConfig, split: Split) -> PathBuf {
    cfg.out.join("corpus").join(split.name()).join(MANIFEST_FILE)
}

fn load_split(manifest: &Path) -> Result<Corpus, Failure> {
    if !manifest.exists() {
        return Err(Failure::Runtime(Error::InvalidArgument(format!(
            "corpus manifest {} not found (run gen first)",
            manifest.display()
        ))));
    }
    Ok(load_corpus(manifest)?)
}

fn load_engine(cfg: &RunConfig, checkpoint: &Path) -> Result<Engine, Failure> {
    let mut engine = Engine::new(cfg.engine.clone())?;
    engine.load(checkpoint)?;
    Ok(engine)
}

fn cmd_gen(cfg: &RunConfig) -> CmdResult {
    let dir = cfg.out.join("corpus");
    for (split, spec) in [(Split::Train, cfg.corpus.clone()), (Split::Test, cfg.test_corpus())] {
        let corpus = generate_corpus(&spec)?;
        store_corpus(&corpus, &dir.join(split.name()))?;
        info!(
            "{}: {} videos ({} positive)",
            split.name(),
            corpus.videos.len(),
            corpus.positives()
        );
    }
    fs::write(cfg.out.join("run.conf"), cfg.to_text())?;
    Ok(())
}

fn cmd_train(cfg: &RunConfig, args: &TrainArgs) -> CmdResult {
    let manifest = args.corpus.clone().unwrap_or_else(|| split_manifest(cfg, Split::Train));
    let corpus = load_split(&manifest)?;
    let ckpt_dir = cfg.out.join("checkpoints");
    fs::create_dir_all(&ckpt_dir)?;
    let outcome = match (&args.checkpoint, args.from_phase) {
        (Some(path), Some(phase)) => resume(load_engine(cfg, path)?, &corpus.videos, &cfg.train, phase, Some(&ckpt_dir))?,
        (None, Some(phase)) if phase != 1 => {
            return Err(Failure::Usage("--from-phase above 1 needs --checkpoint".into()));
        }
        _ => train(&corpus.videos, cfg.engine.clone(), &cfg.train, Some(&ckpt_dir))?,
    };
    write_history_csv(create(&cfg.out.join("history.csv"))?, &outcome.history)?;
    Ok(())
}

fn cmd_select(cfg: &RunConfig, args: &SelectArgs) -> CmdResult {
    let engine = load_engine(cfg, &args.checkpoint)?;
    let corpus = load_split(&split_manifest(cfg, args.split))?;
    let dir = cfg.out.join("distilled").join(args.variant.to_string());
    let scorer = Scorer {
        seed: cfg.seed,
        ..Scorer::new(args.variant)
    };
    let mut distilled = Vec::with_capacity(corpus.videos.len());
    for video in &corpus.videos {
        if args.budget == 0 || args.budget > video.len() {
            return Err(Failure::Usage(format!(
                "budget {} outside 1..={} for {}",
                args.budget,
                video.len(),
                video.source_id
            )));
        }
        let scored = score_video(&engine, video, &scorer)?;
        write_scores_csv(create(&dir.join("scores").join(format!("{}.csv", video.source_id)))?, &scored.scores, args.variant)?;
        distilled.push(select_frames(video, &scored.scores, args.budget)?);
    }
    store_corpus(&Corpus { videos: distilled }, &dir)?;
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, args: &EvalArgs) -> CmdResult {
    let engine = load_engine(cfg, &args.checkpoint)?;
    let corpus = load_split(&split_manifest(cfg, args.split))?;
    let (mode, name) = match args.mode {
        Mode::Policy => (EpisodeMode::Argmax, "policy"),
        Mode::Baseline => (EpisodeMode::Fixed(0), "baseline"),
    };
    let m = evaluate(&engine, &corpus.videos, &mode, cfg.seed)?;
    let stem = format!("eval_{}_{name}", args.split.name());

    let mut w = csv::Writer::from_writer(create(&cfg.out.join(format!("{stem}.csv")))?);
    w.write_record([
        "split", "mode", "videos", "accuracy", "tp", "tn", "fp", "fn", "flops_per_video", "flops_per_frame", "mean_steps",
    ])
    .map_err(Error::from)?;
    let c = m.confusion;
    w.write_record([
        args.split.name().to_string(),
        name.to_string(),
        corpus.videos.len().to_string(),
        format!("{:.6}", m.accuracy),
        c.tp.to_string(),
        c.tn.to_string(),
        c.fp.to_string(),
        c.fn_.to_string(),
        format!("{:.1}", m.flops_per_video),
        format!("{:.1}", m.flops_per_frame),
        format!("{:.4}", m.mean_steps),
    ])
    .map_err(Error::from)?;
    w.flush()?;

    let space = engine.actions();
    let mut w = csv::Writer::from_writer(create(&cfg.out.join(format!("{stem}_usage.csv")))?);
    w.write_record(["action", "k", "resolution", "fraction"]).map_err(Error::from)?;
    for (i, f) in m.usage.iter().enumerate() {
        w.write_record([
            i.to_string(),
            space.action(i).to_string(),
            space.resolution(i).to_string(),
            format!("{f:.6}"),
        ])
        .map_err(Error::from)?;
    }
    w.flush()?;
    println!(
        "{} {name}: accuracy {:.4}, FLOPs/video {:.0}, FLOPs/frame {:.0}",
        args.split.name(),
        m.accuracy,
        m.flops_per_video,
        m.flops_per_frame
    );
    Ok(())
}

fn read_interchange(path: &Path) -> Result<Vec<DetectionSet>, Failure> {
    let file = File::open(path).map_err(|e| Failure::Runtime(Error::InvalidArgument(format!("{}: {e}", path.display()))))?;
    read_detections(file).map_err(|e| Failure::Runtime(Error::Format(format!("{}: {e}", path.display()))))
}

fn cmd_detect_eval(cfg: &RunConfig, args: &DetectArgs) -> CmdResult {
    let sets = merge_detections(read_interchange(&args.gt)?, read_interchange(&args.pred)?);
    let report = map50(&sets)?;
    let (tp, fp, fn_) = match_counts(&sets, args.confidence)?;
    let f1 = fbeta(tp, fp, fn_, 1.0)?;

    let mut w = csv::Writer::from_writer(create(&cfg.out.join("detect_metrics.csv"))?);
    w.write_record(["class_id", "ap50", "ground_truth"]).map_err(Error::from)?;
    for c in &report.classes {
        w.write_record([c.class_id.to_string(), format!("{:.9}", c.ap), c.num_ground_truth.to_string()])
            .map_err(Error::from)?;
    }
    w.write_record(["all".to_string(), format!("{:.9}", report.map), sets.iter().map(|s| s.ground_truth.len()).sum::<usize>().to_string()])
        .map_err(Error::from)?;
    w.flush()?;

    let mut w = csv::Writer::from_writer(create(&cfg.out.join("detect_f1.csv"))?);
    w.write_record(["confidence", "tp", "fp", "fn", "f1"]).map_err(Error::from)?;
    w.write_record([args.confidence.to_string(), tp.to_string(), fp.to_string(), fn_.to_string(), format!("{f1:.9}")])
        .map_err(Error::from)?;
    w.flush()?;

    write_pr_csv(create(&cfg.out.join("pr_curve.csv"))?, &report)?;
    println!("mAP@50 {:.6}, F1@{} {:.6}", report.map, args.confidence, f1);
    Ok(())
}

fn cmd_flops_report(cfg: &RunConfig) -> CmdResult {
    let engine = Engine::new(cfg.engine.clone())?;
    let space = engine.actions();
    let len = cfg.corpus.frames_per_video as u64;
    let gru = engine.gru.step_flops();
    let mut out = create(&cfg.out.join("flops.csv"))?;
    writeln!(out, "action,k,resolution,cnn_flops,gru_flops,step_flops,policy_flops")?;
    for i in 0..space.len() {
        let cnn = engine.cnn.flops_at(space.resolution(i))?;
        writeln!(
            out,
            "{i},{},{},{cnn},{gru},{},{}",
            space.action(i),
            space.resolution(i),
            cnn + gru,
            engine.policy.flops()
        )?;
    }
    out.flush()?;

    let full = engine.full_step_cost()?;
    let stations = cfg.engine.station_count as u64 * engine.cnn.flops_at(space.full_resolution())?;
    let mut out = create(&cfg.out.join("flops_video.csv"))?;
    writeln!(out, "setting,steps,flops_per_video,flops_per_frame")?;
    writeln!(out, "baseline_k1,{len},{},{}", len * full, full)?;
    // Always taking the largest action: ceil((L - 1) / k) + 1 steps.
    let last = space.len() - 1;
    let k = space.action(last) as u64;
    let steps = if len <= 1 { len } else { (len - 1).div_ceil(k) + 1 };
    let big = engine.cnn.flops_at(space.resolution(0))? + gru
        + (steps - 1) * (engine.cnn.flops_at(space.resolution(last))? + gru)
        + stations
        + steps * engine.policy.flops();
    writeln!(out, "always_k{k},{steps},{big},{:.1}", big as f64 / len as f64)?;
    out.flush()?;
    println!("baseline FLOPs/video {}", len * full);
    Ok(())
}
