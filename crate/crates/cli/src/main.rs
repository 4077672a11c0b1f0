//! `mtgrpo`: batch front end to the laboratory. Every subcommand reads one
//! experiment config (TOML plus `--set key=value` overrides), writes only
//! under its output directory and reports failures as one JSON line on
//! stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use mtgrpo::corpus::write_corpus;
use mtgrpo::harness::config::ExperimentConfig;
use mtgrpo::harness::experiments::{self, RunResult};
use mtgrpo::harness::headroom::{fixture_rows, headroom_analysis};
use mtgrpo::harness::lab::{Lab, RunDir};
use mtgrpo::harness::report::{self, headroom_csv, headroom_rows, headroom_text};
use mtgrpo::metrics::{bleu, chrf_pp, paired_bootstrap_by, pearson, BleuTokenizer};
use mtgrpo::policy::{Checkpoint, RngState};
use mtgrpo::reward::{build_quality_cline, discriminability_of, score_cline, write_cline_csv, DegradeConfig};

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "mtgrpo", version, about = "GRPO laboratory for tiny translation policies")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Dotted override, e.g. `grpo.steps=100`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (env `MTGRPO_OUT`).
    #[arg(short, long, env = "MTGRPO_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct WithBase {
    #[command(flatten)]
    common: Common,
    /// Pretrained base checkpoint; the base is pretrained from the config
    /// when omitted.
    #[arg(long)]
    base: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct TrainArgs {
    #[command(flatten)]
    run: WithBase,
    /// Task id; the first configured task by default.
    #[arg(long)]
    task: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the corpora of every configured task.
    GenTask(Common),
    /// Pretrain the frozen base on the task mixture and save it.
    PretrainBase(Common),
    /// Train GRPO adapters on one task.
    TrainGrpo(TrainArgs),
    /// Train SFT adapters on one task.
    TrainSft(TrainArgs),
    /// Score a hypothesis file against a reference file.
    Eval(EvalArgs),
    /// KL coefficient sweep.
    AblateKl(WithBase),
    /// Training-set-size sweep.
    AblateDatasize(WithBase),
    /// Baseline under each decoding regime against GRPO under beam.
    DecodingControl(WithBase),
    /// Baseline-versus-gain correlation.
    Headroom(HeadroomArgs),
    /// Reward discriminability on a six-level quality cline.
    RewardDiagnostic(RewardArgs),
    /// Cross-task forgetting audit.
    ForgettingAudit(WithBase),
    /// Baseline, SFT and GRPO per task.
    ExperimentA(WithBase),
    /// GRPO on out-of-domain sources.
    ExperimentB(WithBase),
    /// Rebuild the report of a finished run from its records.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Hypotheses, one per line.
    #[arg(long)]
    hyp: PathBuf,
    /// References, one per line.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Baseline hypotheses for a paired bootstrap test.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    resamples: usize,
    #[arg(long, default_value_t = 12345)]
    seed: u64,
    #[arg(short, long, env = "MTGRPO_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct HeadroomArgs {
    #[command(flatten)]
    run: WithBase,
    /// Built-in fixture to analyse instead of running (`table4`).
    #[arg(long)]
    fixture: Option<String>,
    /// Finished run directory whose baseline and grpo records are used.
    #[arg(long)]
    from_run: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RewardArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    task: Option<String>,
    /// Devtest sentences in the cline.
    #[arg(long, default_value_t = 50)]
    sentences: usize,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Run directory holding `manifest.json`.
    #[arg(long)]
    run: PathBuf,
    /// Where to write the tables; the run directory by default.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    Ok(())
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    Ok(ExperimentConfig::load(c.config.as_deref(), &c.overrides)?)
}

fn lab(cfg: &ExperimentConfig, base: Option<&Path>) -> Result<Lab> {
    Ok(match base {
        Some(p) => Lab::with_base(cfg, Checkpoint::load(p)?.model)?,
        None => Lab::new(cfg)?,
    })
}

fn print_summary(run: &RunResult) {
    if let Some(s) = run.file("summary.txt") {
        print!("{s}");
    }
}

type Template = fn(&Lab, Option<&Path>) -> mtgrpo::error::Result<RunResult>;

fn template(args: &WithBase, f: Template) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let lab = lab(&cfg, args.base.as_deref())?;
    create_dir(&args.common.out)?;
    let run = f(&lab, Some(&args.common.out))?;
    print_summary(&run);
    Ok(())
}

fn gen_task(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let tasks = mtgrpo::harness::lab::build_tasks(&cfg)?;
    create_dir(&c.out)?;
    for t in &tasks {
        let dir = c.out.join(&t.config.id);
        write_corpus(&dir, &t.corpus)?;
        println!(
            "{}: {} train, {} eval, {} devtest -> {}",
            t.config.id,
            t.corpus.train.len(),
            t.corpus.eval.len(),
            t.corpus.devtest.len(),
            dir.display()
        );
    }
    Ok(())
}

fn pretrain(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let lab = Lab::new(&cfg)?;
    create_dir(&c.out)?;
    let ck = Checkpoint {
        config: serde_json::to_value(&cfg)?,
        step: cfg.pretrain.steps as u64,
        rng: RngState {
            seed: cfg.pretrain.seed,
            step: cfg.pretrain.steps as u64,
        },
        model: lab.base.clone(),
    };
    let path = c.out.join("base.ckpt");
    ck.save(&path)?;
    let mut losses = String::from("step,loss\n");
    for (i, l) in lab.pretrain_losses.iter().enumerate() {
        losses.push_str(&format!("{i},{l}\n"));
    }
    fs::write(c.out.join("pretrain_loss.csv"), losses)?;
    println!(
        "base {} after {} steps, final loss {:.4} -> {}",
        lab.base.base_hash(),
        cfg.pretrain.steps,
        lab.pretrain_losses.last().copied().unwrap_or(f64::NAN),
        path.display()
    );
    for t in &lab.tasks {
        let r = lab.devtest_record(&lab.base, false, &t.corpus, "baseline", lab.beam())?;
        println!("{}: baseline chrF++ {:.2}", t.config.id, r.chrf);
    }
    Ok(())
}

fn train(args: &TrainArgs, sft: bool) -> Result<()> {
    let cfg = load_config(&args.run.common)?;
    let lab = lab(&cfg, args.run.base.as_deref())?;
    let ti = match &args.task {
        Some(id) => lab.task_index(id)?,
        None => 0,
    };
    let corpus = &lab.tasks[ti].corpus;
    let out = RunDir::new(Some(&args.run.common.out))?;
    out.write("config.toml", &cfg.to_toml()?)?;
    let arm = if sft { "sft" } else { "grpo" };
    let dir = out.arm(&corpus.task.id, arm);
    let before = lab.base.base_hash();
    let trained = if sft {
        lab.train_sft(corpus, &cfg.sft, dir.as_deref())?
    } else {
        lab.train_grpo(corpus, &cfg.grpo, dir.as_deref())?
    };
    let base = lab.devtest_record(&lab.base, false, corpus, "baseline", lab.beam())?;
    out.save_record(&base)?;
    let recs = lab.trained_records(corpus, arm, trained, &before, true)?;
    println!("{} baseline chrF++ {:.2}", corpus.task.id, base.chrf);
    for r in &recs {
        out.save_record(r)?;
        let sig = report::significance(&base, r, &cfg.stats)?;
        println!(
            "{} {:<10} chrF++ {:.2}  delta {:+.2}  p {:.4}  step {}  collapse events {}",
            r.task,
            r.arm,
            r.chrf,
            sig.delta,
            sig.p_value,
            r.best_step.unwrap_or(0),
            r.collapse_events
        );
    }
    Ok(())
}

fn read_lines(p: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(p).map_err(|e| mtgrpo::error::Error::io(p, e))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let hyps = read_lines(&a.hyp)?;
    let refs = read_lines(&a.reference)?;
    let c = chrf_pp(&hyps, &refs)?;
    let b = bleu(&hyps, &refs, BleuTokenizer::default())?;
    create_dir(&a.out)?;
    let mut csv = String::from("line,chrf\n");
    for (i, s) in c.sentences.iter().enumerate() {
        csv.push_str(&format!("{},{:.4}\n", i + 1, s));
    }
    fs::write(a.out.join("eval.csv"), csv)?;
    println!("chrF++ {:.4}", c.corpus);
    println!("BLEU {:.4}", b.corpus);
    if let Some(bp) = &a.baseline {
        let base = read_lines(bp)?;
        let cs = mtgrpo::metrics::chrf::corpus_stats(&hyps, &refs)?;
        let bs = mtgrpo::metrics::chrf::corpus_stats(&base, &refs)?;
        let sig = paired_bootstrap_by(
            hyps.len(),
            |i| mtgrpo::metrics::chrf::score_indices(&bs, i),
            |i| mtgrpo::metrics::chrf::score_indices(&cs, i),
            a.resamples,
            a.seed,
        )?;
        println!("delta {:+.4} p {:.4}", sig.delta, sig.p_value);
    }
    Ok(())
}

fn headroom(a: &HeadroomArgs) -> Result<()> {
    let cfg = load_config(&a.run.common)?;
    let (rows, exclude) = match (&a.fixture, &a.from_run) {
        (Some(f), _) if f == "table4" => fixture_rows(),
        (Some(f), _) => bail!(mtgrpo::error::Error::Config(format!("unknown fixture `{f}`"))),
        (None, Some(dir)) => {
            let (_, recs) = report::load_run(dir)?;
            (headroom_rows(&recs, "grpo"), cfg.headroom.exclude.clone())
        }
        (None, None) => {
            let lab = lab(&cfg, a.run.base.as_deref())?;
            create_dir(&a.run.common.out)?;
            let run = experiments::run_headroom(&lab, Some(&a.run.common.out))?;
            print!("{}", run.file("headroom.txt").unwrap_or(""));
            return Ok(());
        }
    };
    let rep = headroom_analysis(&rows, &exclude, cfg.stats.alpha)?;
    create_dir(&a.run.common.out)?;
    let text = headroom_text(&rep);
    fs::write(a.run.common.out.join("headroom.csv"), headroom_csv(&rows))?;
    fs::write(a.run.common.out.join("headroom.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn reward_diagnostic(a: &RewardArgs) -> Result<()> {
    let cfg = load_config(&a.common)?;
    let lab = Lab::untrained(&cfg)?;
    let ti = match &a.task {
        Some(id) => lab.task_index(id)?,
        None => 0,
    };
    let corpus = &lab.tasks[ti].corpus;
    let pairs: Vec<(String, String)> = corpus
        .devtest
        .iter()
        .filter_map(|p| p.target.clone().map(|t| (p.source.clone(), t)))
        .collect();
    let cline = build_quality_cline(&pairs, a.sentences.min(pairs.len()), cfg.seed, &DegradeConfig::default())?;
    let reward = lab.reward(ti)?;
    let scores = score_cline(&cline, &reward)?;
    create_dir(&a.common.out)?;
    write_cline_csv(&a.common.out.join("cline.csv"), &scores)?;
    let ranks: Vec<f64> = scores.iter().map(|s| s.rank as f64).collect();
    println!("{}: {} sentences x 6 levels", corpus.task.id, cline.items.len());
    if let Some(first) = scores.first() {
        for (k, name) in first.bundle.names.iter().enumerate() {
            let s: Vec<f64> = scores.iter().map(|c| c.bundle.scores[k]).collect();
            println!("  {name:<10} r = {:+.4}", pearson(&s, &ranks)?);
        }
    }
    println!("  {:<10} r = {:+.4}", "hybrid", discriminability_of(&scores)?);
    Ok(())
}

fn regenerate(a: &ReportArgs) -> Result<()> {
    let files = report::regenerate(&a.run)?;
    let out = a.out.clone().unwrap_or_else(|| a.run.clone());
    create_dir(&out)?;
    report::write_files(&out, &files)?;
    if let Some((_, s)) = files.iter().find(|(n, _)| n == "summary.txt") {
        print!("{s}");
    }
    Ok(())
}

fn dispatch(cmd: &Command) -> Result<()> {
    match cmd {
        Command::GenTask(c) => gen_task(c),
        Command::PretrainBase(c) => pretrain(c),
        Command::TrainGrpo(a) => train(a, false),
        Command::TrainSft(a) => train(a, true),
        Command::Eval(a) => eval(a),
        Command::AblateKl(a) => template(a, experiments::run_kl_ablation),
        Command::AblateDatasize(a) => template(a, experiments::run_datasize_ablation),
        Command::DecodingControl(a) => template(a, experiments::run_decoding_control),
        Command::Headroom(a) => headroom(a),
        Command::RewardDiagnostic(a) => reward_diagnostic(a),
        Command::ForgettingAudit(a) => template(a, experiments::run_forgetting),
        Command::ExperimentA(a) => template(a, experiments::run_experiment_a),
        Command::ExperimentB(a) => template(a, experiments::run_experiment_b),
        Command::Report(a) => regenerate(a),
    }
}

fn classify(e: &anyhow::Error) -> (u8, &'static str) {
    use mtgrpo::error::Error;
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::Config(_) | Error::GroupTooSmall(_) | Error::WeightSum(_) => (EXIT_CONFIG, "config"),
                Error::Io { .. } | Error::Checkpoint(_) => (EXIT_IO, "io"),
                _ => (EXIT_RUNTIME, "runtime"),
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return (EXIT_IO, "io");
        }
    }
    (EXIT_RUNTIME, "runtime")
}

fn fail(code: u8, kind: &str, message: &str) -> ExitCode {
    let line = serde_json::json!({ "error": kind, "exit_code": code, "message": message });
    eprintln!("{line}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                ErrorKind::InvalidSubcommand | ErrorKind::MissingSubcommand => {
                    fail(EXIT_USAGE, "usage", e.to_string().lines().next().unwrap_or(""))
                }
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    fail(EXIT_USAGE, "usage", "missing subcommand")
                }
                _ => fail(EXIT_CONFIG, "config", e.to_string().lines().next().unwrap_or("")),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Ok(n) = std::env::var("MTGRPO_THREADS") {
        let parsed = n.parse::<usize>().ok().filter(|&n| n > 0);
        let Some(n) = parsed else {
            return fail(EXIT_CONFIG, "config", &format!("MTGRPO_THREADS must be a positive integer, got `{n}`"));
        };
        if let Err(e) = mtgrpo::par::set_threads(n) {
            return fail(EXIT_RUNTIME, "runtime", &e);
        }
    }
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = classify(&e);
            let mut msg = String::new();
            for cause in e.chain() {
                let text = cause.to_string();
                if !msg.contains(&text) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&text);
                }
            }
            let msg = msg.replace('\n', " ");
            fail(code, kind, &msg)
        }
    }
}

