//! `morphlab`: run the transfer experiments and write their curves.

mod config;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Parser;
use morphlab::curve::Split;
use morphlab::srn::gradient_check_suite;
use morphlab::xfer::{
    compare_conditions, conditions, emit_results, manifest, run_conditions, ConditionSpec,
    ExperimentConfig,
};

use config::{parse_experiments, parse_seeds, FileConfig};

const GRADIENT_NETS: usize = 25;
const GRADIENT_TOLERANCE: f64 = 1e-4;

#[derive(Parser, Debug)]
#[command(
    name = "morphlab",
    version,
    about = "Transfer experiments with simple recurrent networks"
)]
struct Args {
    /// Experiment(s) to run: a number 1..5, a comma list, or `all`.
    #[arg(long)]
    experiment: Option<String>,
    /// Run only the condition with this name (`suffix1->suffix1`) or table label (`f`).
    #[arg(long)]
    condition: Option<String>,
    /// Seeds: a count (`10` = 0..10), a range (`3..7`) or a list (`1,4,9`).
    #[arg(long)]
    seeds: Option<String>,
    /// Phase-1 epoch cap.
    #[arg(long)]
    epochs1: Option<usize>,
    /// Phase-2 epoch budget.
    #[arg(long)]
    epochs2: Option<usize>,
    /// Output directory.
    #[arg(long, env = "MORPHLAB_OUT")]
    out: Option<PathBuf>,
    /// `key = value` file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long)]
    jobs: Option<usize>,
    /// Finite-difference check of the backpropagation code on random networks.
    #[arg(long)]
    check_gradients: bool,
}

fn check_gradients() -> Result<bool> {
    let start = Instant::now();
    let r = gradient_check_suite(GRADIENT_NETS, 0)?;
    println!(
        "gradient check: {GRADIENT_NETS} random networks, {} parameters, max relative error {:.3e}, \
         max masked gradient {:.1e} ({:.2}s)",
        r.checked,
        r.max_relative,
        r.max_masked,
        start.elapsed().as_secs_f64()
    );
    Ok(r.max_relative < GRADIENT_TOLERANCE && r.max_masked == 0.0)
}

fn select(experiment: u8, filter: Option<&str>) -> Result<Vec<ConditionSpec>> {
    let all = conditions(experiment)?;
    Ok(match filter {
        None => all,
        Some(f) => all
            .into_iter()
            .filter(|c| c.name == f || c.label == f)
            .collect(),
    })
}

fn run(args: Args) -> Result<bool> {
    let file = match &args.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let mut ok = true;
    if args.check_gradients {
        ok = check_gradients()?;
        if args.experiment.is_none() && file.get("experiment").is_none() {
            return Ok(ok);
        }
    }

    let experiments = parse_experiments(
        args.experiment
            .as_deref()
            .or(file.get("experiment"))
            .unwrap_or("all"),
    )?;
    let seeds = parse_seeds(args.seeds.as_deref().or(file.get("seeds")).unwrap_or("10"))?;
    let jobs = match args.jobs.or(file
        .get("jobs")
        .map(str::parse)
        .transpose()
        .context("bad `jobs` value")?)
    {
        Some(0) => bail!("--jobs must be at least 1"),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let out = args
        .out
        .clone()
        .or(file.out())
        .unwrap_or_else(|| PathBuf::from("results"));
    let filter = args.condition.as_deref().or(file.get("condition"));

    let mut plans = Vec::new();
    for &e in &experiments {
        let conds = select(e, filter)?;
        let mut cfg = ExperimentConfig::for_experiment(e);
        file.apply(&mut cfg)?;
        if let Some(n) = args.epochs1 {
            cfg.epochs1 = n;
        }
        if let Some(n) = args.epochs2 {
            cfg.epochs2 = n;
        }
        cfg.validate()?;
        plans.push((e, conds, cfg));
    }
    if plans.iter().all(|(_, c, _)| c.is_empty()) {
        bail!("no condition matches `{}`", filter.unwrap_or(""));
    }

    let mut records = Vec::new();
    let mut comparisons = Vec::new();
    let mut configs = BTreeMap::new();
    for (e, conds, cfg) in plans {
        if conds.is_empty() {
            continue;
        }
        let start = Instant::now();
        let recs = run_conditions(&conds, &seeds, &cfg, jobs)
            .with_context(|| format!("experiment {e}"))?;
        println!(
            "experiment {e}: {} conditions x {} seeds in {:.1}s",
            conds.len(),
            seeds.len(),
            start.elapsed().as_secs_f64()
        );
        if conds.len() >= 2 {
            let cmp = compare_conditions(
                &recs,
                &cfg.checkpoint_epochs(),
                &conds[0].phase2_category(),
                Split::Test,
            )?;
            for cp in &cmp.checkpoints {
                let means: Vec<String> = cp
                    .conditions
                    .iter()
                    .map(|s| format!("{}={:.3}±{:.3}", s.label, s.mean, s.stderr))
                    .collect();
                println!("  epoch {:>3}: {}", cp.epoch, means.join("  "));
            }
            for o in &cmp.orderings {
                println!(
                    "  epoch {:>3}: {} {} (sign test p = {:.4})",
                    o.epoch,
                    o.chain.join(" > "),
                    if o.holds { "holds" } else { "does not hold" },
                    o.p_top_bottom
                );
            }
            comparisons.push(cmp);
        }
        records.extend(recs);
        configs.insert(e, cfg);
    }

    emit_results(&records, &comparisons, &out)?;
    let experiments: Vec<u8> = configs.keys().copied().collect();
    let mut text = manifest(&experiments, &seeds, &configs);
    if let Some(f) = filter {
        text.push_str(&format!("condition={f}\n"));
    }
    let path = out.join("manifest.txt");
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", out.display());
    Ok(ok)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
