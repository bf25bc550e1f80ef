mod args;

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Parser;
use specexec_core::experiment::{emit_report, read_rows, run_experiment, summary_table, ExperimentSpec};
use specexec_core::strategies::{EsamrModels, NnModels};
use specexec_core::{run_simulation, HistoryStore, Phase, Strategy, StrategyKind};

use args::{Cli, Command, ExperimentArgs, ReportArgs, SimulateArgs, TrainArgs};

const NN_DIR: &str = "nn";
const ESAMR_FILE: &str = "esamr.json";

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train(a),
        Command::Experiment(a) => experiment(a),
        Command::Report(a) => report(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn load_models(mut strategy: Strategy, dir: &Path) -> Result<Strategy> {
    let nn = dir.join(NN_DIR);
    if strategy.kind() == StrategyKind::Nn && nn.exists() {
        strategy = strategy.with_nn_models(NnModels::load(&nn).with_context(|| format!("loading {}", nn.display()))?);
    }
    let esamr = dir.join(ESAMR_FILE);
    if strategy.kind() == StrategyKind::Esamr && esamr.exists() {
        let models: EsamrModels = serde_json::from_str(&fs::read_to_string(&esamr)?)
            .with_context(|| format!("parsing {}", esamr.display()))?;
        strategy = strategy.with_esamr_models(models);
    }
    Ok(strategy)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut config = a.cluster.build()?;
    if let Some(n) = a.nodes {
        config.workers = n;
    }
    if let Some(b) = a.input_size {
        config.input_bytes = b;
    }
    config.record_trace = a.trace;
    let params = a.params.build(a.cluster.preset);

    let mut history = match &a.history {
        Some(path) => HistoryStore::open(path).with_context(|| format!("opening {}", path.display()))?,
        None => HistoryStore::new(),
    };
    history.set_per_node_cap(a.history_cap);
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
    }

    for rep in 0..a.reps.max(1) {
        config.seed = a.seed + rep as u64;
        let mut strategy = Strategy::new(a.strategy, params.clone().with_seed(config.seed))?;
        if let Some(dir) = &a.models {
            strategy = load_models(strategy, dir)?;
        }
        let r = run_simulation(&config, &mut strategy, &mut history)?;
        println!(
            "{}: strategy {}, makespan {:.3} s, {} map + {} reduce tasks, {} backups, {} dropped, cancelled work {:.3} s",
            r.job_id,
            a.strategy,
            r.makespan,
            r.map_tasks,
            r.reduce_tasks,
            r.decisions.len(),
            r.dropped,
            r.cancelled_work
        );
        if let Some(dir) = &a.out {
            let path = dir.join(format!("job-{}.json", r.job_id.0));
            fs::write(&path, serde_json::to_string_pretty(&r)? + "\n")?;
        }
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let history = HistoryStore::load(&a.history).with_context(|| format!("loading {}", a.history.display()))?;
    if history.is_empty() {
        bail!("{} holds no records", a.history.display());
    }
    let params = a.params.build(None).with_seed(a.seed);
    params.validate()?;
    fs::create_dir_all(&a.out)?;

    let nn = NnModels::train(&history, &params.nn.clone().with_seed(a.seed))?;
    nn.save(&a.out.join(NN_DIR))?;
    let esamr = EsamrModels::fit(&history, params.k, a.seed, params.kmeans_max_iter)?;
    fs::write(a.out.join(ESAMR_FILE), serde_json::to_string_pretty(&esamr)? + "\n")?;

    for (id, m) in nn.nodes() {
        println!(
            "{id}: {} map / {} reduce records, map model {}, reduce model {}",
            history.records_for_node(id, Phase::Map).len(),
            history.records_for_node(id, Phase::Reduce).len(),
            if m.map.is_some() { "trained" } else { "none" },
            if m.reduce.is_some() { "trained" } else { "none" },
        );
    }
    for phase in Phase::ALL {
        if let Some(k) = esamr.for_phase(phase) {
            println!("{phase} weight clusters: {}", k.centroids().len());
        }
    }
    println!("models written to {}", a.out.display());
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let mut spec = ExperimentSpec::new(a.kind);
    spec.cluster = a.cluster.build()?;
    spec.params = a.params.build(a.cluster.preset);
    if !a.strategy.is_empty() {
        spec.strategies = a.strategy;
    }
    if !a.estimators.is_empty() {
        spec.estimators = a.estimators;
    }
    if !a.nodes.is_empty() {
        spec.nodes = a.nodes;
    } else if a.cluster.preset.is_some() || a.cluster.config.is_some() {
        spec.nodes = vec![spec.cluster.workers];
    }
    if !a.input_size.is_empty() {
        spec.input_sizes = a.input_size;
    } else if a.cluster.preset.is_some() || a.cluster.config.is_some() {
        spec.input_sizes = vec![spec.cluster.input_bytes];
    }
    if a.reps == 0 {
        bail!("--reps must be at least 1");
    }
    spec.seeds = (0..a.reps as u64).map(|i| a.seed + i).collect();
    spec.warmup_jobs = a.warmup;
    spec.tte_sample = a.tte_sample;

    let out = run_experiment(&spec)?;
    out.write(&a.out)?;
    print!("{}", summary_table(&out.rows));
    println!(
        "wrote {} rows to {}",
        out.rows.len(),
        a.out.join("metrics.csv").display()
    );
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let csv = if a.input.is_dir() {
        a.input.join("metrics.csv")
    } else {
        a.input.clone()
    };
    let rows = read_rows(&csv).with_context(|| format!("reading {}", csv.display()))?;
    match a.out {
        Some(dir) => {
            emit_report(&rows, &dir)?;
            println!("wrote {} rows to {}", rows.len(), dir.display());
        }
        None => print!("{}", summary_table(&rows)),
    }
    Ok(())
}
