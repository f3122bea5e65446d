//! Subcommand implementations.

use std::path::Path;

use anyhow::{ensure, Context, Result};
use semeq_core::agents::{gen_gaussian_mixture, Agent, AgentSpec, Dataset};
use semeq_core::anchors::{encode_support, prototypical_support, select_random_support, AnchorMethod};
use semeq_core::eval::{
    equalize, evaluate_pair, run_cell, sweep_anchor_counts, Equalizer, SweepCell, SweepGrid, SweepRow,
};
use semeq_core::inverse::InverseConfig;

use crate::args::{AnchorsArgs, EqualizeArgs, EvaluateArgs, GenDataArgs, InverseArgs, SweepArgs, TrainAgentArgs};
use crate::config::{inverse_config, replicate_seeds, RunConfig, RunPlan};
use crate::format::write_atomic;
use crate::report::{format_sig9, report_csv, scatter_csv};
use crate::seeds;
use crate::store::{
    load_agent, load_anchors, load_dataset, load_support, save_agent, save_anchors, save_dataset, save_support,
};

fn inverse_from(args: &InverseArgs, init_seed: u64) -> Result<InverseConfig> {
    Ok(InverseConfig {
        init_seed,
        ..inverse_config(args.max_iter, args.inverse_lr, args.early_stop)?
    })
}

pub fn gen_data(seed: u64, args: &GenDataArgs) -> Result<()> {
    ensure!(args.classes >= 2, "--classes must be at least 2");
    let total = args.per_class + args.test_per_class;
    let data = gen_gaussian_mixture(args.classes, args.dim, total, args.separation, seeds::data(seed))?;
    if args.test_per_class > 0 {
        let (train, test) = data.split_per_class(args.test_per_class)?;
        save_dataset(&args.out.join("test"), &test, "test", args.separation)?;
        save_dataset(&args.out, &train, "train", args.separation)?;
        println!(
            "wrote {} training and {} test samples to {}",
            train.len(),
            test.len(),
            args.out.display()
        );
    } else {
        save_dataset(&args.out, &data, "all", args.separation)?;
        println!("wrote {} samples to {}", data.len(), args.out.display());
    }
    Ok(())
}

pub fn train_agent(seed: u64, args: &TrainAgentArgs) -> Result<()> {
    let train = load_dataset(&args.data)?;
    let eval = match &args.test {
        Some(p) => load_dataset(p)?,
        None => train.clone(),
    };
    ensure!(
        eval.input_dim() == train.input_dim() && eval.class_count == train.class_count,
        "test and training datasets differ in shape"
    );
    ensure!(args.scale > 0.0 && args.scale.is_finite(), "--scale must be positive");
    ensure!(args.lr > 0.0 && args.lr.is_finite(), "--lr must be positive");
    let spec = AgentSpec {
        scale: args.scale,
        epochs: args.epochs,
        learning_rate: args.lr,
        ..AgentSpec::new(
            args.id.clone(),
            args.kind,
            args.latent_dim.unwrap_or(train.input_dim()),
            args.agent_seed.unwrap_or_else(|| seeds::agent(seed, &args.id)),
        )
    };
    let agent = Agent::train(&spec, &train)?;
    let acc = agent.accuracy(&eval)?;
    save_agent(&args.out, &agent, spec.epochs, spec.learning_rate)?;
    println!(
        "agent {} ({}) matched accuracy {}",
        agent.id,
        spec.kind,
        format_sig9(acc)
    );
    Ok(())
}

pub fn anchors(seed: u64, args: &AnchorsArgs) -> Result<()> {
    let agent = load_agent(&args.agent)?;
    let (support, fresh) = match (&args.support, &args.data) {
        (Some(dir), _) => (load_support(dir)?, false),
        (None, Some(dir)) => {
            let data = load_dataset(dir)?;
            let count = args.count.context("--count is required with --data")?;
            ensure!(
                count <= data.len(),
                "--count {count} exceeds the {} samples of {}",
                data.len(),
                dir.display()
            );
            let support_seed = seeds::support(seed);
            let support = match args.method {
                AnchorMethod::Random => select_random_support(&data, count, support_seed)?,
                AnchorMethod::Prototypical => {
                    prototypical_support(&agent.encoder, &agent.id, &data, count, args.support_size, support_seed)?
                }
            };
            (support, true)
        }
        (None, None) => anyhow::bail!("either --data or --support is required"),
    };
    for w in &support.warnings {
        eprintln!("warning: {w}");
    }
    let anchors = encode_support(&agent.encoder, &support)?;
    if fresh {
        save_support(&args.out, &support)?;
    }
    save_anchors(&args.out, &agent.id, &anchors, &support)?;
    println!(
        "wrote {} {} anchors of agent {} to {}",
        anchors.len(),
        support.method,
        agent.id,
        args.out.display()
    );
    Ok(())
}

fn parse_latent(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .with_context(|| format!("invalid latent entry `{v}`"))
        })
        .collect()
}

pub fn equalize_one(seed: u64, args: &EqualizeArgs) -> Result<()> {
    let tx = load_anchors(&args.tx_anchors)?;
    let rx = load_anchors(&args.rx_anchors)?;
    let z = parse_latent(&args.latent)?;
    ensure!(
        z.len() == tx.anchors.latent_dim(),
        "latent has {} entries, transmitter anchors live in dimension {}",
        z.len(),
        tx.anchors.latent_dim()
    );
    let receiver = args.rx.as_deref().map(load_agent).transpose()?;
    if let Some(agent) = &receiver {
        ensure!(
            agent.encoder.fingerprint() == rx.manifest.encoder_fingerprint,
            "receiver anchors were not encoded by agent {}",
            agent.id
        );
    }
    let eq = Equalizer::new(
        tx.anchors,
        rx.anchors,
        args.similarity,
        args.inverse,
        inverse_from(&args.inverse_args, seeds::inverse(seed))?,
    )?;
    let z_hat = equalize(&z, &eq)?;
    println!("{}", z_hat.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
    if let Some(agent) = receiver {
        println!("decision {}", agent.decoder.decode(&z_hat)?);
    }
    Ok(())
}

fn write_reports(tx: &Agent, rx: &Agent, rows: &[SweepRow], report: &Path, scatter: Option<&Path>) -> Result<()> {
    let report_bytes = report_csv(&tx.id, &rx.id, rows)?;
    let scatter_bytes = scatter.map(|_| scatter_csv(&tx.id, &rx.id, rows)).transpose()?;
    if let (Some(path), Some(bytes)) = (scatter, scatter_bytes) {
        write_atomic(path, &bytes)?;
    }
    write_atomic(report, &report_bytes)
}

pub fn evaluate(seed: u64, args: &EvaluateArgs) -> Result<()> {
    let tx = load_agent(&args.tx)?;
    let rx = load_agent(&args.rx)?;
    let test = load_dataset(&args.test)?;
    let row = match (&args.tx_anchors, &args.rx_anchors, &args.data) {
        (Some(ta), Some(ra), _) => {
            let t = load_anchors(ta)?;
            let r = load_anchors(ra)?;
            let method: AnchorMethod = t.manifest.method.parse()?;
            let cell = SweepCell {
                similarity: args.similarity,
                inverse_method: args.inverse,
                anchor_method: method,
                anchor_count: t.anchors.len(),
                seed,
            };
            let eq = Equalizer::new(
                t.anchors,
                r.anchors,
                args.similarity,
                args.inverse,
                inverse_from(&args.inverse_args, seeds::inverse(seed))?,
            )?;
            SweepRow {
                cell,
                report: evaluate_pair(&tx, &rx, &eq, &test)?,
            }
        }
        (_, _, Some(dir)) => {
            let pool = load_dataset(dir)?;
            let count = args.count.context("--count is required with --data")?;
            ensure!(
                count <= pool.len(),
                "--count {count} exceeds the {} samples of the pool",
                pool.len()
            );
            let cell = SweepCell {
                similarity: args.similarity,
                inverse_method: args.inverse,
                anchor_method: args.method,
                anchor_count: count,
                seed,
            };
            let inverse = inverse_from(&args.inverse_args, 0)?;
            SweepRow {
                cell,
                report: run_cell(&tx, &rx, &pool, &test, &cell, args.support_size, &inverse)?,
            }
        }
        _ => anyhow::bail!("pass --tx-anchors and --rx-anchors, or --data and --count"),
    };
    let r = &row.report;
    write_reports(&tx, &rx, std::slice::from_ref(&row), &args.out, args.scatter.as_deref())?;
    println!(
        "matched {} equalized {} agreement {} mean g_se {}",
        format_sig9(r.matched_accuracy),
        format_sig9(r.cross_accuracy_equalized),
        format_sig9(r.decoder_agreement),
        format_sig9(r.mean_reconstruction_error)
    );
    Ok(())
}

fn run_sweep(tx: &Agent, rx: &Agent, pool: &Dataset, test: &Dataset, grid: &SweepGrid, out: &Path) -> Result<()> {
    if let Some(&c) = grid.counts.iter().find(|&&c| c > pool.len()) {
        anyhow::bail!("anchor count {c} exceeds the {} samples of the pool", pool.len());
    }
    let rows = sweep_anchor_counts(tx, rx, pool, test, grid)?;
    write_reports(tx, rx, &rows, &out.join("sweep.csv"), Some(&out.join("scatter.csv")))?;
    println!("wrote {} rows to {}", rows.len(), out.join("sweep.csv").display());
    Ok(())
}

fn run_plan(plan: &RunPlan) -> Result<()> {
    let d = &plan.dataset;
    let data = gen_gaussian_mixture(
        d.classes,
        d.dim,
        d.per_class + d.test_per_class,
        d.separation,
        seeds::data(plan.seed),
    )?;
    let (train, test) = data.split_per_class(d.test_per_class)?;
    let tx = Agent::train(&plan.transmitter, &train)?;
    let rx = Agent::train(&plan.receiver, &train)?;
    println!(
        "agents {} and {} matched accuracy {} and {}",
        tx.id,
        rx.id,
        format_sig9(tx.accuracy(&test)?),
        format_sig9(rx.accuracy(&test)?)
    );
    run_sweep(&tx, &rx, &train, &test, &plan.grid, &plan.output_dir)
}

pub fn sweep(seed: Option<u64>, args: &SweepArgs) -> Result<()> {
    if let Some(path) = &args.config {
        let mut config = RunConfig::from_file(path)?;
        if let Some(s) = seed {
            config.seed = s;
        }
        return run_plan(&config.resolve(args.out.as_deref())?);
    }
    let seed = seed.unwrap_or(0);
    let grid = SweepGrid {
        counts: args.counts.clone(),
        anchor_methods: args.methods.clone(),
        similarities: args.similarities.clone(),
        inverse_methods: args.inverse_methods.clone(),
        seeds: replicate_seeds(seed, args.seeds.as_deref(), args.repeats)?,
        support_size: args.support_size,
        inverse: inverse_from(&args.inverse_args, 0)?,
    };
    grid.validate()?;
    let (tx, rx, pool, test, out) = match (&args.tx, &args.rx, &args.data, &args.test, &args.out) {
        (Some(tx), Some(rx), Some(data), Some(test), Some(out)) => (
            load_agent(tx)?,
            load_agent(rx)?,
            load_dataset(data)?,
            load_dataset(test)?,
            out,
        ),
        _ => anyhow::bail!("pass --config, or all of --tx, --rx, --data, --test and --out"),
    };
    run_sweep(&tx, &rx, &pool, &test, &grid, out)
}
