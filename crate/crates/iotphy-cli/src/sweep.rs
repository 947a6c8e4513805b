//! SNR sweep harnesses: single-stream SER/BER curves and the
//! concurrent orthogonal-slope reception demo. Sweeps parallelize across
//! SNR points; each point derives its own seed so results merge
//! deterministically regardless of completion order.

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Deserialize;

use iotphy::ble::GfskConfig;
use iotphy::lora::harness::{concurrent_symbol_errors, gfsk_bit_errors, lora_symbol_errors};
use iotphy::lora::LoraParams;

use crate::load_json;

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SweepParams {
    Lora(LoraParams),
    Gfsk(GfskConfig),
}

#[derive(Debug, Deserialize)]
struct SweepSpec {
    snr_start_db: f64,
    snr_stop_db: f64,
    snr_step_db: f64,
    trials_per_point: usize,
    seed: u64,
    params: SweepParams,
}

fn snr_points(spec: &SweepSpec) -> Vec<f64> {
    let mut points = Vec::new();
    let mut snr = spec.snr_start_db;
    while snr <= spec.snr_stop_db + 1e-9 {
        points.push(snr);
        snr += spec.snr_step_db;
    }
    points
}

pub fn cmd_ser_sweep(spec_arg: &str, out: &PathBuf, threads: Option<usize>) -> Result<()> {
    let spec: SweepSpec = load_json(spec_arg, "sweep spec")?;
    if spec.snr_step_db <= 0.0 {
        bail!("snr_step_db must be positive");
    }
    if spec.trials_per_point < 100 {
        bail!("trials_per_point must be at least 100");
    }
    if let SweepParams::Lora(p) = &spec.params {
        p.validate()?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .context("building worker pool")?;
    let points = snr_points(&spec);
    let rows: Vec<(f64, usize)> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(i, &snr)| {
                let point_seed = spec.seed.wrapping_add(i as u64);
                let errors = match &spec.params {
                    SweepParams::Lora(p) => {
                        lora_symbol_errors(p, snr, spec.trials_per_point, point_seed)
                    }
                    SweepParams::Gfsk(c) => {
                        gfsk_bit_errors(c, snr, spec.trials_per_point, point_seed)
                    }
                };
                (snr, errors)
            })
            .collect()
    });

    let mut file = std::fs::File::create(out)?;
    writeln!(file, "snr_db,symbol_errors,trials,ser")?;
    for (snr, errors) in rows {
        writeln!(
            file,
            "{snr},{errors},{},{}",
            spec.trials_per_point,
            errors as f64 / spec.trials_per_point as f64
        )?;
    }
    println!("wrote {} points to {}", points.len(), out.display());
    Ok(())
}

pub fn cmd_concurrent_demo(
    configs_arg: &str,
    snr_a: f64,
    snr_b: f64,
    out: &PathBuf,
    trials: usize,
    seed: u64,
) -> Result<()> {
    let configs: Vec<LoraParams> = load_json(configs_arg, "configurations")?;
    if configs.len() != 2 {
        bail!("expected exactly 2 configurations, got {}", configs.len());
    }
    for c in &configs {
        c.validate()?;
    }
    if configs[0].slope().approx_eq(&configs[1].slope()) {
        eprintln!("warning: identical chirp slopes, streams are not orthogonal");
    }
    let results =
        concurrent_symbol_errors(&configs[0], &configs[1], snr_a, snr_b, trials, seed)
            .context("running concurrent reception")?;

    let mut file = std::fs::File::create(out)?;
    writeln!(file, "stream,snr_db,symbol_errors,trials,ser")?;
    for (i, ((errors, n), snr)) in results.iter().zip([snr_a, snr_b]).enumerate() {
        writeln!(
            file,
            "{i},{snr},{errors},{n},{}",
            *errors as f64 / *n as f64
        )?;
        println!(
            "stream {i}: ser {:.5} ({errors}/{n})",
            *errors as f64 / *n as f64
        );
    }
    Ok(())
}
