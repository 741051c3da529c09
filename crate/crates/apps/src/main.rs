use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use gridforge::advect::{self, AdvectConfig};
use gridforge::bench::{self, ExchangeBenchConfig};
use gridforge::gol::{self, GolConfig, Pattern};
use gridforge::StepStats;
use gridforge_core::{Batching, PartitionMethod};

#[derive(Parser)]
#[command(name = "gridforge", version, about = "Distributed adaptive grid demos and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Conway's Game of Life on a non-periodic board.
    Gol(GolArgs),
    /// Advection of a density bump with runtime refinement.
    Advect(AdvectArgs),
    /// Benchmarks.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Args)]
struct GolArgs {
    #[arg(long, default_value_t = 10)]
    width: u64,
    #[arg(long, default_value_t = 10)]
    height: u64,
    #[arg(long, default_value_t = 100)]
    steps: u64,
    #[arg(long, default_value_t = 1)]
    ranks: usize,
    /// none, block, rcb, hilbert or random:<seed>
    #[arg(long, default_value = "block")]
    partition: PartitionMethod,
    /// glider, blinker, glider+blinker or random:<seed>
    #[arg(long, default_value = "glider+blinker")]
    pattern: Pattern,
    /// Print the final board.
    #[arg(long)]
    show: bool,
}

#[derive(Args)]
struct AdvectArgs {
    /// Level-0 cells per dimension.
    #[arg(long, default_value_t = 16)]
    base: u64,
    /// Maximum refinement level.
    #[arg(long, default_value_t = 2)]
    levels: u32,
    #[arg(long, default_value_t = 0.4)]
    cfl: f64,
    #[arg(long, default_value_t = 100)]
    steps: u64,
    /// Adapt the grid every this many steps, 0 for never.
    #[arg(long, default_value_t = 1)]
    adapt_every: u64,
    /// Rebalance when the local cell fraction reaches this value.
    #[arg(long)]
    rebalance_fc: Option<f64>,
    #[arg(long, default_value_t = 1)]
    ranks: usize,
    #[arg(long, default_value = "hilbert")]
    partition: PartitionMethod,
    /// Velocity as vx,vy,vz.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [1.0, 0.5, 0.25])]
    velocity: Vec<f64>,
    /// Write a dump every this many steps into --dump-dir.
    #[arg(long, default_value_t = 0)]
    dump_every: u64,
    #[arg(long)]
    dump_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Uniform refinement from base³ to target³ cells.
    AmrSpeed {
        #[arg(long, default_value_t = 8)]
        base: u64,
        #[arg(long, default_value_t = 128)]
        target: u64,
        #[arg(long, default_value_t = 1)]
        ranks: usize,
    },
    /// Repeated updates of remote neighbor copies.
    Exchange {
        #[arg(long, default_value_t = 32768)]
        cells: u64,
        #[arg(long, default_value_t = 64)]
        bytes: usize,
        #[arg(long, default_value_t = 4)]
        ranks: usize,
        /// per-rank or per-cell
        #[arg(long, default_value = "per-rank")]
        batching: Batching,
        #[arg(long, default_value_t = 20)]
        rounds: u32,
    },
}

fn print_stats(s: &StepStats) {
    println!("{s}");
}

fn run_gol(args: GolArgs) -> Result<()> {
    let config = GolConfig {
        width: args.width,
        height: args.height,
        steps: args.steps,
        ranks: args.ranks,
        partition: args.partition,
        pattern: args.pattern,
        schedule_seed: None,
    };
    let outcome = gol::run(&config, Some(&print_stats))?;
    if args.show {
        for row in outcome.board.chunks(args.width as usize) {
            let line: String = row.iter().map(|&v| if v == 1 { '#' } else { '.' }).collect();
            println!("{line}");
        }
    }
    Ok(())
}

fn run_advect(args: AdvectArgs) -> Result<()> {
    let dump_every = match (args.dump_every, &args.dump_dir) {
        (0, Some(_)) => args.steps.max(1),
        (k, _) => k,
    };
    let config = AdvectConfig {
        base: args.base,
        levels: args.levels,
        cfl: args.cfl,
        steps: args.steps,
        adapt_every: args.adapt_every,
        rebalance_fc: args.rebalance_fc,
        velocity: [args.velocity[0], args.velocity[1], args.velocity[2]],
        ranks: args.ranks,
        partition: args.partition,
        dump_every,
        dump_dir: args.dump_dir,
        ..AdvectConfig::default()
    };
    let out = advect::run(&config, Some(&print_stats))?;
    let drift = (out.final_mass - out.initial_mass) / out.initial_mass;
    println!("mass_drift={drift:e} rebalances={}", out.rebalances.len());
    Ok(())
}

fn run_bench(command: BenchCommand) -> Result<()> {
    match command {
        BenchCommand::AmrSpeed { base, target, ranks } => {
            let r = bench::amr_speed(base, target, ranks)?;
            println!(
                "created={} final_cells={} seconds={:.3} cells_per_second={:.0}",
                r.created,
                r.final_cells,
                r.elapsed.as_secs_f64(),
                r.cells_per_second()
            );
        }
        BenchCommand::Exchange {
            cells,
            bytes,
            ranks,
            batching,
            rounds,
        } => {
            let config = ExchangeBenchConfig {
                cells,
                bytes,
                ranks,
                batching,
                rounds,
            };
            let r = bench::exchange_bench(&config).context("exchange benchmark")?;
            println!(
                "cells={} messages_per_round={} bytes_per_round={} seconds_per_round={:.6}",
                r.cells,
                r.messages_per_round,
                r.bytes_per_round,
                r.seconds_per_round()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gol(args) => run_gol(args),
        Command::Advect(args) => run_advect(args),
        Command::Bench(command) => run_bench(command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
