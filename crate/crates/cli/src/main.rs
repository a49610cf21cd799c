//! `crossroads`: generate synthetic intersections, estimate lane-level
//! models from measurements, benchmark against ground truth, render SVG.

mod benchmark;
mod config;
mod estimate;
mod generate;
mod render;

use anyhow::Result;
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "crossroads", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write seeded synthetic intersections with their measurements.
    Generate(generate::GenerateArgs),
    /// Estimate topology and lane courses for one measurement file.
    Estimate(estimate::EstimateArgs),
    /// Estimate and score every intersection in a directory.
    Benchmark(benchmark::BenchmarkArgs),
    /// Draw measurements, estimates and ground truth as SVG.
    Render(render::RenderArgs),
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate(a) => generate::run(&a),
        Command::Estimate(a) => estimate::run(&a),
        Command::Benchmark(a) => benchmark::run(&a),
        Command::Render(a) => render::run(&a),
    }
}
