use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rwrs::empirical::{
    default_grid_s, default_grid_t, empirical_sheet, norming_value, occupation_stats,
};
use rwrs::harness::{run_experiment, ExperimentConfig, ExperimentKind};
use rwrs::inference::changepoint_test;
use rwrs::limits::{limit_constant, pillow_sup_quantiles, PillowQuantiles};
use rwrs::rng::derive_seed;
use rwrs::scenery::{evaluate_along, transform, QuantileTransform, Scenery};
use rwrs::walk::{sample_path, ModelSpec, WalkModel};
use rwrs::Error;

#[derive(Parser)]
#[command(
    name = "rwrs",
    version,
    about = "Random walks in random scenery: simulation, limits and tests"
)]
struct Cli {
    /// Worker threads for replicate loops (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum PathFormat {
    Csv,
    Bin,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a path and its scenery; write the path, marks, W_n sheet and
    /// occupation statistics into a directory.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        /// Walk seed.
        #[arg(long)]
        seed: u64,
        /// Scenery seed (default: derived from --seed).
        #[arg(long)]
        scenery_seed: Option<u64>,
        /// CSV quantile table `(x, F(x))` applied to the uniform marks.
        #[arg(long)]
        quantile_table: Option<PathBuf>,
        /// Comma-separated s grid (default 0, 0.05, ..., 1).
        #[arg(long, value_delimiter = ',')]
        grid_s: Option<Vec<f64>>,
        /// Comma-separated t grid (default 0, 0.05, ..., 1).
        #[arg(long, value_delimiter = ',')]
        grid_t: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long, value_enum, default_value = "csv")]
        path_format: PathFormat,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Limit constant c of a model as JSON.
    Constants {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulated quantiles of the Brownian pillow supremum as CSV.
    PillowQuantiles {
        /// Grid resolution.
        #[arg(long)]
        m: usize,
        /// Replicates.
        #[arg(long = "R")]
        r: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Change-point test on a single-column CSV of marks in walk order.
    Test {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        quantiles: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo experiment; exits 1 if a declared tolerance fails.
    Harness {
        #[arg(long)]
        experiment: Option<ExperimentKind>,
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// JSON report; a flat CSV is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read(path: &FsPath) -> Result<String, Error> {
    fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))
}

fn load_model(path: &FsPath) -> Result<WalkModel, Error> {
    ModelSpec::from_json(&read(path)?)?.build()
}

fn emit(out: Option<&FsPath>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn read_marks(path: &FsPath) -> Result<Vec<f64>, Error> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != 1 {
            return Err(Error::InvalidInput(
                "input must have a single column".into(),
            ));
        }
        out.push(
            rec[0]
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad value `{}`", &rec[0])))?,
        );
    }
    Ok(out)
}

enum Outcome {
    Ok,
    ToleranceViolated,
}

fn run(cli: Cli) -> Result<Outcome, Error> {
    match cli.command {
        Command::Simulate {
            model,
            n,
            seed,
            scenery_seed,
            quantile_table,
            grid_s,
            grid_t,
            format,
            path_format,
            out,
        } => {
            let model = load_model(&model)?;
            let qt = match &quantile_table {
                Some(p) => Some(QuantileTransform::from_csv(File::open(p)?)?),
                None => None,
            };
            fs::create_dir_all(&out)?;
            let path = sample_path(&model, n, seed)?;
            let scenery = Scenery::new(
                scenery_seed.unwrap_or_else(|| derive_seed(seed, 1)),
                model.dim(),
            );
            let mut marks = evaluate_along(&path, &scenery)?;
            if let Some(qt) = &qt {
                marks = transform(&marks, qt);
            }
            match path_format {
                PathFormat::Csv => {
                    path.write_csv(BufWriter::new(File::create(out.join("path.csv"))?))?
                }
                PathFormat::Bin => {
                    path.write_binary(BufWriter::new(File::create(out.join("path.bin"))?))?
                }
            }
            let mut wr = csv::Writer::from_path(out.join("marks.csv"))?;
            wr.write_record(["mark"])?;
            for m in &marks {
                wr.write_record([m.to_string()])?;
            }
            wr.flush()?;
            let gs = grid_s.unwrap_or_else(default_grid_s);
            let gt = grid_t.unwrap_or_else(default_grid_t);
            let sheet = empirical_sheet(&marks, &gs, &gt, norming_value(model.regime, n)?)?;
            match format {
                Format::Csv => {
                    sheet.write_csv(BufWriter::new(File::create(out.join("sheet.csv"))?))?
                }
                Format::Json => fs::write(
                    out.join("sheet.json"),
                    serde_json::to_string_pretty(&sheet)?,
                )?,
            }
            let occ = occupation_stats(&path, n)?.summary();
            fs::write(
                out.join("occupation.json"),
                serde_json::to_string_pretty(&occ)?,
            )?;
        }
        Command::Constants { model, out } => {
            let lc = limit_constant(&load_model(&model)?)?;
            emit(out.as_deref(), &(serde_json::to_string_pretty(&lc)? + "\n"))?;
        }
        Command::PillowQuantiles { m, r, seed, out } => {
            let q = pillow_sup_quantiles(m, r, seed)?;
            if let Some(rf) = q.refinement {
                eprintln!(
                    "refinement: m = {} on {} replicates moves the 95% quantile by {:+.2}%",
                    rf.m,
                    rf.replicates,
                    100.0 * rf.relative_change
                );
            }
            let mut buf = Vec::new();
            q.write_csv(&mut buf)?;
            emit(
                out.as_deref(),
                std::str::from_utf8(&buf).expect("csv is utf-8"),
            )?;
        }
        Command::Test {
            input,
            model,
            alpha,
            quantiles,
            out,
        } => {
            let model = load_model(&model)?;
            let q =
                PillowQuantiles::read_csv(File::open(&quantiles).map_err(|e| {
                    Error::MissingQuantiles(format!("{}: {e}", quantiles.display()))
                })?)?;
            let marks = read_marks(&input)?;
            let report = changepoint_test(&marks, &model, alpha, &q)?;
            emit(
                out.as_deref(),
                &(serde_json::to_string_pretty(&report)? + "\n"),
            )?;
        }
        Command::Harness {
            experiment,
            config,
            seed,
            out,
        } => {
            let mut cfg = ExperimentConfig::from_json(&read(&config)?)?;
            if let Some(k) = experiment {
                cfg.experiment = k;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let report = run_experiment(&cfg)?;
            let out = out.or_else(|| cfg.output.clone().map(PathBuf::from));
            let json = report.to_json()? + "\n";
            match &out {
                Some(p) => {
                    fs::write(p, &json)?;
                    report.write_csv(File::create(p.with_extension("csv"))?)?;
                }
                None => io::stdout().write_all(json.as_bytes())?,
            }
            for v in &report.violations {
                eprintln!("tolerance violated: {v}");
            }
            if !report.passed() {
                return Ok(Outcome::ToleranceViolated);
            }
        }
    }
    Ok(Outcome::Ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::ToleranceViolated) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
