//! Command-line front end for the channel-charting toolkit.
//!
//! Subcommands:
//!   generate  --config F --out DIR                 scenario + CSI artifacts
//!   featurize --csi FILE --out FILE [--scaling M]  CSI -> features.csv
//!   train     --config F --recipe R --out DIR      train one recipe
//!   evaluate  --chart F --positions F [--k LIST] [--features F] --out F
//!   run       --config F --out DIR                 full pipeline
//!   print-config                                   default config to stdout
//!
//! Exits 0 on success, 2 on usage errors, 1 on runtime errors (with a
//! stage-tagged message on stderr).

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cckit::channel::{add_noise, read_csi_binary, read_csi_csv, synthesize_csi, write_csi_binary, write_csi_csv};
use cckit::constraints::write_constraints_csv;
use cckit::error::Error;
use cckit::features::{extract_features, write_features_csv, ScalingMode};
use cckit::mat::Mat;
use cckit::metrics::{default_k_list, MetricsReport, ReferenceSpace};
use cckit::nn::write_checkpoint;
use cckit::pipeline::{
    build_recipe_constraints, export_chart, read_chart_csv, run_experiment, train_constrained_ae,
    ExperimentConfig, Recipe,
};
use cckit::scenario::{generate_placement, read_positions_csv, write_positions_csv};

const USAGE: &str = "usage: cckit <command> [options]

commands:
  generate   --config FILE --out DIR
  featurize  --csi FILE --out FILE [--scaling unit-norm|standardize]
  train      --config FILE --recipe plain|fad|fad_mrd --out DIR
  evaluate   --chart FILE --positions FILE [--k K1,K2,...]
             [--features FILE] --out FILE
  run        --config FILE --out DIR
  print-config
";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(command) = args.first() else {
        eprintln!("{USAGE}");
        return ExitCode::from(2);
    };
    let opts = match parse_options(&args[1..]) {
        Ok(o) => o,
        Err(msg) => {
            eprintln!("error: {msg}\n\n{USAGE}");
            return ExitCode::from(2);
        }
    };
    let result = match command.as_str() {
        "generate" => cmd_generate(&opts),
        "featurize" => cmd_featurize(&opts),
        "train" => cmd_train(&opts),
        "evaluate" => cmd_evaluate(&opts),
        "run" => cmd_run(&opts),
        "print-config" => {
            print!("{}", ExperimentConfig::default().to_text());
            Ok(())
        }
        other => {
            eprintln!("error: unknown command '{other}'\n\n{USAGE}");
            return ExitCode::from(2);
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\n{USAGE}");
            ExitCode::from(2)
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

type CliResult = Result<(), CliError>;

fn parse_options(args: &[String]) -> Result<HashMap<String, String>, String> {
    let mut opts = HashMap::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let Some(key) = arg.strip_prefix("--") else {
            return Err(format!("unexpected argument '{arg}'"));
        };
        let Some(value) = it.next() else {
            return Err(format!("option --{key} needs a value"));
        };
        if opts.insert(key.to_string(), value.clone()).is_some() {
            return Err(format!("option --{key} given twice"));
        }
    }
    Ok(opts)
}

fn required<'a>(opts: &'a HashMap<String, String>, key: &str) -> Result<&'a str, CliError> {
    opts.get(key)
        .map(|s| s.as_str())
        .ok_or_else(|| CliError::Usage(format!("missing --{key}")))
}

fn load_config(opts: &HashMap<String, String>) -> Result<ExperimentConfig, CliError> {
    let path = required(opts, "config")?;
    let cfg = ExperimentConfig::from_file(Path::new(path))?;
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(opts: &HashMap<String, String>) -> Result<PathBuf, CliError> {
    let dir = PathBuf::from(required(opts, "out")?);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Run(Error::io(&dir, e)))?;
    Ok(dir)
}

fn cmd_generate(opts: &HashMap<String, String>) -> CliResult {
    let config = load_config(opts)?;
    let dir = out_dir(opts)?;
    let placement = generate_placement(&config.scenario)?;
    write_positions_csv(&placement, &dir.join("positions.csv"))?;
    let clean = synthesize_csi(
        &placement,
        &config.scenario.bs_position,
        &config.geometry,
        &config.channel,
    )?;
    let csi = add_noise(&clean, config.channel.snr_db, config.channel.seed);
    write_csi_binary(&csi, &dir.join("csi.bin"))?;
    write_csi_csv(&csi, &dir.join("csi.csv"))?;
    println!("wrote positions.csv, csi.bin, csi.csv to {}", dir.display());
    Ok(())
}

fn cmd_featurize(opts: &HashMap<String, String>) -> CliResult {
    let csi_path = Path::new(required(opts, "csi")?);
    let out = PathBuf::from(required(opts, "out")?);
    let scaling = match opts.get("scaling") {
        Some(s) => ScalingMode::parse(s)?,
        None => ScalingMode::UnitNorm,
    };
    let csi = if csi_path.extension().is_some_and(|e| e == "csv") {
        read_csi_csv(csi_path)?
    } else {
        read_csi_binary(csi_path)?
    };
    let features = extract_features(&csi, scaling)?;
    write_features_csv(&features, &out)?;
    println!("wrote {} ({} x {})", out.display(), features.num_points(), features.dim());
    Ok(())
}

fn cmd_train(opts: &HashMap<String, String>) -> CliResult {
    let config = load_config(opts)?;
    let recipe = Recipe::parse(required(opts, "recipe")?)?;
    let dir = out_dir(opts)?;

    let placement = generate_placement(&config.scenario)?;
    let clean = synthesize_csi(
        &placement,
        &config.scenario.bs_position,
        &config.geometry,
        &config.channel,
    )?;
    let csi = add_noise(&clean, config.channel.snr_db, config.channel.seed);
    let features = extract_features(&csi, config.scaling)?;
    let set = build_recipe_constraints(recipe, &placement, &config)?;
    write_constraints_csv(&set, &dir.join("constraints.csv"))?;
    let (net, embedding, history) = train_constrained_ae(
        &features,
        &set,
        &config.resolved_net_config(),
        &config.train,
        config.hash(),
    )?;
    write_checkpoint(&net, &dir.join("network.ccnn"))?;
    history.write_csv(&dir.join("history.csv"))?;
    export_chart(&embedding, &placement, &dir.join("chart.csv"))?;
    println!(
        "trained {} for {} epochs: final recon loss {:.6}",
        recipe.as_str(),
        config.train.epochs,
        history.reconstruction.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_evaluate(opts: &HashMap<String, String>) -> CliResult {
    let chart = read_chart_csv(Path::new(required(opts, "chart")?))?;
    let positions = read_positions_csv(Path::new(required(opts, "positions")?))?;
    let out = PathBuf::from(required(opts, "out")?);
    if positions.len() != chart.coords.rows() {
        return Err(CliError::Run(Error::Pipeline(format!(
            "positions file has {} users but chart has {} rows",
            positions.len(),
            chart.coords.rows()
        ))));
    }
    let (reference, space) = match opts.get("features") {
        Some(f) => {
            let fs = cckit::features::read_features_csv(Path::new(f), ScalingMode::UnitNorm)?;
            (fs.entries, ReferenceSpace::FeatureSpace)
        }
        None => (
            Mat::from_fn(positions.len(), 2, |i, c| positions.positions[i][c]),
            ReferenceSpace::TruePositions,
        ),
    };
    let k_list = match opts.get("k") {
        Some(list) => list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::Usage(format!("bad K value '{s}'")))
            })
            .collect::<Result<Vec<usize>, CliError>>()?,
        None => default_k_list(positions.len()),
    };
    let report = MetricsReport::compute(&reference, &chart.coords, &k_list, space)?;
    report.write_csv(&out)?;
    print!("{}", report.to_text());
    Ok(())
}

fn cmd_run(opts: &HashMap<String, String>) -> CliResult {
    let config = load_config(opts)?;
    let dir = out_dir(opts)?;
    let outcomes = run_experiment(&config, &dir)?;
    for outcome in &outcomes {
        println!("recipe = {}", outcome.recipe.as_str());
        print!("{}", outcome.report.to_text());
        if let (Some(first), Some(last)) = (
            outcome.history.reconstruction.first(),
            outcome.history.reconstruction.last(),
        ) {
            println!("recon_loss_initial = {first}");
            println!("recon_loss_final = {last}");
        }
        println!();
    }
    println!("artifacts in {}", dir.display());
    Ok(())
}
