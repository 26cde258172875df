//! Command-line front end: `estimate`, `simulate` and `folds` subcommands.
//!
//! Every error path exits nonzero with a single-line prefix the shell can
//! grep (E_CONFIG -> 2, E_DATA -> 3, E_NUM -> 4). The default seed is the
//! fixed constant 42, never the wall clock, so identical invocations write
//! byte-identical outputs.

use std::collections::HashMap;
use std::path::PathBuf;

use crate::crossfit::{make_folds, make_pair_blocks};
use crate::data::{load_csv, validate_for_iop, OutcomeTransform};
use crate::error::{Error, Result};
use crate::estimators::{
    contrast_te_debiased, iop_gini_debiased_general, iop_gini_debiased_np, iop_gini_plugin,
    ranking_risk_debiased, varfv_debiased, varfv_plugin, AlphaKind, EstimateResult,
};
use crate::learners::{LearnerKind, LearnerSpec, Penalty, RfParams};
use crate::simulate::{run_mc, DgpSpec, McConfig, McEstimator};

pub const DEFAULT_SEED: u64 = 42;

const USAGE: &str = "usage: dustat <command> [flags]

commands:
  estimate <iop|varfv|ranking|ate>   estimate from a CSV sample
  simulate                           run a Monte Carlo bias/coverage cell
  folds                              print the pair-block partition table

estimate flags:
  --data PATH            input CSV (header row, comma-separated)
  --outcome NAME         outcome column
  --covariates A,B,C     covariate columns
  --categorical A,B      covariates to treat as integer-coded categoricals
  --treatment NAME       binary treatment column (ate)
  --method M             plugin | debiased | debiased-general (iop, varfv)
  --learner L            ridge | lasso | rf | fixed:<value>
  --alpha-learner L      learner for the alpha projection (general methods)
  --lambda X             fixed penalty for ridge/lasso (default: 10-fold CV)
  --cv-folds N           CV folds for the penalty search (default 10)
  --trees N --mtry N --min-node N    random-forest controls
  --folds K              cross-fitting folds (default 5)
  --seed S               RNG seed (default 42)
  --level L              CI level (default 0.95)
  --log-outcome          fit the first step on ln Y, exponentiate predictions
  --contrast C           diff | indicator (ate contrast function)
  --out PATH             also write the estimate as JSON
  --threads N            worker threads (default: all cores; THREADS env)

simulate flags:
  --dgp D                saturated | linear
  --sigma S              noise SD for the saturated DGP (default 0.1)
  --n N --reps R         sample size and replication count
  --estimator E          plugin | debiased
  --target T             iop | varfv (default iop)
  --learner L --lambda X --cv-folds N --trees N ...
  --k K --level L --seed S
  --out PREFIX           write PREFIX.csv and PREFIX.txt
  --threads N

folds flags:
  --n N --k K --seed S
";

/// Parsed command line.
#[derive(Debug, Clone)]
pub struct RunConfig {
    flags: HashMap<String, String>,
    switches: Vec<String>,
}

impl RunConfig {
    fn parse(args: &[String]) -> Result<Self> {
        let mut flags = HashMap::new();
        let mut switches = Vec::new();
        let mut i = 0;
        while i < args.len() {
            let a = &args[i];
            if let Some(name) = a.strip_prefix("--") {
                if matches!(name, "log-outcome" | "help") {
                    switches.push(name.to_string());
                    i += 1;
                } else {
                    let val = args
                        .get(i + 1)
                        .ok_or_else(|| Error::config(format!("flag --{name} needs a value")))?;
                    if flags.insert(name.to_string(), val.clone()).is_some() {
                        return Err(Error::config(format!("flag --{name} given twice")));
                    }
                    i += 2;
                }
            } else {
                return Err(Error::config(format!("unexpected argument '{a}'")));
            }
        }
        Ok(RunConfig { flags, switches })
    }

    fn get(&self, name: &str) -> Option<&str> {
        self.flags.get(name).map(|s| s.as_str())
    }

    fn require(&self, name: &str) -> Result<&str> {
        self.get(name)
            .ok_or_else(|| Error::config(format!("missing required flag --{name}")))
    }

    fn parse_num<T: std::str::FromStr>(&self, name: &str, default: T) -> Result<T> {
        match self.get(name) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::config(format!("cannot parse --{name} value '{v}'"))),
        }
    }

    fn has(&self, switch: &str) -> bool {
        self.switches.iter().any(|s| s == switch)
    }
}

fn build_learner(cfg: &RunConfig, flag: &str, seed: u64) -> Result<LearnerSpec> {
    let name = cfg.get(flag).unwrap_or("rf");
    let transform = if cfg.has("log-outcome") {
        OutcomeTransform::LogExp
    } else {
        OutcomeTransform::None
    };
    let cv_folds: usize = cfg.parse_num("cv-folds", 10)?;
    let penalty = match cfg.get("lambda") {
        Some(v) => Penalty::Fixed(
            v.parse()
                .map_err(|_| Error::config(format!("cannot parse --lambda value '{v}'")))?,
        ),
        None => Penalty::Cv { grid: None, folds: cv_folds },
    };
    let rf = RfParams {
        n_trees: cfg.parse_num("trees", 500)?,
        mtry: cfg.get("mtry").map(|v| v.parse()).transpose().map_err(|_| {
            Error::config("cannot parse --mtry value")
        })?,
        min_node: cfg.parse_num("min-node", 5)?,
        seed,
        ..Default::default()
    };
    let kind = match name {
        "ridge" => LearnerKind::Ridge,
        "lasso" => LearnerKind::Lasso,
        "rf" | "random-forest" | "random_forest" => LearnerKind::RandomForest,
        other => {
            if let Some(v) = other.strip_prefix("fixed:") {
                LearnerKind::Fixed(v.parse().map_err(|_| {
                    Error::config(format!("cannot parse fixed learner value '{v}'"))
                })?)
            } else {
                return Err(Error::config(format!(
                    "unknown learner '{other}' (ridge | lasso | rf | fixed:<value>)"
                )));
            }
        }
    };
    Ok(LearnerSpec { kind, penalty, rf, transform })
}

fn init_threads(cfg: &RunConfig) -> Result<()> {
    let from_env = std::env::var("THREADS").ok().and_then(|v| v.parse::<usize>().ok());
    let threads: Option<usize> = match cfg.get("threads") {
        Some(v) => Some(
            v.parse()
                .map_err(|_| Error::config(format!("cannot parse --threads value '{v}'")))?,
        ),
        None => from_env,
    };
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::config("--threads must be >= 1"));
        }
        // a second initialization in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    Ok(())
}

fn write_out(cfg: &RunConfig, json: &str) -> Result<()> {
    if let Some(path) = cfg.get("out") {
        std::fs::write(PathBuf::from(path), format!("{json}\n"))
            .map_err(|e| Error::config(format!("cannot write --out file: {e}")))?;
    }
    Ok(())
}

fn cmd_estimate(target: &str, cfg: &RunConfig, out: &mut impl std::io::Write) -> Result<()> {
    let path = PathBuf::from(cfg.require("data")?);
    let outcome = cfg.require("outcome")?;
    let covariates: Vec<String> = cfg
        .require("covariates")?
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    let categorical: Vec<String> = cfg
        .get("categorical")
        .map(|v| v.split(',').map(|s| s.trim().to_string()).collect())
        .unwrap_or_default();
    let treatment = if target == "ate" {
        Some(cfg.require("treatment")?)
    } else {
        cfg.get("treatment")
    };
    let data = load_csv(&path, outcome, treatment, &covariates, &categorical)?;

    let seed: u64 = cfg.parse_num("seed", DEFAULT_SEED)?;
    let k: usize = cfg.parse_num("folds", 5)?;
    let level: f64 = cfg.parse_num("level", 0.95)?;
    if !(0.0 < level && level < 1.0) {
        return Err(Error::config("--level must be in (0,1)"));
    }
    let learner = build_learner(cfg, "learner", seed)?;
    let method = cfg.get("method").unwrap_or("debiased");
    let folds = || make_folds(data.n(), k, seed);

    let result: EstimateResult = match (target, method) {
        ("iop", "plugin") => {
            let warnings = validate_for_iop(&data)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            iop_gini_plugin(&data, &learner, None)?
        }
        ("iop", "debiased") => {
            let warnings = validate_for_iop(&data)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            iop_gini_debiased_np(&data, &learner, &folds()?)?
        }
        ("iop", "debiased-general") => {
            let alpha = build_learner(cfg, "alpha-learner", seed.wrapping_add(1))?;
            iop_gini_debiased_general(&data, &learner, &alpha, &folds()?, AlphaKind::Additive)?
        }
        ("varfv", "plugin") => varfv_plugin(&data, &learner)?,
        ("varfv", "debiased" | "debiased-general") => {
            varfv_debiased(&data, &learner, &folds()?)?
        }
        ("ranking", _) => ranking_risk_debiased(&data, &learner, &folds()?)?,
        ("ate", _) => {
            let alpha = cfg
                .get("alpha-learner")
                .map(|_| build_learner(cfg, "alpha-learner", seed.wrapping_add(1)))
                .transpose()?;
            match cfg.get("contrast").unwrap_or("diff") {
                "diff" => contrast_te_debiased(
                    &data,
                    |a, b| a - b,
                    &learner,
                    alpha.as_ref(),
                    &folds()?,
                )?,
                "indicator" => contrast_te_debiased(
                    &data,
                    |a, b| if a >= b { 1.0 } else { 0.0 },
                    &learner,
                    alpha.as_ref(),
                    &folds()?,
                )?,
                other => {
                    return Err(Error::config(format!(
                        "unknown contrast '{other}' (diff | indicator)"
                    )))
                }
            }
        }
        (t, m) => {
            return Err(Error::config(format!(
                "no method '{m}' for estimand '{t}' (plugin | debiased | debiased-general)"
            )))
        }
    };
    let result = result.at_level(level);
    write!(out, "{}", result.text_report()).map_err(|e| Error::config(e.to_string()))?;
    write_out(cfg, &result.to_json())?;
    Ok(())
}

fn cmd_simulate(cfg: &RunConfig, out: &mut impl std::io::Write) -> Result<()> {
    let dgp = match cfg.get("dgp").unwrap_or("saturated") {
        "saturated" => DgpSpec::SaturatedCategorical { sigma: cfg.parse_num("sigma", 0.1)? },
        "linear" => DgpSpec::LinearGaussian,
        other => return Err(Error::config(format!("unknown DGP '{other}'"))),
    };
    let seed: u64 = cfg.parse_num("seed", DEFAULT_SEED)?;
    let target = cfg.get("target").unwrap_or("iop");
    let estimator = match (target, cfg.get("estimator").unwrap_or("debiased")) {
        ("iop", "plugin") => McEstimator::IopPlugin,
        ("iop", "debiased") => McEstimator::IopDebiased,
        ("varfv", "plugin") => McEstimator::VarfvPlugin,
        ("varfv", "debiased") => McEstimator::VarfvDebiased,
        (t, e) => {
            return Err(Error::config(format!(
                "unknown estimator '{e}' for target '{t}' (plugin | debiased)"
            )))
        }
    };
    let config = McConfig {
        dgp,
        n: cfg.parse_num("n", 1000)?,
        reps: cfg.parse_num("reps", 200)?,
        estimator,
        learner: build_learner(cfg, "learner", seed)?,
        k: cfg.parse_num("k", 5)?,
        level: cfg.parse_num("level", 0.95)?,
        seed,
    };
    let report = run_mc(&config)?;
    write!(out, "{}", report.text_table()).map_err(|e| Error::config(e.to_string()))?;
    if let Some(prefix) = cfg.get("out") {
        let csv = format!(
            "{}\n{}\n",
            crate::simulate::McReport::csv_header(),
            report.to_csv_row()
        );
        std::fs::write(format!("{prefix}.csv"), csv)
            .map_err(|e| Error::config(format!("cannot write CSV: {e}")))?;
        std::fs::write(format!("{prefix}.txt"), report.text_table())
            .map_err(|e| Error::config(format!("cannot write table: {e}")))?;
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(format!("{prefix}.json"), format!("{json}\n"))
            .map_err(|e| Error::config(format!("cannot write JSON: {e}")))?;
    }
    Ok(())
}

fn cmd_folds(cfg: &RunConfig, out: &mut impl std::io::Write) -> Result<()> {
    let n: usize = cfg.parse_num("n", 0)?;
    let k: usize = cfg.parse_num("k", 5)?;
    if n == 0 {
        return Err(Error::config("missing required flag --n"));
    }
    let seed: u64 = cfg.parse_num("seed", DEFAULT_SEED)?;
    let folds = make_folds(n, k, seed)?;
    let blocks = make_pair_blocks(folds);
    writeln!(out, "{:<7} {:<9} {:>9} {:>12}", "block", "folds", "pairs", "train_size")
        .map_err(|e| Error::config(e.to_string()))?;
    for l in 0..blocks.len() {
        let (a, b) = blocks.block_folds(l);
        let fold_str = if a == b {
            format!("{}", a + 1)
        } else {
            format!("{},{}", a + 1, b + 1)
        };
        let train = blocks.training_indices(l).map(|t| t.len()).unwrap_or(0);
        writeln!(
            out,
            "{:<7} {:<9} {:>9} {:>12}",
            l + 1,
            fold_str,
            blocks.block_size(l),
            train
        )
        .map_err(|e| Error::config(e.to_string()))?;
    }
    let total: usize = (0..blocks.len()).map(|l| blocks.block_size(l)).sum();
    writeln!(out, "total pairs {total} = C({n},2)").map_err(|e| Error::config(e.to_string()))?;
    Ok(())
}

/// Entry point used by the `dustat` binary; returns the process exit code.
pub fn run(args: &[String], out: &mut impl std::io::Write) -> i32 {
    if args.is_empty() || args[0] == "--help" || args[0] == "help" {
        let _ = write!(out, "{USAGE}");
        return if args.is_empty() { 2 } else { 0 };
    }
    let mut dispatch = || -> Result<()> {
        match args[0].as_str() {
            "estimate" => {
                let target = args
                    .get(1)
                    .ok_or_else(|| Error::config("estimate needs a target: iop | varfv | ranking | ate"))?;
                if !["iop", "varfv", "ranking", "ate"].contains(&target.as_str()) {
                    return Err(Error::config(format!(
                        "unknown estimand '{target}' (iop | varfv | ranking | ate)"
                    )));
                }
                let cfg = RunConfig::parse(&args[2..])?;
                init_threads(&cfg)?;
                cmd_estimate(target, &cfg, out)
            }
            "simulate" => {
                let cfg = RunConfig::parse(&args[1..])?;
                init_threads(&cfg)?;
                cmd_simulate(&cfg, out)
            }
            "folds" => {
                let cfg = RunConfig::parse(&args[1..])?;
                init_threads(&cfg)?;
                cmd_folds(&cfg, out)
            }
            other => Err(Error::config(format!("unknown command '{other}'"))),
        }
    };
    match dispatch() {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            if matches!(e, Error::Config(_)) {
                eprintln!("{USAGE}");
            }
            e.exit_code()
        }
    }
}
