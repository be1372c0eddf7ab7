use std::fs;
use std::path::Path;

use adrank::bundle::PolicyBundle;
use adrank::data::{load_dataset, split_train_test, write_dataset, Dataset, Schema, Standardizer};
use adrank::eval::{generate_synthetic_bandit, importance_weighted_ctr_clipped, true_ctr, EvaluationReport, LoggingPolicy, SyntheticBanditSpec};
use adrank::experiment::{run_experiment, ExperimentConfig};
use adrank::pipeline::{convert_supervised_to_bandit, information_gain_select, ConversionConfig, FeatureSelection};
use adrank::policy::{PolicyKind, StochasticPolicy};
use adrank::seed;
use adrank::train::{train_suite, Preprocess};
use anyhow::Context;
use log::info;

use crate::{Command, DataArgs, Failure, TrainArgs};

type Result<T> = std::result::Result<T, Failure>;

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("input path {} does not exist", path.display())))
    }
}

fn load(data: &DataArgs, default: Schema) -> Result<Dataset> {
    require(&data.input)?;
    let schema = data.schema.clone().unwrap_or(default).with_num_arms(data.k);
    Ok(load_dataset(&data.input, &schema)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn apply_train_args(cfg: &mut ExperimentConfig, args: &TrainArgs) {
    if let Some(kind) = args.kind {
        cfg.kinds = vec![kind];
    }
    if let Some(u) = args.undersample {
        cfg.undersample = u.0;
    }
    if let Some(grid) = &args.lambda_grid {
        cfg.lambda_grid = grid.clone();
    }
    if let Some(n) = args.iterations {
        cfg.iterations = n;
    }
    if let Some(s) = args.surrogate {
        cfg.surrogate = s;
    }
    if let Some(m) = args.measure {
        cfg.measure = m;
    }
    if let Some(eta) = args.step_size {
        cfg.step_size_base = eta;
    }
}

fn base_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => {
            require(p)?;
            Ok(ExperimentConfig::load(p)?)
        }
        None => Ok(ExperimentConfig::default()),
    }
}

fn report_json(report: &EvaluationReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes") + "\n"
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Convert { data, out, seed, train_fraction, test_out } => {
            let full = load(&data, Schema::full())?;
            let train = match train_fraction {
                Some(f) => {
                    let (train, test) = split_train_test(&full, f, seed::derive(seed, "split", 0))?;
                    if let Some(p) = &test_out {
                        write_dataset(&test, p)?;
                        println!("wrote {} test records to {}", test.len(), p.display());
                    }
                    train
                }
                None => full,
            };
            let cfg = ConversionConfig { seed: seed::derive(seed, "convert", 0), num_arms: train.num_arms() };
            let bandit = convert_supervised_to_bandit(&train, &cfg)?;
            write_dataset(&bandit, &out)?;
            let clicks = bandit.logged()?.iter().filter(|r| r.clicked()).count();
            println!(
                "wrote {} bandit records to {} (K={}, reward rate {:.4})",
                bandit.len(),
                out.display(),
                bandit.num_arms(),
                clicks as f64 / bandit.len().max(1) as f64
            );
            Ok(())
        }

        Command::SelectFeatures { data, keep_fraction, bins, out } => {
            let dataset = load(&data, Schema::full())?;
            let sel = information_gain_select(&dataset, keep_fraction, bins)?;
            eprintln!("kept {} of {} features", sel.kept_indices.len(), sel.dimension);
            let text = serde_json::to_string_pretty(&sel).expect("selection serializes") + "\n";
            emit(out.as_deref(), &text)
        }

        Command::Train { data, train, config, features, no_standardize, epsilon, seed, out } => {
            let mut cfg = base_config(config.as_deref())?;
            apply_train_args(&mut cfg, &train);
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let kind = match cfg.kinds.as_slice() {
                [k] => *k,
                _ => train.kind.unwrap_or(PolicyKind::Ranker),
            };
            let epsilon = epsilon.unwrap_or(cfg.epsilon);
            let dataset = load(&data, Schema::bandit())?;
            let standardize = cfg.standardize && !no_standardize;
            let pre = match &features {
                Some(p) => {
                    require(p)?;
                    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    let sel: FeatureSelection =
                        serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
                    let selected = sel.apply(&dataset)?;
                    let standardizer = standardize.then(|| Standardizer::fit(&selected));
                    Preprocess { input_dimension: dataset.dimension(), selection: Some(sel), standardizer }
                }
                None => Preprocess::fit(&dataset, cfg.keep_fraction, cfg.bins, standardize)?,
            };
            let prepared = pre.apply(&dataset)?;
            let suite_cfg = cfg.suite_config(kind, 0);
            let suite = train_suite(&prepared, &suite_cfg)?;
            for s in &suite.validation {
                info!("lambda {}: validation iw-ctr {:?}", s.lambda, s.score);
            }
            let bundle = PolicyBundle::new(&suite, &suite_cfg, pre, dataset.arm_labels(), epsilon);
            bundle.save(&out)?;
            println!("{} suite, chosen lambda {}", kind.name(), suite.lambda);
            println!("{:>4} {:>8} {:>10} {:>10} {:>10}  status", "arm", "label", "positives", "negatives", "lambda");
            for (a, b) in suite.arms.iter().zip(&bundle.arms) {
                let negatives = if a.negatives == a.negatives_before_undersampling {
                    a.negatives.to_string()
                } else {
                    format!("{}/{}", a.negatives, a.negatives_before_undersampling)
                };
                println!(
                    "{:>4} {:>8} {:>10} {:>10} {:>10}  {}",
                    a.arm + 1,
                    b.label,
                    a.positives,
                    negatives,
                    a.lambda,
                    if a.trained { "trained" } else { "untrainable, excluded" }
                );
            }
            println!("wrote bundle {} to {}", bundle.id(), out.display());
            Ok(())
        }

        Command::EvalFull { data, policy, out } => {
            require(&policy)?;
            let bundle = PolicyBundle::load(&policy)?;
            let test = load(&data, Schema::full())?;
            let prepared = bundle.prepare(&test)?;
            let mut report = true_ctr(&bundle.policy()?, &prepared)?;
            report.policy_id = Some(bundle.id());
            report.dataset_fingerprint = Some(test.fingerprint());
            emit(out.as_deref(), &report_json(&report))
        }

        Command::EvalBandit { data, policy, epsilon, delta, clip, out } => {
            require(&policy)?;
            let bundle = PolicyBundle::load(&policy)?;
            let test = load(&data, Schema::bandit())?;
            let prepared = bundle.prepare(&test)?;
            let sp = StochasticPolicy::new(bundle.policy()?, epsilon.unwrap_or(bundle.epsilon))?;
            let mut report = importance_weighted_ctr_clipped(&sp, &prepared, delta, clip)?;
            report.policy_id = Some(bundle.id());
            report.dataset_fingerprint = Some(test.fingerprint());
            emit(out.as_deref(), &report_json(&report))
        }

        Command::Simulate { rates, dimension, n_train, n_test, weight_scale, seed, out } => {
            let spec = SyntheticBanditSpec {
                num_arms: rates.len(),
                dimension,
                target_rates: rates,
                n_train,
                n_test,
                weight_scale,
                logging: LoggingPolicy::Uniform,
                seed,
            };
            let sim = generate_synthetic_bandit(&spec)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            write_dataset(&sim.train, &out.join("train.csv"))?;
            write_dataset(&sim.test, &out.join("test.csv"))?;
            let model = serde_json::to_string_pretty(&sim.model).expect("model serializes") + "\n";
            write_text(&out.join("model.json"), &model)?;
            for (name, d) in [("train", &sim.train), ("test", &sim.test)] {
                let logged = d.logged()?;
                let clicks = logged.iter().filter(|r| r.clicked()).count();
                println!("{name}: {} records, {clicks} clicks", logged.len());
            }
            println!("wrote train.csv, test.csv and model.json to {}", out.display());
            Ok(())
        }

        Command::Experiment {
            config,
            input,
            schema,
            k,
            train,
            kinds,
            repetitions,
            train_fraction,
            resplit,
            epsilon,
            delta,
            seed,
            out,
        } => {
            let mut cfg = base_config(config.as_deref())?;
            apply_train_args(&mut cfg, &train);
            if let Some(p) = input {
                require(&p)?;
                cfg.dataset = Some(p);
                cfg.synthetic = None;
            }
            if let Some(s) = schema {
                cfg.schema = s;
            }
            if k.is_some() {
                cfg.schema = cfg.schema.with_num_arms(k);
            }
            if let Some(kinds) = kinds {
                cfg.kinds = kinds;
            }
            if let Some(r) = repetitions {
                cfg.repetitions = r;
            }
            if let Some(f) = train_fraction {
                cfg.train_fraction = f;
            }
            cfg.resplit |= resplit;
            if let Some(e) = epsilon {
                cfg.epsilon = e;
            }
            if let Some(d) = delta {
                cfg.delta = d;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.out = Some(o);
            }
            match &cfg.dataset {
                Some(p) if !p.exists() => require(p)?,
                None if cfg.synthetic.is_none() => {
                    return Err(Failure::Usage("no data source: pass --input or a config with `dataset` or `synthetic`".into()))
                }
                _ => {}
            }
            let result = run_experiment(&cfg)?;
            if let Some(dir) = &cfg.out {
                result.write(dir)?;
                eprintln!("wrote experiment outputs to {}", dir.display());
            }
            print!("{}", result.summary_text());
            Ok(())
        }
    }
}
