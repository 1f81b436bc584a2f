//! Command dispatch. Exit codes: 0 success, 2 usage or configuration error,
//! 1 runtime error.

mod args;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Parser;
use rayon::prelude::*;

pub use args::*;

use crate::augment::{
    build_augmented, remove_token_baseline, subsample_baseline, train_feag, train_regularized, FlipRule,
};
use crate::corpus::{
    generate_ss, generate_subsampled, read_jsonl_file, write_jsonl_file, Corpus, GenConfigSS, GenConfigSub,
};
use crate::error::{Error, Result, ResultExt};
use crate::estimators::{estimate_feature_effect, EffectEstimate, EffectEstimates, Method};
use crate::evalx::{bias_scan, group_metrics};
use crate::features::{bind_treatment, FeatureSpec};
use crate::models::{load_model, save_model, train_classifier, SavedModel};
use crate::rng;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if is_usage(&e) {
                EXIT_USAGE
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

fn is_usage(e: &Error) -> bool {
    match e {
        Error::Config { .. } => true,
        Error::Context { source, .. } => is_usage(source),
        _ => false,
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let cli = match &cli.command {
        Command::Replay(r) => replay_config(&r.config, &cli.global)?,
        _ => cli,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.threads)
        .build()
        .map_err(|e| Error::config("threads", e.to_string()))?;
    pool.install(|| {
        let out = Out::new(&cli.global);
        out.write_config(&cli)?;
        dispatch(&cli.command, &cli.global, &out)
    })
}

/// Loads an emitted config. `--out-dir` and `--threads`, when given on the
/// replay command line, override the stored values.
fn replay_config(path: &Path, overrides: &Global) -> Result<Cli> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cli: Cli =
        toml::from_str(&text).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(Error::config("config", "a replay config cannot replay itself"));
    }
    if overrides.out_dir.is_some() {
        cli.global.out_dir = overrides.out_dir.clone();
    }
    if overrides.threads != 0 {
        cli.global.threads = overrides.threads;
    }
    Ok(cli)
}

/// Output path resolution under `--out-dir`.
struct Out {
    dir: Option<PathBuf>,
}

impl Out {
    fn new(global: &Global) -> Self {
        Out {
            dir: global.out_dir.clone(),
        }
    }

    fn path(&self, p: &Path) -> PathBuf {
        match &self.dir {
            Some(d) => d.join(p),
            None => p.to_path_buf(),
        }
    }

    fn create(&self, p: &Path) -> Result<BufWriter<File>> {
        let path = self.path(p);
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(BufWriter::new(f))
    }

    fn write_str(&self, p: &Path, s: &str) -> Result<()> {
        let mut w = self.create(p)?;
        w.write_all(s.as_bytes()).map_err(|e| Error::io(self.path(p), e))?;
        w.flush().map_err(|e| Error::io(self.path(p), e))
    }

    fn write_config(&self, cli: &Cli) -> Result<()> {
        let text = toml::to_string(cli).map_err(|e| Error::config("config", e.to_string()))?;
        self.write_str(&PathBuf::from(format!("{}.toml", cli.command.name())), &text)
    }
}

fn sibling(p: &Path, ext: &str) -> PathBuf {
    p.with_extension(ext)
}

fn dispatch(cmd: &Command, global: &Global, out: &Out) -> Result<()> {
    match cmd {
        Command::Gen(g) => match &g.kind {
            GenKind::Ss(a) => gen_ss(a, global, out),
            GenKind::Subsampled(a) => gen_subsampled(a, global, out),
        },
        Command::Estimate(a) => estimate(a, out),
        Command::Train(a) => train(a, global, out),
        Command::Eval(a) => eval(a, out),
        Command::BiasScan(a) => scan(a, out),
        Command::Sweep(a) => sweep(a, global, out),
        Command::Replay(_) => Err(Error::config("config", "nested replay")),
    }
}

fn load(path: &Path) -> Result<Corpus> {
    read_jsonl_file(path)
}

fn summarize(corpus: &Corpus) -> String {
    format!(
        "{} documents, P(T=1) = {:.4}, P(Y=1) = {:.4}",
        corpus.len(),
        corpus.treated_fraction(),
        corpus.positive_fraction()
    )
}

fn gen_ss(a: &SsArgs, global: &Global, out: &Out) -> Result<()> {
    let cfg = GenConfigSS {
        n: a.n,
        tau: a.tau,
        eps: a.eps,
        covariates: a.covariates.to_config(),
        planted: a.plant.iter().map(|p| parse_plant(p)).collect::<Result<_>>()?,
    };
    let corpus = generate_ss(&cfg, global.seed)?;
    write_jsonl_file(&corpus, out.path(&a.out))?;
    println!("{}: {}", out.path(&a.out).display(), summarize(&corpus));
    Ok(())
}

fn gen_subsampled(a: &SubsampledArgs, global: &Global, out: &Out) -> Result<()> {
    let cfg = GenConfigSub {
        n_raw: a.n_raw,
        tau: a.tau,
        trigger_token: a.trigger.clone(),
        p_trigger_w1: a.p_trigger_w1,
        p_trigger_w0: a.p_trigger_w0,
        keep_t1_w0: a.keep_t1_w0,
        keep_t0: a.keep_t0,
        covariates: a.covariates.to_config(),
    };
    let corpus = generate_subsampled(&cfg, global.seed)?;
    write_jsonl_file(&corpus, out.path(&a.out))?;
    println!("{}: {}", out.path(&a.out).display(), summarize(&corpus));
    Ok(())
}

fn write_estimates(w: impl Write, rows: &[(FeatureSpec, EffectEstimates)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["feature_id", "method", "estimate", "std_error", "mae_x100", "n_seeds"])?;
    for (spec, est) in rows {
        for e in est.iter() {
            w.write_record([
                spec.feature_id.to_string(),
                e.method.to_string(),
                e.value.to_string(),
                e.std_error.to_string(),
                e.mae_vs_truth.map_or_else(String::new, |m| (100.0 * m).to_string()),
                e.per_seed_values.len().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn estimates_table(rows: &[(FeatureSpec, EffectEstimates)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "effects x100");
    let _ = writeln!(
        s,
        "{:<32} {:<14} {:>9} {:>9} {:>9}",
        "feature", "method", "estimate", "std_err", "mae"
    );
    for (spec, est) in rows {
        for e in est.iter() {
            let mae = e
                .mae_vs_truth
                .map_or_else(|| "-".to_string(), |m| format!("{:.2}", 100.0 * m));
            let _ = writeln!(
                s,
                "{:<32} {:<14} {:>9.2} {:>9.2} {:>9}",
                spec.to_string(),
                e.method.as_str(),
                100.0 * e.value,
                100.0 * e.std_error,
                mae
            );
        }
    }
    s
}

fn estimate_all(
    corpus: &Corpus,
    specs: &[FeatureSpec],
    est: &EstimationArgs,
    model: &ModelArgs,
) -> Result<Vec<(FeatureSpec, EffectEstimates)>> {
    let cfg = est.to_config(model)?;
    specs
        .par_iter()
        .map(|spec| {
            estimate_feature_effect(corpus, spec, &cfg, &est.seeds)
                .map(|e| (spec.clone(), e))
                .context_with(|| format!("feature {spec}"))
        })
        .collect()
}

fn estimate(a: &EstimateArgs, out: &Out) -> Result<()> {
    let specs = parse_features(&a.feature)?;
    let corpus = load(&a.corpus)?;
    let rows = estimate_all(&corpus, &specs, &a.estimation, &a.model)?;
    write_estimates(out.create(&a.out)?, &rows)?;
    print!("{}", estimates_table(&rows));
    Ok(())
}

fn parse_tau_source(source: &str, m: usize) -> Result<Option<Vec<f64>>> {
    if source == "estimate" {
        return Ok(None);
    }
    let bad = || {
        Error::config(
            "tau_source",
            format!("expected estimate or manual:<v>[,<v>...], got {source:?}"),
        )
    };
    let values = source.strip_prefix("manual:").ok_or_else(bad)?;
    let taus = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    match taus.len() {
        1 => Ok(Some(vec![taus[0]; m])),
        k if k == m => Ok(Some(taus)),
        k => Err(Error::config("tau_source", format!("{k} values for {m} features"))),
    }
}

fn train(a: &TrainArgs, global: &Global, out: &Out) -> Result<()> {
    let cfg = a.model.to_config(global.seed)?;
    let corpus = load(&a.corpus)?;
    let needs_feature = matches!(a.mode, TrainMode::Feag | TrainMode::Reg | TrainMode::RemoveToken);
    let specs = if needs_feature || !a.feature.is_empty() {
        parse_features(&a.feature)?
    } else {
        Vec::new()
    };
    let targets = |out: &Out| -> Result<Vec<f64>> {
        match parse_tau_source(&a.tau_source, specs.len())? {
            Some(t) => Ok(t),
            None => {
                let rows = estimate_all(&corpus, &specs, &a.estimation, &a.model)?;
                write_estimates(out.create(Path::new("estimates.csv"))?, &rows)?;
                print!("{}", estimates_table(&rows));
                Ok(rows.iter().map(|(_, e)| e.get(Method::DrRiesz).value).collect())
            }
        }
    };
    let model = match a.mode {
        TrainMode::Erm => train_classifier(&corpus, &cfg)?,
        TrainMode::Feag => {
            let taus = targets(out)?;
            let rule = if a.literal_flip {
                FlipRule::Literal
            } else {
                FlipRule::Consistent
            };
            let aug = build_augmented(&corpus, &specs, &taus, global.seed, rule)?;
            if let Some(p) = &a.aug_out {
                aug.write_jsonl(out.create(p)?)?;
            }
            println!(
                "augmented {} documents ({} labels flipped), targets {:?}",
                aug.len(),
                aug.n_flipped(),
                taus
            );
            train_feag(&corpus, &aug, a.lambda.unwrap_or(0.1), &cfg)?
        }
        TrainMode::Reg => {
            let taus = targets(out)?;
            train_regularized(&corpus, &specs, &taus, a.lambda.unwrap_or(1.0), &cfg)?
        }
        TrainMode::RemoveToken => {
            if specs.len() != 1 {
                return Err(Error::config("feature", "remove-token takes exactly one feature"));
            }
            remove_token_baseline(&corpus, &specs[0], &cfg)?
        }
        TrainMode::Subsample => {
            let bound = match specs.first() {
                Some(spec) => bind_treatment(&corpus, spec)?,
                None => corpus.clone(),
            };
            let kept = subsample_baseline(&bound, global.seed)?;
            println!("subsample kept {} of {} documents", kept.len(), corpus.len());
            train_classifier(&kept, &cfg)?
        }
    };
    save_model(&SavedModel::Classifier(model), out.path(&a.model_out))?;
    println!("model written to {}", out.path(&a.model_out).display());
    Ok(())
}

fn eval(a: &EvalArgs, out: &Out) -> Result<()> {
    let classifier = match load_model(&a.model)? {
        SavedModel::Classifier(c) => c,
        other => {
            return Err(Error::Model(format!(
                "{}: expected a classifier, found {:?}",
                a.model.display(),
                other.header().kind
            )))
        }
    };
    let spec = a.feature.parse::<FeatureSpec>()?;
    let corpus = load(&a.corpus)?;
    let m = group_metrics(&classifier, &corpus, &spec)?;
    out.write_str(&a.out, &(m.to_json()? + "\n"))?;
    m.write_csv(out.create(&sibling(&a.out, "csv"))?)?;
    print!("{}", m.to_table());
    Ok(())
}

fn scan(a: &BiasScanArgs, out: &Out) -> Result<()> {
    let corpus = load(&a.corpus)?;
    let cfg = a.estimation.to_config(&a.model)?;
    let report = bias_scan(&corpus, &a.tokens, &cfg, &a.estimation.seeds, a.min_count)?;
    report.write_csv(out.create(&a.out)?)?;
    out.write_str(&sibling(&a.out, "json"), &(report.to_json()? + "\n"))?;
    print!("{}", report.to_table());
    Ok(())
}

/// One cell of the sweep grid.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub tau: f64,
    pub eps: f64,
    pub estimates: EffectEstimates,
}

/// Seed of the corpus that estimation seed `est_seed` draws in every cell.
/// Cells share it, so corpora are matched across `(tau, eps)`.
pub fn sweep_corpus_seed(seed: u64, est_seed: u64) -> u64 {
    rng::derive(seed, rng::STREAM_CORPUS, est_seed)
}

/// For every `(tau, eps)` cell and estimation seed: generate a corpus, then
/// estimate the prefix feature's effect on it with that seed. Per-seed
/// spread therefore includes sampling of the data.
pub fn run_sweep(a: &SweepArgs, seed: u64) -> Result<Vec<SweepCell>> {
    if a.taus.is_empty() || a.eps.is_empty() {
        return Err(Error::config("taus", "the grid needs at least one tau and one eps"));
    }
    if a.estimation.seeds.is_empty() {
        return Err(Error::config("seeds", "at least one seed is required"));
    }
    let cfg = a.estimation.to_config(&a.model)?;
    let covariates = a.covariates.to_config();
    let spec = FeatureSpec::prefix_pair(0, &covariates.vocab.treated_token, &covariates.vocab.untreated_token);
    let grid: Vec<(f64, f64)> = a
        .taus
        .iter()
        .flat_map(|&t| a.eps.iter().map(move |&e| (t, e)))
        .collect();
    let units: Vec<(f64, f64, u64)> = grid
        .iter()
        .flat_map(|&(t, e)| a.estimation.seeds.iter().map(move |&s| (t, e, s)))
        .collect();
    let runs = units
        .par_iter()
        .map(|&(tau, eps, s)| {
            let gen = GenConfigSS {
                n: a.n,
                tau,
                eps,
                covariates: covariates.clone(),
                planted: Vec::new(),
            };
            let corpus = generate_ss(&gen, sweep_corpus_seed(seed, s))?;
            estimate_feature_effect(&corpus, &spec, &cfg, &[s]).context_with(|| format!("tau {tau}, eps {eps}"))
        })
        .collect::<Result<Vec<_>>>()?;
    let k = a.estimation.seeds.len();
    Ok(grid
        .iter()
        .zip(runs.chunks(k))
        .map(|(&(tau, eps), chunk)| {
            let column = |m: Method| {
                let values = chunk.iter().map(|e| e.get(m).value).collect();
                EffectEstimate::from_values(spec.feature_id, m, values, Some(tau))
            };
            SweepCell {
                tau,
                eps,
                estimates: EffectEstimates {
                    direct: column(Method::Direct),
                    dr_propensity: column(Method::DrPropensity),
                    dr_riesz: column(Method::DrRiesz),
                },
            }
        })
        .collect())
}

/// MAE x100 with methods as row blocks, `tau` down, `eps` across.
pub fn mae_table_csv(cells: &[SweepCell], taus: &[f64], eps: &[f64]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["method".to_string(), "tau".to_string()];
    header.extend(eps.iter().map(|e| format!("eps={e}")));
    w.write_record(&header)?;
    for method in Method::ALL {
        for &t in taus {
            let mut row = vec![method.to_string(), t.to_string()];
            for &e in eps {
                let cell = cells
                    .iter()
                    .find(|c| c.tau == t && c.eps == e)
                    .expect("every grid cell is present");
                let mae = cell.estimates.get(method).mae_vs_truth.unwrap_or(f64::NAN);
                row.push(format!("{:.4}", 100.0 * mae));
            }
            w.write_record(&row)?;
        }
    }
    w.into_inner().map_err(|e| Error::Stream(e.into_error()))
}

fn sweep(a: &SweepArgs, global: &Global, out: &Out) -> Result<()> {
    let cells = run_sweep(a, global.seed)?;
    let table = mae_table_csv(&cells, &a.taus, &a.eps)?;
    out.create(&a.out)?
        .write_all(&table)
        .map_err(|e| Error::io(out.path(&a.out), e))?;
    let mut w = csv::Writer::from_writer(out.create(&a.out.with_file_name("estimates.csv"))?);
    w.write_record(["tau", "eps", "method", "seed", "estimate"])?;
    for c in &cells {
        for e in c.estimates.iter() {
            for (s, v) in a.estimation.seeds.iter().zip(&e.per_seed_values) {
                w.write_record([
                    c.tau.to_string(),
                    c.eps.to_string(),
                    e.method.to_string(),
                    s.to_string(),
                    v.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    println!("MAE (x100) of the feature effect estimate");
    print!("{}", String::from_utf8_lossy(&table).replace(',', "\t"));
    Ok(())
}
