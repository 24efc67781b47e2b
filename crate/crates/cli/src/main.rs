use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use idtw::abstraction::{abstract_gradient, abstract_state, Representation};
use idtw::gbr::InterpolationMethod;
use idtw::harness::report::{aggregate_csv, metrics_csv, num, parse_results_csv, results_csv};
use idtw::harness::runner::{result_rows, CHECKPOINT_FILE};
use idtw::harness::{
    aggregate_by_representation, generate_synthetic, run_cv, run_grid, write_reports, Cohort, Dataset,
    ExperimentConfig, GridOptions, GridSpec, MatchConfig, SynthSpec,
};
use idtw::imatch::{dtw_cost_matrix, dtw_distance, BandPolicy};
use idtw::kb::{bundled, DurationDelegate, KnowledgeBase};

#[derive(Parser)]
#[command(name = "idtw", version, about = "Interval-based abstraction DTW for irregular longitudinal records")]
struct Cli {
    /// Log verbosity: repeat for more (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dump State and Gradient interval sequences for each entity.
    Abstract {
        #[command(flatten)]
        inputs: Inputs,
        /// Only this entity.
        #[arg(long)]
        id: Option<String>,
        /// Concepts to abstract; defaults to the config's, or every KB concept in the data.
        #[arg(long, value_delimiter = ',')]
        concepts: Vec<String>,
    },
    /// Dump the interpolated event table of one entity.
    Represent {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        id: String,
        #[command(flatten)]
        choice: ConfigChoice,
    },
    /// Warping distance between two entities.
    Match {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        /// Also print the accumulated cost matrix as CSV.
        #[arg(long)]
        matrix: bool,
        #[command(flatten)]
        choice: ConfigChoice,
    },
    /// Cross-validate a single configuration.
    Classify {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        choice: ConfigChoice,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Enumerate and run the full configuration grid.
    Grid {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        #[arg(long, default_value = "idtw-out")]
        out: PathBuf,
        /// Print the enumerated configs and exit.
        #[arg(long)]
        list: bool,
    },
    /// Aggregate a results table by representation with paired t-tests against raw.
    Report {
        #[arg(long)]
        results: PathBuf,
        /// Also print per-combination rows.
        #[arg(long)]
        detail: bool,
    },
    /// Generate a seeded synthetic cohort with an experiment config.
    Synth {
        #[arg(long, default_value = "synth")]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Multiplies the per-concept noise.
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
    },
}

#[derive(Args)]
struct Inputs {
    /// Bundled KB name (oncology, hepatitis, diabetes) or a KB file; overrides the config.
    #[arg(long)]
    kb: Option<String>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    attributes: Option<PathBuf>,
    /// Experiment config file.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// A single grid point, either by id or assembled from flags.
#[derive(Args)]
struct ConfigChoice {
    /// Pick this id from the enumerated grid.
    #[arg(long, conflicts_with_all = ["concepts", "reps"])]
    config_id: Option<usize>,
    /// Concepts to match; defaults to all config concepts.
    #[arg(long, value_delimiter = ',')]
    concepts: Vec<String>,
    /// One representation per concept (R, S, G, SG), or one for all.
    #[arg(long, value_delimiter = ',')]
    reps: Vec<Representation>,
    #[arg(long)]
    interpolation: Option<InterpolationMethod>,
    #[arg(long)]
    aggregation: Option<DurationDelegate>,
    #[arg(long)]
    band: Option<BandPolicy>,
    #[arg(long)]
    k: Option<usize>,
}

struct Loaded {
    dataset: Dataset,
    kb: KnowledgeBase,
    config: Option<ExperimentConfig>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_kb(spec: &str) -> Result<KnowledgeBase> {
    match spec.trim_end_matches(".kb") {
        "oncology" => return Ok(bundled::oncology()),
        "hepatitis" => return Ok(bundled::hepatitis()),
        "diabetes" => return Ok(bundled::diabetes()),
        _ => {}
    }
    let path = Path::new(spec);
    if !path.exists() {
        bail!("`{spec}` is neither a bundled knowledge base nor a file");
    }
    Ok(KnowledgeBase::parse_named(&path.display().to_string(), &read(path)?)?)
}

impl Inputs {
    fn load(&self) -> Result<Loaded> {
        let config = match &self.config {
            Some(p) => Some(ExperimentConfig::parse(&p.display().to_string(), &read(p)?)?),
            None => None,
        };
        let kb_spec = self
            .kb
            .clone()
            .or_else(|| config.as_ref().and_then(|c| c.kb.clone()))
            .context("no knowledge base: pass --kb or set `kb` in the config")?;
        let kb = load_kb(&kb_spec)?;
        let dataset = Dataset::load(
            &self.data,
            self.events.as_deref(),
            self.labels.as_deref(),
            self.attributes.as_deref(),
        )?;
        Ok(Loaded { dataset, kb, config })
    }

    fn load_cohort(&self) -> Result<(Cohort, ExperimentConfig)> {
        let loaded = self.load()?;
        let cfg = loaded.config.context("this command needs --config")?;
        let cohort = Cohort::prepare(&loaded.dataset, &loaded.kb, &cfg)?;
        if !cohort.excluded.is_empty() {
            log::warn!("{} entities excluded", cohort.excluded.len());
        }
        Ok((cohort, cfg))
    }
}

impl ConfigChoice {
    fn resolve(&self, cfg: &ExperimentConfig, cohort: &Cohort) -> Result<MatchConfig> {
        let spec = GridSpec::from_experiment(cfg, cohort.len());
        if let Some(id) = self.config_id {
            let configs = spec.enumerate();
            let total = configs.len();
            let mut c = configs
                .into_iter()
                .nth(id)
                .with_context(|| format!("config id {id} is outside the grid of {total}"))?;
            self.override_params(&mut c);
            return Ok(c);
        }
        let concepts = if self.concepts.is_empty() {
            cfg.concepts.clone()
        } else {
            self.concepts.clone()
        };
        let representations = match self.reps.as_slice() {
            [] => vec![Representation::State; concepts.len()],
            [one] => vec![*one; concepts.len()],
            many if many.len() == concepts.len() => many.to_vec(),
            many => bail!("{} representations for {} concepts", many.len(), concepts.len()),
        };
        if representations.iter().any(|r| r.is_raw()) && !representations.iter().all(|r| r.is_raw()) {
            bail!("representations must be all raw or all abstract");
        }
        let mut c = MatchConfig {
            id: 0,
            group: 0,
            concepts,
            representations,
            interpolation: spec.interpolations[0],
            duration_delegate: spec.aggregations[0],
            band: spec.bands[0],
            k: spec.ks.first().copied().unwrap_or(1),
            timeline: spec.timeline.clone(),
            granularity: spec.granularity,
        };
        self.override_params(&mut c);
        Ok(c)
    }

    fn override_params(&self, c: &mut MatchConfig) {
        if let Some(i) = self.interpolation {
            c.interpolation = i;
        }
        if let Some(a) = self.aggregation {
            c.duration_delegate = a;
        }
        if let Some(b) = self.band {
            c.band = b;
        }
        if let Some(k) = self.k {
            c.k = k;
        }
    }
}

/// Raw features are normalized with statistics over the whole cohort outside of CV.
fn all_stats(cohort: &Cohort, config: &MatchConfig) -> Result<Option<idtw::abstraction::PopulationStats>> {
    if !config.is_raw() {
        return Ok(None);
    }
    let all: Vec<usize> = (0..cohort.len()).collect();
    Ok(Some(cohort.fit_stats(&all, &config.concepts)?))
}

fn run(cli: Cli) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Abstract { inputs, id, concepts } => {
            let loaded = inputs.load()?;
            let concepts = if !concepts.is_empty() {
                concepts
            } else if let Some(cfg) = &loaded.config {
                cfg.concepts.clone()
            } else {
                let known = loaded.kb.base_concepts();
                let mut seen: Vec<String> = loaded
                    .dataset
                    .entities
                    .values()
                    .flat_map(|e| e.samples.keys().cloned())
                    .filter(|c| known.contains(c))
                    .collect();
                seen.sort();
                seen.dedup();
                seen
            };
            writeln!(out, "entity,feature,start,end,value,normalized")?;
            for e in loaded.dataset.entities.values() {
                if id.as_ref().is_some_and(|i| i != &e.id) {
                    continue;
                }
                let subpop = loaded
                    .config
                    .as_ref()
                    .and_then(|c| c.subpopulation.as_ref())
                    .and_then(|a| e.attributes.get(a))
                    .map(String::as_str);
                for name in &concepts {
                    let samples = e.samples_of(name);
                    if samples.is_empty() {
                        continue;
                    }
                    let def = loaded.kb.concept_for(name, subpop)?;
                    let state = abstract_state(samples, def).with_context(|| format!("entity `{}`", e.id))?;
                    let gradient = abstract_gradient(samples, def).with_context(|| format!("entity `{}`", e.id))?;
                    for (suffix, seq) in [("state", state), ("gradient", gradient)] {
                        for iv in &seq.intervals {
                            writeln!(
                                out,
                                "{},{name}.{suffix},{},{},{},{}",
                                e.id,
                                iv.start,
                                iv.end,
                                iv.tag,
                                num(iv.value)
                            )?;
                        }
                    }
                }
            }
            if let Some(i) = id {
                if !loaded.dataset.entities.contains_key(&i) {
                    bail!("entity `{i}` is not in the data");
                }
            }
        }
        Command::Represent { inputs, id, choice } => {
            let (cohort, cfg) = inputs.load_cohort()?;
            let config = choice.resolve(&cfg, &cohort)?;
            let idx = cohort.index_of(&id)?;
            let table = cohort.event_table(idx, &config, all_stats(&cohort, &config)?.as_ref())?;
            writeln!(out, "# {config}")?;
            write!(out, "{table}")?;
        }
        Command::Match {
            inputs,
            a,
            b,
            matrix,
            choice,
        } => {
            let (cohort, cfg) = inputs.load_cohort()?;
            let config = choice.resolve(&cfg, &cohort)?;
            let stats = all_stats(&cohort, &config)?;
            let sa = cohort.series(cohort.index_of(&a)?, &config, stats.as_ref())?;
            let sb = cohort.series(cohort.index_of(&b)?, &config, stats.as_ref())?;
            writeln!(out, "# {config}")?;
            let band = cohort.band_for(&config)?;
            writeln!(out, "{a},{b},{}", num(dtw_distance(&sa, &sb, band)?))?;
            if matrix {
                write!(out, "{}", dtw_cost_matrix(&sa, &sb, band)?)?;
            }
        }
        Command::Classify { inputs, choice, seed } => {
            let (cohort, cfg) = inputs.load_cohort()?;
            let config = choice.resolve(&cfg, &cohort)?;
            let result = run_cv(&cohort, &config, cfg.folds, seed)?;
            writeln!(out, "# {config}")?;
            write!(out, "{}", metrics_csv(std::slice::from_ref(&result)))?;
            writeln!(
                out,
                "# mean_auc={} mean_sensitivity={} mean_specificity={}",
                num(result.mean_auc),
                num(result.mean_sensitivity),
                num(result.mean_specificity)
            )?;
        }
        Command::Grid {
            inputs,
            seed,
            workers,
            resume,
            out: dir,
            list,
        } => {
            let (cohort, cfg) = inputs.load_cohort()?;
            let configs = GridSpec::from_experiment(&cfg, cohort.len()).enumerate();
            if list {
                for c in &configs {
                    writeln!(out, "{c}")?;
                }
                return Ok(());
            }
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let opts = GridOptions {
                folds: cfg.folds,
                seed,
                workers,
                checkpoint: Some(dir.join(CHECKPOINT_FILE)),
                resume,
            };
            log::info!("{} entities, {} configs", cohort.len(), configs.len());
            let results = run_grid(&cohort, &configs, &opts)?;
            write_reports(&dir, &cohort, &configs, &results)?;
            let rows = result_rows(&configs, &results);
            write!(out, "{}", aggregate_csv(&aggregate_by_representation(&rows)))?;
        }
        Command::Report { results, detail } => {
            let rows = parse_results_csv(&results.display().to_string(), &read(&results)?)?;
            if detail {
                write!(out, "{}", results_csv(&rows))?;
                writeln!(out)?;
            }
            write!(out, "{}", aggregate_csv(&aggregate_by_representation(&rows)))?;
        }
        Command::Synth { out: dir, n, seed, noise } => {
            let spec = SynthSpec::separable().with_noise_scale(noise);
            let synth = generate_synthetic(&spec, n, seed)?;
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            for (name, body) in [
                ("data.csv", synth.dataset.data_csv()),
                ("events.csv", synth.dataset.events_csv()),
                ("labels.csv", synth.dataset.labels_csv()),
                ("experiment.cfg", synth.experiment.to_string()),
            ] {
                let path = dir.join(name);
                fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
            }
            writeln!(out, "wrote {n} entities to {}", dir.display())?;
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = run(cli) {
        let closed = e
            .downcast_ref::<std::io::Error>()
            .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe);
        if closed {
            return;
        }
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
