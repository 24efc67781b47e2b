//! Grid execution on a fixed-size worker pool, with a checkpoint file of completed
//! fold metrics so an interrupted run can resume.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::hash::{DefaultHasher, Hash, Hasher};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration as WallTime;

use rayon::prelude::*;

use crate::error::{Error, Result};

use super::cohort::Cohort;
use super::cv::{evaluate_group, ExperimentResult, FoldMetrics, FoldPlan};
use super::grid::MatchConfig;
use super::report::{
    aggregate_by_representation, aggregate_csv, excluded_csv, metrics_csv, metrics_line, parse_metrics_line,
    raw_duplicates, results_csv, ResultRow,
};

#[derive(Debug, Clone, PartialEq)]
pub struct GridOptions {
    pub folds: usize,
    pub seed: u64,
    pub workers: usize,
    pub checkpoint: Option<PathBuf>,
    pub resume: bool,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            folds: 10,
            seed: 0,
            workers: 1,
            checkpoint: None,
            resume: false,
        }
    }
}

/// Identifies the inputs a checkpoint belongs to.
pub fn fingerprint(cohort: &Cohort, configs: &[MatchConfig], opts: &GridOptions) -> String {
    let mut h = DefaultHasher::new();
    (opts.folds, opts.seed).hash(&mut h);
    for e in &cohort.entities {
        (&e.id, &e.label, e.tms.start, e.tms.end).hash(&mut h);
        for (name, c) in &e.concepts {
            name.hash(&mut h);
            for s in &c.in_scope {
                (s.time, s.value.to_string()).hash(&mut h);
            }
        }
    }
    for c in configs {
        c.to_string().hash(&mut h);
    }
    format!("{:016x}", h.finish())
}

const CHECKPOINT_TAG: &str = "# idtw checkpoint";

fn read_checkpoint(path: &Path, expected: &str, folds: usize) -> Result<BTreeMap<usize, Vec<Option<FoldMetrics>>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next().and_then(|l| l.strip_prefix(CHECKPOINT_TAG)) {
        Some(fp) if fp.trim() == expected => {}
        _ => {
            return Err(Error::Config(format!(
                "{} was written for different inputs; remove it or run without --resume",
                path.display()
            )))
        }
    }
    let mut partial: BTreeMap<usize, Vec<Option<Option<FoldMetrics>>>> = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        match parse_metrics_line(line) {
            Ok((id, fold, m)) if fold < folds => {
                partial.entry(id).or_insert_with(|| vec![None; folds])[fold] = Some(m);
            }
            // A torn final line from an interrupted write is recomputed.
            _ => log::warn!("{}:{}: ignoring unreadable checkpoint line", path.display(), i + 2),
        }
    }
    Ok(partial
        .into_iter()
        .filter_map(|(id, folds)| folds.into_iter().collect::<Option<Vec<_>>>().map(|f| (id, f)))
        .collect())
}

/// Runs every config, sharing distances inside each group. Results come back in config
/// order whatever the worker count.
pub fn run_grid(cohort: &Cohort, configs: &[MatchConfig], opts: &GridOptions) -> Result<Vec<ExperimentResult>> {
    let plan = FoldPlan::new(cohort, opts.folds, opts.seed)?;
    let fp = fingerprint(cohort, configs, opts);
    let mut done = BTreeMap::new();
    let checkpoint = match &opts.checkpoint {
        Some(path) => {
            if opts.resume && path.exists() {
                done = read_checkpoint(path, &fp, opts.folds)?;
                log::info!("resuming: {} configs already complete", done.len());
            } else {
                fs::write(path, format!("{CHECKPOINT_TAG} {fp}\n")).map_err(|e| Error::io(path, e))?;
            }
            let file = OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
            Some((path.clone(), Mutex::new(file)))
        }
        None => None,
    };

    let mut groups: Vec<Vec<&MatchConfig>> = Vec::new();
    for c in configs {
        match groups.last_mut() {
            Some(g) if g[0].group == c.group => g.push(c),
            _ => groups.push(vec![c]),
        }
    }
    let pending: Vec<&Vec<&MatchConfig>> = groups
        .iter()
        .filter(|g| g.iter().any(|c| !done.contains_key(&c.id)))
        .collect();
    log::info!(
        "{} configs in {} groups, {} groups to run on {} worker(s)",
        configs.len(),
        groups.len(),
        pending.len(),
        opts.workers
    );

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let fresh: Vec<ExperimentResult> = pool.install(|| {
        pending
            .par_iter()
            .map(|group| {
                let results = evaluate_group(cohort, group, &plan)?;
                if let Some((path, file)) = &checkpoint {
                    write_checkpoint(path, file, &results)?;
                }
                log::debug!("group {} done ({} configs)", group[0].group, group.len());
                Ok(results)
            })
            .collect::<Result<Vec<Vec<ExperimentResult>>>>()
    })?
    .into_iter()
    .flatten()
    .collect();

    let mut by_id: BTreeMap<usize, ExperimentResult> = done
        .into_iter()
        .map(|(id, folds)| (id, ExperimentResult::from_folds(id, folds, WallTime::ZERO)))
        .collect();
    by_id.extend(fresh.into_iter().map(|r| (r.config_id, r)));
    configs
        .iter()
        .map(|c| {
            by_id
                .remove(&c.id)
                .ok_or_else(|| Error::Precondition(format!("no result for config {}", c.id)))
        })
        .collect()
}

fn write_checkpoint(path: &Path, file: &Mutex<File>, results: &[ExperimentResult]) -> Result<()> {
    let mut block = String::new();
    for r in results {
        for (f, m) in r.folds.iter().enumerate() {
            block.push_str(&metrics_line(r.config_id, f, m.as_ref()));
            block.push('\n');
        }
    }
    let mut file = file.lock().unwrap_or_else(|p| p.into_inner());
    file.write_all(block.as_bytes())
        .and_then(|_| file.flush())
        .map_err(|e| Error::io(path, e))
}

/// Report file names inside an output directory.
pub const METRICS_FILE: &str = "metrics.csv";
pub const RESULTS_FILE: &str = "results.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const EXCLUDED_FILE: &str = "excluded.csv";
pub const CHECKPOINT_FILE: &str = "progress.ckpt";

pub fn result_rows(configs: &[MatchConfig], results: &[ExperimentResult]) -> Vec<ResultRow> {
    let dups = raw_duplicates(configs);
    configs
        .iter()
        .zip(results)
        .map(|(c, r)| ResultRow::new(c, r, dups.get(&c.id).copied()))
        .collect()
}

/// Writes every report table into `dir`. Reports carry no timing.
pub fn write_reports(dir: &Path, cohort: &Cohort, configs: &[MatchConfig], results: &[ExperimentResult]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rows = result_rows(configs, results);
    let files = [
        (METRICS_FILE, metrics_csv(results)),
        (RESULTS_FILE, results_csv(&rows)),
        (AGGREGATE_FILE, aggregate_csv(&aggregate_by_representation(&rows))),
        (EXCLUDED_FILE, excluded_csv(&cohort.excluded)),
    ];
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
