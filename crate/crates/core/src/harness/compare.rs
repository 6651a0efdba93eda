use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::run::{read_metrics, RunInfo, METRICS_FILE, RUN_FILE};

/// Final and area-under-curve statistics of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub method: String,
    pub path: PathBuf,
    pub final_validation: f64,
    pub final_success: f64,
    /// Mean validation return over every validation row.
    pub auc: f64,
    pub final_per_label: BTreeMap<String, f64>,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Reads a run directory, or a `metrics.jsonl` path directly.
pub fn summarize_run(path: impl AsRef<Path>) -> Result<RunSummary> {
    let path = path.as_ref();
    let (dir, metrics) = if path.is_dir() {
        (path.to_path_buf(), path.join(METRICS_FILE))
    } else {
        (
            path.parent().map(Path::to_path_buf).unwrap_or_default(),
            path.to_path_buf(),
        )
    };
    let rows = read_metrics(&metrics)?;
    let validated: Vec<_> = rows.iter().filter(|r| r.validation_return.is_some()).collect();
    let last = validated
        .last()
        .ok_or_else(|| Error::Schema(format!("{} has no validation rows", metrics.display())))?;
    let auc = validated.iter().filter_map(|r| r.validation_return).sum::<f64>() / validated.len() as f64;

    let run_file = dir.join(RUN_FILE);
    let method = if run_file.exists() {
        let text = std::fs::read_to_string(&run_file).map_err(|e| Error::io(&run_file, e))?;
        let info: RunInfo = serde_json::from_str(&text)?;
        info.method
    } else {
        dir.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "unknown".into())
    };
    Ok(RunSummary {
        method,
        path: dir,
        final_validation: last.validation_return.unwrap_or(f64::NAN),
        final_success: last.success_rate.unwrap_or(f64::NAN),
        auc,
        final_per_label: last.validation.clone().unwrap_or_default(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub runs: usize,
    pub final_validation: (f64, f64),
    pub success_rate: (f64, f64),
    pub auc: (f64, f64),
    pub per_label: BTreeMap<String, (f64, f64)>,
}

/// Groups runs by method. All runs must report the same validation labels.
pub fn aggregate_runs(runs: &[RunSummary]) -> Result<Vec<MethodSummary>> {
    let Some(first) = runs.first() else {
        return Err(Error::Schema("no runs to compare".into()));
    };
    let labels: Vec<&String> = first.final_per_label.keys().collect();
    for run in runs {
        if !run.final_per_label.keys().eq(labels.iter().copied()) {
            return Err(Error::Schema(format!(
                "{} reports labels {:?}, expected {:?}",
                run.path.display(),
                run.final_per_label.keys().collect::<Vec<_>>(),
                labels
            )));
        }
    }
    let mut groups: BTreeMap<&str, Vec<&RunSummary>> = BTreeMap::new();
    for run in runs {
        groups.entry(&run.method).or_default().push(run);
    }
    Ok(groups
        .into_iter()
        .map(|(method, group)| {
            let stat = |f: &dyn Fn(&RunSummary) -> f64| mean_std(&group.iter().map(|r| f(r)).collect::<Vec<_>>());
            MethodSummary {
                method: method.to_string(),
                runs: group.len(),
                final_validation: stat(&|r| r.final_validation),
                success_rate: stat(&|r| r.final_success),
                auc: stat(&|r| r.auc),
                per_label: labels
                    .iter()
                    .map(|l| ((*l).clone(), stat(&|r| r.final_per_label[*l])))
                    .collect(),
            }
        })
        .collect())
}

/// Summarizes every matched run and writes one CSV row per method.
pub fn compare_runs(inputs: &[PathBuf], report: impl AsRef<Path>) -> Result<Vec<MethodSummary>> {
    let runs = inputs.iter().map(summarize_run).collect::<Result<Vec<_>>>()?;
    let summaries = aggregate_runs(&runs)?;
    let report = report.as_ref();
    if let Some(parent) = report.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut out = csv::Writer::from_path(report).map_err(|e| csv_error(report, e))?;
    let labels: Vec<String> = summaries[0].per_label.keys().cloned().collect();
    let mut header: Vec<String> = [
        "method",
        "runs",
        "final_validation_mean",
        "final_validation_std",
        "success_rate_mean",
        "success_rate_std",
        "auc_mean",
        "auc_std",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for l in &labels {
        header.push(format!("{l}_mean"));
        header.push(format!("{l}_std"));
    }
    out.write_record(&header).map_err(|e| csv_error(report, e))?;
    for s in &summaries {
        let mut row = vec![s.method.clone(), s.runs.to_string()];
        for (m, sd) in [s.final_validation, s.success_rate, s.auc] {
            row.push(m.to_string());
            row.push(sd.to_string());
        }
        for l in &labels {
            let (m, sd) = s.per_label[l];
            row.push(m.to_string());
            row.push(sd.to_string());
        }
        out.write_record(&row).map_err(|e| csv_error(report, e))?;
    }
    out.flush().map_err(|e| Error::io(report, e))?;
    Ok(summaries)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Schema(format!("{}: {other:?}", path.display())),
    }
}
