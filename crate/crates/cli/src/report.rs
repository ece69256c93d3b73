//! Cross-run aggregation of `metrics.csv` files.

use std::fs;
use std::path::{Path, PathBuf};

use rsgnn::Error;

/// `metrics.csv` of each run directory, or of the `seed-*` children of a
/// parent directory, in seed order.
fn collect(paths: &[PathBuf]) -> rsgnn::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        let direct = p.join("metrics.csv");
        if direct.is_file() {
            files.push(direct);
            continue;
        }
        let entries = fs::read_dir(p).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        })?;
        let mut children: Vec<(u64, PathBuf)> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                let seed = name.strip_prefix("seed-")?.parse().ok()?;
                Some((seed, e.path().join("metrics.csv")))
            })
            .filter(|(_, f)| f.is_file())
            .collect();
        if children.is_empty() {
            return Err(Error::Data(format!(
                "{}: no metrics.csv found",
                p.display()
            )));
        }
        children.sort();
        files.extend(children.into_iter().map(|(_, f)| f));
    }
    Ok(files)
}

pub fn run(paths: &[PathBuf], out: &Path) -> rsgnn::Result<()> {
    let files = collect(paths)?;
    let mut header: Option<csv::StringRecord> = None;
    let mut rows = Vec::new();
    for f in &files {
        let mut reader =
            csv::Reader::from_path(f).map_err(|e| Error::Parse(format!("{}: {e}", f.display())))?;
        let h = reader
            .headers()
            .map_err(|e| Error::Parse(format!("{}: {e}", f.display())))?
            .clone();
        match &header {
            None => header = Some(h),
            Some(prev) if *prev != h => {
                return Err(Error::Data(format!(
                    "{}: columns differ from earlier runs",
                    f.display()
                )))
            }
            Some(_) => {}
        }
        for rec in reader.records() {
            rows.push(rec.map_err(|e| Error::Parse(format!("{}: {e}", f.display())))?);
        }
    }
    let header = header.expect("at least one file");
    let models: std::collections::BTreeSet<&str> = rows.iter().filter_map(|r| r.get(0)).collect();
    if models.len() > 1 {
        return Err(Error::Data(format!("runs mix models {models:?}")));
    }

    let mut writer =
        csv::Writer::from_path(out).map_err(|e| Error::Parse(format!("{}: {e}", out.display())))?;
    let io = |e: csv::Error| Error::Parse(format!("{}: {e}", out.display()));
    writer
        .write_record(["metric", "n", "mean", "std"])
        .map_err(io)?;
    for (col, name) in header.iter().enumerate().skip(1) {
        let values: Vec<f64> = rows
            .iter()
            .filter_map(|r| r.get(col))
            .filter(|v| !v.is_empty())
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("{name}: {v:?}: {e}")))
            })
            .collect::<rsgnn::Result<_>>()?;
        if values.is_empty() {
            continue;
        }
        let (mean, std) = mean_std(&values);
        writer
            .write_record([
                name.to_string(),
                values.len().to_string(),
                mean.to_string(),
                std.to_string(),
            ])
            .map_err(io)?;
    }
    writer.flush().map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    println!("aggregated {} runs into {}", rows.len(), out.display());
    Ok(())
}

/// Mean and sample standard deviation (0 for a single value).
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_standard_deviation() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
