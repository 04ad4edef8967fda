use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::fit::{fit_order, OrderFit};
use super::study::StudyResults;

pub const CSV_COLUMNS: [&str; 10] = [
    "solver",
    "order",
    "variant",
    "bh",
    "prediction",
    "corrector",
    "M",
    "nfe",
    "error",
    "seconds",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Argument(format!(
                "unknown format {other:?}, expected csv or json"
            ))),
        }
    }
}

/// Writes the results table; aborted runs get `NaN` in the error column.
pub fn write_csv<W: Write>(results: &StudyResults, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in &results.rows {
        w.write_record([
            r.solver.clone(),
            r.order.to_string(),
            r.variant.clone(),
            r.bh.clone(),
            r.prediction.clone(),
            r.corrector.clone(),
            r.m.to_string(),
            r.nfe.to_string(),
            r.error.unwrap_or(f64::NAN).to_string(),
            format!("{:.6}", r.seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(results: &StudyResults, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, results)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn emit(results: &StudyResults, format: Format, path: &Path) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    match format {
        Format::Csv => write_csv(results, file),
        Format::Json => write_json(results, file),
    }
}

/// One line of a results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub solver: String,
    pub order: usize,
    pub variant: String,
    pub bh: String,
    pub prediction: String,
    pub corrector: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub nfe: usize,
    pub error: f64,
    pub seconds: f64,
}

impl CsvRow {
    fn key(&self) -> [&str; 5] {
        [
            &self.solver,
            &self.variant,
            &self.bh,
            &self.prediction,
            &self.corrector,
        ]
    }
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(Error::Config(format!(
            "unexpected CSV header {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    r.deserialize().map(|row| Ok(row?)).collect()
}

/// A fit over the CSV rows of one configuration.
#[derive(Debug)]
pub struct CsvFit {
    /// The first row of the group, identifying the configuration.
    pub config: CsvRow,
    pub fit: Result<OrderFit>,
}

/// Groups rows by configuration in order of first appearance and fits each group.
pub fn fit_csv(rows: &[CsvRow]) -> Vec<CsvFit> {
    let mut groups: Vec<(&CsvRow, Vec<(usize, f64)>)> = Vec::new();
    for row in rows {
        let point = (row.m, row.error);
        match groups
            .iter_mut()
            .find(|(head, _)| head.key() == row.key() && head.order == row.order)
        {
            Some((_, pts)) => pts.push(point),
            None => groups.push((row, vec![point])),
        }
    }
    groups
        .into_iter()
        .map(|(head, pts)| CsvFit {
            config: head.clone(),
            fit: fit_order(&pts),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::study::{run_study, ConvergenceStudy, RunOptions};
    use crate::solver::SolverConfig;

    fn results() -> StudyResults {
        let study = ConvergenceStudy::from_json(
            r#"{"model":{"family":"x-free-poly","coeffs":[0.3,-1.2,0.5],"dim":4},
                "solvers":[{"order":1,"corrector":"off"}],"step_counts":[10,20,40,80]}"#,
        )
        .unwrap();
        run_study(&study, &RunOptions::default()).unwrap()
    }

    #[test]
    fn empty_results_give_header_only() {
        let mut res = results();
        res.rows.clear();
        let mut buf = Vec::new();
        write_csv(&res, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "solver,order,variant,bh,prediction,corrector,M,nfe,error,seconds\n"
        );
    }

    #[test]
    fn csv_round_trip_and_fit() {
        let res = results();
        let mut buf = Vec::new();
        write_csv(&res, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        let rows = read_csv(text.as_bytes()).unwrap();
        for (a, b) in rows.iter().zip(&res.rows) {
            assert_eq!(a.error, b.error.unwrap());
            assert_eq!(a.nfe, b.nfe);
        }
        let fits = fit_csv(&rows);
        assert_eq!(fits.len(), 1);
        assert_eq!(fits[0].fit.as_ref().unwrap(), res.fit(0).unwrap());
    }

    #[test]
    fn nan_errors_survive_csv() {
        let mut res = results();
        res.rows[0].error = None;
        let mut buf = Vec::new();
        write_csv(&res, &mut buf).unwrap();
        let rows = read_csv(&buf[..]).unwrap();
        assert!(rows[0].error.is_nan());
        assert!(fit_csv(&rows)[0].fit.is_ok());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut res = results();
        res.study.solvers.push(SolverConfig::unipc(3));
        let mut buf = Vec::new();
        write_json(&res, &mut buf).unwrap();
        let back: StudyResults = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back, res);
    }

    #[test]
    fn bad_header_rejected() {
        assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }
}
