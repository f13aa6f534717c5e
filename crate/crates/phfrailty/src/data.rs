//! Right-censored survival datasets and their CSV representation.
//!
//! The on-disk format has a header with columns `time`, `status`
//! (1 = event, 0 = censored), optional covariates `x1..xd`, and an optional
//! `cluster` id for grouped data.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub time: f64,
    pub event: bool,
    pub covariates: Vec<f64>,
    pub cluster: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub observations: Vec<Observation>,
}

impl Dataset {
    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        let ds = Dataset { observations };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.observations.is_empty() {
            return Err(Error::Data("dataset is empty".into()));
        }
        let d = self.observations[0].covariates.len();
        for (i, obs) in self.observations.iter().enumerate() {
            if !(obs.time > 0.0) || !obs.time.is_finite() {
                return Err(Error::Data(format!(
                    "row {i}: time must be positive and finite, got {}",
                    obs.time
                )));
            }
            if obs.covariates.len() != d {
                return Err(Error::Data(format!(
                    "row {i}: covariate width {} differs from {}",
                    obs.covariates.len(),
                    d
                )));
            }
            if obs.covariates.iter().any(|x| !x.is_finite()) {
                return Err(Error::Data(format!("row {i}: non-finite covariate")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn covariate_width(&self) -> usize {
        self.observations.first().map_or(0, |o| o.covariates.len())
    }

    pub fn event_count(&self) -> usize {
        self.observations.iter().filter(|o| o.event).count()
    }

    pub fn has_clusters(&self) -> bool {
        self.observations.iter().any(|o| o.cluster.is_some())
    }

    /// Multiply every time by `factor` (e.g. re-scaling monetary losses).
    pub fn scale_times(&mut self, factor: f64) {
        for obs in &mut self.observations {
            obs.time *= factor;
        }
    }

    /// Group row indices by cluster id, preserving first-appearance order.
    /// Rows without a cluster id form singleton groups.
    pub fn cluster_groups(&self) -> Vec<Vec<usize>> {
        let mut order: Vec<u64> = Vec::new();
        let mut map: std::collections::HashMap<u64, Vec<usize>> = std::collections::HashMap::new();
        let mut singletons: Vec<Vec<usize>> = Vec::new();
        for (i, obs) in self.observations.iter().enumerate() {
            match obs.cluster {
                Some(c) => {
                    let entry = map.entry(c).or_insert_with(|| {
                        order.push(c);
                        Vec::new()
                    });
                    entry.push(i);
                }
                None => singletons.push(vec![i]),
            }
        }
        let mut groups: Vec<Vec<usize>> = order.into_iter().map(|c| map.remove(&c).unwrap()).collect();
        groups.extend(singletons);
        groups
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let mut time_idx = None;
        let mut status_idx = None;
        let mut cluster_idx = None;
        let mut cov_idx: Vec<(usize, usize)> = Vec::new();
        for (i, name) in headers.iter().enumerate() {
            match name.trim() {
                "time" => time_idx = Some(i),
                "status" => status_idx = Some(i),
                "cluster" => cluster_idx = Some(i),
                other => {
                    if let Some(num) = other.strip_prefix('x') {
                        if let Ok(k) = num.parse::<usize>() {
                            cov_idx.push((k, i));
                        }
                    }
                }
            }
        }
        let time_idx = time_idx.ok_or_else(|| Error::Data("missing `time` column".into()))?;
        let status_idx = status_idx.ok_or_else(|| Error::Data("missing `status` column".into()))?;
        cov_idx.sort_unstable();

        let mut observations = Vec::new();
        for (row_no, record) in reader.records().enumerate() {
            let record = record?;
            let parse = |idx: usize, what: &str| -> Result<f64> {
                record
                    .get(idx)
                    .ok_or_else(|| Error::Data(format!("row {row_no}: missing {what}")))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Data(format!("row {row_no}: unparsable {what}")))
            };
            let time = parse(time_idx, "time")?;
            let status = parse(status_idx, "status")?;
            if status != 0.0 && status != 1.0 {
                return Err(Error::Data(format!(
                    "row {row_no}: status must be 0 or 1, got {status}"
                )));
            }
            let covariates = cov_idx
                .iter()
                .map(|&(k, i)| parse(i, &format!("x{k}")))
                .collect::<Result<Vec<f64>>>()?;
            let cluster = match cluster_idx {
                Some(i) => {
                    let raw = record.get(i).unwrap_or("").trim();
                    if raw.is_empty() {
                        None
                    } else {
                        Some(raw.parse::<u64>().map_err(|_| {
                            Error::Data(format!("row {row_no}: unparsable cluster id"))
                        })?)
                    }
                }
                None => None,
            };
            observations.push(Observation {
                time,
                event: status == 1.0,
                covariates,
                cluster,
            });
        }
        Dataset::new(observations)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        let d = self.covariate_width();
        let with_cluster = self.has_clusters();
        let mut header = vec!["time".to_string(), "status".to_string()];
        for k in 1..=d {
            header.push(format!("x{k}"));
        }
        if with_cluster {
            header.push("cluster".into());
        }
        writer.write_record(&header)?;
        for obs in &self.observations {
            let mut row = vec![
                format!("{:.17e}", obs.time),
                if obs.event { "1".into() } else { "0".into() },
            ];
            for x in &obs.covariates {
                row.push(format!("{x:.17e}"));
            }
            if with_cluster {
                row.push(obs.cluster.map_or(String::new(), |c| c.to_string()));
            }
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// A non-decreasing step function starting at 0 (cumulative-hazard estimates).
#[derive(Clone, Debug, PartialEq)]
pub struct StepFunction {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepFunction {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(Error::Dimension("knots and values differ in length".into()));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data("knots must be strictly increasing".into()));
        }
        if values.windows(2).any(|w| w[0] > w[1]) || values.first().is_some_and(|&v| v < 0.0) {
            return Err(Error::Data("values must be non-decreasing from 0".into()));
        }
        Ok(StepFunction { knots, values })
    }

    /// Value of the step function at `t` (right-continuous, 0 before the first knot).
    pub fn eval(&self, t: f64) -> f64 {
        match self.knots.partition_point(|&k| k <= t) {
            0 => 0.0,
            i => self.values[i - 1],
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["time", "cumhaz"])?;
        for (k, v) in self.knots.iter().zip(&self.values) {
            writer.write_record(&[format!("{k:.17e}"), format!("{v:.17e}")])?;
        }
        writer.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(time: f64, event: bool) -> Observation {
        Observation {
            time,
            event,
            covariates: vec![],
            cluster: None,
        }
    }

    #[test]
    fn rejects_nonpositive_times() {
        assert!(Dataset::new(vec![obs(0.0, true)]).is_err());
        assert!(Dataset::new(vec![obs(-1.0, false)]).is_err());
    }

    #[test]
    fn rejects_ragged_covariates() {
        let a = Observation {
            covariates: vec![1.0],
            ..obs(1.0, true)
        };
        let b = Observation {
            covariates: vec![1.0, 2.0],
            ..obs(2.0, true)
        };
        assert!(Dataset::new(vec![a, b]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let ds = Dataset::new(vec![
            Observation {
                time: 1.25,
                event: true,
                covariates: vec![0.0, 3.5],
                cluster: Some(1),
            },
            Observation {
                time: 2.5,
                event: false,
                covariates: vec![1.0, -0.25],
                cluster: Some(2),
            },
        ])
        .unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let tmp = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(tmp.path(), &buf).unwrap();
        let back = Dataset::read_csv(tmp.path()).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn cluster_groups_preserve_order() {
        let mk = |t: f64, c: Option<u64>| Observation {
            time: t,
            event: true,
            covariates: vec![],
            cluster: c,
        };
        let ds = Dataset::new(vec![
            mk(1.0, Some(5)),
            mk(2.0, Some(3)),
            mk(3.0, Some(5)),
            mk(4.0, None),
        ])
        .unwrap();
        assert_eq!(ds.cluster_groups(), vec![vec![0, 2], vec![1], vec![3]]);
    }

    #[test]
    fn step_function_eval() {
        let f = StepFunction::new(vec![1.0, 2.0], vec![0.5, 1.5]).unwrap();
        assert_eq!(f.eval(0.5), 0.0);
        assert_eq!(f.eval(1.0), 0.5);
        assert_eq!(f.eval(1.9), 0.5);
        assert_eq!(f.eval(5.0), 1.5);
    }

    #[test]
    fn step_function_rejects_decrease() {
        assert!(StepFunction::new(vec![1.0, 2.0], vec![1.0, 0.5]).is_err());
        assert!(StepFunction::new(vec![2.0, 1.0], vec![0.5, 1.0]).is_err());
    }
}
