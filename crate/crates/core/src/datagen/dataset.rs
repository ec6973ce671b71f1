use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::datagen::weather::{csv_err, uniform_step};
use crate::error::{Error, Result};
use crate::io::{format_timestamp, parse_timestamp};
use crate::model::InputSeries;

/// Uniformly sampled building operation record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperationalDataset {
    pub timestamps: Vec<NaiveDateTime>,
    pub t_oa: Vec<f64>,
    pub q_sol_win: Vec<f64>,
    /// Heating runtime fraction per step.
    pub u_h: Vec<f64>,
    /// Cooling runtime fraction per step.
    pub u_c: Vec<f64>,
    /// Zone air temperature at the start of each step, °C.
    pub y_za: Vec<f64>,
    pub t_hsp: Vec<f64>,
    pub t_csp: Vec<f64>,
    /// True internal gains, kW; only known for synthetic data.
    pub q_g: Option<Vec<f64>>,
}

pub const DATASET_COLUMNS: [&str; 9] = ["timestamp", "Toa", "qsol_win", "uh", "uc", "yza", "Thsp", "Tcsp", "Qg"];

impl OperationalDataset {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn step_seconds(&self) -> Result<f64> {
        uniform_step(&self.timestamps)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let cols: [(&'static str, &Vec<f64>); 7] = [
            ("Toa", &self.t_oa),
            ("qsol_win", &self.q_sol_win),
            ("uh", &self.u_h),
            ("uc", &self.u_c),
            ("yza", &self.y_za),
            ("Thsp", &self.t_hsp),
            ("Tcsp", &self.t_csp),
        ];
        for (what, c) in cols.iter() {
            if c.len() != n {
                return Err(Error::LengthMismatch {
                    what,
                    expected: n,
                    found: c.len(),
                });
            }
        }
        if let Some(g) = &self.q_g {
            if g.len() != n {
                return Err(Error::LengthMismatch {
                    what: "Qg",
                    expected: n,
                    found: g.len(),
                });
            }
        }
        self.step_seconds()?;
        if let Some(k) = self.y_za.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("yza at step {k}")));
        }
        for k in 0..n {
            let (h, c) = (self.u_h[k], self.u_c[k]);
            if !(0.0..=1.0).contains(&h) || !(0.0..=1.0).contains(&c) {
                return Err(Error::InvalidArgument(format!("runtime fraction outside [0, 1] at step {k}")));
            }
        }
        Ok(())
    }

    /// Model inputs; the gain channel is zero unless `with_gain` is set and
    /// gains are recorded.
    pub fn inputs(&self, with_gain: bool) -> InputSeries {
        let n = self.len();
        InputSeries {
            w: (0..n).map(|k| [self.t_oa[k], self.q_sol_win[k]]).collect(),
            u: (0..n).map(|k| [self.u_h[k], self.u_c[k]]).collect(),
            q_g: match (&self.q_g, with_gain) {
                (Some(g), true) => g.clone(),
                _ => vec![0.0; n],
            },
        }
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> OperationalDataset {
        OperationalDataset {
            timestamps: self.timestamps[range.clone()].to_vec(),
            t_oa: self.t_oa[range.clone()].to_vec(),
            q_sol_win: self.q_sol_win[range.clone()].to_vec(),
            u_h: self.u_h[range.clone()].to_vec(),
            u_c: self.u_c[range.clone()].to_vec(),
            y_za: self.y_za[range.clone()].to_vec(),
            t_hsp: self.t_hsp[range.clone()].to_vec(),
            t_csp: self.t_csp[range.clone()].to_vec(),
            q_g: self.q_g.as_ref().map(|g| g[range].to_vec()),
        }
    }

    /// Index of the first sample at or after `t`.
    pub fn index_of(&self, t: NaiveDateTime) -> Option<usize> {
        self.timestamps.iter().position(|&s| s >= t)
    }

    pub fn without_gains(&self) -> OperationalDataset {
        OperationalDataset {
            q_g: None,
            ..self.clone()
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let ncol = if self.q_g.is_some() { 9 } else { 8 };
        wtr.write_record(&DATASET_COLUMNS[..ncol]).map_err(csv_err)?;
        for k in 0..self.len() {
            let mut row = vec![
                format_timestamp(&self.timestamps[k]),
                self.t_oa[k].to_string(),
                self.q_sol_win[k].to_string(),
                self.u_h[k].to_string(),
                self.u_c[k].to_string(),
                self.y_za[k].to_string(),
                self.t_hsp[k].to_string(),
                self.t_csp[k].to_string(),
            ];
            if let Some(g) = &self.q_g {
                row.push(g[k].to_string());
            }
            wtr.write_record(&row).map_err(csv_err)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv writer emits utf-8"))
    }

    pub fn from_csv_str(text: &str) -> Result<OperationalDataset> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(csv_err)?.clone();
        let mut idx = [usize::MAX; 9];
        for (j, name) in DATASET_COLUMNS.iter().enumerate() {
            match headers.iter().position(|h| h == *name) {
                Some(p) => idx[j] = p,
                None if j == 8 => {}
                None => {
                    return Err(Error::Parse {
                        location: "line 1".into(),
                        message: format!("missing column `{name}`"),
                    })
                }
            }
        }
        let has_gain = idx[8] != usize::MAX;
        let mut d = OperationalDataset {
            timestamps: Vec::new(),
            t_oa: Vec::new(),
            q_sol_win: Vec::new(),
            u_h: Vec::new(),
            u_c: Vec::new(),
            y_za: Vec::new(),
            t_hsp: Vec::new(),
            t_csp: Vec::new(),
            q_g: has_gain.then(Vec::new),
        };
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(csv_err)?;
            let perr = |message: String| Error::Parse {
                location: format!("line {line}"),
                message,
            };
            let field = |j: usize| -> Result<f64> {
                let s = rec.get(idx[j]).ok_or_else(|| perr("short row".into()))?;
                s.parse::<f64>().map_err(|_| perr(format!("cannot parse {} from `{s}`", DATASET_COLUMNS[j])))
            };
            let ts = rec.get(idx[0]).ok_or_else(|| perr("short row".into()))?;
            d.timestamps.push(parse_timestamp(ts).map_err(perr)?);
            d.t_oa.push(field(1)?);
            d.q_sol_win.push(field(2)?);
            d.u_h.push(field(3)?);
            d.u_c.push(field(4)?);
            d.y_za.push(field(5)?);
            d.t_hsp.push(field(6)?);
            d.t_csp.push(field(7)?);
            if let Some(g) = d.q_g.as_mut() {
                g.push(field(8)?);
            }
        }
        d.validate()?;
        Ok(d)
    }

    pub fn read_csv(path: &std::path::Path) -> Result<OperationalDataset> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, NaiveDate};

    fn tiny(with_gain: bool) -> OperationalDataset {
        let t0 = NaiveDate::from_ymd_opt(2021, 8, 2).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let n = 4;
        OperationalDataset {
            timestamps: (0..n).map(|k| t0 + Duration::minutes(15 * k)).collect(),
            t_oa: vec![15.0, 15.5, 16.0, 16.25],
            q_sol_win: vec![0.0, 0.0, 0.1, 0.2],
            u_h: vec![0.0, 0.4, 0.0, 0.0],
            u_c: vec![0.0, 0.0, 0.0, 1.0],
            y_za: vec![21.0, 20.9, 21.3, 22.0],
            t_hsp: vec![20.0; 4],
            t_csp: vec![24.0; 4],
            q_g: with_gain.then(|| vec![0.1, 0.2, 0.3, 0.123456789]),
        }
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        for g in [true, false] {
            let d = tiny(g);
            let text = d.to_csv_string().unwrap();
            assert!(text.starts_with("timestamp,Toa,qsol_win,uh,uc,yza,Thsp,Tcsp"));
            assert_eq!(OperationalDataset::from_csv_str(&text).unwrap(), d);
        }
    }

    #[test]
    fn validation_catches_bad_rows() {
        let mut d = tiny(false);
        d.u_h[1] = 1.5;
        assert!(d.validate().is_err());
        let mut d = tiny(false);
        d.y_za.pop();
        assert!(matches!(d.validate(), Err(Error::LengthMismatch { .. })));
        let text = "timestamp,Toa\n2021-01-01T00:00:00,1\n";
        assert!(OperationalDataset::from_csv_str(text).is_err());
    }

    #[test]
    fn inputs_zero_gain_unless_requested() {
        let d = tiny(true);
        assert_eq!(d.inputs(false).q_g, vec![0.0; 4]);
        assert_eq!(d.inputs(true).q_g[3], 0.123456789);
        assert_eq!(d.inputs(true).u[1], [0.4, 0.0]);
    }
}
