//! File formats: variant lists (JSON), sampling configs (TOML), distance
//! matrices, paired samples and run logs (CSV), reports (JSON).

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::PairedSample;
use crate::chirp::{DistanceMatrix, SamplingConfig};
use crate::gridworld::{GridMdp, GridOptions, VariantSpec};
use crate::lifelong::{EpisodeRecord, ScenarioSpec};
use crate::{Error, Result};

/// Significant digits written for matrix entries.
pub const MATRIX_DIGITS: usize = 6;

/// A variant list, either a bare array or an object with grid options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VariantsFile {
    List(Vec<VariantSpec>),
    WithOptions {
        variants: Vec<VariantSpec>,
        #[serde(default)]
        grid: GridOptions,
    },
}

impl VariantsFile {
    pub fn build(&self) -> Result<Vec<GridMdp>> {
        match self {
            VariantsFile::List(v) => v.iter().map(|s| s.build(&GridOptions::default())).collect(),
            VariantsFile::WithOptions { variants, grid } => variants.iter().map(|s| s.build(grid)).collect(),
        }
    }
}

/// Variants plus the ordered pairs `(i, j)` to evaluate; all ordered pairs
/// of distinct variants when `pairs` is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairsFile {
    pub variants: Vec<VariantSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<[usize; 2]>>,
    #[serde(default)]
    pub grid: GridOptions,
}

impl PairsFile {
    pub fn build(&self) -> Result<(Vec<GridMdp>, Vec<[usize; 2]>)> {
        let mdps: Vec<GridMdp> = self.variants.iter().map(|s| s.build(&self.grid)).collect::<Result<_>>()?;
        let n = mdps.len();
        let pairs = match &self.pairs {
            Some(p) => {
                if let Some(bad) = p.iter().find(|[i, j]| *i >= n || *j >= n) {
                    return Err(Error::Config(format!("pair {bad:?} indexes past {n} variants")));
                }
                p.clone()
            }
            None => (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| [i, j])).collect(),
        };
        Ok((mdps, pairs))
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn read_sampling_config(path: &Path) -> Result<SamplingConfig> {
    let cfg: SamplingConfig = toml::from_str(&fs::read_to_string(path)?)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_scenario(path: &Path) -> Result<ScenarioSpec> {
    read_json(path)
}

/// Formats `v` with `digits` significant digits, plain decimal when the
/// exponent allows it.
pub fn format_significant(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let exp = v.abs().log10().floor() as i32;
    let decimals = digits as i32 - 1 - exp;
    if (0..=17).contains(&decimals) {
        let s = format!("{v:.*}", decimals as usize);
        // rounding can carry into a new digit (9.999995 -> 10.00000)
        let back: f64 = s.parse().unwrap_or(v);
        if back != 0.0 && back.abs().log10().floor() as i32 != exp && decimals > 0 {
            return format!("{v:.*}", decimals as usize - 1);
        }
        s
    } else {
        format!("{v:.*e}", digits - 1)
    }
}

/// Header of ids, then one row per MDP.
pub fn matrix_to_csv(d: &DistanceMatrix) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(d.ids())?;
    for i in 0..d.len() {
        w.write_record(d.row(i).iter().map(|v| format_significant(*v, MATRIX_DIGITS)))?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn write_matrix_csv(path: &Path, d: &DistanceMatrix) -> Result<()> {
    fs::write(path, matrix_to_csv(d)?)?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<DistanceMatrix> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let ids: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    let mut entries = Vec::with_capacity(ids.len() * ids.len());
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != ids.len() {
            return Err(Error::Shape(format!("matrix row has {} entries, header has {}", rec.len(), ids.len())));
        }
        for field in rec.iter() {
            entries.push(field.trim().parse::<f64>().map_err(|e| Error::Validation(format!("{field:?}: {e}")))?);
        }
    }
    DistanceMatrix::new(ids, entries, 1)
}

pub fn write_records<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// `pair_id, chirp, sopr` rows; values must be finite.
pub fn read_pairs_csv(path: &Path) -> Result<Vec<PairedSample>> {
    let rows: Vec<PairedSample> = read_records(path)?;
    if let Some(bad) = rows.iter().find(|s| !s.chirp.is_finite() || !s.sopr.is_finite()) {
        return Err(Error::Validation(format!("pair {} has a non-finite value", bad.pair_id)));
    }
    Ok(rows)
}

pub fn read_runlog_csv(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let rows: Vec<EpisodeRecord> = read_records(path)?;
    if rows.iter().enumerate().any(|(i, r)| r.episode != i) {
        return Err(Error::Validation("episode indices are not contiguous from 0".into()));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(format_significant(0.0, 6), "0");
        assert_eq!(format_significant(0.123456789, 6), "0.123457");
        assert_eq!(format_significant(12.3456789, 6), "12.3457");
        assert_eq!(format_significant(9.9999996, 6), "10.0000");
        assert_eq!(format_significant(1.5e-30, 6), "1.50000e-30");
        assert_eq!(format_significant(2.0, 6), "2.00000");
    }

    #[test]
    fn matrix_round_trip() {
        let d = DistanceMatrix::new(vec!["a".into(), "b".into()], vec![0.0, 0.25, 0.25, 0.0], 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_matrix_csv(&p, &d).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "a,b\n0,0.250000\n0.250000,0\n");
        assert_eq!(read_matrix_csv(&p).unwrap(), d);
    }

    #[test]
    fn variants_in_both_shapes() {
        let bare: VariantsFile = serde_json::from_str(r#"[{"goal":[10,10],"start":[1,1]}]"#).unwrap();
        assert_eq!(bare.build().unwrap()[0].c_scale, 1.0 / 18.0);
        let obj: VariantsFile = serde_json::from_str(
            r#"{"variants":[{"goal":[2,1],"start":[1,1],"slip":0.1}],
                "grid":{"grid_size":20,"reward_scale":"start_distance","discount":0.95,"horizon":100}}"#,
        )
        .unwrap();
        let m = &obj.build().unwrap()[0];
        assert_eq!((m.c_scale, m.slip_prob), (1.0, 0.1));
    }

    #[test]
    fn default_pairs_are_all_ordered_pairs() {
        let f: PairsFile = serde_json::from_str(r#"{"variants":[{"goal":[2,2],"start":[5,5]},{"goal":[9,9],"start":[5,5]},{"goal":[3,9],"start":[5,5]}]}"#).unwrap();
        let (_, pairs) = f.build().unwrap();
        assert_eq!(pairs.len(), 6);
        let bad = PairsFile { pairs: Some(vec![[0, 3]]), ..f };
        assert!(bad.build().is_err());
    }
}
