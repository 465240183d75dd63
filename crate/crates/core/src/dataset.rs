//! Binned force-versus-distance measurements.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result, RowError};
use crate::table::{self, Row};
use crate::units::{Distance, Force};

pub const DATASET_COLUMNS: [&str; 5] = ["d_um", "force_udyne", "sigma_udyne", "n_samples", "bin_width_um"];

#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub d_mid: Distance,
    pub force: Force,
    pub sigma: Force,
    pub n_samples: u64,
    pub bin_width: Distance,
}

/// Points are sorted by strictly increasing `d_mid`, with positive distance
/// and sigma.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceDataset {
    points: Vec<DataPoint>,
    pub label: String,
}

impl ForceDataset {
    pub fn new(points: Vec<DataPoint>, label: impl Into<String>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("dataset".into()));
        }
        let mut bad = Vec::new();
        for (i, p) in points.iter().enumerate() {
            let line = i as u64 + 1;
            if let Err(msg) = check_point(p) {
                bad.push(RowError { line, message: msg });
            }
            if i > 0 && !(p.d_mid > points[i - 1].d_mid) {
                bad.push(RowError {
                    line,
                    message: "distances must be strictly increasing".into(),
                });
            }
        }
        if !bad.is_empty() {
            return Err(Error::InvalidRows(bad));
        }
        Ok(Self {
            points,
            label: label.into(),
        })
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn from_reader<R: Read>(reader: R, label: impl Into<String>) -> Result<Self> {
        let rows = table::read_rows(reader, &DATASET_COLUMNS, "dataset")?;
        let mut points = Vec::with_capacity(rows.len());
        let mut bad = Vec::new();
        let mut prev: Option<Distance> = None;
        for row in &rows {
            match parse_row(row) {
                Ok(p) => {
                    if let Some(prev) = prev {
                        if p.d_mid == prev {
                            bad.push(row.error(format!("duplicate distance {} um", p.d_mid.um())));
                        } else if p.d_mid < prev {
                            bad.push(row.error(format!("distance {} um is out of ascending order", p.d_mid.um())));
                        }
                    }
                    prev = Some(p.d_mid);
                    points.push(p);
                }
                Err(e) => bad.push(e),
            }
        }
        if !bad.is_empty() {
            return Err(Error::InvalidRows(bad));
        }
        Ok(Self {
            points,
            label: label.into(),
        })
    }

    pub fn write_csv<W: Write>(&self, w: &mut W, comments: &[String]) -> Result<()> {
        table::write_header(w, comments, &DATASET_COLUMNS)?;
        for p in &self.points {
            table::write_row(
                w,
                &[
                    p.d_mid.um(),
                    p.force.udyne(),
                    p.sigma.udyne(),
                    p.n_samples as f64,
                    p.bin_width.um(),
                ],
            )?;
        }
        Ok(())
    }
}

fn check_point(p: &DataPoint) -> std::result::Result<(), String> {
    if !(p.d_mid.si() > 0.0) || !p.d_mid.is_finite() {
        return Err(format!("d_um must be positive, got {}", p.d_mid.um()));
    }
    if !(p.sigma.si() > 0.0) || !p.sigma.is_finite() {
        return Err(format!("sigma_udyne must be positive, got {}", p.sigma.udyne()));
    }
    if !p.force.is_finite() {
        return Err("force_udyne must be finite".into());
    }
    if p.n_samples == 0 {
        return Err("n_samples must be a positive integer".into());
    }
    if !(p.bin_width.si() >= 0.0) || !p.bin_width.is_finite() {
        return Err(format!("bin_width_um must be non-negative, got {}", p.bin_width.um()));
    }
    Ok(())
}

fn parse_row(row: &Row) -> std::result::Result<DataPoint, RowError> {
    let d = row.float(0, "d_um")?;
    let f = row.float(1, "force_udyne")?;
    let s = row.float(2, "sigma_udyne")?;
    let n = row.fields[3]
        .parse::<u64>()
        .map_err(|_| row.error(format!("n_samples: '{}' is not a positive integer", row.fields[3])))?;
    let w = row.float(4, "bin_width_um")?;
    let p = DataPoint {
        d_mid: Distance::from_um(d),
        force: Force::from_udyne(f),
        sigma: Force::from_udyne(s),
        n_samples: n,
        bin_width: Distance::from_um(w),
    };
    check_point(&p).map_err(|m| row.error(m))?;
    Ok(p)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<ForceDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    ForceDataset::from_reader(file, path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SEVEN: &str = "# synthetic\n\
        d_um, force_udyne, sigma_udyne, n_samples, bin_width_um\n\
        0.62, 500.1, 10.5, 12, 0.1\n\
        0.75, 420, 9, 15, 0.1\n\
        1.0, 260.5, 4, 60, 1\n\
        2.0, 110, 3.2, 60, 1\n\
        3.0, 73.1, 3, 60, 1\n\
        4.5, 48, 2.9, 60, 1\n\
        6.0, 36.2, 2.8, 60, 1\n";

    #[test]
    fn loads_seven_rows() {
        let ds = ForceDataset::from_reader(SEVEN.as_bytes(), "seven").unwrap();
        assert_eq!(ds.len(), 7);
        assert!(ds.points().windows(2).all(|w| w[0].d_mid < w[1].d_mid));
        assert!((ds.points()[0].d_mid.um() - 0.62).abs() < 1e-15);
    }

    #[test]
    fn zero_sigma_names_the_row() {
        let text = "d_um,force_udyne,sigma_udyne,n_samples,bin_width_um\n1,2,3,4,1\n2,2,0,4,1\n";
        let err = ForceDataset::from_reader(text.as_bytes(), "x").unwrap_err();
        match err {
            Error::InvalidRows(rows) => {
                assert_eq!(rows.len(), 1);
                assert_eq!(rows[0].line, 3);
                assert!(rows[0].message.contains("sigma"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_only_is_empty() {
        let text = "d_um,force_udyne,sigma_udyne,n_samples,bin_width_um\n# nothing\n";
        assert!(matches!(
            ForceDataset::from_reader(text.as_bytes(), "x"),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn unsorted_and_duplicate_rows_listed() {
        let text = "d_um,force_udyne,sigma_udyne,n_samples,bin_width_um\n\
                    1,2,3,4,1\n1,2,3,4,1\n0.5,2,3,4,1\nabc,2,3,4,1\n";
        let Error::InvalidRows(rows) = ForceDataset::from_reader(text.as_bytes(), "x").unwrap_err() else {
            panic!()
        };
        let lines: Vec<u64> = rows.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![3, 4, 5]);
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_bit_identical(
            raw in prop::collection::vec((1u32..10_000_000, -9_999_999i64..9_999_999, 1u32..999_999, 1u64..10_000, 0u32..99_999), 1..20)
        ) {
            // Decimal inputs with up to 7 significant digits, as a measurement file would hold.
            let mut d_acc = 0u64;
            let mut text = String::from("d_um,force_udyne,sigma_udyne,n_samples,bin_width_um\n");
            for (dd, f, s, n, w) in &raw {
                d_acc += *dd as u64;
                text.push_str(&format!(
                    "{},{},{},{},{}\n",
                    d_acc as f64 / 1e4,
                    *f as f64 / 1e3,
                    *s as f64 / 1e4,
                    n,
                    *w as f64 / 1e5
                ));
            }
            let ds = ForceDataset::from_reader(text.as_bytes(), "p").unwrap();
            let mut out = Vec::new();
            ds.write_csv(&mut out, &[]).unwrap();
            let again = ForceDataset::from_reader(out.as_slice(), "p").unwrap();
            prop_assert_eq!(ds.points(), again.points());
            let parsed_in: Vec<f64> = text.lines().skip(1).flat_map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>()).collect();
            let out_text = String::from_utf8(out).unwrap();
            let parsed_out: Vec<f64> = out_text.lines().skip(1).flat_map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>()).collect();
            prop_assert_eq!(
                parsed_in.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                parsed_out.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
