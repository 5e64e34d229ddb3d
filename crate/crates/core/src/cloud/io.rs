//! CSV frame files.
//!
//! LiDAR: header `t,x,y,z`. Radar: header `t,x,y,z,doppler[,power]`.
//! Every row repeats the frame timestamp. Ids are assigned by row order.
//! A sequence directory holds `frames.csv` (`index,timestamp`) and
//! `<index:06>_lidar.csv` / `<index:06>_radar.csv` per frame; a missing LiDAR
//! file marks a deleted scan.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{LidarCloud, Point3, RadarCloud, RadarPoint};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudKind {
    Lidar,
    Radar,
}

impl CloudKind {
    fn header(self) -> &'static [&'static str] {
        match self {
            CloudKind::Lidar => &["t", "x", "y", "z"],
            CloudKind::Radar => &["t", "x", "y", "z", "doppler"],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CloudKind::Lidar => "lidar",
            CloudKind::Radar => "radar",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnyCloud {
    Lidar(LidarCloud),
    Radar(RadarCloud),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameEntry {
    pub index: usize,
    pub timestamp: f64,
}

pub fn frame_file_name(index: usize, kind: CloudKind) -> String {
    format!("{index:06}_{}.csv", kind.name())
}

pub fn labels_file_name(index: usize) -> String {
    format!("labels_{index:06}.csv")
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(file))
}

fn field(path: &Path, line: u64, record: &csv::StringRecord, i: usize, name: &str) -> Result<f64> {
    let raw = record
        .get(i)
        .ok_or_else(|| parse_err(path, line, format!("missing column '{name}'")))?;
    raw.parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("column '{name}': cannot parse '{raw}' as a number")))
}

/// `(line, values)` per data row.
type Rows = Vec<(u64, Vec<f64>)>;

/// Parsed rows of a frame file: timestamp, rows, and whether a power column
/// is present.
fn read_rows(path: &Path, kind: CloudKind) -> Result<(Option<f64>, Rows, bool)> {
    let mut reader = csv_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let expected = kind.header();
    let cols: Vec<&str> = headers.iter().collect();
    let has_power = kind == CloudKind::Radar && cols.len() == 6 && cols[5] == "power";
    if cols.len() < expected.len() || cols[..expected.len()] != *expected || (cols.len() > expected.len() && !has_power) {
        return Err(parse_err(
            path,
            1,
            format!("expected header '{}', found '{}'", expected.join(","), cols.join(",")),
        ));
    }
    let mut timestamp = None;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != cols.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} columns, found {}", cols.len(), record.len()),
            ));
        }
        let mut values = Vec::with_capacity(cols.len());
        for (i, name) in cols.iter().enumerate() {
            if *name == "power" && record.get(i).is_some_and(str::is_empty) {
                values.push(f64::NAN);
                continue;
            }
            let v = field(path, line, &record, i, name)?;
            if !v.is_finite() {
                return Err(Error::Validation(format!(
                    "{}:{line}: column '{name}' is not finite",
                    path.display()
                )));
            }
            values.push(v);
        }
        match timestamp {
            None => timestamp = Some(values[0]),
            Some(t) if t != values[0] => {
                return Err(parse_err(
                    path,
                    line,
                    format!("timestamp {} differs from frame timestamp {t}", values[0]),
                ))
            }
            _ => {}
        }
        rows.push((line, values));
    }
    Ok((timestamp, rows, has_power))
}

pub fn read_lidar_cloud(path: &Path) -> Result<LidarCloud> {
    let (t, rows, _) = read_rows(path, CloudKind::Lidar)?;
    let points = rows
        .into_iter()
        .map(|(_, v)| Point3::new(v[1], v[2], v[3]))
        .collect();
    LidarCloud::new(t.unwrap_or(0.0), CloudKind::Lidar.name(), points)
}

pub fn read_radar_cloud(path: &Path) -> Result<RadarCloud> {
    let (t, rows, has_power) = read_rows(path, CloudKind::Radar)?;
    let points = rows
        .into_iter()
        .map(|(_, v)| RadarPoint {
            position: Point3::new(v[1], v[2], v[3]),
            doppler: v[4],
            power: if has_power && !v[5].is_nan() { Some(v[5]) } else { None },
        })
        .collect();
    RadarCloud::new(t.unwrap_or(0.0), CloudKind::Radar.name(), points)
}

pub fn read_cloud(path: &Path, kind: CloudKind) -> Result<AnyCloud> {
    Ok(match kind {
        CloudKind::Lidar => AnyCloud::Lidar(read_lidar_cloud(path)?),
        CloudKind::Radar => AnyCloud::Radar(read_radar_cloud(path)?),
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_lidar_cloud(path: &Path, cloud: &LidarCloud) -> Result<()> {
    let mut s = String::from("t,x,y,z\n");
    for p in cloud.points() {
        let _ = writeln!(s, "{},{},{},{}", cloud.timestamp, p.x, p.y, p.z);
    }
    write_file(path, &s)
}

pub fn write_radar_cloud(path: &Path, cloud: &RadarCloud) -> Result<()> {
    let with_power = cloud.points().iter().any(|p| p.power.is_some());
    let mut s = String::from(if with_power {
        "t,x,y,z,doppler,power\n"
    } else {
        "t,x,y,z,doppler\n"
    });
    for p in cloud.points() {
        let q = p.position;
        let _ = write!(s, "{},{},{},{},{}", cloud.timestamp, q.x, q.y, q.z, p.doppler);
        if with_power {
            match p.power {
                Some(w) => {
                    let _ = write!(s, ",{w}");
                }
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    write_file(path, &s)
}

pub fn read_manifest(dir: &Path) -> Result<Vec<FrameEntry>> {
    let path: PathBuf = dir.join("frames.csv");
    let mut reader = csv_reader(&path)?;
    let headers = reader
        .headers()
        .map_err(|e| parse_err(&path, 1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["index", "timestamp"] {
        return Err(parse_err(&path, 1, "expected header 'index,timestamp'"));
    }
    let mut frames = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(&path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let raw = record.get(0).unwrap_or("");
        let index = raw
            .parse::<usize>()
            .map_err(|_| parse_err(&path, line, format!("bad frame index '{raw}'")))?;
        let timestamp = field(&path, line, &record, 1, "timestamp")?;
        if !timestamp.is_finite() {
            return Err(Error::Validation(format!("{}:{line}: timestamp is not finite", path.display())));
        }
        frames.push(FrameEntry { index, timestamp });
    }
    Ok(frames)
}

pub fn write_manifest(dir: &Path, frames: &[FrameEntry]) -> Result<()> {
    let mut s = String::from("index,timestamp\n");
    for f in frames {
        let _ = writeln!(s, "{},{}", f.index, f.timestamp);
    }
    write_file(&dir.join("frames.csv"), &s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn reads_lidar_rows_in_order() {
        let d = tmp();
        let p = d.path().join("a.csv");
        fs::write(&p, "t,x,y,z\n1.5,0,0,0\n1.5,1,2,3\n1.5,-1e-3,2.5E2,7\n").unwrap();
        let c = read_lidar_cloud(&p).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.ids(), &[0, 1, 2]);
        assert_eq!(c.timestamp, 1.5);
        assert_eq!(c.points()[2], Point3::new(-1e-3, 250.0, 7.0));
    }

    #[test]
    fn radar_missing_doppler_is_parse_error() {
        let d = tmp();
        let p = d.path().join("r.csv");
        fs::write(&p, "t,x,y,z,doppler\n0,1,1,1,0.5\n0,1,2,3\n").unwrap();
        match read_radar_cloud(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        fs::write(&p, "t,x,y,z\n0,1,2,3\n").unwrap();
        assert!(matches!(read_radar_cloud(&p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn nan_is_validation_error() {
        let d = tmp();
        let p = d.path().join("a.csv");
        fs::write(&p, "t,x,y,z\n0,NaN,0,0\n").unwrap();
        assert!(matches!(read_lidar_cloud(&p), Err(Error::Validation(_))));
    }

    #[test]
    fn garbage_names_line() {
        let d = tmp();
        let p = d.path().join("a.csv");
        fs::write(&p, "t,x,y,z\n0,0,0,0\n0,0,abc,0\n").unwrap();
        let err = read_lidar_cloud(&p).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");
    }

    #[test]
    fn radar_power_optional() {
        let d = tmp();
        let p = d.path().join("r.csv");
        fs::write(&p, "t,x,y,z,doppler,power\n2,1,0,0,-0.5,12.5\n").unwrap();
        let c = read_radar_cloud(&p).unwrap();
        assert_eq!(c.points()[0].power, Some(12.5));
        assert_eq!(c.points()[0].doppler, -0.5);
    }

    #[test]
    fn manifest_round_trip() {
        let d = tmp();
        let frames = vec![
            FrameEntry { index: 0, timestamp: 0.0 },
            FrameEntry { index: 1, timestamp: 0.1 },
        ];
        write_manifest(d.path(), &frames).unwrap();
        assert_eq!(read_manifest(d.path()).unwrap(), frames);
        assert_eq!(frame_file_name(12, CloudKind::Lidar), "000012_lidar.csv");
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![-1e6f64..1e6, any::<f64>().prop_filter("finite", |v| v.is_finite())]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn lidar_write_read_identity(t in finite(), pts in prop::collection::vec((finite(), finite(), finite()), 0..40)) {
            let pts: Vec<Point3> = pts.into_iter().map(|(x, y, z)| Point3::new(x, y, z)).collect();
            prop_assume!(!pts.is_empty());
            let c = LidarCloud::new(t, "lidar", pts).unwrap();
            let d = tmp();
            let p = d.path().join("c.csv");
            write_lidar_cloud(&p, &c).unwrap();
            prop_assert_eq!(read_lidar_cloud(&p).unwrap(), c);
        }

        #[test]
        fn radar_write_read_identity(
            t in finite(),
            pts in prop::collection::vec((finite(), finite(), finite(), finite(), prop::option::of(finite())), 1..40),
        ) {
            let pts: Vec<RadarPoint> = pts.into_iter()
                .map(|(x, y, z, v, w)| RadarPoint { position: Point3::new(x, y, z), doppler: v, power: w })
                .collect();
            let c = RadarCloud::new(t, "radar", pts).unwrap();
            let d = tmp();
            let p = d.path().join("c.csv");
            write_radar_cloud(&p, &c).unwrap();
            prop_assert_eq!(read_radar_cloud(&p).unwrap(), c);
        }
    }
}
