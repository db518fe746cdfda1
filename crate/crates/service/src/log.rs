use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sr_core::metrics::{mos, RatingSet};

use crate::{Label, ServiceError};

pub const LOG_HEADER: [&str; 5] = ["timestamp", "session_id", "item_id", "method", "score"];

/// One line of the ratings log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    pub session_id: String,
    pub item_id: String,
    pub method: Label,
    pub score: u8,
}

/// Append-only CSV writer. Each record is written with a single `write_all`
/// and synced before `append` returns.
#[derive(Debug)]
pub struct RatingLog {
    file: File,
    path: PathBuf,
}

impl RatingLog {
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        if file.metadata()?.len() == 0 {
            file.write_all(&encode_row(&LOG_HEADER)?)?;
            file.sync_data()?;
        }
        Ok(RatingLog { file, path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, rec: &LogRecord) -> io::Result<()> {
        let ts = rec.timestamp.to_string();
        let score = rec.score.to_string();
        let row = [ts.as_str(), &rec.session_id, &rec.item_id, rec.method.as_str(), &score];
        self.file.write_all(&encode_row(&row)?)?;
        self.file.sync_data()
    }
}

fn encode_row(fields: &[&str]) -> io::Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(fields).map_err(io::Error::other)?;
    w.into_inner().map_err(|e| io::Error::other(e.to_string()))
}

/// A line that could not be parsed, with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedLine {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogScan {
    pub records: Vec<LogRecord>,
    pub skipped: Vec<SkippedLine>,
}

/// Parses a ratings log, skipping corrupt lines rather than failing.
pub fn read_log(path: impl AsRef<Path>) -> Result<LogScan, ServiceError> {
    let bytes = std::fs::read(path)?;
    Ok(parse_log(&bytes))
}

pub fn parse_log(bytes: &[u8]) -> LogScan {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(bytes);
    let mut scan = LogScan::default();
    for (i, row) in rdr.records().enumerate() {
        let line = i as u64 + 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                scan.skipped.push(SkippedLine { line, reason: e.to_string() });
                continue;
            }
        };
        if i == 0 && row.iter().eq(LOG_HEADER) {
            continue;
        }
        match parse_record(&row) {
            Ok(r) => scan.records.push(r),
            Err(reason) => scan.skipped.push(SkippedLine { line, reason }),
        }
    }
    scan
}

fn parse_record(row: &csv::StringRecord) -> Result<LogRecord, String> {
    if row.len() != LOG_HEADER.len() {
        return Err(format!("expected {} fields, got {}", LOG_HEADER.len(), row.len()));
    }
    let timestamp = row[0].trim().parse().map_err(|_| format!("bad timestamp {:?}", &row[0]))?;
    let method = row[3].trim().parse::<Label>().map_err(|e| e.to_string())?;
    let score: u8 = row[4].trim().parse().map_err(|_| format!("bad score {:?}", &row[4]))?;
    if !(1..=5).contains(&score) {
        return Err(format!("score {score} outside 1..=5"));
    }
    if row[1].is_empty() || row[2].is_empty() {
        return Err("empty session or item id".into());
    }
    Ok(LogRecord { timestamp, session_id: row[1].to_string(), item_id: row[2].to_string(), method, score })
}

/// Mean opinion score of one method over `n` rated items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMos {
    pub method: Label,
    pub mos: f64,
    pub n: usize,
}

/// Per-method MOS from scores, in `Label::ALL` order. Methods with no scores
/// are omitted.
pub fn mos_by_method(scores: impl IntoIterator<Item = (Label, u8)>) -> Vec<MethodMos> {
    let mut groups: BTreeMap<Label, Vec<u8>> = BTreeMap::new();
    for (m, s) in scores {
        groups.entry(m).or_default().push(s);
    }
    groups
        .into_iter()
        .map(|(method, s)| {
            let n = s.len();
            let set = RatingSet::new(s).expect("scores validated on entry");
            MethodMos { method, mos: mos(&set), n }
        })
        .collect()
}

/// MOS table from log records. A later rating of the same item in the same
/// session replaces the earlier one.
pub fn mos_table(records: &[LogRecord]) -> Vec<MethodMos> {
    let mut latest: BTreeMap<(&str, &str), (Label, u8)> = BTreeMap::new();
    for r in records {
        latest.insert((&r.session_id, &r.item_id), (r.method, r.score));
    }
    mos_by_method(latest.into_values())
}

/// Plain-text table, one row per method.
pub fn render_mos_table(rows: &[MethodMos]) -> String {
    let mut out = format!("{:<12} {:>6} {:>4}\n", "Method", "MOS", "n");
    for r in rows {
        out.push_str(&format!("{:<12} {:>6.3} {:>4}\n", r.method.title(), r.mos, r.n));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(session: &str, item: &str, method: Label, score: u8) -> LogRecord {
        LogRecord { timestamp: 1, session_id: session.into(), item_id: item.into(), method, score }
    }

    #[test]
    fn single_method_mean() {
        let recs: Vec<_> = [4, 5, 5, 5, 5].iter().enumerate().map(|(i, &s)| rec("a", &format!("i{i}"), Label::Srgan, s)).collect();
        let t = mos_table(&recs);
        assert_eq!(t.len(), 1);
        assert!((t[0].mos - 4.8).abs() < 1e-12);
        assert_eq!(t[0].n, 5);
    }

    #[test]
    fn resubmission_overwrites() {
        let recs = vec![rec("a", "x", Label::Srcnn, 1), rec("a", "y", Label::Srcnn, 3), rec("a", "x", Label::Srcnn, 5)];
        let t = mos_table(&recs);
        assert_eq!(t[0].n, 2);
        assert_eq!(t[0].mos, 4.0);
        // Same item id in another session is a separate rating.
        let t = mos_table(&[rec("a", "x", Label::Hr, 2), rec("b", "x", Label::Hr, 4)]);
        assert_eq!((t[0].n, t[0].mos), (2, 3.0));
    }

    #[test]
    fn rows_follow_label_order() {
        let t = mos_table(&[rec("a", "1", Label::Srgan, 5), rec("a", "2", Label::Lr, 1), rec("a", "3", Label::Sparse, 3)]);
        let order: Vec<_> = t.iter().map(|r| r.method).collect();
        assert_eq!(order, vec![Label::Lr, Label::Sparse, Label::Srgan]);
    }

    #[test]
    fn append_then_parse() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/ratings.csv");
        let a = rec("s1", "i1", Label::Bicubic, 2);
        let b = rec("s1", "i2", Label::Srresnet, 4);
        {
            let mut log = RatingLog::open(&path).unwrap();
            log.append(&a).unwrap();
        }
        let mut log = RatingLog::open(&path).unwrap();
        log.append(&b).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "timestamp,session_id,item_id,method,score");
        assert_eq!(text.lines().count(), 3);
        let scan = read_log(&path).unwrap();
        assert_eq!(scan.records, vec![a, b]);
        assert!(scan.skipped.is_empty());
    }

    #[test]
    fn corrupt_lines_are_counted() {
        let text = "timestamp,session_id,item_id,method,score\n\
                    1,s,a,srgan,5\n\
                    garbage\n\
                    2,s,b,srgan,9\n\
                    3,s,c,vdsr,3\n\
                    x,s,d,srgan,3\n\
                    4,s,e,srgan,4\n";
        let scan = parse_log(text.as_bytes());
        assert_eq!(scan.records.len(), 2);
        assert_eq!(scan.skipped.iter().map(|s| s.line).collect::<Vec<_>>(), vec![3, 4, 5, 6]);
        assert_eq!(mos_table(&scan.records)[0].mos, 4.5);
    }

    #[test]
    fn empty_log() {
        let scan = parse_log(b"");
        assert!(scan.records.is_empty() && scan.skipped.is_empty());
        assert!(mos_table(&scan.records).is_empty());
        assert_eq!(render_mos_table(&[]).lines().count(), 1);
    }
}
