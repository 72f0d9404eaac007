//! Submission files: an optional `team_info,<name>,<track>,<email>` header,
//! then one `pid,uri_1,...,uri_n` line per playlist. Lines starting with `#`
//! and blank lines are ignored.

use std::collections::HashMap;
use std::io::{BufWriter, Write};
use std::path::Path;

use apc_core::dataset::Catalog;
use apc_core::TrackIdx;

use crate::config::TeamInfo;
use crate::error::{CliError, CliResult};

pub fn write_submission<W: Write>(
    out: W,
    team: Option<&TeamInfo>,
    catalog: &Catalog,
    rows: &[(u64, Vec<TrackIdx>)],
) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    if let Some(t) = team {
        writeln!(out, "team_info,{},{},{}", t.name, t.track, t.email)?;
    }
    for (pid, tracks) in rows {
        write!(out, "{pid}")?;
        for &t in tracks {
            write!(out, ",{}", catalog.track(t).uri)?;
        }
        writeln!(out)?;
    }
    out.flush()
}

/// Parses a submission; every URI must be in `catalog`.
pub fn read_submission(path: &Path, catalog: &Catalog) -> CliResult<HashMap<u64, Vec<TrackIdx>>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let err = |line: usize, message: String| CliError::Submission {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lists = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let head = fields.next().unwrap_or_default();
        if head == "team_info" {
            continue;
        }
        let pid: u64 = head.parse().map_err(|_| err(n, format!("invalid pid {head:?}")))?;
        let tracks = fields
            .map(|uri| {
                catalog
                    .index_of(uri)
                    .ok_or_else(|| err(n, format!("unknown track {uri}")))
            })
            .collect::<CliResult<Vec<_>>>()?;
        if lists.insert(pid, tracks).is_some() {
            return Err(err(n, format!("pid {pid} appears twice")));
        }
    }
    Ok(lists)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_header_and_comments() {
        let mut catalog = Catalog::new();
        for i in 0..4 {
            catalog.intern(&format!("spotify:track:{i}"), "a", "", "");
        }
        let team = TeamInfo {
            name: "desk".into(),
            track: "main".into(),
            email: "x@example.com".into(),
        };
        let rows = vec![(7, vec![3, 1]), (2, vec![0, 2])];
        let mut buf = Vec::new();
        write_submission(&mut buf, Some(&team), &catalog, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("team_info,desk,main,x@example.com\n7,spotify:track:3,spotify:track:1\n"));

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, format!("# comment\n{text}\n")).unwrap();
        let back = read_submission(&p, &catalog).unwrap();
        assert_eq!(back[&7], vec![3, 1]);
        assert_eq!(back[&2], vec![0, 2]);

        std::fs::write(&p, "1, spotify:track:0\n1,spotify:track:1\n").unwrap();
        assert!(matches!(read_submission(&p, &catalog), Err(CliError::Submission { line: 2, .. })));
        std::fs::write(&p, "1,spotify:track:9\n").unwrap();
        assert!(read_submission(&p, &catalog).is_err());
    }
}
