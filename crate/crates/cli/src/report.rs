//! Plot-ready `*.dat` series extracted from the CSV artifacts of a run.

use std::fs;
use std::path::{Path, PathBuf};

/// Most rows kept per series.
pub const MAX_ROWS: usize = 2000;

fn column_files(csv: &str, prefix: &str) -> Result<Vec<(String, String)>, String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().ok_or("empty CSV")?.split(',').collect();
    let rows: Vec<Vec<&str>> = lines.filter(|l| !l.is_empty()).map(|l| l.split(',').collect()).collect();
    if let Some(i) = rows.iter().position(|r| r.len() != header.len()) {
        return Err(format!("row {} has {} fields, header has {}", i + 2, rows[i].len(), header.len()));
    }
    let x = header.iter().position(|&h| h == "t").unwrap_or(0);
    let stride = rows.len().div_ceil(MAX_ROWS).max(1);
    let keep: Vec<&Vec<&str>> = rows
        .iter()
        .enumerate()
        .filter(|(i, _)| i % stride == 0 || *i + 1 == rows.len())
        .map(|(_, r)| r)
        .collect();
    let mut out = Vec::new();
    for (c, name) in header.iter().enumerate() {
        if c == x || *name == "step" {
            continue;
        }
        let mut body = format!("# {} {}\n", header[x], name);
        for r in &keep {
            if !r[c].is_empty() {
                body.push_str(r[x]);
                body.push(' ');
                body.push_str(r[c]);
                body.push('\n');
            }
        }
        out.push((format!("{prefix}{name}.dat"), body));
    }
    Ok(out)
}

/// Write `report/<column>.dat` for the trajectory and `report/monitor_<column>.dat`
/// for the monitor table of `run_dir`. Output depends only on the inputs.
pub fn report(run_dir: &Path) -> Result<Vec<PathBuf>, String> {
    let traj = run_dir.join("trajectory.csv");
    let text = fs::read_to_string(&traj).map_err(|e| format!("{}: {e}", traj.display()))?;
    let mut files = column_files(&text, "").map_err(|e| format!("{}: {e}", traj.display()))?;
    let mon = run_dir.join("monitors.csv");
    if mon.exists() {
        let text = fs::read_to_string(&mon).map_err(|e| format!("{}: {e}", mon.display()))?;
        files.extend(column_files(&text, "monitor_").map_err(|e| format!("{}: {e}", mon.display()))?);
    }
    let dir = run_dir.join("report");
    fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| format!("{}: {e}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}
