//! Report serialization: pretty JSON and a plain-text table.

use std::fmt::Write;

use surfmap_core::surface::SurfaceReport;

pub fn json(report: &SurfaceReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
    s.push('\n');
    s
}

pub fn parse_json(text: &str) -> Result<SurfaceReport, serde_json::Error> {
    serde_json::from_str(text)
}

fn pad(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| if c + 1 == r.len() { s.clone() } else { format!("{s:<w$}", w = widths[c]) })
            .collect();
        out.push_str(line.join(" | ").trim_end());
        out.push('\n');
    }
    out
}

/// Runtime summary row first (`label | sinks...`), then one line per
/// finding and the diagnostics.
pub fn table(report: &SurfaceReport) -> String {
    let mut out = String::new();
    out.push_str("Runtime | Syscalls/APIs\n");
    out.push_str(&report.summary_row());
    out.push_str("\n\n");

    let mut rows =
        vec![["interface", "sink", "kind", "paths", "slice", "recovered", "strategies"].map(String::from).to_vec()];
    for (iface, fs) in &report.findings {
        for f in fs {
            let mut recovered: Vec<String> = f
                .recovered
                .iter()
                .map(|r| match r.value {
                    Some(v) if r.names.is_empty() => format!("arg{}={v:#x}", r.arg),
                    Some(_) => format!("arg{}={}", r.arg, r.names.join("|")),
                    None if r.tainted_by.is_empty() => format!("arg{}=?", r.arg),
                    None => format!("arg{}<-param{:?}", r.arg, r.tainted_by),
                })
                .collect();
            recovered.extend(f.paths.iter().map(|(a, p)| format!("arg{a}={p:?}")));
            let strategies: Vec<String> = report
                .strategy_annotations
                .iter()
                .filter(|a| a.interface == *iface && a.sink == f.shortest_slice.sink && a.sink_name == f.sink_name)
                .flat_map(|a| &a.annotations)
                .map(|a| format!("{:?}/{:?}", a.strategy_class, a.resource_axis))
                .collect();
            let dash = |v: Vec<String>| if v.is_empty() { "-".to_string() } else { v.join(" ") };
            rows.push(vec![
                iface.clone(),
                f.sink_name.clone(),
                format!("{:?}", f.sink_kind),
                f.path_count.to_string(),
                f.shortest_slice.call_chain.len().to_string(),
                dash(recovered),
                dash(strategies),
            ]);
        }
    }
    for (iface, names) in &report.summary {
        if names.is_empty() {
            rows.push(vec![iface.clone(), "-".into()]);
        }
    }
    out.push_str(&pad(&rows));
    if let Some(s) = &report.resolution {
        let counts: Vec<String> = s.counts.iter().map(|(c, n)| format!("{c}={n}")).collect();
        let _ = writeln!(out, "\nresolution: {} iterations, {}", s.iterations, counts.join(" "));
    }
    for d in &report.diagnostics {
        let _ = writeln!(out, "note: {d}");
    }
    out
}
