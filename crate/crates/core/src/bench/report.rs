//! Plot-ready outputs: CSV tables, a JSON summary and a gnuplot script.

use std::fmt::Write as _;

use super::runner::MetricsReport;

fn to_csv(header: &[String], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// `n,vms,ram_mb` for one scenario.
pub fn allocation_csv(report: &MetricsReport) -> String {
    let header = ["n", "vms", "ram_mb"].map(String::from).to_vec();
    let rows = report.allocation.iter().map(|a| vec![a.n.to_string(), a.vms.to_string(), a.ram_mb.to_string()]).collect();
    to_csv(&header, rows)
}

/// Allocation curves side by side: `n,<mode>_vms,<mode>_ram_mb,...`.
/// Rows follow the first report's sample sizes.
pub fn comparison_allocation_csv(reports: &[MetricsReport]) -> String {
    let mut header = vec!["n".to_string()];
    for r in reports {
        header.push(format!("{}_vms", r.mode));
        header.push(format!("{}_ram_mb", r.mode));
    }
    let sizes: Vec<u32> = reports.first().map(|r| r.allocation.iter().map(|a| a.n).collect()).unwrap_or_default();
    let rows = sizes
        .iter()
        .map(|&n| {
            let mut row = vec![n.to_string()];
            for r in reports {
                match r.allocation.iter().find(|a| a.n == n) {
                    Some(a) => row.extend([a.vms.to_string(), a.ram_mb.to_string()]),
                    None => row.extend([String::new(), String::new()]),
                }
            }
            row
        })
        .collect();
    to_csv(&header, rows)
}

/// Start and join latency per mode.
pub fn latency_csv(reports: &[MetricsReport]) -> String {
    let header = ["mode", "start_mean_ms", "start_p95_ms", "join_mean_ms", "join_p95_ms"].map(String::from).to_vec();
    let rows = reports
        .iter()
        .map(|r| {
            let (s, j) = (&r.conference_start_time_ms, &r.participant_join_time_ms);
            vec![r.mode.to_string(), s.mean.to_string(), s.p95.to_string(), j.mean.to_string(), j.p95.to_string()]
        })
        .collect();
    to_csv(&header, rows)
}

pub fn summary_json(reports: &[MetricsReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize") + "\n"
}

/// Human-readable summary table.
pub fn summary_table(reports: &[MetricsReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<6} {:>12} {:>12} {:>11} {:>11} {:>9}", "mode", "start mean", "start p95", "join mean", "join p95", "peak VMs");
    for r in reports {
        let peak = r.allocation.iter().map(|a| a.vms).max().unwrap_or(0);
        let _ = writeln!(
            out,
            "{:<6} {:>9.1} ms {:>9.1} ms {:>8.1} ms {:>8.1} ms {:>9}",
            r.mode,
            r.conference_start_time_ms.mean,
            r.conference_start_time_ms.p95,
            r.participant_join_time_ms.mean,
            r.participant_join_time_ms.p95,
            peak
        );
    }
    out
}

/// gnuplot script drawing `allocation.csv` as step curves and
/// `latency.csv` as bars.
pub fn gnuplot_script(reports: &[MetricsReport]) -> String {
    let mut s = String::from(
        "set datafile separator ','\nset key autotitle columnhead\nset terminal pngcairo size 900,500\n\n\
         set output 'allocation.png'\nset xlabel 'participants'\nset ylabel 'allocated RAM (MB)'\nplot ",
    );
    let curves: Vec<String> = reports
        .iter()
        .enumerate()
        .map(|(i, r)| format!("'allocation.csv' using 1:{} with steps title '{}'", 3 + 2 * i, r.mode.as_str().to_uppercase()))
        .collect();
    s.push_str(&curves.join(", \\\n     "));
    s.push_str(
        "\n\nset output 'latency.png'\nset style data histograms\nset style fill solid 0.6\nset ylabel 'ms'\n\
         plot 'latency.csv' using 2:xtic(1) title 'start', '' using 4 title 'join'\n",
    );
    s
}
