//! CSV export and import of hybrid traces.
//!
//! Trace files hold one row per sample: `t,j,x...,xi1,xi2`. Event files hold
//! one row per jump: `t,j_before,guard,x_before...,x_after...`. A scalar plant
//! uses the bare column names `x`, `x_before`, `x_after`; wider plants
//! append a 1-based index. Floats are written with 17 significant digits.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::hybrid::{
    FlowArc, Guard, HybridState, HybridTrace, JumpRecord, Sample, SolverOptions, Termination,
    TraceMeta,
};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn indexed(base: &str, n_x: usize) -> Vec<String> {
    if n_x == 1 {
        vec![base.to_string()]
    } else {
        (1..=n_x).map(|i| format!("{base}{i}")).collect()
    }
}

pub fn trace_header(n_x: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "j".to_string()];
    h.extend(indexed("x", n_x));
    h.push("xi1".into());
    h.push("xi2".into());
    h
}

pub fn events_header(n_x: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "j_before".to_string(), "guard".to_string()];
    h.extend(indexed("x_before", n_x));
    h.extend(indexed("x_after", n_x));
    h
}

pub fn write_trace_csv<W: Write>(trace: &HybridTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trace_header(trace.n_x()))?;
    let mut row = Vec::new();
    for (ht, q) in trace.samples() {
        row.clear();
        row.push(fmt_f64(ht.t));
        row.push(ht.j.to_string());
        row.extend(q.x.iter().map(|v| fmt_f64(*v)));
        row.push(fmt_f64(q.xi1));
        row.push(fmt_f64(q.xi2));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_events_csv<W: Write>(trace: &HybridTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(events_header(trace.n_x()))?;
    for jr in &trace.jumps {
        let mut row = vec![fmt_f64(jr.t), jr.j_before.to_string(), jr.guard.to_string()];
        row.extend(jr.state_before.x.iter().map(|v| fmt_f64(*v)));
        row.extend(jr.state_after.x.iter().map(|v| fmt_f64(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_f64(field: &str, line: u64) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("line {line}: not a number: {field:?}")))
}

/// Rebuild a trace from its sample CSV.
///
/// Jump records are reconstructed from arc boundaries; the fired guard is the
/// neuron whose potential was reset. Solver settings are not stored in the
/// file, so the trace carries defaults with `t_end` set to the last sample.
pub fn read_trace_csv<R: Read>(input: R) -> Result<HybridTrace> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    let n_cols = header.len();
    if n_cols < 5 || &header[0] != "t" || &header[1] != "j" {
        return Err(Error::Config(format!(
            "trace CSV header must start with t,j and end with xi1,xi2; got {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let n_x = n_cols - 4;
    if trace_header(n_x)
        .iter()
        .map(String::as_str)
        .ne(header.iter())
    {
        return Err(Error::Config(format!(
            "unexpected trace CSV header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }

    let mut arcs: Vec<FlowArc> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let t = parse_f64(&rec[0], line)?;
        let j: u64 = rec[1]
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("line {line}: bad jump index {:?}", &rec[1])))?;
        let x = (0..n_x)
            .map(|i| parse_f64(&rec[2 + i], line))
            .collect::<Result<Vec<_>>>()?;
        let state = HybridState::new(
            x,
            parse_f64(&rec[2 + n_x], line)?,
            parse_f64(&rec[3 + n_x], line)?,
        );
        let sample = Sample { t, state };
        match arcs.last_mut() {
            Some(arc) if arc.j == j => {
                if t < arc.end().t {
                    return Err(Error::Config(format!(
                        "line {line}: time decreases within an arc"
                    )));
                }
                arc.samples.push(sample);
            }
            Some(arc) if arc.j + 1 == j => {
                if t != arc.end().t {
                    return Err(Error::Config(format!(
                        "line {line}: jump changes continuous time"
                    )));
                }
                arcs.push(FlowArc {
                    j,
                    samples: vec![sample],
                });
            }
            None if j == 0 => arcs.push(FlowArc {
                j,
                samples: vec![sample],
            }),
            _ => {
                return Err(Error::Config(format!(
                    "line {line}: jump index {j} out of sequence"
                )))
            }
        }
    }
    if arcs.is_empty() {
        return Err(Error::Config("trace CSV has no samples".into()));
    }

    let jumps = arcs
        .windows(2)
        .map(|w| {
            let before = w[0].end();
            let after = w[1].start();
            let guard = if after.state.xi1 == 0.0 && before.state.xi1 != 0.0 {
                Guard::One
            } else {
                Guard::Two
            };
            JumpRecord {
                t: before.t,
                j_before: w[0].j,
                guard,
                simultaneous: false,
                state_before: before.state.clone(),
                state_after: after.state.clone(),
            }
        })
        .collect();

    let t_last = arcs.last().map(|a| a.end().t).unwrap_or(0.0);
    let solver = SolverOptions {
        t_end: if t_last > 0.0 {
            t_last
        } else {
            SolverOptions::default().t_end
        },
        ..SolverOptions::default()
    };
    Ok(HybridTrace {
        arcs,
        jumps,
        meta: TraceMeta {
            solver,
            scenario_hash: None,
            termination: Termination::TimeHorizon,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digit_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 20.100_100_1, f64::MAX, 0.0] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
    }

    #[test]
    fn headers() {
        assert_eq!(trace_header(1).join(","), "t,j,x,xi1,xi2");
        assert_eq!(trace_header(2).join(","), "t,j,x1,x2,xi1,xi2");
        assert_eq!(
            events_header(1).join(","),
            "t,j_before,guard,x_before,x_after"
        );
    }

    #[test]
    fn rejects_empty_and_malformed() {
        assert!(read_trace_csv("".as_bytes()).is_err());
        assert!(read_trace_csv("t,j,x,xi1,xi2\n".as_bytes()).is_err());
        assert!(read_trace_csv("a,b,c\n1,2,3\n".as_bytes()).is_err());
        assert!(read_trace_csv("t,j,x,xi1,xi2\n0,0,1,0,0\n1,2,1,0,0\n".as_bytes()).is_err());
        assert!(read_trace_csv("t,j,x,xi1,xi2\n0,0,abc,0,0\n".as_bytes()).is_err());
    }

    #[test]
    fn reconstructs_jumps() {
        let csv = "t,j,x,xi1,xi2\n0,0,1,0,0\n0.5,0,1.6,0.1,0\n0.5,1,1.1,0,0\n1,1,1.8,0.05,0\n";
        let trace = read_trace_csv(csv.as_bytes()).unwrap();
        assert_eq!(trace.arcs.len(), 2);
        assert_eq!(trace.jumps.len(), 1);
        assert_eq!(trace.jumps[0].guard, Guard::One);
        assert_eq!(trace.jumps[0].t, 0.5);
        assert_eq!(trace.meta.solver.t_end, 1.0);
    }
}
