//! CSV readers and writers for incidence matrices, link counts, priors,
//! enumerated points and chain traces.
//!
//! Matrix files hold 0/1 integers with one row per link and one column per
//! route, optionally preceded by a header row of route ids:
//!
//! ```text
//! A-B,A-C,B-C
//! 1,1,0
//! 0,1,1
//! ```
//!
//! Counts files hold one row per observation period and one column per
//! link. A header row is optional; a leading column named `label` carries
//! period labels.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::models::PriorSpec;
use crate::netmodel::{LinkCountSample, RoutingMatrix};
use crate::polytope::FlowState;
use crate::sampler::{ChainOutput, Phase, SweepRecord};

fn records(text: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        out.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(out)
}

fn is_header(fields: &[String]) -> bool {
    fields.iter().any(|f| f.parse::<i64>().is_err())
}

fn parse_int(line: usize, s: &str) -> Result<i64> {
    s.parse().map_err(|_| Error::Parse { line, msg: format!("'{s}' is not an integer") })
}

fn parse_real(line: usize, s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse { line, msg: format!("'{s}' is not a number") })
}

/// Integer matrix plus the route ids from the header row, if present.
pub fn parse_matrix_csv(text: &str) -> Result<(Matrix<i64>, Option<Vec<String>>)> {
    let mut rows = records(text)?;
    if rows.is_empty() {
        return Err(Error::Parse { line: 1, msg: "empty matrix file".into() });
    }
    let ids = if is_header(&rows[0].1) { Some(rows.remove(0).1) } else { None };
    let cols = ids.as_ref().map_or_else(|| rows.first().map_or(0, |r| r.1.len()), |h| h.len());
    let mut data = Vec::with_capacity(rows.len() * cols);
    for (line, fields) in &rows {
        if fields.len() != cols {
            return Err(Error::Parse { line: *line, msg: format!("expected {cols} fields, found {}", fields.len()) });
        }
        for f in fields {
            data.push(parse_int(*line, f)?);
        }
    }
    if rows.is_empty() {
        return Err(Error::Parse { line: 1, msg: "matrix file has no data rows".into() });
    }
    Ok((Matrix::from_vec(rows.len(), cols, data), ids))
}

pub fn parse_counts_csv(text: &str) -> Result<LinkCountSample> {
    let mut rows = records(text)?;
    if rows.is_empty() {
        return Err(Error::Parse { line: 1, msg: "empty counts file".into() });
    }
    let mut labelled = false;
    if is_header(&rows[0].1) {
        labelled = rows[0].1[0].eq_ignore_ascii_case("label");
        rows.remove(0);
    }
    let mut labels = Vec::new();
    let mut counts = Vec::new();
    for (line, fields) in rows {
        let mut it = fields.into_iter();
        if labelled {
            labels.push(it.next().unwrap_or_default());
        }
        counts.push(it.map(|f| parse_int(line, &f)).collect::<Result<Vec<_>>>()?);
    }
    LinkCountSample::new(counts, labelled.then_some(labels))
}

/// Gamma priors keyed by route id. Columns are `route_id,shape,rate` or
/// `route_id,pseudo_count`; a pseudo-count `c` becomes `Gamma(c/d, 1/d)`
/// with `d = divisor`, so its mean is `c`.
pub fn parse_priors_csv(text: &str, route_ids: &[String], divisor: f64) -> Result<PriorSpec> {
    let mut rows = records(text)?;
    if rows.is_empty() || !is_header(&rows[0].1) {
        return Err(Error::Parse { line: 1, msg: "prior file needs a header row".into() });
    }
    let header: Vec<String> = rows.remove(0).1.iter().map(|h| h.to_ascii_lowercase()).collect();
    let pseudo = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["route_id", "shape", "rate"] => false,
        ["route_id", "pseudo_count"] => true,
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: "expected columns route_id,shape,rate or route_id,pseudo_count".into(),
            })
        }
    };
    let r = route_ids.len();
    let mut shape = vec![f64::NAN; r];
    let mut rate = vec![f64::NAN; r];
    for (line, fields) in rows {
        if fields.len() != header.len() {
            return Err(Error::Parse { line, msg: format!("expected {} fields", header.len()) });
        }
        let j = route_ids
            .iter()
            .position(|id| *id == fields[0])
            .ok_or_else(|| Error::Parse { line, msg: format!("unknown route id '{}'", fields[0]) })?;
        if !shape[j].is_nan() {
            return Err(Error::Parse { line, msg: format!("route '{}' listed twice", fields[0]) });
        }
        if pseudo {
            let c = parse_real(line, &fields[1])?;
            shape[j] = c / divisor;
            rate[j] = 1.0 / divisor;
        } else {
            shape[j] = parse_real(line, &fields[1])?;
            rate[j] = parse_real(line, &fields[2])?;
        }
    }
    if let Some(j) = shape.iter().position(|s| s.is_nan()) {
        return Err(Error::Invalid(format!("no prior for route '{}'", route_ids[j])));
    }
    PriorSpec::new(shape, rate)
}

/// Parameter vector file: header `route_id,theta` (and optionally a final
/// row with route id `alpha`).
pub fn parse_theta_csv(text: &str, route_ids: &[String]) -> Result<(Vec<f64>, Option<f64>)> {
    let mut rows = records(text)?;
    if !rows.is_empty() && is_header(&rows[0].1) && rows[0].1.get(1).is_some_and(|h| h.parse::<f64>().is_err()) {
        rows.remove(0);
    }
    let mut theta = vec![f64::NAN; route_ids.len()];
    let mut alpha = None;
    for (line, fields) in rows {
        if fields.len() != 2 {
            return Err(Error::Parse { line, msg: "expected route_id,theta".into() });
        }
        let v = parse_real(line, &fields[1])?;
        if fields[0] == "alpha" {
            alpha = Some(v);
            continue;
        }
        let j = route_ids
            .iter()
            .position(|id| *id == fields[0])
            .ok_or_else(|| Error::Parse { line, msg: format!("unknown route id '{}'", fields[0]) })?;
        theta[j] = v;
    }
    if let Some(j) = theta.iter().position(|s| s.is_nan()) {
        return Err(Error::Invalid(format!("no theta for route '{}'", route_ids[j])));
    }
    Ok((theta, alpha))
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Invalid(e.to_string()))
}

/// One row per point, columns in original route order under the route ids.
pub fn write_points_csv(a: &RoutingMatrix, points: &[FlowState]) -> Result<String> {
    let mut w = writer();
    w.write_record(a.route_ids())?;
    for p in points {
        w.write_record(p.x().iter().map(i64::to_string))?;
    }
    finish(w)
}

/// Chain trace: `iter,phase,slack,n_accepted,n_changed,x_1..x_r`.
pub fn write_chain_csv(out: &ChainOutput, routes: usize) -> Result<String> {
    let mut w = writer();
    let mut header: Vec<String> = ["iter", "phase", "slack", "n_accepted", "n_changed"].map(String::from).to_vec();
    header.extend((1..=routes).map(|j| format!("x_{j}")));
    w.write_record(&header)?;
    for r in &out.records {
        let mut row = vec![
            r.iter.to_string(),
            r.phase.to_string(),
            r.slack.to_string(),
            r.n_accepted.to_string(),
            r.n_changed.to_string(),
        ];
        row.extend(r.x.iter().map(i64::to_string));
        w.write_record(&row)?;
    }
    finish(w)
}

/// Reads a chain trace back. Phase totals, basis columns and the final
/// state beyond the last record are not stored in the trace.
pub fn parse_chain_csv(text: &str) -> Result<ChainOutput> {
    let mut rows = records(text)?;
    if rows.is_empty() {
        return Err(Error::Parse { line: 1, msg: "empty chain file".into() });
    }
    let header = rows.remove(0).1;
    if header.len() < 6 || header[0] != "iter" || header[1] != "phase" {
        return Err(Error::Parse { line: 1, msg: "not a chain trace header".into() });
    }
    let basis: Arc<[usize]> = Arc::from(Vec::new());
    let mut records = Vec::with_capacity(rows.len());
    for (line, f) in rows {
        if f.len() != header.len() {
            return Err(Error::Parse { line, msg: format!("expected {} fields", header.len()) });
        }
        let phase: Phase = f[1].parse().map_err(|_| Error::Parse { line, msg: format!("bad phase '{}'", f[1]) })?;
        records.push(SweepRecord {
            iter: parse_int(line, &f[0])? as usize,
            phase,
            slack: parse_real(line, &f[2])?,
            n_accepted: parse_int(line, &f[3])? as usize,
            n_changed: parse_int(line, &f[4])? as usize,
            x: f[5..].iter().map(|v| parse_int(line, v)).collect::<Result<_>>()?,
            basis_cols: basis.clone(),
        });
    }
    let final_state = FlowState::new(records.last().map(|r| r.x.clone()).unwrap_or_default());
    Ok(ChainOutput { records, phases: Vec::new(), final_state, warnings: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_with_and_without_header() {
        let (m, ids) = parse_matrix_csv("a-b,a-c\n1,0\n1,1\n").unwrap();
        assert_eq!(ids.unwrap(), vec!["a-b", "a-c"]);
        assert_eq!(m.row(1), &[1, 1]);
        let (m, ids) = parse_matrix_csv("1,0,1\n0,1,1\n").unwrap();
        assert!(ids.is_none());
        assert_eq!((m.rows(), m.cols()), (2, 3));
    }

    #[test]
    fn matrix_errors_carry_lines() {
        match parse_matrix_csv("1,0\n1,x\n") {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(parse_matrix_csv("1,0\n1\n").is_err());
        assert!(parse_matrix_csv("").is_err());
    }

    #[test]
    fn counts_with_labels() {
        let s = parse_counts_csv("label,l1,l2\nmon,3,4\ntue,5,6\n").unwrap();
        assert_eq!(s.counts(), &[vec![3, 4], vec![5, 6]]);
        assert_eq!(s.labels().unwrap(), &["mon".to_string(), "tue".to_string()]);
        let s = parse_counts_csv("3,4\n").unwrap();
        assert!(s.labels().is_none());
        assert!(parse_counts_csv("3,-4\n").is_err());
    }

    #[test]
    fn priors_both_forms() {
        let ids: Vec<String> = vec!["1".into(), "2".into()];
        let p = parse_priors_csv("route_id,pseudo_count\n2,10\n1,4\n", &ids, 2.0).unwrap();
        assert_eq!(p.shape, vec![2.0, 5.0]);
        assert_eq!(p.rate, vec![0.5, 0.5]);
        let p = parse_priors_csv("route_id,shape,rate\n1,1,2\n2,3,4\n", &ids, 2.0).unwrap();
        assert_eq!(p.mean(), vec![0.5, 0.75]);
        assert!(parse_priors_csv("route_id,pseudo_count\n1,4\n", &ids, 2.0).is_err());
        assert!(parse_priors_csv("route_id,pseudo_count\n9,4\n", &ids, 2.0).is_err());
    }

    #[test]
    fn chain_round_trip() {
        let out = ChainOutput {
            records: vec![SweepRecord {
                iter: 3,
                phase: Phase::Pilot(1),
                x: vec![1, 2],
                n_accepted: 1,
                n_changed: 2,
                slack: 1.5,
                basis_cols: Arc::from(vec![]),
            }],
            phases: vec![],
            final_state: FlowState::new(vec![1, 2]),
            warnings: vec![],
        };
        let text = write_chain_csv(&out, 2).unwrap();
        assert!(text.starts_with("iter,phase,slack,n_accepted,n_changed,x_1,x_2\n3,pilot-1,1.5,1,2,1,2\n"));
        assert_eq!(parse_chain_csv(&text).unwrap(), out);
    }
}
