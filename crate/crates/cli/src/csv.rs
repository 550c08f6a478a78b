//! CSV emission and parsing for experiment results.
//!
//! Fixed column set, RFC-4180-style quoting, UTF-8, `.` decimal separator,
//! shortest round-trip float formatting. `parse_csv(emit_csv(rows))` returns
//! the rows bit-exactly.

use std::io::Write;
use std::path::Path;

/// One aggregated result: an (experiment, method, grid point) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub method: String,
    pub sweep_name: String,
    pub sweep_value: f64,
    pub trials: usize,
    /// Mean equalized symbol MSE (linear and dB).
    pub mse_linear: f64,
    pub mse_db: f64,
    /// Mean channel-estimate NMSE in dB.
    pub nmse_db: f64,
    /// Mean estimator wall time in seconds.
    pub time_s: f64,
    /// Mean iteration count.
    pub iters: f64,
    /// Fraction of trials whose boundary estimate hit the truth.
    pub boundary_hit_rate: f64,
    /// Trials where the estimator or the equalizer design failed.
    pub failures: usize,
}

pub const CSV_HEADER: &str = "experiment,method,sweep_name,sweep_value,trials,mse_linear,mse_db,nmse_db,time_s,iters,boundary_hit_rate,failures";

fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

pub fn format_rows(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            quote(&r.experiment),
            quote(&r.method),
            quote(&r.sweep_name),
            r.sweep_value,
            r.trials,
            r.mse_linear,
            r.mse_db,
            r.nmse_db,
            r.time_s,
            r.iters,
            r.boundary_hit_rate,
            r.failures,
        ));
    }
    out
}

/// Write rows (header always included) to `path`.
pub fn emit_csv(rows: &[ResultRow], path: &Path) -> std::io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(format_rows(rows).as_bytes())
}

/// Parse a CSV produced by [`emit_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty CSV")?;
    if header != CSV_HEADER {
        return Err(format!("unexpected header: {header}"));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields = split_record(line).map_err(|e| format!("line {}: {e}", n + 2))?;
        if fields.len() != 12 {
            return Err(format!("line {}: expected 12 fields, got {}", n + 2, fields.len()));
        }
        let f = |i: usize| -> Result<f64, String> {
            fields[i]
                .parse()
                .map_err(|_| format!("line {}: bad number '{}'", n + 2, fields[i]))
        };
        rows.push(ResultRow {
            experiment: fields[0].clone(),
            method: fields[1].clone(),
            sweep_name: fields[2].clone(),
            sweep_value: f(3)?,
            trials: fields[4]
                .parse()
                .map_err(|_| format!("line {}: bad count '{}'", n + 2, fields[4]))?,
            mse_linear: f(5)?,
            mse_db: f(6)?,
            nmse_db: f(7)?,
            time_s: f(8)?,
            iters: f(9)?,
            boundary_hit_rate: f(10)?,
            failures: fields[11]
                .parse()
                .map_err(|_| format!("line {}: bad count '{}'", n + 2, fields[11]))?,
        });
    }
    Ok(rows)
}

fn split_record(line: &str) -> Result<Vec<String>, String> {
    let mut fields = Vec::new();
    let mut chars = line.chars().peekable();
    loop {
        let mut field = String::new();
        if chars.peek() == Some(&'"') {
            chars.next();
            loop {
                match chars.next() {
                    Some('"') => {
                        if chars.peek() == Some(&'"') {
                            chars.next();
                            field.push('"');
                        } else {
                            break;
                        }
                    }
                    Some(c) => field.push(c),
                    None => return Err("unterminated quote".into()),
                }
            }
        } else {
            while let Some(&c) = chars.peek() {
                if c == ',' {
                    break;
                }
                field.push(c);
                chars.next();
            }
        }
        fields.push(field);
        match chars.next() {
            Some(',') => continue,
            None => break,
            Some(c) => return Err(format!("unexpected character '{c}' after field")),
        }
    }
    Ok(fields)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_row() -> ResultRow {
        ResultRow {
            experiment: "mse-vs-snr".into(),
            method: "omp".into(),
            sweep_name: "snr_db".into(),
            sweep_value: 20.0,
            trials: 200,
            mse_linear: 0.012345678901234567,
            mse_db: -19.08485019,
            nmse_db: -30.5,
            time_s: 0.00123,
            iters: 10.0,
            boundary_hit_rate: 0.995,
            failures: 0,
        }
    }

    #[test]
    fn empty_rows_give_header_only() {
        let text = format_rows(&[]);
        assert_eq!(text, format!("{CSV_HEADER}\n"));
        assert_eq!(parse_csv(&text).unwrap(), Vec::new());
    }

    #[test]
    fn round_trip_is_exact() {
        let rows = vec![
            sample_row(),
            ResultRow {
                method: "genie-conventional".into(),
                sweep_value: -2.5,
                mse_linear: f64::MIN_POSITIVE,
                nmse_db: f64::NEG_INFINITY,
                ..sample_row()
            },
        ];
        let text = format_rows(&rows);
        let parsed = parse_csv(&text).unwrap();
        assert_eq!(parsed.len(), rows.len());
        for (a, b) in rows.iter().zip(&parsed) {
            assert_eq!(a, b);
        }
        // and emission is deterministic
        assert_eq!(text, format_rows(&parsed));
    }

    #[test]
    fn quoting_survives_commas_and_quotes() {
        let mut row = sample_row();
        row.experiment = "odd,\"name\"".into();
        let text = format_rows(&[row.clone()]);
        let parsed = parse_csv(&text).unwrap();
        assert_eq!(parsed[0].experiment, row.experiment);
    }

    #[test]
    fn header_mismatch_is_rejected() {
        assert!(parse_csv("a,b,c\n").is_err());
    }
}
