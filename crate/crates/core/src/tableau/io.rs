use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;

use super::{Family, ImexGlmTableau, TableauParts};
use crate::error::{GlmError, Result};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTableau {
    s: usize,
    r: usize,
    p: usize,
    q: usize,
    lambda: f64,
    c: Vec<f64>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "Ahat")]
    a_hat: Vec<Vec<f64>>,
    #[serde(rename = "U")]
    u: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "Bhat")]
    b_hat: Vec<Vec<f64>>,
    #[serde(rename = "V")]
    v: Vec<Vec<f64>>,
    family: Family,
    #[serde(rename = "W", default)]
    w: Option<Vec<Vec<f64>>>,
    #[serde(rename = "What", default)]
    w_hat: Option<Vec<Vec<f64>>>,
}

fn to_matrix(name: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|row| row.len() != ncols) {
        return Err(GlmError::Schema(format!(
            "\"{name}\" must be a {nrows}x{ncols} row-major array"
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Parse and validate a tableau from its JSON text.
pub fn read_tableau(text: &str) -> Result<ImexGlmTableau> {
    let raw: RawTableau = serde_json::from_str(text).map_err(|e| GlmError::Schema(e.to_string()))?;
    let (s, r) = (raw.s, raw.r);
    if raw.c.len() != s {
        return Err(GlmError::Schema(format!("\"c\" has {} entries but s = {s}", raw.c.len())));
    }
    let w = raw.w.as_deref().map(|w| to_matrix("W", w, r, raw.p + 1)).transpose()?;
    let w_hat = raw.w_hat.as_deref().map(|w| to_matrix("What", w, r, raw.p + 1)).transpose()?;
    ImexGlmTableau::from_parts(TableauParts {
        p: raw.p,
        q: raw.q,
        c: raw.c,
        a: to_matrix("A", &raw.a, s, s)?,
        a_hat: to_matrix("Ahat", &raw.a_hat, s, s)?,
        u: to_matrix("U", &raw.u, s, r)?,
        b: to_matrix("B", &raw.b, r, s)?,
        b_hat: to_matrix("Bhat", &raw.b_hat, r, s)?,
        v: to_matrix("V", &raw.v, r, r)?,
        lambda: raw.lambda,
        w,
        w_hat,
        family: raw.family,
    })
}

pub fn read_tableau_file(path: impl AsRef<Path>) -> Result<ImexGlmTableau> {
    read_tableau(&std::fs::read_to_string(path)?)
}

fn number(x: f64) -> String {
    // shortest representation that parses back to the same bits
    serde_json::to_string(&x).expect("finite value")
}

fn write_matrix(out: &mut String, key: &str, m: &DMatrix<f64>, last: bool) {
    let _ = write!(out, "  \"{key}\": [");
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|&x| number(x)).collect();
        let sep = if i + 1 < m.nrows() { "," } else { "" };
        let _ = write!(out, "\n    [{}]{sep}", row.join(", "));
    }
    let _ = writeln!(out, "\n  ]{}", if last { "" } else { "," });
}

/// Serialize a tableau, one matrix row per line, including `W` and `Ŵ`.
pub fn write_tableau(t: &ImexGlmTableau) -> String {
    let mut out = String::from("{\n");
    let _ = writeln!(out, "  \"family\": \"{}\",", t.family);
    let _ = writeln!(out, "  \"s\": {},\n  \"r\": {},\n  \"p\": {},\n  \"q\": {},", t.s, t.r, t.p, t.q);
    let _ = writeln!(out, "  \"lambda\": {},", number(t.lambda));
    let c: Vec<String> = t.c.iter().map(|&x| number(x)).collect();
    let _ = writeln!(out, "  \"c\": [{}],", c.join(", "));
    write_matrix(&mut out, "A", &t.a, false);
    write_matrix(&mut out, "Ahat", &t.a_hat, false);
    write_matrix(&mut out, "U", &t.u, false);
    write_matrix(&mut out, "B", &t.b, false);
    write_matrix(&mut out, "Bhat", &t.b_hat, false);
    write_matrix(&mut out, "V", &t.v, false);
    write_matrix(&mut out, "W", &t.w, false);
    write_matrix(&mut out, "What", &t.w_hat, true);
    out.push_str("}\n");
    out
}

pub fn write_tableau_file(t: &ImexGlmTableau, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_tableau(t))?;
    Ok(())
}
