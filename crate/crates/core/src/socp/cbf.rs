//! Conic Benchmark Format (CBF, version 3) export and import.
//!
//! All variables are written as free; bounds become `L+` rows so the file
//! only uses the `L=`, `L-`, `L+` and `Q` cones. The objective sense is kept.

use std::fmt::Write as _;

use super::{ConicProgram, LinExpr, RowKind};
use crate::error::{Error, Result};

struct Row {
    cone: &'static str,
    expr: LinExpr,
}

/// Renders `cp` as CBF text.
pub fn to_cbf(cp: &ConicProgram) -> String {
    // Rows grouped into consecutive cone blocks.
    let mut blocks: Vec<(&'static str, Vec<Row>)> = Vec::new();
    let mut push = |cone: &'static str, rows: Vec<LinExpr>| {
        let single = cone != "Q";
        match blocks.last_mut() {
            Some((c, v)) if single && *c == cone => v.extend(rows.into_iter().map(|expr| Row { cone, expr })),
            _ => blocks.push((cone, rows.into_iter().map(|expr| Row { cone, expr }).collect())),
        }
    };
    for r in &cp.linear {
        let cone = match r.kind {
            RowKind::Eq => "L=",
            RowKind::Le => "L-",
        };
        push(cone, vec![r.expr.clone()]);
    }
    for j in 0..cp.n {
        if cp.lower[j].is_finite() {
            push("L+", vec![LinExpr::var(j).plus(-cp.lower[j])]);
        }
        if cp.upper[j].is_finite() {
            push("L+", vec![LinExpr::term(j, -1.0).plus(cp.upper[j])]);
        }
    }
    for s in &cp.socs {
        let mut rows = vec![s.t.clone()];
        rows.extend(s.u.iter().cloned());
        push("Q", rows);
    }

    let mut out = String::new();
    let nrows: usize = blocks.iter().map(|(_, r)| r.len()).sum();
    let _ = writeln!(out, "VER\n3\n\nOBJSENSE\nMAX\n\nVAR\n{} 1\nF {}\n", cp.n, cp.n);
    let _ = writeln!(out, "CON\n{} {}", nrows, blocks.len());
    for (cone, rows) in &blocks {
        let _ = writeln!(out, "{} {}", cone, rows.len());
    }
    out.push('\n');

    let obj: Vec<(usize, f64)> = cp.objective.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect();
    let _ = writeln!(out, "OBJACOORD\n{}", obj.len());
    for (j, v) in obj {
        let _ = writeln!(out, "{j} {v:e}");
    }
    out.push('\n');

    let mut acoord = Vec::new();
    let mut bcoord = Vec::new();
    let mut i = 0;
    for (_, rows) in &blocks {
        for r in rows {
            let _ = r.cone;
            for &(j, a) in &r.expr.terms {
                if a != 0.0 {
                    acoord.push((i, j, a));
                }
            }
            if r.expr.constant != 0.0 {
                bcoord.push((i, r.expr.constant));
            }
            i += 1;
        }
    }
    let _ = writeln!(out, "ACOORD\n{}", acoord.len());
    for (i, j, a) in acoord {
        let _ = writeln!(out, "{i} {j} {a:e}");
    }
    out.push('\n');
    let _ = writeln!(out, "BCOORD\n{}", bcoord.len());
    for (i, b) in bcoord {
        let _ = writeln!(out, "{i} {b:e}");
    }
    out
}

fn parse_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::MalformedProgram(format!("CBF line {line}: {msg}"))
}

/// Parses CBF text with free variables and `L=`, `L-`, `L+`, `Q` rows.
/// Sign constraints on single variables come back as ordinary rows.
pub fn from_cbf(text: &str) -> Result<ConicProgram> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect();
    let mut pos = 0;
    let mut next = |what: &str| -> Result<(usize, &str)> {
        let r = lines.get(pos).copied().ok_or_else(|| parse_err(0, format!("unexpected end of file reading {what}")))?;
        pos += 1;
        Ok(r)
    };
    let num = |(ln, s): (usize, &str)| -> Result<Vec<String>> {
        let _ = ln;
        Ok(s.split_whitespace().map(str::to_string).collect())
    };

    let mut n = 0;
    let mut maximize = false;
    let mut cones: Vec<(String, usize)> = Vec::new();
    let mut obj: Vec<(usize, f64)> = Vec::new();
    let mut acoord: Vec<(usize, usize, f64)> = Vec::new();
    let mut bcoord: Vec<(usize, f64)> = Vec::new();
    let mut nrows = 0;

    while let Ok((ln, kw)) = next("keyword") {
        match kw {
            "VER" => {
                let (l, v) = next("version")?;
                if v != "3" && v != "1" && v != "2" {
                    return Err(parse_err(l, format!("unsupported version {v}")));
                }
            }
            "OBJSENSE" => {
                let (_, v) = next("sense")?;
                maximize = v == "MAX";
            }
            "VAR" => {
                let hdr = num(next("VAR header")?)?;
                n = hdr[0].parse().map_err(|e| parse_err(ln, e))?;
                let k: usize = hdr[1].parse().map_err(|e| parse_err(ln, e))?;
                for _ in 0..k {
                    let (l, c) = next("VAR cone")?;
                    if !c.starts_with("F ") {
                        return Err(parse_err(l, "only free variables are supported"));
                    }
                }
            }
            "CON" => {
                let hdr = num(next("CON header")?)?;
                nrows = hdr[0].parse().map_err(|e| parse_err(ln, e))?;
                let k: usize = hdr[1].parse().map_err(|e| parse_err(ln, e))?;
                for _ in 0..k {
                    let (l, c) = next("CON cone")?;
                    let parts: Vec<&str> = c.split_whitespace().collect();
                    if parts.len() != 2 {
                        return Err(parse_err(l, "expected '<cone> <dim>'"));
                    }
                    let d = parts[1].parse().map_err(|e| parse_err(l, e))?;
                    cones.push((parts[0].to_string(), d));
                }
            }
            "OBJACOORD" => {
                let (l, c) = next("count")?;
                let k: usize = c.parse().map_err(|e| parse_err(l, e))?;
                for _ in 0..k {
                    let (l, s) = next("entry")?;
                    let p: Vec<&str> = s.split_whitespace().collect();
                    let j = p.first().and_then(|v| v.parse().ok()).ok_or_else(|| parse_err(l, "bad index"))?;
                    let v = p.get(1).and_then(|v| v.parse().ok()).ok_or_else(|| parse_err(l, "bad value"))?;
                    obj.push((j, v));
                }
            }
            "ACOORD" => {
                let (l, c) = next("count")?;
                let k: usize = c.parse().map_err(|e| parse_err(l, e))?;
                for _ in 0..k {
                    let (l, s) = next("entry")?;
                    let p: Vec<&str> = s.split_whitespace().collect();
                    if p.len() != 3 {
                        return Err(parse_err(l, "expected 'i j value'"));
                    }
                    let i = p[0].parse().map_err(|e| parse_err(l, e))?;
                    let j = p[1].parse().map_err(|e| parse_err(l, e))?;
                    let v = p[2].parse().map_err(|e| parse_err(l, e))?;
                    acoord.push((i, j, v));
                }
            }
            "BCOORD" => {
                let (l, c) = next("count")?;
                let k: usize = c.parse().map_err(|e| parse_err(l, e))?;
                for _ in 0..k {
                    let (l, s) = next("entry")?;
                    let p: Vec<&str> = s.split_whitespace().collect();
                    if p.len() != 2 {
                        return Err(parse_err(l, "expected 'i value'"));
                    }
                    let i = p[0].parse().map_err(|e| parse_err(l, e))?;
                    let v = p[1].parse().map_err(|e| parse_err(l, e))?;
                    bcoord.push((i, v));
                }
            }
            other => return Err(parse_err(ln, format!("unsupported section {other}"))),
        }
    }

    let mut rows = vec![LinExpr::new(); nrows];
    for (i, j, v) in acoord {
        if i >= nrows {
            return Err(Error::MalformedProgram(format!("CBF row {i} out of range")));
        }
        rows[i].push(j, v);
    }
    for (i, v) in bcoord {
        if i >= nrows {
            return Err(Error::MalformedProgram(format!("CBF row {i} out of range")));
        }
        rows[i].constant += v;
    }
    let mut cp = ConicProgram::new(n);
    for (j, v) in obj {
        if j >= n {
            return Err(Error::MalformedProgram(format!("CBF objective index {j} out of range")));
        }
        cp.objective[j] += if maximize { v } else { -v };
    }
    let mut it = rows.into_iter();
    for (cone, d) in cones {
        let block: Vec<LinExpr> = it.by_ref().take(d).collect();
        if block.len() != d {
            return Err(Error::MalformedProgram("CBF cone sizes exceed row count".into()));
        }
        match cone.as_str() {
            "L=" => block.into_iter().for_each(|e| cp.add_eq(e, "cbf")),
            "L-" => block.into_iter().for_each(|e| cp.add_le(e, "cbf")),
            "L+" => block.into_iter().for_each(|e| cp.add_le(e.scaled(-1.0), "cbf")),
            "Q" => {
                let mut b = block.into_iter();
                let t = b.next().ok_or_else(|| Error::MalformedProgram("empty Q cone".into()))?;
                cp.add_soc(t, b.collect(), "cbf");
            }
            other => return Err(Error::MalformedProgram(format!("unsupported CBF cone {other}"))),
        }
    }
    cp.validate()?;
    Ok(cp)
}
