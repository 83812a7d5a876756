//! Plain-text coefficient files.
//!
//! ```text
//! dims <n> <ell>
//! trunc <N_1> ... <N_d>
//! <k_1> ... <k_d> <re> <im>
//! ```
//!
//! Only `k = 0` and lexicographically positive modes are written; the rest
//! follow from Hermitian symmetry. Missing modes read back as zero. Floats
//! use Rust's shortest round-trip formatting, so write/read is bit-exact.

use std::io::{BufRead, Write};

use rustfft::num_complex::Complex64;

use super::{FourierError, FourierSeries, Result, TorusDims};

fn is_nonnegative_half(k: &[i64]) -> bool {
    match k.iter().find(|&&x| x != 0) {
        None => true,
        Some(&x) => x > 0,
    }
}

pub fn write_coefficients<W: Write>(series: &FourierSeries, mut out: W) -> Result<()> {
    let dims = series.dims();
    writeln!(out, "dims {} {}", dims.n(), dims.ell())?;
    let trunc: Vec<String> = series.trunc().iter().map(|n| n.to_string()).collect();
    writeln!(out, "trunc {}", trunc.join(" "))?;
    for (k, c) in series.modes() {
        if !is_nonnegative_half(&k) {
            continue;
        }
        let ks: Vec<String> = k.iter().map(|x| x.to_string()).collect();
        writeln!(out, "{} {:?} {:?}", ks.join(" "), c.re, c.im)?;
    }
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> FourierError {
    FourierError::Parse {
        line,
        message: message.into(),
    }
}

fn header<'a>(
    lines: &mut impl Iterator<Item = (usize, std::io::Result<String>)>,
    keyword: &str,
    buf: &'a mut String,
) -> Result<(usize, Vec<&'a str>)> {
    let (no, line) = loop {
        match lines.next() {
            None => return Err(parse_err(0, format!("missing `{keyword}` header"))),
            Some((no, l)) => {
                let l = l?;
                if !l.trim().is_empty() {
                    break (no, l);
                }
            }
        }
    };
    *buf = line;
    let mut toks = buf.split_whitespace();
    if toks.next() != Some(keyword) {
        return Err(parse_err(no, format!("expected `{keyword}` header")));
    }
    Ok((no, toks.collect()))
}

pub fn read_coefficients<R: BufRead>(input: R) -> Result<FourierSeries> {
    let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut buf = String::new();
    let (no, toks) = header(&mut lines, "dims", &mut buf)?;
    if toks.len() != 2 {
        return Err(parse_err(no, "`dims` takes two integers"));
    }
    let n: usize = toks[0].parse().map_err(|_| parse_err(no, "bad n"))?;
    let ell: usize = toks[1].parse().map_err(|_| parse_err(no, "bad ell"))?;
    let dims = TorusDims::new(n, ell)?;

    let mut buf2 = String::new();
    let (no, toks) = header(&mut lines, "trunc", &mut buf2)?;
    if toks.len() != dims.d() {
        return Err(parse_err(no, format!("`trunc` needs {} cutoffs", dims.d())));
    }
    let trunc = toks
        .iter()
        .map(|t| t.parse::<usize>().map_err(|_| parse_err(no, "bad cutoff")))
        .collect::<Result<Vec<_>>>()?;
    let mut series = FourierSeries::zeros(dims, trunc)?;

    for (no, line) in lines {
        let line = line?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != dims.d() + 2 {
            return Err(parse_err(no, format!("expected {} fields", dims.d() + 2)));
        }
        let k = toks[..dims.d()]
            .iter()
            .map(|t| {
                t.parse::<i64>()
                    .map_err(|_| parse_err(no, "bad mode index"))
            })
            .collect::<Result<Vec<_>>>()?;
        let re: f64 = toks[dims.d()]
            .parse()
            .map_err(|_| parse_err(no, "bad real part"))?;
        let im: f64 = toks[dims.d() + 1]
            .parse()
            .map_err(|_| parse_err(no, "bad imaginary part"))?;
        if k.iter().all(|&x| x == 0) && im != 0.0 {
            return Err(parse_err(no, "mean coefficient must be real"));
        }
        if !series.set_coeff(&k, Complex64::new(re, im)) {
            return Err(parse_err(no, "mode outside truncation box"));
        }
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let dims = TorusDims::new(1, 2).unwrap();
        let mut s = FourierSeries::zeros(dims, vec![2, 1, 1]).unwrap();
        s.set_coeff(&[0, 0, 0], Complex64::new(0.1 + 0.2, 0.0));
        s.set_coeff(&[1, -1, 0], Complex64::new(1.0 / 3.0, -2.0f64.sqrt()));
        s.set_coeff(&[0, 1, -1], Complex64::new(-1e-300, 5e-17));
        let mut text = Vec::new();
        write_coefficients(&s, &mut text).unwrap();
        let back = read_coefficients(text.as_slice()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_out_of_box_mode() {
        let text = "dims 1 1\ntrunc 1 1\n2 0 1.0 0.0\n";
        let err = read_coefficients(text.as_bytes()).unwrap_err();
        assert!(matches!(err, FourierError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn rejects_missing_header() {
        assert!(read_coefficients("trunc 1 1\n".as_bytes()).is_err());
        assert!(read_coefficients("".as_bytes()).is_err());
    }
}
