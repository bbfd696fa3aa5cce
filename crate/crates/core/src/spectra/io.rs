use std::io::{BufRead, BufReader, Read, Write};

use super::{Normalization, Spectrum};
use crate::error::{Error, Result};

const HEADER: &str = "wavelength_nm,reflectivity";

/// Write `wavelength_nm,reflectivity` CSV: header line, then one
/// `{wavelength:.4},{reflectivity:.8}` row per sample, `\n` line endings.
pub fn write_spectrum_csv<W: Write>(s: &Spectrum, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{HEADER}")?;
    for (l, r) in s.wavelengths.iter().zip(&s.reflectivity) {
        writeln!(w, "{l:.4},{r:.8}")?;
    }
    Ok(())
}

/// Read a spectrum CSV. The header line is mandatory; blank lines and `\r`
/// are ignored. The result is tagged [`Normalization::Raw`].
pub fn read_spectrum_csv<R: Read>(r: R) -> Result<Spectrum> {
    let mut lines = BufReader::new(r).lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, line)) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => return Err(Error::Format("empty spectrum file".into())),
        }
    };
    if header.trim().trim_start_matches('\u{feff}') != HEADER {
        return Err(Error::Format(format!("expected header `{HEADER}`, found `{}`", header.trim())));
    }
    let (mut wl, mut refl) = (Vec::new(), Vec::new());
    for (i, line) in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let parse = |c: Option<&str>| -> Result<f64> {
            c.map(str::trim)
                .and_then(|c| c.parse::<f64>().ok())
                .ok_or_else(|| Error::Format(format!("line {}: expected two numbers", i + 1)))
        };
        let l = parse(cols.next())?;
        let r = parse(cols.next())?;
        if cols.next().is_some() {
            return Err(Error::Format(format!("line {}: too many columns", i + 1)));
        }
        wl.push(l);
        refl.push(r);
    }
    Ok(Spectrum::new(wl, refl, Normalization::Raw)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let s = Spectrum::new(vec![900.0, 900.02, 900.04], vec![0.5, 0.25, 1.0], Normalization::Raw).unwrap();
        let mut buf = Vec::new();
        write_spectrum_csv(&s, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "wavelength_nm,reflectivity\n900.0000,0.50000000\n900.0200,0.25000000\n900.0400,1.00000000\n"
        );
        assert_eq!(read_spectrum_csv(&buf[..]).unwrap(), s);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_spectrum_csv(&b"lambda,r\n1,2\n"[..]).is_err());
        assert!(read_spectrum_csv(&b"wavelength_nm,reflectivity\n900,x\n"[..]).is_err());
        assert!(read_spectrum_csv(&b"wavelength_nm,reflectivity\n900,1\n899,1\n898,1\n"[..]).is_err());
        assert!(read_spectrum_csv(&b""[..]).is_err());
    }

    #[test]
    fn tolerates_crlf_and_blank_lines() {
        let text = b"wavelength_nm,reflectivity\r\n900,1\r\n\r\n901,0.5\r\n902,0.7\r\n";
        let s = read_spectrum_csv(&text[..]).unwrap();
        assert_eq!(s.reflectivity, vec![1.0, 0.5, 0.7]);
    }
}
