//! FCIDUMP import: a namelist header followed by `value p q r s` records of
//! real integrals over spatial orbitals in chemist notation.
//!
//! Records with all four indices set are `(pq|rs)`, records `p q 0 0` are
//! one-electron integrals and `0 0 0 0` is the core energy. Spatial orbital
//! `p` (1-based in the file) becomes spin orbitals `2(p-1)` (alpha) and
//! `2(p-1)+1` (beta).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::TwoBodyHamiltonian;
use crate::linalg::{CMatrix, C64, ZERO};

/// One integral record as written in the file (1-based indices, 0 = unused).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegralRecord {
    pub value: f64,
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub s: usize,
    /// Line of the record in the source text.
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FcidumpData {
    pub norb: usize,
    pub nelec: usize,
    pub ms2: i64,
    /// Read for completeness; point-group symmetry is not used.
    pub orbsym: Vec<i64>,
    pub isym: i64,
    pub records: Vec<IntegralRecord>,
}

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::Fcidump {
        line,
        msg: msg.into(),
    }
}

/// Splits `KEY=v1,v2 KEY2=...` into keys and their raw value lists.
fn namelist_entries(text: &str) -> Vec<(String, Vec<String>)> {
    let mut out: Vec<(String, Vec<String>)> = Vec::new();
    for token in text.split(|c: char| c == ',' || c.is_whitespace()) {
        if token.is_empty() {
            continue;
        }
        match token.split_once('=') {
            Some((key, rest)) => {
                let mut values = Vec::new();
                if !rest.is_empty() {
                    values.push(rest.to_string());
                }
                out.push((key.trim().to_ascii_uppercase(), values));
            }
            None => {
                if let Some((_, values)) = out.last_mut() {
                    values.push(token.to_string());
                }
            }
        }
    }
    out
}

fn parse_int(line: usize, key: &str, s: &str) -> Result<i64> {
    s.parse::<i64>()
        .map_err(|_| err(line, format!("{key}: cannot parse {s:?} as an integer")))
}

fn parse_real(line: usize, s: &str) -> Result<f64> {
    if s.starts_with('(') {
        return Err(err(line, "complex integrals are not supported"));
    }
    s.replace(['D', 'd'], "E")
        .parse::<f64>()
        .map_err(|_| err(line, format!("cannot parse {s:?} as a real number")))
}

impl FcidumpData {
    pub fn parse(text: &str) -> Result<Self> {
        let mut header = String::new();
        let mut body_start = None;
        for (no, line) in text.lines().enumerate() {
            let upper = line.trim().to_ascii_uppercase();
            let (content, done) = match upper.find("&END") {
                Some(pos) => (&upper[..pos], true),
                None => match upper.strip_suffix('/') {
                    Some(head) => (head, true),
                    None => (upper.as_str(), false),
                },
            };
            header.push_str(content);
            header.push(' ');
            if done {
                body_start = Some(no + 1);
                break;
            }
        }
        let body_start = body_start.ok_or_else(|| err(1, "namelist header is not terminated"))?;
        let header = header.trim_start();
        let header = header
            .strip_prefix("&FCI")
            .ok_or_else(|| err(1, "header must start with &FCI"))?;

        let mut norb = None;
        let mut nelec = None;
        let mut ms2 = 0;
        let mut orbsym = Vec::new();
        let mut isym = 1;
        for (key, values) in namelist_entries(header) {
            let ints = values
                .iter()
                .map(|v| parse_int(1, &key, v))
                .collect::<Result<Vec<_>>>()?;
            let single = || {
                ints.first()
                    .copied()
                    .ok_or_else(|| err(1, format!("{key} has no value")))
            };
            match key.as_str() {
                "NORB" => norb = Some(single()?),
                "NELEC" => nelec = Some(single()?),
                "MS2" => ms2 = single()?,
                "ISYM" => isym = single()?,
                "ORBSYM" => orbsym = ints,
                other => log::warn!("ignoring FCIDUMP header field {other}"),
            }
        }
        let norb = norb.ok_or_else(|| err(1, "NORB missing"))?;
        let nelec = nelec.ok_or_else(|| err(1, "NELEC missing"))?;
        if norb <= 0 || nelec < 0 {
            return Err(err(1, format!("invalid NORB={norb} or NELEC={nelec}")));
        }
        let norb = norb as usize;
        if !orbsym.is_empty() {
            log::warn!("ORBSYM is read but point-group symmetry is ignored");
        }

        let mut records = Vec::new();
        for (no, line) in text.lines().enumerate().skip(body_start) {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let lineno = no + 1;
            if fields.len() != 5 {
                return Err(err(lineno, format!("expected 5 fields, got {}", fields.len())));
            }
            let value = parse_real(lineno, fields[0])?;
            let mut idx = [0usize; 4];
            for (slot, f) in idx.iter_mut().zip(&fields[1..]) {
                let i = parse_int(lineno, "index", f)?;
                if i < 0 || i as usize > norb {
                    return Err(err(lineno, format!("index {i} out of range 0..={norb}")));
                }
                *slot = i as usize;
            }
            let [p, q, r, s] = idx;
            records.push(IntegralRecord {
                value,
                p,
                q,
                r,
                s,
                line: lineno,
            });
        }
        Ok(FcidumpData {
            norb,
            nelec: nelec as usize,
            ms2,
            orbsym,
            isym,
            records,
        })
    }

    /// Spin-orbital Hamiltonian with `2 NORB` orbitals.
    pub fn to_hamiltonian(&self) -> Result<TwoBodyHamiltonian> {
        let n = self.norb;
        let mut h = vec![None; n * n];
        let mut g = vec![None; n.pow(4)];
        let mut core = 0.0;
        let gi = |p: usize, q: usize, r: usize, s: usize| ((p * n + q) * n + r) * n + s;
        let put = |slot: &mut Option<f64>, value: f64, line: usize| -> Result<()> {
            if let Some(old) = *slot {
                if (old - value).abs() > 1e-10 * old.abs().max(value.abs()).max(1.0) {
                    return Err(err(line, format!("conflicting symmetric records {old} and {value}")));
                }
            }
            *slot = Some(value);
            Ok(())
        };
        for rec in &self.records {
            let line = rec.line;
            match (rec.p, rec.q, rec.r, rec.s) {
                (0, 0, 0, 0) => core += rec.value,
                (p, q, 0, 0) if p > 0 && q > 0 => {
                    let (p, q) = (p - 1, q - 1);
                    put(&mut h[p * n + q], rec.value, line)?;
                    put(&mut h[q * n + p], rec.value, line)?;
                }
                (p, 0, 0, 0) if p > 0 => {
                    log::warn!("skipping orbital-energy record for orbital {p}");
                }
                (p, q, r, s) if p > 0 && q > 0 && r > 0 && s > 0 => {
                    let (p, q, r, s) = (p - 1, q - 1, r - 1, s - 1);
                    for (a, b, c, d) in [
                        (p, q, r, s),
                        (q, p, r, s),
                        (p, q, s, r),
                        (q, p, s, r),
                        (r, s, p, q),
                        (s, r, p, q),
                        (r, s, q, p),
                        (s, r, q, p),
                    ] {
                        put(&mut g[gi(a, b, c, d)], rec.value, line)?;
                    }
                }
                (p, q, r, s) => {
                    return Err(err(line, format!("unsupported index pattern {p} {q} {r} {s}")));
                }
            }
        }

        let l = 2 * n;
        let hs = CMatrix::from_fn(l, l, |a, b| {
            if a % 2 != b % 2 {
                return ZERO;
            }
            C64::new(h[(a / 2) * n + b / 2].unwrap_or(0.0), 0.0)
        });
        // <PQ|RS> = (PR|QS) with spin(P) = spin(R), spin(Q) = spin(S)
        let mut v = vec![ZERO; l.pow(4)];
        for pp in 0..l {
            for qq in 0..l {
                for rr in 0..l {
                    if pp % 2 != rr % 2 {
                        continue;
                    }
                    for ss in 0..l {
                        if qq % 2 != ss % 2 {
                            continue;
                        }
                        let x = g[gi(pp / 2, rr / 2, qq / 2, ss / 2)].unwrap_or(0.0);
                        v[((pp * l + qq) * l + rr) * l + ss] = C64::new(x, 0.0);
                    }
                }
            }
        }
        TwoBodyHamiltonian::new(hs, v, core)
    }
}

/// Reads an FCIDUMP file into a spin-orbital Hamiltonian and its header.
pub fn parse_fcidump(path: impl AsRef<Path>) -> Result<(TwoBodyHamiltonian, FcidumpData)> {
    let text = std::fs::read_to_string(path)?;
    let data = FcidumpData::parse(&text)?;
    Ok((data.to_hamiltonian()?, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{self, sector_eigen};

    const ONE_ORBITAL: &str = " &FCI NORB=1,NELEC=2,MS2=0,\n  ORBSYM=1,\n  ISYM=1,\n &END\n -1.0 1 1 0 0\n 0.25 0 0 0 0\n";

    #[test]
    fn single_orbital_spectrum() {
        let data = FcidumpData::parse(ONE_ORBITAL).unwrap();
        assert_eq!((data.norb, data.nelec, data.ms2, data.isym), (1, 2, 0, 1));
        assert_eq!(data.orbsym, vec![1]);
        let ham = data.to_hamiltonian().unwrap();
        assert_eq!(ham.orbitals(), 2);
        assert_eq!(ham.core_energy(), 0.25);
        let m = ham.assemble_dense().unwrap();
        let eig = linalg_eigs(&m);
        let want = [-2.0, -1.0, -1.0, 0.0].map(|x| x + 0.25);
        for (a, b) in eig.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{eig:?}");
        }
    }

    fn linalg_eigs(m: &CMatrix) -> Vec<f64> {
        let (vals, _) = crate::linalg::hermitian_eigh(m);
        let mut v: Vec<f64> = vals.as_slice().to_vec();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn slash_terminator_and_fortran_exponents() {
        let text = "&FCI NORB=2, NELEC=2\n/\n 0.5D0 1 1 1 1\n -1.25d0 2 2 0 0\n";
        let data = FcidumpData::parse(text).unwrap();
        assert_eq!(data.records.len(), 2);
        assert_eq!(data.records[0].value, 0.5);
        assert_eq!(data.records[1].value, -1.25);
    }

    #[test]
    fn eight_fold_expansion() {
        let text = "&FCI NORB=3,NELEC=2 &END\n 0.3 1 2 3 1\n 0.1 2 1 0 0\n";
        let ham = FcidumpData::parse(text).unwrap().to_hamiltonian().unwrap();
        // (pq|rs) chemist, spatial 0-based: (0 1|2 0)
        let chem = |p: usize, q: usize, r: usize, s: usize| {
            // alpha spin orbitals: <2p 2r | 2q 2s> = (pq|rs)
            ham.v(2 * p, 2 * r, 2 * q, 2 * s).re
        };
        for (p, q, r, s) in [
            (0, 1, 2, 0),
            (1, 0, 2, 0),
            (0, 1, 0, 2),
            (1, 0, 0, 2),
            (2, 0, 0, 1),
            (0, 2, 0, 1),
            (2, 0, 1, 0),
            (0, 2, 1, 0),
        ] {
            assert_eq!(chem(p, q, r, s), 0.3);
        }
        assert_eq!(chem(0, 0, 1, 2), 0.0);
        // opposite spins on electron 1 and 2 still couple; mixed spin within an electron does not
        assert_eq!(ham.v(0, 5, 2, 1).re, 0.3);
        assert_eq!(ham.v(0, 5, 3, 1).re, 0.0);
        assert_eq!(ham.h()[(0, 2)].re, 0.1);
        assert_eq!(ham.h()[(3, 1)].re, 0.1);
        assert_eq!(ham.h()[(0, 3)].re, 0.0);
    }

    #[test]
    fn two_electron_singlet_energy_matches_hand_value() {
        // one spatial orbital with on-site repulsion U: doubly occupied energy is 2h + U
        let text = "&FCI NORB=1,NELEC=2 &END\n 0.7 1 1 1 1\n -1.0 1 1 0 0\n";
        let ham = FcidumpData::parse(text).unwrap().to_hamiltonian().unwrap();
        let m = ham.assemble_dense().unwrap();
        let (vals, _) = sector_eigen(&m, 2, 1).unwrap();
        assert!((vals[0] - (-2.0 + 0.7)).abs() < 1e-12);
        let (one, _) = sector_eigen(&m, 1, 2).unwrap();
        assert!((one[0] + 1.0).abs() < 1e-12 && (one[1] + 1.0).abs() < 1e-12);
        assert_eq!(hamiltonian::operator_orbitals(&m).unwrap(), 2);
    }

    #[test]
    fn rejects_bad_input() {
        let complex = "&FCI NORB=1,NELEC=2 &END\n (1.0,0.5) 1 1 0 0\n";
        assert!(matches!(FcidumpData::parse(complex), Err(Error::Fcidump { .. })));
        let range = "&FCI NORB=1,NELEC=2 &END\n 1.0 2 1 0 0\n";
        assert!(matches!(FcidumpData::parse(range), Err(Error::Fcidump { line: 2, .. })));
        let open = "&FCI NORB=1,NELEC=2\n 1.0 1 1 0 0\n";
        assert!(FcidumpData::parse(open).is_err());
        let no_norb = "&FCI NELEC=2 &END\n";
        assert!(FcidumpData::parse(no_norb).is_err());
        let conflict = "&FCI NORB=2,NELEC=2 &END\n 1.0 1 2 0 0\n 2.0 2 1 0 0\n";
        assert!(FcidumpData::parse(conflict).unwrap().to_hamiltonian().is_err());
    }
}
