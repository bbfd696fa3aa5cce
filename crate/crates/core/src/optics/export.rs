use std::io::{self, Read, Write};

use super::CouplingMap;

/// First four bytes of a binary coupling-map file.
pub const COUPLING_MAP_MAGIC: [u8; 4] = *b"PTCM";
const VERSION: u16 = 1;

/// CSV with header `diameter_um,gap_um,offset_um,efficiency`, one row per map
/// entry in `[diameter][gap][offset]` order.
pub fn write_coupling_map_csv<W: Write>(map: &CouplingMap, mut w: W) -> io::Result<()> {
    writeln!(w, "diameter_um,gap_um,offset_um,efficiency")?;
    for (d, dia) in map.diameters.iter().enumerate() {
        for (g, gap) in map.gaps.iter().enumerate() {
            for (o, off) in map.offsets.iter().enumerate() {
                writeln!(w, "{dia:.4},{gap:.4},{off:.4},{:.6}", map.get(d, g, o))?;
            }
        }
    }
    Ok(())
}

/// Binary layout, all integers and floats little-endian:
///
/// ```text
/// magic "PTCM" | u16 version (1) | u16 reserved (0)
/// u32 n_diameters | u32 n_gaps | u32 n_offsets
/// f64 × n_diameters | f64 × n_gaps | f64 × n_offsets
/// f64 × (n_diameters·n_gaps·n_offsets) efficiencies, [diameter][gap][offset]
/// ```
pub fn write_coupling_map_binary<W: Write>(map: &CouplingMap, mut w: W) -> io::Result<()> {
    w.write_all(&COUPLING_MAP_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&0u16.to_le_bytes())?;
    for n in [map.diameters.len(), map.gaps.len(), map.offsets.len()] {
        let n = u32::try_from(n).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "axis too long"))?;
        w.write_all(&n.to_le_bytes())?;
    }
    for v in map.diameters.iter().chain(&map.gaps).chain(&map.offsets).chain(&map.efficiency) {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_coupling_map_binary<R: Read>(mut r: R) -> io::Result<CouplingMap> {
    let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
    let mut head = [0u8; 20];
    r.read_exact(&mut head)?;
    if head[..4] != COUPLING_MAP_MAGIC {
        return Err(bad("not a coupling-map file"));
    }
    let version = u16::from_le_bytes([head[4], head[5]]);
    if version != VERSION {
        return Err(bad(&format!("unsupported coupling-map version {version}")));
    }
    let dim = |k: usize| u32::from_le_bytes(head[8 + 4 * k..12 + 4 * k].try_into().unwrap()) as usize;
    let (nd, ng, no) = (dim(0), dim(1), dim(2));
    let total = nd
        .checked_mul(ng)
        .and_then(|x| x.checked_mul(no))
        .ok_or_else(|| bad("dimensions overflow"))?;
    let mut read_vec = |n: usize| -> io::Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n.min(1 << 20));
        let mut buf = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            out.push(f64::from_le_bytes(buf));
        }
        Ok(out)
    };
    let diameters = read_vec(nd)?;
    let gaps = read_vec(ng)?;
    let offsets = read_vec(no)?;
    let efficiency = read_vec(total)?;
    Ok(CouplingMap { diameters, gaps, offsets, efficiency })
}
