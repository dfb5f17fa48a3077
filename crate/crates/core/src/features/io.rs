//! Binary feature-file formats.
//!
//! `.lmel`: magic "LMEL", u32 version=1, u32 n_mels, u32 n_frames, then
//! `n_frames * n_mels` little-endian f32 values, frame-major.
//!
//! `.lnrm`: magic "LNRM", u32 n_dims, then the mean vector followed by the
//! variance vector, little-endian f32.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{FeatureMatrix, NormStats};
use crate::error::{Error, Result};

const LMEL_MAGIC: &[u8; 4] = b"LMEL";
const LMEL_VERSION: u32 = 1;
const LNRM_MAGIC: &[u8; 4] = b"LNRM";

pub fn write_lmel(path: &Path, features: &FeatureMatrix) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    w.write_all(LMEL_MAGIC).map_err(io_err)?;
    w.write_u32::<LittleEndian>(LMEL_VERSION).map_err(io_err)?;
    w.write_u32::<LittleEndian>(features.n_mels as u32).map_err(io_err)?;
    w.write_u32::<LittleEndian>(features.n_frames as u32).map_err(io_err)?;
    for t in 0..features.n_frames {
        for m in 0..features.n_mels {
            w.write_f32::<LittleEndian>(features.at(m, t) as f32).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn read_lmel(path: &Path, segment_ref: &str) -> Result<FeatureMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != LMEL_MAGIC {
        return Err(Error::data(format!("{}: not an LMEL file", path.display())));
    }
    let version = r.read_u32::<LittleEndian>().map_err(io_err)?;
    if version != LMEL_VERSION {
        return Err(Error::data(format!(
            "{}: unsupported LMEL version {version}",
            path.display()
        )));
    }
    let n_mels = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let n_frames = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let mut values = vec![0.0f64; n_mels * n_frames];
    for t in 0..n_frames {
        for m in 0..n_mels {
            values[m * n_frames + t] = r.read_f32::<LittleEndian>().map_err(io_err)? as f64;
        }
    }
    Ok(FeatureMatrix {
        segment_ref: segment_ref.into(),
        n_mels,
        n_frames,
        values,
    })
}

pub fn write_lnrm(path: &Path, stats: &NormStats) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    w.write_all(LNRM_MAGIC).map_err(io_err)?;
    w.write_u32::<LittleEndian>(stats.n_dims() as u32).map_err(io_err)?;
    for &m in &stats.mean {
        w.write_f32::<LittleEndian>(m as f32).map_err(io_err)?;
    }
    for &v in &stats.variance {
        w.write_f32::<LittleEndian>(v as f32).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_lnrm(path: &Path) -> Result<NormStats> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != LNRM_MAGIC {
        return Err(Error::data(format!("{}: not an LNRM file", path.display())));
    }
    let n_dims = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let mut mean = vec![0.0f64; n_dims];
    let mut variance = vec![0.0f64; n_dims];
    for m in &mut mean {
        *m = r.read_f32::<LittleEndian>().map_err(io_err)? as f64;
    }
    for v in &mut variance {
        *v = r.read_f32::<LittleEndian>().map_err(io_err)? as f64;
    }
    Ok(NormStats { mean, variance })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lmel_round_trip_preserves_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.lmel");
        let features = FeatureMatrix {
            segment_ref: "a.0".into(),
            n_mels: 3,
            n_frames: 2,
            values: vec![1.5, -2.25, 0.0, 4.0, -0.5, 3.75], // exactly representable
        };
        write_lmel(&path, &features).unwrap();
        let back = read_lmel(&path, "a.0").unwrap();
        assert_eq!(back, features);

        // header layout is bit-exact
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"LMEL");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 16 + 6 * 4);
        // frame-major: first stored value is (mel 0, frame 0), second is (mel 1, frame 0)
        assert_eq!(f32::from_le_bytes(bytes[16..20].try_into().unwrap()), 1.5);
        assert_eq!(f32::from_le_bytes(bytes[20..24].try_into().unwrap()), 0.0);
    }

    #[test]
    fn lnrm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stats.lnrm");
        let stats = NormStats {
            mean: vec![0.5, -1.25],
            variance: vec![1.0, 2.5],
        };
        write_lnrm(&path, &stats).unwrap();
        assert_eq!(read_lnrm(&path).unwrap(), stats);
    }

    #[test]
    fn rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.lmel");
        std::fs::write(&path, b"NOPE0000").unwrap();
        assert!(read_lmel(&path, "x").is_err());
        assert!(read_lnrm(&path).is_err());
    }
}
