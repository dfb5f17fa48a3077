//! Checkpoint serialization.
//!
//! Format: magic "SSCK", u32 version=1, u32 tensor count, then per tensor:
//! u32 name length, UTF-8 name, u32 rank, u32 dims, little-endian f32 data.
//! The tensor list covers all persistent state, including batch-norm running
//! statistics, so a reloaded model scores identically.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{Network, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"SSCK";
const VERSION: u32 = 1;

pub fn save_checkpoint<F: Scalar>(path: &Path, net: &mut Network<F>) -> Result<()> {
    let mut entries: Vec<(String, Vec<usize>, Vec<f32>)> = Vec::new();
    net.visit_state(&mut |name, tensor| {
        entries.push((
            name.to_string(),
            tensor.shape.clone(),
            tensor.data.iter().map(|&v| v.to_f64_c() as f32).collect(),
        ));
    });

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_u32::<LittleEndian>(VERSION).map_err(io_err)?;
    w.write_u32::<LittleEndian>(entries.len() as u32).map_err(io_err)?;
    for (name, shape, data) in &entries {
        w.write_u32::<LittleEndian>(name.len() as u32).map_err(io_err)?;
        w.write_all(name.as_bytes()).map_err(io_err)?;
        w.write_u32::<LittleEndian>(shape.len() as u32).map_err(io_err)?;
        for &d in shape {
            w.write_u32::<LittleEndian>(d as u32).map_err(io_err)?;
        }
        for &v in data {
            w.write_f32::<LittleEndian>(v).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

/// Read all tensors from a checkpoint file.
pub fn read_checkpoint_tensors(path: &Path) -> Result<Vec<(String, Tensor<f32>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::data(format!("{}: not a checkpoint file", path.display())));
    }
    let version = r.read_u32::<LittleEndian>().map_err(io_err)?;
    if version != VERSION {
        return Err(Error::data(format!(
            "{}: unsupported checkpoint version {version}",
            path.display()
        )));
    }
    let count = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes).map_err(io_err)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::data(format!("{}: non-UTF-8 tensor name", path.display())))?;
        let rank = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.read_u32::<LittleEndian>().map_err(io_err)? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = vec![0.0f32; len];
        for v in &mut data {
            *v = r.read_f32::<LittleEndian>().map_err(io_err)?;
        }
        tensors.push((name, Tensor { shape, data }));
    }
    Ok(tensors)
}

/// Load a checkpoint into a freshly built network. Tensor names and shapes
/// must match the network's state exactly, in order.
pub fn load_checkpoint<F: Scalar>(path: &Path, net: &mut Network<F>) -> Result<()> {
    let tensors = read_checkpoint_tensors(path)?;
    let mut idx = 0;
    let mut error: Option<Error> = None;
    net.visit_state(&mut |name, tensor| {
        if error.is_some() {
            return;
        }
        let Some((saved_name, saved)) = tensors.get(idx) else {
            error = Some(Error::data(format!(
                "{}: checkpoint has {} tensors but the model needs more",
                path.display(),
                tensors.len()
            )));
            return;
        };
        if saved_name != name || saved.shape != tensor.shape {
            error = Some(Error::data(format!(
                "{}: checkpoint tensor '{saved_name}' {:?} does not match model tensor '{name}' {:?}",
                path.display(),
                saved.shape,
                tensor.shape
            )));
            return;
        }
        tensor.data = saved.data.iter().map(|&v| F::from_f64_c(v as f64)).collect();
        idx += 1;
    });
    if let Some(e) = error {
        return Err(e);
    }
    if idx != tensors.len() {
        return Err(Error::data(format!(
            "{}: checkpoint has {} tensors but the model uses {idx}",
            path.display(),
            tensors.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelspec::{toy_gap_cnn, Activation};
    use crate::tensor::layers::Mode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_restores_identical_scores_for_f32() {
        let spec = toy_gap_cnn(4, Activation::Sigmoid);
        let mut net = Network::<f32>::from_spec(&spec, 42).unwrap();

        // push some data through in train mode so BN running stats move
        let input = Tensor::from_vec(
            &[2, 1, 64, 98],
            (0..2 * 64 * 98).map(|i| ((i % 17) as f32 - 8.0) / 8.0).collect(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        net.forward_logits(&input, Mode::Train, &mut rng).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ssck");
        save_checkpoint(&path, &mut net).unwrap();

        let before = net.scores(&input).unwrap();
        let mut restored = Network::<f32>::from_spec(&spec, 1).unwrap();
        load_checkpoint(&path, &mut restored).unwrap();
        let after = restored.scores(&input).unwrap();
        // f32 state round-trips through f32 storage bit-exactly
        assert_eq!(before, after);
    }

    #[test]
    fn header_layout_is_frozen() {
        let spec = toy_gap_cnn(2, Activation::Sigmoid);
        let mut net = Network::<f32>::from_spec(&spec, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ssck");
        save_checkpoint(&path, &mut net).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"SSCK");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let mut expected = 0;
        net.visit_state(&mut |_, _| expected += 1);
        assert_eq!(count, expected);
        // includes BN running statistics
        let names: Vec<String> = read_checkpoint_tensors(&path).unwrap().into_iter().map(|(n, _)| n).collect();
        assert!(names.iter().any(|n| n.ends_with(".running_mean")));
        assert!(names.iter().any(|n| n.ends_with(".running_var")));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut net2 = Network::<f32>::from_spec(&toy_gap_cnn(2, Activation::Sigmoid), 0).unwrap();
        let mut net3 = Network::<f32>::from_spec(&toy_gap_cnn(3, Activation::Sigmoid), 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ssck");
        save_checkpoint(&path, &mut net2).unwrap();
        assert!(load_checkpoint(&path, &mut net3).is_err());
    }
}
