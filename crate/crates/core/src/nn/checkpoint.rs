//! Binary checkpoints: magic `SRNET1`, a u32-LE length-prefixed UTF-8 layer
//! listing, then every parameter and buffer tensor as f64-LE in declaration
//! order (per layer: parameters, then buffers).

use std::io::{Read, Write};

use super::layer::{Layer, LayerSpec};
use super::network::Network;
use super::NnError;

const MAGIC: &[u8; 6] = b"SRNET1";

/// Text block describing the network: `@key=value` meta lines, then one
/// layer spec per line.
pub fn spec_text(net: &Network) -> String {
    let mut text = String::new();
    for (k, v) in &net.meta {
        text.push_str(&format!("@{k}={v}\n"));
    }
    for layer in &net.layers {
        text.push_str(&layer.spec.to_string());
        text.push('\n');
    }
    text
}

pub fn write_checkpoint<W: Write>(net: &Network, mut w: W) -> Result<(), NnError> {
    let text = spec_text(net);
    w.write_all(MAGIC)?;
    w.write_all(&(text.len() as u32).to_le_bytes())?;
    w.write_all(text.as_bytes())?;
    for layer in &net.layers {
        for t in layer.params.iter().chain(&layer.buffers) {
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn to_bytes(net: &Network) -> Vec<u8> {
    let mut out = Vec::new();
    write_checkpoint(net, &mut out).expect("writing to a Vec cannot fail");
    out
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Network, NnError> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut text = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut text)?;
    let text = String::from_utf8(text).map_err(|_| NnError::Checkpoint("layer listing is not UTF-8".into()))?;
    let mut net = Network::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        if let Some(kv) = line.strip_prefix('@') {
            let (k, v) = kv.split_once('=').ok_or_else(|| NnError::Checkpoint(format!("bad meta line {line:?}")))?;
            net.meta.insert(k.to_string(), v.to_string());
        } else {
            net.push(line.parse::<LayerSpec>()?)?;
        }
    }
    let mut buf = [0u8; 8];
    for layer in &mut net.layers {
        let Layer { params, buffers, .. } = layer;
        for t in params.iter_mut().chain(buffers.iter_mut()) {
            for v in t.data_mut() {
                r.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
        }
    }
    if r.read(&mut buf)? != 0 {
        return Err(NnError::Checkpoint("trailing bytes after parameters".into()));
    }
    Ok(net)
}

pub fn save(net: &Network, path: impl AsRef<std::path::Path>) -> Result<(), NnError> {
    std::fs::write(path, to_bytes(net)).map_err(NnError::from)
}

pub fn load(path: impl AsRef<std::path::Path>) -> Result<Network, NnError> {
    let bytes = std::fs::read(path)?;
    read_checkpoint(&bytes[..])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layer::Padding;

    #[test]
    fn round_trip_preserves_everything() {
        let mut net = Network::new();
        net.push(LayerSpec::conv(1, 3, 3, Padding::Reflective)).unwrap();
        net.push(LayerSpec::BatchNorm { channels: 3 }).unwrap();
        net.push(LayerSpec::Prelu { channels: 3 }).unwrap();
        net.push(LayerSpec::Add { from: 1 }).unwrap();
        net.init_kaiming(5);
        net.layers[1].buffers[0].data_mut()[1] = 0.125;
        net.meta.insert("kind".into(), "test".into());
        let bytes = to_bytes(&net);
        assert_eq!(&bytes[..6], b"SRNET1");
        let back = read_checkpoint(&bytes[..]).unwrap();
        assert_eq!(back, net);
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let mut net = Network::new();
        net.push(LayerSpec::conv(1, 1, 3, Padding::Zero)).unwrap();
        let mut bytes = to_bytes(&net);
        assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        bytes.push(0);
        assert!(read_checkpoint(&bytes[..]).is_err());
        bytes[0] = b'X';
        assert!(matches!(read_checkpoint(&bytes[..]), Err(NnError::Checkpoint(_))));
    }
}
