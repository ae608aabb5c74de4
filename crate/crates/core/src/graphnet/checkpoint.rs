//! Weight checkpoints: a text header naming the topology hash, network
//! configuration and parameter table, a `data` line, then every parameter
//! as little-endian `f64` in table order.
//!
//! ```text
//! format nretarget-checkpoint
//! version 1
//! topology 3f2a...
//! config graph leaky_relu tanh 64
//! params 40
//! param enc.conv0.t0.w 9 16
//! ...
//! data
//! ```

use std::path::Path;

use super::layers::Params;
use super::nets::{Architecture, Bound, NetConfig, Networks};
use crate::autodiff::{Activation, Tensor};
use crate::error::{Error, Result};
use crate::kinematics::RobotModel;

pub const CHECKPOINT_TAG: &str = "nretarget-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn checkpoint_bytes(nets: &Networks) -> Vec<u8> {
    let c = &nets.config;
    let all: Vec<(&String, &Tensor)> = [&nets.encoder_params, &nets.decoder_params]
        .into_iter()
        .flat_map(|p| p.names().iter().zip(p.tensors()))
        .collect();
    let mut head = format!(
        "format {CHECKPOINT_TAG}\nversion {CHECKPOINT_VERSION}\ntopology {}\nconfig {} {} {} {}\nparams {}\n",
        nets.topology_hash(),
        c.arch.name(),
        c.activation.name(),
        c.bound.name(),
        c.latent,
        all.len()
    );
    for (n, t) in &all {
        head.push_str(&format!("param {n} {} {}\n", t.rows(), t.cols()));
    }
    head.push_str("data\n");
    let mut out = head.into_bytes();
    for (_, t) in all {
        for v in t.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint(nets: &Networks, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint_bytes(nets)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>, model: &RobotModel) -> Result<Networks> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes, model, path)
}

fn header_field<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, key: &str, path: &Path) -> Result<(usize, Vec<&'a str>)> {
    let (no, line) = lines.next().ok_or_else(|| parse_err(path, 0, key, "missing header line"))?;
    let mut parts = line.split_whitespace();
    if parts.next() != Some(key) {
        return Err(parse_err(path, no, key, &format!("expected `{key}`")));
    }
    Ok((no, parts.collect()))
}

fn parse_err(path: &Path, line: usize, field: &str, message: &str) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        field: field.to_string(),
        message: message.to_string(),
    }
}

/// Rebuild networks for `model` from checkpoint bytes, refusing a topology
/// hash that differs from the one `model` and the stored config produce.
pub fn parse_checkpoint(bytes: &[u8], model: &RobotModel, path: &Path) -> Result<Networks> {
    let marker = b"\ndata\n";
    let split = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| parse_err(path, 0, "data", "missing `data` line"))?;
    let head = std::str::from_utf8(&bytes[..split + 1]).map_err(|_| parse_err(path, 0, "header", "not UTF-8"))?;
    let data = &bytes[split + marker.len()..];
    let mut lines = head.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (no, v) = header_field(&mut lines, "format", path)?;
    if v != [CHECKPOINT_TAG] {
        return Err(parse_err(path, no, "format", "not a checkpoint"));
    }
    let (no, v) = header_field(&mut lines, "version", path)?;
    if v != [CHECKPOINT_VERSION.to_string().as_str()] {
        return Err(parse_err(path, no, "version", "unsupported version"));
    }
    let (_, hash) = header_field(&mut lines, "topology", path)?;
    let (no, cfg) = header_field(&mut lines, "config", path)?;
    let bad_cfg = |m: String| parse_err(path, no, "config", &m);
    if cfg.len() != 4 {
        return Err(bad_cfg("expected arch, activation, bound, latent".into()));
    }
    let config = NetConfig {
        arch: cfg[0].parse::<Architecture>().map_err(|e| bad_cfg(e.to_string()))?,
        activation: cfg[1].parse::<Activation>().map_err(|e| bad_cfg(e.to_string()))?,
        bound: cfg[2].parse::<Bound>().map_err(|e| bad_cfg(e.to_string()))?,
        latent: cfg[3].parse().map_err(|_| bad_cfg("bad latent width".into()))?,
    };
    let mut nets = Networks::new(model, config, 0)?;
    let expected = nets.topology_hash();
    if hash != [expected.as_str()] {
        return Err(Error::Validation(format!(
            "{}: checkpoint topology {} does not match {expected} for robot `{}`",
            path.display(),
            hash.first().unwrap_or(&"?"),
            model.name
        )));
    }
    let (no, v) = header_field(&mut lines, "params", path)?;
    let count: usize = v.first().and_then(|s| s.parse().ok()).ok_or_else(|| parse_err(path, no, "params", "bad count"))?;
    let total = nets.encoder_params.len() + nets.decoder_params.len();
    if count != total {
        return Err(parse_err(path, no, "params", &format!("expected {total} parameters")));
    }
    let mut offset = 0usize;
    let mut read = |p: &Params, lines: &mut dyn Iterator<Item = (usize, &str)>| -> Result<Vec<Tensor>> {
        let mut out = Vec::with_capacity(p.len());
        for (name, want) in p.names().iter().zip(p.tensors()) {
            let (no, line) = lines.next().ok_or_else(|| parse_err(path, 0, "param", "missing entry"))?;
            let f: Vec<&str> = line.split_whitespace().collect();
            let shape = (want.rows().to_string(), want.cols().to_string());
            if f.len() != 4 || f[0] != "param" || f[1] != name || f[2] != shape.0 || f[3] != shape.1 {
                return Err(parse_err(path, no, name, "parameter entry does not match the layout"));
            }
            let n = want.len();
            let end = offset + 8 * n;
            let chunk = data.get(offset..end).ok_or_else(|| parse_err(path, no, name, "data truncated"))?;
            let vals = chunk
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            offset = end;
            out.push(Tensor::new(want.rows(), want.cols(), vals));
        }
        Ok(out)
    };
    let enc = read(&nets.encoder_params, &mut lines)?;
    let dec = read(&nets.decoder_params, &mut lines)?;
    if offset != data.len() {
        return Err(parse_err(path, 0, "data", "trailing bytes after parameters"));
    }
    nets.set_params(enc, dec)?;
    Ok(nets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::bundled_model;

    #[test]
    fn round_trip_is_exact() {
        let m = bundled_model("arm5x2").unwrap();
        let n = Networks::new(&m, NetConfig::default(), 11).unwrap();
        let bytes = checkpoint_bytes(&n);
        let back = parse_checkpoint(&bytes, &m, Path::new("x.ckpt")).unwrap();
        assert_eq!(back, n);
    }

    #[test]
    fn other_robot_is_refused() {
        let m = bundled_model("arm5x2").unwrap();
        let other = bundled_model("arm7x2_hand").unwrap();
        let n = Networks::new(&m, NetConfig::default(), 11).unwrap();
        let bytes = checkpoint_bytes(&n);
        let err = parse_checkpoint(&bytes, &other, Path::new("x.ckpt")).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        let mut cut = bytes.clone();
        cut.truncate(bytes.len() - 8);
        assert!(parse_checkpoint(&cut, &m, Path::new("x.ckpt")).is_err());
    }
}
