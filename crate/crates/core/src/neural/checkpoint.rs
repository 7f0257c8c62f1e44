//! Model checkpoint serialization.
//!
//! Layout: the magic line `APLB1`, a structured text header (model kind,
//! config pairs, metadata pairs, one `param` line per tensor with name,
//! dtype and shape), a terminating `end` line, then the raw payload:
//! little-endian f32 arrays concatenated in header declaration order.
//! Serialization is byte-deterministic, so identical models produce
//! identical files.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::autodiff::{ParamSet, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "APLB1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub config: Vec<(String, String)>,
    pub meta: Vec<(String, String)>,
    /// Parameter names, shapes and trainability, in declaration order.
    pub params: Vec<(String, Vec<usize>, bool)>,
    /// Little-endian f32 payload, one array per `params` entry.
    pub payload: Vec<u8>,
}

fn check_token(s: &str, what: &str) -> Result<()> {
    if s.is_empty() || s.contains(char::is_whitespace) {
        return Err(Error::Checkpoint(alloc::format!("bad {what}: {s:?}")));
    }
    Ok(())
}

impl Checkpoint {
    /// Capture a parameter set. Values are stored as f32; pair this with
    /// `ParamSet::quantize_to_f32` on the live model so the round trip is
    /// exact.
    pub fn from_params(
        kind: &str,
        config: Vec<(String, String)>,
        meta: Vec<(String, String)>,
        params: &ParamSet,
    ) -> Result<Checkpoint> {
        check_token(kind, "kind")?;
        let mut entries = Vec::new();
        let mut payload = Vec::new();
        for p in params.iter() {
            check_token(&p.name, "parameter name")?;
            entries.push((p.name.clone(), p.value.shape().to_vec(), p.trainable));
            for &v in p.value.data() {
                payload.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(Checkpoint { kind: kind.into(), config, meta, params: entries, payload })
    }

    /// Rebuild a parameter set (values f32-exact in f64).
    pub fn to_params(&self) -> Result<ParamSet> {
        let mut set = ParamSet::new();
        let mut offset = 0usize;
        for (name, shape, trainable) in &self.params {
            let numel: usize = shape.iter().product();
            let bytes = numel * 4;
            if offset + bytes > self.payload.len() {
                return Err(Error::Checkpoint(alloc::format!(
                    "payload truncated at parameter {name}"
                )));
            }
            let data: Vec<f64> = self.payload[offset..offset + bytes]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect();
            let t = Tensor::from_vec(shape, data)?;
            if *trainable {
                set.add(name, t)?;
            } else {
                set.add_buffer(name, t)?;
            }
            offset += bytes;
        }
        if offset != self.payload.len() {
            return Err(Error::Checkpoint("payload longer than declared parameters".into()));
        }
        Ok(set)
    }

    pub fn config_value(&self, key: &str) -> Result<&str> {
        self.config
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Checkpoint(alloc::format!("missing config key {key}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut head = String::new();
        head.push_str(CHECKPOINT_MAGIC);
        head.push('\n');
        head.push_str("kind ");
        head.push_str(&self.kind);
        head.push('\n');
        for (k, v) in &self.config {
            head.push_str("config ");
            head.push_str(k);
            head.push(' ');
            head.push_str(v);
            head.push('\n');
        }
        for (k, v) in &self.meta {
            head.push_str("meta ");
            head.push_str(k);
            head.push(' ');
            head.push_str(v);
            head.push('\n');
        }
        for (name, shape, trainable) in &self.params {
            head.push_str(if *trainable { "param " } else { "buffer " });
            head.push_str(name);
            head.push_str(" f32");
            for d in shape {
                head.push(' ');
                head.push_str(&d.to_string());
            }
            head.push('\n');
        }
        head.push_str("end\n");
        let mut out = head.into_bytes();
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        // The header is ASCII lines up to and including "end\n".
        let mut pos = 0usize;
        let mut kind = String::new();
        let mut config = Vec::new();
        let mut meta = Vec::new();
        let mut params: Vec<(String, Vec<usize>, bool)> = Vec::new();
        let mut magic_seen = false;
        let mut end_seen = false;
        while pos < bytes.len() {
            let nl = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| Error::Checkpoint("unterminated header line".into()))?;
            let line = core::str::from_utf8(&bytes[pos..pos + nl])
                .map_err(|_| Error::Checkpoint("header is not UTF-8".into()))?;
            pos += nl + 1;
            if !magic_seen {
                if line != CHECKPOINT_MAGIC {
                    return Err(Error::Checkpoint(alloc::format!(
                        "bad magic {line:?}, expected {CHECKPOINT_MAGIC:?}"
                    )));
                }
                magic_seen = true;
                continue;
            }
            if line == "end" {
                end_seen = true;
                break;
            }
            let mut it = line.split(' ');
            let tag = it.next().unwrap_or("");
            match tag {
                "kind" => {
                    kind = it.next().unwrap_or("").to_string();
                    check_token(&kind, "kind")?;
                }
                "config" | "meta" => {
                    let k = it
                        .next()
                        .ok_or_else(|| Error::Checkpoint("config line missing key".into()))?
                        .to_string();
                    let v: Vec<&str> = it.collect();
                    let v = v.join(" ");
                    if tag == "config" {
                        config.push((k, v));
                    } else {
                        meta.push((k, v));
                    }
                }
                "param" | "buffer" => {
                    let name = it
                        .next()
                        .ok_or_else(|| Error::Checkpoint("param line missing name".into()))?
                        .to_string();
                    let dtype = it.next().unwrap_or("");
                    if dtype != "f32" {
                        return Err(Error::Checkpoint(alloc::format!(
                            "parameter {name}: unsupported dtype {dtype:?}"
                        )));
                    }
                    let shape: core::result::Result<Vec<usize>, _> =
                        it.map(|t| t.parse::<usize>()).collect();
                    let shape = shape.map_err(|_| {
                        Error::Checkpoint(alloc::format!("parameter {name}: bad shape"))
                    })?;
                    params.push((name, shape, tag == "param"));
                }
                _ => {
                    return Err(Error::Checkpoint(alloc::format!("unknown header tag {tag:?}")));
                }
            }
        }
        if !end_seen {
            return Err(Error::Checkpoint("missing end marker".into()));
        }
        if kind.is_empty() {
            return Err(Error::Checkpoint("missing kind line".into()));
        }
        let payload = bytes[pos..].to_vec();
        let expected: usize = params.iter().map(|(_, s, _)| s.iter().product::<usize>() * 4).sum();
        if payload.len() < expected {
            // Name the parameter where the payload runs out.
            let mut offset = 0usize;
            for (name, shape, _) in &params {
                let bytes_needed = shape.iter().product::<usize>() * 4;
                if offset + bytes_needed > payload.len() {
                    return Err(Error::Checkpoint(alloc::format!(
                        "payload truncated at parameter {name}"
                    )));
                }
                offset += bytes_needed;
            }
        }
        if payload.len() != expected {
            return Err(Error::Checkpoint(alloc::format!(
                "payload is {} bytes, header declares {expected}",
                payload.len()
            )));
        }
        Ok(Checkpoint { kind, config, meta, params, payload })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut set = ParamSet::new();
        set.add("a.w", Tensor::from_vec(&[2, 2], alloc::vec![1.5, -0.25, 3.0, 0.0]).unwrap())
            .unwrap();
        set.add_buffer("a.stats", Tensor::from_vec(&[2], alloc::vec![0.5, 2.0]).unwrap())
            .unwrap();
        Checkpoint::from_params(
            "compensator",
            alloc::vec![("n".into(), "2".into())],
            alloc::vec![("seed".into(), "42".into())],
            &set,
        )
        .unwrap()
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let again = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(ck, again);
        assert_eq!(bytes, again.to_bytes());
    }

    #[test]
    fn params_roundtrip_with_trainability() {
        let ck = sample();
        let set = ck.to_params().unwrap();
        assert_eq!(set.get("a.w").unwrap().data(), &[1.5, -0.25, 3.0, 0.0]);
        let stats = set.iter().find(|p| p.name == "a.stats").unwrap();
        assert!(!stats.trainable);
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(ref m) if m.contains("magic")));
    }

    #[test]
    fn truncated_payload_names_the_parameter() {
        let ck = sample();
        let mut bytes = ck.to_bytes();
        bytes.truncate(bytes.len() - 6);
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(
            matches!(err, Error::Checkpoint(ref m) if m.contains("a.stats")),
            "got {err}"
        );
    }
}
