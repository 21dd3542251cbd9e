//! Single-file model format: `ASM1`, a u32 little-endian header length, a
//! UTF-8 JSON header, then every parameter tensor as raw little-endian f32
//! (weights before biases, in layer order).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layer::LayerSpec;
use super::model::{Model, Params};
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"ASM1";
const MAX_HEADER: usize = 1 << 24;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    name: String,
    input_shape: [usize; 3],
    layers: Vec<LayerSpec>,
    shapes: Vec<Vec<usize>>,
    seed: u64,
    params: Vec<ParamHeader>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamHeader {
    layer: usize,
    weight: Vec<usize>,
    bias: Vec<usize>,
}

pub fn write_model(model: &Model<f32>, mut w: impl Write) -> Result<()> {
    let header = Header {
        name: model.name().to_string(),
        input_shape: model.input_shape(),
        layers: model.layers().to_vec(),
        shapes: model.shapes().to_vec(),
        seed: model.seed(),
        params: model
            .params()
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                p.as_ref().map(|p| ParamHeader {
                    layer: i,
                    weight: p.weight.shape().to_vec(),
                    bias: p.bias.shape().to_vec(),
                })
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    for p in model.params().iter().flatten() {
        for v in p.weight.data().iter().chain(p.bias.data()) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_model(mut r: impl Read, origin: &str) -> Result<Model<f32>> {
    let bad = |reason: String| Error::format(origin, reason);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| bad("truncated header".into()))?;
    if &magic != MAGIC {
        return Err(bad("bad magic, expected ASM1".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)
        .map_err(|_| bad("truncated header length".into()))?;
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_HEADER {
        return Err(bad(format!("header length {len} implausible")));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)
        .map_err(|_| bad("truncated JSON header".into()))?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| bad(format!("malformed header: {e}")))?;

    let mut params: Vec<Option<Params<f32>>> = vec![None; header.layers.len()];
    let read_tensor = |shape: &[usize], r: &mut dyn Read| -> Result<Tensor<f32>> {
        let n: usize = shape.iter().product();
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes)
            .map_err(|_| bad("weight blob truncated".into()))?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(shape.to_vec(), data)
    };
    for ph in &header.params {
        if ph.layer >= params.len() {
            return Err(bad(format!("parameter for missing layer {}", ph.layer)));
        }
        let weight = read_tensor(&ph.weight, &mut r)?;
        let bias = read_tensor(&ph.bias, &mut r)?;
        params[ph.layer] = Some(Params { weight, bias });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(bad("trailing bytes after weight blobs".into()));
    }
    let model = Model::from_parts(header.name, header.input_shape, header.layers, params, header.seed)
        .map_err(|e| bad(e.to_string()))?;
    if model.shapes() != header.shapes.as_slice() {
        return Err(bad("recorded shapes disagree with the layer schedule".into()));
    }
    Ok(model)
}

impl Model<f32> {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write_model(self, &mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model<f32>> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        read_model(BufReader::new(File::open(path)?), &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::Preset;

    #[test]
    fn round_trip_is_exact() {
        let m = Preset::MiniAlex.build(4).swap_pooling(8).unwrap();
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"ASM1");
        let back = read_model(&buf[..], "mem").unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn corruption_is_reported() {
        let m = Preset::MiniAlex.build(4);
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[1] = b'Z';
        assert!(matches!(read_model(&bad[..], "m"), Err(Error::Format { .. })));
        assert!(matches!(
            read_model(&buf[..buf.len() - 1], "m"),
            Err(Error::Format { .. })
        ));
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(read_model(&long[..], "m"), Err(Error::Format { .. })));
        let mut garbled = buf.clone();
        garbled[9] = b'#';
        assert!(matches!(read_model(&garbled[..], "m"), Err(Error::Format { .. })));
    }
}
