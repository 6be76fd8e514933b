//! Model file: `DAGE1`, a little-endian u64 header length, a JSON header,
//! then every parameter tensor as little-endian f64 in header order.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Geometry, GeometryConfig, GeometryError, Model, Operators};
use crate::autodiff::{ParamStore, Tensor};

const MAGIC: &[u8; 5] = b"DAGE1";

#[derive(Serialize, Deserialize)]
struct TensorShape {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    geometry: Geometry,
    dim: usize,
    n_entities: usize,
    n_relations: usize,
    geometry_config: GeometryConfig,
    net_shapes: Vec<TensorShape>,
    config: serde_json::Value,
    entities: Vec<String>,
    relations: Vec<String>,
}

fn format_err(msg: impl Into<String>) -> GeometryError {
    GeometryError::Format(msg.into())
}

impl Model {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            geometry: self.ops.geometry,
            dim: self.ops.dim,
            n_entities: self.ops.n_entities,
            n_relations: self.ops.n_relations,
            geometry_config: self.ops.config,
            net_shapes: self
                .params
                .ids()
                .map(|id| TensorShape {
                    name: self.params.name(id).to_owned(),
                    shape: self.params.get(id).shape().to_vec(),
                })
                .collect(),
            config: self.meta.clone(),
            entities: self.entity_names.clone(),
            relations: self.relation_names.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serialises");
        let mut out = Vec::with_capacity(MAGIC.len() + 8 + json.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for id in self.params.ids() {
            for v in self.params.get(id).data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Model, GeometryError> {
        let rest = bytes
            .strip_prefix(MAGIC.as_slice())
            .ok_or_else(|| format_err("missing DAGE1 magic"))?;
        if rest.len() < 8 {
            return Err(format_err("truncated header length"));
        }
        let len = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes")) as usize;
        let rest = &rest[8..];
        if rest.len() < len {
            return Err(format_err("truncated header"));
        }
        let header: Header =
            serde_json::from_slice(&rest[..len]).map_err(|e| format_err(format!("header: {e}")))?;
        if header.entities.len() != header.n_entities || header.relations.len() != header.n_relations {
            return Err(format_err("vocabulary size does not match header counts"));
        }
        // Rebuild the layout, then overwrite every tensor with stored values.
        let mut params = ParamStore::new();
        let ops = Operators::init(
            header.geometry,
            header.dim,
            header.n_entities,
            header.n_relations,
            header.geometry_config,
            &mut params,
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        if params.len() != header.net_shapes.len() {
            return Err(format_err("parameter list does not match the geometry"));
        }
        let mut data = &rest[len..];
        for (id, declared) in params.ids().collect::<Vec<_>>().into_iter().zip(&header.net_shapes) {
            let t = params.get(id);
            if t.shape() != declared.shape.as_slice() || params.name(id) != declared.name {
                return Err(format_err(format!("unexpected tensor '{}'", declared.name)));
            }
            let n = t.len();
            if data.len() < 8 * n {
                return Err(format_err("truncated parameter data"));
            }
            let values = data[..8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            *params.get_mut(id) = Tensor::new(declared.shape.clone(), values)?;
            data = &data[8 * n..];
        }
        if !data.is_empty() {
            return Err(format_err("trailing bytes after parameter data"));
        }
        Ok(Model {
            ops,
            params,
            entity_names: header.entities,
            relation_names: header.relations,
            meta: header.config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GeometryError> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model, GeometryError> {
        Model::from_bytes(&fs::read(path)?)
    }
}
