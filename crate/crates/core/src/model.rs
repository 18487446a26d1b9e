//! Versioned binary model container plus a lossless JSON mirror.
//!
//! Layout (little-endian): magic `HICL`, format version, flags, a sha-256
//! of the canonical taxonomy edge list, the feature-space size, a JSON
//! config blob, the embedded taxonomy edges, optional frozen idf weights,
//! then one block per internal node (subset ids as delta-encoded varints,
//! per-child weights as 32-bit floats).

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::hierarchy::Hierarchy;
use crate::scoring::ScoreMethod;
use crate::selection::FeatureSubset;
use crate::trainer::{NodeModel, TrainedModel, TrainingConfig, TrainingManifest};

const MAGIC: &[u8; 4] = b"HICL";
const FORMAT_VERSION: u32 = 1;
const FLAG_IDF: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt model: {0}")]
    Corrupt(String),
}

/// Input transform the model expects at prediction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    None,
    /// tf * frozen idf, then L2 row normalization.
    TfidfL2,
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
struct HeaderConfig {
    training: TrainingConfig,
    transform: TransformKind,
}

/// sha-256 of the canonical `parent child` edge list.
pub fn hierarchy_hash(h: &Hierarchy) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for (p, c) in h.edges() {
        hasher.update(format!("{p} {c}\n").as_bytes());
    }
    hasher.finalize().into()
}

fn write_varint(w: &mut impl Write, mut v: u64) -> std::io::Result<()> {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            w.write_all(&[byte])?;
            return Ok(());
        }
        w.write_all(&[byte | 0x80])?;
    }
}

fn read_varint(r: &mut impl Read) -> Result<u64, ModelIoError> {
    let mut v = 0u64;
    let mut shift = 0;
    loop {
        let mut byte = [0u8; 1];
        r.read_exact(&mut byte)?;
        if shift >= 64 {
            return Err(ModelIoError::Corrupt("varint overflow".into()));
        }
        v |= ((byte[0] & 0x7f) as u64) << shift;
        if byte[0] & 0x80 == 0 {
            return Ok(v);
        }
        shift += 7;
    }
}

fn method_tag(m: Option<ScoreMethod>) -> u8 {
    match m {
        None => 0,
        Some(ScoreMethod::Gini) => 1,
        Some(ScoreMethod::MrmrD) => 2,
        Some(ScoreMethod::MrmrQ) => 3,
        Some(ScoreMethod::KruskalWallis) => 4,
    }
}

fn method_from_tag(t: u8) -> Result<Option<ScoreMethod>, ModelIoError> {
    Ok(match t {
        0 => None,
        1 => Some(ScoreMethod::Gini),
        2 => Some(ScoreMethod::MrmrD),
        3 => Some(ScoreMethod::MrmrQ),
        4 => Some(ScoreMethod::KruskalWallis),
        other => return Err(ModelIoError::Corrupt(format!("unknown method tag {other}"))),
    })
}

pub fn write_model(
    m: &TrainedModel,
    transform: TransformKind,
    w: &mut impl Write,
) -> Result<(), ModelIoError> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    let mut flags = 0u32;
    if m.idf.is_some() {
        flags |= FLAG_IDF;
    }
    w.write_u32::<LittleEndian>(flags)?;
    w.write_all(&hierarchy_hash(&m.hierarchy))?;
    w.write_u64::<LittleEndian>(m.num_features as u64)?;

    let config = HeaderConfig {
        training: m.manifest.config.clone(),
        transform,
    };
    let config_json = serde_json::to_vec(&config).expect("config serializes");
    w.write_u32::<LittleEndian>(config_json.len() as u32)?;
    w.write_all(&config_json)?;

    let edges = m.hierarchy.edges();
    w.write_u64::<LittleEndian>(edges.len() as u64)?;
    for (p, c) in edges {
        w.write_u32::<LittleEndian>(p)?;
        w.write_u32::<LittleEndian>(c)?;
    }

    if let Some(idf) = &m.idf {
        w.write_u64::<LittleEndian>(idf.len() as u64)?;
        for &v in idf {
            w.write_f64::<LittleEndian>(v)?;
        }
    }

    // node blocks in ascending original-id order for reproducible bytes
    let mut nodes: Vec<&NodeModel> = m.models.iter().flatten().collect();
    nodes.sort_by_key(|nm| m.hierarchy.original_id(nm.node));
    w.write_u64::<LittleEndian>(nodes.len() as u64)?;
    for nm in nodes {
        w.write_u32::<LittleEndian>(m.hierarchy.original_id(nm.node))?;
        w.write_f64::<LittleEndian>(nm.lambda)?;
        w.write_all(&[method_tag(nm.subset.method)])?;
        w.write_f64::<LittleEndian>(nm.subset.fraction)?;
        let ids = nm.subset.features();
        write_varint(w, ids.len() as u64)?;
        let mut prev = 0u64;
        for (i, &f) in ids.iter().enumerate() {
            let delta = if i == 0 { f as u64 } else { f as u64 - prev };
            write_varint(w, delta)?;
            prev = f as u64;
        }
        w.write_u32::<LittleEndian>(nm.children.len() as u32)?;
        for (ci, &child) in nm.children.iter().enumerate() {
            w.write_u32::<LittleEndian>(m.hierarchy.original_id(child))?;
            for &weight in &nm.weights[ci] {
                w.write_f32::<LittleEndian>(weight)?;
            }
        }
    }
    Ok(())
}

pub fn read_model(r: &mut impl Read) -> Result<(TrainedModel, TransformKind), ModelIoError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ModelIoError::BadMagic);
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(ModelIoError::UnsupportedVersion(version));
    }
    let flags = r.read_u32::<LittleEndian>()?;
    let mut stored_hash = [0u8; 32];
    r.read_exact(&mut stored_hash)?;
    let num_features = r.read_u64::<LittleEndian>()? as usize;

    let config_len = r.read_u32::<LittleEndian>()? as usize;
    let mut config_buf = vec![0u8; config_len];
    r.read_exact(&mut config_buf)?;
    let header: HeaderConfig = serde_json::from_slice(&config_buf)
        .map_err(|e| ModelIoError::Corrupt(format!("config block: {e}")))?;

    let num_edges = r.read_u64::<LittleEndian>()? as usize;
    let mut edges = Vec::with_capacity(num_edges);
    for _ in 0..num_edges {
        let p = r.read_u32::<LittleEndian>()?;
        let c = r.read_u32::<LittleEndian>()?;
        edges.push((p, c));
    }
    let hierarchy = Hierarchy::from_edges(&edges)
        .map_err(|e| ModelIoError::Corrupt(format!("embedded taxonomy: {e}")))?;
    if hierarchy_hash(&hierarchy) != stored_hash {
        return Err(ModelIoError::Corrupt("taxonomy hash mismatch".into()));
    }

    let idf = if flags & FLAG_IDF != 0 {
        let len = r.read_u64::<LittleEndian>()? as usize;
        let mut v = Vec::with_capacity(len);
        for _ in 0..len {
            v.push(r.read_f64::<LittleEndian>()?);
        }
        Some(v)
    } else {
        None
    };

    let num_nodes = r.read_u64::<LittleEndian>()? as usize;
    let mut models: Vec<Option<NodeModel>> = vec![None; hierarchy.num_nodes()];
    for _ in 0..num_nodes {
        let original = r.read_u32::<LittleEndian>()?;
        let node = hierarchy
            .node_of(original)
            .ok_or_else(|| ModelIoError::Corrupt(format!("unknown node {original}")))?;
        let lambda = r.read_f64::<LittleEndian>()?;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let method = method_from_tag(tag[0])?;
        let fraction = r.read_f64::<LittleEndian>()?;
        let subset_len = read_varint(r)? as usize;
        let mut ids = Vec::with_capacity(subset_len);
        let mut prev = 0u64;
        for i in 0..subset_len {
            let delta = read_varint(r)?;
            let f = if i == 0 { delta } else { prev + delta };
            ids.push(f as u32);
            prev = f;
        }
        let subset = FeatureSubset::new(node, ids, method, fraction);
        let num_children = r.read_u32::<LittleEndian>()? as usize;
        if num_children != hierarchy.children(node).len() {
            return Err(ModelIoError::Corrupt(format!(
                "node {original}: child count mismatch"
            )));
        }
        let mut children = Vec::with_capacity(num_children);
        let mut weights = Vec::with_capacity(num_children);
        for _ in 0..num_children {
            let child_original = r.read_u32::<LittleEndian>()?;
            let child = hierarchy
                .node_of(child_original)
                .ok_or_else(|| ModelIoError::Corrupt(format!("unknown child {child_original}")))?;
            let mut w = Vec::with_capacity(subset.len());
            for _ in 0..subset.len() {
                w.push(r.read_f32::<LittleEndian>()?);
            }
            children.push(child);
            weights.push(w);
        }
        if children != hierarchy.children(node) {
            return Err(ModelIoError::Corrupt(format!(
                "node {original}: children disagree"
            )));
        }
        models[node] = Some(NodeModel {
            node,
            children,
            subset,
            lambda,
            weights,
        });
    }
    for n in hierarchy.internal_nodes() {
        if models[n].is_none() {
            return Err(ModelIoError::Corrupt(format!(
                "internal node {} has no model block",
                hierarchy.original_id(n)
            )));
        }
    }

    let parameter_count = models
        .iter()
        .flatten()
        .map(NodeModel::parameter_count)
        .sum();
    let model = TrainedModel {
        hierarchy,
        num_features,
        models,
        manifest: TrainingManifest {
            config: header.training,
            // timings live in the run manifest, not the model file
            per_node_seconds: vec![],
            total_seconds: 0.0,
            parameter_count,
        },
        idf,
    };
    Ok((model, header.transform))
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
struct NodeJson {
    node: u32,
    lambda: f64,
    method: Option<ScoreMethod>,
    fraction: f64,
    subset: Vec<u32>,
    children: Vec<u32>,
    weights: Vec<Vec<f32>>,
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
struct ModelJson {
    format_version: u32,
    hierarchy_hash: String,
    num_features: usize,
    config: HeaderConfig,
    edges: Vec<(u32, u32)>,
    idf: Option<Vec<f64>>,
    nodes: Vec<NodeJson>,
}

/// Lossless JSON mirror of the binary container (f32 weights round-trip
/// exactly through JSON's f64 numbers).
pub fn write_model_json(
    m: &TrainedModel,
    transform: TransformKind,
    w: &mut impl Write,
) -> Result<(), ModelIoError> {
    let h = &m.hierarchy;
    let mut nodes: Vec<&NodeModel> = m.models.iter().flatten().collect();
    nodes.sort_by_key(|nm| h.original_id(nm.node));
    let json = ModelJson {
        format_version: FORMAT_VERSION,
        hierarchy_hash: hex_string(&hierarchy_hash(h)),
        num_features: m.num_features,
        config: HeaderConfig {
            training: m.manifest.config.clone(),
            transform,
        },
        edges: h.edges(),
        idf: m.idf.clone(),
        nodes: nodes
            .into_iter()
            .map(|nm| NodeJson {
                node: h.original_id(nm.node),
                lambda: nm.lambda,
                method: nm.subset.method,
                fraction: nm.subset.fraction,
                subset: nm.subset.features().to_vec(),
                children: nm.children.iter().map(|&c| h.original_id(c)).collect(),
                weights: nm.weights.clone(),
            })
            .collect(),
    };
    serde_json::to_writer_pretty(w, &json)
        .map_err(|e| ModelIoError::Corrupt(format!("json mirror: {e}")))?;
    Ok(())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
