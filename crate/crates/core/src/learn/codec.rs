//! Binary model blobs.
//!
//! Layout, all little-endian: magic `UWBM`, u16 version, u8 classifier kind,
//! u8 body tag, u16 feature layout, u64 seed, u32 feature count, u32 class
//! count followed by one u8 label per class, then the body.

use std::io::{Read, Write};

use byteorder::{ReadBytesExt, WriteBytesExt, LE};
use ndarray::{Array1, Array2};

use super::mlp::{Dense, Mlp};
use super::tree::{DecisionTree, Node};
use super::{AdaBoost, ClassifierKind, ModelBody, RandomForest, TrainedModel};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"UWBM";
pub const MODEL_VERSION: u16 = 1;

/// Guards allocations driven by untrusted length fields.
const MAX_LEN: usize = 1 << 28;

fn format(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn eof(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        format("truncated model blob")
    } else {
        Error::Io(e)
    }
}

fn write_len<W: Write>(w: &mut W, n: usize) -> Result<()> {
    let n = u32::try_from(n).map_err(|_| format("length exceeds u32"))?;
    Ok(w.write_u32::<LE>(n)?)
}

fn read_len<R: Read>(r: &mut R) -> Result<usize> {
    let n = r.read_u32::<LE>().map_err(eof)? as usize;
    if n > MAX_LEN {
        return Err(format(format!("implausible length {n}")));
    }
    Ok(n)
}

fn write_f64s<'a, W: Write>(w: &mut W, v: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    for x in v {
        w.write_f64::<LE>(*x)?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| r.read_f64::<LE>().map_err(eof)).collect()
}

fn write_tree<W: Write>(w: &mut W, t: &DecisionTree) -> Result<()> {
    write_len(w, t.n_classes)?;
    write_len(w, t.nodes.len())?;
    for n in &t.nodes {
        match n {
            Node::Leaf { dist } => {
                w.write_u8(0)?;
                write_f64s(w, dist)?;
            }
            Node::Split { feature, threshold, left, right } => {
                w.write_u8(1)?;
                write_len(w, *feature)?;
                w.write_f64::<LE>(*threshold)?;
                write_len(w, *left)?;
                write_len(w, *right)?;
            }
        }
    }
    Ok(())
}

fn read_tree<R: Read>(r: &mut R, n_features: usize) -> Result<DecisionTree> {
    let n_classes = read_len(r)?;
    let count = read_len(r)?;
    let mut nodes = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        let node = match r.read_u8().map_err(eof)? {
            0 => Node::Leaf { dist: read_f64s(r, n_classes)? },
            1 => {
                let feature = read_len(r)?;
                let threshold = r.read_f64::<LE>().map_err(eof)?;
                let left = read_len(r)?;
                let right = read_len(r)?;
                // Children always follow their parent, which also rules out cycles.
                if feature >= n_features || left <= i || right <= i || left >= count || right >= count {
                    return Err(format(format!("corrupt split node {i}")));
                }
                Node::Split { feature, threshold, left, right }
            }
            t => return Err(format(format!("unknown node tag {t}"))),
        };
        nodes.push(node);
    }
    if nodes.is_empty() {
        return Err(format("tree without nodes"));
    }
    Ok(DecisionTree { nodes, n_classes })
}

fn write_trees<W: Write>(w: &mut W, trees: &[DecisionTree]) -> Result<()> {
    write_len(w, trees.len())?;
    trees.iter().try_for_each(|t| write_tree(w, t))
}

fn read_trees<R: Read>(r: &mut R, n_features: usize) -> Result<Vec<DecisionTree>> {
    let n = read_len(r)?;
    (0..n).map(|_| read_tree(r, n_features)).collect()
}

fn body_tag(b: &ModelBody) -> u8 {
    match b {
        ModelBody::Constant => 0,
        ModelBody::Tree(_) => 1,
        ModelBody::Forest(_) => 2,
        ModelBody::Boost(_) => 3,
        ModelBody::Net(_) => 4,
    }
}

pub fn write_model<W: Write>(w: &mut W, m: &TrainedModel) -> Result<()> {
    w.write_all(MODEL_MAGIC)?;
    w.write_u16::<LE>(MODEL_VERSION)?;
    w.write_u8(m.kind.tag())?;
    w.write_u8(body_tag(&m.body))?;
    w.write_u16::<LE>(m.layout_version)?;
    w.write_u64::<LE>(m.seed)?;
    write_len(w, m.n_features)?;
    write_len(w, m.classes.len())?;
    w.write_all(&m.classes)?;
    match &m.body {
        ModelBody::Constant => {}
        ModelBody::Tree(t) => write_tree(w, t)?,
        ModelBody::Forest(f) => {
            write_len(w, f.n_classes)?;
            write_trees(w, &f.trees)?;
        }
        ModelBody::Boost(b) => {
            write_len(w, b.n_classes)?;
            w.write_f64::<LE>(b.learning_rate)?;
            write_trees(w, &b.stages)?;
        }
        ModelBody::Net(n) => {
            write_len(w, n.layers.len())?;
            for l in &n.layers {
                write_len(w, l.w.nrows())?;
                write_len(w, l.w.ncols())?;
                write_f64s(w, l.w.iter())?;
                write_f64s(w, l.b.iter())?;
            }
            write_f64s(w, n.mean.iter())?;
            write_f64s(w, n.scale.iter())?;
        }
    }
    Ok(())
}

pub fn read_model<R: Read>(r: &mut R) -> Result<TrainedModel> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(eof)?;
    if &magic != MODEL_MAGIC {
        return Err(format("not a model blob (bad magic)"));
    }
    let version = r.read_u16::<LE>().map_err(eof)?;
    if version != MODEL_VERSION {
        return Err(format(format!("unsupported model version {version}")));
    }
    let kind_tag = r.read_u8().map_err(eof)?;
    let kind = ClassifierKind::from_tag(kind_tag).ok_or_else(|| format(format!("unknown classifier tag {kind_tag}")))?;
    let body_tag = r.read_u8().map_err(eof)?;
    let layout_version = r.read_u16::<LE>().map_err(eof)?;
    let seed = r.read_u64::<LE>().map_err(eof)?;
    let n_features = read_len(r)?;
    let n_classes = read_len(r)?;
    let mut classes = vec![0u8; n_classes];
    r.read_exact(&mut classes).map_err(eof)?;
    if classes.is_empty() || classes.windows(2).any(|p| p[0] >= p[1]) {
        return Err(format("class list must be non-empty and ascending"));
    }
    let check_k = |k: usize| if k == n_classes { Ok(()) } else { Err(format("class count mismatch")) };
    let body = match body_tag {
        0 => ModelBody::Constant,
        1 => {
            let t = read_tree(r, n_features)?;
            check_k(t.n_classes)?;
            ModelBody::Tree(t)
        }
        2 => {
            let k = read_len(r)?;
            check_k(k)?;
            let trees = read_trees(r, n_features)?;
            if trees.is_empty() || trees.iter().any(|t| t.n_classes != k) {
                return Err(format("forest trees disagree on class count"));
            }
            ModelBody::Forest(RandomForest { trees, n_classes: k })
        }
        3 => {
            let k = read_len(r)?;
            check_k(k)?;
            let learning_rate = r.read_f64::<LE>().map_err(eof)?;
            let stages = read_trees(r, n_features)?;
            if stages.iter().any(|t| t.n_classes != k) {
                return Err(format("boosting stages disagree on class count"));
            }
            ModelBody::Boost(AdaBoost { stages, n_classes: k, learning_rate })
        }
        4 => {
            let n_layers = read_len(r)?;
            let mut layers = Vec::with_capacity(n_layers.min(64));
            let mut width = n_features;
            for _ in 0..n_layers {
                let rows = read_len(r)?;
                let cols = read_len(r)?;
                if rows != width || rows.saturating_mul(cols) > MAX_LEN {
                    return Err(format("layer shapes do not chain"));
                }
                let w = Array2::from_shape_vec((rows, cols), read_f64s(r, rows * cols)?)
                    .map_err(|e| format(e.to_string()))?;
                let b = Array1::from(read_f64s(r, cols)?);
                layers.push(Dense { w, b });
                width = cols;
            }
            check_k(width)?;
            let mean = Array1::from(read_f64s(r, n_features)?);
            let scale = Array1::from(read_f64s(r, n_features)?);
            ModelBody::Net(Mlp { layers, mean, scale })
        }
        t => return Err(format(format!("unknown model body tag {t}"))),
    };
    Ok(TrainedModel { kind, body, classes, n_features, layout_version, seed })
}

pub fn to_bytes(m: &TrainedModel) -> Vec<u8> {
    let mut buf = Vec::new();
    write_model(&mut buf, m).expect("writing to a Vec cannot fail");
    buf
}

pub fn from_bytes(mut bytes: &[u8]) -> Result<TrainedModel> {
    read_model(&mut bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::tests::blobs;
    use crate::learn::{train, ClassifierConfig};

    #[test]
    fn every_kind_round_trips() {
        let d = blobs(15, &[0.0, 1.5, 3.0], 4, 8);
        for kind in ClassifierKind::ALL {
            let cfg = ClassifierConfig { trees: 5, estimators: 5, epochs: 3, hidden: vec![6, 5], ..ClassifierConfig::new(kind) };
            let m = train(&cfg, &d).unwrap();
            let back = from_bytes(&to_bytes(&m)).unwrap();
            assert_eq!(back, m, "{kind}");
        }
    }

    #[test]
    fn constant_round_trips() {
        let mut d = blobs(4, &[0.0], 2, 1);
        d.labels = vec![3; 4];
        let m = train(&ClassifierConfig::new(ClassifierKind::AdaBoost), &d).unwrap();
        assert_eq!(from_bytes(&to_bytes(&m)).unwrap(), m);
    }

    #[test]
    fn corrupt_blobs_are_format_errors() {
        let d = blobs(10, &[0.0, 4.0], 3, 2);
        let bytes = to_bytes(&train(&ClassifierConfig::new(ClassifierKind::DecisionTree), &d).unwrap());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(from_bytes(&bad), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(from_bytes(&bad), Err(Error::Format(_))));
        assert!(matches!(from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
    }
}
