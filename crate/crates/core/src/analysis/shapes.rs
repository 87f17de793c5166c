//! Layer-wise shape propagation over flat, concrete architectures.
//!
//! Dimensions are channel-last: `[H, W, C]` for images, `[N]` for vectors.
//! A rank-2 tensor entering a convolution or pooling layer is read as a
//! single-channel image `[H, W, 1]`.

use std::fmt;

use crate::diag::{Diagnostic, Span};
use crate::model::{BodyItem, LayerKind, NetworkArch, Padding};

/// Shapes at every position of the body: `shapes[0]` is the input port,
/// `shapes[i + 1]` the output of layer `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeAnnotation {
    pub shapes: Vec<Vec<u64>>,
}

impl ShapeAnnotation {
    pub fn input_of(&self, layer: usize) -> &[u64] {
        &self.shapes[layer]
    }

    pub fn output_of(&self, layer: usize) -> &[u64] {
        &self.shapes[layer + 1]
    }

    pub fn output(&self) -> &[u64] {
        self.shapes.last().expect("annotation is never empty")
    }
}

/// Input and output shapes recorded in a pretrained weight archive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PretrainedShape {
    pub input: Vec<u64>,
    pub output: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ShapeError {
    Mismatch { layer: usize, expected: Vec<u64>, found: Vec<u64> },
    Rank { layer: usize, expected: &'static str, found: Vec<u64> },
    WindowTooLarge { layer: usize, window: (u64, u64), found: Vec<u64> },
    UnresolvedImport { layer: usize, archive: String },
    NotConcrete,
}

fn dims(d: &[u64]) -> String {
    format!("[{}]", d.iter().map(u64::to_string).collect::<Vec<_>>().join(", "))
}

impl fmt::Display for ShapeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShapeError::Mismatch { layer, expected, found } => {
                write!(f, "shape mismatch at layer {layer}: expected {}, found {}", dims(expected), dims(found))
            }
            ShapeError::Rank { layer, expected, found } => {
                write!(f, "layer {layer} expects a {expected} input, found {}", dims(found))
            }
            ShapeError::WindowTooLarge { layer, window, found } => write!(
                f,
                "layer {layer}: window {}x{} does not fit input {}",
                window.0,
                window.1,
                dims(found)
            ),
            ShapeError::UnresolvedImport { archive, .. } => write!(f, "cannot read pretrained archive `{archive}`"),
            ShapeError::NotConcrete => f.write_str("shape inference needs a generic-free, def-flat architecture"),
        }
    }
}

impl ShapeError {
    pub fn code(&self) -> &'static str {
        match self {
            ShapeError::Mismatch { .. } | ShapeError::WindowTooLarge { .. } => "E-SHAPE",
            ShapeError::Rank { .. } => "E-RANK",
            ShapeError::UnresolvedImport { .. } => "E-IMPORT",
            ShapeError::NotConcrete => "E-SHAPE-PRECONDITION",
        }
    }

    pub fn layer(&self) -> Option<usize> {
        match self {
            ShapeError::Mismatch { layer, .. }
            | ShapeError::Rank { layer, .. }
            | ShapeError::WindowTooLarge { layer, .. }
            | ShapeError::UnresolvedImport { layer, .. } => Some(*layer),
            ShapeError::NotConcrete => None,
        }
    }
}

fn image(layer: usize, input: &[u64]) -> Result<(u64, u64, u64), ShapeError> {
    match *input {
        [h, w] => Ok((h, w, 1)),
        [h, w, c] => Ok((h, w, c)),
        _ => Err(ShapeError::Rank { layer, expected: "rank-2 or rank-3 image", found: input.to_vec() }),
    }
}

fn slide(layer: usize, input: &[u64], window: (u64, u64), stride: (u64, u64), pad: Padding) -> Result<(u64, u64), ShapeError> {
    let (h, w, _) = image(layer, input)?;
    match pad {
        Padding::Same => Ok((h.div_ceil(stride.0), w.div_ceil(stride.1))),
        Padding::Valid => {
            if window.0 > h || window.1 > w {
                return Err(ShapeError::WindowTooLarge { layer, window, found: input.to_vec() });
            }
            Ok(((h - window.0) / stride.0 + 1, (w - window.1) / stride.1 + 1))
        }
    }
}

/// Output shape of a single layer.
pub fn propagate(
    layer: usize,
    kind: &LayerKind,
    input: &[u64],
    pretrained: &dyn Fn(&str) -> Option<PretrainedShape>,
) -> Result<Vec<u64>, ShapeError> {
    let lit = |d: &crate::model::Dim| d.value().ok_or(ShapeError::NotConcrete);
    match kind {
        LayerKind::Convolution { kernel, channels, stride, padding } => {
            let k = (lit(&kernel.0)?, lit(&kernel.1)?);
            let s = (lit(&stride.0)?, lit(&stride.1)?);
            let (h, w) = slide(layer, input, k, s, *padding)?;
            Ok(vec![h, w, lit(channels)?])
        }
        LayerKind::Pooling { window, stride, .. } => {
            let k = (lit(&window.0)?, lit(&window.1)?);
            let s = (lit(&stride.0)?, lit(&stride.1)?);
            let (_, _, c) = image(layer, input)?;
            let (h, w) = slide(layer, input, k, s, Padding::Valid)?;
            Ok(vec![h, w, c])
        }
        LayerKind::Flatten => Ok(vec![input.iter().product()]),
        LayerKind::FullyConnected { units } => {
            if input.len() != 1 {
                return Err(ShapeError::Rank { layer, expected: "rank-1", found: input.to_vec() });
            }
            Ok(vec![lit(units)?])
        }
        LayerKind::Relu | LayerKind::Sigmoid | LayerKind::Tanh | LayerKind::Softmax | LayerKind::Dropout { .. } => {
            Ok(input.to_vec())
        }
        LayerKind::ImportPretrained { archive, .. } => {
            let shape =
                pretrained(archive).ok_or_else(|| ShapeError::UnresolvedImport { layer, archive: archive.clone() })?;
            if shape.input != input {
                return Err(ShapeError::Mismatch { layer, expected: shape.input, found: input.to_vec() });
            }
            Ok(shape.output)
        }
    }
}

/// Propagates shapes from the input port through every layer and checks
/// the result against the declared output port.
pub fn infer_shapes_checked(
    arch: &NetworkArch,
    pretrained: &dyn Fn(&str) -> Option<PretrainedShape>,
) -> Result<ShapeAnnotation, ShapeError> {
    if !arch.is_flat() {
        return Err(ShapeError::NotConcrete);
    }
    let port_dims = |name: &str, ports: &[crate::model::NetPort]| {
        ports.iter().find(|p| p.name == name).and_then(|p| p.ty.concrete_dims()).ok_or(ShapeError::NotConcrete)
    };
    let mut shapes = vec![port_dims(&arch.body.source, &arch.inputs)?];
    let layers: Vec<&LayerKind> = arch
        .body
        .layers
        .iter()
        .map(|i| match i {
            BodyItem::Layer(l) => &l.kind,
            BodyItem::Call(_) => unreachable!("checked flat"),
        })
        .collect();
    for (i, kind) in layers.iter().enumerate() {
        let next = propagate(i, kind, shapes.last().expect("non-empty"), pretrained)?;
        shapes.push(next);
    }
    let declared = port_dims(&arch.body.sink, &arch.outputs)?;
    let found = shapes.last().expect("non-empty");
    if *found != declared {
        return Err(ShapeError::Mismatch { layer: layers.len().saturating_sub(1), expected: declared, found: found.clone() });
    }
    Ok(ShapeAnnotation { shapes })
}

fn layer_span(arch: &NetworkArch, layer: Option<usize>) -> Span {
    match layer.and_then(|i| arch.body.layers.get(i)) {
        Some(BodyItem::Layer(l)) => l.span.clone(),
        Some(BodyItem::Call(c)) => c.span.clone(),
        None => arch.body.span.clone(),
    }
}

/// Diagnostic-producing wrapper around [`infer_shapes_checked`].
pub fn infer_shapes(
    arch: &NetworkArch,
    pretrained: &dyn Fn(&str) -> Option<PretrainedShape>,
) -> (Option<ShapeAnnotation>, Vec<Diagnostic>) {
    match infer_shapes_checked(arch, pretrained) {
        Ok(a) => (Some(a), Vec::new()),
        Err(e) => {
            let d = Diagnostic::error(e.code(), format!("{}: {e}", arch.name), layer_span(arch, e.layer()));
            (None, vec![d])
        }
    }
}
