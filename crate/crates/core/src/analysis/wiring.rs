//! Pipeline wiring: endpoint existence, direction, type agreement and
//! fan-in of every connector.

use std::collections::BTreeMap;

use super::types::assignable;
use crate::diag::Diagnostic;
use crate::model::{
    resolve_generics, Connector, Direction, Instance, InstanceKind, MessageDef, ModelUnit, PipelineGraph, TensorType,
    TypeRef,
};

/// What travels through a port.
#[derive(Debug, Clone, PartialEq)]
pub enum PortPayload {
    /// A network or stub port carrying one tensor per message.
    Tensor(TensorType),
    /// A thing port carrying any of the listed messages.
    Messages(Vec<MessageDef>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortInfo {
    pub name: String,
    pub direction: Direction,
    pub payload: PortPayload,
}

/// Ports of a resolved pipeline instance.
#[derive(Debug, Clone, PartialEq)]
pub enum InstancePorts {
    Network(Vec<PortInfo>),
    Thing(Vec<PortInfo>),
    Stub(Vec<PortInfo>),
}

impl InstancePorts {
    pub fn ports(&self) -> &[PortInfo] {
        match self {
            InstancePorts::Network(p) | InstancePorts::Thing(p) | InstancePorts::Stub(p) => p,
        }
    }

    pub fn port(&self, name: &str) -> Option<&PortInfo> {
        self.ports().iter().find(|p| p.name == name)
    }
}

/// Resolves the port list of `inst`, binding network generics.
pub fn instance_ports(unit: &ModelUnit, inst: &Instance) -> Result<InstancePorts, Diagnostic> {
    match &inst.kind {
        InstanceKind::Stub { ports } => Ok(InstancePorts::Stub(
            ports
                .iter()
                .map(|p| PortInfo { name: p.name.clone(), direction: p.direction, payload: PortPayload::Tensor(p.ty.clone()) })
                .collect(),
        )),
        InstanceKind::Component { type_name, bindings, .. } => {
            if let Some(arch) = unit.network(type_name) {
                let map: BTreeMap<String, i64> = bindings.iter().cloned().collect();
                let arch = resolve_generics(arch, &map).map_err(|e| {
                    Diagnostic::error("E-GENERIC", format!("instance `{}`: {e}", inst.name), inst.span.clone())
                })?;
                let ports = arch
                    .inputs
                    .iter()
                    .map(|p| (p, Direction::In))
                    .chain(arch.outputs.iter().map(|p| (p, Direction::Out)))
                    .map(|(p, direction)| PortInfo {
                        name: p.name.clone(),
                        direction,
                        payload: PortPayload::Tensor(p.ty.clone()),
                    })
                    .collect();
                return Ok(InstancePorts::Network(ports));
            }
            if let Some(thing) = unit.thing(type_name) {
                if !bindings.is_empty() {
                    return Err(Diagnostic::error(
                        "E-GENERIC",
                        format!("thing `{type_name}` takes no generic bindings"),
                        inst.span.clone(),
                    ));
                }
                let ports = thing
                    .ports
                    .iter()
                    .map(|p| PortInfo {
                        name: p.name.clone(),
                        direction: p.direction,
                        payload: PortPayload::Messages(
                            p.messages.iter().filter_map(|m| thing.message(m)).cloned().collect(),
                        ),
                    })
                    .collect();
                return Ok(InstancePorts::Thing(ports));
            }
            Err(Diagnostic::error(
                "E-UNRESOLVED",
                format!("instance `{}` has unknown type `{type_name}`", inst.name),
                inst.span.clone(),
            ))
        }
    }
}

/// The unique message of `msgs` with a single tensor parameter of shape
/// `t`; this is how tensors cross into and out of things.
pub fn tensor_message<'a>(msgs: &'a [MessageDef], t: &TensorType) -> Option<&'a MessageDef> {
    let mut it = msgs.iter().filter(|m| {
        m.params.len() == 1 && matches!(&m.params[0].ty, TypeRef::Tensor(p) if p.dims == t.dims)
    });
    let first = it.next()?;
    it.next().is_none().then_some(first)
}

fn compatible(from: &PortPayload, to: &PortPayload) -> Result<(), String> {
    match (from, to) {
        (PortPayload::Tensor(a), PortPayload::Tensor(b)) => {
            if a == b {
                Ok(())
            } else {
                Err(format!("{a} does not match {b}"))
            }
        }
        (PortPayload::Messages(ms), PortPayload::Tensor(t)) => {
            if ms.len() == 1 && tensor_message(ms, t).is_some() {
                Ok(())
            } else {
                Err(format!("port must carry exactly one message with a single {t} parameter"))
            }
        }
        (PortPayload::Tensor(t), PortPayload::Messages(ms)) => {
            if tensor_message(ms, t).is_some() {
                Ok(())
            } else {
                Err(format!("receiving port accepts no unique message with a single {t} parameter"))
            }
        }
        (PortPayload::Messages(src), PortPayload::Messages(dst)) => {
            for m in src {
                let Some(d) = dst.iter().find(|d| d.name == m.name) else {
                    return Err(format!("message `{}` is not accepted by the receiving port", m.name));
                };
                let same = d.params.len() == m.params.len()
                    && m.params.iter().zip(&d.params).all(|(a, b)| assignable(&a.ty, &b.ty));
                if !same {
                    return Err(format!("message `{}` has different parameters on each side", m.name));
                }
            }
            Ok(())
        }
    }
}

pub fn check_wiring(pipeline: &PipelineGraph, unit: &ModelUnit) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut resolved: BTreeMap<&str, InstancePorts> = BTreeMap::new();
    for inst in &pipeline.instances {
        match instance_ports(unit, inst) {
            Ok(p) => {
                resolved.insert(inst.name.as_str(), p);
            }
            Err(d) => diags.push(d),
        }
    }

    let mut writers: BTreeMap<(&str, &str), Vec<&Connector>> = BTreeMap::new();
    for c in &pipeline.connectors {
        let lookup = |ep: &crate::model::Endpoint| -> Result<Option<&PortInfo>, String> {
            if pipeline.instance(&ep.instance).is_none() {
                return Err(format!("no instance `{}`", ep.instance));
            }
            let Some(ports) = resolved.get(ep.instance.as_str()) else { return Ok(None) };
            ports.port(&ep.port).map(Some).ok_or_else(|| format!("`{}` has no port `{}`", ep.instance, ep.port))
        };
        let (src, dst) = match (lookup(&c.from), lookup(&c.to)) {
            (Ok(Some(s)), Ok(Some(d))) => (s, d),
            (Err(e), _) | (_, Err(e)) => {
                diags.push(Diagnostic::error("E-DANGLING", format!("connector {} -> {}: {e}", c.from, c.to), c.span.clone()));
                continue;
            }
            _ => continue,
        };
        if !src.direction.can_send() || !dst.direction.can_receive() {
            diags.push(Diagnostic::error(
                "E-DANGLING",
                format!(
                    "connector {} -> {} joins a {} port to a {} port; expected out -> in",
                    c.from,
                    c.to,
                    src.direction.as_str(),
                    dst.direction.as_str()
                ),
                c.span.clone(),
            ));
            continue;
        }
        if let Err(e) = compatible(&src.payload, &dst.payload) {
            diags.push(Diagnostic::error("E-TYPE-MISMATCH", format!("connector {} -> {}: {e}", c.from, c.to), c.span.clone()));
        }
        if matches!(dst.payload, PortPayload::Tensor(_)) {
            writers.entry((c.to.instance.as_str(), c.to.port.as_str())).or_default().push(c);
        }
    }

    for ((inst, port), cs) in &writers {
        if cs.len() > 1 {
            let mut d = Diagnostic::error(
                "E-MULTIPLE-WRITERS",
                format!("input `{inst}.{port}` has {} producers", cs.len()),
                cs[1].span.clone(),
            );
            d = d.with_related(cs[0].span.clone());
            diags.push(d);
        }
    }

    for inst in &pipeline.instances {
        if let Some(InstancePorts::Network(ports)) = resolved.get(inst.name.as_str()) {
            for p in ports.iter().filter(|p| p.direction == Direction::In) {
                if !writers.contains_key(&(inst.name.as_str(), p.name.as_str())) {
                    diags.push(Diagnostic::error(
                        "E-UNCONNECTED-INPUT",
                        format!("network input `{}.{}` is not connected", inst.name, p.name),
                        inst.span.clone(),
                    ));
                }
            }
        }
    }
    diags
}
