use std::fmt;

/// A tensor dimension or integer layer argument: either a literal or a
/// reference to a generic parameter / def-block parameter.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Dim {
    Lit(u64),
    Sym(String),
}

impl Dim {
    pub fn value(&self) -> Option<u64> {
        match self {
            Dim::Lit(v) => Some(*v),
            Dim::Sym(_) => None,
        }
    }

    pub fn is_concrete(&self) -> bool {
        matches!(self, Dim::Lit(_))
    }
}

impl From<u64> for Dim {
    fn from(v: u64) -> Self {
        Dim::Lit(v)
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dim::Lit(v) => write!(f, "{v}"),
            Dim::Sym(s) => f.write_str(s),
        }
    }
}

/// Element domain of a tensor: `Z(lo:hi)` for integer-quantized values,
/// `Q(lo:hi)` for real values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    Integer,
    Real,
}

impl ElementKind {
    pub fn symbol(self) -> &'static str {
        match self {
            ElementKind::Integer => "Z",
            ElementKind::Real => "Q",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementRange {
    pub kind: ElementKind,
    pub lo: f64,
    pub hi: f64,
}

impl ElementRange {
    pub fn new(kind: ElementKind, lo: f64, hi: f64) -> Self {
        ElementRange { kind, lo, hi }
    }

    pub fn is_valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorType {
    pub range: ElementRange,
    pub dims: Vec<Dim>,
}

impl TensorType {
    pub fn new(range: ElementRange, dims: Vec<Dim>) -> Self {
        TensorType { range, dims }
    }

    /// Concrete dims, or `None` while any dim is still symbolic.
    pub fn concrete_dims(&self) -> Option<Vec<u64>> {
        self.dims.iter().map(Dim::value).collect()
    }

    pub fn is_concrete(&self) -> bool {
        self.dims.iter().all(Dim::is_concrete)
    }

    pub fn element_count(&self) -> Option<u64> {
        self.concrete_dims().map(|d| d.iter().product())
    }

    /// Checks the structural invariants, returning a description of the
    /// first violation.
    pub fn check(&self) -> Result<(), String> {
        if self.dims.is_empty() {
            return Err("tensor type needs at least one dimension".into());
        }
        if let Some(Dim::Lit(0)) = self.dims.iter().find(|d| matches!(d, Dim::Lit(0))) {
            return Err("tensor dimensions must be at least 1".into());
        }
        if !self.range.is_valid() {
            return Err(format!(
                "element range lower bound {} must be below upper bound {}",
                fmt_num(self.range.lo),
                fmt_num(self.range.hi)
            ));
        }
        Ok(())
    }
}

pub(crate) fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

impl fmt::Display for TensorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}({}:{})^{{",
            self.range.kind.symbol(),
            fmt_num(self.range.lo),
            fmt_num(self.range.hi)
        )?;
        for (i, d) in self.dims.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{d}")?;
        }
        f.write_str("}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_matches_source_syntax() {
        let t = TensorType::new(
            ElementRange::new(ElementKind::Real, 0.0, 255.0),
            vec![Dim::Lit(28), Dim::Lit(28)],
        );
        assert_eq!(t.to_string(), "Q(0:255)^{28,28}");
        let t = TensorType::new(
            ElementRange::new(ElementKind::Integer, -0.5, 1.0),
            vec![Dim::Sym("classes".into())],
        );
        assert_eq!(t.to_string(), "Z(-0.5:1)^{classes}");
    }

    #[test]
    fn invariants() {
        let r = ElementRange::new(ElementKind::Real, 0.0, 1.0);
        assert!(TensorType::new(r, vec![]).check().is_err());
        assert!(TensorType::new(r, vec![Dim::Lit(0)]).check().is_err());
        assert!(TensorType::new(ElementRange::new(ElementKind::Real, 1.0, 1.0), vec![Dim::Lit(2)])
            .check()
            .is_err());
        assert!(TensorType::new(r, vec![Dim::Lit(3), Dim::Sym("n".into())]).check().is_ok());
    }
}
