//! Output layouts of products involving 2:4 operands.

/// Operand kind: row-wise 2:4 sparse (`S`), its transpose (`ST`), or a dense
/// row-major (`R`) / column-major (`C`) matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operand {
    S,
    ST,
    R,
    C,
}

impl Operand {
    pub const ALL: [Operand; 4] = [Operand::S, Operand::ST, Operand::R, Operand::C];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayoutQuery {
    pub left: Operand,
    pub right: Operand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayoutPlan {
    OutRowMajor,
    OutColMajor,
    Incompatible,
}

/// Output layout of `left * right`, or `Incompatible` when the pair has no
/// sparse kernel. At most one operand may be sparse: `S` on the left or
/// `ST` on the right.
pub fn layout_plan(q: LayoutQuery) -> LayoutPlan {
    use Operand::*;
    match (q.left, q.right) {
        (S, R) | (S, C) => LayoutPlan::OutRowMajor,
        (R, ST) | (C, ST) => LayoutPlan::OutColMajor,
        (R, R) | (R, C) | (C, R) | (C, C) => LayoutPlan::OutRowMajor,
        _ => LayoutPlan::Incompatible,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(left: Operand, right: Operand) -> LayoutPlan {
        layout_plan(LayoutQuery { left, right })
    }

    #[test]
    fn examples() {
        assert_eq!(plan(Operand::S, Operand::R), LayoutPlan::OutRowMajor);
        assert_eq!(plan(Operand::ST, Operand::R), LayoutPlan::Incompatible);
        assert_eq!(plan(Operand::R, Operand::ST), LayoutPlan::OutColMajor);
    }

    #[test]
    fn sparse_transpose_never_on_the_left() {
        for r in Operand::ALL {
            assert_eq!(plan(Operand::ST, r), LayoutPlan::Incompatible);
            assert_eq!(plan(r, Operand::S), LayoutPlan::Incompatible);
        }
    }
}
