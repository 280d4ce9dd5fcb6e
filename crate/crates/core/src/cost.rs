//! Multiply-add and parameter accounting for the macro network.
//!
//! Per operator on a `(C, H, W)` feature map:
//! - `sep_conv_3x3`: `H*W*C*(9 + C)` MAdds (depthwise then pointwise), `9C + C^2` weights
//! - `skip`: free
//! - `toy_linear`: `F^2` MAdds and `F^2 + F` weights, `F = C*H*W`
//!
//! A reduction unit (stride-2 pointwise `C -> 2C`) costs `H'*W'*C*2C` with
//! `H' = ceil(H/2)`; the classifier head costs `C_last * classes`. ReLU and
//! pooling are not counted.

use crate::error::Result;
use crate::space::{DiscreteArchitecture, OperatorKind, SupernetSpec};

pub fn op_madds(op: OperatorKind, channels: usize, spatial: usize) -> u64 {
    let (c, hw) = (channels as u64, (spatial * spatial) as u64);
    match op {
        OperatorKind::SepConv3x3 => hw * c * (9 + c),
        OperatorKind::Skip => 0,
        OperatorKind::ToyLinear => (c * hw) * (c * hw),
    }
}

pub fn op_params(op: OperatorKind, channels: usize, spatial: usize) -> usize {
    match op {
        OperatorKind::SepConv3x3 => 9 * channels + channels * channels,
        OperatorKind::Skip => 0,
        OperatorKind::ToyLinear => {
            let f = channels * spatial * spatial;
            f * f + f
        }
    }
}

pub(crate) fn op_is_costly(op: OperatorKind) -> bool {
    op != OperatorKind::Skip
}

/// MAdds of the non-searched parts: reduction units and the classifier head.
pub fn fixed_madds(spec: &SupernetSpec) -> u64 {
    let mut total = 0u64;
    for (s, st) in spec.stages.iter().enumerate() {
        if st.reduction_after {
            let (c_out, hw_out) = spec.transition_shape(s);
            total += (hw_out * hw_out * st.channels * c_out) as u64;
        }
    }
    let last = spec.stages.last().expect("validated spec has stages");
    total + (last.channels * spec.num_classes) as u64
}

pub fn fixed_params(spec: &SupernetSpec) -> usize {
    let mut total = 0;
    for (s, st) in spec.stages.iter().enumerate() {
        if st.reduction_after {
            total += st.channels * spec.transition_shape(s).0;
        }
    }
    let last = spec.stages.last().expect("validated spec has stages");
    total + last.channels * spec.num_classes + spec.num_classes
}

pub fn madds(arch: &DiscreteArchitecture) -> Result<u64> {
    arch.spec.validate()?;
    let spec = &arch.spec;
    let searched: u64 = arch
        .alive
        .iter()
        .map(|&(c, op)| {
            let st = &spec.stages[c.stage];
            op_madds(op, st.channels, st.spatial_size)
        })
        .sum();
    Ok(searched + fixed_madds(spec))
}

pub fn param_count(arch: &DiscreteArchitecture) -> Result<usize> {
    arch.spec.validate()?;
    let spec = &arch.spec;
    let searched: usize = arch
        .alive
        .iter()
        .map(|&(c, op)| {
            let st = &spec.stages[c.stage];
            op_params(op, st.channels, st.spatial_size)
        })
        .sum();
    Ok(searched + fixed_params(spec))
}

/// Cost of the cheapest valid architecture: per stage, the fewest hops
/// (`ceil(N/L)`) each carrying the cheapest operator.
pub fn minimal_valid_madds(spec: &SupernetSpec) -> Result<u64> {
    spec.validate()?;
    let mut total = fixed_madds(spec);
    for st in &spec.stages {
        let cheapest = spec
            .operator_set
            .iter()
            .map(|&op| op_madds(op, st.channels, st.spatial_size))
            .min()
            .expect("validated operator set is non-empty");
        total += st.node_count.div_ceil(spec.max_len) as u64 * cheapest;
    }
    Ok(total)
}
