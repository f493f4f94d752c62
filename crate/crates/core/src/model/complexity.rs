use std::fmt;

use super::config::ModelConfig;

/// FLOPs and MACs of one layer for a single patch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerCost {
    pub name: &'static str,
    pub macs: u64,
    /// Element-wise operations outside the multiply-accumulate core
    /// (bias adds, activations, pooling, gating, complex recombination).
    pub elementwise: u64,
}

impl LayerCost {
    /// One multiply plus one add per MAC, plus one FLOP per element-wise op.
    pub fn flops(&self) -> u64 {
        2 * self.macs + self.elementwise
    }
}

/// Per-layer cost ledger for one forward pass on one patch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComplexityReport {
    pub layers: Vec<LayerCost>,
}

/// Values printed in the published complexity table, shown for reference.
pub const REFERENCE_FLOPS: u64 = 7_606_272;
pub const REFERENCE_MACS: u64 = 2_045_952;

impl ComplexityReport {
    pub fn macs(&self) -> u64 {
        self.layers.iter().map(|l| l.macs).sum()
    }

    pub fn flops(&self) -> u64 {
        self.layers.iter().map(LayerCost::flops).sum()
    }
}

/// Counts MACs as output elements x kernel taps x input channels for every
/// convolution and dense map; a complex convolution costs four real ones.
pub fn count_flops_macs(config: &ModelConfig) -> ComplexityReport {
    let u = |v: usize| v as u64;
    let p = config.patch;
    let (f1, f2) = config.filters;
    let (dr, dc) = (config.descriptor_depth, config.complex_depth);
    let s1 = p - 2;
    let s2 = p - 4;
    let fused = config.fused_channels();
    let m = config.attention_channels();
    let k = config.num_classes;

    let conv = |side: usize, depth: usize, cin: usize, cout: usize| u(side * side * depth * cout * 27 * cin);
    let mut layers = Vec::new();

    let out = u(s1 * s1 * dr * f1);
    layers.push(LayerCost { name: "rv_conv1", macs: conv(s1, dr, 1, f1), elementwise: 2 * out });
    let out = u(s2 * s2 * dr * f2);
    layers.push(LayerCost { name: "rv_conv2", macs: conv(s2, dr, f1, f2), elementwise: 2 * out });

    // four real convolutions, two recombining adds, two biases, two activations
    let out = u(s1 * s1 * dc * f1);
    layers.push(LayerCost { name: "cv_conv1", macs: 4 * conv(s1, dc, 1, f1), elementwise: 6 * out });
    let out = u(s2 * s2 * dc * f2);
    layers.push(LayerCost { name: "cv_conv2", macs: 4 * conv(s2, dc, f1, f2), elementwise: 6 * out });

    let plane = u(s2 * s2 * fused);
    layers.push(LayerCost { name: "depthwise", macs: plane * 9, elementwise: 2 * plane });

    let joint = u(2 * s2);
    let fs = joint * u(fused * m);
    let gates = joint * u(m * fused);
    layers.push(LayerCost {
        name: "attention",
        // pooling (2 passes over the plane), shared-map bias + batch norm (2)
        // + relu, gate biases + sigmoids, then two multiplies per element
        macs: fs + gates,
        elementwise: 2 * plane + joint * u(m) * 4 + joint * u(fused) * 2 + 2 * plane,
    });
    layers.push(LayerCost { name: "gap", macs: 0, elementwise: plane });
    layers.push(LayerCost { name: "dense", macs: u(fused * k), elementwise: u(k) });
    ComplexityReport { layers }
}

impl fmt::Display for ComplexityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>14} {:>14}", "layer", "MACs", "FLOPs")?;
        for l in &self.layers {
            writeln!(f, "{:<12} {:>14} {:>14}", l.name, l.macs, l.flops())?;
        }
        writeln!(f, "{:<12} {:>14} {:>14}", "total", self.macs(), self.flops())?;
        writeln!(
            f,
            "convention: MAC = output element x tap x input channel, complex conv = 4 real convs, FLOPs = 2*MACs + element-wise ops"
        )?;
        write!(f, "published table (counting tool unknown): FLOPs {REFERENCE_FLOPS}, MACs {REFERENCE_MACS}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_and_depthwise_macs() {
        let r = count_flops_macs(&ModelConfig::new(15, 15).unwrap());
        let get = |n: &str| r.layers.iter().find(|l| l.name == n).unwrap().macs;
        assert_eq!(get("dense"), 11_520);
        assert_eq!(get("depthwise"), 836_352);
        assert_eq!(r.macs(), r.layers.iter().map(|l| l.macs).sum::<u64>());
        assert!(r.flops() >= 2 * r.macs());
    }
}
