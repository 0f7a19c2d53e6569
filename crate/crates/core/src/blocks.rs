//! Composite units of the network: the multi-scale dense cross block (MDCB),
//! channel attention (CAM), hierarchical feature distillation (HFDB), the
//! dynamic reconstruction block (DRB), the ResBlock/MSRB baselines, and the
//! hierarchical aggregation methods used for comparison.
//!
//! Every unit comes in two halves: `layers` lists the convolutions it owns
//! (name, widths, kernel) so a parameter store can be built and counted, and
//! `bind` resolves those names into tape variables for a forward pass.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tape, Var};

/// One convolution layer of the inventory.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ConvSpec {
    pub name: String,
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: usize,
}

impl ConvSpec {
    pub fn new(name: impl Into<String>, in_c: usize, out_c: usize, kernel: usize) -> Self {
        ConvSpec {
            name: name.into(),
            in_c,
            out_c,
            kernel,
        }
    }

    /// Weights plus biases.
    pub fn param_count(&self) -> usize {
        self.kernel * self.kernel * self.in_c * self.out_c + self.out_c
    }
}

/// Weight and bias of a bound convolution.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ConvVars {
    pub weight: Var,
    pub bias: Var,
}

impl ConvVars {
    pub fn apply<T: Scalar>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        tape.conv2d(x, self.weight, self.bias)
    }
}

/// Resolves layer names to tape variables.
pub trait Binder {
    fn conv(&mut self, name: &str) -> Result<ConvVars>;
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Which dense paths of the MDCB are present.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Paths {
    #[default]
    Dual,
    Top,
    Bottom,
}

impl Paths {
    pub fn has_top(self) -> bool {
        matches!(self, Paths::Dual | Paths::Top)
    }

    pub fn has_bottom(self) -> bool {
        matches!(self, Paths::Dual | Paths::Bottom)
    }

    fn count(self) -> usize {
        usize::from(self.has_top()) + usize::from(self.has_bottom())
    }
}

/// One dense path: extraction conv, 1×1 fusion, refinement conv.
#[derive(Clone, Copy, Debug)]
pub struct PathParams {
    pub extract: ConvVars,
    pub fuse: ConvVars,
    pub refine: ConvVars,
}

#[derive(Clone, Debug)]
pub struct MdcbParams {
    /// 3×3 path.
    pub top: Option<PathParams>,
    /// 5×5 path.
    pub bottom: Option<PathParams>,
    pub tail: ConvVars,
    pub fefm: bool,
    pub residual: bool,
}

impl MdcbParams {
    pub fn layers(prefix: &str, channels: usize, paths: Paths, fefm: bool) -> Vec<ConvSpec> {
        let c = channels;
        let fuse_in = if fefm && paths == Paths::Dual { 3 * c } else { 2 * c };
        let mut out = Vec::new();
        for (present, tag, k) in [(paths.has_top(), "top", 3), (paths.has_bottom(), "bottom", 5)] {
            if present {
                out.push(ConvSpec::new(join(prefix, &format!("{tag}.extract")), c, c, k));
                out.push(ConvSpec::new(join(prefix, &format!("{tag}.fuse")), fuse_in, c, 1));
                out.push(ConvSpec::new(join(prefix, &format!("{tag}.refine")), c, c, k));
            }
        }
        let tail_in = (2 * paths.count() + 1) * c;
        out.push(ConvSpec::new(join(prefix, "tail"), tail_in, c, 1));
        out
    }

    pub fn bind(binder: &mut impl Binder, prefix: &str, paths: Paths, fefm: bool, residual: bool) -> Result<Self> {
        let mut path = |tag: &str| -> Result<PathParams> {
            Ok(PathParams {
                extract: binder.conv(&join(prefix, &format!("{tag}.extract")))?,
                fuse: binder.conv(&join(prefix, &format!("{tag}.fuse")))?,
                refine: binder.conv(&join(prefix, &format!("{tag}.refine")))?,
            })
        };
        let top = paths.has_top().then(|| path("top")).transpose()?;
        let bottom = paths.has_bottom().then(|| path("bottom")).transpose()?;
        Ok(MdcbParams {
            top,
            bottom,
            tail: binder.conv(&join(prefix, "tail"))?,
            fefm: fefm && paths == Paths::Dual,
            residual,
        })
    }
}

/// Dual-path dense block with feature exchange between the 3×3 and 5×5 paths.
///
/// `L22 = relu(C3(x))`, `H22 = relu(C5(x))`,
/// `L33 = relu(C3'(F([x, L22, H22])))`, `H33 = relu(C5'(F'([x, H22, L22])))`,
/// `out = T([L22, L33, H22, H33, x])`, plus `x` when residual. Without
/// exchange the cross terms are dropped from the fusion inputs.
pub fn mdcb_forward<T: Scalar>(tape: &mut Tape<T>, x: Var, p: &MdcbParams) -> Result<Var> {
    let l22 = match &p.top {
        Some(top) => Some(relu_conv(tape, &top.extract, x)?),
        None => None,
    };
    let h22 = match &p.bottom {
        Some(bottom) => Some(relu_conv(tape, &bottom.extract, x)?),
        None => None,
    };
    let exchange = p.fefm && l22.is_some() && h22.is_some();

    let l33 = match (&p.top, l22) {
        (Some(top), Some(l22)) => {
            let mut inputs = vec![x, l22];
            if exchange {
                inputs.extend(h22);
            }
            Some(fused_refine(tape, top, &inputs)?)
        }
        _ => None,
    };
    let h33 = match (&p.bottom, h22) {
        (Some(bottom), Some(h22)) => {
            let mut inputs = vec![x, h22];
            if exchange {
                inputs.extend(l22);
            }
            Some(fused_refine(tape, bottom, &inputs)?)
        }
        _ => None,
    };

    let tail_inputs: Vec<Var> = [l22, l33, h22, h33, Some(x)].into_iter().flatten().collect();
    let cat = tape.concat_channels(&tail_inputs)?;
    let out = p.tail.apply(tape, cat)?;
    if p.residual {
        tape.add(out, x)
    } else {
        Ok(out)
    }
}

fn relu_conv<T: Scalar>(tape: &mut Tape<T>, conv: &ConvVars, x: Var) -> Result<Var> {
    let y = conv.apply(tape, x)?;
    Ok(tape.relu(y))
}

fn fused_refine<T: Scalar>(tape: &mut Tape<T>, path: &PathParams, inputs: &[Var]) -> Result<Var> {
    let cat = tape.concat_channels(inputs)?;
    let fused = path.fuse.apply(tape, cat)?;
    relu_conv(tape, &path.refine, fused)
}

/// Squeeze-and-excitation gate.
#[derive(Clone, Copy, Debug)]
pub struct CamParams {
    pub down: ConvVars,
    pub up: ConvVars,
}

/// Width of the squeezed gate: `⌈channels / reduction⌉`, at least 1.
pub fn cam_hidden(channels: usize, reduction: usize) -> usize {
    channels.div_ceil(reduction.max(1)).max(1)
}

impl CamParams {
    pub fn layers(prefix: &str, channels: usize, reduction: usize) -> Vec<ConvSpec> {
        let hidden = cam_hidden(channels, reduction);
        vec![
            ConvSpec::new(join(prefix, "down"), channels, hidden, 1),
            ConvSpec::new(join(prefix, "up"), hidden, channels, 1),
        ]
    }

    pub fn bind(binder: &mut impl Binder, prefix: &str) -> Result<Self> {
        Ok(CamParams {
            down: binder.conv(&join(prefix, "down"))?,
            up: binder.conv(&join(prefix, "up"))?,
        })
    }
}

/// Returns the rescaled input; the gate values are available through
/// [`cam_gate`].
pub fn cam_forward<T: Scalar>(tape: &mut Tape<T>, x: Var, p: &CamParams) -> Result<Var> {
    let s = cam_gate(tape, x, p)?;
    tape.scale_channels(x, s)
}

/// Per-channel gate `sigmoid(up(relu(down(mean_hw(x)))))`, shape `(n, c, 1, 1)`.
pub fn cam_gate<T: Scalar>(tape: &mut Tape<T>, x: Var, p: &CamParams) -> Result<Var> {
    let z = tape.global_avg_pool(x)?;
    let d = p.down.apply(tape, z)?;
    let d = tape.relu(d);
    let u = p.up.apply(tape, d)?;
    Ok(tape.sigmoid(u))
}

#[derive(Clone, Copy, Debug)]
pub struct HfdbParams {
    pub head: ConvVars,
    pub cam: CamParams,
    pub tail: ConvVars,
}

impl HfdbParams {
    /// `features` is the number of concatenated block outputs (N − 1).
    pub fn layers(prefix: &str, features: usize, channels: usize, inner: usize, reduction: usize) -> Vec<ConvSpec> {
        let mut out = vec![ConvSpec::new(join(prefix, "head"), features * channels, inner, 1)];
        out.extend(CamParams::layers(&join(prefix, "cam"), inner, reduction));
        out.push(ConvSpec::new(join(prefix, "tail"), inner, channels, 1));
        out
    }

    pub fn bind(binder: &mut impl Binder, prefix: &str) -> Result<Self> {
        Ok(HfdbParams {
            head: binder.conv(&join(prefix, "head"))?,
            cam: CamParams::bind(binder, &join(prefix, "cam"))?,
            tail: binder.conv(&join(prefix, "tail"))?,
        })
    }
}

/// Concatenate → 1×1 compress → channel attention → 1×1 expand.
pub fn hfdb_forward<T: Scalar>(tape: &mut Tape<T>, hier: &[Var], p: &HfdbParams) -> Result<Var> {
    check_uniform(tape, "hfdb_forward", hier)?;
    let cat = tape.concat_channels(hier)?;
    let squeezed = p.head.apply(tape, cat)?;
    let attended = cam_forward(tape, squeezed, &p.cam)?;
    p.tail.apply(tape, attended)
}

fn check_uniform<T: Scalar>(tape: &Tape<T>, op: &'static str, xs: &[Var]) -> Result<()> {
    let first = xs.first().ok_or_else(|| Error::contract(op, "empty feature list"))?;
    let shape = tape.shape(*first);
    for v in xs {
        if tape.shape(*v) != shape {
            return Err(Error::contract(
                op,
                format!("inconsistent shapes {} vs {shape}", tape.shape(*v)),
            ));
        }
    }
    Ok(())
}

/// One sub-pixel upsampling head: `stages` × (1×1 conv C→r²C, pixel shuffle r).
#[derive(Clone, Debug)]
pub struct DrbHead {
    pub stages: Vec<ConvVars>,
    pub stage_factor: usize,
}

#[derive(Clone, Debug, Default)]
pub struct DrbParams {
    pub heads: BTreeMap<u32, DrbHead>,
}

/// Kernel size of the upsampling convolutions.
pub const DRB_KERNEL: usize = 1;

/// Sub-pixel stage layout for a factor: ×4 is two ×2 stages.
pub fn drb_stages(factor: u32) -> Result<(usize, usize)> {
    match factor {
        2 | 3 => Ok((1, factor as usize)),
        4 => Ok((2, 2)),
        _ => Err(Error::UnsupportedFactor {
            factor,
            available: vec![2, 3, 4],
        }),
    }
}

impl DrbParams {
    pub fn head_prefix(prefix: &str, factor: u32) -> String {
        join(prefix, &format!("x{factor}"))
    }

    pub fn head_layers(prefix: &str, channels: usize, factor: u32) -> Result<Vec<ConvSpec>> {
        let (stages, r) = drb_stages(factor)?;
        let head = Self::head_prefix(prefix, factor);
        Ok((0..stages)
            .map(|i| ConvSpec::new(join(&head, &i.to_string()), channels, r * r * channels, DRB_KERNEL))
            .collect())
    }

    pub fn bind_head(binder: &mut impl Binder, prefix: &str, factor: u32) -> Result<DrbHead> {
        let (stages, r) = drb_stages(factor)?;
        let head = Self::head_prefix(prefix, factor);
        let stages = (0..stages)
            .map(|i| binder.conv(&join(&head, &i.to_string())))
            .collect::<Result<_>>()?;
        Ok(DrbHead {
            stages,
            stage_factor: r,
        })
    }

    pub fn bind(binder: &mut impl Binder, prefix: &str, factors: &[u32]) -> Result<Self> {
        let mut heads = BTreeMap::new();
        for &f in factors {
            heads.insert(f, Self::bind_head(binder, prefix, f)?);
        }
        Ok(DrbParams { heads })
    }

    pub fn factors(&self) -> Vec<u32> {
        self.heads.keys().copied().collect()
    }
}

/// Routes `x` through the head for `factor` only.
pub fn drb_forward<T: Scalar>(tape: &mut Tape<T>, x: Var, factor: u32, p: &DrbParams) -> Result<Var> {
    let head = p.heads.get(&factor).ok_or_else(|| Error::UnsupportedFactor {
        factor,
        available: p.factors(),
    })?;
    head.stages.iter().try_fold(x, |h, conv| {
        let y = conv.apply(tape, h)?;
        tape.pixel_shuffle(y, head.stage_factor)
    })
}

/// Feature-extraction block used along the trunk.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    #[default]
    Mdcb,
    Msrb,
    Resblock,
}

impl FromStr for BlockKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mdcb" => Ok(BlockKind::Mdcb),
            "msrb" => Ok(BlockKind::Msrb),
            "resblock" => Ok(BlockKind::Resblock),
            other => Err(Error::contract("block_kind", format!("unknown block kind `{other}`"))),
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockKind::Mdcb => "mdcb",
            BlockKind::Msrb => "msrb",
            BlockKind::Resblock => "resblock",
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ResBlockParams {
    pub conv1: ConvVars,
    pub conv2: ConvVars,
}

/// Multi-scale residual block: two crossed 3×3/5×5 stages, 1×1 tail, residual.
#[derive(Clone, Copy, Debug)]
pub struct MsrbParams {
    pub s1: ConvVars,
    pub p1: ConvVars,
    pub s2: ConvVars,
    pub p2: ConvVars,
    pub tail: ConvVars,
}

#[derive(Clone, Debug)]
pub enum BlockParams {
    Mdcb(MdcbParams),
    Resblock(ResBlockParams),
    Msrb(MsrbParams),
}

impl BlockParams {
    pub fn layers(kind: BlockKind, prefix: &str, channels: usize, paths: Paths, fefm: bool) -> Vec<ConvSpec> {
        let c = channels;
        match kind {
            BlockKind::Mdcb => MdcbParams::layers(prefix, c, paths, fefm),
            BlockKind::Resblock => vec![
                ConvSpec::new(join(prefix, "conv1"), c, c, 3),
                ConvSpec::new(join(prefix, "conv2"), c, c, 3),
            ],
            BlockKind::Msrb => vec![
                ConvSpec::new(join(prefix, "s1"), c, c, 3),
                ConvSpec::new(join(prefix, "p1"), c, c, 5),
                ConvSpec::new(join(prefix, "s2"), 2 * c, 2 * c, 3),
                ConvSpec::new(join(prefix, "p2"), 2 * c, 2 * c, 5),
                ConvSpec::new(join(prefix, "tail"), 4 * c, c, 1),
            ],
        }
    }

    pub fn bind(
        binder: &mut impl Binder,
        kind: BlockKind,
        prefix: &str,
        paths: Paths,
        fefm: bool,
        residual: bool,
    ) -> Result<Self> {
        let mut conv = |name: &str| binder.conv(&join(prefix, name));
        Ok(match kind {
            BlockKind::Mdcb => {
                return Ok(BlockParams::Mdcb(MdcbParams::bind(
                    binder, prefix, paths, fefm, residual,
                )?))
            }
            BlockKind::Resblock => BlockParams::Resblock(ResBlockParams {
                conv1: conv("conv1")?,
                conv2: conv("conv2")?,
            }),
            BlockKind::Msrb => BlockParams::Msrb(MsrbParams {
                s1: conv("s1")?,
                p1: conv("p1")?,
                s2: conv("s2")?,
                p2: conv("p2")?,
                tail: conv("tail")?,
            }),
        })
    }
}

pub fn block_forward<T: Scalar>(tape: &mut Tape<T>, x: Var, p: &BlockParams) -> Result<Var> {
    match p {
        BlockParams::Mdcb(p) => mdcb_forward(tape, x, p),
        BlockParams::Resblock(p) => resblock_forward(tape, x, p),
        BlockParams::Msrb(p) => msrb_forward(tape, x, p),
    }
}

/// `x + conv2(relu(conv1(x)))`
pub fn resblock_forward<T: Scalar>(tape: &mut Tape<T>, x: Var, p: &ResBlockParams) -> Result<Var> {
    let h = relu_conv(tape, &p.conv1, x)?;
    let h = p.conv2.apply(tape, h)?;
    tape.add(x, h)
}

pub fn msrb_forward<T: Scalar>(tape: &mut Tape<T>, x: Var, p: &MsrbParams) -> Result<Var> {
    let s1 = relu_conv(tape, &p.s1, x)?;
    let p1 = relu_conv(tape, &p.p1, x)?;
    let sp = tape.concat_channels(&[s1, p1])?;
    let ps = tape.concat_channels(&[p1, s1])?;
    let s2 = relu_conv(tape, &p.s2, sp)?;
    let p2 = relu_conv(tape, &p.p2, ps)?;
    let cat = tape.concat_channels(&[s2, p2])?;
    let out = p.tail.apply(tape, cat)?;
    tape.add(out, x)
}

/// How intermediate block outputs are folded back into the reconstruction.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default, Serialize, Deserialize)]
pub enum Hierarchy {
    /// Plain series connection.
    A,
    /// Last feature plus the trunk input.
    B,
    /// Last feature plus every earlier feature plus the trunk input.
    C,
    /// 1×1 fusion of all concatenated features.
    D,
    #[default]
    #[serde(rename = "HFDB")]
    Hfdb,
}

pub fn hierarchical_aggregate<T: Scalar>(
    tape: &mut Tape<T>,
    method: Hierarchy,
    features: &[Var],
    x_in: Var,
    fusion: Option<&ConvVars>,
) -> Result<Var> {
    check_uniform(tape, "hierarchical_aggregate", features)?;
    let (&last, earlier) = features.split_last().expect("checked non-empty");
    match method {
        Hierarchy::A => Ok(last),
        Hierarchy::B => tape.add(last, x_in),
        Hierarchy::C => {
            let mut terms = vec![last];
            terms.extend_from_slice(earlier);
            terms.push(x_in);
            tape.sum_all(&terms)
        }
        Hierarchy::D => {
            let fusion =
                fusion.ok_or_else(|| Error::contract("hierarchical_aggregate", "method D needs fusion weights"))?;
            let cat = tape.concat_channels(features)?;
            fusion.apply(tape, cat)
        }
        Hierarchy::Hfdb => Err(Error::contract(
            "hierarchical_aggregate",
            "HFDB is evaluated by hfdb_forward",
        )),
    }
}
