"""Analytical compute/memory accounting for blocks and networks.

Counting conventions (chosen to match the published cost table's internal
ratios, and pinned by the tests):

* FLOPS = multiply-accumulate count: a same-padded k x k convolution from
  C_a to C_b channels over an H x W output contributes k^2*C_a*C_b*H*W
  MACs.  Octave paths are counted at their native (possibly halved)
  resolutions.
* MAdd = 2 * conv MACs plus elementwise work (BN+ReLU 2 ops/element,
  sigmoid and gating/residual arithmetic 1 op/element).
* Memory = every produced activation tensor at 4 bytes/element, no
  liveness analysis; standalone pooling/upsampling layers are pure data
  movement (zero FLOPs, memory only), while the resampling fused inside
  an octave convolution contributes no stored activation.

`merge` selects how a block returns to a single frequency: "conv" prices
the final decoder convolution at alpha_out=0 (a learned merge, the variant
that reproduces the published block/network FLOPs), "concat" prices the
parameter-free upsample-and-concatenate merge the network module uses.
"""

from dataclasses import dataclass, field

from .blocks import BlockSpec
from .model import DECODER_NAMES, ENCODER_NAMES, NetworkSpec
from .validation import ConfigError, split_channels

BYTES_PER_ELEMENT = 4


@dataclass
class LayerCost:
    name: str
    macs: float = 0.0
    madd: float = 0.0
    memory: float = 0.0
    params: int = 0


@dataclass
class CostReport:
    name: str
    layers: list = field(default_factory=list)

    @property
    def flops(self) -> float:
        return sum(l.macs for l in self.layers)

    @property
    def madd(self) -> float:
        return sum(l.madd for l in self.layers)

    @property
    def memory(self) -> float:
        return sum(l.memory for l in self.layers)

    @property
    def params(self) -> int:
        return sum(l.params for l in self.layers)

    def format(self, giga: bool = True) -> str:
        scale = 1e-9 if giga else 1.0
        mscale = 1e-6 if giga else 1.0
        lines = [f"{self.name}: {self.flops * scale:.3f} GFLOPS  "
                 f"{self.madd * scale:.3f} GMAdd  {self.memory * mscale:.2f} MB  "
                 f"{self.params / 1e6:.3f} Mparams"]
        for l in self.layers:
            lines.append(f"  {l.name:<28} {l.macs * scale:>10.4f} {l.madd * scale:>10.4f} "
                         f"{l.memory * mscale:>10.3f}")
        return "\n".join(lines)


def conv_macs(kernel: int, cin: int, cout: int, h: int, w: int) -> float:
    return float(kernel * kernel * cin * cout * h * w)


class _Tally:
    def __init__(self):
        self.layers = []

    def conv(self, name, kernel, cin, cout, h, w):
        macs = conv_macs(kernel, cin, cout, h, w)
        self.layers.append(LayerCost(name, macs, 2 * macs,
                                     cout * h * w * BYTES_PER_ELEMENT,
                                     kernel * kernel * cin * cout + cout))

    def octconv(self, name, kernel, cin, cout, h, w, a_in, a_out):
        """Four-path octave convolution; high grid is (h, w)."""
        cin_h, cin_l = split_channels(cin, a_in)
        cout_h, cout_l = split_channels(cout, a_out)
        macs = conv_macs(kernel, cin_h, cout_h, h, w)          # H->H
        mem = cout_h * h * w * BYTES_PER_ELEMENT
        params = kernel * kernel * cin_h * cout_h + cout_h
        if cout_l:
            macs += conv_macs(kernel, cin_h, cout_l, h // 2, w // 2)   # H->L after pool
            mem += cout_l * (h // 2) * (w // 2) * BYTES_PER_ELEMENT
            params += kernel * kernel * cin_h * cout_l + cout_l
        if cin_l:
            macs += conv_macs(kernel, cin_l, cout_h, h // 2, w // 2)   # L->H then upsample
            params += kernel * kernel * cin_l * cout_h
        if cin_l and cout_l:
            macs += conv_macs(kernel, cin_l, cout_l, h // 2, w // 2)   # L->L
            params += kernel * kernel * cin_l * cout_l
        self.layers.append(LayerCost(name, macs, 2 * macs, mem, params))

    def bn_relu(self, name, channels, h, w, alpha=0.0):
        c_h, c_l = split_channels(channels, alpha)
        elems = c_h * h * w + c_l * (h // 2) * (w // 2)
        self.layers.append(LayerCost(name, 0.0, 2 * elems,
                                     elems * BYTES_PER_ELEMENT, 2 * channels))

    def move(self, name, elems):
        """Pooling/upsampling/concat: data movement only."""
        self.layers.append(LayerCost(name, 0.0, 0.0, elems * BYTES_PER_ELEMENT, 0))

    def elementwise(self, name, elems, ops_per_element=1):
        self.layers.append(LayerCost(name, 0.0, float(ops_per_element * elems),
                                     elems * BYTES_PER_ELEMENT, 0))


def _oct_elems(channels, alpha, h, w):
    c_h, c_l = split_channels(channels, alpha)
    return c_h * h * w + c_l * (h // 2) * (w // 2)


def _block_unit(t, name, kernel, cin, cout, h, w, a_in, a_out):
    t.octconv(f"{name}.conv", kernel, cin, cout, h, w, a_in, a_out)
    t.bn_relu(f"{name}.bn_relu", cout, h, w, a_out)


def profile_block(spec: BlockSpec, input_hw, merge: str = "conv",
                  batch: int = 1) -> CostReport:
    """Cost of one ORSU/ORSU-4F block on an (H, W) input grid."""
    if merge not in ("conv", "concat"):
        raise ConfigError(f"unknown merge mode {merge!r}")
    h, w = input_hw
    if h % spec.divisor or w % spec.divisor:
        raise ConfigError(f"block needs dims divisible by {spec.divisor}, got {h}x{w}")
    t = _Tally()
    a = spec.alpha
    m, cin, cout = spec.mid_ch, spec.in_ch, spec.out_ch
    name = f"ORSU-{spec.height}" if spec.kind == "orsu" else "ORSU-4F"

    _block_unit(t, "conv_in", 3, cin, cout, h, w, 0.0, a)
    if spec.kind == "orsu":
        L = spec.height
        res = [(h // 2 ** min(i, L - 2), w // 2 ** min(i, L - 2)) for i in range(L)]
        _block_unit(t, "enc0", 3, cout, m, *res[0], a, a)
        for i in range(1, L - 1):
            t.move(f"pool{i}", _oct_elems(m, a, *res[i]))
            _block_unit(t, f"enc{i}", 3, m, m, *res[i], a, a)
        _block_unit(t, f"enc{L - 1}", 3, m, m, *res[L - 1], a, a)   # dilated, same res
        for i in range(L - 2):
            rh, rw = res[L - 2 - i]
            _block_unit(t, f"dec{i}", 3, 2 * m, m, rh, rw, a, a)
            t.move(f"up{i}", _oct_elems(m, a, rh * 2, rw * 2))
        final_in = 2 * m
        final_res = res[0]
    else:
        for i, c_in_unit in enumerate([cout, m, m, m]):
            _block_unit(t, f"enc{i}", 3, c_in_unit, m, h, w, a, a)
        for i in range(2):
            _block_unit(t, f"dec{i}", 3, 2 * m, m, h, w, a, a)
        final_in = 2 * m
        final_res = (h, w)

    fh, fw = final_res
    if merge == "conv" and a > 0:
        # learned merge: the F1 upsample fuses into the residual add
        _block_unit(t, "dec_final", 3, final_in, cout, fh, fw, a, 0.0)
        t.elementwise("residual_add", cout * fh * fw)
    else:
        _block_unit(t, "dec_final", 3, final_in, cout, fh, fw, a, a)
        t.elementwise("residual_add", _oct_elems(cout, a, fh, fw))
        if a > 0:
            t.move("merge_upsample_concat", cout * fh * fw)

    report = CostReport(f"{name}({cin},{m},{cout})@{h}x{w}", t.layers)
    if batch != 1:
        for l in report.layers:
            l.macs *= batch
            l.madd *= batch
            l.memory *= batch
    return report


def profile_network(spec: NetworkSpec, input_hw, merge: str = "conv") -> CostReport:
    """Cost of the full 11-stage network, side heads and attention included."""
    h, w = input_hw
    divisor = spec.required_divisor()
    if h % divisor or w % divisor:
        raise ConfigError(f"network needs dims divisible by {divisor}, got {h}x{w}")
    t = _Tally()
    stage_hw = {}
    for i, bspec in enumerate(spec.encoder):
        sh, sw = h // 2 ** i, w // 2 ** i
        stage_hw[ENCODER_NAMES[i]] = (sh, sw)
        sub = profile_block(bspec, (sh, sw), merge)
        t.layers.append(LayerCost(ENCODER_NAMES[i], sub.flops, sub.madd,
                                  sub.memory, sub.params))
        if i < 5:
            t.move(f"pool_{ENCODER_NAMES[i]}", bspec.out_ch * (sh // 2) * (sw // 2))
    for i, bspec in enumerate(spec.decoder):
        sh, sw = h // 2 ** (4 - i), w // 2 ** (4 - i)
        stage_hw[DECODER_NAMES[i]] = (sh, sw)
        prev_ch = (spec.encoder[5] if i == 0 else spec.decoder[i - 1]).out_ch
        t.move(f"up_{DECODER_NAMES[i]}", prev_ch * sh * sw)
        t.move(f"cat_{DECODER_NAMES[i]}", bspec.in_ch * sh * sw)
        sub = profile_block(bspec, (sh, sw), merge)
        t.layers.append(LayerCost(DECODER_NAMES[i], sub.flops, sub.madd,
                                  sub.memory, sub.params))
    for name in spec.attention:
        sh, sw = stage_hw[name]
        _profile_cbam(t, name, spec.stages[name].out_ch, sh, sw)
    for level in range(1, spec.h_levels + 1):
        src = DECODER_NAMES[5 - level] if level <= 5 else "En_6"
        sh, sw = stage_hw[src]
        c = spec.stages[src].out_ch
        t.conv(f"side{level}.conv", 3, c, 1, sh, sw)
        if (sh, sw) != (h, w):
            t.move(f"side{level}.up", h * w)
        t.elementwise(f"side{level}.sigmoid", h * w)
    return CostReport(f"network@{h}x{w}", t.layers)


def _profile_cbam(t, name, channels, h, w, reduction=16):
    reduction = min(reduction, channels)
    hidden = channels // reduction
    macs = 2 * (channels * hidden + hidden * channels)      # shared MLP, avg+max paths
    macs += 7 * 7 * 2 * 1 * h * w                           # spatial conv
    madd = 2 * macs
    madd += 2 * channels * h * w                            # mean/max reductions
    madd += 2 * channels * h * w                            # two gating products
    mem = (2 * channels + 2 * h * w + channels * h * w) * BYTES_PER_ELEMENT
    params = 2 * channels * hidden + hidden + channels + 7 * 7 * 2 + 1
    t.layers.append(LayerCost(f"cbam_{name}", float(macs), float(madd), float(mem), params))


@dataclass
class CompareTable:
    name_a: str
    name_b: str
    ratios: dict

    def format(self) -> str:
        lines = [f"{'':<12} {self.name_a:>16} {self.name_b:>16} {'b/a':>8}"]
        for col, (va, vb, r) in self.ratios.items():
            lines.append(f"{col:<12} {va:>16.4g} {vb:>16.4g} {r:>8.4f}")
        return "\n".join(lines)


def compare(report_a: CostReport, report_b: CostReport) -> CompareTable:
    """Per-column b/a ratios of two cost reports."""
    cols = {}
    for col in ("flops", "madd", "memory", "params"):
        va, vb = getattr(report_a, col), getattr(report_b, col)
        cols[col] = (va, vb, vb / va if va else float("inf"))
    return CompareTable(report_a.name, report_b.name, cols)
