//! Shape-arithmetic oracle shared by the network and acceptance tests.

use dyglnet::ModelConfig;

pub fn conv(cin: usize, cout: usize, k: usize, groups: usize, bias: bool) -> usize {
    cout * (cin / groups) * k * k + if bias { cout } else { 0 }
}

/// Parameter count written out from the layer shapes.
pub fn expected_count(cfg: &ModelConfig) -> usize {
    let c = cfg.stage_channels;
    let r = cfg.dilation_rates.len();
    let msdc = |ch: usize| r * ch * 9 + 2 * ch;
    let shdc = |ch: usize, fusion: bool| {
        let hidden = (ch as f64 * cfg.ffn_ratio).round() as usize;
        let mut n = conv(ch, ch, 3, ch, true) + conv(ch, hidden, 1, 1, true) + conv(hidden, ch, 1, 1, true);
        if fusion {
            let cg = (ch as f64 * cfg.split_ratio).round() as usize;
            let cl = ch - cg;
            n += 1 + 2 * cg; // dyt
            n += conv(cg, 3 * cg, 1, 1, false);
            n += msdc(cl);
            n += conv(ch, ch, 1, 1, true);
        }
        n
    };
    let up = |cin: usize, skip: usize| {
        conv(cin, 2 * cfg.sampler_groups * 4, 1, 1, true)
            + conv(cin, skip, 1, 1, true)
            + msdc(2 * skip)
            + conv(2 * skip, skip, 3, 1, true)
    };
    let mut n = conv(cfg.input_channels, c[0], 3, 1, true) + cfg.blocks_per_stage[0] * conv(c[0], c[0], 3, 1, true);
    for i in 1..4 {
        n += conv(c[i - 1], c[i], 3, 1, true) + cfg.blocks_per_stage[i] * shdc(c[i], i >= 2);
    }
    n += up(c[3], c[2]) + up(c[2], c[1]) + up(c[1], c[0]) + up(c[0], cfg.input_channels);
    n + conv(cfg.input_channels, cfg.output_channels, 1, 1, true)
}
