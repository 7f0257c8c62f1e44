//! Scenario configuration: a small self-contained text format with
//! nested blocks, plus the desk- and paper-scale presets.
//!
//! Syntax: `name {` opens a block, `}` closes it, and every other
//! non-empty line is `key value...`. `#` starts a comment. Numbers accept
//! scientific notation and `inf`.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Context, Result};
use aplab_core::channel::ChannelConfig;
use aplab_core::csi::CsiSchedule;
use aplab_core::neural::{CompensatorConfig, PrecoderConfig};

/// Parsed block: key/value entries plus nested blocks.
#[derive(Debug, Clone, Default)]
pub struct Block {
    entries: BTreeMap<String, Vec<String>>,
    blocks: BTreeMap<String, Block>,
}

impl Block {
    pub fn parse(text: &str) -> Result<Block> {
        let mut stack: Vec<(String, Block)> = vec![(String::new(), Block::default())];
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line == "}" {
                let (name, done) = stack
                    .pop()
                    .filter(|_| stack.len() >= 1)
                    .ok_or_else(|| anyhow!("line {}: unmatched '}}'", lineno + 1))?;
                if stack.is_empty() {
                    bail!("line {}: unmatched '}}'", lineno + 1);
                }
                stack.last_mut().unwrap().1.blocks.insert(name, done);
                continue;
            }
            let mut tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.last() == Some(&"{") {
                tokens.pop();
                if tokens.len() != 1 {
                    bail!("line {}: block header wants exactly one name", lineno + 1);
                }
                stack.push((tokens[0].to_string(), Block::default()));
                continue;
            }
            if tokens.len() < 2 {
                bail!("line {}: expected `key value...`", lineno + 1);
            }
            let key = tokens[0].to_string();
            let values = tokens[1..].iter().map(|s| s.to_string()).collect();
            stack.last_mut().unwrap().1.entries.insert(key, values);
        }
        if stack.len() != 1 {
            bail!("unclosed block {:?}", stack.last().unwrap().0);
        }
        Ok(stack.pop().unwrap().1)
    }

    pub fn block(&self, name: &str) -> Result<&Block> {
        self.blocks.get(name).ok_or_else(|| anyhow!("missing block `{name}`"))
    }

    pub fn maybe_block(&self, name: &str) -> Option<&Block> {
        self.blocks.get(name)
    }

    fn raw(&self, key: &str) -> Result<&[String]> {
        self.entries
            .get(key)
            .map(|v| v.as_slice())
            .ok_or_else(|| anyhow!("missing key `{key}`"))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let v = self.raw(key)?;
        v[0].parse().with_context(|| format!("key `{key}`: bad number {:?}", v[0]))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.entries.get(key) {
            Some(_) => self.f64(key),
            None => Ok(default),
        }
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        let v = self.raw(key)?;
        v[0].parse().with_context(|| format!("key `{key}`: bad integer {:?}", v[0]))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.entries.get(key) {
            Some(_) => self.usize(key),
            None => Ok(default),
        }
    }

    pub fn string(&self, key: &str) -> Result<String> {
        Ok(self.raw(key)?[0].clone())
    }

    pub fn string_or(&self, key: &str, default: &str) -> String {
        self.entries.get(key).map(|v| v[0].clone()).unwrap_or_else(|| default.to_string())
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        self.raw(key)?
            .iter()
            .map(|t| t.parse().with_context(|| format!("key `{key}`: bad number {t:?}")))
            .collect()
    }

    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>> {
        self.raw(key)?
            .iter()
            .map(|t| t.parse().with_context(|| format!("key `{key}`: bad integer {t:?}")))
            .collect()
    }

    pub fn string_list(&self, key: &str) -> Result<Vec<String>> {
        Ok(self.raw(key)?.to_vec())
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }
}

/// Which precoder the experiment runs.
#[derive(Debug, Clone, PartialEq)]
pub enum PrecoderKind {
    Zf { ridge: f64 },
    Neural { checkpoint: String },
}

/// How acquired CSI is cleaned before precoding.
#[derive(Debug, Clone, PartialEq)]
pub enum CompensatorKind {
    None,
    /// One model applied everywhere.
    Single { checkpoint: String },
    /// Genie selection among candidates per slot.
    Select { checkpoints: Vec<String> },
}

/// Fully-resolved scenario.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub channel: ChannelConfig,
    pub schedule: CsiSchedule,
    pub snr_csi_db: Vec<f64>,
    pub m_qam: usize,
    pub pilot_symbols: Vec<usize>,
    pub n_layers: usize,
    /// Code block length; the seeded default construction is used unless
    /// `code_file` points at an explicit parity-check listing.
    pub code_n: usize,
    pub code_seed: u64,
    pub code_file: Option<String>,
    pub precoder: PrecoderKind,
    pub compensator: CompensatorKind,
    pub sweep_snr_db: Vec<f64>,
    pub n_slots: usize,
    pub seed: u64,
    pub tau: usize,
    pub tau_max: usize,
    pub train_compensator: CompensatorTrainBlock,
    pub train_precoder: PrecoderTrainBlock,
}

#[derive(Debug, Clone)]
pub struct CompensatorTrainBlock {
    pub arch: CompensatorConfig,
    pub iterations: usize,
    pub batch_slots: usize,
    pub snr_csi_db: (f64, f64),
    pub tau: (usize, usize),
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct PrecoderTrainBlock {
    pub arch: PrecoderConfig,
    pub iterations: usize,
    pub batch_slots: usize,
    pub snr_db: (f64, f64),
    pub snr_csi_db: f64,
    pub tau: usize,
    pub lr: f64,
    /// Optional compensator checkpoint to clean training inputs.
    pub input_compensator: Option<String>,
}

const KMH: f64 = 1.0 / 3.6;

fn arch_compensator(block: Option<&Block>, preset: CompensatorConfig) -> Result<CompensatorConfig> {
    let Some(b) = block else { return Ok(preset) };
    Ok(CompensatorConfig {
        n_res_blocks: b.usize_or("n_res_blocks", preset.n_res_blocks)?,
        f_input: b.usize_or("f_input", preset.f_input)?,
        k_input: b.usize_or("k_input", preset.k_input)?,
        f_block: b.usize_or("f_block", preset.f_block)?,
        k_block: b.usize_or("k_block", preset.k_block)?,
        k_output: b.usize_or("k_output", preset.k_output)?,
    })
}

fn arch_precoder(block: Option<&Block>, preset: PrecoderConfig) -> Result<PrecoderConfig> {
    let Some(b) = block else { return Ok(preset) };
    Ok(PrecoderConfig {
        n_hidden: b.usize_or("n_hidden", preset.n_hidden)?,
        f_input: b.usize_or("f_input", preset.f_input)?,
        k_input: b.usize_or("k_input", preset.k_input)?,
        f_hidden: b.usize_or("f_hidden", preset.f_hidden)?,
        k_hidden: b.usize_or("k_hidden", preset.k_hidden)?,
        k_output: b.usize_or("k_output", preset.k_output)?,
    })
}

impl ScenarioConfig {
    pub fn from_text(text: &str, desk_arch: bool) -> Result<ScenarioConfig> {
        let root = Block::parse(text)?;
        let ch = root.block("channel")?;
        let channel = ChannelConfig {
            carrier_freq_hz: ch.f64("carrier_freq_hz")?,
            delay_spread_s: ch.f64("delay_spread_s")?,
            num_taps: ch.usize("num_taps")?,
            tap_decay_rate: ch.f64_or("tap_decay_rate", 1.0)?,
            ue_speed_mps: (
                ch.f64("ue_speed_min_kmh")? * KMH,
                ch.f64("ue_speed_max_kmh")? * KMH,
            ),
            n_fft: ch.usize("n_fft")?,
            guard: (ch.usize_or("guard_lo", 0)?, ch.usize_or("guard_hi", 0)?),
            n_tx: ch.usize("n_tx")?,
            n_rx: ch.usize("n_rx")?,
            scs_hz: ch.f64("scs_hz")?,
            symbols_per_slot: ch.usize("symbols_per_slot")?,
        };
        channel.validate().map_err(|e| anyhow!("{e}"))?;

        let csi = root.block("csi")?;
        let schedule = CsiSchedule::new(csi.usize("t_csi")?, csi.usize_or("t_offset", 0)?)
            .map_err(|e| anyhow!("{e}"))?;
        let snr_csi_db = csi.f64_list("snr_csi_db")?;

        let phy = root.block("phy")?;
        let m_qam = phy.usize("m_qam")?;
        let pilot_symbols = phy.usize_list("pilot_symbols")?;
        let n_layers = phy.usize_or("n_layers", channel.n_rx)?;
        let code_n = phy.usize("code_n")?;
        let code_seed = phy.usize_or("code_seed", 2024)? as u64;
        let code_file = if phy.has("code_file") { Some(phy.string("code_file")?) } else { None };

        let pre = root.block("precoder")?;
        let precoder = match pre.string_or("kind", "zf").as_str() {
            "zf" => PrecoderKind::Zf {
                ridge: pre.f64_or("ridge", aplab_core::precoding::DEFAULT_ZF_RIDGE)?,
            },
            "neural" => PrecoderKind::Neural { checkpoint: pre.string("checkpoint")? },
            other => bail!("precoder kind {other:?} (want zf|neural)"),
        };

        let comp = root.maybe_block("compensator");
        let compensator = match comp {
            None => CompensatorKind::None,
            Some(c) => match c.string_or("kind", "none").as_str() {
                "none" => CompensatorKind::None,
                "single" => CompensatorKind::Single { checkpoint: c.string("checkpoint")? },
                "select" => {
                    CompensatorKind::Select { checkpoints: c.string_list("checkpoints")? }
                }
                other => bail!("compensator kind {other:?} (want none|single|select)"),
            },
        };

        let sweep = root.block("sweep")?;
        let sweep_snr_db = sweep.f64_list("snr_db").unwrap_or_default();
        let n_slots = sweep.usize("n_slots")?;
        let seed = sweep.usize("seed")? as u64;
        let tau = sweep.usize_or("tau", 0)?;
        let tau_max = sweep.usize_or("tau_max", schedule.t_csi - 1)?;
        if tau >= schedule.t_csi {
            bail!("sweep tau {tau} must stay below t_csi {}", schedule.t_csi);
        }
        if tau_max >= schedule.t_csi {
            bail!("sweep tau_max {tau_max} must stay below t_csi {}", schedule.t_csi);
        }

        let (comp_preset, pre_preset) = if desk_arch {
            (CompensatorConfig::desk(), PrecoderConfig::desk())
        } else {
            (CompensatorConfig::paper(), PrecoderConfig::paper())
        };
        let tc = root.maybe_block("train_compensator");
        let train_compensator = CompensatorTrainBlock {
            arch: arch_compensator(tc, comp_preset)?,
            iterations: tc.map_or(Ok(2000), |b| b.usize_or("iterations", 2000))?,
            batch_slots: tc.map_or(Ok(4), |b| b.usize_or("batch_slots", 4))?,
            snr_csi_db: (
                tc.map_or(Ok(-5.0), |b| b.f64_or("snr_csi_min_db", -5.0))?,
                tc.map_or(Ok(5.0), |b| b.f64_or("snr_csi_max_db", 5.0))?,
            ),
            tau: (
                tc.map_or(Ok(0), |b| b.usize_or("tau_min", 0))?,
                tc.map_or(Ok(10), |b| b.usize_or("tau_max", 10))?,
            ),
            lr: tc.map_or(Ok(1e-3), |b| b.f64_or("lr", 1e-3))?,
        };
        let tp = root.maybe_block("train_precoder");
        let train_precoder = PrecoderTrainBlock {
            arch: arch_precoder(tp, pre_preset)?,
            iterations: tp.map_or(Ok(2000), |b| b.usize_or("iterations", 2000))?,
            batch_slots: tp.map_or(Ok(8), |b| b.usize_or("batch_slots", 8))?,
            snr_db: (
                tp.map_or(Ok(-10.0), |b| b.f64_or("snr_min_db", -10.0))?,
                tp.map_or(Ok(10.0), |b| b.f64_or("snr_max_db", 10.0))?,
            ),
            snr_csi_db: tp.map_or(Ok(f64::INFINITY), |b| b.f64_or("snr_csi_db", f64::INFINITY))?,
            tau: tp.map_or(Ok(0), |b| b.usize_or("tau", 0))?,
            lr: tp.map_or(Ok(1e-3), |b| b.f64_or("lr", 1e-3))?,
            input_compensator: tp.and_then(|b| {
                b.has("input_compensator").then(|| b.string("input_compensator").unwrap())
            }),
        };

        let cfg = ScenarioConfig {
            channel,
            schedule,
            snr_csi_db,
            m_qam,
            pilot_symbols,
            n_layers,
            code_n,
            code_seed,
            code_file,
            precoder,
            compensator,
            sweep_snr_db,
            n_slots,
            seed,
            tau,
            tau_max,
            train_compensator,
            train_precoder,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Coded bits that fit the data resource elements of one slot, per
    /// layer.
    pub fn coded_bits_per_layer(&self) -> Result<usize> {
        let bps = aplab_core::phy::bits_per_symbol(self.m_qam).map_err(|e| anyhow!("{e}"))?;
        let data_res =
            (self.channel.symbols_per_slot - self.pilot_symbols.len())
                * self.channel.active_subcarriers();
        Ok(data_res * bps)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers != self.channel.n_rx {
            bail!("n_layers must equal n_rx in this system model");
        }
        if self.pilot_symbols.is_empty() {
            bail!("at least one pilot symbol required");
        }
        if self
            .pilot_symbols
            .iter()
            .any(|&l| l >= self.channel.symbols_per_slot)
        {
            bail!("pilot symbol outside the slot");
        }
        let coded = self.coded_bits_per_layer()?;
        if self.code_file.is_none() && coded != self.code_n {
            bail!(
                "code_n {} must match the {} coded bits carried by the data REs",
                self.code_n,
                coded
            );
        }
        Ok(())
    }
}

/// Desk-scale scenario: small enough to train and sweep in minutes.
pub const DESK_PRESET: &str = include_str!("../configs/desk.cfg");
/// Full-scale scenario mirroring the reference simulation parameters.
pub const PAPER_PRESET: &str = include_str!("../configs/paper.cfg");

pub fn load_preset(name: &str) -> Result<ScenarioConfig> {
    match name {
        "desk" => ScenarioConfig::from_text(DESK_PRESET, true),
        "paper" => ScenarioConfig::from_text(PAPER_PRESET, false),
        other => bail!("unknown preset {other:?} (want desk|paper)"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        let desk = load_preset("desk").unwrap();
        assert_eq!(desk.channel.n_tx, 4);
        assert_eq!(desk.coded_bits_per_layer().unwrap(), desk.code_n);
        let paper = load_preset("paper").unwrap();
        assert_eq!(paper.channel.n_tx, 8);
        assert_eq!(paper.channel.n_fft, 32);
        assert_eq!(paper.channel.active_subcarriers(), 21);
    }

    #[test]
    fn nested_parser_handles_comments_and_errors() {
        let b = Block::parse("a {\n  x 1 # trailing\n}\n").unwrap();
        assert_eq!(b.block("a").unwrap().usize("x").unwrap(), 1);
        assert!(Block::parse("a {\n").is_err(), "unclosed block");
        assert!(Block::parse("}\n").is_err(), "stray brace");
        assert!(Block::parse("lonely\n").is_err(), "key without value");
    }

    #[test]
    fn mismatched_code_size_rejected() {
        let mut text = DESK_PRESET.to_string();
        text = text.replace("code_n 256", "code_n 128");
        assert!(ScenarioConfig::from_text(&text, true).is_err());
    }
}
