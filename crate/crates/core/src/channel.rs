//! Time-evolving wideband MIMO channel generation.
//!
//! The channel is a clustered tapped delay line: `num_taps` taps with an
//! exponential power profile, each carrying an i.i.d. complex Gaussian
//! `n_rx x n_tx` spatial signature and an independent sum-of-sinusoids
//! fading process with the classic bathtub Doppler spectrum. The frequency
//! response on the active subcarrier grid is the DFT of the tap vector.
//! One coherent process underlies all symbols and slots, so aging over a
//! lag of several slots is physically meaningful and controlled by the
//! terminal speed.
//!
//! Spatial signatures are i.i.d. across antenna pairs; no geometric
//! correlation is modeled. Results that depend on spatial structure should
//! be read with that simplification in mind.

use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::numerics::{C64, CMat, RngStream};

/// Propagation speed used for Doppler and coherence-time arithmetic.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Sinusoids per tap in the fading process.
const NUM_SINUSOIDS: usize = 32;

/// Static description of the link and OFDM grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub carrier_freq_hz: f64,
    /// Tap spacing of the delay line, in seconds.
    pub delay_spread_s: f64,
    pub num_taps: usize,
    /// Exponential decay rate of the tap power profile: tap `i` carries
    /// power proportional to `exp(-rate * i)`.
    pub tap_decay_rate: f64,
    /// Terminal speed range `[min, max]` in m/s.
    pub ue_speed_mps: (f64, f64),
    pub n_fft: usize,
    /// Guard subcarriers `(k_minus, k_plus)` excluded from the active grid.
    pub guard: (usize, usize),
    pub n_tx: usize,
    pub n_rx: usize,
    pub scs_hz: f64,
    pub symbols_per_slot: usize,
}

impl ChannelConfig {
    /// Number of active subcarriers `N_A = N_FFT - k_minus - k_plus`.
    pub fn active_subcarriers(&self) -> usize {
        self.n_fft - self.guard.0 - self.guard.1
    }

    /// OFDM symbol duration including the nominal cyclic-prefix overhead
    /// (a 14-symbol slot at 30 kHz spacing lasts 0.5 ms).
    pub fn symbol_duration_s(&self) -> f64 {
        (15.0 / 14.0) / self.scs_hz
    }

    pub fn slot_duration_s(&self) -> f64 {
        self.symbols_per_slot as f64 * self.symbol_duration_s()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_taps == 0 {
            return Err(Error::InvalidConfig("num_taps must be >= 1".into()));
        }
        if self.n_fft <= self.guard.0 + self.guard.1 {
            return Err(Error::InvalidConfig(format!(
                "n_fft={} must exceed total guards {}",
                self.n_fft,
                self.guard.0 + self.guard.1
            )));
        }
        if self.n_tx == 0 || self.n_rx == 0 || self.symbols_per_slot == 0 {
            return Err(Error::InvalidConfig("antenna/symbol counts must be >= 1".into()));
        }
        if self.scs_hz <= 0.0 || self.carrier_freq_hz <= 0.0 {
            return Err(Error::InvalidConfig("frequencies must be positive".into()));
        }
        if self.ue_speed_mps.0 < 0.0 || self.ue_speed_mps.1 < self.ue_speed_mps.0 {
            return Err(Error::InvalidConfig("speed range must be 0 <= min <= max".into()));
        }
        Ok(())
    }
}

/// Maximum Doppler shift `v * f_c / c` in Hz.
pub fn doppler_freq(speed_mps: f64, carrier_freq_hz: f64) -> f64 {
    assert!(speed_mps >= 0.0 && carrier_freq_hz > 0.0);
    speed_mps * carrier_freq_hz / SPEED_OF_LIGHT
}

/// Rough coherence time `0.5 c / (v f_c)` in seconds; infinite for a
/// static terminal.
pub fn coherence_time(speed_mps: f64, carrier_freq_hz: f64) -> f64 {
    assert!(speed_mps >= 0.0 && carrier_freq_hz > 0.0);
    if speed_mps == 0.0 {
        return f64::INFINITY;
    }
    0.5 * SPEED_OF_LIGHT / (speed_mps * carrier_freq_hz)
}

/// Channel frequency response for one slot, indexed
/// `[symbol, subcarrier, rx, tx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CfrSlot {
    pub n_symb: usize,
    pub n_sc: usize,
    pub n_rx: usize,
    pub n_tx: usize,
    pub values: Vec<C64>,
}

impl CfrSlot {
    pub fn zeros(n_symb: usize, n_sc: usize, n_rx: usize, n_tx: usize) -> Self {
        CfrSlot {
            n_symb,
            n_sc,
            n_rx,
            n_tx,
            values: alloc::vec![C64::new(0.0, 0.0); n_symb * n_sc * n_rx * n_tx],
        }
    }

    #[inline]
    pub fn idx(&self, l: usize, k: usize, r: usize, t: usize) -> usize {
        ((l * self.n_sc + k) * self.n_rx + r) * self.n_tx + t
    }

    /// The `n_rx x n_tx` matrix at one resource element.
    pub fn at(&self, l: usize, k: usize) -> CMat {
        let base = self.idx(l, k, 0, 0);
        CMat::from_rows(
            self.n_rx,
            self.n_tx,
            self.values[base..base + self.n_rx * self.n_tx].to_vec(),
        )
    }

    pub fn same_shape(&self, other: &CfrSlot) -> bool {
        self.n_symb == other.n_symb
            && self.n_sc == other.n_sc
            && self.n_rx == other.n_rx
            && self.n_tx == other.n_tx
    }
}

/// Channel frequency response over a run of slots, indexed
/// `[slot, symbol, subcarrier, rx, tx]`.
#[derive(Debug, Clone)]
pub struct CfrTensor {
    pub n_slots: usize,
    pub n_symb: usize,
    pub n_sc: usize,
    pub n_rx: usize,
    pub n_tx: usize,
    pub values: Vec<C64>,
}

impl CfrTensor {
    pub fn slot(&self, q: usize) -> CfrSlot {
        assert!(q < self.n_slots, "slot {q} out of range");
        let stride = self.n_symb * self.n_sc * self.n_rx * self.n_tx;
        CfrSlot {
            n_symb: self.n_symb,
            n_sc: self.n_sc,
            n_rx: self.n_rx,
            n_tx: self.n_tx,
            values: self.values[q * stride..(q + 1) * stride].to_vec(),
        }
    }
}

struct Tap {
    /// sqrt(power) of this tap.
    amp: f64,
    /// Delay in seconds.
    delay_s: f64,
    /// Spatial signature, row-major `n_rx x n_tx`.
    spatial: Vec<C64>,
    /// Doppler shift of each sinusoid, in rad/s.
    omegas: [f64; NUM_SINUSOIDS],
    /// Initial phase of each sinusoid.
    phases: [f64; NUM_SINUSOIDS],
}

impl Tap {
    /// Tap fading coefficient at time `t`, unit power over the ensemble.
    fn gain(&self, t: f64) -> C64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for n in 0..NUM_SINUSOIDS {
            let (s, c) = (self.omegas[n] * t + self.phases[n]).sin_cos();
            re += c;
            im += s;
        }
        let scale = 1.0 / (NUM_SINUSOIDS as f64).sqrt();
        C64::new(re * scale, im * scale)
    }
}

/// One coherent channel realization that can be sampled at any slot.
///
/// `generate_cfr` samples it on a contiguous slot range; training code
/// samples pairs of arbitrary slots from the same realization to build
/// aged CSI without materializing everything in between.
pub struct ChannelProcess {
    cfg: ChannelConfig,
    taps: Vec<Tap>,
    /// Phase table `exp(-j 2 pi f_k tau_i)`, indexed `[tap][subcarrier]`.
    freq_phase: Vec<C64>,
}

impl ChannelProcess {
    pub fn new(cfg: &ChannelConfig, speed_mps: f64, rng: &mut RngStream) -> Result<Self> {
        cfg.validate()?;
        if speed_mps < 0.0 {
            return Err(Error::InvalidArgument("speed must be >= 0".into()));
        }
        let n_sc = cfg.active_subcarriers();
        let f_d = doppler_freq(speed_mps, cfg.carrier_freq_hz);

        // Exponential power profile, normalized to unit total power.
        let raw: Vec<f64> =
            (0..cfg.num_taps).map(|i| (-cfg.tap_decay_rate * i as f64).exp()).collect();
        let total: f64 = raw.iter().sum();

        let mut taps = Vec::with_capacity(cfg.num_taps);
        for (i, p) in raw.iter().enumerate() {
            let spatial = crate::numerics::cgauss(cfg.n_rx * cfg.n_tx, 1.0, rng)?;
            let mut omegas = [0.0; NUM_SINUSOIDS];
            let mut phases = [0.0; NUM_SINUSOIDS];
            for n in 0..NUM_SINUSOIDS {
                // Random arrival angles give the ensemble the exact
                // bathtub autocorrelation J0(2 pi f_D dt).
                let alpha = rng.uniform() * core::f64::consts::TAU;
                omegas[n] = core::f64::consts::TAU * f_d * alpha.cos();
                phases[n] = rng.uniform() * core::f64::consts::TAU;
            }
            taps.push(Tap {
                amp: (p / total).sqrt(),
                delay_s: i as f64 * cfg.delay_spread_s,
                spatial,
                omegas,
                phases,
            });
        }

        let mut freq_phase = Vec::with_capacity(cfg.num_taps * n_sc);
        for tap in &taps {
            for k in 0..n_sc {
                let ang = -core::f64::consts::TAU * (k as f64 * cfg.scs_hz) * tap.delay_s;
                let (s, c) = ang.sin_cos();
                freq_phase.push(C64::new(c, s));
            }
        }
        Ok(ChannelProcess { cfg: cfg.clone(), taps, freq_phase })
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.cfg
    }

    /// CFR of slot `q`, sampled once per OFDM symbol.
    pub fn cfr_at_slot(&self, q: usize) -> CfrSlot {
        let cfg = &self.cfg;
        let n_sc = cfg.active_subcarriers();
        let n_ant = cfg.n_rx * cfg.n_tx;
        let mut out = CfrSlot::zeros(cfg.symbols_per_slot, n_sc, cfg.n_rx, cfg.n_tx);
        let t_sym = cfg.symbol_duration_s();
        let slot_t0 = q as f64 * cfg.slot_duration_s();

        let mut gains = alloc::vec![C64::new(0.0, 0.0); self.taps.len()];
        for l in 0..cfg.symbols_per_slot {
            let t = slot_t0 + l as f64 * t_sym;
            for (i, tap) in self.taps.iter().enumerate() {
                gains[i] = tap.gain(t) * tap.amp;
            }
            for k in 0..n_sc {
                let base = (l * n_sc + k) * n_ant;
                for (i, tap) in self.taps.iter().enumerate() {
                    let w = gains[i] * self.freq_phase[i * n_sc + k];
                    let dst = &mut out.values[base..base + n_ant];
                    for (d, s) in dst.iter_mut().zip(&tap.spatial) {
                        *d += w * s;
                    }
                }
            }
        }
        out
    }
}

/// Generate `n_slots` consecutive slots of one channel realization.
pub fn generate_cfr(
    cfg: &ChannelConfig,
    n_slots: usize,
    speed_mps: f64,
    rng: &mut RngStream,
) -> Result<CfrTensor> {
    if n_slots == 0 {
        return Err(Error::InvalidArgument("n_slots must be >= 1".into()));
    }
    let process = ChannelProcess::new(cfg, speed_mps, rng)?;
    let n_sc = cfg.active_subcarriers();
    let stride = cfg.symbols_per_slot * n_sc * cfg.n_rx * cfg.n_tx;
    let mut values = Vec::with_capacity(n_slots * stride);
    for q in 0..n_slots {
        values.extend_from_slice(&process.cfr_at_slot(q).values);
    }
    Ok(CfrTensor {
        n_slots,
        n_symb: cfg.symbols_per_slot,
        n_sc,
        n_rx: cfg.n_rx,
        n_tx: cfg.n_tx,
        values,
    })
}

#[cfg(test)]
pub(crate) fn test_config() -> ChannelConfig {
    ChannelConfig {
        carrier_freq_hz: 28.0e9,
        delay_spread_s: 100.0e-9,
        num_taps: 8,
        tap_decay_rate: 1.0,
        ue_speed_mps: (0.0, 40.0),
        n_fft: 16,
        guard: (0, 0),
        n_tx: 4,
        n_rx: 2,
        scs_hz: 30.0e3,
        symbols_per_slot: 4,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KMH: f64 = 1.0 / 3.6;

    #[test]
    fn doppler_matches_reference_speeds() {
        assert!((doppler_freq(3.0 * KMH, 28.0e9) - 77.78).abs() < 0.01);
        assert!((doppler_freq(5.0 * KMH, 28.0e9) - 129.63).abs() < 0.01);
        assert_eq!(doppler_freq(0.0, 28.0e9), 0.0);
    }

    #[test]
    fn coherence_time_matches_reference_speeds() {
        assert!((coherence_time(3.0 * KMH, 28.0e9) - 6.42e-3).abs() < 0.01e-3);
        assert!((coherence_time(5.0 * KMH, 28.0e9) - 3.85e-3).abs() < 0.01e-3);
        assert!(coherence_time(0.0, 28.0e9).is_infinite());
        // Homogeneity: doubling the speed halves the coherence time.
        let a = coherence_time(2.0, 28.0e9);
        let b = coherence_time(4.0, 28.0e9);
        assert!((a - 2.0 * b).abs() < 1e-12);
    }

    #[test]
    fn zero_speed_freezes_the_process() {
        let cfg = test_config();
        let mut rng = RngStream::new(9, 0);
        let h = generate_cfr(&cfg, 3, 0.0, &mut rng).unwrap();
        let first = h.slot(0);
        for q in 0..3 {
            let s = h.slot(q);
            for l in 0..s.n_symb {
                for i in 0..s.n_sc * s.n_rx * s.n_tx {
                    let a = s.values[l * s.n_sc * s.n_rx * s.n_tx + i];
                    let b = first.values[i];
                    assert!(
                        (a - b).norm() < 1e-12,
                        "slot {q} symbol {l} deviates by {}",
                        (a - b).norm()
                    );
                }
            }
        }
    }

    #[test]
    fn ensemble_power_is_normalized() {
        let cfg = test_config();
        let mut sum = 0.0;
        let mut count = 0usize;
        // Independent realizations; entries inside one realization are
        // correlated, so most of the averaging comes from the stream axis.
        for s in 0..1500 {
            let mut rng = RngStream::new(77, s);
            let h = generate_cfr(&cfg, 1, 5.0 * KMH, &mut rng).unwrap();
            sum += h.values.iter().map(|z| z.norm_sqr()).sum::<f64>();
            count += h.values.len();
        }
        let mean = sum / count as f64;
        assert!((0.98..=1.02).contains(&mean), "mean |H|^2 = {mean}");
    }

    #[test]
    fn tap_powers_sum_to_one() {
        let cfg = test_config();
        let mut rng = RngStream::new(1, 0);
        let p = ChannelProcess::new(&cfg, 1.0, &mut rng).unwrap();
        let total: f64 = p.taps.iter().map(|t| t.amp * t.amp).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn same_stream_is_bit_identical() {
        let cfg = test_config();
        let mut a = RngStream::new(4, 11);
        let mut b = RngStream::new(4, 11);
        let ha = generate_cfr(&cfg, 2, 2.0, &mut a).unwrap();
        let hb = generate_cfr(&cfg, 2, 2.0, &mut b).unwrap();
        assert_eq!(ha.values, hb.values);
    }

    #[test]
    fn zero_taps_is_invalid() {
        let mut cfg = test_config();
        cfg.num_taps = 0;
        let mut rng = RngStream::new(1, 0);
        assert!(generate_cfr(&cfg, 1, 1.0, &mut rng).is_err());
    }

    #[test]
    fn frequency_correlation_drops_with_delay_spread() {
        // Exaggerated spacing so adjacent-subcarrier correlation moves
        // visibly across the delay-spread grid.
        let mut corrs = alloc::vec::Vec::new();
        // Tap phase steps 2*pi*scs*ds stay below pi so nothing aliases.
        for (i, ds) in [0.1e-6, 0.4e-6, 1.2e-6].iter().enumerate() {
            let mut cfg = test_config();
            cfg.scs_hz = 240.0e3;
            cfg.delay_spread_s = *ds;
            let mut num = C64::new(0.0, 0.0);
            let mut den = 0.0;
            for s in 0..800 {
                let mut rng = RngStream::new(100 + i as u64, s);
                let h = generate_cfr(&cfg, 1, 1.0, &mut rng).unwrap();
                let sl = h.slot(0);
                for l in 0..sl.n_symb {
                    for k in 0..sl.n_sc - 1 {
                        for r in 0..sl.n_rx {
                            for t in 0..sl.n_tx {
                                let a = sl.values[sl.idx(l, k, r, t)];
                                let b = sl.values[sl.idx(l, k + 1, r, t)];
                                num += a * b.conj();
                                den += 0.5 * (a.norm_sqr() + b.norm_sqr());
                            }
                        }
                    }
                }
            }
            corrs.push(num.norm() / den);
        }
        assert!(
            corrs[0] > corrs[1] && corrs[1] > corrs[2],
            "correlations not monotone: {corrs:?}"
        );
    }
}
