//! CSI acquisition model: what the transmitter actually knows.
//!
//! CSI is refreshed on a periodic schedule, so the precoder at slot `q`
//! works from the channel of an earlier slot (aging) plus an additive
//! complex Gaussian error that stands in for estimation and compression
//! noise. Both impairments are exposed separately so experiments can turn
//! either one off.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::channel::{CfrSlot, CfrTensor};
use crate::error::{Error, Result};
use crate::numerics::{C64, RngStream};

/// Periodic CSI refresh schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsiSchedule {
    pub t_csi: usize,
    pub t_offset: usize,
}

impl CsiSchedule {
    pub fn new(t_csi: usize, t_offset: usize) -> Result<Self> {
        if t_csi == 0 {
            return Err(Error::InvalidConfig("t_csi must be >= 1".into()));
        }
        if t_offset >= t_csi {
            return Err(Error::InvalidConfig("t_offset must be < t_csi".into()));
        }
        Ok(CsiSchedule { t_csi, t_offset })
    }
}

/// The slot whose CSI is in force at slot `q`:
/// `floor((q - t_offset) / t_csi) * t_csi + t_offset`.
pub fn f_csi(q: usize, sched: CsiSchedule) -> Result<usize> {
    if q < sched.t_offset {
        return Err(Error::InvalidArgument(alloc::format!(
            "slot {q} precedes the first CSI slot {}",
            sched.t_offset
        )));
    }
    Ok((q - sched.t_offset) / sched.t_csi * sched.t_csi + sched.t_offset)
}

/// CSI available to the transmitter at slot `q`: the channel of slot
/// `f_csi(q)` plus acquisition noise.
#[derive(Debug, Clone)]
pub struct ImpairedCsi {
    pub values: CfrSlot,
    pub source_slot: usize,
    pub target_slot: usize,
    pub snr_csi_db: f64,
}

impl ImpairedCsi {
    /// Aging lag in slots.
    pub fn tau(&self) -> usize {
        self.target_slot - self.source_slot
    }
}

/// Per-entry noise power for a CSI acquisition SNR in dB; infinity means
/// noiseless.
pub fn csi_noise_power(snr_csi_db: f64) -> f64 {
    if snr_csi_db.is_infinite() && snr_csi_db > 0.0 {
        0.0
    } else {
        10f64.powf(-snr_csi_db / 10.0)
    }
}

/// Acquire the CSI in force at slot `q`: the channel at `f_csi(q)` plus one
/// complex Gaussian error tensor drawn for that acquisition event.
pub fn acquire_csi(
    h: &CfrTensor,
    q: usize,
    snr_csi_db: f64,
    sched: CsiSchedule,
    rng: &mut RngStream,
) -> Result<ImpairedCsi> {
    let (csi, _noise) = acquire_csi_with_noise(h, q, snr_csi_db, sched, rng)?;
    Ok(csi)
}

/// As `acquire_csi`, also returning the sampled noise tensor so tests can
/// verify the additive decomposition exactly.
pub fn acquire_csi_with_noise(
    h: &CfrTensor,
    q: usize,
    snr_csi_db: f64,
    sched: CsiSchedule,
    rng: &mut RngStream,
) -> Result<(ImpairedCsi, Vec<C64>)> {
    let src = f_csi(q, sched)?;
    if src >= h.n_slots || q >= h.n_slots {
        return Err(Error::InvalidArgument(alloc::format!(
            "slots {src}/{q} outside the generated range {}",
            h.n_slots
        )));
    }
    let mut slot = h.slot(src);
    let noise = crate::numerics::cgauss(slot.values.len(), csi_noise_power(snr_csi_db), rng)?;
    for (v, z) in slot.values.iter_mut().zip(&noise) {
        *v += z;
    }
    Ok((
        ImpairedCsi { values: slot, source_slot: src, target_slot: q, snr_csi_db },
        noise,
    ))
}

/// Channel evolution between the CSI slot and slot `q`:
/// `H[q] - H[f_csi(q)]`.
pub fn aging_error(h: &CfrTensor, q: usize, sched: CsiSchedule) -> Result<Vec<C64>> {
    let src = f_csi(q, sched)?;
    if q >= h.n_slots {
        return Err(Error::InvalidArgument("slot outside the generated range".into()));
    }
    let now = h.slot(q);
    let then = h.slot(src);
    Ok(now.values.iter().zip(&then.values).map(|(a, b)| a - b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_cfr, test_config};

    #[test]
    fn f_csi_matches_schedule_arithmetic() {
        let s2 = CsiSchedule::new(2, 0).unwrap();
        assert_eq!(f_csi(5, s2).unwrap(), 4);
        // CSI slots map to themselves.
        for q in [0usize, 2, 4, 6] {
            assert_eq!(f_csi(q, s2).unwrap(), q);
        }
        let s4 = CsiSchedule::new(4, 0).unwrap();
        assert_eq!(f_csi(6, s4).unwrap(), 4);
    }

    #[test]
    fn f_csi_is_idempotent_and_lag_bounded() {
        let sched = CsiSchedule::new(5, 2).unwrap();
        for q in 2..40 {
            let src = f_csi(q, sched).unwrap();
            assert!(q - src < sched.t_csi);
            assert_eq!(f_csi(src, sched).unwrap(), src);
        }
    }

    #[test]
    fn f_csi_before_first_report_errors() {
        let sched = CsiSchedule::new(4, 2).unwrap();
        assert!(f_csi(1, sched).is_err());
    }

    #[test]
    fn invalid_schedules_rejected() {
        assert!(CsiSchedule::new(0, 0).is_err());
        assert!(CsiSchedule::new(3, 3).is_err());
    }

    #[test]
    fn noiseless_csi_at_csi_slot_is_identity() {
        let cfg = test_config();
        let mut rng = RngStream::new(21, 0);
        let h = generate_cfr(&cfg, 4, 1.0, &mut rng).unwrap();
        let sched = CsiSchedule::new(2, 0).unwrap();
        let csi = acquire_csi(&h, 2, f64::INFINITY, sched, &mut rng).unwrap();
        assert_eq!(csi.tau(), 0);
        assert_eq!(csi.values.values, h.slot(2).values);
    }

    #[test]
    fn noiseless_aged_csi_matches_source_slot_and_aging_error() {
        let cfg = test_config();
        let mut rng = RngStream::new(22, 0);
        let h = generate_cfr(&cfg, 6, 2.0, &mut rng).unwrap();
        let sched = CsiSchedule::new(4, 0).unwrap();
        let q = 3;
        let csi = acquire_csi(&h, q, f64::INFINITY, sched, &mut rng).unwrap();
        assert_eq!(csi.source_slot, 0);
        assert_eq!(csi.values.values, h.slot(0).values);
        // CSI minus the current channel is exactly minus the aging error.
        let aging = aging_error(&h, q, sched).unwrap();
        for (i, z) in aging.iter().enumerate() {
            let diff = csi.values.values[i] - h.slot(q).values[i];
            assert!((diff + z).norm() < 1e-15);
        }
    }

    #[test]
    fn zero_db_noise_power_is_unity() {
        let cfg = test_config();
        let sched = CsiSchedule::new(1, 0).unwrap();
        let mut err_p = 0.0;
        let mut count = 0usize;
        for s in 0..300 {
            let mut rng = RngStream::new(55, s);
            let h = generate_cfr(&cfg, 1, 1.0, &mut rng).unwrap();
            let csi = acquire_csi(&h, 0, 0.0, sched, &mut rng).unwrap();
            for (a, b) in csi.values.values.iter().zip(&h.slot(0).values) {
                err_p += (a - b).norm_sqr();
                count += 1;
            }
        }
        let mean = err_p / count as f64;
        assert!((0.98..=1.02).contains(&mean), "error power {mean}");
    }

    #[test]
    fn aging_error_zero_at_csi_slot_and_for_frozen_channel() {
        let cfg = test_config();
        let mut rng = RngStream::new(23, 0);
        let h = generate_cfr(&cfg, 5, 3.0, &mut rng).unwrap();
        let sched = CsiSchedule::new(3, 0).unwrap();
        assert!(aging_error(&h, 3, sched).unwrap().iter().all(|z| z.norm() == 0.0));

        let frozen = generate_cfr(&cfg, 5, 0.0, &mut rng).unwrap();
        for q in 0..5 {
            let e = aging_error(&frozen, q, sched).unwrap();
            assert!(e.iter().all(|z| z.norm() < 1e-12));
        }
    }

    #[test]
    fn aging_power_grows_with_lag_within_coherence() {
        let cfg = test_config();
        let sched = CsiSchedule::new(8, 0).unwrap();
        let mut powers = [0.0f64; 8];
        let mut count = 0usize;
        for s in 0..500 {
            let mut rng = RngStream::new(60, s);
            // 5 km/h: coherence of a few ms spans well past 8 desk slots.
            let h = generate_cfr(&cfg, 8, 5.0 / 3.6, &mut rng).unwrap();
            for (tau, p) in powers.iter_mut().enumerate() {
                let e = aging_error(&h, tau, sched).unwrap();
                *p += e.iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
            count += h.slot(0).values.len();
        }
        let powers: Vec<f64> = powers.iter().map(|p| p / count as f64).collect();
        for tau in 1..8 {
            assert!(
                powers[tau] >= powers[tau - 1],
                "aging power not monotone at tau={tau}: {powers:?}"
            );
        }
    }

    #[test]
    fn decomposition_with_captured_noise_is_exact() {
        let cfg = test_config();
        let mut rng = RngStream::new(31, 0);
        let h = generate_cfr(&cfg, 6, 4.0, &mut rng).unwrap();
        let sched = CsiSchedule::new(4, 0).unwrap();
        let q = 6 - 1;
        let (csi, noise) = acquire_csi_with_noise(&h, q, 3.0, sched, &mut rng).unwrap();
        let aging = aging_error(&h, q, sched).unwrap();
        let hq = h.slot(q);
        // H[q] = csi - noise + aging, entry by entry, to machine precision
        // (the summation order differs, so bit equality is not expected).
        for i in 0..hq.values.len() {
            let rebuilt = csi.values.values[i] - noise[i] + aging[i];
            assert!((rebuilt - hq.values[i]).norm() < 1e-14);
        }
    }
}
