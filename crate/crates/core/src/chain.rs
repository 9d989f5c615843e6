//! Amplification-chain algebra.
//!
//! A chain is an ordered list of (loss, amplifier) pairs. Each pair reduces
//! to an effective amplifier with gain `η·G` and input-referred added noise
//! `((1-η)·N_T + N)/η`; the effective amplifiers then cascade by the Friis
//! rule into a single `(G_sys, N_sys)`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_non_negative, Error, Result};
use crate::quanta::{to_db, Frequency};
use crate::sources::johnson_noise;

/// Beamsplitter-like loss: transmits `efficiency` of the incoming noise and
/// replaces the rest with Johnson noise at `temperature`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossStage {
    pub efficiency: f64,
    pub temperature: f64,
}

impl LossStage {
    pub fn new(efficiency: f64, temperature: f64) -> Result<Self> {
        ensure_finite("efficiency", efficiency)?;
        if efficiency <= 0.0 {
            return Err(Error::DegenerateChain(format!("loss efficiency {efficiency} must be > 0")));
        }
        if efficiency > 1.0 {
            return Err(Error::InvalidInput {
                name: "efficiency",
                value: efficiency,
                reason: "must be at most 1",
            });
        }
        ensure_non_negative("loss temperature", temperature)?;
        Ok(Self { efficiency, temperature })
    }

    pub fn lossless() -> Self {
        Self {
            efficiency: 1.0,
            temperature: 0.0,
        }
    }

    /// Insertion loss in dB, `-10·log10(η)`.
    pub fn insertion_loss_db(&self) -> f64 {
        -to_db(self.efficiency)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplifierStage {
    pub gain: f64,
    pub added_noise: f64,
}

impl AmplifierStage {
    pub fn new(gain: f64, added_noise: f64) -> Result<Self> {
        ensure_finite("gain", gain)?;
        if gain < 1.0 {
            return Err(Error::InvalidInput {
                name: "gain",
                value: gain,
                reason: "amplifier gain must be at least 1",
            });
        }
        ensure_non_negative("added noise", added_noise)?;
        Ok(Self { gain, added_noise })
    }

    pub fn unity() -> Self {
        Self {
            gain: 1.0,
            added_noise: 0.0,
        }
    }
}

/// One loss stage followed by one amplifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub loss: LossStage,
    pub amplifier: AmplifierStage,
}

impl Stage {
    pub fn new(loss: LossStage, amplifier: AmplifierStage) -> Self {
        Self { loss, amplifier }
    }

    pub fn bare_loss(loss: LossStage) -> Self {
        Self::new(loss, AmplifierStage::unity())
    }

    pub fn bare_amplifier(amplifier: AmplifierStage) -> Self {
        Self::new(LossStage::lossless(), amplifier)
    }
}

/// Gain and input-referred added noise of a reduced (sub)chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveAmplifier {
    pub gain: f64,
    pub added_noise: f64,
}

impl EffectiveAmplifier {
    pub fn new(gain: f64, added_noise: f64) -> Self {
        Self { gain, added_noise }
    }

    /// This amplifier followed by `next` (two-term Friis rule).
    pub fn then(self, next: EffectiveAmplifier) -> EffectiveAmplifier {
        EffectiveAmplifier {
            gain: self.gain * next.gain,
            added_noise: self.added_noise + next.added_noise / self.gain,
        }
    }

    /// Output noise `G·(n_in + N)`.
    pub fn output(&self, n_in: f64) -> f64 {
        self.gain * (n_in + self.added_noise)
    }
}

/// Folds a loss stage into the amplifier that follows it.
pub fn compose_stage(loss: &LossStage, amp: &AmplifierStage, f: Frequency) -> Result<EffectiveAmplifier> {
    let eta = loss.efficiency;
    if eta <= 0.0 {
        return Err(Error::DegenerateChain("zero transmission efficiency".into()));
    }
    let n_t = johnson_noise(loss.temperature, f)?.value();
    Ok(EffectiveAmplifier {
        gain: eta * amp.gain,
        added_noise: ((1.0 - eta) * n_t + amp.added_noise) / eta,
    })
}

/// Reduces a full chain at frequency `f`.
pub fn reduce_chain(stages: &[Stage], f: Frequency) -> Result<EffectiveAmplifier> {
    let effective = stages
        .iter()
        .map(|s| compose_stage(&s.loss, &s.amplifier, f))
        .collect::<Result<Vec<_>>>()?;
    cascade(&effective)
}

/// Friis accumulation of already-reduced amplifiers.
pub fn cascade(amplifiers: &[EffectiveAmplifier]) -> Result<EffectiveAmplifier> {
    let (first, rest) = amplifiers
        .split_first()
        .ok_or_else(|| Error::DegenerateChain("empty chain".into()))?;
    // Accumulate the gain product explicitly so the sum keeps Friis order.
    let mut gain = first.gain;
    let mut noise = first.added_noise;
    for amp in rest {
        noise += amp.added_noise / gain;
        gain *= amp.gain;
    }
    Ok(EffectiveAmplifier::new(gain, noise))
}

/// Output of a reduced chain, `G_sys·(n_in + N_sys)`.
pub fn chain_output(eff: &EffectiveAmplifier, n_in: f64) -> Result<f64> {
    ensure_non_negative("input noise", n_in)?;
    Ok(eff.output(n_in))
}

/// Result of moving the reference plane past the first loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneCorrection {
    /// Corrected system-excess noise.
    pub n_sys_ex: f64,
    /// Corrected system-added noise, `n_sys_ex + 1/2`.
    pub n_sys: f64,
    /// Set when the correction subtracted more than was measured.
    pub over_subtracted: bool,
}

/// Removes the first loss (equal signal and idler efficiency `eta1`) from a
/// measured system-excess noise: `η·N_ex − 2(1−η)·N_T1`.
pub fn move_reference_plane(n_sys_ex: f64, eta1: f64, n_t1: f64) -> Result<PlaneCorrection> {
    move_reference_plane_asymmetric(n_sys_ex, eta1, eta1, n_t1)
}

/// General form with distinct signal and idler efficiencies:
/// `η_s·N_ex − (1−η_s)·N_T1 − η_s·(1−η_i)·N_T1/η_i`.
pub fn move_reference_plane_asymmetric(n_sys_ex: f64, eta_s: f64, eta_i: f64, n_t1: f64) -> Result<PlaneCorrection> {
    ensure_finite("system-excess noise", n_sys_ex)?;
    ensure_non_negative("loss noise", n_t1)?;
    for (name, eta) in [("signal efficiency", eta_s), ("idler efficiency", eta_i)] {
        ensure_finite(name, eta)?;
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidInput {
                name,
                value: eta,
                reason: "must lie in (0, 1]",
            });
        }
    }
    let corrected = if eta_s == eta_i {
        eta_s * n_sys_ex - 2.0 * (1.0 - eta_s) * n_t1
    } else {
        eta_s * n_sys_ex - (1.0 - eta_s) * n_t1 - eta_s * (1.0 - eta_i) * n_t1 / eta_i
    };
    Ok(PlaneCorrection {
        n_sys_ex: corrected,
        n_sys: corrected + 0.5,
        over_subtracted: corrected < 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyEstimate {
    pub eta: f64,
    pub insertion_loss_db: f64,
    /// `eta > 1`: the near-plane gain exceeds the far-plane gain.
    pub exceeds_unity: bool,
}

/// Transmission efficiency between two reference planes from the system
/// gains measured at each (near = source-side plane, far = the plane after
/// the loss).
pub fn efficiency_from_gains(g_near: f64, g_far: f64) -> Result<EfficiencyEstimate> {
    crate::error::ensure_positive("near gain", g_near)?;
    crate::error::ensure_positive("far gain", g_far)?;
    let eta = g_near / g_far;
    Ok(EfficiencyEstimate {
        eta,
        insertion_loss_db: -to_db(eta),
        exceeds_unity: eta > 1.0,
    })
}

/// Serialized chain description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainDescription {
    pub schema_version: u32,
    pub stages: Vec<StageElement>,
}

pub const CHAIN_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StageElement {
    Loss { efficiency: f64, temperature_k: f64 },
    Amplifier { gain: f64, added_noise_quanta: f64 },
}

impl ChainDescription {
    /// Pairs each loss with the amplifier that follows it; unpaired losses
    /// get a unity amplifier and unpaired amplifiers a lossless stage.
    pub fn stages(&self) -> Result<Vec<Stage>> {
        if self.schema_version != CHAIN_SCHEMA_VERSION {
            return Err(Error::schema(
                "chain description",
                format!("unsupported schema_version {} (expected {CHAIN_SCHEMA_VERSION})", self.schema_version),
            ));
        }
        let mut out = Vec::new();
        let mut pending: Option<LossStage> = None;
        for element in &self.stages {
            match *element {
                StageElement::Loss {
                    efficiency,
                    temperature_k,
                } => {
                    if let Some(loss) = pending.take() {
                        out.push(Stage::bare_loss(loss));
                    }
                    pending = Some(LossStage::new(efficiency, temperature_k)?);
                }
                StageElement::Amplifier {
                    gain,
                    added_noise_quanta,
                } => {
                    let amp = AmplifierStage::new(gain, added_noise_quanta)?;
                    out.push(Stage::new(pending.take().unwrap_or_else(LossStage::lossless), amp));
                }
            }
        }
        if let Some(loss) = pending {
            out.push(Stage::bare_loss(loss));
        }
        if out.is_empty() {
            return Err(Error::DegenerateChain("empty chain".into()));
        }
        Ok(out)
    }

    pub fn reduce(&self, f: Frequency) -> Result<EffectiveAmplifier> {
        reduce_chain(&self.stages()?, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn f6() -> Frequency {
        Frequency::ghz(6.0).unwrap()
    }

    #[test]
    fn lossless_stage_is_identity() {
        let eff = compose_stage(&LossStage::lossless(), &AmplifierStage::new(100.0, 2.0).unwrap(), f6()).unwrap();
        assert_eq!(eff, EffectiveAmplifier::new(100.0, 2.0));
    }

    #[test]
    fn half_transmission_at_vacuum() {
        let eff = compose_stage(&LossStage::new(0.5, 0.0).unwrap(), &AmplifierStage::new(100.0, 2.0).unwrap(), f6()).unwrap();
        assert_relative_eq!(eff.gain, 50.0);
        assert_relative_eq!(eff.added_noise, 4.5);
        assert_relative_eq!(LossStage::new(0.85, 0.0).unwrap().insertion_loss_db(), 0.705_810_742_857_072_7, max_relative = 1e-12);
    }

    #[test]
    fn zero_efficiency_is_degenerate() {
        let bad = LossStage {
            efficiency: 0.0,
            temperature: 0.0,
        };
        assert!(matches!(compose_stage(&bad, &AmplifierStage::unity(), f6()), Err(Error::DegenerateChain(_))));
        assert!(matches!(LossStage::new(0.0, 0.0), Err(Error::DegenerateChain(_))));
    }

    #[test]
    fn friis_two_stage() {
        let total = cascade(&[EffectiveAmplifier::new(50.0, 4.5), EffectiveAmplifier::new(1000.0, 20.0)]).unwrap();
        assert_relative_eq!(total.gain, 50_000.0);
        assert_relative_eq!(total.added_noise, 4.9, max_relative = 1e-15);
        let single = reduce_chain(&[Stage::bare_amplifier(AmplifierStage::new(7.0, 3.0).unwrap())], f6()).unwrap();
        assert_eq!(single, EffectiveAmplifier::new(7.0, 3.0));
        assert!(matches!(reduce_chain(&[], f6()), Err(Error::DegenerateChain(_))));
    }

    #[test]
    fn chain_output_geometry() {
        let sys = EffectiveAmplifier::new(1e9, 1.0);
        assert_relative_eq!(chain_output(&sys, 0.5).unwrap(), 1.5e9);
        assert_relative_eq!(chain_output(&sys, 0.0).unwrap(), 1e9);
        assert_eq!(chain_output(&EffectiveAmplifier::new(1.0, 0.0), 3.25).unwrap(), 3.25);
        assert!(chain_output(&sys, -1.0).is_err());
    }

    #[test]
    fn reference_plane() {
        let c = move_reference_plane(3.0, 0.85, 0.5).unwrap();
        assert_relative_eq!(c.n_sys_ex, 2.4, max_relative = 1e-14);
        assert_relative_eq!(c.n_sys, 2.9, max_relative = 1e-14);
        assert!(!c.over_subtracted);
        assert_eq!(move_reference_plane(1.7, 1.0, 0.5).unwrap().n_sys_ex, 1.7);
        let over = move_reference_plane(0.1, 0.8, 0.5).unwrap();
        assert!(over.over_subtracted);
        // the general form collapses to the symmetric one
        let g = move_reference_plane_asymmetric(3.0, 0.85, 0.85 + 1e-300, 0.5).unwrap();
        assert_relative_eq!(g.n_sys_ex, 2.4, max_relative = 1e-12);
        assert!(move_reference_plane(1.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn typical_plane_shift_is_half_a_quantum() {
        // Four quanta of excess behind 0.85 transmission at a cold stage.
        let c = move_reference_plane(4.0, 0.85, 0.5).unwrap();
        let shift = 4.0 - c.n_sys_ex;
        assert!((0.3..=0.9).contains(&shift), "shift {shift}");
    }

    #[test]
    fn efficiency() {
        let e = efficiency_from_gains(2e9, 2e9).unwrap();
        assert_eq!(e.eta, 1.0);
        assert_eq!(e.insertion_loss_db, 0.0);
        assert_relative_eq!(efficiency_from_gains(1.0, 2.0).unwrap().insertion_loss_db, 3.010_299_956_639_812, max_relative = 1e-14);
        for eta in [0.8, 0.85, 0.9] {
            let il = efficiency_from_gains(eta, 1.0).unwrap().insertion_loss_db;
            assert!((0.45..=1.0).contains(&il));
        }
        assert!(efficiency_from_gains(1.1, 1.0).unwrap().exceeds_unity);
    }

    #[test]
    fn description_pairs_stages() {
        let json = r#"{
            "schema_version": 1,
            "stages": [
                {"kind": "loss", "efficiency": 0.85, "temperature_k": 0.01},
                {"kind": "amplifier", "gain": 100.0, "added_noise_quanta": 0.6},
                {"kind": "loss", "efficiency": 0.5, "temperature_k": 4.0},
                {"kind": "loss", "efficiency": 0.9, "temperature_k": 4.0},
                {"kind": "amplifier", "gain": 1e4, "added_noise_quanta": 15.0},
                {"kind": "amplifier", "gain": 1e3, "added_noise_quanta": 300.0}
            ]
        }"#;
        let desc: ChainDescription = serde_json::from_str(json).unwrap();
        let stages = desc.stages().unwrap();
        assert_eq!(stages.len(), 4);
        assert_eq!(stages[1].amplifier, AmplifierStage::unity());
        assert_eq!(stages[3].loss, LossStage::lossless());
        assert!(desc.reduce(f6()).unwrap().added_noise > 0.6 / 0.85);

        let bad_version: ChainDescription = serde_json::from_str(r#"{"schema_version": 9, "stages": []}"#).unwrap();
        assert!(matches!(bad_version.stages(), Err(Error::Schema { .. })));
        assert!(serde_json::from_str::<ChainDescription>(r#"{"schema_version": 1, "stages": [{"kind": "mixer"}]}"#).is_err());
    }

    #[test]
    fn friis_is_order_sensitive() {
        let a = EffectiveAmplifier::new(100.0, 1.0);
        let b = EffectiveAmplifier::new(10.0, 30.0);
        let ab = cascade(&[a, b]).unwrap();
        let ba = cascade(&[b, a]).unwrap();
        assert_eq!(ab.gain, ba.gain);
        assert!((ab.added_noise - ba.added_noise).abs() > 1.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn stage() -> impl Strategy<Value = Stage> {
            (0.05f64..=1.0, 0.0f64..10.0, 1.0f64..1e4, 0.0f64..100.0).prop_map(|(eta, t, g, n)| {
                Stage::new(LossStage::new(eta, t).unwrap(), AmplifierStage::new(g, n).unwrap())
            })
        }

        proptest! {
            #[test]
            fn degradation(s in stage()) {
                let eff = compose_stage(&s.loss, &s.amplifier, f6()).unwrap();
                prop_assert!(eff.gain <= s.amplifier.gain);
                prop_assert!(eff.added_noise >= s.amplifier.added_noise);
            }

            #[test]
            fn associativity(stages in prop::collection::vec(stage(), 2..7), split in 1usize..6) {
                let k = split.min(stages.len() - 1);
                let all = reduce_chain(&stages, f6()).unwrap();
                let head = reduce_chain(&stages[..k], f6()).unwrap();
                let tail = reduce_chain(&stages[k..], f6()).unwrap();
                let joined = head.then(tail);
                prop_assert!(((joined.gain - all.gain) / all.gain).abs() < 1e-12);
                prop_assert!(((joined.added_noise - all.added_noise) / all.added_noise.max(1e-300)).abs() < 1e-12);
            }

            #[test]
            fn unit_efficiency_plane_is_identity(n in -5.0f64..50.0, nt in 0.5f64..5.0) {
                prop_assert_eq!(move_reference_plane(n, 1.0, nt).unwrap().n_sys_ex, n);
            }
        }
    }
}
