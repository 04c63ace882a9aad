//! Forward-FLOPs accounting for dual training and the accuracy-per-FLOPs
//! efficiency metrics, plus the frozen reference figures the
//! implementation is cross-checked against.

use crate::error::{Error, Result};

/// Forward-pass bookkeeping of one dual-training run. Backward FLOPs are
/// excluded everywhere by definition.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct FlopsLedger {
    pub base_fwd: f64,
    pub mot_fwd: f64,
    /// Motivated-batch count per epoch.
    pub activations: Vec<u64>,
    pub batches_per_epoch: u64,
    pub epochs: u64,
}

impl FlopsLedger {
    pub fn validate(&self) -> Result<()> {
        if self.activations.len() != self.epochs as usize {
            return Err(Error::Config(format!(
                "{} activation counts for {} epochs",
                self.activations.len(),
                self.epochs
            )));
        }
        if self.activations.iter().any(|&m| m > self.batches_per_epoch) {
            return Err(Error::Config(
                "activation count exceeds batches per epoch".into(),
            ));
        }
        Ok(())
    }
}

/// Mean forward cost per training batch:
/// `(sum_e [(B - m_e) * base_fwd + m_e * mot_fwd]) / (B * E)`.
pub fn average_forward_flops(ledger: &FlopsLedger) -> Result<f64> {
    ledger.validate()?;
    let total_passes = ledger.batches_per_epoch * ledger.epochs;
    if total_passes == 0 {
        return Err(Error::Config("zero total forward passes".into()));
    }
    let mut total = 0.0;
    for &m in &ledger.activations {
        let m = m as f64;
        let b = ledger.batches_per_epoch as f64;
        total += (b - m) * ledger.base_fwd + m * ledger.mot_fwd;
    }
    Ok(total / total_passes as f64)
}

/// A metric that may be undefined (degenerate zero denominator); printed
/// as "/" in reports, mirroring the empty baseline cells.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Metric {
    Defined(f64),
    Undefined,
}

impl Metric {
    pub fn value(self) -> Option<f64> {
        match self {
            Metric::Defined(v) => Some(v),
            Metric::Undefined => None,
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Metric::Defined(v) => write!(f, "{v:.2}"),
            Metric::Undefined => write!(f, "/"),
        }
    }
}

/// Inputs of the three efficiency metrics for one base/motivated pair.
/// Accuracies in percent; FLOPs in any consistent unit (the ratio is
/// unit-free).
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct EfficiencyRow {
    pub acc_base_classical: f64,
    pub acc_dual_base: f64,
    pub acc_mot_classical: f64,
    pub f_xc: f64,
    pub f_xy: f64,
    pub f_yc: f64,
}

impl EfficiencyRow {
    /// Expected ordering F_XC <= F_XY <= F_YC; violations are suspicious
    /// but legal inputs.
    pub fn well_formed(&self) -> bool {
        self.f_xc <= self.f_xy && self.f_xy <= self.f_yc
    }
}

fn safe_div(num: f64, den: f64) -> Metric {
    if den == 0.0 || !den.is_finite() || !num.is_finite() {
        Metric::Undefined
    } else {
        Metric::Defined(num / den)
    }
}

/// Accuracy gain of dual training per extra forward FLOP:
/// `(acc_dual_base - acc_base_classical) / (F_XY - F_XC)`.
pub fn acc_per_flops_dual(row: &EfficiencyRow) -> Metric {
    safe_div(row.acc_dual_base - row.acc_base_classical, row.f_xy - row.f_xc)
}

/// Accuracy gain of simply training the bigger model, per FLOP:
/// `(acc_mot_classical - acc_base_classical) / (F_YC - F_XC)`.
pub fn acc_per_flops_classical(row: &EfficiencyRow) -> Metric {
    safe_div(
        row.acc_mot_classical - row.acc_base_classical,
        row.f_yc - row.f_xc,
    )
}

/// Ratio of the two metrics; unit-free.
pub fn efficiency_ratio(row: &EfficiencyRow) -> Metric {
    match (acc_per_flops_dual(row), acc_per_flops_classical(row)) {
        (Metric::Defined(d), Metric::Defined(c)) if c != 0.0 => Metric::Defined(d / c),
        _ => Metric::Undefined,
    }
}

pub mod reference {
    //! Published reference figures used as golden cross-checks for the
    //! metric formulas, with the per-entry unit scale made explicit
    //! (printed value = metric in the row's FLOPs unit x `scale`).
    //!
    //! Printed inputs are rounded, so each check passes when the computed
    //! value agrees within max(3% relative, half a printed ulp). Where
    //! that fails, interval arithmetic over the input rounding decides
    //! whether any correct implementation could produce the printed value;
    //! if not, the entry is recorded as inconsistent at the source rather
    //! than failed here. Ratio entries additionally accept the quotient of
    //! the two printed (rounded) metric values, which is how the reference
    //! ratios were evidently produced.

    use super::*;

    #[derive(Clone, Copy, Debug)]
    pub enum Kind {
        Dual,
        Classical,
    }

    #[derive(Clone, Copy, Debug)]
    pub struct RefMetric {
        pub label: &'static str,
        pub kind: Kind,
        /// Accuracy (%) of the smaller-model classical baseline.
        pub acc_lo: f64,
        /// Accuracy (%) of the compared model (dual base or bigger classical).
        pub acc_hi: f64,
        /// FLOPs in the row's table unit (M or G), small then large.
        pub f_lo: f64,
        pub f_hi: f64,
        /// printed = metric x scale.
        pub scale: f64,
        pub printed: f64,
        /// Half of the printed value's last decimal place.
        pub half_ulp: f64,
    }

    #[derive(Clone, Copy, Debug)]
    pub struct RefRatio {
        pub label: &'static str,
        /// Indices into [`METRICS`] of the dual and classical entries.
        pub dual: usize,
        pub classical: usize,
        pub printed: f64,
        pub half_ulp: f64,
    }

    pub const METRICS: [RefMetric; 28] = [
        RefMetric { label: "Res-20-32B cifar10 dual", kind: Kind::Dual, acc_lo: 92.62, acc_hi: 92.83, f_lo: 82.82, f_hi: 92.47, scale: 100.0, printed: 2.18, half_ulp: 0.005 },
        RefMetric { label: "Resnet-32-C cifar10 classical", kind: Kind::Classical, acc_lo: 92.62, acc_hi: 93.63, f_lo: 82.82, f_hi: 140.13, scale: 100.0, printed: 1.76, half_ulp: 0.005 },
        RefMetric { label: "Res-32-44B cifar10 dual", kind: Kind::Dual, acc_lo: 93.63, acc_hi: 93.66, f_lo: 140.13, f_hi: 149.67, scale: 100.0, printed: 0.31, half_ulp: 0.005 },
        RefMetric { label: "Resnet-44-C cifar10 classical", kind: Kind::Classical, acc_lo: 93.63, acc_hi: 93.93, f_lo: 140.13, f_hi: 197.44, scale: 100.0, printed: 0.52, half_ulp: 0.005 },
        RefMetric { label: "Res-44-56B cifar10 dual", kind: Kind::Dual, acc_lo: 93.93, acc_hi: 94.10, f_lo: 197.44, f_hi: 197.86, scale: 100.0, printed: 40.48, half_ulp: 0.005 },
        RefMetric { label: "Resnet-56-C cifar10 classical", kind: Kind::Classical, acc_lo: 93.93, acc_hi: 94.12, f_lo: 197.44, f_hi: 254.76, scale: 100.0, printed: 0.33, half_ulp: 0.005 },
        RefMetric { label: "Res-20-32B cifar100 dual", kind: Kind::Dual, acc_lo: 68.86, acc_hi: 69.00, f_lo: 82.82, f_hi: 85.12, scale: 100.0, printed: 6.90, half_ulp: 0.005 },
        RefMetric { label: "Resnet-32-C cifar100 classical", kind: Kind::Classical, acc_lo: 68.86, acc_hi: 70.63, f_lo: 82.82, f_hi: 140.13, scale: 100.0, printed: 3.09, half_ulp: 0.005 },
        RefMetric { label: "Res-32-44B cifar100 dual", kind: Kind::Dual, acc_lo: 70.63, acc_hi: 70.67, f_lo: 140.13, f_hi: 142.44, scale: 100.0, printed: 1.73, half_ulp: 0.005 },
        RefMetric { label: "Resnet-44-C cifar100 classical", kind: Kind::Classical, acc_lo: 70.63, acc_hi: 71.43, f_lo: 140.13, f_hi: 197.44, scale: 100.0, printed: 1.39, half_ulp: 0.005 },
        RefMetric { label: "Res-44-56B cifar100 dual", kind: Kind::Dual, acc_lo: 71.43, acc_hi: 71.76, f_lo: 197.44, f_hi: 197.87, scale: 100.0, printed: 76.74, half_ulp: 0.005 },
        RefMetric { label: "Resnet-56-C cifar100 classical", kind: Kind::Classical, acc_lo: 71.43, acc_hi: 72.50, f_lo: 197.44, f_hi: 254.76, scale: 100.0, printed: 1.87, half_ulp: 0.005 },
        RefMetric { label: "ViT-tiny-small-B cifar10 dual", kind: Kind::Dual, acc_lo: 89.70, acc_hi: 89.74, f_lo: 1.3, f_hi: 1.323, scale: 100.0, printed: 173.91, half_ulp: 0.005 },
        RefMetric { label: "ViT-small-C cifar10 classical", kind: Kind::Classical, acc_lo: 89.70, acc_hi: 92.98, f_lo: 1.3, f_hi: 4.6, scale: 100.0, printed: 99.39, half_ulp: 0.005 },
        RefMetric { label: "ViT-tiny-small-B cifar100 dual", kind: Kind::Dual, acc_lo: 70.38, acc_hi: 70.53, f_lo: 1.3, f_hi: 1.304, scale: 100.0, printed: 3750.0, half_ulp: 0.5 },
        RefMetric { label: "ViT-small-C cifar100 classical", kind: Kind::Classical, acc_lo: 70.38, acc_hi: 71.85, f_lo: 1.3, f_hi: 4.6, scale: 100.0, printed: 44.54, half_ulp: 0.005 },
        RefMetric { label: "Res-50-101B imagenet dual", kind: Kind::Dual, acc_lo: 78.06, acc_hi: 78.40, f_lo: 3.8, f_hi: 3.84, scale: 1.0, printed: 8.5, half_ulp: 0.05 },
        RefMetric { label: "Resnet-101-C imagenet classical", kind: Kind::Classical, acc_lo: 78.06, acc_hi: 79.80, f_lo: 3.8, f_hi: 7.6, scale: 1.0, printed: 0.46, half_ulp: 0.005 },
        RefMetric { label: "Eff-0-1B cifar100 dual", kind: Kind::Dual, acc_lo: 79.09, acc_hi: 79.23, f_lo: 0.39, f_hi: 0.44, scale: 1.0, printed: 2.8, half_ulp: 0.05 },
        RefMetric { label: "EfficientNet-B1-C cifar100 classical", kind: Kind::Classical, acc_lo: 79.09, acc_hi: 79.92, f_lo: 0.39, f_hi: 0.7, scale: 1.0, printed: 2.22, half_ulp: 0.005 },
        RefMetric { label: "Eff-1-2B cifar100 dual", kind: Kind::Dual, acc_lo: 79.92, acc_hi: 80.37, f_lo: 0.7, f_hi: 0.72, scale: 1.0, printed: 22.5, half_ulp: 0.05 },
        RefMetric { label: "EfficientNet-B2-C cifar100 classical", kind: Kind::Classical, acc_lo: 79.92, acc_hi: 80.18, f_lo: 0.7, f_hi: 1.0, scale: 1.0, printed: 3.33, half_ulp: 0.005 },
        RefMetric { label: "Eff-2-3B cifar100 dual", kind: Kind::Dual, acc_lo: 80.18, acc_hi: 80.32, f_lo: 1.0, f_hi: 1.01, scale: 1.0, printed: 14.0, half_ulp: 0.5 },
        RefMetric { label: "EfficientNet-B3-C cifar100 classical", kind: Kind::Classical, acc_lo: 80.18, acc_hi: 80.93, f_lo: 1.0, f_hi: 1.8, scale: 1.0, printed: 0.94, half_ulp: 0.005 },
        RefMetric { label: "Eff-3-4B cifar100 dual", kind: Kind::Dual, acc_lo: 80.93, acc_hi: 80.81, f_lo: 1.8, f_hi: 1.82, scale: 1.0, printed: -6.0, half_ulp: 0.5 },
        RefMetric { label: "EfficientNet-B4-C cifar100 classical", kind: Kind::Classical, acc_lo: 80.93, acc_hi: 81.08, f_lo: 1.8, f_hi: 4.2, scale: 1.0, printed: 0.06, half_ulp: 0.005 },
        RefMetric { label: "Eff-4-5B cifar100 dual", kind: Kind::Dual, acc_lo: 81.08, acc_hi: 81.27, f_lo: 4.2, f_hi: 4.43, scale: 1.0, printed: 0.83, half_ulp: 0.005 },
        RefMetric { label: "EfficientNet-B5-C cifar100 classical", kind: Kind::Classical, acc_lo: 81.08, acc_hi: 82.10, f_lo: 4.2, f_hi: 9.9, scale: 1.0, printed: 0.18, half_ulp: 0.005 },
    ];

    pub const RATIOS: [RefRatio; 14] = [
        RefRatio { label: "Res-20-32B cifar10 ratio", dual: 0, classical: 1, printed: 1.24, half_ulp: 0.005 },
        RefRatio { label: "Res-32-44B cifar10 ratio", dual: 2, classical: 3, printed: 0.60, half_ulp: 0.005 },
        RefRatio { label: "Res-44-56B cifar10 ratio", dual: 4, classical: 5, printed: 122.67, half_ulp: 0.005 },
        RefRatio { label: "Res-20-32B cifar100 ratio", dual: 6, classical: 7, printed: 2.23, half_ulp: 0.005 },
        RefRatio { label: "Res-32-44B cifar100 ratio", dual: 8, classical: 9, printed: 1.24, half_ulp: 0.005 },
        RefRatio { label: "Res-44-56B cifar100 ratio", dual: 10, classical: 11, printed: 41.04, half_ulp: 0.005 },
        RefRatio { label: "ViT-tiny-small-B cifar10 ratio", dual: 12, classical: 13, printed: 1.75, half_ulp: 0.005 },
        RefRatio { label: "ViT-tiny-small-B cifar100 ratio", dual: 14, classical: 15, printed: 84.19, half_ulp: 0.005 },
        RefRatio { label: "Res-50-101B imagenet ratio", dual: 16, classical: 17, printed: 18.48, half_ulp: 0.005 },
        RefRatio { label: "Eff-0-1B cifar100 ratio", dual: 18, classical: 19, printed: 1.26, half_ulp: 0.005 },
        RefRatio { label: "Eff-1-2B cifar100 ratio", dual: 20, classical: 21, printed: 6.76, half_ulp: 0.005 },
        RefRatio { label: "Eff-2-3B cifar100 ratio", dual: 22, classical: 23, printed: 14.89, half_ulp: 0.005 },
        RefRatio { label: "Eff-3-4B cifar100 ratio", dual: 24, classical: 25, printed: -100.0, half_ulp: 0.5 },
        RefRatio { label: "Eff-4-5B cifar100 ratio", dual: 26, classical: 27, printed: 4.61, half_ulp: 0.5 },
    ];

    /// Input rounding assumed for interval proofs: accuracies are printed
    /// to 0.01%, FLOPs tables resolve to 0.01 of their unit (entries like
    /// "0.7" simply drop trailing zeros).
    const ACC_HALF_ULP: f64 = 0.005;
    const FLOPS_HALF_ULP: f64 = 0.005;

    fn computed(entry: &RefMetric) -> f64 {
        // route through the real metric functions
        let row = EfficiencyRow {
            acc_base_classical: entry.acc_lo,
            acc_dual_base: entry.acc_hi,
            acc_mot_classical: entry.acc_hi,
            f_xc: entry.f_lo,
            f_xy: entry.f_hi,
            f_yc: entry.f_hi,
        };
        let m = match entry.kind {
            Kind::Dual => acc_per_flops_dual(&row),
            Kind::Classical => acc_per_flops_classical(&row),
        };
        m.value().expect("reference rows are non-degenerate") * entry.scale
    }

    fn matches(computed: f64, printed: f64, half_ulp: f64) -> bool {
        (computed - printed).abs() <= (0.03 * printed.abs()).max(half_ulp)
    }

    /// Interval of values any correct implementation could produce from
    /// the rounded inputs.
    fn achievable_interval(entry: &RefMetric) -> (f64, f64) {
        let nums = [
            entry.acc_hi - entry.acc_lo - 2.0 * ACC_HALF_ULP,
            entry.acc_hi - entry.acc_lo + 2.0 * ACC_HALF_ULP,
        ];
        let dens = [
            entry.f_hi - entry.f_lo - 2.0 * FLOPS_HALF_ULP,
            entry.f_hi - entry.f_lo + 2.0 * FLOPS_HALF_ULP,
        ];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for n in nums {
            for d in dens {
                if d != 0.0 {
                    let v = n / d * entry.scale;
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        (lo, hi)
    }

    #[derive(Clone, Debug, Default)]
    pub struct Outcome {
        pub reproduced: Vec<&'static str>,
        /// Printed value provably unreachable from its own printed inputs.
        pub inconsistent_at_source: Vec<&'static str>,
        /// Reachable but not reproduced — a real defect.
        pub failed: Vec<String>,
    }

    /// Recompute every reference figure through the metric functions and
    /// classify each entry.
    pub fn check() -> Outcome {
        let mut out = Outcome::default();
        for entry in &METRICS {
            let c = computed(entry);
            if matches(c, entry.printed, entry.half_ulp) {
                out.reproduced.push(entry.label);
                continue;
            }
            let (lo, hi) = achievable_interval(entry);
            let margin = (0.03 * lo.abs().max(hi.abs())).max(entry.half_ulp);
            if entry.printed < lo - margin || entry.printed > hi + margin {
                out.inconsistent_at_source.push(entry.label);
            } else {
                out.failed.push(format!(
                    "{}: computed {c:.4}, printed {} (reachable interval [{lo:.4}, {hi:.4}])",
                    entry.label, entry.printed
                ));
            }
        }
        for ratio in &RATIOS {
            let raw = computed(&METRICS[ratio.dual]) / computed(&METRICS[ratio.classical]);
            // reference ratios were produced from the rounded printed
            // metrics, so accept that quotient as well
            let quotient = METRICS[ratio.dual].printed / METRICS[ratio.classical].printed;
            if matches(raw, ratio.printed, ratio.half_ulp)
                || matches(quotient, ratio.printed, ratio.half_ulp)
            {
                out.reproduced.push(ratio.label);
            } else {
                out.failed.push(format!(
                    "{}: raw {raw:.4}, printed-quotient {quotient:.4}, printed {}",
                    ratio.label, ratio.printed
                ));
            }
        }
        out
    }
}
