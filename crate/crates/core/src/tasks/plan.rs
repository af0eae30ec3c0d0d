use crate::error::{Error, Result};

/// Per-foot schedule of stance and air (swing) time.
#[derive(Debug, Clone, PartialEq)]
pub enum ContactPlan {
    /// Explicit air intervals per foot over a fixed-length motion.
    Intervals { duration: f64, air: [Vec<(f64, f64)>; 4] },
    /// Repeating stance-then-swing cycle; `offsets` are cycle fractions.
    Periodic { stance: f64, swing: f64, offsets: [f64; 4] },
}

/// Result of [`plan_query`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanInfo {
    pub stance: [bool; 4],
    /// Normalized position inside the current air interval; 0 in stance.
    pub swing_phase: [f64; 4],
    /// Duration of the current air interval (s); 0 in stance.
    pub swing_duration: [f64; 4],
    /// Motion phase in [0, 1]: `t / duration`, or the cycle phase for
    /// periodic plans.
    pub phase: f64,
}

impl ContactPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid("contact plan", m));
        match self {
            ContactPlan::Intervals { duration, air } => {
                if !(*duration > 0.0) {
                    return bad(format!("duration must be positive, got {duration}"));
                }
                for (leg, list) in air.iter().enumerate() {
                    let mut sorted = list.clone();
                    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
                    for &(a, b) in &sorted {
                        if !(0.0 <= a && a < b && b <= *duration) {
                            return bad(format!("foot {leg}: interval [{a}, {b}] is not inside [0, {duration}]"));
                        }
                    }
                    if sorted.windows(2).any(|w| w[1].0 < w[0].1) {
                        return bad(format!("foot {leg}: air intervals overlap"));
                    }
                }
                Ok(())
            }
            ContactPlan::Periodic { stance, swing, offsets } => {
                if !(*stance > 0.0 && *swing > 0.0) {
                    return bad("periodic stance and swing durations must be positive".into());
                }
                if offsets.iter().any(|o| !o.is_finite()) {
                    return bad("phase offsets must be finite".into());
                }
                Ok(())
            }
        }
    }

    /// Motion duration for interval plans, cycle period for periodic ones.
    pub fn period(&self) -> f64 {
        match self {
            ContactPlan::Intervals { duration, .. } => *duration,
            ContactPlan::Periodic { stance, swing, .. } => stance + swing,
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, ContactPlan::Periodic { .. })
    }

    /// Times in `[0, horizon]` where some foot switches between stance and swing.
    pub fn boundaries(&self, horizon: f64) -> Vec<f64> {
        let mut out = Vec::new();
        match self {
            ContactPlan::Intervals { air, .. } => {
                for list in air {
                    for &(a, b) in list {
                        out.push(a);
                        out.push(b);
                    }
                }
            }
            ContactPlan::Periodic { stance, swing, offsets } => {
                let period = stance + swing;
                for &o in offsets {
                    // foot is at cycle position u = t/period + o; switches at u ∈ {k, k + stance/period}
                    for base in [0.0, stance / period] {
                        let mut k = (-o - base).ceil();
                        loop {
                            let t = (k + base - o) * period;
                            if t > horizon {
                                break;
                            }
                            if t >= 0.0 {
                                out.push(t);
                            }
                            k += 1.0;
                        }
                    }
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

/// Stance/swing flags and phases at time `t`. Interval plans clamp `t` to
/// `[0, duration]`. Intervals are half-open: a foot lifts off at the start
/// time and touches down at the end time.
pub fn plan_query(plan: &ContactPlan, t: f64) -> PlanInfo {
    let mut info = PlanInfo { stance: [true; 4], swing_phase: [0.0; 4], swing_duration: [0.0; 4], phase: 0.0 };
    match plan {
        ContactPlan::Intervals { duration, air } => {
            let t = t.clamp(0.0, *duration);
            info.phase = t / duration;
            for leg in 0..4 {
                if let Some(&(a, b)) = air[leg].iter().find(|(a, b)| *a <= t && t < *b) {
                    info.stance[leg] = false;
                    info.swing_phase[leg] = (t - a) / (b - a);
                    info.swing_duration[leg] = b - a;
                }
            }
        }
        ContactPlan::Periodic { stance, swing, offsets } => {
            let period = stance + swing;
            let cycle = (t / period).max(0.0);
            info.phase = cycle - cycle.floor();
            let stance_frac = stance / period;
            for leg in 0..4 {
                let u = cycle + offsets[leg];
                let u = u - u.floor();
                if u >= stance_frac {
                    info.stance[leg] = false;
                    info.swing_phase[leg] = (u - stance_frac) / (1.0 - stance_frac);
                    info.swing_duration[leg] = *swing;
                }
            }
        }
    }
    info
}
