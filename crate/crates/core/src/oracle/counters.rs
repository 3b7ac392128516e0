use serde::{Deserialize, Serialize};

/// Unit in which high-fidelity work is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostUnit {
    /// One solve per frequency point; short-circuiting saves work.
    FrequencyEvaluations,
    /// One solver call returns every frequency point.
    SolverCalls,
}

/// High-fidelity evaluation counts of a run. Totals and effective
/// (parallel) counts are derived on demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "CountersRecord", from = "CountersRecord")]
pub struct EvalCounters {
    pub unit: CostUnit,
    pub batch_size: u64,
    pub hf_offline: u64,
    pub hf_online: u64,
}

fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b.max(1))
}

impl EvalCounters {
    pub fn new(unit: CostUnit, batch_size: u64) -> Self {
        Self {
            unit,
            batch_size: batch_size.max(1),
            hf_offline: 0,
            hf_online: 0,
        }
    }

    pub fn hf_total(&self) -> u64 {
        self.hf_offline + self.hf_online
    }

    pub fn effective_total(&self) -> u64 {
        ceil_div(self.hf_total(), self.batch_size)
    }

    pub fn effective_online(&self) -> u64 {
        ceil_div(self.hf_online, self.batch_size)
    }

    pub fn effective_offline(&self) -> u64 {
        ceil_div(self.hf_offline, self.batch_size)
    }
}

#[derive(Serialize, Deserialize)]
struct CountersRecord {
    unit: CostUnit,
    batch_size: u64,
    hf_offline: u64,
    hf_online: u64,
    #[serde(default, skip_deserializing)]
    hf_total: u64,
    #[serde(default, skip_deserializing)]
    effective_offline: u64,
    #[serde(default, skip_deserializing)]
    effective_online: u64,
    #[serde(default, skip_deserializing)]
    effective_total: u64,
}

impl From<EvalCounters> for CountersRecord {
    fn from(c: EvalCounters) -> Self {
        Self {
            unit: c.unit,
            batch_size: c.batch_size,
            hf_offline: c.hf_offline,
            hf_online: c.hf_online,
            hf_total: c.hf_total(),
            effective_offline: c.effective_offline(),
            effective_online: c.effective_online(),
            effective_total: c.effective_total(),
        }
    }
}

impl From<CountersRecord> for EvalCounters {
    fn from(r: CountersRecord) -> Self {
        Self {
            unit: r.unit,
            batch_size: r.batch_size.max(1),
            hf_offline: r.hf_offline,
            hf_online: r.hf_online,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_counts() {
        let c = EvalCounters {
            hf_offline: 110,
            hf_online: 226,
            ..EvalCounters::new(CostUnit::FrequencyEvaluations, 50)
        };
        assert_eq!(c.hf_total(), 336);
        assert_eq!(c.effective_online(), 5);
        assert_eq!(c.effective_offline(), 3);
        assert_eq!(c.effective_total(), 7);
        let json = serde_json::to_value(c).unwrap();
        assert_eq!(json["hf_total"], 336);
        let back: EvalCounters = serde_json::from_value(json).unwrap();
        assert_eq!(back, c);
    }
}
