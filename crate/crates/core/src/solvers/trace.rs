use std::fmt::Write as _;

/// Objective terms after one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `½‖y − A x‖²`.
    pub data_fidelity: f64,
    /// `½ λ ‖x − v‖²`.
    pub penalty: f64,
    /// Sum over the diffusion steps of `ω_t ⟨ε̂ − ε, v⟩`.
    pub red: f64,
    /// Voxel updates whose denominator vanished.
    pub guarded: usize,
    pub wall_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveTrace {
    pub records: Vec<IterationRecord>,
}

impl SolveTrace {
    pub fn push(&mut self, r: IterationRecord) {
        self.records.push(r);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records with wall times zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> SolveTrace {
        SolveTrace {
            records: self
                .records
                .iter()
                .map(|r| IterationRecord { wall_s: 0.0, ..*r })
                .collect(),
        }
    }

    pub fn to_csv(&self, include_timing: bool) -> String {
        let mut s = String::from("iteration,data_fidelity,penalty,red,guarded");
        if include_timing {
            s.push_str(",wall_s");
        }
        s.push('\n');
        for r in &self.records {
            let _ = write!(
                s,
                "{},{:e},{:e},{:e},{}",
                r.iteration, r.data_fidelity, r.penalty, r.red, r.guarded
            );
            if include_timing {
                let _ = write!(s, ",{:.6}", r.wall_s);
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = SolveTrace::default();
        t.push(IterationRecord {
            iteration: 1,
            data_fidelity: 2.5,
            penalty: 0.0,
            red: -1.0,
            guarded: 0,
            wall_s: 0.25,
        });
        let csv = t.to_csv(true);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "iteration,data_fidelity,penalty,red,guarded,wall_s");
        assert_eq!(lines[1], "1,2.5e0,0e0,-1e0,0,0.250000");
        assert!(!t.to_csv(false).contains("wall_s"));
    }
}
