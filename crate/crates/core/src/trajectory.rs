use std::fmt::Write as _;

use nalgebra::DVector;

/// Time-stamped states from the closed form or the integrator.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// First time the solution was found to diverge, if it did.
    pub blowup_time: Option<f64>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: f64, x: DVector<f64>) {
        self.times.push(t);
        self.states.push(x);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<(f64, &DVector<f64>)> {
        self.times.last().map(|t| (*t, self.states.last().unwrap()))
    }

    /// CSV with header `t,x1,...,xn` and a `# blowup_time=` trailer when
    /// the trajectory diverged.
    pub fn to_csv(&self, n: usize) -> String {
        let mut out = String::from("t");
        for i in 1..=n {
            let _ = write!(out, ",x{i}");
        }
        out.push('\n');
        for (t, x) in self.times.iter().zip(&self.states) {
            let _ = write!(out, "{t}");
            for v in x.iter() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        if let Some(tb) = self.blowup_time {
            let _ = writeln!(out, "# blowup_time={tb}");
        }
        out
    }
}
